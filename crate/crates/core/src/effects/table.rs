use super::{ApeGrid, ApeResult};

/// `value` with stars, three decimals: `-0.106***`.
pub fn format_estimate(value: f64, stars: &str) -> String {
    format!("{value:.3}{stars}")
}

/// `-0.106*** (0.018)`.
pub fn format_cell(r: &ApeResult) -> String {
    format!("{} ({:.3})", format_estimate(r.value, &r.stars), r.se)
}

/// Text table, one `name  value*** (se)` line per effect; cells keep the
/// exact `format_cell` shape.
pub fn render_table(results: &[ApeResult]) -> String {
    let wn = results.iter().map(|r| r.label.chars().count()).max().unwrap_or(0);
    let mut out = String::new();
    for r in results {
        out.push_str(&format!("{:<wn$}  {}\n", r.label, format_cell(r)));
    }
    out
}

/// CSV mirror of the table at full precision.
pub fn render_csv(results: &[ApeResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["label", "ape", "se", "z", "p", "stars", "n", "covariance"])
        .expect("in-memory write");
    for r in results {
        w.write_record([
            r.label.clone(),
            format!("{:e}", r.value),
            format!("{:e}", r.se),
            r.z.map_or_else(String::new, |v| format!("{v:e}")),
            r.p.map_or_else(String::new, |v| format!("{v:e}")),
            r.stars.clone(),
            r.n.to_string(),
            format!("{:?}", r.covariance).to_lowercase(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

/// Grid as text: one line per row level, one cell per condition setting.
pub fn render_grid(grid: &ApeGrid) -> String {
    let header: Vec<String> = (0..grid.settings.len()).map(|s| grid.setting_label(s)).collect();
    let body: Vec<Vec<String>> = grid.cells.iter().map(|r| r.iter().map(format_cell).collect()).collect();
    let w0 = grid.rows.iter().map(|r| r.chars().count()).max().unwrap_or(0).max(grid.row_factor.len());
    let widths: Vec<usize> = (0..header.len())
        .map(|j| body.iter().map(|r| r[j].chars().count()).chain([header[j].chars().count()]).max().unwrap_or(0))
        .collect();
    let line = |first: &str, cells: &[String]| {
        let mut l = format!("{first:<w0$}");
        for (c, w) in cells.iter().zip(&widths) {
            l.push_str(&format!("  {c:<w$}"));
        }
        l.trim_end().to_string() + "\n"
    };
    let mut out = format!("effect of {}\n", grid.target);
    out.push_str(&line(&grid.row_factor, &header));
    for (label, cells) in grid.rows.iter().zip(&body) {
        out.push_str(&line(label, cells));
    }
    out
}
