use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use triprobit::data::{apply_filters, describe as describe_columns, render_describe, Codebook, Dataset, FilterSpec};
use triprobit::effects::{
    ape_dummy, ape_grid, render_csv, render_grid, render_table, ApeGrid, ApeResult, EffectsFile,
};
use triprobit::inference::CovarianceKind;
use triprobit::model::validate_spec;
use triprobit::montecarlo::{recovery_experiment, simulate_dataset, DgpSpec};
use triprobit::sml::{fit, EstimationResult, FitOptions};
use triprobit::{serialize_result, ModelSpec, ResultDocument};

use crate::args::{ApeArgs, DataArgs, DescribeArgs, EstimateArgs, RecoverArgs, SimulateArgs};
use crate::run::RunDir;

/// Command outcome mapped to the process exit code by the caller.
pub enum Status {
    Ok,
    NotConverged,
}

fn load_data(args: &DataArgs, run: &mut RunDir) -> Result<Dataset> {
    let codebook = Codebook::load(&args.codebook)?;
    run.input(&args.codebook);
    let raw = codebook.load_csv(&args.data)?;
    run.input(&args.data);
    log::info!("{}: {} rows", args.data.display(), raw.n_rows());
    let data = codebook.derive_binaries(&raw)?;
    match &args.filters {
        Some(path) => {
            let spec = FilterSpec::load(path)?;
            run.input(path);
            let (filtered, flog) = apply_filters(&data, &spec)?;
            eprint!("{}", flog.render());
            Ok(filtered)
        }
        None => Ok(data),
    }
}

fn coefficient_rows(result: &EstimationResult) -> (Vec<ApeResult>, Option<CovarianceKind>) {
    let kind = result.covariance.as_ref().map(|c| c.preferred().0);
    let se = kind.and_then(|k| result.standard_errors(k));
    let labels = result.layout.labels();
    let rows = (0..result.layout.n_coefficients())
        .map(|i| {
            let s = se.as_ref().map_or(f64::NAN, |s| s[i]);
            ApeResult::new(
                labels[i].clone(),
                result.estimate.0[i],
                s,
                result.n_obs,
                kind.unwrap_or(CovarianceKind::Hessian),
            )
        })
        .collect();
    (rows, kind)
}

fn correlation_rows(result: &EstimationResult, kind: Option<CovarianceKind>) -> Vec<ApeResult> {
    let se = kind.and_then(|k| result.correlation_standard_errors(k));
    result
        .correlations()
        .into_iter()
        .enumerate()
        .map(|(j, (label, rho))| {
            let s = se.as_ref().map_or(f64::NAN, |s| s[j]);
            ApeResult::new(label, rho, s, result.n_obs, kind.unwrap_or(CovarianceKind::Hessian))
        })
        .collect()
}

fn coefficient_csv(rows: &[ApeResult]) -> String {
    let mut out = String::from("parameter,estimate,se,z,p\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in rows {
        out.push_str(&format!(
            "\"{}\",{:e},{},{},{}\n",
            r.label,
            r.value,
            if r.se.is_nan() { String::new() } else { format!("{:e}", r.se) },
            opt(r.z),
            opt(r.p)
        ));
    }
    out
}

fn convergence_log(result: &EstimationResult) -> String {
    let mut s = String::from("iteration,log_likelihood,gradient_norm,step\n");
    for t in &result.trace {
        s.push_str(&format!("{},{:e},{:e},{:e}\n", t.iteration, t.log_likelihood, t.gradient_norm, t.step));
    }
    s.push_str(&format!("# converged: {} ({})\n", result.converged, result.message));
    s
}

#[derive(Serialize)]
struct EstimateSettings<'a> {
    args: &'a EstimateArgs,
    spec_hash: String,
    options: &'a FitOptions,
}

pub fn estimate(a: &EstimateArgs) -> Result<Status> {
    let mut run = RunDir::create(
        &a.out,
        &[
            "result.json",
            "coefficients.txt",
            "coefficients.csv",
            "correlations.txt",
            "convergence.csv",
            "spec_report.txt",
        ],
    )?;
    let mut spec = ModelSpec::load(&a.spec)?;
    run.input(&a.spec);
    if let Some(c) = &a.cluster_col {
        spec.cluster = Some(c.clone());
    }
    if a.bivariate {
        spec = spec.to_bivariate();
    }
    let data = load_data(&a.data, &mut run)?;
    let report = validate_spec(&spec, &data)?;
    for w in &report.warnings {
        log::warn!("{w}");
    }
    let config = a.ghk.config();
    config.validate()?;
    let options = FitOptions {
        max_iter: a.max_iter,
        tol_grad: a.tol_grad,
        final_draws: (a.final_draws > 0).then_some(a.final_draws),
        ..Default::default()
    };
    let result = fit(&data, &spec, &config, &options)?;
    let (coef, kind) = coefficient_rows(&result);
    let corr = correlation_rows(&result, kind);
    let coef_table = render_table(&coef);
    let corr_table = render_table(&corr);
    print!("{coef_table}\n{corr_table}");
    println!(
        "log-likelihood {:.4}, {} iterations, converged: {}",
        result.log_likelihood, result.iterations, result.converged
    );
    run.write("result.json", &serialize_result(&result, &[])?)?;
    run.write("coefficients.txt", &coef_table)?;
    run.write("coefficients.csv", &coefficient_csv(&coef))?;
    run.write("correlations.txt", &corr_table)?;
    run.write("convergence.csv", &convergence_log(&result))?;
    run.write("spec_report.txt", &report.render())?;
    run.finish(
        "estimate",
        &EstimateSettings {
            args: a,
            spec_hash: spec.hash(),
            options: &options,
        },
    )?;
    Ok(if result.converged { Status::Ok } else { Status::NotConverged })
}

#[derive(Serialize)]
struct EffectsOutput<'a> {
    spec_hash: &'a str,
    effects: &'a [ApeResult],
    grid: Option<&'a ApeGrid>,
}

fn grid_csv(grid: &ApeGrid) -> String {
    let mut s = format!("{},setting,ape,se,p,stars,n\n", grid.row_factor);
    for (label, cells) in grid.rows.iter().zip(&grid.cells) {
        for (j, c) in cells.iter().enumerate() {
            s.push_str(&format!(
                "{label},\"{}\",{:e},{:e},{},{},{}\n",
                grid.setting_label(j),
                c.value,
                c.se,
                c.p.map(|p| format!("{p:e}")).unwrap_or_default(),
                c.stars,
                c.n
            ));
        }
    }
    s
}

pub fn ape(a: &ApeArgs) -> Result<Status> {
    let requests = EffectsFile::load(&a.effects)?;
    let mut files = vec!["ape.txt", "ape.csv", "effects.json"];
    if requests.grid.is_some() {
        files.extend(["grid.txt", "grid.csv"]);
    }
    let mut run = RunDir::create(&a.out, &files)?;
    run.input(&a.effects);
    let text = fs::read_to_string(&a.result).with_context(|| format!("reading {}", a.result.display()))?;
    let doc = ResultDocument::from_json(&text).with_context(|| format!("parsing {}", a.result.display()))?;
    run.input(&a.result);
    let data = load_data(&a.data, &mut run)?;
    let effects = requests
        .effects
        .iter()
        .map(|r| ape_dummy(&doc.result, &data, r))
        .collect::<triprobit::Result<Vec<_>>>()?;
    let grid = match &requests.grid {
        Some(g) => Some(ape_grid(&doc.result, &data, g)?),
        None => None,
    };
    let table = render_table(&effects);
    print!("{table}");
    run.write("ape.txt", &table)?;
    run.write("ape.csv", &render_csv(&effects))?;
    if let Some(g) = &grid {
        let t = render_grid(g);
        print!("{t}");
        run.write("grid.txt", &t)?;
        run.write("grid.csv", &grid_csv(g))?;
    }
    let mut json = serde_json::to_string_pretty(&EffectsOutput {
        spec_hash: &doc.spec_hash,
        effects: &effects,
        grid: grid.as_ref(),
    })?;
    json.push('\n');
    run.write("effects.json", &json)?;
    run.finish("ape", a)?;
    Ok(Status::Ok)
}

pub fn describe(a: &DescribeArgs) -> Result<Status> {
    let mut run = RunDir::create(&a.out, &["describe.txt", "describe.csv"])?;
    let data = load_data(&a.data, &mut run)?;
    let columns: Vec<String> = if a.columns.is_empty() {
        data.columns().iter().map(|c| c.name.clone()).collect()
    } else {
        a.columns.clone()
    };
    let rows = describe_columns(&data, &columns)?;
    let table = render_describe(&rows);
    print!("{table}");
    let mut csv = String::from("variable,mean,sd,n\n");
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in &rows {
        csv.push_str(&format!("\"{}\",{},{},{}\n", r.name, opt(r.mean), opt(r.sd), r.n));
    }
    run.write("describe.txt", &table)?;
    run.write("describe.csv", &csv)?;
    run.finish("describe", a)?;
    Ok(Status::Ok)
}

fn load_dgp(path: Option<&Path>, run: &mut RunDir) -> Result<DgpSpec> {
    match path {
        Some(p) => {
            run.input(p);
            Ok(DgpSpec::load(p)?)
        }
        None => Ok(DgpSpec::desk_default()),
    }
}

#[derive(Serialize)]
struct SimulateSettings<'a> {
    args: &'a SimulateArgs,
    n: usize,
    seed: u64,
    dgp_hash: String,
}

fn text_hash(s: &str) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(s.as_bytes()))
}

pub fn simulate(a: &SimulateArgs) -> Result<Status> {
    let mut run = RunDir::create(&a.out, &["data.csv", "codebook.toml", "dgp.toml", "model.toml"])?;
    let mut dgp = load_dgp(a.dgp.as_deref(), &mut run)?;
    if let Some(n) = a.n {
        dgp = dgp.with_n(n);
    }
    if let Some(s) = a.seed {
        dgp = dgp.with_seed(s);
    }
    let data = simulate_dataset(&dgp)?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf, "id", "")?;
    run.write("data.csv", std::str::from_utf8(&buf).context("CSV is UTF-8")?)?;
    run.write("codebook.toml", &Codebook::from_dataset(&data, "id").to_toml_string())?;
    let dgp_text = dgp.to_toml_string();
    run.write("dgp.toml", &dgp_text)?;
    run.write("model.toml", &dgp.model.to_toml_string())?;
    eprintln!("simulated {} rows (seed {})", data.n_rows(), dgp.seed);
    run.finish(
        "simulate",
        &SimulateSettings {
            args: a,
            n: dgp.n,
            seed: dgp.seed,
            dgp_hash: text_hash(&dgp_text),
        },
    )?;
    Ok(Status::Ok)
}

pub fn recover(a: &RecoverArgs) -> Result<Status> {
    let mut run = RunDir::create(&a.out, &["report.csv", "replications.csv", "report.json"])?;
    let mut dgp = load_dgp(a.dgp.as_deref(), &mut run)?;
    if let Some(n) = a.n {
        dgp = dgp.with_n(n);
    }
    if let Some(s) = a.dgp_seed {
        dgp = dgp.with_seed(s);
    }
    if a.reps == 0 {
        bail!("--reps must be at least 1");
    }
    let config = a.ghk.config();
    config.validate()?;
    let options = FitOptions {
        max_iter: a.max_iter,
        tol_grad: a.tol_grad,
        final_draws: None,
        ..Default::default()
    };
    let report = recovery_experiment(&dgp, a.reps, &config, &options, a.covariance.kind())?;
    let csv = report.to_csv();
    print!("{csv}");
    if report.non_converged + report.failed > 0 {
        log::warn!(
            "{} replications did not converge, {} failed",
            report.non_converged,
            report.failed
        );
    }
    run.write("report.csv", &csv)?;
    run.write("replications.csv", &report.replications_csv())?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    run.write("report.json", &json)?;
    run.notes.insert("dgp_seed".into(), dgp.seed.to_string());
    run.notes.insert("dgp_hash".into(), text_hash(&dgp.to_toml_string()));
    run.finish("recover", a)?;
    Ok(Status::Ok)
}
