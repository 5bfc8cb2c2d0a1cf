use triprobit::inference::CovarianceKind;
use triprobit::montecarlo::{recovery_experiment, simulate_dataset, simulate_with_errors, DgpSpec};
use triprobit::sml::FitOptions;
use triprobit::GhkConfig;

fn sample_correlation(e: &[Vec<f64>], i: usize, j: usize) -> f64 {
    let n = e.len() as f64;
    let mean = |k: usize| e.iter().map(|r| r[k]).sum::<f64>() / n;
    let (mi, mj) = (mean(i), mean(j));
    let cov: f64 = e.iter().map(|r| (r[i] - mi) * (r[j] - mj)).sum::<f64>();
    let var = |k: usize, m: f64| e.iter().map(|r| (r[k] - m).powi(2)).sum::<f64>();
    cov / (var(i, mi) * var(j, mj)).sqrt()
}

#[test]
fn latent_errors_carry_the_scenario_correlations() {
    let dgp = DgpSpec::desk_default().with_n(200_000);
    let (_, e) = simulate_with_errors(&dgp).unwrap();
    for (k, (i, j)) in [(0, 1), (0, 2), (1, 2)].into_iter().enumerate() {
        let r = sample_correlation(&e, i, j);
        assert!((r - dgp.correlations[k]).abs() < 0.01, "({i},{j}): {r}");
    }
}

#[test]
fn simulation_is_reproducible_and_seed_dependent() {
    let dgp = DgpSpec::desk_default().with_n(3000);
    let csv = |d: &DgpSpec| {
        let mut w = Vec::new();
        simulate_dataset(d).unwrap().write_csv(&mut w, "id", "").unwrap();
        w
    };
    assert_eq!(csv(&dgp), csv(&dgp));
    assert_ne!(csv(&dgp), csv(&dgp.clone().with_seed(dgp.seed + 1)));
}

#[test]
fn outcome_shares_are_plausible() {
    let d = simulate_dataset(&DgpSpec::desk_default().with_n(20_000)).unwrap();
    let share = |c: &str| {
        let v: Vec<f64> = d.column(c).unwrap().values.iter().copied().filter(|x| !x.is_nan()).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!((0.2..0.4).contains(&share("overeducated_first")));
    assert!((0.7..0.9).contains(&share("employed")));
    // Missing exactly where not employed.
    let emp = &d.column("employed").unwrap().values;
    let yc = &d.column("overeducated_current").unwrap().values;
    for (e, y) in emp.iter().zip(yc) {
        assert_eq!(*e == 0.0, y.is_nan());
    }
}

#[test]
fn dgp_toml_round_trip() {
    let dgp = DgpSpec::desk_default();
    assert_eq!(DgpSpec::from_toml_str(&dgp.to_toml_string()).unwrap(), dgp);
}

#[test]
fn small_recovery_run_reports_every_parameter() {
    let dgp = DgpSpec::desk_default().with_n(3000);
    let cfg = GhkConfig {
        draws: 25,
        ..Default::default()
    };
    let rep = recovery_experiment(&dgp, 2, &cfg, &FitOptions::default(), Some(CovarianceKind::Opg)).unwrap();
    assert_eq!(rep.replications.len(), 2);
    assert_eq!(rep.parameters.len(), 19 + 3);
    assert_ne!(rep.replications[0].seed, rep.replications[1].seed);
    for p in &rep.parameters {
        assert!(p.mean.is_finite() && p.rmse >= p.bias.abs() - 1e-12, "{p:?}");
        if p.used == 2 {
            assert!(p.coverage.is_some());
        }
    }
    assert!(rep.to_csv().lines().count() >= rep.parameters.len());
    // Same inputs, same report.
    let again = recovery_experiment(&dgp, 2, &cfg, &FitOptions::default(), Some(CovarianceKind::Opg)).unwrap();
    assert_eq!(rep, again);
}

#[test]
fn recovery_needs_replications() {
    let dgp = DgpSpec::desk_default().with_n(100);
    assert!(recovery_experiment(&dgp, 0, &GhkConfig::default(), &FitOptions::default(), None).is_err());
}
