//! Bayesian optimizers on objectives with known optima.

use hybrid_ids::hpo::{bo_gp_optimize, bo_tpe_optimize, get_cat, get_int, get_real, SearchSpace};

fn quadratic_space() -> SearchSpace {
    SearchSpace::default()
        .int("n", 1, 64, false)
        .unwrap()
        .real("lr", 1e-3, 1.0, true)
        .unwrap()
}

fn quadratic(a: &hybrid_ids::hpo::Assignment) -> hybrid_ids::Result<f64> {
    let n = get_int(a, "n").unwrap() as f64;
    let lr = get_real(a, "lr").unwrap();
    Ok((n - 40.0).powi(2) / 400.0 + (lr.log10() + 1.0).powi(2))
}

#[test]
fn both_optimizers_approach_the_minimum() {
    let space = quadratic_space();
    let gp = bo_gp_optimize(quadratic, &space, 30, 3).unwrap();
    let tpe = bo_tpe_optimize(quadratic, &space, 60, 3).unwrap();
    for (name, out, budget) in [("gp", &gp, 30), ("tpe", &tpe, 60)] {
        assert_eq!(out.ledger.len(), budget, "{name}");
        assert!(out.best.objective < 0.25, "{name}: best {}", out.best.objective);
        let trace = out.ledger.incumbent_trace();
        assert!(trace.windows(2).all(|w| w[1] <= w[0]), "{name}");
        assert_eq!(*trace.last().unwrap(), out.best.objective);
    }
}

#[test]
fn failed_trials_are_recorded_not_fatal() {
    let space = SearchSpace::default().categorical("kind", &["a", "b", "c"]).unwrap();
    let out = bo_tpe_optimize(
        |a| match get_cat(a, "kind").unwrap() {
            0 => Err(hybrid_ids::Error::Data("boom".into())),
            1 => Ok(f64::NAN),
            _ => Ok(2.0),
        },
        &space,
        3,
        1,
    )
    .unwrap();
    assert_eq!(out.ledger.len(), 3);
    assert_eq!(out.ledger.trials().iter().filter(|t| t.failed).count(), 2);
    assert_eq!(get_cat(&out.best.assignment, "kind"), Some(2));

    let mut csv = Vec::new();
    out.ledger.write_csv(&space, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
}

#[test]
fn same_seed_same_trials() {
    let space = quadratic_space();
    let a = bo_gp_optimize(quadratic, &space, 12, 9).unwrap();
    let b = bo_gp_optimize(quadratic, &space, 12, 9).unwrap();
    let pts = |o: &hybrid_ids::hpo::HpoOutcome| o.ledger.trials().iter().map(|t| t.assignment.clone()).collect::<Vec<_>>();
    assert_eq!(pts(&a), pts(&b));
}
