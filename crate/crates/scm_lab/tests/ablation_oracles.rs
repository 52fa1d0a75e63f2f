//! Moment checks and oracle consistency on the ablation family.

use approx::assert_abs_diff_eq;
use scm_lab::{
    build_ablation_scm, oracle_ate, oracle_counterfactual, oracle_intervene, simulate,
    AblationKind, MechanismKind, SyntheticSCM,
};

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n
}

#[test]
fn linear_outcome_reads_treatment_with_coefficient_0_9() {
    let scm = build_ablation_scm(AblationKind::Linear, 2).unwrap();
    let eq = scm.equation("y").unwrap();
    assert_eq!(eq.observed_parents, vec!["t".to_string()]);
    match &eq.kind {
        MechanismKind::Linear { obs, hid, noise } => {
            assert_eq!(obs, &vec![0.9]);
            assert_eq!(hid, &vec![-0.75, 0.6]);
            assert_eq!(*noise, 0.3);
        }
        other => panic!("unexpected mechanism {other:?}"),
    }
}

#[test]
fn linear_equations_vanish_at_zero_inputs() {
    let scm = build_ablation_scm(AblationKind::Linear, 0).unwrap();
    let t = scm.equation("t").unwrap().eval(&[], &[0.0, 0.0], 0.0, &[]);
    let y = scm.equation("y").unwrap().eval(&[t], &[0.0, 0.0], 0.0, &[]);
    assert_eq!(t, 0.0);
    assert_eq!(y, 0.0);
}

#[test]
fn nonlinear_equations_vanish_at_zero_inputs() {
    let scm = build_ablation_scm(AblationKind::Nonlinear, 1).unwrap();
    let z = [0.0, 0.0];
    let t = scm.equation("t").unwrap().eval(&[], &z, 0.0, &[]);
    let y = scm.equation("y").unwrap().eval(&[t], &z, 0.0, &[]);
    let n1 = scm.equation("n1").unwrap().eval(&[], &z, 0.0, &[]);
    assert_eq!(t, 0.0);
    assert_eq!(y, 0.0);
    assert_eq!(n1, 0.0);
}

#[test]
fn treatment_covaries_with_first_confounder_as_declared() {
    let scm = build_ablation_scm(AblationKind::Linear, 2).unwrap();
    let n = 200_000;
    let ds = simulate(&scm, n, 7).unwrap();
    let gt = ds.ground_truth.as_ref().unwrap();
    let t: Vec<f64> = ds.column("t").unwrap().to_vec();
    let z1: Vec<f64> = gt.iter().map(|s| s.z[0]).collect();
    let cov = covariance(&t, &z1);
    let var_z1 = covariance(&z1, &z1);
    // t = 1.5 z1 + 0.5 z2 + 0.4 u, so cov(t, z1) - 1.5 var(z1) collapses to
    // 0.5 cov(z2, z1) + 0.4 cov(u, z1), whose standard error at this sample
    // size is about 1.4e-3; three of those stay under 5e-3.
    assert_abs_diff_eq!(cov, 1.5 * var_z1, epsilon = 5e-3);
    assert_abs_diff_eq!(cov, 1.5, epsilon = 0.02);
}

#[test]
fn intervened_outcome_mean_follows_the_linear_path() {
    let scm = build_ablation_scm(AblationKind::Linear, 2).unwrap();
    let n = 200_000;
    for alpha in [0.0, 1.0, -2.0] {
        let ds = oracle_intervene(&scm, "t", alpha, n, 11).unwrap();
        let mean_y = ds.column("y").unwrap().mean().unwrap();
        assert_abs_diff_eq!(mean_y, 0.9 * alpha, epsilon = 0.01);
    }
}

#[test]
fn shared_seed_ate_on_linear_scm_is_exact() {
    let scm = build_ablation_scm(AblationKind::Linear, 2).unwrap();
    let ate = oracle_ate(&scm, "t", 0.0, 1.0, "y", 5_000, 3, None).unwrap();
    // With a shared seed the confounder and noise terms cancel row by row.
    assert_abs_diff_eq!(ate, 0.9, epsilon = 1e-12);

    let zero = oracle_ate(&scm, "t", 0.7, 0.7, "y", 5_000, 3, None).unwrap();
    assert_eq!(zero, 0.0);

    let sd = 2.0;
    let standardized = oracle_ate(&scm, "t", 0.0, 1.0, "y", 5_000, 3, Some(sd)).unwrap();
    assert_abs_diff_eq!(standardized, 0.45, epsilon = 1e-12);
}

#[test]
fn ate_through_a_childless_node_is_exactly_zero() {
    let scm = build_ablation_scm(AblationKind::Linear, 2).unwrap();
    let ate = oracle_ate(&scm, "n1", -1.0, 1.0, "y", 2_000, 5, None).unwrap();
    assert_eq!(ate, 0.0);
}

#[test]
fn intervening_on_a_childless_node_leaves_other_columns_bit_identical() {
    let scm = build_ablation_scm(AblationKind::Nonlinear, 2).unwrap();
    let base = simulate(&scm, 500, 21).unwrap();
    let clamped = oracle_intervene(&scm, "n1", 9.0, 500, 21).unwrap();
    for col in ["t", "y", "n2"] {
        let a = base.column(col).unwrap();
        let b = clamped.column(col).unwrap();
        assert_eq!(a, b, "column {col} changed under do(n1)");
    }
    assert!(clamped.column("n1").unwrap().iter().all(|&v| v == 9.0));
}

#[test]
fn counterfactual_at_factual_treatment_is_the_factual_row() {
    let scm = build_ablation_scm(AblationKind::Nonlinear, 4).unwrap();
    let ds = simulate(&scm, 200, 13).unwrap();
    let gt = ds.ground_truth.as_ref().unwrap();
    for sample in gt {
        let t_idx = ds.column_index("t").unwrap();
        let cf = oracle_counterfactual(&scm, sample, "t", sample.x[t_idx]).unwrap();
        for (a, b) in cf.iter().zip(&sample.x) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }
}

#[test]
fn linear_counterfactual_shifts_outcome_by_the_path_coefficient() {
    let scm = build_ablation_scm(AblationKind::Linear, 3).unwrap();
    let ds = simulate(&scm, 200, 17).unwrap();
    let gt = ds.ground_truth.as_ref().unwrap();
    let t_idx = ds.column_index("t").unwrap();
    let y_idx = ds.column_index("y").unwrap();
    for sample in gt {
        let alpha = 1.25;
        let cf = oracle_counterfactual(&scm, sample, "t", alpha).unwrap();
        let expected = sample.x[y_idx] + 0.9 * (alpha - sample.x[t_idx]);
        assert_abs_diff_eq!(cf[y_idx], expected, epsilon = 1e-10);
        for (j, (a, b)) in cf.iter().zip(&sample.x).enumerate() {
            if j != t_idx && j != y_idx {
                assert_eq!(a, b, "non-descendant column {j} changed");
            }
        }
    }
}

#[test]
fn counterfactual_means_match_interventional_means() {
    let scm = build_ablation_scm(AblationKind::Linear, 2).unwrap();
    let n = 100_000;
    let alpha = 1.0;
    let ds = simulate(&scm, n, 29).unwrap();
    let gt = ds.ground_truth.as_ref().unwrap();
    let y_idx = ds.column_index("y").unwrap();
    let cf_mean: f64 = gt
        .iter()
        .map(|s| oracle_counterfactual(&scm, s, "t", alpha).unwrap()[y_idx])
        .sum::<f64>()
        / n as f64;
    let int = oracle_intervene(&scm, "t", alpha, n, 31).unwrap();
    let int_mean = int.column("y").unwrap().mean().unwrap();
    let rel = (cf_mean - int_mean).abs() / int_mean.abs();
    assert!(
        rel < 0.02,
        "counterfactual mean {cf_mean} vs interventional mean {int_mean} (rel {rel})"
    );
}

#[test]
fn proxy_count_out_of_range_is_rejected() {
    let err = build_ablation_scm(AblationKind::Linear, 11).unwrap_err();
    assert!(err.to_string().contains("at most 10"));
}

#[test]
fn simulation_is_deterministic_and_seed_sensitive() {
    let scm = build_ablation_scm(AblationKind::Nonlinear, 3).unwrap();
    let a = simulate(&scm, 100, 42).unwrap();
    let b = simulate(&scm, 100, 42).unwrap();
    let c = simulate(&scm, 100, 43).unwrap();
    assert_eq!(a.values, b.values);
    assert_eq!(a.ground_truth, b.ground_truth);
    assert_ne!(a.values, c.values);
}

#[test]
fn single_row_simulation_carries_one_ground_truth_sample() {
    let scm = build_ablation_scm(AblationKind::Linear, 1).unwrap();
    let ds = simulate(&scm, 1, 0).unwrap();
    assert_eq!(ds.n_rows(), 1);
    assert_eq!(ds.ground_truth.as_ref().unwrap().len(), 1);
    assert_eq!(ds.column_names, vec!["t", "y", "n1"]);
}

#[test]
fn reevaluating_equations_on_stored_noise_reproduces_samples() {
    for kind in [AblationKind::Linear, AblationKind::Nonlinear] {
        let scm = build_ablation_scm(kind, 5).unwrap();
        let ds = simulate(&scm, 300, 57).unwrap();
        check_reeval(&scm, &ds);
    }
}

fn check_reeval(scm: &SyntheticSCM, ds: &scm_lab::Dataset) {
    let gt = ds.ground_truth.as_ref().unwrap();
    let names = &ds.column_names;
    for sample in gt {
        for (i, name) in names.iter().enumerate() {
            let eq = scm.equation(name).unwrap();
            let obs: Vec<f64> = eq
                .observed_parents
                .iter()
                .map(|p| sample.x[names.iter().position(|n| n == p).unwrap()])
                .collect();
            let hid: Vec<f64> = eq
                .hidden_parents
                .iter()
                .map(|p| {
                    let k = scm
                        .graph()
                        .hidden_nodes()
                        .iter()
                        .position(|n| n == p)
                        .unwrap();
                    sample.z[k]
                })
                .collect();
            let extra: Vec<f64> = eq
                .extra_noise
                .iter()
                .map(|p| sample.u[names.iter().position(|n| n == p).unwrap()])
                .collect();
            let v = eq.eval(&obs, &hid, sample.u[i], &extra);
            assert!(
                (v - sample.x[i]).abs() < 1e-12,
                "node {name}: re-evaluated {v} vs stored {}",
                sample.x[i]
            );
        }
    }
}
