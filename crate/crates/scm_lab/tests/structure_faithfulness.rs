//! Random-mechanism SCMs must induce exactly the graph they were built on.
//!
//! The checks here re-evaluate equations through an independent path and
//! compare finite-difference sensitivities of the full (z, u) -> x map
//! against reachability in the graph.

use causal_graph::CausalGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use scm_lab::{
    build_ablation_scm, build_random_mechanism_scm, simulate, AblationKind, MechanismKind,
    NoiseMode, SyntheticSCM,
};

/// The consensus Sachs protein-signaling structure with PKA and PKC as
/// hidden confounders.
fn sachs_graph() -> CausalGraph {
    let observed = [
        "Raf", "Mek", "Plcg", "PIP2", "PIP3", "Erk", "Akt", "P38", "Jnk",
    ];
    let hidden = ["PKA", "PKC"];
    let edges = [
        ("PKC", "PKA"),
        ("PKC", "Raf"),
        ("PKC", "Mek"),
        ("PKC", "Jnk"),
        ("PKC", "P38"),
        ("PKA", "Raf"),
        ("PKA", "Mek"),
        ("PKA", "Erk"),
        ("PKA", "Akt"),
        ("PKA", "Jnk"),
        ("PKA", "P38"),
        ("Raf", "Mek"),
        ("Mek", "Erk"),
        ("Erk", "Akt"),
        ("Plcg", "PIP2"),
        ("Plcg", "PIP3"),
        ("PIP3", "PIP2"),
    ];
    CausalGraph::new(
        observed.iter().map(|s| s.to_string()).collect(),
        hidden.iter().map(|s| s.to_string()).collect(),
        edges
            .iter()
            .map(|(a, b)| (a.to_string(), b.to_string()))
            .collect(),
    )
    .unwrap()
}

/// Evaluates the full structural map by walking equations in topological
/// order, independently of the crate's simulation path.
fn eval_full(scm: &SyntheticSCM, z: &[f64], u: &[f64]) -> Vec<f64> {
    let g = scm.graph();
    let names = g.observed_nodes();
    let mut x = vec![f64::NAN; names.len()];
    for id in g.observed_topological_order() {
        let name = &names[id];
        let eq = scm.equation(name).unwrap();
        let obs: Vec<f64> = eq
            .observed_parents
            .iter()
            .map(|p| x[names.iter().position(|n| n == p).unwrap()])
            .collect();
        let hid: Vec<f64> = eq
            .hidden_parents
            .iter()
            .map(|p| z[g.hidden_nodes().iter().position(|n| n == p).unwrap()])
            .collect();
        let extra: Vec<f64> = eq
            .extra_noise
            .iter()
            .map(|p| u[names.iter().position(|n| n == p).unwrap()])
            .collect();
        x[id] = eq.eval(&obs, &hid, u[id], &extra);
    }
    x
}

/// Observed nodes reachable from `start` (inclusive) along observed edges.
fn reach(g: &CausalGraph, start: &[usize]) -> Vec<bool> {
    let mut seen = vec![false; g.n_observed()];
    let mut stack: Vec<usize> = start.to_vec();
    while let Some(i) = stack.pop() {
        if seen[i] {
            continue;
        }
        seen[i] = true;
        for &c in g.children_of(i) {
            if !g.is_hidden(c) {
                stack.push(c);
            }
        }
    }
    seen
}

fn check_structure(scm: &SyntheticSCM, seed: u64) {
    let g = scm.graph();
    let names = g.observed_nodes();
    let d = g.n_observed();
    let h = g.n_hidden();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let step = 1e-3;
    let points = 10;

    // Which u channels may influence which columns: a noise channel feeds
    // its own node plus any node that declares it as extra noise, and flows
    // onward through observed edges.
    let mut u_allowed = Vec::with_capacity(d);
    for j in 0..d {
        let mut start = vec![j];
        for (i, name) in names.iter().enumerate() {
            if scm.equation(name).unwrap().extra_noise.contains(&names[j]) {
                start.push(i);
            }
        }
        u_allowed.push(reach(g, &start));
    }
    let mut z_allowed = Vec::with_capacity(h);
    for k in 0..h {
        let id = g.node_id(&g.hidden_nodes()[k]).unwrap();
        let start: Vec<usize> = g
            .children_of(id)
            .iter()
            .copied()
            .filter(|&c| !g.is_hidden(c))
            .collect();
        z_allowed.push(reach(g, &start));
    }

    let mut u_seen = vec![vec![0.0f64; d]; d];
    let mut z_seen = vec![vec![0.0f64; d]; h];
    for _ in 0..points {
        let z: Vec<f64> = (0..h).map(|_| rng.sample(StandardNormal)).collect();
        let u: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let base = eval_full(scm, &z, &u);
        for j in 0..d {
            let mut up = u.clone();
            up[j] += step;
            let x = eval_full(scm, &z, &up);
            for i in 0..d {
                let fd = (x[i] - base[i]) / step;
                if !u_allowed[j][i] {
                    assert_eq!(fd, 0.0, "u[{}] leaked into {}", names[j], names[i]);
                }
                u_seen[j][i] = u_seen[j][i].max(fd.abs());
            }
        }
        for k in 0..h {
            let mut zp = z.clone();
            zp[k] += step;
            let x = eval_full(scm, &zp, &u);
            for i in 0..d {
                let fd = (x[i] - base[i]) / step;
                if !z_allowed[k][i] {
                    assert_eq!(
                        fd,
                        0.0,
                        "z[{}] leaked into {}",
                        g.hidden_nodes()[k],
                        names[i]
                    );
                }
                z_seen[k][i] = z_seen[k][i].max(fd.abs());
            }
        }
    }

    // Direct parents must show real influence somewhere in the sample.
    for i in 0..d {
        let eq = scm.equation(&names[i]).unwrap();
        for p in &eq.observed_parents {
            let j = names.iter().position(|n| n == p).unwrap();
            assert!(
                u_seen[j][i] > 1e-6,
                "declared edge {} -> {} shows no sensitivity",
                p,
                names[i]
            );
        }
        for p in &eq.hidden_parents {
            let k = g.hidden_nodes().iter().position(|n| n == p).unwrap();
            assert!(
                z_seen[k][i] > 1e-6,
                "declared hidden edge {} -> {} shows no sensitivity",
                p,
                names[i]
            );
        }
    }
}

#[test]
fn sachs_mechanisms_respect_the_graph() {
    let g = sachs_graph();
    for mode in [NoiseMode::Additive, NoiseMode::Nonadditive] {
        let scm = build_random_mechanism_scm(&g, mode, 5).unwrap();
        check_structure(&scm, 99);
    }
}

#[test]
fn ablation_mechanisms_respect_the_graph_including_cross_noise() {
    let scm = build_ablation_scm(AblationKind::Nonlinear, 2).unwrap();
    check_structure(&scm, 100);
    let scm = build_ablation_scm(AblationKind::Linear, 4).unwrap();
    check_structure(&scm, 101);
}

#[test]
fn random_graph_battery_respects_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(4242);
    for trial in 0..10u64 {
        let g = random_graph(&mut rng);
        let mode = if trial % 2 == 0 {
            NoiseMode::Additive
        } else {
            NoiseMode::Nonadditive
        };
        let scm = build_random_mechanism_scm(&g, mode, trial).unwrap();
        check_structure(&scm, 1000 + trial);
    }
}

fn random_graph(rng: &mut ChaCha8Rng) -> CausalGraph {
    let n: usize = rng.random_range(3..=10);
    let n_hidden = rng.random_range(0..=(n - 1).min(3));
    let hidden: Vec<String> = (0..n_hidden).map(|k| format!("h{k}")).collect();
    let observed: Vec<String> = (n_hidden..n).map(|k| format!("x{k}")).collect();
    let name = |i: usize| -> String {
        if i < n_hidden {
            format!("h{i}")
        } else {
            format!("x{i}")
        }
    };
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(0.4) {
                edges.push((name(i), name(j)));
            }
        }
    }
    CausalGraph::new(observed, hidden, edges).unwrap()
}

#[test]
fn builder_is_deterministic_in_seed() {
    let g = sachs_graph();
    let a = build_random_mechanism_scm(&g, NoiseMode::Additive, 7).unwrap();
    let b = build_random_mechanism_scm(&g, NoiseMode::Additive, 7).unwrap();
    let c = build_random_mechanism_scm(&g, NoiseMode::Additive, 8).unwrap();
    assert_eq!(a.equations(), b.equations());
    assert_ne!(a.equations(), c.equations());
}

#[test]
fn additive_noise_enters_with_constant_slope() {
    let g = sachs_graph();
    let scm = build_random_mechanism_scm(&g, NoiseMode::Additive, 3).unwrap();
    for name in g.observed_nodes() {
        let eq = scm.equation(name).unwrap();
        let obs = vec![0.7; eq.observed_parents.len()];
        let hid = vec![-0.3; eq.hidden_parents.len()];
        let slope_near = eq.eval(&obs, &hid, 1.0, &[]) - eq.eval(&obs, &hid, 0.0, &[]);
        let slope_far = eq.eval(&obs, &hid, 6.0, &[]) - eq.eval(&obs, &hid, 5.0, &[]);
        assert!(
            (slope_near - slope_far).abs() < 1e-12,
            "noise slope varies for {name}"
        );
    }
}

#[test]
fn additive_noise_is_recoverable_in_closed_form() {
    let g = sachs_graph();
    let scm = build_random_mechanism_scm(&g, NoiseMode::Additive, 11).unwrap();
    let ds = simulate(&scm, 100, 77).unwrap();
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
                .map(|p| sample.z[g.hidden_nodes().iter().position(|n| n == p).unwrap()])
                .collect();
            let recovered = match &eq.kind {
                MechanismKind::Root => sample.x[i],
                MechanismKind::RandomFeature { noise_scale, .. } => {
                    let deterministic = eq.eval(&obs, &hid, 0.0, &[]);
                    (sample.x[i] - deterministic) / noise_scale
                }
                other => panic!("unexpected mechanism {other:?}"),
            };
            assert!(
                (recovered - sample.u[i]).abs() < 1e-10,
                "noise round-trip failed for {name}"
            );
        }
    }
}

#[test]
fn calibrated_columns_have_unit_scale() {
    let g = sachs_graph();
    let scm = build_random_mechanism_scm(&g, NoiseMode::Additive, 19).unwrap();
    let ds = simulate(&scm, 20_000, 123).unwrap();
    for name in &ds.column_names {
        let col = ds.column(name).unwrap();
        let mean = col.mean().unwrap();
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
        let sd = var.sqrt();
        assert!(
            (0.5..2.0).contains(&sd),
            "column {name} has sd {sd}, calibration drifted"
        );
    }
}
