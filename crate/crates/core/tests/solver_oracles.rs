use netlocal::analytic::{bilocal_boundary_model, ghz_model_222, ghz_model_322, ghz_model_333, w_model};
use netlocal::optimizer::{cost, cost_gradient, fit, projected_gradient, random_start, solve_single};
use netlocal::targets::{bilocal_xy, ghz, w_dist};
use netlocal::{
    evaluate_model, pack_parameters, project_feasible, LocalModel, NetworkTopology, ParameterLayout, SolverSettings,
};
use rand::{Rng, SeedableRng};

mod common;
use rand_chacha::ChaCha8Rng;

/// Behaviour by explicit nested loops over a triangle model's hidden values.
fn triangle_brute_force(m: &LocalModel) -> Vec<f64> {
    let s = m.sources();
    let r = m.responses();
    let (ca, cb, cg) = (s[0].cardinality, s[1].cardinality, s[2].cardinality);
    let out = r[0].shape[0];
    let mut p = vec![0.0; out * out * out];
    for a in 0..out {
        for b in 0..out {
            for c in 0..out {
                let mut acc = 0.0;
                for al in 0..ca {
                    for be in 0..cb {
                        for ga in 0..cg {
                            let w = s[0].probabilities[al] * s[1].probabilities[be] * s[2].probabilities[ga];
                            // Alice sees (β, γ), Bob (α, γ), Charles (α, β)
                            let pa = r[0].data[a * cb * cg + be * cg + ga];
                            let pb = r[1].data[b * ca * cg + al * cg + ga];
                            let pc = r[2].data[c * ca * cb + al * cb + be];
                            acc += w * pa * pb * pc;
                        }
                    }
                }
                p[(a * out + b) * out + c] = acc;
            }
        }
    }
    p
}

/// Bilocal behaviour p(a,b,c|x,y,z) by explicit loops over λ and μ.
fn bilocal_brute_force(m: &LocalModel) -> Vec<f64> {
    let s = m.sources();
    let r = m.responses();
    let (cl, cm) = (s[0].cardinality, s[1].cardinality);
    let mut p = vec![0.0; 64];
    for a in 0..2 {
        for b in 0..2 {
            for c in 0..2 {
                for x in 0..2 {
                    for y in 0..2 {
                        for z in 0..2 {
                            let mut acc = 0.0;
                            for l in 0..cl {
                                for u in 0..cm {
                                    let w = s[0].probabilities[l] * s[1].probabilities[u];
                                    let pa = r[0].data[(a * 2 + x) * cl + l];
                                    let pb = r[1].data[((b * 2 + y) * cl + l) * cm + u];
                                    let pc = r[2].data[(c * 2 + z) * cm + u];
                                    acc += w * pa * pb * pc;
                                }
                            }
                            let idx = ((((a * 2 + b) * 2 + c) * 2 + x) * 2 + y) * 2 + z;
                            p[idx] = acc;
                        }
                    }
                }
            }
        }
    }
    p
}

#[test]
fn ghz_222_model_by_brute_force() {
    let p = triangle_brute_force(&ghz_model_222());
    assert!((p[0] - 7.0 / 32.0).abs() < 1e-15);
    assert!((p[1] - 3.0 / 32.0).abs() < 1e-15);
    let lib = evaluate_model(&ghz_model_222()).unwrap();
    for (x, y) in lib.data().iter().zip(&p) {
        assert!((x - y).abs() < 1e-15);
    }
}

#[test]
fn bilocal_boundary_model_by_brute_force() {
    let m = bilocal_boundary_model(1.0).unwrap();
    let p = bilocal_brute_force(&m);
    assert!((p[0] - 3.0 / 8.0).abs() < 1e-15);
    let target = bilocal_xy(1.0, 0.0).unwrap();
    for (x, y) in target.data().iter().zip(&p) {
        assert!((x - y).abs() < 1e-12);
    }
    let lib = evaluate_model(&m).unwrap();
    assert!(lib.max_abs_diff(&target).unwrap() < 1e-12);
}

#[test]
fn cost_examples() {
    let m = ghz_model_322(0.3).unwrap();
    let (v, layout) = pack_parameters(&m).unwrap();
    assert!(cost(&v, &layout, &ghz(0.3).unwrap()).unwrap() <= 1e-24);

    let tri = NetworkTopology::triangle(2).unwrap();
    let (v, layout) = pack_parameters(&LocalModel::uniform(tri, &[3, 2, 2]).unwrap()).unwrap();
    for vis in [0.0, 0.4, 1.0] {
        let c = cost(&v, &layout, &ghz(vis).unwrap()).unwrap();
        assert!((c - 3.0 * vis * vis / 8.0).abs() < 1e-15);
    }

    let bl = NetworkTopology::bilocal();
    let layout = ParameterLayout::new(&bl, &[2, 3]).unwrap();
    let theta = random_start(&layout, 5);
    let model = layout.contraction().full_to_model(&theta).unwrap();
    let own = evaluate_model(&model).unwrap();
    let stored = layout.stored_from_full(&theta);
    assert!(cost(&stored, &layout, &own).unwrap() <= 1e-30);
}

#[test]
fn gradient_vanishes_at_exact_fit() {
    let (v, layout) = pack_parameters(&ghz_model_333()).unwrap();
    let target = evaluate_model(&ghz_model_333()).unwrap();
    let g = cost_gradient(&v, &layout, &target).unwrap();
    assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-12);
    assert!(projected_gradient(&v, &layout, &target).unwrap() <= 1e-12);
}

/// Step close to 1e-6 that keeps `x ± h` exact on the grid below.
const FD_STEP: f64 = 1e-6;

/// Point whose every coordinate is at least `0.1 / L` inside its block.
fn interior_point(layout: &ParameterLayout, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let theta = random_start(layout, rng.random());
    let mut theta: Vec<f64> = theta.iter().map(|x| 0.9 * x).collect();
    for b in layout.blocks() {
        let n = b.len() as f64;
        for &i in &b.full {
            theta[i] += 0.1 / n;
        }
    }
    layout.stored_from_full(&theta)
}

#[test]
fn extended_cost_oracle_agrees_with_cost() {
    let layout = ParameterLayout::new(&NetworkTopology::triangle(2).unwrap(), &[3, 2, 2]).unwrap();
    let target = ghz(0.4).unwrap();
    let x = interior_point(&layout, &mut ChaCha8Rng::seed_from_u64(5));
    let exact = common::cost_dd(&common::shifted(&x, 0, 0.0), &layout, target.data()).to_f64();
    assert!((cost(&x, &layout, &target).unwrap() - exact).abs() <= 1e-15);
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let cases = [
        (NetworkTopology::bilocal(), vec![4, 4], bilocal_xy(0.6, 0.3).unwrap()),
        (NetworkTopology::triangle(2).unwrap(), vec![3, 3, 3], ghz(0.5).unwrap()),
    ];
    for (topo, cards, target) in &cases {
        let layout = ParameterLayout::new(topo, cards).unwrap();
        for _ in 0..10 {
            let x = interior_point(&layout, &mut rng);
            let g = cost_gradient(&x, &layout, target).unwrap();
            for (k, gk) in g.iter().enumerate() {
                let fd = common::central_difference(&x, k, FD_STEP, &layout, target.data());
                let rel = (gk - fd).abs() / gk.abs().max(fd.abs()).max(f64::MIN_POSITIVE);
                assert!(rel <= 1e-5, "coordinate {k}: {gk} vs {fd}");
            }
        }
    }
}

#[test]
fn gradient_is_linear_in_target_perturbation() {
    let layout = ParameterLayout::new(&NetworkTopology::triangle(2).unwrap(), &[2, 2, 2]).unwrap();
    let theta = random_start(&layout, 3);
    let x = layout.stored_from_full(&theta);
    let own = evaluate_model(&layout.contraction().full_to_model(&theta).unwrap()).unwrap();
    let bump = |eps: f64| {
        let mut d = own.data().to_vec();
        d[5] += eps;
        d[6] -= eps;
        let t = netlocal::Behaviour::new(own.outputs().to_vec(), own.inputs().to_vec(), d).unwrap();
        cost_gradient(&x, &layout, &t).unwrap()
    };
    let (g1, g2) = (bump(1e-4), bump(2e-4));
    for (a, b) in g1.iter().zip(&g2) {
        assert!((2.0 * a - b).abs() <= 1e-12);
    }
}

#[test]
fn project_feasible_examples() {
    let layout = ParameterLayout::new(&NetworkTopology::triangle(2).unwrap(), &[2, 2, 2]).unwrap();
    let x = layout.stored_from_full(&random_start(&layout, 1));
    let p = project_feasible(&x, &layout).unwrap();
    assert_eq!(p.0, x);
    let twice = project_feasible(&project_feasible(&vec![1.5; x.len()], &layout).unwrap(), &layout).unwrap();
    let once = project_feasible(&vec![1.5; x.len()], &layout).unwrap();
    assert_eq!(twice.0, once.0);
}

fn perturbed(model: &LocalModel, seed: u64) -> (Vec<f64>, ParameterLayout) {
    let (v, layout) = pack_parameters(model).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy: Vec<f64> = v.iter().map(|x| x + 1e-3 * (2.0 * rng.random::<f64>() - 1.0)).collect();
    (project_feasible(&noisy, &layout).unwrap().0, layout)
}

#[test]
fn recovers_analytic_models_from_small_perturbations() {
    let settings = SolverSettings::default();
    let cases = [
        (ghz_model_222(), ghz(0.25).unwrap()),
        (ghz_model_322(0.3).unwrap(), ghz(0.3).unwrap()),
        (ghz_model_333(), evaluate_model(&ghz_model_333()).unwrap()),
        (w_model(0.5).unwrap(), w_dist(0.5).unwrap()),
        (bilocal_boundary_model(0.4).unwrap(), bilocal_xy(0.4, 0.6).unwrap()),
    ];
    for (k, (model, target)) in cases.iter().enumerate() {
        let (start, layout) = perturbed(model, k as u64);
        let out = solve_single(&start, &layout, target, &settings).unwrap();
        assert!(out.cost <= 1e-16, "case {k}: cost {}", out.cost);
    }
}

#[test]
fn exact_start_returns_immediately() {
    let (v, layout) = pack_parameters(&ghz_model_222()).unwrap();
    let out = solve_single(&v, &layout, &ghz(0.25).unwrap(), &SolverSettings::default()).unwrap();
    assert!(out.cost <= 1e-28);
    assert!(out.iterations <= 1);
}

#[test]
fn accepted_costs_never_increase() {
    let settings = SolverSettings::default();
    let cases = [
        (NetworkTopology::triangle(2).unwrap(), vec![3, 3, 3], ghz(0.45).unwrap()),
        (NetworkTopology::bilocal(), vec![4, 4], bilocal_xy(0.7, 0.7).unwrap()),
    ];
    for (topo, cards, target) in &cases {
        let layout = ParameterLayout::new(topo, cards).unwrap();
        for seed in 0..10 {
            let start = layout.stored_from_full(&random_start(&layout, seed));
            let out = solve_single(&start, &layout, target, &settings).unwrap();
            assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(*out.history.last().unwrap(), out.cost);
            // feasibility of the returned point
            for b in layout.blocks() {
                let r = b.stored_range();
                let s: f64 = out.vector[r.clone()].iter().sum();
                assert!(out.vector[r].iter().all(|&x| x >= -1e-12));
                assert!(s <= 1.0 + 1e-12);
            }
        }
    }
}

#[test]
fn fit_is_independent_of_thread_count() {
    let settings = SolverSettings {
        restarts: 12,
        master_seed: 99,
        ..SolverSettings::default()
    };
    let target = ghz(0.3).unwrap();
    let topo = NetworkTopology::triangle(2).unwrap();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| fit(&target, &topo, &[3, 3, 3], &settings).unwrap())
    };
    let (a, b) = (run(1), run(3));
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(a.per_restart, b.per_restart);

    let early = SolverSettings {
        stop_on_success: true,
        ..settings.clone()
    };
    let (c, d) = (
        rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| fit(&target, &topo, &[3, 3, 3], &early).unwrap()),
        rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| fit(&target, &topo, &[3, 3, 3], &early).unwrap()),
    );
    assert_eq!(c.to_json().unwrap(), d.to_json().unwrap());
    assert_eq!(c.success, a.success);
}

#[test]
fn fit_reports_best_restart() {
    let settings = SolverSettings {
        restarts: 10,
        hops: 0,
        ..SolverSettings::default()
    };
    let target = ghz(0.4).unwrap();
    let r = fit(&target, &NetworkTopology::triangle(2).unwrap(), &[2, 2, 2], &settings).unwrap();
    let min = r.per_restart.iter().map(|x| x.cost).fold(f64::INFINITY, f64::min);
    assert_eq!(r.best_cost, min);
    assert_eq!(r.per_restart[r.best_restart].cost, min);
    assert!((r.best_rmse - (min / 8.0).sqrt()).abs() <= 1e-18);
    let own = evaluate_model(&r.best_model).unwrap();
    assert!((own.rmse(&target).unwrap() - r.best_rmse).abs() <= 1e-12);
    assert!(!r.success);
}

#[test]
fn fit_examples() {
    let tri = NetworkTopology::triangle(2).unwrap();
    let s = SolverSettings::default();
    assert!(fit(&ghz(0.25).unwrap(), &tri, &[2, 2, 2], &s).unwrap().success);
    assert!(!fit(&ghz(0.34).unwrap(), &tri, &[3, 2, 2], &s).unwrap().success);
    assert!(fit(&w_dist(0.58).unwrap(), &tri, &[3, 2, 2], &s).unwrap().success);
}

#[test]
fn fit_rejects_mismatched_target() {
    let r = fit(
        &ghz(0.2).unwrap(),
        &NetworkTopology::bilocal(),
        &[2, 2],
        &SolverSettings::default(),
    );
    assert!(matches!(r, Err(netlocal::Error::Structural(_))));
}

#[test]
fn noiseless_target_with_zero_entries_terminates() {
    let settings = SolverSettings {
        restarts: 8,
        hops: 5,
        master_seed: 17,
        ..SolverSettings::default()
    };
    let r = fit(
        &ghz(1.0).unwrap(),
        &NetworkTopology::triangle(2).unwrap(),
        &[2, 2, 2],
        &settings,
    )
    .unwrap();
    assert!(!r.success);
    assert!(r.best_cost.is_finite());
}
