use std::io::Read;

use netlocal::analytic::relabel;
use netlocal::experiments::{
    critical_visibility, dense_grid_axis, grid_sweep, linspace, slope_fit, visibility_sweep, write_ejm_csv,
    write_grid_csv, write_sweep_csv, EjmCell, SweepRecord,
};
use netlocal::targets::{bilocal_ij, bilocal_xy, ejm, SliceFamily, VisibilityFamily};
use netlocal::{evaluate_model, Error, NetworkTopology, SolverSettings};
use proptest::prelude::*;

fn quick() -> SolverSettings {
    SolverSettings {
        restarts: 8,
        hops: 5,
        master_seed: 17,
        ..SolverSettings::default()
    }
}

fn record(x: f64, rmse: f64, success: bool) -> SweepRecord {
    SweepRecord {
        x,
        y: None,
        cardinalities: vec![2, 2, 2],
        best_rmse: rmse,
        best_cost: rmse * rmse * 8.0,
        success,
        skipped: false,
        restarts: 1,
        seed: 0,
        wall_ms: 0,
        model: None,
    }
}

#[test]
fn linspace_hits_both_ends() {
    let v = linspace(0.3, 0.7, 9);
    assert_eq!(v.len(), 9);
    assert_eq!(v[0], 0.3);
    assert_eq!(v[8], 0.7);
    let axis = dense_grid_axis();
    assert_eq!(axis.len(), 41);
    assert_eq!((axis[0], axis[20], axis[40]), (-1.0, 0.0, 1.0));
}

#[test]
fn sweep_keeps_input_order_and_is_reproducible() {
    let tri = NetworkTopology::triangle(2).unwrap();
    let vs = [0.35, 0.1, 0.2];
    let a = visibility_sweep(VisibilityFamily::Ghz, &vs, &tri, &[2, 2, 2], &quick()).unwrap();
    let b = visibility_sweep(VisibilityFamily::Ghz, &vs, &tri, &[2, 2, 2], &quick()).unwrap();
    assert_eq!(a.iter().map(|r| r.x).collect::<Vec<_>>(), vs);
    assert_eq!(a.iter().map(|r| r.success).collect::<Vec<_>>(), [false, true, true]);
    for (r, s) in a.iter().zip(&b) {
        assert_eq!(r.best_cost.to_bits(), s.best_cost.to_bits());
        assert_eq!(r.seed, s.seed);
    }
    assert_ne!(a[0].seed, a[1].seed);
}

#[test]
fn grid_skips_invalid_points_and_reports_consistent_models() {
    let settings = SolverSettings {
        restarts: 4,
        hops: 2,
        ..quick()
    };
    let axis = [-0.8, 0.1, 0.8];
    let recs = grid_sweep(
        SliceFamily::BilocalXY,
        &axis,
        &axis,
        &NetworkTopology::bilocal(),
        &[2, 2],
        &settings,
    )
    .unwrap();
    assert_eq!(recs.len(), 9);
    for (k, r) in recs.iter().enumerate() {
        assert_eq!((r.x, r.y), (axis[k / 3], Some(axis[k % 3])));
        let valid = bilocal_xy(r.x, r.y.unwrap()).is_ok();
        assert_eq!(r.skipped, !valid, "({}, {:?})", r.x, r.y);
        if r.skipped {
            assert!(r.best_rmse.is_nan() && r.model.is_none());
            continue;
        }
        let target = bilocal_xy(r.x, r.y.unwrap()).unwrap();
        let again = evaluate_model(r.model.as_ref().unwrap())
            .unwrap()
            .rmse(&target)
            .unwrap();
        assert!((again - r.best_rmse).abs() <= 1e-12);
    }
}

#[test]
fn bracket_violations_are_errors() {
    let tri = NetworkTopology::triangle(2).unwrap();
    let at = |lo, hi| critical_visibility(VisibilityFamily::Ghz, &tri, &[2, 2, 2], 1e-6, lo, hi, 0.05, &quick());
    assert!(matches!(at(0.3, 0.6), Err(Error::Bracket(_))));
    assert!(matches!(at(0.0, 0.2), Err(Error::Bracket(_))));
    assert!(matches!(at(0.5, 0.2), Err(Error::Domain(_))));
}

#[test]
fn ghz_222_critical_visibility_is_a_quarter() {
    let tri = NetworkTopology::triangle(2).unwrap();
    let v = critical_visibility(VisibilityFamily::Ghz, &tri, &[2, 2, 2], 1e-6, 0.0, 1.0, 0.01, &quick()).unwrap();
    assert!((v - 0.25).abs() <= 0.01, "v_c = {v}");
}

#[test]
fn slope_fit_recovers_a_line() {
    let recs: Vec<SweepRecord> = (0..8)
        .map(|k| {
            let v = 0.3 + 0.1 * k as f64;
            record(v, 0.2 * v - 0.05, k == 0)
        })
        .collect();
    // success rows are excluded, so the first point drops out
    let fit = slope_fit(&recs, 0.0, 0.8).unwrap();
    assert!((fit.slope - 0.2).abs() < 1e-12);
    assert!((fit.intercept + 0.05).abs() < 1e-12);
    assert!((fit.r_squared - 1.0).abs() < 1e-12);

    let failing: Vec<SweepRecord> = recs.iter().map(|r| record(r.x, r.best_rmse, false)).collect();
    let fit = slope_fit(&failing, 0.35, 0.75).unwrap();
    assert!((fit.slope - 0.2).abs() < 1e-12);
    assert!(matches!(slope_fit(&failing, 0.35, 0.45), Err(Error::InputData(_))));
}

#[test]
fn csv_writers_produce_headers_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let read = |name: &str| {
        let mut s = String::new();
        std::fs::File::open(dir.path().join(name))
            .unwrap()
            .read_to_string(&mut s)
            .unwrap();
        s
    };

    let recs = vec![record(0.5, 0.01, false), record(0.6, 0.02, false)];
    write_sweep_csv(&recs, std::fs::File::create(dir.path().join("s.csv")).unwrap()).unwrap();
    let s = read("s.csv");
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "v,rmse,cost,success,restarts,seed,wall_ms");
    assert_eq!(lines.len(), 3);

    let mut g = record(0.5, f64::NAN, false);
    g.y = Some(-0.5);
    g.skipped = true;
    write_grid_csv(&[g], std::fs::File::create(dir.path().join("g.csv")).unwrap()).unwrap();
    let s = read("g.csv");
    assert!(s.starts_with("x,y,rmse,cost,success,skipped,seed,wall_ms\n"));
    assert_eq!(s.lines().count(), 2);

    let cell = EjmCell {
        cardinalities: [3, 2, 2],
        v_critical: 0.25,
        threshold: 1e-4,
        v_tol: 0.01,
    };
    write_ejm_csv(&[cell], std::fs::File::create(dir.path().join("e.csv")).unwrap()).unwrap();
    let s = read("e.csv");
    let lines: Vec<&str> = s.lines().collect();
    assert_eq!(lines[0], "c_alpha,c_beta,c_gamma,v_critical,threshold,v_tol");
    assert!(lines[1].starts_with("3,2,2,"));
}

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn bilocal_slices_are_normalized(i in -1.0f64..=1.0, j in -1.0f64..=1.0) {
        for b in [bilocal_ij(i, j), bilocal_xy(i, j)].into_iter().flatten() {
            prop_assert!(b.data().iter().all(|&p| p >= 0.0));
            for s in b.normalization_sums() {
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn ejm_is_symmetric_under_parties_and_common_output_renaming(
        v in 0.0f64..=1.0,
        parties in permutation(3),
        outputs in permutation(4),
    ) {
        let b = ejm(v).unwrap();
        let renamed = relabel(&b, &vec![outputs; 3], &[vec![0], vec![0], vec![0]]).unwrap();
        prop_assert_eq!(&renamed, &b);
        for a in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let abc = [a, c, d];
                    let moved = [abc[parties[0]], abc[parties[1]], abc[parties[2]]];
                    prop_assert_eq!(b.get(&abc, &[0, 0, 0]), b.get(&moved, &[0, 0, 0]));
                }
            }
        }
    }

    #[test]
    fn relabel_composes(
        i in -0.5f64..=0.5,
        j in -0.5f64..=0.5,
        s in prop::collection::vec(permutation(2), 6),
        t in prop::collection::vec(permutation(2), 6),
    ) {
        let b = bilocal_ij(i, j).unwrap();
        let (so, si) = s.split_at(3);
        let (to, ti) = t.split_at(3);
        let twice = relabel(&relabel(&b, so, si).unwrap(), to, ti).unwrap();
        let compose = |a: &[Vec<usize>], b: &[Vec<usize>]| -> Vec<Vec<usize>> {
            a.iter().zip(b).map(|(p, q)| p.iter().map(|&k| q[k]).collect()).collect()
        };
        let once = relabel(&b, &compose(so, to), &compose(si, ti)).unwrap();
        prop_assert_eq!(twice, once);
    }
}
