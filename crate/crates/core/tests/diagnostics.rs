use std::sync::Arc;

use idsa_core::diagnostics::{
    convergence_record, convergence_sweep, err0_curve, fit_power_law, stationary_state, StationaryMethod, SweepOptions,
    DEFAULT_KAPPAS,
};
use idsa_core::grid::l2_relative_error;
use idsa_core::oracle::exact_moments;
use idsa_core::original::SolverConfig;
use idsa_core::reformed::{err0, new_idsa_stationary_closed_form, reconstruct_hk, ClosureSet, Variant};
use idsa_core::{Error, ProblemSpec, RadialGrid};
use proptest::prelude::*;

fn grid(n: usize) -> Arc<RadialGrid> {
    Arc::new(RadialGrid::uniform(18.0, n).unwrap())
}

#[test]
fn fit_examples() {
    let f = fit_power_law(&[1.0, 100.0], &[1.0, 0.1]).unwrap();
    assert!((f.exponent + 0.5).abs() < 1e-15);
    assert!(f.intercept.abs() < 1e-15);
    assert_eq!(f.points_used, 2);
    let f = fit_power_law(&[1.0, 2.0, 5.0], &[3.0, 3.0, 3.0]).unwrap();
    assert!(f.exponent.abs() < 1e-15);
    assert!((f.intercept - 3f64.ln()).abs() < 1e-15);
}

#[test]
fn fit_rejects_bad_input() {
    assert!(matches!(fit_power_law(&[1.0], &[1.0]), Err(Error::InvalidArgument(_))));
    assert!(matches!(fit_power_law(&[1.0, 2.0], &[1.0]), Err(Error::InvalidArgument(_))));
    assert!(matches!(fit_power_law(&[1.0, 2.0], &[1.0, 0.0]), Err(Error::Domain(_))));
    assert!(matches!(fit_power_law(&[2.0, 2.0], &[1.0, 3.0]), Err(Error::Domain(_))));
    assert!(matches!(fit_power_law(&[1.0, f64::NAN], &[1.0, 3.0]), Err(Error::Domain(_))));
}

proptest! {
    #[test]
    fn fit_recovers_exact_power_laws(
        p in -3.0f64..3.0,
        c in 1e-3f64..1e3,
        xs in proptest::collection::vec(1e-2f64..1e3, 2..12),
    ) {
        let mut xs = xs;
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        prop_assume!(xs.len() >= 2 && xs[xs.len() - 1] / xs[0] > 1.5);
        let ys: Vec<f64> = xs.iter().map(|x| c * x.powf(p)).collect();
        let f = fit_power_law(&xs, &ys).unwrap();
        prop_assert!((f.exponent - p).abs() < 1e-9);
        prop_assert!((f.intercept - c.ln()).abs() < 1e-8);
    }
}

#[test]
fn identical_reconstruction_has_zero_error() {
    let g = grid(400);
    let spec = ProblemSpec::homogeneous_sphere(2.0, 6.0, 1.0).unwrap();
    let state = new_idsa_stationary_closed_form(&g, &spec).unwrap();
    let rec = reconstruct_hk(&state, &ClosureSet::for_sphere(&g, 6.0).unwrap()).unwrap();
    let exact = idsa_core::oracle::MomentTriple {
        j: rec.j.clone(),
        h: rec.h.clone(),
        k: rec.k.clone(),
    };
    let r = convergence_record(2.0, &rec, &exact).unwrap();
    assert_eq!((r.err_j, r.err_h, r.err_k), (0.0, 0.0, 0.0));
}

#[test]
fn err0_curve_tabulates_err0() {
    let xs = [0.1, 1.0, 4.0, 6.0, 10.0, 50.0];
    let curve = err0_curve(&xs).unwrap();
    assert_eq!(curve.len(), xs.len());
    for (&x, &(cx, e)) in xs.iter().zip(&curve) {
        assert_eq!(cx, x);
        assert_eq!(e, err0(x).unwrap());
    }
    // O(1) when kappa R is small
    assert!(curve[0].1 > 0.9);
    assert!(err0_curve(&[1.0, -1.0]).is_err());
}

#[test]
fn new_sweep_improves_monotonically_and_fits_stably() {
    let sweep = convergence_sweep(&DEFAULT_KAPPAS, 6.0, 1.0, &grid(20_000), Variant::New, &SweepOptions::default())
        .unwrap();
    assert!(sweep.failures.is_empty());
    assert_eq!(sweep.kappas(), DEFAULT_KAPPAS.to_vec());
    for w in sweep.records.windows(2) {
        assert!(w[1].err_j <= w[0].err_j, "{} -> {}", w[0].kappa, w[1].kappa);
    }
    for r in &sweep.records {
        for e in [r.err_j, r.err_h, r.err_k] {
            assert!(e.is_finite() && e >= 0.0);
        }
    }
    let full = sweep.fits().unwrap();
    for drop in 1..sweep.records.len() - 1 {
        let mut records = sweep.records.clone();
        let dropped = records.remove(drop).kappa;
        let reduced = idsa_core::diagnostics::ConvergenceSweep {
            records,
            failures: Vec::new(),
        };
        let fits = reduced.fits().unwrap();
        for (a, b) in full.iter().zip(&fits) {
            assert!((a.exponent - b.exponent).abs() < 0.1, "dropping kappa = {dropped}");
        }
    }
}

/// The errors of the closed-form and the marched state differ by no more
/// than the distance between the two reconstructions.
#[test]
fn closed_form_and_marched_sweeps_agree() {
    let g = grid(4000);
    let kappas = [1.0, 10.0];
    let marched_opts = SweepOptions {
        method: StationaryMethod::Marched,
        solver: SolverConfig {
            stationarity_tol: 1e-10,
            t_end: 1e5,
            ..SolverConfig::default()
        },
        ..SweepOptions::default()
    };
    let direct = convergence_sweep(&kappas, 6.0, 1.0, &g, Variant::New, &SweepOptions::default()).unwrap();
    let marched = convergence_sweep(&kappas, 6.0, 1.0, &g, Variant::New, &marched_opts).unwrap();
    assert!(direct.failures.is_empty() && marched.failures.is_empty());
    let closures = ClosureSet::for_sphere(&g, 6.0).unwrap();
    for (k, (a, b)) in kappas.iter().zip(direct.records.iter().zip(&marched.records)) {
        let spec = ProblemSpec::homogeneous_sphere(*k, 6.0, 1.0).unwrap();
        let rd = reconstruct_hk(&stationary_state(Variant::New, &spec, &g, &SweepOptions::default()).unwrap(), &closures)
            .unwrap();
        let rm = reconstruct_hk(&stationary_state(Variant::New, &spec, &g, &marched_opts).unwrap(), &closures).unwrap();
        let exact = exact_moments(&g, &spec, 1e-10).unwrap();
        let pairs = [
            (a.err_j, b.err_j, &rd.j, &rm.j, &exact.j),
            (a.err_h, b.err_h, &rd.h, &rm.h, &exact.h),
            (a.err_k, b.err_k, &rd.k, &rm.k, &exact.k),
        ];
        for (x, y, fd, fm, fe) in pairs {
            let gap = l2_relative_error(fm, fd).unwrap() * shell_norm(fd) / shell_norm(fe);
            assert!(gap < 1e-3, "kappa {k}: states differ by {gap}");
            assert!((x - y).abs() <= gap * (1.0 + 1e-9) + 1e-15, "kappa {k}: {x} vs {y}, bound {gap}");
        }
    }
}

fn shell_norm(f: &idsa_core::RadialField) -> f64 {
    f.grid()
        .centers()
        .iter()
        .zip(f.values())
        .map(|(r, v)| r * r * v * v)
        .sum::<f64>()
        .sqrt()
}

#[test]
fn failed_points_are_collected() {
    let opts = SweepOptions {
        method: StationaryMethod::Marched,
        solver: SolverConfig {
            t_end: 0.2,
            ..SolverConfig::default()
        },
        ..SweepOptions::default()
    };
    let sweep = convergence_sweep(&[5.0, 1.0], 6.0, 1.0, &grid(200), Variant::New, &opts).unwrap();
    assert!(sweep.records.is_empty());
    assert_eq!(sweep.failures.iter().map(|f| f.kappa).collect::<Vec<_>>(), vec![1.0, 5.0]);
    assert!(sweep.fits().is_err());
    assert!(convergence_sweep(&[1.0, 0.0], 6.0, 1.0, &grid(200), Variant::New, &opts).is_err());
}

#[test]
fn old_sweep_does_not_converge() {
    let g = grid(4000);
    let sweep = convergence_sweep(&[1.0, 100.0], 6.0, 1.0, &g, Variant::Old, &SweepOptions::default()).unwrap();
    let ratio = sweep.records[1].err_j / sweep.records[0].err_j;
    assert!(ratio > 0.3, "{ratio}");
    // the exact moments at this resolution are themselves accurate
    let exact = exact_moments(&g, &ProblemSpec::homogeneous_sphere(1.0, 6.0, 1.0).unwrap(), 1e-10).unwrap();
    assert!(exact.j.values().iter().all(|v| v.is_finite() && *v > 0.0));
}
