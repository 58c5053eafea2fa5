//! Experiment dispatch.

use std::sync::Arc;

use serde_json::{json, Value as Json};

use idsa_core::diagnostics::{convergence_sweep, err0_curve, FitResult, SweepOptions};
use idsa_core::grid::l2_relative_error;
use idsa_core::oracle::{exact_moments, special_values};
use idsa_core::original::experiments::{
    run_instability_experiment, run_spurious_trapped_experiment, takeover_exponent, InstabilityConfig,
    SpuriousConfig,
};
use idsa_core::original::{relative_change, run_to_time, IdsaSolver, Regime, TwoComponentState};
use idsa_core::reformed::{new_idsa_stationary_closed_form, reconstruct_hk, ClosureSet, ReformedScheme, Variant};
use idsa_core::RadialGrid;

use crate::config::{Experiment, RunConfig};
use crate::output::{Cell, Report, Table};
use crate::CliError;

/// Runs the configured experiment. On failure the report holds whatever
/// was computed before the error.
pub fn execute(config: &RunConfig) -> (Report, Option<CliError>) {
    let mut report = Report::default();
    let res = match config.experiment {
        Experiment::Oracle => oracle(config, &mut report),
        Experiment::SolveIdsa => solve_idsa(config, &mut report),
        Experiment::SolveOld => solve_reformed(config, Variant::Old, &mut report),
        Experiment::SolveNew => solve_reformed(config, Variant::New, &mut report),
        Experiment::Spurious => spurious(config, &mut report),
        Experiment::Instability => instability(config, &mut report),
        Experiment::Convergence => convergence(config, &mut report),
        Experiment::Err0 => err0(config, &mut report),
    };
    (report, res.err())
}

fn grid(config: &RunConfig) -> Result<Arc<RadialGrid>, CliError> {
    Ok(Arc::new(RadialGrid::uniform(config.r_max, config.n_cells)?))
}

fn fit_json(f: &FitResult) -> Json {
    json!({ "exponent": f.exponent, "intercept": f.intercept, "points_used": f.points_used })
}

fn fit_row(name: &str, f: &FitResult) -> Vec<Cell> {
    vec![name.into(), f.exponent.into(), f.intercept.into(), f.points_used.into()]
}

const FIT_COLUMNS: [&str; 4] = ["quantity", "exponent", "intercept", "points_used"];

fn oracle(config: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let g = grid(config)?;
    let m = exact_moments(&g, &config.spec, config.oracle_tol)?;
    let mut t = Table::new("moments", &["r", "J", "H", "K", "h", "k"]);
    for (i, &r) in g.centers().iter().enumerate() {
        let (j, h, k) = (m.j[i], m.h[i], m.k[i]);
        let ratio = |x: f64| (j > 0.0).then(|| x / j);
        t.push(vec![r.into(), j.into(), h.into(), k.into(), ratio(h).into(), ratio(k).into()]);
    }
    report.tables.push(t);
    let sv = special_values(&config.spec);
    report.note("J_center_closed_form", sv.j0);
    report.note("J_surface_closed_form", sv.jr);
    report.note("H_surface_closed_form", sv.hr);
    Ok(())
}

/// Trapped and streaming fractions `h_t`, `h_s`; empty where `J = 0`.
fn fractions(jt: f64, js: f64) -> [Cell; 2] {
    let j = jt + js;
    [(j > 0.0).then(|| jt / j).into(), (j > 0.0).then(|| js / j).into()]
}

fn idsa_rows(t: &mut Table, state: &TwoComponentState, tags: &[Regime]) {
    for (i, &r) in state.grid().centers().iter().enumerate() {
        let (jt, js) = (state.jt[i], state.js[i]);
        let [ht, hs] = fractions(jt, js);
        t.push(vec![state.t.into(), r.into(), jt.into(), js.into(), ht, hs, tags[i].as_str().into()]);
    }
}

/// Requested times past the end of a run (or past stationarity) have no rows.
fn profiles_count(t: &Table, n_cells: usize) -> usize {
    t.rows.len() / n_cells
}

const IDSA_COLUMNS: [&str; 7] = ["t", "r", "Jt", "Js", "h_t", "h_s", "regime"];

fn solve_idsa(config: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let mut solver = IdsaSolver::new(config.spec, grid(config)?, config.solver)?;
    let mut profiles = Table::new("profiles", &IDSA_COLUMNS);
    let dt = config.solver.dt;
    let eps = 1e-9 * dt;
    let mut wanted = config.snapshot_times.iter().copied().peekable();
    while wanted.next_if(|&w| w <= eps).is_some() {
        idsa_rows(&mut profiles, solver.state(), solver.tags());
    }
    let mut failure = None;
    while solver.state().t < config.solver.t_end - 0.5 * dt {
        if let Err(e) = solver.step() {
            failure = Some(e);
            break;
        }
        let t = solver.state().t;
        while wanted.next_if(|&w| w <= t + eps).is_some() {
            idsa_rows(&mut profiles, solver.state(), solver.tags());
        }
        if solver.is_stationary() {
            break;
        }
    }
    let mut last = Table::new("final", &IDSA_COLUMNS);
    idsa_rows(&mut last, solver.state(), solver.tags());
    report.note("snapshots_written", profiles_count(&profiles, config.n_cells));
    report.tables.push(profiles);
    report.tables.push(last);
    report.note("steps", solver.steps());
    report.note("t_final", solver.state().t);
    report.note("stationary", solver.is_stationary());
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn reformed_rows(t: &mut Table, state: &TwoComponentState, closures: &ClosureSet) -> Result<(), CliError> {
    let rec = reconstruct_hk(state, closures)?;
    for (i, &r) in state.grid().centers().iter().enumerate() {
        let [ht, hs] = fractions(state.jt[i], state.js[i]);
        t.push(vec![
            state.t.into(),
            r.into(),
            state.jt[i].into(),
            state.js[i].into(),
            ht,
            hs,
            rec.j[i].into(),
            rec.h[i].into(),
            rec.k[i].into(),
            rec.flux_ratio[i].into(),
            rec.eddington[i].into(),
        ]);
    }
    Ok(())
}

const REFORMED_COLUMNS: [&str; 11] = ["t", "r", "Jt", "Js", "h_t", "h_s", "J", "H", "K", "h", "k"];

fn solve_reformed(config: &RunConfig, variant: Variant, report: &mut Report) -> Result<(), CliError> {
    let g = grid(config)?;
    let scheme = ReformedScheme::new(variant, config.spec, g.clone(), config.solver)?;
    let closures = ClosureSet::for_sphere(&g, config.spec.radius)?;
    let mut profiles = Table::new("profiles", &REFORMED_COLUMNS);
    let dt = config.solver.dt;
    let eps = 1e-9 * dt;
    let mut wanted = config.snapshot_times.iter().copied().peekable();
    let mut state = TwoComponentState::zeros(g.clone());
    while wanted.next_if(|&w| w <= eps).is_some() {
        reformed_rows(&mut profiles, &state, &closures)?;
    }
    let (mut steps, mut stationary, mut failure) = (0usize, false, None);
    while state.t < config.solver.t_end - 0.5 * dt {
        let next = match scheme.step(&state) {
            Ok(s) => s,
            Err(e) => {
                failure = Some(e);
                break;
            }
        };
        let change = relative_change(&state, &next);
        state = next;
        steps += 1;
        while wanted.next_if(|&w| w <= state.t + eps).is_some() {
            reformed_rows(&mut profiles, &state, &closures)?;
        }
        if change < config.solver.stationarity_tol {
            stationary = true;
            break;
        }
    }
    let mut last = Table::new("final", &REFORMED_COLUMNS);
    reformed_rows(&mut last, &state, &closures)?;
    report.note("snapshots_written", profiles_count(&profiles, config.n_cells));
    report.tables.push(profiles);
    report.tables.push(last);
    report.note("steps", steps);
    report.note("t_final", state.t);
    report.note("stationary", stationary);
    if variant == Variant::New && failure.is_none() {
        let closed = new_idsa_stationary_closed_form(&g, &config.spec)?;
        report.note(
            "closed_form_l2_discrepancy",
            l2_relative_error(&state.total(), &closed.total())?,
        );
    }
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn spurious(config: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let cfg = SpuriousConfig {
        solver: config.solver,
        horizon: config.horizon,
        trapped_fraction: config.trapped_fraction,
        stationarity_tol: config.takeover_tol,
    };
    let results = run_spurious_trapped_experiment(&config.eps_list, &config.spec, grid(config)?, &cfg)?;
    let mut t = Table::new("takeover", &["eps", "time", "censored"]);
    for r in &results {
        t.push(vec![r.eps.into(), r.time.unwrap_or(f64::INFINITY).into(), r.time.is_none().into()]);
    }
    report.tables.push(t);
    let censored = results.iter().filter(|r| r.time.is_none()).count();
    report.note("censored_runs", censored);
    match takeover_exponent(&results, config.exclude_largest) {
        Ok(f) => {
            let mut fit = Table::new("fit", &FIT_COLUMNS);
            fit.push(fit_row("takeover_time", &f));
            report.tables.push(fit);
            report.note("takeover_fit", fit_json(&f));
        }
        Err(e) => report.note("takeover_fit_error", e.to_string()),
    }
    Ok(())
}

fn instability(config: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let g = grid(config)?;
    let cfg = InstabilityConfig {
        solver: config.solver,
        record_every: config.record_every,
        boundary_threshold: config.boundary_threshold,
        monotone_tol: config.monotone_tol,
        bound_slack: config.bound_slack,
    };
    let rep = run_instability_experiment(&config.spec, g.clone(), &cfg)?;
    let mut t = Table::new("records", &["t", "virtual_boundary", "monotone_flag", "sup_norm"]);
    for r in &rep.records {
        t.push(vec![r.t.into(), r.virtual_boundary.into(), (!r.non_monotone).into(), r.sup_norm.into()]);
    }
    report.tables.push(t);
    report.note("first_non_monotone", rep.first_non_monotone);
    report.note("peak_virtual_boundary", rep.peak_virtual_boundary);
    report.note("final_virtual_boundary", rep.final_virtual_boundary);
    report.note("last_inner_center", rep.last_inner_center);
    report.note("max_sup_norm", rep.max_sup_norm);
    if !config.snapshot_times.is_empty() {
        let traj = run_to_time(&config.spec, g, &config.solver, &config.snapshot_times)?;
        let mut p = Table::new("profiles", &IDSA_COLUMNS);
        for s in &traj.snapshots {
            idsa_rows(&mut p, &s.state, &s.tags);
        }
        report.tables.push(p);
    }
    Ok(())
}

fn convergence(config: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let opts = SweepOptions {
        oracle_tol: config.oracle_tol,
        method: config.stationary_method,
        solver: config.solver,
    };
    let spec = &config.spec;
    let sweep = convergence_sweep(&config.kappa_list, spec.radius, spec.b, &grid(config)?, config.variant, &opts)?;
    let mut t = Table::new("convergence", &["kappa", "err_J", "err_H", "err_K"]);
    for r in &sweep.records {
        t.push(vec![r.kappa.into(), r.err_j.into(), r.err_h.into(), r.err_k.into()]);
    }
    report.tables.push(t);
    if sweep.records.len() >= 2 {
        let fits = sweep.fits()?;
        let mut fit = Table::new("fit", &FIT_COLUMNS);
        for (name, f) in ["err_J", "err_H", "err_K"].iter().zip(&fits) {
            fit.push(fit_row(name, f));
            report.note(&format!("{name}_fit"), fit_json(f));
        }
        report.tables.push(fit);
    }
    if sweep.failures.is_empty() {
        return Ok(());
    }
    let failed: Vec<Json> = sweep
        .failures
        .iter()
        .map(|f| json!({ "kappa": f.kappa, "error": f.error.to_string() }))
        .collect();
    report.note("failures", failed);
    let list: Vec<String> = sweep
        .failures
        .iter()
        .map(|f| format!("kappa = {}: {}", f.kappa, f.error))
        .collect();
    Err(CliError::Solver {
        message: format!("{} sweep point(s) failed ({})", list.len(), list.join("; ")),
    })
}

fn err0(config: &RunConfig, report: &mut Report) -> Result<(), CliError> {
    let mut t = Table::new("err0", &["kappa_R", "err0"]);
    for (x, e) in err0_curve(&config.kappa_r_list)? {
        t.push(vec![x.into(), e.into()]);
    }
    report.tables.push(t);
    Ok(())
}
