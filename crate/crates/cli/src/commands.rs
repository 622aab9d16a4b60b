//! The four experiment subcommands.

use std::fs::File;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use serde_json::json;

use epicontrol_core::ensemble::{run_ensemble, run_ensemble_offset, run_ensemble_u, EnsembleResult, Observable};
use epicontrol_core::mobility::{
    compose_policy_weights, fit_residential_regression, parse_mobility_csv_with, restriction_stats, sample_adherence,
    ActivitySeries, AdherenceDraws, ParseOptions,
};
use epicontrol_core::model::{initial_state, Compartment, EpiParams};
use epicontrol_core::mpc::{constraint_report, initial_state_at, receding_horizon, Formulation, MpcConfig};
use epicontrol_core::stability::{char_poly, jury_test, r0};
use epicontrol_core::{Error, Schedule};

use crate::config::{Mode, RunConfig};
use crate::output::{ensure_dir, panel_csv, policy_csv, trace_csv, write_bytes, write_json, Envelope};
use crate::{CliError, EXIT_INFEASIBLE, EXIT_OK};

/// What a completed command produced.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    /// Controller windows whose best plan violates a constraint.
    pub infeasible_windows: Vec<usize>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.infeasible_windows.is_empty() {
            EXIT_OK
        } else {
            EXIT_INFEASIBLE
        }
    }
}

/// Runs `mode` with an already validated configuration.
pub fn run(mode: Mode, cfg: &RunConfig) -> Result<Outcome, CliError> {
    ensure_dir(&cfg.paths.out_dir)?;
    match mode {
        Mode::SimulateHistorical => simulate_historical(cfg),
        Mode::FitMobility => fit_mobility(cfg),
        Mode::StabilityReport => stability_report(cfg),
        Mode::MpcClosedLoop => mpc_closed_loop(cfg),
    }
}

fn read_series(cfg: &RunConfig) -> Result<ActivitySeries, CliError> {
    let path = cfg
        .paths
        .mobility_csv
        .as_deref()
        .ok_or_else(|| CliError::ConfigValidation(vec!["paths.mobility_csv is required".into()]))?;
    let file = File::open(path).map_err(|source| CliError::Input {
        path: path.to_path_buf(),
        source,
    })?;
    let opts = ParseOptions {
        school_closure: cfg.regression.school_closure,
    };
    let series = parse_mobility_csv_with(file, &cfg.region, opts)?;
    log::info!(
        "{}: {} days of {} mobility data",
        path.display(),
        series.len(),
        cfg.region
    );
    Ok(series)
}

fn episode_days(cfg: &RunConfig) -> usize {
    (cfg.period.end - cfg.period.start).num_days() as usize
}

struct Writer<'a> {
    dir: &'a Path,
    files: Vec<PathBuf>,
}

impl<'a> Writer<'a> {
    fn new(dir: &'a Path) -> Self {
        Self { dir, files: Vec::new() }
    }

    fn text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        self.files.push(write_bytes(&self.dir.join(name), text.as_bytes())?);
        Ok(())
    }

    fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.files.push(write_json(&self.dir.join(name), value)?);
        Ok(())
    }

    /// `trajectories.csv` plus one file per figure panel.
    fn ensemble(&mut self, schedule: &Schedule, ens: &EnsembleResult) -> Result<(), CliError> {
        let mut buf = Vec::new();
        ens.write_trajectories_csv(schedule, &mut buf)?;
        self.files.push(write_bytes(&self.dir.join("trajectories.csv"), &buf)?);
        let panels = [
            ("panel_a_reported_infected.csv", Observable::ReportedInfected),
            ("panel_b_hospitalized.csv", Observable::Compartment(Compartment::H)),
            ("panel_c_quarantined.csv", Observable::Compartment(Compartment::Q)),
            ("panel_d_dead.csv", Observable::Compartment(Compartment::D)),
            ("panel_f_r_eff.csv", Observable::Reff),
        ];
        for (name, obs) in panels {
            self.text(name, &panel_csv(schedule, ens.start_day(), &ens.series_stats(obs)))?;
        }
        Ok(())
    }
}

#[derive(Debug, Serialize)]
struct Peak {
    /// Maximum of the per-day mean.
    mean: f64,
    date: NaiveDate,
    /// Largest value reached by any scenario.
    scenario_max: f64,
}

fn peak(schedule: &Schedule, ens: &EnsembleResult, c: Compartment) -> Peak {
    let stats = ens.compartment_stats(c);
    let (k, mean) = stats
        .mean
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    Peak {
        mean,
        date: schedule.date_of(ens.start_day() + k as i64),
        scenario_max: stats.max.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    }
}

/// Largest relative deviation of any state's total from the population.
fn conservation_error(ens: &EnsembleResult, population: f64) -> f64 {
    ens.trajectories()
        .iter()
        .flatten()
        .map(|x| ((x.total() - population) / population).abs())
        .fold(0.0, f64::max)
}

fn terminal(ens: &EnsembleResult) -> serde_json::Value {
    let k = ens.days();
    json!({
        "date_index": k,
        "reported_infected": Envelope::at(&ens.series_stats(Observable::ReportedInfected), k),
        "hospitalized": Envelope::at(ens.compartment_stats(Compartment::H), k),
        "quarantined": Envelope::at(ens.compartment_stats(Compartment::Q), k),
        "dead": Envelope::at(ens.compartment_stats(Compartment::D), k),
        "r_eff": Envelope::at(&ens.series_stats(Observable::Reff), k),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn simulate_historical(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let schedule = cfg.build_schedule(Mode::SimulateHistorical)?;
    let series = read_series(cfg)?;
    let start = cfg.period.start;
    let days = episode_days(cfg);

    let policy = series.observed_policy(start, days)?;

    let n = cfg.ensemble.n_scenarios;
    let draws = sample_adherence(&cfg.ensemble.adherence, &cfg.policy_weights, cfg.seed, n, days);
    let x0 = initial_state_at(&schedule, start)?;
    let ens = run_ensemble(&x0, &schedule, &policy, &cfg.policy_weights, &draws)?;
    let h = peak(&schedule, &ens, Compartment::H);
    let reff = ens.series_stats(Observable::Reff);
    let end_reff = Envelope::at(&reff, days);
    // R_e mean is indexed by arrival day; compare days strictly after caution switches on.
    let first = (schedule.day_of(cfg.caution_from(Mode::SimulateHistorical)) - ens.start_day() + 1).max(1) as usize;
    let decreasing = reff.mean.get(first..).is_some_and(|m| m.windows(2).all(|w| w[1] < w[0]));
    log::info!(
        "{} scenarios: deaths {:.0} on {}, peak H {:.0} on {}, R_e in [{:.3}, {:.3}]",
        n,
        ens.compartment_stats(Compartment::D).mean[days],
        cfg.period.end,
        h.mean,
        h.date,
        end_reff.min,
        end_reff.max
    );

    let mut out = Writer::new(&cfg.paths.out_dir);
    out.ensemble(&schedule, &ens)?;
    out.text("policy.csv", &policy_csv(&schedule, ens.start_day(), &policy, ens.u()))?;
    let summary = json!({
        "mode": Mode::SimulateHistorical.to_string(),
        "region": cfg.region,
        "seed": cfg.seed,
        "n_scenarios": n,
        "start": start,
        "end": cfg.period.end,
        "mean_u": mean(ens.u()),
        "peak_hospitalized": h,
        "terminal": terminal(&ens),
        "r_eff_mean_decreasing_after_caution": decreasing,
        "conservation_max_rel_error": conservation_error(&ens, schedule.population()),
    });
    out.json("summary.json", &summary)?;
    Ok(Outcome {
        files: out.files,
        infeasible_windows: Vec::new(),
    })
}

fn fit_mobility(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let series = read_series(cfg)?;
    let reg = &cfg.regression;
    let fit = fit_residential_regression(&series.window(reg.start, reg.end))?;
    let composed = compose_policy_weights(&fit);
    log::info!(
        "{} observations {}..{}: R2 = {:.4}, RMSE = {:.4}",
        fit.n_obs,
        reg.start,
        reg.end,
        fit.r2,
        fit.rmse
    );
    log::info!("composed weights {composed:?}");

    let mut out = Writer::new(&cfg.paths.out_dir);
    out.json("regression.json", &fit)?;
    out.json(
        "policy_weights.json",
        &json!({ "composed": composed, "configured": cfg.policy_weights }),
    )?;
    let mut table = String::from("activity,mean_percent,std_percent\n");
    for s in restriction_stats(&series, reg.stats_start, reg.stats_end) {
        table.push_str(&format!(
            "{},{},{}\n",
            s.activity,
            epicontrol_core::format::sig10(s.mean_percent),
            epicontrol_core::format::sig10(s.std_percent)
        ));
    }
    out.text("table1.csv", &table)?;
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    out.text("mobility.csv", &String::from_utf8_lossy(&buf))?;
    Ok(Outcome {
        files: out.files,
        infeasible_windows: Vec::new(),
    })
}

fn stability_report(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let st = &cfg.stability;
    let adjust = |p: &EpiParams<f64>| {
        let mut p = *p;
        if let Some(e) = st.epsilon {
            p.epsilon = e;
        }
        if let Some(b) = st.beta {
            p.beta0 = b;
        }
        p
    };
    let schedule = cfg.build_schedule(Mode::StabilityReport)?.map_params(adjust)?;

    let mut segments = Vec::new();
    for seg in schedule.segments() {
        let p = seg.params;
        let (from, to) = (schedule.date_of(seg.first_day), schedule.date_of(seg.last_day));
        let r0v = r0(&p, p.beta0);
        let poly = char_poly(&p, p.beta0);
        let jury = jury_test(&poly);
        log::info!("{from}..{to}: beta = {}, R0 = {r0v:.4}, stable = {}", p.beta0, jury.stable);
        if p == EpiParams::lombardy_early() {
            log::info!("note: 4.38 is often quoted for these parameters; the closed form gives {r0v:.4}");
        }
        let sir = (p.epsilon == 0.0).then(|| p.beta0 / p.delta_a);
        if let Some(v) = sir {
            log::info!("epsilon = 0: R0 = beta/delta_A = {v:.4} (SIR reduction)");
        }
        segments.push(json!({
            "from": from,
            "to": to,
            "params": p,
            "beta": p.beta0,
            "r0": r0v,
            "r0_sir_reduction": sir,
            "char_poly": poly,
            "jury": jury,
        }));
    }

    // Deterministic trajectory from the seed case under a constant curtail.
    let end_day = schedule.day_of(cfg.period.end).max(1);
    let x0 = initial_state(schedule.population())?;
    let u = vec![st.u; end_day as usize];
    let ens = run_ensemble_u(&x0, &schedule, &u, &AdherenceDraws::zeros(1), 0)?;
    let traj = ens.trajectory(0);
    let mut csv = String::from("date,R_eff,S,H,Q,D\n");
    for (k, r) in ens.r_eff_series(0).iter().enumerate() {
        let x = &traj[k + 1];
        let f = epicontrol_core::format::sig10;
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            schedule.date_of(x.day),
            f(*r),
            f(x.s),
            f(x.h),
            f(x.q),
            f(x.d)
        ));
    }

    let mut out = Writer::new(&cfg.paths.out_dir);
    out.json(
        "stability.json",
        &json!({ "segments": segments, "trajectory_u": st.u, "trajectory_end": cfg.period.end }),
    )?;
    out.text("r_eff.csv", &csv)?;
    Ok(Outcome {
        files: out.files,
        infeasible_windows: Vec::new(),
    })
}

fn mpc_closed_loop(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let schedule = cfg.build_schedule(Mode::MpcClosedLoop)?;
    let mpc = &cfg.mpc;
    let weights = &cfg.policy_weights;
    let days = episode_days(cfg);
    let draws = sample_adherence(&cfg.ensemble.adherence, weights, mpc.seed, mpc.n_cases, days + mpc.tp);

    let result = receding_horizon(&schedule, cfg.period.start, cfg.period.end, weights, &draws, mpc, |w| {
        log::info!(
            "window {} from {}: u = {:.3}, objective {:.4e}, {} ({} evaluations)",
            w.window,
            schedule.date_of(w.start_day),
            w.enacted_u,
            w.plan.objective_value,
            if w.plan.feasibility.feasible { "feasible" } else { "infeasible" },
            w.plan.diagnostics.evaluations
        );
    })?;

    let pmpc_check = (mpc.formulation == Formulation::Rmpc).then(|| MpcConfig {
        formulation: Formulation::Pmpc,
        ..mpc.clone()
    });
    let mut trace = Vec::new();
    let mut windows = Vec::with_capacity(result.windows.len());
    for w in &result.windows {
        let mut plan = w.plan.clone();
        trace.append(&mut plan.diagnostics.trace);
        let chance = match &pmpc_check {
            Some(pc) => {
                let offset = (w.start_day - result.start_day) as usize;
                let ens = run_ensemble_offset(&w.x0, &schedule, &plan.expanded, weights, &draws, offset)?;
                let report = constraint_report(&plan.deltas, &plan.expanded, &ens, pc);
                Some(json!({ "feasible": report.feasible, "report": report }))
            }
            None => None,
        };
        windows.push(json!({
            "window": w.window,
            "start": schedule.date_of(w.start_day),
            "days": w.days,
            "enacted": w.enacted,
            "enacted_u": w.enacted_u,
            "objective": plan.objective_value,
            "deltas": plan.deltas,
            "feasibility": plan.feasibility,
            "diagnostics": plan.diagnostics,
            "pmpc_chance_check": chance,
        }));
    }

    let infeasible = result.infeasible_windows();
    for w in &result.windows {
        if !w.plan.feasibility.feasible {
            let e = Error::NoFeasiblePoint {
                window: w.window,
                violation: w.plan.feasibility.violation(),
            };
            log::warn!("{e}");
        }
    }

    let ens = &result.ensemble;
    let h = peak(&schedule, ens, Compartment::H);
    log::info!(
        "deaths {:.0}, peak H {:.0} on {}, mean u {:.3}",
        ens.compartment_stats(Compartment::D).mean[days],
        h.mean,
        h.date,
        mean(&result.u)
    );

    let mut out = Writer::new(&cfg.paths.out_dir);
    out.ensemble(&schedule, ens)?;
    out.text("policy.csv", &policy_csv(&schedule, result.start_day, &result.policy, &result.u))?;
    if mpc.solver.trace {
        out.text("solver_trace.csv", &trace_csv(&trace))?;
    }
    let summary = json!({
        "mode": Mode::MpcClosedLoop.to_string(),
        "region": cfg.region,
        "seed": mpc.seed,
        "n_scenarios": mpc.n_cases,
        "formulation": mpc.formulation,
        "objective": mpc.objective,
        "start": cfg.period.start,
        "end": cfg.period.end,
        "mean_u": mean(&result.u),
        "peak_hospitalized": h,
        "terminal": terminal(ens),
        "uncontrolled": {
            "peak_hospitalized": peak(&schedule, &result.uncontrolled, Compartment::H),
            "terminal": terminal(&result.uncontrolled),
        },
        "all_feasible": infeasible.is_empty(),
        "infeasible_windows": infeasible,
        "conservation_max_rel_error": conservation_error(ens, schedule.population()),
        "windows": windows,
    });
    out.json("summary.json", &summary)?;
    Ok(Outcome {
        files: out.files,
        infeasible_windows: infeasible,
    })
}
