//! Bounded multi-start Nelder-Mead over the `Nd x 6` increments.
//!
//! Hard constraints (box and rate caps) are enforced by projecting every
//! candidate before simulation; the distance to the projection is penalized so
//! the simplex is pulled back into the admissible region. Bed and R_e
//! constraints enter through an exact penalty on their relative excess.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::objective::{constraint_report, objective, ConstraintReport};
use super::policy::{expand_policy_from, project_deltas, PolicyPlan};
use super::MpcConfig;
use crate::ensemble::{run_ensemble_offset, run_ensemble_u, EnsembleResult};
use crate::mobility::AdherenceDraws;
use crate::{ActivityVector, Result, Schedule, State, ACTIVITIES};

/// One window's optimization problem.
#[derive(Debug, Clone)]
pub struct WindowProblem<'a> {
    /// Window index, mixed into the random-start seed.
    pub window: usize,
    pub x0: State,
    pub schedule: &'a Schedule,
    pub weights: ActivityVector,
    pub draws: &'a AdherenceDraws,
    /// Episode day at which this window's adherence paths are read.
    pub draw_offset: usize,
    /// Policy in force when the window opens.
    pub base: ActivityVector,
    pub cfg: &'a MpcConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartSummary {
    pub label: String,
    pub merit: f64,
    pub objective: f64,
    pub violation: f64,
    pub feasible: bool,
    pub evaluations: usize,
    pub iterations: usize,
    pub converged: bool,
}

/// One simplex iteration of one start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub window: usize,
    pub start: usize,
    pub iteration: usize,
    pub evaluations: usize,
    pub objective: f64,
    pub violation: f64,
    pub merit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub starts: Vec<StartSummary>,
    pub best_start: usize,
    pub evaluations: usize,
    pub iterations: usize,
    /// The chosen start stopped on the simplex-diameter test.
    pub converged: bool,
    /// Multiplier applied to constraint violation in the merit function.
    pub penalty_scale: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceRow>,
}

#[derive(Debug, Clone, Copy)]
struct Eval {
    merit: f64,
    objective: f64,
    violation: f64,
}

struct Evaluator<'p, 'a> {
    problem: &'p WindowProblem<'a>,
    uncontrolled: EnsembleResult,
    scale: f64,
}

impl Evaluator<'_, '_> {
    fn nd(&self) -> usize {
        self.problem.cfg.nd()
    }

    fn unflatten(&self, x: &[f64]) -> Vec<ActivityVector> {
        x.chunks_exact(ACTIVITIES)
            .map(|c| std::array::from_fn(|k| c[k]))
            .collect()
    }

    fn simulate(&self, deltas: &[ActivityVector]) -> Result<(Vec<ActivityVector>, EnsembleResult)> {
        let p = self.problem;
        let expanded = expand_policy_from(&p.base, deltas, p.cfg);
        let ens = run_ensemble_offset(&p.x0, p.schedule, &expanded, &p.weights, p.draws, p.draw_offset)?;
        Ok((expanded, ens))
    }

    fn assess(&self, deltas: &[ActivityVector]) -> Result<(f64, ConstraintReport, Vec<ActivityVector>)> {
        let (expanded, ens) = self.simulate(deltas)?;
        let j = objective(&expanded, &ens, &self.uncontrolled, self.problem.cfg)?;
        let report = constraint_report(deltas, &expanded, &ens, self.problem.cfg);
        Ok((j, report, expanded))
    }

    fn eval(&self, x: &[f64]) -> Result<Eval> {
        let raw = self.unflatten(x);
        let projected = project_deltas(&self.problem.base, &raw, self.problem.cfg);
        let dist2: f64 = raw
            .iter()
            .zip(&projected)
            .flat_map(|(a, b)| (0..ACTIVITIES).map(move |k| (a[k] - b[k]).powi(2)))
            .sum();
        let (j, report, _) = self.assess(&projected)?;
        let violation = report.violation();
        Ok(Eval {
            merit: j + self.scale * (violation + dist2),
            objective: j,
            violation,
        })
    }

    fn project_flat(&self, x: &[f64]) -> Vec<f64> {
        project_deltas(&self.problem.base, &self.unflatten(x), self.problem.cfg)
            .into_iter()
            .flatten()
            .collect()
    }

    fn starts(&self) -> Vec<(String, Vec<f64>)> {
        let cfg = self.problem.cfg;
        let nd = self.nd();
        let lift = cfg.alpha_upper.map(|u| -u);
        let center: ActivityVector = std::array::from_fn(|k| cfg.alpha_upper[k] / 2.0 - self.problem.base[k]);
        let rows = |first: ActivityVector, rest: ActivityVector| {
            (0..nd)
                .flat_map(|j| if j == 0 { first } else { rest })
                .collect::<Vec<f64>>()
        };
        let mut out = vec![
            ("hold".to_string(), vec![0.0; nd * ACTIVITIES]),
            ("tighten".to_string(), rows(cfg.delta_alpha_c, cfg.delta_alpha_c)),
            ("lift".to_string(), rows(lift, lift)),
            ("tighten-then-lift".to_string(), rows(cfg.delta_alpha_c, lift)),
            ("center".to_string(), rows(center, [0.0; ACTIVITIES])),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ self.problem.window as u64);
        for i in 0..cfg.solver.random_starts {
            let x = (0..nd * ACTIVITIES)
                .map(|i| {
                    let k = i % ACTIVITIES;
                    rng.random_range(-cfg.alpha_upper[k]..=cfg.delta_alpha_c[k])
                })
                .collect();
            out.push((format!("random-{}", i + 1), x));
        }
        out.into_iter().map(|(l, x)| (l, self.project_flat(&x))).collect()
    }
}

struct StartOutcome {
    x: Vec<f64>,
    best: Eval,
    evaluations: usize,
    iterations: usize,
    converged: bool,
    trace: Vec<TraceRow>,
}

/// Optimizes one window; always returns the best plan found.
///
/// When no start reaches a feasible point the plan's `feasibility.feasible`
/// is false and the plan is the least-infeasible one by merit.
pub fn solve_window(problem: &WindowProblem<'_>) -> Result<PolicyPlan> {
    let cfg = problem.cfg;
    let zeros = vec![0.0; cfg.tp];
    let uncontrolled = run_ensemble_u(&problem.x0, problem.schedule, &zeros, problem.draws, problem.draw_offset)?;
    let mut ev = Evaluator {
        problem,
        uncontrolled,
        scale: 0.0,
    };
    let hold = ev.eval(&vec![0.0; cfg.nd() * ACTIVITIES])?;
    ev.scale = cfg.solver.penalty * hold.objective.abs().max(1.0);

    let starts = ev.starts();
    let outcomes: Vec<StartOutcome> = starts
        .par_iter()
        .enumerate()
        .map(|(i, (_, x0))| nelder_mead(&ev, i, x0.clone()))
        .collect::<Result<_>>()?;

    // Feasible first, then lowest merit; ties keep the lower start index.
    let best_start = (0..outcomes.len())
        .min_by(|&a, &b| {
            let (ea, eb) = (&outcomes[a].best, &outcomes[b].best);
            (ea.violation > 0.0)
                .cmp(&(eb.violation > 0.0))
                .then(ea.merit.total_cmp(&eb.merit))
        })
        .expect("at least one start");

    let deltas = project_deltas(&problem.base, &ev.unflatten(&outcomes[best_start].x), cfg);
    let (objective_value, feasibility, expanded) = ev.assess(&deltas)?;

    let diagnostics = SolverDiagnostics {
        starts: starts
            .iter()
            .zip(&outcomes)
            .map(|((label, _), o)| StartSummary {
                label: label.clone(),
                merit: o.best.merit,
                objective: o.best.objective,
                violation: o.best.violation,
                feasible: o.best.violation == 0.0,
                evaluations: o.evaluations,
                iterations: o.iterations,
                converged: o.converged,
            })
            .collect(),
        best_start,
        evaluations: outcomes.iter().map(|o| o.evaluations).sum::<usize>() + 1,
        iterations: outcomes.iter().map(|o| o.iterations).sum(),
        converged: outcomes[best_start].converged,
        penalty_scale: ev.scale,
        trace: outcomes.into_iter().flat_map(|o| o.trace).collect(),
    };
    Ok(PolicyPlan {
        base: problem.base,
        deltas,
        expanded,
        objective_value,
        feasibility,
        diagnostics,
    })
}

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 0.5, shrink 0.5).
fn nelder_mead(ev: &Evaluator<'_, '_>, start: usize, x0: Vec<f64>) -> Result<StartOutcome> {
    let opts = &ev.problem.cfg.solver;
    let n = x0.len();
    let evals = std::cell::Cell::new(0usize);
    let f = |x: &[f64]| -> Result<Eval> {
        evals.set(evals.get() + 1);
        ev.eval(x)
    };

    let mut simplex: Vec<(Vec<f64>, Eval)> = Vec::with_capacity(n + 1);
    simplex.push((x0.clone(), f(&x0)?));
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += if x[i] + opts.initial_step <= 1.0 { opts.initial_step } else { -opts.initial_step };
        let e = f(&x)?;
        simplex.push((x, e));
    }

    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.merit.total_cmp(&b.1.merit));
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if opts.trace {
            let b = simplex[0].1;
            trace.push(TraceRow {
                window: ev.problem.window,
                start,
                iteration: iterations,
                evaluations: evals.get(),
                objective: b.objective,
                violation: b.violation,
                merit: b.merit,
            });
        }
        if diameter < opts.tol {
            converged = true;
            break;
        }
        if evals.get() >= opts.max_evals {
            break;
        }
        iterations += 1;

        let centroid: Vec<f64> = (0..n)
            .map(|i| simplex[..n].iter().map(|(x, _)| x[i]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n].0)
                .map(|(c, w)| c + t * (c - w))
                .collect()
        };
        let worst = simplex[n].1.merit;
        let second = simplex[n - 1].1.merit;
        let best = simplex[0].1.merit;

        let xr = along(1.0);
        let er = f(&xr)?;
        if er.merit < best {
            let xe = along(2.0);
            let ee = f(&xe)?;
            simplex[n] = if ee.merit < er.merit { (xe, ee) } else { (xr, er) };
            continue;
        }
        if er.merit < second {
            simplex[n] = (xr, er);
            continue;
        }
        let (xc, ec) = if er.merit < worst {
            let xc = along(0.5);
            let ec = f(&xc)?;
            (xc, ec)
        } else {
            let xc = along(-0.5);
            let ec = f(&xc)?;
            (xc, ec)
        };
        if ec.merit < worst.min(er.merit) {
            simplex[n] = (xc, ec);
            continue;
        }
        let x_best = simplex[0].0.clone();
        for v in simplex.iter_mut().skip(1) {
            let x: Vec<f64> = v.0.iter().zip(&x_best).map(|(a, b)| b + 0.5 * (a - b)).collect();
            let e = f(&x)?;
            *v = (x, e);
        }
    }
    let (x, best) = simplex.swap_remove(0);
    Ok(StartOutcome {
        x,
        best,
        evaluations: evals.get(),
        iterations,
        converged,
        trace,
    })
}
