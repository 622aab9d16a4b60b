use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::policy::PolicyPlan;
use super::solver::{solve_window, WindowProblem};
use super::MpcConfig;
use crate::ensemble::{run_ensemble, run_ensemble_states, run_ensemble_u, EnsembleResult};
use crate::mobility::{policy_u, AdherenceDraws};
use crate::model::{initial_state, simulate};
use crate::{ActivityVector, Error, Result, Schedule, State, ACTIVITIES};

/// One re-planning step of the closed loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window: usize,
    pub start_day: i64,
    /// Ensemble-mean state the window was planned from.
    pub x0: State,
    pub plan: PolicyPlan,
    /// Policy enacted for the window's action period.
    pub enacted: ActivityVector,
    pub enacted_u: f64,
    /// Days the decision stayed in force (short for a final partial window).
    pub days: usize,
}

#[derive(Debug, Clone)]
pub struct ClosedLoopResult {
    pub start_day: i64,
    pub windows: Vec<WindowRecord>,
    /// Realized per-day policy; entry `k` drives the transition into day `start_day + k + 1`.
    pub policy: Vec<ActivityVector>,
    pub u: Vec<f64>,
    /// Every scenario rerun under the realized policy.
    pub ensemble: EnsembleResult,
    /// The same scenarios with `u = 0` throughout.
    pub uncontrolled: EnsembleResult,
}

impl ClosedLoopResult {
    /// Every window reached a plan satisfying all constraints.
    pub fn all_feasible(&self) -> bool {
        self.windows.iter().all(|w| w.plan.feasibility.feasible)
    }

    pub fn infeasible_windows(&self) -> Vec<usize> {
        self.windows
            .iter()
            .filter(|w| !w.plan.feasibility.feasible)
            .map(|w| w.window)
            .collect()
    }
}

/// State on `date` from the single seed case at day zero, with no curtails
/// and perfect adherence.
pub fn initial_state_at(schedule: &Schedule, date: NaiveDate) -> Result<State> {
    let days = schedule.day_of(date);
    if days < 0 {
        return Err(Error::DateOutOfSchedule { date, day: days });
    }
    let x0 = initial_state(schedule.population())?;
    let control = (1..=days)
        .map(|d| schedule.control(d, 0.0, 0.0))
        .collect::<Result<Vec<_>>>()?;
    let traj = simulate(&x0, schedule, &control, days as usize)?;
    Ok(*traj.last().expect("trajectory holds the initial state"))
}

/// Closed-loop MPC from `start` to `end`.
///
/// Each window is planned from the ensemble-mean state, its first decision is
/// enacted for `Ta` days in every scenario, and the scenarios advance.
pub fn receding_horizon(
    schedule: &Schedule,
    start: NaiveDate,
    end: NaiveDate,
    weights: &ActivityVector,
    draws: &AdherenceDraws,
    cfg: &MpcConfig,
    mut on_window: impl FnMut(&WindowRecord),
) -> Result<ClosedLoopResult> {
    cfg.validate()?;
    let x0 = initial_state_at(schedule, start)?;
    let episode = (end - start).num_days();
    if episode <= 0 {
        return Err(Error::InvalidMpcConfig(format!("end {end} must follow start {start}")));
    }
    let episode = episode as usize;

    let mut states = vec![x0; draws.len()];
    let mut base = [0.0; ACTIVITIES];
    let mut windows = Vec::new();
    let mut policy = Vec::with_capacity(episode);
    let mut elapsed = 0usize;
    while elapsed < episode {
        let w = windows.len();
        let mean = mean_state(&states);
        let problem = WindowProblem {
            window: w,
            x0: mean,
            schedule,
            weights: *weights,
            draws,
            draw_offset: elapsed,
            base,
            cfg,
        };
        let plan = solve_window(&problem).map_err(|e| e.in_window(w))?;
        let enacted = plan.first_action();
        let days = cfg.ta.min(episode - elapsed);
        let u = vec![policy_u(weights, &enacted); days];
        let advanced = run_ensemble_states(&states, schedule, &u, draws, elapsed).map_err(|e| e.in_window(w))?;
        states = advanced.trajectories().iter().map(|t| *t.last().expect("non-empty")).collect();

        let record = WindowRecord {
            window: w,
            start_day: mean.day,
            x0: mean,
            enacted_u: u[0],
            enacted,
            plan,
            days,
        };
        on_window(&record);
        windows.push(record);
        policy.extend(std::iter::repeat_n(enacted, days));
        base = enacted;
        elapsed += days;
    }

    let ensemble = run_ensemble(&x0, schedule, &policy, weights, draws)?;
    let uncontrolled = run_ensemble_u(&x0, schedule, &vec![0.0; episode], draws, 0)?;
    Ok(ClosedLoopResult {
        start_day: x0.day,
        u: ensemble.u().to_vec(),
        windows,
        policy,
        ensemble,
        uncontrolled,
    })
}

fn mean_state(states: &[State]) -> State {
    let n = states.len() as f64;
    let mut acc = [0.0; 10];
    for x in states {
        for (a, v) in acc.iter_mut().zip(x.to_array()) {
            *a += v;
        }
    }
    State::from_array(states[0].day, acc.map(|a| a / n))
}
