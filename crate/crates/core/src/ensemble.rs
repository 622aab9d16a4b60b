//! Monte Carlo ensembles of adherence scenarios and the statistics the
//! controller's objective and chance constraints are built from.

use std::io::Write;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::format::sig10;
use crate::mobility::{policy_u, AdherenceDraws};
use crate::model::{effective_beta, step, Compartment};
use crate::stability::r_eff;
use crate::{ActivityVector, Error, Result, Schedule, State};

/// Scalar read off one scenario's trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observable {
    Compartment(Compartment),
    /// H + Q.
    ReportedInfected,
    /// Effective reproduction number; undefined on day index 0.
    Reff,
    /// H divided by the same scenario's H under `u = 0`.
    HospitalRatio,
}

/// Per-day distribution summary of one observable across scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub q025: Vec<f64>,
    pub q50: Vec<f64>,
    pub q975: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Trajectories of every scenario plus lazily computed statistics.
#[derive(Debug)]
pub struct EnsembleResult {
    start_day: i64,
    trajectories: Vec<Vec<State>>,
    draws: AdherenceDraws,
    draw_offset: usize,
    u: Vec<f64>,
    /// `r_eff[s][k]` is R_e of the transition into day index `k + 1`.
    r_eff: Vec<Vec<f64>>,
    compartment_stats: OnceLock<Vec<SeriesStats>>,
}

impl Clone for EnsembleResult {
    fn clone(&self) -> Self {
        Self {
            start_day: self.start_day,
            trajectories: self.trajectories.clone(),
            draws: self.draws.clone(),
            draw_offset: self.draw_offset,
            u: self.u.clone(),
            r_eff: self.r_eff.clone(),
            compartment_stats: OnceLock::new(),
        }
    }
}

/// Simulates every scenario in `draws` under the per-day policy `policy`.
///
/// `u(t) = weights . alpha(t)` and scenario `s` uses adherence `draws.at(s, t)`.
pub fn run_ensemble(
    x0: &State,
    schedule: &Schedule,
    policy: &[ActivityVector],
    weights: &ActivityVector,
    draws: &AdherenceDraws,
) -> Result<EnsembleResult> {
    run_ensemble_offset(x0, schedule, policy, weights, draws, 0)
}

/// As [`run_ensemble`], reading adherence paths from episode day `draw_offset` on.
pub fn run_ensemble_offset(
    x0: &State,
    schedule: &Schedule,
    policy: &[ActivityVector],
    weights: &ActivityVector,
    draws: &AdherenceDraws,
    draw_offset: usize,
) -> Result<EnsembleResult> {
    let u: Vec<f64> = policy.iter().map(|a| policy_u(weights, a)).collect();
    run_ensemble_u(x0, schedule, &u, draws, draw_offset)
}

/// Ensemble driven directly by an aggregate curtail series.
pub fn run_ensemble_u(
    x0: &State,
    schedule: &Schedule,
    u: &[f64],
    draws: &AdherenceDraws,
    draw_offset: usize,
) -> Result<EnsembleResult> {
    let initial = vec![*x0; draws.len()];
    run_ensemble_states(&initial, schedule, u, draws, draw_offset)
}

/// Ensemble in which scenario `s` starts from `initial[s]`; all states must share a day.
pub fn run_ensemble_states(
    initial: &[State],
    schedule: &Schedule,
    u: &[f64],
    draws: &AdherenceDraws,
    draw_offset: usize,
) -> Result<EnsembleResult> {
    assert_eq!(initial.len(), draws.len(), "one initial state per scenario");
    let Some(x0) = initial.first() else {
        return Ok(EnsembleResult {
            start_day: 0,
            trajectories: Vec::new(),
            draws: draws.clone(),
            draw_offset,
            u: u.to_vec(),
            r_eff: Vec::new(),
            compartment_stats: OnceLock::new(),
        });
    };
    assert!(initial.iter().all(|x| x.day == x0.day), "initial states on different days");
    let days = u.len();
    // Resolve the schedule once; every scenario shares it.
    let mut per_day = Vec::with_capacity(days);
    for k in 0..days {
        let day = x0.day + k as i64 + 1;
        let params = *schedule.params_on_day(day)?;
        let theta_c = schedule.theta_c_on_day(day)?;
        per_day.push((day, params, theta_c));
    }

    let runs: Vec<(Vec<State>, Vec<f64>)> = (0..draws.len())
        .into_par_iter()
        .map(|s| {
            let mut traj = Vec::with_capacity(days + 1);
            let mut reff = Vec::with_capacity(days);
            let mut x = initial[s];
            traj.push(x);
            for (k, (day, params, theta_c)) in per_day.iter().enumerate() {
                let ctl = crate::Control::new(u[k], draws.at(s, draw_offset + k), *theta_c);
                let beta = effective_beta(params, &ctl);
                let re = r_eff(&x, params, beta).map_err(|e| e.at_day(*day).in_scenario(s))?;
                x = step(&x, params, beta).map_err(|e| e.at_day(*day).in_scenario(s))?;
                reff.push(re);
                traj.push(x);
            }
            Ok((traj, reff))
        })
        .collect::<Result<_>>()?;

    let (trajectories, r_eff) = runs.into_iter().unzip();
    Ok(EnsembleResult {
        start_day: x0.day,
        trajectories,
        draws: draws.clone(),
        draw_offset,
        u: u.to_vec(),
        r_eff,
        compartment_stats: OnceLock::new(),
    })
}

impl EnsembleResult {
    /// Hand-built ensemble for fixtures.
    #[cfg(test)]
    pub(crate) fn from_parts(start_day: i64, trajectories: Vec<Vec<State>>, r_eff: Vec<Vec<f64>>, u: Vec<f64>) -> Self {
        let n = trajectories.len();
        Self {
            start_day,
            trajectories,
            draws: AdherenceDraws::zeros(n),
            draw_offset: 0,
            u,
            r_eff,
            compartment_stats: OnceLock::new(),
        }
    }

    pub fn n_scenarios(&self) -> usize {
        self.trajectories.len()
    }

    /// Number of simulated transitions; trajectories hold `days() + 1` states.
    pub fn days(&self) -> usize {
        self.u.len()
    }

    pub fn start_day(&self) -> i64 {
        self.start_day
    }

    pub fn trajectories(&self) -> &[Vec<State>] {
        &self.trajectories
    }

    pub fn trajectory(&self, scenario: usize) -> &[State] {
        &self.trajectories[scenario]
    }

    pub fn draws(&self) -> &AdherenceDraws {
        &self.draws
    }

    /// Adherence deviation of `scenario` on transition `k`.
    pub fn theta(&self, scenario: usize, k: usize) -> f64 {
        self.draws.at(scenario, self.draw_offset + k)
    }

    pub fn u(&self) -> &[f64] {
        &self.u
    }

    pub fn r_eff_series(&self, scenario: usize) -> &[f64] {
        &self.r_eff[scenario]
    }

    /// Value of `obs` for `scenario` at day index `day` (0 = initial state).
    ///
    /// Returns `None` for R_e on day 0 and for the ratio observable without a companion.
    pub fn value(
        &self,
        obs: Observable,
        scenario: usize,
        day: usize,
        companion: Option<&EnsembleResult>,
    ) -> Option<f64> {
        let x = &self.trajectories[scenario][day];
        match obs {
            Observable::Compartment(c) => Some(x.get(c)),
            Observable::ReportedInfected => Some(x.reported_infected()),
            Observable::Reff => day.checked_sub(1).map(|k| self.r_eff[scenario][k]),
            Observable::HospitalRatio => {
                let base = companion?.trajectories[scenario][day].h;
                Some(hospital_ratio(x.h, base))
            }
        }
    }

    /// Values of `obs` across scenarios on `day`.
    pub fn cross_section(
        &self,
        obs: Observable,
        day: usize,
        companion: Option<&EnsembleResult>,
    ) -> Result<Vec<f64>> {
        if matches!(obs, Observable::HospitalRatio) && companion.is_none() {
            return Err(Error::UncontrolledRunMissing);
        }
        Ok((0..self.n_scenarios())
            .map(|s| self.value(obs, s, day, companion).unwrap_or(f64::NAN))
            .collect())
    }

    /// Per-day statistics of a compartment (cached).
    pub fn compartment_stats(&self, c: Compartment) -> &SeriesStats {
        let all = self.compartment_stats.get_or_init(|| {
            Compartment::ALL
                .iter()
                .map(|&c| self.series_stats_uncached(Observable::Compartment(c)))
                .collect()
        });
        &all[Compartment::ALL.iter().position(|&x| x == c).expect("known compartment")]
    }

    /// Per-day statistics of any observable that needs no companion run.
    /// For R_e, day 0 entries are NaN.
    pub fn series_stats(&self, obs: Observable) -> SeriesStats {
        match obs {
            Observable::Compartment(c) => self.compartment_stats(c).clone(),
            _ => self.series_stats_uncached(obs),
        }
    }

    fn series_stats_uncached(&self, obs: Observable) -> SeriesStats {
        let days = self.days() + 1;
        let mut out = SeriesStats {
            mean: Vec::with_capacity(days),
            std: Vec::with_capacity(days),
            q025: Vec::with_capacity(days),
            q50: Vec::with_capacity(days),
            q975: Vec::with_capacity(days),
            min: Vec::with_capacity(days),
            max: Vec::with_capacity(days),
        };
        for day in 0..days {
            let mut v: Vec<f64> = (0..self.n_scenarios())
                .filter_map(|s| self.value(obs, s, day, None))
                .collect();
            let summary = Summary::of(&mut v);
            out.mean.push(summary.mean);
            out.std.push(summary.std);
            out.q025.push(summary.q025);
            out.q50.push(summary.q50);
            out.q975.push(summary.q975);
            out.min.push(summary.min);
            out.max.push(summary.max);
        }
        out
    }

    /// Writes `scenario,day,date,S,E,I_A,I_S,H,Q,R_A,R_H,R_Q,D,R_eff,u` rows.
    /// R_eff and u are empty on the initial day.
    pub fn write_trajectories_csv<W: Write>(&self, schedule: &Schedule, out: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(out);
        writeln!(w, "scenario,day,date,S,E,I_A,I_S,H,Q,R_A,R_H,R_Q,D,R_eff,u")?;
        for (s, traj) in self.trajectories.iter().enumerate() {
            for (k, x) in traj.iter().enumerate() {
                write!(w, "{s},{},{}", x.day, schedule.date_of(x.day))?;
                for v in x.to_array() {
                    write!(w, ",{}", sig10(v))?;
                }
                if k == 0 {
                    writeln!(w, ",,")?;
                } else {
                    writeln!(w, ",{},{}", sig10(self.r_eff[s][k - 1]), sig10(self.u[k - 1]))?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn hospital_ratio(h: f64, base: f64) -> f64 {
    if base > 0.0 {
        h / base
    } else if h == 0.0 {
        1.0
    } else {
        f64::INFINITY
    }
}

struct Summary {
    mean: f64,
    std: f64,
    q025: f64,
    q50: f64,
    q975: f64,
    min: f64,
    max: f64,
}

impl Summary {
    /// Sorts `v` in place; sums run over the sorted values so the result does
    /// not depend on scenario order.
    fn of(v: &mut [f64]) -> Self {
        if v.is_empty() {
            let nan = f64::NAN;
            return Self {
                mean: nan,
                std: nan,
                q025: nan,
                q50: nan,
                q975: nan,
                min: nan,
                max: nan,
            };
        }
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let (min, max) = (v[0], v[v.len() - 1]);
        // Identical values must give an exact mean and zero spread.
        let mean = if min == max { min } else { v.iter().sum::<f64>() / n };
        let std = if v.len() > 1 && min != max {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            q025: quantile_sorted(v, 0.025),
            q50: quantile_sorted(v, 0.5),
            q975: quantile_sorted(v, 0.975),
            min,
            max,
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Fraction of scenarios whose `obs` on `day` strictly exceeds `threshold`.
pub fn empirical_prob(ens: &EnsembleResult, obs: Observable, threshold: f64, day: usize) -> Result<f64> {
    let v = ens.cross_section(obs, day, None)?;
    Ok(exceedance(&v, threshold))
}

pub fn exceedance(values: &[f64], threshold: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| v > threshold).count() as f64 / values.len() as f64
}

/// Sample mean across scenarios of `obs^power` on `day`.
///
/// The ratio observable is formed per scenario against that scenario's own
/// uncontrolled companion before averaging.
pub fn trajectory_expectation(
    ens: &EnsembleResult,
    companion: Option<&EnsembleResult>,
    obs: Observable,
    day: usize,
    power: i32,
) -> Result<f64> {
    let mut v = ens.cross_section(obs, day, companion)?;
    for x in &mut v {
        *x = x.powi(power);
    }
    v.sort_by(f64::total_cmp);
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}
