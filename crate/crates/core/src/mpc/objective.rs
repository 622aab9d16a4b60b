use serde::{Deserialize, Serialize};

use super::{Formulation, MpcConfig, ObjectiveKind};
use crate::ensemble::{hospital_ratio, EnsembleResult};
use crate::{ActivityVector, Error, Result, ACTIVITIES};

/// Constraint statistics on one predicted day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayMargin {
    pub day: i64,
    /// Statistic compared against `Beds`: order statistic (PMPC), mean (DMPC)
    /// or maximum (RMPC). `None` when the probability level makes the
    /// constraint vacuous.
    pub bed_stat: Option<f64>,
    /// Fraction of scenarios with `H > Beds`.
    pub bed_exceedance: f64,
    pub re_stat: Option<f64>,
    pub re_exceedance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub feasible: bool,
    /// Every policy value lies in `[0, alpha_upper]`.
    pub bounds_ok: bool,
    /// Every increment is at most `delta_alpha_c`.
    pub rates_ok: bool,
    /// Sum over days of the relative excess of the bed statistic over `Beds`.
    pub bed_violation: f64,
    pub re_violation: f64,
    /// Largest `stat - Beds` over the horizon; negative means slack.
    pub worst_bed_margin: Option<f64>,
    pub worst_re_margin: Option<f64>,
    pub days: Vec<DayMargin>,
}

impl ConstraintReport {
    /// Total soft-constraint violation used by the penalty.
    pub fn violation(&self) -> f64 {
        self.bed_violation + self.re_violation
    }
}

/// Slack tolerated on exact bound and rate checks.
const EXACT_TOL: f64 = 1e-12;

/// Objective of a plan over the horizon of `controlled`.
///
/// `uncontrolled` must come from the same initial state and draws under `u = 0`.
pub fn objective(
    expanded: &[ActivityVector],
    controlled: &EnsembleResult,
    uncontrolled: &EnsembleResult,
    cfg: &MpcConfig,
) -> Result<f64> {
    let n = controlled.n_scenarios();
    if uncontrolled.n_scenarios() != n || uncontrolled.days() < controlled.days() {
        return Err(Error::UncontrolledRunMissing);
    }
    let horizon = controlled.days();
    let linear = !matches!(cfg.objective, ObjectiveKind::Quadratic);

    let activity: f64 = expanded[..horizon]
        .iter()
        .map(|a| {
            (0..ACTIVITIES)
                .map(|k| if linear { cfg.omega_a[k] * a[k] } else { cfg.omega_a[k] * a[k] * a[k] })
                .sum::<f64>()
        })
        .sum();
    let power = |x: f64| if linear { x } else { x * x };
    let ratio = |s: usize, t: usize| {
        hospital_ratio(controlled.trajectory(s)[t].h, uncontrolled.trajectory(s)[t].h)
    };
    let re = |s: usize, t: usize| controlled.r_eff_series(s)[t - 1];

    if cfg.formulation == Formulation::Rmpc {
        // Worst case of the whole per-scenario sum.
        let worst = (0..n)
            .map(|s| {
                (1..=horizon)
                    .map(|t| cfg.omega_i * power(ratio(s, t)) + cfg.omega_r * power(re(s, t)))
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        return Ok(worst + activity);
    }

    let mut total = activity;
    for t in 1..=horizon {
        let (hosp, rep) = match (cfg.formulation, cfg.objective) {
            (Formulation::Dmpc, _) | (_, ObjectiveKind::LinearE) => {
                let h = sorted_mean((0..n).map(|s| controlled.trajectory(s)[t].h).collect());
                let h0 = sorted_mean((0..n).map(|s| uncontrolled.trajectory(s)[t].h).collect());
                let r = sorted_mean((0..n).map(|s| re(s, t)).collect());
                (power(hospital_ratio(h, h0)), power(r))
            }
            _ => (
                sorted_mean((0..n).map(|s| power(ratio(s, t))).collect()),
                sorted_mean((0..n).map(|s| power(re(s, t))).collect()),
            ),
        };
        total += cfg.omega_i * hosp + cfg.omega_r * rep;
    }
    Ok(total)
}

/// Bed and R_e constraint statistics plus exact bound and rate checks.
pub fn constraint_report(
    deltas: &[ActivityVector],
    expanded: &[ActivityVector],
    controlled: &EnsembleResult,
    cfg: &MpcConfig,
) -> ConstraintReport {
    let bounds_ok = expanded
        .iter()
        .all(|a| (0..ACTIVITIES).all(|k| a[k] >= -EXACT_TOL && a[k] <= cfg.alpha_upper[k] + EXACT_TOL));
    let rates_ok = deltas
        .iter()
        .all(|d| (0..ACTIVITIES).all(|k| d[k] <= cfg.delta_alpha_c[k] + EXACT_TOL));

    let n = controlled.n_scenarios();
    let mut days = Vec::with_capacity(controlled.days());
    let (mut bed_violation, mut re_violation) = (0.0, 0.0);
    let (mut worst_bed, mut worst_re): (Option<f64>, Option<f64>) = (None, None);
    for t in 1..=controlled.days() {
        let h: Vec<f64> = (0..n).map(|s| controlled.trajectory(s)[t].h).collect();
        let r: Vec<f64> = (0..n).map(|s| controlled.r_eff_series(s)[t - 1]).collect();
        let bed_stat = reduce(h.clone(), cfg.formulation, cfg.p_c_bed);
        let re_stat = reduce(r.clone(), cfg.formulation, cfg.p_c_rep);
        bed_violation += relative_excess(bed_stat, cfg.beds);
        re_violation += relative_excess(re_stat, cfg.r_e_c);
        worst_bed = max_margin(worst_bed, bed_stat, cfg.beds);
        worst_re = max_margin(worst_re, re_stat, cfg.r_e_c);
        days.push(DayMargin {
            day: controlled.start_day() + t as i64,
            bed_stat,
            bed_exceedance: crate::ensemble::exceedance(&h, cfg.beds),
            re_stat,
            re_exceedance: crate::ensemble::exceedance(&r, cfg.r_e_c),
        });
    }
    ConstraintReport {
        feasible: bounds_ok && rates_ok && bed_violation == 0.0 && re_violation == 0.0,
        bounds_ok,
        rates_ok,
        bed_violation,
        re_violation,
        worst_bed_margin: worst_bed,
        worst_re_margin: worst_re,
        days,
    }
}

/// Reduces one day's cross-section to the statistic compared against the cap.
///
/// For PMPC this is the smallest value `c` with `P[X > c] <= 1 - p_c` on the
/// sample, so `stat <= cap` is exactly the empirical chance constraint.
fn reduce(mut v: Vec<f64>, formulation: Formulation, p_c: f64) -> Option<f64> {
    match formulation {
        Formulation::Dmpc => Some(sorted_mean(v)),
        Formulation::Rmpc => v.into_iter().reduce(f64::max),
        Formulation::Pmpc => {
            let n = v.len();
            let allowed = ((n as f64) * (1.0 - p_c) + 1e-9).floor() as usize;
            let k = n.saturating_sub(allowed);
            if k == 0 {
                return None;
            }
            v.sort_by(f64::total_cmp);
            Some(v[k - 1])
        }
    }
}

fn relative_excess(stat: Option<f64>, cap: f64) -> f64 {
    match stat {
        Some(s) if s > cap => (s - cap) / cap,
        _ => 0.0,
    }
}

fn max_margin(acc: Option<f64>, stat: Option<f64>, cap: f64) -> Option<f64> {
    let m = stat.map(|s| s - cap).filter(|m| m.is_finite());
    match (acc, m) {
        (Some(a), Some(b)) => Some(a.max(b)),
        (a, b) => a.or(b),
    }
}

fn sorted_mean(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v.iter().sum::<f64>() / v.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CompartmentState;
    use crate::State;

    fn state(day: i64, h: f64) -> State {
        CompartmentState {
            day,
            h,
            ..CompartmentState::initial(1e7).unwrap()
        }
    }

    /// Two scenarios, two predicted days.
    fn fixture() -> (EnsembleResult, EnsembleResult) {
        let traj = |h: [f64; 3]| (0..3).map(|t| state(t as i64, h[t])).collect::<Vec<_>>();
        let controlled = EnsembleResult::from_parts(
            0,
            vec![traj([10.0, 20.0, 30.0]), traj([10.0, 40.0, 90.0])],
            vec![vec![1.2, 1.1], vec![1.4, 0.9]],
            vec![0.3, 0.3],
        );
        let uncontrolled = EnsembleResult::from_parts(
            0,
            vec![traj([10.0, 40.0, 60.0]), traj([10.0, 40.0, 60.0])],
            vec![vec![2.0, 2.0], vec![2.0, 2.0]],
            vec![0.0, 0.0],
        );
        (controlled, uncontrolled)
    }

    fn cfg(formulation: Formulation, objective: ObjectiveKind) -> MpcConfig {
        MpcConfig {
            tp: 2,
            tc: 1,
            ta: 1,
            omega_i: 3.0,
            omega_r: 2.0,
            omega_a: [1.0, 0.5, 0.0, 0.0, 0.0, 0.0],
            formulation,
            objective,
            ..MpcConfig::default()
        }
    }

    const ALPHA: [ActivityVector; 2] = [[0.2, 0.1, 0.0, 0.0, 0.0, 0.0], [0.2, 0.1, 0.0, 0.0, 0.0, 0.0]];

    #[test]
    fn hand_summed_values() {
        let (c, u) = fixture();
        let act_q = 2.0 * (0.04 + 0.5 * 0.01);
        let act_l = 2.0 * (0.2 + 0.5 * 0.1);
        // Ratios: s0 = [0.5, 0.5], s1 = [1.0, 1.5].
        let pmpc = 3.0 * ((0.25 + 1.0) / 2.0 + (0.25 + 2.25) / 2.0) + 2.0 * ((1.44 + 1.96) / 2.0 + (1.21 + 0.81) / 2.0) + act_q;
        let dmpc = 3.0 * (0.75f64.powi(2) + 1.0) + 2.0 * (1.3f64.powi(2) + 1.0) + act_q;
        let s0: f64 = 3.0 * (0.25 + 0.25) + 2.0 * (1.44 + 1.21);
        let s1 = 3.0 * (1.0 + 2.25) + 2.0 * (1.96 + 0.81);
        let rmpc = s0.max(s1) + act_q;
        let lin_p = 3.0 * (0.75 + 1.0) + 2.0 * (1.3 + 1.0) + act_l;
        let lin_e = 3.0 * (0.75 + 1.0) + 2.0 * (1.3 + 1.0) + act_l;
        for (f, k, want) in [
            (Formulation::Pmpc, ObjectiveKind::Quadratic, pmpc),
            (Formulation::Dmpc, ObjectiveKind::Quadratic, dmpc),
            (Formulation::Rmpc, ObjectiveKind::Quadratic, rmpc),
            (Formulation::Pmpc, ObjectiveKind::LinearP, lin_p),
            (Formulation::Pmpc, ObjectiveKind::LinearE, lin_e),
        ] {
            let got = objective(&ALPHA, &c, &u, &cfg(f, k)).unwrap();
            assert!((got - want).abs() < 1e-12, "{f:?} {k:?}: {got} vs {want}");
        }
    }

    #[test]
    fn activity_term_only() {
        let (c, u) = fixture();
        let a = [0.3, 0.1, 0.2, 0.5, 0.4, 0.7];
        let cfg = MpcConfig {
            omega_i: 0.0,
            omega_r: 0.0,
            omega_a: [1.0; 6],
            ..cfg(Formulation::Pmpc, ObjectiveKind::Quadratic)
        };
        let norm2: f64 = a.iter().map(|x| x * x).sum();
        let got = objective(&[a, a], &c, &u, &cfg).unwrap();
        assert!((got - 2.0 * norm2).abs() < 1e-12);
    }

    #[test]
    fn self_ratio_baseline() {
        let (_, u) = fixture();
        let cfg = MpcConfig {
            omega_r: 0.0,
            omega_a: [0.0; 6],
            ..cfg(Formulation::Pmpc, ObjectiveKind::Quadratic)
        };
        assert!((objective(&[[0.0; 6]; 2], &u, &u, &cfg).unwrap() - 3.0 * 2.0).abs() < 1e-12);
    }

    #[test]
    fn infinite_caps_are_always_feasible() {
        let (c, _) = fixture();
        for f in [Formulation::Pmpc, Formulation::Dmpc, Formulation::Rmpc] {
            let cfg = MpcConfig {
                beds: f64::INFINITY,
                r_e_c: f64::INFINITY,
                ..cfg(f, ObjectiveKind::Quadratic)
            };
            let rep = constraint_report(&[ALPHA[0]], &ALPHA, &c, &cfg);
            assert!(rep.feasible, "{f:?}");
            assert_eq!(rep.violation(), 0.0);
        }
    }

    #[test]
    fn statistics_per_formulation() {
        let (c, _) = fixture();
        let mut cf = cfg(Formulation::Rmpc, ObjectiveKind::Quadratic);
        cf.beds = 50.0;
        cf.r_e_c = 10.0;
        let rep = constraint_report(&[ALPHA[0]], &ALPHA, &c, &cf);
        assert_eq!(rep.days[1].bed_stat, Some(90.0));
        assert!(!rep.feasible);
        assert!((rep.bed_violation - 0.8).abs() < 1e-12);
        assert_eq!(rep.worst_bed_margin, Some(40.0));

        cf.formulation = Formulation::Dmpc;
        let rep = constraint_report(&[ALPHA[0]], &ALPHA, &c, &cf);
        assert_eq!(rep.days[1].bed_stat, Some(60.0));

        // Half the scenarios may exceed at p_c = 0.5.
        cf.formulation = Formulation::Pmpc;
        cf.p_c_bed = 0.5;
        let rep = constraint_report(&[ALPHA[0]], &ALPHA, &c, &cf);
        assert_eq!(rep.days[1].bed_stat, Some(30.0));
        assert_eq!(rep.days[1].bed_exceedance, 0.5);
        assert!(rep.feasible);
        cf.p_c_bed = 0.0;
        let rep = constraint_report(&[ALPHA[0]], &ALPHA, &c, &cf);
        assert_eq!(rep.days[1].bed_stat, None);
    }

    #[test]
    fn rate_violation_is_flagged() {
        let (c, _) = fixture();
        let cf = MpcConfig {
            beds: f64::INFINITY,
            r_e_c: f64::INFINITY,
            ..cfg(Formulation::Pmpc, ObjectiveKind::Quadratic)
        };
        let d = [[0.3, 0.0, 0.0, 0.0, 0.0, 0.0]];
        let rep = constraint_report(&d, &[d[0], d[0]], &c, &cf);
        assert!(!rep.rates_ok && rep.bounds_ok && !rep.feasible);
    }

    #[test]
    fn order_statistic_matches_exceedance() {
        let v: Vec<f64> = (0..200).map(|i| ((i * 37) % 200) as f64).collect();
        for p_c in [0.0, 0.1, 0.5, 0.9, 0.95, 1.0] {
            for cap in [-1.0, 10.0, 99.5, 180.0, 189.0, 199.0, 250.0] {
                let by_stat = reduce(v.clone(), Formulation::Pmpc, p_c).map_or(true, |s| s <= cap);
                let by_prob = crate::ensemble::exceedance(&v, cap) <= 1.0 - p_c + 1e-12;
                assert_eq!(by_stat, by_prob, "p_c={p_c} cap={cap}");
            }
        }
    }
}
