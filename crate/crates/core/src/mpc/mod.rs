//! Receding-horizon policy design over six activity curtails.
//!
//! Each window optimizes `Nd = Tc / Ta` incremental decisions `delta_alpha_j`
//! against an adherence ensemble, enacts the first one for `Ta` days and
//! re-plans. Probabilistic (chance-constrained), deterministic (expectation)
//! and robust (worst-case over the draw set) formulations share one code path
//! and differ only in how scenario outcomes are reduced.

mod controller;
mod objective;
mod policy;
mod solver;

use serde::{Deserialize, Serialize};

use crate::mobility::LOMBARDY_ALPHA_UPPER;
use crate::{ActivityVector, Error, Result};

pub use self::controller::{initial_state_at, receding_horizon, ClosedLoopResult, WindowRecord};
pub use self::objective::{constraint_report, objective, ConstraintReport, DayMargin};
pub use self::policy::{expand_policy, expand_policy_from, project_deltas, PolicyPlan};
pub use self::solver::{solve_window, SolverDiagnostics, StartSummary, TraceRow, WindowProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Formulation {
    /// Expectations in the objective, chance constraints.
    Pmpc,
    /// Squares of expectations, expectation constraints.
    Dmpc,
    /// Worst case over the scenario set.
    Rmpc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    Quadratic,
    /// Expectation of the hospital ratio, linear activity cost.
    #[serde(rename = "linear_P")]
    LinearP,
    /// Ratio of expectations, linear activity cost.
    #[serde(rename = "linear_E")]
    LinearE,
}

/// Direct-search settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Evaluation budget per start.
    pub max_evals: usize,
    /// Simplex diameter at which a start is declared converged.
    pub tol: f64,
    /// Seeded random starts added to the four corners and the center.
    pub random_starts: usize,
    /// Exact-penalty coefficient for bed and R_e violations, multiplied by the
    /// magnitude of the objective at the hold-policy start.
    pub penalty: f64,
    /// Initial simplex edge length.
    pub initial_step: f64,
    /// Record one trace row per simplex iteration.
    pub trace: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_evals: 2000,
            tol: 1e-4,
            random_starts: 3,
            penalty: 1e4,
            initial_step: 0.1,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MpcConfig {
    /// Prediction horizon (days).
    pub tp: usize,
    /// Control horizon (days).
    pub tc: usize,
    /// Action horizon (days).
    pub ta: usize,
    pub omega_i: f64,
    pub omega_r: f64,
    /// Diagonal of the activity cost matrix.
    pub omega_a: ActivityVector,
    pub alpha_upper: ActivityVector,
    /// Cap on each per-period increase; decreases are unconstrained.
    pub delta_alpha_c: ActivityVector,
    pub beds: f64,
    pub r_e_c: f64,
    pub p_c_bed: f64,
    pub p_c_rep: f64,
    pub n_cases: usize,
    pub formulation: Formulation,
    pub objective: ObjectiveKind,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for MpcConfig {
    fn default() -> Self {
        Self {
            tp: 21,
            tc: 14,
            ta: 7,
            omega_i: 10.0,
            omega_r: 10.0,
            omega_a: [0.2, 1.0, 0.5, 0.5, 1.0, 0.5],
            alpha_upper: LOMBARDY_ALPHA_UPPER,
            delta_alpha_c: [0.25, 0.25, 0.25, 0.25, 0.25, 1.0],
            beds: 13_000.0,
            r_e_c: 1.0,
            p_c_bed: 0.9,
            p_c_rep: 0.9,
            n_cases: 200,
            formulation: Formulation::Pmpc,
            objective: ObjectiveKind::Quadratic,
            seed: 2020,
            solver: SolverOptions::default(),
        }
    }
}

impl MpcConfig {
    /// Number of decisions per window.
    pub fn nd(&self) -> usize {
        if self.ta == 0 {
            0
        } else {
            self.tc / self.ta
        }
    }

    /// Every violated invariant, not just the first.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.ta == 0 {
            out.push("Ta must be positive".to_string());
        } else if self.tc % self.ta != 0 {
            out.push(format!("Ta={} must divide Tc={}", self.ta, self.tc));
        }
        if self.tc == 0 {
            out.push("Tc must be positive".to_string());
        }
        if self.tc > self.tp {
            out.push(format!("Tc={} must not exceed Tp={}", self.tc, self.tp));
        }
        for (name, v) in [("alpha_upper", &self.alpha_upper), ("delta_alpha_c", &self.delta_alpha_c)] {
            if v.iter().any(|x| !(0.0..=1.0).contains(x)) {
                out.push(format!("{name} entries must lie in [0, 1]"));
            }
        }
        if self.omega_a.iter().any(|x| !(*x >= 0.0)) {
            out.push("omega_a entries must be non-negative".to_string());
        }
        if !(self.omega_i >= 0.0 && self.omega_r >= 0.0) {
            out.push("omega_i and omega_r must be non-negative".to_string());
        }
        for (name, v) in [("p_c_bed", self.p_c_bed), ("p_c_rep", self.p_c_rep)] {
            if !(0.0..=1.0).contains(&v) {
                out.push(format!("{name}={v} must lie in [0, 1]"));
            }
        }
        if !(self.beds > 0.0) {
            out.push("beds must be positive".to_string());
        }
        if !(self.r_e_c > 0.0) {
            out.push("r_e_c must be positive".to_string());
        }
        if self.n_cases == 0 {
            out.push("n_cases must be at least 1".to_string());
        }
        if self.solver.max_evals == 0 || !(self.solver.tol > 0.0) || !(self.solver.initial_step > 0.0) {
            out.push("solver needs max_evals > 0, tol > 0 and initial_step > 0".to_string());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.problems();
        if p.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidMpcConfig(p.join("; ")))
        }
    }
}
