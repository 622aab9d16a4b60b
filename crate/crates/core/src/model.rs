//! Discrete-time SEASQHRD compartment dynamics.

use serde::{Deserialize, Serialize};

use crate::schedule::EpiParamSchedule;
use crate::{Error, Result, Scalar};

/// Populations of the ten compartments on one day, counted from DAY-ZERO.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompartmentState<T> {
    pub day: i64,
    pub s: T,
    pub e: T,
    pub i_a: T,
    pub i_s: T,
    pub h: T,
    pub q: T,
    pub r_a: T,
    pub r_h: T,
    pub r_q: T,
    pub d: T,
}

/// Compartment selector, in the canonical S, E, I_A, I_S, H, Q, R_A, R_H, R_Q, D order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compartment {
    S,
    E,
    IA,
    IS,
    H,
    Q,
    RA,
    RH,
    RQ,
    D,
}

impl Compartment {
    pub const ALL: [Compartment; 10] = [
        Compartment::S,
        Compartment::E,
        Compartment::IA,
        Compartment::IS,
        Compartment::H,
        Compartment::Q,
        Compartment::RA,
        Compartment::RH,
        Compartment::RQ,
        Compartment::D,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Compartment::S => "S",
            Compartment::E => "E",
            Compartment::IA => "I_A",
            Compartment::IS => "I_S",
            Compartment::H => "H",
            Compartment::Q => "Q",
            Compartment::RA => "R_A",
            Compartment::RH => "R_H",
            Compartment::RQ => "R_Q",
            Compartment::D => "D",
        }
    }
}

impl<T: Scalar> CompartmentState<T> {
    /// One asymptomatic case in an otherwise fully susceptible population.
    pub fn initial(population: T) -> Result<Self> {
        if !(population >= T::lit(2.0)) {
            return Err(Error::InvalidPopulation(population.to_f64_lossy()));
        }
        Ok(Self {
            day: 0,
            s: population - T::one(),
            i_a: T::one(),
            ..Self::zeroed()
        })
    }

    fn zeroed() -> Self {
        Self {
            day: 0,
            s: T::zero(),
            e: T::zero(),
            i_a: T::zero(),
            i_s: T::zero(),
            h: T::zero(),
            q: T::zero(),
            r_a: T::zero(),
            r_h: T::zero(),
            r_q: T::zero(),
            d: T::zero(),
        }
    }

    pub fn get(&self, c: Compartment) -> T {
        match c {
            Compartment::S => self.s,
            Compartment::E => self.e,
            Compartment::IA => self.i_a,
            Compartment::IS => self.i_s,
            Compartment::H => self.h,
            Compartment::Q => self.q,
            Compartment::RA => self.r_a,
            Compartment::RH => self.r_h,
            Compartment::RQ => self.r_q,
            Compartment::D => self.d,
        }
    }

    pub fn to_array(&self) -> [T; 10] {
        Compartment::ALL.map(|c| self.get(c))
    }

    pub fn from_array(day: i64, v: [T; 10]) -> Self {
        Self {
            day,
            s: v[0],
            e: v[1],
            i_a: v[2],
            i_s: v[3],
            h: v[4],
            q: v[5],
            r_a: v[6],
            r_h: v[7],
            r_q: v[8],
            d: v[9],
        }
    }

    pub fn total(&self) -> T {
        self.to_array().into_iter().fold(T::zero(), |acc, v| acc + v)
    }

    /// Population that still mixes: N - D - Q - H.
    pub fn mixing_population(&self, population: T) -> T {
        population - self.d - self.q - self.h
    }

    /// Confirmed cases as reported (hospitalized plus home-quarantined).
    pub fn reported_infected(&self) -> T {
        self.h + self.q
    }
}

/// Epidemiological constants in force over one period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpiParams<T> {
    pub beta0: T,
    pub sigma: T,
    pub h: T,
    pub delta_a: T,
    pub delta_h: T,
    pub delta_q: T,
    pub gamma: T,
    pub f1: T,
    pub f2: T,
    pub epsilon: T,
    pub population: T,
}

impl<T: Scalar> EpiParams<T> {
    /// Lombardy values in force until March 8, 2020.
    pub fn lombardy_early() -> Self {
        Self {
            beta0: T::lit(0.68),
            sigma: T::lit(1.0 / 3.0),
            h: T::lit(1.0 / 7.0),
            delta_a: T::lit(1.0 / 6.6),
            delta_h: T::lit(1.0 / 24.0),
            delta_q: T::lit(1.0 / 14.0),
            gamma: T::lit(1.0 / 5.0),
            f1: T::lit(0.65),
            f2: T::lit(0.27),
            epsilon: T::lit(0.12),
            population: T::lit(10_000_000.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        let rate_ok = |v: T| v > T::zero() && v <= T::one();
        let frac_ok = |v: T| v >= T::zero() && v <= T::one();
        if !(self.beta0 >= T::zero() && self.beta0.is_finite()) {
            problems.push(format!("beta0={} must be finite and >= 0", self.beta0));
        }
        for (name, v) in [
            ("sigma", self.sigma),
            ("h", self.h),
            ("delta_a", self.delta_a),
            ("delta_h", self.delta_h),
            ("delta_q", self.delta_q),
            ("gamma", self.gamma),
        ] {
            if !rate_ok(v) {
                problems.push(format!("{name}={v} must lie in (0, 1]"));
            }
        }
        for (name, v) in [("f1", self.f1), ("f2", self.f2), ("epsilon", self.epsilon)] {
            if !frac_ok(v) {
                problems.push(format!("{name}={v} must lie in [0, 1]"));
            }
        }
        if !(self.population > T::zero()) {
            problems.push(format!("population={} must be positive", self.population));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(problems.join("; ")))
        }
    }
}

/// Per-day social-distancing input to the transmission rate.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ControlInput<T> {
    /// Aggregate curtail in [0, 1].
    pub u: T,
    /// Signed adherence deviation.
    pub theta_a: T,
    /// Voluntary caution in [0, 1).
    pub theta_c: T,
}

impl<T: Scalar> ControlInput<T> {
    pub fn new(u: T, theta_a: T, theta_c: T) -> Self {
        Self { u, theta_a, theta_c }
    }

    /// Mobility factor `1 - u + theta_a`, clamped to [0, 1].
    pub fn mobility_factor(&self) -> T {
        (T::one() - self.u + self.theta_a).max(T::zero()).min(T::one())
    }
}

/// `beta0 * (1 - theta_c) * clamp(1 - u + theta_a, 0, 1)`.
pub fn effective_beta<T: Scalar>(params: &EpiParams<T>, ctl: &ControlInput<T>) -> T {
    params.beta0 * (T::one() - ctl.theta_c) * ctl.mobility_factor()
}

/// Advances `state` by one day under transmission rate `beta`.
///
/// The new-infection flux divides by the previous day's `N - D - Q - H`, so
/// the update is explicit.
pub fn step<T: Scalar>(
    state: &CompartmentState<T>,
    params: &EpiParams<T>,
    beta: T,
) -> Result<CompartmentState<T>> {
    let p = params;
    let x = state;
    let denom = x.mixing_population(p.population);
    if !(denom > T::zero()) {
        return Err(Error::DenominatorNonpositive {
            day: x.day + 1,
            value: denom.to_f64_lossy(),
        });
    }
    let one = T::one();

    let infections = beta * (x.i_a + x.i_s) * x.s / denom;
    let incubated = p.sigma * x.e;
    let recovered_a = p.delta_a * x.i_a;
    let onset = p.h * x.i_s;
    let deaths = p.f2 * p.gamma * x.h;
    let discharged = (one - p.f2) * p.delta_h * x.h;
    let recovered_q = p.delta_q * x.q;

    Ok(CompartmentState {
        day: x.day + 1,
        s: x.s - infections,
        e: x.e + infections - incubated,
        i_a: x.i_a + (one - p.epsilon) * incubated - recovered_a,
        i_s: x.i_s + p.epsilon * incubated - onset,
        h: x.h + p.f1 * onset - deaths - discharged,
        q: x.q + (one - p.f1) * onset - recovered_q,
        r_a: x.r_a + recovered_a,
        r_h: x.r_h + discharged,
        r_q: x.r_q + recovered_q,
        d: x.d + deaths,
    })
}

/// `S(0) = N - 1`, `I_A(0) = 1`, everything else empty.
pub fn initial_state<T: Scalar>(population: T) -> Result<CompartmentState<T>> {
    CompartmentState::initial(population)
}

/// Runs `days` transitions from `init`.
///
/// Transition `k` (0-based) produces day `init.day + k + 1`, using that day's
/// parameters from `schedule` and `control[k]`.
pub fn simulate<T: Scalar>(
    init: &CompartmentState<T>,
    schedule: &EpiParamSchedule<T>,
    control: &[ControlInput<T>],
    days: usize,
) -> Result<Vec<CompartmentState<T>>> {
    if control.len() < days {
        return Err(Error::ControlTooShort {
            got: control.len(),
            needed: days,
        });
    }
    let mut traj = Vec::with_capacity(days + 1);
    traj.push(*init);
    let mut x = *init;
    for ctl in &control[..days] {
        let day = x.day + 1;
        let params = schedule.params_on_day(day)?;
        let beta = effective_beta(params, ctl);
        x = step(&x, params, beta).map_err(|e| e.at_day(day))?;
        traj.push(x);
    }
    Ok(traj)
}
