//! Google Community Mobility Reports: ingestion, residential regression,
//! aggregate social-distancing signal and adherence noise.
//!
//! Two sign conventions meet here. Google reports signed deviations from
//! baseline (`-0.91` = 91% fewer visits). Policies are written as restriction
//! levels `alpha` in [0, 1] (`0.91` = 91% curtailed). For the five
//! visit-based activities `alpha = -deviation`; the school/university series is
//! already a closure fraction.

mod adherence;
mod csv;
mod regression;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ActivityVector;

pub use self::adherence::{sample_adherence, AdherenceDraws, AdherenceMode, AdherenceModel};
pub use self::csv::{parse_mobility_csv, parse_mobility_csv_with, ParseOptions};
pub use self::regression::{fit_residential_regression, RegressionFit, COEFFICIENT_NAMES};

/// Weights of RR, G, P, T, W, SU and R in the aggregate curtail.
pub const U_WEIGHTS: [f64; 7] = [0.2, 0.05, 0.05, 0.05, 0.25, 0.2, 0.2];

/// Published residential-regression slopes for Lombardy (RR, G, P, T, W, SU),
/// fitted on Feb 15 - May 4 2020; the intercept is omitted.
pub const LOMBARDY_RESIDENTIAL_SLOPES: ActivityVector =
    [0.0809, 0.1296, -0.0495, 0.0655, -0.6634, -0.0223];

/// Composed control-map weights published alongside those slopes.
pub const LOMBARDY_POLICY_WEIGHTS: ActivityVector = [0.216, 0.076, 0.04, 0.063, 0.117, 0.196];

/// Maximum expected curtail per activity during the strict lockdown; also the
/// default policy upper bounds.
pub const LOMBARDY_ALPHA_UPPER: ActivityVector = [0.91, 0.59, 0.85, 0.87, 0.75, 1.0];

/// Standard deviation of the aggregate curtail attributed to adherence.
pub const LOMBARDY_SIGMA_U: f64 = 0.0282;

/// Per-activity standard deviations of the strict-lockdown curtail (fractions).
pub const LOMBARDY_ACTIVITY_SIGMA: ActivityVector = [0.065, 0.11, 0.233, 0.064, 0.113, 0.0];

pub const ACTIVITY_LABELS: [&str; 6] = ["RR", "G", "P", "T", "W", "SU"];

/// Daily mobility deviations for one region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivitySeries {
    pub dates: Vec<NaiveDate>,
    pub rr: Vec<f64>,
    pub g: Vec<f64>,
    pub p: Vec<f64>,
    pub t: Vec<f64>,
    pub w: Vec<f64>,
    pub r: Vec<f64>,
    /// Synthesized school/university closure fraction.
    pub su: Vec<f64>,
}

impl ActivitySeries {
    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn index_of(&self, date: NaiveDate) -> Option<usize> {
        self.dates.binary_search(&date).ok()
    }

    /// Rows with `start <= date <= end`.
    pub fn window(&self, start: NaiveDate, end: NaiveDate) -> ActivitySeries {
        let lo = self.dates.partition_point(|d| *d < start);
        let hi = self.dates.partition_point(|d| *d <= end);
        let take = |v: &Vec<f64>| v[lo..hi].to_vec();
        ActivitySeries {
            dates: self.dates[lo..hi].to_vec(),
            rr: take(&self.rr),
            g: take(&self.g),
            p: take(&self.p),
            t: take(&self.t),
            w: take(&self.w),
            r: take(&self.r),
            su: take(&self.su),
        }
    }

    /// Google deviations of the six regressors (RR, G, P, T, W, SU) on row `i`.
    pub fn regressors(&self, i: usize) -> ActivityVector {
        [self.rr[i], self.g[i], self.p[i], self.t[i], self.w[i], self.su[i]]
    }

    /// Restriction levels `alpha` on row `i`.
    pub fn alpha(&self, i: usize) -> ActivityVector {
        [-self.rr[i], -self.g[i], -self.p[i], -self.t[i], -self.w[i], self.su[i]]
    }

    /// Observed restriction levels on `days` consecutive dates from `start`.
    /// Entry `k` drives the transition leaving `start + k`.
    pub fn observed_policy(&self, start: NaiveDate, days: usize) -> crate::Result<Vec<ActivityVector>> {
        (0..days)
            .map(|k| {
                let date = start + chrono::Days::new(k as u64);
                self.index_of(date)
                    .map(|i| self.alpha(i))
                    .ok_or_else(|| crate::Error::MalformedCsv(format!("no row for {date}")))
            })
            .collect()
    }

    /// Writes `date,RR,G,P,T,W,SU,R` rows in fraction units.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> crate::Result<()> {
        let mut wr = ::csv::Writer::from_writer(out);
        let map = |e: ::csv::Error| crate::Error::Io(std::io::Error::other(e));
        wr.write_record(["date", "RR", "G", "P", "T", "W", "SU", "R"]).map_err(map)?;
        for i in 0..self.len() {
            let vals = [self.rr[i], self.g[i], self.p[i], self.t[i], self.w[i], self.su[i], self.r[i]];
            let mut rec = vec![self.dates[i].to_string()];
            rec.extend(vals.iter().map(|v| v.to_string()));
            wr.write_record(&rec).map_err(map)?;
        }
        wr.flush()?;
        Ok(())
    }
}

/// Aggregate curtail from RR, G, P, T, W, SU, R restriction levels.
pub fn aggregate_u(activities: &[f64; 7]) -> f64 {
    activities.iter().zip(U_WEIGHTS).map(|(a, w)| a * w).sum()
}

/// Residential level implied by the regression slopes, intercept dropped.
pub fn predicted_residential(slopes: &ActivityVector, alpha: &ActivityVector) -> f64 {
    dot(slopes, alpha)
}

/// Folds the residential regression into the aggregate-curtail weights:
/// `weight_k = w_k + w_R * c_k`.
pub fn compose_weights_from_slopes(slopes: &ActivityVector) -> ActivityVector {
    std::array::from_fn(|k| U_WEIGHTS[k] + U_WEIGHTS[6] * slopes[k])
}

pub fn compose_policy_weights(fit: &RegressionFit) -> ActivityVector {
    compose_weights_from_slopes(&fit.slopes())
}

/// Aggregate curtail of a policy under composed weights.
pub fn policy_u(weights: &ActivityVector, alpha: &ActivityVector) -> f64 {
    dot(weights, alpha)
}

pub(crate) fn dot(a: &ActivityVector, b: &ActivityVector) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Mean and sample standard deviation of one activity over a window, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityStat {
    pub activity: String,
    pub mean_percent: f64,
    pub std_percent: f64,
}

/// Per-activity statistics (RR, G, P, T, W, R) of the Google deviations over `start..=end`.
pub fn restriction_stats(series: &ActivitySeries, start: NaiveDate, end: NaiveDate) -> Vec<ActivityStat> {
    let win = series.window(start, end);
    let columns = [
        ("RR", &win.rr),
        ("G", &win.g),
        ("P", &win.p),
        ("T", &win.t),
        ("W", &win.w),
        ("R", &win.r),
    ];
    columns
        .into_iter()
        .map(|(name, v)| {
            let n = v.len() as f64;
            let mean = v.iter().sum::<f64>() / n;
            let var = if v.len() > 1 {
                v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
            } else {
                0.0
            };
            ActivityStat {
                activity: name.to_string(),
                mean_percent: 100.0 * mean,
                std_percent: 100.0 * var.sqrt(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_u_examples() {
        assert_eq!(aggregate_u(&[0.0; 7]), 0.0);
        assert!((aggregate_u(&[1.0; 7]) - 1.0).abs() < 1e-15);
        assert_eq!(aggregate_u(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), 0.2);
    }

    #[test]
    fn published_slopes_give_published_weights() {
        let w = compose_weights_from_slopes(&LOMBARDY_RESIDENTIAL_SLOPES);
        for k in 0..6 {
            assert!((w[k] - LOMBARDY_POLICY_WEIGHTS[k]).abs() < 1.5e-3, "k={k}: {}", w[k]);
        }
        assert!((w[0] - (0.2 + 0.2 * 0.0809)).abs() < 1e-15);
    }

    #[test]
    fn zero_slopes_give_raw_weights() {
        let w = compose_weights_from_slopes(&[0.0; 6]);
        assert_eq!(w, [0.2, 0.05, 0.05, 0.05, 0.25, 0.2]);
        let mut c = [0.0; 6];
        c[4] = -1.0;
        let w = compose_weights_from_slopes(&c);
        assert!((w[4] - 0.05).abs() < 1e-15);
    }

    #[test]
    fn observed_policy_negates_visit_deviations() {
        let d0 = NaiveDate::from_ymd_opt(2020, 3, 3).unwrap();
        let series = ActivitySeries {
            dates: vec![d0, d0.succ_opt().unwrap()],
            rr: vec![-0.5, -0.6],
            g: vec![0.1, 0.0],
            p: vec![0.0; 2],
            t: vec![0.0; 2],
            w: vec![0.0; 2],
            r: vec![0.2, 0.3],
            su: vec![0.0, 1.0],
        };
        let pol = series.observed_policy(d0, 2).unwrap();
        assert_eq!(pol, vec![[0.5, -0.1, 0.0, 0.0, 0.0, 0.0], [0.6, 0.0, 0.0, 0.0, 0.0, 1.0]]);
        assert!(matches!(series.observed_policy(d0, 3), Err(crate::Error::MalformedCsv(_))));
    }

    #[test]
    fn maximum_lockdown_curtail_is_about_sixty_percent() {
        let u = policy_u(&LOMBARDY_POLICY_WEIGHTS, &LOMBARDY_ALPHA_UPPER);
        assert!((u - 0.614).abs() < 1e-3, "{u}");
    }
}
