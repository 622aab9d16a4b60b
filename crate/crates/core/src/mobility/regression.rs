use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::ActivitySeries;
use crate::{ActivityVector, Error, Result};

const P: usize = 7;

/// Relative pivot size below which the normal equations are declared singular.
const PIVOT_TOL: f64 = 1e-10;

pub const COEFFICIENT_NAMES: [&str; P] = ["c0", "c1_RR", "c2_G", "c3_P", "c4_T", "c5_W", "c6_SU"];

/// OLS fit of residential deviation on an intercept and RR, G, P, T, W, SU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub se: Vec<f64>,
    pub t_stat: Vec<f64>,
    pub p_value: Vec<f64>,
    pub ci95_low: Vec<f64>,
    pub ci95_high: Vec<f64>,
    /// Square root of the unbiased residual variance, `sqrt(SSE / (n - 7))`.
    pub rmse: f64,
    pub r2: f64,
    pub r2_adj: f64,
    pub n_obs: usize,
    pub dof: usize,
    pub t_crit: f64,
}

impl RegressionFit {
    /// The six slopes, intercept dropped.
    pub fn slopes(&self) -> ActivityVector {
        std::array::from_fn(|k| self.coefficients[k + 1])
    }
}

pub fn fit_residential_regression(series: &ActivitySeries) -> Result<RegressionFit> {
    let n = series.len();
    if n < P + 1 {
        return Err(Error::InsufficientObservations { got: n, needed: P + 1 });
    }
    let rows: Vec<[f64; P]> = (0..n)
        .map(|i| {
            let x = series.regressors(i);
            [1.0, x[0], x[1], x[2], x[3], x[4], x[5]]
        })
        .collect();
    let y = &series.r;

    let mut xtx = [[0.0; P]; P];
    let mut xty = [0.0; P];
    for (row, &yi) in rows.iter().zip(y) {
        for a in 0..P {
            xty[a] += row[a] * yi;
            for b in 0..P {
                xtx[a][b] += row[a] * row[b];
            }
        }
    }
    let inv = invert(xtx)?;
    let coef: [f64; P] = std::array::from_fn(|a| (0..P).map(|b| inv[a][b] * xty[b]).sum());

    let sse: f64 = rows
        .iter()
        .zip(y)
        .map(|(row, &yi)| {
            let fit: f64 = row.iter().zip(&coef).map(|(x, c)| x * c).sum();
            (yi - fit).powi(2)
        })
        .sum();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let dof = n - P;
    let sigma2 = sse / dof as f64;
    let r2 = if sst > 0.0 { 1.0 - sse / sst } else { 1.0 };
    let r2_adj = 1.0 - (1.0 - r2) * (n - 1) as f64 / dof as f64;

    let t_dist = StudentsT::new(0.0, 1.0, dof as f64).expect("positive degrees of freedom");
    let t_crit = t_dist.inverse_cdf(0.975);
    let se: Vec<f64> = (0..P).map(|a| (sigma2 * inv[a][a]).max(0.0).sqrt()).collect();
    let t_stat: Vec<f64> = coef
        .iter()
        .zip(&se)
        .map(|(c, s)| if *s > 0.0 { c / s } else { f64::INFINITY.copysign(*c) })
        .collect();
    let p_value = t_stat
        .iter()
        .map(|t| {
            if t.is_finite() {
                (2.0 * t_dist.cdf(-t.abs())).min(1.0)
            } else {
                0.0
            }
        })
        .collect();

    Ok(RegressionFit {
        names: COEFFICIENT_NAMES.iter().map(|s| s.to_string()).collect(),
        coefficients: coef.to_vec(),
        ci95_low: coef.iter().zip(&se).map(|(c, s)| c - t_crit * s).collect(),
        ci95_high: coef.iter().zip(&se).map(|(c, s)| c + t_crit * s).collect(),
        se,
        t_stat,
        p_value,
        rmse: sigma2.sqrt(),
        r2,
        r2_adj,
        n_obs: n,
        dof,
        t_crit,
    })
}

/// Gauss-Jordan inversion with partial pivoting.
fn invert(mut a: [[f64; P]; P]) -> Result<[[f64; P]; P]> {
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut inv = [[0.0; P]; P];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..P {
        let pivot_row = (col..P)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .expect("non-empty range");
        let pivot = a[pivot_row][col];
        if !(pivot.abs() > PIVOT_TOL * scale) {
            return Err(Error::RankDeficient { column: col, pivot });
        }
        a.swap(col, pivot_row);
        inv.swap(col, pivot_row);
        for k in 0..P {
            a[col][k] /= pivot;
            inv[col][k] /= pivot;
        }
        for r in 0..P {
            if r != col {
                let f = a[r][col];
                if f != 0.0 {
                    for k in 0..P {
                        a[r][k] -= f * a[col][k];
                        inv[r][k] -= f * inv[col][k];
                    }
                }
            }
        }
    }
    Ok(inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Days, NaiveDate};

    fn synthetic(n: usize, coef: [f64; P], noise: impl Fn(usize) -> f64) -> ActivitySeries {
        let d0 = NaiveDate::from_ymd_opt(2020, 2, 15).unwrap();
        let mut s = ActivitySeries {
            dates: vec![],
            rr: vec![],
            g: vec![],
            p: vec![],
            t: vec![],
            w: vec![],
            r: vec![],
            su: vec![],
        };
        for i in 0..n {
            let x = i as f64;
            let reg = [
                -(x * 0.37).sin().abs(),
                -(x * 0.11).cos() * 0.4,
                (x * 0.23).sin() * 0.6,
                -(x / n as f64),
                -(x * 0.05).sin().powi(2),
                if i > n / 3 { 1.0 } else { 0.0 },
            ];
            s.dates.push(d0 + Days::new(i as u64));
            s.rr.push(reg[0]);
            s.g.push(reg[1]);
            s.p.push(reg[2]);
            s.t.push(reg[3]);
            s.w.push(reg[4]);
            s.su.push(reg[5]);
            let y = coef[0] + (0..6).map(|k| coef[k + 1] * reg[k]).sum::<f64>() + noise(i);
            s.r.push(y);
        }
        s
    }

    #[test]
    fn noiseless_data_is_recovered_exactly() {
        let coef = [-0.002, 0.0809, 0.1296, -0.0495, 0.0655, -0.6634, -0.0223];
        let fit = fit_residential_regression(&synthetic(80, coef, |_| 0.0)).unwrap();
        for k in 0..P {
            assert!((fit.coefficients[k] - coef[k]).abs() < 1e-10, "k={k}");
        }
        assert!((fit.r2 - 1.0).abs() < 1e-12);
        assert!(fit.rmse < 1e-10);
    }

    #[test]
    fn statistics_are_consistent() {
        let coef = [0.01, 0.1, 0.2, -0.05, 0.07, -0.6, -0.02];
        let fit = fit_residential_regression(&synthetic(80, coef, |i| 0.02 * ((i * 7919) % 13) as f64 / 13.0 - 0.01))
            .unwrap();
        assert_eq!(fit.dof, 73);
        assert!(fit.r2_adj <= fit.r2);
        for k in 0..P {
            assert!((0.0..=1.0).contains(&fit.p_value[k]));
            let half = fit.t_crit * fit.se[k];
            assert!((fit.ci95_high[k] - fit.coefficients[k] - half).abs() < 1e-14);
            assert!((fit.coefficients[k] - fit.ci95_low[k] - half).abs() < 1e-14);
        }
        // t quantile for 73 degrees of freedom
        assert!((fit.t_crit - 1.992_997).abs() < 1e-5, "{}", fit.t_crit);
    }

    #[test]
    fn larger_t_gives_smaller_p() {
        let t = StudentsT::new(0.0, 1.0, 73.0).unwrap();
        let p = |x: f64| 2.0 * t.cdf(-x);
        assert!(p(3.0) < p(2.0));
        // Published: t = -19.3091 on 73 dof gives p = 2.1021e-30.
        let tiny = p(19.3091);
        assert!((tiny / 2.1021e-30 - 1.0).abs() < 0.01, "{tiny:e}");
        assert!((p(2.1962) - 0.0312).abs() < 1e-4);
    }

    #[test]
    fn duplicated_constant_column_is_rank_deficient() {
        let mut s = synthetic(30, [0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0], |_| 0.0);
        s.su = vec![1.0; 30];
        assert!(matches!(
            fit_residential_regression(&s),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn too_few_rows() {
        let s = synthetic(5, [0.0; P], |_| 0.0);
        assert!(matches!(
            fit_residential_regression(&s),
            Err(Error::InsufficientObservations { got: 5, needed: 8 })
        ));
    }
}
