use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{dot, LOMBARDY_ACTIVITY_SIGMA, LOMBARDY_SIGMA_U};
use crate::ActivityVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AdherenceMode {
    /// One normal draw of the aggregate curtail deviation.
    Aggregate,
    /// Independent per-activity deviations folded through the policy weights.
    PerActivity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdherenceModel {
    pub mode: AdherenceMode,
    pub sigma_u: f64,
    pub per_activity_sigma: ActivityVector,
    /// Redraw every day instead of once per scenario.
    pub per_day: bool,
}

impl Default for AdherenceModel {
    fn default() -> Self {
        Self {
            mode: AdherenceMode::Aggregate,
            sigma_u: LOMBARDY_SIGMA_U,
            per_activity_sigma: LOMBARDY_ACTIVITY_SIGMA,
            per_day: false,
        }
    }
}

impl AdherenceModel {
    pub fn aggregate(sigma_u: f64) -> Self {
        Self {
            sigma_u,
            ..Self::default()
        }
    }
}

/// Adherence deviation `theta_a` per scenario, either constant or one value per day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdherenceDraws {
    paths: Vec<Vec<f64>>,
}

impl AdherenceDraws {
    /// One constant deviation per scenario.
    pub fn constant(theta: Vec<f64>) -> Self {
        Self {
            paths: theta.into_iter().map(|t| vec![t]).collect(),
        }
    }

    pub fn per_day(paths: Vec<Vec<f64>>) -> Self {
        assert!(paths.iter().all(|p| !p.is_empty()), "empty adherence path");
        Self { paths }
    }

    /// `n` scenarios with perfect adherence.
    pub fn zeros(n: usize) -> Self {
        Self::constant(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    /// Deviation of `scenario` on episode day `index` (0-based). Paths shorter
    /// than the episode hold their last value.
    pub fn at(&self, scenario: usize, index: usize) -> f64 {
        let p = &self.paths[scenario];
        p[index.min(p.len() - 1)]
    }

    pub fn path(&self, scenario: usize) -> &[f64] {
        &self.paths[scenario]
    }

    /// Draw set restricted to the given scenarios, in that order.
    pub fn select(&self, order: &[usize]) -> Self {
        Self {
            paths: order.iter().map(|&i| self.paths[i].clone()).collect(),
        }
    }
}

/// Samples `n` adherence scenarios over `days` days, deterministically from `seed`.
///
/// `weights` are the composed policy weights; they map per-activity deviations
/// to an aggregate deviation.
pub fn sample_adherence(
    model: &AdherenceModel,
    weights: &ActivityVector,
    seed: u64,
    n: usize,
    days: usize,
) -> AdherenceDraws {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = |sd: f64| Normal::new(0.0, sd.max(0.0)).expect("finite standard deviation");
    let aggregate = normal(model.sigma_u);
    let activity: Vec<Normal<f64>> = model.per_activity_sigma.iter().map(|&s| normal(s)).collect();
    let per_scenario = if model.per_day { days.max(1) } else { 1 };

    let draw = |rng: &mut ChaCha8Rng| match model.mode {
        AdherenceMode::Aggregate => aggregate.sample(rng),
        AdherenceMode::PerActivity => {
            let dev: ActivityVector = std::array::from_fn(|k| activity[k].sample(rng));
            dot(weights, &dev)
        }
    };
    let paths = (0..n)
        .map(|_| (0..per_scenario).map(|_| draw(&mut rng)).collect())
        .collect();
    AdherenceDraws { paths }
}
