//! Run configuration: one TOML (or JSON) document per experiment.
//!
//! Every field has a default taken from the Lombardy first-wave setup, so a
//! fixture only spells out what it changes. Relative paths resolve against
//! the directory holding the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use epicontrol_core::mobility::{AdherenceModel, LOMBARDY_POLICY_WEIGHTS};
use epicontrol_core::model::EpiParams;
use epicontrol_core::mpc::MpcConfig;
use epicontrol_core::schedule::{day_offset, CautionSegment, EpiParamSchedule, ParamSegment};
use epicontrol_core::{ActivityVector, Schedule};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    SimulateHistorical,
    FitMobility,
    StabilityReport,
    MpcClosedLoop,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::SimulateHistorical => "simulate-historical",
            Mode::FitMobility => "fit-mobility",
            Mode::StabilityReport => "stability-report",
            Mode::MpcClosedLoop => "mpc-closed-loop",
        })
    }
}

fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid literal date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Optional; when present it must match the subcommand.
    pub mode: Option<Mode>,
    pub region: String,
    pub seed: u64,
    pub paths: Paths,
    pub period: Period,
    pub schedule: ScheduleConfig,
    pub ensemble: EnsembleConfig,
    /// Composed control-map weights for RR, G, P, T, W, SU.
    pub policy_weights: ActivityVector,
    pub regression: RegressionConfig,
    pub stability: StabilityConfig,
    pub mpc: MpcConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: None,
            region: "Lombardy".into(),
            seed: 2020,
            paths: Paths::default(),
            period: Period::default(),
            schedule: ScheduleConfig::default(),
            ensemble: EnsembleConfig::default(),
            policy_weights: LOMBARDY_POLICY_WEIGHTS,
            regression: RegressionConfig::default(),
            stability: StabilityConfig::default(),
            mpc: MpcConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub mobility_csv: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            mobility_csv: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Simulated episode, both ends inclusive of the state reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Period {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Default for Period {
    fn default() -> Self {
        Self {
            start: ymd(2020, 2, 24),
            end: ymd(2020, 5, 4),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulePreset {
    Lombardy,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentConfig {
    pub from: NaiveDate,
    pub to: NaiveDate,
    pub params: EpiParams<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleConfig {
    pub preset: SchedulePreset,
    /// Last day covered; MPC runs need `period.end + Tp`.
    pub span_end: NaiveDate,
    /// Date caution switches on. Defaults to March 8 for historical runs and
    /// to the episode start for the controller.
    pub caution_from: Option<NaiveDate>,
    /// Custom preset only.
    pub day_zero: NaiveDate,
    /// Custom preset only.
    pub caution_level: f64,
    /// Custom preset only: contiguous parameter periods from `day_zero`.
    pub segments: Vec<SegmentConfig>,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            preset: SchedulePreset::Lombardy,
            span_end: ymd(2020, 5, 31),
            caution_from: None,
            day_zero: ymd(2020, 1, 15),
            caution_level: 0.2,
            segments: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Scenario count for historical runs; the controller uses `mpc.n_cases`.
    pub n_scenarios: usize,
    pub adherence: AdherenceModel,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_scenarios: 200,
            adherence: AdherenceModel::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegressionConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
    /// Window of the per-activity restriction statistics; defaults to the
    /// strict-lockdown period.
    pub stats_start: NaiveDate,
    pub stats_end: NaiveDate,
    /// First day of school and university closure.
    pub school_closure: NaiveDate,
}

impl Default for RegressionConfig {
    fn default() -> Self {
        Self {
            start: ymd(2020, 2, 15),
            end: ymd(2020, 5, 4),
            stats_start: ymd(2020, 3, 21),
            stats_end: ymd(2020, 5, 3),
            school_closure: ymd(2020, 3, 4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    /// Transmission rate for the report; defaults to each period's `beta0`.
    pub beta: Option<f64>,
    /// Overrides epsilon in every period.
    pub epsilon: Option<f64>,
    /// Constant curtail of the trajectory whose R_e series is reported.
    pub u: f64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            beta: None,
            epsilon: None,
            u: 0.0,
        }
    }
}

/// Command-line overrides applied after parsing.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub scenarios: Option<usize>,
}

impl RunConfig {
    /// Parses TOML, or JSON when the extension is `.json`.
    pub fn parse(text: &str, path: &Path) -> Result<Self, CliError> {
        let parse_err = |message: String| CliError::ConfigParse {
            path: path.to_path_buf(),
            message,
        };
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            serde_json::from_str(text).map_err(|e| parse_err(e.to_string()))
        } else {
            toml::from_str(text).map_err(|e| parse_err(e.to_string()))
        }
    }

    /// Reads, overrides, resolves paths and validates for `mode`.
    pub fn load(path: &Path, mode: Mode, overrides: &Overrides) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::ConfigParse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::parse(&text, path)?;
        cfg.apply(overrides);
        if let Some(dir) = path.parent() {
            cfg.resolve_paths(dir);
        }
        cfg.validate(mode)?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.seed = seed;
        }
        if let Some(out) = &o.out_dir {
            self.paths.out_dir = out.clone();
        }
        if let Some(n) = o.scenarios {
            self.ensemble.n_scenarios = n;
            self.mpc.n_cases = n;
        }
        self.mpc.seed = self.seed;
    }

    fn resolve_paths(&mut self, dir: &Path) {
        if let Some(csv) = &self.paths.mobility_csv {
            if csv.is_relative() {
                self.paths.mobility_csv = Some(dir.join(csv));
            }
        }
    }

    pub fn caution_from(&self, mode: Mode) -> NaiveDate {
        self.schedule.caution_from.unwrap_or(match mode {
            Mode::MpcClosedLoop => self.period.start,
            _ => ymd(2020, 3, 8),
        })
    }

    pub fn build_schedule(&self, mode: Mode) -> Result<Schedule, CliError> {
        let caution_from = self.caution_from(mode);
        let s = &self.schedule;
        let sched = match s.preset {
            SchedulePreset::Lombardy => Schedule::lombardy(s.span_end, caution_from)?,
            SchedulePreset::Custom => {
                let day = |d| day_offset(s.day_zero, d);
                let segments = s
                    .segments
                    .iter()
                    .map(|seg| ParamSegment {
                        first_day: day(seg.from),
                        last_day: day(seg.to),
                        params: seg.params,
                    })
                    .collect();
                let end = s.segments.last().map_or(0, |seg| day(seg.to));
                let switch = day(caution_from).clamp(0, end + 1);
                let mut caution = Vec::new();
                if switch > 0 {
                    caution.push(CautionSegment { first_day: 0, last_day: switch - 1, theta_c: 0.0 });
                }
                if switch <= end {
                    caution.push(CautionSegment { first_day: switch, last_day: end, theta_c: s.caution_level });
                }
                EpiParamSchedule::new(s.day_zero, segments, caution)?
            }
        };
        Ok(sched)
    }

    /// Every violated invariant for `mode`.
    pub fn problems(&self, mode: Mode) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(m) = self.mode {
            if m != mode {
                out.push(format!("config mode {m} does not match subcommand {mode}"));
            }
        }
        if self.period.start >= self.period.end {
            out.push(format!("period.start {} must precede period.end {}", self.period.start, self.period.end));
        }
        if self.policy_weights.iter().any(|w| !(*w >= 0.0)) {
            out.push("policy_weights must be non-negative".into());
        }
        let a = &self.ensemble.adherence;
        if !(a.sigma_u >= 0.0) || a.per_activity_sigma.iter().any(|s| !(*s >= 0.0)) {
            out.push("adherence standard deviations must be non-negative".into());
        }
        match self.build_schedule(mode) {
            Ok(sched) => {
                if sched.day_of(self.period.start) < 0 {
                    out.push(format!("period.start {} precedes day zero {}", self.period.start, sched.day_zero()));
                }
                let horizon = if mode == Mode::MpcClosedLoop { self.mpc.tp as i64 } else { 0 };
                let needed = sched.day_of(self.period.end) + horizon;
                if needed > sched.last_day() {
                    out.push(format!(
                        "schedule ends on {} but the run needs parameters through {}",
                        sched.date_of(sched.last_day()),
                        sched.date_of(needed)
                    ));
                }
            }
            Err(e) => out.push(e.to_string()),
        }
        match mode {
            Mode::SimulateHistorical | Mode::FitMobility => {
                match &self.paths.mobility_csv {
                    None => out.push(format!("paths.mobility_csv is required for {mode}")),
                    Some(p) if !p.is_file() => out.push(format!("mobility CSV {} does not exist", p.display())),
                    Some(_) => {}
                }
                if mode == Mode::SimulateHistorical && self.ensemble.n_scenarios == 0 {
                    out.push("ensemble.n_scenarios must be at least 1".into());
                }
                if mode == Mode::FitMobility && self.regression.start >= self.regression.end {
                    out.push("regression.start must precede regression.end".into());
                }
            }
            Mode::MpcClosedLoop => out.extend(self.mpc.problems()),
            Mode::StabilityReport => {
                if let Some(b) = self.stability.beta {
                    if !(b >= 0.0) {
                        out.push(format!("stability.beta={b} must be non-negative"));
                    }
                }
                if let Some(e) = self.stability.epsilon {
                    if !(0.0..=1.0).contains(&e) {
                        out.push(format!("stability.epsilon={e} must lie in [0, 1]"));
                    }
                }
                if !(0.0..=1.0).contains(&self.stability.u) {
                    out.push(format!("stability.u={} must lie in [0, 1]", self.stability.u));
                }
            }
        }
        out
    }

    pub fn validate(&self, mode: Mode) -> Result<(), CliError> {
        let p = self.problems(mode);
        if p.is_empty() {
            Ok(())
        } else {
            Err(CliError::ConfigValidation(p))
        }
    }
}
