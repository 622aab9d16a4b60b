//! Piecewise-constant parameter schedules keyed by day offset from DAY-ZERO.

use chrono::{Days, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::model::{ControlInput, EpiParams};
use crate::{Error, Result, Scalar};

/// Parameters in force on days `first_day..=last_day`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSegment<T> {
    pub first_day: i64,
    pub last_day: i64,
    pub params: EpiParams<T>,
}

/// Caution level `theta_c` in force on days `first_day..=last_day`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CautionSegment<T> {
    pub first_day: i64,
    pub last_day: i64,
    pub theta_c: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpiParamSchedule<T> {
    day_zero: NaiveDate,
    segments: Vec<ParamSegment<T>>,
    caution: Vec<CautionSegment<T>>,
}

/// Checks that `(first, last)` ranges are non-empty, ordered and contiguous.
fn check_ranges(what: &str, ranges: &[(i64, i64)], problems: &mut Vec<String>) {
    if ranges.is_empty() {
        problems.push(format!("{what}: no ranges"));
        return;
    }
    for (i, &(first, last)) in ranges.iter().enumerate() {
        if last < first {
            problems.push(format!("{what} #{i}: last day {last} before first day {first}"));
        }
        if i > 0 {
            let prev_last = ranges[i - 1].1;
            if first != prev_last + 1 {
                problems.push(format!(
                    "{what} #{i}: starts on day {first}, expected day {} (ranges must be contiguous and non-overlapping)",
                    prev_last + 1
                ));
            }
        }
    }
}

impl<T: Scalar> EpiParamSchedule<T> {
    pub fn new(
        day_zero: NaiveDate,
        segments: Vec<ParamSegment<T>>,
        caution: Vec<CautionSegment<T>>,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        let seg_ranges: Vec<_> = segments.iter().map(|s| (s.first_day, s.last_day)).collect();
        let caution_ranges: Vec<_> = caution.iter().map(|s| (s.first_day, s.last_day)).collect();
        check_ranges("parameter segment", &seg_ranges, &mut problems);
        check_ranges("caution segment", &caution_ranges, &mut problems);
        if let (Some(a), Some(b)) = (seg_ranges.first(), caution_ranges.first()) {
            if a.0 != b.0 || seg_ranges.last().map(|r| r.1) != caution_ranges.last().map(|r| r.1) {
                problems.push(format!(
                    "caution schedule covers days {}..={} but parameters cover {}..={}",
                    b.0,
                    caution_ranges.last().map_or(b.1, |r| r.1),
                    a.0,
                    seg_ranges.last().map_or(a.1, |r| r.1),
                ));
            }
        }
        for (i, seg) in segments.iter().enumerate() {
            if let Err(e) = seg.params.validate() {
                problems.push(format!("parameter segment #{i}: {e}"));
            }
        }
        for (i, seg) in caution.iter().enumerate() {
            if !(seg.theta_c >= T::zero() && seg.theta_c < T::one()) {
                problems.push(format!("caution segment #{i}: theta_c={} must lie in [0, 1)", seg.theta_c));
            }
        }
        if let Some(first) = segments.first() {
            let n = first.params.population;
            if segments.iter().any(|s| s.params.population != n) {
                problems.push("population must be the same in every segment".into());
            }
        }
        if !problems.is_empty() {
            return Err(Error::InvalidSchedule(problems.join("; ")));
        }
        Ok(Self {
            day_zero,
            segments,
            caution,
        })
    }

    /// Lombardy first-wave schedule from DAY-ZERO (Jan 15, 2020) through `span_end`,
    /// with caution `theta_c = 0.2` switched on from `caution_from`.
    pub fn lombardy(span_end: NaiveDate, caution_from: NaiveDate) -> Result<Self> {
        let day_zero = lombardy_day_zero();
        let day = |m, d| day_offset(day_zero, date(2020, m, d));
        let end = day_offset(day_zero, span_end);
        let early = EpiParams::<T>::lombardy_early();
        let with = |delta_h: f64, gamma: f64, f1: f64, f2: f64, epsilon: f64| EpiParams {
            delta_h: T::lit(delta_h),
            gamma: T::lit(gamma),
            f1: T::lit(f1),
            f2: T::lit(f2),
            epsilon: T::lit(epsilon),
            ..early
        };
        let mut bounds = vec![
            (0, day(3, 8), early),
            (day(3, 9), day(3, 20), with(1.0 / 18.0, 1.0 / 5.0, 0.60, 0.23, 0.10)),
            (day(3, 21), day(4, 10), with(1.0 / 14.0, 1.0 / 7.0, 0.5, 0.23, 0.09)),
            (day(4, 11), end, with(1.0 / 10.0, 1.0 / 10.0, 0.2, 0.20, 0.05)),
        ];
        // Truncate to the requested span.
        bounds.retain(|&(first, _, _)| first <= end);
        if let Some(last) = bounds.last_mut() {
            last.1 = end;
        }
        let segments = bounds
            .into_iter()
            .map(|(first_day, last_day, params)| ParamSegment {
                first_day,
                last_day,
                params,
            })
            .collect();
        let switch = day_offset(day_zero, caution_from).clamp(0, end + 1);
        let mut caution = Vec::new();
        if switch > 0 {
            caution.push(CautionSegment {
                first_day: 0,
                last_day: switch - 1,
                theta_c: T::zero(),
            });
        }
        if switch <= end {
            caution.push(CautionSegment {
                first_day: switch,
                last_day: end,
                theta_c: T::lit(0.2),
            });
        }
        Self::new(day_zero, segments, caution)
    }

    pub fn day_zero(&self) -> NaiveDate {
        self.day_zero
    }

    pub fn segments(&self) -> &[ParamSegment<T>] {
        &self.segments
    }

    pub fn caution_segments(&self) -> &[CautionSegment<T>] {
        &self.caution
    }

    pub fn first_day(&self) -> i64 {
        self.segments[0].first_day
    }

    pub fn last_day(&self) -> i64 {
        self.segments[self.segments.len() - 1].last_day
    }

    pub fn population(&self) -> T {
        self.segments[0].params.population
    }

    pub fn day_of(&self, date: NaiveDate) -> i64 {
        day_offset(self.day_zero, date)
    }

    pub fn date_of(&self, day: i64) -> NaiveDate {
        date_at(self.day_zero, day)
    }

    pub fn params_at(&self, date: NaiveDate) -> Result<&EpiParams<T>> {
        self.params_on_day(self.day_of(date))
    }

    pub fn params_on_day(&self, day: i64) -> Result<&EpiParams<T>> {
        let idx = self.segments.partition_point(|s| s.last_day < day);
        match self.segments.get(idx) {
            Some(seg) if seg.first_day <= day => Ok(&seg.params),
            _ => Err(self.out_of_schedule(day)),
        }
    }

    pub fn theta_c_on_day(&self, day: i64) -> Result<T> {
        let idx = self.caution.partition_point(|s| s.last_day < day);
        match self.caution.get(idx) {
            Some(seg) if seg.first_day <= day => Ok(seg.theta_c),
            _ => Err(self.out_of_schedule(day)),
        }
    }

    /// Control input for `day` with the scheduled caution level.
    pub fn control(&self, day: i64, u: T, theta_a: T) -> Result<ControlInput<T>> {
        Ok(ControlInput::new(u, theta_a, self.theta_c_on_day(day)?))
    }

    /// Replaces the parameters of every segment through `f`.
    pub fn map_params(&self, f: impl Fn(&EpiParams<T>) -> EpiParams<T>) -> Result<Self> {
        let segments = self
            .segments
            .iter()
            .map(|s| ParamSegment {
                params: f(&s.params),
                ..s.clone()
            })
            .collect();
        Self::new(self.day_zero, segments, self.caution.clone())
    }

    fn out_of_schedule(&self, day: i64) -> Error {
        Error::DateOutOfSchedule {
            date: self.date_of(day),
            day,
        }
    }
}

pub fn lombardy_day_zero() -> NaiveDate {
    date(2020, 1, 15)
}

/// Signed number of days from `origin` to `date`.
pub fn day_offset(origin: NaiveDate, date: NaiveDate) -> i64 {
    date.signed_duration_since(origin).num_days()
}

pub fn date_at(origin: NaiveDate, day: i64) -> NaiveDate {
    if day >= 0 {
        origin + Days::new(day as u64)
    } else {
        origin - Days::new(day.unsigned_abs())
    }
}

pub(crate) fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid calendar date")
}
