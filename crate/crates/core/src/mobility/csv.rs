use std::collections::BTreeMap;
use std::io::Read;

use chrono::NaiveDate;

use super::ActivitySeries;
use crate::schedule::date;
use crate::{Error, Result};

const DATE: &str = "date";
const SUB_REGION_1: &str = "sub_region_1";
const SUB_REGION_2: &str = "sub_region_2";
const METRO_AREA: &str = "metro_area";
const VALUE_COLUMNS: [&str; 6] = [
    "retail_and_recreation_percent_change_from_baseline",
    "grocery_and_pharmacy_percent_change_from_baseline",
    "parks_percent_change_from_baseline",
    "transit_stations_percent_change_from_baseline",
    "workplaces_percent_change_from_baseline",
    "residential_percent_change_from_baseline",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// First day on which schools and universities are closed (SU = 1).
    pub school_closure: NaiveDate,
}

impl Default for ParseOptions {
    fn default() -> Self {
        Self {
            school_closure: date(2020, 3, 4),
        }
    }
}

/// Reads a Google Community Mobility Reports CSV and extracts the regional
/// (not sub-regional) series for `region`.
pub fn parse_mobility_csv<R: Read>(stream: R, region: &str) -> Result<ActivitySeries> {
    parse_mobility_csv_with(stream, region, ParseOptions::default())
}

pub fn parse_mobility_csv_with<R: Read>(
    stream: R,
    region: &str,
    opts: ParseOptions,
) -> Result<ActivitySeries> {
    let mut rdr = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(stream);
    let headers = rdr
        .headers()
        .map_err(|e| Error::MalformedCsv(format!("header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::MalformedCsv(format!("missing column {name:?}")))
    };
    let i_date = col(DATE)?;
    let i_sub1 = col(SUB_REGION_1)?;
    let i_sub2 = col(SUB_REGION_2)?;
    let i_metro = headers.iter().position(|h| h.trim() == METRO_AREA);
    let i_vals = VALUE_COLUMNS.map(col);
    let mut value_idx = [0usize; 6];
    for (k, idx) in i_vals.into_iter().enumerate() {
        value_idx[k] = idx?;
    }

    let mut rows: BTreeMap<NaiveDate, [f64; 6]> = BTreeMap::new();
    for (line, rec) in rdr.records().enumerate() {
        // Header is line 1.
        let line = line + 2;
        let rec = rec.map_err(|e| Error::MalformedCsv(format!("line {line}: {e}")))?;
        if rec.get(i_sub1).map(str::trim) != Some(region) {
            continue;
        }
        let sub2 = rec.get(i_sub2).unwrap_or("").trim();
        let metro = i_metro.and_then(|i| rec.get(i)).unwrap_or("").trim();
        if !sub2.is_empty() || !metro.is_empty() {
            continue;
        }
        let raw_date = rec.get(i_date).unwrap_or("").trim();
        let day = NaiveDate::parse_from_str(raw_date, "%Y-%m-%d")
            .map_err(|e| Error::MalformedCsv(format!("line {line}: bad date {raw_date:?}: {e}")))?;
        let mut vals = [0.0; 6];
        for (k, &idx) in value_idx.iter().enumerate() {
            let raw = rec.get(idx).unwrap_or("").trim();
            let pct: f64 = raw.parse().map_err(|_| {
                Error::MalformedCsv(format!("line {line}: {} = {raw:?} is not a number", VALUE_COLUMNS[k]))
            })?;
            vals[k] = pct / 100.0;
        }
        if rows.insert(day, vals).is_some() {
            return Err(Error::MalformedCsv(format!("line {line}: duplicate date {day}")));
        }
    }

    if rows.is_empty() {
        return Err(Error::RegionNotFound(region.to_string()));
    }

    let mut series = ActivitySeries {
        dates: Vec::with_capacity(rows.len()),
        rr: Vec::with_capacity(rows.len()),
        g: Vec::with_capacity(rows.len()),
        p: Vec::with_capacity(rows.len()),
        t: Vec::with_capacity(rows.len()),
        w: Vec::with_capacity(rows.len()),
        r: Vec::with_capacity(rows.len()),
        su: Vec::with_capacity(rows.len()),
    };
    for (day, v) in rows {
        if let Some(&prev) = series.dates.last() {
            if day.signed_duration_since(prev).num_days() != 1 {
                return Err(Error::GapInDates { after: prev, next: day });
            }
        }
        series.dates.push(day);
        series.rr.push(v[0]);
        series.g.push(v[1]);
        series.p.push(v[2]);
        series.t.push(v[3]);
        series.w.push(v[4]);
        series.r.push(v[5]);
        series.su.push(if day >= opts.school_closure { 1.0 } else { 0.0 });
    }
    Ok(series)
}
