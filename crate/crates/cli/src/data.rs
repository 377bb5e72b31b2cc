//! CSV ingestion and range-series preparation.

use std::collections::HashMap;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use tacarr::range::DEFAULT_SCALE;
use tacarr::{extract_ranges, Innovation, ModelSpec, PriceBar, RangeObs};

use crate::args::DataArgs;
use crate::usage;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub date: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            date: "date".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
        }
    }
}

impl ColumnMap {
    pub fn from_args(a: &DataArgs) -> Self {
        let d = Self::default();
        Self {
            date: a.date_col.clone().unwrap_or(d.date),
            open: a.open_col.clone().unwrap_or(d.open),
            high: a.high_col.clone().unwrap_or(d.high),
            low: a.low_col.clone().unwrap_or(d.low),
            close: a.close_col.clone().unwrap_or(d.close),
        }
    }
}

const DATE_FORMATS: [&str; 3] = ["%Y-%m-%d", "%Y/%m/%d", "%m/%d/%Y"];

pub fn parse_date(s: &str) -> Option<NaiveDate> {
    let s = s.trim();
    // Timestamps such as "2020-03-13 00:00:00" keep only the date part.
    let head = s.split([' ', 'T']).next().unwrap_or(s);
    DATE_FORMATS.iter().find_map(|f| NaiveDate::parse_from_str(head, f).ok())
}

/// Reads OHLC bars, validates each row, and returns them sorted by date.
/// Errors name the file line (header is line 1).
pub fn ingest_csv(path: &Path, columns: &ColumnMap) -> Result<Vec<PriceBar>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("cannot open {}", path.display()))?;
    let headers = reader
        .headers()
        .with_context(|| format!("{}: cannot read header", path.display()))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| anyhow!("{}: missing column '{name}' (found: {})", path.display(), headers.iter().collect::<Vec<_>>().join(", ")))
    };
    let idx = [
        find(&columns.date)?,
        find(&columns.open)?,
        find(&columns.high)?,
        find(&columns.low)?,
        find(&columns.close)?,
    ];
    let names = [&columns.open, &columns.high, &columns.low, &columns.close];

    let mut rows: Vec<(u64, PriceBar)> = Vec::new();
    for record in reader.records() {
        let record = record.with_context(|| format!("{}: malformed row", path.display()))?;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| record.get(i).unwrap_or("");
        let date = parse_date(cell(idx[0])).ok_or_else(|| {
            anyhow!("{} line {line}, column '{}': cannot parse date '{}'", path.display(), columns.date, cell(idx[0]))
        })?;
        let mut px = [0.0; 4];
        for (k, v) in px.iter_mut().enumerate() {
            let raw = cell(idx[k + 1]);
            *v = raw.parse::<f64>().map_err(|_| {
                anyhow!("{} line {line}, column '{}': '{raw}' is not a number", path.display(), names[k])
            })?;
        }
        let bar = PriceBar {
            date,
            open: px[0],
            high: px[1],
            low: px[2],
            close: px[3],
        };
        bar.validate(rows.len())
            .map_err(|e| anyhow!("{} line {line}: {e}", path.display()))?;
        rows.push((line, bar));
    }
    if rows.is_empty() {
        bail!("{}: no data rows", path.display());
    }
    rows.sort_by_key(|(_, b)| b.date);
    let mut seen: HashMap<NaiveDate, u64> = HashMap::new();
    for (line, bar) in &rows {
        if let Some(first) = seen.insert(bar.date, *line) {
            bail!("{}: duplicate date {} on lines {first} and {line}", path.display(), bar.date);
        }
    }
    Ok(rows.into_iter().map(|(_, b)| b).collect())
}

/// Dated range series.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dates: Vec<NaiveDate>,
    pub ranges: Vec<RangeObs>,
    /// Whether zeros may be floored for lognormal models.
    pub zero_floor: bool,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ranges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges.is_empty()
    }

    /// Observations up to and including `date`.
    pub fn count_through(&self, date: NaiveDate) -> usize {
        self.dates.partition_point(|d| *d <= date)
    }

    /// The series a model is fitted on. Lognormal models cannot see
    /// zeros: they are floored when allowed, otherwise rejected. Also
    /// returns the floor that was applied.
    pub fn ranges_for(&self, spec: &ModelSpec) -> Result<(Vec<RangeObs>, Option<f64>)> {
        let mut ranges = self.ranges.clone();
        if spec.innovation == Innovation::Exponential {
            return Ok((ranges, None));
        }
        let directional = spec.family.is_directional();
        if !self.zero_floor {
            let zero = ranges
                .iter()
                .position(|o| o.r == 0.0 || (directional && (o.ru == 0.0 || o.rd == 0.0)));
            if let Some(i) = zero {
                bail!(
                    "{spec} needs positive ranges but {} has a zero range; rerun with --zero-floor",
                    self.dates[i]
                );
            }
            return Ok((ranges, None));
        }
        let eps = apply_zero_floor(&mut ranges, directional);
        Ok((ranges, eps))
    }
}

pub fn load(args: &DataArgs) -> Result<Dataset> {
    let path = args.input.as_ref().ok_or_else(|| usage("--input is required"))?;
    if !path.is_file() {
        return Err(usage(format!("input file {} does not exist", path.display())));
    }
    let scale = args.scale.unwrap_or(DEFAULT_SCALE);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(usage(format!("scale must be positive, got {scale}")));
    }
    if let (Some(a), Some(b)) = (args.from, args.to) {
        if a > b {
            return Err(usage(format!("--from {a} is after --to {b}")));
        }
    }
    let bars: Vec<PriceBar> = ingest_csv(path, &ColumnMap::from_args(args))?
        .into_iter()
        .filter(|b| args.from.is_none_or(|f| b.date >= f) && args.to.is_none_or(|t| b.date <= t))
        .collect();
    if bars.is_empty() {
        bail!("no observations inside the requested date range");
    }
    let ranges = extract_ranges(&bars, scale)?;
    let dates: Vec<NaiveDate> = bars.iter().map(|b| b.date).collect();
    if let Some(split) = args.split_date {
        if split < dates[0] || split >= *dates.last().unwrap() {
            return Err(usage(format!(
                "split date {split} must lie within [{}, {})",
                dates[0],
                dates.last().unwrap()
            )));
        }
    }
    Ok(Dataset {
        dates,
        ranges,
        zero_floor: args.zero_floor,
    })
}

/// Replaces zeros by half the smallest positive value of the modelled
/// series: the total range, or each component when `directional`. A zero
/// total becomes two equal halves of the floor. Returns the floor, or
/// `None` if nothing was replaced.
pub fn apply_zero_floor(ranges: &mut [RangeObs], directional: bool) -> Option<f64> {
    let zero = |o: &RangeObs| if directional { o.ru == 0.0 || o.rd == 0.0 } else { o.r == 0.0 };
    if !ranges.iter().any(zero) {
        return None;
    }
    let smallest = ranges
        .iter()
        .flat_map(|o| if directional { [o.ru, o.rd] } else { [o.r, o.r] })
        .filter(|&v| v > 0.0)
        .fold(f64::INFINITY, f64::min);
    if !smallest.is_finite() {
        return None;
    }
    let eps = 0.5 * smallest;
    for o in ranges.iter_mut() {
        if !zero(o) {
            continue;
        }
        let (ru, rd) = match (o.ru == 0.0, o.rd == 0.0) {
            (true, true) => (0.5 * eps, 0.5 * eps),
            (true, false) => (eps, o.rd),
            (false, true) => (o.ru, eps),
            (false, false) => unreachable!(),
        };
        *o = RangeObs::from_parts(ru, rd).expect("positive parts");
    }
    Some(eps)
}

/// Columns of a fitted-lambda CSV read back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaTable {
    pub dates: Vec<NaiveDate>,
    pub r: Vec<f64>,
    pub lambda: Vec<f64>,
    pub branch: Vec<Option<usize>>,
    pub residual: Vec<Option<f64>>,
}

pub fn read_lambda_csv(path: &Path) -> Result<LambdaTable> {
    #[derive(Deserialize)]
    struct Row {
        date: String,
        r: f64,
        lambda: f64,
        branch: Option<usize>,
        residual: Option<f64>,
    }
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut t = LambdaTable {
        dates: Vec::new(),
        r: Vec::new(),
        lambda: Vec::new(),
        branch: Vec::new(),
        residual: Vec::new(),
    };
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.with_context(|| format!("{} line {}", path.display(), i + 2))?;
        t.dates.push(
            parse_date(&row.date).ok_or_else(|| anyhow!("{} line {}: bad date '{}'", path.display(), i + 2, row.date))?,
        );
        t.r.push(row.r);
        t.lambda.push(row.lambda);
        t.branch.push(row.branch);
        t.residual.push(row.residual);
    }
    Ok(t)
}

/// Realized values and forecasts from a forecast CSV.
pub fn read_forecast_csv(path: &Path) -> Result<(Vec<NaiveDate>, Vec<f64>)> {
    #[derive(Deserialize)]
    struct Row {
        date: String,
        realized: f64,
        forecast: f64,
    }
    let mut reader = csv::Reader::from_path(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut dates = Vec::new();
    let mut errors = Vec::new();
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.with_context(|| format!("{} line {}", path.display(), i + 2))?;
        dates.push(parse_date(&row.date).ok_or_else(|| anyhow!("{} line {}: bad date", path.display(), i + 2))?);
        errors.push(row.realized - row.forecast);
    }
    Ok((dates, errors))
}
