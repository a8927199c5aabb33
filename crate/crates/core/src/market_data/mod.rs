//! Bars, feature series and the uniform bar grid everything downstream runs on.

mod klines;

pub use klines::{KlineClient, KlineFetch, KlineTransport, KLINE_PAGE_LIMIT};

use std::fs;
use std::io::Write;
use std::ops::Range;
use std::path::Path;

use chrono::{DateTime, SecondsFormat, TimeZone, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Timestamp = DateTime<Utc>;

pub const BAR_HEADER: [&str; 6] = ["timestamp", "open", "high", "low", "close", "volume"];
pub const FEATURE_HEADER: [&str; 2] = ["timestamp", "value"];

/// One OHLCV observation, stamped with its open time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub timestamp: Timestamp,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    pub fn validate(&self) -> std::result::Result<(), String> {
        let fields = [self.open, self.high, self.low, self.close, self.volume];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err("non-finite field".into());
        }
        if self.low > self.open.min(self.close) || self.high < self.open.max(self.close) {
            return Err(format!(
                "inconsistent range: low {} high {} open {} close {}",
                self.low, self.high, self.open, self.close
            ));
        }
        if self.volume < 0.0 {
            return Err(format!("negative volume {}", self.volume));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSeries {
    pub name: String,
    pub points: Vec<(Timestamp, f64)>,
}

impl FeatureSeries {
    pub fn new(name: impl Into<String>, points: Vec<(Timestamp, f64)>) -> Result<Self> {
        let name = name.into();
        for (i, w) in points.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(Error::Domain(format!(
                    "feature `{name}`: point {} is not after point {i}",
                    i + 1
                )));
            }
        }
        if let Some((ts, _)) = points.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::Domain(format!(
                "feature `{name}`: non-finite value at {}",
                format_ts(ts)
            )));
        }
        Ok(Self { name, points })
    }
}

/// Time-aligned named columns over a shared bar index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignedFrame {
    pub index: Vec<Timestamp>,
    columns: Vec<(String, Vec<f64>)>,
}

impl AlignedFrame {
    pub fn new(index: Vec<Timestamp>, columns: Vec<(String, Vec<f64>)>) -> Result<Self> {
        for (name, col) in &columns {
            if col.len() != index.len() {
                return Err(Error::Shape(format!(
                    "column `{name}` has {} rows, index has {}",
                    col.len(),
                    index.len()
                )));
            }
        }
        for (i, (name, _)) in columns.iter().enumerate() {
            if columns[..i].iter().any(|(n, _)| n == name) {
                return Err(Error::Shape(format!("duplicate column `{name}`")));
            }
        }
        Ok(Self { index, columns })
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|(n, _)| n.as_str())
    }

    pub fn columns(&self) -> &[(String, Vec<f64>)] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.columns
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_slice())
    }

    pub fn rows(&self, range: Range<usize>) -> AlignedFrame {
        AlignedFrame {
            index: self.index[range.clone()].to_vec(),
            columns: self
                .columns
                .iter()
                .map(|(n, c)| (n.clone(), c[range.clone()].to_vec()))
                .collect(),
        }
    }

    /// Keeps only the named columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<AlignedFrame> {
        let columns = names
            .iter()
            .map(|n| {
                self.column(n)
                    .map(|c| (n.clone(), c.to_vec()))
                    .ok_or_else(|| Error::SpecMismatch(format!("frame has no column `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(AlignedFrame {
            index: self.index.clone(),
            columns,
        })
    }

    /// Row positions whose timestamp falls in `[start, end)`.
    pub fn row_range(&self, start: Timestamp, end: Timestamp) -> Range<usize> {
        let lo = self.index.partition_point(|t| *t < start);
        let hi = self.index.partition_point(|t| *t < end);
        lo..hi.max(lo)
    }

    /// Row-major copy of all columns for rows in `range`.
    pub fn row_matrix(&self, range: Range<usize>) -> Vec<Vec<f64>> {
        range
            .map(|r| self.columns.iter().map(|(_, c)| c[r]).collect())
            .collect()
    }
}

pub fn format_ts(ts: &Timestamp) -> String {
    ts.to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub fn parse_ts(s: &str) -> std::result::Result<Timestamp, String> {
    DateTime::parse_from_rfc3339(s.trim())
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| format!("bad timestamp `{s}`: {e}"))
}

pub fn ts_from_millis(ms: i64) -> Option<Timestamp> {
    Utc.timestamp_millis_opt(ms).single()
}

fn check_header(path: &Path, got: &csv::StringRecord, want: &[&str]) -> Result<()> {
    if got.iter().map(str::trim).ne(want.iter().copied()) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: format!("expected header `{}`", want.join(",")),
        });
    }
    Ok(())
}

fn parse_field(path: &Path, line: u64, rec: &csv::StringRecord, i: usize) -> Result<f64> {
    let raw = rec.get(i).ok_or_else(|| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("missing column {i}"),
    })?;
    raw.trim().parse::<f64>().map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: format!("column {i}: `{raw}`: {e}"),
    })
}

fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: e.to_string(),
    }
}

/// Reads a `timestamp,open,high,low,close,volume` file.
pub fn load_bars_csv(path: impl AsRef<Path>) -> Result<Vec<Bar>> {
    let path = path.as_ref();
    let mut rdr = open_csv(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &header, &BAR_HEADER)?;

    let mut bars: Vec<Bar> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        if rec.len() != BAR_HEADER.len() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: format!("expected 6 fields, found {}", rec.len()),
            });
        }
        let timestamp = parse_ts(&rec[0]).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        })?;
        let bar = Bar {
            timestamp,
            open: parse_field(path, line, &rec, 1)?,
            high: parse_field(path, line, &rec, 2)?,
            low: parse_field(path, line, &rec, 3)?,
            close: parse_field(path, line, &rec, 4)?,
            volume: parse_field(path, line, &rec, 5)?,
        };
        bar.validate().map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        })?;
        if let Some(prev) = bars.last() {
            if bar.timestamp <= prev.timestamp {
                return Err(Error::Ordering {
                    path: path.to_path_buf(),
                    line,
                    timestamp: rec[0].trim().to_string(),
                });
            }
        }
        bars.push(bar);
    }
    Ok(bars)
}

pub fn bars_to_csv(bars: &[Bar]) -> String {
    let mut out = String::with_capacity(64 * (bars.len() + 1));
    out.push_str(&BAR_HEADER.join(","));
    out.push('\n');
    for b in bars {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            format_ts(&b.timestamp),
            b.open,
            b.high,
            b.low,
            b.close,
            b.volume
        ));
    }
    out
}

pub fn write_bars_csv(path: impl AsRef<Path>, bars: &[Bar]) -> Result<()> {
    write_text(path.as_ref(), &bars_to_csv(bars))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Reads a `timestamp,value` file into a named series.
pub fn load_feature_csv(path: impl AsRef<Path>, name: impl Into<String>) -> Result<FeatureSeries> {
    let path = path.as_ref();
    let name = name.into();
    let mut rdr = open_csv(path)?;
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &header, &FEATURE_HEADER)?;
    let mut points: Vec<(Timestamp, f64)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let ts = parse_ts(rec.get(0).unwrap_or_default()).map_err(|msg| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        })?;
        let v = parse_field(path, line, &rec, 1)?;
        if !v.is_finite() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: "non-finite value".into(),
            });
        }
        if points.last().is_some_and(|(prev, _)| ts <= *prev) {
            return Err(Error::Ordering {
                path: path.to_path_buf(),
                line,
                timestamp: format_ts(&ts),
            });
        }
        points.push((ts, v));
    }
    Ok(FeatureSeries { name, points })
}

pub fn feature_to_csv(series: &FeatureSeries) -> String {
    let mut out = String::from("timestamp,value\n");
    for (ts, v) in &series.points {
        out.push_str(&format!("{},{}\n", format_ts(ts), v));
    }
    out
}

/// Aggregates 1-minute bars into `interval`-minute buckets anchored at midnight UTC.
pub fn resample(bars: &[Bar], interval: u32) -> Result<Vec<Bar>> {
    if interval == 0 || 60 % interval != 0 {
        return Err(Error::Config(format!(
            "resample interval {interval} is not a positive divisor of 60"
        )));
    }
    let bucket_secs = i64::from(interval) * 60;
    let mut out: Vec<Bar> = Vec::new();
    let mut current_bucket = i64::MIN;
    for bar in bars {
        let secs = bar.timestamp.timestamp();
        let bucket = secs.div_euclid(bucket_secs) * bucket_secs;
        match out.last_mut() {
            Some(agg) if bucket == current_bucket => {
                agg.high = agg.high.max(bar.high);
                agg.low = agg.low.min(bar.low);
                agg.close = bar.close;
                agg.volume += bar.volume;
            }
            _ => {
                if bucket < current_bucket {
                    return Err(Error::Domain(format!(
                        "bar at {} is out of order",
                        format_ts(&bar.timestamp)
                    )));
                }
                current_bucket = bucket;
                let timestamp = Utc
                    .timestamp_opt(bucket, 0)
                    .single()
                    .ok_or_else(|| Error::Domain(format!("timestamp {bucket} out of range")))?;
                out.push(Bar { timestamp, ..*bar });
            }
        }
    }
    Ok(out)
}

/// Forward-fills each feature onto the bar grid and carries the close price
/// through as column `close`.
pub fn align(bars: &[Bar], features: &[FeatureSeries]) -> Result<AlignedFrame> {
    let index: Vec<Timestamp> = bars.iter().map(|b| b.timestamp).collect();
    let mut columns = Vec::with_capacity(features.len() + 1);
    columns.push(("close".to_string(), bars.iter().map(|b| b.close).collect()));
    for feature in features {
        if let Some(first) = index.first() {
            if feature.points.first().is_none_or(|(ts, _)| ts > first) {
                return Err(Error::Coverage {
                    feature: feature.name.clone(),
                });
            }
        }
        let mut col = Vec::with_capacity(index.len());
        let mut next = 0usize;
        let mut last = f64::NAN;
        for ts in &index {
            while next < feature.points.len() && feature.points[next].0 <= *ts {
                last = feature.points[next].1;
                next += 1;
            }
            col.push(last);
        }
        columns.push((feature.name.clone(), col));
    }
    AlignedFrame::new(index, columns)
}
