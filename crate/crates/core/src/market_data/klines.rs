use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, Utc};
use serde_json::Value;

use super::{bars_to_csv, format_ts, load_bars_csv, ts_from_millis, write_text, Bar, Timestamp};
use crate::error::{Error, Result};

pub const KLINE_PAGE_LIMIT: usize = 1000;
const INTERVAL: &str = "1m";
const MINUTE_MS: i64 = 60_000;
const DAY_MS: i64 = 86_400_000;

/// Raw GET access to a klines endpoint. `path_and_query` starts with `/api/v3/klines`.
pub trait KlineTransport {
    fn get(&self, path_and_query: &str) -> Result<String>;
}

impl<T: KlineTransport + ?Sized> KlineTransport for &T {
    fn get(&self, path_and_query: &str) -> Result<String> {
        (**self).get(path_and_query)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlineFetch {
    pub bars: Vec<Bar>,
    /// Minutes inside the requested range with no bar from the exchange.
    pub gaps: Vec<Timestamp>,
}

/// Fetches 1-minute klines day by day, persisting each complete UTC day to
/// `cache/<symbol>/1m/<date>.csv` and serving later requests from there.
pub struct KlineClient<T> {
    transport: T,
    cache_dir: PathBuf,
    max_attempts: usize,
}

impl<T: KlineTransport> KlineClient<T> {
    pub fn new(transport: T, cache_dir: impl Into<PathBuf>) -> Self {
        Self {
            transport,
            cache_dir: cache_dir.into(),
            max_attempts: 3,
        }
    }

    pub fn with_max_attempts(mut self, attempts: usize) -> Self {
        self.max_attempts = attempts.max(1);
        self
    }

    pub fn cache_path(&self, symbol: &str, day: NaiveDate) -> PathBuf {
        self.cache_dir
            .join(symbol)
            .join(INTERVAL)
            .join(format!("{}.csv", day.format("%Y-%m-%d")))
    }

    pub fn fetch_klines(&self, symbol: &str, start: Timestamp, end: Timestamp) -> Result<KlineFetch> {
        if symbol.is_empty() || !symbol.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(Error::Config(format!("invalid symbol `{symbol}`")));
        }
        if end <= start {
            return Ok(KlineFetch {
                bars: Vec::new(),
                gaps: Vec::new(),
            });
        }
        let first_day = start.date_naive();
        let last_day = (end - Duration::milliseconds(1)).date_naive();
        let mut bars = Vec::new();
        let mut day = first_day;
        while day <= last_day {
            let day_bars = self.load_day(symbol, day)?;
            bars.extend(day_bars.into_iter().filter(|b| b.timestamp >= start && b.timestamp < end));
            day = day.succ_opt().expect("date overflow");
        }
        let gaps = missing_minutes(&bars, start, end);
        Ok(KlineFetch { bars, gaps })
    }

    fn load_day(&self, symbol: &str, day: NaiveDate) -> Result<Vec<Bar>> {
        let path = self.cache_path(symbol, day);
        if path.exists() {
            return load_bars_csv(&path);
        }
        let day_start = day.and_hms_opt(0, 0, 0).expect("midnight").and_utc();
        let start_ms = day_start.timestamp_millis();
        let end_ms = start_ms + DAY_MS - 1;
        let mut bars: Vec<Bar> = Vec::new();
        let mut cursor = start_ms;
        while cursor <= end_ms {
            let query = format!(
                "/api/v3/klines?symbol={symbol}&interval={INTERVAL}&startTime={cursor}&endTime={end_ms}&limit={KLINE_PAGE_LIMIT}"
            );
            let body = self.get_with_retry(&query)?;
            let page = parse_klines(&body)?;
            let n = page.len();
            let Some(last) = page.last() else { break };
            cursor = last.timestamp.timestamp_millis() + MINUTE_MS;
            bars.extend(
                page.into_iter()
                    .filter(|b| b.timestamp.timestamp_millis() >= start_ms && b.timestamp.timestamp_millis() <= end_ms),
            );
            if n < KLINE_PAGE_LIMIT {
                break;
            }
        }
        bars.dedup_by_key(|b| b.timestamp);
        if bars.windows(2).any(|w| w[1].timestamp <= w[0].timestamp) {
            return Err(Error::Transport {
                retriable: false,
                msg: format!("exchange returned unordered klines for {symbol} on {day}"),
            });
        }
        // an unfinished day would freeze a partial file into the cache
        if day_start + Duration::days(1) <= Utc::now() {
            write_day(&path, &bars)?;
        }
        Ok(bars)
    }

    fn get_with_retry(&self, query: &str) -> Result<String> {
        let mut last_err = None;
        for _ in 0..self.max_attempts {
            match self.transport.get(query) {
                Ok(body) => return Ok(body),
                Err(e @ Error::Transport { retriable: true, .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last_err.unwrap_or_else(|| Error::Transport {
            retriable: true,
            msg: "no attempts made".into(),
        }))
    }
}

fn write_day(path: &Path, bars: &[Bar]) -> Result<()> {
    write_text(path, &bars_to_csv(bars))
}

fn field_f64(row: &[Value], i: usize) -> Result<f64> {
    let v = row.get(i).ok_or_else(|| bad_payload(format!("kline row too short ({} fields)", row.len())))?;
    match v {
        Value::String(s) => s.parse::<f64>().map_err(|e| bad_payload(format!("field {i}: {e}"))),
        Value::Number(n) => n.as_f64().ok_or_else(|| bad_payload(format!("field {i} not numeric"))),
        _ => Err(bad_payload(format!("field {i} has unexpected type"))),
    }
}

fn bad_payload(msg: String) -> Error {
    Error::Transport {
        retriable: false,
        msg,
    }
}

/// Parses the exchange's array-of-arrays kline response.
pub(crate) fn parse_klines(body: &str) -> Result<Vec<Bar>> {
    let value: Value = serde_json::from_str(body).map_err(|e| bad_payload(format!("invalid JSON: {e}")))?;
    let rows = value.as_array().ok_or_else(|| bad_payload("expected a JSON array".into()))?;
    rows.iter()
        .map(|row| {
            let row = row.as_array().ok_or_else(|| bad_payload("expected an array row".into()))?;
            let open_ms = row
                .first()
                .and_then(Value::as_i64)
                .ok_or_else(|| bad_payload("missing open time".into()))?;
            let timestamp = ts_from_millis(open_ms).ok_or_else(|| bad_payload(format!("bad open time {open_ms}")))?;
            let bar = Bar {
                timestamp,
                open: field_f64(row, 1)?,
                high: field_f64(row, 2)?,
                low: field_f64(row, 3)?,
                close: field_f64(row, 4)?,
                volume: field_f64(row, 5)?,
            };
            bar.validate()
                .map_err(|m| bad_payload(format!("kline at {}: {m}", format_ts(&timestamp))))?;
            Ok(bar)
        })
        .collect()
}

fn missing_minutes(bars: &[Bar], start: Timestamp, end: Timestamp) -> Vec<Timestamp> {
    let have: BTreeSet<i64> = bars.iter().map(|b| b.timestamp.timestamp_millis()).collect();
    let first = start.timestamp_millis().div_euclid(MINUTE_MS) * MINUTE_MS;
    let first = if first < start.timestamp_millis() { first + MINUTE_MS } else { first };
    (first..end.timestamp_millis())
        .step_by(MINUTE_MS as usize)
        .filter(|ms| !have.contains(ms))
        .filter_map(ts_from_millis)
        .collect()
}
