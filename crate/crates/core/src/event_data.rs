//! Time-censored recurrent event data.
//!
//! A single process is an [`EventSeries`]: strictly increasing event times
//! in `(0, tau]` and the censoring time `tau`. Several independent processes
//! form a [`MultiProcessData`]. Both are immutable once built, and every
//! constructor enforces the invariants, so downstream code never re-checks
//! them.
//!
//! Two text formats are supported:
//!
//! * long CSV, with a `process_id,event_time` header, one event per row and an
//!   optional `#censoring` section holding `process_id,tau` rows;
//! * JSON, `{"processes": [{"id": "...", "tau": 2000.0, "events": [...]}]}`.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Event times of one process observed on `(0, tau]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventSeries {
    times: Vec<f64>,
    tau: f64,
}

impl EventSeries {
    /// Builds a series from strictly increasing event times.
    pub fn new(times: Vec<f64>, tau: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::InvalidData(format!(
                "censoring time must be positive and finite, got {tau}"
            )));
        }
        let mut prev = 0.0;
        for (i, &t) in times.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::InvalidData(format!("event {} is not finite", i + 1)));
            }
            if t <= 0.0 {
                return Err(Error::InvalidData(format!(
                    "event {} at {t} is not strictly positive",
                    i + 1
                )));
            }
            if t > tau {
                return Err(Error::InvalidData(format!(
                    "event after censoring time: {t} > {tau}"
                )));
            }
            if i > 0 && t <= prev {
                return Err(Error::InvalidData(format!(
                    "event times not strictly increasing at event {} ({t} after {prev})",
                    i + 1
                )));
            }
            prev = t;
        }
        Ok(Self { times, tau })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of events `N(tau)`.
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Time of the last event, or 0 for an empty series.
    pub fn last_time(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Completely observed gaps `X_i = T_i - T_{i-1}` and the censored
    /// remainder `tau - T_n`.
    pub fn interevent_times(&self) -> Gaps {
        let mut prev = 0.0;
        let complete = self
            .times
            .iter()
            .map(|&t| {
                let x = t - prev;
                prev = t;
                x
            })
            .collect();
        Gaps {
            complete,
            remainder: self.tau - self.last_time(),
        }
    }

    /// Rebuilds event times from complete gaps, keeping `tau`.
    ///
    /// The gaps must sum to at most `tau`; the difference becomes the
    /// censored remainder.
    pub fn from_gaps(gaps: &[f64], tau: f64) -> Result<Self> {
        let mut t = 0.0;
        let times = gaps
            .iter()
            .map(|&x| {
                t += x;
                t
            })
            .collect::<Vec<_>>();
        // Summation order can push the last time a hair past tau.
        let times = match times.last() {
            Some(&last) if last > tau && last - tau <= 1e-9 * tau => {
                let mut times = times;
                *times.last_mut().unwrap() = tau;
                times
            }
            _ => times,
        };
        Self::new(times, tau)
    }

    /// Multiplies all event times and the censoring time by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.times.iter().map(|t| t * factor).collect(),
            self.tau * factor,
        )
    }
}

/// Interevent times of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct Gaps {
    pub complete: Vec<f64>,
    /// `tau - T_n`; zero when the last event falls on `tau`.
    pub remainder: f64,
}

/// One named process.
#[derive(Debug, Clone, PartialEq)]
pub struct Process {
    pub id: String,
    pub series: EventSeries,
}

/// Independent processes, each with its own censoring time.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiProcessData {
    processes: Vec<Process>,
}

impl MultiProcessData {
    pub fn new(processes: Vec<Process>) -> Result<Self> {
        if processes.is_empty() {
            return Err(Error::InvalidData("no processes".into()));
        }
        let mut seen = HashMap::new();
        for p in &processes {
            if seen.insert(p.id.as_str(), ()).is_some() {
                return Err(Error::InvalidData(format!(
                    "duplicate process id '{}'",
                    p.id
                )));
            }
        }
        Ok(Self { processes })
    }

    pub fn single(id: impl Into<String>, series: EventSeries) -> Self {
        Self {
            processes: vec![Process {
                id: id.into(),
                series,
            }],
        }
    }

    pub fn processes(&self) -> &[Process] {
        &self.processes
    }

    pub fn series(&self) -> impl Iterator<Item = &EventSeries> {
        self.processes.iter().map(|p| &p.series)
    }

    pub fn len(&self) -> usize {
        self.processes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.processes.is_empty()
    }

    pub fn total_events(&self) -> usize {
        self.series().map(EventSeries::len).sum()
    }

    pub fn get(&self, id: &str) -> Option<&EventSeries> {
        self.processes
            .iter()
            .find(|p| p.id == id)
            .map(|p| &p.series)
    }
}

/// Supported input formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    LongCsv,
    Json,
}

/// Parses event data.
///
/// `default_tau` supplies the censoring time for processes that have no row
/// in the `#censoring` section (long CSV only).
///
/// Long CSV processes are ordered by their censoring row, then by first
/// appearance for processes without one.
pub fn parse_events(
    text: &str,
    format: DataFormat,
    default_tau: Option<f64>,
) -> Result<MultiProcessData> {
    match format {
        DataFormat::LongCsv => parse_long_csv(text, default_tau),
        DataFormat::Json => parse_json(text),
    }
}

struct PendingProcess {
    id: String,
    first_line: usize,
    events: Vec<(f64, usize)>,
    tau: Option<(f64, usize)>,
}

fn parse_number(field: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::parse(line, format!("non-numeric {what} '{}'", field.trim())))?;
    if !v.is_finite() {
        return Err(Error::parse(
            line,
            format!("non-finite {what} '{}'", field.trim()),
        ));
    }
    Ok(v)
}

fn split_row(raw: &str, line: usize) -> Result<(&str, &str)> {
    let mut it = raw.split(',');
    match (it.next(), it.next(), it.next()) {
        (Some(a), Some(b), None) if !a.trim().is_empty() => Ok((a.trim(), b)),
        _ => Err(Error::parse(
            line,
            format!("expected two fields, got '{raw}'"),
        )),
    }
}

fn parse_long_csv(text: &str, default_tau: Option<f64>) -> Result<MultiProcessData> {
    let mut pending: Vec<PendingProcess> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut seen_header = false;
    let mut in_censoring = false;

    let mut lookup = |pending: &mut Vec<PendingProcess>, id: &str, line: usize| -> usize {
        *index.entry(id.to_string()).or_insert_with(|| {
            pending.push(PendingProcess {
                id: id.to_string(),
                first_line: line,
                events: Vec::new(),
                tau: None,
            });
            pending.len() - 1
        })
    };

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed.starts_with('#') {
            if trimmed.trim_start_matches('#').trim() == "censoring" {
                if !seen_header {
                    return Err(Error::parse(line, "censoring section before header"));
                }
                in_censoring = true;
            }
            continue;
        }
        if !seen_header {
            let (a, b) = split_row(trimmed, line)?;
            if a != "process_id" || b.trim() != "event_time" {
                return Err(Error::parse(
                    line,
                    "expected header 'process_id,event_time'",
                ));
            }
            seen_header = true;
            continue;
        }
        let (id, value) = split_row(trimmed, line)?;
        if in_censoring {
            if id == "process_id" && value.trim() == "tau" {
                continue;
            }
            let tau = parse_number(value, line, "censoring time")?;
            if tau <= 0.0 {
                return Err(Error::parse(
                    line,
                    format!("censoring time {tau} is not positive"),
                ));
            }
            let k = lookup(&mut pending, id, line);
            if pending[k].tau.is_some() {
                return Err(Error::parse(
                    line,
                    format!("duplicate censoring time for '{id}'"),
                ));
            }
            pending[k].tau = Some((tau, line));
        } else {
            let t = parse_number(value, line, "event time")?;
            if t <= 0.0 {
                return Err(Error::parse(
                    line,
                    format!("event time {t} is not positive"),
                ));
            }
            let k = lookup(&mut pending, id, line);
            pending[k].events.push((t, line));
        }
    }
    if !seen_header {
        return Err(Error::parse(1, "missing header 'process_id,event_time'"));
    }

    pending.sort_by_key(|p| match p.tau {
        Some((_, line)) => (false, line),
        None => (true, p.first_line),
    });
    let mut processes = Vec::with_capacity(pending.len());
    for p in pending {
        let tau = match (p.tau, default_tau) {
            (Some((tau, _)), _) => tau,
            (None, Some(tau)) => tau,
            (None, None) => {
                return Err(Error::parse(
                    p.first_line,
                    format!("censoring time missing for process '{}'", p.id),
                ))
            }
        };
        let mut events = p.events;
        events.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in events.windows(2) {
            if w[0].0 == w[1].0 {
                let line = w[0].1.max(w[1].1);
                return Err(Error::parse(
                    line,
                    format!("duplicate event time {} in process '{}'", w[1].0, p.id),
                ));
            }
        }
        if let Some(&(t, line)) = events.iter().find(|(t, _)| *t > tau) {
            return Err(Error::parse(
                line,
                format!(
                    "event after censoring time: {t} > {tau} in process '{}'",
                    p.id
                ),
            ));
        }
        let series = EventSeries::new(events.into_iter().map(|(t, _)| t).collect(), tau)?;
        processes.push(Process { id: p.id, series });
    }
    MultiProcessData::new(processes)
}

#[derive(Serialize, Deserialize)]
struct JsonData {
    processes: Vec<JsonProcess>,
}

#[derive(Serialize, Deserialize)]
struct JsonProcess {
    id: String,
    tau: f64,
    events: Vec<f64>,
}

fn parse_json(text: &str) -> Result<MultiProcessData> {
    let raw: JsonData =
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
    let mut processes = Vec::with_capacity(raw.processes.len());
    for p in raw.processes {
        let mut events = p.events;
        events.sort_by(f64::total_cmp);
        if let Some(w) = events.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidData(format!(
                "duplicate event time {} in process '{}'",
                w[0], p.id
            )));
        }
        let series = EventSeries::new(events, p.tau)
            .map_err(|e| Error::InvalidData(format!("process '{}': {e}", p.id)))?;
        processes.push(Process { id: p.id, series });
    }
    MultiProcessData::new(processes)
}

/// Writes long CSV with a `#censoring` section covering every process.
pub fn to_long_csv(data: &MultiProcessData) -> String {
    let mut out = String::from("process_id,event_time\n");
    for p in data.processes() {
        for t in p.series.times() {
            let _ = writeln!(out, "{},{}", p.id, t);
        }
    }
    out.push_str("#censoring\nprocess_id,tau\n");
    for p in data.processes() {
        let _ = writeln!(out, "{},{}", p.id, p.series.tau());
    }
    out
}

pub fn to_json(data: &MultiProcessData) -> String {
    let raw = JsonData {
        processes: data
            .processes()
            .iter()
            .map(|p| JsonProcess {
                id: p.id.clone(),
                tau: p.series.tau(),
                events: p.series.times().to_vec(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("plain data serializes")
}

/// Load-haul-dump machine failure times in hours, censored at 2000 hours.
pub const LHD_TIMES: [f64; 36] = [
    16.0, 39.0, 71.0, 95.0, 98.0, 110.0, 114.0, 226.0, 294.0, 344.0, 555.0, 599.0, 757.0, 822.0,
    963.0, 1077.0, 1167.0, 1202.0, 1257.0, 1317.0, 1345.0, 1372.0, 1402.0, 1536.0, 1625.0, 1643.0,
    1675.0, 1726.0, 1736.0, 1772.0, 1796.0, 1799.0, 1814.0, 1868.0, 1894.0, 1970.0,
];
pub const LHD_TAU: f64 = 2000.0;

pub fn lhd() -> EventSeries {
    EventSeries::new(LHD_TIMES.to_vec(), LHD_TAU).expect("bundled data is valid")
}

/// Names of the bundled datasets.
pub const BUNDLED: &[&str] = &["lhd"];

/// Loads a bundled dataset by name.
pub fn bundled(name: &str) -> Option<MultiProcessData> {
    match name {
        "lhd" => Some(MultiProcessData::single("lhd", lhd())),
        _ => None,
    }
}
