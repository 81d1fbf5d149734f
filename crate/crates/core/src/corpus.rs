//! Document ingestion and per-day aggregation.
//!
//! A [`Corpus`] is an immutable, timestamp-sorted list of [`Doc`]s. Days are
//! calendar days in UTC shifted by an optional fixed offset, so that the same
//! file always yields the same daily series regardless of the host timezone.

use std::collections::{HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Duration, NaiveDate, NaiveDateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::phasing::Phase;

/// Inclusive calendar-date interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(Error::InvalidInput(format!(
                "date range ends ({end}) before it starts ({start})"
            )));
        }
        Ok(DateRange { start, end })
    }

    /// Number of days, counting both ends.
    pub fn days(&self) -> usize {
        (self.end - self.start).num_days() as usize + 1
    }

    pub fn contains(&self, date: NaiveDate) -> bool {
        self.start <= date && date <= self.end
    }

    /// Day offset of `date` from `start`, if it lies inside the range.
    pub fn offset_of(&self, date: NaiveDate) -> Option<usize> {
        self.contains(date)
            .then(|| (date - self.start).num_days() as usize)
    }

    pub fn iter(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        (0..self.days()).map(move |i| self.start + Duration::days(i as i64))
    }
}

/// Consecutive per-day values anchored at `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySeries {
    pub start: NaiveDate,
    pub values: Vec<f64>,
}

impl DailySeries {
    pub fn new(start: NaiveDate, values: Vec<f64>) -> Self {
        DailySeries { start, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn date_at(&self, index: usize) -> NaiveDate {
        self.start + Duration::days(index as i64)
    }

    /// Last covered date, or `None` for an empty series.
    pub fn end(&self) -> Option<NaiveDate> {
        (!self.values.is_empty()).then(|| self.date_at(self.values.len() - 1))
    }

    pub fn get(&self, date: NaiveDate) -> Option<f64> {
        let offset = (date - self.start).num_days();
        if offset < 0 {
            return None;
        }
        self.values.get(offset as usize).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NaiveDate, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.date_at(i), v))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Doc {
    pub id: String,
    pub timestamp: DateTime<Utc>,
    pub text: String,
    pub retweet_count: u64,
    pub user_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lang: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    Jsonl,
    Csv,
}

impl InputFormat {
    /// Guess from the file extension; anything other than `.csv` reads as JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => InputFormat::Csv,
            _ => InputFormat::Jsonl,
        }
    }
}

impl FromStr for InputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" | "ndjson" => Ok(InputFormat::Jsonl),
            "csv" => Ok(InputFormat::Csv),
            other => Err(Error::Config(format!("unknown input format `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: Vec<Doc>,
    /// Malformed records that were skipped during loading.
    pub skipped: usize,
    /// Records dropped because their id had already been seen.
    pub duplicates: usize,
    day_offset_secs: i64,
}

impl Corpus {
    /// Builds a corpus from already-parsed documents: sorts by timestamp and
    /// keeps the first occurrence of each id.
    pub fn from_docs(docs: Vec<Doc>) -> Self {
        let mut seen = HashSet::new();
        let mut kept = Vec::with_capacity(docs.len());
        let mut duplicates = 0;
        for doc in docs {
            if seen.insert(doc.id.clone()) {
                kept.push(doc);
            } else {
                log::warn!("duplicate document id `{}`, keeping the first", doc.id);
                duplicates += 1;
            }
        }
        kept.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.id.cmp(&b.id)));
        Corpus {
            docs: kept,
            skipped: 0,
            duplicates,
            day_offset_secs: 0,
        }
    }

    /// Shift day boundaries away from UTC midnight by a whole number of hours.
    pub fn with_day_offset_hours(mut self, hours: i32) -> Self {
        self.day_offset_secs = i64::from(hours) * 3600;
        self
    }

    pub fn docs(&self) -> &[Doc] {
        &self.docs
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Calendar day a document is attributed to.
    pub fn date_of(&self, doc: &Doc) -> NaiveDate {
        (doc.timestamp + Duration::seconds(self.day_offset_secs)).date_naive()
    }

    /// Span from the first to the last document day.
    pub fn date_range(&self) -> Option<DateRange> {
        let first = self.docs.first()?;
        let last = self.docs.last()?;
        Some(DateRange {
            start: self.date_of(first),
            end: self.date_of(last),
        })
    }

    /// Documents whose day falls inside `window`, in timestamp order.
    pub fn docs_in(&self, window: DateRange) -> impl Iterator<Item = &Doc> + '_ {
        self.docs
            .iter()
            .filter(move |d| window.contains(self.date_of(d)))
    }

    pub fn index_by_id(&self) -> HashMap<&str, &Doc> {
        self.docs.iter().map(|d| (d.id.as_str(), d)).collect()
    }

    /// Restrict to `window`, keeping the load counters.
    pub fn filter_window(&self, window: DateRange) -> Corpus {
        Corpus {
            docs: self.docs_in(window).cloned().collect(),
            skipped: self.skipped,
            duplicates: self.duplicates,
            day_offset_secs: self.day_offset_secs,
        }
    }
}

pub fn load_corpus(path: &Path, format: InputFormat) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let (docs, skipped) = match format {
        InputFormat::Jsonl => parse_jsonl(reader).map_err(|e| Error::io(path, e))?,
        InputFormat::Csv => parse_csv(reader).map_err(|e| Error::format(path, e.to_string()))?,
    };
    let mut corpus = Corpus::from_docs(docs);
    corpus.skipped = skipped;
    if skipped > 0 {
        log::warn!("{}: skipped {skipped} malformed record(s)", path.display());
    }
    Ok(corpus)
}

/// Parses JSON lines; returns the documents and the number of skipped records.
pub fn parse_jsonl<R: BufRead>(reader: R) -> std::io::Result<(Vec<Doc>, usize)> {
    let mut docs = Vec::new();
    let mut skipped = 0;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<Value>(&line)
            .map_err(|e| e.to_string())
            .and_then(|v| doc_from_json(&v));
        match parsed {
            Ok(doc) => docs.push(doc),
            Err(msg) => {
                log::warn!("line {}: {msg}", lineno + 1);
                skipped += 1;
            }
        }
    }
    Ok((docs, skipped))
}

fn doc_from_json(value: &Value) -> std::result::Result<Doc, String> {
    let obj = value.as_object().ok_or("record is not a JSON object")?;
    let text_field = |key: &str| -> std::result::Result<String, String> {
        match obj.get(key) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(Value::Null) | None => Err(format!("missing `{key}`")),
            Some(_) => Err(format!("`{key}` has the wrong type")),
        }
    };
    let id = text_field("id")?;
    let timestamp = match obj.get("timestamp") {
        Some(Value::Number(n)) => n
            .as_i64()
            .and_then(|secs| DateTime::from_timestamp(secs, 0))
            .ok_or("`timestamp` is not an integer epoch")?,
        Some(Value::String(s)) => parse_timestamp(s)?,
        _ => return Err("missing `timestamp`".into()),
    };
    let retweet_count = match obj.get("retweet_count") {
        Some(Value::Number(n)) => n
            .as_u64()
            .ok_or("`retweet_count` must be a non-negative integer")?,
        Some(Value::String(s)) => parse_count(s)?,
        _ => return Err("missing `retweet_count`".into()),
    };
    let lang = match obj.get("lang") {
        Some(Value::String(s)) if !s.is_empty() => Some(s.clone()),
        _ => None,
    };
    build_doc(
        id,
        timestamp,
        text_field("text")?,
        retweet_count,
        text_field("user_id")?,
        lang,
    )
}

#[derive(Debug, Deserialize)]
struct CsvRecord {
    id: Option<String>,
    timestamp: Option<String>,
    text: Option<String>,
    retweet_count: Option<String>,
    user_id: Option<String>,
    #[serde(default)]
    lang: Option<String>,
}

/// Parses RFC-4180 CSV with a header row; returns the documents and the
/// number of skipped records.
pub fn parse_csv<R: Read>(reader: R) -> csv::Result<(Vec<Doc>, usize)> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let mut docs = Vec::new();
    let mut skipped = 0;
    for (i, rec) in rdr.deserialize::<CsvRecord>().enumerate() {
        let parsed = rec.map_err(|e| e.to_string()).and_then(doc_from_csv);
        match parsed {
            Ok(doc) => docs.push(doc),
            Err(msg) => {
                log::warn!("record {}: {msg}", i + 1);
                skipped += 1;
            }
        }
    }
    Ok((docs, skipped))
}

fn doc_from_csv(rec: CsvRecord) -> std::result::Result<Doc, String> {
    fn required(field: Option<String>, name: &str) -> std::result::Result<String, String> {
        field.ok_or_else(|| format!("missing `{name}`"))
    }
    let ts = required(rec.timestamp, "timestamp")?;
    if ts.trim().is_empty() {
        return Err("missing `timestamp`".into());
    }
    let timestamp = parse_timestamp(&ts)?;
    let retweet_count = parse_count(&required(rec.retweet_count, "retweet_count")?)?;
    let lang = rec.lang.filter(|l| !l.is_empty());
    build_doc(
        required(rec.id, "id")?,
        timestamp,
        required(rec.text, "text")?,
        retweet_count,
        required(rec.user_id, "user_id")?,
        lang,
    )
}

fn build_doc(
    id: String,
    timestamp: DateTime<Utc>,
    text: String,
    retweet_count: u64,
    user_id: String,
    lang: Option<String>,
) -> std::result::Result<Doc, String> {
    if id.trim().is_empty() {
        return Err("empty `id`".into());
    }
    if user_id.trim().is_empty() {
        return Err("empty `user_id`".into());
    }
    Ok(Doc {
        id,
        timestamp,
        text,
        retweet_count,
        user_id,
        lang,
    })
}

fn parse_count(s: &str) -> std::result::Result<u64, String> {
    s.trim()
        .parse::<u64>()
        .map_err(|_| format!("`retweet_count` must be a non-negative integer, got `{s}`"))
}

/// Accepts RFC 3339, common naive ISO-8601 layouts (read as UTC), bare dates,
/// Twitter's `created_at` layout, and integer epoch seconds.
pub fn parse_timestamp(s: &str) -> std::result::Result<DateTime<Utc>, String> {
    let s = s.trim();
    if let Ok(secs) = s.parse::<i64>() {
        return DateTime::from_timestamp(secs, 0)
            .ok_or_else(|| format!("epoch `{s}` out of range"));
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Ok(dt.with_timezone(&Utc));
    }
    for layout in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
    ] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, layout) {
            return Ok(naive.and_utc());
        }
    }
    if let Ok(dt) = DateTime::parse_from_str(s, "%a %b %d %H:%M:%S %z %Y") {
        return Ok(dt.with_timezone(&Utc));
    }
    if let Ok(date) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Ok(date.and_hms_opt(0, 0, 0).expect("midnight").and_utc());
    }
    Err(format!("unrecognised timestamp `{s}`"))
}

/// Number of documents per day over `window`.
pub fn daily_counts(corpus: &Corpus, window: DateRange) -> DailySeries {
    let mut values = vec![0.0; window.days()];
    let mut inside = 0usize;
    for doc in corpus.docs() {
        if let Some(i) = window.offset_of(corpus.date_of(doc)) {
            values[i] += 1.0;
            inside += 1;
        }
    }
    if inside == 0 && !corpus.is_empty() {
        log::warn!(
            "window {}..{} contains none of the {} documents",
            window.start,
            window.end,
            corpus.len()
        );
    }
    DailySeries::new(window.start, values)
}

/// One row of `daily_counts.csv`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DailyRow {
    pub date: NaiveDate,
    pub tweets: u64,
    pub retweets: u64,
    pub unique_users: u64,
}

pub fn daily_table(corpus: &Corpus, window: DateRange) -> Vec<DailyRow> {
    let mut tweets = vec![0u64; window.days()];
    let mut retweets = vec![0u64; window.days()];
    let mut users: Vec<HashSet<&str>> = vec![HashSet::new(); window.days()];
    for doc in corpus.docs() {
        if let Some(i) = window.offset_of(corpus.date_of(doc)) {
            tweets[i] += 1;
            retweets[i] += doc.retweet_count;
            users[i].insert(doc.user_id.as_str());
        }
    }
    window
        .iter()
        .enumerate()
        .map(|(i, date)| DailyRow {
            date,
            tweets: tweets[i],
            retweets: retweets[i],
            unique_users: users[i].len() as u64,
        })
        .collect()
}

/// Per-phase rates: users/day, tweets/day (A), retweets/day (B) and depth B/A.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStats {
    pub phase_index: usize,
    pub days: usize,
    pub users_per_day: f64,
    pub tweets_per_day: f64,
    pub retweets_per_day: f64,
    pub depth: f64,
    /// Set when the phase has no tweets and `depth` is reported as 0.
    pub depth_undefined: bool,
}

/// Retweets per day divided by tweets per day; `None` when there are no tweets.
pub fn tweet_depth(tweets_per_day: f64, retweets_per_day: f64) -> Option<f64> {
    (tweets_per_day > 0.0).then(|| retweets_per_day / tweets_per_day)
}

pub fn phase_stats(corpus: &Corpus, phase: &Phase) -> Result<PhaseStats> {
    if phase.end < phase.start {
        return Err(Error::InvalidInput(format!(
            "phase {} is empty",
            phase.index
        )));
    }
    let span = phase.range();
    let days = span.days();
    let rows = daily_table(corpus, span);
    let tweets: u64 = rows.iter().map(|r| r.tweets).sum();
    let retweets: u64 = rows.iter().map(|r| r.retweets).sum();
    let users: u64 = rows.iter().map(|r| r.unique_users).sum();
    let n = days as f64;
    let tweets_per_day = tweets as f64 / n;
    let retweets_per_day = retweets as f64 / n;
    let depth = tweet_depth(tweets_per_day, retweets_per_day);
    if depth.is_none() {
        log::warn!("phase {} has no tweets; depth reported as 0", phase.index);
    }
    Ok(PhaseStats {
        phase_index: phase.index,
        days,
        users_per_day: users as f64 / n,
        tweets_per_day,
        retweets_per_day,
        depth: depth.unwrap_or(0.0),
        depth_undefined: depth.is_none(),
    })
}
