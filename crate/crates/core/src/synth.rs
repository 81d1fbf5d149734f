//! Synthetic series and corpora with exact ledgers of what was planted.
//!
//! Everything the ledger claims is computed here by direct procedures
//! (exhaustive condition scans, recounts, planted labels) and never by the
//! modules the ledger is used to check. In particular the oracle smoother
//! designs its Butterworth filter from the analog pole positions and runs it
//! as a direct-form-I recursion, independently of [`crate::signal`].

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::{DailySeries, DateRange, Doc};
use crate::error::{Error, Result};

/// Letters used for generated words. No vowels, so generated text can never
/// contain a mention alias by accident (aliases must contain a vowel).
const CONSONANTS: &[u8] = b"bcdfghjklmnpqrstvwxz";
const WORD_WIDTH: u32 = 4;

/// Volume burst: from `start` the daily level rises by `ramp_slope` per day
/// until it sits `plateau` above where it was.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Burst {
    pub start: NaiveDate,
    pub ramp_slope: f64,
    pub plateau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSpec {
    /// Relative share of documents.
    pub share: f64,
    /// Explicit signature words; generated when empty.
    #[serde(default)]
    pub words: Vec<String>,
    #[serde(default = "default_signature_size")]
    pub signature_size: usize,
    /// Zipf exponent for word frequencies inside the signature (0 = uniform).
    #[serde(default)]
    pub zipf: f64,
    /// One or two theme labels for this topic.
    #[serde(default)]
    pub themes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MentionPlant {
    pub country: String,
    pub alias: String,
    /// Probability that a document carries this alias.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub window: DateRange,
    pub anchor: NaiveDate,
    #[serde(default = "default_baseline")]
    pub baseline_rate: f64,
    #[serde(default)]
    pub bursts: Vec<Burst>,
    /// Standard deviation of daily noise as a fraction of the level.
    #[serde(default)]
    pub noise: f64,
    /// Whether the oracle smooths before differencing.
    #[serde(default = "yes")]
    pub smoothing: bool,
    #[serde(default = "default_cutoff")]
    pub cutoff: f64,
    #[serde(default)]
    pub topics: Vec<TopicSpec>,
    #[serde(default = "yes")]
    pub separable: bool,
    #[serde(default = "default_doc_length")]
    pub doc_length: usize,
    #[serde(default)]
    pub mentions: Vec<MentionPlant>,
    #[serde(default = "default_users")]
    pub users: usize,
    #[serde(default = "default_retweet_mean")]
    pub retweet_mean: f64,
}

fn default_signature_size() -> usize {
    50
}
fn default_baseline() -> f64 {
    10.0
}
fn yes() -> bool {
    true
}
fn default_cutoff() -> f64 {
    0.2
}
fn default_doc_length() -> usize {
    20
}
fn default_users() -> usize {
    500
}
fn default_retweet_mean() -> f64 {
    2.0
}

impl SynthSpec {
    /// Flat baseline, no bursts, no topics.
    pub fn new(window: DateRange, anchor: NaiveDate, seed: u64) -> Self {
        SynthSpec {
            seed,
            window,
            anchor,
            baseline_rate: default_baseline(),
            bursts: Vec::new(),
            noise: 0.0,
            smoothing: true,
            cutoff: default_cutoff(),
            topics: Vec::new(),
            separable: true,
            doc_length: default_doc_length(),
            mentions: Vec::new(),
            users: default_users(),
            retweet_mean: default_retweet_mean(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: SynthSpec =
            toml::from_str(text).map_err(|e| Error::Config(format!("synth spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Oracle smoothing cutoff, `None` when smoothing is off.
    pub fn smoothing_cutoff(&self) -> Option<f64> {
        self.smoothing.then_some(self.cutoff)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(format!("synth spec: {m}")));
        if !self.window.contains(self.anchor) {
            return bad(format!("anchor {} outside the window", self.anchor));
        }
        if self.window.days() < 3 {
            return bad("window needs at least 3 days".into());
        }
        if (self.anchor - self.window.start).num_days() < 2 {
            return bad("anchor needs two days of history for its acceleration".into());
        }
        if self.baseline_rate < 0.0 || self.noise < 0.0 || self.retweet_mean < 0.0 {
            return bad("rates and noise must be non-negative".into());
        }
        if self.smoothing && !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return bad(format!("cutoff {} outside (0, 1)", self.cutoff));
        }
        for b in &self.bursts {
            if !self.window.contains(b.start) {
                return bad(format!("burst at {} outside the window", b.start));
            }
            if b.ramp_slope <= 0.0 || b.plateau < 0.0 {
                return bad(format!("burst at {} needs a positive slope", b.start));
            }
        }
        if self.bursts.windows(2).any(|w| w[0].start >= w[1].start) {
            return bad("burst starts must be strictly increasing".into());
        }
        if !self.topics.is_empty() {
            if self.doc_length == 0 || self.users == 0 {
                return bad("doc_length and users must be positive".into());
            }
            if self.topics.iter().any(|t| t.share < 0.0)
                || self.topics.iter().all(|t| t.share == 0.0)
            {
                return bad("topic shares must be non-negative with a positive total".into());
            }
            let labelled = self.topics.iter().filter(|t| !t.themes.is_empty()).count();
            if labelled != 0 && labelled != self.topics.len() {
                return bad("either every topic has themes or none does".into());
            }
            if self.topics.iter().any(|t| t.themes.len() > 2) {
                return bad("at most two themes per topic".into());
            }
            if self
                .topics
                .iter()
                .any(|t| t.words.is_empty() && t.signature_size == 0)
            {
                return bad("every topic needs signature words".into());
            }
            if self.separable {
                let mut seen = BTreeSet::new();
                for w in self.topics.iter().flat_map(|t| &t.words) {
                    if !seen.insert(w) {
                        return bad(format!("word `{w}` appears in two signatures"));
                    }
                }
            }
        }
        for m in &self.mentions {
            if !(0.0..=1.0).contains(&m.rate) {
                return bad(format!("mention rate {} outside [0, 1]", m.rate));
            }
            let alias = m.alias.to_lowercase();
            if !alias.bytes().any(|c| b"aeiouy".contains(&c)) {
                return bad(format!("alias `{}` needs a vowel", m.alias));
            }
        }
        Ok(())
    }
}

/// The `n`-th generated word, a fixed-width string of consonants.
pub fn synthetic_word(n: usize) -> String {
    let base = CONSONANTS.len();
    let mut rest = n;
    let mut out = vec![b'b'; WORD_WIDTH as usize];
    for slot in out.iter_mut().rev() {
        *slot = CONSONANTS[rest % base];
        rest /= base;
    }
    String::from_utf8(out).expect("ascii")
}

/// Signature vocabularies in topic order. Generated signatures never overlap.
pub fn signatures(spec: &SynthSpec) -> Vec<Vec<String>> {
    let mut next = 0;
    spec.topics
        .iter()
        .map(|t| {
            if t.words.is_empty() {
                let words = (next..next + t.signature_size)
                    .map(synthetic_word)
                    .collect();
                next += t.signature_size;
                words
            } else {
                t.words.iter().map(|w| w.to_lowercase()).collect()
            }
        })
        .collect()
}

/// Thresholds as the oracle derives them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleThresholds {
    pub velocity: i64,
    pub acceleration: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesLedger {
    pub start: NaiveDate,
    pub anchor: NaiveDate,
    /// Emitted daily counts (noise included).
    pub values: Vec<f64>,
    /// Daily counts before noise; the oracle scan runs on these.
    pub noise_free: Vec<f64>,
    pub cutoff: Option<f64>,
    pub burst_starts: Vec<NaiveDate>,
    pub thresholds: OracleThresholds,
    /// Every date from the anchor on that satisfies the joint condition.
    pub qualifying: Vec<NaiveDate>,
    pub boundaries: Vec<NaiveDate>,
}

impl SeriesLedger {
    /// Inclusive `(index, start, end)` spans implied by the oracle boundaries.
    pub fn phase_spans(&self) -> Vec<(usize, NaiveDate, NaiveDate)> {
        let end = self.start + Duration::days(self.values.len() as i64 - 1);
        let mut spans = Vec::new();
        if self.anchor > self.start {
            spans.push((0, self.start, self.anchor - Duration::days(1)));
        }
        for (i, b) in self.boundaries.iter().enumerate() {
            let stop = self
                .boundaries
                .get(i + 1)
                .map_or(end, |n| *n - Duration::days(1));
            spans.push((i + 1, *b, stop));
        }
        spans
    }
}

/// Noise-free daily level at day offset `t`.
fn level(spec: &SynthSpec, t: i64) -> f64 {
    let day = spec.window.start + Duration::days(t);
    let mut v = spec.baseline_rate;
    for b in &spec.bursts {
        let since = (day - b.start).num_days();
        if since >= 0 {
            v += (b.ramp_slope * (since + 1) as f64).min(b.plateau);
        }
    }
    v
}

pub fn gen_series(spec: &SynthSpec) -> Result<(DailySeries, SeriesLedger)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.window.days();
    let noise_free: Vec<f64> = (0..n as i64).map(|t| level(spec, t).round()).collect();
    let values: Vec<f64> = if spec.noise > 0.0 {
        noise_free
            .iter()
            .map(|&v| {
                let sd = spec.noise * v.max(1.0);
                let e: f64 = Normal::new(0.0, sd).expect("finite sd").sample(&mut rng);
                (v + e).round().max(0.0)
            })
            .collect()
    } else {
        noise_free.clone()
    };

    let smoothed = match spec.smoothing_cutoff() {
        Some(c) => oracle::smooth(&noise_free, c),
        None => noise_free.clone(),
    };
    let anchor_idx = (spec.anchor - spec.window.start).num_days() as usize;
    let scan = oracle::scan(&smoothed, anchor_idx);
    let day = |i: usize| spec.window.start + Duration::days(i as i64);
    let ledger = SeriesLedger {
        start: spec.window.start,
        anchor: spec.anchor,
        values: values.clone(),
        noise_free,
        cutoff: spec.smoothing_cutoff(),
        burst_starts: spec.bursts.iter().map(|b| b.start).collect(),
        thresholds: scan.thresholds,
        qualifying: scan.qualifying.into_iter().map(day).collect(),
        boundaries: scan.boundaries.into_iter().map(day).collect(),
    };
    Ok((DailySeries::new(spec.window.start, values), ledger))
}

/// Brute-force reference computations.
pub mod oracle {
    use super::OracleThresholds;

    /// Second-order Butterworth low-pass coefficients `(b, a)` from the analog
    /// prototype poles, prewarped and mapped through the bilinear transform.
    pub fn butterworth(cutoff: f64) -> ([f64; 3], [f64; 3]) {
        let omega = 2.0 * (std::f64::consts::PI * cutoff / 2.0).tan();
        // conjugate pole pair at angles 3pi/4 and 5pi/4
        let theta = 3.0 * std::f64::consts::FRAC_PI_4;
        let (sr, si) = (omega * theta.cos(), omega * theta.sin());
        // z = (2 + s) / (2 - s)
        let (nr, ni) = (2.0 + sr, si);
        let (dr, di) = (2.0 - sr, -si);
        let den = dr * dr + di * di;
        let (zr, zi) = ((nr * dr + ni * di) / den, (ni * dr - nr * di) / den);
        let a = [1.0, -2.0 * zr, zr * zr + zi * zi];
        let g = (a[0] + a[1] + a[2]) / 4.0;
        ([g, 2.0 * g, g], a)
    }

    /// Direct-form-I pass with the history preloaded at `x[0]` (the filter's
    /// DC gain is one, so that is its steady state for a constant input).
    fn pass(b: &[f64; 3], a: &[f64; 3], x: &[f64]) -> Vec<f64> {
        let x0 = x[0];
        let (mut x1, mut x2, mut y1, mut y2) = (x0, x0, x0, x0);
        x.iter()
            .map(|&xi| {
                let yi = b[0] * xi + b[1] * x1 + b[2] * x2 - a[1] * y1 - a[2] * y2;
                x2 = x1;
                x1 = xi;
                y2 = y1;
                y1 = yi;
                yi
            })
            .collect()
    }

    /// Forward-backward filtering with six mirrored samples at each end.
    pub fn smooth(x: &[f64], cutoff: f64) -> Vec<f64> {
        const EDGE: usize = 6;
        let n = x.len();
        if n <= EDGE {
            return x.to_vec();
        }
        let (b, a) = butterworth(cutoff);
        let mut padded: Vec<f64> = (1..=EDGE).rev().map(|i| x[i]).collect();
        padded.extend_from_slice(x);
        padded.extend((2..=EDGE + 1).map(|i| x[n - i]));
        let mut y = pass(&b, &a, &padded);
        y.reverse();
        let mut y = pass(&b, &a, &y);
        y.reverse();
        y[EDGE..EDGE + n].to_vec()
    }

    pub struct Scan {
        pub thresholds: OracleThresholds,
        pub qualifying: Vec<usize>,
        pub boundaries: Vec<usize>,
    }

    /// Evaluates the joint condition on every day from `anchor` on, using
    /// backward differences of `s`.
    pub fn scan(s: &[f64], anchor: usize) -> Scan {
        let vel = |i: usize| s[i] - s[i - 1];
        let acc = |i: usize| s[i] - 2.0 * s[i - 1] + s[i - 2];
        let thresholds = OracleThresholds {
            velocity: vel(anchor).floor() as i64 + 1,
            acceleration: acc(anchor).floor() as i64,
        };
        let holds = |i: usize| {
            let v = vel(i);
            v > 0.0 && v < thresholds.velocity as f64 && acc(i) > thresholds.acceleration as f64
        };
        let qualifying: Vec<usize> = (anchor..s.len()).filter(|&i| holds(i)).collect();
        let mut boundaries = vec![anchor];
        for &i in &qualifying {
            if i > anchor && !holds(i - 1) {
                boundaries.push(i);
            }
        }
        Scan {
            thresholds,
            qualifying,
            boundaries,
        }
    }

    /// Largest-first prefix covering at least three quarters of the total.
    pub fn major_set(sizes: &[usize]) -> Vec<usize> {
        let total: usize = sizes.iter().sum();
        let mut order: Vec<usize> = (0..sizes.len()).filter(|&t| sizes[t] > 0).collect();
        order.sort_by_key(|&t| (std::cmp::Reverse(sizes[t]), t));
        let mut kept = Vec::new();
        let mut covered = 0;
        for t in order {
            if covered * 4 >= total * 3 {
                break;
            }
            covered += sizes[t];
            kept.push(t);
        }
        kept.sort_unstable();
        kept
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayLedger {
    pub date: NaiveDate,
    pub tweets: u64,
    pub retweets: u64,
    pub unique_users: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocLedger {
    pub id: String,
    pub date: NaiveDate,
    pub topic: usize,
    pub mentions: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseLedger {
    pub index: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub topic_sizes: Vec<usize>,
    pub major: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub date: NaiveDate,
    pub key: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusLedger {
    pub seed: u64,
    pub series: SeriesLedger,
    pub signatures: Vec<Vec<String>>,
    pub days: Vec<DayLedger>,
    pub docs: Vec<DocLedger>,
    pub topic_sizes: Vec<usize>,
    /// Phases from the oracle boundaries, with planted topic sizes and the
    /// topics a cumulative-75% filter keeps in each.
    pub phases: Vec<PhaseLedger>,
    /// `(phase, topic, themes)` for every kept topic, when topics carry themes.
    pub labels: Vec<(usize, usize, Vec<String>)>,
    /// Expected theme trends for the planted assignment restricted to kept topics.
    pub theme_trends: Vec<LedgerRow>,
    pub mention_trends: Vec<LedgerRow>,
}

impl CorpusLedger {
    /// Planted topic per doc id, for the docs of phase `index`.
    pub fn planted_assignments(&self, index: usize) -> Vec<(String, usize)> {
        let Some(p) = self.phases.iter().find(|p| p.index == index) else {
            return Vec::new();
        };
        self.docs
            .iter()
            .filter(|d| p.start <= d.date && d.date <= p.end)
            .map(|d| (d.id.clone(), d.topic))
            .collect()
    }

    /// The `labels` field rendered as a `phase,topic,themes` CSV.
    pub fn labels_csv(&self) -> String {
        let mut out = String::from("phase,topic,themes\n");
        for (p, t, themes) in &self.labels {
            out.push_str(&format!("{p},{t},{}\n", themes.join("|")));
        }
        out
    }
}

/// `country,alias` CSV for the planted mentions.
pub fn lexicon_csv(spec: &SynthSpec) -> String {
    let mut out = String::from("country,alias\n");
    let mut seen = BTreeSet::new();
    for m in &spec.mentions {
        if seen.insert((&m.country, &m.alias)) {
            out.push_str(&format!("{},{}\n", m.country, m.alias));
        }
    }
    out
}

pub fn gen_corpus(spec: &SynthSpec) -> Result<(Vec<Doc>, CorpusLedger)> {
    if spec.topics.is_empty() {
        return Err(Error::InvalidInput(
            "synth spec: a corpus needs at least one topic".into(),
        ));
    }
    let (series, series_ledger) = gen_series(spec)?;
    // separate stream from the series noise so that toggling noise does not
    // reshuffle the documents
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_c0de_d0c5);
    let sigs = signatures(spec);
    let topic_pick = WeightedIndex::new(spec.topics.iter().map(|t| t.share))
        .map_err(|e| Error::InvalidInput(format!("synth spec: {e}")))?;
    let word_picks: Vec<WeightedIndex<f64>> = spec
        .topics
        .iter()
        .zip(&sigs)
        .map(|(t, words)| {
            WeightedIndex::new((1..=words.len()).map(|r| (r as f64).powf(-t.zipf)))
                .expect("non-empty signature")
        })
        .collect();
    let retweets =
        (spec.retweet_mean > 0.0).then(|| Poisson::new(spec.retweet_mean).expect("positive mean"));

    let mut docs = Vec::new();
    let mut doc_ledger = Vec::new();
    for (i, &count) in series.values.iter().enumerate() {
        let date = series.date_at(i);
        let midnight = Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"));
        for _ in 0..count as usize {
            let id = format!("s{:07}", docs.len());
            let topic = topic_pick.sample(&mut rng);
            let mut words: Vec<&str> = (0..spec.doc_length)
                .map(|_| sigs[topic][word_picks[topic].sample(&mut rng)].as_str())
                .collect();
            let mut mentions = BTreeSet::new();
            for m in &spec.mentions {
                if rng.gen_bool(m.rate) {
                    let at = rng.gen_range(0..=words.len());
                    words.insert(at, m.alias.as_str());
                    mentions.insert(m.country.clone());
                }
            }
            let retweet_count = retweets.map_or(0, |p| p.sample(&mut rng) as u64);
            let user_id = format!("u{:05}", rng.gen_range(0..spec.users));
            let timestamp = midnight + Duration::seconds(rng.gen_range(0..86_400));
            doc_ledger.push(DocLedger {
                id: id.clone(),
                date,
                topic,
                mentions: mentions.into_iter().collect(),
            });
            docs.push(Doc {
                id,
                timestamp,
                text: words.join(" "),
                retweet_count,
                user_id,
                lang: None,
            });
        }
    }

    let ledger = build_ledger(spec, series_ledger, sigs, &docs, doc_ledger);
    verify(spec, &docs, &ledger)?;
    Ok((docs, ledger))
}

fn build_ledger(
    spec: &SynthSpec,
    series: SeriesLedger,
    signatures: Vec<Vec<String>>,
    docs: &[Doc],
    doc_ledger: Vec<DocLedger>,
) -> CorpusLedger {
    let k = spec.topics.len();
    let mut days: Vec<DayLedger> = spec
        .window
        .iter()
        .map(|date| DayLedger {
            date,
            tweets: 0,
            retweets: 0,
            unique_users: 0,
        })
        .collect();
    let mut users: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); days.len()];
    for (doc, led) in docs.iter().zip(&doc_ledger) {
        let i = (led.date - spec.window.start).num_days() as usize;
        days[i].tweets += 1;
        days[i].retweets += doc.retweet_count;
        users[i].insert(&doc.user_id);
    }
    for (day, u) in days.iter_mut().zip(&users) {
        day.unique_users = u.len() as u64;
    }

    let mut topic_sizes = vec![0; k];
    for d in &doc_ledger {
        topic_sizes[d.topic] += 1;
    }

    let phases: Vec<PhaseLedger> = series
        .phase_spans()
        .into_iter()
        .map(|(index, start, end)| {
            let mut sizes = vec![0; k];
            for d in doc_ledger
                .iter()
                .filter(|d| start <= d.date && d.date <= end)
            {
                sizes[d.topic] += 1;
            }
            PhaseLedger {
                index,
                start,
                end,
                major: oracle::major_set(&sizes),
                topic_sizes: sizes,
            }
        })
        .collect();

    let labelled = spec.topics.iter().all(|t| !t.themes.is_empty());
    let mut labels = Vec::new();
    let mut themes: BTreeMap<(NaiveDate, String), f64> = BTreeMap::new();
    if labelled {
        for p in &phases {
            for &t in &p.major {
                labels.push((p.index, t, spec.topics[t].themes.clone()));
            }
            for d in doc_ledger
                .iter()
                .filter(|d| p.start <= d.date && d.date <= p.end)
            {
                if p.major.contains(&d.topic) {
                    let ts = &spec.topics[d.topic].themes;
                    for theme in ts {
                        *themes.entry((d.date, theme.clone())).or_default() +=
                            1.0 / ts.len() as f64;
                    }
                }
            }
        }
    }

    let mut mentions: BTreeMap<(NaiveDate, String), f64> = BTreeMap::new();
    for d in &doc_ledger {
        for c in &d.mentions {
            *mentions.entry((d.date, c.clone())).or_default() += 1.0;
        }
    }
    let rows = |m: BTreeMap<(NaiveDate, String), f64>| {
        m.into_iter()
            .map(|((date, key), value)| LedgerRow { date, key, value })
            .collect()
    };

    CorpusLedger {
        seed: spec.seed,
        series,
        signatures,
        days,
        docs: doc_ledger,
        topic_sizes,
        phases,
        labels,
        theme_trends: rows(themes),
        mention_trends: rows(mentions),
    }
}

/// Recounts the emitted documents from scratch and compares with the ledger.
fn verify(spec: &SynthSpec, docs: &[Doc], ledger: &CorpusLedger) -> Result<()> {
    let fail = |m: String| {
        Err(Error::InvalidInput(format!(
            "synth ledger verification: {m}"
        )))
    };
    if docs.len() != ledger.docs.len() {
        return fail("document count".into());
    }
    let mut tweets = vec![0u64; ledger.days.len()];
    let mut retweets = vec![0u64; ledger.days.len()];
    let mut users: Vec<BTreeSet<&str>> = vec![BTreeSet::new(); ledger.days.len()];
    for (doc, led) in docs.iter().zip(&ledger.docs) {
        let date = doc.timestamp.date_naive();
        if date != led.date || doc.id != led.id {
            return fail(format!("doc {} misdated", doc.id));
        }
        let i = (date - spec.window.start).num_days() as usize;
        tweets[i] += 1;
        retweets[i] += doc.retweet_count;
        users[i].insert(&doc.user_id);

        let text = doc.text.to_lowercase();
        let found: BTreeSet<&str> = spec
            .mentions
            .iter()
            .filter(|m| text.contains(&m.alias.to_lowercase()))
            .map(|m| m.country.as_str())
            .collect();
        let planted: BTreeSet<&str> = led.mentions.iter().map(String::as_str).collect();
        if found != planted {
            return fail(format!(
                "doc {} mentions {found:?} but {planted:?} were planted (overlapping aliases?)",
                doc.id
            ));
        }
        let sig = &ledger.signatures[led.topic];
        let mut rest = text.clone();
        for m in &spec.mentions {
            rest = rest.replace(&m.alias.to_lowercase(), " ");
        }
        let alien = rest
            .split_whitespace()
            .find(|w| !sig.iter().any(|s| s == w));
        if let Some(w) = alien {
            return fail(format!("doc {} has off-signature word `{w}`", doc.id));
        }
    }
    for (i, day) in ledger.days.iter().enumerate() {
        if day.tweets != tweets[i]
            || day.retweets != retweets[i]
            || day.unique_users != users[i].len() as u64
            || day.tweets as f64 != ledger.series.values[i]
        {
            return fail(format!("day {} totals", day.date));
        }
    }
    Ok(())
}

/// One JSON document per line, in generation order.
pub fn write_jsonl<W: Write>(mut w: W, docs: &[Doc]) -> std::io::Result<()> {
    for doc in docs {
        serde_json::to_writer(&mut w, doc)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
