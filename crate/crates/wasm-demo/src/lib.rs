//! Browser demo. Each export takes a JSON request and returns a JSON reply;
//! the plain functions behind them are usable (and tested) natively.

use chrono::{Duration, NaiveDate};
use phasetopic::corpus::{DailySeries, DateRange};
use phasetopic::lda::{self, SweepConfig};
use phasetopic::phasing::detect_phases;
use phasetopic::signal::lowpass;
use phasetopic::synth::{self, Burst, SynthSpec, TopicSpec};
use phasetopic::textprep::{build_vocabulary, encode};
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

fn origin() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).expect("valid date")
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct SeriesRequest {
    pub days: i64,
    pub anchor: i64,
    pub baseline: f64,
    pub bursts: Vec<BurstRequest>,
    pub noise: f64,
    pub smoothing: bool,
    pub cutoff: f64,
    pub seed: u64,
}

impl Default for SeriesRequest {
    fn default() -> Self {
        SeriesRequest {
            days: 90,
            anchor: 20,
            baseline: 20.0,
            bursts: Vec::new(),
            noise: 0.0,
            smoothing: true,
            cutoff: 0.2,
            seed: 1,
        }
    }
}

/// A burst starting `day` days into the window.
#[derive(Debug, Clone, Copy, Deserialize)]
pub struct BurstRequest {
    pub day: i64,
    pub slope: f64,
    pub plateau: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseSpan {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

/// Everything is indexed by day offset from the window start.
#[derive(Debug, Clone, Serialize)]
pub struct SeriesReply {
    pub dates: Vec<String>,
    pub volume: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub velocity: Vec<Option<f64>>,
    pub acceleration: Vec<Option<f64>>,
    pub velocity_threshold: i64,
    pub acceleration_threshold: i64,
    pub boundaries: Vec<usize>,
    /// Boundaries the brute-force scan finds on the noise-free series.
    pub oracle_boundaries: Vec<usize>,
    pub phases: Vec<PhaseSpan>,
}

pub fn simulate_series(req: &SeriesRequest) -> Result<SeriesReply, String> {
    let start = origin();
    let offset = |d: i64| start + Duration::days(d);
    let window = DateRange::new(start, offset(req.days - 1)).map_err(|e| e.to_string())?;
    let mut spec = SynthSpec::new(window, offset(req.anchor), req.seed);
    spec.baseline_rate = req.baseline;
    spec.noise = req.noise;
    spec.smoothing = req.smoothing;
    spec.cutoff = req.cutoff;
    let mut bursts = req.bursts.clone();
    bursts.sort_by_key(|b| b.day);
    spec.bursts = bursts
        .iter()
        .map(|b| Burst {
            start: offset(b.day),
            ramp_slope: b.slope,
            plateau: b.plateau,
        })
        .collect();
    let (series, ledger) = synth::gen_series(&spec).map_err(|e| e.to_string())?;
    let det =
        detect_phases(&series, spec.anchor, spec.smoothing_cutoff()).map_err(|e| e.to_string())?;

    let index = |d: NaiveDate| (d - start).num_days() as usize;
    let n = series.len();
    let aligned = |s: &DailySeries| -> Vec<Option<f64>> {
        (0..n).map(|i| s.get(series.date_at(i))).collect()
    };
    Ok(SeriesReply {
        dates: (0..n).map(|i| series.date_at(i).to_string()).collect(),
        volume: series.values.clone(),
        smoothed: det.kinetics.source.values.clone(),
        velocity: aligned(&det.kinetics.velocity),
        acceleration: aligned(&det.kinetics.acceleration),
        velocity_threshold: det.thresholds.velocity_threshold,
        acceleration_threshold: det.thresholds.acceleration_threshold,
        boundaries: det.boundaries.iter().map(|&d| index(d)).collect(),
        oracle_boundaries: ledger.boundaries.iter().map(|&d| index(d)).collect(),
        phases: det
            .phases
            .iter()
            .map(|p| PhaseSpan {
                index: p.index,
                start: index(p.start),
                end: index(p.end),
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterReply {
    /// Fraction of the Nyquist frequency.
    pub frequency: Vec<f64>,
    /// Closed-form gain of the forward-backward filter.
    pub analytic: Vec<f64>,
    /// Gain measured by smoothing a long cosine.
    pub measured: Vec<f64>,
}

pub fn filter_response(cutoff: f64, points: usize) -> Result<FilterReply, String> {
    if !(cutoff > 0.0 && cutoff < 1.0) {
        return Err(format!("cutoff must lie in (0, 1), got {cutoff}"));
    }
    let points = points.clamp(2, 400);
    let half_pi = std::f64::consts::FRAC_PI_2;
    let wc = (half_pi * cutoff).tan();
    let len = 600;
    let mut reply = FilterReply {
        frequency: Vec::with_capacity(points),
        analytic: Vec::with_capacity(points),
        measured: Vec::with_capacity(points),
    };
    for i in 0..points {
        let f = i as f64 / (points - 1) as f64;
        let ratio = if f < 1.0 {
            (half_pi * f).tan() / wc
        } else {
            f64::INFINITY
        };
        let x: Vec<f64> = (0..len)
            .map(|t| (std::f64::consts::PI * f * t as f64).cos())
            .collect();
        let y = lowpass(&DailySeries::new(origin(), x), cutoff).map_err(|e| e.to_string())?;
        // ignore the edges, where padding still shows
        let gain = y.values[len / 4..3 * len / 4]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        reply.frequency.push(f);
        reply.analytic.push(1.0 / (1.0 + ratio.powi(4)));
        reply.measured.push(gain);
    }
    Ok(reply)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct SweepRequest {
    pub topics: usize,
    pub docs: usize,
    pub doc_length: usize,
    pub k_min: usize,
    pub k_max: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SweepRequest {
    fn default() -> Self {
        SweepRequest {
            topics: 3,
            docs: 300,
            doc_length: 15,
            k_min: 2,
            k_max: 6,
            epochs: 40,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReply {
    pub perplexity: Vec<(usize, f64)>,
    pub k_star: usize,
    pub top_words: Vec<Vec<String>>,
    pub planted: Vec<Vec<String>>,
}

pub fn topic_sweep(req: &SweepRequest) -> Result<SweepReply, String> {
    if req.topics == 0 || req.topics > 8 || req.docs == 0 || req.docs > 3000 {
        return Err("use 1-8 topics and 1-3000 documents".into());
    }
    if req.k_max > 12 || req.epochs > 200 {
        return Err("keep k_max <= 12 and epochs <= 200 in the browser".into());
    }
    let days = 30;
    let start = origin();
    let window =
        DateRange::new(start, start + Duration::days(days - 1)).map_err(|e| e.to_string())?;
    let mut spec = SynthSpec::new(window, start + Duration::days(5), req.seed);
    spec.baseline_rate = (req.docs as f64 / days as f64).max(1.0);
    spec.doc_length = req.doc_length.max(1);
    spec.topics = (0..req.topics)
        .map(|_| TopicSpec {
            share: 1.0,
            words: Vec::new(),
            signature_size: 12,
            zipf: 0.5,
            themes: Vec::new(),
        })
        .collect();
    let (docs, _) = synth::gen_corpus(&spec).map_err(|e| e.to_string())?;
    let raw: Vec<(String, Vec<String>)> = docs
        .into_iter()
        .map(|d| {
            (
                d.id,
                d.text.split_whitespace().map(str::to_string).collect(),
            )
        })
        .collect();
    let tokens: Vec<Vec<String>> = raw.iter().map(|(_, t)| t.clone()).collect();
    let vocab = build_vocabulary(&tokens, 1).map_err(|e| e.to_string())?;
    let corpus = encode(raw, vocab);
    let cfg = SweepConfig {
        k_min: req.k_min,
        k_max: req.k_max,
        epochs: req.epochs,
        seed: req.seed,
        workers: 1,
        ..SweepConfig::default()
    };
    let sweep = lda::select_k(&corpus, &cfg).map_err(|e| e.to_string())?;
    let top_words = (0..sweep.k_star)
        .map(|k| {
            let phi = sweep.best.phi(k);
            let mut ids: Vec<usize> = (0..phi.len()).collect();
            ids.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then(a.cmp(&b)));
            ids.iter()
                .take(6)
                .map(|&w| corpus.vocab.token(w as u32).to_string())
                .collect()
        })
        .collect();
    Ok(SweepReply {
        perplexity: sweep.ppl_by_k().into_iter().collect(),
        k_star: sweep.k_star,
        top_words,
        planted: synth::signatures(&spec)
            .into_iter()
            .map(|s| s.into_iter().take(6).collect())
            .collect(),
    })
}

fn reply<T: Serialize>(result: Result<T, String>) -> Result<String, JsError> {
    result
        .and_then(|r| serde_json::to_string(&r).map_err(|e| e.to_string()))
        .map_err(|e| JsError::new(&e))
}

fn request<T: for<'de> Deserialize<'de>>(json: &str) -> Result<T, JsError> {
    serde_json::from_str(json).map_err(|e| JsError::new(&format!("bad request: {e}")))
}

#[wasm_bindgen]
pub fn simulate(json: &str) -> Result<String, JsError> {
    reply(simulate_series(&request(json)?))
}

#[wasm_bindgen]
pub fn response(cutoff: f64, points: usize) -> Result<String, JsError> {
    reply(filter_response(cutoff, points))
}

#[wasm_bindgen]
pub fn sweep(json: &str) -> Result<String, JsError> {
    reply(topic_sweep(&request(json)?))
}
