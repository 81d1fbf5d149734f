//! Latent Dirichlet allocation by collapsed Gibbs sampling, training-set
//! perplexity, and topic-count selection by minimum perplexity.
//!
//! Count tables are kept word-major (`n_wk[w * K + k]`) so that the inner
//! sampling loop over topics for one token reads contiguous memory.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::EncodedCorpus;

pub const DEFAULT_EPOCHS: usize = 100;
pub const DEFAULT_K_MIN: usize = 2;
pub const DEFAULT_K_MAX: usize = 50;
pub const DEFAULT_BETA: f64 = 0.01;

/// How the symmetric document-topic prior depends on K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "value", rename_all = "snake_case")]
pub enum AlphaRule {
    /// `alpha = value / K`
    Scaled(f64),
    Fixed(f64),
}

impl Default for AlphaRule {
    fn default() -> Self {
        AlphaRule::Scaled(50.0)
    }
}

impl AlphaRule {
    pub fn alpha(&self, k: usize) -> f64 {
        match *self {
            AlphaRule::Scaled(c) => c / k as f64,
            AlphaRule::Fixed(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaParams {
    pub k: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl LdaParams {
    pub fn new(k: usize, alpha: f64, beta: f64, epochs: usize, seed: u64) -> Self {
        LdaParams {
            k,
            alpha,
            beta,
            epochs,
            seed,
        }
    }

    fn validate(&self, corpus: &EncodedCorpus) -> Result<()> {
        if self.k < 2 {
            return Err(Error::InvalidInput(format!(
                "K must be at least 2, got {}",
                self.k
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidInput("epochs must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return Err(Error::InvalidInput(
                "alpha and beta must be positive".into(),
            ));
        }
        if corpus.docs.is_empty() || corpus.total_tokens() == 0 {
            return Err(Error::InvalidInput(
                "cannot train on an empty corpus".into(),
            ));
        }
        if self.k > corpus.docs.len() {
            log::warn!(
                "K = {} exceeds the number of documents ({}); the model is degenerate",
                self.k,
                corpus.docs.len()
            );
        }
        Ok(())
    }
}

/// Topic-word, document-topic and per-topic totals.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Counts {
    pub n_wk: Vec<u32>,
    pub n_dk: Vec<u32>,
    pub n_k: Vec<u32>,
}

/// Trained model: per-token assignments plus the count tables they imply.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub k: usize,
    pub vocab_size: usize,
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Topic of every token, per document, in corpus order.
    pub assignments: Vec<Vec<u32>>,
    counts: Counts,
}

impl LdaModel {
    pub fn num_docs(&self) -> usize {
        self.assignments.len()
    }

    pub fn counts(&self) -> &Counts {
        &self.counts
    }

    pub fn topic_word(&self, k: usize, w: usize) -> u32 {
        self.counts.n_wk[w * self.k + k]
    }

    pub fn doc_topic_row(&self, d: usize) -> &[u32] {
        &self.counts.n_dk[d * self.k..(d + 1) * self.k]
    }

    pub fn topic_total(&self, k: usize) -> u32 {
        self.counts.n_k[k]
    }

    /// Rebuild the count tables from `assignments` and the corpus tokens.
    pub fn recount(&self, corpus: &EncodedCorpus) -> Counts {
        recount(&self.assignments, corpus, self.k, self.vocab_size)
    }

    /// Posterior-mean topic mixture of document `d`.
    pub fn theta(&self, d: usize) -> Vec<f64> {
        let row = self.doc_topic_row(d);
        let n_d: u32 = row.iter().sum();
        let denom = n_d as f64 + self.k as f64 * self.alpha;
        row.iter()
            .map(|&c| (c as f64 + self.alpha) / denom)
            .collect()
    }

    /// Posterior-mean word distribution of topic `k`.
    pub fn phi(&self, k: usize) -> Vec<f64> {
        let denom = self.counts.n_k[k] as f64 + self.vocab_size as f64 * self.beta;
        (0..self.vocab_size)
            .map(|w| (self.topic_word(k, w) as f64 + self.beta) / denom)
            .collect()
    }

    pub fn distributions(&self) -> TopicDistributions {
        TopicDistributions {
            theta: (0..self.num_docs()).map(|d| self.theta(d)).collect(),
            phi: (0..self.k).map(|k| self.phi(k)).collect(),
        }
    }

    pub fn perplexity(&self, corpus: &EncodedCorpus) -> Result<f64> {
        if corpus.docs.len() != self.num_docs() || corpus.vocab.len() != self.vocab_size {
            return Err(Error::InvalidInput(
                "perplexity corpus does not match the training corpus".into(),
            ));
        }
        self.distributions().perplexity(corpus)
    }

    /// Rebuild a model from assignments (e.g. after loading from disk).
    pub fn from_assignments(
        params: LdaParams,
        assignments: Vec<Vec<u32>>,
        corpus: &EncodedCorpus,
    ) -> Result<Self> {
        if assignments.len() != corpus.docs.len()
            || assignments.iter().zip(&corpus.docs).any(|(a, d)| {
                a.len() != d.tokens.len() || a.iter().any(|&z| z as usize >= params.k)
            })
        {
            return Err(Error::InvalidInput(
                "assignments do not fit the corpus".into(),
            ));
        }
        let counts = recount(&assignments, corpus, params.k, corpus.vocab.len());
        Ok(LdaModel {
            k: params.k,
            vocab_size: corpus.vocab.len(),
            alpha: params.alpha,
            beta: params.beta,
            epochs: params.epochs,
            seed: params.seed,
            assignments,
            counts,
        })
    }
}

fn recount(assignments: &[Vec<u32>], corpus: &EncodedCorpus, k: usize, v: usize) -> Counts {
    let mut counts = Counts {
        n_wk: vec![0; v * k],
        n_dk: vec![0; assignments.len() * k],
        n_k: vec![0; k],
    };
    for (d, (zs, doc)) in assignments.iter().zip(&corpus.docs).enumerate() {
        for (&z, &w) in zs.iter().zip(&doc.tokens) {
            let z = z as usize;
            counts.n_wk[w as usize * k + z] += 1;
            counts.n_dk[d * k + z] += 1;
            counts.n_k[z] += 1;
        }
    }
    counts
}

/// Explicit document-topic (`theta`) and topic-word (`phi`) distributions.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicDistributions {
    pub theta: Vec<Vec<f64>>,
    pub phi: Vec<Vec<f64>>,
}

impl TopicDistributions {
    /// `exp(-(1/N) * sum_d sum_{w in d} ln sum_k theta_d(k) phi_k(w))`.
    pub fn perplexity(&self, corpus: &EncodedCorpus) -> Result<f64> {
        let n_tokens = corpus.total_tokens();
        if n_tokens == 0 {
            return Err(Error::InvalidInput("perplexity of an empty corpus".into()));
        }
        if self.theta.len() != corpus.docs.len() {
            return Err(Error::InvalidInput(
                "theta rows do not match the corpus".into(),
            ));
        }
        let mut log_lik = 0.0;
        for (theta, doc) in self.theta.iter().zip(&corpus.docs) {
            for &w in &doc.tokens {
                let p: f64 = theta
                    .iter()
                    .zip(&self.phi)
                    .map(|(t, phi)| t * phi[w as usize])
                    .sum();
                log_lik += p.ln();
            }
        }
        Ok((-log_lik / n_tokens as f64).exp())
    }
}

/// Collapsed Gibbs sampler that can be advanced one sweep at a time.
pub struct GibbsSampler<'a> {
    corpus: &'a EncodedCorpus,
    model: LdaModel,
    rng: ChaCha8Rng,
    /// `1 / (n_k + V * beta)` per topic.
    inv_denom: Vec<f64>,
    weights: Vec<f64>,
    epochs_done: usize,
}

impl<'a> GibbsSampler<'a> {
    /// Validates parameters and draws a uniformly random initial assignment.
    pub fn new(corpus: &'a EncodedCorpus, params: LdaParams) -> Result<Self> {
        params.validate(corpus)?;
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        let k = params.k;
        let assignments = corpus
            .docs
            .iter()
            .map(|doc| {
                doc.tokens
                    .iter()
                    .map(|_| rng.gen_range(0..k as u32))
                    .collect()
            })
            .collect();
        let model = LdaModel::from_assignments(params, assignments, corpus)?;
        let vbeta = corpus.vocab.len() as f64 * params.beta;
        let inv_denom = model
            .counts
            .n_k
            .iter()
            .map(|&n| 1.0 / (n as f64 + vbeta))
            .collect();
        Ok(GibbsSampler {
            corpus,
            model,
            rng,
            inv_denom,
            weights: vec![0.0; k],
            epochs_done: 0,
        })
    }

    pub fn model(&self) -> &LdaModel {
        &self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// One full pass over every token of every document.
    pub fn sweep(&mut self) {
        let k = self.model.k;
        let alpha = self.model.alpha;
        let beta = self.model.beta;
        let vbeta = self.model.vocab_size as f64 * beta;
        let counts = &mut self.model.counts;
        for (d, doc) in self.corpus.docs.iter().enumerate() {
            let zs = &mut self.model.assignments[d];
            let dk = d * k;
            for (i, &w) in doc.tokens.iter().enumerate() {
                let wk = w as usize * k;
                let old = zs[i] as usize;
                counts.n_wk[wk + old] -= 1;
                counts.n_dk[dk + old] -= 1;
                counts.n_k[old] -= 1;
                self.inv_denom[old] = 1.0 / (counts.n_k[old] as f64 + vbeta);

                let mut total = 0.0;
                for t in 0..k {
                    let weight = (counts.n_dk[dk + t] as f64 + alpha)
                        * (counts.n_wk[wk + t] as f64 + beta)
                        * self.inv_denom[t];
                    total += weight;
                    self.weights[t] = total;
                }
                let u = self.rng.gen::<f64>() * total;
                // the last topic absorbs any rounding at the top of the range
                let new = self.weights[..k - 1].partition_point(|&c| c <= u);

                zs[i] = new as u32;
                counts.n_wk[wk + new] += 1;
                counts.n_dk[dk + new] += 1;
                counts.n_k[new] += 1;
                self.inv_denom[new] = 1.0 / (counts.n_k[new] as f64 + vbeta);
            }
        }
        self.epochs_done += 1;
    }

    pub fn into_model(mut self) -> LdaModel {
        self.model.epochs = self.epochs_done;
        self.model
    }
}

/// Train for `params.epochs` sweeps.
pub fn gibbs_train(corpus: &EncodedCorpus, params: LdaParams) -> Result<LdaModel> {
    let mut sampler = GibbsSampler::new(corpus, params)?;
    for _ in 0..params.epochs {
        sampler.sweep();
    }
    Ok(sampler.into_model())
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax_topic(row: &[u32]) -> usize {
    let mut best = 0;
    for (k, &c) in row.iter().enumerate() {
        if c > row[best] {
            best = k;
        }
    }
    best
}

/// Dominant topic of each document, as `(doc_id, topic)` in corpus order.
pub fn assign_topics(model: &LdaModel, corpus: &EncodedCorpus) -> Vec<(String, usize)> {
    corpus
        .docs
        .iter()
        .enumerate()
        .map(|(d, doc)| (doc.id.clone(), argmax_topic(model.doc_topic_row(d))))
        .collect()
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed for the chain with `k` topics; independent of sweep order.
pub fn derive_seed(seed: u64, k: usize) -> u64 {
    splitmix64(seed ^ splitmix64(k as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KeepModels {
    #[default]
    Best,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub k_min: usize,
    pub k_max: usize,
    pub alpha: AlphaRule,
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Upper bound on concurrently trained chains; does not affect results.
    pub workers: usize,
    pub keep: KeepModels,
    /// Measure wall-clock seconds per K (makes outputs non-reproducible).
    pub record_timings: bool,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            k_min: DEFAULT_K_MIN,
            k_max: DEFAULT_K_MAX,
            alpha: AlphaRule::default(),
            beta: DEFAULT_BETA,
            epochs: DEFAULT_EPOCHS,
            seed: 0,
            workers: 1,
            keep: KeepModels::Best,
            record_timings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub k: usize,
    /// `None` when training this K failed.
    pub perplexity: Option<f64>,
    pub seconds: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub entries: Vec<SweepEntry>,
    pub k_star: usize,
    pub best: LdaModel,
    /// Every trained model when [`KeepModels::All`] is requested, else empty.
    pub models: Vec<LdaModel>,
}

impl SweepResult {
    pub fn ppl_by_k(&self) -> BTreeMap<usize, f64> {
        self.entries
            .iter()
            .filter_map(|e| e.perplexity.map(|p| (e.k, p)))
            .collect()
    }
}

fn train_one(
    corpus: &EncodedCorpus,
    cfg: &SweepConfig,
    k: usize,
) -> (SweepEntry, Option<LdaModel>) {
    #[cfg(not(target_arch = "wasm32"))]
    let started = cfg.record_timings.then(std::time::Instant::now);
    let params = LdaParams::new(
        k,
        cfg.alpha.alpha(k),
        cfg.beta,
        cfg.epochs,
        derive_seed(cfg.seed, k),
    );
    let outcome = gibbs_train(corpus, params).and_then(|m| m.perplexity(corpus).map(|p| (m, p)));
    #[cfg(not(target_arch = "wasm32"))]
    let seconds = started.map(|s| s.elapsed().as_secs_f64());
    #[cfg(target_arch = "wasm32")]
    let seconds = None;
    match outcome {
        Ok((model, ppl)) => (
            SweepEntry {
                k,
                perplexity: Some(ppl),
                seconds,
            },
            Some(model),
        ),
        Err(e) => {
            log::warn!("K = {k} failed: {e}");
            (
                SweepEntry {
                    k,
                    perplexity: None,
                    seconds,
                },
                None,
            )
        }
    }
}

#[cfg(feature = "parallel")]
fn run_sweep(
    corpus: &EncodedCorpus,
    cfg: &SweepConfig,
    ks: &[usize],
) -> Vec<(SweepEntry, Option<LdaModel>)> {
    use rayon::prelude::*;
    if cfg.workers <= 1 {
        return ks.iter().map(|&k| train_one(corpus, cfg, k)).collect();
    }
    match rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
    {
        Ok(pool) => pool.install(|| ks.par_iter().map(|&k| train_one(corpus, cfg, k)).collect()),
        Err(e) => {
            log::warn!("could not start worker pool ({e}); running sequentially");
            ks.iter().map(|&k| train_one(corpus, cfg, k)).collect()
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn run_sweep(
    corpus: &EncodedCorpus,
    cfg: &SweepConfig,
    ks: &[usize],
) -> Vec<(SweepEntry, Option<LdaModel>)> {
    ks.iter().map(|&k| train_one(corpus, cfg, k)).collect()
}

/// Train one independent chain per K in `k_min..=k_max` and pick the K with
/// the lowest perplexity (smallest K on ties).
pub fn select_k(corpus: &EncodedCorpus, cfg: &SweepConfig) -> Result<SweepResult> {
    if cfg.k_min > cfg.k_max {
        return Err(Error::InvalidInput(format!(
            "k_min ({}) exceeds k_max ({})",
            cfg.k_min, cfg.k_max
        )));
    }
    let ks: Vec<usize> = (cfg.k_min..=cfg.k_max).collect();
    let results = run_sweep(corpus, cfg, &ks);

    let mut entries = Vec::with_capacity(results.len());
    let mut models = Vec::new();
    let mut best: Option<(f64, LdaModel)> = None;
    for (entry, model) in results {
        if let (Some(ppl), Some(model)) = (entry.perplexity, model) {
            let better = best.as_ref().is_none_or(|(b, _)| ppl < *b);
            if cfg.keep == KeepModels::All {
                models.push(model.clone());
            }
            if better {
                best = Some((ppl, model));
            }
        }
        entries.push(entry);
    }
    let (_, best) = best.ok_or_else(|| {
        Error::InvalidInput(format!(
            "every K in {}..={} failed to train",
            cfg.k_min, cfg.k_max
        ))
    })?;
    Ok(SweepResult {
        entries,
        k_star: best.k,
        best,
        models,
    })
}

const MAGIC: &[u8; 8] = b"PTLDA\0\0\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Serialise a model and the config hash it was trained under.
///
/// Layout, all integers little-endian: magic `PTLDA\0\0\0`, `u32` version,
/// `u32` hash length + UTF-8 hash, `u32` K, `u32` V, `u32` D, `f64` alpha,
/// `f64` beta, `u32` epochs, `u64` seed; then per document `u32` length and
/// that many `u32` topic ids; then `n_wk` (V*K, word-major), `n_dk` (D*K)
/// and `n_k` (K) as `u32`.
pub fn write_model<W: Write>(mut w: W, model: &LdaModel, config_hash: &str) -> std::io::Result<()> {
    let u32s = |w: &mut W, xs: &[u32]| -> std::io::Result<()> {
        for x in xs {
            w.write_all(&x.to_le_bytes())?;
        }
        Ok(())
    };
    w.write_all(MAGIC)?;
    w.write_all(&MODEL_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(config_hash.len() as u32).to_le_bytes())?;
    w.write_all(config_hash.as_bytes())?;
    u32s(
        &mut w,
        &[
            model.k as u32,
            model.vocab_size as u32,
            model.num_docs() as u32,
        ],
    )?;
    w.write_all(&model.alpha.to_le_bytes())?;
    w.write_all(&model.beta.to_le_bytes())?;
    w.write_all(&(model.epochs as u32).to_le_bytes())?;
    w.write_all(&model.seed.to_le_bytes())?;
    for zs in &model.assignments {
        w.write_all(&(zs.len() as u32).to_le_bytes())?;
        u32s(&mut w, zs)?;
    }
    u32s(&mut w, &model.counts.n_wk)?;
    u32s(&mut w, &model.counts.n_dk)?;
    u32s(&mut w, &model.counts.n_k)?;
    w.flush()
}

fn invalid(msg: &str) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string())
}

/// Inverse of [`write_model`]; returns the model and its config hash.
pub fn read_model<R: Read>(mut r: R) -> std::io::Result<(LdaModel, String)> {
    fn arr<const N: usize, R: Read>(r: &mut R) -> std::io::Result<[u8; N]> {
        let mut buf = [0u8; N];
        r.read_exact(&mut buf)?;
        Ok(buf)
    }
    let u32_ = |r: &mut R| arr::<4, R>(r).map(u32::from_le_bytes);
    let vec_u32 =
        |r: &mut R, n: usize| (0..n).map(|_| u32_(r)).collect::<std::io::Result<Vec<_>>>();

    if &arr::<8, R>(&mut r)? != MAGIC {
        return Err(invalid("not a model file"));
    }
    let version = u32_(&mut r)?;
    if version != MODEL_FORMAT_VERSION {
        return Err(invalid(&format!("unsupported model version {version}")));
    }
    let hash_len = u32_(&mut r)? as usize;
    let mut hash = vec![0u8; hash_len];
    r.read_exact(&mut hash)?;
    let hash = String::from_utf8(hash).map_err(|_| invalid("config hash is not UTF-8"))?;
    let k = u32_(&mut r)? as usize;
    let v = u32_(&mut r)? as usize;
    let d = u32_(&mut r)? as usize;
    let alpha = f64::from_le_bytes(arr(&mut r)?);
    let beta = f64::from_le_bytes(arr(&mut r)?);
    let epochs = u32_(&mut r)? as usize;
    let seed = u64::from_le_bytes(arr(&mut r)?);
    let mut assignments = Vec::with_capacity(d);
    for _ in 0..d {
        let len = u32_(&mut r)? as usize;
        assignments.push(vec_u32(&mut r, len)?);
    }
    let counts = Counts {
        n_wk: vec_u32(&mut r, v * k)?,
        n_dk: vec_u32(&mut r, d * k)?,
        n_k: vec_u32(&mut r, k)?,
    };
    if assignments.iter().flatten().any(|&z| z as usize >= k) {
        return Err(invalid("topic id out of range"));
    }
    let total: u64 = assignments.iter().map(|a| a.len() as u64).sum();
    if counts.n_k.iter().map(|&n| n as u64).sum::<u64>() != total {
        return Err(invalid("topic totals disagree with assignments"));
    }
    Ok((
        LdaModel {
            k,
            vocab_size: v,
            alpha,
            beta,
            epochs,
            seed,
            assignments,
            counts,
        },
        hash,
    ))
}
