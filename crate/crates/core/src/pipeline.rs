//! The command-line stages as library functions. Each stage reads the config,
//! the input corpus and the files earlier stages left in the output
//! directory, and writes its own files there. Every output carries the config
//! hash, and files from a different configuration are refused.

use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::chart::{self, Line, Panel};
use crate::config::PipelineConfig;
use crate::corpus::{self, Corpus, DailySeries, DateRange};
use crate::error::{Error, Result};
use crate::lda::{self, SweepConfig};
use crate::phasing::{self, Phase, PhaseDetection};
use crate::synth::{self, SynthSpec};
use crate::textprep;
use crate::themes::{self, PercentileMode, PhaseAssignments, TopicSummary, TrendTable};

/// Loaded config plus its hash and output directory.
pub struct Context {
    pub config: PipelineConfig,
    pub hash: String,
}

impl Context {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let hash = config.hash()?;
        std::fs::create_dir_all(&config.output_dir)
            .map_err(|e| Error::io(&config.output_dir, e))?;
        Ok(Context { config, hash })
    }

    pub fn out(&self, name: &str) -> PathBuf {
        self.config.output_dir.join(name)
    }

    pub fn load_corpus(&self) -> Result<Corpus> {
        let corpus = corpus::load_corpus(&self.config.input.path, self.config.input_format())?;
        Ok(corpus.with_day_offset_hours(self.config.input.day_offset_hours))
    }

    /// Configured window, or the corpus's own date span.
    pub fn window(&self, corpus: &Corpus) -> Result<DateRange> {
        match self.config.phases.window {
            Some(w) => Ok(w),
            None => corpus.date_range().ok_or_else(|| {
                Error::InvalidInput("corpus is empty and no window is configured".into())
            }),
        }
    }

    fn check(&self, file: &Path, found: &str) -> Result<()> {
        if found != self.hash {
            return Err(Error::HashMismatch {
                file: file.display().to_string(),
                expected: self.hash.clone(),
                found: found.to_string(),
            });
        }
        Ok(())
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::format(path, e.to_string()))?;
    w.write_all(b"\n")
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|e| Error::format(path, e.to_string()))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    for row in rows {
        w.serialize(row)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
    r.deserialize()
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| Error::format(path, e.to_string()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------- phases

/// One element of `phases.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub index: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub velocity_threshold: i64,
    pub acceleration_threshold: i64,
    pub anchor: NaiveDate,
    pub config_hash: String,
}

impl PhaseRecord {
    pub fn phase(&self) -> Phase {
        Phase {
            index: self.index,
            start: self.start,
            end: self.end,
        }
    }
}

#[derive(Serialize)]
struct KineticsRow {
    date: NaiveDate,
    smoothed: f64,
    velocity: Option<f64>,
    acceleration: Option<f64>,
    config_hash: String,
}

pub struct PhasesOutcome {
    pub volume: DailySeries,
    pub detection: PhaseDetection,
    pub records: Vec<PhaseRecord>,
}

/// Daily volume, smoothing, kinetics, thresholds and phases.
pub fn cmd_phases(ctx: &Context) -> Result<PhasesOutcome> {
    let anchor = ctx.config.anchor()?;
    let corpus = ctx.load_corpus()?;
    let window = ctx.window(&corpus)?;
    let volume = corpus::daily_counts(&corpus, window);
    let detection = phasing::detect_phases(&volume, anchor, ctx.config.cutoff())?;
    let thr = detection.thresholds;
    log::info!(
        "thresholds at {anchor}: velocity {}, acceleration {}; {} phase(s)",
        thr.velocity_threshold,
        thr.acceleration_threshold,
        detection.phases.len()
    );

    let records: Vec<PhaseRecord> = detection
        .phases
        .iter()
        .map(|p| PhaseRecord {
            index: p.index,
            start: p.start,
            end: p.end,
            velocity_threshold: thr.velocity_threshold,
            acceleration_threshold: thr.acceleration_threshold,
            anchor,
            config_hash: ctx.hash.clone(),
        })
        .collect();
    write_json(&ctx.out("phases.json"), &records)?;

    let kin = &detection.kinetics;
    write_csv(
        &ctx.out("kinetics.csv"),
        kin.source.iter().map(|(date, smoothed)| KineticsRow {
            date,
            smoothed,
            velocity: kin.velocity.get(date),
            acceleration: kin.acceleration.get(date),
            config_hash: ctx.hash.clone(),
        }),
    )?;

    let n = volume.len();
    let markers: Vec<usize> = detection
        .boundaries
        .iter()
        .filter_map(|b| window.offset_of(*b))
        .collect();
    let aligned = |s: &DailySeries| -> Vec<Option<f64>> {
        (0..n).map(|i| s.get(volume.date_at(i))).collect()
    };
    let kinetics_svg = chart::render(
        window.start,
        n,
        &[
            Panel {
                title: "Daily volume".into(),
                lines: vec![
                    Line::dense("raw", &volume.values),
                    Line::dense("smoothed", &kin.source.values),
                ],
                markers: markers.clone(),
            },
            Panel {
                title: "Velocity and acceleration".into(),
                lines: vec![
                    Line::new("velocity", aligned(&kin.velocity)),
                    Line::new("acceleration", aligned(&kin.acceleration)),
                ],
                markers: markers.clone(),
            },
        ],
        &ctx.hash,
    );
    write_text(&ctx.out("kinetics.svg"), &kinetics_svg)?;
    let phases_svg = chart::render(
        window.start,
        n,
        &[Panel {
            title: format!(
                "Topical phases (velocity < {}, acceleration > {})",
                thr.velocity_threshold, thr.acceleration_threshold
            ),
            lines: vec![Line::dense("tweets/day", &volume.values)],
            markers,
        }],
        &ctx.hash,
    );
    write_text(&ctx.out("phases.svg"), &phases_svg)?;

    Ok(PhasesOutcome {
        volume,
        detection,
        records,
    })
}

/// Reads `phases.json`, refusing files from another configuration.
pub fn read_phases(ctx: &Context) -> Result<Vec<PhaseRecord>> {
    let path = ctx.out("phases.json");
    let records: Vec<PhaseRecord> = read_json(&path)?;
    for r in &records {
        ctx.check(&path, &r.config_hash)?;
    }
    Ok(records)
}

// ---------------------------------------------------------------- topics

/// Per-phase entry of `topics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTopicsRecord {
    pub phase_index: usize,
    pub num_docs: usize,
    /// `None` when the phase was skipped.
    pub k_star: Option<usize>,
    pub vocab_size: usize,
    pub major: Vec<usize>,
    pub skipped: Option<String>,
    pub config_hash: String,
}

/// Contents of `topics_<phase>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTopicsFile {
    pub phase_index: usize,
    pub k_star: usize,
    pub percentile_mode: PercentileMode,
    pub num_docs: usize,
    pub dropped_empty: usize,
    pub vocab_size: usize,
    pub topic_sizes: Vec<usize>,
    pub major: Vec<usize>,
    pub summaries: Vec<TopicSummary>,
    pub config_hash: String,
}

#[derive(Serialize)]
struct SweepRow {
    k: usize,
    perplexity: Option<f64>,
    seconds: Option<f64>,
    config_hash: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct AssignmentRow {
    id: String,
    topic: usize,
    config_hash: String,
}

/// Sweep seed for one phase, independent of the other phases.
fn phase_seed(seed: u64, phase: usize) -> u64 {
    lda::derive_seed(seed, usize::MAX - phase)
}

/// Preprocess, sweep K, assign, filter major topics and write summaries for
/// every phase in `phases.json`.
pub fn cmd_topics(ctx: &Context) -> Result<Vec<PhaseTopicsRecord>> {
    let phases = read_phases(ctx)?;
    let corpus = ctx.load_corpus()?;
    let tokenizer = ctx.config.tokenizer()?;
    let by_id = corpus.index_by_id();
    let mode = ctx.config.themes.percentile_mode;
    let mut index = Vec::with_capacity(phases.len());

    for rec in &phases {
        let p = rec.index;
        let mut seen_text = HashSet::new();
        let docs: Vec<&corpus::Doc> = corpus
            .docs_in(rec.phase().range())
            .filter(|d| {
                !ctx.config.text.dedup_text || seen_text.insert(d.text.trim().to_lowercase())
            })
            .collect();
        let skip = |reason: String| {
            log::warn!("phase {p} skipped: {reason}");
            PhaseTopicsRecord {
                phase_index: p,
                num_docs: docs.len(),
                k_star: None,
                vocab_size: 0,
                major: Vec::new(),
                skipped: Some(reason),
                config_hash: ctx.hash.clone(),
            }
        };
        let texts: Vec<&str> = docs.iter().map(|d| d.text.as_str()).collect();
        let tokens = textprep::preprocess_batch(&texts, &tokenizer);
        let vocab = match textprep::build_vocabulary(&tokens, ctx.config.text.min_count) {
            Ok(v) => v,
            Err(e @ Error::EmptyVocabulary { .. }) => {
                index.push(skip(e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        let vocab_size = vocab.len();
        let encoded = textprep::encode(docs.iter().map(|d| d.id.clone()).zip(tokens), vocab);
        let sweep_cfg = SweepConfig {
            seed: phase_seed(ctx.config.lda.seed, p),
            ..ctx.config.sweep()
        };
        log::info!(
            "phase {p}: {} docs, V = {vocab_size}, sweeping K = {}..={}",
            encoded.docs.len(),
            sweep_cfg.k_min,
            sweep_cfg.k_max
        );
        let sweep = match lda::select_k(&encoded, &sweep_cfg) {
            Ok(s) => s,
            Err(e) => {
                index.push(skip(format!("topic model could not be trained: {e}")));
                continue;
            }
        };
        write_csv(
            &ctx.out(&format!("sweep_{p}.csv")),
            sweep.entries.iter().map(|e| SweepRow {
                k: e.k,
                perplexity: e.perplexity,
                seconds: e.seconds,
                config_hash: ctx.hash.clone(),
            }),
        )?;
        let model_path = ctx.out(&format!("model_{p}.bin"));
        let mut w = create(&model_path)?;
        lda::write_model(&mut w, &sweep.best, &ctx.hash)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&model_path, e))?;

        let assignments = lda::assign_topics(&sweep.best, &encoded);
        write_csv(
            &ctx.out(&format!("assignments_{p}.csv")),
            assignments.iter().map(|(id, topic)| AssignmentRow {
                id: id.clone(),
                topic: *topic,
                config_hash: ctx.hash.clone(),
            }),
        )?;
        let doc_topics: Vec<usize> = assignments.iter().map(|(_, t)| *t).collect();
        let topic_sizes = themes::topic_sizes(&doc_topics, sweep.k_star);
        let kept = themes::major_topics_from_sizes(&topic_sizes, mode);
        let summaries = themes::topic_summaries(&sweep.best, &encoded, &by_id, &kept, p);
        let major: Vec<usize> = kept.into_iter().collect();
        log::info!(
            "phase {p}: K* = {}, {} major topic(s)",
            sweep.k_star,
            major.len()
        );
        write_json(
            &ctx.out(&format!("topics_{p}.json")),
            &PhaseTopicsFile {
                phase_index: p,
                k_star: sweep.k_star,
                percentile_mode: mode,
                num_docs: encoded.docs.len(),
                dropped_empty: encoded.dropped_empty,
                vocab_size,
                topic_sizes,
                major: major.clone(),
                summaries,
                config_hash: ctx.hash.clone(),
            },
        )?;
        index.push(PhaseTopicsRecord {
            phase_index: p,
            num_docs: encoded.docs.len(),
            k_star: Some(sweep.k_star),
            vocab_size,
            major,
            skipped: None,
            config_hash: ctx.hash.clone(),
        });
    }
    write_json(&ctx.out("topics.json"), &index)?;
    Ok(index)
}

/// Reads `topics.json` and the assignment files of every modelled phase.
pub fn read_assignments(ctx: &Context) -> Result<Vec<PhaseAssignments>> {
    let path = ctx.out("topics.json");
    let index: Vec<PhaseTopicsRecord> = read_json(&path)?;
    let mut out = Vec::new();
    for rec in &index {
        ctx.check(&path, &rec.config_hash)?;
        if rec.skipped.is_some() {
            continue;
        }
        let apath = ctx.out(&format!("assignments_{}.csv", rec.phase_index));
        let rows: Vec<AssignmentRow> = read_csv(&apath)?;
        for r in &rows {
            ctx.check(&apath, &r.config_hash)?;
        }
        out.push(PhaseAssignments {
            phase_index: rec.phase_index,
            kept: rec.major.iter().copied().collect::<BTreeSet<_>>(),
            doc_topics: rows.into_iter().map(|r| (r.id, r.topic)).collect(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseStatsRow {
    pub phase: usize,
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub days: usize,
    pub users_per_day: f64,
    pub tweets_per_day: f64,
    pub retweets_per_day: f64,
    pub depth: f64,
    pub depth_undefined: bool,
    pub config_hash: String,
}

#[derive(Serialize)]
struct ThemeRow<'a> {
    date: NaiveDate,
    theme: &'a str,
    weighted_count: f64,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct ThemeShareRow<'a> {
    date: NaiveDate,
    theme: &'a str,
    share: f64,
    config_hash: &'a str,
}

#[derive(Serialize)]
struct MentionRow<'a> {
    date: NaiveDate,
    country: &'a str,
    count: f64,
    config_hash: &'a str,
}

pub struct ReportOutcome {
    pub phase_stats: Vec<PhaseStatsRow>,
    pub theme_trends: Option<TrendTable>,
    pub mention_trends: Option<TrendTable>,
}

fn trend_chart(table: &TrendTable, window: DateRange, title: &str, hash: &str) -> String {
    let lines = table
        .keys()
        .into_iter()
        .map(|key| {
            let mut values = vec![Some(0.0); window.days()];
            for r in table.rows.iter().filter(|r| r.key == key) {
                if let Some(i) = window.offset_of(r.date) {
                    values[i] = Some(r.value);
                }
            }
            Line::new(key, values)
        })
        .collect();
    chart::render(
        window.start,
        window.days(),
        &[Panel {
            title: title.into(),
            lines,
            markers: Vec::new(),
        }],
        hash,
    )
}

/// Per-phase statistics, theme trends (when a label file is configured) and
/// mention trends (when a lexicon is configured).
pub fn cmd_report(ctx: &Context) -> Result<ReportOutcome> {
    let phases = read_phases(ctx)?;
    let corpus = ctx.load_corpus()?;
    let window = ctx.window(&corpus)?;
    let hash = ctx.hash.as_str();

    let mut stats = Vec::with_capacity(phases.len());
    for rec in &phases {
        let s = corpus::phase_stats(&corpus, &rec.phase())?;
        stats.push(PhaseStatsRow {
            phase: rec.index,
            start: rec.start,
            end: rec.end,
            days: s.days,
            users_per_day: s.users_per_day,
            tweets_per_day: s.tweets_per_day,
            retweets_per_day: s.retweets_per_day,
            depth: s.depth,
            depth_undefined: s.depth_undefined,
            config_hash: ctx.hash.clone(),
        });
    }
    write_csv(&ctx.out("phase_stats.csv"), &stats)?;

    let theme_trends = match &ctx.config.themes.labels {
        Some(path) => {
            let labels = themes::load_label_file(path)?;
            let assignments = read_assignments(ctx)?;
            let table = themes::theme_trends(&assignments, &labels, &corpus)?;
            write_csv(
                &ctx.out("theme_trends.csv"),
                table.rows.iter().map(|r| ThemeRow {
                    date: r.date,
                    theme: &r.key,
                    weighted_count: r.value,
                    config_hash: hash,
                }),
            )?;
            let pct = table.row_normalized();
            write_csv(
                &ctx.out("theme_trends_pct.csv"),
                pct.rows.iter().map(|r| ThemeShareRow {
                    date: r.date,
                    theme: &r.key,
                    share: r.value,
                    config_hash: hash,
                }),
            )?;
            write_text(
                &ctx.out("theme_trends.svg"),
                &trend_chart(&table, window, "Daily theme trends (weighted tweets)", hash),
            )?;
            Some(table)
        }
        None => {
            log::warn!("no themes.labels configured; skipping theme trends");
            None
        }
    };

    let mention_trends = match &ctx.config.themes.lexicon {
        Some(path) => {
            let lexicon = themes::load_lexicon(path)?;
            let table = themes::mention_trends(&corpus, &lexicon)?;
            write_csv(
                &ctx.out("mention_trends.csv"),
                table.rows.iter().map(|r| MentionRow {
                    date: r.date,
                    country: &r.key,
                    count: r.value,
                    config_hash: hash,
                }),
            )?;
            write_text(
                &ctx.out("mention_trends.svg"),
                &trend_chart(&table, window, "Daily country mentions", hash),
            )?;
            Some(table)
        }
        None => {
            log::warn!("no themes.lexicon configured; skipping mention trends");
            None
        }
    };

    Ok(ReportOutcome {
        phase_stats: stats,
        theme_trends,
        mention_trends,
    })
}

// ---------------------------------------------------------------- stats

#[derive(Serialize)]
struct DailyCountRow {
    date: NaiveDate,
    tweets: u64,
    retweets: u64,
    unique_users: u64,
    config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub docs: usize,
    pub skipped: usize,
    pub duplicates: usize,
    pub first_day: Option<NaiveDate>,
    pub last_day: Option<NaiveDate>,
    pub docs_in_window: u64,
    pub config_hash: String,
}

/// `daily_counts.csv` and `summary.json` for the input corpus.
pub fn cmd_stats(ctx: &Context) -> Result<CorpusSummary> {
    let corpus = ctx.load_corpus()?;
    let window = ctx.window(&corpus)?;
    let rows = corpus::daily_table(&corpus, window);
    let in_window = rows.iter().map(|r| r.tweets).sum();
    write_csv(
        &ctx.out("daily_counts.csv"),
        rows.iter().map(|r| DailyCountRow {
            date: r.date,
            tweets: r.tweets,
            retweets: r.retweets,
            unique_users: r.unique_users,
            config_hash: ctx.hash.clone(),
        }),
    )?;
    let range = corpus.date_range();
    let summary = CorpusSummary {
        docs: corpus.len(),
        skipped: corpus.skipped,
        duplicates: corpus.duplicates,
        first_day: range.map(|r| r.start),
        last_day: range.map(|r| r.end),
        docs_in_window: in_window,
        config_hash: ctx.hash.clone(),
    };
    write_json(&ctx.out("summary.json"), &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- synth

/// Writes `corpus.jsonl`, `ledger.json`, `planted_labels.csv`, `lexicon.csv`
/// and a ready-to-run `config.toml` into `out`. The planted labels refer to
/// planted topic ids, not to the ids a fitted model will use.
pub fn cmd_synth(spec_path: &Path, out: &Path) -> Result<synth::CorpusLedger> {
    let spec = SynthSpec::load(spec_path)?;
    write_synth(&spec, out)
}

pub fn write_synth(spec: &SynthSpec, out: &Path) -> Result<synth::CorpusLedger> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let (docs, ledger) = synth::gen_corpus(spec)?;
    let corpus_path = out.join("corpus.jsonl");
    let mut w = create(&corpus_path)?;
    synth::write_jsonl(&mut w, &docs)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&corpus_path, e))?;
    write_json(&out.join("ledger.json"), &ledger)?;
    write_text(&out.join("planted_labels.csv"), &ledger.labels_csv())?;
    if !spec.mentions.is_empty() {
        write_text(&out.join("lexicon.csv"), &synth::lexicon_csv(spec))?;
    }
    let mut config = format!(
        "output_dir = \"out\"\n\n[input]\npath = \"corpus.jsonl\"\n\n[phases]\nwindow = {{ start = \"{}\", end = \"{}\" }}\nanchor_date = \"{}\"\n",
        spec.window.start, spec.window.end, spec.anchor
    );
    if !spec.smoothing {
        config.push_str("smoothing = false\n");
    } else if spec.cutoff != crate::signal::DEFAULT_CUTOFF {
        config.push_str(&format!("cutoff = {}\n", spec.cutoff));
    }
    if !spec.mentions.is_empty() {
        config.push_str("\n[themes]\nlexicon = \"lexicon.csv\"\n");
    }
    write_text(&out.join("config.toml"), &config)?;
    Ok(ledger)
}
