//! Property tests for the corpus, phasing, themes, LDA and synth invariants.

use chrono::{DateTime, Duration, NaiveDate, Utc};
use phasetopic::corpus::{daily_counts, daily_table, phase_stats, Corpus, DateRange, Doc};
use phasetopic::lda::{self, AlphaRule, LdaParams};
use phasetopic::phasing::{build_phases, detect_phases, Phase};
use phasetopic::synth::{self, Burst, SynthSpec};
use phasetopic::textprep::{build_vocabulary, encode};
use phasetopic::themes::{mention_trends, MentionLexicon};
use proptest::prelude::*;

fn jan1() -> NaiveDate {
    NaiveDate::from_ymd_opt(2020, 1, 1).unwrap()
}

fn at(day: i64, secs: i64) -> DateTime<Utc> {
    jan1().and_hms_opt(0, 0, 0).unwrap().and_utc() + Duration::days(day) + Duration::seconds(secs)
}

/// (day, second of day, retweets, user, word) tuples become documents.
fn docs_strategy() -> impl Strategy<Value = Vec<Doc>> {
    prop::collection::vec((0i64..30, 0i64..86_400, 0u64..50, 0u8..8, 0u8..4), 0..200).prop_map(
        |rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (d, s, rt, u, w))| Doc {
                    id: format!("d{i}"),
                    timestamp: at(d, s),
                    text: ["china flu", "wuhan news", "italy and china", "nothing"][w as usize]
                        .into(),
                    retweet_count: rt,
                    user_id: format!("u{u}"),
                    lang: None,
                })
                .collect()
        },
    )
}

fn month() -> DateRange {
    DateRange::new(jan1(), jan1() + Duration::days(29)).unwrap()
}

proptest! {
    #[test]
    fn daily_counts_conserve_documents(docs in docs_strategy()) {
        let n = docs.len();
        let corpus = Corpus::from_docs(docs);
        let total: f64 = daily_counts(&corpus, month()).values.iter().sum();
        prop_assert_eq!(total, n as f64);
    }

    #[test]
    fn daily_counts_ignore_input_order(docs in docs_strategy(), rot in 0usize..200) {
        let forward = Corpus::from_docs(docs.clone());
        let mut shuffled = docs;
        shuffled.reverse();
        if !shuffled.is_empty() {
            let r = rot % shuffled.len();
            shuffled.rotate_left(r);
        }
        let back = Corpus::from_docs(shuffled);
        prop_assert_eq!(daily_table(&forward, month()), daily_table(&back, month()));
    }

    #[test]
    fn phase_stats_are_consistent(docs in docs_strategy(), cut in 1i64..29) {
        let corpus = Corpus::from_docs(docs);
        let phases = build_phases(&[jan1() + Duration::days(cut)], month()).unwrap();
        for phase in phases.iter() {
            let s = phase_stats(&corpus, phase).unwrap();
            prop_assert!(s.users_per_day <= s.tweets_per_day + 1e-12);
            if s.tweets_per_day > 0.0 {
                prop_assert!((s.depth - s.retweets_per_day / s.tweets_per_day).abs() < 1e-9);
            } else {
                prop_assert!(s.depth_undefined);
            }
        }
    }

    #[test]
    fn mentions_never_exceed_daily_volume(docs in docs_strategy()) {
        let corpus = Corpus::from_docs(docs);
        let mut lexicon = MentionLexicon::default();
        lexicon.add("China", "china");
        lexicon.add("China", "wuhan");
        lexicon.add("Italy", "italy");
        let table = mention_trends(&corpus, &lexicon).unwrap();
        let volume = daily_counts(&corpus, month());
        for row in &table.rows {
            prop_assert!(row.value <= volume.get(row.date).unwrap_or(0.0));
        }
    }
}

fn burst_spec(
    start_offset: i64,
    slope: f64,
    plateau_mult: f64,
    second: Option<(i64, f64)>,
) -> SynthSpec {
    let window = DateRange::new(jan1(), jan1() + Duration::days(89)).unwrap();
    let anchor = jan1() + Duration::days(start_offset);
    let mut spec = SynthSpec::new(window, anchor, 1);
    spec.bursts.push(Burst {
        start: anchor,
        ramp_slope: slope,
        plateau: slope * plateau_mult,
    });
    if let Some((gap, mult)) = second {
        spec.bursts.push(Burst {
            start: anchor + Duration::days(gap),
            ramp_slope: slope * mult,
            plateau: slope * mult * plateau_mult,
        });
    }
    spec
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn boundaries_satisfy_the_joint_condition(
        off in 10i64..30, slope in 2.0f64..40.0, mult in 3.0f64..10.0,
        second in prop::option::of((18i64..35, 1.5f64..3.0)),
    ) {
        let spec = burst_spec(off, slope.round(), mult, second);
        let (series, _) = synth::gen_series(&spec).unwrap();
        let det = detect_phases(&series, spec.anchor, spec.smoothing_cutoff()).unwrap();
        prop_assert_eq!(det.boundaries[0], spec.anchor);
        for &b in &det.boundaries[1..] {
            let v = det.kinetics.velocity.get(b).unwrap();
            let a = det.kinetics.acceleration.get(b).unwrap();
            prop_assert!(det.thresholds.admits(v, a), "{b}: v={v} a={a}");
        }
    }

    #[test]
    fn scaling_keeps_boundaries_on_large_series(
        off in 10i64..30, slope in 20.0f64..40.0, mult in 3.0f64..10.0,
        second in prop::option::of((18i64..35, 1.5f64..3.0)), c in 1.5f64..20.0,
    ) {
        let mut spec = burst_spec(off, slope.round(), mult, second);
        spec.baseline_rate = 200.0;
        // unsmoothed, the anchor kinetics both equal the ramp slope
        spec.smoothing = false;
        let (series, _) = synth::gen_series(&spec).unwrap();
        let det = detect_phases(&series, spec.anchor, spec.smoothing_cutoff()).unwrap();
        let kin = &det.kinetics;
        // equivariance only holds where rounding is negligible
        let anchor_v = kin.velocity.get(spec.anchor).unwrap();
        let anchor_a = kin.acceleration.get(spec.anchor).unwrap();
        prop_assume!(anchor_v.abs() > 10.0 && anchor_a.abs() > 10.0);
        let mut scaled = series.clone();
        scaled.values.iter_mut().for_each(|v| *v *= c);
        let det_c = detect_phases(&scaled, spec.anchor, spec.smoothing_cutoff()).unwrap();
        let vc = det_c.kinetics.velocity.get(spec.anchor).unwrap();
        prop_assert!((vc - c * anchor_v).abs() < 1e-6 * (1.0 + vc.abs()));
        prop_assert_eq!(det.boundaries, det_c.boundaries);
    }
}

#[test]
fn phase_of_is_total_on_the_window() {
    let phases = build_phases(
        &[jan1() + Duration::days(5), jan1() + Duration::days(17)],
        month(),
    )
    .unwrap();
    let indices: Vec<usize> = month()
        .iter()
        .map(|d| phases.phase_of(d).unwrap().index)
        .collect();
    assert_eq!(indices.iter().filter(|&&i| i == 0).count(), 5);
    assert_eq!(indices.iter().filter(|&&i| i == 1).count(), 12);
    assert_eq!(indices.iter().filter(|&&i| i == 2).count(), 13);
    assert_eq!(
        phases.phases[2],
        Phase {
            index: 2,
            start: jan1() + Duration::days(17),
            end: jan1() + Duration::days(29)
        }
    );
}

#[test]
fn synth_is_byte_deterministic_and_seed_sensitive() {
    let spec = SynthSpec::from_toml(include_str!("../../../specs/korea_replica.toml")).unwrap();
    let dump = |spec: &SynthSpec| {
        let (docs, ledger) = synth::gen_corpus(spec).unwrap();
        let mut buf = Vec::new();
        synth::write_jsonl(&mut buf, &docs).unwrap();
        (buf, serde_json::to_vec(&ledger).unwrap())
    };
    let first = dump(&spec);
    assert_eq!(first, dump(&spec));
    let mut other = spec.clone();
    other.seed += 1;
    assert_ne!(first.0, dump(&other).0);
}

#[test]
fn lda_is_seed_deterministic() {
    let spec = SynthSpec::from_toml(include_str!("../../../specs/korea_replica.toml")).unwrap();
    let (docs, _) = synth::gen_corpus(&spec).unwrap();
    let docs: Vec<(String, Vec<String>)> = docs
        .into_iter()
        .take(600)
        .map(|d| {
            (
                d.id,
                d.text.split_whitespace().map(str::to_string).collect(),
            )
        })
        .collect();
    let tokens: Vec<Vec<String>> = docs.iter().map(|(_, t)| t.clone()).collect();
    let enc = encode(docs, build_vocabulary(&tokens, 2).unwrap());
    let train = |seed| {
        let params = LdaParams::new(
            4,
            AlphaRule::default().alpha(4),
            lda::DEFAULT_BETA,
            20,
            seed,
        );
        lda::gibbs_train(&enc, params).unwrap()
    };
    let a = train(3);
    assert_eq!(a, train(3));
    assert_ne!(a.assignments, train(4).assignments);
    let ppl = a.perplexity(&enc).unwrap();
    assert!(ppl >= 1.0 && ppl <= enc.vocab.len() as f64, "{ppl}");
}
