//! Major-topic filtering, labeling packets, theme labels and daily trend tables.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Doc};
use crate::error::{Error, Result};
use crate::lda::LdaModel;
use crate::textprep::EncodedCorpus;

pub const KEYWORDS_PER_TOPIC: usize = 30;
pub const EXEMPLARS_PER_TOPIC: usize = 1000;
pub const MAX_THEMES_PER_TOPIC: usize = 2;
pub const NEWS_SUFFIXES: [&str; 5] = ["_confirmed", "_hate", "_economy", "_cheerup", "_education"];

/// Rule for discarding minor topics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PercentileMode {
    /// Largest topics whose cumulative size first reaches 75% of documents.
    #[default]
    Cumulative75,
    /// Topics at or above the 25th percentile of the topic-size distribution.
    Distribution25,
}

impl std::str::FromStr for PercentileMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cumulative75" => Ok(PercentileMode::Cumulative75),
            "distribution25" => Ok(PercentileMode::Distribution25),
            other => Err(Error::Config(format!("unknown percentile mode `{other}`"))),
        }
    }
}

/// Number of documents whose dominant topic is `k`, for every `k < num_topics`.
pub fn topic_sizes(doc_topics: &[usize], num_topics: usize) -> Vec<usize> {
    let mut sizes = vec![0; num_topics];
    for &t in doc_topics {
        sizes[t] += 1;
    }
    sizes
}

/// Topic ids ordered by size descending, lower id first on ties.
fn by_size(sizes: &[usize]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| sizes[b].cmp(&sizes[a]).then(a.cmp(&b)));
    order
}

pub fn major_topics_from_sizes(sizes: &[usize], mode: PercentileMode) -> BTreeSet<usize> {
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return BTreeSet::new();
    }
    match mode {
        PercentileMode::Cumulative75 => {
            let mut kept = BTreeSet::new();
            let mut covered = 0;
            for t in by_size(sizes) {
                if 4 * covered >= 3 * total {
                    break;
                }
                covered += sizes[t];
                kept.insert(t);
            }
            kept
        }
        PercentileMode::Distribution25 => {
            let mut sorted: Vec<f64> = sizes.iter().map(|&s| s as f64).collect();
            sorted.sort_by(f64::total_cmp);
            // linear interpolation between closest ranks
            let pos = 0.25 * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            let cut = sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64);
            (0..sizes.len())
                .filter(|&t| sizes[t] > 0 && sizes[t] as f64 >= cut)
                .collect()
        }
    }
}

/// Topics kept after discarding minor ones.
pub fn major_topics(
    doc_topics: &[usize],
    num_topics: usize,
    mode: PercentileMode,
) -> BTreeSet<usize> {
    major_topics_from_sizes(&topic_sizes(doc_topics, num_topics), mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Keyword {
    pub token: String,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exemplar {
    pub id: String,
    pub retweet_count: u64,
    pub text: String,
}

/// Material handed to annotators for one kept topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSummary {
    pub phase_index: usize,
    pub topic_id: usize,
    pub size: usize,
    pub keywords: Vec<Keyword>,
    pub exemplars: Vec<Exemplar>,
    /// Fewer than [`KEYWORDS_PER_TOPIC`] tokens were ever assigned to the topic.
    pub keywords_truncated: bool,
}

/// Top keywords by `phi` and most-retweeted documents for each kept topic.
///
/// Only tokens with at least one assignment to the topic are eligible as
/// keywords, so topics with a small support yield fewer than 30.
pub fn topic_summaries(
    model: &LdaModel,
    encoded: &EncodedCorpus,
    docs: &HashMap<&str, &Doc>,
    kept: &BTreeSet<usize>,
    phase_index: usize,
) -> Vec<TopicSummary> {
    let doc_topics: Vec<usize> = (0..model.num_docs())
        .map(|d| crate::lda::argmax_topic(model.doc_topic_row(d)))
        .collect();
    kept.iter()
        .map(|&k| {
            let phi = model.phi(k);
            let mut words: Vec<usize> = (0..model.vocab_size)
                .filter(|&w| model.topic_word(k, w) > 0)
                .collect();
            words.sort_by(|&a, &b| phi[b].total_cmp(&phi[a]).then(a.cmp(&b)));
            let keywords_truncated = words.len() < KEYWORDS_PER_TOPIC;
            if keywords_truncated {
                log::warn!(
                    "phase {phase_index} topic {k}: only {} keyword(s) with nonzero count",
                    words.len()
                );
            }
            let keywords = words
                .into_iter()
                .take(KEYWORDS_PER_TOPIC)
                .map(|w| Keyword {
                    token: encoded.vocab.token(w as u32).to_string(),
                    probability: phi[w],
                })
                .collect();

            let mut members: Vec<&Doc> = encoded
                .docs
                .iter()
                .zip(&doc_topics)
                .filter(|(_, &t)| t == k)
                .filter_map(|(d, _)| docs.get(d.id.as_str()).copied())
                .collect();
            let size = members.len();
            members.sort_by(|a, b| {
                b.retweet_count
                    .cmp(&a.retweet_count)
                    .then_with(|| a.id.cmp(&b.id))
            });
            let exemplars = members
                .into_iter()
                .take(EXEMPLARS_PER_TOPIC)
                .map(|d| Exemplar {
                    id: d.id.clone(),
                    retweet_count: d.retweet_count,
                    text: d.text.clone(),
                })
                .collect();
            TopicSummary {
                phase_index,
                topic_id: k,
                size,
                keywords,
                exemplars,
                keywords_truncated,
            }
        })
        .collect()
}

/// Human theme labels per `(phase, topic)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ThemeLabelMap {
    pub entries: BTreeMap<(usize, usize), Vec<String>>,
}

/// Checks a single theme string against the news sub-label taxonomy.
pub fn validate_theme(theme: &str) -> std::result::Result<(), String> {
    if theme.is_empty() {
        return Err("empty theme".into());
    }
    if let Some(suffix) = theme.strip_prefix("news") {
        if suffix.starts_with('_') && !NEWS_SUFFIXES.contains(&suffix) {
            return Err(format!(
                "unknown news sub-label `{theme}` (allowed: news{})",
                NEWS_SUFFIXES.join(", news")
            ));
        }
    }
    Ok(())
}

impl ThemeLabelMap {
    /// Adds themes for a topic, merging duplicates; fails above two themes.
    pub fn insert(
        &mut self,
        phase: usize,
        topic: usize,
        themes: &[&str],
    ) -> std::result::Result<(), String> {
        let entry = self.entries.entry((phase, topic)).or_default();
        for theme in themes {
            validate_theme(theme)?;
            if !entry.iter().any(|t| t == theme) {
                entry.push(theme.to_string());
            }
        }
        if entry.len() > MAX_THEMES_PER_TOPIC {
            return Err(format!(
                "phase {phase} topic {topic} has {} themes (max {MAX_THEMES_PER_TOPIC})",
                entry.len()
            ));
        }
        Ok(())
    }

    pub fn get(&self, phase: usize, topic: usize) -> Option<&[String]> {
        self.entries.get(&(phase, topic)).map(Vec::as_slice)
    }
}

#[derive(Debug, Deserialize)]
struct LabelRow {
    phase: usize,
    topic: usize,
    themes: String,
}

/// Parses `phase,topic,themes` CSV, where `themes` is `|`-separated.
pub fn parse_labels<R: Read>(reader: R) -> Result<ThemeLabelMap> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut map = ThemeLabelMap::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::LabelFile {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let row: LabelRow = rec.deserialize(None).map_err(|e| Error::LabelFile {
            line,
            message: e.to_string(),
        })?;
        let themes: Vec<&str> = row.themes.split('|').map(str::trim).collect();
        if themes.len() > MAX_THEMES_PER_TOPIC {
            return Err(Error::LabelFile {
                line,
                message: format!(
                    "{} themes given, at most {MAX_THEMES_PER_TOPIC} allowed",
                    themes.len()
                ),
            });
        }
        map.insert(row.phase, row.topic, &themes)
            .map_err(|message| Error::LabelFile { line, message })?;
    }
    Ok(map)
}

pub fn load_label_file(path: &Path) -> Result<ThemeLabelMap> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_labels(file)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendRow {
    pub date: NaiveDate,
    pub key: String,
    pub value: f64,
}

/// Daily values per key, sorted by date then key.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrendTable {
    pub rows: Vec<TrendRow>,
}

impl TrendTable {
    fn from_map(map: BTreeMap<(NaiveDate, String), f64>) -> Self {
        TrendTable {
            rows: map
                .into_iter()
                .map(|((date, key), value)| TrendRow { date, key, value })
                .collect(),
        }
    }

    pub fn total(&self) -> f64 {
        self.rows.iter().map(|r| r.value).sum()
    }

    pub fn get(&self, date: NaiveDate, key: &str) -> f64 {
        self.rows
            .iter()
            .find(|r| r.date == date && r.key == key)
            .map_or(0.0, |r| r.value)
    }

    pub fn keys(&self) -> BTreeSet<&str> {
        self.rows.iter().map(|r| r.key.as_str()).collect()
    }

    /// Each value divided by the total of its date.
    pub fn row_normalized(&self) -> TrendTable {
        let mut per_day: BTreeMap<NaiveDate, f64> = BTreeMap::new();
        for r in &self.rows {
            *per_day.entry(r.date).or_default() += r.value;
        }
        TrendTable {
            rows: self
                .rows
                .iter()
                .map(|r| TrendRow {
                    value: r.value / per_day[&r.date],
                    ..r.clone()
                })
                .collect(),
        }
    }
}

/// Dominant-topic assignments of one phase plus the topics kept in it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseAssignments {
    pub phase_index: usize,
    pub kept: BTreeSet<usize>,
    pub doc_topics: Vec<(String, usize)>,
}

/// Daily theme weights: each document of a kept topic adds `1 / n_themes` to
/// each of its topic's themes on its day.
pub fn theme_trends(
    phases: &[PhaseAssignments],
    labels: &ThemeLabelMap,
    corpus: &Corpus,
) -> Result<TrendTable> {
    let missing: Vec<(usize, usize)> = phases
        .iter()
        .flat_map(|p| p.kept.iter().map(move |&t| (p.phase_index, t)))
        .filter(|&(p, t)| labels.get(p, t).is_none_or(<[String]>::is_empty))
        .collect();
    if !missing.is_empty() {
        return Err(Error::UnlabeledTopics(missing));
    }
    let by_id = corpus.index_by_id();
    let mut acc: BTreeMap<(NaiveDate, String), f64> = BTreeMap::new();
    for phase in phases {
        for (id, topic) in &phase.doc_topics {
            if !phase.kept.contains(topic) {
                continue;
            }
            let Some(doc) = by_id.get(id.as_str()) else {
                log::warn!("document `{id}` is not in the corpus");
                continue;
            };
            let themes = labels
                .get(phase.phase_index, *topic)
                .expect("checked above");
            let weight = 1.0 / themes.len() as f64;
            let date = corpus.date_of(doc);
            for theme in themes {
                *acc.entry((date, theme.clone())).or_default() += weight;
            }
        }
    }
    Ok(TrendTable::from_map(acc))
}

/// Country name -> aliases (lowercase), matched as substrings.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionLexicon {
    pub countries: BTreeMap<String, Vec<String>>,
}

impl MentionLexicon {
    pub fn add(&mut self, country: &str, alias: &str) {
        let alias = alias.trim().to_lowercase();
        if alias.is_empty() {
            return;
        }
        let aliases = self
            .countries
            .entry(country.trim().to_string())
            .or_default();
        if !aliases.contains(&alias) {
            aliases.push(alias);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.countries.is_empty()
    }

    /// Countries with at least one alias in `text`.
    pub fn countries_in<'a>(&'a self, text: &str) -> impl Iterator<Item = &'a str> + 'a {
        let norm = normalize_for_matching(text);
        self.countries
            .iter()
            .filter(move |(_, aliases)| aliases.iter().any(|a| norm.contains(a.as_str())))
            .map(|(c, _)| c.as_str())
    }
}

/// Text form that mention aliases are matched against.
pub fn normalize_for_matching(text: &str) -> String {
    text.to_lowercase()
}

#[derive(Debug, Deserialize)]
struct LexiconRow {
    country: String,
    alias: String,
}

pub fn parse_lexicon<R: Read>(reader: R) -> Result<MentionLexicon> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut lex = MentionLexicon::default();
    for row in rdr.deserialize::<LexiconRow>() {
        let row = row.map_err(|e| Error::InvalidInput(format!("lexicon: {e}")))?;
        lex.add(&row.country, &row.alias);
    }
    Ok(lex)
}

pub fn load_lexicon(path: &Path) -> Result<MentionLexicon> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon(file)
}

/// Daily count of documents mentioning each country, at most once per document.
pub fn mention_trends(corpus: &Corpus, lexicon: &MentionLexicon) -> Result<TrendTable> {
    if lexicon.is_empty() {
        return Err(Error::InvalidInput("mention lexicon is empty".into()));
    }
    let mut acc: BTreeMap<(NaiveDate, String), f64> = BTreeMap::new();
    for doc in corpus.docs() {
        let date = corpus.date_of(doc);
        for country in lexicon.countries_in(&doc.text) {
            *acc.entry((date, country.to_string())).or_default() += 1.0;
        }
    }
    Ok(TrendTable::from_map(acc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_timestamp;

    fn doc(id: &str, day: u32, text: &str) -> Doc {
        Doc {
            id: id.into(),
            timestamp: parse_timestamp(&format!("2020-02-{day:02}T12:00:00Z")).unwrap(),
            text: text.into(),
            retweet_count: 0,
            user_id: "u".into(),
            lang: None,
        }
    }

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn cumulative_rule() {
        assert_eq!(
            major_topics_from_sizes(&[50, 30, 15, 5], PercentileMode::Cumulative75),
            set(&[0, 1])
        );
        assert_eq!(
            major_topics_from_sizes(&[5, 15, 30, 50], PercentileMode::Cumulative75),
            set(&[2, 3])
        );
        // exactly 75% is enough
        assert_eq!(
            major_topics_from_sizes(&[75, 25], PercentileMode::Cumulative75),
            set(&[0])
        );
        assert_eq!(
            major_topics_from_sizes(&[7], PercentileMode::Cumulative75),
            set(&[0])
        );
        assert!(major_topics_from_sizes(&[0, 0], PercentileMode::Cumulative75).is_empty());
    }

    #[test]
    fn distribution_rule() {
        // sizes sorted [5, 15, 30, 50]; 25th percentile = 5 + 0.75 * 10 = 12.5
        assert_eq!(
            major_topics_from_sizes(&[50, 30, 15, 5], PercentileMode::Distribution25),
            set(&[0, 1, 2])
        );
    }

    #[test]
    fn major_topics_from_assignments() {
        let docs = [0, 0, 0, 1, 1, 2];
        assert_eq!(
            major_topics(&docs, 4, PercentileMode::Cumulative75),
            set(&[0, 1])
        );
    }

    #[test]
    fn label_file_parsing() {
        let map = parse_labels(
            "phase,topic,themes\n1,3,news_confirmed\n1,4,news_hate|politics\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(map.get(1, 3).unwrap(), ["news_confirmed"]);
        assert_eq!(map.get(1, 4).unwrap(), ["news_hate", "politics"]);
    }

    #[test]
    fn label_file_rejects_three_themes() {
        let err = parse_labels("phase,topic,themes\n0,0,x\n1,3,a|b|c\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::LabelFile { line: 3, .. }), "{err}");
    }

    #[test]
    fn label_file_rejects_unknown_news_suffix() {
        let err = parse_labels("phase,topic,themes\n1,3,news_sports\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::LabelFile { line: 2, .. }), "{err}");
        assert!(parse_labels("phase,topic,themes\n1,3,news_confirmed_hate\n".as_bytes()).is_err());
    }

    #[test]
    fn label_file_merges_duplicates() {
        let map =
            parse_labels("phase,topic,themes\n0,1,news|news\n0,1,politics\n".as_bytes()).unwrap();
        assert_eq!(map.get(0, 1).unwrap(), ["news", "politics"]);
        assert!(parse_labels(
            "phase,topic,themes\n0,1,news\n0,1,politics\n0,1,health\n".as_bytes()
        )
        .is_err());
    }

    #[test]
    fn single_and_dual_themes() {
        let docs: Vec<Doc> = (0..20).map(|i| doc(&format!("d{i}"), 3, "")).collect();
        let corpus = Corpus::from_docs(docs);
        let phase = PhaseAssignments {
            phase_index: 1,
            kept: set(&[0, 1]),
            doc_topics: (0..20).map(|i| (format!("d{i}"), i / 10)).collect(),
        };
        let mut labels = ThemeLabelMap::default();
        labels.insert(1, 0, &["news"]).unwrap();
        labels
            .insert(1, 1, &["news_confirmed", "politics"])
            .unwrap();
        let table = theme_trends(&[phase], &labels, &corpus).unwrap();
        let day = NaiveDate::from_ymd_opt(2020, 2, 3).unwrap();
        assert_eq!(table.get(day, "news"), 10.0);
        assert_eq!(table.get(day, "news_confirmed"), 5.0);
        assert_eq!(table.get(day, "politics"), 5.0);
        assert_eq!(table.total(), 20.0);
        let shares = table.row_normalized();
        assert_eq!(shares.get(day, "news"), 0.5);
    }

    #[test]
    fn discarded_topics_do_not_count_and_unlabeled_kept_topics_fail() {
        let corpus = Corpus::from_docs(vec![doc("a", 1, ""), doc("b", 1, "")]);
        let phase = PhaseAssignments {
            phase_index: 0,
            kept: set(&[0]),
            doc_topics: vec![("a".into(), 0), ("b".into(), 1)],
        };
        let mut labels = ThemeLabelMap::default();
        labels.insert(0, 0, &["health"]).unwrap();
        assert_eq!(
            theme_trends(std::slice::from_ref(&phase), &labels, &corpus)
                .unwrap()
                .total(),
            1.0
        );
        let err = theme_trends(&[phase], &ThemeLabelMap::default(), &corpus).unwrap_err();
        assert!(matches!(err, Error::UnlabeledTopics(ref v) if v == &vec![(0, 0)]));
    }

    #[test]
    fn mentions_count_once_per_document() {
        let mut lex = MentionLexicon::default();
        lex.add("Italy", "italy");
        lex.add("US", "us");
        lex.add("US", "u.s.");
        let corpus = Corpus::from_docs(vec![
            doc("a", 1, "corona in Italy and the US"),
            doc("b", 1, "italy italy italy"),
        ]);
        let t = mention_trends(&corpus, &lex).unwrap();
        let day = NaiveDate::from_ymd_opt(2020, 2, 1).unwrap();
        assert_eq!(t.get(day, "Italy"), 2.0);
        assert_eq!(t.get(day, "US"), 1.0);
        assert!(mention_trends(&corpus, &MentionLexicon::default()).is_err());
    }

    #[test]
    fn lexicon_csv() {
        let lex = parse_lexicon("country,alias\nKorea,한국\nKorea,Korea\nIran,iran\n".as_bytes())
            .unwrap();
        assert_eq!(
            lex.countries["Korea"],
            vec!["한국".to_string(), "korea".to_string()]
        );
    }
}
