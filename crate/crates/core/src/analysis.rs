//! Linguistic diagnostics over headline sets: word frequencies, POS-tag
//! profiles, mean length, and a real-vs-generated comparison.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::tagger::{tag_checked, PosTagger, TaggerInfo};
use crate::text;

pub const DEFAULT_TOP_WORDS: usize = 15;
pub const DEFAULT_TOP_TAGS: usize = 10;

/// Token counts that merge associatively, so shards can be counted separately.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TokenCounts {
    counts: HashMap<String, u64>,
    total: u64,
}

impl TokenCounts {
    pub fn from_texts<S: AsRef<str>>(texts: &[S]) -> TokenCounts {
        let mut c = TokenCounts::default();
        for t in texts {
            let normalized = text::normalize(t.as_ref());
            for w in text::words(&normalized) {
                *c.counts.entry(w.to_string()).or_insert(0) += 1;
                c.total += 1;
            }
        }
        c
    }

    pub fn merge(mut self, other: TokenCounts) -> TokenCounts {
        for (w, n) in other.counts {
            *self.counts.entry(w).or_insert(0) += n;
        }
        self.total += other.total;
        self
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// All tokens by count descending, ties broken lexicographically.
    pub fn ranked(&self) -> Vec<(String, u64)> {
        let mut entries: Vec<(String, u64)> = self.counts.iter().map(|(w, n)| (w.clone(), *n)).collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        entries
    }

    pub fn top(&self, k: usize) -> FrequencyTable {
        let mut entries = self.ranked();
        entries.truncate(k);
        FrequencyTable { entries, corpus_size: self.total }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyTable {
    pub entries: Vec<(String, u64)>,
    pub corpus_size: u64,
}

impl FrequencyTable {
    /// `token,count` rows for bar charts.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        w.write_record(["token", "count"]).expect("in-memory csv");
        for (token, count) in &self.entries {
            w.write_record([token.as_str(), &count.to_string()]).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 input")
    }
}

/// The `k` most frequent word tokens after normalization.
pub fn word_frequencies<S: AsRef<str>>(headlines: &[S], k: usize) -> Result<FrequencyTable> {
    if k == 0 {
        return Err(CoreError::Config("k must be at least 1".into()));
    }
    let counts = TokenCounts::from_texts(headlines);
    if counts.total() == 0 {
        return Err(CoreError::EmptyInput("word frequencies need at least one token"));
    }
    Ok(counts.top(k))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosProfile {
    /// Relative frequency of each tag; sums to one.
    pub tag_freq: BTreeMap<String, f64>,
    pub tag_counts: BTreeMap<String, u64>,
    pub token_count: u64,
    pub tagger: TaggerInfo,
}

impl PosProfile {
    /// Tags ranked by frequency, ties broken by tag name.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut v: Vec<(String, f64)> = self.tag_freq.iter().map(|(t, f)| (t.clone(), *f)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    }

    pub fn modal_tag(&self) -> Option<String> {
        self.ranked().into_iter().next().map(|(t, _)| t)
    }
}

pub fn pos_profile<S: AsRef<str>, T: PosTagger + ?Sized>(headlines: &[S], tagger: &T) -> Result<PosProfile> {
    let mut tag_counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut total = 0u64;
    for h in headlines {
        let normalized = text::normalize(h.as_ref());
        let tokens: Vec<&str> = text::words(&normalized).collect();
        for tag in tag_checked(tagger, &tokens)? {
            *tag_counts.entry(tag).or_insert(0) += 1;
            total += 1;
        }
    }
    if total == 0 {
        return Err(CoreError::EmptyInput("POS profile needs at least one token"));
    }
    let tag_freq = tag_counts.iter().map(|(t, n)| (t.clone(), *n as f64 / total as f64)).collect();
    Ok(PosProfile { tag_freq, tag_counts, token_count: total, tagger: tagger.info() })
}

/// Mean number of word tokens per headline.
pub fn mean_length<S: AsRef<str>>(headlines: &[S]) -> Result<f64> {
    if headlines.is_empty() {
        return Err(CoreError::EmptyInput("mean length of an empty corpus"));
    }
    let words: usize = headlines.iter().map(|h| text::word_count(&text::normalize(h.as_ref()))).sum();
    Ok(words as f64 / headlines.len() as f64)
}

/// Everything the comparison report needs about one headline set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub name: String,
    pub headline_count: usize,
    pub mean_length: f64,
    pub top_words: FrequencyTable,
    pub pos: PosProfile,
}

pub fn corpus_stats<S: AsRef<str>, T: PosTagger + ?Sized>(
    name: &str,
    headlines: &[S],
    tagger: &T,
    top_words: usize,
) -> Result<CorpusStats> {
    Ok(CorpusStats {
        name: name.to_string(),
        headline_count: headlines.len(),
        mean_length: mean_length(headlines)?,
        top_words: word_frequencies(headlines, top_words)?,
        pos: pos_profile(headlines, tagger)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagDelta {
    pub tag: String,
    pub real: f64,
    pub generated: f64,
    /// generated minus real
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub real_name: String,
    pub generated_name: String,
    pub tagger: TaggerInfo,
    pub real_top_tags: Vec<(String, f64)>,
    pub generated_top_tags: Vec<(String, f64)>,
    /// Every tag seen in either set, ordered by tag name.
    pub tag_deltas: Vec<TagDelta>,
    pub real_top_words: FrequencyTable,
    pub generated_top_words: FrequencyTable,
    pub real_mean_length: f64,
    pub generated_mean_length: f64,
    pub mean_length_delta: f64,
}

pub fn compare_profiles(real: &CorpusStats, generated: &CorpusStats) -> ComparisonReport {
    let mut tags: Vec<&String> = real.pos.tag_freq.keys().chain(generated.pos.tag_freq.keys()).collect();
    tags.sort();
    tags.dedup();
    let tag_deltas = tags
        .into_iter()
        .map(|t| {
            let r = real.pos.tag_freq.get(t).copied().unwrap_or(0.0);
            let g = generated.pos.tag_freq.get(t).copied().unwrap_or(0.0);
            TagDelta { tag: t.clone(), real: r, generated: g, delta: g - r }
        })
        .collect();
    let top = |p: &PosProfile| p.ranked().into_iter().take(DEFAULT_TOP_TAGS).collect::<Vec<_>>();
    ComparisonReport {
        real_name: real.name.clone(),
        generated_name: generated.name.clone(),
        tagger: real.pos.tagger.clone(),
        real_top_tags: top(&real.pos),
        generated_top_tags: top(&generated.pos),
        tag_deltas,
        real_top_words: real.top_words.clone(),
        generated_top_words: generated.top_words.clone(),
        real_mean_length: real.mean_length,
        generated_mean_length: generated.mean_length,
        mean_length_delta: generated.mean_length - real.mean_length,
    }
}

impl ComparisonReport {
    pub fn delta(&self, tag: &str) -> Option<f64> {
        self.tag_deltas.iter().find(|d| d.tag == tag).map(|d| d.delta)
    }

    /// Side-by-side top-tag table: real POS/freq next to generated POS/freq.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<22}| {:<22}", self.real_name, self.generated_name);
        let _ = writeln!(out, "{:<10}{:>10}  | {:<10}{:>10}", "POS", "freq", "POS", "freq");
        let _ = writeln!(out, "{}", "-".repeat(46));
        let rows = self.real_top_tags.len().max(self.generated_top_tags.len());
        for i in 0..rows {
            let cell = |v: &[(String, f64)]| match v.get(i) {
                Some((t, f)) => format!("{t:<10}{f:>10.3}"),
                None => format!("{:20}", ""),
            };
            let _ = writeln!(out, "{}  | {}", cell(&self.real_top_tags), cell(&self.generated_top_tags));
        }
        let _ = writeln!(
            out,
            "\nmean length: {:.2} vs {:.2} words (tagger {} {})",
            self.real_mean_length, self.generated_mean_length, self.tagger.name, self.tagger.version
        );
        out
    }
}
