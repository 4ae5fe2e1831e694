//! Corpus ingestion, the temporal defender/attacker split and dataset bundling.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::text;

/// Header expected on every corpus CSV.
pub const CORPUS_HEADER: [&str; 2] = ["publish_date", "headline_text"];
const DATE_FORMAT: &str = "%Y%m%d";
pub const DEFAULT_DEV_FRACTION: f64 = 0.2;

/// Origin of a headline, which is also the class label of the detection task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Generated,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Real, Label::Generated];

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Real => "real",
            Label::Generated => "generated",
        }
    }

    pub fn flipped(self) -> Label {
        match self {
            Label::Real => Label::Generated,
            Label::Generated => Label::Real,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Label {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Label::Real),
            "generated" => Ok(Label::Generated),
            other => Err(CoreError::InvalidRecord(format!("unknown label `{other}`"))),
        }
    }
}

/// Publication era. The defender trains on 2015, the attacker publishes in 2016/2017.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Era {
    Defender,
    Attacker,
}

impl Era {
    pub const ALL: [Era; 2] = [Era::Defender, Era::Attacker];

    pub fn of_year(year: i32) -> Option<Era> {
        match year {
            2015 => Some(Era::Defender),
            2016 | 2017 => Some(Era::Attacker),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Era::Defender => "defender",
            Era::Attacker => "attacker",
        }
    }

    /// Synthetic publish date stamped on generated headlines: the midpoint of the era.
    pub fn sentinel_date(self) -> NaiveDate {
        match self {
            Era::Defender => NaiveDate::from_ymd_opt(2015, 7, 1).unwrap(),
            Era::Attacker => NaiveDate::from_ymd_opt(2016, 12, 31).unwrap(),
        }
    }
}

impl fmt::Display for Era {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A dated, sourced headline. The text is always normalized and non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Headline {
    pub text: String,
    pub publish_date: NaiveDate,
    pub source: Label,
    pub year: i32,
}

impl Headline {
    pub fn real(raw_text: &str, publish_date: NaiveDate) -> Result<Headline> {
        let text = checked_text(raw_text)?;
        Ok(Headline { text, publish_date, source: Label::Real, year: publish_date.year() })
    }

    /// A generated headline carries the era's sentinel date; its year is the
    /// year of that sentinel.
    pub fn generated(raw_text: &str, era: Era) -> Result<Headline> {
        let text = checked_text(raw_text)?;
        let publish_date = era.sentinel_date();
        Ok(Headline { text, publish_date, source: Label::Generated, year: publish_date.year() })
    }

    pub fn era(&self) -> Option<Era> {
        Era::of_year(self.year)
    }

    pub fn word_count(&self) -> usize {
        text::word_count(&self.text)
    }
}

fn checked_text(raw: &str) -> Result<String> {
    let text = text::normalize(raw);
    if text.is_empty() {
        return Err(CoreError::InvalidRecord("headline text is empty".into()));
    }
    Ok(text)
}

/// A row that could not be turned into a [`Headline`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRow {
    /// 1-based line number in the source file, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct CorpusLoad {
    pub headlines: Vec<Headline>,
    pub rejects: Vec<RejectedRow>,
}

/// Loads a `publish_date,headline_text` CSV as real headlines.
pub fn load_corpus(path: &Path) -> Result<CorpusLoad> {
    load_corpus_as(path, Label::Real)
}

/// Loads a corpus CSV, stamping every row with `source`. Generated batches
/// are stored in the same schema as the real corpus.
pub fn load_corpus_as(path: &Path, source: Label) -> Result<CorpusLoad> {
    let file = File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CoreError::CorpusNotFound(path.to_path_buf()),
        _ => CoreError::Io(e),
    })?;
    read_corpus(file, source)
}

pub fn read_corpus<R: Read>(reader: R, source: Label) -> Result<CorpusLoad> {
    let mut csv = csv::ReaderBuilder::new().flexible(true).has_headers(false).from_reader(reader);
    let mut records = csv.records();
    let header = match records.next() {
        None => return Err(CoreError::EmptyCorpus),
        Some(h) => h?,
    };
    let header_fields: Vec<&str> = header.iter().map(str::trim).collect();
    if header_fields != CORPUS_HEADER {
        return Err(CoreError::BadHeader(header_fields.join(",")));
    }

    let mut load = CorpusLoad::default();
    let mut rows = 0usize;
    for record in records {
        rows += 1;
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                load.rejects.push(RejectedRow { line, reason: e.to_string() });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        match parse_row(&record, source) {
            Ok(h) => load.headlines.push(h),
            Err(reason) => load.rejects.push(RejectedRow { line, reason }),
        }
    }
    if rows == 0 {
        return Err(CoreError::EmptyCorpus);
    }
    Ok(load)
}

fn parse_row(record: &csv::StringRecord, source: Label) -> std::result::Result<Headline, String> {
    if record.len() != 2 {
        return Err(format!("expected 2 fields, found {}", record.len()));
    }
    let raw_date = record[0].trim();
    let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT)
        .map_err(|e| format!("malformed date `{raw_date}`: {e}"))?;
    let text = checked_text(&record[1]).map_err(|e| e.to_string())?;
    Ok(Headline { text, publish_date: date, source, year: date.year() })
}

/// Writes headlines in the corpus CSV schema.
pub fn write_corpus<W: Write>(writer: W, headlines: &[Headline]) -> Result<()> {
    let mut csv = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    csv.write_record(CORPUS_HEADER)?;
    for h in headlines {
        let date = h.publish_date.format(DATE_FORMAT).to_string();
        csv.write_record([date.as_str(), h.text.as_str()])?;
    }
    csv.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Default)]
pub struct TemporalSplit {
    pub defender: Vec<Headline>,
    pub attacker: Vec<Headline>,
    /// Headlines from years outside both eras.
    pub discarded: usize,
}

/// Partitions headlines by year: 2015 goes to the defender, 2016/2017 to the
/// attacker, everything else is discarded and counted.
pub fn temporal_split(headlines: Vec<Headline>) -> TemporalSplit {
    let mut split = TemporalSplit::default();
    for h in headlines {
        match h.era() {
            Some(Era::Defender) => split.defender.push(h),
            Some(Era::Attacker) => split.attacker.push(h),
            None => split.discarded += 1,
        }
    }
    split
}

/// Removes exact-duplicate texts, keeping first occurrences in order.
pub fn dedup_texts(headlines: Vec<Headline>) -> (Vec<Headline>, usize) {
    let before = headlines.len();
    let mut seen = HashSet::new();
    let kept: Vec<Headline> = headlines.into_iter().filter(|h| seen.insert(h.text.clone())).collect();
    let removed = before - kept.len();
    (kept, removed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LabeledExample {
    pub text: String,
    pub label: Label,
    pub year: i32,
}

impl From<&Headline> for LabeledExample {
    fn from(h: &Headline) -> Self {
        LabeledExample { text: h.text.clone(), label: h.source, year: h.year }
    }
}

/// The four source pools a dataset is assembled from.
#[derive(Debug, Clone, Default)]
pub struct DatasetInputs {
    pub defender_real: Vec<Headline>,
    pub defender_generated: Vec<Headline>,
    pub attacker_real: Vec<Headline>,
    pub attacker_generated: Vec<Headline>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildOptions {
    pub seed: u64,
    /// Target generated:real ratio of the defender pool. `None` keeps every example.
    pub balance_ratio: Option<f64>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions { seed: 0, balance_ratio: Some(1.0) }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub real: usize,
    pub generated: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.real + self.generated
    }

    fn bump(&mut self, label: Label) {
        match label {
            Label::Real => self.real += 1,
            Label::Generated => self.generated += 1,
        }
    }

    pub fn of(examples: &[LabeledExample]) -> LabelCounts {
        let mut c = LabelCounts::default();
        for e in examples {
            c.bump(e.label);
        }
        c
    }
}

/// Provenance of a bundle: what was kept, dropped and why.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub counts: BTreeMap<Split, LabelCounts>,
    pub balance_ratio: Option<f64>,
    /// Exact duplicates removed within each source pool.
    pub duplicates_removed: usize,
    /// Generated texts dropped because the identical text also exists as real.
    pub cross_label_removed: usize,
    /// Defender-pool examples dropped by class balancing.
    pub balanced_away: LabelCounts,
    /// Test examples dropped because their text also occurs in train/dev.
    pub test_overlap_removed: usize,
}

/// Disjoint train/dev/test sets. Train and dev come from the defender era, test from the attacker era.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: Vec<LabeledExample>,
    pub dev: Vec<LabeledExample>,
    pub test: Vec<LabeledExample>,
    pub seed: u64,
    pub metadata: BundleMetadata,
}

/// Number of dev examples for a pool of `pool` examples.
pub fn dev_size(pool: usize, dev_fraction: f64) -> usize {
    (pool as f64 * dev_fraction).round() as usize
}

/// Assembles the defender pool (deduplicated, optionally class-balanced, seeded
/// shuffle, 80/20 train/dev) and the attacker test set.
pub fn build_dataset(inputs: DatasetInputs, options: BuildOptions) -> Result<DatasetBundle> {
    if let Some(ratio) = options.balance_ratio {
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(CoreError::Config(format!("balance_ratio must be positive, got {ratio}")));
        }
    }
    let DatasetInputs { defender_real, defender_generated, attacker_real, attacker_generated } = inputs;
    for (name, pool) in [
        ("defender real", &defender_real),
        ("defender generated", &defender_generated),
        ("attacker real", &attacker_real),
        ("attacker generated", &attacker_generated),
    ] {
        if pool.is_empty() {
            return Err(CoreError::EmptyInput(name));
        }
    }
    check_pool(&defender_real, Label::Real, Era::Defender)?;
    check_pool(&defender_generated, Label::Generated, Era::Defender)?;
    check_pool(&attacker_real, Label::Real, Era::Attacker)?;
    check_pool(&attacker_generated, Label::Generated, Era::Attacker)?;

    let mut meta = BundleMetadata { balance_ratio: options.balance_ratio, ..Default::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);

    let (d_real, n1) = dedup_texts(defender_real);
    let (d_gen, n2) = dedup_texts(defender_generated);
    let (a_real, n3) = dedup_texts(attacker_real);
    let (a_gen, n4) = dedup_texts(attacker_generated);
    meta.duplicates_removed = n1 + n2 + n3 + n4;

    let (d_gen, x1) = drop_texts_of(d_gen, &d_real);
    let (a_gen, x2) = drop_texts_of(a_gen, &a_real);
    meta.cross_label_removed = x1 + x2;

    let (d_real, d_gen) = match options.balance_ratio {
        Some(ratio) => {
            let target_gen = (ratio * d_real.len() as f64).round() as usize;
            if d_gen.len() > target_gen {
                meta.balanced_away.generated = d_gen.len() - target_gen;
                let g = subsample(d_gen, target_gen, &mut rng);
                (d_real, g)
            } else {
                let target_real = (d_gen.len() as f64 / ratio).round() as usize;
                if d_real.len() > target_real {
                    meta.balanced_away.real = d_real.len() - target_real;
                    (subsample(d_real, target_real, &mut rng), d_gen)
                } else {
                    (d_real, d_gen)
                }
            }
        }
        None => (d_real, d_gen),
    };

    let mut pool: Vec<LabeledExample> = d_real.iter().chain(d_gen.iter()).map(LabeledExample::from).collect();
    pool.shuffle(&mut rng);
    let n_dev = dev_size(pool.len(), DEFAULT_DEV_FRACTION);
    let dev = pool.split_off(pool.len() - n_dev);
    let train = pool;

    let seen: HashSet<&str> = train.iter().chain(dev.iter()).map(|e| e.text.as_str()).collect();
    let test_all: Vec<LabeledExample> = a_real.iter().chain(a_gen.iter()).map(LabeledExample::from).collect();
    let before = test_all.len();
    let test: Vec<LabeledExample> = test_all.into_iter().filter(|e| !seen.contains(e.text.as_str())).collect();
    meta.test_overlap_removed = before - test.len();

    meta.counts.insert(Split::Train, LabelCounts::of(&train));
    meta.counts.insert(Split::Dev, LabelCounts::of(&dev));
    meta.counts.insert(Split::Test, LabelCounts::of(&test));

    Ok(DatasetBundle { train, dev, test, seed: options.seed, metadata: meta })
}

fn check_pool(pool: &[Headline], source: Label, era: Era) -> Result<()> {
    if let Some(bad) = pool.iter().find(|h| h.source != source || h.era() != Some(era)) {
        return Err(CoreError::InvalidRecord(format!(
            "`{}` ({} {}) does not belong in the {era} {source} pool",
            bad.text, bad.source, bad.year
        )));
    }
    Ok(())
}

fn drop_texts_of(pool: Vec<Headline>, reference: &[Headline]) -> (Vec<Headline>, usize) {
    let texts: HashSet<&str> = reference.iter().map(|h| h.text.as_str()).collect();
    let before = pool.len();
    let kept: Vec<Headline> = pool.into_iter().filter(|h| !texts.contains(h.text.as_str())).collect();
    let removed = before - kept.len();
    (kept, removed)
}

fn subsample(pool: Vec<Headline>, k: usize, rng: &mut ChaCha8Rng) -> Vec<Headline> {
    let mut picked = index::sample(rng, pool.len(), k).into_vec();
    picked.sort_unstable();
    let mut keep = vec![false; pool.len()];
    for i in picked {
        keep[i] = true;
    }
    pool.into_iter().zip(keep).filter_map(|(h, k)| k.then_some(h)).collect()
}

#[derive(Serialize, Deserialize)]
struct JsonlRow<'a> {
    text: std::borrow::Cow<'a, str>,
    label: Label,
    split: Split,
    year: i32,
}

impl DatasetBundle {
    pub fn split(&self, split: Split) -> &[LabeledExample] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    /// One JSON object per line, train then dev then test, LF line endings.
    pub fn write_jsonl<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        for split in Split::ALL {
            for e in self.split(split) {
                let row = JsonlRow { text: e.text.as_str().into(), label: e.label, split, year: e.year };
                serde_json::to_writer(&mut w, &row)?;
                w.write_all(b"\n")?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    /// Hex SHA-256 of the JSONL serialization.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl_bytes()))
    }

    /// Reads a bundle written by [`DatasetBundle::write_jsonl`]. Provenance
    /// counters other than split counts are not stored in the JSONL and come
    /// back zeroed.
    pub fn read_jsonl<R: Read>(reader: R, seed: u64) -> Result<DatasetBundle> {
        let mut bundle = DatasetBundle {
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
            seed,
            metadata: BundleMetadata::default(),
        };
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let row: JsonlRow = serde_json::from_str(&line)
                .map_err(|e| CoreError::InvalidRecord(format!("line {}: {e}", i + 1)))?;
            let example = LabeledExample { text: row.text.into_owned(), label: row.label, year: row.year };
            match row.split {
                Split::Train => bundle.train.push(example),
                Split::Dev => bundle.dev.push(example),
                Split::Test => bundle.test.push(example),
            }
        }
        for split in Split::ALL {
            let counts = LabelCounts::of(bundle.split(split));
            bundle.metadata.counts.insert(split, counts);
        }
        Ok(bundle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    fn real(text: &str, year: i32) -> Headline {
        Headline::real(text, date(year, 3, 7)).unwrap()
    }

    fn generated(text: &str, era: Era) -> Headline {
        Headline::generated(text, era).unwrap()
    }

    fn inputs(n_def: usize, n_att: usize) -> DatasetInputs {
        DatasetInputs {
            defender_real: (0..n_def).map(|i| real(&format!("real defender {i}"), 2015)).collect(),
            defender_generated: (0..n_def).map(|i| generated(&format!("gen defender {i}"), Era::Defender)).collect(),
            attacker_real: (0..n_att).map(|i| real(&format!("real attacker {i}"), 2016 + (i % 2) as i32)).collect(),
            attacker_generated: (0..n_att).map(|i| generated(&format!("gen attacker {i}"), Era::Attacker)).collect(),
        }
    }

    #[test]
    fn row_maps_to_real_headline() {
        let csv = "publish_date,headline_text\n20150307,man arrested over robbery\n";
        let load = read_corpus(csv.as_bytes(), Label::Real).unwrap();
        assert_eq!(load.headlines.len(), 1);
        let h = &load.headlines[0];
        assert_eq!(h.year, 2015);
        assert_eq!(h.source, Label::Real);
        assert_eq!(h.text, "man arrested over robbery");
        assert!(load.rejects.is_empty());
    }

    #[test]
    fn invalid_calendar_date_is_rejected_and_load_continues() {
        let csv = "publish_date,headline_text\n2015-13-99,bad date row\n20151399,also bad\n20160101,good row\n";
        let load = read_corpus(csv.as_bytes(), Label::Real).unwrap();
        assert_eq!(load.headlines.len(), 1);
        assert_eq!(load.rejects.len(), 2);
        assert_eq!(load.rejects[0].line, 2);
        assert!(load.rejects[0].reason.contains("malformed date"));
    }

    #[test]
    fn empty_text_and_wrong_arity_rows_are_rejected() {
        let csv = "publish_date,headline_text\n20150101, -- \n20150102\n20150103,ok\n";
        let load = read_corpus(csv.as_bytes(), Label::Real).unwrap();
        assert_eq!(load.headlines.len(), 1);
        assert_eq!(load.rejects.len(), 2);
    }

    #[test]
    fn empty_file_and_header_only_are_empty_corpus() {
        assert!(matches!(read_corpus("".as_bytes(), Label::Real), Err(CoreError::EmptyCorpus)));
        assert!(matches!(
            read_corpus("publish_date,headline_text\n".as_bytes(), Label::Real),
            Err(CoreError::EmptyCorpus)
        ));
    }

    #[test]
    fn wrong_header_is_reported() {
        let err = read_corpus("date,text\n20150101,x\n".as_bytes(), Label::Real).unwrap_err();
        assert!(matches!(err, CoreError::BadHeader(_)));
    }

    #[test]
    fn missing_file_is_corpus_not_found() {
        let err = load_corpus(Path::new("/definitely/not/here.csv")).unwrap_err();
        assert!(matches!(err, CoreError::CorpusNotFound(_)));
    }

    #[test]
    fn corpus_csv_roundtrips_through_writer() {
        let hs = vec![real("fire crews battle blaze", 2015), generated("council backs plan", Era::Attacker)];
        let mut buf = Vec::new();
        write_corpus(&mut buf, &hs).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("publish_date,headline_text\n20150307,fire crews battle blaze\n"));
        let back = read_corpus(buf.as_slice(), Label::Generated).unwrap();
        assert_eq!(back.headlines[1].publish_date, Era::Attacker.sentinel_date());
    }

    #[test]
    fn temporal_split_routes_by_year() {
        let hs = vec![
            Headline::real("a", date(2015, 3, 7)).unwrap(),
            Headline::real("b", date(2016, 1, 1)).unwrap(),
            Headline::real("c", date(2017, 12, 31)).unwrap(),
            Headline::real("d", date(2014, 12, 31)).unwrap(),
            Headline::real("e", date(2018, 1, 1)).unwrap(),
        ];
        let split = temporal_split(hs);
        assert_eq!(split.defender.iter().map(|h| h.text.as_str()).collect::<Vec<_>>(), ["a"]);
        assert_eq!(split.attacker.iter().map(|h| h.text.as_str()).collect::<Vec<_>>(), ["b", "c"]);
        assert_eq!(split.discarded, 2);
    }

    #[test]
    fn generated_headline_carries_era_year() {
        assert_eq!(generated("x", Era::Defender).year, 2015);
        assert_eq!(generated("x", Era::Attacker).era(), Some(Era::Attacker));
    }

    #[test]
    fn ten_example_pool_gives_dev_two() {
        let bundle = build_dataset(inputs(5, 3), BuildOptions { seed: 7, balance_ratio: Some(1.0) }).unwrap();
        assert_eq!(bundle.dev.len(), 2);
        assert_eq!(bundle.train.len(), 8);
        assert_eq!(bundle.test.len(), 6);
    }

    #[test]
    fn full_scale_pool_sizes() {
        assert_eq!(dev_size(162_012, DEFAULT_DEV_FRACTION), 32_402);
        assert_eq!(162_012 - dev_size(162_012, DEFAULT_DEV_FRACTION), 129_610);
    }

    #[test]
    fn same_seed_is_identical_and_other_seed_differs() {
        let a = build_dataset(inputs(40, 5), BuildOptions { seed: 11, balance_ratio: Some(1.0) }).unwrap();
        let b = build_dataset(inputs(40, 5), BuildOptions { seed: 11, balance_ratio: Some(1.0) }).unwrap();
        let c = build_dataset(inputs(40, 5), BuildOptions { seed: 12, balance_ratio: Some(1.0) }).unwrap();
        assert_eq!(a.to_jsonl_bytes(), b.to_jsonl_bytes());
        assert_ne!(a.train, c.train);
    }

    #[test]
    fn balancing_subsamples_the_majority_class() {
        let mut inp = inputs(10, 2);
        inp.defender_generated = (0..50).map(|i| generated(&format!("many gen {i}"), Era::Defender)).collect();
        let bundle = build_dataset(inp.clone(), BuildOptions { seed: 1, balance_ratio: Some(1.0) }).unwrap();
        let pool = LabelCounts::of(&bundle.train).total() + bundle.dev.len();
        assert_eq!(pool, 20);
        assert_eq!(bundle.metadata.balanced_away.generated, 40);

        let bundle = build_dataset(inp.clone(), BuildOptions { seed: 1, balance_ratio: Some(2.0) }).unwrap();
        let counts = LabelCounts::of(&bundle.train);
        let dev = LabelCounts::of(&bundle.dev);
        assert_eq!(counts.generated + dev.generated, 20);
        assert_eq!(counts.real + dev.real, 10);

        let bundle = build_dataset(inp, BuildOptions { seed: 1, balance_ratio: None }).unwrap();
        assert_eq!(bundle.train.len() + bundle.dev.len(), 60);
    }

    #[test]
    fn balancing_can_subsample_real() {
        let mut inp = inputs(4, 2);
        inp.defender_real = (0..30).map(|i| real(&format!("many real {i}"), 2015)).collect();
        let bundle = build_dataset(inp, BuildOptions { seed: 3, balance_ratio: Some(0.5) }).unwrap();
        assert_eq!(bundle.metadata.balanced_away.real, 22);
        assert_eq!(bundle.train.len() + bundle.dev.len(), 12);
    }

    #[test]
    fn non_positive_ratio_is_config_error() {
        for r in [0.0, -1.0, f64::NAN] {
            let err = build_dataset(inputs(3, 3), BuildOptions { seed: 0, balance_ratio: Some(r) }).unwrap_err();
            assert!(matches!(err, CoreError::Config(_)));
        }
    }

    #[test]
    fn empty_pool_is_rejected() {
        let mut inp = inputs(3, 3);
        inp.attacker_generated.clear();
        assert!(matches!(build_dataset(inp, BuildOptions::default()), Err(CoreError::EmptyInput(_))));
    }

    #[test]
    fn misplaced_era_is_rejected() {
        let mut inp = inputs(3, 3);
        inp.defender_real.push(real("late arrival", 2016));
        assert!(matches!(build_dataset(inp, BuildOptions::default()), Err(CoreError::InvalidRecord(_))));
    }

    #[test]
    fn duplicates_and_leaks_are_removed() {
        let mut inp = inputs(6, 3);
        inp.defender_real.push(real("real defender 0", 2015));
        inp.attacker_real.push(real("real defender 1", 2016));
        inp.defender_generated.push(generated("real defender 2", Era::Defender));
        let bundle = build_dataset(inp, BuildOptions { seed: 5, balance_ratio: None }).unwrap();
        assert_eq!(bundle.metadata.duplicates_removed, 1);
        assert_eq!(bundle.metadata.cross_label_removed, 1);
        assert_eq!(bundle.metadata.test_overlap_removed, 1);
        let train_dev: HashSet<&str> = bundle.train.iter().chain(&bundle.dev).map(|e| e.text.as_str()).collect();
        assert!(bundle.test.iter().all(|e| !train_dev.contains(e.text.as_str())));
    }

    #[test]
    fn jsonl_schema_and_roundtrip() {
        let bundle = build_dataset(inputs(5, 2), BuildOptions { seed: 9, balance_ratio: Some(1.0) }).unwrap();
        let bytes = bundle.to_jsonl_bytes();
        let text = String::from_utf8(bytes.clone()).unwrap();
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        let mut keys: Vec<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["label", "split", "text", "year"]);
        assert!(!text.contains('\r'));
        let back = DatasetBundle::read_jsonl(bytes.as_slice(), 9).unwrap();
        assert_eq!(back.train, bundle.train);
        assert_eq!(back.dev, bundle.dev);
        assert_eq!(back.test, bundle.test);
        assert_eq!(back.metadata.counts, bundle.metadata.counts);
        assert_eq!(back.content_hash(), bundle.content_hash());
    }
}
