//! The pipeline commands. Each one reads the resolved config, writes its
//! outputs under `<out>/<command>/` together with a `resolved_config.toml`
//! snapshot and a `manifest.json`.

use std::collections::{BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs::{self, File};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{SecondsFormat, Utc};
use headcheck_core::analysis::{compare_profiles, corpus_stats, ComparisonReport};
use headcheck_core::corpus::{
    build_dataset, load_corpus, load_corpus_as, temporal_split, write_corpus, BuildOptions, DatasetInputs,
};
use headcheck_core::evaluation::{render_results_table, run_experiment, EvalReport, TableRow};
use headcheck_core::tagger::RuleTagger;
use headcheck_core::{DatasetBundle, Era, Headline, Label};
use headcheck_models::classifiers::spec::{ENCODER_BASE, ENCODER_DISTILLED, LSTM_LM};
use headcheck_models::classifiers::{
    distill_encoder, pretrain_encoder, pretrain_lstm_lm, train, Backbones, TrainingManifest,
};
use headcheck_models::generator::{finetune_lm, generate_batch, GenerationConfig, GeneratorManifest};
use headcheck_survey::server::{router, AppState};
use headcheck_survey::{create_survey, SurveyAggregate, SurveyStore};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{PretrainSection, RunConfig};
use crate::UserError;

pub const CONFIG_SNAPSHOT: &str = "resolved_config.toml";
pub const MANIFEST: &str = "manifest.json";
pub const DATASET_FILE: &str = "dataset.jsonl";

/// A command's manifest. `content` is a pure function of config and inputs;
/// wall-clock times live only in `recorded`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest<T> {
    pub command: String,
    pub content: T,
    pub recorded: Recorded,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Recorded {
    pub started_at: String,
    pub finished_at: String,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

pub fn command_dir(cfg: &RunConfig, command: &str) -> PathBuf {
    cfg.paths.out.join(command)
}

fn start(cfg: &RunConfig, command: &str) -> Result<(PathBuf, String)> {
    let dir = command_dir(cfg, command);
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join(CONFIG_SNAPSHOT), cfg.to_toml())?;
    Ok((dir, now()))
}

fn finish<T: Serialize>(dir: &Path, command: &str, started_at: String, content: T) -> Result<()> {
    let m = Manifest { command: command.into(), content, recorded: Recorded { started_at, finished_at: now() } };
    fs::write(dir.join(MANIFEST), serde_json::to_vec_pretty(&m)?)?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

/// Real headlines of both eras, each optionally capped by a seeded draw that
/// keeps corpus order. The uncapped text sets are returned for exclusion.
struct RealPools {
    defender: Vec<Headline>,
    attacker: Vec<Headline>,
    all_defender: HashSet<String>,
    all_attacker: HashSet<String>,
    loaded: usize,
    rejected: usize,
    other_years: usize,
}

fn cap(pool: Vec<Headline>, limit: Option<usize>, rng: &mut ChaCha8Rng) -> Vec<Headline> {
    match limit {
        Some(k) if k < pool.len() => {
            let mut keep = index::sample(rng, pool.len(), k).into_vec();
            keep.sort_unstable();
            let keep: HashSet<usize> = keep.into_iter().collect();
            pool.into_iter().enumerate().filter(|(i, _)| keep.contains(i)).map(|(_, h)| h).collect()
        }
        _ => pool,
    }
}

fn real_pools(cfg: &RunConfig) -> Result<RealPools> {
    let load = load_corpus(&cfg.paths.corpus)?;
    let loaded = load.headlines.len();
    let rejected = load.rejects.len();
    if rejected > 0 {
        tracing::warn!(rejected, "corpus rows rejected");
    }
    let split = temporal_split(load.headlines);
    let all_defender = split.defender.iter().map(|h| h.text.clone()).collect();
    let all_attacker = split.attacker.iter().map(|h| h.text.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.dataset.seed);
    let defender = cap(split.defender, cfg.dataset.real_limit_per_era, &mut rng);
    let attacker = cap(split.attacker, cfg.dataset.real_limit_per_era, &mut rng);
    Ok(RealPools { defender, attacker, all_defender, all_attacker, loaded, rejected, other_years: split.discarded })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub era: Era,
    pub file: String,
    pub sha256: String,
    pub requested: usize,
    pub produced: usize,
    pub discarded: usize,
    pub truncated: usize,
    pub shortfall: usize,
    pub generator: GeneratorManifest,
}

pub fn generated_path(cfg: &RunConfig, era: Era) -> PathBuf {
    command_dir(cfg, "generate").join(format!("generated_{}.csv", era.as_str()))
}

/// Trains one generator per era on that era's real headlines and samples
/// headlines that avoid every real text of the era.
pub fn cmd_generate(cfg: &RunConfig) -> Result<Vec<GenerateSummary>> {
    let pools = real_pools(cfg)?;
    let (dir, started) = start(cfg, "generate")?;
    let mut summaries = Vec::new();
    for (i, (era, real, exclusion, count)) in [
        (Era::Defender, &pools.defender, &pools.all_defender, cfg.generation.defender_count),
        (Era::Attacker, &pools.attacker, &pools.all_attacker, cfg.generation.attacker_count),
    ]
    .into_iter()
    .enumerate()
    {
        if real.is_empty() {
            return Err(UserError(format!("corpus has no {era}-era headlines")).into());
        }
        let seed = cfg.generation.seed.wrapping_add(i as u64);
        tracing::info!(%era, headlines = real.len(), "training generator");
        let lm = finetune_lm(real, &cfg.generation.finetune_options(seed))?;
        lm.save(&dir.join(era.as_str()))?;
        let gen_cfg = GenerationConfig {
            temperature: cfg.generation.temperature,
            max_tokens: cfg.generation.max_tokens,
            seed,
            count: count.unwrap_or(real.len()),
        };
        let batch = generate_batch(&lm, &gen_cfg, exclusion)?;
        let path = generated_path(cfg, era);
        write_corpus(File::create(&path)?, &batch.headlines)?;
        summaries.push(GenerateSummary {
            era,
            file: path.file_name().unwrap().to_string_lossy().into_owned(),
            sha256: sha256_file(&path)?,
            requested: gen_cfg.count,
            produced: batch.headlines.len(),
            discarded: batch.discarded,
            truncated: batch.truncated,
            shortfall: batch.shortfall,
            generator: lm.manifest.clone(),
        });
    }
    finish(&dir, "generate", started, &summaries)?;
    Ok(summaries)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct BuildSummary {
    pub corpus_rows_loaded: usize,
    pub corpus_rows_rejected: usize,
    pub out_of_era: usize,
    pub generated_sha256: Vec<(Era, String)>,
    pub dataset_file: String,
    pub dataset_sha256: String,
    pub seed: u64,
    pub metadata: headcheck_core::corpus::BundleMetadata,
}

/// Assembles train/dev (defender era) and test (attacker era). Runs
/// `generate` first when its outputs are missing.
pub fn cmd_build(cfg: &RunConfig) -> Result<DatasetBundle> {
    let pools = real_pools(cfg)?;
    if Era::ALL.iter().any(|e| !generated_path(cfg, *e).exists()) {
        tracing::info!("generated headlines missing, running generate");
        cmd_generate(cfg)?;
    }
    let load_generated = |era| -> Result<Vec<Headline>> {
        let load = load_corpus_as(&generated_path(cfg, era), Label::Generated)?;
        Ok(load.headlines)
    };
    let inputs = DatasetInputs {
        defender_real: pools.defender,
        defender_generated: load_generated(Era::Defender)?,
        attacker_real: pools.attacker,
        attacker_generated: load_generated(Era::Attacker)?,
    };
    let bundle = build_dataset(inputs, BuildOptions { seed: cfg.dataset.seed, balance_ratio: cfg.dataset.balance_ratio })?;
    let (dir, started) = start(cfg, "build")?;
    let path = dir.join(DATASET_FILE);
    bundle.write_jsonl(File::create(&path)?)?;
    let summary = BuildSummary {
        corpus_rows_loaded: pools.loaded,
        corpus_rows_rejected: pools.rejected,
        out_of_era: pools.other_years,
        generated_sha256: Era::ALL.iter().map(|e| Ok((*e, sha256_file(&generated_path(cfg, *e))?))).collect::<Result<_>>()?,
        dataset_file: DATASET_FILE.into(),
        dataset_sha256: bundle.content_hash(),
        seed: bundle.seed,
        metadata: bundle.metadata.clone(),
    };
    finish(&dir, "build", started, &summary)?;
    Ok(bundle)
}

pub fn load_dataset(cfg: &RunConfig) -> Result<DatasetBundle> {
    let path = command_dir(cfg, "build").join(DATASET_FILE);
    let file = File::open(&path).map_err(|_| UserError(format!("dataset not built: {} is missing", path.display())))?;
    Ok(DatasetBundle::read_jsonl(file, cfg.dataset.seed)?)
}

fn tagger(cfg: &RunConfig) -> Result<RuleTagger> {
    let mut t = RuleTagger::default();
    if let Some(path) = &cfg.paths.tagger_lexicon {
        let added = t.extend_lexicon(std::io::BufReader::new(File::open(path)?))?;
        tracing::info!(added, "tagger lexicon extended");
    }
    Ok(t)
}

/// Word and part-of-speech profiles of the real versus generated headlines
/// in the built dataset, both eras together.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<ComparisonReport> {
    let bundle = load_dataset(cfg)?;
    let texts = |label| -> Vec<&str> {
        [&bundle.train, &bundle.dev, &bundle.test]
            .into_iter()
            .flatten()
            .filter(|e| e.label == label)
            .map(|e| e.text.as_str())
            .collect()
    };
    let tagger = tagger(cfg)?;
    let real = corpus_stats("real", &texts(Label::Real), &tagger, cfg.analysis.top_words)?;
    let generated = corpus_stats("generated", &texts(Label::Generated), &tagger, cfg.analysis.top_words)?;
    let report = compare_profiles(&real, &generated);

    let (dir, started) = start(cfg, "analyze")?;
    fs::write(dir.join("comparison.json"), serde_json::to_vec_pretty(&report)?)?;
    fs::write(dir.join("pos_table.txt"), report.render_table())?;
    fs::write(dir.join("top_words_real.csv"), report.real_top_words.to_csv())?;
    fs::write(dir.join("top_words_generated.csv"), report.generated_top_words.to_csv())?;
    let mut csv = String::from("tag,real,generated,delta\n");
    for d in &report.tag_deltas {
        let _ = writeln!(csv, "{},{},{},{}", d.tag, d.real, d.generated, d.delta);
    }
    fs::write(dir.join("pos_frequencies.csv"), csv)?;
    finish(&dir, "analyze", started, &report)?;
    Ok(report)
}

/// Pretrains the named backbones on the given unlabeled texts.
pub fn pretrain_backbones(names: &BTreeSet<&str>, texts: &[String], section: &PretrainSection) -> Result<Backbones> {
    let mut reg = Backbones::new();
    if names.contains(LSTM_LM) {
        tracing::info!("pretraining {LSTM_LM}");
        reg.insert(pretrain_lstm_lm(LSTM_LM, texts, &section.lstm, &section.options(section.epochs))?);
    }
    if names.contains(ENCODER_BASE) || names.contains(ENCODER_DISTILLED) {
        tracing::info!("pretraining {ENCODER_BASE}");
        let base = pretrain_encoder(ENCODER_BASE, texts, &section.encoder, &section.options(section.epochs))?;
        if names.contains(ENCODER_DISTILLED) {
            tracing::info!("distilling {ENCODER_DISTILLED}");
            reg.insert(distill_encoder(ENCODER_DISTILLED, &base, texts, &section.options(section.distill_epochs))?);
        }
        reg.insert(base);
    }
    Ok(reg)
}

#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct BackboneKey {
    dataset_sha256: String,
    pretrain: PretrainSection,
}

/// Reuses `<dir>/backbones` when it was pretrained on the same dataset with
/// the same settings, otherwise pretrains and caches.
fn backbones_for(cfg: &RunConfig, dir: &Path, bundle: &DatasetBundle, hash: &str) -> Result<Backbones> {
    let specs = cfg.selected_specs();
    let names: BTreeSet<&str> = specs.iter().filter_map(|(_, s)| s.backbone()).collect();
    if names.is_empty() {
        return Ok(Backbones::new());
    }
    let root = dir.join("backbones");
    let key = BackboneKey { dataset_sha256: hash.to_string(), pretrain: cfg.pretrain.clone() };
    let key_path = root.join("key.json");
    if let Ok(bytes) = fs::read(&key_path) {
        if serde_json::from_slice::<BackboneKey>(&bytes).ok().as_ref() == Some(&key) {
            let reg = Backbones::load(&root)?;
            if names.iter().all(|n| reg.get(n).is_some()) {
                tracing::info!("reusing cached backbones");
                return Ok(reg);
            }
        }
    }
    let texts: Vec<String> = bundle.train.iter().map(|e| e.text.clone()).collect();
    let reg = pretrain_backbones(&names, &texts, &cfg.pretrain)?;
    if root.exists() {
        fs::remove_dir_all(&root)?;
    }
    reg.save(&root)?;
    fs::write(key_path, serde_json::to_vec_pretty(&key)?)?;
    Ok(reg)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrainEvalSummary {
    pub dataset_sha256: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<TableRow>,
}

/// Trains every selected spec once per evaluation seed and scores it on the
/// test split. A failing spec is reported in its row and does not stop the others.
pub fn cmd_train_eval(cfg: &RunConfig) -> Result<TrainEvalSummary> {
    let bundle = load_dataset(cfg)?;
    let hash = bundle.content_hash();
    let (dir, started) = start(cfg, "train-eval")?;
    let reports = dir.join("reports");
    fs::create_dir_all(&reports)?;
    let reg = backbones_for(cfg, &dir, &bundle, &hash)?;
    let mut rows = Vec::new();
    for (row, spec) in cfg.selected_specs() {
        tracing::info!(spec = %row, "training");
        let mut manifests: Vec<TrainingManifest> = Vec::new();
        let outcome = run_experiment(&row, &bundle, &cfg.classifiers.seeds, |seed| {
            let model = train(&spec, &bundle.train, &bundle.dev, seed, &reg)?;
            let mut m = model.manifest.clone();
            m.dataset_hash = Some(hash.clone());
            manifests.push(m);
            Ok::<_, headcheck_models::ModelError>(model)
        });
        fs::write(reports.join(format!("{row}.training.json")), serde_json::to_vec_pretty(&manifests)?)?;
        match outcome {
            Ok(report) => {
                fs::write(reports.join(format!("{row}.json")), serde_json::to_vec_pretty(&report)?)?;
                rows.push(TableRow::from_report(&row, &report));
            }
            Err(e) => {
                tracing::error!(spec = %row, "{e}");
                fs::write(reports.join(format!("{row}.error.txt")), format!("{e}\n"))?;
                rows.push(TableRow::Failed { method: row.clone(), reason: e.to_string() });
            }
        }
    }
    fs::write(dir.join("table.txt"), render_results_table(&rows))?;
    fs::write(dir.join("table.json"), serde_json::to_vec_pretty(&rows)?)?;
    let summary = TrainEvalSummary { dataset_sha256: hash, seeds: cfg.classifiers.seeds.clone(), rows };
    finish(&dir, "train-eval", started, &summary)?;
    let failed: Vec<&str> = summary
        .rows
        .iter()
        .filter_map(|r| match r {
            TableRow::Failed { method, .. } => Some(method.as_str()),
            TableRow::Scored { .. } => None,
        })
        .collect();
    if !failed.is_empty() {
        bail!("{} spec(s) failed: {}", failed.len(), failed.join(", "));
    }
    Ok(summary)
}

pub fn read_report(cfg: &RunConfig, row: &str) -> Result<EvalReport> {
    let path = command_dir(cfg, "train-eval").join("reports").join(format!("{row}.json"));
    Ok(serde_json::from_slice(&fs::read(&path).with_context(|| format!("reading {}", path.display()))?)?)
}

pub fn survey_dir(cfg: &RunConfig) -> PathBuf {
    command_dir(cfg, "survey").join(&cfg.survey.survey.id)
}

/// Draws the survey from the test split, which no detector has seen.
pub fn cmd_survey_create(cfg: &RunConfig) -> Result<PathBuf> {
    let bundle = load_dataset(cfg)?;
    let survey = create_survey(&bundle.test, &cfg.survey.survey)?;
    let (dir, started) = start(cfg, "survey")?;
    let store_dir = survey_dir(cfg);
    let store = SurveyStore::create(&store_dir, survey)?;
    finish(&dir, "survey", started, serde_json::json!({ "created": store.survey().id, "items": store.survey().len(), "composition": store.survey().composition }))?;
    Ok(store_dir)
}

pub fn cmd_survey_aggregate(cfg: &RunConfig) -> Result<SurveyAggregate> {
    let store_dir = survey_dir(cfg);
    if !store_dir.join(headcheck_survey::store::SURVEY_FILE).exists() {
        return Err(UserError(format!("no survey at {}; run `survey create` first", store_dir.display())).into());
    }
    let store = SurveyStore::open(&store_dir)?;
    let agg = store.aggregate(cfg.survey.threshold);
    fs::write(store_dir.join("aggregate.json"), serde_json::to_vec_pretty(&agg)?)?;
    fs::write(store_dir.join("per_headline.csv"), agg.per_headline_csv())?;
    Ok(agg)
}

pub fn cmd_survey_serve(cfg: &RunConfig) -> Result<()> {
    let store_dir = survey_dir(cfg);
    let store = SurveyStore::open(&store_dir).with_context(|| format!("opening survey at {}", store_dir.display()))?;
    let mut state = AppState::new(store, cfg.survey.operator_token.clone());
    state.threshold = cfg.survey.threshold;
    let bind = cfg.survey.bind.clone();
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&bind).await.map_err(|e| UserError(format!("cannot bind {bind}: {e}")))?;
        tracing::info!(addr = %bind, "survey service listening");
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}

/// Collects whatever the other commands produced into one markdown file.
pub fn cmd_report(cfg: &RunConfig) -> Result<PathBuf> {
    let (dir, started) = start(cfg, "report")?;
    let section = |path: PathBuf| fs::read_to_string(path).ok();
    let mut md = String::from("# Run report\n\n");
    let mut parts = Vec::new();
    let mut push = |title: &str, body: Option<String>, part: &str| {
        let _ = writeln!(md, "## {title}\n");
        match body {
            Some(b) => {
                let _ = writeln!(md, "```\n{}```\n", b);
                parts.push(part.to_string());
            }
            None => {
                let _ = writeln!(md, "_not run_\n");
            }
        }
    };
    push("Detectors (test split, mean of runs)", section(command_dir(cfg, "train-eval").join("table.txt")), "train-eval");
    push("Part-of-speech profile", section(command_dir(cfg, "analyze").join("pos_table.txt")), "analyze");
    let survey = fs::read(survey_dir(cfg).join("aggregate.json"))
        .ok()
        .and_then(|b| serde_json::from_slice::<SurveyAggregate>(&b).ok())
        .map(|a| {
            format!(
                "participants {}\nanswers {}\noverall {:.1}%\non generated {:.1}%\non real {:.1}%\n",
                a.participants,
                a.total_answers,
                a.overall.fraction * 100.0,
                a.on_generated.fraction * 100.0,
                a.on_real.fraction * 100.0
            )
        });
    push("Human judgments", survey, "survey");
    let path = dir.join("report.md");
    fs::write(&path, md)?;
    finish(&dir, "report", started, &parts)?;
    Ok(path)
}
