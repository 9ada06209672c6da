use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde_json::json;
use tirank::corpus::{generate_synthetic_benchmark, load_cuhk_pedes, Corpus, Dataset, SyntheticBenchConfig};
use tirank::metrics::{evaluate as score, median_top1_similarity, top1_similarity_stats, uniform_edges};
use tirank::oracle::{
    HttpEmbedder, LlmOracle, Oracle, QueryEmbedder, RefinedEmbeddingTable, ScriptedChat, SimulatedOracle,
    SimulatedOracleConfig, TemplateKind, TemplateSet, WireChat, WireConfig, DEFAULT_WORD_CAP,
};
use tirank::rda::{
    build_sft_dataset, export_sft, generate_augmented_corpus, write_augmented_jsonl, AugmentConfig, SftConfig,
    DEFAULT_PER_TEXT_COUNT, DEFAULT_STYLES,
};
use tirank::retrieval::{full_ranking, read_rankings_jsonl, write_rankings_jsonl, RankedList};
use tirank::thi::{run_batch, write_trace_jsonl, ThiConfig};

use crate::config::{parse_kebab, Backend, RunConfig, Threshold, API_KEY_ENV};
use crate::error::CliError;
use crate::{DataArgs, OracleArgs, ThiArgs};

pub const ANNOTATIONS_FILE: &str = "annotations.json";
pub const IMAGES_FILE: &str = "images.icle";
pub const TEXTS_FILE: &str = "texts.icle";

const DEFAULT_ACCURACY: f64 = 1.0;
const DEFAULT_REFINEMENT_STRENGTH: f64 = 0.6;

pub struct Context {
    config: RunConfig,
    seed: Option<u64>,
    out: Option<PathBuf>,
}

#[derive(Clone, Copy)]
enum DataFile {
    Annotations,
    Images,
    Texts,
}

impl Context {
    pub fn new(config: RunConfig, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        let seed = seed.or(config.seed);
        let out = out.or_else(|| config.paths.out.clone());
        Self { config, seed, out }
    }

    fn require_seed(&self, command: &str) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::validation(format!("{command} is randomized and needs --seed or a config seed")))
    }

    /// The output directory, created if missing.
    fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = match &self.out {
            Some(d) => d.clone(),
            None => {
                let stamp = chrono::Utc::now().format("%Y%m%dT%H%M%SZ");
                let seed = self.seed.map_or_else(|| "none".to_string(), |s| s.to_string());
                let parent = self.config.paths.runs.clone().unwrap_or_else(|| PathBuf::from("runs"));
                parent.join(format!("{stamp}-seed{seed}"))
            }
        };
        std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(dir)
    }

    fn data_path(&self, args: &DataArgs, which: DataFile) -> Result<PathBuf, CliError> {
        let paths = &self.config.paths;
        let (flag, cfg, name, what) = match which {
            DataFile::Annotations => (&args.annotations, &paths.annotations, ANNOTATIONS_FILE, "annotations"),
            DataFile::Images => (&args.image_embeddings, &paths.image_embeddings, IMAGES_FILE, "image-embeddings"),
            DataFile::Texts => (&args.text_embeddings, &paths.text_embeddings, TEXTS_FILE, "text-embeddings"),
        };
        flag.clone()
            .or_else(|| args.data.as_ref().map(|d| d.join(name)))
            .or_else(|| cfg.clone())
            .or_else(|| paths.data.as_ref().map(|d| d.join(name)))
            .ok_or_else(|| CliError::validation(format!("no {what} given (use --data or --{what})")))
    }

    fn data_paths(&self, args: &DataArgs) -> Result<(PathBuf, PathBuf, PathBuf), CliError> {
        Ok((
            self.data_path(args, DataFile::Annotations)?,
            self.data_path(args, DataFile::Images)?,
            self.data_path(args, DataFile::Texts)?,
        ))
    }

    fn dataset(&self, args: &DataArgs) -> Result<(Dataset, PathBuf), CliError> {
        let (a, i, t) = self.data_paths(args)?;
        let ds = Dataset::load(&a, i, t)?;
        log::info!("loaded {} images and {} captions", ds.corpus().images().len(), ds.corpus().texts().len());
        Ok((ds, a))
    }

    fn rankings(&self, flag: Option<PathBuf>, ds: &Dataset) -> Result<Vec<RankedList>, CliError> {
        match flag.or_else(|| self.config.paths.rankings.clone()) {
            Some(path) => {
                let file = File::open(&path).map_err(|e| CliError::io(&path, e))?;
                let rankings = read_rankings_jsonl(BufReader::new(file))
                    .map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
                if rankings.len() != ds.corpus().texts().len()
                    || rankings.iter().enumerate().any(|(q, r)| r.query_index != q)
                {
                    return Err(CliError::validation(format!(
                        "{}: expected one ranking per caption in corpus order",
                        path.display()
                    )));
                }
                Ok(rankings)
            }
            None => Ok(full_ranking(ds.queries(), ds.gallery())?),
        }
    }
}

/// Prints to stdout; a closed pipe (`| head`) is not an error.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn pretty(value: &serde_json::Value) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    text
}

/// Shortest decimal form of an `f32`, so 0.8 is written as 0.8.
fn f32_json(x: f32) -> serde_json::Value {
    x.to_string().parse::<f64>().map(serde_json::Value::from).unwrap_or(serde_json::Value::Null)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
    let file = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    write_bytes(path, pretty(value).as_bytes())
}

pub fn simgen(
    ctx: &Context,
    identities: Option<usize>,
    images_per_identity: Option<usize>,
    texts_per_identity: Option<usize>,
    dim: Option<usize>,
    sigma: Option<f64>,
) -> Result<(), CliError> {
    let seed = ctx.require_seed("simgen")?;
    let s = &ctx.config.synthetic;
    let d = SyntheticBenchConfig::default();
    let cfg = SyntheticBenchConfig {
        num_identities: identities.or(s.identities).unwrap_or(d.num_identities),
        images_per_identity: images_per_identity.or(s.images_per_identity).unwrap_or(d.images_per_identity),
        texts_per_identity: texts_per_identity.or(s.texts_per_identity).unwrap_or(d.texts_per_identity),
        dim: dim.or(s.dim).unwrap_or(d.dim),
        noise_sigma: sigma.or(s.sigma).unwrap_or(d.noise_sigma),
        seed,
    };
    let ds = generate_synthetic_benchmark(&cfg)?;
    let out = ctx.out_dir()?;
    ds.save(out.join(ANNOTATIONS_FILE), out.join(IMAGES_FILE), out.join(TEXTS_FILE))?;
    emit(&format!("{}\n", out.display()));
    Ok(())
}

pub fn ingest(ctx: &Context, args: &DataArgs, from_cuhk: Option<PathBuf>, split: Option<String>) -> Result<(), CliError> {
    let ds = match from_cuhk {
        Some(path) => {
            let i = ctx.data_path(args, DataFile::Images)?;
            let t = ctx.data_path(args, DataFile::Texts)?;
            let corpus = Corpus::from_entries(load_cuhk_pedes(&path, split.as_deref())?)?;
            Dataset::new(corpus, tirank::corpus::load_embeddings(i)?, tirank::corpus::load_embeddings(t)?)?
        }
        None => ctx.dataset(args)?.0,
    };
    let out = ctx.out_dir()?;
    ds.save(out.join(ANNOTATIONS_FILE), out.join(IMAGES_FILE), out.join(TEXTS_FILE))?;
    let c = ds.corpus();
    let persons: std::collections::HashSet<_> = c.images().iter().map(|i| i.person_id).collect();
    emit(&pretty(&json!({
        "images": c.images().len(),
        "texts": c.texts().len(),
        "identities": persons.len(),
        "dim": ds.gallery().dim(),
        "store": out,
    })));
    Ok(())
}

pub fn retrieve(ctx: &Context, args: &DataArgs, top: Option<usize>) -> Result<(), CliError> {
    let (ds, _) = ctx.dataset(args)?;
    let rankings = full_ranking(ds.queries(), ds.gallery())?;
    let out = ctx.out_dir()?;
    let path = out.join("rankings.jsonl");
    write_with(&path, |w| write_rankings_jsonl(w, &rankings, top))?;
    emit(&format!("{}\n", path.display()));
    Ok(())
}

pub fn evaluate(ctx: &Context, args: &DataArgs, rankings: Option<PathBuf>) -> Result<(), CliError> {
    let (ds, _) = ctx.dataset(args)?;
    let rankings = ctx.rankings(rankings, &ds)?;
    let report = score(&rankings, &ds.judgments())?;
    let out = ctx.out_dir()?;
    write_bytes(&out.join("report.json"), report.to_json().as_bytes())?;
    emit(&report.to_json());
    Ok(())
}

fn thi_config(ctx: &Context, args: &ThiArgs, ds: &Dataset) -> Result<ThiConfig, CliError> {
    let c = &ctx.config.thi;
    let d = ThiConfig::default();
    let threshold = match args.xi.or(c.xi) {
        None => d.similarity_threshold,
        Some(Threshold::Fixed(v)) => v,
        Some(Threshold::Median) => {
            let baseline = full_ranking(ds.queries(), ds.gallery())?;
            median_top1_similarity(&baseline).ok_or_else(|| CliError::validation("corpus has no queries"))?
        }
    };
    let anchor_pin = match &args.anchor_pin {
        Some(s) => parse_kebab(s).map_err(|e| CliError::validation(format!("--anchor-pin: {e}")))?,
        None => c.anchor_pin.unwrap_or(d.anchor_pin),
    };
    let localization = match &args.localization {
        Some(s) => parse_kebab(s).map_err(|e| CliError::validation(format!("--localization: {e}")))?,
        None => c.localization.unwrap_or(d.localization),
    };
    let cfg = ThiConfig {
        rounds: args.rounds.or(c.rounds).unwrap_or(d.rounds),
        similarity_threshold: threshold,
        fusion_weight: args.lambda.or(c.lambda).unwrap_or(d.fusion_weight),
        candidate_size: args.candidate_size.or(c.candidate_size),
        max_inflight: args.max_inflight.or(c.max_inflight).unwrap_or(d.max_inflight),
        anchor_pin,
        localization,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn templates(dir: Option<&PathBuf>) -> Result<TemplateSet, CliError> {
    Ok(match dir {
        Some(d) => TemplateSet::from_dir(d)?,
        None => TemplateSet::default(),
    })
}

/// The oracle the flags and config select. `image_root` defaults to the
/// annotation file's directory.
fn build_oracle(ctx: &Context, args: &OracleArgs, ds: &Dataset, annotations: &Path) -> Result<Box<dyn Oracle>, CliError> {
    let c = &ctx.config.oracle;
    let backend = args.backend.or(c.backend).ok_or_else(|| CliError::validation("no --backend given"))?;
    let tpl = templates(args.template_dir.as_ref().or(c.template_dir.as_ref()))?;
    let image_root = args
        .image_root
        .clone()
        .or_else(|| c.image_root.clone())
        .unwrap_or_else(|| annotations.parent().map(Path::to_path_buf).unwrap_or_default());
    let word_cap = c.word_cap.unwrap_or(DEFAULT_WORD_CAP);
    Ok(match backend {
        Backend::Simulated => {
            let cfg = SimulatedOracleConfig {
                localization_accuracy: args.accuracy.or(c.accuracy).unwrap_or(DEFAULT_ACCURACY),
                refinement_strength: args
                    .refinement_strength
                    .or(c.refinement_strength)
                    .unwrap_or(DEFAULT_REFINEMENT_STRENGTH),
                seed: ctx.require_seed("the simulated backend")?,
            };
            Box::new(SimulatedOracle::new(
                cfg,
                Arc::new(ds.text_embeddings().clone()),
                Arc::new(ds.image_embeddings().clone()),
            )?)
        }
        Backend::Scripted => {
            let script = args
                .script
                .as_ref()
                .or(c.script.as_ref())
                .ok_or_else(|| CliError::validation("the scripted backend needs --script"))?;
            let chat = ScriptedChat::from_file(script).map_err(|e| CliError::validation(format!("{}: {e}", script.display())))?;
            Box::new(LlmOracle::new(chat).with_templates(tpl).with_word_cap(word_cap).with_image_root(image_root))
        }
        Backend::Wire => {
            let endpoint = args
                .oracle_endpoint
                .clone()
                .or_else(|| c.endpoint.clone())
                .ok_or_else(|| CliError::validation("the wire backend needs --oracle-endpoint"))?;
            let model = args
                .model
                .clone()
                .or_else(|| c.model.clone())
                .ok_or_else(|| CliError::validation("the wire backend needs --model"))?;
            let mut cfg = WireConfig::new(endpoint, model);
            cfg.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
            if let Some(r) = args.max_retries.or(c.max_retries) {
                cfg.max_retries = r;
            }
            if let Some(t) = args.timeout_secs.or(c.timeout_secs) {
                cfg.timeout = Duration::from_secs(t);
            }
            Box::new(LlmOracle::new(WireChat::new(cfg)).with_templates(tpl).with_word_cap(word_cap).with_image_root(image_root))
        }
    })
}

fn build_embedder(ctx: &Context, args: &OracleArgs) -> Result<Option<Box<dyn QueryEmbedder>>, CliError> {
    let c = &ctx.config.oracle;
    if let Some(path) = args.refined_embeddings.as_ref().or(c.refined_embeddings.as_ref()) {
        let table = RefinedEmbeddingTable::load(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        return Ok(Some(Box::new(table)));
    }
    if let Some(endpoint) = args.embedder_endpoint.clone().or_else(|| c.embedder_endpoint.clone()) {
        let model = args.embedder_model.clone().or_else(|| c.embedder_model.clone());
        let timeout = Duration::from_secs(args.timeout_secs.or(c.timeout_secs).unwrap_or(120));
        return Ok(Some(Box::new(HttpEmbedder::new(endpoint, model, timeout))));
    }
    Ok(None)
}

pub fn interact(ctx: &Context, data: &DataArgs, thi: &ThiArgs, oracle: &OracleArgs, top: Option<usize>) -> Result<(), CliError> {
    let (ds, annotations) = ctx.dataset(data)?;
    let config = thi_config(ctx, thi, &ds)?;
    let backend = build_oracle(ctx, oracle, &ds, &annotations)?;
    let embedder = build_embedder(ctx, oracle)?;
    let output = run_batch(&ds, backend.as_ref(), embedder.as_deref(), &config)?;

    let out = ctx.out_dir()?;
    write_with(&out.join("baseline.jsonl"), |w| write_rankings_jsonl(w, &output.baseline, top))?;
    write_with(&out.join("reranked.jsonl"), |w| write_rankings_jsonl(w, &output.fused_rankings(), top))?;
    write_with(&out.join("trace.jsonl"), |w| write_trace_jsonl(w, &output.trace))?;
    write_bytes(&out.join("report_before.json"), output.before.to_json().as_bytes())?;
    write_bytes(&out.join("report_after.json"), output.after.to_json().as_bytes())?;

    let mut statuses = BTreeMap::new();
    for t in &output.trace {
        let key = serde_json::to_value(t.status).expect("status serializes");
        *statuses.entry(key.as_str().unwrap_or_default().to_string()).or_insert(0usize) += 1;
    }
    let summary = json!({
        "backend": backend.kind(),
        "rounds": config.rounds,
        "similarity_threshold": f32_json(config.similarity_threshold),
        "fusion_weight": f32_json(config.fusion_weight),
        "candidate_size": config.candidate_size(),
        "anchor_pin": config.anchor_pin,
        "localization": config.localization,
        "total_oracle_calls": output.total_oracle_calls,
        "refined_queries": output.refined_queries,
        "failed_queries": output.failed_queries,
        "statuses": statuses,
        "before": output.before,
        "after": output.after,
    });
    write_json(&out.join("summary.json"), &summary)?;
    emit(&pretty(&summary));
    if output.failed_queries > 0 {
        log::warn!("{} queries fell back to their baseline ranking; see trace.jsonl", output.failed_queries);
        if output.failed_queries == output.trace.len() {
            let first = output.trace.iter().find_map(|t| t.error.clone()).unwrap_or_default();
            return Err(CliError::runtime(format!("every oracle session failed; first error: {first}")));
        }
    }
    Ok(())
}

pub fn stats(ctx: &Context, args: &DataArgs, rankings: Option<PathBuf>, bins: usize, lo: f64, hi: f64) -> Result<(), CliError> {
    if bins == 0 || lo.partial_cmp(&hi) != Some(std::cmp::Ordering::Less) {
        return Err(CliError::validation("need --bins >= 1 and --lo < --hi"));
    }
    let (ds, _) = ctx.dataset(args)?;
    let rankings = ctx.rankings(rankings, &ds)?;
    let hist = top1_similarity_stats(&rankings, &ds.judgments(), &uniform_edges(lo, hi, bins))?;
    let out = ctx.out_dir()?;
    let path = out.join("top1_histogram.csv");
    write_with(&path, |w| hist.write_csv(w))?;
    emit(&pretty(&json!({
        "correct": hist.correct_counts.iter().sum::<usize>(),
        "incorrect": hist.incorrect_counts.iter().sum::<usize>(),
        "mean_top1_correct": hist.mean_correct,
        "mean_top1_incorrect": hist.mean_incorrect,
        "histogram": path,
    })));
    Ok(())
}

pub fn augment(
    ctx: &Context,
    data: &DataArgs,
    oracle: &OracleArgs,
    m: Option<usize>,
    per_text_count: Option<usize>,
    max_inflight: Option<usize>,
) -> Result<(), CliError> {
    let seed = ctx.require_seed("augment")?;
    let (ds, annotations) = ctx.dataset(data)?;
    if oracle.backend.or(ctx.config.oracle.backend) == Some(Backend::Simulated) {
        return Err(CliError::validation("augmentation needs a text-producing backend (scripted or wire)"));
    }
    let backend = build_oracle(ctx, oracle, &ds, &annotations)?;
    let r = &ctx.config.rda;
    let cfg = AugmentConfig {
        m: m.or(r.m).unwrap_or(DEFAULT_STYLES),
        per_text_count: per_text_count.or(r.per_text_count).unwrap_or(DEFAULT_PER_TEXT_COUNT),
        seed,
        max_inflight: max_inflight.or(ctx.config.thi.max_inflight).unwrap_or(4),
    };
    let result = generate_augmented_corpus(ds.corpus(), backend.as_ref(), &cfg)?;
    let out = ctx.out_dir()?;
    write_with(&out.join("augmented.jsonl"), |w| write_augmented_jsonl(w, &result.records))?;
    let stats = json!({
        "m": cfg.m,
        "per_text_count": cfg.per_text_count,
        "stats": result.stats,
        "skipped": result.skipped.iter().map(|(id, why)| json!({"text_id": id, "reason": why})).collect::<Vec<_>>(),
    });
    write_json(&out.join("augment_stats.json"), &stats)?;
    emit(&pretty(&stats));
    if result.stats.texts > 0 && result.stats.skipped_texts == result.stats.texts {
        return Err(CliError::runtime(format!("every caption was skipped; first error: {}", result.skipped[0].1)));
    }
    Ok(())
}

pub fn sft_export(
    ctx: &Context,
    data: &DataArgs,
    rankings: Option<PathBuf>,
    n_l: Option<usize>,
    negative_rule: Option<String>,
    template_dir: Option<PathBuf>,
) -> Result<(), CliError> {
    let seed = ctx.require_seed("sft-export")?;
    let (ds, _) = ctx.dataset(data)?;
    let rankings = ctx.rankings(rankings, &ds)?;
    let r = &ctx.config.rda;
    let negative_rule = match negative_rule {
        Some(s) => parse_kebab(&s).map_err(|e| CliError::validation(format!("--negative-rule: {e}")))?,
        None => r.negative_rule.unwrap_or_default(),
    };
    let tpl = templates(template_dir.as_ref().or(ctx.config.oracle.template_dir.as_ref()))?;
    let cfg = SftConfig { sampled_texts: n_l.or(r.n_l), seed, negative_rule };
    let dataset = build_sft_dataset(ds.corpus(), &rankings, tpl.get(TemplateKind::Loc), &cfg)?;
    let out = ctx.out_dir()?;
    let path = out.join("sft.json");
    export_sft(&dataset, &path).map_err(|e| CliError::io(&path, e))?;
    let stats = json!({"negative_rule": negative_rule, "stats": dataset.stats});
    write_json(&out.join("sft_stats.json"), &stats)?;
    emit(&pretty(&stats));
    Ok(())
}
