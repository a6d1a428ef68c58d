//! Argument definitions and the five commands.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;
use snowball_core::eval::baselines::classifier_predictions;
use snowball_core::eval::benchmark::{build_world, pretrain_metric, pretrain_pipeline, run_benchmark, BenchmarkConfig, BenchmarkReport};
use snowball_core::eval::{score_binary, Metrics};
use snowball_core::rng::derive_seed;
use snowball_core::snowball::Snowball;
use snowball_core::{ClassifierHead, InstanceEncoder, SnowballState};

use crate::checkpoint::ModelFile;
use crate::config::{resolve, snapshot, EngineConfig};
use crate::embstore::{load_embedding_store, read_word_vectors, write_word_vectors};
use crate::error::{Error, Result};
use crate::jsonl::{parse_instances, read_instances, read_labeled, read_seeds, read_unlabeled, write_instances};
use crate::manifest::{sidecar, RunManifest};
use crate::parallel::{default_workers, Pool};
use crate::report::{render_benchmark, render_metrics};

#[derive(Debug, Parser)]
#[command(name = "snowball", version, about = "Bootstrap a new relation from a few seed sentences")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed; every random stream of the command derives from it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Threads in the scoring pool [default: available cores].
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Print results as JSON; errors go to stderr as JSON too.
    #[arg(long, global = true)]
    pub json: bool,
    /// Output file or directory (see each command).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set snowball.k1=10`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the sentence encoder and the siamese relation metric; `--out`
    /// is a directory receiving encoder.bin and rsn.bin.
    Pretrain(PretrainArgs),
    /// Grow a seed set from an unlabeled corpus; `--out` receives the state.
    Run(RunArgs),
    /// Score probability predictions against gold labels.
    Eval(EvalArgs),
    /// Write a synthetic world (corpora and word vectors) to the `--out`
    /// directory.
    Generate(GenerateArgs),
    /// Run the synthetic benchmark, or render a saved report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct PretrainArgs {
    /// Labeled corpus of the existing relations (JSONL).
    #[arg(long)]
    pub labeled: PathBuf,
    /// Text word vectors to initialize the encoder's embeddings.
    #[arg(long, conflicts_with = "embeddings")]
    pub word_vectors: Option<PathBuf>,
    /// Use precomputed NSEMB1 representations instead of the convolutional
    /// encoder; only the metric head is trained.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Seed instances (JSONL).
    #[arg(long)]
    pub seeds: PathBuf,
    /// Labeled corpus of the existing relations, the negative pool (JSONL).
    #[arg(long)]
    pub labeled: PathBuf,
    /// Unlabeled corpus to grow from (JSONL; labels are ignored).
    #[arg(long)]
    pub unlabeled: PathBuf,
    /// Siamese model file (rsn.bin).
    #[arg(long)]
    pub model: PathBuf,
    /// Classifier encoder file (encoder.bin) [default: the siamese encoder].
    #[arg(long)]
    pub encoder: Option<PathBuf>,
    /// Relation name when the seed file carries no labels.
    #[arg(long)]
    pub relation: Option<String>,
    /// Instances to score with the final classifier (JSONL).
    #[arg(long, requires = "predictions_out")]
    pub query: Option<PathBuf>,
    /// Where to write the query probabilities (JSON object id → p).
    #[arg(long, requires = "query")]
    pub predictions_out: Option<PathBuf>,
    /// Probability above which a query instance counts as positive.
    #[arg(long)]
    pub classifier_threshold: Option<f64>,
    /// Write the classifier encoder with the new relation head appended.
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    #[arg(long)]
    pub k1: Option<usize>,
    #[arg(long)]
    pub k2: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Continue each fine-tune from the previous head.
    #[arg(long)]
    pub warm_start: bool,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON object mapping instance id to probability.
    #[arg(long)]
    pub predictions: PathBuf,
    /// JSON object mapping id to true/false, or a labeled JSONL corpus
    /// together with `--relation`.
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub relation: Option<String>,
    /// Predictions strictly above this count as positive.
    #[arg(long, default_value_t = 0.5)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Number of independent trials (overrides the configuration).
    #[arg(long)]
    pub trials: Option<usize>,
    /// Render a report saved by an earlier `report --out` instead of running.
    #[arg(long, conflicts_with_all = ["trials"])]
    pub input: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

/// What a command prints: JSON under `--json`, text otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub json: serde_json::Value,
    pub text: String,
}

pub fn execute(cli: Cli) -> Result<Outcome> {
    let c = &cli.common;
    match &cli.command {
        Command::Pretrain(a) => pretrain(c, a),
        Command::Run(a) => run(c, a),
        Command::Eval(a) => eval(c, a),
        Command::Generate(a) => generate(c, a),
        Command::Report(a) => report(c, a),
    }
}

fn required_out<'a>(c: &'a Common, what: &str) -> Result<&'a Path> {
    c.out.as_deref().ok_or_else(|| Error::Usage(format!("--out <{what}> is required")))
}

fn pool(c: &Common) -> Result<Pool> {
    Pool::new(c.workers.unwrap_or_else(default_workers))
}

fn engine_config(c: &Common, args: &ConfigArgs) -> Result<EngineConfig> {
    let mut cfg = resolve(&EngineConfig::default(), args.config.as_deref(), &args.set)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::write(dir, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("outputs serialize");
    fs::write(path, text + "\n").map_err(|e| Error::write(path, e))
}

fn pretrain(c: &Common, a: &PretrainArgs) -> Result<Outcome> {
    let dir = required_out(c, "DIR")?;
    let cfg = engine_config(c, &a.config)?;
    let mut manifest = RunManifest::start("pretrain", cfg.seed, 1, snapshot(&cfg));
    let labeled = read_labeled(&a.labeled)?;
    manifest.input("labeled", &a.labeled)?;

    let (encoder, rsn, encoder_report, rsn_report) = match &a.embeddings {
        Some(path) => {
            let store = load_embedding_store(path)?;
            manifest.input("embeddings", path)?;
            let encoder: InstanceEncoder = store.into();
            let (rsn, report) = pretrain_metric(encoder.clone(), &labeled, &cfg.plan, cfg.seed)?;
            (encoder, rsn, None, report)
        }
        None => {
            let wv = a.word_vectors.as_deref().map(read_word_vectors).transpose()?;
            if let Some(path) = &a.word_vectors {
                manifest.input("word_vectors", path)?;
            }
            let m = pretrain_pipeline(&labeled, wv.as_ref(), &cfg.plan, cfg.seed)?;
            (m.encoder.into(), m.rsn, Some(m.encoder_report), m.rsn_report)
        }
    };

    create_dir(dir)?;
    let encoder_path = dir.join("encoder.bin");
    let rsn_path = dir.join("rsn.bin");
    ModelFile::encoder_only(encoder).save(&encoder_path)?;
    ModelFile::from_rsn(rsn).save(&rsn_path)?;
    manifest.output("encoder", &encoder_path)?;
    manifest.output("rsn", &rsn_path)?;
    let manifest_path = dir.join("manifest.json");
    manifest.finish(&manifest_path)?;

    let mut text = format!("wrote {} and {}\n", encoder_path.display(), rsn_path.display());
    if let Some(r) = &encoder_report {
        text += &format!("encoder loss {:.4} -> {:.4}\n", r.initial_loss, r.final_loss);
    }
    text += &format!("siamese loss {:.4} -> {:.4}\n", rsn_report.initial_loss, rsn_report.final_loss);
    let json = json!({
        "encoder": encoder_path,
        "rsn": rsn_path,
        "manifest": manifest_path,
        "encoder_report": encoder_report,
        "rsn_report": rsn_report,
    });
    Ok(Outcome { json, text })
}

/// The `run` output file.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunOutput {
    pub manifest: PathBuf,
    /// `"ok"`, or `"failed"` with `error` set and the state reached so far.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub relation: String,
    pub seeds: Vec<String>,
    pub added: Vec<String>,
    pub selected: Vec<String>,
    pub head: ClassifierHead,
    pub initial_loss: f64,
    pub iterations: Vec<snowball_core::IterationRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query: Option<QuerySummary>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct QuerySummary {
    pub predictions: PathBuf,
    pub threshold: f64,
    pub instances: usize,
    pub positive: usize,
}

fn run(c: &Common, a: &RunArgs) -> Result<Outcome> {
    let out = required_out(c, "FILE")?;
    let mut cfg = engine_config(c, &a.config)?;
    let s = &mut cfg.snowball;
    s.k1 = a.k1.unwrap_or(s.k1);
    s.k2 = a.k2.unwrap_or(s.k2);
    s.alpha = a.alpha.unwrap_or(s.alpha);
    s.beta = a.beta.unwrap_or(s.beta);
    s.theta = a.theta.unwrap_or(s.theta);
    s.iterations = a.iterations.unwrap_or(s.iterations);
    s.warm_start |= a.warm_start;
    if let Some(t) = a.classifier_threshold {
        cfg.classifier_threshold = t;
    }
    if !(0.0..=1.0).contains(&cfg.classifier_threshold) {
        return Err(Error::Usage(format!("classifier threshold {} is outside [0, 1]", cfg.classifier_threshold)));
    }
    let pool = pool(c)?;
    let mut manifest = RunManifest::start("run", cfg.seed, pool.workers(), snapshot(&cfg));

    let rsn = ModelFile::load(&a.model)?.into_rsn().map_err(|m| Error::format(&a.model, None, m))?;
    manifest.input("model", &a.model)?;
    let mut classifier_file = match &a.encoder {
        Some(path) => {
            manifest.input("encoder", path)?;
            ModelFile::load(path)?
        }
        None => ModelFile::encoder_only(rsn.encoder.clone()),
    };
    let labeled = read_labeled(&a.labeled)?;
    manifest.input("labeled", &a.labeled)?;
    let (unlabeled, _) = read_unlabeled(&a.unlabeled)?;
    manifest.input("unlabeled", &a.unlabeled)?;
    let seeds = read_seeds(&a.seeds, a.relation.as_deref())?;
    manifest.input("seeds", &a.seeds)?;
    let relation = seeds.relation().to_string();
    if labeled.relations().contains(&relation) {
        log::warn!("relation `{relation}` also labels the negative pool");
    }
    let seed_ids: Vec<String> = seeds.instances().iter().map(|x| x.id.clone()).collect();

    let runner = Snowball::new(&rsn, &classifier_file.encoder, &labeled, &unlabeled, cfg.seeded_snowball(), &pool)?;
    let (state, failure): (SnowballState, Option<snowball_core::Error>) = match runner.run(seeds) {
        Ok(state) => (state, None),
        Err(f) => match f.partial {
            Some(partial) => (*partial, Some(f.error)),
            None => return Err(f.error.into()),
        },
    };

    let query = match (&a.query, &a.predictions_out) {
        (Some(qpath), Some(ppath)) if failure.is_none() => {
            let instances = read_instances(qpath)?;
            manifest.input("query", qpath)?;
            let predictions = classifier_predictions(&state.head, &classifier_file.encoder, &instances)?;
            write_json(ppath, &predictions)?;
            manifest.output("predictions", ppath)?;
            let positive = predictions.values().filter(|&&p| p > cfg.classifier_threshold).count();
            Some(QuerySummary {
                predictions: ppath.clone(),
                threshold: cfg.classifier_threshold,
                instances: instances.len(),
                positive,
            })
        }
        _ => None,
    };
    if let (Some(path), None) = (&a.save_model, &failure) {
        classifier_file.set_head(&relation, state.head.clone());
        classifier_file.save(path)?;
        manifest.output("model", path)?;
    }

    let manifest_path = sidecar(out);
    let output = RunOutput {
        manifest: manifest_path.clone(),
        status: if failure.is_some() { "failed" } else { "ok" }.into(),
        error: failure.as_ref().map(|e| e.to_string()),
        relation,
        added: state.added_ids().map(String::from).collect(),
        selected: state.selected_ids().map(String::from).collect(),
        seeds: seed_ids,
        head: state.head.clone(),
        initial_loss: state.initial_loss,
        iterations: state.iteration_log.clone(),
        query,
    };
    write_json(out, &output)?;
    manifest.output("state", out)?;
    manifest.finish(&manifest_path)?;
    if let Some(e) = failure {
        return Err(e.into());
    }

    let mut text = format!(
        "{}: {} seeds + {} added = {} selected\n",
        output.relation,
        output.seeds.len(),
        output.added.len(),
        output.selected.len()
    );
    for r in &output.iterations {
        text += &format!(
            "  iteration {}: phase 1 {}/{} accepted, phase 2 {}/{} accepted, loss {:.4}\n",
            r.iteration,
            r.phase1_added.len(),
            r.phase1_candidates,
            r.phase2_added.len(),
            r.phase2_candidates,
            r.classifier_loss
        );
    }
    if let Some(q) = &output.query {
        text += &format!("query: {} of {} above {}\n", q.positive, q.instances, q.threshold);
    }
    text += &format!("wrote {}\n", out.display());
    let json = serde_json::to_value(&output).expect("outputs serialize");
    Ok(Outcome { json, text })
}

fn read_gold(path: &Path, relation: Option<&str>) -> Result<BTreeMap<String, bool>> {
    let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    if let Ok(map) = serde_json::from_str::<BTreeMap<String, bool>>(&text) {
        return Ok(map);
    }
    let relation = relation.ok_or_else(|| {
        Error::Usage(format!("{} is not an id → bool map; pass --relation to read it as a corpus", path.display()))
    })?;
    parse_instances(&text, path)?
        .into_iter()
        .map(|x| match &x.relation {
            Some(r) => Ok((x.id.clone(), r == relation)),
            None => Err(Error::format(path, None, format!("instance `{}` has no gold relation", x.id))),
        })
        .collect()
}

fn eval(c: &Common, a: &EvalArgs) -> Result<Outcome> {
    if !(0.0..=1.0).contains(&a.threshold) {
        return Err(Error::Usage(format!("threshold {} is outside [0, 1]", a.threshold)));
    }
    let text = fs::read_to_string(&a.predictions).map_err(|e| Error::read(&a.predictions, e))?;
    let predictions: BTreeMap<String, f64> =
        serde_json::from_str(&text).map_err(|e| Error::format(&a.predictions, None, e.to_string()))?;
    let gold = read_gold(&a.gold, a.relation.as_deref())?;
    let metrics: Metrics = score_binary(&predictions, &gold, a.threshold)?;
    let json = json!({ "threshold": a.threshold, "instances": gold.len(), "metrics": metrics });
    if let Some(out) = &c.out {
        let mut manifest = RunManifest::start("eval", 0, 1, json!({ "threshold": a.threshold, "relation": a.relation }));
        manifest.input("predictions", &a.predictions)?;
        manifest.input("gold", &a.gold)?;
        write_json(out, &json)?;
        manifest.output("metrics", out)?;
        manifest.finish(&sidecar(out))?;
    }
    Ok(Outcome { text: render_metrics(&metrics, a.threshold), json })
}

fn benchmark_config(c: &Common, args: &ConfigArgs) -> Result<BenchmarkConfig> {
    let mut cfg = resolve(&BenchmarkConfig::default(), args.config.as_deref(), &args.set)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

/// Writes the world of benchmark trial 0 for the configured seed.
fn generate(c: &Common, a: &GenerateArgs) -> Result<Outcome> {
    let dir = required_out(c, "DIR")?;
    let cfg = benchmark_config(c, &a.config)?;
    cfg.synthetic.validate()?;
    let mut manifest = RunManifest::start("generate", cfg.seed, 1, snapshot(&cfg));
    let world = build_world(&cfg, derive_seed(cfg.seed, 0))?;
    create_dir(dir)?;

    let unlabeled_gold = world.corpus.unlabeled_with_gold();
    let mut files = vec![
        ("existing", dir.join("existing.jsonl")),
        ("held_out", dir.join("held_out.jsonl")),
        ("unlabeled", dir.join("unlabeled.jsonl")),
        ("unlabeled_gold", dir.join("unlabeled_gold.jsonl")),
    ];
    write_instances(&files[0].1, world.existing.instances())?;
    write_instances(&files[1].1, world.held_out.instances())?;
    write_instances(&files[2].1, world.corpus.unlabeled.instances())?;
    write_instances(&files[3].1, &unlabeled_gold)?;
    if let Some(wv) = &world.word_vectors {
        let path = dir.join("word_vectors.txt");
        write_word_vectors(&path, wv)?;
        files.push(("word_vectors", path));
    }
    let n_pre = cfg.pretrain_relations;
    let info = json!({
        "pretrain_relations": &world.corpus.relations[..n_pre],
        "new_relations": world.new_relations,
        "unseen_relations": &world.corpus.relations[n_pre + world.new_relations.len()..],
        "labeled": world.existing.len() + world.held_out.len(),
        "unlabeled": world.corpus.unlabeled.len(),
    });
    let info_path = dir.join("world.json");
    write_json(&info_path, &info)?;
    files.push(("world", info_path));
    for (role, path) in &files {
        manifest.output(role, path)?;
    }
    manifest.finish(&dir.join("manifest.json"))?;

    let mut text = String::new();
    for (role, path) in &files {
        text += &format!("{role:<15} {}\n", path.display());
    }
    Ok(Outcome { json: json!({ "files": files.iter().map(|(r, p)| (r.to_string(), p.clone())).collect::<BTreeMap<_, _>>(), "world": info }), text })
}

/// The `report --out` file.
#[derive(Debug, Serialize, Deserialize)]
pub struct SavedReport {
    pub config: BenchmarkConfig,
    pub report: BenchmarkReport,
}

fn report(c: &Common, a: &ReportArgs) -> Result<Outcome> {
    let saved = match &a.input {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
            serde_json::from_str::<SavedReport>(&text).map_err(|e| Error::format(path, None, e.to_string()))?
        }
        None => {
            let mut cfg = benchmark_config(c, &a.config)?;
            if let Some(t) = a.trials {
                cfg.trials = t;
            }
            let pool = pool(c)?;
            let manifest = RunManifest::start("report", cfg.seed, pool.workers(), snapshot(&cfg));
            let report = run_benchmark(&cfg, &pool)?;
            let saved = SavedReport { config: cfg, report };
            if let Some(out) = &c.out {
                let mut manifest = manifest;
                write_json(out, &saved)?;
                manifest.output("report", out)?;
                manifest.finish(&sidecar(out))?;
            }
            saved
        }
    };
    let text = render_benchmark(&saved.report);
    let json = serde_json::to_value(&saved).expect("reports serialize");
    Ok(Outcome { json, text })
}
