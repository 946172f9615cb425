//! Command-line front end.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::datagen::{
    export_dataset, generate_dataset, generate_hierarchy, split_by_scene, GeneratorConfig, HierarchyConfig,
};
use crate::error::{Error, Result};
use crate::metrics::{write_jsonl, MetricsWriter};
use crate::multimodal::{evaluate_itm, joint_train, make_itm_pairs, JointLossForm, JointTrainConfig, SwapMode};
use crate::projection::{
    ablation_run, calibrate_thresholds, evaluate, project_probs, train_projection, AblationConfig, FeatureEncoder,
    Modality, ProjectionTrainConfig, TokenTable,
};
use crate::rng;
use crate::store::{ConceptSpace, Dataset, EntailmentTargets, GroundTruthStats, NegativePolicy, PairTable};
use crate::trainer::{fit_concept_space, probe, ConceptTrainConfig, FitData, PairOrdering};
use crate::vqa::{
    evaluate_vqa, generate_questions, read_programs, resolve_oracle, scenes_from_samples, write_programs, ExecMode,
    Template,
};

#[derive(Debug, Parser)]
#[command(
    name = "concept-space",
    version,
    about = "Box-embedding concept spaces and their projection models"
)]
pub struct Cli {
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for every artifact of the run.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Worker threads for evaluation; training always runs sequentially.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene dataset or a hierarchy pair table.
    Datagen(DatagenArgs),
    /// Fit a concept space to co-occurrence statistics or a pair table.
    Fit(FitArgs),
    /// Query conditional entailments of a fitted space.
    Probe(ProbeArgs),
    /// Train a projection encoder against a frozen space.
    TrainProj(TrainProjArgs),
    /// Align a vision and a text encoder.
    JointTrain(JointArgs),
    /// Image-text matching accuracy.
    EvalItm(ItmArgs),
    /// Question answering over projected scenes.
    EvalVqa(VqaArgs),
    /// Pretrained versus from-scratch learning curves.
    Ablate(AblateArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DatagenArgs {
    #[arg(long, default_value = "clevr")]
    pub preset: String,
    /// key=value generator configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one generator key, `key=value`.
    #[arg(long = "set")]
    pub set: Vec<String>,
    #[arg(long)]
    pub scenes: Option<usize>,
    /// Emit a hierarchy closure pair table with this many concepts instead.
    #[arg(long)]
    pub hierarchy: Option<usize>,
    #[arg(long, default_value = "data.jsonl")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    #[arg(long, conflicts_with = "pairs", required_unless_present = "pairs")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-2)]
    pub weight_decay: f64,
    #[arg(long, default_value = "same_family")]
    pub negative_policy: String,
    #[arg(long, default_value_t = 5)]
    pub negatives: usize,
    #[arg(long, default_value = "both")]
    pub ordering: String,
    #[arg(long, default_value = "space.json")]
    pub out: String,
}

#[derive(Debug, Args, Serialize)]
pub struct ProbeArgs {
    #[arg(long)]
    pub space: PathBuf,
    /// `concept,given`; repeatable.
    #[arg(long = "pair", required = true)]
    pub pairs: Vec<String>,
    #[arg(long)]
    pub normalize: bool,
    /// Dataset whose statistics supply targets.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainProjArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long, default_value = "vision")]
    pub modality: String,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 5)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 3.0)]
    pub positive_weight: f64,
    #[arg(long, default_value_t = 0.2)]
    pub warmup: f64,
    #[arg(long, default_value_t = 64)]
    pub embed: usize,
    /// Share of scenes held out for evaluation.
    #[arg(long, default_value_t = 0.2)]
    pub held_out: f64,
    #[arg(long)]
    pub out: Option<String>,
}

#[derive(Debug, Args, Serialize)]
pub struct JointArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub vision: PathBuf,
    #[arg(long)]
    pub text: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub steps: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub space_lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 1.0)]
    pub beta: f64,
    #[arg(long, default_value = "overlap")]
    pub loss_form: String,
    #[arg(long, default_value_t = 25)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 0.2)]
    pub held_out: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct ItmArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long)]
    pub vision: PathBuf,
    #[arg(long)]
    pub text: PathBuf,
    #[arg(long, default_value = "sentence_swap")]
    pub mode: String,
    #[arg(long, default_value_t = 0.5)]
    pub fraction: f64,
    #[arg(long, default_value_t = 0.2)]
    pub held_out: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct VqaArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub space: PathBuf,
    /// Vision encoder; required in projected mode.
    #[arg(long)]
    pub vision: Option<PathBuf>,
    #[arg(long, default_value = "projected")]
    pub mode: String,
    /// Program file; questions are generated when absent.
    #[arg(long)]
    pub questions: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub per_scene: usize,
    #[arg(long, default_value_t = 0.2)]
    pub held_out: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.2)]
    pub warmup: f64,
    #[arg(long, default_value_t = 0.95)]
    pub target: f64,
    #[arg(long, default_value_t = 10)]
    pub eval_every: usize,
    #[arg(long, default_value_t = 1000)]
    pub eval_samples: usize,
    /// Seeds `seed, seed+1, ...`; the summary reports medians.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0.2)]
    pub held_out: f64,
}

/// Parse `argv` (including the program name) and run; returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let argv: Vec<std::ffi::OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("{line}");
            return 1;
        }
    };
    let args: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match dispatch(&cli, &args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.to_string().replace('\n', " "));
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli, argv: &[String]) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::Config("--threads must be >= 1".into()));
    }
    std::fs::create_dir_all(&cli.out_dir).map_err(|e| Error::io(&cli.out_dir, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let ctx = Ctx {
        seed: cli.seed,
        out: cli.out_dir.clone(),
        parallel: cli.threads > 1,
        argv: argv.to_vec(),
    };
    pool.install(|| match &cli.command {
        Command::Datagen(a) => datagen(&ctx, a),
        Command::Fit(a) => fit(&ctx, a),
        Command::Probe(a) => probe_cmd(&ctx, a),
        Command::TrainProj(a) => train_proj(&ctx, a),
        Command::JointTrain(a) => joint(&ctx, a),
        Command::EvalItm(a) => eval_itm(&ctx, a),
        Command::EvalVqa(a) => eval_vqa(&ctx, a),
        Command::Ablate(a) => ablate(&ctx, a),
    })
}

struct Ctx {
    seed: u64,
    out: PathBuf,
    parallel: bool,
    argv: Vec<String>,
}

impl Ctx {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn manifest<C: Serialize>(&self, command: &str, inputs: &[&Path], config: &C) -> Result<()> {
        let mut digests = BTreeMap::new();
        for p in inputs {
            digests.insert(p.display().to_string(), sha256_file(p)?);
        }
        let m = json!({
            "tool": "concept-space",
            "version": env!("CARGO_PKG_VERSION"),
            "command": command,
            "argv": self.argv,
            "seed": self.seed,
            "inputs": digests,
            "config": config,
        });
        write_json(&self.path(&format!("manifest-{command}.json")), &m)
    }
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(None, e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> Result<T> {
    s.parse().map_err(Error::Config)
}

fn load_space_for(space: &Path, data: &Dataset) -> Result<ConceptSpace> {
    let space = ConceptSpace::load(space)?;
    let names = |v: &crate::store::Vocabulary| v.concepts().iter().map(|c| c.name.clone()).collect::<Vec<_>>();
    if names(&space.vocabulary) != names(&data.vocabulary) {
        return Err(Error::Config("space and dataset vocabularies differ".into()));
    }
    Ok(space)
}

fn stats_of(data: &Dataset) -> Result<GroundTruthStats> {
    let ls = data.label_sets();
    GroundTruthStats::extract(ls.iter().map(Vec::as_slice), &data.vocabulary)
}

fn datagen(ctx: &Ctx, a: &DatagenArgs) -> Result<()> {
    let out = ctx.path(&a.out);
    if let Some(n) = a.hierarchy {
        let cfg = HierarchyConfig {
            concepts: n,
            seed: ctx.seed,
            ..Default::default()
        };
        let (vocab, table, _) = generate_hierarchy(&cfg)?;
        let file = std::fs::File::create(&out).map_err(|e| Error::io(&out, e))?;
        let mut w = std::io::BufWriter::new(file);
        table.write(&vocab, &mut w).map_err(|e| Error::io(&out, e))?;
        ctx.manifest("datagen", &[], &json!({"hierarchy": n, "rows": table.len()}))?;
        println!(
            "datagen: concepts={} pair_rows={} out={}",
            vocab.len(),
            table.len(),
            out.display()
        );
        return Ok(());
    }
    let mut cfg = GeneratorConfig::preset(&a.preset)?;
    let mut inputs = Vec::new();
    if let Some(p) = &a.config {
        cfg.apply_kv(&std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?;
        inputs.push(p.as_path());
    }
    for kv in &a.set {
        cfg.apply_kv(kv)?;
    }
    if let Some(s) = a.scenes {
        cfg.scenes = s;
    }
    cfg.seed = ctx.seed;
    let ds = generate_dataset(&cfg)?;
    export_dataset(&ds, &out)?;
    ctx.manifest("datagen", &inputs, &cfg)?;
    println!(
        "datagen: scenes={} objects={} out={}",
        cfg.scenes,
        ds.samples.len(),
        out.display()
    );
    Ok(())
}

fn fit(ctx: &Ctx, a: &FitArgs) -> Result<()> {
    let mut config = ConceptTrainConfig {
        lr: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        weight_decay: a.weight_decay,
        seed: ctx.seed,
        negative_policy: parse::<NegativePolicy>(&a.negative_policy)?,
        negative_k: a.negatives,
        ordering: parse::<PairOrdering>(&a.ordering)?,
        ..Default::default()
    };
    config.space.dim = a.dim;
    config.validate()?;
    let mut metrics = MetricsWriter::create(&ctx.path("fit_metrics.jsonl"))?;
    let mut write_err = None;
    let mut on_step = |epoch: usize, step: u64, loss: f64| {
        if write_err.is_none() {
            if let Err(e) = metrics.record(&json!({"epoch": epoch, "step": step, "loss": loss})) {
                write_err = Some(e);
            }
        }
    };
    let (space, report, input) = if let Some(data) = &a.data {
        let ds = Dataset::read(data)?;
        let ls = ds.label_sets();
        let stats = GroundTruthStats::extract(ls.iter().map(Vec::as_slice), &ds.vocabulary)?;
        let fd = FitData::Samples {
            label_sets: &ls,
            stats: &stats,
        };
        let (s, r) = fit_concept_space(&fd, &ds.vocabulary, &config, &mut on_step)?;
        (s, r, data)
    } else {
        let p = a.pairs.as_ref().expect("clap enforces one source");
        let (table, vocab) = PairTable::read(p, None)?;
        let (s, r) = fit_concept_space(&FitData::Pairs(&table), &vocab, &config, &mut on_step)?;
        (s, r, p)
    };
    if let Some(e) = write_err {
        return Err(e);
    }
    let mut summary = serde_json::to_value(&report).map_err(|e| Error::format(None, e.to_string()))?;
    if let Some(o) = summary.as_object_mut() {
        o.remove("wall_time_secs");
        o.remove("step_losses");
    }
    metrics.record(&json!({ "summary": summary }))?;
    metrics.finish()?;
    let out = ctx.path(&a.out);
    space.save(&out)?;
    write_json(&ctx.path("fit_report.json"), &report)?;
    ctx.manifest("fit", &[input], &config)?;
    println!(
        "fit: steps={} initial_kl={:.6} final_kl={:.6} max_abs_error={:.6} wall_time_secs={:.2} out={}",
        report.steps,
        report.initial_kl,
        report.final_kl,
        report.max_abs_error,
        report.wall_time_secs,
        out.display()
    );
    Ok(())
}

fn probe_cmd(ctx: &Ctx, a: &ProbeArgs) -> Result<()> {
    let space = ConceptSpace::load(&a.space)?;
    let pairs: Vec<(String, String)> = a
        .pairs
        .iter()
        .map(|p| {
            p.split_once(',')
                .map(|(c, g)| (c.trim().to_string(), g.trim().to_string()))
                .ok_or_else(|| Error::Config(format!("pair `{p}` is not `concept,given`")))
        })
        .collect::<Result<_>>()?;
    let stats = match &a.data {
        Some(d) => Some(stats_of(&Dataset::read(d)?)?),
        None => None,
    };
    let rows = probe(
        &space,
        &pairs,
        a.normalize,
        stats.as_ref().map(|s| s as &dyn EntailmentTargets),
    )?;
    write_jsonl(&ctx.path("probe.jsonl"), &rows)?;
    let mut inputs = vec![a.space.as_path()];
    inputs.extend(a.data.as_deref());
    ctx.manifest("probe", &inputs, a)?;
    for r in &rows {
        match r.target {
            Some(t) => println!(
                "P({} | {}) predicted={:.4} target={:.4}",
                r.concept, r.given, r.predicted, t
            ),
            None => println!("P({} | {}) predicted={:.4}", r.concept, r.given, r.predicted),
        }
    }
    Ok(())
}

fn new_encoder(modality: Modality, train: &Dataset, embed: usize, dim: usize, seed: u64) -> Result<FeatureEncoder> {
    let mut r = rng::stream(seed, "init");
    match modality {
        Modality::Vision => FeatureEncoder::for_vision(train.header.dim_features, embed, dim, &mut r),
        Modality::Text => {
            let tokens = TokenTable::build(train.samples.iter().map(|s| s.text.as_str()));
            FeatureEncoder::for_text(tokens, embed, dim, &mut r)
        }
    }
}

fn train_proj(ctx: &Ctx, a: &TrainProjArgs) -> Result<()> {
    let ds = Dataset::read(&a.data)?;
    let space = load_space_for(&a.space, &ds)?;
    let modality: Modality = parse(&a.modality)?;
    let (train, test) = split_by_scene(&ds, a.held_out);
    let config = ProjectionTrainConfig {
        lr: a.lr,
        batch_size: a.batch,
        epochs: a.epochs,
        positive_weight: a.positive_weight,
        warmup_fraction: a.warmup,
        seed: ctx.seed,
        ..Default::default()
    };
    config.validate()?;
    let mut encoder = new_encoder(modality, &train, a.embed, space.dim(), ctx.seed)?;
    let mut metrics = MetricsWriter::create(&ctx.path(&format!("proj_{modality}_metrics.jsonl")))?;
    let mut write_err = None;
    let m = train_projection(
        &train.samples,
        None,
        &space,
        &mut encoder,
        &config,
        |epoch, step, lr, loss| {
            if write_err.is_none() {
                if let Err(e) = metrics.record(&json!({"epoch": epoch, "step": step, "lr": lr, "loss": loss})) {
                    write_err = Some(e);
                }
            }
        },
    )?;
    if let Some(e) = write_err {
        return Err(e);
    }
    // thresholds are calibrated on the first half of the held-out scenes
    let (val, eval_split) = test.samples.split_at(test.samples.len() / 2);
    let thresholds = if space.vocabulary.attributes().next().is_some() && !val.is_empty() {
        let probs = project_probs(&encoder, &space, val, ctx.parallel)?;
        let labels: Vec<_> = val.iter().map(|s| s.labels.clone()).collect();
        Some(calibrate_thresholds(&space.vocabulary, &probs, &labels))
    } else {
        None
    };
    let ev = evaluate(&encoder, &space, eval_split, thresholds.as_ref(), ctx.parallel)?;
    metrics.record(&json!({"summary": {"steps": m.steps, "evaluation": ev}}))?;
    metrics.finish()?;
    let out = ctx.path(a.out.as_deref().unwrap_or(&format!("encoder_{modality}.json")));
    encoder.save(&out)?;
    if let Some(t) = &thresholds {
        write_json(
            &ctx.path(&format!("thresholds_{modality}.json")),
            &t.by_name(&space.vocabulary),
        )?;
    }
    write_json(&ctx.path(&format!("proj_{modality}_eval.json")), &ev)?;
    ctx.manifest("train-proj", &[&a.data, &a.space], &config)?;
    let fams: Vec<String> = ev.family_accuracy.iter().map(|(f, v)| format!("{f}={v:.4}")).collect();
    println!(
        "train-proj: modality={modality} steps={} mean_family_accuracy={:.4} [{}] category_accuracy={} attribute_micro_f1={} out={}",
        m.steps,
        ev.mean_family_accuracy,
        fams.join(" "),
        ev.category_accuracy.map_or("n/a".into(), |v| format!("{v:.4}")),
        ev.attribute_micro_f1.map_or("n/a".into(), |v| format!("{v:.4}")),
        out.display()
    );
    Ok(())
}

fn joint(ctx: &Ctx, a: &JointArgs) -> Result<()> {
    let ds = Dataset::read(&a.data)?;
    let mut space = load_space_for(&a.space, &ds)?;
    let mut vision = FeatureEncoder::load(&a.vision)?;
    let mut text = FeatureEncoder::load(&a.text)?;
    let (train, test) = split_by_scene(&ds, a.held_out);
    let stats = stats_of(&train)?;
    let config = JointTrainConfig {
        lr: a.lr,
        space_lr: a.space_lr,
        batch_size: a.batch,
        steps: a.steps,
        beta: a.beta,
        loss_form: match a.loss_form.as_str() {
            "overlap" => JointLossForm::Overlap,
            "neg_log" | "neglog" => JointLossForm::NegLog,
            other => return Err(Error::Config(format!("unknown loss form `{other}`"))),
        },
        eval_every: a.eval_every,
        seed: ctx.seed,
        ..Default::default()
    };
    let concept = ConceptTrainConfig {
        seed: ctx.seed,
        ..Default::default()
    };
    let mut losses = Vec::new();
    let report = joint_train(
        &train.samples,
        &test.samples,
        &mut vision,
        &mut text,
        &mut space,
        &stats,
        &concept,
        &config,
        |step, loss| losses.push(json!({"step": step, "loss": loss})),
    )?;
    write_jsonl(&ctx.path("joint_metrics.jsonl"), &losses)?;
    write_jsonl(&ctx.path("joint_curve.jsonl"), &report.curve)?;
    vision.save(&ctx.path("joint_vision.json"))?;
    text.save(&ctx.path("joint_text.json"))?;
    space.save(&ctx.path("joint_space.json"))?;
    ctx.manifest("joint-train", &[&a.data, &a.space, &a.vision, &a.text], &config)?;
    let last = report.curve.last().map_or(0.0, |p| p.mean_cross_entailment);
    println!(
        "joint-train: steps={} mean_cross_entailment={:.4} steps_to_0.9={}",
        config.steps,
        last,
        report.steps_to_0_9.map_or("never".into(), |s| s.to_string())
    );
    Ok(())
}

fn eval_itm(ctx: &Ctx, a: &ItmArgs) -> Result<()> {
    let ds = Dataset::read(&a.data)?;
    let space = load_space_for(&a.space, &ds)?;
    let vision = FeatureEncoder::load(&a.vision)?;
    let text = FeatureEncoder::load(&a.text)?;
    let mode: SwapMode = parse(&a.mode)?;
    let (_, test) = split_by_scene(&ds, a.held_out);
    let pairs = make_itm_pairs(
        &test.samples,
        &ds.vocabulary,
        mode,
        a.fraction,
        &mut rng::stream(ctx.seed, "sampling"),
    )?;
    let report = evaluate_itm(&pairs, mode, &vision, &text, &space, ctx.parallel)?;
    write_json(&ctx.path(&format!("itm_{mode}.json")), &report)?;
    ctx.manifest("eval-itm", &[&a.data, &a.space, &a.vision, &a.text], a)?;
    println!(
        "eval-itm: mode={} accuracy={:.4} threshold={} n_pos={} n_neg={}",
        report.mode, report.accuracy, report.threshold, report.n_pos, report.n_neg
    );
    Ok(())
}

fn eval_vqa(ctx: &Ctx, a: &VqaArgs) -> Result<()> {
    let ds = Dataset::read(&a.data)?;
    let space = load_space_for(&a.space, &ds)?;
    let mode: ExecMode = parse(&a.mode)?;
    let (_, test) = split_by_scene(&ds, a.held_out);
    let mut inputs: Vec<&Path> = vec![&a.data, &a.space];
    let programs = match &a.questions {
        Some(p) => {
            inputs.push(p);
            read_programs(p)?
        }
        None => {
            let mut r = rng::stream(ctx.seed, "questions");
            let mut out = Vec::new();
            for (id, objs) in scenes_from_samples(&test.samples, &ds.vocabulary)? {
                let resolved = resolve_oracle(&objs, &ds.vocabulary);
                out.extend(generate_questions(
                    Some(id),
                    &resolved,
                    &ds.vocabulary,
                    &Template::ALL,
                    &mut r,
                    a.per_scene,
                ));
            }
            write_programs(&ctx.path("questions.jsonl"), &out)?;
            out
        }
    };
    for p in &programs {
        p.validate(&ds.vocabulary)?;
    }
    let encoder = match (&a.vision, mode) {
        (Some(v), _) => {
            inputs.push(v);
            Some(FeatureEncoder::load(v)?)
        }
        (None, ExecMode::Projected) => return Err(Error::Config("projected mode needs --vision".into())),
        (None, ExecMode::Oracle) => None,
    };
    let report = evaluate_vqa(
        &programs,
        &test.samples,
        &ds.vocabulary,
        mode,
        encoder.as_ref().map(|e| (e, &space)),
    )?;
    let name = match mode {
        ExecMode::Oracle => "vqa_oracle.json",
        ExecMode::Projected => "vqa_projected.json",
    };
    write_json(&ctx.path(name), &report)?;
    ctx.manifest("eval-vqa", &inputs, a)?;
    println!(
        "eval-vqa: mode={} questions={} exact_match={:.4} execution_errors={}",
        a.mode, report.questions, report.exact_match, report.execution_errors
    );
    Ok(())
}

fn ablate(ctx: &Ctx, a: &AblateArgs) -> Result<()> {
    let ds = Dataset::read(&a.data)?;
    let space = load_space_for(&a.space, &ds)?;
    if a.seeds == 0 {
        return Err(Error::Config("--seeds must be >= 1".into()));
    }
    let (train, test) = split_by_scene(&ds, a.held_out);
    let stats = stats_of(&train)?;
    let mut curve = MetricsWriter::create(&ctx.path("ablation_curve.jsonl"))?;
    let mut per_seed = Vec::new();
    for k in 0..a.seeds {
        let seed = ctx.seed + k;
        let config = AblationConfig {
            projection: ProjectionTrainConfig {
                lr: a.lr,
                epochs: a.epochs,
                batch_size: a.batch,
                warmup_fraction: a.warmup,
                seed,
                ..Default::default()
            },
            concept: ConceptTrainConfig {
                seed,
                ..Default::default()
            },
            target_accuracy: a.target,
            eval_every: a.eval_every,
            eval_samples: a.eval_samples,
        };
        let enc = FeatureEncoder::for_vision(ds.header.dim_features, 64, space.dim(), &mut rng::stream(seed, "init"))?;
        let r = ablation_run(&train.samples, &test.samples, &space, &stats, &enc, &config)?;
        for p in &r.curve {
            curve.record(&json!({"seed": seed, "step": p.step, "arm": p.arm, "accuracy": p.accuracy}))?;
        }
        let total = r.losses_pretrained.len();
        per_seed.push(json!({
            "seed": seed,
            "steps_to_target_pretrained": r.steps_to_target_pretrained,
            "steps_to_target_scratch": r.steps_to_target_scratch,
            "ratio": r.ratio(total, a.eval_every),
        }));
    }
    curve.finish()?;
    let ratios: Vec<f64> = per_seed
        .iter()
        .map(|s| s["ratio"].as_f64().unwrap_or(f64::NAN))
        .collect();
    let ratio = median(&ratios);
    let summary = json!({"target": a.target, "seeds": per_seed, "median_ratio": ratio});
    write_json(&ctx.path("ablation_summary.json"), &summary)?;
    ctx.manifest("ablate", &[&a.data, &a.space], a)?;
    for s in &per_seed {
        println!(
            "ablate: seed={} steps_to_target_pretrained={} steps_to_target_scratch={} ratio={:.3}",
            s["seed"],
            s["steps_to_target_pretrained"],
            s["steps_to_target_scratch"],
            s["ratio"].as_f64().unwrap_or(f64::NAN)
        );
    }
    println!("ablate: median_ratio={ratio:.3}");
    Ok(())
}

/// Median of a non-empty slice; even lengths average the middle pair.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
