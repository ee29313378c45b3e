//! Command-line front end: config loading, subcommands and exit codes.

mod config;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use rand::seq::index;
use serde::Serialize;
use serde_json::{json, Value};

pub use config::{
    EvalConfig, IoConfig, LoadedConfig, LogicConfig, NoiseConfig, RuleSource, RulesConfig,
    RunConfig, SearchSection,
};

use crate::datagen::{
    annotator_rules, inject_label_noise, make_world, sample_dataset, Dataset, Split, World,
};
use crate::engine::{train, update_pass, MapReport, ReasoningModel};
use crate::error::{Error, Result};
use crate::logic::{ambient_samples, ambiguous_fraction, expression_accuracy};
use crate::numcore::{Checkpoint, Matrix, SeedStream};
use crate::rulebase::{
    aggregate_rules, cooccurrence_prior, default_betas, generate_candidates,
    harvest_annotation_rules, load_rule_file, save_rule_file, Rule, RuleBase,
};
use crate::search::rule_search;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_INSUFFICIENT: i32 = 4;

const GENERATED_PER_BETA: usize = 10;

#[derive(Debug, Parser)]
#[command(
    name = "neurologic",
    version,
    about = "Neuro-symbolic activity reasoning"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML or JSON by extension).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory; also the default location of inputs.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,
    /// Worker threads.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Generate a synthetic world and dataset.
    GenData,
    /// Write an initial rule file.
    GenRules,
    /// Train the reasoning model and its rule base.
    Train,
    /// Mean average precision of a trained model.
    Eval,
    /// Accuracy of the learned operators on probe expressions.
    EvalLogic,
    /// mAP under increasing label noise.
    NoiseSweep,
    /// Upper-bound per-sample rule search.
    SearchRules,
    /// One evaluate-and-update pass over the rule base.
    UpdateRules,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numeric { .. } | Error::Diverged { .. } => EXIT_NUMERIC,
        Error::InsufficientSample(_) | Error::EmptyClass { .. } => EXIT_INSUFFICIENT,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code. Errors are printed to stderr.
pub fn main_with_args<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(Error::Config {
                path: "--jobs".into(),
                msg: "must be >= 1".into(),
            });
        }
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let loaded = match &cli.config {
        Some(p) => LoadedConfig::load(p)?,
        None => LoadedConfig::defaults(),
    };
    let seed = cli.seed.or(loaded.config.seed).unwrap_or(0);
    std::fs::create_dir_all(&cli.out).map_err(|e| Error::io(&cli.out, e))?;
    let ctx = Context {
        cfg: &loaded.config,
        loaded: &loaded,
        seed,
        out: &cli.out,
    };
    match cli.command {
        Command::GenData => gen_data(&ctx),
        Command::GenRules => gen_rules(&ctx),
        Command::Train => train_cmd(&ctx),
        Command::Eval => eval_cmd(&ctx),
        Command::EvalLogic => eval_logic(&ctx),
        Command::NoiseSweep => noise_sweep(&ctx),
        Command::SearchRules => search_cmd(&ctx),
        Command::UpdateRules => update_cmd(&ctx),
    }
}

struct Context<'a> {
    cfg: &'a RunConfig,
    loaded: &'a LoadedConfig,
    seed: u64,
    out: &'a Path,
}

impl Context<'_> {
    fn path(&self, configured: &Option<PathBuf>, default_name: &str) -> PathBuf {
        self.loaded.resolve(configured, self.out, default_name)
    }

    fn world(&self) -> Result<World> {
        World::load(&self.path(&self.cfg.io.world, "world.json"))
    }

    fn dataset(&self) -> Result<Dataset> {
        Dataset::load(&self.path(&self.cfg.io.dataset, "dataset.jsonl"))
    }

    fn model(&self) -> Result<ReasoningModel<f64>> {
        let ckpt = Checkpoint::load(&self.path(&self.cfg.io.checkpoint, "checkpoint.json"))?;
        ReasoningModel::from_checkpoint(&ckpt)
    }

    fn rule_base(&self, model: &ReasoningModel<f64>, path: &Path) -> Result<RuleBase> {
        let rules = load_rule_file(path, &model.primitives, &model.activities)?;
        RuleBase::from_rules(
            model.activities.len(),
            model.config().l0,
            rules.into_iter().map(|(r, _)| r),
        )
    }

    fn final_rules_path(&self) -> PathBuf {
        self.path(&self.cfg.io.final_rules, "rules.final.txt")
    }

    fn report(&self, command: &str, body: Value) -> Value {
        let mut doc = json!({
            "command": command,
            "seed": self.seed,
            "config_text": self.loaded.text,
            "config": self.cfg,
        });
        if let (Some(obj), Value::Object(more)) = (doc.as_object_mut(), body) {
            obj.extend(more);
        }
        doc
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<PathBuf> {
        let path = self.out.join(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
            path: path.display().to_string(),
            msg: e.to_string(),
        })?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

fn non_empty(data: Dataset, what: &str) -> Result<Dataset> {
    if data.is_empty() {
        return Err(Error::InsufficientSample(format!("{what} split is empty")));
    }
    Ok(data)
}

fn split_name(split: Split) -> &'static str {
    match split {
        Split::Train => "train",
        Split::Test => "test",
    }
}

fn gen_data(ctx: &Context) -> Result<()> {
    let world = make_world(&ctx.cfg.world, ctx.seed)?;
    let data = sample_dataset(&world, ctx.cfg.world.samples, ctx.seed)?;
    world.save(&ctx.out.join("world.json"))?;
    data.save(&ctx.out.join("dataset.jsonl"))?;
    let positives: Vec<usize> = (0..world.a()).map(|m| data.positives(m).count()).collect();
    let rules: Vec<String> = world
        .rules
        .iter()
        .map(|r| crate::rulebase::serialize_rule(r, &world.primitives, &world.activities))
        .collect();
    let body = json!({
        "samples": data.len(),
        "train": data.split(Split::Train).len(),
        "test": data.split(Split::Test).len(),
        "positives": positives,
        "ground_truth_rules": rules,
    });
    ctx.write_json("gen-data.json", &ctx.report("gen-data", body))?;
    Ok(())
}

fn initial_rules(ctx: &Context, world: &World, train_split: &Dataset) -> Result<Vec<Rule>> {
    let rc = &ctx.cfg.rules;
    let stream = SeedStream::new(ctx.seed);
    match rc.source {
        RuleSource::Truth => Ok(world.rules.clone()),
        RuleSource::Annotators => annotator_rules(
            world,
            rc.annotators,
            rc.per_activity,
            rc.exclude_truth,
            stream.derive("annotators"),
        ),
        RuleSource::Generated => {
            let mut out = Vec::new();
            for m in 0..world.a() {
                let prior = match cooccurrence_prior(&train_split.samples, m, rc.presence_threshold)
                {
                    Ok(p) => p,
                    Err(Error::EmptyClass { .. }) => continue,
                    Err(e) => return Err(e),
                };
                let drafts = generate_candidates(
                    m,
                    &prior,
                    &default_betas(),
                    GENERATED_PER_BETA,
                    stream.derive("generated"),
                )?;
                out.extend(aggregate_rules(&drafts, world.p(), rc.per_activity));
            }
            Ok(out)
        }
        RuleSource::Harvest => {
            let mut out = Vec::new();
            for m in 0..world.a() {
                match harvest_annotation_rules(
                    &train_split.samples,
                    m,
                    rc.per_activity,
                    rc.presence_threshold,
                    stream.derive("harvest"),
                ) {
                    Ok(r) => out.extend(r),
                    Err(Error::EmptyClass { .. }) => {}
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        }
    }
}

fn gen_rules(ctx: &Context) -> Result<()> {
    let world = ctx.world()?;
    let data = ctx.dataset()?;
    let train_split = data.split(Split::Train);
    let rules = initial_rules(ctx, &world, &train_split)?;
    let base = RuleBase::from_rules(world.a(), ctx.cfg.model.l0, rules)?;
    if base.is_empty() {
        return Err(Error::InsufficientSample("no rules were produced".into()));
    }
    let source = serde_json::to_value(ctx.cfg.rules.source).unwrap_or(Value::Null);
    let header = format!(
        "source {}; seed {}",
        source.as_str().unwrap_or("?"),
        ctx.seed
    );
    save_rule_file(
        &ctx.out.join("rules.txt"),
        &base.to_records(),
        &world.primitives,
        &world.activities,
        &header,
    )?;
    let per_activity: Vec<usize> = (0..world.a()).map(|m| base.rules(m).len()).collect();
    let body = json!({
        "rules": base.len(),
        "per_activity": per_activity,
        "checksum": format!("{:016x}", base.checksum()),
    });
    ctx.write_json("gen-rules.json", &ctx.report("gen-rules", body))?;
    Ok(())
}

fn train_cmd(ctx: &Context) -> Result<()> {
    let world = ctx.world()?;
    let data = ctx.dataset()?;
    let mut model = ReasoningModel::<f64>::new(
        &ctx.cfg.model,
        &world.primitives,
        &world.activities,
        world.spec.visual_dim,
        ctx.seed,
    )?;
    let rules_path = ctx.path(&ctx.cfg.io.rules, "rules.txt");
    let base = ctx.rule_base(&model, &rules_path)?;
    let train_split = non_empty(data.split(Split::Train), "train")?;
    let test_split = data.split(Split::Test);
    let val = (!test_split.is_empty()).then_some(&test_split);
    let outcome = match train(
        &mut model,
        &train_split,
        val,
        base,
        &ctx.cfg.train,
        ctx.seed,
    ) {
        Ok(o) => o,
        Err(e @ Error::Diverged { .. }) => {
            model
                .checkpoint(json!({ "diverged": e.to_string() }))
                .save(&ctx.out.join("checkpoint.json"))?;
            return Err(e);
        }
        Err(e) => return Err(e),
    };
    let history = serde_json::to_value(&outcome.history).map_err(|e| Error::Format {
        path: "history".into(),
        msg: e.to_string(),
    })?;
    model
        .checkpoint(json!({ "history": history }))
        .save(&ctx.out.join("checkpoint.json"))?;
    ctx.write_json("history.json", &history)?;
    save_rule_file(
        &ctx.out.join("rules.final.txt"),
        &outcome.base.to_records(),
        &model.primitives,
        &model.activities,
        &format!("trained rule base; seed {}", ctx.seed),
    )?;
    let set = model.rule_set(&outcome.base)?;
    let eval_data = non_empty(
        data.split(ctx.cfg.eval.split),
        split_name(ctx.cfg.eval.split),
    )?;
    let comb = ctx.cfg.eval.combination.unwrap_or(model.combination);
    let report = model.evaluate(&eval_data, &set, ctx.cfg.eval.mode, comb)?;
    let body = json!({
        "history": history,
        "rules": outcome.base.len(),
        "checksum": format!("{:016x}", outcome.base.checksum()),
        "eval": {
            "split": ctx.cfg.eval.split,
            "mode": ctx.cfg.eval.mode,
            "combination": comb,
            "metrics": report,
        },
    });
    ctx.write_json("train.json", &ctx.report("train", body))?;
    Ok(())
}

fn eval_cmd(ctx: &Context) -> Result<()> {
    let model = ctx.model()?;
    let data = ctx.dataset()?;
    let base = ctx.rule_base(&model, &ctx.final_rules_path())?;
    let set = model.rule_set(&base)?;
    let split = ctx.cfg.eval.split;
    let eval_data = non_empty(data.split(split), split_name(split))?;
    let comb = ctx.cfg.eval.combination.unwrap_or(model.combination);
    let report: MapReport = model.evaluate(&eval_data, &set, ctx.cfg.eval.mode, comb)?;
    let body = json!({
        "split": split,
        "mode": ctx.cfg.eval.mode,
        "combination": comb,
        "samples": eval_data.len(),
        "metrics": report,
    });
    ctx.write_json("metrics.json", &ctx.report("eval", body))?;
    Ok(())
}

fn subsample_rows(events: Matrix<f64>, n: usize, seed: u64) -> Result<Matrix<f64>> {
    if n == 0 || n >= events.rows() {
        return Ok(events);
    }
    let mut rng = SeedStream::new(seed).rng("logic-events");
    let mut idx = index::sample(&mut rng, events.rows(), n).into_vec();
    idx.sort_unstable();
    let mut data = Vec::with_capacity(n * events.cols());
    for i in idx {
        data.extend_from_slice(events.row(i));
    }
    Matrix::from_vec(n, events.cols(), data)
}

fn eval_logic(ctx: &Context) -> Result<()> {
    let lc = &ctx.cfg.logic;
    let model = ctx.model()?;
    let data = ctx.dataset()?;
    let base = ctx.rule_base(&model, &ctx.final_rules_path())?;
    let set = model.rule_set(&base)?;
    let split = non_empty(data.split(lc.split), split_name(lc.split))?;
    let stream = SeedStream::new(ctx.seed);
    let events = model.event_pool(&split.samples, &set)?;
    let events = subsample_rows(events, lc.events, stream.derive("events"))?;
    let ops = &model.arch.logic;
    let table = expression_accuracy(
        ops,
        &model.params,
        &events,
        lc.t_l,
        lc.tuples,
        stream.derive("tuples"),
    )?;
    let (lo, hi) = lc.ambiguous_band;
    let ambiguous = ambiguous_fraction(ops, &model.params, &events, lo, hi)?;
    let ambient_ambiguous = if lc.ambient > 0 {
        let ambient = ambient_samples(&events, lc.ambient, stream.derive("ambient"))?;
        Some(ambiguous_fraction(ops, &model.params, &ambient, lo, hi)?)
    } else {
        None
    };
    let body = json!({
        "split": lc.split,
        "table": table,
        "ambiguous": { "band": [lo, hi], "events": ambiguous, "ambient": ambient_ambiguous },
    });
    ctx.write_json("logic.json", &ctx.report("eval-logic", body))?;
    Ok(())
}

fn noise_sweep(ctx: &Context) -> Result<()> {
    let nc = &ctx.cfg.noise;
    let model = ctx.model()?;
    let data = ctx.dataset()?;
    let base = ctx.rule_base(&model, &ctx.final_rules_path())?;
    let set = model.rule_set(&base)?;
    let split = non_empty(data.split(nc.split), split_name(nc.split))?;
    let comb = nc.combination.unwrap_or(model.combination);
    let stream = SeedStream::new(ctx.seed);
    let mut csv = String::from("mr,map\n");
    let mut rows = Vec::with_capacity(nc.ratios.len());
    for (k, &mr) in nc.ratios.iter().enumerate() {
        let noisy = inject_label_noise(&split, mr, stream.derive(&format!("noise-{k}")))?;
        let report = model.evaluate(&noisy, &set, nc.mode, comb)?;
        csv.push_str(&format!("{mr},{}\n", report.map));
        rows.push(json!({ "mr": mr, "metrics": report }));
    }
    let path = ctx.out.join("noise-sweep.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    let body = json!({ "split": nc.split, "mode": nc.mode, "combination": comb, "rows": rows });
    ctx.write_json("noise-sweep.json", &ctx.report("noise-sweep", body))?;
    Ok(())
}

fn search_cmd(ctx: &Context) -> Result<()> {
    let sc = &ctx.cfg.search;
    let model = ctx.model()?;
    let data = ctx.dataset()?;
    let split = non_empty(data.split(sc.split), split_name(sc.split))?;
    let reports = rule_search(&model, &split.samples, &[], &sc.search, ctx.seed)?;
    let body = json!({ "split": sc.split, "reports": reports });
    ctx.write_json("search.json", &ctx.report("search-rules", body))?;
    Ok(())
}

fn update_cmd(ctx: &Context) -> Result<()> {
    let model = ctx.model()?;
    let data = ctx.dataset()?;
    let base = ctx.rule_base(&model, &ctx.final_rules_path())?;
    let train_split = non_empty(data.split(Split::Train), "train")?;
    let (next, diff) = update_pass(
        &model,
        &base,
        &train_split.samples,
        &ctx.cfg.train.candidates,
        ctx.seed,
    )?;
    save_rule_file(
        &ctx.out.join("rules.updated.txt"),
        &next.to_records(),
        &model.primitives,
        &model.activities,
        &format!("updated rule base; seed {}", ctx.seed),
    )?;
    let render = |rules: &[Rule]| {
        rules
            .iter()
            .map(|r| model.render_rule(r))
            .collect::<Vec<_>>()
    };
    let body = json!({
        "rules": next.len(),
        "added": render(&diff.added),
        "removed": render(&diff.removed),
        "checksum_before": format!("{:016x}", base.checksum()),
        "checksum_after": format!("{:016x}", next.checksum()),
    });
    ctx.write_json("update.json", &ctx.report("update-rules", body))?;
    Ok(())
}
