//! The `grouprec` command line: train, evaluate, recommend, gradcheck,
//! synth. Every command is seed-reproducible and writes its outputs under a
//! run directory together with the fully resolved configuration.
//!
//! Exit codes: 0 success, 1 config/usage, 2 data, 3 numeric/verification.

mod config;

pub use config::{CliConfig, CONFIG_ENV_VAR};

use std::collections::BTreeMap;
use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::data::{
    build_vocabs, encode_dataset, generate_synthetic, load_ratings_csv, split, write_ratings_csv,
    Dataset, SchemaDecl, SyntheticConfig, SyntheticRule, Vocabularies,
};
use crate::error::{Error, Result};
use crate::eval::{evaluate_encoded, rank_top_k, run_scenarios};
use crate::layers::grad_check;
use crate::model::{
    scenario_schema, FieldDef, FieldKind, FieldSchema, Hyperparams, Model, Scenario,
};
use crate::optim::{fit, TrainHistory};

#[derive(Parser)]
#[command(
    name = "grouprec",
    version,
    about = "Group rating prediction and top-K recommendation experiments"
)]
struct Cli {
    /// Config file (section.key=value); defaults to $GROUPREC_CONFIG if set
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one model and write checkpoint, metrics CSV and resolved config
    Train(TrainArgs),
    /// Evaluate a checkpoint, or run the full scenario experiment matrix
    Evaluate(EvaluateArgs),
    /// Rank unseen items for a group under a given context
    Recommend(RecommendArgs),
    /// Verify analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
    /// Generate a synthetic ratings CSV with a known rule
    Synth(SynthArgs),
}

#[derive(Args)]
struct CommonTrainFlags {
    /// Ratings CSV path
    #[arg(long)]
    data: Option<PathBuf>,
    /// Schema declaration file (defaults to the built-in group-file mapping)
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Scenario: grs | mcgrs | mcgrs_mc | mcgrs_sc
    #[arg(long)]
    scenario: Option<String>,
    /// Context name for mcgrs_sc
    #[arg(long)]
    context: Option<String>,
    /// Master seed: sets both model init and training/split seeds
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl CommonTrainFlags {
    fn apply(&self, cfg: &mut CliConfig) {
        if let Some(p) = &self.data {
            cfg.data_path = Some(p.clone());
        }
        if let Some(p) = &self.schema {
            cfg.schema_path = Some(p.clone());
        }
        if let Some(s) = &self.scenario {
            cfg.scenario_tag = s.clone();
        }
        if let Some(c) = &self.context {
            cfg.scenario_context = Some(c.clone());
        }
        if let Some(seed) = self.seed {
            cfg.hp.seed = seed;
            cfg.train.seed = seed;
        }
        if let Some(v) = self.epochs {
            cfg.train.epochs = v;
        }
        if let Some(v) = self.batch_size {
            cfg.train.batch_size = v;
        }
        if let Some(v) = self.eta {
            cfg.train.eta = v;
        }
        if let Some(v) = self.patience {
            cfg.train.early_stop_patience = v;
        }
        if let Some(p) = &self.out_dir {
            cfg.out_dir = Some(p.clone());
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonTrainFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: CommonTrainFlags,
    /// Evaluate this checkpoint instead of running the scenario matrix
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Which split to evaluate a checkpoint on: test | val | train
    #[arg(long, default_value = "test")]
    split: String,
    /// Scenario matrix mode: comma-separated scenario tags
    #[arg(long)]
    scenarios: Option<String>,
    /// Scenario matrix mode: comma-separated seeds
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Args)]
struct RecommendArgs {
    #[command(flatten)]
    common: CommonTrainFlags,
    #[arg(long)]
    checkpoint: PathBuf,
    /// Group id to recommend for
    #[arg(long)]
    group: String,
    /// Context values as Name=Value, repeatable
    #[arg(long = "ctx", value_name = "NAME=VALUE")]
    ctx: Vec<String>,
    #[arg(short = 'k', long, default_value_t = 10)]
    k: usize,
    /// Output format: text | csv
    #[arg(long, default_value = "text")]
    format: String,
}

#[derive(Args)]
struct GradcheckArgs {
    /// Max relative error per parameter block
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Test hook: corrupt one gradient entry; the check must then fail
    #[arg(long, hide = true)]
    corrupt: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output CSV path
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1000)]
    records: usize,
    #[arg(long, default_value_t = 50)]
    groups: usize,
    #[arg(long, default_value_t = 30)]
    items: usize,
    /// Context cardinalities, comma separated (empty string for none)
    #[arg(long, default_value = "4,2,2")]
    context_cards: String,
    #[arg(long, default_value_t = 3)]
    criteria: usize,
    #[arg(long, default_value_t = 0.25)]
    noise: f64,
    /// Generating rule: criteria_mean | context_shift
    #[arg(long, default_value = "criteria_mean")]
    rule: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// Parse argv and run; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e);
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let mut cfg = CliConfig::default();
    let config_path = cli
        .config
        .or_else(|| std::env::var_os(CONFIG_ENV_VAR).map(PathBuf::from));
    if let Some(path) = config_path {
        let text = fs::read_to_string(&path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {}", path.display(), e))
        })?;
        cfg.apply_file(&text)?;
    }
    match cli.command {
        Command::Train(args) => {
            args.common.apply(&mut cfg);
            cmd_train(&cfg)
        }
        Command::Evaluate(args) => {
            args.common.apply(&mut cfg);
            cmd_evaluate(&cfg, &args)
        }
        Command::Recommend(args) => {
            args.common.apply(&mut cfg);
            cmd_recommend(&cfg, &args)
        }
        Command::Gradcheck(args) => cmd_gradcheck(&args),
        Command::Synth(args) => cmd_synth(&args),
    }
}

fn load_decl(cfg: &CliConfig) -> Result<SchemaDecl> {
    match &cfg.schema_path {
        Some(p) => SchemaDecl::from_file(p),
        None => Ok(SchemaDecl::itm_rec_default()),
    }
}

fn out_dir(cfg: &CliConfig, command: &str) -> Result<PathBuf> {
    let dir = match &cfg.out_dir {
        Some(d) => d.clone(),
        None => {
            let stamp = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            PathBuf::from("runs").join(format!("{}-{}", command, stamp))
        }
    };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(content.as_bytes())?;
    Ok(())
}

fn metrics_csv(history: &TrainHistory) -> String {
    let mut out = String::from("epoch,train_mse,train_rmse,val_mse,val_rmse\n");
    for r in &history.records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.train_mse, r.train_rmse, r.val_mse, r.val_rmse
        ));
    }
    out
}

/// Shared setup: load, split, build vocabularies, restrict to the scenario.
struct Prepared {
    train: Dataset,
    val: Dataset,
    test: Dataset,
    vocabs: Vocabularies,
    schema: FieldSchema,
}

fn prepare(cfg: &CliConfig) -> Result<Prepared> {
    let decl = load_decl(cfg)?;
    let data = load_ratings_csv(cfg.require_data_path()?, &decl)?;
    let (train, val, test) = split(&data, cfg.fractions, cfg.train.seed)?;
    let vocabs = build_vocabs(&train)?;
    let schema = scenario_schema(&vocabs.full_schema()?, &cfg.scenario()?)?;
    Ok(Prepared { train, val, test, vocabs, schema })
}

fn cmd_train(cfg: &CliConfig) -> Result<()> {
    let prep = prepare(cfg)?;
    let train_enc = encode_dataset(&prep.train, &prep.vocabs, &prep.schema)?;
    let val_enc = encode_dataset(&prep.val, &prep.vocabs, &prep.schema)?;
    let mut model = Model::build(prep.schema.clone(), cfg.hp.clone())?;
    let mut tcfg = cfg.train.clone();
    tcfg.validation_fraction = cfg.fractions.1;
    let history = fit(&mut model, &train_enc, &val_enc, &tcfg)?;

    let dir = out_dir(cfg, "train")?;
    model.save_checkpoint(&dir.join("model.ckpt"))?;
    write_file(&dir.join("metrics.csv"), &metrics_csv(&history))?;
    write_file(&dir.join("config.resolved"), &cfg.echo())?;
    let best = history.best();
    println!(
        "trained scenario={} epochs_ran={} best_epoch={} val_mse={} val_rmse={}",
        cfg.scenario()?.tag(),
        history.records.len(),
        history.best_epoch,
        best.val_mse,
        best.val_rmse
    );
    println!("outputs in {}", dir.display());
    Ok(())
}

fn parse_scenarios(cfg: &CliConfig, tags: &str) -> Result<Vec<Scenario>> {
    tags.split(',')
        .map(|t| Scenario::parse(t.trim(), cfg.scenario_context.as_deref()))
        .collect()
}

fn cmd_evaluate(cfg: &CliConfig, args: &EvaluateArgs) -> Result<()> {
    if let Some(ckpt) = &args.checkpoint {
        let model = Model::load_checkpoint(ckpt)?;
        let prep = prepare_for_model(cfg, &model)?;
        let part = match args.split.as_str() {
            "test" => &prep.test,
            "val" => &prep.val,
            "train" => &prep.train,
            other => {
                return Err(Error::Config(format!(
                    "unknown split `{}` (expected test, val or train)",
                    other
                )))
            }
        };
        let encoded = encode_dataset(part, &prep.vocabs, &model.schema)?;
        let m = evaluate_encoded(&model, &encoded)?;
        println!("split={} n={} rmse={} mae={}", args.split, m.n, m.rmse, m.mae);
        return Ok(());
    }
    // scenario matrix mode
    let decl = load_decl(cfg)?;
    let data = load_ratings_csv(cfg.require_data_path()?, &decl)?;
    let scenarios = match &args.scenarios {
        Some(tags) => parse_scenarios(cfg, tags)?,
        None => vec![
            Scenario::Grs,
            Scenario::Mcgrs,
            Scenario::McgrsMc,
            Scenario::McgrsSc {
                context: cfg
                    .scenario_context
                    .clone()
                    .unwrap_or_else(|| decl.context_cols.first().cloned().unwrap_or_default()),
            },
        ],
    };
    let seeds: Vec<u64> = match &args.seeds {
        Some(s) => s
            .split(',')
            .map(|v| v.trim().parse::<u64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad --seeds `{}`", s)))?,
        None => cfg.eval_seeds.clone(),
    };
    let report = run_scenarios(&data, &scenarios, &cfg.hp, &cfg.train, &seeds, cfg.fractions)?;
    let dir = out_dir(cfg, "evaluate")?;
    write_file(&dir.join("results.csv"), &report.to_csv())?;
    write_file(&dir.join("config.resolved"), &cfg.echo())?;
    print!("{}", report.render_table());
    println!("results in {}", dir.display());
    Ok(())
}

/// Rebuild the data-side state for a checkpoint and verify it matches the
/// schema the checkpoint was trained with.
fn prepare_for_model(cfg: &CliConfig, model: &Model) -> Result<Prepared> {
    let decl = load_decl(cfg)?;
    let data = load_ratings_csv(cfg.require_data_path()?, &decl)?;
    let (train, val, test) = split(&data, cfg.fractions, cfg.train.seed)?;
    let vocabs = build_vocabs(&train)?;
    let full = vocabs.full_schema()?;
    // every model field must exist in the rebuilt vocabularies with the same size
    for f in model.schema.fields() {
        match full.fields().iter().find(|g| g.name == f.name && g.kind == f.kind) {
            None => {
                return Err(Error::Config(format!(
                    "checkpoint schema mismatch: field `{}` ({}) not present in the data",
                    f.name,
                    f.kind.label()
                )))
            }
            Some(g) if g.vocab_size != f.vocab_size => {
                return Err(Error::Config(format!(
                    "checkpoint schema mismatch: field `{}` has vocab size {} here, {} in checkpoint (different split or data?)",
                    f.name, g.vocab_size, f.vocab_size
                )))
            }
            Some(_) => {}
        }
    }
    // and the scenario implied by the config must match the checkpoint fields
    let requested = scenario_schema(&full, &cfg.scenario()?)?;
    if requested != model.schema {
        return Err(Error::Config(format!(
            "checkpoint schema mismatch: checkpoint has fields [{}], scenario {} expects [{}]",
            model
                .schema
                .fields()
                .iter()
                .map(|f| f.name.as_str())
                .collect::<Vec<_>>()
                .join(", "),
            cfg.scenario()?.tag(),
            requested
                .fields()
                .iter()
                .map(|f| f.name.as_str())
                .collect::<Vec<_>>()
                .join(", ")
        )));
    }
    Ok(Prepared { train, val, test, vocabs, schema: requested })
}

fn cmd_recommend(cfg: &CliConfig, args: &RecommendArgs) -> Result<()> {
    let model = Model::load_checkpoint(&args.checkpoint)?;
    let decl = load_decl(cfg)?;
    let data = load_ratings_csv(cfg.require_data_path()?, &decl)?;
    let (train, _, _) = split(&data, cfg.fractions, cfg.train.seed)?;
    let vocabs = build_vocabs(&train)?;

    let mut context = BTreeMap::new();
    let known: Vec<String> = decl.context_names();
    for pair in &args.ctx {
        let (name, value) = pair.split_once('=').ok_or_else(|| {
            Error::Config(format!("--ctx expects NAME=VALUE, got `{}`", pair))
        })?;
        if !known.iter().any(|k| k == name) {
            return Err(Error::Config(format!(
                "unknown context `{}`; data declares: {}",
                name,
                known.join(", ")
            )));
        }
        context.insert(name.to_string(), value.to_string());
    }
    for f in model.schema.fields() {
        if f.kind == FieldKind::Context && !context.contains_key(&f.name) {
            return Err(Error::Config(format!(
                "model needs context `{}`; pass --ctx {}=<value>",
                f.name, f.name
            )));
        }
    }

    // exclude items the group interacted with anywhere in the file
    let rated: BTreeSet<&str> = data
        .records
        .iter()
        .filter(|r| r.group_id == args.group)
        .map(|r| r.item_id.as_str())
        .collect();
    let candidates: Vec<String> = vocabs
        .item
        .tokens()
        .iter()
        .filter(|t| !rated.contains(t.as_str()))
        .cloned()
        .collect();
    if candidates.is_empty() {
        println!("no candidates: group {} has interacted with every known item", args.group);
        return Ok(());
    }
    let ranking = rank_top_k(&model, &args.group, &candidates, &context, args.k, &train, &vocabs)?;
    if ranking.unknown_group {
        eprintln!(
            "warning: group `{}` was not seen in training; using the unknown-group embedding",
            args.group
        );
    }
    match args.format.as_str() {
        "csv" => {
            println!("rank,item_id,predicted");
            for r in &ranking.items {
                println!("{},{},{}", r.rank, r.item_id, r.predicted);
            }
        }
        "text" => {
            for r in &ranking.items {
                println!("{:>3}. {:<40} {:.3}", r.rank, r.item_id, r.predicted);
            }
        }
        other => return Err(Error::Config(format!("unknown format `{}`", other))),
    }
    Ok(())
}

fn gradcheck_schema() -> FieldSchema {
    FieldSchema::new(vec![
        FieldDef { name: "group".into(), kind: FieldKind::Group, vocab_size: 7 },
        FieldDef { name: "item".into(), kind: FieldKind::Item, vocab_size: 9 },
        FieldDef { name: "ctx_a".into(), kind: FieldKind::Context, vocab_size: 5 },
        FieldDef { name: "ctx_b".into(), kind: FieldKind::Context, vocab_size: 4 },
        FieldDef { name: "cr_a".into(), kind: FieldKind::Criterion, vocab_size: 6 },
        FieldDef { name: "cr_b".into(), kind: FieldKind::Criterion, vocab_size: 6 },
    ])
    .unwrap()
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<()> {
    use crate::model::EncodedExample;
    let hp = Hyperparams {
        d: 8,
        heads: 2,
        d_h: 4,
        dense_width: 16,
        seed: args.seed,
        ..Hyperparams::default()
    };
    let mut model = Model::build(gradcheck_schema(), hp)?;
    let probes = vec![
        EncodedExample { indices: vec![3, 1, 2, 0, 5, 4], target: 2.0 },
        EncodedExample { indices: vec![6, 8, 4, 3, 1, 5], target: 3.5 },
        EncodedExample { indices: vec![0, 5, 1, 2, 3, 3], target: 4.5 },
    ];
    let loss = {
        let probes = probes.clone();
        move |m: &Model| -> f64 {
            probes
                .iter()
                .map(|ex| {
                    let p = m.predict(ex).expect("gradcheck forward");
                    (p - ex.target) * (p - ex.target)
                })
                .sum::<f64>()
                / probes.len() as f64
        }
    };
    let corrupt = args.corrupt;
    let accumulate = {
        let probes = probes.clone();
        move |m: &mut Model| {
            use crate::layers::Parameterized;
            m.zero_grads();
            let n = probes.len() as f64;
            for ex in &probes {
                let (p, caches) = m.forward(ex).expect("gradcheck forward");
                m.backward(&caches, 2.0 * (p - ex.target) / n).expect("gradcheck backward");
            }
            if corrupt {
                m.add_grad(0, 0, 0.1);
            }
        }
    };
    let report = grad_check(&mut model, loss, accumulate, 1e-5, args.tol)?;
    println!("{:<20} {:>14}  result", "block", "max_rel_err");
    for b in &report.blocks {
        println!(
            "{:<20} {:>14.3e}  {}",
            b.name,
            b.max_rel_err,
            if b.max_rel_err < args.tol { "pass" } else { "FAIL" }
        );
    }
    if report.passed() {
        println!("gradcheck passed at tol {:.1e}", args.tol);
        Ok(())
    } else {
        let worst = report.worst().expect("nonempty report");
        Err(Error::Numeric(format!(
            "gradient check failed: block {} max relative error {:.3e} (analytic {:.6e}, numeric {:.6e}) at tol {:.1e}",
            worst.name, worst.max_rel_err, worst.analytic_at_worst, worst.numeric_at_worst, args.tol
        )))
    }
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let context_cards: Vec<usize> = if args.context_cards.trim().is_empty() {
        Vec::new()
    } else {
        args.context_cards
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::Config(format!("bad --context-cards `{}`", args.context_cards)))?
    };
    let cfg = SyntheticConfig {
        n_groups: args.groups,
        n_items: args.items,
        n_records: args.records,
        context_cards,
        criteria: args.criteria,
        noise_std: args.noise,
        seed: args.seed,
        rule: SyntheticRule::parse(&args.rule)?,
    };
    let ds = generate_synthetic(&cfg)?;
    write_ratings_csv(&ds, &args.out)?;
    let mut decl_path = args.out.as_os_str().to_owned();
    decl_path.push(".schema");
    write_file(Path::new(&decl_path), &ds.decl.to_text())?;
    println!(
        "wrote {} records ({} groups, {} items) to {} (declaration: {})",
        ds.len(),
        args.groups,
        args.items,
        args.out.display(),
        Path::new(&decl_path).display()
    );
    Ok(())
}
