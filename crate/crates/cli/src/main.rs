mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adcp::data::formats::{export_gray, load_rgb, write_pfm};
use adcp::pipeline::{
    evaluate, format_table, run_ablation, AblationPlan, Checkpoint, Model, Trainer, Variant,
};
use adcp::regression::DisparityMap;
use adcp::tensor::exec::Exec;
use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use config::{check_out_parent, require_file, RunConfig};

#[derive(Parser)]
#[command(name = "adcp", version, about = "Coarse-to-fine stereo matching")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path (checkpoint, prediction stem or table file).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a model and write a checkpoint.
    Train(Common),
    /// Evaluate a checkpoint on the validation data.
    Eval(Common),
    /// Predict one image pair; writes `<out>.pgm` and `<out>.pfm`.
    Predict(Common),
    /// Train and evaluate every configured variant, N and seed.
    Ablate(Common),
    /// Run the built-in numerical checks.
    Selftest {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("ADCP_THREADS") {
        let n: usize = v.parse().with_context(|| format!("ADCP_THREADS={v:?} is not a number"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    Ok(())
}

fn train(c: &Common, cfg: &RunConfig) -> anyhow::Result<()> {
    let train_src = cfg.data.train.as_ref().context("`data.train` is not set")?;
    train_src.check("data.train")?;
    if let Some(v) = &cfg.data.val {
        v.check("data.val")?;
    }
    let out = c.out.clone().or_else(|| cfg.train.checkpoint.clone());
    if let Some(p) = &out {
        check_out_parent(p)?;
    }
    let resume = match &cfg.train.resume {
        Some(_) => Some(require_file(&cfg.train.resume, "train.resume")?),
        None => None,
    };
    let tc = cfg.train.resolve(c.seed)?;
    let model_cfg = cfg.model.resolve()?;

    let train = train_src.load(None)?;
    let val = match &cfg.data.val {
        Some(v) => v.load(None)?,
        None => Vec::new(),
    };
    let mut trainer = match resume {
        Some(p) => Trainer::resume(&Checkpoint::load(&p)?, tc)?,
        None => Trainer::new(Model::new(model_cfg, tc.seed)?, tc),
    };
    let report = trainer.run(&train, &val, |line| println!("{line}"))?;
    if let Some(last) = report.steps.last() {
        println!("final {}", last.to_kv());
    }
    if let Some(p) = out {
        trainer.checkpoint().save(&p)?;
        println!("checkpoint={}", p.display());
    }
    Ok(())
}

fn eval(cfg: &RunConfig) -> anyhow::Result<()> {
    let ck = require_file(&cfg.eval.checkpoint, "eval.checkpoint")?;
    let src = cfg.data.val.as_ref().context("`data.val` is not set")?;
    src.check("data.val")?;
    let model = Checkpoint::load(&ck)?.model()?;
    let data = src.load(None)?;
    let report = evaluate(&model, &data, Exec::default())?;
    print!("{}", report.to_kv());
    Ok(())
}

fn predict(c: &Common, cfg: &RunConfig) -> anyhow::Result<()> {
    let ck = require_file(&cfg.predict.checkpoint, "predict.checkpoint")?;
    let left = require_file(&cfg.predict.left, "predict.left")?;
    let right = require_file(&cfg.predict.right, "predict.right")?;
    let stem = c.out.clone().unwrap_or_else(|| PathBuf::from("prediction"));
    check_out_parent(&stem)?;
    let model = Checkpoint::load(&ck)?.model()?;
    let (l, r) = (load_rgb(&left)?, load_rgb(&right)?);
    let pred = model.predict(&l, &r, Exec::default())?;
    let scale = cfg
        .predict
        .scale
        .unwrap_or(255.0 / model.config.d_max as f64);
    let pgm = with_ext(&stem, "pgm");
    let pfm = with_ext(&stem, "pfm");
    export_gray(&DisparityMap::new(pred.disparity.clone(), 1)?, &pgm, scale)?;
    write_pfm(&pfm, &pred.disparity)?;
    println!("pgm={}\npfm={}", pgm.display(), pfm.display());
    Ok(())
}

fn with_ext(stem: &Path, ext: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn ablate(c: &Common, cfg: &RunConfig) -> anyhow::Result<()> {
    let train_src = cfg.data.train.as_ref().context("`data.train` is not set")?;
    let val_src = cfg.data.val.as_ref().context("`data.val` is not set")?;
    train_src.check("data.train")?;
    val_src.check("data.val")?;
    if let Some(p) = &c.out {
        check_out_parent(p)?;
    }
    let variants = cfg
        .ablate
        .variants
        .iter()
        .map(|s| s.parse::<Variant>())
        .collect::<Result<Vec<_>, _>>()?;
    if variants.is_empty() || cfg.ablate.ns.is_empty() || cfg.ablate.seeds.is_empty() {
        bail!("ablate: variants, ns and seeds must be nonempty");
    }
    let seeds = match c.seed {
        Some(s) => vec![s],
        None => cfg.ablate.seeds.clone(),
    };
    let plan = AblationPlan {
        base: cfg.model.resolve()?,
        variants,
        ns: cfg.ablate.ns.clone(),
        seeds,
        train: cfg.train.resolve(None)?,
    };
    let train = train_src.load(None)?;
    let val = val_src.load(None)?;
    let rows = run_ablation(&plan, &train, &val, |r| {
        eprintln!("done {} n={} seed={} epe={:.4}", r.variant, r.n, r.seed, r.epe)
    })?;
    let table = format_table(&rows);
    print!("{table}");
    if let Some(p) = &c.out {
        std::fs::write(p, &table).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    init_threads()?;
    let (common, f): (&Common, fn(&Common, &RunConfig) -> anyhow::Result<()>) = match &cli.cmd {
        Cmd::Selftest { seed } => {
            let checks = adcp::selftest::run(*seed);
            for ch in &checks {
                println!("{ch}");
            }
            return Ok(checks.iter().all(|c| c.passed));
        }
        Cmd::Train(c) => (c, train),
        Cmd::Eval(c) => (c, |_, cfg| eval(cfg)),
        Cmd::Predict(c) => (c, predict),
        Cmd::Ablate(c) => (c, ablate),
    };
    let cfg = config::load(&common.config)?;
    f(common, &cfg)?;
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
