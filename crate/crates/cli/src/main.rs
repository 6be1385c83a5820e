//! `brainprop` command-line driver.
//!
//! Every subcommand reads an optional TOML run configuration (`--config`)
//! and lets flags override individual fields. Exit codes: 0 ok, 1 hard
//! error, 2 finished with soft failures.

mod config;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use brainprop::domain::{parse_effects_csv, BrainReference, PropertyId};
use brainprop::exec::Execution;
use brainprop::pipeline::{
    from_effects, load_models, load_stimulus_sets, measure_benchmark, run_benchmark,
    BenchmarkReport, RunStatus,
};
use brainprop::report::{emit_effects, emit_report, render};
use brainprop::stimulus::{generate_all, StimulusSpec};
use brainprop::store::{align, write_container};
use brainprop::synthetic::SyntheticModel;

use config::RunArgs;

#[derive(Parser)]
#[command(
    name = "brainprop",
    version,
    about = "Brain-likeness benchmark for vision models"
)]
struct Cli {
    /// TOML run configuration; flags override its fields.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Run on a single thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GenArgs {
    /// Property to generate; repeat for several. Defaults to all.
    #[arg(long = "property", value_name = "ID")]
    properties: Vec<PropertyId>,
    /// Root seed; each property derives its own stream from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Canvas side length in pixels.
    #[arg(long, default_value_t = 224)]
    canvas: u32,
    /// Directory with `assets.tsv` for scene incongruence.
    #[arg(long)]
    assets: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate stimulus sets.
    GenStimuli {
        #[command(flatten)]
        gen: GenArgs,
        /// Output directory (one subdirectory per property).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check the configuration, manifests and containers without computing.
    Validate(RunArgs),
    /// Compute effect vectors and write effects.csv / metrics.csv.
    Effects(RunArgs),
    /// Score effect vectors against the brain reference.
    Score {
        #[command(flatten)]
        run: RunArgs,
        /// Effects table to score (default `<out>/effects.csv`).
        #[arg(long)]
        effects: Option<PathBuf>,
    },
    /// PCA embedding and clustering strength from an effects table.
    Embed {
        #[command(flatten)]
        run: RunArgs,
        /// Effects table to embed (default `<out>/effects.csv`).
        #[arg(long)]
        effects: Option<PathBuf>,
    },
    /// Full run from stimuli and containers to the report directory.
    Report(RunArgs),
    /// Generate stimuli, then run the full report.
    All {
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Write containers from the built-in synthetic model (for demos).
    SynthExtract {
        /// Stimulus directory produced by gen-stimuli.
        #[arg(long)]
        stimuli: PathBuf,
        #[arg(long)]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Model directory to write `<property>/` containers into.
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a brain reference file with every value unset.
    ReferenceTemplate {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(status) => ExitCode::from(status.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cli: Cli) -> Result<RunStatus> {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let cfg_path = cli.config.as_deref();
    match cli.command {
        Command::GenStimuli { gen, out } => {
            let base = config::load(cfg_path)?;
            let out = out.unwrap_or(base.stimulus_dir);
            let seed = gen.seed.or(base.root_seed).unwrap_or(0);
            gen_stimuli(&gen, seed, &out, exec)
        }
        Command::Validate(args) => validate(&args.resolve(cfg_path)?),
        Command::Effects(args) => {
            let cfg = args.resolve(cfg_path)?;
            let (models, warnings) = measure_benchmark(&cfg, exec)?;
            emit_effects(
                &models,
                &cfg.scoring.property_subset,
                &warnings,
                &cfg.output_dir,
            )
            .with_context(|| format!("writing {}", cfg.output_dir.display()))?;
            info!(
                "effects for {} model(s) in {}",
                models.len(),
                cfg.output_dir.display()
            );
            Ok(status_of(&warnings))
        }
        Command::Score { run, effects } => {
            let cfg = run.resolve(cfg_path)?;
            let r = report_from_effects(&cfg, effects)?;
            write_selected(
                &r,
                &cfg.output_dir,
                &[
                    "ranking.csv",
                    "ranking.txt",
                    "presence.csv",
                    "presence.txt",
                    "summary.json",
                ],
            )?;
            print!("{}", brainprop::scoring::ranking_table(&r.ranking));
            Ok(r.status())
        }
        Command::Embed { run, effects } => {
            let cfg = run.resolve(cfg_path)?;
            let r = report_from_effects(&cfg, effects)?;
            if r.embedding.is_none() {
                bail!("embedding needs at least two scored models");
            }
            write_selected(
                &r,
                &cfg.output_dir,
                &["embedding.csv", "clustering.csv", "trajectories.csv"],
            )?;
            Ok(r.status())
        }
        Command::Report(args) => full_report(&args.resolve(cfg_path)?, exec),
        Command::All { run, gen } => {
            let cfg = run.resolve(cfg_path)?;
            let seed = gen.seed.or(cfg.root_seed).unwrap_or(0);
            let gen_status = gen_stimuli(&gen, seed, &cfg.stimulus_dir, exec)?;
            let cfg = brainprop::pipeline::RunConfig {
                root_seed: Some(seed),
                ..cfg
            };
            let status = full_report(&cfg, exec)?;
            Ok(worst(gen_status, status))
        }
        Command::SynthExtract {
            stimuli,
            model,
            seed,
            out,
        } => synth_extract(&stimuli, &model, seed, &out, exec),
        Command::ReferenceTemplate { out } => {
            let text = BrainReference::template();
            match out {
                Some(p) => {
                    fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?
                }
                None => print!("{text}"),
            }
            Ok(RunStatus::Ok)
        }
    }
}

fn status_of(warnings: &[String]) -> RunStatus {
    if warnings.is_empty() {
        RunStatus::Ok
    } else {
        RunStatus::Partial
    }
}

fn worst(a: RunStatus, b: RunStatus) -> RunStatus {
    if a == RunStatus::Partial || b == RunStatus::Partial {
        RunStatus::Partial
    } else {
        RunStatus::Ok
    }
}

fn gen_stimuli(gen: &GenArgs, seed: u64, out: &Path, exec: Execution) -> Result<RunStatus> {
    let explicit = !gen.properties.is_empty();
    let properties: Vec<PropertyId> = if explicit {
        gen.properties.clone()
    } else {
        PropertyId::ALL.to_vec()
    };
    let specs: Vec<StimulusSpec> = properties
        .iter()
        .map(|p| {
            let mut s = StimulusSpec::new(*p, StimulusSpec::derive_seed(seed, *p));
            s.canvas_px = gen.canvas;
            s.params.assets_dir = gen.assets.clone();
            s
        })
        .collect();
    let mut status = RunStatus::Ok;
    for (spec, result) in specs.iter().zip(generate_all(&specs, exec)) {
        match result {
            Ok(set) => {
                let dir = set
                    .write(out)
                    .with_context(|| format!("writing {}", spec.property))?;
                info!(
                    "{}: {} images in {}",
                    spec.property,
                    set.len(),
                    dir.display()
                );
            }
            // asking for a property by name makes its failure fatal
            Err(e) if explicit => bail!("{}: {e}", spec.property),
            Err(e) => {
                warn!("{}: skipped: {e}", spec.property);
                status = RunStatus::Partial;
            }
        }
    }
    Ok(status)
}

fn validate(cfg: &brainprop::pipeline::RunConfig) -> Result<RunStatus> {
    for p in [&cfg.stimulus_dir, &cfg.brain_reference] {
        if !p.exists() {
            bail!("{} does not exist", p.display());
        }
    }
    if cfg.models.is_empty() {
        bail!("no models configured");
    }
    let reference = BrainReference::load(&cfg.brain_reference)?;
    brainprop::domain::validate_config(&cfg.scoring, &reference)?;
    let mut problems = Vec::new();
    let sets = load_stimulus_sets(&cfg.stimulus_dir, &cfg.scoring, &mut problems);
    for p in &cfg.scoring.property_subset {
        if !sets.contains_key(p) {
            problems.push(format!("{p}: no stimulus set"));
        }
    }
    for m in &cfg.models {
        if !m.dir.is_dir() {
            bail!("{} does not exist", m.dir.display());
        }
    }
    for m in load_models(cfg, &mut problems) {
        for p in &cfg.scoring.property_subset {
            match (m.containers.get(p), sets.get(p)) {
                (None, _) => problems.push(format!("{}: {p}: no container", m.model_id)),
                (Some(c), Some(set)) => {
                    if let Err(e) = align(c, set) {
                        problems.push(format!("{}: {p}: {e}", m.model_id));
                    }
                }
                (Some(_), None) => {}
            }
        }
    }
    for w in &problems {
        warn!("{w}");
    }
    info!(
        "{} model(s), {} stimulus set(s), {} problem(s)",
        cfg.models.len(),
        sets.len(),
        problems.len()
    );
    Ok(status_of(&problems))
}

fn report_from_effects(
    cfg: &brainprop::pipeline::RunConfig,
    effects: Option<PathBuf>,
) -> Result<BenchmarkReport> {
    let path = effects.unwrap_or_else(|| cfg.output_dir.join("effects.csv"));
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let vectors = parse_effects_csv(&text)?;
    let reference = BrainReference::load(&cfg.brain_reference)
        .with_context(|| format!("reading {}", cfg.brain_reference.display()))?;
    let r = from_effects(
        vectors,
        &reference,
        &cfg.scoring,
        &cfg.analysis,
        cfg.root_seed,
    )?;
    for w in &r.warnings {
        warn!("{w}");
    }
    Ok(r)
}

fn write_selected(r: &BenchmarkReport, dir: &Path, names: &[&str]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let wanted: BTreeSet<&str> = names.iter().copied().collect();
    for (name, text) in render(r) {
        if wanted.contains(name) {
            let p = dir.join(name);
            fs::write(&p, text).with_context(|| format!("writing {}", p.display()))?;
        }
    }
    Ok(())
}

fn full_report(cfg: &brainprop::pipeline::RunConfig, exec: Execution) -> Result<RunStatus> {
    let r = run_benchmark(cfg, exec)?;
    emit_report(&r, &cfg.output_dir)
        .with_context(|| format!("writing {}", cfg.output_dir.display()))?;
    print!("{}", brainprop::scoring::ranking_table(&r.ranking));
    info!("report in {}", cfg.output_dir.display());
    Ok(r.status())
}

fn synth_extract(
    stimuli: &Path,
    model_id: &str,
    seed: u64,
    out: &Path,
    exec: Execution,
) -> Result<RunStatus> {
    let mut warnings = Vec::new();
    let cfg = brainprop::domain::ScoringConfig::default();
    let sets = load_stimulus_sets(stimuli, &cfg, &mut warnings);
    if sets.is_empty() {
        bail!("no stimulus sets under {}", stimuli.display());
    }
    let model = SyntheticModel::new(model_id, seed);
    for (p, set) in &sets {
        let c = model.extract(set, exec)?;
        write_container(&c, &out.join(p.as_str()))?;
        info!("{model_id}: {p}: {} x {}", c.n_stimuli, c.n_units);
    }
    for w in &warnings {
        warn!("{w}");
    }
    Ok(status_of(&warnings))
}
