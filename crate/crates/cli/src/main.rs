use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use riverlab::config::{preset, ExperimentConfig, ExperimentKind, PRESETS};
use riverlab::experiment::{run, RunOutput};
use riverlab::verify::{run_check, suite};
use riverlab::Error;

const EXIT_VERIFY: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "riverlab", version, about = "River-valley loss landscapes and learning-rate schedule experiments")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Experiment config file (`section.key = value` lines)
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in config: fig4b, fig4c, fig5, bigram, probe or table2
    #[arg(long, global = true, value_name = "NAME")]
    preset: Option<String>,
    /// Override experiment.seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override experiment.out
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads for ensembles (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Materialize a learning-rate schedule as `step,lr`
    Schedule,
    /// Run GF, GD or SGD on a toy landscape
    Simulate,
    /// Project onto and trace the river, estimate regularity constants
    River,
    /// Train the bigram model with constant and decay arms
    Bigram,
    /// Interpolation probes between checkpoints
    Probe,
    /// Run acceptance checks
    Verify {
        /// schedules, river, gd, sgd, decay, bigram, probe or all
        #[arg(default_value = "all")]
        suite: String,
    },
}

/// A failure with its process exit code.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl Failure {
    fn config(err: impl Into<anyhow::Error>) -> Self {
        Self {
            code: EXIT_CONFIG,
            err: err.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_)
            | Error::InvalidSchedule(_)
            | Error::InvalidArgument(_)
            | Error::Precondition(_)
            | Error::LengthMismatch { .. } => EXIT_CONFIG,
            _ => EXIT_DIVERGENCE,
        };
        Self { code, err: e.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<u8, Failure> {
    if let Some(n) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(Failure::config)?;
    }
    let kind = match cli.command {
        Command::Verify { suite } => return verify(&suite),
        Command::Schedule => ExperimentKind::Schedule,
        Command::Simulate => ExperimentKind::Simulate,
        Command::River => ExperimentKind::River,
        Command::Bigram => ExperimentKind::Bigram,
        Command::Probe => ExperimentKind::Probe,
    };
    let (mut cfg, default_out) = load_config(&cli.global)?;
    cfg.kind = kind;
    if let Some(seed) = cli.global.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.global.out {
        cfg.out = Some(out.clone());
    }
    let dir = cfg.out.clone().unwrap_or(default_out);
    cfg.out = Some(dir.clone());
    cfg.validate()?;
    let output = run(&cfg)?;
    write_output(&dir, &output)?;
    print!("{}", output.summary);
    println!("wrote {} files to {}", output.artifacts.len(), dir.display());
    match output.divergence {
        Some(e) => Err(Failure {
            code: EXIT_DIVERGENCE,
            err: anyhow!(e).context("run diverged; partial output written"),
        }),
        None => Ok(0),
    }
}

fn load_config(g: &Global) -> Result<(ExperimentConfig, PathBuf), Failure> {
    match (&g.config, &g.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))
                .map_err(Failure::config)?;
            let cfg = ExperimentConfig::from_text(&text)
                .with_context(|| format!("in {}", path.display()))
                .map_err(Failure::config)?;
            let stem = path.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned());
            Ok((cfg, PathBuf::from("out").join(stem)))
        }
        (None, Some(name)) => Ok((preset(name)?, PathBuf::from("out").join(name))),
        (None, None) => {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Err(Failure::config(anyhow!("pass --config <path> or --preset <{}>", names.join("|"))))
        }
    }
}

fn write_output(dir: &Path, output: &RunOutput) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .with_context(|| format!("creating {}", dir.display()))
        .map_err(Failure::config)?;
    for a in &output.artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.contents)
            .with_context(|| format!("writing {}", path.display()))
            .map_err(Failure::config)?;
    }
    Ok(())
}

fn verify(name: &str) -> Result<u8, Failure> {
    let checks = suite(name)?;
    let mut failed = 0;
    for c in checks {
        let outcome = run_check(c);
        println!("{}", outcome.line());
        if let Ok(r) = &outcome.report {
            print!("{r}");
        }
        if !outcome.passed() {
            failed += 1;
        }
    }
    if failed > 0 {
        println!("{failed} check(s) failed");
        Ok(EXIT_VERIFY)
    } else {
        println!("all checks passed");
        Ok(0)
    }
}
