use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use m2align::commands::{self, Output};
use m2align::config::{Metric, RunConfig};

#[derive(Parser)]
#[command(
    name = "m2align",
    version,
    about = "Second-order moment descriptors and adaptive EMD alignment for few-shot clip classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset (clips and manifest) into `out`.
    Synth(Common),
    /// Align two clips and report score, masses, plan and top pairs.
    Align {
        a: PathBuf,
        b: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate the selected metrics on N-way K-shot episodes.
    Eval(Common),
    /// Run the component and alignment ablation grids on shared episodes.
    Ablate(Common),
    /// Write the seeded scale weights to a file.
    Weights {
        path: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print the resolved configuration.
    Config(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    episodes: Option<u64>,
    /// Comma-separated metrics, e.g. `a2,pp,cr,gap-a2,cov-mn-a2`.
    #[arg(long)]
    metric: Option<String>,
    /// C_in/C'/C_out = 2048/256/128, T = 8, 7x7 grid.
    #[arg(long)]
    paper_dims: bool,
    /// Worker threads (0 = one per core).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory for `synth`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write line-delimited JSON records here.
    #[arg(long)]
    records: Option<PathBuf>,
    /// Override any config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        if self.paper_dims {
            cfg.paper_dims();
        }
        for s in &self.sets {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| anyhow::anyhow!("--set {s:?}: expected KEY=VALUE"))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.episodes {
            cfg.episodes = v;
        }
        if let Some(v) = &self.metric {
            cfg.metrics = Metric::parse_list(v)?;
        }
        if let Some(v) = self.threads {
            cfg.threads = v;
        }
        if let Some(v) = &self.manifest {
            cfg.manifest = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        Ok(cfg)
    }
}

fn emit(out: Output, records: Option<&PathBuf>) -> Result<()> {
    if let Some(p) = records {
        commands::write_text(p, &out.records)?;
    }
    print!("{}", out.text);
    for (label, d) in &out.timings {
        eprintln!("time {label}: {:.3}s", d.as_secs_f64());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(c) => emit(commands::synth(&c.resolve()?)?, c.records.as_ref()),
        Command::Align { a, b, common } => emit(
            commands::align(&common.resolve()?, &a, &b)?,
            common.records.as_ref(),
        ),
        Command::Eval(c) => emit(commands::eval(&c.resolve()?)?, c.records.as_ref()),
        Command::Ablate(c) => emit(commands::ablate(&c.resolve()?)?, c.records.as_ref()),
        Command::Weights { path, common } => emit(
            commands::weights(&common.resolve()?, &path)?,
            common.records.as_ref(),
        ),
        Command::Config(c) => {
            print!("{}", c.resolve()?.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
