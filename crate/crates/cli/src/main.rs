use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use eda_sketch::harness::{
    failed_checks, run_and_write, ExperimentId, ExperimentSpec, SpecOverrides,
};

#[derive(Parser)]
#[command(
    name = "eda-sketch",
    version,
    about = "Sketched limited-memory preconditioners for ensemble 4D-Var"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Overrides {
    /// TOML file with experiment settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seeds, e.g. `0,1,2`.
    #[arg(long, value_delimiter = ',')]
    seed_list: Option<Vec<u64>>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// State dimension.
    #[arg(long)]
    n: Option<usize>,
    /// Number of perturbed ensemble members.
    #[arg(long)]
    members: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV and manifest.
    Run {
        /// eig-sensitivity, eig-error, control-lmp, theta-sensitivity,
        /// ensemble-lmp or validate.
        experiment: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run the consistency checks on the small configuration.
    Validate {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// List the experiment ids.
    List,
}

fn build_spec(id: ExperimentId, o: Overrides) -> Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::defaults(id);
    if let Some(path) = &o.config {
        let file = SpecOverrides::from_file(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        spec = spec.merge(file)?;
    }
    if let Some(seeds) = o.seed_list {
        spec.seeds = seeds;
    }
    if let Some(out) = o.out {
        spec.output_dir = out;
    }
    if let Some(n) = o.n {
        spec.twin.n = n;
    }
    if let Some(members) = o.members {
        spec.twin.members = members;
    }
    spec.validate()?;
    Ok(spec)
}

fn run(id: ExperimentId, overrides: Overrides) -> Result<()> {
    let spec = build_spec(id, overrides)?;
    let out = run_and_write(&spec)?;
    println!(
        "{}: {} rows -> {}",
        spec.experiment,
        out.table.len(),
        out.csv_path.display()
    );
    println!("manifest -> {}", out.manifest_path.display());
    if id == ExperimentId::Validate {
        for r in out.table.rows.iter().filter(|r| r.metric == "value") {
            println!("  {:<26} {:.3e}", r.variant, r.value);
        }
        let failed = failed_checks(&out.table);
        if !failed.is_empty() {
            bail!("failed checks: {}", failed.join(", "));
        }
        println!("all checks passed");
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            experiment,
            overrides,
        } => experiment
            .parse::<ExperimentId>()
            .map_err(anyhow::Error::from)
            .and_then(|id| run(id, overrides)),
        Command::Validate { overrides } => run(ExperimentId::Validate, overrides),
        Command::List => {
            for id in ExperimentId::ALL {
                println!("{id}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
