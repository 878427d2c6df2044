use std::path::PathBuf;
use std::process::ExitCode;

use clap::builder::PossibleValuesParser;
use clap::Parser;

use srl::cli::{exit_code, run, Experiment, ExperimentConfig, Fault};
use srl::Error;

fn experiment_names() -> Vec<&'static str> {
    Experiment::ALL.iter().map(|e| e.name()).collect()
}

/// Numerical experiments on b-contact forms, Reeb dynamics and singular periodic orbits.
#[derive(Debug, Parser)]
#[command(name = "srl", version)]
struct Args {
    /// Experiment to run.
    #[arg(value_parser = PossibleValuesParser::new(experiment_names()))]
    experiment: String,
    /// JSON configuration document; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Perturbation size ε in (0, 0.1].
    #[arg(long)]
    eps: Option<f64>,
    /// Comma-separated perturbation sizes for break-scaling.
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    /// Bump half-width δ in (0, 0.4].
    #[arg(long)]
    delta: Option<f64>,
    /// Integration horizon per direction for classification.
    #[arg(long)]
    horizon: Option<f64>,
    /// Number of sampled orbits.
    #[arg(long)]
    seeds: Option<usize>,
    /// Seed of the random generator.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `srl-output/<experiment>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the report as JSON instead of the check table.
    #[arg(long)]
    json: bool,
    /// Do not write any files.
    #[arg(long)]
    no_files: bool,
    /// Record wall-clock time in the report.
    #[arg(long)]
    wall_time: bool,
    /// Inject a deliberate fault (flip-hamiltonian-sign).
    #[arg(long, value_parser = PossibleValuesParser::new(["flip-hamiltonian-sign"]))]
    fault: Option<String>,
}

fn config(args: &Args, exp: Experiment) -> srl::Result<ExperimentConfig> {
    let mut c = match &args.config {
        Some(p) => ExperimentConfig::from_file(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(e) = c.experiment {
        if e != exp {
            return Err(Error::Config(format!("config is for experiment {e}, not {exp}")));
        }
    }
    c.experiment = Some(exp);
    if let Some(v) = args.eps {
        c.eps = v;
    }
    if let Some(v) = &args.eps_list {
        c.eps_list = v.clone();
    }
    if let Some(v) = args.delta {
        c.delta = v;
    }
    if let Some(v) = args.horizon {
        c.horizon = v;
    }
    if let Some(v) = args.seeds {
        c.seeds = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if args.fault.is_some() {
        c.fault = Some(Fault::FlipHamiltonianSign);
    }
    if args.wall_time {
        c.format.wall_time = true;
    }
    if args.no_files {
        c.output_dir = None;
    } else if let Some(o) = &args.out {
        c.output_dir = Some(o.clone());
    } else if c.output_dir.is_none() {
        c.output_dir = Some(PathBuf::from("srl-output").join(exp.name()));
    }
    c.validate()?;
    Ok(c)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let exp: Experiment = match args.experiment.parse() {
        Ok(e) => e,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let outcome = config(&args, exp).and_then(|c| run(exp, &c));
    match &outcome {
        Ok(rep) if args.json => println!("{}", rep.to_json()),
        Ok(rep) => print!("{}", rep.table()),
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&outcome) as u8)
}
