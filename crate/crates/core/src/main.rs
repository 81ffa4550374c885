use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ramsey_prep::analysis::Format;
use ramsey_prep::experiment::{
    prepare, preset, run_sweep, run_wigner, write_preparation, write_sweep, write_wigner,
    ExperimentConfig, PRESET_NAMES,
};
use ramsey_prep::validate;
use ramsey_prep::Error;

// stdout may be a closed pipe (`| head`); that is not an error
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_IMPOSSIBLE: u8 = 3;
const EXIT_VALIDATION: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ramsey-prep",
    version,
    about = "Fock-state superpositions by atomic postselection"
)]
struct Cli {
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Prepare one state and write its distribution, amplitudes and summary.
    Prepare(RunArgs),
    /// Optimal fidelity and probability versus alpha^2.
    Sweep(RunArgs),
    /// Wigner function of the prepared state.
    Wigner(RunArgs),
    /// Run the oracle-equivalence and invariant checks.
    Validate {
        /// Overrides RS_SEED.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,

    /// Built-in configuration.
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(PRESET_NAMES))]
    preset: Option<String>,

    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,

    #[arg(long, value_enum)]
    format: Option<FormatArg>,

    /// Rescan the atom count with the noisy fidelity.
    #[arg(long)]
    reoptimize_under_noise: bool,

    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    show_preset: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

impl RunArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut config = match (&self.config, &self.preset) {
            (Some(path), _) => ExperimentConfig::from_path(path)?,
            (None, Some(name)) => {
                preset(name).ok_or_else(|| Error::Config(format!("unknown preset {name}")))?
            }
            (None, None) => {
                return Err(Error::Config(format!(
                    "pass --config PATH or --preset NAME (one of {})",
                    PRESET_NAMES.join(", ")
                )))
            }
        };
        if let Some(dir) = &self.out {
            config.outputs.dir = Some(dir.clone());
        }
        if let Some(format) = self.format {
            config.outputs.format = format.into();
        }
        if self.reoptimize_under_noise {
            config.reoptimize_under_noise = true;
        }
        config.validate()?;
        Ok(config)
    }
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_)
        | Error::InvalidParameter { .. }
        | Error::NoSolution(_)
        | Error::CutoffTooSmall { .. }
        | Error::UnstableStep { .. }
        | Error::GridTooSmall { .. } => EXIT_CONFIG,
        Error::ImpossibleOutcome { .. } => EXIT_IMPOSSIBLE,
        _ => EXIT_FAILURE,
    }
}

fn ensure_dir(config: &ExperimentConfig) -> Result<(), Error> {
    if let Some(dir) = &config.outputs.dir {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io {
            path: dir.clone(),
            source,
        })?;
    }
    Ok(())
}

/// Plain decimals for ordinary magnitudes, exponent form for tiny ones.
fn num(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-4 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        out!("wrote {}", p.display());
    }
}

fn cmd_prepare(config: &ExperimentConfig) -> Result<(), Error> {
    let prep = prepare(config)?;
    ensure_dir(config)?;
    let paths = write_preparation(config, &prep)?;
    if let Some(n) = prep.n_atoms {
        out!("atoms in last group: {n}");
    }
    out!("fidelity: {}", prep.fidelity);
    out!(
        "probability: {} ({}%)",
        prep.probability,
        100.0 * prep.probability
    );
    for (n, p) in prep.distribution.probabilities().iter().enumerate().take(6) {
        out!("Pr({n}) = {}", num(*p));
    }
    print_written(&paths);
    Ok(())
}

fn cmd_sweep(config: &ExperimentConfig) -> Result<(), Error> {
    let points = run_sweep(config)?;
    ensure_dir(config)?;
    let paths = write_sweep(config, &points)?;
    out!("{:>8} {:>6} {:>10} {:>10}", "alpha^2", "N", "F", "P[%]");
    for p in &points {
        let o = &p.optimum;
        let flag = if o.at_boundary { "  (n_max)" } else { "" };
        out!(
            "{:>8.3} {:>6} {:>10.6} {:>10.4}{flag}",
            p.alpha_squared,
            o.n_atoms,
            o.fidelity,
            100.0 * o.probability
        );
    }
    print_written(&paths);
    Ok(())
}

fn cmd_wigner(config: &ExperimentConfig) -> Result<(), Error> {
    let (prep, grid) = run_wigner(config)?;
    ensure_dir(config)?;
    let path = write_wigner(config, &grid)?;
    out!("fidelity: {}", prep.fidelity);
    out!("W min: {}", num(grid.min()));
    out!("W max: {}", num(grid.max()));
    out!("integral: {}", grid.integral());
    print_written(&[path]);
    Ok(())
}

type Runner = fn(&ExperimentConfig) -> Result<(), Error>;

fn run(cli: Cli) -> Result<u8, Error> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| Error::Config(format!("--threads: {e}")))?;
    }
    let (args, command): (&RunArgs, Runner) = match &cli.command {
        Command::Validate { seed } => {
            let report = validate::run(seed.unwrap_or_else(validate::seed_from_env));
            out!("{report}");
            return Ok(if report.all_passed() {
                0
            } else {
                EXIT_VALIDATION
            });
        }
        Command::Prepare(args) => (args, cmd_prepare),
        Command::Sweep(args) => (args, cmd_sweep),
        Command::Wigner(args) => (args, cmd_wigner),
    };
    let config = args.resolve()?;
    if args.show_preset {
        out!("{}", config.to_json_pretty());
        return Ok(0);
    }
    command(&config)?;
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
