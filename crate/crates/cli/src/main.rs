use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use mcvr::cli::{self, ExperimentConfig, Format};
use mcvr::Error;

#[derive(Parser)]
#[command(name = "mcvr", version, about = "Monte Carlo variance-reduction experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Variance report for a single estimator configuration.
    Run(Common),
    /// Variance, ECM and RE over an (R, K) grid and all methods.
    Sweep(Common),
    /// Closed-form variance of the pair-probability designs.
    Pairprob(Common),
    /// Shared-draw influence scores, stratified vs IID.
    Attribution(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl Common {
    fn load(&self) -> mcvr::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        Ok(cfg)
    }

    fn format(&self) -> Format {
        match self.format {
            FormatArg::Csv => Format::Csv,
            FormatArg::Json => Format::Json,
        }
    }
}

type Handler = fn(&ExperimentConfig, Format) -> mcvr::Result<Vec<PathBuf>>;

fn execute(command: &Command) -> Result<Vec<PathBuf>, Error> {
    let (common, run): (&Common, Handler) = match command {
        Command::Run(c) => (c, |cfg, _| cli::cmd_run(cfg)),
        Command::Sweep(c) => (c, cli::cmd_sweep),
        Command::Pairprob(c) => (c, cli::cmd_pairprob),
        Command::Attribution(c) => (c, cli::cmd_attribution),
    };
    let cfg = common.load()?;
    let format = common.format();
    cli::with_threads(common.threads, || run(&cfg, format))?
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Cli::parse();
    match execute(&args.command) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
