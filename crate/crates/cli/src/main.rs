use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use subdiff_cli::experiment;
use subdiff_cli::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "subdiff", version, about = "Reaction-subdiffusion forward solves and (q, f) reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the forward problem at the true coefficients.
    Forward(Common),
    /// Run every configured (alpha, delta, seed, scheme) cell.
    Reconstruct(Common),
    /// Noise-sweep error table of the overall case (b) scheme.
    Table(Common),
    /// Per-iteration errors of several schemes on the same data.
    Compare(Common),
    /// Empirical contraction ratios around the truth.
    Contraction(Common),
    /// Admissibility diagnostics of the synthetic data.
    CheckData(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (overrides output.dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise seeds (overrides noise.seeds).
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Fractional orders (overrides noise.alphas and problem.alpha).
    #[arg(long, value_delimiter = ',')]
    alpha: Vec<f64>,
    /// Relative noise levels (overrides noise.deltas).
    #[arg(long, value_delimiter = ',')]
    noise: Vec<f64>,
    /// Scheme names (overrides scheme.names).
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<String>,
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf), CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if !self.seed.is_empty() {
            cfg.noise.seeds = self.seed.clone();
        }
        if !self.alpha.is_empty() {
            cfg.problem.alpha = self.alpha[0];
            cfg.noise.alphas = self.alpha.clone();
        }
        if !self.noise.is_empty() {
            cfg.noise.deltas = self.noise.clone();
        }
        if !self.scheme.is_empty() {
            cfg.scheme.names = self.scheme.clone();
        }
        cfg.validate()?;
        let out = self.out.clone().unwrap_or_else(|| PathBuf::from(&cfg.output.dir));
        Ok((cfg, out))
    }
}

fn execute(cmd: Command) -> Result<(), CliError> {
    match cmd {
        Command::Forward(c) => {
            let (cfg, out) = c.resolve()?;
            let states = experiment::forward(&cfg, &out)?;
            println!("wrote {} forward solutions to {}", states.len(), out.display());
        }
        Command::Reconstruct(c) => {
            let (cfg, out) = c.resolve()?;
            let cells = experiment::run(&cfg, &out)?;
            print!("{}", fs::read_to_string(out.join("summary.csv"))?);
            let failed = cells.iter().filter(|c| !matches!(c, Ok(r) if r.failure.is_none())).count();
            if failed > 0 {
                return Err(CliError::Scheme(format!("{failed} of {} cells failed", cells.len())));
            }
        }
        Command::Table(c) => {
            let (cfg, out) = c.resolve()?;
            let table = experiment::table_noise_sweep(&cfg)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.toml"), cfg.echo())?;
            fs::write(out.join("noise_table.csv"), table.to_csv())?;
            print!("{}", table.to_csv());
            for f in &table.failures {
                eprintln!("warning: {f}");
            }
        }
        Command::Compare(c) => {
            let (cfg, out) = c.resolve()?;
            let cmp = experiment::compare_schemes(&cfg)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.toml"), cfg.echo())?;
            fs::write(out.join("compare.csv"), cmp.to_csv())?;
            print!("{}", cmp.to_csv());
            for cell in &cmp.cells {
                if let Some(f) = &cell.failure {
                    eprintln!("warning: {} did not converge: {f}", cell.scheme);
                }
            }
        }
        Command::Contraction(c) => {
            let (cfg, out) = c.resolve()?;
            let est = experiment::contraction(&cfg)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("config.toml"), cfg.echo())?;
            fs::write(out.join("contraction.csv"), est.to_csv())?;
            print!("{}", est.to_csv());
        }
        Command::CheckData(c) => {
            let (cfg, _) = c.resolve()?;
            let (ok, report) = experiment::check_data(&cfg)?;
            print!("{report}");
            if !ok {
                return Err(CliError::Scheme("data fail the admissibility checks".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
