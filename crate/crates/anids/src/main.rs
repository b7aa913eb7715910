use std::path::PathBuf;
use std::process::ExitCode;

use anids::commands::{self, Overrides};
use anids::config::Config;
use anids_core::noisegen::NoiseMode;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Anisotropic denoising for atomistic force fields on toy systems.
#[derive(Debug, Parser)]
#[command(name = "anids", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a Boltzmann dataset from the configured potential.
    GenData(GenArgs),
    /// Self-supervised denoising with a learned noise generator.
    Pretrain(TrainArgs),
    /// Supervised energy/force training with partial corruption.
    Train(TrainArgs),
    /// Eigen-decompose learned covariances and measure directional energy sensitivity.
    Probe(ProbeArgs),
    /// Check that the isotropic special cases reduce to their classical losses.
    ReduceCheck(ReduceArgs),
}

#[derive(Debug, Args)]
struct GenArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Anids,
    Dens,
    Denoisevae,
}

impl From<Mode> for NoiseMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Anids => NoiseMode::Anids,
            Mode::Dens => NoiseMode::Dens,
            Mode::Denoisevae => NoiseMode::DenoiseVae,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dataset directory written by gen-data.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Resume from, or warm-start with, a saved run.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    noise_mode: Option<Mode>,
    #[arg(long)]
    freeze_generator: bool,
    /// Number of optimizer steps to take in this invocation.
    #[arg(long)]
    steps: Option<u64>,
}

impl TrainArgs {
    fn config(&self) -> Result<Config, anids::Error> {
        let mut c = Config::load(&self.config)?;
        Overrides {
            seed: self.seed,
            noise_mode: self.noise_mode.map(Into::into),
            freeze_generator: self.freeze_generator,
            steps: self.steps,
        }
        .apply(&mut c);
        Ok(c)
    }
}

#[derive(Debug, Args)]
struct ProbeArgs {
    /// Supplies the reference potential and probe settings.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    /// extxyz file; the first frame is probed.
    #[arg(long)]
    structure: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    noise_mode: Option<Mode>,
}

#[derive(Debug, Args)]
struct ReduceArgs {
    /// Optional; `train.sigma_p` sets the fixed noise scale.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn run(cli: Cli) -> Result<bool, anids::Error> {
    match cli.command {
        Command::GenData(a) => {
            let mut c = Config::load(&a.config)?;
            if let Some(s) = a.seed {
                c.set_seed(s);
            }
            let m = commands::gen_data(&c, &a.out)?;
            println!("wrote {} frames ({} train, {} val) to {}", m.n_frames, m.train.len(), m.val.len(), a.out.display());
        }
        Command::Pretrain(a) => {
            let c = a.config()?;
            let s = commands::pretrain(&c, &a.data, &a.out, a.checkpoint.as_deref())?;
            report(&s);
        }
        Command::Train(a) => {
            let c = a.config()?;
            let s = commands::train(&c, &a.data, &a.out, a.checkpoint.as_deref())?;
            report(&s);
        }
        Command::Probe(a) => {
            let mut c = Config::load(&a.config)?;
            if let Some(s) = a.seed {
                c.probe.seed = s;
            }
            if let Some(m) = a.noise_mode {
                c.train.noise_mode = m.into();
            }
            let r = commands::probe(&c, &a.checkpoint, &a.structure, &a.out)?;
            for atom in &r.atoms {
                let cos = atom.bond_cosine.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
                println!(
                    "atom {}: eigenvalues {:.4e} {:.4e} {:.4e}  smape {:.3e} {:.3e} {:.3e}  bond |cos| {cos}",
                    atom.atom,
                    atom.eigenvalues[0],
                    atom.eigenvalues[1],
                    atom.eigenvalues[2],
                    atom.smape[0],
                    atom.smape[1],
                    atom.smape[2]
                );
            }
            match r.spearman {
                Some(rho) => println!("spearman(eigenvalue, smape) = {rho:.4}"),
                None => println!("spearman(eigenvalue, smape) undefined"),
            }
        }
        Command::ReduceCheck(a) => {
            let sigma = match &a.config {
                Some(p) => Config::load(p)?.train.sigma_p,
                None => Config::default().train.sigma_p,
            };
            let mut ok = true;
            for c in commands::reduce_check(a.seed, sigma)? {
                let pass = c.passed();
                ok &= pass;
                println!("{} {}: {:.3e} (tolerance {:.1e})", if pass { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
            }
            return Ok(ok);
        }
    }
    Ok(true)
}

fn report(s: &commands::TrainSummary) {
    if let Some(last) = s.last {
        println!("steps {}..={}  final total loss {:.6e}", s.first_step, last.step, last.total);
    }
    if let Some(m) = s.metrics {
        println!(
            "validation: force MAE {:.4e}  force RMS {:.4e}  cosine {:.4}  energy MAE {:.4e}",
            m.force_mae, m.force_rms, m.force_cosine, m.energy_mae
        );
    }
    println!("checkpoint {}", s.checkpoint.display());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
