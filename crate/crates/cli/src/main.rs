use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pumrom::study::{self, ExperimentConfig, StudyKind};
use pumrom::Error;

#[derive(Parser)]
#[command(name = "pum-rom", version, about = "Component-based PUM reduced-order models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Localized training of the archetype bases
    Train(Opts),
    /// Residual-driven enrichment of stored or freshly trained bases
    Enrich(Opts),
    /// Reduced solve of one global configuration
    Solve(Opts),
    /// Linear transfer study
    StudyLinear(Opts),
    /// Nonlinear local and global error study
    StudyNonlinear(Opts),
    /// Enrichment study
    StudyEnrichment(Opts),
    /// Invariant checks
    Verify(Opts),
}

#[derive(Args)]
struct Opts {
    /// JSON experiment file
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use the coarse mesh
    #[arg(long)]
    fast: bool,
}

impl Opts {
    fn load(&self, kind: StudyKind) -> pumrom::Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        cfg.expect(kind)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        cfg.fast |= self.fast;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_solver_failure() {
        return 3;
    }
    match e {
        Error::Config(_) | Error::Json(_) | Error::Io(_) | Error::InvalidInput(_) | Error::MatrixFormat(_) | Error::Csv(_) => 2,
        _ => 3,
    }
}

fn print<T: serde::Serialize>(v: &T) -> pumrom::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn run(cli: Cli) -> pumrom::Result<bool> {
    match cli.command {
        Command::Train(o) => print(&study::cmd_train(&o.load(StudyKind::Train)?)?)?,
        Command::Enrich(o) => {
            let t = study::cmd_enrich(&o.load(StudyKind::Enrich)?)?;
            print(&t.iterations)?;
        }
        Command::Solve(o) => print(&study::cmd_solve(&o.load(StudyKind::Solve)?)?)?,
        Command::StudyLinear(o) => {
            let r = study::study_linear(&o.load(StudyKind::Linear)?)?;
            print(&r.effectivity_in_band)?;
            eprintln!("linear study finished in {:.1} s", r.seconds);
        }
        Command::StudyNonlinear(o) => {
            let r = study::study_nonlinear(&o.load(StudyKind::Nonlinear)?)?;
            print(&r.global)?;
            eprintln!("nonlinear study finished in {:.1} s", r.seconds);
        }
        Command::StudyEnrichment(o) => {
            let r = study::study_enrichment(&o.load(StudyKind::Enrichment)?)?;
            print(&(&r.improvement, &r.spearman))?;
        }
        Command::Verify(o) => {
            let r = study::verify(&o.load(StudyKind::Verify)?)?;
            for c in &r.checks {
                println!(
                    "{} {:<28} worst {:>11.4e} threshold {:>11.4e} ({:.2} s) {}",
                    if c.passed { "PASS" } else { "FAIL" },
                    c.name,
                    c.worst,
                    c.threshold,
                    c.seconds,
                    c.detail
                );
            }
            if let Some(n) = &r.note {
                eprintln!("note: {n}");
            }
            return Ok(r.passed);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
