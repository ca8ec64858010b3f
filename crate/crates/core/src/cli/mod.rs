mod config;
mod summary;
mod table;

use std::process::ExitCode;

use clap::Parser;

use multipair_bell::entanglement::ratio_report;
use multipair_bell::study::{self, Check, Command};
use multipair_bell::Error;

pub use config::{Cli, RunConfig};
use table::Table;

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_CHECK: u8 = 3;

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match RunConfig::resolve(&cli) {
        Ok(c) => c,
        Err(e) => return fail(&e),
    };
    if let Some(n) = cfg.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: worker pool: {e}");
            return ExitCode::FAILURE;
        }
    }
    let (table, checks) = match run(&cfg) {
        Ok(r) => r,
        Err(e) => return fail(&e),
    };
    if let Err(e) = table.write(&cfg.out) {
        return fail(&e);
    }
    println!("wrote {}", cfg.out.display());
    for note in &table.notes {
        println!("{note}");
    }
    if cli.check {
        for c in &checks {
            println!("{c}");
        }
        if checks.iter().any(|c| !c.passed) {
            return ExitCode::from(EXIT_CHECK);
        }
    }
    ExitCode::SUCCESS
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) | Error::InvalidInput(_) => ExitCode::from(EXIT_CONFIG),
        _ => ExitCode::FAILURE,
    }
}

fn run(cfg: &RunConfig) -> multipair_bell::Result<(Table, Vec<Check>)> {
    let opts = cfg.options();
    let pairs = cfg.pairs.as_deref().unwrap_or_default();
    let rules = cfg.rules.as_deref().unwrap_or_default();
    let noise_rules = cfg.noise_rules.as_deref().unwrap_or_default();
    Ok(match cfg.command {
        Command::FigChScaling => {
            let rows = study::ch_scaling(pairs, rules, &opts)?;
            (table::scaling(cfg, &rows)?, study::check_scaling(&rows))
        }
        Command::FigNoise => {
            let rows = study::noise_sweep(pairs, rules, &opts)?;
            (table::noise(cfg, &rows)?, study::check_noise(&rows))
        }
        Command::FigPoisson => {
            let rows = study::poisson_sweep(cfg.mus.as_deref().unwrap_or_default(), rules, noise_rules, &opts)?;
            (table::poisson(cfg, &rows)?, study::check_poisson(&rows))
        }
        Command::FigEfficiency => {
            let etas = cfg.etas.as_deref().unwrap_or_default();
            let curves = study::efficiency_curves(pairs, rules, etas, &opts)?;
            let critical = study::critical_efficiencies(pairs, rules, &opts)?;
            (table::efficiency(cfg, &curves, &critical)?, study::check_efficiency(&critical))
        }
        Command::LossStudy => {
            let rows = study::loss_study(pairs, cfg.cases.as_deref().unwrap_or_default(), &opts)?;
            (table::loss(cfg, &rows)?, study::check_loss(&rows))
        }
        Command::FigIndist => {
            let rows = study::indist_study(pairs, rules, noise_rules, &opts)?;
            (table::indist(cfg, &rows)?, study::check_indist(&rows))
        }
        Command::Entanglement => {
            let rows = ratio_report(pairs)?;
            (table::entanglement(cfg, &rows)?, study::check_entanglement(&rows))
        }
        Command::Summary => (summary::summarize(cfg)?, Vec::new()),
    })
}
