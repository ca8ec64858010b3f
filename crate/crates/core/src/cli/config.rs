use std::path::{Path, PathBuf};

use clap::Parser;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use multipair_bell::bell::QuadratureOrders;
use multipair_bell::optimize::OptimizerSpec;
use multipair_bell::study::{Command, LossCase, ModePolicy, Options};
use multipair_bell::vote::{EmptyEventPolicy, TernaryConvention, VoteRule};
use multipair_bell::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "multipair-bell", version, about = "CH-inequality sweeps for vote-binarized multi-pair sources")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// JSON file; every flag below overrides the key of the same name.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compare the results against the expected behaviour; exit 3 on a miss.
    #[arg(long)]
    pub check: bool,
    #[arg(long, env = "MULTIPAIR_BELL_WORKERS")]
    pub workers: Option<usize>,
    #[arg(long)]
    pub results_dir: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    pub pairs: Option<Vec<u32>>,
    #[arg(long, value_delimiter = ',')]
    pub rules: Option<Vec<VoteRule>>,
    #[arg(long, value_delimiter = ',')]
    pub noise_rules: Option<Vec<VoteRule>>,
    #[arg(long, value_delimiter = ',')]
    pub mus: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub etas: Option<Vec<f64>>,
    #[arg(long, value_parser = kebab::<ModePolicy>)]
    pub settings: Option<ModePolicy>,
    #[arg(long, value_parser = kebab::<EmptyEventPolicy>)]
    pub empty_event: Option<EmptyEventPolicy>,
    #[arg(long, value_parser = kebab::<TernaryConvention>)]
    pub ternary: Option<TernaryConvention>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub starts: Option<usize>,
    #[arg(long)]
    pub tolerance: Option<f64>,
}

fn kebab<T: for<'de> Deserialize<'de>>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub pairs: Option<Vec<u32>>,
    pub rules: Option<Vec<VoteRule>>,
    pub noise_rules: Option<Vec<VoteRule>>,
    pub mus: Option<Vec<f64>>,
    pub etas: Option<Vec<f64>>,
    pub cases: Option<Vec<LossCase>>,
    pub settings: Option<ModePolicy>,
    pub empty_event: Option<EmptyEventPolicy>,
    pub ternary: Option<TernaryConvention>,
    pub optimizer: Option<OptimizerSpec>,
    pub quadrature: Option<QuadratureOrders>,
    pub results_dir: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Fully resolved run description. Everything here except `out`,
/// `results_dir` and `workers` enters the configuration hash.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rules: Option<Vec<VoteRule>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_rules: Option<Vec<VoteRule>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mus: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub etas: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cases: Option<Vec<LossCase>>,
    pub settings: ModePolicy,
    pub empty_event: EmptyEventPolicy,
    pub ternary: TernaryConvention,
    pub optimizer: OptimizerSpec,
    pub quadrature: Option<QuadratureOrders>,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub results_dir: PathBuf,
    #[serde(skip)]
    pub workers: Option<usize>,
}

/// Keys (besides the shared ones) that a command reads.
fn keys(command: Command) -> &'static [&'static str] {
    match command {
        Command::FigChScaling => &["pairs", "rules"],
        Command::FigNoise => &["pairs", "rules"],
        Command::FigPoisson => &["mus", "rules", "noise_rules"],
        Command::FigEfficiency => &["pairs", "rules", "etas"],
        Command::LossStudy => &["pairs", "cases"],
        Command::FigIndist => &["pairs", "rules", "noise_rules", "quadrature"],
        Command::Entanglement => &["pairs"],
        Command::Summary => &[],
    }
}

fn rules(names: &[&str]) -> Vec<VoteRule> {
    names.iter().map(|s| s.parse().expect("built-in rule")).collect()
}

fn range(lo: u32, hi: u32) -> Vec<u32> {
    (lo..=hi).collect()
}

fn default_pairs(command: Command) -> Vec<u32> {
    match command {
        Command::FigChScaling => range(1, 24),
        Command::FigNoise | Command::FigIndist => range(1, 16),
        Command::FigEfficiency => range(1, 5),
        Command::LossStudy => range(2, 20),
        Command::Entanglement => {
            let mut p: Vec<u32> = (1..=100).map(|k| 2 * k).collect();
            p.extend([500, 1000, 10_000, 100_000, 1_000_000]);
            p
        }
        Command::FigPoisson | Command::Summary => Vec::new(),
    }
}

fn default_rules(command: Command) -> Vec<VoteRule> {
    match command {
        Command::FigChScaling | Command::FigNoise => rules(&["majority", "2/3", "3/4", "unanimity"]),
        Command::FigIndist => rules(&["majority", "3/4", "unanimity"]),
        _ => rules(&["majority", "unanimity"]),
    }
}

fn default_noise_rules(command: Command) -> Vec<VoteRule> {
    match command {
        Command::FigIndist => rules(&["majority", "unanimity"]),
        _ => rules(&["majority"]),
    }
}

fn default_mus() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 16.0, 20.0, 24.0]
}

fn default_etas() -> Vec<f64> {
    vec![0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 1.0]
}

impl RunConfig {
    pub fn resolve(cli: &Cli) -> Result<Self> {
        let file = match &cli.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let c = cli.command;
        let used = keys(c);
        let given = [
            ("pairs", file.pairs.is_some() || cli.pairs.is_some()),
            ("rules", file.rules.is_some() || cli.rules.is_some()),
            ("noise_rules", file.noise_rules.is_some() || cli.noise_rules.is_some()),
            ("mus", file.mus.is_some() || cli.mus.is_some()),
            ("etas", file.etas.is_some() || cli.etas.is_some()),
            ("cases", file.cases.is_some()),
            ("quadrature", file.quadrature.is_some()),
        ];
        for (key, present) in given {
            if present && !used.contains(&key) {
                return Err(Error::Config(format!("`{key}` does not apply to {c}")));
            }
        }
        let pick = |key: &str| used.contains(&key);
        let mut optimizer = file.optimizer.unwrap_or_default();
        if let Some(g) = cli.grid_points {
            optimizer.grid_points = g;
        }
        if let Some(s) = cli.starts {
            optimizer.starts = s;
        }
        if let Some(t) = cli.tolerance {
            optimizer.tolerance = t;
        }
        optimizer.validate()?;
        let results_dir = cli.results_dir.clone().or(file.results_dir).unwrap_or_else(|| PathBuf::from("results"));
        let out = cli
            .out
            .clone()
            .or(file.out)
            .unwrap_or_else(|| results_dir.join(format!("{c}.csv")));
        let workers = cli.workers.or(file.workers);
        if workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        let cfg = RunConfig {
            command: c,
            pairs: pick("pairs").then(|| cli.pairs.clone().or(file.pairs).unwrap_or_else(|| default_pairs(c))),
            rules: pick("rules").then(|| cli.rules.clone().or(file.rules).unwrap_or_else(|| default_rules(c))),
            noise_rules: pick("noise_rules")
                .then(|| cli.noise_rules.clone().or(file.noise_rules).unwrap_or_else(|| default_noise_rules(c))),
            mus: pick("mus").then(|| cli.mus.clone().or(file.mus).unwrap_or_else(default_mus)),
            etas: pick("etas").then(|| cli.etas.clone().or(file.etas).unwrap_or_else(default_etas)),
            cases: pick("cases").then(|| file.cases.unwrap_or_else(LossCase::defaults)),
            settings: cli.settings.or(file.settings).unwrap_or_default(),
            empty_event: cli.empty_event.or(file.empty_event).unwrap_or_default(),
            ternary: cli.ternary.or(file.ternary).unwrap_or_default(),
            optimizer,
            quadrature: file.quadrature,
            out,
            results_dir,
            workers,
        };
        cfg.check_values()?;
        Ok(cfg)
    }

    fn check_values(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if let Some(p) = &self.pairs {
            if p.is_empty() || p.contains(&0) {
                return bad("pairs must be a nonempty list of positive integers".into());
            }
        }
        if let Some(m) = &self.mus {
            if m.is_empty() || m.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
                return bad("mus must be a nonempty list of positive numbers".into());
            }
        }
        if let Some(e) = &self.etas {
            if e.is_empty() || e.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
                return bad("etas must lie in (0, 1]".into());
            }
        }
        if matches!(&self.rules, Some(r) if r.is_empty()) {
            return bad("rules must not be empty".into());
        }
        Ok(())
    }

    pub fn options(&self) -> Options {
        Options {
            optimizer: self.optimizer,
            empty_event: self.empty_event,
            ternary: self.ternary,
            settings: self.settings,
            quadrature: self.quadrature,
        }
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
