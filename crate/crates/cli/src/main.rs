mod commands;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use iqmm_core::config::{model_to_json, parse_model};
use iqmm_core::{Error, InventoryGrid, MarketModel};

/// Embedded model configurations, keyed by the figure they reproduce.
pub const EMBEDDED: [(&str, &str); 3] = [
    ("price_reading_a", include_str!("../configs/price_reading_a.json")),
    ("price_reading_b", include_str!("../configs/price_reading_b.json")),
    ("adverse_selection", include_str!("../configs/adverse_selection.json")),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Baseline HJB, first-order correction and corrected quotes.
    Solve,
    /// Quadratic-Hamiltonian constants, quotes and adjustments.
    Quadratic,
    /// Monte Carlo estimate of a policy's objective.
    Simulate,
    /// Bid/ask adjustment curves for the embedded configurations.
    Figures,
    /// Acceptance checks.
    Validate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyName {
    Baseline,
    Corrected,
    Quadratic,
    QuadraticCorrected,
    None,
}

#[derive(Debug, Parser)]
#[command(name = "iqmm", version, about = "Optimal quote ladders under informational risk")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,

    /// Model configuration (JSON). `figures` takes an object keyed by
    /// figure name; missing keys keep the embedded configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,

    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,

    /// Discount rate override (per day).
    #[arg(long)]
    pub rho: Option<f64>,

    /// Inventory bound in multiples of the smallest size.
    #[arg(long)]
    pub qmax: Option<usize>,

    /// Informational-risk scale override.
    #[arg(long)]
    pub epsilon: Option<f64>,

    #[arg(long, value_enum, default_value = "baseline")]
    pub policy: PolicyName,

    /// Monte Carlo paths.
    #[arg(long)]
    pub paths: Option<usize>,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Initial inventory (M); must be a grid node.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub q0: f64,

    /// Skip the Monte Carlo checks.
    #[arg(long)]
    pub fast: bool,

    /// Print the effective configuration and exit.
    #[arg(long)]
    pub dump_config: bool,

    /// Write every event of the first N paths to paths.csv.
    #[arg(long, value_name = "N")]
    pub dump_paths: Option<usize>,

    /// Corrupt an embedded constant (spread | kappa) to exercise a failing check.
    #[arg(long, hide = true)]
    pub corrupt: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum Failure {
    #[error("{0} check(s) failed")]
    Checks(usize),
    #[error("invalid configuration:\n{}", .0.iter().map(|v| format!("  - {v}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<String>),
    #[error("{0}")]
    Solver(String),
    #[error("{0}")]
    Io(String),
}

impl Failure {
    pub fn code(&self) -> u8 {
        match self {
            Failure::Checks(_) => 1,
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Io(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Failure::Config(vec![msg.into()])
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Io(format!("{}: {e}", path.display()))
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidModel(v) => Failure::Config(v),
            e @ (Error::Config(_)
            | Error::Json(_)
            | Error::FamilyMismatch(_)
            | Error::LengthMismatch { .. }) => Failure::config(e.to_string()),
            e => Failure::Solver(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, Failure>;

impl Cli {
    fn read(&self, path: &Path) -> CliResult<String> {
        std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))
    }

    fn overridden(&self, mut m: MarketModel) -> CliResult<MarketModel> {
        if let Some(rho) = self.rho {
            m.rho = rho;
        }
        if let Some(eps) = self.epsilon {
            m.epsilon = eps;
        }
        m.validate()?;
        Ok(m)
    }

    /// The single model of `solve`, `quadratic` and `simulate`; the first
    /// embedded configuration unless `--config` is given.
    pub fn model(&self) -> CliResult<MarketModel> {
        let text = match &self.config {
            Some(p) => self.read(p)?,
            None => EMBEDDED[0].1.to_string(),
        };
        self.overridden(parse_model(&text)?)
    }

    /// The named models of `figures`, in embedded order.
    pub fn model_set(&self) -> CliResult<Vec<(&'static str, MarketModel)>> {
        let mut over = match &self.config {
            Some(p) => {
                let v: serde_json::Value =
                    serde_json::from_str(&self.read(p)?).map_err(|e| Failure::config(e.to_string()))?;
                match v {
                    serde_json::Value::Object(map) => map,
                    _ => return Err(Failure::config("figure configuration must be a JSON object")),
                }
            }
            None => serde_json::Map::new(),
        };
        let mut out = Vec::new();
        let mut violations = Vec::new();
        for (name, text) in EMBEDDED {
            let parsed = match over.remove(name) {
                Some(v) => parse_model(&v.to_string()),
                None => parse_model(text),
            };
            match parsed.map_err(Failure::from).and_then(|m| self.overridden(m)) {
                Ok(m) => out.push((name, m)),
                Err(Failure::Config(v)) => violations.extend(v.into_iter().map(|s| format!("{name}: {s}"))),
                Err(e) => return Err(e),
            }
        }
        violations.extend(over.keys().map(|k| format!("unknown configuration `{k}`")));
        if violations.is_empty() {
            Ok(out)
        } else {
            Err(Failure::Config(violations))
        }
    }

    /// `--qmax` grid, or one sized from the model.
    pub fn grid(&self, m: &MarketModel) -> CliResult<InventoryGrid> {
        match self.qmax {
            Some(0) => Err(Failure::config("qmax must be positive")),
            Some(n) => Ok(InventoryGrid::new(m.ladder.smallest(), n)),
            None => Ok(InventoryGrid::for_model(m)?),
        }
    }
}

fn dump_config(cli: &Cli) -> CliResult<()> {
    let text = match cli.command {
        Command::Figures | Command::Validate => {
            let mut map = serde_json::Map::new();
            for (name, m) in cli.model_set()? {
                let v: serde_json::Value = serde_json::from_str(&model_to_json(&m)).expect("config is JSON");
                map.insert(name.to_string(), v);
            }
            serde_json::to_string_pretty(&map).expect("config serializes")
        }
        _ => model_to_json(&cli.model()?),
    };
    println!("{text}");
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    if cli.dump_config {
        return dump_config(cli);
    }
    match cli.command {
        Command::Solve => commands::solve(cli),
        Command::Quadratic => commands::quadratic(cli),
        Command::Simulate => commands::simulate(cli),
        Command::Figures => commands::figures(cli),
        Command::Validate => commands::validate(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("iqmm: {e}");
            ExitCode::from(e.code())
        }
    }
}
