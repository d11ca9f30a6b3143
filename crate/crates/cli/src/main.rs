//! `friedrichs`: decompositions, extensions, invariant checks and constant
//! estimates from the command line. Every command writes a JSON report with
//! the schema version and the parsed arguments into the output directory.

mod commands;
mod report;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use friedrichs::field::generate::BoundaryCondition;
use friedrichs::geometry::{gallery, Descriptor, Domain};
use friedrichs::lab::Inequality;
use friedrichs::Error;
use serde::Serialize;

#[derive(Parser, Debug, Serialize)]
#[command(name = "friedrichs", version, about = "Whitney extensions and Friedrichs/Gaffney constants on (ε,δ) domains")]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, env = "FRIEDRICHS_OUT_DIR", default_value = "friedrichs-out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Whitney decompositions of Ω and its complement, W₃ and reflected cubes.
    Decompose(DecomposeArgs),
    /// Extend a dumped field and report the extension estimates.
    Extend(ExtendArgs),
    /// Estimate a Friedrichs or Gaffney constant.
    Estimate(EstimateArgs),
    /// Run the invariant suite on one domain.
    Verify(VerifyArgs),
    /// Empirical (ε, δ) probe.
    Probe(ProbeArgs),
    /// Box-counting d-set check of the boundary.
    Dset(DsetArgs),
    /// Gaffney constants on Koch prefractals across levels.
    Study(StudyArgs),
    /// Exact p = 2 Gaffney constant of the collar space.
    Oracle(OracleArgs),
    /// Seeded fields with tiny div and curl.
    Witness(WitnessArgs),
    /// Generate a seeded collar field.
    GenField(GenFieldArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DomainArgs {
    /// Gallery tag: unit_square, l_shape, koch_snowflake, koch_cylinder_3d, unit_cube.
    #[arg(long, conflicts_with = "domain")]
    pub gallery: Option<String>,
    /// Prefractal level for the Koch entries.
    #[arg(long)]
    pub level: Option<i64>,
    /// Domain descriptor JSON instead of a gallery tag.
    #[arg(long)]
    pub domain: Option<PathBuf>,
}

impl DomainArgs {
    pub fn load(&self) -> Result<Domain, Error> {
        match (&self.gallery, &self.domain) {
            (Some(tag), None) => {
                let mut p = std::collections::BTreeMap::new();
                if let Some(k) = self.level {
                    p.insert("level".to_string(), k);
                }
                gallery(tag, &p)
            }
            (None, Some(path)) => {
                let d: Descriptor = serde_json::from_reader(std::fs::File::open(path)?)?;
                Domain::from_descriptor(&d)
            }
            _ => Err(Error::InvalidParam("give exactly one of --gallery or --domain".into())),
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Bc {
    #[value(alias = "normal_zero")]
    NormalZero,
    #[value(alias = "tangential_zero")]
    TangentialZero,
    None,
}

impl From<Bc> for BoundaryCondition {
    fn from(b: Bc) -> Self {
        match b {
            Bc::NormalZero => BoundaryCondition::NormalZero,
            Bc::TangentialZero => BoundaryCondition::TangentialZero,
            Bc::None => BoundaryCondition::None,
        }
    }
}

#[derive(ValueEnum, Debug, Clone, Copy, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Which {
    Friedrichs,
    Gaffney,
}

impl From<Which> for Inequality {
    fn from(w: Which) -> Self {
        match w {
            Which::Friedrichs => Inequality::Friedrichs,
            Which::Gaffney => Inequality::Gaffney,
        }
    }
}

/// Exponent in `(1, ∞]`; `inf` is accepted.
fn parse_p(s: &str) -> Result<f64, String> {
    let p = match s {
        "inf" | "infinity" | "∞" => f64::INFINITY,
        _ => s.parse::<f64>().map_err(|e| e.to_string())?,
    };
    if p >= 1.0 {
        Ok(p)
    } else {
        Err(format!("exponent must lie in [1, inf], got {s}"))
    }
}

fn ser_p<S: serde::Serializer>(p: &f64, s: S) -> Result<S::Ok, S::Error> {
    if p.is_finite() {
        s.serialize_f64(*p)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Args, Debug, Serialize)]
pub struct DecomposeArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long, default_value_t = 8)]
    pub max_level: u8,
}

#[derive(Args, Debug, Serialize)]
pub struct ExtendArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long)]
    pub max_level: u8,
    /// Field dump (`.json` sidecar or base path).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "2", value_parser = parse_p)]
    #[serde(serialize_with = "ser_p")]
    pub p: f64,
}

#[derive(Args, Debug, Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long, value_enum)]
    pub inequality: Which,
    #[arg(long, value_enum)]
    pub bc: Bc,
    #[arg(long, default_value = "2", value_parser = parse_p)]
    #[serde(serialize_with = "ser_p")]
    pub p: f64,
    #[arg(long, default_value_t = 16)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 7)]
    pub grid_level: u8,
    #[arg(long)]
    pub modes: Option<usize>,
    #[arg(long)]
    pub collar_width: Option<f64>,
    #[arg(long, default_value_t = 40)]
    pub ascent_iters: usize,
    #[arg(long, default_value_t = 3)]
    pub ascent_starts: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    /// Defaults to 7 in 2D and 4 in 3D.
    #[arg(long)]
    pub max_level: Option<u8>,
    /// Field grid level; defaults to two above the max level.
    #[arg(long)]
    pub grid_level: Option<u8>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Test hook: shrink one interior cube so that the size check fails.
    #[arg(long)]
    pub inject_fault: bool,
}

#[derive(Args, Debug, Serialize)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long, default_value_t = 8)]
    pub max_level: u8,
    #[arg(long, default_value_t = 2000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct DsetArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    /// Radii, strictly descending; six geometric radii by default.
    #[arg(long, value_delimiter = ',')]
    pub radii: Vec<f64>,
    #[arg(long, default_value_t = 200)]
    pub points: usize,
    #[arg(long, default_value_t = 200_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Serialize)]
pub struct StudyArgs {
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
    pub levels: Vec<i64>,
    #[arg(long, value_delimiter = ',', default_value = "1.5,2,3", value_parser = parse_p)]
    pub p: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', default_value = "normal-zero,tangential-zero")]
    pub bc: Vec<Bc>,
    #[arg(long, default_value_t = 8)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 7)]
    pub grid_level: u8,
    #[arg(long, default_value_t = 10)]
    pub ascent_iters: usize,
}

#[derive(Args, Debug, Serialize)]
pub struct OracleArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long, value_enum)]
    pub bc: Bc,
    #[arg(long, default_value_t = 6)]
    pub grid_level: u8,
    #[arg(long)]
    pub collar_width: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
pub struct WitnessArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long, value_enum)]
    pub bc: Bc,
    #[arg(long, default_value = "2", value_parser = parse_p)]
    #[serde(serialize_with = "ser_p")]
    pub p: f64,
    #[arg(long, default_value_t = 1000)]
    pub fields: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 6)]
    pub grid_level: u8,
}

#[derive(Args, Debug, Serialize)]
pub struct GenFieldArgs {
    #[command(flatten)]
    pub domain: DomainArgs,
    #[arg(long)]
    pub grid_level: u8,
    #[arg(long, value_enum, default_value = "none")]
    pub bc: Bc,
    #[arg(long, default_value_t = 4)]
    pub modes: usize,
    /// Collar width for bc fields; defaults as in `estimate`.
    #[arg(long)]
    pub collar_width: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write a CSV with one row per node.
    #[arg(long)]
    pub csv: bool,
    /// Base name of the dump inside the output directory.
    #[arg(long, default_value = "field")]
    pub name: String,
}

/// Failure with its exit code: 1 usage or configuration, 2 invariant
/// violation, 3 numerical failure.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Disconnected
            | Error::ChainDisconnected
            | Error::NoReflection(_)
            | Error::InconsistentMembership(_) => 2,
            Error::Numerical(_) | Error::SingularConstraint(_) | Error::IsolatedNodes(_) => 3,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
