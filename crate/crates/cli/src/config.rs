//! Command-line options and the validated run configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use modalpf::sampling::InitialConditionModel;
use modalpf::Marginal;

use crate::error::CliError;
use crate::report::Format;

/// Tolerance names accepted by `--tol`.
pub const TOLERANCE_NAMES: [&str; 6] = [
    "atol",
    "conjugacy",
    "distinct",
    "divisor",
    "resonance",
    "rtol",
];

#[derive(Debug, Parser)]
#[command(
    name = "modalpf",
    version,
    about = "Modal participation analysis near an equilibrium"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Eigenvalues with left and right eigenvectors.
    Eig,
    /// Mode-in-state participation factors (nonlinear systems via the normal form).
    Pf,
    /// Monte-Carlo mode-in-state participation factors.
    PfMc,
    /// State-in-mode participation factors, closed form and Monte-Carlo.
    PfSim,
    /// Eigenvalue resonances and the applicable linearization theorem.
    Resonance,
    /// Poincaré–Dulac normal form coefficients.
    Normalform,
    /// Integrate a trajectory.
    Simulate,
    /// Check the normalizing map along a trajectory.
    Verify,
    /// Nonlinear participation estimates over an amplitude ladder.
    Empirical,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Eig => "eig",
            Command::Pf => "pf",
            Command::PfMc => "pf-mc",
            Command::PfSim => "pf-sim",
            Command::Resonance => "resonance",
            Command::Normalform => "normalform",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Empirical => "empirical",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelChoice {
    /// Uniform on the sphere of radius `scale`.
    Sphere,
    /// Independent `N(0, scale²)` coordinates.
    Gaussian,
    /// Independent `±scale` coordinates.
    Rademacher,
    /// Independent uniform coordinates on `[−scale, scale]`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodChoice {
    /// RK45 for widely spread real parts, RK4 otherwise.
    Auto,
    Rk4,
    Rk45,
}

#[derive(Debug, Clone, Args)]
pub struct Options {
    /// System definition (TOML).
    #[arg(long, global = true)]
    pub system: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Integrand evaluations per Monte-Carlo estimate.
    #[arg(long, global = true, default_value_t = 100_000)]
    pub samples: usize,
    /// Highest resonance order searched.
    #[arg(long, global = true, default_value_t = 10)]
    pub max_order: u32,
    /// Normal form truncation order.
    #[arg(long, global = true, default_value_t = 4)]
    pub order: u32,
    /// Amplitudes for `empirical`, comma separated.
    #[arg(long, global = true, value_delimiter = ',', default_values_t = vec![0.2, 0.1, 0.05, 0.025])]
    pub epsilon: Vec<f64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    pub format: Format,
    /// Worker threads for sampling (defaults to all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Merge conjugate mode pairs into real columns.
    #[arg(long, global = true)]
    pub pair_sum: bool,
    /// Override a tolerance, e.g. `--tol conjugacy=1e-8`.
    #[arg(long, global = true, value_name = "NAME=VALUE")]
    pub tol: Vec<String>,
    #[arg(long, global = true, value_enum, default_value_t = ModelChoice::Sphere)]
    pub model: ModelChoice,
    /// Scale of the initial-condition model.
    #[arg(long, global = true, default_value_t = 1.0)]
    pub scale: f64,
    /// Plain i.i.d. sampling instead of sign-reflected groups.
    #[arg(long, global = true)]
    pub no_antithetic: bool,
    /// Initial state, comma separated.
    #[arg(
        long,
        global = true,
        value_delimiter = ',',
        allow_negative_numbers = true
    )]
    pub x0: Option<Vec<f64>>,
    #[arg(long, global = true, default_value_t = 2.0)]
    pub t_end: f64,
    #[arg(long, global = true, default_value_t = 1e-3)]
    pub dt: f64,
    #[arg(long, global = true, value_enum, default_value_t = MethodChoice::Auto)]
    pub method: MethodChoice,
    /// Write the report here (atomically) instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub samples: usize,
    pub max_order: u32,
    pub order: u32,
    pub epsilons: Vec<f64>,
    pub tolerances: BTreeMap<String, f64>,
    pub format: Format,
    pub workers: Option<usize>,
    pub pair_sum: bool,
    pub model: ModelChoice,
    pub scale: f64,
    pub antithetic: bool,
    pub x0: Option<Vec<f64>>,
    pub t_end: f64,
    pub dt: f64,
    pub method: MethodChoice,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            samples: 100_000,
            max_order: 10,
            order: 4,
            epsilons: vec![0.2, 0.1, 0.05, 0.025],
            tolerances: BTreeMap::new(),
            format: Format::Table,
            workers: None,
            pair_sum: false,
            model: ModelChoice::Sphere,
            scale: 1.0,
            antithetic: true,
            x0: None,
            t_end: 2.0,
            dt: 1e-3,
            method: MethodChoice::Auto,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!(
            "--{name}: must be positive, got {v}"
        )))
    }
}

impl RunConfig {
    pub fn from_options(o: &Options) -> Result<Self, CliError> {
        let mut tolerances = BTreeMap::new();
        for item in &o.tol {
            let (name, value) = item.split_once('=').ok_or_else(|| {
                CliError::Config(format!("--tol: expected NAME=VALUE, got {item:?}"))
            })?;
            let name = name.trim();
            if !TOLERANCE_NAMES.contains(&name) {
                return Err(CliError::Config(format!(
                    "--tol: unknown tolerance {name:?} (known: {})",
                    TOLERANCE_NAMES.join(", ")
                )));
            }
            let value: f64 = value.trim().parse().map_err(|_| {
                CliError::Config(format!("--tol {name}: {value:?} is not a number"))
            })?;
            tolerances.insert(name.to_string(), value);
        }
        let cfg = RunConfig {
            seed: o.seed,
            samples: o.samples,
            max_order: o.max_order,
            order: o.order,
            epsilons: o.epsilon.clone(),
            tolerances,
            format: o.format,
            workers: o.workers,
            pair_sum: o.pair_sum,
            model: o.model,
            scale: o.scale,
            antithetic: !o.no_antithetic,
            x0: o.x0.clone(),
            t_end: o.t_end,
            dt: o.dt,
            method: o.method,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.samples == 0 {
            return Err(CliError::Config("--samples: must be positive".into()));
        }
        if self.max_order == 0 || self.order == 0 {
            return Err(CliError::Config(
                "--max-order/--order: must be positive".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("--workers: must be positive".into()));
        }
        if self.epsilons.is_empty() {
            return Err(CliError::Config(
                "--epsilon: at least one amplitude is needed".into(),
            ));
        }
        for &e in &self.epsilons {
            positive("epsilon", e)?;
        }
        for (name, &v) in &self.tolerances {
            positive(&format!("tol {name}"), v)?;
        }
        positive("scale", self.scale)?;
        positive("t-end", self.t_end)?;
        positive("dt", self.dt)?;
        if let Some(x0) = &self.x0 {
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config("--x0: entries must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn tol(&self, name: &str) -> Option<f64> {
        self.tolerances.get(name).copied()
    }

    pub fn model(&self, n: usize) -> Result<InitialConditionModel, CliError> {
        let s = self.scale;
        Ok(match self.model {
            ModelChoice::Sphere => InitialConditionModel::uniform_sphere(n, s)?,
            ModelChoice::Gaussian => InitialConditionModel::product(n, Marginal::Gaussian(s))?,
            ModelChoice::Rademacher => InitialConditionModel::product(n, Marginal::Rademacher(s))?,
            ModelChoice::Uniform => InitialConditionModel::product(n, Marginal::Uniform(s))?,
        })
    }
}
