//! Run configuration: a flat `key = value` file merged with command-line
//! flags (flags win), validated before any computation starts.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Subcommand, ValueEnum};
use genbrown::mode_algebra::{lame_coefficient, CoefficientTensor};
use genbrown::walk::Timeline;
use serde_json::{json, Value};

use crate::RunError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Parabolic solve: Monte Carlo, spectral oracle and an optional finite-difference check.
    SolveCauchy,
    /// Dirichlet problem by first-exit Monte Carlo on a box of `grid` cells per axis.
    SolveElliptic,
    /// Closed-form walk factors against the exact propagator over successive step halvings.
    ModeFactor,
    /// Run one of the built-in validators.
    Validate {
        #[arg(value_enum)]
        target: ValidateTarget,
    },
    /// Lame system solve parameterized by Poisson ratio.
    LameDemo,
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::SolveCauchy => "solve-cauchy".into(),
            Command::SolveElliptic => "solve-elliptic".into(),
            Command::ModeFactor => "mode-factor".into(),
            Command::Validate { target } => format!("validate {}", target.name()),
            Command::LameDemo => "lame-demo".into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ValidateTarget {
    Clt,
    Ito,
    Density,
}

impl ValidateTarget {
    pub fn name(&self) -> &'static str {
        match self {
            ValidateTarget::Clt => "clt",
            ValidateTarget::Ito => "ito",
            ValidateTarget::Density => "density",
        }
    }
}

/// Flags shared by every command. Each flag has a config-file key equal to its long name.
#[derive(Clone, Debug, Default, Args)]
pub struct Flags {
    /// Flat `key = value` config file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `lame`, `scalar`, or a path to a tensor text file.
    #[arg(long, global = true)]
    pub tensor: Option<String>,
    /// Poisson ratio for the Lame family.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub nu: Option<f64>,
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Truncation radius K.
    #[arg(long = "trunc-k", global = true)]
    pub trunc_k: Option<usize>,
    /// Grid points (or cells) per axis.
    #[arg(long, global = true)]
    pub grid: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[arg(long, global = true)]
    pub time: Option<f64>,
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    /// Mandatory; there is no clock-derived default.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on this value.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Spectral CSV of initial or boundary data; a seeded random field is used otherwise.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Evaluation points per axis for solve-cauchy and lame-demo.
    #[arg(long, global = true)]
    pub eval: Option<usize>,
    /// Walk steps for `validate density`.
    #[arg(long, global = true)]
    pub steps: Option<usize>,
    /// Step-halving levels for mode-factor.
    #[arg(long, global = true)]
    pub levels: Option<usize>,
    /// Scalar elliptic boundary data: `linear` (g = x1), `indicator` (x1 > 1/2) or `input`.
    #[arg(long, global = true)]
    pub boundary: Option<String>,
    /// Experimental system reading of the exit-time solver.
    #[arg(long, global = true)]
    pub system: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TensorSource {
    Lame,
    Scalar,
    File(PathBuf),
}

impl TensorSource {
    fn label(&self) -> String {
        match self {
            TensorSource::Lame => "lame".into(),
            TensorSource::Scalar => "scalar".into(),
            TensorSource::File(p) => p.display().to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Boundary {
    Linear,
    Indicator,
    Input,
}

/// Fully resolved and validated configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub tensor_source: TensorSource,
    pub tensor: CoefficientTensor,
    pub nu: f64,
    /// Lame coefficient `a = 1 - nu (n - 1)` when the Lame family is used.
    pub lame_a: Option<f64>,
    pub dim: usize,
    pub trunc_k: usize,
    pub grid: Option<usize>,
    pub dt: f64,
    pub time: f64,
    pub samples: usize,
    pub seed: u64,
    pub workers: Option<usize>,
    pub out: PathBuf,
    pub input: Option<PathBuf>,
    pub eval: usize,
    pub steps: usize,
    pub levels: usize,
    pub boundary: Boundary,
    pub system: bool,
    pub config_file: Option<PathBuf>,
}

const KEYS: &[&str] = &[
    "tensor", "nu", "dim", "trunc-k", "grid", "dt", "time", "samples", "seed", "workers", "out", "input", "eval",
    "steps", "levels", "boundary", "system",
];

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, RunError> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| RunError::config(format!("config line {}: expected `key = value`", no + 1)))?;
        let key = key.trim().replace('_', "-");
        if !KEYS.contains(&key.as_str()) {
            return Err(RunError::config(format!("config line {}: unknown key `{key}`", no + 1)));
        }
        if map.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(RunError::config(format!("config line {}: duplicate key `{key}`", no + 1)));
        }
    }
    Ok(map)
}

struct Layer<'a> {
    file: &'a BTreeMap<String, String>,
}

impl Layer<'_> {
    fn pick<T: FromStr>(&self, key: &str, flag: Option<T>) -> Result<Option<T>, RunError>
    where
        T::Err: Display,
    {
        if flag.is_some() {
            return Ok(flag);
        }
        self.file
            .get(key)
            .map(|s| {
                s.parse::<T>()
                    .map_err(|e| RunError::config(format!("config key `{key}`: cannot parse `{s}`: {e}")))
            })
            .transpose()
    }
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), RunError> {
    if ok {
        Ok(())
    } else {
        Err(RunError::config(msg()))
    }
}

impl RunConfig {
    pub fn resolve(command: Command, flags: Flags) -> Result<Self, RunError> {
        let file = match &flags.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| RunError::config(format!("cannot read config {}: {e}", path.display())))?;
                parse_config_text(&text)?
            }
            None => BTreeMap::new(),
        };
        let layer = Layer { file: &file };

        let seed = layer
            .pick("seed", flags.seed)?
            .ok_or_else(|| RunError::config("a seed is required (--seed or `seed = ...` in the config file)"))?;

        let default_tensor = match command {
            Command::LameDemo => "lame",
            _ => "scalar",
        };
        let tensor_name = layer.pick("tensor", flags.tensor)?.unwrap_or_else(|| default_tensor.into());
        let tensor_source = match tensor_name.as_str() {
            "lame" => TensorSource::Lame,
            "scalar" => TensorSource::Scalar,
            path => TensorSource::File(PathBuf::from(path)),
        };
        check(command != Command::LameDemo || tensor_source == TensorSource::Lame, || {
            "lame-demo always uses the Lame family".into()
        })?;

        let file_tensor = match &tensor_source {
            TensorSource::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| RunError::config(format!("cannot read tensor {}: {e}", path.display())))?;
                Some(CoefficientTensor::parse(&text).map_err(|e| RunError::config(format!("tensor file: {e}")))?)
            }
            _ => None,
        };
        let default_dim = match (&file_tensor, command) {
            (Some(t), _) => t.dim(),
            (None, Command::Validate { .. }) => 1,
            (None, _) => 2,
        };
        let dim = layer.pick("dim", flags.dim)?.unwrap_or(default_dim);
        check((1..=4).contains(&dim), || format!("dim must lie in 1..=4, got {dim}"))?;

        let nu = layer.pick("nu", flags.nu)?.unwrap_or(0.0);
        check(nu.is_finite(), || format!("nu must be finite, got {nu}"))?;
        let mut lame_a = None;
        let tensor = match (&tensor_source, file_tensor) {
            (TensorSource::Lame, _) => {
                let a = lame_coefficient(dim, nu);
                check(a > 0.0, || format!("nu = {nu} gives a = 1 - nu (n - 1) = {a}, which is not elliptic"))?;
                lame_a = Some(a);
                CoefficientTensor::lame(dim, a)
            }
            (TensorSource::Scalar, _) => CoefficientTensor::scalar(dim, 1.0),
            (TensorSource::File(_), Some(t)) => {
                check(t.dim() == dim, || format!("tensor file has dimension {}, but dim = {dim}", t.dim()))?;
                t
            }
            (TensorSource::File(_), None) => unreachable!("file tensors are loaded above"),
        };

        let trunc_k = layer.pick("trunc-k", flags.trunc_k)?.unwrap_or(8);
        check(trunc_k <= 16, || format!("trunc-k must be at most 16, got {trunc_k}"))?;
        let grid = layer.pick("grid", flags.grid)?.or(match command {
            Command::LameDemo => Some((2 * trunc_k + 2).max(32)),
            _ => None,
        });
        let dt = layer.pick("dt", flags.dt)?.unwrap_or(1e-3);
        check(dt > 0.0 && dt <= 1.0, || format!("dt must lie in (0, 1], got {dt}"))?;
        let time = layer.pick("time", flags.time)?.unwrap_or(0.01);
        check(time.is_finite() && time >= 0.0, || format!("time must be non-negative, got {time}"))?;
        let samples = layer.pick("samples", flags.samples)?.unwrap_or(10_000);
        let workers = layer.pick("workers", flags.workers)?;
        check(workers != Some(0), || "workers must be at least 1".into())?;
        let out = layer.pick("out", flags.out)?.unwrap_or_else(|| PathBuf::from("genbrown-out"));
        let input = layer.pick("input", flags.input)?;
        let eval = layer.pick("eval", flags.eval)?.unwrap_or(4);
        check((1..=64).contains(&eval), || format!("eval must lie in 1..=64, got {eval}"))?;
        let steps = layer.pick("steps", flags.steps)?.unwrap_or(8);
        let levels = layer.pick("levels", flags.levels)?.unwrap_or(3);
        check((1..=8).contains(&levels), || format!("levels must lie in 1..=8, got {levels}"))?;
        let boundary_name = layer.pick("boundary", flags.boundary)?;
        let system = flags.system || layer.pick::<bool>("system", None)?.unwrap_or(false);
        let boundary = match boundary_name.as_deref() {
            None if input.is_some() => Boundary::Input,
            None | Some("linear") => Boundary::Linear,
            Some("indicator") => Boundary::Indicator,
            Some("input") => Boundary::Input,
            Some(other) => return Err(RunError::config(format!("unknown boundary `{other}`"))),
        };

        let cfg = RunConfig {
            command,
            tensor_source,
            tensor,
            nu,
            lame_a,
            dim,
            trunc_k,
            grid,
            dt,
            time,
            samples,
            seed,
            workers,
            out,
            input,
            eval,
            steps,
            levels,
            boundary,
            system,
            config_file: flags.config,
        };
        cfg.validate_for_command()?;
        Ok(cfg)
    }

    fn validate_for_command(&self) -> Result<(), RunError> {
        let even_samples = || {
            check(self.samples >= 2 && self.samples % 2 == 0, || {
                format!("samples must be even and at least 2 (antithetic pairs), got {}", self.samples)
            })
        };
        let horizon = || {
            Timeline::with_horizon(self.time, self.dt)
                .map(|_| ())
                .map_err(|e| RunError::config(format!("time and dt: {e}")))
        };
        match self.command {
            Command::SolveCauchy | Command::LameDemo => {
                even_samples()?;
                horizon()?;
                if let Some(g) = self.grid {
                    check(g >= 4 && g > 2 * self.trunc_k, || {
                        format!("grid must be at least max(4, 2K+1) = {}, got {g}", (2 * self.trunc_k + 1).max(4))
                    })?;
                    check(self.time > 0.0, || "the finite-difference check needs time > 0".into())?;
                }
            }
            Command::SolveElliptic => {
                even_samples()?;
                let g = self.grid.unwrap_or(10);
                check((2..=256).contains(&g), || format!("grid must lie in 2..=256 cells, got {g}"))?;
                check(!self.system || self.boundary != Boundary::Indicator, || {
                    "system mode takes spectral boundary data".into()
                })?;
                check(self.boundary != Boundary::Input || self.input.is_some(), || {
                    "boundary = input needs --input".into()
                })?;
            }
            Command::ModeFactor => {
                horizon()?;
                check(self.time > 0.0, || "mode-factor needs time > 0".into())?;
            }
            Command::Validate { target } => match target {
                ValidateTarget::Clt => check(self.samples >= 1, || "samples must be positive".into())?,
                ValidateTarget::Ito => {
                    check(self.samples >= 1, || "samples must be positive".into())?;
                    horizon()?;
                    check(self.time > 0.0, || "validate ito needs time > 0".into())?;
                }
                ValidateTarget::Density => check(self.steps >= 1 && self.steps * self.dim <= 24, || {
                    format!("validate density needs 1 <= steps and steps * dim <= 24, got {} x {}", self.steps, self.dim)
                })?,
            },
        }
        Ok(())
    }

    pub fn grid_or(&self, default: usize) -> usize {
        self.grid.unwrap_or(default)
    }

    /// Every resolved input, for the run manifest.
    pub fn to_json(&self) -> Value {
        let path = |p: &Option<PathBuf>| p.as_deref().map(Path::display).map(|d| d.to_string());
        json!({
            "command": self.command.name(),
            "config_file": path(&self.config_file),
            "tensor": {
                "source": self.tensor_source.label(),
                "nu": self.nu,
                "lame_a": self.lame_a,
                "entries": self.tensor.to_text(),
            },
            "dim": self.dim,
            "trunc_k": self.trunc_k,
            "grid": self.grid,
            "dt": self.dt,
            "time": self.time,
            "samples": self.samples,
            "seed": self.seed,
            "workers": self.workers,
            "input": path(&self.input),
            "eval": self.eval,
            "steps": self.steps,
            "levels": self.levels,
            "boundary": format!("{:?}", self.boundary).to_lowercase(),
            "system": self.system,
        })
    }
}
