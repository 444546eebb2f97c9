use std::path::{Path, PathBuf};

use clap::Args;
use roew_core::drsvm::{kappa, SolverConfig};
use roew_core::evalx::{DEFAULT_ALPHAS, DEFAULT_C, DEFAULT_SPLITS};
use roew_core::measure::NoiseModel;
use roew_core::states::DatasetSpec;
use roew_core::witness::{DEFAULT_GRID_N, MIN_GRID_N};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::{sha256_hex, Manifest};

pub const SEED_ENV: &str = "ROEW_SEED";
pub const DEFAULT_OUT: &str = "roew-out";

/// Everything that influences computed results. Paths and the worker cap
/// live in [`Runtime`] and are not part of the hash.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub noise: NoiseModel,
    pub repeats: usize,
    pub dataset: DatasetSpec,
    /// Replace each covariance by its class average before training.
    pub pooled_covariance: bool,
    pub alpha: f64,
    pub c: f64,
    /// Training fraction for `train`.
    pub split: f64,
    pub alphas: Vec<f64>,
    pub splits: Vec<f64>,
    pub grid_n: usize,
    pub solver: SolverConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            noise: NoiseModel::default(),
            repeats: 50,
            dataset: DatasetSpec::default(),
            pooled_covariance: false,
            alpha: 0.7,
            c: DEFAULT_C,
            split: 0.8,
            alphas: DEFAULT_ALPHAS.to_vec(),
            splits: DEFAULT_SPLITS.to_vec(),
            grid_n: DEFAULT_GRID_N,
            solver: SolverConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Runtime {
    pub out: PathBuf,
    /// Directory holding `moments.jsonl`; defaults to `out`.
    pub data: PathBuf,
    pub jobs: Option<usize>,
}

#[derive(Args, Clone, Debug, Default)]
pub struct CommonArgs {
    /// TOML config file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Rerun with the config recorded in a manifest.
    #[arg(long, global = true, value_name = "PATH", conflicts_with = "config")]
    pub manifest: Option<PathBuf>,
    /// Master seed (falls back to ROEW_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long = "c", global = true)]
    pub c: Option<f64>,
    /// Gaussian noise level per Pauli expectation.
    #[arg(long, global = true, conflicts_with = "shots")]
    pub noise_sigma: Option<f64>,
    /// Shot-noise model with this many shots per expectation.
    #[arg(long, global = true)]
    pub shots: Option<u64>,
    #[arg(long, global = true)]
    pub repeats: Option<usize>,
    /// Training fraction.
    #[arg(long, global = true)]
    pub split: Option<f64>,
    #[arg(long, global = true)]
    pub grid_n: Option<usize>,
    /// Worker cap (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Dataset directory for `train` and `sweep` (default: --out).
    #[arg(long, global = true, value_name = "DIR")]
    pub data: Option<PathBuf>,
    /// Separable sample count.
    #[arg(long, global = true)]
    pub n_sep: Option<usize>,
    /// Entangled sample count per Bell group.
    #[arg(long, global = true)]
    pub n_ent: Option<usize>,
    #[arg(long, global = true)]
    pub pooled_covariance: bool,
    /// Sweep α grid, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Sweep split grid, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub splits: Option<Vec<f64>>,
}

fn read_to_string(path: &Path) -> CliResult<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(s) => s.trim().parse().map(Some).map_err(|_| {
            CliError::config(
                "seed",
                format!("{SEED_ENV}={s:?} is not an unsigned integer"),
            )
        }),
        Err(_) => Ok(None),
    }
}

struct FileLayer {
    run: RunConfig,
    has_seed: bool,
    out: Option<PathBuf>,
    data: Option<PathBuf>,
    jobs: Option<usize>,
}

fn parse_toml(path: &Path) -> CliResult<FileLayer> {
    let mut table: toml::Table = read_to_string(path)?
        .parse()
        .map_err(|e| CliError::parse(path, e))?;
    let path_value = |table: &mut toml::Table, key: &str| -> CliResult<Option<PathBuf>> {
        match table.remove(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(PathBuf::from(s))),
            Some(_) => Err(CliError::config(key, "expected a path string")),
        }
    };
    let out = path_value(&mut table, "out")?;
    let data = path_value(&mut table, "data")?;
    let jobs = match table.remove("jobs") {
        None => None,
        Some(toml::Value::Integer(n)) if n >= 1 => Some(n as usize),
        Some(_) => return Err(CliError::config("jobs", "expected a positive integer")),
    };
    let has_seed = table.contains_key("seed");
    let run = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::parse(path, e.to_string().trim_end()))?;
    Ok(FileLayer {
        run,
        has_seed,
        out,
        data,
        jobs,
    })
}

fn read_manifest(path: &Path) -> CliResult<Manifest> {
    serde_json::from_str(&read_to_string(path)?).map_err(|e| CliError::parse(path, e))
}

/// Defaults, then a config file or manifest, then `ROEW_SEED` if no seed
/// was given yet, then flags.
pub fn resolve(args: &CommonArgs) -> CliResult<(RunConfig, Runtime)> {
    let layer = if let Some(path) = &args.manifest {
        let m = read_manifest(path)?;
        FileLayer {
            run: m.config,
            has_seed: true,
            out: None,
            data: None,
            jobs: None,
        }
    } else if let Some(path) = &args.config {
        parse_toml(path)?
    } else {
        FileLayer {
            run: RunConfig::default(),
            has_seed: false,
            out: None,
            data: None,
            jobs: None,
        }
    };
    let mut cfg = layer.run;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    } else if !layer.has_seed {
        if let Some(seed) = env_seed()? {
            cfg.seed = seed;
        }
    }
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(c) = args.c {
        cfg.c = c;
    }
    if let Some(sigma) = args.noise_sigma {
        cfg.noise = NoiseModel::Gaussian { sigma };
    }
    if let Some(n_shots) = args.shots {
        cfg.noise = NoiseModel::Shot { n_shots };
    }
    if let Some(r) = args.repeats {
        cfg.repeats = r;
    }
    if let Some(s) = args.split {
        cfg.split = s;
    }
    if let Some(g) = args.grid_n {
        cfg.grid_n = g;
    }
    if let Some(n) = args.n_sep {
        cfg.dataset.n_separable = n;
    }
    if let Some(n) = args.n_ent {
        cfg.dataset.n_per_group = n;
    }
    if args.pooled_covariance {
        cfg.pooled_covariance = true;
    }
    if let Some(a) = &args.alphas {
        cfg.alphas = a.clone();
    }
    if let Some(s) = &args.splits {
        cfg.splits = s.clone();
    }
    validate(&cfg)?;
    let out = args
        .out
        .clone()
        .or(layer.out)
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT));
    let data = args
        .data
        .clone()
        .or(layer.data)
        .unwrap_or_else(|| out.clone());
    let jobs = args.jobs.or(layer.jobs);
    if jobs == Some(0) {
        return Err(CliError::config("jobs", "must be at least 1"));
    }
    Ok((cfg, Runtime { out, data, jobs }))
}

fn check_alpha(field: &str, a: f64) -> CliResult<()> {
    kappa(a)
        .map(|_| ())
        .map_err(|_| CliError::config(field, format!("must lie in (0, 1), got {a}")))
}

fn check_fraction(field: &str, s: f64) -> CliResult<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(CliError::config(
            field,
            format!("must lie in (0, 1), got {s}"),
        ))
    }
}

pub fn validate(cfg: &RunConfig) -> CliResult<()> {
    cfg.noise
        .validate()
        .map_err(|e| CliError::config("noise", e.to_string()))?;
    if cfg.repeats < 2 {
        return Err(CliError::config(
            "repeats",
            format!("must be at least 2, got {}", cfg.repeats),
        ));
    }
    let d = &cfg.dataset;
    if d.n_separable == 0 {
        return Err(CliError::config("dataset.n_separable", "must be positive"));
    }
    if d.n_per_group == 0 {
        return Err(CliError::config("dataset.n_per_group", "must be positive"));
    }
    if !(d.gamma_min > 1.0 / 3.0 && d.gamma_min <= 1.0) {
        return Err(CliError::config(
            "dataset.gamma_min",
            format!("must lie in (1/3, 1], got {}", d.gamma_min),
        ));
    }
    if d.max_terms == 0 {
        return Err(CliError::config("dataset.max_terms", "must be positive"));
    }
    check_alpha("alpha", cfg.alpha)?;
    if !(cfg.c.is_finite() && cfg.c > 0.0) {
        return Err(CliError::config(
            "c",
            format!("must be positive, got {}", cfg.c),
        ));
    }
    check_fraction("split", cfg.split)?;
    if cfg.alphas.is_empty() {
        return Err(CliError::config("alphas", "must not be empty"));
    }
    for &a in &cfg.alphas {
        check_alpha("alphas", a)?;
    }
    if cfg.splits.is_empty() {
        return Err(CliError::config("splits", "must not be empty"));
    }
    for &s in &cfg.splits {
        check_fraction("splits", s)?;
    }
    if cfg.grid_n < MIN_GRID_N {
        return Err(CliError::config(
            "grid_n",
            format!("must be at least {MIN_GRID_N}, got {}", cfg.grid_n),
        ));
    }
    cfg.solver
        .validate()
        .map_err(|e| CliError::config("solver", e.to_string()))
}

impl RunConfig {
    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }

    /// Base seed of the generated states. Rotation keeps distinct master
    /// seeds on distinct, widely spaced per-sample seed ranges.
    pub fn dataset_seed(&self) -> u64 {
        self.seed.rotate_left(32)
    }

    pub fn split_seed(&self) -> u64 {
        self.seed
    }
}
