//! Run configuration: JSON schema, strict validation, and assembly of the
//! typed inputs (grid, kernel, decomposition options, law).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{KlError, Result};
use crate::grid::Grid;
use crate::kernel::KernelSpec;
use crate::sampling::CoefficientLaw;
use crate::spectral::DecomposeOptions;

/// Whole-run configuration; unknown fields are rejected.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub kernel: KernelConfig,
    pub grid: GridConfig,
    /// Retained rank: `"all"` or a positive count. Default all.
    #[serde(default)]
    pub rank: Option<RankSpec>,
    /// Relative eigenvalue cutoff. Default 1e-12.
    #[serde(default)]
    pub drop_tol: Option<f64>,
    /// Coefficient law. Default Gaussian.
    #[serde(default)]
    pub law: Option<CoefficientLaw>,
    pub seed: u64,

    // Command-specific blocks.
    /// Truncation level for `sample`: `"all"` or a count. Default all.
    #[serde(default)]
    pub m: Option<RankSpec>,
    #[serde(default)]
    pub truncations: Option<Vec<usize>>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default)]
    pub replicates: Option<u64>,
    /// 1-based inclusive eigenvalue index window for the decay fit.
    #[serde(default)]
    pub fit_range: Option<(usize, usize)>,
    /// Domain dimension for smoothness certificates. Default 1.
    #[serde(default)]
    pub d: Option<u32>,
    /// Dichotomy probe window start as a fraction of the rank. Default 0.9.
    #[serde(default)]
    pub probe_window: Option<f64>,
    /// Dichotomy probe relative flatness threshold. Default 0.01.
    #[serde(default)]
    pub probe_threshold: Option<f64>,
}

/// `"all"` or a positive integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankSpec {
    All,
    Count(usize),
}

impl<'de> Deserialize<'de> for RankSpec {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        struct V;
        impl serde::de::Visitor<'_> for V {
            type Value = RankSpec;
            fn expecting(&self, f: &mut std::fmt::Formatter) -> std::fmt::Result {
                write!(f, "\"all\" or a positive integer")
            }
            fn visit_str<E: serde::de::Error>(self, s: &str) -> std::result::Result<RankSpec, E> {
                if s == "all" {
                    Ok(RankSpec::All)
                } else {
                    Err(E::custom(format!("expected \"all\", got {s:?}")))
                }
            }
            fn visit_u64<E: serde::de::Error>(self, v: u64) -> std::result::Result<RankSpec, E> {
                if v == 0 {
                    Err(E::custom("rank must be positive"))
                } else {
                    Ok(RankSpec::Count(v as usize))
                }
            }
        }
        deserializer.deserialize_any(V)
    }
}

/// Grid block: either a rule descriptor or an explicit grid.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridConfig {
    Rule(RuleGridConfig),
    Explicit(Grid),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleGridConfig {
    pub rule: GridRuleKind,
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridRuleKind {
    Uniform,
    GaussLegendre,
}

impl GridConfig {
    pub fn build(&self) -> Result<Grid> {
        match self {
            GridConfig::Rule(r) => match r.rule {
                GridRuleKind::Uniform => Grid::uniform(r.a, r.b, r.n),
                GridRuleKind::GaussLegendre => Grid::gauss_legendre(r.a, r.b, r.n),
            },
            GridConfig::Explicit(g) => Ok(g.clone()),
        }
    }
}

/// Kernel block: catalog parameters inline; tabulated kernels reference a
/// headerless CSV Gram matrix resolved relative to the config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum KernelConfig {
    BrownianMotion {
        sigma2: f64,
    },
    BrownianBridge {
        sigma2: f64,
    },
    OrnsteinUhlenbeck {
        a: f64,
        sigma: f64,
    },
    Matern {
        a: f64,
        sigma: f64,
        alpha: f64,
        d: u32,
    },
    Tabulated {
        gram_csv: PathBuf,
    },
}

impl KernelConfig {
    /// Builds the kernel; tabulated variants read their Gram CSV and report
    /// the table's asymmetry (callers warn when it exceeds 1e-8).
    pub fn build(&self, grid: &Grid, base_dir: &Path) -> Result<(KernelSpec, f64)> {
        let spec = match self {
            KernelConfig::BrownianMotion { sigma2 } => {
                KernelSpec::BrownianMotion { sigma2: *sigma2 }
            }
            KernelConfig::BrownianBridge { sigma2 } => {
                KernelSpec::BrownianBridge { sigma2: *sigma2 }
            }
            KernelConfig::OrnsteinUhlenbeck { a, sigma } => KernelSpec::OrnsteinUhlenbeck {
                a: *a,
                sigma: *sigma,
            },
            KernelConfig::Matern { a, sigma, alpha, d } => KernelSpec::Matern {
                a: *a,
                sigma: *sigma,
                alpha: *alpha,
                d: *d,
            },
            KernelConfig::Tabulated { gram_csv } => {
                let path = if gram_csv.is_absolute() {
                    gram_csv.clone()
                } else {
                    base_dir.join(gram_csv)
                };
                let gram = read_gram_csv(&path, grid.len())?;
                let (spec, asym) = KernelSpec::tabulated(grid.clone(), gram)?;
                return Ok((spec, asym));
            }
        };
        spec.validate()?;
        Ok((spec, 0.0))
    }
}

/// Reads a headerless numeric CSV into an `n x n` matrix.
pub fn read_gram_csv(path: &Path, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| KlError::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| KlError::InvalidArgument(format!("bad csv row: {e}")))?;
        let row: std::result::Result<Vec<f64>, _> =
            record.iter().map(|f| f.parse::<f64>()).collect();
        rows.push(row.map_err(|e| KlError::InvalidArgument(format!("bad csv value: {e}")))?);
    }
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(KlError::InvalidArgument(format!(
            "gram csv must be {n}x{n} to match the grid"
        )));
    }
    Ok(rows)
}

impl RunConfig {
    /// Parses and validates a config file.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            KlError::InvalidArgument(format!("cannot read {}: {e}", path.display()))
        })?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| KlError::InvalidArgument(format!("config schema: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        if let Some(dt) = self.drop_tol {
            if !(dt >= 0.0) || !dt.is_finite() {
                return Err(KlError::InvalidArgument(
                    "drop_tol must be a nonnegative finite number".into(),
                ));
            }
        }
        if let Some(law) = self.law {
            law.validate()?;
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b <= 1.0) {
                return Err(KlError::InvalidArgument(format!(
                    "beta must lie in (0, 1], got {b}"
                )));
            }
        }
        if let Some(r) = self.replicates {
            if r == 0 {
                return Err(KlError::InvalidArgument(
                    "replicates must be positive".into(),
                ));
            }
        }
        if let Some(d) = self.d {
            if d == 0 {
                return Err(KlError::InvalidArgument("d must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn decompose_options(&self) -> DecomposeOptions {
        DecomposeOptions {
            max_rank: match self.rank {
                Some(RankSpec::Count(c)) => Some(c),
                Some(RankSpec::All) | None => None,
            },
            drop_tol: self.drop_tol.unwrap_or(1e-12),
        }
    }

    pub fn law_or_default(&self) -> CoefficientLaw {
        self.law.unwrap_or(CoefficientLaw::Gaussian)
    }
}
