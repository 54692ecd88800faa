//! Flat JSON experiment configuration.

use std::fs;
use std::path::Path;

use microcanon::sampler::ChainConfig;
use microcanon::{parse_rational, EnsembleSpec, RawSpec, Regime, Schedule};
use serde::Deserialize;

use crate::failure::Failure;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Level energies as exact rationals: `"3/2"`, `"2"`, `"0.25"`.
    pub energies: Vec<String>,
    pub weights: Vec<f64>,
    pub energy_cap: String,
    /// `HighDegeneracy`, `Proportional`, `LowDegeneracy`, or `1`, `2`, `3`.
    pub regime: String,
    /// Linear schedule slope, regime 2 only.
    pub c: Option<f64>,
    /// Power schedule exponent, regimes 1 and 3 only.
    pub p: Option<f64>,
    #[serde(default)]
    pub n_list: Vec<u64>,
    /// mgf probes for `lln-sweep`.
    #[serde(default)]
    pub xi_list: Vec<Vec<f64>>,
    /// Probe point for `entropy-probe`.
    pub x: Option<Vec<f64>>,
    /// Metropolis chain length, including burn-in.
    pub steps: Option<u64>,
    pub burn_in: Option<u64>,
    pub thinning: Option<u64>,
    pub seed: Option<u64>,
    /// Number of i.i.d. draws for `sample` with `method = "exact"`.
    pub count: Option<usize>,
    /// `exact` or `metropolis` (default) for `sample`.
    pub method: Option<String>,
    /// Lets `lln-sweep` fall back to a Metropolis estimate above the budget.
    #[serde(default)]
    pub sampler_fallback: bool,
    /// Consecutive layer ratios reported by `fluct-check` on a boundary spec.
    pub layers: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path)
            .map_err(|e| Failure::config("io", format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::config("parse", format!("{}: {e}", path.display())))
    }

    pub fn spec(&self) -> Result<EnsembleSpec, Failure> {
        let regime = parse_regime(&self.regime)?;
        let rational = |s: &str| parse_rational(s).map_err(|e| Failure::config("config", format!("{s:?}: {e}")));
        let energies = self.energies.iter().map(|s| rational(s)).collect::<Result<Vec<_>, _>>()?;
        let energy_cap = rational(&self.energy_cap)?;
        let mut raw = RawSpec::new(energies, self.weights.clone(), energy_cap, regime);
        match regime {
            Regime::Proportional => {
                if self.p.is_some() {
                    return Err(Failure::config("config", "`p` does not apply to the Proportional regime".into()));
                }
                if let Some(c) = self.c {
                    raw = raw.with_c(c);
                }
            }
            _ => {
                if self.c.is_some() {
                    return Err(Failure::config("config", "`c` applies to the Proportional regime only".into()));
                }
                if let Some(p) = self.p {
                    raw = raw.with_schedule(Schedule::Power { p });
                }
            }
        }
        Ok(raw.validate()?)
    }

    /// Non-empty and strictly increasing.
    pub fn n_list(&self) -> Result<&[u64], Failure> {
        if self.n_list.is_empty() {
            return Err(Failure::config("config", "n_list must not be empty".into()));
        }
        if self.n_list[0] == 0 {
            return Err(Failure::config("config", "n_list entries must be ≥ 1".into()));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Failure::config("config", "n_list must be strictly increasing".into()));
        }
        Ok(&self.n_list)
    }

    pub fn chain(&self, n: u64, m: usize, seed_override: Option<u64>) -> Result<ChainConfig, Failure> {
        let steps = self
            .steps
            .ok_or_else(|| Failure::config("config", "`steps` is required for Metropolis sampling".into()))?;
        let seed = seed_override.or(self.seed).unwrap_or(0);
        let mut cfg = ChainConfig::with_defaults(n, m, steps, seed);
        if let Some(b) = self.burn_in {
            cfg.burn_in = b;
        }
        if let Some(t) = self.thinning {
            cfg.thinning = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn parse_regime(s: &str) -> Result<Regime, Failure> {
    match s {
        "HighDegeneracy" | "1" => Ok(Regime::HighDegeneracy),
        "Proportional" | "2" => Ok(Regime::Proportional),
        "LowDegeneracy" | "3" => Ok(Regime::LowDegeneracy),
        other => Err(Failure::config("config", format!("unknown regime {other:?}"))),
    }
}
