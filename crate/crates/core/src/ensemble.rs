//! Exact finite-N distribution over the admissible occupancies.

use std::collections::BTreeMap;
use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::entropy::entropy_of_counts;
use crate::error::{Error, Result};
use crate::instance::{degeneracies_for, DegeneracyAssignment, EnsembleSpec, Occupancy};
use crate::numeric::{compensated_sum, log_sum_exp};

pub const DEFAULT_BUDGET: u64 = 10_000_000;

/// Pre-enumeration size estimate `m·(N+1)^(m-1)`.
pub fn enumeration_estimate(m: usize, n: u64) -> f64 {
    m as f64 * (n as f64 + 1.0).powi(m as i32 - 1)
}

fn check_budget(spec: &EnsembleSpec, n: u64, budget: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("N must be ≥ 1".into()));
    }
    let estimate = enumeration_estimate(spec.levels(), n);
    if estimate > budget as f64 {
        return Err(Error::BudgetExceeded { estimate, budget });
    }
    Ok(())
}

/// Calls `visit` on every admissible count vector, `N₁` descending, then
/// `N₂` descending, and so on.
pub fn for_each_state<F: FnMut(&[u32])>(spec: &EnsembleSpec, n: u64, budget: u64, mut visit: F) -> Result<()> {
    check_budget(spec, n, budget)?;
    let units = spec.level_units();
    let bound = spec.energy_bound(n);
    let mut counts = vec![0u32; units.len()];
    walk(units, bound, 0, n as u32, 0, &mut counts, &mut visit);
    Ok(())
}

fn walk<F: FnMut(&[u32])>(
    units: &[i64],
    bound: i128,
    level: usize,
    remaining: u32,
    used: i128,
    counts: &mut [u32],
    visit: &mut F,
) {
    let last = units.len() - 1;
    if level == last {
        if used + units[last] as i128 * remaining as i128 <= bound {
            counts[last] = remaining;
            visit(counts);
        }
        return;
    }
    let here = units[level] as i128;
    let next = units[level + 1] as i128;
    for k in (0..=remaining).rev() {
        let energy = used + here * k as i128;
        // Cheapest completion puts every remaining particle on the next level.
        // Fewer particles here only raises it, so stop at the first failure.
        if energy + next * (remaining - k) as i128 > bound {
            break;
        }
        counts[level] = k;
        walk(units, bound, level + 1, remaining - k, energy, counts, visit);
    }
    counts[level] = 0;
}

pub fn enumerate_states(spec: &EnsembleSpec, n: u64) -> Result<Vec<Occupancy>> {
    enumerate_states_with_budget(spec, n, DEFAULT_BUDGET)
}

pub fn enumerate_states_with_budget(spec: &EnsembleSpec, n: u64, budget: u64) -> Result<Vec<Occupancy>> {
    let mut states = Vec::new();
    for_each_state(spec, n, budget, |c| states.push(Occupancy::from_trusted(spec, n, c.to_vec())))?;
    Ok(states)
}

/// Enumerated support with log-weights `S(x,N)` and the normalised pmf.
#[derive(Debug, Clone)]
pub struct ExactDistribution {
    spec: EnsembleSpec,
    n: u64,
    degeneracies: DegeneracyAssignment,
    states: Vec<Occupancy>,
    log_weights: Vec<f64>,
    log_z: f64,
    pmf: Vec<f64>,
}

pub fn build_distribution(spec: &EnsembleSpec, n: u64) -> Result<ExactDistribution> {
    build_distribution_with_budget(spec, n, DEFAULT_BUDGET)
}

pub fn build_distribution_with_budget(spec: &EnsembleSpec, n: u64, budget: u64) -> Result<ExactDistribution> {
    let degeneracies = degeneracies_for(spec, n)?;
    let states = enumerate_states_with_budget(spec, n, budget)?;
    let log_weights: Vec<f64> = states.iter().map(|s| entropy_of_counts(s.counts(), &degeneracies.per_level)).collect();
    let log_z = log_sum_exp(&log_weights);
    let pmf = log_weights.iter().map(|&w| (w - log_z).exp()).collect();
    Ok(ExactDistribution { spec: spec.clone(), n, degeneracies, states, log_weights, log_z, pmf })
}

impl ExactDistribution {
    pub fn spec(&self) -> &EnsembleSpec {
        &self.spec
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn degeneracies(&self) -> &DegeneracyAssignment {
        &self.degeneracies
    }

    pub fn states(&self) -> &[Occupancy] {
        &self.states
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn log_z(&self) -> f64 {
        self.log_z
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn total_probability(&self) -> f64 {
        compensated_sum(self.pmf.iter().copied())
    }

    /// `Xₙ = counts/N` for state `i`.
    pub fn fractions(&self, i: usize) -> Vec<f64> {
        let n = self.n as f64;
        self.states[i].counts().iter().map(|&k| k as f64 / n).collect()
    }

    /// One line per state: `N1,...,Nm,logW,pmf`.
    pub fn write_dump<W: Write>(&self, mut out: W) -> io::Result<()> {
        for ((state, lw), p) in self.states.iter().zip(&self.log_weights).zip(&self.pmf) {
            for k in state.counts() {
                write!(out, "{k},")?;
            }
            writeln!(out, "{lw},{p}")?;
        }
        Ok(())
    }
}

pub fn exact_mean(dist: &ExactDistribution) -> DVector<f64> {
    let m = dist.spec.levels();
    let n = dist.n as f64;
    DVector::from_iterator(
        m,
        (0..m).map(|i| compensated_sum(dist.states.iter().zip(&dist.pmf).map(|(s, p)| p * s.counts()[i] as f64 / n))),
    )
}

pub fn exact_covariance(dist: &ExactDistribution) -> DMatrix<f64> {
    let m = dist.spec.levels();
    let mean = exact_mean(dist);
    let mut cov = DMatrix::zeros(m, m);
    for (idx, p) in dist.pmf.iter().enumerate() {
        let d = DVector::from_vec(dist.fractions(idx)) - &mean;
        cov += *p * &d * d.transpose();
    }
    cov
}

/// `E[exp(ξᵀXₙ)]`, accumulated in log space. Exactly 1 at `ξ = 0`.
pub fn mgf(dist: &ExactDistribution, xi: &[f64]) -> f64 {
    if xi.iter().all(|&v| v == 0.0) {
        return 1.0;
    }
    let n = dist.n as f64;
    let terms: Vec<f64> = dist
        .states
        .iter()
        .zip(&dist.log_weights)
        .map(|(s, lw)| {
            let dot: f64 = s.counts().iter().zip(xi).map(|(&k, x)| x * k as f64 / n).sum();
            lw - dist.log_z + dot
        })
        .collect();
    log_sum_exp(&terms).exp()
}

/// States sharing one exact energy slack.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `⌊qEN⌋ - Σ (qεᵢ)Nᵢ`.
    pub slack: i128,
    /// Indices into [`ExactDistribution::states`].
    pub states: Vec<usize>,
    pub probability: f64,
}

/// Layers ordered by slack; index 0 is the boundary layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerDecomposition {
    pub layers: Vec<Layer>,
}

impl LayerDecomposition {
    pub fn masses(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.probability).collect()
    }

    /// `p_{k+1}/p_k` for consecutive layers.
    pub fn ratios(&self) -> Vec<f64> {
        self.layers.windows(2).map(|w| w[1].probability / w[0].probability).collect()
    }
}

pub fn layer_decomposition(dist: &ExactDistribution) -> LayerDecomposition {
    let bound = dist.spec.energy_bound(dist.n);
    let mut groups: BTreeMap<i128, Vec<usize>> = BTreeMap::new();
    for (i, s) in dist.states.iter().enumerate() {
        groups.entry(bound - dist.spec.integer_energy(s.counts())).or_default().push(i);
    }
    let layers = groups
        .into_iter()
        .map(|(slack, states)| {
            let probability = compensated_sum(states.iter().map(|&i| dist.pmf[i]));
            Layer { slack, states, probability }
        })
        .collect();
    LayerDecomposition { layers }
}
