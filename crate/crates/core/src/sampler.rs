//! Sampling from the occupancy distribution: inverse-CDF draws from an
//! enumerated pmf, and a single-particle-move Metropolis chain targeting
//! `pmf ∝ exp(S(x, N))` when enumeration is out of reach.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ensemble::ExactDistribution;
use crate::entropy::{log_arrangements, reference_counts};
use crate::error::{Error, Result};
use crate::instance::{degeneracies_for, EnsembleSpec, Occupancy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChainConfig {
    pub steps: u64,
    pub burn_in: u64,
    pub thinning: u64,
    pub seed: u64,
}

impl ChainConfig {
    /// Burn-in `10·N·m` and thinning `N`.
    pub fn with_defaults(n: u64, m: usize, steps: u64, seed: u64) -> Self {
        ChainConfig { steps, burn_in: 10 * n * m as u64, thinning: n.max(1), seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps <= self.burn_in {
            return Err(Error::InvalidChain(format!("steps ({}) must exceed burn_in ({})", self.steps, self.burn_in)));
        }
        if self.thinning == 0 {
            return Err(Error::InvalidChain("thinning must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// `count` i.i.d. draws by inverse CDF; deterministic in `seed`.
pub fn exact_sample(dist: &ExactDistribution, count: usize, seed: u64) -> Vec<Occupancy> {
    let mut cdf = Vec::with_capacity(dist.len());
    let mut acc = 0.0;
    for p in dist.pmf() {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            let idx = cdf.partition_point(|&c| c <= u).min(dist.len() - 1);
            dist.states()[idx].clone()
        })
        .collect()
}

/// Proposal: an ordered pair `(i, j)`, `i ≠ j`, uniform over all `m(m-1)`
/// pairs, moving one particle from level `i` to level `j`. Moves from an
/// empty level or across the energy cap are rejected, which keeps the
/// proposal symmetric.
#[derive(Debug, Clone)]
pub struct MetropolisKernel {
    units: Vec<i64>,
    boxes: Vec<u64>,
    bound: i128,
}

impl MetropolisKernel {
    pub fn new(spec: &EnsembleSpec, n: u64) -> Result<Self> {
        let deg = degeneracies_for(spec, n)?;
        Ok(MetropolisKernel { units: spec.level_units().to_vec(), boxes: deg.per_level, bound: spec.energy_bound(n) })
    }

    pub fn levels(&self) -> usize {
        self.units.len()
    }

    /// Entropy change of moving one particle `i → j`, from the two affected
    /// levels only.
    pub fn delta_entropy(&self, counts: &[u32], from: usize, to: usize) -> f64 {
        let (ni, nj) = (counts[from] as u64, counts[to] as u64);
        let (gi, gj) = (self.boxes[from], self.boxes[to]);
        (log_arrangements(ni - 1, gi) - log_arrangements(ni, gi))
            + (log_arrangements(nj + 1, gj) - log_arrangements(nj, gj))
    }

    fn admissible(&self, counts: &[u32], energy: i128, from: usize, to: usize) -> bool {
        counts[from] > 0 && energy + (self.units[to] - self.units[from]) as i128 <= self.bound
    }

    /// `P(a → b)` for `a ≠ b`; zero unless `b` is one admissible move away.
    pub fn transition_probability(&self, a: &[u32], b: &[u32]) -> f64 {
        let m = self.levels();
        if m < 2 {
            return 0.0;
        }
        let diff: Vec<i64> = a.iter().zip(b).map(|(&x, &y)| y as i64 - x as i64).collect();
        let from = diff.iter().position(|&d| d == -1);
        let to = diff.iter().position(|&d| d == 1);
        let moved = diff.iter().filter(|&&d| d != 0).count();
        let (Some(from), Some(to)) = (from, to) else { return 0.0 };
        if moved != 2 {
            return 0.0;
        }
        let energy = self.energy(a);
        if !self.admissible(a, energy, from, to) {
            return 0.0;
        }
        let accept = self.delta_entropy(a, from, to).exp().min(1.0);
        accept / (m * (m - 1)) as f64
    }

    pub fn energy(&self, counts: &[u32]) -> i128 {
        self.units.iter().zip(counts).map(|(&u, &k)| u as i128 * k as i128).sum()
    }

    /// One Metropolis step in place; returns whether the move was accepted.
    pub fn step<R: Rng>(&self, rng: &mut R, counts: &mut [u32], energy: &mut i128) -> bool {
        let m = self.levels();
        if m < 2 {
            return false;
        }
        let pair = rng.gen_range(0..m * (m - 1));
        let from = pair / (m - 1);
        let mut to = pair % (m - 1);
        if to >= from {
            to += 1;
        }
        // Draw the acceptance variate unconditionally so the random stream
        // advances identically whatever the state.
        let u: f64 = rng.gen();
        if !self.admissible(counts, *energy, from, to) {
            return false;
        }
        let delta = self.delta_entropy(counts, from, to);
        if delta >= 0.0 || u < delta.exp() {
            counts[from] -= 1;
            counts[to] += 1;
            *energy += (self.units[to] - self.units[from]) as i128;
            true
        } else {
            false
        }
    }
}

/// Feasible start: counts near `gᵢ·N`, then particles moved from the highest
/// occupied level down to the lowest until the energy cap holds.
pub fn initial_state(spec: &EnsembleSpec, n: u64) -> Result<Vec<u32>> {
    let mut counts = reference_counts(spec.weights(), n);
    let bound = spec.energy_bound(n);
    while spec.integer_energy(&counts) > bound {
        let Some(top) = (1..counts.len()).rev().find(|&i| counts[i] > 0) else {
            return Err(Error::EmptyDomain);
        };
        counts[top] -= 1;
        counts[0] += 1;
    }
    Ok(counts)
}

/// Post-burn-in, thinned states of a Metropolis chain.
pub fn metropolis_chain(spec: &EnsembleSpec, n: u64, cfg: &ChainConfig) -> Result<Vec<Occupancy>> {
    let mut out = Vec::with_capacity(((cfg.steps - cfg.burn_in.min(cfg.steps)) / cfg.thinning.max(1)) as usize);
    run_chain(spec, n, cfg, |c| out.push(Occupancy::from_trusted(spec, n, c.to_vec())))?;
    Ok(out)
}

/// Like [`metropolis_chain`] but hands each retained state to `visit`
/// instead of collecting it.
pub fn run_chain<F: FnMut(&[u32])>(spec: &EnsembleSpec, n: u64, cfg: &ChainConfig, mut visit: F) -> Result<()> {
    cfg.validate()?;
    let kernel = MetropolisKernel::new(spec, n)?;
    let mut counts = initial_state(spec, n)?;
    let mut energy = kernel.energy(&counts);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for t in 0..cfg.steps {
        kernel.step(&mut rng, &mut counts, &mut energy);
        if t >= cfg.burn_in && (t - cfg.burn_in).is_multiple_of(cfg.thinning) {
            visit(&counts);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::build_distribution;
    use crate::entropy::entropy_of_counts;
    use crate::instance::{Rational, RawSpec, Regime};
    use std::collections::{HashMap, HashSet, VecDeque};

    fn r(p: i64, q: i64) -> Rational {
        Rational::new(p, q)
    }

    fn two_level(cap: Rational) -> EnsembleSpec {
        RawSpec::new(vec![r(1, 1), r(2, 1)], vec![0.5, 0.5], cap, Regime::Proportional).validate().unwrap()
    }

    fn three_level() -> EnsembleSpec {
        RawSpec::new(vec![r(1, 1), r(2, 1), r(3, 1)], vec![0.2, 0.3, 0.5], r(9, 5), Regime::Proportional)
            .validate()
            .unwrap()
    }

    #[test]
    fn chain_config_validation() {
        assert!(ChainConfig { steps: 10, burn_in: 10, thinning: 1, seed: 0 }.validate().is_err());
        assert!(ChainConfig { steps: 11, burn_in: 10, thinning: 0, seed: 0 }.validate().is_err());
        let d = ChainConfig::with_defaults(8, 3, 10_000, 1);
        assert_eq!((d.burn_in, d.thinning), (240, 8));
    }

    #[test]
    fn exact_sampling_single_state() {
        let one = RawSpec::new(vec![r(1, 1)], vec![1.0], r(2, 1), Regime::HighDegeneracy).validate().unwrap();
        let dist = build_distribution(&one, 5).unwrap();
        let draws = exact_sample(&dist, 100, 3);
        assert!(draws.iter().all(|d| d.counts() == [5]));
    }

    #[test]
    fn exact_sampling_frequencies_and_determinism() {
        let spec = RawSpec::new(vec![r(1, 1), r(2, 1)], vec![0.5, 0.5], r(3, 2), Regime::LowDegeneracy)
            .with_schedule(crate::instance::Schedule::Power { p: 0.0001 })
            .validate()
            .unwrap();
        let dist = build_distribution(&spec, 4).unwrap();
        let count = 100_000;
        let draws = exact_sample(&dist, count, 42);
        let sigma = (count as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for state in dist.states() {
            let hits = draws.iter().filter(|d| *d == state).count() as f64;
            assert!((hits - count as f64 / 3.0).abs() < 3.0 * sigma, "{state:?}: {hits}");
        }
        assert_eq!(exact_sample(&dist, 1000, 42), exact_sample(&dist, 1000, 42));
        assert_ne!(exact_sample(&dist, 1000, 42), exact_sample(&dist, 1000, 43));
    }

    fn check_detailed_balance(spec: &EnsembleSpec, n: u64) {
        let dist = build_distribution(spec, n).unwrap();
        let kernel = MetropolisKernel::new(spec, n).unwrap();
        let mut moves = 0;
        for (a, sa) in dist.states().iter().enumerate() {
            let mut out = 0.0;
            for (b, sb) in dist.states().iter().enumerate() {
                if a == b {
                    continue;
                }
                let fwd = dist.pmf()[a] * kernel.transition_probability(sa.counts(), sb.counts());
                let back = dist.pmf()[b] * kernel.transition_probability(sb.counts(), sa.counts());
                assert!((fwd - back).abs() <= 1e-15 * fwd.max(back).max(1e-300), "{sa:?} {sb:?}");
                if fwd > 0.0 {
                    moves += 1;
                }
                out += kernel.transition_probability(sa.counts(), sb.counts());
            }
            assert!(out <= 1.0 + 1e-12);
        }
        assert!(moves > 0);
    }

    #[test]
    fn detailed_balance_on_enumerated_kernel() {
        check_detailed_balance(&two_level(r(3, 2)), 4);
        check_detailed_balance(&three_level(), 7);
    }

    #[test]
    fn incremental_entropy_matches_recomputation() {
        let spec = three_level();
        let n = 12;
        let kernel = MetropolisKernel::new(&spec, n).unwrap();
        let deg = degeneracies_for(&spec, n).unwrap();
        let counts = vec![5u32, 4, 3];
        for from in 0..3 {
            for to in 0..3 {
                if from == to {
                    continue;
                }
                let mut moved = counts.clone();
                moved[from] -= 1;
                moved[to] += 1;
                let full = entropy_of_counts(&moved, &deg.per_level) - entropy_of_counts(&counts, &deg.per_level);
                assert!((kernel.delta_entropy(&counts, from, to) - full).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn chain_emits_admissible_states_and_matches_pmf() {
        let spec = three_level();
        let n = 10;
        let dist = build_distribution(&spec, n).unwrap();
        let cfg = ChainConfig { steps: 400_000, burn_in: 1000, thinning: 1, seed: 9 };
        let mut freq: HashMap<Vec<u32>, f64> = HashMap::new();
        let mut total = 0.0;
        run_chain(&spec, n, &cfg, |c| {
            assert!(Occupancy::new(&spec, n, c.to_vec()).is_ok());
            *freq.entry(c.to_vec()).or_default() += 1.0;
            total += 1.0;
        })
        .unwrap();
        let tv: f64 = dist
            .states()
            .iter()
            .zip(dist.pmf())
            .map(|(s, p)| (freq.get(s.counts()).copied().unwrap_or(0.0) / total - p).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "tv = {tv}");
    }

    #[test]
    fn chain_is_reproducible() {
        let spec = three_level();
        let cfg = ChainConfig::with_defaults(20, 3, 20_000, 77);
        let a = metropolis_chain(&spec, 20, &cfg).unwrap();
        let b = metropolis_chain(&spec, 20, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), ((20_000 - cfg.burn_in - 1) / cfg.thinning + 1) as usize);
    }

    #[test]
    fn single_moves_connect_the_support() {
        for (spec, n) in [(two_level(r(7, 5)), 9u64), (three_level(), 8)] {
            let dist = build_distribution(&spec, n).unwrap();
            let kernel = MetropolisKernel::new(&spec, n).unwrap();
            let support: HashSet<Vec<u32>> = dist.states().iter().map(|s| s.counts().to_vec()).collect();
            let start = initial_state(&spec, n).unwrap();
            let mut seen = HashSet::from([start.clone()]);
            let mut queue = VecDeque::from([start]);
            while let Some(a) = queue.pop_front() {
                for b in &support {
                    if !seen.contains(b) && kernel.transition_probability(&a, b) > 0.0 {
                        seen.insert(b.clone());
                        queue.push_back(b.clone());
                    }
                }
            }
            assert_eq!(seen.len(), support.len());
        }
    }
}
