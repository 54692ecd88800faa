//! Finite-N entropy from exact log-factorials, the truncated Stirling series,
//! and the three limiting entropies `s₁, s₂, s₃` with their derivatives.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::instance::{
    degeneracies_for, split_degeneracy, DegeneracyAssignment, EnsembleSpec, FractionVector, Occupancy, Regime,
};
use crate::numeric::CompensatedSum;

/// Entries `ln 0! … ln (TABLE_LEN-1)!`.
const TABLE_LEN: usize = 1 << 21;

fn log_factorial_table() -> &'static [f64] {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut table = Vec::with_capacity(TABLE_LEN);
        let mut acc = CompensatedSum::new();
        table.push(0.0);
        for k in 1..TABLE_LEN {
            acc.add((k as f64).ln());
            table.push(acc.value());
        }
        table
    })
}

/// `ln n!`, from a cumulative table of `ln k` below 2²¹ and from the
/// asymptotic log-gamma series (six terms, exact in double precision there)
/// above it.
pub fn log_factorial(n: u64) -> f64 {
    if (n as usize) < TABLE_LEN {
        return log_factorial_table()[n as usize];
    }
    let x = n as f64 + 1.0;
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series = inv
        * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 * (1.0 / 1188.0)))));
    (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + series
}

/// `ln C(n + k - 1, n)`: arrangements of `n` indistinguishable particles in
/// `k ≥ 1` boxes.
pub fn log_arrangements(n: u64, boxes: u64) -> f64 {
    debug_assert!(boxes >= 1);
    log_factorial(n + boxes - 1) - log_factorial(n) - log_factorial(boxes - 1)
}

/// Truncated Stirling series for `ln Γ(λ)`:
/// `-λ + (λ - ½) ln λ + ½ ln 2π + ln(1 + 1/(12λ) + 1/(288λ²))`, keeping the
/// first `order + 1` bracket terms.
pub fn stirling_log_gamma(lambda: f64, order: u32) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Domain(format!("Stirling series needs λ > 0, got {lambda}")));
    }
    if order > 2 {
        return Err(Error::Domain(format!("series order must be 0, 1 or 2, got {order}")));
    }
    let terms = [1.0, 1.0 / (12.0 * lambda), 1.0 / (288.0 * lambda * lambda)];
    let bracket: f64 = terms[..=order as usize].iter().sum();
    Ok(-lambda + (lambda - 0.5) * lambda.ln() + 0.5 * (2.0 * PI).ln() + bracket.ln())
}

/// `S = Σᵢ ln C(Nᵢ + Gᵢ - 1, Nᵢ)`.
pub fn entropy_exact(occ: &Occupancy, deg: &DegeneracyAssignment) -> f64 {
    entropy_of_counts(occ.counts(), &deg.per_level)
}

pub(crate) fn entropy_of_counts(counts: &[u32], boxes: &[u64]) -> f64 {
    debug_assert_eq!(counts.len(), boxes.len());
    counts.iter().zip(boxes).map(|(&n, &g)| log_arrangements(n as u64, g)).sum()
}

/// Limit entropy `s_l` for one degeneracy regime.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyModel {
    regime: Regime,
    weights: Vec<f64>,
    c: f64,
}

impl EntropyModel {
    pub fn new(regime: Regime, weights: Vec<f64>, c: Option<f64>) -> Self {
        EntropyModel { regime, weights, c: c.unwrap_or(1.0) }
    }

    pub fn from_spec(spec: &EnsembleSpec) -> Self {
        EntropyModel::new(spec.regime(), spec.weights().to_vec(), spec.c())
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `s_l(x)`, any summand with `xᵢ = 0` counted as 0. Defined for any
    /// nonnegative `x`, on or off the simplex.
    pub fn value(&self, x: &[f64]) -> f64 {
        let c = self.c;
        x.iter()
            .zip(&self.weights)
            .map(|(&xi, &g)| {
                if xi == 0.0 {
                    return 0.0;
                }
                match self.regime {
                    Regime::HighDegeneracy => xi * (g / xi).ln() + xi,
                    Regime::Proportional => (xi + g * c) * (xi + g * c).ln() - xi * xi.ln(),
                    Regime::LowDegeneracy => g * xi.ln() + g,
                }
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_interior(x)?;
        let c = self.c;
        Ok(x.iter()
            .zip(&self.weights)
            .map(|(&xi, &g)| match self.regime {
                Regime::HighDegeneracy => (g / xi).ln(),
                Regime::Proportional => (g * c / xi).ln_1p(),
                Regime::LowDegeneracy => g / xi,
            })
            .collect())
    }

    /// Diagonal of the Hessian; the off-diagonal entries are identically 0.
    pub fn hessian_diag(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_interior(x)?;
        let c = self.c;
        Ok(x.iter()
            .zip(&self.weights)
            .map(|(&xi, &g)| match self.regime {
                Regime::HighDegeneracy => -1.0 / xi,
                Regime::Proportional => -g * c / (xi * (xi + g * c)),
                Regime::LowDegeneracy => -g / (xi * xi),
            })
            .collect())
    }
}

fn check_interior(x: &[f64]) -> Result<()> {
    if x.iter().all(|&v| v > 0.0) {
        Ok(())
    } else {
        Err(Error::Domain("derivatives of s_l need every xᵢ > 0".into()))
    }
}

pub fn limit_entropy(model: &EntropyModel, x: &FractionVector) -> f64 {
    model.value(x.as_slice())
}

pub fn limit_entropy_grad(model: &EntropyModel, x: &FractionVector) -> Result<Vec<f64>> {
    model.gradient(x.as_slice())
}

pub fn limit_entropy_hessian_diag(model: &EntropyModel, x: &FractionVector) -> Result<Vec<f64>> {
    model.hessian_diag(x.as_slice())
}

/// Growth rate `h(N)` of the entropy: `N` for the first two regimes, `G(N)`
/// for the low-degeneracy one.
pub fn scaling_factor(spec: &EnsembleSpec, n: u64) -> f64 {
    match spec.regime() {
        Regime::HighDegeneracy | Regime::Proportional => n as f64,
        Regime::LowDegeneracy => spec.total_degeneracy(n) as f64,
    }
}

/// Lattice point closest to `weights` at this `N` (largest-remainder
/// rounding of `gᵢ·N`, zeros allowed).
pub fn reference_counts(weights: &[f64], n: u64) -> Vec<u32> {
    if n < weights.len() as u64 {
        // floor-at-one rounding is impossible; fall back to plain rounding
        let mut counts: Vec<u32> = weights.iter().map(|g| (g * n as f64).floor() as u32).collect();
        let missing = n - counts.iter().map(|&k| k as u64).sum::<u64>();
        counts[0] += missing as u32;
        return counts;
    }
    let split = split_degeneracy(weights, n).expect("n ≥ m");
    split.per_level.into_iter().map(|v| v as u32).collect()
}

/// `|S(x,N)/h(N) - s_l(x) - κ(N)|`, with the x-independent offset `κ(N)`
/// taken at the lattice point nearest `g`.
pub fn approximation_error(spec: &EnsembleSpec, n: u64, x: &FractionVector) -> Result<f64> {
    let counts = lattice_counts(x, n)?;
    let deg = degeneracies_for(spec, n)?;
    let model = EntropyModel::from_spec(spec);
    let h = scaling_factor(spec, n);
    let residual = |counts: &[u32]| {
        let frac: Vec<f64> = counts.iter().map(|&k| k as f64 / n as f64).collect();
        entropy_of_counts(counts, &deg.per_level) / h - model.value(&frac)
    };
    let reference = reference_counts(spec.weights(), n);
    Ok((residual(&counts) - residual(&reference)).abs())
}

fn lattice_counts(x: &FractionVector, n: u64) -> Result<Vec<u32>> {
    x.as_slice()
        .iter()
        .map(|&v| {
            let scaled = v * n as f64;
            let k = scaled.round();
            if (scaled - k).abs() > 1e-9 * (n as f64).max(1.0) {
                Err(Error::NotRepresentable(n))
            } else {
                Ok(k as u32)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{Rational, RawSpec};

    fn binomial(n: u64, k: u64) -> f64 {
        (1..=k).fold(1.0, |acc, i| acc * (n + 1 - i) as f64 / i as f64)
    }

    #[test]
    fn log_factorial_examples() {
        assert_eq!(log_factorial(0), 0.0);
        assert!((log_factorial(4) - 24f64.ln()).abs() < 1e-15);
        assert!((log_factorial(10) - 3_628_800f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn log_factorial_is_continuous_across_table_edge() {
        let last = (TABLE_LEN - 1) as u64;
        let step = log_factorial(last + 1) - log_factorial(last);
        assert!((step - ((last + 1) as f64).ln()).abs() < 1e-8);
        let direct = log_factorial_table()[TABLE_LEN - 1];
        let series = {
            let x = TABLE_LEN as f64;
            let inv = 1.0 / x;
            (x - 0.5) * x.ln() - x + 0.5 * (2.0 * PI).ln() + inv / 12.0 - inv.powi(3) / 360.0
        };
        assert!((direct - series).abs() / direct < 1e-14);
    }

    #[test]
    fn stirling_examples() {
        // ln 9! = ln 362880; the order-2 truncation leaves ≈ 139/(51840 λ³).
        let v = stirling_log_gamma(10.0, 2).unwrap();
        assert!((v - 362_880f64.ln()).abs() < 3e-6, "{}", v - 362_880f64.ln());
        assert!(stirling_log_gamma(1.0, 0).unwrap().abs() < 0.09);
        let d = stirling_log_gamma(100.0, 1).unwrap() - stirling_log_gamma(100.0, 2).unwrap();
        assert!(d.abs() < 2.0 / (288.0 * 100.0 * 100.0));
        assert!(stirling_log_gamma(0.0, 1).is_err());
        assert!(stirling_log_gamma(-1.0, 1).is_err());
    }

    #[test]
    fn stirling_tracks_log_factorial() {
        // The order-2 truncation error decays like λ⁻³; relative accuracy of
        // 1e-8 is reached from λ ≈ 20 on.
        let mut n = 20.0f64;
        while n <= 1e6 {
            let k = n.round() as u64;
            let exact = log_factorial(k);
            let approx = stirling_log_gamma(k as f64 + 1.0, 2).unwrap();
            assert!(((approx - exact) / exact).abs() < 1e-8, "n = {k}");
            n *= 1.17;
        }
    }

    #[test]
    fn entropy_exact_examples() {
        let deg = |v: Vec<u64>| DegeneracyAssignment { total: v.iter().sum(), per_level: v };
        assert!((entropy_of_counts(&[2, 1], &deg(vec![3, 2]).per_level) - 12f64.ln()).abs() < 1e-14);
        assert_eq!(entropy_of_counts(&[0, 0, 0], &[4, 7, 1]), 0.0);
        assert_eq!(entropy_of_counts(&[5], &[1]), 0.0);
        for (n, g) in [(3u32, 4u64), (10, 2), (7, 9)] {
            let expect = binomial(n as u64 + g - 1, n as u64).ln();
            assert!((entropy_of_counts(&[n], &[g]) - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn entropy_exact_symmetric_under_equal_level_swap() {
        let a = entropy_of_counts(&[3, 5, 3], &[4, 2, 4]);
        let b = entropy_of_counts(&[3, 3, 5], &[4, 4, 2]);
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn exact_entropy_discretely_concave() {
        for g in 2..30u64 {
            for n in 1..200u32 {
                let d2 = log_arrangements(n as u64 + 1, g) - 2.0 * log_arrangements(n as u64, g)
                    + log_arrangements(n as u64 - 1, g);
                assert!(d2 < 0.0, "g={g} n={n}");
            }
        }
        // single box: exactly flat
        assert_eq!(log_arrangements(4, 1) - 2.0 * log_arrangements(3, 1) + log_arrangements(2, 1), 0.0);
    }

    #[test]
    fn limit_entropy_examples() {
        let m1 = EntropyModel::new(Regime::HighDegeneracy, vec![1.0], None);
        assert!((m1.value(&[1.0]) - 1.0).abs() < 1e-15);
        let m3 = EntropyModel::new(Regime::LowDegeneracy, vec![0.5, 0.5], None);
        assert_eq!(m3.value(&[1.0, 0.0]), 0.5);
        let m2 = EntropyModel::new(Regime::Proportional, vec![0.5, 0.5], Some(1.0));
        assert!((m2.value(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn derivative_examples() {
        let g = vec![0.3, 0.7];
        let m1 = EntropyModel::new(Regime::HighDegeneracy, g.clone(), None);
        assert!(m1.gradient(&g).unwrap().iter().all(|v| v.abs() < 1e-15));
        assert_eq!(m1.hessian_diag(&[0.5, 0.5]).unwrap(), vec![-2.0, -2.0]);
        let m3 = EntropyModel::new(Regime::LowDegeneracy, g.clone(), None);
        assert!(m3.gradient(&g).unwrap().iter().all(|v| (v - 1.0).abs() < 1e-15));
        assert!(m1.gradient(&[0.0, 1.0]).is_err());
        assert!(m3.hessian_diag(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn scaling_factor_examples() {
        let r = |p| Rational::from_integer(p);
        let e = vec![r(1), r(2)];
        let prop = RawSpec::new(e.clone(), vec![0.5, 0.5], r(3), Regime::Proportional).validate().unwrap();
        assert_eq!(scaling_factor(&prop, 100), 100.0);
        let low = RawSpec::new(e.clone(), vec![0.5, 0.5], r(3), Regime::LowDegeneracy).validate().unwrap();
        assert_eq!(scaling_factor(&low, 100), 10.0);
        let high = RawSpec::new(e, vec![0.5, 0.5], r(3), Regime::HighDegeneracy).validate().unwrap();
        assert_eq!(scaling_factor(&high, 7), 7.0);
    }

    fn spec(regime: Regime) -> EnsembleSpec {
        let r = |p| Rational::from_integer(p);
        RawSpec::new(vec![r(1), r(2)], vec![0.5, 0.5], r(3), regime).validate().unwrap()
    }

    #[test]
    fn approximation_error_zero_at_reference() {
        let s = spec(Regime::Proportional);
        let x = FractionVector::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(approximation_error(&s, 64, &x).unwrap(), 0.0);
        let odd = FractionVector::new(vec![0.3, 0.7]).unwrap();
        assert!(matches!(approximation_error(&s, 64, &odd), Err(Error::NotRepresentable(64))));
    }

    #[test]
    fn approximation_error_decays() {
        let x = FractionVector::new(vec![0.3, 0.7]).unwrap();
        let high = spec(Regime::HighDegeneracy);
        let errs: Vec<f64> = [50, 100, 200].iter().map(|&n| approximation_error(&high, n, &x).unwrap()).collect();
        assert!(errs[0] > errs[1] && errs[1] > errs[2], "{errs:?}");

        let prop = spec(Regime::Proportional);
        let e1 = approximation_error(&prop, 50, &x).unwrap();
        let e4 = approximation_error(&prop, 200, &x).unwrap();
        assert!(e4 < e1, "{e1} {e4}");
    }

    fn central_diff<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], i: usize, h: f64) -> f64 {
        let mut up = x.to_vec();
        let mut down = x.to_vec();
        up[i] += h;
        down[i] -= h;
        (f(&up) - f(&down)) / (2.0 * h)
    }

    fn random_interior(rng: &mut impl rand::Rng, m: usize) -> Vec<f64> {
        let raw: Vec<f64> = (0..m).map(|_| rng.gen_range(0.05..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn finite_difference_gradient_and_hessian() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for regime in [Regime::HighDegeneracy, Regime::Proportional, Regime::LowDegeneracy] {
            for _ in 0..100 {
                let m = rng.gen_range(2..5);
                let g = random_interior(&mut rng, m);
                let model = EntropyModel::new(regime, g, Some(rng.gen_range(0.2..5.0)));
                let x = random_interior(&mut rng, m);
                let grad = model.gradient(&x).unwrap();
                let hess = model.hessian_diag(&x).unwrap();
                for i in 0..m {
                    let fd = central_diff(|y| model.value(y), &x, i, 1e-5);
                    assert!((fd - grad[i]).abs() <= 1e-6 * grad[i].abs().max(1.0), "{regime} grad {fd} {}", grad[i]);
                    let fd2 = central_diff(|y| model.gradient(y).unwrap()[i], &x, i, 1e-6);
                    assert!((fd2 - hess[i]).abs() <= 1e-5 * hess[i].abs().max(1.0), "{regime} hess {fd2} {}", hess[i]);
                    assert!(hess[i] < 0.0);
                }
            }
        }
    }
}
