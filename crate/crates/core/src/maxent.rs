//! Limiting maximum-entropy problem: maximise `s_l(x)` over the simplex
//! subject to `Σ εᵢxᵢ ≤ E`.
//!
//! For `E ≥ Σ gᵢεᵢ` the unconstrained maximiser `x = g` is feasible. Below that
//! threshold the energy constraint is active and the stationarity condition
//! `∇s_l(x) = λε + ν·1` with `λ > 0` gives
//!
//! * regime 1: `xᵢ = gᵢ·exp(-(λεᵢ + ν))`
//! * regime 2: `xᵢ = gᵢc / (exp(λεᵢ + ν) - 1)`
//! * regime 3: `xᵢ = gᵢ / (λεᵢ + ν)`
//!
//! with `(λ, ν)` fixed by `Σ xᵢ = 1` and `Σ εᵢxᵢ = E`.

use serde::Serialize;

use crate::ensemble::for_each_state;
use crate::entropy::EntropyModel;
use crate::error::{Error, Result};
use crate::instance::{threshold_energy, EnsembleSpec, Regime};
use crate::numeric::bisect;

/// Residual bound every returned solution satisfies.
pub const CONSTRAINT_TOL: f64 = 1e-10;
const BRACKET_DOUBLINGS: usize = 1100;
/// Fine-grid half width of the oracle refinement window.
const REFINE_HALF_WIDTH: i64 = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MaximumKind {
    Interior,
    Boundary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MaxEntSolution {
    pub x_star: Vec<f64>,
    pub kind: MaximumKind,
    pub lambda: f64,
    pub nu: f64,
    pub regime: Regime,
    /// `|Σx - 1|` and, for a boundary maximum, `|Σεx - E|`.
    pub residuals: [f64; 2],
}

pub fn classify_maximum(spec: &EnsembleSpec) -> Result<MaximumKind> {
    let e = spec.energy_cap_f64();
    let energies = spec.energies_f64();
    if e <= energies[0] {
        return Err(Error::EmptyDomain);
    }
    let threshold = threshold_energy(spec);
    // Absorb the rounding of Σgᵢεᵢ so that E exactly equal to the threshold
    // lands on the λ = 0 branch.
    if e >= threshold - 1e-12 * threshold.abs().max(1.0) {
        Ok(MaximumKind::Interior)
    } else {
        Ok(MaximumKind::Boundary)
    }
}

/// `ν` at the interior maximum `x = g`, where `λ = 0`.
pub fn interior_nu(regime: Regime, c: Option<f64>) -> f64 {
    match regime {
        Regime::HighDegeneracy => 0.0,
        Regime::Proportional => c.unwrap_or(1.0).ln_1p(),
        Regime::LowDegeneracy => 1.0,
    }
}

/// Limiting occupation numbers for given multipliers.
pub fn occupations(spec: &EnsembleSpec, lambda: f64, nu: f64) -> Vec<f64> {
    let c = spec.c().unwrap_or(1.0);
    spec.energies_f64()
        .iter()
        .zip(spec.weights())
        .map(|(&e, &g)| {
            let u = lambda * e + nu;
            match spec.regime() {
                Regime::HighDegeneracy => g * (-u).exp(),
                Regime::Proportional => g * c / u.exp_m1(),
                Regime::LowDegeneracy => g / u,
            }
        })
        .collect()
}

pub fn solve(spec: &EnsembleSpec) -> Result<MaxEntSolution> {
    let kind = classify_maximum(spec)?;
    let regime = spec.regime();
    if kind == MaximumKind::Interior {
        let x_star = spec.weights().to_vec();
        let sum_residual = (x_star.iter().sum::<f64>() - 1.0).abs();
        return Ok(MaxEntSolution {
            x_star,
            kind,
            lambda: 0.0,
            nu: interior_nu(regime, spec.c()),
            regime,
            residuals: [sum_residual, 0.0],
        });
    }
    let (lambda, nu, x_star) = match regime {
        Regime::HighDegeneracy => regime1(spec)?,
        Regime::Proportional => {
            let (l, n) = solve_regime2_multipliers(spec)?;
            (l, n, occupations(spec, l, n))
        }
        Regime::LowDegeneracy => regime3(spec)?,
    };
    let residuals = constraint_residuals(spec, &x_star);
    if residuals.iter().any(|&r| !(r < CONSTRAINT_TOL)) || x_star.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::NoConvergence { method: "solve", residuals });
    }
    Ok(MaxEntSolution { x_star, kind, lambda, nu, regime, residuals })
}

pub fn constraint_residuals(spec: &EnsembleSpec, x: &[f64]) -> [f64; 2] {
    let sum: f64 = x.iter().sum();
    let energy: f64 = x.iter().zip(spec.energies_f64()).map(|(a, e)| a * e).sum();
    [(sum - 1.0).abs(), (energy - spec.energy_cap_f64()).abs()]
}

/// `|∇s_l(x*)ᵢ - (λεᵢ + ν)|`, largest over `i`.
pub fn stationarity_residual(spec: &EnsembleSpec, sol: &MaxEntSolution) -> Result<f64> {
    let grad = EntropyModel::from_spec(spec).gradient(&sol.x_star)?;
    Ok(grad.iter().zip(spec.energies_f64()).map(|(d, e)| (d - (sol.lambda * e + sol.nu)).abs()).fold(0.0, f64::max))
}

/// Rejects specs whose maximum is strictly interior.
fn boundary_target(spec: &EnsembleSpec) -> Result<Option<f64>> {
    let e = spec.energy_cap_f64();
    match classify_maximum(spec)? {
        MaximumKind::Boundary => Ok(Some(e)),
        MaximumKind::Interior if e <= threshold_energy(spec) + 1e-12 => Ok(None),
        MaximumKind::Interior => Err(Error::WrongKind { expected: "Boundary" }),
    }
}

/// Grows `hi` geometrically until `f(hi)` has the sign of `want_positive`.
fn grow_bracket<F: FnMut(f64) -> f64>(mut f: F, start: f64, want_positive: bool) -> Result<f64> {
    let mut hi = start;
    for _ in 0..BRACKET_DOUBLINGS {
        let v = f(hi);
        if (v > 0.0) == want_positive && v != 0.0 {
            return Ok(hi);
        }
        hi *= 2.0;
        if !hi.is_finite() {
            break;
        }
    }
    Err(Error::NoConvergence { method: "bracket growth", residuals: [f64::NAN, f64::NAN] })
}

/// Regime 1: `ν(λ) = ln Σ gᵢe^{-λεᵢ}` and `λ` by bisection on the strictly
/// decreasing mean energy `E(λ)`.
pub fn solve_regime1_multipliers(spec: &EnsembleSpec) -> Result<(f64, f64)> {
    let (lambda, nu, _) = regime1(spec)?;
    Ok((lambda, nu))
}

fn regime1(spec: &EnsembleSpec) -> Result<(f64, f64, Vec<f64>)> {
    let Some(target) = boundary_target(spec)? else {
        return Ok((0.0, 0.0, spec.weights().to_vec()));
    };
    let energies = spec.energies_f64();
    let weights = spec.weights();
    let e1 = energies[0];
    // Shifted by ε₁ so large λ neither underflows nor overflows.
    let tilted = |lambda: f64| -> Vec<f64> {
        weights.iter().zip(&energies).map(|(&g, &e)| g * (-lambda * (e - e1)).exp()).collect()
    };
    let mean_energy = |lambda: f64| -> f64 {
        let w = tilted(lambda);
        let z: f64 = w.iter().sum();
        w.iter().zip(&energies).map(|(a, e)| a * e).sum::<f64>() / z
    };
    let spread = energies[energies.len() - 1] - e1;
    let hi = grow_bracket(|l| mean_energy(l) - target, 1.0 / spread, false)?;
    let lambda = bisect(|l| mean_energy(l) - target, 0.0, hi, 0.0);
    let w = tilted(lambda);
    let z: f64 = w.iter().sum();
    let nu = -lambda * e1 + z.ln();
    let x = w.iter().map(|a| a / z).collect();
    Ok((lambda, nu, x))
}

/// Regime 3: substitute `ν = λα`, bisect the increasing
/// `E(α) = Σ[gᵢεᵢ/(εᵢ+α)] / Σ[gᵢ/(εᵢ+α)]` over `α > -ε₁`, then
/// `λ = Σ gᵢ/(εᵢ+α)`.
pub fn solve_regime3_multipliers(spec: &EnsembleSpec) -> Result<(f64, f64)> {
    let (lambda, nu, _) = regime3(spec)?;
    Ok((lambda, nu))
}

fn regime3(spec: &EnsembleSpec) -> Result<(f64, f64, Vec<f64>)> {
    let Some(target) = boundary_target(spec)? else {
        return Ok((0.0, 1.0, spec.weights().to_vec()));
    };
    let energies = spec.energies_f64();
    let weights = spec.weights();
    let e1 = energies[0];
    // α = t - ε₁ with t > 0, so εᵢ + α = (εᵢ - ε₁) + t stays accurate.
    let mean_energy = |t: f64| -> f64 {
        if t == 0.0 {
            return e1;
        }
        let (mut num, mut den) = (0.0, 0.0);
        for (&g, &e) in weights.iter().zip(&energies) {
            let w = g / ((e - e1) + t);
            num += w * e;
            den += w;
        }
        num / den
    };
    let spread = energies[energies.len() - 1] - e1;
    let hi = grow_bracket(|t| mean_energy(t) - target, spread, true)?;
    let t = bisect(|t| mean_energy(t) - target, 0.0, hi, 0.0);
    if t <= 0.0 {
        return Err(Error::NoConvergence { method: "regime 3 bisection", residuals: [f64::NAN, f64::NAN] });
    }
    let shifted: Vec<f64> = energies.iter().map(|&e| (e - e1) + t).collect();
    let lambda: f64 = weights.iter().zip(&shifted).map(|(g, s)| g / s).sum();
    let alpha = t - e1;
    let nu = lambda * alpha;
    let x = weights.iter().zip(&shifted).map(|(g, s)| g / (lambda * s)).collect();
    Ok((lambda, nu, x))
}

/// Regime 2: damped Newton on `F(λ, ν) = (Σx - 1, Σεx - E)`, falling back to
/// nested bisection (outer `λ`, inner `ν` from `Σx = 1`).
pub fn solve_regime2_multipliers(spec: &EnsembleSpec) -> Result<(f64, f64)> {
    let Some(_) = boundary_target(spec)? else {
        return Ok((0.0, interior_nu(Regime::Proportional, spec.c())));
    };
    let (l1, _) = solve_regime1_multipliers(spec)?;
    let start = (l1, inner_nu(spec, l1)?);
    match regime2_newton_from(spec, start) {
        Ok(sol) => Ok(sol),
        Err(_) => regime2_nested(spec),
    }
}

fn regime2_residual(spec: &EnsembleSpec, lambda: f64, nu: f64) -> Option<[f64; 2]> {
    let energies = spec.energies_f64();
    if energies.iter().any(|&e| !(lambda * e + nu > 0.0)) {
        return None;
    }
    let x = occupations(spec, lambda, nu);
    let sum: f64 = x.iter().sum();
    let energy: f64 = x.iter().zip(&energies).map(|(a, e)| a * e).sum();
    Some([sum - 1.0, energy - spec.energy_cap_f64()])
}

fn norm(r: [f64; 2]) -> f64 {
    r[0].abs().max(r[1].abs())
}

/// Damped Newton for regime 2 from an explicit starting point. Keeps
/// `λεᵢ + ν > 0` and halves the step until the residual drops.
pub fn regime2_newton_from(spec: &EnsembleSpec, start: (f64, f64)) -> Result<(f64, f64)> {
    let energies = spec.energies_f64();
    let gc: Vec<f64> = spec.weights().iter().map(|g| g * spec.c().unwrap_or(1.0)).collect();
    let (mut lambda, mut nu) = start;
    let Some(mut res) = regime2_residual(spec, lambda, nu) else {
        return Err(Error::NoConvergence { method: "regime 2 Newton (infeasible start)", residuals: [f64::NAN; 2] });
    };
    for _ in 0..200 {
        if norm(res) < 1e-14 {
            break;
        }
        // dxᵢ/du = -gᵢc·eᵘ/(eᵘ-1)²
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for (&e, &w) in energies.iter().zip(&gc) {
            let u = lambda * e + nu;
            let em1 = u.exp_m1();
            let d = w * (em1 + 1.0) / (em1 * em1);
            s0 += d;
            s1 += d * e;
            s2 += d * e * e;
        }
        // J = -[[s1, s0], [s2, s1]] over (λ, ν)
        let det = s1 * s1 - s0 * s2;
        if det == 0.0 || !det.is_finite() {
            break;
        }
        let d_lambda = (s1 * res[0] - s0 * res[1]) / det;
        let d_nu = (s1 * res[1] - s2 * res[0]) / det;
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..80 {
            let (l, n) = (lambda + step * d_lambda, nu + step * d_nu);
            if let Some(r) = regime2_residual(spec, l, n) {
                if norm(r) <= (1.0 - 1e-4 * step) * norm(res) {
                    lambda = l;
                    nu = n;
                    res = r;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if norm(res) < CONSTRAINT_TOL {
        Ok((lambda, nu))
    } else {
        Err(Error::NoConvergence { method: "regime 2 Newton", residuals: res.map(f64::abs) })
    }
}

/// `ν` solving `Σ xᵢ(λ, ν) = 1` for fixed `λ ≥ 0`.
fn inner_nu(spec: &EnsembleSpec, lambda: f64) -> Result<f64> {
    let energies = spec.energies_f64();
    let e1 = energies[0];
    let gc: Vec<f64> = spec.weights().iter().map(|g| g * spec.c().unwrap_or(1.0)).collect();
    let total = |t: f64| -> f64 {
        if t == 0.0 {
            return f64::INFINITY;
        }
        energies.iter().zip(&gc).map(|(&e, &w)| w / (lambda * (e - e1) + t).exp_m1()).sum::<f64>() - 1.0
    };
    let hi = grow_bracket(total, 1.0, false)?;
    let t = bisect(total, 0.0, hi, 0.0);
    Ok(t - lambda * e1)
}

fn regime2_nested(spec: &EnsembleSpec) -> Result<(f64, f64)> {
    let target = spec.energy_cap_f64();
    let energies = spec.energies_f64();
    let gap = |lambda: f64| -> f64 {
        match inner_nu(spec, lambda) {
            Ok(nu) => {
                let x = occupations(spec, lambda, nu);
                x.iter().zip(&energies).map(|(a, e)| a * e).sum::<f64>() - target
            }
            Err(_) => f64::NAN,
        }
    };
    let spread = energies[energies.len() - 1] - energies[0];
    let hi = grow_bracket(gap, 1.0 / spread, false)?;
    let lambda = bisect(gap, 0.0, hi, 0.0);
    let nu = inner_nu(spec, lambda)?;
    let res = regime2_residual(spec, lambda, nu).unwrap_or([f64::NAN; 2]);
    if norm(res) < CONSTRAINT_TOL {
        Ok((lambda, nu))
    } else {
        Err(Error::NoConvergence { method: "regime 2 nested bisection", residuals: res.map(f64::abs) })
    }
}

/// Brute-force maximiser of `s_l` over the grid `{k/resolution}` on the
/// simplex intersected with the energy cap, refined once on a 10× finer
/// grid spanning ±5 coarse cells. Independent of the multiplier solvers.
///
/// Only grid points with every `xᵢ > 0` compete: the zero-summand convention
/// would otherwise reward the corners of `s₃`, whose true value there is -∞.
pub fn oracle_grid_maximize(spec: &EnsembleSpec, resolution: u32) -> Result<Vec<f64>> {
    let m = spec.levels();
    if m > 4 {
        return Err(Error::Domain(format!("grid oracle supports m ≤ 4, got {m}")));
    }
    if resolution == 0 || resolution > 2000 {
        return Err(Error::Domain(format!("grid resolution must be in 1..=2000, got {resolution}")));
    }
    let model = EntropyModel::from_spec(spec);
    let coarse = resolution as u64;
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let mut x = vec![0.0; m];
    for_each_state(spec, coarse, u64::MAX, |k| {
        if k.contains(&0) {
            return;
        }
        for (xi, &ki) in x.iter_mut().zip(k) {
            *xi = ki as f64 / coarse as f64;
        }
        let v = model.value(&x);
        if v > best.0 {
            best = (v, k.to_vec());
        }
    })?;

    if best.1.is_empty() {
        return Err(Error::Domain(format!("no interior grid point at resolution {resolution}")));
    }

    let fine = 10 * coarse;
    let centre: Vec<i64> = best.1.iter().map(|&k| 10 * k as i64).collect();
    let bound = spec.energy_bound(fine);
    let mut best_fine = (best.0, centre.clone());
    let mut offsets = vec![-REFINE_HALF_WIDTH; m - 1];
    loop {
        let mut counts: Vec<i64> = centre[..m - 1].iter().zip(&offsets).map(|(c, o)| c + o).collect();
        let used: i64 = counts.iter().sum();
        counts.push(fine as i64 - used);
        if counts.iter().all(|&k| k > 0) {
            let as_u32: Vec<u32> = counts.iter().map(|&k| k as u32).collect();
            if spec.integer_energy(&as_u32) <= bound {
                for (xi, &ki) in x.iter_mut().zip(&counts) {
                    *xi = ki as f64 / fine as f64;
                }
                let v = model.value(&x);
                if v > best_fine.0 {
                    best_fine = (v, counts);
                }
            }
        }
        // odometer over the m-1 free offsets
        let mut i = 0;
        while i < offsets.len() {
            offsets[i] += 1;
            if offsets[i] <= REFINE_HALF_WIDTH {
                break;
            }
            offsets[i] = -REFINE_HALF_WIDTH;
            i += 1;
        }
        if i == offsets.len() {
            break;
        }
    }
    Ok(best_fine.1.iter().map(|&k| k as f64 / fine as f64).collect())
}
