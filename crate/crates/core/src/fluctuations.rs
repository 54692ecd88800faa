//! Limiting fluctuation laws around the maximiser `x*`, and the matching
//! empirical summaries of exact distributions.
//!
//! Coordinates are reduced to the first `m-1` fractions via
//! `x_m = 1 - Σ_{i<m} xᵢ`. For an interior maximum `√h(N)·(X_N - x*)` is
//! asymptotically normal with covariance `(-H_red)⁻¹`. For a boundary maximum
//! the reduced space is rotated so its first axis is normal to the energy
//! hyperplane: along that axis the law is geometric over energy-slack
//! layers, in the remaining `m-2` directions it is Gaussian.

use nalgebra::{DMatrix, DVector};
use num_integer::Integer;

use crate::ensemble::{exact_covariance, exact_mean, layer_decomposition, ExactDistribution};
use crate::entropy::{scaling_factor, EntropyModel};
use crate::error::{Error, Result};
use crate::instance::EnsembleSpec;
use crate::maxent::{solve, MaxEntSolution, MaximumKind};
use crate::numeric::compensated_sum;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FluctuationKind {
    InteriorGaussian,
    BoundaryMixture,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationPrediction {
    pub kind: FluctuationKind,
    /// `(m-1)×(m-1)` for an interior maximum, the `(m-2)×(m-2)` in-plane
    /// block for a boundary one.
    pub covariance: DMatrix<f64>,
    /// Log of the ratio between consecutive layer masses (boundary only).
    pub layer_log_ratio: Option<f64>,
    /// Columns: unit energy normal, then in-plane directions (boundary only).
    pub rotation: Option<DMatrix<f64>>,
}

/// `H(i,j) = s″(xᵢ)·δᵢⱼ + s″(x_m)` over the first `m-1` coordinates.
pub fn reduced_hessian(model: &EntropyModel, x: &[f64]) -> Result<DMatrix<f64>> {
    let diag = model.hessian_diag(x)?;
    let k = x.len().saturating_sub(1);
    let last = diag.last().copied().unwrap_or(0.0);
    Ok(DMatrix::from_fn(k, k, |i, j| if i == j { diag[i] + last } else { last }))
}

/// Inverse of the negated matrix; fails unless `-h` is positive definite.
fn inverse_negated(h: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if h.nrows() == 0 {
        return Ok(h);
    }
    let chol = (-h).cholesky().ok_or_else(|| Error::Domain("negative Hessian is not positive definite".into()))?;
    Ok(chol.inverse())
}

pub fn predict_interior(spec: &EnsembleSpec) -> Result<FluctuationPrediction> {
    let sol = solve(spec)?;
    if sol.kind != MaximumKind::Interior {
        return Err(Error::WrongKind { expected: "Interior" });
    }
    let model = EntropyModel::from_spec(spec);
    let covariance = inverse_negated(reduced_hessian(&model, &sol.x_star)?)?;
    Ok(FluctuationPrediction {
        kind: FluctuationKind::InteriorGaussian,
        covariance,
        layer_log_ratio: None,
        rotation: None,
    })
}

/// `(εᵢ - ε_m)` for `i < m`: normal of the energy hyperplane in reduced
/// coordinates.
pub fn reduced_energy_normal(spec: &EnsembleSpec) -> DVector<f64> {
    let e = spec.energies_f64();
    let last = e[e.len() - 1];
    DVector::from_iterator(e.len() - 1, e[..e.len() - 1].iter().map(|v| v - last))
}

/// Orthonormal basis of the reduced space, first column the unit energy
/// normal, the rest Gram–Schmidt over the canonical directions.
pub fn rotation_basis(spec: &EnsembleSpec) -> Result<DMatrix<f64>> {
    let m = spec.levels();
    if m < 2 {
        return Err(Error::Domain("rotation needs at least two levels".into()));
    }
    let normal = reduced_energy_normal(spec);
    let len = normal.norm();
    if len == 0.0 {
        return Err(Error::DegenerateNormal);
    }
    let dim = m - 1;
    let mut basis: Vec<DVector<f64>> = vec![normal / len];
    for axis in 0..dim {
        if basis.len() == dim {
            break;
        }
        let mut v = DVector::from_fn(dim, |i, _| if i == axis { 1.0 } else { 0.0 });
        // two passes of modified Gram–Schmidt
        for _ in 0..2 {
            for b in &basis {
                let proj = b.dot(&v);
                v -= proj * b;
            }
        }
        let n = v.norm();
        if n > 1e-8 {
            basis.push(v / n);
        }
    }
    Ok(DMatrix::from_columns(&basis))
}

/// Gcd of the integer level-energy gaps: the spacing of attainable total
/// energies, in units of `1/q`.
pub fn layer_spacing(spec: &EnsembleSpec) -> i64 {
    let units = spec.level_units();
    units.iter().fold(0i64, |acc, &u| acc.gcd(&(u - units[0])))
}

pub fn predict_boundary(spec: &EnsembleSpec, n: u64) -> Result<FluctuationPrediction> {
    let sol = solve(spec)?;
    if sol.kind != MaximumKind::Boundary {
        return Err(Error::WrongKind { expected: "Boundary" });
    }
    let rotation = rotation_basis(spec)?;
    let model = EntropyModel::from_spec(spec);
    let m = spec.levels();

    // Directional derivative of s_l along the inward normal.
    let grad = model.gradient(&sol.x_star)?;
    let reduced_grad = DVector::from_iterator(m - 1, grad[..m - 1].iter().map(|g| g - grad[m - 1]));
    let inward = -rotation.column(0);
    let slope = reduced_grad.dot(&inward);

    // One layer moves the total energy by spacing/q, i.e. the v₁ coordinate
    // by spacing/(q·N·|normal|).
    let normal_len = reduced_energy_normal(spec).norm();
    let step = layer_spacing(spec) as f64 / (spec.denominator() as f64 * n as f64 * normal_len);
    let layer_log_ratio = scaling_factor(spec, n) * step * slope;

    let hessian = reduced_hessian(&model, &sol.x_star)?;
    let in_plane = rotation.columns(1, m - 2).into_owned();
    let block = in_plane.transpose() * hessian * &in_plane;
    let covariance = inverse_negated(block)?;
    Ok(FluctuationPrediction {
        kind: FluctuationKind::BoundaryMixture,
        covariance,
        layer_log_ratio: Some(layer_log_ratio),
        rotation: Some(rotation),
    })
}

/// Fluctuation moments of an exact distribution around a limiting solution.
#[derive(Debug, Clone, PartialEq)]
pub struct FluctuationSummary {
    pub kind: MaximumKind,
    /// `h(N)` used to scale deviations.
    pub scale: f64,
    /// `h(N)·Cov(X_N)`, all `m` coordinates.
    pub full_covariance: DMatrix<f64>,
    /// `h(N)·Cov` of the first `m-1` coordinates (interior kind).
    pub covariance: DMatrix<f64>,
    /// `√h(N)·(E[X_N] - x*)`, all coordinates.
    pub scaled_bias: DVector<f64>,
    /// Standardised third moment of each reduced coordinate (interior kind).
    pub skewness: Vec<f64>,
    /// Boundary kind: masses of the energy-slack layers from the boundary in.
    pub layer_masses: Vec<f64>,
    pub layer_ratios: Vec<f64>,
    /// Boundary kind: `h(N)·Cov` of the in-plane rotated coordinates.
    pub in_plane_covariance: DMatrix<f64>,
}

pub fn empirical_fluctuations(
    dist: &ExactDistribution,
    sol: &MaxEntSolution,
    spec: &EnsembleSpec,
) -> Result<FluctuationSummary> {
    let n = dist.n();
    let m = spec.levels();
    let scale = scaling_factor(spec, n);
    let full = exact_covariance(dist) * scale;
    let mean = exact_mean(dist);
    let scaled_bias = (&mean - DVector::from_column_slice(&sol.x_star)) * scale.sqrt();
    let reduced = full.view((0, 0), (m - 1, m - 1)).into_owned();

    let mut summary = FluctuationSummary {
        kind: sol.kind,
        scale,
        full_covariance: full,
        covariance: DMatrix::zeros(0, 0),
        scaled_bias,
        skewness: Vec::new(),
        layer_masses: Vec::new(),
        layer_ratios: Vec::new(),
        in_plane_covariance: DMatrix::zeros(0, 0),
    };
    match sol.kind {
        MaximumKind::Interior => {
            summary.skewness = (0..m - 1).map(|i| standardized_third_moment(dist, i, mean[i])).collect();
            summary.covariance = reduced;
        }
        MaximumKind::Boundary => {
            let layers = layer_decomposition(dist);
            summary.layer_masses = layers.masses();
            summary.layer_ratios = layers.ratios();
            if m >= 3 {
                let rotation = rotation_basis(spec)?;
                let in_plane = rotation.columns(1, m - 2).into_owned();
                summary.in_plane_covariance = in_plane.transpose() * &reduced * &in_plane;
            } else {
                summary.in_plane_covariance = DMatrix::zeros(0, 0);
            }
        }
    }
    Ok(summary)
}

fn standardized_third_moment(dist: &ExactDistribution, i: usize, mean: f64) -> f64 {
    let n = dist.n() as f64;
    let centred = |s: usize| dist.states()[s].counts()[i] as f64 / n - mean;
    let var = compensated_sum((0..dist.len()).map(|s| dist.pmf()[s] * centred(s).powi(2)));
    if var == 0.0 {
        return 0.0;
    }
    let third = compensated_sum((0..dist.len()).map(|s| dist.pmf()[s] * centred(s).powi(3)));
    third / var.powf(1.5)
}

/// Layer masses obtained by grouping states on their rotated `v₁`
/// coordinate, ordered from the energy boundary inward.
pub fn layer_masses_by_projection(dist: &ExactDistribution, rotation: &DMatrix<f64>) -> Vec<f64> {
    let m = dist.spec().levels();
    let axis = rotation.column(0);
    let mut keyed: Vec<(f64, f64)> = (0..dist.len())
        .map(|s| {
            let x = dist.fractions(s);
            let v1: f64 = (0..m - 1).map(|i| axis[i] * x[i]).sum();
            (v1, dist.pmf()[s])
        })
        .collect();
    // Energy is ε_m + |normal|·v₁, so the boundary has the largest v₁.
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
    let gap = 0.5 / (dist.n() as f64 * reduced_energy_normal(dist.spec()).norm() * dist.spec().denominator() as f64);
    let mut masses: Vec<f64> = Vec::new();
    let mut current = f64::NAN;
    for (v1, p) in keyed {
        if masses.is_empty() || (current - v1).abs() > gap {
            masses.push(p);
            current = v1;
        } else {
            *masses.last_mut().unwrap() += p;
        }
    }
    masses
}
