//! Subcommand bodies. Each returns the full output text; `main` decides where
//! it goes.

use std::time::Instant;

use microcanon::ensemble::{build_distribution_with_budget, exact_mean, mgf};
use microcanon::entropy::approximation_error;
use microcanon::fluctuations::{empirical_fluctuations, predict_boundary, predict_interior};
use microcanon::maxent::stationarity_residual;
use microcanon::sampler::{exact_sample, metropolis_chain, run_chain};
use microcanon::{solve, DMatrix, EnsembleSpec, Error, FractionVector, MaxEntSolution, MaximumKind, Occupancy};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::csv::Table;
use crate::failure::Failure;

/// Options shared by every subcommand.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub jobs: usize,
    pub seed: Option<u64>,
    pub budget: u64,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    #[serde(flatten)]
    solution: &'a MaxEntSolution,
    stationarity_residual: f64,
}

pub fn cmd_solve(cfg: &ExperimentConfig) -> Result<String, Failure> {
    let spec = cfg.spec()?;
    let solution = solve(&spec)?;
    let report = SolveReport { stationarity_residual: stationarity_residual(&spec, &solution)?, solution: &solution };
    Ok(serde_json::to_string_pretty(&report).expect("plain fields serialise") + "\n")
}

pub fn cmd_lln_sweep(cfg: &ExperimentConfig, opts: RunOptions) -> Result<String, Failure> {
    let spec = cfg.spec()?;
    let m = spec.levels();
    let ns = cfg.n_list()?;
    if let Some(bad) = cfg.xi_list.iter().find(|xi| xi.len() != m) {
        return Err(Failure::config("config", format!("xi_list entry of length {} for m = {m}", bad.len())));
    }
    let sol = solve(&spec)?;
    let limits: Vec<f64> = cfg.xi_list.iter().map(|xi| dot(xi, &sol.x_star).exp()).collect();

    let rows = per_n(ns, opts.jobs, |n| {
        let start = Instant::now();
        let (method, mean, mgfs) = match build_distribution_with_budget(&spec, n, opts.budget) {
            Ok(dist) => {
                let mean = exact_mean(&dist).as_slice().to_vec();
                let mgfs: Vec<f64> = cfg.xi_list.iter().map(|xi| mgf(&dist, xi)).collect();
                ("exact", mean, mgfs)
            }
            Err(Error::BudgetExceeded { .. }) if cfg.sampler_fallback => {
                let (mean, mgfs) = chain_estimates(cfg, &spec, n, opts.seed)?;
                ("metropolis", mean, mgfs)
            }
            Err(e) => return Err(e.into()),
        };
        let max_err = mean.iter().zip(&sol.x_star).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut row = vec![n.to_string(), method.to_string(), fmt(max_err)];
        row.extend(mgfs.iter().zip(&limits).map(|(a, b)| fmt((a - b).abs())));
        row.push(start.elapsed().as_millis().to_string());
        Ok(row)
    })?;

    let mut header = vec!["N".to_string(), "method".into(), "max_err".into()];
    header.extend((1..=cfg.xi_list.len()).map(|k| format!("mgf_err_{k}")));
    header.push("wall_ms".into());
    Ok(Table { header, rows }.render())
}

/// Chain averages of `X_N` and of `exp(ξᵀX_N)` for every probe.
fn chain_estimates(
    cfg: &ExperimentConfig,
    spec: &EnsembleSpec,
    n: u64,
    seed: Option<u64>,
) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let m = spec.levels();
    let chain = cfg.chain(n, m, seed)?;
    let mut mean = vec![0.0; m];
    let mut mgfs = vec![0.0; cfg.xi_list.len()];
    let mut visits = 0u64;
    run_chain(spec, n, &chain, |counts| {
        visits += 1;
        let x: Vec<f64> = counts.iter().map(|&k| k as f64 / n as f64).collect();
        for (acc, v) in mean.iter_mut().zip(&x) {
            *acc += v;
        }
        for (acc, xi) in mgfs.iter_mut().zip(&cfg.xi_list) {
            *acc += dot(xi, &x).exp();
        }
    })?;
    let k = visits as f64;
    Ok((mean.iter().map(|v| v / k).collect(), mgfs.iter().map(|v| v / k).collect()))
}

pub fn cmd_fluct_check(cfg: &ExperimentConfig, opts: RunOptions) -> Result<String, Failure> {
    let spec = cfg.spec()?;
    let m = spec.levels();
    let ns = cfg.n_list()?;
    let sol = solve(&spec)?;
    match sol.kind {
        MaximumKind::Interior => {
            let pred = predict_interior(&spec)?;
            let rows = per_n(ns, opts.jobs, |n| {
                let dist = build_distribution_with_budget(&spec, n, opts.budget)?;
                let summary = empirical_fluctuations(&dist, &sol, &spec)?;
                let mut row = vec![n.to_string(), fmt(summary.scale)];
                row.extend(upper_triangle(&summary.covariance).into_iter().map(fmt));
                row.extend(upper_triangle(&pred.covariance).into_iter().map(fmt));
                Ok(row)
            })?;
            let pairs = upper_pairs(m - 1);
            let mut header = vec!["N".to_string(), "scale".into()];
            header.extend(pairs.iter().map(|(i, j)| format!("emp_cov_{i}_{j}")));
            header.extend(pairs.iter().map(|(i, j)| format!("pred_cov_{i}_{j}")));
            Ok(Table { header, rows }.render())
        }
        MaximumKind::Boundary => {
            let q = spec.denominator() as u64;
            if let Some(n) = ns.iter().find(|&&n| n % q != 0) {
                return Err(Failure::config(
                    "config",
                    format!("boundary runs need N divisible by q = {q}, got N = {n}"),
                ));
            }
            let layers = cfg.layers.unwrap_or(2);
            let rows = per_n(ns, opts.jobs, |n| {
                let pred = predict_boundary(&spec, n)?;
                let dist = build_distribution_with_budget(&spec, n, opts.budget)?;
                let summary = empirical_fluctuations(&dist, &sol, &spec)?;
                let mut row = vec![n.to_string(), fmt(summary.scale)];
                row.extend((0..layers).map(|k| summary.layer_ratios.get(k).map_or_else(|| "nan".into(), |&r| fmt(r))));
                row.push(fmt(pred.layer_log_ratio.expect("boundary prediction carries a ratio").exp()));
                row.extend(upper_triangle(&summary.in_plane_covariance).into_iter().map(fmt));
                row.extend(upper_triangle(&pred.covariance).into_iter().map(fmt));
                Ok(row)
            })?;
            let pairs = upper_pairs(m.saturating_sub(2));
            let mut header = vec!["N".to_string(), "scale".into()];
            header.extend((1..=layers).map(|k| format!("layer_ratio_{k}")));
            header.push("pred_layer_ratio".into());
            header.extend(pairs.iter().map(|(i, j)| format!("emp_inplane_{i}_{j}")));
            header.extend(pairs.iter().map(|(i, j)| format!("pred_inplane_{i}_{j}")));
            Ok(Table { header, rows }.render())
        }
    }
}

pub fn cmd_entropy_probe(cfg: &ExperimentConfig, opts: RunOptions) -> Result<String, Failure> {
    let spec = cfg.spec()?;
    let ns = cfg.n_list()?;
    let x = cfg.x.clone().ok_or_else(|| Failure::config("config", "`x` is required for entropy-probe".into()))?;
    let x = FractionVector::in_domain(&spec, x).map_err(|e| Failure::config("config", format!("x: {e}")))?;
    let rows = per_n(ns, opts.jobs, |n| {
        let err = approximation_error(&spec, n, &x)?;
        Ok(vec![n.to_string(), spec.total_degeneracy(n).to_string(), fmt(err)])
    })?;
    Ok(Table { header: vec!["N".into(), "G".into(), "error".into()], rows }.render())
}

pub fn cmd_sample(cfg: &ExperimentConfig, opts: RunOptions) -> Result<String, Failure> {
    let spec = cfg.spec()?;
    let m = spec.levels();
    let ns = cfg.n_list()?;
    let exact = match cfg.method.as_deref().unwrap_or("metropolis") {
        "exact" => true,
        "metropolis" => false,
        other => return Err(Failure::config("config", format!("unknown sampling method {other:?}"))),
    };
    let per_n_rows = per_n(ns, opts.jobs, |n| {
        let draws: Vec<Occupancy> = if exact {
            let count =
                cfg.count.ok_or_else(|| Failure::config("config", "`count` is required for exact sampling".into()))?;
            let dist = build_distribution_with_budget(&spec, n, opts.budget)?;
            exact_sample(&dist, count, opts.seed.or(cfg.seed).unwrap_or(0))
        } else {
            metropolis_chain(&spec, n, &cfg.chain(n, m, opts.seed)?)?
        };
        Ok(draws
            .iter()
            .enumerate()
            .map(|(k, occ)| {
                let mut row = vec![n.to_string(), k.to_string()];
                row.extend(occ.counts().iter().map(|c| c.to_string()));
                row
            })
            .collect::<Vec<_>>())
    })?;
    let mut header = vec!["N".to_string(), "draw".into()];
    header.extend((1..=m).map(|i| format!("N{i}")));
    Ok(Table { header, rows: per_n_rows.into_iter().flatten().collect() }.render())
}

/// Runs `work` for every `N` on at most `jobs` threads. Results keep the
/// order of `ns`; the first failure in that order wins.
fn per_n<T, F>(ns: &[u64], jobs: usize, work: F) -> Result<Vec<T>, Failure>
where
    T: Send,
    F: Fn(u64) -> Result<T, Failure> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Failure::config("jobs", format!("cannot start worker pool: {e}")))?;
    let results: Vec<Result<T, Failure>> = pool.install(|| ns.par_iter().map(|&n| work(n)).collect());
    results.into_iter().collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fmt(v: f64) -> String {
    format!("{v:e}")
}

fn upper_pairs(k: usize) -> Vec<(usize, usize)> {
    (0..k).flat_map(|i| (i..k).map(move |j| (i + 1, j + 1))).collect()
}

fn upper_triangle(a: &DMatrix<f64>) -> Vec<f64> {
    upper_pairs(a.nrows()).into_iter().map(|(i, j)| a[(i - 1, j - 1)]).collect()
}
