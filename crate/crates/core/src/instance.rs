//! Problem instances: level energies, weights, energy cap and degeneracy
//! schedule, plus the integer lattice types shared by every other module.

use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Rational = Ratio<i64>;

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Asymptotic behaviour of `G(N)/N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `G(N)/N → ∞`, Maxwell-Boltzmann limit.
    HighDegeneracy,
    /// `G(N)/N → c`, Bose-Einstein limit.
    Proportional,
    /// `G(N)/N → 0`, Zipf-Mandelbrot limit.
    LowDegeneracy,
}

impl Regime {
    pub fn index(self) -> usize {
        match self {
            Regime::HighDegeneracy => 1,
            Regime::Proportional => 2,
            Regime::LowDegeneracy => 3,
        }
    }

    pub fn default_schedule(self, c: Option<f64>) -> Schedule {
        match self {
            Regime::HighDegeneracy => Schedule::Power { p: 2.0 },
            Regime::Proportional => Schedule::Linear { c: c.unwrap_or(1.0) },
            Regime::LowDegeneracy => Schedule::Power { p: 0.5 },
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Regime::HighDegeneracy => "HighDegeneracy",
            Regime::Proportional => "Proportional",
            Regime::LowDegeneracy => "LowDegeneracy",
        };
        f.write_str(name)
    }
}

/// Rule mapping the particle count `N` to the total degeneracy `G(N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    /// `G(N) = ⌈N^p⌉`.
    Power { p: f64 },
    /// `G(N) = ⌈cN⌉`.
    Linear { c: f64 },
}

impl Schedule {
    pub fn total(&self, n: u64) -> u64 {
        let raw = match *self {
            Schedule::Power { p } => (n as f64).powf(p),
            Schedule::Linear { c } => c * n as f64,
        };
        ceil_snapped(raw)
    }
}

/// Ceiling that treats values within a few ulps of an integer as that
/// integer, so `100^0.5` is 10 and not 11.
fn ceil_snapped(v: f64) -> u64 {
    let nearest = v.round();
    if (v - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as u64
    } else {
        v.ceil() as u64
    }
}

/// Unvalidated problem description. Turn it into an [`EnsembleSpec`] with
/// [`validate_spec`].
#[derive(Debug, Clone, PartialEq)]
pub struct RawSpec {
    pub energies: Vec<Rational>,
    pub weights: Vec<f64>,
    pub energy_cap: Rational,
    pub regime: Regime,
    /// Defaults to [`Regime::default_schedule`] when absent.
    pub schedule: Option<Schedule>,
    /// Required iff the regime is [`Regime::Proportional`].
    pub c: Option<f64>,
}

impl RawSpec {
    pub fn new(energies: Vec<Rational>, weights: Vec<f64>, energy_cap: Rational, regime: Regime) -> Self {
        let c = (regime == Regime::Proportional).then_some(1.0);
        RawSpec { energies, weights, energy_cap, regime, schedule: None, c }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = Some(c);
        self
    }

    pub fn with_schedule(mut self, schedule: Schedule) -> Self {
        self.schedule = Some(schedule);
        self
    }

    pub fn validate(self) -> Result<EnsembleSpec> {
        validate_spec(self)
    }
}

/// A validated micro-canonical problem instance. Immutable.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSpec {
    energies: Vec<Rational>,
    /// `q·εᵢ`, all integers.
    level_units: Vec<i64>,
    /// Lowest common denominator of the level energies.
    denominator: i64,
    weights: Vec<f64>,
    energy_cap: Rational,
    regime: Regime,
    schedule: Schedule,
    c: Option<f64>,
}

/// Checks every instance invariant and reports all violations at once.
pub fn validate_spec(raw: RawSpec) -> Result<EnsembleSpec> {
    let mut problems = Vec::new();
    let m = raw.energies.len();
    if m == 0 {
        problems.push("no energy levels (m must be ≥ 1)".to_string());
    }
    if raw.weights.len() != m {
        problems.push(format!("weights has {} entries but there are {} levels", raw.weights.len(), m));
    }
    if raw.energies.windows(2).any(|w| w[0] >= w[1]) {
        problems.push("energies not strictly increasing".to_string());
    }
    if raw.weights.iter().any(|&g| !(g > 0.0 && g <= 1.0)) {
        problems.push("weights must lie in (0, 1]".to_string());
    }
    let weight_sum: f64 = raw.weights.iter().sum();
    if (weight_sum - 1.0).abs() > WEIGHT_SUM_TOL {
        problems.push(format!("weights sum to {weight_sum}, not 1"));
    }
    if let Some(&e1) = raw.energies.first() {
        if raw.energy_cap <= e1 {
            problems.push("empty domain: E ≤ ε₁".to_string());
        }
    }

    match (raw.regime, raw.c) {
        (Regime::Proportional, None) => problems.push("regime Proportional requires c".to_string()),
        (Regime::Proportional, Some(c)) if !(c > 0.0 && c.is_finite()) => {
            problems.push(format!("c must be positive, got {c}"))
        }
        (Regime::HighDegeneracy | Regime::LowDegeneracy, Some(_)) => {
            problems.push(format!("c is only meaningful for Proportional, regime is {}", raw.regime))
        }
        _ => {}
    }
    let schedule = raw.schedule.unwrap_or_else(|| raw.regime.default_schedule(raw.c));
    if let Some(problem) = schedule_mismatch(raw.regime, schedule, raw.c) {
        problems.push(problem);
    }

    if !problems.is_empty() {
        return Err(Error::InvalidSpec(problems));
    }

    let denominator = raw.energies.iter().fold(1i64, |acc, e| acc.lcm(e.denom()));
    let level_units = raw.energies.iter().map(|e| (e * denominator).to_integer()).collect();

    Ok(EnsembleSpec {
        energies: raw.energies,
        level_units,
        denominator,
        weights: raw.weights,
        energy_cap: raw.energy_cap,
        regime: raw.regime,
        schedule,
        c: raw.c,
    })
}

fn schedule_mismatch(regime: Regime, schedule: Schedule, c: Option<f64>) -> Option<String> {
    match schedule {
        Schedule::Power { p } if !(p > 0.0 && p.is_finite()) => {
            return Some(format!("schedule exponent must be positive, got {p}"))
        }
        Schedule::Linear { c: sc } if !(sc > 0.0 && sc.is_finite()) => {
            return Some(format!("schedule slope must be positive, got {sc}"))
        }
        _ => {}
    }
    // Trend of G(N)/N between two large N decides the asymptotic class.
    let (n1, n2) = (10_000u64, 1_000_000u64);
    let r1 = schedule.total(n1) as f64 / n1 as f64;
    let r2 = schedule.total(n2) as f64 / n2 as f64;
    let consistent = match regime {
        Regime::HighDegeneracy => r2 > r1 && r2 > 1.0,
        Regime::LowDegeneracy => r2 < r1 && r2 < 1.0,
        Regime::Proportional => {
            let c = c.unwrap_or(f64::NAN);
            (r2 - c).abs() <= (r1 - c).abs() && (r2 - c).abs() < 1e-3 * c
        }
    };
    (!consistent).then(|| format!("regime/schedule mismatch: {regime} with {schedule:?}"))
}

impl EnsembleSpec {
    pub fn levels(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[Rational] {
        &self.energies
    }

    pub fn energies_f64(&self) -> Vec<f64> {
        self.energies.iter().map(|&e| to_f64(e)).collect()
    }

    /// Level energies as integers in units of `1/q`.
    pub fn level_units(&self) -> &[i64] {
        &self.level_units
    }

    /// Common denominator `q` of the level energies.
    pub fn denominator(&self) -> i64 {
        self.denominator
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn energy_cap(&self) -> Rational {
        self.energy_cap
    }

    pub fn energy_cap_f64(&self) -> f64 {
        to_f64(self.energy_cap)
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn schedule(&self) -> Schedule {
        self.schedule
    }

    pub fn c(&self) -> Option<f64> {
        self.c
    }

    pub fn total_degeneracy(&self, n: u64) -> u64 {
        self.schedule.total(n)
    }

    /// Integer energy bound `⌊q·E·N⌋`; a state is admissible iff
    /// `Σ (q·εᵢ)·Nᵢ` does not exceed it.
    pub fn energy_bound(&self, n: u64) -> i128 {
        let num = *self.energy_cap.numer() as i128 * self.denominator as i128 * n as i128;
        Integer::div_floor(&num, &(*self.energy_cap.denom() as i128))
    }

    /// `Σ (q·εᵢ)·Nᵢ` for a count vector.
    pub fn integer_energy(&self, counts: &[u32]) -> i128 {
        self.level_units.iter().zip(counts).map(|(&u, &k)| u as i128 * k as i128).sum()
    }

    /// Same as `self` with a different energy cap, revalidated.
    pub fn with_energy_cap(&self, energy_cap: Rational) -> Result<EnsembleSpec> {
        validate_spec(RawSpec {
            energies: self.energies.clone(),
            weights: self.weights.clone(),
            energy_cap,
            regime: self.regime,
            schedule: Some(self.schedule),
            c: self.c,
        })
    }
}

pub fn to_f64(r: Rational) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// Parses `"p/q"`, an integer, or a finite decimal such as `"1.4"` exactly.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Domain(format!("not a rational number: {s:?}"));
    if let Some((p, q)) = s.split_once('/') {
        let p: i64 = p.trim().parse().map_err(|_| bad())?;
        let q: i64 = q.trim().parse().map_err(|_| bad())?;
        if q == 0 {
            return Err(bad());
        }
        return Ok(Ratio::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || frac.len() > 15 {
            return Err(bad());
        }
        let negative = int.starts_with('-');
        let int_part: i64 = match int.trim_start_matches(['-', '+']) {
            "" => 0,
            digits => digits.parse().map_err(|_| bad())?,
        };
        let scale = 10i64.pow(frac.len() as u32);
        let frac_part: i64 = frac.parse().map_err(|_| bad())?;
        let magnitude = int_part.checked_mul(scale).and_then(|v| v.checked_add(frac_part)).ok_or_else(bad)?;
        let numer = if negative { -magnitude } else { magnitude };
        return Ok(Ratio::new(numer, scale));
    }
    s.parse::<i64>().map(Ratio::from_integer).map_err(|_| bad())
}

/// Sum of `gᵢ·εᵢ`: the energy of the unconstrained maximiser `x = g`.
pub fn threshold_energy(spec: &EnsembleSpec) -> f64 {
    spec.weights.iter().zip(&spec.energies).map(|(&g, &e)| g * to_f64(e)).sum()
}

/// Integer lattice point `(N₁,…,N_m)` of the sample space at fixed `N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Occupancy {
    counts: Vec<u32>,
}

impl Occupancy {
    /// Checks `Σ Nᵢ = N` and the energy cap against `spec`.
    pub fn new(spec: &EnsembleSpec, n: u64, counts: Vec<u32>) -> Result<Self> {
        if counts.len() != spec.levels() {
            return Err(Error::Domain(format!("occupancy has {} levels, spec has {}", counts.len(), spec.levels())));
        }
        let total: u64 = counts.iter().map(|&k| k as u64).sum();
        if total != n {
            return Err(Error::Domain(format!("occupancy sums to {total}, expected N = {n}")));
        }
        if spec.integer_energy(&counts) > spec.energy_bound(n) {
            return Err(Error::Domain("occupancy violates the energy cap".into()));
        }
        Ok(Occupancy { counts })
    }

    /// Caller guarantees the invariants; checked in debug builds.
    pub(crate) fn from_trusted(spec: &EnsembleSpec, n: u64, counts: Vec<u32>) -> Self {
        debug_assert!(Occupancy::new(spec, n, counts.clone()).is_ok());
        Occupancy { counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&k| k as u64).sum()
    }

    pub fn fractions(&self) -> FractionVector {
        let n = self.total() as f64;
        FractionVector(self.counts.iter().map(|&k| k as f64 / n).collect())
    }
}

/// Point of the simplex, usually `Nᵢ/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionVector(Vec<f64>);

impl FractionVector {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(Error::Domain("fractions must lie in [0, 1]".into()));
        }
        let sum: f64 = x.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::Domain(format!("fractions sum to {sum}, not 1")));
        }
        Ok(FractionVector(x))
    }

    /// Like [`FractionVector::new`], additionally requiring `Σ εᵢxᵢ ≤ E`.
    pub fn in_domain(spec: &EnsembleSpec, x: Vec<f64>) -> Result<Self> {
        if x.len() != spec.levels() {
            return Err(Error::Domain("dimension mismatch".into()));
        }
        let energy: f64 = x.iter().zip(spec.energies_f64()).map(|(a, e)| a * e).sum();
        if energy > spec.energy_cap_f64() + WEIGHT_SUM_TOL {
            return Err(Error::Domain(format!("Σεx = {energy} exceeds E")));
        }
        FractionVector::new(x)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Per-level split of the total degeneracy `G(N)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DegeneracyAssignment {
    pub total: u64,
    pub per_level: Vec<u64>,
}

/// `Gᵢ ≈ gᵢ·G(N)` by largest-remainder rounding, each level at least 1.
pub fn degeneracies_for(spec: &EnsembleSpec, n: u64) -> Result<DegeneracyAssignment> {
    if n == 0 {
        return Err(Error::Domain("N must be ≥ 1".into()));
    }
    let total = spec.total_degeneracy(n);
    split_degeneracy(spec.weights(), total).map_err(|_| Error::TooFewDegeneracies { n, total, levels: spec.levels() })
}

pub(crate) fn split_degeneracy(weights: &[f64], total: u64) -> std::result::Result<DegeneracyAssignment, ()> {
    let m = weights.len();
    if total < m as u64 {
        return Err(());
    }
    let exact: Vec<f64> = weights.iter().map(|&g| g * total as f64).collect();
    let mut per_level: Vec<u64> = exact.iter().map(|v| v.floor() as u64).collect();
    let assigned: u64 = per_level.iter().sum();
    let mut order: Vec<usize> = (0..m).collect();
    // Largest fractional part first; ties go to the lower level index.
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned) as usize) {
        per_level[i] += 1;
    }
    // Floor at one: borrow from the currently largest level.
    for i in 0..m {
        if per_level[i] == 0 {
            let donor = (0..m).max_by_key(|&j| (per_level[j], std::cmp::Reverse(j))).unwrap();
            per_level[donor] -= 1;
            per_level[i] = 1;
        }
    }
    debug_assert_eq!(per_level.iter().sum::<u64>(), total);
    Ok(DegeneracyAssignment { total, per_level })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(p: i64, q: i64) -> Rational {
        Ratio::new(p, q)
    }

    fn two_level(cap: Rational) -> RawSpec {
        RawSpec::new(vec![r(1, 1), r(2, 1)], vec![0.5, 0.5], cap, Regime::Proportional).with_c(1.0)
    }

    #[test]
    fn accepts_valid_spec() {
        let spec = two_level(r(7, 5)).validate().unwrap();
        assert_eq!(spec.levels(), 2);
        assert_eq!(spec.denominator(), 1);
        assert_eq!(spec.level_units(), &[1, 2]);
    }

    #[test]
    fn rejects_non_monotone_energies() {
        let mut raw = two_level(r(7, 5));
        raw.energies = vec![r(2, 1), r(1, 1)];
        raw.energy_cap = r(3, 1);
        match raw.validate() {
            Err(Error::InvalidSpec(v)) => assert!(v.iter().any(|p| p == "energies not strictly increasing")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_empty_domain() {
        match two_level(r(9, 10)).validate() {
            Err(Error::InvalidSpec(v)) => assert!(v.iter().any(|p| p == "empty domain: E ≤ ε₁")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reports_every_violation() {
        let mut raw = two_level(r(1, 2));
        raw.energies = vec![r(2, 1), r(1, 1)];
        raw.weights = vec![0.5, 0.6];
        let Err(Error::InvalidSpec(v)) = raw.validate() else { panic!() };
        assert_eq!(v.len(), 3, "{v:?}");
    }

    #[test]
    fn rejects_regime_schedule_mismatch() {
        let raw = RawSpec::new(vec![r(1, 1), r(2, 1)], vec![0.5, 0.5], r(3, 1), Regime::HighDegeneracy)
            .with_schedule(Schedule::Power { p: 0.5 });
        let Err(Error::InvalidSpec(v)) = raw.validate() else { panic!() };
        assert!(v[0].starts_with("regime/schedule mismatch"));
        let raw = two_level(r(3, 1)).with_c(2.0).with_schedule(Schedule::Linear { c: 1.0 });
        assert!(raw.validate().is_err());
    }

    #[test]
    fn common_denominator_is_reduced() {
        let raw = RawSpec::new(vec![r(1, 2), r(2, 3), r(3, 4)], vec![0.25, 0.25, 0.5], r(1, 1), Regime::HighDegeneracy);
        let spec = raw.validate().unwrap();
        assert_eq!(spec.denominator(), 12);
        assert_eq!(spec.level_units(), &[6, 8, 9]);
    }

    #[test]
    fn degeneracy_splits() {
        assert_eq!(split_degeneracy(&[0.5, 0.5], 10).unwrap().per_level, vec![5, 5]);
        assert_eq!(split_degeneracy(&[1.0 / 3.0, 2.0 / 3.0], 10).unwrap().per_level, vec![3, 7]);
        assert!(split_degeneracy(&[0.5, 0.5], 1).is_err());
        // floor at one
        assert_eq!(split_degeneracy(&[0.01, 0.99], 3).unwrap().per_level, vec![1, 2]);
    }

    #[test]
    fn degeneracies_for_reports_small_schedule() {
        let spec =
            RawSpec::new(vec![r(1, 1), r(2, 1)], vec![0.5, 0.5], r(3, 1), Regime::LowDegeneracy).validate().unwrap();
        assert!(matches!(degeneracies_for(&spec, 1), Err(Error::TooFewDegeneracies { .. })));
        assert_eq!(degeneracies_for(&spec, 100).unwrap().total, 10);
    }

    #[test]
    fn degeneracy_sums_exactly_for_builtin_schedules() {
        let weights = [0.2, 0.3, 0.5];
        for schedule in [
            Schedule::Power { p: 2.0 },
            Schedule::Linear { c: 1.0 },
            Schedule::Linear { c: 0.7 },
            Schedule::Power { p: 0.5 },
        ] {
            let mut prev = 0;
            for n in 1..=10_000u64 {
                let g = schedule.total(n);
                assert!(g >= prev, "{schedule:?} not monotone at {n}");
                prev = g;
                if let Ok(d) = split_degeneracy(&weights, g) {
                    assert_eq!(d.per_level.iter().sum::<u64>(), g);
                    assert!(d.per_level.iter().all(|&v| v >= 1));
                    for (gi, w) in d.per_level.iter().zip(weights) {
                        assert!((*gi as f64 - w * g as f64).abs() <= 1.0 + 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn power_schedule_snaps_exact_powers() {
        assert_eq!(Schedule::Power { p: 0.5 }.total(100), 10);
        assert_eq!(Schedule::Power { p: 0.5 }.total(101), 11);
        assert_eq!(Schedule::Power { p: 2.0 }.total(7), 49);
    }

    #[test]
    fn threshold_examples() {
        let spec = two_level(r(7, 5)).validate().unwrap();
        assert!((threshold_energy(&spec) - 1.5).abs() < 1e-15);
        let one = RawSpec::new(vec![r(3, 1)], vec![1.0], r(4, 1), Regime::HighDegeneracy).validate().unwrap();
        assert_eq!(threshold_energy(&one), 3.0);
        let three = RawSpec::new(vec![r(1, 1), r(2, 1), r(3, 1)], vec![1.0 / 3.0; 3], r(3, 1), Regime::HighDegeneracy)
            .validate()
            .unwrap();
        assert!((threshold_energy(&three) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn energy_bound_is_exact() {
        let spec = two_level(r(7, 5)).validate().unwrap();
        assert_eq!(spec.energy_bound(5), 7);
        assert_eq!(spec.energy_bound(4), 5);
        let spec = two_level(r(3, 2)).validate().unwrap();
        assert_eq!(spec.energy_bound(4), 6);
    }

    #[test]
    fn parses_rationals() {
        assert_eq!(parse_rational("3/2").unwrap(), r(3, 2));
        assert_eq!(parse_rational("1.4").unwrap(), r(7, 5));
        assert_eq!(parse_rational("-0.25").unwrap(), r(-1, 4));
        assert_eq!(parse_rational("2").unwrap(), r(2, 1));
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
    }

    #[test]
    fn occupancy_checks_invariants() {
        let spec = two_level(r(3, 2)).validate().unwrap();
        assert!(Occupancy::new(&spec, 4, vec![2, 2]).is_ok());
        assert!(Occupancy::new(&spec, 4, vec![1, 3]).is_err());
        assert!(Occupancy::new(&spec, 4, vec![2, 1]).is_err());
    }

    proptest::proptest! {
        #[test]
        fn threshold_is_convex_combination(raw_w in proptest::collection::vec(0.05f64..1.0, 2..5)) {
            let s: f64 = raw_w.iter().sum();
            let mut w: Vec<f64> = raw_w.iter().map(|v| v / s).collect();
            let tail: f64 = w[..w.len() - 1].iter().sum();
            *w.last_mut().unwrap() = 1.0 - tail;
            let m = w.len() as i64;
            let energies = (1..=m).map(|k| r(k, 1)).collect();
            let spec = RawSpec::new(energies, w, r(m, 1), Regime::HighDegeneracy).validate().unwrap();
            let t = threshold_energy(&spec);
            proptest::prop_assert!(t > 1.0 && t < m as f64);
        }
    }
}
