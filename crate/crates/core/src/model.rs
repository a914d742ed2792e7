//! Model coefficients, initial laws and synaptic weight schemes, together with
//! the probe-grid validation of the standing assumptions.

use std::sync::Arc;

use serde::Serialize;

use crate::func::{Constant, SharedFn};
use crate::rng::{Domain, NoiseStream};
use crate::{Error, Result};

/// Default absolute tolerance for the `G(0) = G'(0) = 0` check.
pub const KERNEL_ORIGIN_TOL: f64 = 1e-8;

/// Drift `b`, diffusion `σ`, external forcing `H` and transmission kernel `G`,
/// with the declared bound constants `Λ_b` and `Λ_σ`.
#[derive(Clone, Debug)]
pub struct CoefficientSet {
    pub drift: SharedFn,
    pub sigma: SharedFn,
    pub forcing: SharedFn,
    pub kernel: SharedFn,
    pub lambda_b: f64,
    pub lambda_sigma: f64,
}

impl CoefficientSet {
    /// Same coefficients with the interaction switched off.
    pub fn decoupled(&self) -> Self {
        Self { kernel: Arc::new(Constant(0.0)), ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    /// Probe point with the largest violation (or the largest slack use when passing).
    pub worst_point: Option<f64>,
    /// Largest amount by which the inequality was exceeded (≤ 0 when passing).
    pub worst_excess: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckResult>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<&'static str> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name).collect()
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }
}

struct Check {
    name: &'static str,
    worst_point: Option<f64>,
    worst_excess: f64,
}

impl Check {
    fn new(name: &'static str) -> Self {
        Self { name, worst_point: None, worst_excess: f64::NEG_INFINITY }
    }

    /// Records `excess = lhs − rhs` of an inequality `lhs ≤ rhs` at `x`.
    fn record(&mut self, x: f64, excess: f64) {
        let excess = if excess.is_nan() { f64::INFINITY } else { excess };
        if excess > self.worst_excess || self.worst_point.is_none() {
            self.worst_excess = excess;
            self.worst_point = Some(x);
        }
    }

    fn finish(self) -> CheckResult {
        CheckResult {
            name: self.name,
            passed: self.worst_excess <= 0.0,
            worst_point: self.worst_point,
            worst_excess: self.worst_excess,
        }
    }
}

fn finite_excess(v: f64) -> f64 {
    if v.is_finite() {
        -1.0
    } else {
        f64::INFINITY
    }
}

/// Checks the standing assumptions on the probe grid plus a few tail points.
///
/// Failures are report entries, never errors.
pub fn validate_coefficients(cs: &CoefficientSet, probe_grid: &[f64], tol: f64) -> ValidationReport {
    let mut xs: Vec<f64> = probe_grid.to_vec();
    xs.extend([-1e3, -1e2, -10.0, 0.0, 10.0, 1e2, 1e3]);
    let ts: Vec<f64> = xs.iter().map(|x| x.abs()).collect();
    let (lb, ls) = (cs.lambda_b, cs.lambda_sigma);

    let mut constants = Check::new("positive constants");
    constants.record(0.0, if lb > 0.0 && ls > 0.0 { -lb.min(ls) } else { 1.0 });

    let mut drift_lip = Check::new("drift derivative");
    let mut drift_growth = Check::new("drift growth");
    let mut ellip = Check::new("ellipticity");
    let mut sig_der = Check::new("sigma derivatives");
    for &x in &xs {
        drift_lip.record(x, cs.drift.d1(x).abs() - lb);
        drift_growth.record(x, cs.drift.value(x).abs() - lb * (1.0 + x.abs()));
        let s = cs.sigma.value(x);
        ellip.record(x, (1.0 / ls - s).max(s - ls));
        sig_der.record(x, cs.sigma.d1(x).abs().max(cs.sigma.d2(x).abs()) - ls);
    }

    let mut origin = Check::new("kernel origin");
    origin.record(0.0, cs.kernel.value(0.0).abs().max(cs.kernel.d1(0.0).abs()) - tol);

    let mut forcing = Check::new("forcing bounded");
    let mut kernel = Check::new("kernel bounded");
    for &t in &ts {
        let fh = [cs.forcing.value(t), cs.forcing.d1(t), cs.forcing.d2(t)];
        forcing.record(t, fh.iter().map(|&v| finite_excess(v)).fold(f64::NEG_INFINITY, f64::max));
        let fg = [cs.kernel.value(t), cs.kernel.d1(t), cs.kernel.d2(t)];
        kernel.record(t, fg.iter().map(|&v| finite_excess(v)).fold(f64::NEG_INFINITY, f64::max));
    }

    ValidationReport {
        checks: vec![
            constants.finish(),
            drift_lip.finish(),
            drift_growth.finish(),
            ellip.finish(),
            sig_der.finish(),
            origin.finish(),
            forcing.finish(),
            kernel.finish(),
        ],
    }
}

/// Uniform probe grid on `[lo, hi]` with `n` points.
pub fn probe_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

// ---------------------------------------------------------------------------
// Initial laws

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum LawKind {
    PointMass { at: f64 },
    /// Uniform on `(low, high)` with `high < 1`.
    Uniform { low: f64, high: f64 },
    /// Density `2(1 − x)/(1 − low)²` on `(low, 1)`.
    LinearDecay { low: f64 },
}

/// Which of the two sufficient forms of the initial-law condition applies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum DensityDescriptor {
    PointMass,
    /// `P(U₀ ∈ dx) ≤ β(1 − x)dx` on `[1 − ε, 1)`.
    LinearDecay { beta: f64, epsilon: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InitialLaw {
    pub kind: LawKind,
    pub support_bound: f64,
}

impl InitialLaw {
    pub fn new(kind: LawKind, support_bound: f64) -> Result<Self> {
        if support_bound < 1.0 {
            return Err(Error::InvalidArgument(format!("support bound R = {support_bound} must be >= 1")));
        }
        let r = support_bound;
        let ok = match kind {
            LawKind::PointMass { at } => at > -r && at < 1.0,
            LawKind::Uniform { low, high } => low >= -r && high < 1.0 && low < high,
            LawKind::LinearDecay { low } => low >= -r && low < 1.0,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("initial law {kind:?} does not lie in (-{r}, 1)")));
        }
        Ok(Self { kind, support_bound })
    }

    pub fn point_mass(at: f64, support_bound: f64) -> Result<Self> {
        Self::new(LawKind::PointMass { at }, support_bound)
    }

    /// Inverse cumulative distribution function on (0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        match self.kind {
            LawKind::PointMass { at } => at,
            LawKind::Uniform { low, high } => low + (high - low) * u,
            LawKind::LinearDecay { low } => 1.0 - (1.0 - low) * (1.0 - u).sqrt(),
        }
    }

    pub fn descriptor(&self) -> DensityDescriptor {
        match self.kind {
            LawKind::PointMass { .. } => DensityDescriptor::PointMass,
            LawKind::Uniform { high, .. } => DensityDescriptor::LinearDecay { beta: 0.0, epsilon: 1.0 - high },
            LawKind::LinearDecay { low } => {
                DensityDescriptor::LinearDecay { beta: 2.0 / ((1.0 - low) * (1.0 - low)), epsilon: 1.0 - low }
            }
        }
    }

    pub fn mean(&self) -> f64 {
        match self.kind {
            LawKind::PointMass { at } => at,
            LawKind::Uniform { low, high } => 0.5 * (low + high),
            LawKind::LinearDecay { low } => low + (1.0 - low) / 3.0,
        }
    }

    /// Deterministic quasi-uniform sample `quantile((k + ½)/n)`.
    pub fn quasi_sample(&self, n: usize) -> Vec<f64> {
        (0..n).map(|k| self.quantile((k as f64 + 0.5) / n as f64)).collect()
    }

    /// Empirical check of the linear-decay bound near the threshold: every
    /// histogram bin in `[1 − ε, 1)` must hold no more than its allowed mass
    /// plus three binomial standard deviations.
    pub fn check_density_condition(&self, n: usize, bins: usize, seed: u64) -> bool {
        match self.descriptor() {
            DensityDescriptor::PointMass => true,
            DensityDescriptor::LinearDecay { beta, epsilon } => {
                let xs = sample_initial(self, n, seed);
                let width = epsilon / bins as f64;
                (0..bins).all(|k| {
                    let lo = 1.0 - epsilon + k as f64 * width;
                    let hi = lo + width;
                    let count = xs.iter().filter(|&&x| x >= lo && x < hi).count() as f64;
                    // ∫_lo^hi β(1 − x)dx
                    let p = beta * width * (1.0 - 0.5 * (lo + hi));
                    count <= n as f64 * p + 3.0 * (n as f64 * p * (1.0 - p)).sqrt() + 1e-9
                })
            }
        }
    }
}

/// `n` i.i.d. draws from `law`; identical for identical `(n, seed)`.
pub fn sample_initial(law: &InitialLaw, n: usize, seed: u64) -> Vec<f64> {
    let mut stream = NoiseStream::new(seed, Domain::Initial, 0);
    (0..n).map(|_| law.quantile(stream.uniform())).collect()
}

// ---------------------------------------------------------------------------
// Weights

#[derive(Clone, Debug, PartialEq)]
pub enum WeightScheme {
    /// `J_ij = value` for all pairs.
    Uniform { n: usize, value: f64 },
    /// `J_ij = 1/|i − j|` for `i ≠ j`, zero on the diagonal.
    InverseDistance { n: usize },
    /// Row-major dense matrix.
    Explicit { n: usize, matrix: Vec<f64> },
}

impl WeightScheme {
    pub fn uniform(n: usize) -> Self {
        WeightScheme::Uniform { n, value: 1.0 }
    }

    pub fn explicit(n: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != n * n {
            return Err(Error::InvalidArgument(format!("weight matrix has {} entries, expected {}", matrix.len(), n * n)));
        }
        if matrix.iter().any(|&j| !(j >= 0.0) || !j.is_finite()) {
            return Err(Error::InvalidArgument("weights must be finite and non-negative".into()));
        }
        Ok(WeightScheme::Explicit { n, matrix })
    }

    pub fn len(&self) -> usize {
        match self {
            WeightScheme::Uniform { n, .. } | WeightScheme::InverseDistance { n } | WeightScheme::Explicit { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            WeightScheme::Uniform { value, .. } => *value,
            WeightScheme::InverseDistance { .. } => {
                if i == j {
                    0.0
                } else {
                    1.0 / (i as f64 - j as f64).abs()
                }
            }
            WeightScheme::Explicit { n, matrix } => matrix[i * n + j],
        }
    }

    /// True when every row is the same normalized vector, i.e. all neurons
    /// see one shared input.
    pub fn has_shared_rows(&self) -> bool {
        matches!(self, WeightScheme::Uniform { .. })
    }

    /// `S_i = Σ_j J_ij`
    pub fn row_sum(&self, i: usize) -> f64 {
        match self {
            WeightScheme::Uniform { n, value } => *n as f64 * value,
            _ => (0..self.len()).map(|j| self.get(i, j)).sum(),
        }
    }

    /// All row sums, failing on a zero row.
    pub fn row_sums(&self) -> Result<Vec<f64>> {
        let sums: Vec<f64> = (0..self.len()).map(|i| self.row_sum(i)).collect();
        match sums.iter().position(|&s| !(s > 0.0)) {
            Some(row) => Err(Error::DegenerateWeights { row }),
            None => Ok(sums),
        }
    }

    /// Normalized weight `J_ij / S_i` given precomputed row sums.
    #[inline]
    pub fn normalized(&self, i: usize, j: usize, row_sums: &[f64]) -> f64 {
        self.get(i, j) / row_sums[i]
    }

    /// `max_i Σ_j J_ij² / S_i²`
    pub fn j_condition(&self) -> Result<f64> {
        let n = self.len();
        if let WeightScheme::Uniform { value, .. } = self {
            if !(*value > 0.0) {
                return Err(Error::DegenerateWeights { row: 0 });
            }
            return Ok(1.0 / n as f64);
        }
        use rayon::prelude::*;
        let rows: Vec<Result<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (s, s2) = (0..n).fold((0.0, 0.0), |(s, s2), j| {
                    let w = self.get(i, j);
                    (s + w, s2 + w * w)
                });
                if s > 0.0 {
                    Ok(s2 / (s * s))
                } else {
                    Err(Error::DegenerateWeights { row: i })
                }
            })
            .collect();
        rows.into_iter().try_fold(0.0f64, |acc, r| r.map(|v| acc.max(v)))
    }
}

/// Evaluates the weight condition for each population size in `n_list`.
pub fn j_condition_profile<F>(family: F, n_list: &[usize]) -> Result<Vec<(usize, f64)>>
where
    F: Fn(usize) -> WeightScheme,
{
    n_list
        .iter()
        .map(|&n| {
            if n < 2 {
                return Err(Error::InvalidArgument(format!("population size {n} < 2")));
            }
            family(n).j_condition().map(|v| (n, v))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::{Linear, Sigmoid};
    use crate::kernel::{CableKernel, PolyGauss};

    fn base_set() -> CoefficientSet {
        CoefficientSet {
            drift: Arc::new(Linear { offset: 0.0, slope: -1.0 }),
            sigma: Arc::new(Constant(1.0)),
            forcing: Arc::new(Constant(0.0)),
            kernel: Arc::new(CableKernel::new(PolyGauss::hex_gauss(1.0), 1.0, 128)),
            lambda_b: 1.0,
            lambda_sigma: 1.0,
        }
    }

    #[test]
    fn benchmark_style_set_passes() {
        let report = validate_coefficients(&base_set(), &probe_grid(-5.0, 5.0, 101), KERNEL_ORIGIN_TOL);
        assert!(report.passed(), "{report:?}");
    }

    #[test]
    fn vanishing_sigma_fails_ellipticity() {
        let cs = CoefficientSet { sigma: Arc::new(Linear { offset: 0.0, slope: 1.0 }), ..base_set() };
        let report = validate_coefficients(&cs, &probe_grid(-5.0, 5.0, 101), KERNEL_ORIGIN_TOL);
        assert!(!report.passed());
        assert!(report.failures().contains(&"ellipticity"));
    }

    #[test]
    fn kernel_with_unit_slope_fails_origin() {
        let cs = CoefficientSet { kernel: Arc::new(Linear { offset: 0.0, slope: 1.0 }), ..base_set() };
        let report = validate_coefficients(&cs, &probe_grid(0.0, 5.0, 51), KERNEL_ORIGIN_TOL);
        assert_eq!(report.failures(), vec!["kernel origin"]);
        assert_eq!(report.get("kernel origin").unwrap().worst_point, Some(0.0));
    }

    #[test]
    fn sigmoid_sigma_respects_declared_bounds() {
        let cs = CoefficientSet {
            sigma: Arc::new(Sigmoid { base: 1.0, amplitude: 0.2 }),
            lambda_sigma: 1.25,
            ..base_set()
        };
        assert!(validate_coefficients(&cs, &probe_grid(-8.0, 8.0, 321), KERNEL_ORIGIN_TOL).passed());
        let tight = CoefficientSet { lambda_sigma: 1.1, ..cs };
        assert!(!validate_coefficients(&tight, &probe_grid(-8.0, 8.0, 321), KERNEL_ORIGIN_TOL).passed());
    }

    #[test]
    fn uniform_condition_is_exactly_one_over_n() {
        let prof = j_condition_profile(WeightScheme::uniform, &[10, 100, 1000]).unwrap();
        assert_eq!(prof, vec![(10, 0.1), (100, 0.01), (1000, 0.001)]);
    }

    #[test]
    fn inverse_distance_condition_decreases() {
        let prof = j_condition_profile(|n| WeightScheme::InverseDistance { n }, &[10, 100]).unwrap();
        // direct summation oracle over every row
        for &(n, v) in &prof {
            let oracle = (0..n)
                .map(|i| {
                    let (s, s2) = (0..n).filter(|&j| j != i).fold((0.0, 0.0), |(s, s2), j| {
                        let w = 1.0 / (i as f64 - j as f64).abs();
                        (s + w, s2 + w * w)
                    });
                    s2 / (s * s)
                })
                .fold(0.0, f64::max);
            assert!((v - oracle).abs() < 1e-14);
        }
        assert!(prof[1].1 < prof[0].1);
    }

    #[test]
    fn zero_row_is_degenerate() {
        let mut m = vec![1.0; 9];
        m[3..6].copy_from_slice(&[0.0; 3]);
        let w = WeightScheme::explicit(3, m).unwrap();
        assert_eq!(w.j_condition(), Err(Error::DegenerateWeights { row: 1 }));
        assert!(j_condition_profile(|_| w.clone(), &[3]).is_err());
        assert!(j_condition_profile(WeightScheme::uniform, &[1]).is_err());
    }

    #[test]
    fn point_mass_sampling() {
        let law = InitialLaw::point_mass(0.0, 1.0).unwrap();
        assert_eq!(sample_initial(&law, 3, 11), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_sampling_mean_and_determinism() {
        let law = InitialLaw::new(LawKind::Uniform { low: -1.0, high: 0.5 }, 1.0).unwrap();
        let xs = sample_initial(&law, 10_000, 3);
        assert!(xs.iter().all(|&x| x > -1.0 && x < 0.5));
        let est = crate::stats::MeanSe::from_samples(&xs);
        assert!((est.mean + 0.25).abs() < 3.0 * est.se, "{est:?}");
        assert_eq!(xs, sample_initial(&law, 10_000, 3));
        assert_ne!(xs, sample_initial(&law, 10_000, 4));
    }

    #[test]
    fn initial_law_support_is_enforced() {
        assert!(InitialLaw::point_mass(1.0, 1.0).is_err());
        assert!(InitialLaw::point_mass(-2.0, 1.0).is_err());
        assert!(InitialLaw::new(LawKind::Uniform { low: -0.5, high: 1.0 }, 1.0).is_err());
        assert!(InitialLaw::point_mass(0.0, 0.5).is_err());
    }

    #[test]
    fn density_condition_checks() {
        let decay = InitialLaw::new(LawKind::LinearDecay { low: -1.0 }, 1.0).unwrap();
        assert!(decay.check_density_condition(50_000, 10, 1));
        assert!(sample_initial(&decay, 1000, 2).iter().all(|&x| x > -1.0 && x < 1.0));
        let unif = InitialLaw::new(LawKind::Uniform { low: -1.0, high: 0.9 }, 1.0).unwrap();
        assert!(unif.check_density_condition(10_000, 10, 1));
    }
}
