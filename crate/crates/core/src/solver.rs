//! The limit equation, solved as a fixed point for the expected spike count
//! `h(t) = E[M_t]`.
//!
//! For a candidate `h` the scalar process `Z^h` runs with drift
//! `b(Z − M) + f_h'(t)`, where `f_h(t) = H(t) + ∫₀ᵗ G(t − s) h(s) ds`, and
//! `Φ(h)(t) = E[M^h_t]`. Picard iteration `h_{n+1} = Φ(h_n)` from `h₀ ≡ 0`
//! converges in the C¹ norm.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use serde::Serialize;

use crate::func::GridFn;
use crate::hitting::{hitting_cdf_mc, hitting_cdf_mc_mixed, ForcedDiffusion};
use crate::kernel::KernelTable;
use crate::model::{CoefficientSet, InitialLaw};
use crate::particle::{bridge_crossing_probability, runaway, CrossingMode, Grid};
use crate::rng::{derive_seed, Domain, NoiseStream};
use crate::stats::{par_blocks, MeanSe};
use crate::{Error, Result};

/// Default derivative bandwidth, in grid steps.
pub const DEFAULT_BANDWIDTH_STEPS: f64 = 4.0;

/// Values and derivatives of a rate function on a grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFunction {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub deriv: Vec<f64>,
}

impl RateFunction {
    pub fn zero(grid: &Grid) -> Self {
        let n = grid.n_steps + 1;
        Self { grid: *grid, values: vec![0.0; n], deriv: vec![0.0; n] }
    }

    /// Wraps node values, deriving the derivative by local linear regression.
    pub fn from_values(grid: &Grid, values: Vec<f64>, bandwidth_steps: f64) -> Self {
        let deriv = LocalSlope::new(grid, bandwidth_steps).apply(&values);
        Self { grid: *grid, values, deriv }
    }

    /// `sup|Δh| + sup|Δh'|`.
    pub fn c1_distance(&self, other: &Self) -> f64 {
        sup_diff(&self.values, &other.values) + sup_diff(&self.deriv, &other.deriv)
    }

    /// `sup|Δh|`.
    pub fn sup_distance(&self, other: &Self) -> f64 {
        sup_diff(&self.values, &other.values)
    }

    /// CSV with header `t,h,h_prime`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,h,h_prime")?;
        for m in 0..self.values.len() {
            writeln!(w, "{},{},{}", self.grid.node(m), self.values[m], self.deriv[m])?;
        }
        Ok(())
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Slope of a Gaussian-weighted local linear fit: a fixed linear map from
/// node values to derivative estimates. Nondecreasing input gives
/// nonnegative slopes.
#[derive(Clone, Debug)]
pub struct LocalSlope {
    rows: Vec<(usize, Vec<f64>)>,
}

impl LocalSlope {
    pub fn new(grid: &Grid, bandwidth_steps: f64) -> Self {
        let n = grid.n_steps;
        let dt = grid.dt();
        let half = (3.0 * bandwidth_steps).ceil().max(1.0) as usize;
        let rows = (0..=n)
            .map(|m| {
                let lo = m.saturating_sub(half);
                let hi = (m + half).min(n);
                let w: Vec<f64> = (lo..=hi)
                    .map(|l| {
                        let d = (l as f64 - m as f64) / bandwidth_steps;
                        (-0.5 * d * d).exp()
                    })
                    .collect();
                let sw: f64 = w.iter().sum();
                let tbar: f64 = w.iter().enumerate().map(|(k, wk)| wk * (lo + k) as f64 * dt).sum::<f64>() / sw;
                let sxx: f64 = w.iter().enumerate().map(|(k, wk)| wk * ((lo + k) as f64 * dt - tbar).powi(2)).sum();
                let coef = w.iter().enumerate().map(|(k, wk)| wk * ((lo + k) as f64 * dt - tbar) / sxx).collect();
                (lo, coef)
            })
            .collect();
        Self { rows }
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|(lo, c)| c.iter().zip(&values[*lo..]).map(|(a, v)| a * v).sum::<f64>())
            .collect()
    }

    fn apply_u32(&self, values: &[u32], out: &mut [f64]) {
        for (o, (lo, c)) in out.iter_mut().zip(&self.rows) {
            *o = c.iter().zip(&values[*lo..]).map(|(a, &v)| a * v as f64).sum::<f64>();
        }
    }
}

/// `f_h` and `f_h'` on the grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Forcing {
    pub f: Vec<f64>,
    pub fp: Vec<f64>,
}

/// Trapezoid convolutions `f_h = H + G∗h` and `f_h' = H' + G'∗h`.
pub fn forcing_from_rate(h: &RateFunction, cs: &CoefficientSet, kt: &KernelTable) -> Result<Forcing> {
    h.grid.check_table(kt)?;
    let dt = h.grid.dt();
    let n = h.grid.n_steps;
    let conv = |table: &[f64], m: usize| -> f64 {
        if m == 0 {
            return 0.0;
        }
        let inner: f64 = (1..m).map(|l| table[m - l] * h.values[l]).sum();
        dt * (inner + 0.5 * (table[m] * h.values[0] + table[0] * h.values[m]))
    };
    let f = (0..=n).map(|m| cs.forcing.value(h.grid.node(m)) + conv(&kt.g, m)).collect();
    let fp = (0..=n).map(|m| cs.forcing.d1(h.grid.node(m)) + conv(&kt.dg, m)).collect();
    Ok(Forcing { f, fp })
}

/// A Monte Carlo evaluation of `Φ(h)` with pointwise standard errors.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PhiEstimate {
    pub rate: RateFunction,
    pub se: Vec<f64>,
    pub deriv_se: Vec<f64>,
}

impl PhiEstimate {
    /// `sup se(h) + sup se(h')`.
    pub fn noise_floor(&self) -> f64 {
        let m = |v: &[f64]| v.iter().fold(0.0f64, |a, &b| a.max(b));
        m(&self.se) + m(&self.deriv_se)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McOptions {
    pub n_mc: usize,
    pub seed: u64,
    pub crossing: CrossingMode,
    pub bandwidth_steps: f64,
}

impl McOptions {
    pub fn new(n_mc: usize, seed: u64) -> Self {
        Self { n_mc, seed, crossing: CrossingMode::Bridge, bandwidth_steps: DEFAULT_BANDWIDTH_STEPS }
    }
}

/// Simulates `n_mc` independent copies of `Z^h` and returns the mean spike
/// count with a smoothed derivative.
pub fn phi_mc(h: &RateFunction, cs: &CoefficientSet, kt: &KernelTable, law: &InitialLaw, opts: &McOptions) -> Result<PhiEstimate> {
    if opts.n_mc < 2 {
        return Err(Error::InvalidArgument("phi_mc needs at least two paths".into()));
    }
    let grid = h.grid;
    let forcing = forcing_from_rate(h, cs, kt)?;
    let slope = LocalSlope::new(&grid, opts.bandwidth_steps);
    let n = grid.n_steps;
    let cross_seed = derive_seed(opts.seed, &[Domain::RateMc as u64]);
    let blocks = par_blocks(opts.n_mc, |range| -> Result<[Vec<f64>; 4]> {
        let mut acc = [vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1]];
        let mut counts = vec![0u32; n + 1];
        let mut d = vec![0.0; n + 1];
        let mut z = vec![0.0; n + 1];
        for p in range {
            let mut noise = NoiseStream::new(opts.seed, Domain::RateMc, p as u64);
            let mut cross = NoiseStream::new(cross_seed, Domain::Crossing, p as u64);
            limit_path(cs, &forcing, law, &grid, opts.crossing, &mut noise, &mut cross, &mut z, &mut counts).map_err(|step| Error::NumericalBlowUp { step, index: p })?;
            slope.apply_u32(&counts, &mut d);
            for k in 0..=n {
                let c = counts[k] as f64;
                acc[0][k] += c;
                acc[1][k] += c * c;
                acc[2][k] += d[k];
                acc[3][k] += d[k] * d[k];
            }
        }
        Ok(acc)
    });
    let mut tot = [vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1], vec![0.0; n + 1]];
    for b in blocks {
        let b = b?;
        for (t, v) in tot.iter_mut().zip(&b) {
            for (x, y) in t.iter_mut().zip(v) {
                *x += y;
            }
        }
    }
    let vals: Vec<MeanSe> = (0..=n).map(|k| MeanSe::from_sums(tot[0][k], tot[1][k], opts.n_mc)).collect();
    let ders: Vec<MeanSe> = (0..=n).map(|k| MeanSe::from_sums(tot[2][k], tot[3][k], opts.n_mc)).collect();
    Ok(PhiEstimate {
        rate: RateFunction { grid, values: vals.iter().map(|v| v.mean).collect(), deriv: ders.iter().map(|v| v.mean.max(0.0)).collect() },
        se: vals.iter().map(|v| v.se).collect(),
        deriv_se: ders.iter().map(|v| v.se).collect(),
    })
}

/// One path of `Z^h` on the grid, writing `Z` and `M` at every node. The
/// initial potential is the law's quantile of the first uniform of `noise`.
/// Returns the failing step on a non-finite state.
#[allow(clippy::too_many_arguments)]
pub fn limit_path(
    cs: &CoefficientSet,
    forcing: &Forcing,
    law: &InitialLaw,
    grid: &Grid,
    crossing: CrossingMode,
    noise: &mut NoiseStream,
    cross: &mut NoiseStream,
    z_out: &mut [f64],
    m_out: &mut [u32],
) -> std::result::Result<(), usize> {
    let dt = grid.dt();
    let sdt = dt.sqrt();
    let u0 = law.quantile(noise.uniform());
    let mut z = u0 + forcing.f[0];
    let mut m = z.max(0.0).floor() as u32;
    z_out[0] = z;
    m_out[0] = m;
    for step in 0..grid.n_steps {
        let u = z - m as f64;
        let s = cs.sigma.value(u);
        let next = z + (cs.drift.value(u) + forcing.fp[step]) * dt + s * sdt * noise.normal();
        if runaway(z, next) {
            return Err(step);
        }
        let mut m_next = m.max(next.max(0.0).floor() as u32);
        if crossing == CrossingMode::Bridge {
            let v = cross.uniform();
            if m_next == m && v < bridge_crossing_probability((m + 1) as f64, z, next, s, dt) {
                m_next = m + 1;
            }
        }
        z = next;
        m = m_next;
        z_out[step + 1] = z;
        m_out[step + 1] = m;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RenewalOptions {
    /// Crossing paths per kernel row and per batch.
    pub n_mc: usize,
    /// Euler substeps per grid step in the crossing estimator.
    pub substeps: usize,
    /// Size of the quasi-uniform sample of the initial law.
    pub n_initial: usize,
    /// Independent re-solves used for the standard errors.
    pub batches: usize,
    pub seed: u64,
    pub bandwidth_steps: f64,
}

impl RenewalOptions {
    pub fn new(n_mc: usize, seed: u64) -> Self {
        Self { n_mc, substeps: 4, n_initial: 512, batches: 10, seed, bandwidth_steps: DEFAULT_BANDWIDTH_STEPS }
    }
}

/// First-passage distribution of `Z^h` from the initial law, and the
/// renewal kernel `K[l][m − l] = P₀(τ₁^{h,♯s_l} ≤ t_m − s_l)`.
fn renewal_parts(cs: &CoefficientSet, forcing: &Forcing, law: &InitialLaw, grid: &Grid, opts: &RenewalOptions, seed: u64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = grid.n_steps;
    let dt = grid.dt();
    let fp = |shift: f64| -> Arc<GridFn> { Arc::new(GridFn { t0: -shift, step: dt, values: forcing.fp.clone() }) };
    let starts: Vec<f64> = law.quasi_sample(opts.n_initial).iter().map(|u| u + forcing.f[0]).collect();
    let fd = ForcedDiffusion::new(cs, fp(0.0), 0.0, grid.horizon)?;
    let first = hitting_cdf_mc_mixed(&fd, &starts, dt, n, opts.substeps, opts.n_mc, derive_seed(seed, &[u64::MAX]))?;
    let kernel = (0..n)
        .map(|l| {
            let fd = ForcedDiffusion::new(cs, fp(grid.node(l)), 0.0, grid.horizon)?;
            let row = hitting_cdf_mc(&fd, dt, n - l, opts.substeps, opts.n_mc, derive_seed(seed, &[l as u64]))?;
            Ok(row.into_iter().map(|e| e.mean).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok((first.into_iter().map(|e| e.mean).collect(), kernel))
}

/// Forward substitution for `Φ_m = F_m + Σ_{l<m} K(s_l, t_m)(Φ_{l+1} − Φ_l)`,
/// implicit in the last increment.
pub fn solve_renewal(first: &[f64], kernel: &[Vec<f64>]) -> Vec<f64> {
    let n = first.len() - 1;
    let mut phi = vec![0.0; n + 1];
    phi[0] = first[0];
    for m in 1..=n {
        let explicit: f64 = (0..m - 1).map(|l| kernel[l][m - l] * (phi[l + 1] - phi[l])).sum();
        let k = kernel[m - 1][1];
        phi[m] = (first[m] + explicit - k * phi[m - 1]) / (1.0 - k);
    }
    phi
}

/// `Φ(h)` through the renewal equation, averaged over independent batches.
pub fn phi_renewal(h: &RateFunction, cs: &CoefficientSet, kt: &KernelTable, law: &InitialLaw, opts: &RenewalOptions) -> Result<PhiEstimate> {
    if opts.batches < 2 || opts.n_mc == 0 || opts.n_initial == 0 {
        return Err(Error::InvalidArgument("renewal evaluator needs >= 2 batches and nonempty samples".into()));
    }
    let grid = h.grid;
    let forcing = forcing_from_rate(h, cs, kt)?;
    let slope = LocalSlope::new(&grid, opts.bandwidth_steps);
    let mut values = Vec::with_capacity(opts.batches);
    let mut derivs = Vec::with_capacity(opts.batches);
    for b in 0..opts.batches {
        let (first, kernel) = renewal_parts(cs, &forcing, law, &grid, opts, derive_seed(opts.seed, &[b as u64]))?;
        let phi = solve_renewal(&first, &kernel);
        derivs.push(slope.apply(&phi));
        values.push(phi);
    }
    let n = grid.n_steps;
    let column = |rows: &[Vec<f64>], k: usize| MeanSe::from_samples(&rows.iter().map(|r| r[k]).collect::<Vec<_>>());
    let vals: Vec<MeanSe> = (0..=n).map(|k| column(&values, k)).collect();
    let ders: Vec<MeanSe> = (0..=n).map(|k| column(&derivs, k)).collect();
    Ok(PhiEstimate {
        rate: RateFunction { grid, values: vals.iter().map(|v| v.mean).collect(), deriv: ders.iter().map(|v| v.mean.max(0.0)).collect() },
        se: vals.iter().map(|v| v.se).collect(),
        deriv_se: ders.iter().map(|v| v.se).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Evaluator {
    Mc(McOptions),
    Renewal(RenewalOptions),
}

impl Evaluator {
    pub fn evaluate(&self, h: &RateFunction, cs: &CoefficientSet, kt: &KernelTable, law: &InitialLaw) -> Result<PhiEstimate> {
        match self {
            Evaluator::Mc(o) => phi_mc(h, cs, kt, law, o),
            Evaluator::Renewal(o) => phi_renewal(h, cs, kt, law, o),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub evaluator: Evaluator,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PicardDiagnostics {
    /// `‖h_n − h_{n−1}‖_{C¹}` for `n = 1, 2, …`
    pub distances: Vec<f64>,
    /// Noise floor of each evaluation.
    pub noise_floors: Vec<f64>,
    /// `‖Φ(h_∞) − h_∞‖_{C¹}` from one extra evaluation.
    pub residual: f64,
    pub converged: bool,
    pub tol: f64,
}

impl PicardDiagnostics {
    pub fn iterations(&self) -> usize {
        self.distances.len()
    }

    pub fn final_noise_floor(&self) -> f64 {
        self.noise_floors.last().copied().unwrap_or(0.0)
    }
}

impl fmt::Display for PicardDiagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "status: {}", if self.converged { "converged" } else { "not converged" })?;
        writeln!(f, "tol: {:e}", self.tol)?;
        writeln!(f, "iterations: {}", self.iterations())?;
        writeln!(f, "residual: {:e}", self.residual)?;
        writeln!(f, "iteration,distance,noise_floor")?;
        for (k, (d, nf)) in self.distances.iter().zip(&self.noise_floors).enumerate() {
            writeln!(f, "{},{:e},{:e}", k + 1, d, nf)?;
        }
        Ok(())
    }
}

/// Picard iteration from `start` (or `h ≡ 0`) with common random numbers
/// across iterations. Stops when the C¹ step falls below `tol`.
pub fn picard_solve(
    cs: &CoefficientSet,
    kt: &KernelTable,
    law: &InitialLaw,
    grid: &Grid,
    opts: &PicardOptions,
    start: Option<RateFunction>,
) -> Result<(RateFunction, PicardDiagnostics)> {
    let mut h = match start {
        Some(s) if s.grid == *grid => s,
        Some(_) => return Err(Error::IncompatibleGrid("warm start lives on a different grid".into())),
        None => RateFunction::zero(grid),
    };
    let mut diag = PicardDiagnostics { distances: vec![], noise_floors: vec![], residual: f64::NAN, converged: false, tol: opts.tol };
    for _ in 0..opts.max_iter {
        let next = opts.evaluator.evaluate(&h, cs, kt, law)?;
        let d = next.rate.c1_distance(&h);
        diag.distances.push(d);
        diag.noise_floors.push(next.noise_floor());
        h = next.rate;
        if d < opts.tol {
            diag.converged = true;
            break;
        }
    }
    let check = opts.evaluator.evaluate(&h, cs, kt, law)?;
    diag.residual = check.rate.c1_distance(&h);
    if !diag.converged {
        log::warn!("picard iteration stopped after {} steps above tolerance", opts.max_iter);
    }
    Ok((h, diag))
}

/// Burkholder–Davis–Gundy constant used in the envelope.
pub const BDG_CONSTANT: f64 = 2.0;

/// A nondecreasing a-priori bound on `h`, built block by block.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityEnvelope {
    pub t0: f64,
    pub bdg_constant: f64,
    pub r: f64,
    pub lambda_b: f64,
    pub lambda_sigma: f64,
    pub forcing_sup: f64,
    /// `g` at the start of each block after the first (left limits).
    block_starts: Vec<f64>,
}

impl StabilityEnvelope {
    pub fn eval(&self, t: f64) -> f64 {
        let c = self.bdg_constant;
        let piece = |base: f64, s: f64| 2.0 * (base + self.lambda_b * s + c * self.lambda_sigma * s.sqrt()) * (4.0 * self.lambda_b * s).exp();
        if !self.t0.is_finite() || t < self.t0 {
            return piece(self.r + self.forcing_sup, t);
        }
        let k = ((t / self.t0).floor() as usize).min(self.block_starts.len());
        let bar_t = k as f64 * self.t0;
        piece(self.block_starts[k - 1] + 2.0 * self.forcing_sup, t - bar_t)
    }

    pub fn on_grid(&self, grid: &Grid) -> Vec<f64> {
        grid.nodes().iter().map(|&t| self.eval(t)).collect()
    }

    /// CSV with header `t,g`.
    pub fn write_csv<W: Write>(&self, mut w: W, grid: &Grid) -> io::Result<()> {
        writeln!(w, "t,g")?;
        for t in grid.nodes() {
            writeln!(w, "{},{}", t, self.eval(t))?;
        }
        Ok(())
    }
}

/// Envelope on `[0, horizon]` with `T₀ = 1/(2‖G‖_∞)` (infinite when `G ≡ 0`).
/// `‖H‖_∞` is taken over 4096 points of the horizon.
pub fn stability_envelope(cs: &CoefficientSet, kt: &KernelTable, r: f64, horizon: f64) -> StabilityEnvelope {
    let forcing_sup = (0..=4096).map(|k| cs.forcing.value(horizon * k as f64 / 4096.0).abs()).fold(0.0f64, f64::max);
    let t0 = if kt.sup_norm > 0.0 { 1.0 / (2.0 * kt.sup_norm) } else { f64::INFINITY };
    let mut env = StabilityEnvelope {
        t0,
        bdg_constant: BDG_CONSTANT,
        r,
        lambda_b: cs.lambda_b,
        lambda_sigma: cs.lambda_sigma,
        forcing_sup,
        block_starts: vec![],
    };
    if t0.is_finite() {
        let blocks = (horizon / t0).ceil() as usize;
        for k in 1..=blocks {
            // left limit at the end of block k
            let end = k as f64 * t0;
            let v = env.eval(end - 1e-12 * t0.max(1.0));
            env.block_starts.push(v);
        }
    }
    env
}

/// `g/2` as a warm start for the Picard iteration.
pub fn envelope_start(env: &StabilityEnvelope, grid: &Grid, bandwidth_steps: f64) -> RateFunction {
    let mut values: Vec<f64> = env.on_grid(grid).iter().map(|g| 0.5 * g).collect();
    values[0] = 0.0;
    RateFunction::from_values(grid, values, bandwidth_steps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::{Constant, FromClosures, Polynomial};
    use crate::kernel::tabulate_kernel;
    use crate::stats::normal_cdf;

    fn brownian() -> CoefficientSet {
        CoefficientSet {
            drift: Arc::new(Constant(0.0)),
            sigma: Arc::new(Constant(1.0)),
            forcing: Arc::new(Constant(0.0)),
            kernel: Arc::new(Constant(0.0)),
            lambda_b: 1.0,
            lambda_sigma: 1.0,
        }
    }

    fn ramp(grid: &Grid) -> RateFunction {
        RateFunction { grid: *grid, values: grid.nodes(), deriv: vec![1.0; grid.n_steps + 1] }
    }

    #[test]
    fn zero_rate_gives_bare_forcing() {
        let cs = CoefficientSet { forcing: Arc::new(FromClosures::new(f64::sin, f64::cos, |t| -t.sin())), ..brownian() };
        let grid = Grid::new(1.0, 50).unwrap();
        let kt = tabulate_kernel(&Polynomial(vec![0.0, 0.0, 1.0]), 1.0, 50).unwrap();
        let f = forcing_from_rate(&RateFunction::zero(&grid), &cs, &kt).unwrap();
        for m in 0..=50 {
            assert_eq!(f.f[m], grid.node(m).sin());
            assert_eq!(f.fp[m], grid.node(m).cos());
        }
    }

    #[test]
    fn polynomial_convolution() {
        // ∫₀¹ (1 − s)² s ds = 1/12
        let grid = Grid::new(1.0, 1000).unwrap();
        let kt = tabulate_kernel(&Polynomial(vec![0.0, 0.0, 1.0]), 1.0, 1000).unwrap();
        let f = forcing_from_rate(&ramp(&grid), &brownian(), &kt).unwrap();
        assert!((f.f[1000] - 1.0 / 12.0).abs() < 1e-6);
        assert_eq!(f.fp[0], 0.0);
    }

    #[test]
    fn local_slope_is_exact_on_lines_and_nonnegative_on_steps() {
        let grid = Grid::new(1.0, 40).unwrap();
        let s = LocalSlope::new(&grid, 4.0);
        let line: Vec<f64> = grid.nodes().iter().map(|t| 3.0 * t - 1.0).collect();
        assert!(s.apply(&line).iter().all(|d| (d - 3.0).abs() < 1e-9));
        let steps: Vec<f64> = (0..=40).map(|k| (k / 7) as f64).collect();
        assert!(s.apply(&steps).iter().all(|&d| d >= 0.0));
    }

    fn brownian_renewal_oracle(t: f64, levels: usize) -> f64 {
        // without drift the k-th spike of a unit Brownian motion is the first passage to k
        (1..=levels).map(|k| 2.0 * (1.0 - normal_cdf(k as f64 / t.sqrt()))).sum()
    }

    #[test]
    fn phi_mc_matches_brownian_renewal() {
        let cs = brownian();
        let grid = Grid::new(1.0, 200).unwrap();
        let kt = tabulate_kernel(cs.kernel.as_ref(), 1.0, 200).unwrap();
        let law = InitialLaw::point_mass(0.0, 1.0).unwrap();
        let est = phi_mc(&RateFunction::zero(&grid), &cs, &kt, &law, &McOptions::new(20_000, 11)).unwrap();
        assert_eq!(est.rate.values[0], 0.0);
        assert!(est.rate.values.windows(2).all(|w| w[1] >= w[0]));
        for &m in &[50usize, 100, 200] {
            let oracle = brownian_renewal_oracle(grid.node(m), 20);
            assert!((est.rate.values[m] - oracle).abs() < 3.0 * est.se[m], "t = {}: {} vs {oracle}", grid.node(m), est.rate.values[m]);
        }
    }

    #[test]
    fn renewal_solver_reproduces_known_series() {
        let n = 6;
        let first: Vec<f64> = (0..=n).map(|m| if m >= 1 { 1.0 } else { 0.0 }).collect();
        let kernel: Vec<Vec<f64>> = (0..n).map(|l| (0..=n - l).map(|d| if d >= 1 { 1.0 } else { 0.0 }).collect()).collect();
        let kernel: Vec<Vec<f64>> = kernel.into_iter().map(|r| r.into_iter().map(|v| 0.5 * v).collect()).collect();
        let phi = solve_renewal(&first, &kernel);
        assert_eq!(phi[0], 0.0);
        for m in 1..=n {
            let explicit: f64 = (0..m).map(|l| 0.5 * (phi[l + 1] - phi[l])).sum();
            assert!((phi[m] - (1.0 + explicit)).abs() < 1e-12);
        }
    }

    #[test]
    fn renewal_agrees_with_mc_when_decoupled() {
        // constant drift keeps both crossing corrections exact, leaving only the quadrature in s
        let cs = CoefficientSet { drift: Arc::new(Constant(0.5)), ..brownian() };
        let grid = Grid::new(1.0, 40).unwrap();
        let kt = tabulate_kernel(cs.kernel.as_ref(), 1.0, 40).unwrap();
        let law = InitialLaw::new(crate::model::LawKind::Uniform { low: -0.5, high: 0.5 }, 1.0).unwrap();
        let h = RateFunction::zero(&grid);
        // the Monte Carlo oracle runs on a 4x finer grid to keep its O(Δt) bias below the noise
        let fine = Grid::new(1.0, 160).unwrap();
        let fine_kt = tabulate_kernel(cs.kernel.as_ref(), 1.0, 160).unwrap();
        let mc = phi_mc(&RateFunction::zero(&fine), &cs, &fine_kt, &law, &McOptions { n_mc: 40_000, ..McOptions::new(0, 1) }).unwrap();
        let mut ro = RenewalOptions::new(4000, 3);
        ro.substeps = 8;
        let rn = phi_renewal(&h, &cs, &kt, &law, &ro).unwrap();
        let mut fails = 0;
        for m in (5..=40).step_by(5) {
            let se = (mc.se[4 * m].powi(2) + rn.se[m].powi(2)).sqrt();
            if (mc.rate.values[4 * m] - rn.rate.values[m]).abs() > 3.0 * se {
                fails += 1;
            }
        }
        let picked: Vec<(f64, f64, f64)> = (5..=40).step_by(5).map(|m| (mc.rate.values[4 * m], rn.rate.values[m], (mc.se[4 * m].powi(2) + rn.se[m].powi(2)).sqrt())).collect();
        assert!(fails <= 1, "{picked:?}");
        assert!(rn.rate.values.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    }

    #[test]
    fn decoupled_picard_converges_immediately() {
        let cs = CoefficientSet { drift: Arc::new(Constant(0.5)), ..brownian() };
        let grid = Grid::new(1.0, 50).unwrap();
        let kt = tabulate_kernel(cs.kernel.as_ref(), 1.0, 50).unwrap();
        let law = InitialLaw::point_mass(0.0, 1.0).unwrap();
        let opts = PicardOptions { tol: 1e-12, max_iter: 5, evaluator: Evaluator::Mc(McOptions::new(2000, 3)) };
        let (h, diag) = picard_solve(&cs, &kt, &law, &grid, &opts, None).unwrap();
        assert!(diag.converged);
        assert_eq!(diag.iterations(), 2);
        assert_eq!(diag.distances[1], 0.0);
        assert_eq!(diag.residual, 0.0);
        let single = phi_mc(&RateFunction::zero(&grid), &cs, &kt, &law, &McOptions::new(2000, 3)).unwrap();
        assert_eq!(h, single.rate);
    }

    #[test]
    fn envelope_basics() {
        let cs = CoefficientSet { forcing: Arc::new(Constant(0.25)), lambda_b: 0.5, lambda_sigma: 1.25, ..brownian() };
        let kt = tabulate_kernel(&Polynomial(vec![0.0, 0.0, 1.0]), 2.0, 200).unwrap();
        let env = stability_envelope(&cs, &kt, 1.0, 2.0);
        assert!((env.t0 - 1.0 / 8.0).abs() < 1e-12);
        assert!((env.eval(0.0) - 2.0 * 1.25).abs() < 1e-12);
        let grid = Grid::new(2.0, 400).unwrap();
        let g = env.on_grid(&grid);
        assert!(g.windows(2).all(|w| w[1] >= w[0]));
        let flat = stability_envelope(&cs, &tabulate_kernel(&Constant(0.0), 2.0, 200).unwrap(), 1.0, 2.0);
        assert!(flat.t0.is_infinite());
        assert!(flat.eval(2.0).is_finite());
    }
}
