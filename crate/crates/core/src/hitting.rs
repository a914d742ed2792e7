//! First-passage densities of the forced diffusion
//! `dZ = (b(Z) + α(t)) dt + σ(Z) dW` started at `x < 1`, to the level 1.
//!
//! Two estimators are provided. The bridge estimator removes the diffusion
//! coefficient by the Lamperti map `S(z) = ∫₀ᶻ dy/σ(y)` and averages a Girsanov
//! weight over Bessel(3) bridges; the crossing estimator runs Euler paths with
//! a per-step Brownian-bridge survival factor.

use std::io::{self, Write};
use std::sync::OnceLock;

use serde::Serialize;

use crate::func::SharedFn;
use crate::model::CoefficientSet;
use crate::quadrature::{adaptive, GaussLegendre};
use crate::rng::{derive_seed, Domain, NoiseStream};
use crate::stats::{par_blocks, pairwise_sum, MeanSe};
use crate::{Error, Result};

/// Default number of trapezoid nodes on the bridge time axis.
pub const DEFAULT_BRIDGE_NODES: usize = 256;

const ROUND_TRIP_TOL: f64 = 1e-10;
const INTERP_TOL: f64 = 1e-11;
const MAX_CELLS: usize = 1 << 22;

/// Tabulated `S(w) = ∫₀ʷ dy/σ(y)` and `Q(w) = ∫₀ʷ dy/σ(y)²` on a uniform
/// grid, interpolated by cubic Hermite polynomials that use the exact slopes.
#[derive(Clone, Debug)]
pub struct LampertiMap {
    lo: f64,
    step: f64,
    s: Vec<f64>,
    inv_sigma: Vec<f64>,
    q: Vec<f64>,
}

#[inline]
fn hermite(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, tau: f64) -> f64 {
    let t2 = tau * tau;
    let t3 = t2 * tau;
    (2.0 * t3 - 3.0 * t2 + 1.0) * y0 + (t3 - 2.0 * t2 + tau) * h * d0 + (-2.0 * t3 + 3.0 * t2) * y1 + (t3 - t2) * h * d1
}

#[inline]
fn hermite_slope(y0: f64, y1: f64, d0: f64, d1: f64, h: f64, tau: f64) -> f64 {
    let t2 = tau * tau;
    ((6.0 * t2 - 6.0 * tau) * y0 + (3.0 * t2 - 4.0 * tau + 1.0) * h * d0 + (-6.0 * t2 + 6.0 * tau) * y1 + (3.0 * t2 - 2.0 * tau) * h * d1) / h
}

impl LampertiMap {
    /// Tabulates the map on `[lo, hi]` (which must contain 0), refining the
    /// grid until the interpolant matches direct quadrature to 1e-11.
    pub fn new(sigma: &SharedFn, lo: f64, hi: f64) -> Result<Self> {
        if !(lo <= 0.0 && hi >= 0.0 && hi > lo) {
            return Err(Error::InvalidArgument(format!("lamperti range [{lo}, {hi}] must contain 0")));
        }
        let gl = GaussLegendre::new(16);
        let mut cells = ((hi - lo) * 16.0).ceil().max(16.0) as usize;
        loop {
            let map = Self::tabulate(sigma, lo, hi, cells, &gl);
            let (interp_err, trip_err) = map.self_check(sigma, &gl);
            if interp_err < INTERP_TOL && trip_err < ROUND_TRIP_TOL {
                return Ok(map);
            }
            if cells >= MAX_CELLS {
                return Err(Error::Validation(format!(
                    "lamperti map did not reach tolerance (interpolation {interp_err:e}, round trip {trip_err:e})"
                )));
            }
            cells *= 2;
        }
    }

    fn tabulate(sigma: &SharedFn, lo: f64, hi: f64, cells: usize, gl: &GaussLegendre) -> Self {
        let step = (hi - lo) / cells as f64;
        let node = |k: usize| lo + k as f64 * step;
        // integrate outward from the cell containing 0 so that S(0) = 0
        let k0 = (((0.0 - lo) / step).floor() as usize).min(cells - 1);
        let z0 = node(k0);
        let mut s = vec![0.0; cells + 1];
        let mut q = vec![0.0; cells + 1];
        s[k0] = -gl.integrate(0.0, z0, |y| 1.0 / sigma.value(y));
        q[k0] = -gl.integrate(0.0, z0, |y| sigma.value(y).powi(-2));
        for k in k0..cells {
            s[k + 1] = s[k] + gl.integrate(node(k), node(k + 1), |y| 1.0 / sigma.value(y));
            q[k + 1] = q[k] + gl.integrate(node(k), node(k + 1), |y| sigma.value(y).powi(-2));
        }
        for k in (0..k0).rev() {
            s[k] = s[k + 1] - gl.integrate(node(k), node(k + 1), |y| 1.0 / sigma.value(y));
            q[k] = q[k + 1] - gl.integrate(node(k), node(k + 1), |y| sigma.value(y).powi(-2));
        }
        let inv_sigma = (0..=cells).map(|k| 1.0 / sigma.value(node(k))).collect();
        Self { lo, step, s, inv_sigma, q }
    }

    fn self_check(&self, sigma: &SharedFn, gl: &GaussLegendre) -> (f64, f64) {
        let mut interp = 0.0f64;
        let mut trip = 0.0f64;
        for k in 0..self.s.len() - 1 {
            let a = self.lo + k as f64 * self.step;
            let mid = a + 0.5 * self.step;
            let direct = self.s[k] + gl.integrate(a, mid, |y| 1.0 / sigma.value(y));
            interp = interp.max((self.s_of(mid) - direct).abs());
            if let Ok(back) = self.s_inv(direct) {
                trip = trip.max((back - mid).abs());
            } else {
                trip = f64::INFINITY;
            }
        }
        (interp, trip)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.lo + self.step * (self.s.len() - 1) as f64)
    }

    fn cell(&self, w: f64) -> (usize, f64) {
        let x = ((w - self.lo) / self.step).max(0.0);
        let k = (x.floor() as usize).min(self.s.len() - 2);
        (k, (x - k as f64).min(1.0))
    }

    /// `S(w)`; clamps to the table range.
    pub fn s_of(&self, w: f64) -> f64 {
        let (k, tau) = self.cell(w);
        hermite(self.s[k], self.s[k + 1], self.inv_sigma[k], self.inv_sigma[k + 1], self.step, tau)
    }

    /// `Q(w) = ∫₀ʷ σ⁻²`.
    pub fn q_of(&self, w: f64) -> f64 {
        let (k, tau) = self.cell(w);
        let d0 = self.inv_sigma[k] * self.inv_sigma[k];
        let d1 = self.inv_sigma[k + 1] * self.inv_sigma[k + 1];
        hermite(self.q[k], self.q[k + 1], d0, d1, self.step, tau)
    }

    /// `S⁻¹(y)`; fails when `y` lies outside the tabulated image.
    pub fn s_inv(&self, y: f64) -> Result<f64> {
        let n = self.s.len();
        if !(y >= self.s[0] && y <= self.s[n - 1]) {
            let (lo, hi) = self.range();
            return Err(Error::RangeTooSmall { lo, hi, value: y });
        }
        let k = self.s.partition_point(|&v| v <= y).clamp(1, n - 1) - 1;
        let (y0, y1, d0, d1) = (self.s[k], self.s[k + 1], self.inv_sigma[k], self.inv_sigma[k + 1]);
        let h = self.step;
        let (mut a, mut b) = (0.0, 1.0);
        let mut tau = if y1 > y0 { (y - y0) / (y1 - y0) } else { 0.5 };
        for _ in 0..60 {
            let f = hermite(y0, y1, d0, d1, h, tau) - y;
            if f.abs() <= 1e-16 * (1.0 + y.abs()) {
                break;
            }
            if f > 0.0 {
                b = tau;
            } else {
                a = tau;
            }
            let next = tau - f / (hermite_slope(y0, y1, d0, d1, h, tau) * h);
            tau = if next > a && next < b { next } else { 0.5 * (a + b) };
            if b - a < 1e-17 {
                break;
            }
        }
        Ok(self.lo + (k as f64 + tau) * h)
    }
}

/// The scalar diffusion `dZ = (b(Z) + α(t)) dt + σ(Z) dW`, `Z_0 = x`.
#[derive(Clone, Debug)]
pub struct ForcedDiffusion {
    pub drift: SharedFn,
    pub sigma: SharedFn,
    pub alpha: SharedFn,
    pub x: f64,
    pub horizon: f64,
    lambda_sigma: f64,
    map: OnceLock<Result<LampertiMap>>,
}

impl ForcedDiffusion {
    pub fn new(cs: &CoefficientSet, alpha: SharedFn, x: f64, horizon: f64) -> Result<Self> {
        Self::from_parts(cs.drift.clone(), cs.sigma.clone(), cs.lambda_sigma, alpha, x, horizon)
    }

    /// `lambda_sigma` bounds `σ` and `1/σ`; it sizes the Lamperti table.
    pub fn from_parts(drift: SharedFn, sigma: SharedFn, lambda_sigma: f64, alpha: SharedFn, x: f64, horizon: f64) -> Result<Self> {
        if !(x < 1.0) {
            return Err(Error::StartAboveThreshold(x));
        }
        if !(horizon > 0.0) {
            return Err(Error::InvalidArgument(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { drift, sigma, alpha, x, horizon, lambda_sigma, map: OnceLock::new() })
    }

    /// The Lamperti table, built on first use.
    pub fn lamperti(&self) -> Result<&LampertiMap> {
        self.map
            .get_or_init(|| {
                let lam = self.lambda_sigma.max(1.0);
                // bridges stay within 14·√T of the segment [S(x), S(1)] with overwhelming probability
                let lo = self.x.min(0.0) - lam * lam * (14.0 * self.horizon.sqrt() + 1.0);
                LampertiMap::new(&self.sigma, lo, 1.5)
            })
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `∫₀ʷ b/σ²`, by adaptive quadrature.
    fn p_of(&self, w: f64) -> f64 {
        let f = |y: f64| self.drift.value(y) / self.sigma.value(y).powi(2);
        if w >= 0.0 {
            adaptive(0.0, w, 1e-13, &f)
        } else {
            -adaptive(w, 0.0, 1e-13, &f)
        }
    }

    /// `h_α(t, S(w)) = ∫₀^{S(w)} B_α(t, y) dy`.
    fn h_at(&self, map: &LampertiMap, t: f64, w: f64) -> f64 {
        self.p_of(w) - 0.5 * (self.sigma.value(w) / self.sigma.value(0.0)).ln() + self.alpha.value(t) * map.q_of(w)
    }

    /// `g_α(t, y) = B_α² + 2∂_t h_α + ∂_y B_α` at `y = S(w)`.
    fn g_at(&self, map: &LampertiMap, t: f64, w: f64) -> f64 {
        let s = self.sigma.value(w);
        let s1 = self.sigma.d1(w);
        let s2 = self.sigma.d2(w);
        let b = self.drift.value(w);
        let a = self.alpha.value(t);
        let big_b = (b + a) / s - 0.5 * s1;
        let dt_h = self.alpha.d1(t) * map.q_of(w);
        let dz_b = self.drift.d1(w) - (b + a) * s1 / s - 0.5 * s * s2;
        big_b * big_b + 2.0 * dt_h + dz_b
    }

    /// Everything in the density formula except the bridge expectation.
    fn prefactor(&self, map: &LampertiMap, t: f64, h_start: f64, gap: f64) -> f64 {
        let brownian = gap / (2.0 * std::f64::consts::PI * t * t * t).sqrt() * (-gap * gap / (2.0 * t)).exp();
        (self.h_at(map, t, 1.0) - h_start).exp() * brownian
    }

    /// `exp(−½ ∫₀ᵗ g_α(u, r_u) du)` along one bridge, trapezoid on `n_times` cells.
    fn bridge_weight(&self, map: &LampertiMap, t: f64, n_times: usize, stream: &mut NoiseStream, path: &mut Vec<f64>) -> Result<f64> {
        let (y0, y1) = (map.s_of(self.x), map.s_of(1.0));
        fill_bessel_bridge(y0, y1, t, n_times, stream, path);
        let du = t / n_times as f64;
        let mut acc = 0.0;
        for (k, &y) in path.iter().enumerate() {
            let w = if k == n_times { 1.0 } else { map.s_inv(y)? };
            let g = self.g_at(map, k as f64 * du, w);
            acc += if k == 0 || k == n_times { 0.5 * g } else { g };
        }
        Ok((-0.5 * acc * du).exp())
    }
}

/// A Monte Carlo density value with its standard error and effective sample size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    /// `(Σw)²/Σw²` of the bridge weights.
    pub ess: f64,
}

/// One Bessel(3)-bridge path on `n_times + 1` uniform nodes of `[0, t]`:
/// `r_u = y1 − ((t−u)/t)·R^{y1−y0}(ut/(t−u))`, `R^a(γ) = |(a,0,0) + B_γ|`.
pub fn bessel_bridge_path(y0: f64, y1: f64, t: f64, n_times: usize, seed: u64) -> Result<Vec<f64>> {
    check_bridge_args(y0, y1, t, n_times)?;
    let mut path = Vec::with_capacity(n_times + 1);
    fill_bessel_bridge(y0, y1, t, n_times, &mut NoiseStream::new(seed, Domain::Bridge, 0), &mut path);
    Ok(path)
}

fn check_bridge_args(y0: f64, y1: f64, t: f64, n_times: usize) -> Result<()> {
    if !(t > 0.0) {
        return Err(Error::InvalidArgument(format!("bridge length must be positive, got {t}")));
    }
    if !(y1 >= y0) {
        return Err(Error::InvalidArgument(format!("bridge needs y1 >= y0, got {y0} -> {y1}")));
    }
    if n_times < 1 {
        return Err(Error::InvalidArgument("bridge needs at least one time step".into()));
    }
    Ok(())
}

fn fill_bessel_bridge(y0: f64, y1: f64, t: f64, n_times: usize, stream: &mut NoiseStream, path: &mut Vec<f64>) {
    let a = y1 - y0;
    path.clear();
    path.push(y0);
    let mut b = [0.0f64; 3];
    let mut gamma_prev = 0.0;
    for k in 1..n_times {
        let u = t * k as f64 / n_times as f64;
        let gamma = u * t / (t - u);
        let sd = (gamma - gamma_prev).sqrt();
        for c in &mut b {
            *c += sd * stream.normal();
        }
        gamma_prev = gamma;
        let radius = ((a + b[0]).powi(2) + b[1] * b[1] + b[2] * b[2]).sqrt();
        let scaled = (t - u) / t * radius;
        path.push(y1 - scaled);
    }
    path.push(y1);
}

/// Estimates the first-passage density at `t` by averaging the Girsanov
/// weight over `n_mc` bridges. Zero variance when the transformed drift vanishes.
pub fn hitting_density_bridge(fd: &ForcedDiffusion, t: f64, n_mc: usize, n_times: usize, seed: u64) -> Result<DensityEstimate> {
    if !(t > 0.0) || n_mc == 0 {
        return Err(Error::InvalidArgument(format!("need t > 0 and n_mc >= 1, got {t}, {n_mc}")));
    }
    let map = fd.lamperti()?;
    let gap = map.s_of(1.0) - map.s_of(fd.x);
    check_bridge_args(0.0, gap, t, n_times)?;
    let h_start = fd.h_at(map, 0.0, fd.x);
    let pre = fd.prefactor(map, t, h_start, gap);
    let weights = bridge_samples(n_mc, seed, |stream, path| fd.bridge_weight(map, t, n_times, stream, path))?;
    Ok(summarize(&weights, pre))
}

/// `∫₀ᵗ p(s) ds` estimated with one bridge per path at an independent
/// uniform time `s ~ U(0, t)`.
pub fn integrated_density_bridge(fd: &ForcedDiffusion, t: f64, n_mc: usize, n_times: usize, seed: u64) -> Result<DensityEstimate> {
    if !(t > 0.0) || n_mc == 0 {
        return Err(Error::InvalidArgument(format!("need t > 0 and n_mc >= 1, got {t}, {n_mc}")));
    }
    let map = fd.lamperti()?;
    let gap = map.s_of(1.0) - map.s_of(fd.x);
    check_bridge_args(0.0, gap, t, n_times)?;
    let h_start = fd.h_at(map, 0.0, fd.x);
    let samples = bridge_samples(n_mc, seed, |stream, path| {
        let s = t * stream.uniform();
        Ok(t * fd.prefactor(map, s, h_start, gap) * fd.bridge_weight(map, s, n_times, stream, path)?)
    })?;
    Ok(summarize(&samples, 1.0))
}

fn bridge_samples<F>(n_mc: usize, seed: u64, sample: F) -> Result<Vec<f64>>
where
    F: Fn(&mut NoiseStream, &mut Vec<f64>) -> Result<f64> + Sync + Send,
{
    let blocks = par_blocks(n_mc, |range| {
        let mut path = Vec::new();
        range
            .map(|p| sample(&mut NoiseStream::new(seed, Domain::Bridge, p as u64), &mut path))
            .collect::<Result<Vec<f64>>>()
    });
    let mut out = Vec::with_capacity(n_mc);
    for b in blocks {
        out.extend(b?);
    }
    Ok(out)
}

fn summarize(weights: &[f64], scale: f64) -> DensityEstimate {
    let est = MeanSe::from_samples(weights);
    let sq: Vec<f64> = weights.iter().map(|w| w * w).collect();
    let total = pairwise_sum(weights);
    let total_sq = pairwise_sum(&sq);
    let ess = if total_sq > 0.0 { total * total / total_sq } else { weights.len() as f64 };
    if ess < 0.1 * weights.len() as f64 {
        log::warn!("bridge weights degenerate: effective sample size {ess:.0} of {}", weights.len());
    }
    DensityEstimate { value: scale * est.mean, std_error: scale * est.se, n_samples: weights.len(), ess }
}

/// Density estimates at several times, each with its own derived seed.
pub fn density_curve(fd: &ForcedDiffusion, times: &[f64], n_mc: usize, n_times: usize, seed: u64) -> Result<Vec<(f64, DensityEstimate)>> {
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| Ok((t, hitting_density_bridge(fd, t, n_mc, n_times, derive_seed(seed, &[k as u64]))?)))
        .collect()
}

/// CSV with header `t,estimate,std_error`.
pub fn write_density_csv<W: Write>(mut w: W, curve: &[(f64, DensityEstimate)]) -> io::Result<()> {
    writeln!(w, "t,estimate,std_error")?;
    for (t, d) in curve {
        writeln!(w, "{},{},{}", t, d.value, d.std_error)?;
    }
    Ok(())
}

/// `P_x(τ₁ ≤ t_m)` at every node `t_m = m·Δt`, `m = 0..=n_nodes`, from Euler
/// paths with `substeps` steps per node interval. Each step multiplies the
/// survival weight by the Brownian-bridge non-crossing probability.
pub fn hitting_cdf_mc(fd: &ForcedDiffusion, dt: f64, n_nodes: usize, substeps: usize, n_mc: usize, seed: u64) -> Result<Vec<MeanSe>> {
    crossing_cdf(fd, |_| fd.x, dt, n_nodes, substeps, n_mc, seed)
}

/// As [`hitting_cdf_mc`], with the paths spread evenly over `starts`
/// (path `p` of `n_mc` uses `starts[p·len/n_mc]`). Starts at or above the
/// threshold count as hit at time 0.
pub fn hitting_cdf_mc_mixed(fd: &ForcedDiffusion, starts: &[f64], dt: f64, n_nodes: usize, substeps: usize, n_mc: usize, seed: u64) -> Result<Vec<MeanSe>> {
    if starts.is_empty() {
        return Err(Error::InvalidArgument("no start points".into()));
    }
    let len = starts.len();
    crossing_cdf(fd, |p| starts[p * len / n_mc], dt, n_nodes, substeps, n_mc, seed)
}

fn crossing_cdf<S>(fd: &ForcedDiffusion, start: S, dt: f64, n_nodes: usize, substeps: usize, n_mc: usize, seed: u64) -> Result<Vec<MeanSe>>
where
    S: Fn(usize) -> f64 + Sync,
{
    if !(dt > 0.0) || substeps == 0 || n_mc == 0 {
        return Err(Error::InvalidArgument(format!("need dt > 0, substeps >= 1, n_mc >= 1 (got {dt}, {substeps}, {n_mc})")));
    }
    let h = dt / substeps as f64;
    let sh = h.sqrt();
    let blocks = par_blocks(n_mc, |range| {
        let mut sums = vec![0.0; n_nodes + 1];
        let mut sums_sq = vec![0.0; n_nodes + 1];
        for p in range {
            let mut noise = NoiseStream::new(seed, Domain::HittingMc, p as u64);
            let mut z = start(p);
            let mut survive = if z >= 1.0 { 0.0 } else { 1.0 };
            sums[0] += 1.0 - survive;
            sums_sq[0] += 1.0 - survive;
            for m in 0..n_nodes {
                if survive > 0.0 {
                    for j in 0..substeps {
                        let t = m as f64 * dt + j as f64 * h;
                        let s = fd.sigma.value(z);
                        let next = z + (fd.drift.value(z) + fd.alpha.value(t)) * h + s * sh * noise.normal();
                        if !next.is_finite() {
                            return Err(Error::NumericalBlowUp { step: m, index: p });
                        }
                        if next >= 1.0 {
                            survive = 0.0;
                            break;
                        }
                        survive *= 1.0 - (-2.0 * (1.0 - z) * (1.0 - next) / (s * s * h)).exp();
                        z = next;
                    }
                }
                let f = 1.0 - survive;
                sums[m + 1] += f;
                sums_sq[m + 1] += f * f;
            }
        }
        Ok((sums, sums_sq))
    });
    let mut sums = vec![0.0; n_nodes + 1];
    let mut sums_sq = vec![0.0; n_nodes + 1];
    for b in blocks {
        let (s, s2) = b?;
        for m in 0..=n_nodes {
            sums[m] += s[m];
            sums_sq[m] += s2[m];
        }
    }
    Ok((0..=n_nodes).map(|m| MeanSe::from_sums(sums[m], sums_sq[m], n_mc)).collect())
}

/// `C·e^{Cx²}(1−x)t^{−3/2}e^{−(1−x)²/(2Λ_σ²t)}`, an upper envelope for the
/// first-passage density when `C` is large enough.
pub fn density_envelope(lambda_sigma: f64, x: f64, t: f64, c: f64) -> f64 {
    let a = 1.0 - x;
    c * (c * x * x).exp() * a * t.powf(-1.5) * (-a * a / (2.0 * lambda_sigma * lambda_sigma * t)).exp()
}
