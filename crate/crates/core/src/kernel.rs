//! Cable-equation transmission kernel and soma forcing.
//!
//! A unit spike injected with synaptic density `ρ` on an infinite cable
//! `∂_t V = ½∂²_ξ V − γV` produces the soma potential
//! `c(t) = [𝒢(t,·) * ρ](0) = e^{−γt} E[ρ(ξ√t)]`, `ξ ~ N(0,1)`.
//! The transmission kernel is its time derivative,
//! `G_ρ(t) = e^{−γt} E[(½ρ'' − γρ)(ξ√t)]`, and each further time derivative
//! applies `½D² − γ` once more to `ρ`. All expectations are Gauss–Hermite rules.

use std::io::{self, Write};

use crate::func::ScalarFn;
use crate::quadrature::GaussHermite;
use crate::{Error, Result};

pub const DEFAULT_HERMITE_ORDER: usize = 128;

/// Synapse density profile along the dendrite, with derivatives up to order 6.
pub trait SynapseDensity: Send + Sync + std::fmt::Debug {
    /// `ρ⁽ᵏ⁾(ξ)` for `k ≤ 6`.
    fn derivative(&self, order: usize, xi: f64) -> f64;

    fn value(&self, xi: f64) -> f64 {
        self.derivative(0, xi)
    }
}

/// `ρ(ξ) = p(ξ) e^{−ξ²/2}` for a polynomial `p`.
#[derive(Clone, Debug)]
pub struct PolyGauss {
    /// `derivs[k]` holds the polynomial factor of `ρ⁽ᵏ⁾`.
    derivs: Vec<Vec<f64>>,
}

fn poly_eval(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| acc * x + a)
}

impl PolyGauss {
    pub fn new(poly: Vec<f64>) -> Self {
        let mut derivs = vec![poly];
        for _ in 0..6 {
            let p = derivs.last().unwrap();
            // (p' − ξp)
            let mut q = vec![0.0; p.len() + 1];
            for (k, &a) in p.iter().enumerate() {
                if k > 0 {
                    q[k - 1] += k as f64 * a;
                }
                q[k + 1] -= a;
            }
            derivs.push(q);
        }
        Self { derivs }
    }

    /// `amplitude · ξ⁶ e^{−ξ²/2}` ("hex-gauss").
    pub fn hex_gauss(amplitude: f64) -> Self {
        let mut p = vec![0.0; 7];
        p[6] = amplitude;
        Self::new(p)
    }

    /// `amplitude · e^{−ξ²/2}`; has synapses on the soma.
    pub fn gauss(amplitude: f64) -> Self {
        Self::new(vec![amplitude])
    }
}

impl SynapseDensity for PolyGauss {
    fn derivative(&self, order: usize, xi: f64) -> f64 {
        poly_eval(&self.derivs[order], xi) * (-0.5 * xi * xi).exp()
    }
}

/// `amplitude · ξ⁴(1 − ξ²)²` on `[−1, 1]`, zero outside ("quartic-bump").
#[derive(Clone, Debug)]
pub struct QuarticBump {
    derivs: Vec<Vec<f64>>,
}

impl QuarticBump {
    pub fn new(amplitude: f64) -> Self {
        let mut p = vec![0.0; 9];
        p[4] = amplitude;
        p[6] = -2.0 * amplitude;
        p[8] = amplitude;
        let mut derivs = vec![p];
        for _ in 0..6 {
            let p = derivs.last().unwrap();
            derivs.push(p.iter().enumerate().skip(1).map(|(k, &a)| k as f64 * a).collect());
        }
        Self { derivs }
    }
}

impl SynapseDensity for QuarticBump {
    fn derivative(&self, order: usize, xi: f64) -> f64 {
        if xi.abs() > 1.0 {
            0.0
        } else {
            poly_eval(&self.derivs[order], xi)
        }
    }
}

/// Built-in density catalog. The second element is a caveat to surface to the user.
pub fn synapse_density_by_name(name: &str, amplitude: f64) -> Result<(Box<dyn SynapseDensity>, Option<&'static str>)> {
    match name {
        "hex-gauss" => Ok((Box::new(PolyGauss::hex_gauss(amplitude)), None)),
        "quartic-bump" => Ok((
            Box::new(QuarticBump::new(amplitude)),
            Some("quartic-bump has rho''''(0) != 0: G'(0) may be nonzero, validate before use"),
        )),
        "gauss" => Ok((
            Box::new(PolyGauss::gauss(amplitude)),
            Some("gauss places synapses on the soma: G(0) != 0"),
        )),
        other => Err(Error::InvalidArgument(format!("unknown synapse density '{other}'"))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SomaCheck {
    pub rho: f64,
    pub rho2: f64,
    pub rho4: f64,
    pub min_on_probe: f64,
}

impl SomaCheck {
    pub fn passed(&self, tol: f64) -> bool {
        self.rho.abs() <= tol && self.rho2.abs() <= tol && self.rho4.abs() <= tol && self.min_on_probe >= 0.0
    }
}

/// Evaluates `ρ(0), ρ''(0), ρ⁗(0)` and the minimum of `ρ` over the probe points.
pub fn check_soma_constraint(rho: &dyn SynapseDensity, probe: &[f64]) -> SomaCheck {
    SomaCheck {
        rho: rho.derivative(0, 0.0),
        rho2: rho.derivative(2, 0.0),
        rho4: rho.derivative(4, 0.0),
        min_on_probe: probe.iter().map(|&x| rho.value(x)).fold(f64::INFINITY, f64::min),
    }
}

/// Coefficients of `(½D² − γ)^k` acting on `ρ`, as weights on `ρ, ρ'', ρ⁗, ρ⁽⁶⁾`.
fn cable_operator_power(k: usize, gamma: f64) -> [f64; 4] {
    match k {
        0 => [1.0, 0.0, 0.0, 0.0],
        1 => [-gamma, 0.5, 0.0, 0.0],
        2 => [gamma * gamma, -gamma, 0.25, 0.0],
        3 => [-gamma.powi(3), 1.5 * gamma * gamma, -0.75 * gamma, 0.125],
        _ => unreachable!("only derivatives up to G'' are needed"),
    }
}

fn heat_expectation(rho: &dyn SynapseDensity, gamma: f64, t: f64, power: usize, gh: &GaussHermite) -> f64 {
    let c = cable_operator_power(power, gamma);
    let st = t.sqrt();
    let e = gh.expect(|x| {
        let y = x * st;
        let mut s = c[0] * rho.derivative(0, y) + c[1] * rho.derivative(2, y);
        if c[2] != 0.0 {
            s += c[2] * rho.derivative(4, y);
        }
        if c[3] != 0.0 {
            s += c[3] * rho.derivative(6, y);
        }
        s
    });
    (-gamma * t).exp() * e
}

/// `G_ρ(t)` with a Gauss–Hermite rule of the given order.
pub fn cable_kernel(rho: &dyn SynapseDensity, gamma: f64, t: f64, order: usize) -> f64 {
    heat_expectation(rho, gamma, t, 1, &GaussHermite::new(order))
}

/// Transmission kernel `G_ρ` packaged as a [`ScalarFn`].
#[derive(Debug)]
pub struct CableKernel<R: SynapseDensity> {
    pub rho: R,
    pub gamma: f64,
    gh: GaussHermite,
}

impl<R: SynapseDensity> CableKernel<R> {
    pub fn new(rho: R, gamma: f64, order: usize) -> Self {
        assert!(gamma > 0.0, "cable decay rate must be positive");
        Self { rho, gamma, gh: GaussHermite::new(order) }
    }

    /// Soma response `c(t) = e^{−γt} E[ρ(ξ√t)]`, whose derivative is `G_ρ`.
    pub fn response(&self, t: f64) -> f64 {
        heat_expectation(&self.rho, self.gamma, t, 0, &self.gh)
    }
}

impl<R: SynapseDensity> ScalarFn for CableKernel<R> {
    fn value(&self, t: f64) -> f64 {
        heat_expectation(&self.rho, self.gamma, t.max(0.0), 1, &self.gh)
    }
    fn d1(&self, t: f64) -> f64 {
        heat_expectation(&self.rho, self.gamma, t.max(0.0), 2, &self.gh)
    }
    fn d2(&self, t: f64) -> f64 {
        heat_expectation(&self.rho, self.gamma, t.max(0.0), 3, &self.gh)
    }
}

impl SynapseDensity for Box<dyn SynapseDensity> {
    fn derivative(&self, order: usize, xi: f64) -> f64 {
        (**self).derivative(order, xi)
    }
}

/// `H_{V₀}(t) = e^{−γt} E[v₀(ξ√t)]`, equal to `v₀(0)` at `t = 0`.
pub fn soma_forcing(v0: &dyn ScalarFn, gamma: f64, t: f64, order: usize) -> f64 {
    if t <= 0.0 {
        return v0.value(0.0);
    }
    let st = t.sqrt();
    (-gamma * t).exp() * GaussHermite::new(order).expect(|x| v0.value(x * st))
}

/// Soma forcing `H_{V₀}` as a [`ScalarFn`]. The second derivative is a
/// central difference of the analytic first derivative.
#[derive(Debug)]
pub struct SomaForcing<F: ScalarFn> {
    pub v0: F,
    pub gamma: f64,
    gh: GaussHermite,
}

impl<F: ScalarFn> SomaForcing<F> {
    pub fn new(v0: F, gamma: f64, order: usize) -> Self {
        Self { v0, gamma, gh: GaussHermite::new(order) }
    }
}

impl<F: ScalarFn> ScalarFn for SomaForcing<F> {
    fn value(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        let st = t.sqrt();
        (-self.gamma * t).exp() * self.gh.expect(|x| self.v0.value(x * st))
    }
    fn d1(&self, t: f64) -> f64 {
        let t = t.max(0.0);
        let st = t.sqrt();
        (-self.gamma * t).exp() * self.gh.expect(|x| 0.5 * self.v0.d2(x * st) - self.gamma * self.v0.value(x * st))
    }
    fn d2(&self, t: f64) -> f64 {
        let h = 1e-4;
        let t = t.max(h);
        (self.d1(t + h) - self.d1(t - h)) / (2.0 * h)
    }
}

/// Kernel sampled on the simulation grid together with its antiderivative
/// `Ĝ(t) = ∫₀ᵗ G(v)dv`.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTable {
    pub dt: f64,
    pub g: Vec<f64>,
    pub dg: Vec<f64>,
    pub g_hat: Vec<f64>,
    pub sup_norm: f64,
}

/// Tabulates `g` on `n_steps + 1` nodes of `[0, horizon]`; `Ĝ` is accumulated
/// by Simpson's rule on each cell using the cell midpoint.
pub fn tabulate_kernel(g: &dyn ScalarFn, horizon: f64, n_steps: usize) -> Result<KernelTable> {
    if n_steps < 2 || !(horizon > 0.0) {
        return Err(Error::InvalidArgument(format!("kernel table needs n_steps >= 2 and positive horizon, got {n_steps}, {horizon}")));
    }
    let (g0, dg0) = (g.value(0.0), g.d1(0.0));
    if g0.abs() > crate::model::KERNEL_ORIGIN_TOL || dg0.abs() > crate::model::KERNEL_ORIGIN_TOL {
        return Err(Error::Validation(format!("kernel origin: G(0) = {g0:e}, G'(0) = {dg0:e}")));
    }
    let dt = horizon / n_steps as f64;
    let nodes: Vec<f64> = (0..=n_steps).map(|m| m as f64 * dt).collect();
    let gv: Vec<f64> = nodes.iter().map(|&t| g.value(t)).collect();
    let dg: Vec<f64> = nodes.iter().map(|&t| g.d1(t)).collect();
    let mut g_hat = vec![0.0; n_steps + 1];
    for m in 0..n_steps {
        let mid = g.value(nodes[m] + 0.5 * dt);
        g_hat[m + 1] = g_hat[m] + dt / 6.0 * (gv[m] + 4.0 * mid + gv[m + 1]);
    }
    let sup_norm = gv.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(KernelTable { dt, g: gv, dg, g_hat, sup_norm })
}

impl KernelTable {
    pub fn n_steps(&self) -> usize {
        self.g.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps() as f64
    }

    fn interp(values: &[f64], dt: f64, t: f64) -> f64 {
        if t <= 0.0 {
            return values[0];
        }
        let s = t / dt;
        let k = s.floor() as usize;
        if k + 1 >= values.len() {
            return *values.last().unwrap();
        }
        let w = s - k as f64;
        values[k] * (1.0 - w) + values[k + 1] * w
    }

    /// `G(t)` by linear interpolation between nodes.
    pub fn g_at(&self, t: f64) -> f64 {
        Self::interp(&self.g, self.dt, t)
    }

    /// `Ĝ(t)` by linear interpolation between nodes.
    pub fn g_hat_at(&self, t: f64) -> f64 {
        Self::interp(&self.g_hat, self.dt, t)
    }

    /// CSV with header `t,G,dG,G_hat`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t,G,dG,G_hat")?;
        for m in 0..self.g.len() {
            writeln!(w, "{},{},{},{}", m as f64 * self.dt, self.g[m], self.dg[m], self.g_hat[m])?;
        }
        Ok(())
    }
}
