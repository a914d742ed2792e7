//! The N-neuron network in its continuous form `Z^i = U^i + M^i`.
//!
//! Between grid nodes every neuron takes an Euler–Maruyama step driven by
//! `H'(t) + b(Z − M) + C_i(t)`, where `C_i(t) = Σ_j (J_ij/S_i) Σ_k G(t − τ_k^j)`
//! is the time derivative of the kernel-smoothed interaction. Spike counts
//! follow the floor identity `M = ⌊(max Z)₊⌋`; spikes are stamped with the
//! grid node at which they are detected.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::kernel::KernelTable;
use crate::model::{sample_initial, CoefficientSet, InitialLaw, WeightScheme};
use crate::rng::{Domain, NoiseStream};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Grid {
    pub horizon: f64,
    pub n_steps: usize,
}

impl Grid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || n_steps == 0 {
            return Err(Error::InvalidArgument(format!("grid needs T > 0 and n_steps >= 1, got {horizon}, {n_steps}")));
        }
        Ok(Self { horizon, n_steps })
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    #[inline]
    pub fn node(&self, m: usize) -> f64 {
        m as f64 * self.dt()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|m| self.node(m)).collect()
    }

    /// Index of the node closest to `t`.
    pub fn nearest(&self, t: f64) -> usize {
        ((t / self.dt()).round().max(0.0) as usize).min(self.n_steps)
    }

    /// Same horizon, twice the steps.
    pub fn refined(&self) -> Self {
        Self { horizon: self.horizon, n_steps: 2 * self.n_steps }
    }

    pub fn check_table(&self, kt: &KernelTable) -> Result<()> {
        if (kt.dt - self.dt()).abs() > 1e-12 * self.dt() || kt.n_steps() < self.n_steps {
            return Err(Error::IncompatibleGrid(format!(
                "kernel table (dt = {}, {} steps) does not cover grid (dt = {}, {} steps)",
                kt.dt,
                kt.n_steps(),
                self.dt(),
                self.n_steps
            )));
        }
        Ok(())
    }
}

/// How threshold crossings between grid nodes are handled.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum CrossingMode {
    /// Crossings are seen only at grid nodes.
    #[default]
    GridOnly,
    /// Additionally, a Brownian-bridge test flags a crossing of the next level
    /// inside a step; the spike is stamped at the end node.
    Bridge,
}

#[derive(Clone, Debug, Default)]
pub struct SimOptions {
    pub crossing: CrossingMode,
    /// Noise stream used by each neuron (defaults to the neuron index).
    pub streams: Option<Vec<u64>>,
    /// Initial potentials; drawn from the initial law when absent.
    pub initial: Option<Vec<f64>>,
}

/// Spike node indices per neuron, nondecreasing (a multi-level jump in one
/// step repeats the node).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpikeRecord {
    pub dt: f64,
    pub nodes: Vec<Vec<usize>>,
}

impl SpikeRecord {
    pub fn empty(n: usize, dt: f64) -> Self {
        Self { dt, nodes: vec![Vec::new(); n] }
    }

    pub fn n_neurons(&self) -> usize {
        self.nodes.len()
    }

    pub fn times(&self, neuron: usize) -> Vec<f64> {
        self.nodes[neuron].iter().map(|&m| m as f64 * self.dt).collect()
    }

    pub fn total(&self) -> usize {
        self.nodes.iter().map(Vec::len).sum()
    }

    /// Number of spikes of `neuron` at or before node `m`.
    pub fn count_until(&self, neuron: usize, m: usize) -> usize {
        self.nodes[neuron].partition_point(|&k| k <= m)
    }

    /// CSV with header `neuron,k,tau`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "neuron,k,tau")?;
        for (i, list) in self.nodes.iter().enumerate() {
            for (k, &m) in list.iter().enumerate() {
                writeln!(w, "{},{},{}", i, k + 1, m as f64 * self.dt)?;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectorySet {
    pub grid: Grid,
    pub seed: u64,
    pub crossing: CrossingMode,
    /// `z[i][m] = Z^i(t_m)`
    pub z: Vec<Vec<f64>>,
    /// `m[i][m] = M^i(t_m)`
    pub m: Vec<Vec<u32>>,
}

impl TrajectorySet {
    pub fn n_neurons(&self) -> usize {
        self.z.len()
    }

    /// `U^i(t_m)` for a single neuron and node.
    #[inline]
    pub fn u(&self, i: usize, m: usize) -> f64 {
        self.z[i][m] - self.m[i][m] as f64
    }

    /// Long-format CSV with header `neuron,t,Z,M,U`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "neuron,t,Z,M,U")?;
        for i in 0..self.n_neurons() {
            for k in 0..=self.grid.n_steps {
                writeln!(w, "{},{},{},{},{}", i, self.grid.node(k), self.z[i][k], self.m[i][k], self.u(i, k))?;
            }
        }
        Ok(())
    }
}

/// `U^i(t_m) = Z^i(t_m) − M^i(t_m)` for every neuron.
pub fn reconstruct_u(traj: &TrajectorySet) -> Vec<Vec<f64>> {
    traj.z
        .iter()
        .zip(&traj.m)
        .map(|(z, m)| z.iter().zip(m).map(|(&z, &m)| z - m as f64).collect())
        .collect()
}

/// Spike aggregates `A_i[l] = Σ_j (J_ij/S_i) · #spikes of j at node l`.
/// With shared rows a single aggregate serves every neuron.
struct Aggregates {
    shared: bool,
    rows: Vec<Vec<f64>>,
}

impl Aggregates {
    fn new(w: &WeightScheme, n_nodes: usize) -> Self {
        let shared = w.has_shared_rows();
        let n_rows = if shared { 1 } else { w.len() };
        Self { shared, rows: vec![vec![0.0; n_nodes]; n_rows] }
    }

    fn add_spikes(&mut self, w: &WeightScheme, row_sums: &[f64], j: usize, node: usize, count: u32) {
        let c = count as f64;
        if self.shared {
            self.rows[0][node] += c / w.len() as f64;
        } else {
            for (i, row) in self.rows.iter_mut().enumerate() {
                let wij = w.normalized(i, j, row_sums);
                if wij != 0.0 {
                    row[node] += wij * c;
                }
            }
        }
    }

    /// `Σ_{l ≤ m} G(t_m − t_l) A_i[l]`
    fn current(&self, i: usize, m: usize, g: &[f64]) -> f64 {
        let row = &self.rows[if self.shared { 0 } else { i }];
        (0..=m).map(|l| g[m - l] * row[l]).sum()
    }
}

struct NeuronState {
    z: Vec<f64>,
    m: Vec<u32>,
    noise: NoiseStream,
    cross: NoiseStream,
}

/// Probability that a Brownian bridge from `a` to `b` over `dt` with
/// volatility `s` touches `level`, given `a, b < level`.
#[inline]
pub fn bridge_crossing_probability(level: f64, a: f64, b: f64, s: f64, dt: f64) -> f64 {
    (-2.0 * (level - a) * (level - b) / (s * s * dt)).exp()
}

fn initial_potentials(law: &InitialLaw, n: usize, seed: u64, opts: &SimOptions) -> Result<Vec<f64>> {
    match &opts.initial {
        Some(u0) if u0.len() == n => Ok(u0.clone()),
        Some(u0) => Err(Error::InvalidArgument(format!("{} initial values for {n} neurons", u0.len()))),
        None => Ok(sample_initial(law, n, seed)),
    }
}

fn stream_ids(n: usize, opts: &SimOptions) -> Result<Vec<u64>> {
    match &opts.streams {
        Some(s) if s.len() == n => Ok(s.clone()),
        Some(s) => Err(Error::InvalidArgument(format!("{} noise streams for {n} neurons", s.len()))),
        None => Ok((0..n as u64).collect()),
    }
}

/// Simulates the network on `grid`. Deterministic in `(inputs, seed, opts)`
/// and independent of the number of rayon workers.
pub fn simulate_network(
    cs: &CoefficientSet,
    kt: &KernelTable,
    w: &WeightScheme,
    law: &InitialLaw,
    grid: &Grid,
    seed: u64,
    opts: &SimOptions,
) -> Result<(TrajectorySet, SpikeRecord)> {
    grid.check_table(kt)?;
    let n = w.len();
    let row_sums = w.row_sums()?;
    let u0 = initial_potentials(law, n, seed, opts)?;
    let ids = stream_ids(n, opts)?;
    let steps = grid.n_steps;
    let dt = grid.dt();
    let sdt = dt.sqrt();
    let h_prime: Vec<f64> = (0..steps).map(|m| cs.forcing.d1(grid.node(m))).collect();
    let h0 = cs.forcing.value(0.0);

    let mut states: Vec<NeuronState> = (0..n)
        .map(|i| {
            let z0 = u0[i] + h0;
            let mut z = Vec::with_capacity(steps + 1);
            let mut m = Vec::with_capacity(steps + 1);
            z.push(z0);
            m.push(z0.max(0.0).floor() as u32);
            NeuronState {
                z,
                m,
                noise: NoiseStream::new(seed, Domain::Network, ids[i]),
                cross: NoiseStream::new(seed, Domain::Crossing, ids[i]),
            }
        })
        .collect();
    let mut agg = Aggregates::new(w, steps + 1);
    let mut spikes = SpikeRecord::empty(n, dt);
    for (j, st) in states.iter().enumerate() {
        if st.m[0] > 0 {
            agg.add_spikes(w, &row_sums, j, 0, st.m[0]);
            spikes.nodes[j].extend(std::iter::repeat_n(0, st.m[0] as usize));
        }
    }

    for step in 0..steps {
        let shared_current = if agg.shared { Some(agg.current(0, step, &kt.g)) } else { None };
        let agg_ref = &agg;
        let results: Vec<Result<()>> = states
            .par_iter_mut()
            .enumerate()
            .map(|(i, st)| {
                let current = shared_current.unwrap_or_else(|| agg_ref.current(i, step, &kt.g));
                let (z, m) = (st.z[step], st.m[step]);
                let u = z - m as f64;
                let s = cs.sigma.value(u);
                let xi = st.noise.normal();
                let z_next = z + (h_prime[step] + cs.drift.value(u) + current) * dt + s * sdt * xi;
                if runaway(z, z_next) {
                    return Err(Error::NumericalBlowUp { step, index: i });
                }
                let mut m_next = m.max(z_next.max(0.0).floor() as u32);
                if grid_crossing_bridge(cs_crossing_mode(opts), m, m_next, z, z_next, s, dt, &mut st.cross) {
                    m_next = m + 1;
                }
                st.z.push(z_next);
                st.m.push(m_next);
                Ok(())
            })
            .collect();
        results.into_iter().collect::<Result<Vec<()>>>()?;
        for (j, st) in states.iter().enumerate() {
            let jump = st.m[step + 1] - st.m[step];
            if jump > 0 {
                agg.add_spikes(w, &row_sums, j, step + 1, jump);
                spikes.nodes[j].extend(std::iter::repeat_n(step + 1, jump as usize));
            }
        }
    }

    let (z, m) = states.into_iter().map(|st| (st.z, st.m)).unzip();
    Ok((TrajectorySet { grid: *grid, seed, crossing: opts.crossing, z, m }, spikes))
}

/// More threshold levels than this in one step is treated as a blow-up.
pub const MAX_LEVELS_PER_STEP: f64 = (1u32 << 20) as f64;

/// A step that left the representable range or crossed an absurd number of
/// levels at once.
#[inline]
pub(crate) fn runaway(prev: f64, next: f64) -> bool {
    !next.is_finite() || (next - prev).abs() > MAX_LEVELS_PER_STEP || next.abs() > 1e9
}

#[inline]
fn cs_crossing_mode(opts: &SimOptions) -> CrossingMode {
    opts.crossing
}

/// In bridge mode, draws one uniform per step and reports whether a crossing
/// of level `m + 1` happened strictly inside the step.
#[inline]
#[allow(clippy::too_many_arguments)]
fn grid_crossing_bridge(mode: CrossingMode, m: u32, m_next: u32, z: f64, z_next: f64, s: f64, dt: f64, cross: &mut NoiseStream) -> bool {
    if mode != CrossingMode::Bridge {
        return false;
    }
    let u = cross.uniform();
    if m_next > m {
        return false;
    }
    let level = (m + 1) as f64;
    u < bridge_crossing_probability(level, z, z_next, s, dt)
}

/// `Σ_j (J_ij/S_i) Σ_k Ĝ(t_m − τ_k^j)`, which equals
/// `Σ_j (J_ij/S_i) ∫₀^{t_m} G(t_m − s) M_s^j ds` for step-function counts.
pub fn interaction_term(spikes: &SpikeRecord, w: &WeightScheme, kt: &KernelTable, i: usize, m: usize) -> Result<f64> {
    if m >= kt.g_hat.len() {
        return Err(Error::IncompatibleGrid(format!("node {m} beyond kernel table")));
    }
    let row_sums = w.row_sums()?;
    Ok((0..spikes.n_neurons())
        .map(|j| {
            let wij = w.normalized(i, j, &row_sums);
            if wij == 0.0 {
                return 0.0;
            }
            wij * spikes.nodes[j].iter().take_while(|&&k| k <= m).map(|&k| kt.g_hat[m - k]).sum::<f64>()
        })
        .sum())
}

/// Largest network accepted by [`event_based_reference`].
pub const REFERENCE_MAX_NEURONS: usize = 16;

/// Direct simulation of the potentials `U^i` with explicit resets, sharing
/// the noise streams of [`simulate_network`]. Small networks only.
pub fn event_based_reference(
    cs: &CoefficientSet,
    kt: &KernelTable,
    w: &WeightScheme,
    law: &InitialLaw,
    grid: &Grid,
    seed: u64,
    opts: &SimOptions,
) -> Result<(TrajectorySet, SpikeRecord)> {
    let n = w.len();
    if n > REFERENCE_MAX_NEURONS {
        return Err(Error::InvalidArgument(format!("reference simulation supports at most {REFERENCE_MAX_NEURONS} neurons, got {n}")));
    }
    grid.check_table(kt)?;
    let row_sums = w.row_sums()?;
    let u0 = initial_potentials(law, n, seed, opts)?;
    let ids = stream_ids(n, opts)?;
    let steps = grid.n_steps;
    let dt = grid.dt();
    let sdt = dt.sqrt();
    let h0 = cs.forcing.value(0.0);

    let mut noise: Vec<NoiseStream> = ids.iter().map(|&s| NoiseStream::new(seed, Domain::Network, s)).collect();
    let mut cross: Vec<NoiseStream> = ids.iter().map(|&s| NoiseStream::new(seed, Domain::Crossing, s)).collect();
    let mut u: Vec<f64> = u0.iter().map(|&x| x + h0).collect();
    let mut counts: Vec<u32> = vec![0; n];
    let mut spikes = SpikeRecord::empty(n, dt);
    for i in 0..n {
        if u[i] >= 1.0 {
            let c = u[i].floor();
            u[i] -= c;
            counts[i] = c as u32;
            spikes.nodes[i].extend(std::iter::repeat_n(0, c as usize));
        }
    }
    let mut z_paths: Vec<Vec<f64>> = (0..n).map(|i| vec![u[i] + counts[i] as f64]).collect();
    let mut m_paths: Vec<Vec<u32>> = (0..n).map(|i| vec![counts[i]]).collect();

    for step in 0..steps {
        let hp = cs.forcing.d1(grid.node(step));
        let currents: Vec<f64> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let wij = w.normalized(i, j, &row_sums);
                        wij * spikes.nodes[j].iter().map(|&k| kt.g[step - k]).sum::<f64>()
                    })
                    .sum()
            })
            .collect();
        for i in 0..n {
            let s = cs.sigma.value(u[i]);
            let xi = noise[i].normal();
            let mut u_next = u[i] + (hp + cs.drift.value(u[i]) + currents[i]) * dt + s * sdt * xi;
            if runaway(u[i], u_next) {
                return Err(Error::NumericalBlowUp { step, index: i });
            }
            let mut fired = 0u32;
            if u_next >= 1.0 {
                let c = u_next.floor();
                u_next -= c;
                fired = c as u32;
            }
            if opts.crossing == CrossingMode::Bridge {
                let p = cross[i].uniform();
                if fired == 0 && p < bridge_crossing_probability(1.0, u[i], u_next, s, dt) {
                    u_next -= 1.0;
                    fired = 1;
                }
            }
            u[i] = u_next;
            counts[i] += fired;
            z_paths[i].push(u_next + counts[i] as f64);
            m_paths[i].push(counts[i]);
        }
        for i in 0..n {
            let jump = m_paths[i][step + 1] - m_paths[i][step];
            spikes.nodes[i].extend(std::iter::repeat_n(step + 1, jump as usize));
        }
    }
    Ok((TrajectorySet { grid: *grid, seed, crossing: opts.crossing, z: z_paths, m: m_paths }, spikes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::{Constant, Linear, Polynomial};
    use crate::kernel::tabulate_kernel;
    use std::sync::Arc;

    fn brownian_set() -> CoefficientSet {
        CoefficientSet {
            drift: Arc::new(Constant(0.0)),
            sigma: Arc::new(Constant(1.0)),
            forcing: Arc::new(Constant(0.0)),
            kernel: Arc::new(Constant(0.0)),
            lambda_b: 1.0,
            lambda_sigma: 1.0,
        }
    }

    fn synthetic(z: Vec<f64>) -> TrajectorySet {
        let mut run = f64::NEG_INFINITY;
        let m = z
            .iter()
            .map(|&v| {
                run = run.max(v);
                run.max(0.0).floor() as u32
            })
            .collect();
        TrajectorySet { grid: Grid::new(1.0, z.len() - 1).unwrap(), seed: 0, crossing: CrossingMode::GridOnly, z: vec![z], m: vec![m] }
    }

    #[test]
    fn reconstruct_without_crossing_is_identity() {
        let z = vec![0.0, 0.3, -0.2, 0.9, 0.5];
        let t = synthetic(z.clone());
        assert_eq!(reconstruct_u(&t)[0], z);
    }

    #[test]
    fn reconstruct_after_crossing_subtracts_count() {
        let t = synthetic(vec![0.0, 0.6, 1.2, 0.8]);
        let u = reconstruct_u(&t);
        assert!((u[0][2] - 0.2).abs() < 1e-15);
        assert!((u[0][3] + 0.2).abs() < 1e-15);
    }

    #[test]
    fn linear_ramp_jumps_at_expected_nodes() {
        // Z(t) = 2.5t on a grid of 20 steps: levels 1 and 2 at t = 0.4, 0.8
        let z: Vec<f64> = (0..=20).map(|k| 2.5 * k as f64 / 20.0).collect();
        let t = synthetic(z);
        let u = reconstruct_u(&t);
        let jumps: Vec<usize> = (1..=20).filter(|&k| u[0][k] < u[0][k - 1]).collect();
        assert_eq!(jumps, vec![8, 16]);
    }

    #[test]
    fn grid_rejects_degenerate_input() {
        assert!(Grid::new(0.0, 10).is_err());
        assert!(Grid::new(1.0, 0).is_err());
        let g = Grid::new(2.0, 200).unwrap();
        assert_eq!(g.nearest(0.999), 100);
    }

    #[test]
    fn no_spikes_gives_zero_interaction() {
        let kt = tabulate_kernel(&Polynomial(vec![0.0, 0.0, 1.0]), 1.0, 10).unwrap();
        let spikes = SpikeRecord::empty(3, 0.1);
        assert_eq!(interaction_term(&spikes, &WeightScheme::uniform(3), &kt, 1, 10).unwrap(), 0.0);
    }

    #[test]
    fn single_spike_interaction() {
        let kt = tabulate_kernel(&Polynomial(vec![0.0, 0.0, 1.0]), 1.0, 10).unwrap();
        let mut spikes = SpikeRecord::empty(4, 0.1);
        spikes.nodes[2].push(3);
        let v = interaction_term(&spikes, &WeightScheme::uniform(4), &kt, 0, 10).unwrap();
        assert!((v - kt.g_hat[7] / 4.0).abs() < 1e-15);
    }

    #[test]
    fn blocked_neurons_never_spike() {
        let cs = brownian_set();
        let grid = Grid::new(0.01, 10).unwrap();
        let kt = tabulate_kernel(cs.kernel.as_ref(), 0.01, 10).unwrap();
        let law = InitialLaw::point_mass(-0.99, 1.0).unwrap();
        let (traj, spikes) = simulate_network(&cs, &kt, &WeightScheme::uniform(5), &law, &grid, 1, &SimOptions::default()).unwrap();
        assert_eq!(spikes.total(), 0);
        assert!(traj.m.iter().flatten().all(|&m| m == 0));
    }

    #[test]
    fn identical_streams_give_identical_neurons() {
        let cs = CoefficientSet { drift: Arc::new(Linear { offset: 1.0, slope: -0.5 }), ..brownian_set() };
        let grid = Grid::new(2.0, 200).unwrap();
        let kt = tabulate_kernel(cs.kernel.as_ref(), 2.0, 200).unwrap();
        let law = InitialLaw::point_mass(0.0, 1.0).unwrap();
        let opts = SimOptions { streams: Some(vec![7, 7]), ..Default::default() };
        let (traj, spikes) = simulate_network(&cs, &kt, &WeightScheme::uniform(2), &law, &grid, 3, &opts).unwrap();
        assert_eq!(traj.z[0], traj.z[1]);
        assert_eq!(spikes.nodes[0], spikes.nodes[1]);
        assert!(spikes.total() > 0);
    }

    #[test]
    fn table_grid_mismatch_is_rejected() {
        let cs = brownian_set();
        let kt = tabulate_kernel(cs.kernel.as_ref(), 1.0, 10).unwrap();
        let grid = Grid::new(1.0, 20).unwrap();
        let law = InitialLaw::point_mass(0.0, 1.0).unwrap();
        let r = simulate_network(&cs, &kt, &WeightScheme::uniform(2), &law, &grid, 0, &SimOptions::default());
        assert!(matches!(r, Err(Error::IncompatibleGrid(_))));
    }

    #[test]
    fn blow_up_is_reported_with_step() {
        let cs = CoefficientSet { drift: Arc::new(Constant(f64::INFINITY)), ..brownian_set() };
        let grid = Grid::new(1.0, 10).unwrap();
        let kt = tabulate_kernel(cs.kernel.as_ref(), 1.0, 10).unwrap();
        let law = InitialLaw::point_mass(0.0, 1.0).unwrap();
        let r = simulate_network(&cs, &kt, &WeightScheme::uniform(2), &law, &grid, 0, &SimOptions::default());
        assert!(matches!(r, Err(Error::NumericalBlowUp { step: 0, .. })));
    }

    #[test]
    fn huge_finite_step_is_a_blow_up() {
        let cs = CoefficientSet { drift: Arc::new(Constant(1e12)), ..brownian_set() };
        let grid = Grid::new(1.0, 10).unwrap();
        let kt = tabulate_kernel(cs.kernel.as_ref(), 1.0, 10).unwrap();
        let law = InitialLaw::point_mass(0.0, 1.0).unwrap();
        let opts = SimOptions::default();
        let r = simulate_network(&cs, &kt, &WeightScheme::uniform(2), &law, &grid, 0, &opts);
        assert!(matches!(r, Err(Error::NumericalBlowUp { step: 0, .. })));
        let r = event_based_reference(&cs, &kt, &WeightScheme::uniform(2), &law, &grid, 0, &opts);
        assert!(matches!(r, Err(Error::NumericalBlowUp { step: 0, .. })));
    }

    #[test]
    fn reference_refuses_large_networks() {
        let cs = brownian_set();
        let grid = Grid::new(1.0, 10).unwrap();
        let kt = tabulate_kernel(cs.kernel.as_ref(), 1.0, 10).unwrap();
        let law = InitialLaw::point_mass(0.0, 1.0).unwrap();
        let r = event_based_reference(&cs, &kt, &WeightScheme::uniform(17), &law, &grid, 0, &SimOptions::default());
        assert!(r.is_err());
    }

    #[test]
    fn csv_outputs() {
        let t = synthetic(vec![0.0, 1.5]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "neuron,t,Z,M,U\n0,0,0,0,0\n0,1,1.5,1,0.5\n");
        let mut s = SpikeRecord::empty(1, 0.5);
        s.nodes[0].push(1);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "neuron,k,tau\n0,1,0.5\n");
    }
}
