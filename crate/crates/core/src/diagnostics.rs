//! Finite-N experiments around the mean-field limit: spike-rate deviation,
//! Wasserstein distances of potential marginals, pair covariances, and a
//! check for threshold touches that do not cross.

use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;

use crate::model::{CoefficientSet, InitialLaw, WeightScheme};
use crate::particle::{simulate_network, CrossingMode, SimOptions, SpikeRecord, TrajectorySet};
use crate::presets::Scenario;
use crate::rng::{derive_seed, Domain, NoiseStream};
use crate::solver::{forcing_from_rate, limit_path, RateFunction};
use crate::kernel::KernelTable;
use crate::stats::{par_blocks, MeanSe};
use crate::{Error, Result};

/// `(1/S_i) Σ_j J_ij M^j(t_m)` on every node `m = 0..=n_steps`.
pub fn empirical_rate(spikes: &SpikeRecord, w: &WeightScheme, i: usize, n_steps: usize) -> Result<Vec<f64>> {
    let row_sums = w.row_sums()?;
    let mut inc = vec![0.0; n_steps + 1];
    for j in 0..spikes.n_neurons() {
        let wij = w.normalized(i, j, &row_sums);
        if wij == 0.0 {
            continue;
        }
        for &k in &spikes.nodes[j] {
            if k <= n_steps {
                inc[k] += wij;
            }
        }
    }
    let mut acc = 0.0;
    Ok(inc
        .into_iter()
        .map(|v| {
            acc += v;
            acc
        })
        .collect())
}

/// Wasserstein-1 distance between two empirical distributions on the line
/// (`NaN` if either is empty).
pub fn wasserstein1(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::NAN;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    if a.len() == b.len() {
        return a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64;
    }
    // ∫₀¹ |F_a⁻¹(u) − F_b⁻¹(u)| du over the merged breakpoints k/n, l/m
    let (n, m) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < n && j < m {
        let next_a = (i + 1) as f64 / n as f64;
        let next_b = (j + 1) as f64 / m as f64;
        let next = next_a.min(next_b);
        total += (next - u) * (a[i] - b[j]).abs();
        u = next;
        if next_a <= next {
            i += 1;
        }
        if next_b <= next {
            j += 1;
        }
    }
    total
}

/// Wasserstein-1 distance between a weighted sample and an unweighted one,
/// as `∫|F_a − F_b|`. Weights need not be normalised.
pub fn wasserstein1_weighted(a: &[f64], wa: &[f64], b: &[f64]) -> f64 {
    let total_w: f64 = wa.iter().sum();
    if a.is_empty() || b.is_empty() || total_w <= 0.0 {
        return f64::NAN;
    }
    let mut pts: Vec<(f64, f64)> = a.iter().zip(wa).map(|(&x, &w)| (x, w / total_w)).collect();
    let inv = 1.0 / b.len() as f64;
    pts.extend(b.iter().map(|&x| (x, -inv)));
    pts.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut diff = 0.0;
    let mut total = 0.0;
    for k in 0..pts.len() - 1 {
        diff += pts[k].1;
        total += diff.abs() * (pts[k + 1].0 - pts[k].0);
    }
    total
}

/// Potentials `U` and counts `M` of independent copies of `Z^h` at selected nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LimitSample {
    pub nodes: Vec<usize>,
    /// `u[k][p]`: potential of path `p` at `nodes[k]`
    pub u: Vec<Vec<f64>>,
    pub m: Vec<Vec<u32>>,
}

/// Re-simulates the scalar process driven by `h` and keeps the requested nodes.
#[allow(clippy::too_many_arguments)]
pub fn limit_sample(
    h: &RateFunction,
    cs: &CoefficientSet,
    kt: &KernelTable,
    law: &InitialLaw,
    crossing: CrossingMode,
    n_paths: usize,
    seed: u64,
    nodes: &[usize],
) -> Result<LimitSample> {
    let grid = h.grid;
    if nodes.iter().any(|&k| k > grid.n_steps) {
        return Err(Error::InvalidArgument("limit sample node beyond the grid".into()));
    }
    let forcing = forcing_from_rate(h, cs, kt)?;
    let cross_seed = derive_seed(seed, &[Domain::Limit as u64]);
    let blocks = par_blocks(n_paths, |range| -> Result<Vec<(Vec<f64>, Vec<u32>)>> {
        let mut z = vec![0.0; grid.n_steps + 1];
        let mut m = vec![0u32; grid.n_steps + 1];
        range
            .map(|p| {
                let mut noise = NoiseStream::new(seed, Domain::Limit, p as u64);
                let mut cross = NoiseStream::new(cross_seed, Domain::Crossing, p as u64);
                limit_path(cs, &forcing, law, &grid, crossing, &mut noise, &mut cross, &mut z, &mut m)
                    .map_err(|step| Error::NumericalBlowUp { step, index: p })?;
                Ok((nodes.iter().map(|&k| z[k] - m[k] as f64).collect(), nodes.iter().map(|&k| m[k]).collect()))
            })
            .collect()
    });
    let mut u = vec![Vec::with_capacity(n_paths); nodes.len()];
    let mut mm = vec![Vec::with_capacity(n_paths); nodes.len()];
    for b in blocks {
        for (us, ms) in b? {
            for k in 0..nodes.len() {
                u[k].push(us[k]);
                mm[k].push(ms[k]);
            }
        }
    }
    Ok(LimitSample { nodes: nodes.to_vec(), u, m: mm })
}

/// Weak-form generator check on the limit process: for `φ(z) = z` and
/// `φ(z) = z²`, the mean of `φ(Z_T) − φ(Z_0) − ∫₀ᵀ 𝓛φ(Z_s) ds` with
/// `𝓛φ = (b(z − M) + f_h')φ' + ½σ(z − M)²φ''`. Both should vanish.
pub fn generator_residual(
    h: &RateFunction,
    cs: &CoefficientSet,
    kt: &KernelTable,
    law: &InitialLaw,
    crossing: CrossingMode,
    n_paths: usize,
    seed: u64,
) -> Result<[MeanSe; 2]> {
    let grid = h.grid;
    let n = grid.n_steps;
    let dt = grid.dt();
    let forcing = forcing_from_rate(h, cs, kt)?;
    let cross_seed = derive_seed(seed, &[Domain::Limit as u64, 1]);
    let blocks = par_blocks(n_paths, |range| -> Result<[f64; 4]> {
        let mut z = vec![0.0; n + 1];
        let mut m = vec![0u32; n + 1];
        let mut acc = [0.0; 4];
        for p in range {
            let mut noise = NoiseStream::new(seed, Domain::Limit, p as u64);
            let mut cross = NoiseStream::new(cross_seed, Domain::Crossing, p as u64);
            limit_path(cs, &forcing, law, &grid, crossing, &mut noise, &mut cross, &mut z, &mut m)
                .map_err(|step| Error::NumericalBlowUp { step, index: p })?;
            let (mut i1, mut i2) = (0.0, 0.0);
            for k in 0..n {
                let u = z[k] - m[k] as f64;
                let drift = cs.drift.value(u) + forcing.fp[k];
                let s = cs.sigma.value(u);
                i1 += drift * dt;
                i2 += (2.0 * z[k] * drift + s * s) * dt;
            }
            let r1 = z[n] - z[0] - i1;
            let r2 = z[n] * z[n] - z[0] * z[0] - i2;
            acc[0] += r1;
            acc[1] += r1 * r1;
            acc[2] += r2;
            acc[3] += r2 * r2;
        }
        Ok(acc)
    });
    let mut acc = [0.0; 4];
    for b in blocks {
        for (a, v) in acc.iter_mut().zip(b?) {
            *a += v;
        }
    }
    Ok([MeanSe::from_sums(acc[0], acc[1], n_paths), MeanSe::from_sums(acc[2], acc[3], n_paths)])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub sup_deviation: MeanSe,
    /// W₁ at each study time, in the order of [`ConvergenceTable::times`].
    pub w1: Vec<MeanSe>,
    pub j_condition: f64,
    pub n_replications: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceTable {
    pub times: Vec<f64>,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// CSV with one row per N.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "N,sup_dev,sup_dev_se")?;
        for t in &self.times {
            write!(w, ",w1_t{t},w1_t{t}_se")?;
        }
        writeln!(w, ",j_condition,n_reps")?;
        for r in &self.rows {
            write!(w, "{},{},{}", r.n, r.sup_deviation.mean, r.sup_deviation.se)?;
            for e in &r.w1 {
                write!(w, ",{},{}", e.mean, e.se)?;
            }
            writeln!(w, ",{},{}", r.j_condition, r.n_replications)?;
        }
        Ok(())
    }

    /// Long CSV with header `N,metric,value,se`.
    pub fn write_long_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "N,metric,value,se")?;
        for r in &self.rows {
            writeln!(w, "{},sup_dev,{},{}", r.n, r.sup_deviation.mean, r.sup_deviation.se)?;
            for (t, e) in self.times.iter().zip(&r.w1) {
                writeln!(w, "{},w1_t{},{},{}", r.n, t, e.mean, e.se)?;
            }
            writeln!(w, "{},j_condition,{},0", r.n, r.j_condition)?;
        }
        Ok(())
    }
}

/// Everything a convergence study needs besides the scenario and `h_∞`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StudyOptions {
    pub n_list: Vec<usize>,
    pub n_reps: usize,
    /// Node indices at which marginals are compared.
    pub nodes: Vec<usize>,
    pub limit_paths: usize,
    pub crossing: CrossingMode,
    pub seed: u64,
    /// Tagged neuron.
    pub neuron: usize,
}

/// Simulated networks of one size, one per replication.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub weights: WeightScheme,
    pub runs: Vec<(TrajectorySet, SpikeRecord)>,
}

/// `n_reps` independent networks of size `n`, replication `r` seeded by `(seed, n, r)`.
pub fn simulate_ensemble(scenario: &Scenario, weights: WeightScheme, n_reps: usize, crossing: CrossingMode, seed: u64) -> Result<Ensemble> {
    let n = weights.len();
    let opts = SimOptions { crossing, ..Default::default() };
    let runs = (0..n_reps)
        .map(|r| {
            let s = derive_seed(seed, &[n as u64, r as u64]);
            simulate_network(&scenario.cs, &scenario.table, &weights, &scenario.law, &scenario.grid, s, &opts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Ensemble { weights, runs })
}

/// Compares networks of growing size with the limit `h_∞`.
pub fn convergence_study<F>(scenario: &Scenario, family: F, h_inf: &RateFunction, opts: &StudyOptions) -> Result<(ConvergenceTable, Vec<Ensemble>)>
where
    F: Fn(usize) -> WeightScheme,
{
    if opts.n_list.iter().any(|&n| n < 2) || opts.n_reps < 2 {
        return Err(Error::InvalidArgument("convergence study needs N >= 2 and at least two replications".into()));
    }
    let grid = scenario.grid;
    let limit = limit_sample(h_inf, &scenario.cs, &scenario.table, &scenario.law, opts.crossing, opts.limit_paths, opts.seed, &opts.nodes)?;
    let mut rows = Vec::new();
    let mut ensembles = Vec::new();
    for &n in &opts.n_list {
        let weights = family(n);
        let row_sums = weights.row_sums()?;
        let neuron = opts.neuron.min(n - 1);
        let wrow: Vec<f64> = (0..n).map(|j| weights.normalized(neuron, j, &row_sums)).collect();
        let ens = simulate_ensemble(scenario, weights.clone(), opts.n_reps, opts.crossing, opts.seed)?;
        let mut sup_dev = Vec::new();
        let mut w1: Vec<Vec<f64>> = vec![Vec::new(); opts.nodes.len()];
        for (traj, spikes) in &ens.runs {
            let rate = empirical_rate(spikes, &weights, neuron, grid.n_steps)?;
            sup_dev.push(rate.iter().zip(&h_inf.values).fold(0.0f64, |a, (r, h)| a.max((r - h).abs())));
            for (k, &node) in opts.nodes.iter().enumerate() {
                let us: Vec<f64> = (0..n).map(|j| traj.u(j, node)).collect();
                w1[k].push(wasserstein1_weighted(&us, &wrow, &limit.u[k]));
            }
        }
        rows.push(ConvergenceRow {
            n,
            sup_deviation: MeanSe::from_samples(&sup_dev),
            w1: w1.iter().map(|v| MeanSe::from_samples(v)).collect(),
            j_condition: weights.j_condition()?,
            n_replications: opts.n_reps,
        });
        ensembles.push(ens);
    }
    let times = opts.nodes.iter().map(|&k| grid.node(k)).collect();
    Ok((ConvergenceTable { times, rows }, ensembles))
}

/// Bounded test functions for the pair covariance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Functional {
    Tanh,
    /// Indicator of lying above the ensemble median at that node.
    AboveMedian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CovEstimate {
    pub t: f64,
    pub cov: f64,
    pub se: f64,
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// `Cov(φ(U^i_t), φ(U^j_t))`, `i ≠ j`, for an exchangeable network.
///
/// Each replication contributes the mean of `φ_i φ_j` over all ordered
/// pairs; the squared mean is estimated from products across different
/// replications, which keeps the estimator unbiased. Standard errors are
/// leave-one-replication-out jackknife.
pub fn chaos_correlation(runs: &[TrajectorySet], nodes: &[usize], functional: Functional) -> Result<Vec<CovEstimate>> {
    let r = runs.len();
    if r < 3 {
        return Err(Error::InvalidArgument("pair covariance needs at least three replications".into()));
    }
    let n = runs[0].n_neurons();
    if n < 2 || runs.iter().any(|t| t.n_neurons() != n) {
        return Err(Error::InvalidArgument("replications must share a network size >= 2".into()));
    }
    nodes
        .iter()
        .map(|&node| {
            let values: Vec<Vec<f64>> = runs.iter().map(|t| (0..n).map(|i| t.u(i, node)).collect()).collect();
            let phi: Vec<Vec<f64>> = match functional {
                Functional::Tanh => values.iter().map(|v| v.iter().map(|x| x.tanh()).collect()).collect(),
                Functional::AboveMedian => {
                    let mut pooled: Vec<f64> = values.iter().flatten().copied().collect();
                    let med = median(&mut pooled);
                    values.iter().map(|v| v.iter().map(|&x| if x > med { 1.0 } else { 0.0 }).collect()).collect()
                }
            };
            let nf = n as f64;
            let pair: Vec<f64> = phi
                .iter()
                .map(|v| {
                    let s1: f64 = v.iter().sum();
                    let s2: f64 = v.iter().map(|x| x * x).sum();
                    (s1 * s1 - s2) / (nf * (nf - 1.0))
                })
                .collect();
            let mean: Vec<f64> = phi.iter().map(|v| v.iter().sum::<f64>() / nf).collect();
            let estimate = |skip: Option<usize>| -> f64 {
                let keep = |k: &usize| Some(*k) != skip;
                let idx: Vec<usize> = (0..r).filter(keep).collect();
                let rr = idx.len() as f64;
                let p = idx.iter().map(|&k| pair[k]).sum::<f64>() / rr;
                let sm: f64 = idx.iter().map(|&k| mean[k]).sum();
                let sm2: f64 = idx.iter().map(|&k| mean[k] * mean[k]).sum();
                p - (sm * sm - sm2) / (rr * (rr - 1.0))
            };
            let full = estimate(None);
            let jack: Vec<f64> = (0..r).map(|k| estimate(Some(k))).collect();
            let jm = jack.iter().sum::<f64>() / r as f64;
            let var = (r as f64 - 1.0) / r as f64 * jack.iter().map(|j| (j - jm).powi(2)).sum::<f64>();
            Ok(CovEstimate { t: runs[0].grid.node(node), cov: full, se: var.sqrt() })
        })
        .collect()
}

/// Spikes after which `Z` never rises strictly above the spike level at any
/// node of `[τ_k, τ_k + ε)`: the path touched the level without crossing it.
pub fn crossing_diagnostic(traj: &TrajectorySet, spikes: &SpikeRecord, epsilon: f64) -> Result<usize> {
    let dt = traj.grid.dt();
    if !(epsilon > dt) {
        return Err(Error::InvalidArgument(format!("window {epsilon} must exceed the step {dt}")));
    }
    let width = (epsilon / dt).ceil() as usize;
    Ok((0..spikes.n_neurons())
        .into_par_iter()
        .map(|i| {
            let z = &traj.z[i];
            spikes.nodes[i]
                .iter()
                .enumerate()
                .filter(|&(k, &node)| {
                    let level = (k + 1) as f64;
                    let end = (node + width).min(z.len());
                    z[node..end].iter().all(|&v| v - level <= 0.0)
                })
                .count()
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particle::Grid;
    use proptest::prelude::*;

    #[test]
    fn wasserstein_examples() {
        assert_eq!(wasserstein1(&[0.3, 1.0, -2.0], &[1.0, -2.0, 0.3]), 0.0);
        assert_eq!(wasserstein1(&[0.0, 0.0], &[1.0, 1.0]), 1.0);
        assert_eq!(wasserstein1(&[0.0, 1.0], &[0.0, 2.0]), 0.5);
        // unequal sizes: {0} vs {0, 2} → ½·2
        assert!((wasserstein1(&[0.0], &[0.0, 2.0]) - 1.0).abs() < 1e-15);
        assert!(wasserstein1(&[], &[1.0]).is_nan());
    }

    #[test]
    fn weighted_wasserstein_matches_plain_for_equal_weights() {
        let a = [0.1, -0.4, 2.0, 0.7];
        let b = [0.0, 0.5, 1.5, -1.0, 0.2];
        let plain = wasserstein1(&a, &b);
        let weighted = wasserstein1_weighted(&a, &[0.25; 4], &b);
        assert!((plain - weighted).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn wasserstein_is_a_metric(
            a in prop::collection::vec(-10.0f64..10.0, 1..20),
            b in prop::collection::vec(-10.0f64..10.0, 1..20),
            c in prop::collection::vec(-10.0f64..10.0, 1..20),
        ) {
            let ab = wasserstein1(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - wasserstein1(&b, &a)).abs() < 1e-9);
            prop_assert!(wasserstein1(&a, &a).abs() < 1e-12);
            prop_assert!(ab <= wasserstein1(&a, &c) + wasserstein1(&c, &b) + 1e-9);
        }

        #[test]
        fn empirical_rate_is_nondecreasing_and_relabel_invariant(
            lists in prop::collection::vec(prop::collection::vec(0usize..50, 0..6), 2..8),
            perm_seed in 0u64..1000,
        ) {
            let nodes: Vec<Vec<usize>> = lists.into_iter().map(|mut v| { v.sort(); v }).collect();
            let n = nodes.len();
            let spikes = SpikeRecord { dt: 0.1, nodes: nodes.clone() };
            let w = WeightScheme::uniform(n);
            let rate = empirical_rate(&spikes, &w, 0, 50).unwrap();
            prop_assert!(rate.windows(2).all(|p| p[1] >= p[0]));
            let mut shuffled = nodes;
            shuffled.rotate_left((perm_seed as usize) % n);
            let other = empirical_rate(&SpikeRecord { dt: 0.1, nodes: shuffled }, &w, 1, 50).unwrap();
            for (x, y) in rate.iter().zip(&other) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn empirical_rate_examples() {
        let w = WeightScheme::uniform(3);
        assert!(empirical_rate(&SpikeRecord::empty(3, 0.1), &w, 0, 10).unwrap().iter().all(|&v| v == 0.0));
        let spikes = SpikeRecord { dt: 0.1, nodes: vec![vec![4], vec![4], vec![4]] };
        let r = empirical_rate(&spikes, &w, 0, 10).unwrap();
        assert!(r[..4].iter().all(|&v| v == 0.0));
        assert!(r[4..].iter().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn empirical_rate_matches_brute_force_for_inverse_distance() {
        let w = WeightScheme::InverseDistance { n: 6 };
        let spikes = SpikeRecord { dt: 0.1, nodes: vec![vec![1, 5], vec![], vec![2], vec![2, 3, 9], vec![7], vec![0]] };
        let sums = w.row_sums().unwrap();
        for i in 0..6 {
            let r = empirical_rate(&spikes, &w, i, 10).unwrap();
            for m in 0..=10 {
                let direct: f64 = (0..6).map(|j| w.get(i, j) / sums[i] * spikes.count_until(j, m) as f64).sum();
                assert!((r[m] - direct).abs() < 1e-12);
            }
        }
    }

    fn single_path(z: Vec<f64>) -> (TrajectorySet, SpikeRecord) {
        let mut run = f64::NEG_INFINITY;
        let m: Vec<u32> = z
            .iter()
            .map(|&v| {
                run = run.max(v);
                run.max(0.0).floor() as u32
            })
            .collect();
        let mut nodes = Vec::new();
        for k in 1..m.len() {
            for _ in m[k - 1]..m[k] {
                nodes.push(k);
            }
        }
        let grid = Grid::new(1.0, z.len() - 1).unwrap();
        (
            TrajectorySet { grid, seed: 0, crossing: CrossingMode::GridOnly, z: vec![z], m: vec![m] },
            SpikeRecord { dt: grid.dt(), nodes: vec![nodes] },
        )
    }

    #[test]
    fn crossing_controls() {
        let (t, s) = single_path(vec![0.0, 0.5, 1.2, 1.4, 0.9, 0.8, 0.9]);
        assert_eq!(crossing_diagnostic(&t, &s, 0.5).unwrap(), 0);
        let (t, s) = single_path(vec![0.0, 0.5, 1.0, 0.9, 0.8, 0.7, 0.9]);
        assert_eq!(crossing_diagnostic(&t, &s, 0.5).unwrap(), 1);
        assert!(crossing_diagnostic(&t, &s, 0.1).is_err());
    }
}
