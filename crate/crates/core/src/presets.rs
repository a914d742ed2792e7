//! Ready-made model configurations used by the tests and the command line.

use std::sync::Arc;

use crate::func::{Constant, Linear, Sigmoid};
use crate::kernel::{tabulate_kernel, CableKernel, KernelTable, PolyGauss, DEFAULT_HERMITE_ORDER};
use crate::model::{CoefficientSet, InitialLaw, LawKind};
use crate::particle::Grid;
use crate::Result;

/// Coefficients, initial law and grid, with the kernel tabulated on the grid.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub cs: CoefficientSet,
    pub law: InitialLaw,
    pub grid: Grid,
    pub table: KernelTable,
}

impl Scenario {
    pub fn new(cs: CoefficientSet, law: InitialLaw, grid: Grid) -> Result<Self> {
        let table = tabulate_kernel(cs.kernel.as_ref(), grid.horizon, grid.n_steps)?;
        Ok(Self { cs, law, grid, table })
    }

    /// Same model on a grid with `n_steps` steps.
    pub fn with_steps(&self, n_steps: usize) -> Result<Self> {
        Self::new(self.cs.clone(), self.law, Grid::new(self.grid.horizon, n_steps)?)
    }

    /// Same model with the interaction removed.
    pub fn decoupled(&self) -> Result<Self> {
        Self::new(self.cs.decoupled(), self.law, self.grid)
    }
}

pub const BENCHMARK_HORIZON: f64 = 2.0;
pub const BENCHMARK_STEPS: usize = 200;
pub const BENCHMARK_GAMMA: f64 = 1.0;
pub const BENCHMARK_AMPLITUDE: f64 = 2.0;

/// Drift `½ − ½x`, diffusion `1 + 0.2 tanh x`, no external forcing, cable
/// kernel of the hex-Gauss synapse density with decay rate 1, and
/// `U₀ ~ Uniform(−½, ½)`.
pub fn benchmark_coefficients(amplitude: f64, gamma: f64) -> CoefficientSet {
    CoefficientSet {
        drift: Arc::new(Linear { offset: 0.5, slope: -0.5 }),
        sigma: Arc::new(Sigmoid { base: 1.0, amplitude: 0.2 }),
        forcing: Arc::new(Constant(0.0)),
        kernel: Arc::new(CableKernel::new(PolyGauss::hex_gauss(amplitude), gamma, DEFAULT_HERMITE_ORDER)),
        lambda_b: 0.5,
        lambda_sigma: 1.25,
    }
}

pub fn benchmark_law() -> InitialLaw {
    InitialLaw::new(LawKind::Uniform { low: -0.5, high: 0.5 }, 1.0).expect("benchmark law is valid")
}

pub fn benchmark() -> Result<Scenario> {
    benchmark_with(BENCHMARK_STEPS)
}

pub fn benchmark_with(n_steps: usize) -> Result<Scenario> {
    Scenario::new(
        benchmark_coefficients(BENCHMARK_AMPLITUDE, BENCHMARK_GAMMA),
        benchmark_law(),
        Grid::new(BENCHMARK_HORIZON, n_steps)?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{probe_grid, validate_coefficients, KERNEL_ORIGIN_TOL};

    #[test]
    fn benchmark_passes_validation() {
        let s = benchmark().unwrap();
        let report = validate_coefficients(&s.cs, &probe_grid(-20.0, 20.0, 401), KERNEL_ORIGIN_TOL);
        assert!(report.passed(), "{:?}", report.failures());
        assert_eq!(s.table.n_steps(), BENCHMARK_STEPS);
        assert!(s.table.sup_norm > 0.0);
    }
}
