//! Run configuration: TOML text, `key=value` overrides, schema validation and
//! construction of the library objects.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use spikefield::func::{Constant, Linear, Polynomial, RationalStep, SharedFn, Sigmoid, Sine, Tabulated};
use spikefield::kernel::{synapse_density_by_name, CableKernel, SomaForcing, DEFAULT_HERMITE_ORDER};
use spikefield::model::{CoefficientSet, InitialLaw, LawKind, WeightScheme};
use spikefield::particle::{CrossingMode, Grid};
use spikefield::presets::Scenario;

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FnSpec {
    Constant { value: f64 },
    Linear { offset: f64, slope: f64 },
    /// `base + amplitude · tanh x`
    Sigmoid { base: f64, amplitude: f64 },
    /// `base + amplitude · x²/(1 + x²)`
    RationalStep { base: f64, amplitude: f64 },
    Sine { amplitude: f64, frequency: f64 },
    /// Coefficients in increasing degree.
    Polynomial { coefficients: Vec<f64> },
    /// Cubic spline through `(x, y)`.
    Tabulated { x: Vec<f64>, y: Vec<f64> },
}

impl FnSpec {
    pub fn build(&self) -> Result<SharedFn, CliError> {
        Ok(match self {
            FnSpec::Constant { value } => Arc::new(Constant(*value)),
            FnSpec::Linear { offset, slope } => Arc::new(Linear { offset: *offset, slope: *slope }),
            FnSpec::Sigmoid { base, amplitude } => Arc::new(Sigmoid { base: *base, amplitude: *amplitude }),
            FnSpec::RationalStep { base, amplitude } => Arc::new(RationalStep { base: *base, amplitude: *amplitude }),
            FnSpec::Sine { amplitude, frequency } => Arc::new(Sine { amplitude: *amplitude, frequency: *frequency }),
            FnSpec::Polynomial { coefficients } => Arc::new(Polynomial(coefficients.clone())),
            FnSpec::Tabulated { x, y } => Arc::new(Tabulated::new(x.clone(), y.clone()).map_err(CliError::config)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LawSpec {
    PointMass { at: f64, support_bound: f64 },
    Uniform { low: f64, high: f64, support_bound: f64 },
    /// Density `2(1 − x)/(1 − low)²` on `(low, 1)`.
    LinearDecay { low: f64, support_bound: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelBlock {
    /// Synapse density by catalog name.
    pub rho: String,
    pub amplitude: f64,
    pub gamma: f64,
    pub order: usize,
}

impl Default for KernelBlock {
    fn default() -> Self {
        Self { rho: "hex-gauss".into(), amplitude: 2.0, gamma: 1.0, order: DEFAULT_HERMITE_ORDER }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelBlock {
    pub drift: FnSpec,
    pub sigma: FnSpec,
    pub forcing: FnSpec,
    /// When set, the forcing is the soma response to this initial dendritic
    /// potential instead of `forcing`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub soma_v0: Option<FnSpec>,
    pub lambda_b: f64,
    pub lambda_sigma: f64,
    pub kernel: KernelBlock,
    pub initial: LawSpec,
}

impl Default for ModelBlock {
    fn default() -> Self {
        Self {
            drift: FnSpec::Linear { offset: 0.5, slope: -0.5 },
            sigma: FnSpec::Sigmoid { base: 1.0, amplitude: 0.2 },
            forcing: FnSpec::Constant { value: 0.0 },
            soma_v0: None,
            lambda_b: 0.5,
            lambda_sigma: 1.25,
            kernel: KernelBlock::default(),
            initial: LawSpec::Uniform { low: -0.5, high: 0.5, support_bound: 1.0 },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridBlock {
    pub horizon: f64,
    pub n_steps: usize,
}

impl Default for GridBlock {
    fn default() -> Self {
        Self { horizon: 2.0, n_steps: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeName {
    Uniform,
    InverseDistance,
}

impl SchemeName {
    pub fn weights(self, n: usize) -> WeightScheme {
        match self {
            SchemeName::Uniform => WeightScheme::uniform(n),
            SchemeName::InverseDistance => WeightScheme::InverseDistance { n },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsBlock {
    pub scheme: SchemeName,
    pub n: usize,
}

impl Default for WeightsBlock {
    fn default() -> Self {
        Self { scheme: SchemeName::Uniform, n: 200 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Crossing {
    GridOnly,
    Bridge,
}

impl From<Crossing> for CrossingMode {
    fn from(c: Crossing) -> Self {
        match c {
            Crossing::GridOnly => CrossingMode::GridOnly,
            Crossing::Bridge => CrossingMode::Bridge,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluatorName {
    Mc,
    Renewal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartName {
    Zero,
    /// Half the stability envelope.
    HalfEnvelope,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverBlock {
    pub evaluator: EvaluatorName,
    pub tol: f64,
    pub max_iter: usize,
    pub n_mc: usize,
    /// Smoothing bandwidth of the derivative, in grid steps.
    pub bandwidth_steps: f64,
    pub crossing: Crossing,
    pub start: StartName,
    /// Renewal evaluator only.
    pub substeps: usize,
    pub n_initial: usize,
    pub batches: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        Self {
            evaluator: EvaluatorName::Mc,
            tol: 1e-3,
            max_iter: 30,
            n_mc: 20_000,
            bandwidth_steps: 4.0,
            crossing: Crossing::Bridge,
            start: StartName::Zero,
            substeps: 4,
            n_initial: 512,
            batches: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateBlock {
    pub crossing: Crossing,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        Self { crossing: Crossing::Bridge }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityBlock {
    /// Starting points of the forced diffusion.
    pub starts: Vec<f64>,
    pub times: Vec<f64>,
    /// Additive forcing `α(t)` of the diffusion.
    pub alpha: FnSpec,
    pub n_mc: usize,
    /// Bridge nodes per path.
    pub n_times: usize,
    /// Paths and Euler step of the crossing estimator used as cross-check.
    pub check_paths: usize,
    pub check_dt: f64,
}

impl Default for DensityBlock {
    fn default() -> Self {
        Self {
            starts: vec![0.0],
            times: vec![0.25, 0.5, 1.0, 1.5, 2.0],
            alpha: FnSpec::Constant { value: 0.0 },
            n_mc: 20_000,
            n_times: 256,
            check_paths: 20_000,
            check_dt: 1.0 / 1024.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsBlock {
    pub n_list: Vec<usize>,
    pub n_reps: usize,
    /// Times at which marginals are compared, rounded to the nearest node.
    pub t_nodes: Vec<f64>,
    pub limit_paths: usize,
    pub crossing: Crossing,
    pub neuron: usize,
}

impl Default for DiagnosticsBlock {
    fn default() -> Self {
        Self { n_list: vec![50, 200, 800], n_reps: 20, t_nodes: vec![1.0, 2.0], limit_paths: 20_000, crossing: Crossing::Bridge, neuron: 0 }
    }
}

/// Everything a run depends on. Missing blocks fall back to the built-in
/// benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub output: String,
    pub model: ModelBlock,
    pub grid: GridBlock,
    pub weights: WeightsBlock,
    pub solver: SolverBlock,
    pub simulate: SimulateBlock,
    pub density: DensityBlock,
    pub diagnostics: DiagnosticsBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output: "out".into(),
            model: ModelBlock::default(),
            grid: GridBlock::default(),
            weights: WeightsBlock::default(),
            solver: SolverBlock::default(),
            simulate: SimulateBlock::default(),
            density: DensityBlock::default(),
            diagnostics: DiagnosticsBlock::default(),
        }
    }
}

/// Reads a TOML config, or the embedded config of a run manifest when the
/// file is JSON, layered over the built-in benchmark. `None` gives the
/// benchmark itself.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut table = toml::Table::try_from(RunConfig::default()).expect("default config serializes");
    if let Some(p) = path {
        let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
        let file = if p.extension().is_some_and(|e| e == "json") {
            let mut json: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            if let Some(inner) = json.get_mut("config") {
                json = inner.take();
            }
            toml::Table::try_from(json).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        } else {
            text.parse::<toml::Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        };
        merge(&mut table, file);
    }
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let inner = e.inner().to_string();
        CliError::Config(format!("at `{}`: {}", e.path(), inner.lines().next().unwrap_or_default()))
    })
}

/// Deep merge. A block whose `kind` changes is replaced, not merged, so the
/// old variant's fields do not linger.
fn merge(base: &mut toml::Table, over: toml::Table) {
    for (key, value) in over {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) if o.get("kind").is_none_or(|k| b.get("kind") == Some(k)) => merge(b, o),
            (_, v) => {
                base.insert(key, v);
            }
        }
    }
}

/// `a.b.c=value`; the value is read as TOML and falls back to a bare string.
pub fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{assignment}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("override key `{key}` is malformed")));
    }
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    if parts.last() == Some(&"kind") {
        // switching variant: drop the fields of the old one
        if let Some(block) = block_mut(table, &parts[..parts.len() - 1]) {
            if block.get("kind").is_some_and(|k| *k != value) {
                block.clear();
            }
        }
    }
    let mut node = table;
    for p in &parts[..parts.len() - 1] {
        let entry = node.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override `{key}`: `{p}` is not a block")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn block_mut<'a>(t: &'a mut toml::Table, path: &[&str]) -> Option<&'a mut toml::Table> {
    match path.split_first() {
        None => Some(t),
        Some((head, rest)) => block_mut(t.get_mut(*head)?.as_table_mut()?, rest),
    }
}

impl RunConfig {
    /// SHA-256 over the canonical JSON form, with the output directory left
    /// out so relocated runs keep their hash.
    pub fn hash(&self) -> String {
        let canonical = RunConfig { output: String::new(), ..self.clone() };
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn law(&self) -> Result<InitialLaw, CliError> {
        let (kind, r) = match self.model.initial {
            LawSpec::PointMass { at, support_bound } => (LawKind::PointMass { at }, support_bound),
            LawSpec::Uniform { low, high, support_bound } => (LawKind::Uniform { low, high }, support_bound),
            LawSpec::LinearDecay { low, support_bound } => (LawKind::LinearDecay { low }, support_bound),
        };
        InitialLaw::new(kind, r).map_err(CliError::config)
    }

    /// Coefficients and the catalog caveat of the chosen synapse density.
    pub fn coefficients(&self) -> Result<(CoefficientSet, Option<&'static str>), CliError> {
        let m = &self.model;
        let k = &m.kernel;
        if !(k.gamma > 0.0) || k.order < 2 {
            return Err(CliError::Config("model.kernel: gamma must be positive and order at least 2".into()));
        }
        let (rho, caveat) = synapse_density_by_name(&k.rho, k.amplitude).map_err(CliError::config)?;
        let forcing = match &m.soma_v0 {
            Some(v0) => Arc::new(SomaForcing::new(v0.build()?, k.gamma, k.order)) as SharedFn,
            None => m.forcing.build()?,
        };
        let cs = CoefficientSet {
            drift: m.drift.build()?,
            sigma: m.sigma.build()?,
            forcing,
            kernel: Arc::new(CableKernel::new(rho, k.gamma, k.order)),
            lambda_b: m.lambda_b,
            lambda_sigma: m.lambda_sigma,
        };
        Ok((cs, caveat))
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let (cs, _) = self.coefficients()?;
        let grid = Grid::new(self.grid.horizon, self.grid.n_steps).map_err(CliError::config)?;
        Scenario::new(cs, self.law()?, grid).map_err(CliError::config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(text: &str) -> toml::Table {
        text.parse().unwrap()
    }

    #[test]
    fn shipped_benchmark_matches_defaults() {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.toml");
        assert_eq!(load(Some(&path), &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_parse_as_toml_values() {
        let cfg = load(None, &["grid.n_steps=400".into(), "diagnostics.n_list=[10, 20]".into(), "weights.scheme=inverse-distance".into()]).unwrap();
        assert_eq!(cfg.grid.n_steps, 400);
        assert_eq!(cfg.diagnostics.n_list, vec![10, 20]);
        assert_eq!(cfg.weights.scheme, SchemeName::InverseDistance);
        assert!(load(None, &["grid.n_steps".into()]).is_err());
        assert!(load(None, &["grid..n=1".into()]).is_err());
    }

    #[test]
    fn partial_block_keeps_defaults_and_kind_switch_replaces() {
        let cfg = load(None, &["model.drift.slope=-2".into()]).unwrap();
        assert_eq!(cfg.model.drift, FnSpec::Linear { offset: 0.5, slope: -2.0 });
        let cfg = load(None, &["model.sigma.kind=constant".into(), "model.sigma.value=1.5".into()]).unwrap();
        assert_eq!(cfg.model.sigma, FnSpec::Constant { value: 1.5 });

        let mut base = toml::Table::try_from(RunConfig::default()).unwrap();
        merge(&mut base, table("[model]\ndrift = { kind = \"constant\", value = 0.1 }\n"));
        let cfg: RunConfig = base.try_into().unwrap();
        assert_eq!(cfg.model.drift, FnSpec::Constant { value: 0.1 });
    }

    #[test]
    fn unknown_keys_report_their_path() {
        let Err(CliError::Config(msg)) = load(None, &["solver.tolerance=1".into()]) else { panic!("accepted unknown key") };
        assert!(msg.contains("solver.tolerance"), "{msg}");
        let Err(CliError::Config(msg)) = load(None, &["model.kernel.gamma=\"fast\"".into()]) else { panic!("accepted a string") };
        assert!(msg.contains("model.kernel.gamma"), "{msg}");
    }

    #[test]
    fn hash_ignores_output_only() {
        let a = RunConfig::default();
        let b = RunConfig { output: "elsewhere".into(), ..a.clone() };
        let c = RunConfig { seed: 2, ..a.clone() };
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn bad_values_fail_when_building() {
        let cfg = load(None, &["model.initial.high=1.5".into()]).unwrap();
        assert!(matches!(cfg.law(), Err(CliError::Config(_))));
        let cfg = load(None, &["model.kernel.rho=\"boxcar\"".into()]).unwrap();
        assert!(cfg.coefficients().is_err());
        let cfg = load(None, &["model.kernel.gamma=0".into()]).unwrap();
        assert!(cfg.coefficients().is_err());
    }
}
