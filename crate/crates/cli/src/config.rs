use std::path::{Path, PathBuf};

use serde::Deserialize;
use torilab::averaging::{Frequency, QuarticForm};
use torilab::hamilton_jacobi::HjOptions;
use torilab::quantization::{QuantizationData, Rectangle};
use torilab::surfrev::ProfileSpec;
use torilab::symbol::{ClassicalSymbol, FrequencyVector, OperatorSymbol};

use crate::Failure;

/// One experiment, read from a single JSON file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub operator: Option<OperatorSymbol>,
    pub frequency: Option<FrequencyVector>,
    pub quantization: Option<QuantizationBlock>,
    pub normal_form: Option<NormalFormBlock>,
    pub oracle: Option<OracleBlock>,
    #[serde(default)]
    pub compare: CompareBlock,
    pub average: Option<AverageBlock>,
    pub surfrev: Option<SurfrevBlock>,
    pub hamilton_jacobi: Option<HjBlock>,
    pub barrier_top: Option<BarrierBlock>,
    #[serde(default)]
    pub outputs: OutputsBlock,
}

#[derive(Debug, Clone, Deserialize)]
pub struct QuantizationBlock {
    #[serde(flatten)]
    pub data: QuantizationData,
    /// Spectral window for `quantize`; falls back to `oracle.rect`.
    pub rect: Option<Rectangle>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalFormBlock {
    #[serde(rename = "N")]
    pub n: u32,
    pub residual_degree: Option<u32>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleBlock {
    /// Basis radius; chosen by `safe_radius` when absent.
    #[serde(rename = "R")]
    pub r: Option<f64>,
    pub rect: Rectangle,
    /// Conjugate by the weight of the averaging generator before assembly.
    #[serde(default)]
    pub deform: bool,
    #[serde(default)]
    pub dump_matrix: bool,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareBlock {
    /// `--assert` bound: `distance ≤ budget_factor·budget + abs_tol`.
    pub budget_factor: f64,
    pub abs_tol: f64,
    /// Both clouds are matched on the rectangle scaled by this factor, then
    /// restricted to the rectangle.
    pub margin_factor: f64,
}

impl Default for CompareBlock {
    fn default() -> Self {
        CompareBlock { budget_factor: 10.0, abs_tol: 1e-12, margin_factor: 1.3 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AverageBlock {
    pub q: ClassicalSymbol,
    #[serde(default)]
    pub ranges: Vec<RangeEntry>,
    #[serde(default = "default_grid")]
    pub grid: usize,
    pub decay: Option<DecayBlock>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeEntry {
    pub mu: f64,
    pub b: Frequency,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayBlock {
    #[serde(rename = "T")]
    pub t: Vec<f64>,
    /// Kernel support; the unit bump when absent.
    pub kernel: Option<[f64; 2]>,
    #[serde(default = "default_decay_grid")]
    pub grid: usize,
}

fn default_grid() -> usize {
    64
}

fn default_decay_grid() -> usize {
    48
}

/// `Σ coef f^f (f′)^df`, times `cos(mode θ)` or `sin(mode θ)` in `q1`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileTerm {
    pub coef: f64,
    #[serde(default)]
    pub f: i32,
    #[serde(default)]
    pub df: i32,
    #[serde(default)]
    pub mode: i32,
    #[serde(default)]
    pub sin: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfrevBlock {
    pub profile: ProfileSpec,
    /// Defaults to `(f′)²`.
    pub q0: Option<Vec<ProfileTerm>>,
    #[serde(default)]
    pub q1: Vec<ProfileTerm>,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_d")]
    pub d: f64,
    #[serde(default)]
    pub eta: f64,
    pub a_grid: Option<usize>,
    pub q_cap: Option<i64>,
    #[serde(default)]
    pub probes: Vec<f64>,
    pub neighborhood: Option<f64>,
    pub resonance_cap: Option<i64>,
}

fn default_alpha() -> f64 {
    0.02
}

fn default_d() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HjBlock {
    pub xi: [f64; 2],
    pub eps: f64,
    pub eps_tilde: f64,
    /// Defaults to the torus average of the leading symbol.
    pub p_poly: Option<ClassicalSymbol>,
    #[serde(default)]
    pub options: HjOptions,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarrierBlock {
    pub lambda: [f64; 2],
    pub v: QuarticForm,
    /// Action pairs at which `⟨p₄⟩` is evaluated.
    #[serde(default)]
    pub actions: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputsBlock {
    pub dir: Option<PathBuf>,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputsBlock {
    fn default() -> Self {
        OutputsBlock { dir: None, formats: default_formats() }
    }
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("config {}: {e}", path.display())).into())
    }
}

/// The named block, or a validation failure naming the subcommand.
pub fn need<'a, T>(block: &'a Option<T>, name: &str, command: &str) -> Result<&'a T, Failure> {
    block.as_ref().ok_or_else(|| Failure::Validation(format!("`{command}` needs the `{name}` block")))
}

pub fn positive(value: f64, name: &str) -> Result<(), Failure> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Failure::Validation(format!("{name} must be positive, got {value}")))
    }
}
