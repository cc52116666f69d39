//! Experiment configuration: one TOML file per run.

use std::fmt;
use std::path::{Path, PathBuf};

use kawahara_core::blocks::DyadicBlockSpec;
use kawahara_core::xsb::ScanResolution;
use kawahara_core::{EquationKind, EquationParams, Grid};
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    Solve,
    ResonanceScan,
    BlockNorm,
    BilinearScan,
    TrilinearScan,
    LinearScan,
    Contraction,
    WellposedProbe,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 8] = [
        ScenarioKind::Solve,
        ScenarioKind::ResonanceScan,
        ScenarioKind::BlockNorm,
        ScenarioKind::BilinearScan,
        ScenarioKind::TrilinearScan,
        ScenarioKind::LinearScan,
        ScenarioKind::Contraction,
        ScenarioKind::WellposedProbe,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::Solve => "solve",
            ScenarioKind::ResonanceScan => "resonance-scan",
            ScenarioKind::BlockNorm => "block-norm",
            ScenarioKind::BilinearScan => "bilinear-scan",
            ScenarioKind::TrilinearScan => "trilinear-scan",
            ScenarioKind::LinearScan => "linear-scan",
            ScenarioKind::Contraction => "contraction",
            ScenarioKind::WellposedProbe => "wellposed-probe",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EquationSpec {
    #[serde(default)]
    pub alpha: f64,
    pub beta: f64,
    #[serde(default = "default_kind")]
    pub kind: EquationKind,
}

fn default_kind() -> EquationKind {
    EquationKind::Kawahara
}

impl EquationSpec {
    pub fn params(&self) -> Result<EquationParams, HarnessError> {
        EquationParams::new(self.alpha, self.beta, self.kind).map_err(|e| HarnessError::config("equation", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub n: usize,
    pub box_length: f64,
}

impl GridSpec {
    pub fn grid(&self) -> Result<Grid, HarnessError> {
        Grid::new(self.n, self.box_length).map_err(|e| HarnessError::config("grid", e.to_string()))
    }
}

/// Rough random datum, see [`crate::rough::rough_datum`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoughSpec {
    /// Spectral slope index: `|u_hat| ~ <xi>^{-s-1/2}`.
    pub s: f64,
    /// Sobolev index of the unit normalization; defaults to `s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_s: Option<f64>,
    pub cutoff: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    Zero,
    Sech2 { amplitude: f64, width: f64 },
    Cosine { k: i64, amplitude: f64 },
    Rough(RoughSpec),
    /// Petviashvili profile of speed `speed`, seeded from a sech^2 guess.
    TravelingWave { speed: f64, amplitude: f64, width: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveSpec {
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "one_usize")]
    pub sample_every: usize,
    pub initial: InitialData,
}

fn one_usize() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResonanceSpec {
    pub n_cap: f64,
    pub samples_per_block: usize,
}

/// Cartesian families of dyadic blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum BlockFamily {
    /// `N ~ N ~ N`, `H ~ N^5`, modulations `l1 <= l2 <= H`.
    PlusPlus { n: Vec<f64>, l1: Vec<f64>, l2: Vec<f64> },
    /// `N_min << N`, `H ~ N^4 N_min`, modulations `(l2, l3)` with the third at `H`.
    PlusMinus { n_min: Vec<f64>, n: Vec<f64>, l2: Vec<f64>, l3: Vec<f64> },
    Explicit { n: [f64; 3], h: f64, l: [f64; 3] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockNormSpec {
    pub cells_per_dyad: usize,
    pub restarts: usize,
    pub families: Vec<BlockFamily>,
}

impl BlockNormSpec {
    pub fn blocks(&self, params: &EquationParams) -> Result<Vec<DyadicBlockSpec>, HarnessError> {
        let mut out = Vec::new();
        for (i, fam) in self.families.iter().enumerate() {
            let field = format!("block_norm.families[{i}]");
            let err = |e: kawahara_core::blocks::BlockError| HarnessError::config(&field, e.to_string());
            match fam {
                BlockFamily::PlusPlus { n, l1, l2 } => {
                    for &n in n {
                        for &a in l1 {
                            for &b in l2 {
                                out.push(DyadicBlockSpec::plus_plus(n, a, b, params).map_err(err)?);
                            }
                        }
                    }
                }
                BlockFamily::PlusMinus { n_min, n, l2, l3 } => {
                    for &m in n_min {
                        for &n in n {
                            for &a in l2 {
                                for &b in l3 {
                                    out.push(DyadicBlockSpec::plus_minus(m, n, a, b, params).map_err(err)?);
                                }
                            }
                        }
                    }
                }
                BlockFamily::Explicit { n, h, l } => out.push(DyadicBlockSpec::new(*n, *h, *l).map_err(err)?),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub s: Vec<f64>,
    pub n: Vec<f64>,
    pub b: f64,
    pub random: usize,
    pub adversarial: usize,
    /// Also run the asymmetric bilinear ratio at this `eps` (trilinear-scan only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asym_eps: Option<f64>,
    #[serde(default)]
    pub resolution: ScanResolutionSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanResolutionSpec {
    pub xi_cells: usize,
    pub max_rows: usize,
    pub band_width: f64,
    pub band_cells: usize,
    pub lambda_per_dyad: usize,
}

impl Default for ScanResolutionSpec {
    fn default() -> Self {
        let r = ScanResolution::default();
        Self {
            xi_cells: r.xi_cells,
            max_rows: r.max_rows,
            band_width: r.band_width,
            band_cells: r.band_cells,
            lambda_per_dyad: r.product.lambda.per_dyad,
        }
    }
}

impl ScanResolutionSpec {
    pub fn resolution(&self) -> ScanResolution {
        let mut r = ScanResolution {
            xi_cells: self.xi_cells,
            max_rows: self.max_rows,
            band_width: self.band_width,
            band_cells: self.band_cells,
            ..ScanResolution::default()
        };
        r.product.lambda.per_dyad = self.lambda_per_dyad;
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearSpec {
    pub s: f64,
    pub b: Vec<f64>,
    pub delta: Vec<f64>,
    pub members: usize,
    #[serde(default = "one")]
    pub decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractionSpec {
    pub s: f64,
    pub b: f64,
    pub delta: Vec<f64>,
    pub data: RoughSpec,
    pub replicates: usize,
    /// Random probe pairs for the direct contraction factor; 0 skips it.
    #[serde(default)]
    pub probes: usize,
    /// Relative size of the perturbation used for the Lipschitz ratio.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

fn default_perturbation() -> f64 {
    1e-3
}

fn default_k_max() -> usize {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub s: Vec<f64>,
    pub b: f64,
    pub cutoffs: Vec<f64>,
    pub delta: f64,
    pub replicates: usize,
    /// Equation kinds to probe; defaults to `equation.kind`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kinds: Vec<EquationKind>,
    #[serde(default = "one")]
    pub amplitude: f64,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
}

/// Largest `s` excluded from the local theory, per equation kind.
pub fn threshold_s(kind: EquationKind) -> f64 {
    match kind {
        EquationKind::Kawahara => -1.75,
        EquationKind::ModifiedKawahara => -0.25,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioKind,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub equation: EquationSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve: Option<SolveSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonance: Option<ResonanceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_norm: Option<BlockNormSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<LinearSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contraction: Option<ContractionSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe: Option<ProbeSpec>,
}

fn need<'a, T>(v: &'a Option<T>, field: &str) -> Result<&'a T, HarnessError> {
    v.as_ref().ok_or_else(|| HarnessError::config(field, "section is required for this scenario"))
}

fn nonempty<T>(v: &[T], field: &str) -> Result<(), HarnessError> {
    if v.is_empty() {
        return Err(HarnessError::config(field, "list must not be empty"));
    }
    Ok(())
}

fn positive(x: f64, field: &str) -> Result<(), HarnessError> {
    if !(x.is_finite() && x > 0.0) {
        return Err(HarnessError::config(field, format!("must be positive and finite, got {x}")));
    }
    Ok(())
}

fn finite(x: f64, field: &str) -> Result<(), HarnessError> {
    if !x.is_finite() {
        return Err(HarnessError::config(field, format!("must be finite, got {x}")));
    }
    Ok(())
}

fn at_least(x: usize, min: usize, field: &str) -> Result<(), HarnessError> {
    if x < min {
        return Err(HarnessError::config(field, format!("must be at least {min}, got {x}")));
    }
    Ok(())
}

fn check_rough(r: &RoughSpec, field: &str) -> Result<(), HarnessError> {
    finite(r.s, &format!("{field}.s"))?;
    if let Some(ns) = r.norm_s {
        finite(ns, &format!("{field}.norm_s"))?;
    }
    positive(r.cutoff, &format!("{field}.cutoff"))?;
    positive(r.amplitude, &format!("{field}.amplitude"))
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::config("config", e.message().to_string() + &span_hint(text, e.span())))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn params(&self) -> Result<EquationParams, HarnessError> {
        self.equation.params()
    }

    pub fn grid(&self) -> Result<Grid, HarnessError> {
        need(&self.grid, "grid")?.grid()
    }

    /// Checks the sections the selected scenario reads.
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.seed > i64::MAX as u64 {
            return Err(HarnessError::config("seed", format!("must be below 2^63 to fit a TOML integer, got {}", self.seed)));
        }
        let params = self.params()?;
        match self.scenario {
            ScenarioKind::Solve => {
                self.grid()?;
                let s = need(&self.solve, "solve")?;
                positive(s.t_final, "solve.t_final")?;
                positive(s.dt, "solve.dt")?;
                at_least(s.sample_every, 1, "solve.sample_every")?;
                match &s.initial {
                    InitialData::Zero => {}
                    InitialData::Sech2 { amplitude, width } => {
                        finite(*amplitude, "solve.initial.amplitude")?;
                        positive(*width, "solve.initial.width")?;
                    }
                    InitialData::Cosine { amplitude, .. } => finite(*amplitude, "solve.initial.amplitude")?,
                    InitialData::Rough(r) => check_rough(r, "solve.initial")?,
                    InitialData::TravelingWave { speed, amplitude, width } => {
                        finite(*speed, "solve.initial.speed")?;
                        finite(*amplitude, "solve.initial.amplitude")?;
                        positive(*width, "solve.initial.width")?;
                    }
                }
            }
            ScenarioKind::ResonanceScan => {
                let r = need(&self.resonance, "resonance")?;
                positive(r.n_cap, "resonance.n_cap")?;
                at_least(r.samples_per_block, 1, "resonance.samples_per_block")?;
            }
            ScenarioKind::BlockNorm => {
                let b = need(&self.block_norm, "block_norm")?;
                at_least(b.cells_per_dyad, 1, "block_norm.cells_per_dyad")?;
                at_least(b.restarts, 1, "block_norm.restarts")?;
                nonempty(&b.families, "block_norm.families")?;
                for (i, f) in b.families.iter().enumerate() {
                    let fld = |k: &str| format!("block_norm.families[{i}].{k}");
                    match f {
                        BlockFamily::PlusPlus { n, l1, l2 } => {
                            nonempty(n, &fld("n"))?;
                            nonempty(l1, &fld("l1"))?;
                            nonempty(l2, &fld("l2"))?;
                        }
                        BlockFamily::PlusMinus { n_min, n, l2, l3 } => {
                            nonempty(n_min, &fld("n_min"))?;
                            nonempty(n, &fld("n"))?;
                            nonempty(l2, &fld("l2"))?;
                            nonempty(l3, &fld("l3"))?;
                        }
                        BlockFamily::Explicit { .. } => {}
                    }
                }
                b.blocks(&params)?;
            }
            ScenarioKind::BilinearScan | ScenarioKind::TrilinearScan => {
                let s = need(&self.scan, "scan")?;
                nonempty(&s.s, "scan.s")?;
                for &x in &s.s {
                    finite(x, "scan.s")?;
                }
                if s.n.len() < 2 || s.n.iter().any(|&n| !(n >= 1.0 && n.log2().fract() == 0.0)) {
                    return Err(HarnessError::config("scan.n", "need at least two powers of two >= 1"));
                }
                finite(s.b, "scan.b")?;
                if s.random + s.adversarial == 0 {
                    return Err(HarnessError::config("scan.random", "ensemble is empty (random + adversarial = 0)"));
                }
                if let Some(e) = s.asym_eps {
                    positive(e, "scan.asym_eps")?;
                    if self.scenario == ScenarioKind::BilinearScan {
                        return Err(HarnessError::config("scan.asym_eps", "only used by trilinear-scan"));
                    }
                }
                let r = &s.resolution;
                at_least(r.xi_cells, 1, "scan.resolution.xi_cells")?;
                at_least(r.max_rows, 1, "scan.resolution.max_rows")?;
                at_least(r.band_cells, 1, "scan.resolution.band_cells")?;
                at_least(r.lambda_per_dyad, 1, "scan.resolution.lambda_per_dyad")?;
                positive(r.band_width, "scan.resolution.band_width")?;
            }
            ScenarioKind::LinearScan => {
                self.grid()?;
                let l = need(&self.linear, "linear")?;
                finite(l.s, "linear.s")?;
                nonempty(&l.b, "linear.b")?;
                nonempty(&l.delta, "linear.delta")?;
                for &d in &l.delta {
                    positive(d, "linear.delta")?;
                }
                at_least(l.members, 1, "linear.members")?;
                finite(l.decay, "linear.decay")?;
            }
            ScenarioKind::Contraction => {
                self.grid()?;
                let c = need(&self.contraction, "contraction")?;
                finite(c.s, "contraction.s")?;
                finite(c.b, "contraction.b")?;
                nonempty(&c.delta, "contraction.delta")?;
                for &d in &c.delta {
                    positive(d, "contraction.delta")?;
                }
                check_rough(&c.data, "contraction.data")?;
                at_least(c.replicates, 1, "contraction.replicates")?;
                if c.probes == 1 {
                    return Err(HarnessError::config("contraction.probes", "must be 0 or at least 2"));
                }
                positive(c.perturbation, "contraction.perturbation")?;
                at_least(c.k_max, 2, "contraction.k_max")?;
            }
            ScenarioKind::WellposedProbe => {
                self.grid()?;
                let p = need(&self.probe, "probe")?;
                nonempty(&p.s, "probe.s")?;
                nonempty(&p.cutoffs, "probe.cutoffs")?;
                for &c in &p.cutoffs {
                    positive(c, "probe.cutoffs")?;
                }
                finite(p.b, "probe.b")?;
                positive(p.delta, "probe.delta")?;
                at_least(p.replicates, 1, "probe.replicates")?;
                positive(p.amplitude, "probe.amplitude")?;
                positive(p.perturbation, "probe.perturbation")?;
                at_least(p.k_max, 2, "probe.k_max")?;
                let lo = p.s.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = p.s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                for kind in self.probe_kinds() {
                    let t = threshold_s(kind);
                    if !(lo <= t - 0.25 && hi >= t + 0.25) {
                        return Err(HarnessError::config(
                            "probe.s",
                            format!("must straddle the {kind:?} threshold s = {t} by at least 0.25 on both sides"),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn probe_kinds(&self) -> Vec<EquationKind> {
        match &self.probe {
            Some(p) if !p.kinds.is_empty() => p.kinds.clone(),
            _ => vec![self.equation.kind],
        }
    }

    /// A small working configuration for each scenario.
    pub fn example(scenario: ScenarioKind) -> Self {
        let mut c = ExperimentConfig {
            scenario,
            seed: 1,
            out: None,
            equation: EquationSpec { alpha: 0.0, beta: 1.0, kind: EquationKind::Kawahara },
            grid: None,
            solve: None,
            resonance: None,
            block_norm: None,
            scan: None,
            linear: None,
            contraction: None,
            probe: None,
        };
        let grid = Some(GridSpec { n: 64, box_length: 2.0 * std::f64::consts::PI * 8.0 });
        match scenario {
            ScenarioKind::Solve => {
                c.grid = Some(GridSpec { n: 128, box_length: 2.0 * std::f64::consts::PI * 8.0 });
                c.solve = Some(SolveSpec { t_final: 1.0, dt: 1e-3, sample_every: 250, initial: InitialData::Sech2 { amplitude: 0.5, width: 3.0 } });
            }
            ScenarioKind::ResonanceScan => c.resonance = Some(ResonanceSpec { n_cap: 1024.0, samples_per_block: 1000 }),
            ScenarioKind::BlockNorm => {
                c.block_norm = Some(BlockNormSpec {
                    cells_per_dyad: 16,
                    restarts: 4,
                    families: vec![BlockFamily::PlusPlus { n: vec![4.0, 8.0], l1: vec![1.0, 4.0], l2: vec![16.0] }],
                })
            }
            ScenarioKind::BilinearScan => {
                c.scan = Some(ScanSpec {
                    s: vec![-1.0, -2.5],
                    n: vec![4.0, 8.0, 16.0, 32.0],
                    b: 0.6,
                    random: 20,
                    adversarial: 6,
                    asym_eps: None,
                    resolution: ScanResolutionSpec::default(),
                })
            }
            ScenarioKind::TrilinearScan => {
                c.equation.kind = EquationKind::ModifiedKawahara;
                c.scan = Some(ScanSpec {
                    s: vec![0.0, -0.25],
                    n: vec![4.0, 8.0, 16.0],
                    b: 0.55,
                    random: 10,
                    adversarial: 3,
                    asym_eps: Some(0.05),
                    resolution: ScanResolutionSpec::default(),
                })
            }
            ScenarioKind::LinearScan => {
                c.grid = grid;
                c.linear = Some(LinearSpec { s: 0.0, b: vec![0.55, 0.6, 0.75], delta: vec![0.5, 0.25, 0.125, 0.0625], members: 4, decay: 1.0 });
            }
            ScenarioKind::Contraction => {
                c.grid = grid;
                c.contraction = Some(ContractionSpec {
                    s: -1.0,
                    b: 0.6,
                    delta: vec![0.0625, 0.03125],
                    data: RoughSpec { s: -1.0, norm_s: Some(0.0), cutoff: 2.0, amplitude: 1.0 },
                    replicates: 4,
                    probes: 3,
                    perturbation: 1e-3,
                    k_max: 60,
                });
            }
            ScenarioKind::WellposedProbe => {
                c.grid = grid;
                c.probe = Some(ProbeSpec {
                    s: vec![-2.0, -1.0],
                    b: 0.6,
                    cutoffs: vec![1.0, 2.0],
                    delta: 0.0625,
                    replicates: 3,
                    kinds: vec![],
                    amplitude: 1.0,
                    perturbation: 1e-3,
                    k_max: 60,
                });
            }
        }
        c
    }
}

/// Appends ` (line L)` for a byte span into `text`.
fn span_hint(text: &str, span: Option<std::ops::Range<usize>>) -> String {
    match span {
        Some(r) => format!(" (line {})", text[..r.start.min(text.len())].matches('\n').count() + 1),
        None => String::new(),
    }
}
