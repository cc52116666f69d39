//! Scenario dispatch and artifact persistence.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kawahara_core::blocks::{verify_block_estimates, Regime};
use kawahara_core::dispersion::verify_resonance_bound;
use kawahara_core::duhamel::{contraction_factor, CutoffSpec};
use kawahara_core::propagator::{invariants, sech2_guess, solve, traveling_wave_petviashvili, default_gamma};
use kawahara_core::snapshot::save_snapshot;
use kawahara_core::xsb::{ratio_scaling_scan, verify_linear_estimates, DataEnsemble, EstimateKind, ScanEnsemble, ScanTable};
use kawahara_core::{EquationParams, Grid, NormSpec, SpectralField};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{ExperimentConfig, InitialData, RoughSpec, ScenarioKind};
use crate::error::HarnessError;
use crate::probe::{data_seed, rough_run, wellposed_probe, RoughCase};
use crate::rough::rough_datum;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    /// Scenario computation including artifact writes.
    pub scenario_seconds: f64,
    pub checksum_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub scenario: ScenarioKind,
    pub config: ExperimentConfig,
    /// Every file in the output directory except the manifest itself.
    pub artifacts: Vec<ArtifactEntry>,
    pub timings: Timings,
}

impl RunManifest {
    pub fn load(dir: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = dir.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        serde_json::from_str(&text).map_err(|e| HarnessError::io(&path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))
    }

    /// Artifacts whose on-disk checksum differs from the manifest, plus files the manifest misses.
    pub fn verify(&self, dir: impl AsRef<Path>) -> Result<Vec<String>, HarnessError> {
        let dir = dir.as_ref();
        let actual = checksum_tree(dir)?;
        let mut bad = Vec::new();
        for a in &actual {
            if !self.artifacts.contains(a) {
                bad.push(a.path.clone());
            }
        }
        for a in &self.artifacts {
            if !actual.iter().any(|b| b.path == a.path) {
                bad.push(a.path.clone());
            }
        }
        Ok(bad)
    }
}

struct OutDir {
    root: PathBuf,
}

impl OutDir {
    fn create(root: &Path) -> Result<Self, HarnessError> {
        if root.exists() {
            let mut it = fs::read_dir(root).map_err(|e| HarnessError::io(root, e))?;
            if it.next().is_some() {
                return Err(HarnessError::config("out", format!("output directory {} is not empty", root.display())));
            }
        }
        fs::create_dir_all(root).map_err(|e| HarnessError::io(root, e))?;
        Ok(Self { root: root.to_path_buf() })
    }

    fn path(&self, name: &str) -> Result<PathBuf, HarnessError> {
        let p = self.root.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent).map_err(|e| HarnessError::io(parent, e))?;
        }
        Ok(p)
    }

    fn csv<T: Serialize>(&self, name: &str, rows: &[T]) -> Result<(), HarnessError> {
        let p = self.path(name)?;
        let io = |e: csv::Error| HarnessError::io(&p, std::io::Error::new(std::io::ErrorKind::Other, e));
        let mut w = csv::Writer::from_path(&p).map_err(io)?;
        for r in rows {
            w.serialize(r).map_err(io)?;
        }
        w.flush().map_err(|e| HarnessError::io(&p, e))
    }

    fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), HarnessError> {
        let p = self.path(name)?;
        let mut text = serde_json::to_string_pretty(value).expect("serializable");
        text.push('\n');
        fs::write(&p, text).map_err(|e| HarnessError::io(&p, e))
    }

    fn text(&self, name: &str, text: &str) -> Result<(), HarnessError> {
        let p = self.path(name)?;
        fs::write(&p, text).map_err(|e| HarnessError::io(&p, e))
    }
}

fn sha256_file(path: &Path) -> Result<(u64, String), HarnessError> {
    let mut f = fs::File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    let mut total = 0u64;
    loop {
        let k = f.read(&mut buf).map_err(|e| HarnessError::io(path, e))?;
        if k == 0 {
            break;
        }
        h.update(&buf[..k]);
        total += k as u64;
    }
    Ok((total, format!("{:x}", h.finalize())))
}

/// Checksums of every regular file below `dir` except the manifest, sorted by path.
pub fn checksum_tree(dir: &Path) -> Result<Vec<ArtifactEntry>, HarnessError> {
    fn walk(dir: &Path, rel: &str, out: &mut Vec<ArtifactEntry>) -> Result<(), HarnessError> {
        for e in fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))? {
            let e = e.map_err(|e| HarnessError::io(dir, e))?;
            let name = e.file_name().to_string_lossy().into_owned();
            let rel = if rel.is_empty() { name } else { format!("{rel}/{name}") };
            let ty = e.file_type().map_err(|err| HarnessError::io(e.path(), err))?;
            if ty.is_dir() {
                walk(&e.path(), &rel, out)?;
            } else if rel != MANIFEST_FILE {
                let (bytes, sha256) = sha256_file(&e.path())?;
                out.push(ArtifactEntry { path: rel, bytes, sha256 });
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(dir, "", &mut out)?;
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

#[derive(Serialize)]
struct InvariantRow {
    t: f64,
    mass: f64,
    l2: f64,
    hamiltonian: f64,
}

#[derive(Serialize)]
struct TrajectoryManifest<'a> {
    params: EquationParams,
    dt: f64,
    times: &'a [f64],
    snapshots: Vec<String>,
    invariants: kawahara_core::propagator::InvariantLog,
}

#[derive(Serialize)]
struct ResonanceRow {
    alpha: f64,
    beta: f64,
    n_cap: f64,
    n0: f64,
    samples_per_block: usize,
    samples: usize,
    patterns: usize,
    min_ratio: f64,
    argmin_xi1: f64,
    argmin_xi2: f64,
    argmin_xi3: f64,
}

#[derive(Serialize)]
struct BlockCsvRow {
    regime: Regime,
    n1: f64,
    n2: f64,
    n3: f64,
    h: f64,
    l1: f64,
    l2: f64,
    l3: f64,
    estimate: f64,
    bound: f64,
    ratio: f64,
    elementary: f64,
    support: usize,
}

#[derive(Serialize)]
struct ScanCsvRow<'a> {
    estimate: &'a str,
    s: f64,
    b: f64,
    #[serde(rename = "N")]
    n: f64,
    regime: &'a str,
    seed: u64,
    ratio: f64,
}

#[derive(Serialize)]
struct ScanSummary<'a> {
    estimate: EstimateKind,
    slopes: &'a [kawahara_core::xsb::SlopeFit],
    scale_slopes: &'a [kawahara_core::xsb::SlopeFit],
    threshold_s: Option<f64>,
}

#[derive(Serialize)]
struct LinearCsvRow {
    s: f64,
    b: f64,
    delta: f64,
    homogeneous: f64,
    duhamel: f64,
}

#[derive(Serialize)]
struct LinearSummary {
    s: f64,
    b: f64,
    homogeneous_slope: Option<f64>,
    duhamel_slope: Option<f64>,
    predicted_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionRow {
    pub delta: f64,
    pub replicate: usize,
    pub data_norm: f64,
    pub picard_ratio: f64,
    pub converged: bool,
    pub iterations: usize,
    pub contraction_factor: Option<f64>,
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionSummary {
    pub delta: f64,
    pub replicates: usize,
    pub converged: usize,
    pub max_picard_ratio: f64,
    pub max_contraction_factor: Option<f64>,
    pub max_lipschitz: Option<f64>,
    /// Replicates whose Lipschitz comparison diverged.
    pub lipschitz_failures: usize,
}

fn rough_field(grid: Grid, r: &RoughSpec, seed: u64) -> SpectralField {
    rough_datum(grid, r.s, r.norm_s.unwrap_or(r.s), r.cutoff, seed).scaled(r.amplitude)
}

fn initial_field(config: &ExperimentConfig, grid: Grid, params: &EquationParams, init: &InitialData) -> Result<SpectralField, HarnessError> {
    Ok(match *init {
        InitialData::Zero => SpectralField::zeros(grid),
        InitialData::Sech2 { amplitude, width } => sech2_guess(grid, amplitude, width),
        InitialData::Cosine { k, amplitude } => SpectralField::from_wavenumbers(grid, |q| if q.abs() == k.abs() && k != 0 { (0.5 * amplitude).into() } else if k == 0 && q == 0 { amplitude.into() } else { 0.0.into() }),
        InitialData::Rough(r) => rough_field(grid, &r, data_seed(config.seed, ScenarioKind::Solve, &[0])),
        InitialData::TravelingWave { speed, amplitude, width } => {
            let guess = sech2_guess(grid, amplitude, width);
            traveling_wave_petviashvili(speed, params, &guess, default_gamma(params.kind()), 1e-12, 500)
                .map_err(|e| HarnessError::numerical("solve", format!("traveling wave: {e}")))?
                .0
        }
    })
}

fn run_solve(config: &ExperimentConfig, out: &OutDir) -> Result<(), HarnessError> {
    let spec = config.solve.as_ref().expect("validated");
    let grid = config.grid()?;
    let params = config.params()?;
    let u0 = initial_field(config, grid, &params, &spec.initial)?;
    let traj = solve(&u0, spec.t_final, spec.dt, &params, spec.sample_every).map_err(|e| HarnessError::numerical("solve", e))?;
    let mut names = Vec::with_capacity(traj.len());
    for (i, (u, &t)) in traj.states().iter().zip(traj.times()).enumerate() {
        let name = format!("snapshots/snap_{i:05}.kwsp");
        let p = out.path(&name)?;
        save_snapshot(&p, u, t).map_err(|e| HarnessError::io(&p, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
        names.push(name);
    }
    let log = invariants(&traj);
    let rows: Vec<InvariantRow> = (0..log.times.len())
        .map(|i| InvariantRow { t: log.times[i], mass: log.mass[i], l2: log.l2[i], hamiltonian: log.hamiltonian[i] })
        .collect();
    out.csv("invariants.csv", &rows)?;
    out.json("trajectory.json", &TrajectoryManifest { params, dt: spec.t_final / kawahara_core::propagator::step_count(spec.t_final, spec.dt) as f64, times: traj.times(), snapshots: names, invariants: log })
}

fn run_resonance(config: &ExperimentConfig, out: &OutDir) -> Result<(), HarnessError> {
    let r = config.resonance.as_ref().expect("validated");
    let params = config.params()?;
    let seed = data_seed(config.seed, ScenarioKind::ResonanceScan, &[]);
    let rep = verify_resonance_bound(&params, r.n_cap, r.samples_per_block, seed).map_err(|e| HarnessError::numerical("resonance-scan", e))?;
    let [a, b, c] = rep.argmin_triple;
    out.csv(
        "resonance.csv",
        &[ResonanceRow {
            alpha: params.alpha(),
            beta: params.beta(),
            n_cap: rep.n_cap,
            n0: rep.n0,
            samples_per_block: rep.samples_per_block,
            samples: rep.samples,
            patterns: rep.patterns,
            min_ratio: rep.min_ratio,
            argmin_xi1: a,
            argmin_xi2: b,
            argmin_xi3: c,
        }],
    )?;
    out.json("resonance.json", &rep)
}

fn run_blocks(config: &ExperimentConfig, out: &OutDir) -> Result<(), HarnessError> {
    let b = config.block_norm.as_ref().expect("validated");
    let params = config.params()?;
    let scan = b.blocks(&params)?;
    let seed = data_seed(config.seed, ScenarioKind::BlockNorm, &[]);
    let rep = verify_block_estimates(&scan, &params, b.cells_per_dyad, b.restarts, seed).map_err(|e| HarnessError::numerical("block-norm", e))?;
    let rows: Vec<BlockCsvRow> = rep
        .rows
        .iter()
        .map(|r| BlockCsvRow {
            regime: r.regime,
            n1: r.spec.n[0],
            n2: r.spec.n[1],
            n3: r.spec.n[2],
            h: r.spec.h,
            l1: r.spec.l[0],
            l2: r.spec.l[1],
            l3: r.spec.l[2],
            estimate: r.estimate,
            bound: r.bound,
            ratio: r.ratio,
            elementary: r.elementary,
            support: r.support,
        })
        .collect();
    out.csv("blocks.csv", &rows)?;
    out.json("fits.json", &serde_json::json!({ "fits": rep.fits, "crossovers": rep.crossovers }))
}

fn run_scan(config: &ExperimentConfig, out: &OutDir) -> Result<(), HarnessError> {
    let s = config.scan.as_ref().expect("validated");
    let params = config.params()?;
    let mut kinds = match config.scenario {
        ScenarioKind::TrilinearScan => vec![EstimateKind::Trilinear { b: s.b }],
        _ => vec![EstimateKind::Bilinear { b: s.b }],
    };
    if let Some(eps) = s.asym_eps {
        kinds.push(EstimateKind::Asym { eps });
    }
    let ens = ScanEnsemble { random: s.random, adversarial: s.adversarial };
    let res = s.resolution.resolution();
    let scenario = if config.scenario == ScenarioKind::TrilinearScan { "trilinear-scan" } else { "bilinear-scan" };
    let tables: Vec<(EstimateKind, ScanTable)> = kinds
        .iter()
        .map(|k| {
            let seed = data_seed(config.seed, config.scenario, &[kawahara_core::rng::label_key(k.label())]);
            ratio_scaling_scan(k, &ens, &s.s, &s.n, &params, seed, &res)
                .map(|t| (*k, t))
                .map_err(|e| HarnessError::numerical(scenario, format!("{}: {e}", k.label())))
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<ScanCsvRow> = tables
        .iter()
        .flat_map(|(_, t)| t.rows.iter())
        .map(|r| ScanCsvRow { estimate: &r.estimate, s: r.s, b: r.b, n: r.n, regime: &r.regime, seed: r.seed, ratio: r.ratio })
        .collect();
    out.csv("scan.csv", &rows)?;
    let summary: Vec<ScanSummary> = tables
        .iter()
        .map(|(k, t)| ScanSummary { estimate: *k, slopes: &t.slopes, scale_slopes: &t.scale_slopes, threshold_s: t.threshold_s })
        .collect();
    out.json("slopes.json", &summary)
}

fn run_linear(config: &ExperimentConfig, out: &OutDir) -> Result<(), HarnessError> {
    let l = config.linear.as_ref().expect("validated");
    let g = config.grid.expect("validated");
    let params = config.params()?;
    let data = DataEnsemble::Random {
        n: g.n,
        box_length: g.box_length,
        members: l.members,
        decay: l.decay,
        seed: data_seed(config.seed, ScenarioKind::LinearScan, &[]),
    };
    let reports = l
        .b
        .par_iter()
        .map(|&b| verify_linear_estimates(&NormSpec::new(l.s, b), &l.delta, &data, &params).map_err(|e| HarnessError::numerical("linear-scan", format!("b = {b}: {e}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for rep in &reports {
        for r in &rep.rows {
            rows.push(LinearCsvRow { s: rep.norm.s, b: rep.norm.b, delta: r.delta, homogeneous: r.homogeneous, duhamel: r.duhamel });
        }
        summary.push(LinearSummary {
            s: rep.norm.s,
            b: rep.norm.b,
            homogeneous_slope: rep.homogeneous_slope,
            duhamel_slope: rep.duhamel_slope,
            predicted_slope: rep.predicted_slope,
        });
    }
    out.csv("linear.csv", &rows)?;
    out.json("linear.json", &summary)
}

/// Picard, contraction-factor and Lipschitz measurements over the delta sweep.
pub fn contraction_rows(config: &ExperimentConfig) -> Result<Vec<ContractionRow>, HarnessError> {
    config.validate()?;
    let c = config.contraction.as_ref().expect("validated");
    let grid = config.grid()?;
    let params = config.params()?;
    let norm = NormSpec::new(c.s, c.b);
    let mut points = Vec::new();
    for (di, &d) in c.delta.iter().enumerate() {
        for r in 0..c.replicates {
            points.push((di, d, r));
        }
    }
    points
        .par_iter()
        .map(|&(di, delta, r)| {
            let ctx = |e: &dyn std::fmt::Display| HarnessError::numerical("contraction", format!("delta = {delta}, replicate {r}: {e}"));
            let cutoff = CutoffSpec::new(delta).map_err(|e| HarnessError::config(format!("contraction.delta[{di}]"), e.to_string()))?;
            let u0 = rough_field(grid, &c.data, data_seed(config.seed, ScenarioKind::Contraction, &[r as u64, 0]));
            let w = rough_field(grid, &c.data, data_seed(config.seed, ScenarioKind::Contraction, &[r as u64, 1]));
            let case = RoughCase { u0: &u0, w: &w, perturbation: c.perturbation, cutoff: &cutoff, params: &params, norm, k_max: c.k_max };
            let run = rough_run(&case).map_err(|e| ctx(&e))?;
            let factor = if c.probes >= 2 {
                let seed = data_seed(config.seed, ScenarioKind::Contraction, &[r as u64, 2, di as u64]);
                Some(contraction_factor(&u0, &cutoff, &params, &norm, c.probes, seed).map_err(|e| ctx(&e))?)
            } else {
                None
            };
            Ok(ContractionRow {
                delta,
                replicate: r,
                data_norm: u0.hs_norm(c.data.norm_s.unwrap_or(c.data.s)),
                picard_ratio: run.rate,
                converged: run.converged,
                iterations: run.iterations,
                contraction_factor: factor,
                lipschitz: run.lipschitz,
            })
        })
        .collect()
}

pub fn summarize_contraction(rows: &[ContractionRow]) -> Vec<ContractionSummary> {
    let mut out: Vec<ContractionSummary> = Vec::new();
    for r in rows {
        let pos = out.iter().position(|s| s.delta == r.delta);
        let s = match pos {
            Some(i) => &mut out[i],
            None => {
                out.push(ContractionSummary {
                    delta: r.delta,
                    replicates: 0,
                    converged: 0,
                    max_picard_ratio: 0.0,
                    max_contraction_factor: None,
                    max_lipschitz: None,
                    lipschitz_failures: 0,
                });
                out.last_mut().unwrap()
            }
        };
        s.replicates += 1;
        s.converged += r.converged as usize;
        s.max_picard_ratio = s.max_picard_ratio.max(r.picard_ratio);
        if let Some(f) = r.contraction_factor {
            s.max_contraction_factor = Some(s.max_contraction_factor.map_or(f, |m| m.max(f)));
        }
        match r.lipschitz {
            Some(l) => s.max_lipschitz = Some(s.max_lipschitz.map_or(l, |m| m.max(l))),
            None => s.lipschitz_failures += 1,
        }
    }
    out
}

fn run_contraction(config: &ExperimentConfig, out: &OutDir) -> Result<(), HarnessError> {
    let rows = contraction_rows(config)?;
    out.csv("contraction.csv", &rows)?;
    out.json("contraction.json", &summarize_contraction(&rows))
}

fn run_probe(config: &ExperimentConfig, out: &OutDir) -> Result<(), HarnessError> {
    let rep = wellposed_probe(config)?;
    out.csv("probe.csv", &rep.rows)?;
    out.json("probe.json", &rep.summary)
}

/// Runs `config.scenario`, writing artifacts and `manifest.json` into `config.out`.
pub fn run_scenario(config: &ExperimentConfig) -> Result<RunManifest, HarnessError> {
    config.validate()?;
    let root = config.out.as_ref().ok_or_else(|| HarnessError::config("out", "output directory is required"))?;
    let out = OutDir::create(root)?;
    out.text("config.toml", &config.to_toml())?;
    let t0 = Instant::now();
    match config.scenario {
        ScenarioKind::Solve => run_solve(config, &out)?,
        ScenarioKind::ResonanceScan => run_resonance(config, &out)?,
        ScenarioKind::BlockNorm => run_blocks(config, &out)?,
        ScenarioKind::BilinearScan | ScenarioKind::TrilinearScan => run_scan(config, &out)?,
        ScenarioKind::LinearScan => run_linear(config, &out)?,
        ScenarioKind::Contraction => run_contraction(config, &out)?,
        ScenarioKind::WellposedProbe => run_probe(config, &out)?,
    }
    let compute = t0.elapsed().as_secs_f64();
    let t1 = Instant::now();
    let artifacts = checksum_tree(root)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        scenario: config.scenario,
        config: config.clone(),
        artifacts,
        timings: Timings { scenario_seconds: compute, checksum_seconds: t1.elapsed().as_secs_f64() },
    };
    out.json(MANIFEST_FILE, &manifest)?;
    Ok(manifest)
}
