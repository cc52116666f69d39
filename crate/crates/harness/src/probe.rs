//! Rough-data probes of the Picard construction and of Lipschitz dependence.

use kawahara_core::duhamel::{lipschitz_data_dependence_with, picard_iterate, CutoffSpec, DuhamelError, LipschitzOptions};
use kawahara_core::rng::{label_key, stream_seed};
use kawahara_core::{EquationKind, EquationParams, Grid, NormSpec, SpectralField, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ScenarioKind};
use crate::error::HarnessError;
use crate::rough::rough_datum;

/// One Picard run plus one Lipschitz comparison from a rough datum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughRun {
    /// Largest successive Picard residual ratio.
    pub rate: f64,
    pub converged: bool,
    pub iterations: usize,
    /// `sup_{0 <= t <= delta/2} ||u(t)||_{H^s} / ||u0||_{H^s}`; absent without convergence.
    pub persistence: Option<f64>,
    /// Absent when either Picard run diverged.
    pub lipschitz: Option<f64>,
}

pub(crate) struct RoughCase<'a> {
    pub u0: &'a SpectralField,
    pub w: &'a SpectralField,
    pub perturbation: f64,
    pub cutoff: &'a CutoffSpec,
    pub params: &'a EquationParams,
    pub norm: NormSpec,
    pub k_max: usize,
}

fn sup_norm(traj: &Trajectory, s: f64, t1: f64) -> f64 {
    traj.times()
        .iter()
        .zip(traj.states())
        .filter(|(&t, _)| t >= 0.0 && t <= t1 * (1.0 + 1e-12))
        .map(|(_, u)| u.hs_norm(s))
        .fold(0.0, f64::max)
}

pub(crate) fn rough_run(case: &RoughCase) -> Result<RoughRun, DuhamelError> {
    let RoughCase { u0, w, perturbation, cutoff, params, norm, k_max } = *case;
    let opts = LipschitzOptions { k_max, ..LipschitzOptions::default() };
    let scale = u0.hs_norm(norm.s);
    let (u, rep) = picard_iterate(u0, cutoff, params, &norm, k_max, opts.rel_tol * scale.max(f64::MIN_POSITIVE))?;
    let persistence = (rep.converged && scale > 0.0).then(|| sup_norm(&u, norm.s, 0.5 * cutoff.delta()) / scale);
    let v0 = u0.axpy(perturbation, w).expect("same grid");
    let lipschitz = match lipschitz_data_dependence_with(u0, &v0, cutoff, params, &norm, &opts) {
        Ok(r) => Some(r),
        Err(DuhamelError::Divergence { .. }) => None,
        Err(e) => return Err(e),
    };
    Ok(RoughRun { rate: rep.contraction_factor, converged: rep.converged, iterations: rep.iterations, persistence, lipschitz })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRow {
    pub kind: EquationKind,
    pub s: f64,
    pub cutoff: f64,
    pub replicate: usize,
    /// `||u0||_{H^s}` after normalization and scaling.
    pub data_norm: f64,
    pub rate: f64,
    pub converged: bool,
    pub iterations: usize,
    pub persistence: Option<f64>,
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub kind: EquationKind,
    pub s: f64,
    pub cutoff: f64,
    /// Whether `s` lies above the threshold of the local theory for `kind`.
    pub inside_range: bool,
    pub converged: usize,
    pub replicates: usize,
    pub max_rate: f64,
    pub max_persistence: Option<f64>,
    pub max_lipschitz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    pub summary: Vec<ProbeSummary>,
}

fn fold_max(it: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    it.flatten().fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
}

/// Data seed for replicate `r` of a scenario; `role` 0 is the datum, 1 the perturbation.
pub(crate) fn data_seed(seed: u64, scenario: ScenarioKind, keys: &[u64]) -> u64 {
    let mut path = vec![label_key(scenario.name())];
    path.extend_from_slice(keys);
    stream_seed(seed, &path)
}

/// Sweeps equation kind, `s` and frequency cutoff over rough random data normalized to
/// `amplitude` in `H^s`. Diverging runs are recorded, not raised.
pub fn wellposed_probe(config: &ExperimentConfig) -> Result<ProbeReport, HarnessError> {
    config.validate()?;
    let p = config.probe.as_ref().expect("validated");
    let grid: Grid = config.grid()?;
    let base = config.params()?;
    let cutoff = CutoffSpec::new(p.delta).map_err(|e| HarnessError::config("probe.delta", e.to_string()))?;
    let mut points = Vec::new();
    for kind in config.probe_kinds() {
        for &s in &p.s {
            for &k in &p.cutoffs {
                for r in 0..p.replicates {
                    points.push((kind, s, k, r));
                }
            }
        }
    }
    let rows = points
        .par_iter()
        .map(|&(kind, s, k, r)| {
            let params = base.with_kind(kind);
            let key = [kind as u64, s.to_bits(), k.to_bits(), r as u64];
            let u0 = rough_datum(grid, s, s, k, data_seed(config.seed, ScenarioKind::WellposedProbe, &[key[0], key[1], key[2], key[3], 0])).scaled(p.amplitude);
            let w = rough_datum(grid, s, s, k, data_seed(config.seed, ScenarioKind::WellposedProbe, &[key[0], key[1], key[2], key[3], 1])).scaled(p.amplitude);
            let case = RoughCase { u0: &u0, w: &w, perturbation: p.perturbation, cutoff: &cutoff, params: &params, norm: NormSpec::new(s, p.b), k_max: p.k_max };
            let run = rough_run(&case).map_err(|e| HarnessError::numerical("wellposed-probe", format!("{kind:?} s={s} cutoff={k} replicate {r}: {e}")))?;
            Ok(ProbeRow {
                kind,
                s,
                cutoff: k,
                replicate: r,
                data_norm: u0.hs_norm(s),
                rate: run.rate,
                converged: run.converged,
                iterations: run.iterations,
                persistence: run.persistence,
                lipschitz: run.lipschitz,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let mut summary = Vec::new();
    for group in rows.chunks(p.replicates) {
        let g0 = &group[0];
        summary.push(ProbeSummary {
            kind: g0.kind,
            s: g0.s,
            cutoff: g0.cutoff,
            inside_range: g0.s > crate::config::threshold_s(g0.kind),
            converged: group.iter().filter(|r| r.converged).count(),
            replicates: group.len(),
            max_rate: group.iter().map(|r| r.rate).fold(0.0, f64::max),
            max_persistence: fold_max(group.iter().map(|r| r.persistence)),
            max_lipschitz: fold_max(group.iter().map(|r| r.lipschitz)),
        });
    }
    Ok(ProbeReport { rows, summary })
}
