//! Measured constants of the homogeneous and inhomogeneous linear estimates.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{spacetime_spectrum, xsb_norm};
use crate::dispersion::EquationParams;
use crate::duhamel::{cutoff_duhamel_integral, free_solution, CutoffSpec, DuhamelError};
use crate::fit::loglog_slope;
use crate::propagator::Trajectory;
use crate::rng::stream_rng;
use crate::spectral::{make_grid, Grid, NormSpec, SpectralField};

/// Initial data used by [`verify_linear_estimates`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataEnsemble {
    /// `u0 = cos(xi_k x)`.
    SingleMode { n: usize, box_length: f64, k: i64 },
    /// Random real data with coefficients decaying like `<k>^{-decay}`.
    Random { n: usize, box_length: f64, members: usize, decay: f64, seed: u64 },
    /// The zero datum.
    Zero { n: usize, box_length: f64 },
}

impl DataEnsemble {
    fn grid(&self) -> Result<Grid, DuhamelError> {
        let (n, l) = match self {
            DataEnsemble::SingleMode { n, box_length, .. } | DataEnsemble::Random { n, box_length, .. } | DataEnsemble::Zero { n, box_length } => (*n, *box_length),
        };
        make_grid(n, l).map_err(|e| DuhamelError::Propagator(e.into()))
    }

    pub fn members(&self) -> Result<Vec<SpectralField>, DuhamelError> {
        let g = self.grid()?;
        Ok(match self {
            DataEnsemble::Zero { .. } => vec![SpectralField::zeros(g)],
            DataEnsemble::SingleMode { k, .. } => {
                let k = *k;
                vec![SpectralField::from_wavenumbers(g, |q| if q.abs() == k.abs() { (0.5f64).into() } else { 0.0.into() })]
            }
            DataEnsemble::Random { members, decay, seed, .. } => (0..*members)
                .map(|i| {
                    let mut rng = stream_rng(*seed, &[0x11ea, i as u64]);
                    let band = g.quadratic_band();
                    let raw = SpectralField::from_wavenumbers(g, |k| {
                        if k.abs() > band {
                            return 0.0.into();
                        }
                        let a = rng.gen_range(-1.0..1.0) * (1.0 + k.abs() as f64).powf(-decay);
                        num_complex::Complex64::new(a, rng.gen_range(-1.0..1.0) * a.abs())
                    });
                    raw.symmetrized()
                })
                .collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearEstimateOptions {
    pub half_points: usize,
    /// Time-window padding for the space-time transform (`T_w ~ 2 pad delta`).
    pub pad: usize,
}

impl Default for LinearEstimateOptions {
    fn default() -> Self {
        Self { half_points: 128, pad: 16 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEstimateRow {
    pub delta: f64,
    /// `max ||psi_delta W u0||_{X_{s,b}} / ||u0||_{H^s}` over the ensemble.
    pub homogeneous: f64,
    /// `max ||psi_delta int_0^t W(t-t') F||_{X_{s,b}} / ||F||_{X_{s,b-1}}` with `F = psi_delta W u0`.
    pub duhamel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearEstimateReport {
    pub norm: NormSpec,
    pub rows: Vec<LinearEstimateRow>,
    pub homogeneous_slope: Option<f64>,
    pub duhamel_slope: Option<f64>,
    /// `(1 - 2b) / 2`
    pub predicted_slope: f64,
}

pub fn verify_linear_estimates(
    norm: &NormSpec,
    delta_list: &[f64],
    data: &DataEnsemble,
    params: &EquationParams,
) -> Result<LinearEstimateReport, DuhamelError> {
    verify_linear_estimates_with(norm, delta_list, data, params, &LinearEstimateOptions::default())
}

pub fn verify_linear_estimates_with(
    norm: &NormSpec,
    delta_list: &[f64],
    data: &DataEnsemble,
    params: &EquationParams,
    opts: &LinearEstimateOptions,
) -> Result<LinearEstimateReport, DuhamelError> {
    let members = data.members()?;
    let mut rows = Vec::with_capacity(delta_list.len());
    for &delta in delta_list {
        let cutoff = CutoffSpec::new(delta)?;
        let mut row = LinearEstimateRow { delta, homogeneous: 0.0, duhamel: 0.0 };
        for u0 in &members {
            let den = u0.hs_norm(norm.s);
            if den == 0.0 {
                continue;
            }
            let free = free_solution(u0, &cutoff, params, opts.half_points)?;
            let h = xsb_norm(&spacetime_spectrum(&free, None, opts.pad)?, norm);
            row.homogeneous = row.homogeneous.max(h / den);
            let forcing: Trajectory = free;
            let f_norm = xsb_norm(&spacetime_spectrum(&forcing, None, opts.pad)?, &NormSpec::new(norm.s, norm.b - 1.0));
            let integral = cutoff_duhamel_integral(&forcing, &cutoff)?;
            let d = xsb_norm(&spacetime_spectrum(&integral, None, opts.pad)?, norm);
            row.duhamel = row.duhamel.max(d / f_norm);
        }
        rows.push(row);
    }
    let deltas: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let hom: Vec<f64> = rows.iter().map(|r| r.homogeneous).collect();
    let duh: Vec<f64> = rows.iter().map(|r| r.duhamel).collect();
    Ok(LinearEstimateReport {
        norm: *norm,
        homogeneous_slope: loglog_slope(&deltas, &hom),
        duhamel_slope: loglog_slope(&deltas, &duh),
        predicted_slope: (1.0 - 2.0 * norm.b) / 2.0,
        rows,
    })
}
