//! Capacities, secrecy capacity, beam similarity and spatial power spectra.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{nearfield_channel, ArrayGeometry, PolarLocation};
use crate::error::{Error, Result};
use crate::numerics::{frobenius_sq, identity, logdet_hpd, ComplexMatrix};

fn check_product(op: &'static str, left: &ComplexMatrix, right: &ComplexMatrix) -> Result<()> {
    if left.ncols() == right.nrows() {
        Ok(())
    } else {
        Err(Error::Dimension {
            op,
            detail: format!(
                "cannot multiply {}x{} by {}x{}",
                left.nrows(),
                left.ncols(),
                right.nrows(),
                right.ncols()
            ),
        })
    }
}

/// `ln det(I + G Gᴴ)` with `G = H̃ W`, in nats.
pub fn log_det_gain(h_tilde: &ComplexMatrix, w: &ComplexMatrix) -> Result<f64> {
    check_product("log_det_gain", h_tilde, w)?;
    let g = h_tilde * w;
    logdet_hpd(&(identity(g.nrows()) + &g * g.adjoint()))
}

/// `log₂ det(I + σ⁻² H W Wᴴ Hᴴ)` in bits/s/Hz.
pub fn mutual_information(h: &ComplexMatrix, w_eff: &ComplexMatrix, noise_power: f64) -> Result<f64> {
    if !(noise_power > 0.0) {
        return Err(Error::Argument(format!("noise power must be positive, got {noise_power}")));
    }
    check_product("mutual_information", h, w_eff)?;
    let h_tilde = h * Complex64::new(noise_power.sqrt().recip(), 0.0);
    Ok((log_det_gain(&h_tilde, w_eff)? / LN_2).max(0.0))
}

/// `(C_U, C_E)` in bits/s/Hz.
pub fn capacities(
    h_u: &ComplexMatrix,
    h_e: &ComplexMatrix,
    w_eff: &ComplexMatrix,
    noise_power: f64,
) -> Result<(f64, f64)> {
    Ok((
        mutual_information(h_u, w_eff, noise_power)?,
        mutual_information(h_e, w_eff, noise_power)?,
    ))
}

/// `[C_U − C_E]⁺` in bits/s/Hz.
pub fn secrecy_capacity(
    h_u: &ComplexMatrix,
    h_e: &ComplexMatrix,
    w_eff: &ComplexMatrix,
    noise_power: f64,
) -> Result<f64> {
    let (c_u, c_e) = capacities(h_u, h_e, w_eff, noise_power)?;
    Ok((c_u - c_e).max(0.0))
}

/// `‖W_FD − P W‖_F²`.
pub fn beam_similarity(w_fd: &ComplexMatrix, p: &ComplexMatrix, w: &ComplexMatrix) -> Result<f64> {
    check_product("beam_similarity", p, w)?;
    if w_fd.shape() != (p.nrows(), w.ncols()) {
        return Err(Error::Dimension {
            op: "beam_similarity",
            detail: format!(
                "W_FD is {}x{} but PW is {}x{}",
                w_fd.nrows(),
                w_fd.ncols(),
                p.nrows(),
                w.ncols()
            ),
        });
    }
    Ok(frobenius_sq(&(w_fd - p * w)))
}

/// Loop iteration counts of one two-stage run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterationCounts {
    pub bcd: usize,
    /// Bisection steps taken inside each BCD iteration.
    pub bisection: Vec<usize>,
    pub ao: usize,
}

/// Capacities of one beamformer design.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecrecyReport {
    pub c_u: f64,
    pub c_e: f64,
    /// Always `max(c_u - c_e, 0)`.
    pub c_s: f64,
    /// Watts.
    pub transmit_power: f64,
    pub iterations: IterationCounts,
}

impl SecrecyReport {
    pub fn evaluate(
        h_u: &ComplexMatrix,
        h_e: &ComplexMatrix,
        w_eff: &ComplexMatrix,
        noise_power: f64,
        iterations: IterationCounts,
    ) -> Result<Self> {
        let (c_u, c_e) = capacities(h_u, h_e, w_eff, noise_power)?;
        Ok(Self {
            c_u,
            c_e,
            c_s: (c_u - c_e).max(0.0),
            transmit_power: frobenius_sq(w_eff),
            iterations,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectrumPoint {
    pub location: PolarLocation,
    /// Received power divided by the grid maximum.
    pub power: f64,
}

/// Received power `‖h(r,θ) P W‖²` of a single-antenna near-field probe at
/// every grid point, normalized so the largest value is one.
///
/// An all-zero beamformer yields an all-zero spectrum.
pub fn power_spectrum(
    p: &ComplexMatrix,
    w: &ComplexMatrix,
    tx: &ArrayGeometry,
    f: f64,
    grid: &[PolarLocation],
) -> Result<Vec<SpectrumPoint>> {
    if grid.is_empty() {
        return Err(Error::Argument("spectrum grid is empty".into()));
    }
    check_product("power_spectrum", p, w)?;
    if p.nrows() != tx.num_elements {
        return Err(Error::Dimension {
            op: "power_spectrum",
            detail: format!("P has {} rows but the array has {} elements", p.nrows(), tx.num_elements),
        });
    }
    let w_eff = p * w;
    let raw: Vec<f64> = grid
        .par_iter()
        .map(|&loc| {
            let probe = ArrayGeometry::receiver(1, tx.spacing, loc)?;
            let h = nearfield_channel(tx, &probe, f)?;
            Ok(frobenius_sq(&(&h.matrix * &w_eff)))
        })
        .collect::<Result<_>>()?;
    let peak = raw.iter().cloned().fold(0.0, f64::max);
    Ok(grid
        .iter()
        .zip(raw)
        .map(|(&location, power)| SpectrumPoint {
            location,
            power: if peak > 0.0 { power / peak } else { 0.0 },
        })
        .collect())
}
