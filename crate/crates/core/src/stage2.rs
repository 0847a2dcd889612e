//! Projection of a fully-digital beamformer onto the hybrid set.
//!
//! Minimizes `‖W_FD − P W‖_F²` over a unit-modulus analog precoder `P`
//! (`M × M_R`) and an unconstrained digital precoder `W` (`M_R × K`) by
//! alternating a least-squares solve for `W` with a sweep of exact
//! single-entry phase updates on `P`.
//!
//! For one entry `p = P[i,j]` with everything else fixed, the residual is
//! `const − 2 Re(conj(z) p)` where `z = Y[i,j] − ((P X)[i,j] − p X[j,j])`,
//! `X = W Wᴴ` and `Y = W_FD Wᴴ`. The unit-modulus minimizer is therefore
//! `p = z / |z|`.

use log::warn;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::log_det_gain;
use crate::numerics::{frobenius_sq, hermitian_eig, solve_hpd, ComplexMatrix};

/// Unit-modulus tolerance on analog precoder entries.
pub const UNIT_MODULUS_TOL: f64 = 1e-12;

/// Eigenvalues of `PᴴP` below this fraction of the largest are treated as
/// zero by the least-squares digital update.
const GRAM_RANK_TOL: f64 = 1e-10;

/// Fraction of the array whose phases must differ before two matched-phase
/// columns count as distinct.
const COLUMN_COHERENCE_LIMIT: f64 = 1.0 - 1e-6;

/// Analog precoder `P` (`M × M_R`, unit-modulus) and digital precoder `W`
/// (`M_R × K`).
#[derive(Debug, Clone, PartialEq)]
pub struct HybridBeamformer {
    pub p: ComplexMatrix,
    pub w: ComplexMatrix,
}

impl HybridBeamformer {
    /// `P W`.
    pub fn effective(&self) -> ComplexMatrix {
        &self.p * &self.w
    }

    pub fn is_unit_modulus(&self) -> bool {
        is_unit_modulus(&self.p)
    }
}

pub fn is_unit_modulus(p: &ComplexMatrix) -> bool {
    p.iter().all(|z| (z.norm() - 1.0).abs() <= UNIT_MODULUS_TOL)
}

/// `argmax_{|p| = 1} Re(c · p) = conj(c) / |c|`, or `None` when `c = 0`.
pub fn unit_modulus_maximizer(c: Complex64) -> Option<Complex64> {
    let r = c.norm();
    if r > 0.0 && r.is_finite() {
        Some(c.conj() / r)
    } else {
        None
    }
}

/// Least-squares digital precoder `(PᴴP)⁻¹ Pᴴ W_FD`.
///
/// When `PᴴP` is numerically singular the minimum-norm solution is returned
/// instead (eigen directions below `1e-10` of the largest are dropped) and a
/// warning is logged.
pub fn ls_digital(p: &ComplexMatrix, w_fd: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (w, rank_deficient) = least_squares(p, w_fd)?;
    if rank_deficient {
        warn!("P^H P is rank deficient; using the minimum-norm least-squares solution");
    }
    Ok(w)
}

fn least_squares(p: &ComplexMatrix, w_fd: &ComplexMatrix) -> Result<(ComplexMatrix, bool)> {
    if p.nrows() != w_fd.nrows() {
        return Err(Error::Dimension {
            op: "ls_digital",
            detail: format!("P has {} rows but W_FD has {}", p.nrows(), w_fd.nrows()),
        });
    }
    let gram = p.adjoint() * p;
    let rhs = p.adjoint() * w_fd;
    let eig = hermitian_eig(&gram)?;
    let largest = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = GRAM_RANK_TOL * largest;
    if eig.eigenvalues.iter().all(|&l| l > cutoff) {
        return Ok((solve_hpd(&gram, &rhs)?, false));
    }
    let q = &eig.eigenvectors;
    let mut projected = q.adjoint() * rhs;
    for (mut row, &l) in projected.row_iter_mut().zip(eig.eigenvalues.iter()) {
        let inv = if l > cutoff { l.recip() } else { 0.0 };
        row *= Complex64::new(inv, 0.0);
    }
    Ok((q * projected, true))
}

/// Coefficient `z` of the single-entry subproblem at `(i, j)`.
///
/// `px` must equal `P X` for the current `P`.
fn phase_coefficient(
    p: &ComplexMatrix,
    px: &ComplexMatrix,
    x: &ComplexMatrix,
    y: &ComplexMatrix,
    i: usize,
    j: usize,
) -> Complex64 {
    y[(i, j)] - (px[(i, j)] - p[(i, j)] * x[(j, j)])
}

/// Exact minimizer of the residual over entry `(i, j)` of `P` with all other
/// entries fixed. `X = W Wᴴ`, `Y = W_FD Wᴴ`. When the coordinate objective is
/// constant the current entry is kept.
pub fn phase_coordinate_update(
    p: &ComplexMatrix,
    index: (usize, usize),
    x: &ComplexMatrix,
    y: &ComplexMatrix,
) -> Result<Complex64> {
    let (i, j) = index;
    let (m, m_r) = p.shape();
    if i >= m || j >= m_r {
        return Err(Error::Argument(format!("entry ({i}, {j}) outside a {m}x{m_r} precoder")));
    }
    if x.shape() != (m_r, m_r) || y.shape() != (m, m_r) {
        return Err(Error::Dimension {
            op: "phase_coordinate_update",
            detail: format!(
                "expected X {m_r}x{m_r} and Y {m}x{m_r}, got {:?} and {:?}",
                x.shape(),
                y.shape()
            ),
        });
    }
    // only row i of P X is needed
    let px_ij: Complex64 = (0..m_r).map(|c| p[(i, c)] * x[(c, j)]).sum();
    let z = y[(i, j)] - (px_ij - p[(i, j)] * x[(j, j)]);
    Ok(unit_modulus_maximizer(z.conj()).unwrap_or(p[(i, j)]))
}

/// Scales `W` down so that `‖P W‖_F² ≤ p_max`; returns `W` unchanged when
/// already feasible.
pub fn power_rescale(p: &ComplexMatrix, w: &ComplexMatrix, p_max: f64) -> ComplexMatrix {
    let power = frobenius_sq(&(p * w));
    if power <= p_max {
        w.clone()
    } else {
        w * Complex64::new((p_max / power).sqrt(), 0.0)
    }
}

/// Analog initialization from the phases of the fully-digital beamformer.
///
/// Column `j < K` takes the phases of column `j` of `W_FD`; the remaining
/// `M_R − K` columns get uniformly random phases so that `PᴴP` stays
/// invertible. Zero entries of `W_FD` also get a random phase, and so does
/// any matched column whose phase pattern repeats an earlier column's up to
/// a constant (as happens when `W_FD` has rank one).
pub fn matched_phase_init(w_fd: &ComplexMatrix, m_r: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let k = w_fd.ncols();
    let m = w_fd.nrows();
    let mut p = raw_matched_phases(w_fd, m_r, rng);
    for j in 1..k.min(m_r) {
        let repeats = (0..j).any(|l| {
            let overlap = p.column(l).dotc(&p.column(j)).norm();
            overlap > COLUMN_COHERENCE_LIMIT * m as f64
        });
        if repeats {
            let fresh = random_phase_matrix(m, 1, rng);
            p.set_column(j, &fresh.column(0));
        }
    }
    p
}

fn raw_matched_phases(w_fd: &ComplexMatrix, m_r: usize, rng: &mut impl Rng) -> ComplexMatrix {
    let k = w_fd.ncols();
    ComplexMatrix::from_fn(w_fd.nrows(), m_r, |i, j| {
        let random = Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU));
        if j < k {
            let z = w_fd[(i, j)];
            let r = z.norm();
            if r > 0.0 {
                z / r
            } else {
                random
            }
        } else {
            random
        }
    })
}

/// Uniformly random unit-modulus matrix.
pub fn random_phase_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU))
    })
}

/// How the alternating loop decides it has converged.
#[derive(Debug, Clone, Copy)]
pub enum AoStop<'a> {
    /// `|ΔD_E| ≤ eps2 · ‖W_FD‖_F²`.
    Residual,
    /// `|ΔC_s| ≤ eps2` bits/s/Hz with `C_s` evaluated on `P W`; the channels
    /// are noise-normalized.
    Secrecy {
        h_u: &'a ComplexMatrix,
        h_e: &'a ComplexMatrix,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct AoSettings {
    pub eps2: f64,
    pub max_iterations: usize,
    /// Watts; applied by [`power_rescale`] to the final design.
    pub p_max: f64,
}

/// One AO iteration: the state after the digital update that closes it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AoTracePoint {
    pub iteration: usize,
    /// `‖W_FD − P W‖_F²`.
    pub residual: f64,
    /// Secrecy capacity of `P W` in bits/s/Hz; `NaN` in residual mode.
    pub c_s: f64,
    /// `C_U − C_E` of `P W` before clipping at zero; `NaN` in residual mode.
    pub rate_gap: f64,
}

#[derive(Debug, Clone)]
pub struct HybridResult {
    /// Final design after [`power_rescale`].
    pub beamformer: HybridBeamformer,
    pub trace: Vec<AoTracePoint>,
    pub converged: bool,
    /// Factor applied to `W` by the final rescale (1 when already feasible).
    pub rescale_factor: f64,
}

impl HybridResult {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }

    pub fn residual(&self) -> f64 {
        self.trace.last().map_or(f64::NAN, |t| t.residual)
    }
}

/// Which block a single AO update changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    Digital,
    Phase { i: usize, j: usize },
}

/// Snapshot handed to an [`ao_project_observed`] observer after every update.
pub struct UpdateRecord<'a> {
    pub kind: UpdateKind,
    /// Analog precoder before the update.
    pub p_before: &'a ComplexMatrix,
    /// Digital precoder in force during the update (after it, for
    /// [`UpdateKind::Digital`]).
    pub w: &'a ComplexMatrix,
    /// New entry value, for phase updates.
    pub new_entry: Option<Complex64>,
    pub residual_before: f64,
    pub residual_after: f64,
}

/// Alternating projection onto the hybrid set.
pub fn ao_project(
    w_fd: &ComplexMatrix,
    initial_p: &ComplexMatrix,
    settings: &AoSettings,
    stop: AoStop<'_>,
) -> Result<HybridResult> {
    run_ao(w_fd, initial_p, settings, stop, None)
}

/// [`ao_project`] that reports every individual update to `observer`.
pub fn ao_project_observed(
    w_fd: &ComplexMatrix,
    initial_p: &ComplexMatrix,
    settings: &AoSettings,
    stop: AoStop<'_>,
    observer: &mut dyn FnMut(&UpdateRecord<'_>),
) -> Result<HybridResult> {
    run_ao(w_fd, initial_p, settings, stop, Some(observer))
}

/// Unclipped `C_U − C_E` in bits/s/Hz, or `NaN` in residual mode.
fn rate_gap_bits(stop: &AoStop<'_>, w_eff: &ComplexMatrix) -> Result<f64> {
    match stop {
        AoStop::Residual => Ok(f64::NAN),
        AoStop::Secrecy { h_u, h_e } => {
            let gap = log_det_gain(h_u, w_eff)? - log_det_gain(h_e, w_eff)?;
            Ok(gap / std::f64::consts::LN_2)
        }
    }
}

fn run_ao(
    w_fd: &ComplexMatrix,
    initial_p: &ComplexMatrix,
    settings: &AoSettings,
    stop: AoStop<'_>,
    mut observer: Option<&mut dyn FnMut(&UpdateRecord<'_>)>,
) -> Result<HybridResult> {
    let (m, m_r) = initial_p.shape();
    let k = w_fd.ncols();
    if w_fd.nrows() != m {
        return Err(Error::Dimension {
            op: "ao_project",
            detail: format!("initial P has {m} rows but W_FD has {}", w_fd.nrows()),
        });
    }
    if k > m_r || m_r > m {
        return Err(Error::Argument(format!("need K <= M_R <= M, got K={k}, M_R={m_r}, M={m}")));
    }
    if !is_unit_modulus(initial_p) {
        return Err(Error::Argument("initial analog precoder is not unit-modulus".into()));
    }
    if let AoStop::Secrecy { h_u, h_e } = &stop {
        if h_u.ncols() != m || h_e.ncols() != m {
            return Err(Error::Dimension {
                op: "ao_project",
                detail: "channel width does not match the array size".into(),
            });
        }
    }
    let scale = frobenius_sq(w_fd);
    let mut p = initial_p.clone();

    let mut rank_deficient_solves = 0usize;
    let mut digital_update = |p: &ComplexMatrix,
                              previous_w: Option<&ComplexMatrix>,
                              observer: &mut Option<&mut dyn FnMut(&UpdateRecord<'_>)>|
     -> Result<ComplexMatrix> {
        let (w, rank_deficient) = least_squares(p, w_fd)?;
        rank_deficient_solves += rank_deficient as usize;
        if let Some(obs) = observer.as_deref_mut() {
            let before = previous_w.map_or(f64::NAN, |pw| frobenius_sq(&(w_fd - p * pw)));
            obs(&UpdateRecord {
                kind: UpdateKind::Digital,
                p_before: p,
                w: &w,
                new_entry: None,
                residual_before: before,
                residual_after: frobenius_sq(&(w_fd - p * &w)),
            });
        }
        Ok(w)
    };

    let mut w = digital_update(&p, None, &mut observer)?;
    let gap = rate_gap_bits(&stop, &(&p * &w))?;
    let mut trace = vec![AoTracePoint {
        iteration: 0,
        residual: frobenius_sq(&(w_fd - &p * &w)),
        c_s: gap.max(0.0),
        rate_gap: gap,
    }];
    let mut converged = false;

    for iteration in 1..=settings.max_iterations {
        let x = &w * w.adjoint();
        let y = w_fd * w.adjoint();
        let mut px = &p * &x;
        for i in 0..m {
            for j in 0..m_r {
                let z = phase_coefficient(&p, &px, &x, &y, i, j);
                let old = p[(i, j)];
                let new = unit_modulus_maximizer(z.conj()).unwrap_or(old);
                if let Some(obs) = observer.as_deref_mut() {
                    let before = frobenius_sq(&(w_fd - &p * &w));
                    let snapshot = p.clone();
                    p[(i, j)] = new;
                    let after = frobenius_sq(&(w_fd - &p * &w));
                    obs(&UpdateRecord {
                        kind: UpdateKind::Phase { i, j },
                        p_before: &snapshot,
                        w: &w,
                        new_entry: Some(new),
                        residual_before: before,
                        residual_after: after,
                    });
                } else {
                    p[(i, j)] = new;
                }
                let delta = new - old;
                if delta != Complex64::new(0.0, 0.0) {
                    for c in 0..m_r {
                        px[(i, c)] += delta * x[(j, c)];
                    }
                }
            }
        }
        w = digital_update(&p, Some(&w), &mut observer)?;
        let gap = rate_gap_bits(&stop, &(&p * &w))?;
        let point = AoTracePoint {
            iteration,
            residual: frobenius_sq(&(w_fd - &p * &w)),
            c_s: gap.max(0.0),
            rate_gap: gap,
        };
        let previous = *trace.last().expect("trace starts non-empty");
        trace.push(point);
        let change = match stop {
            AoStop::Residual => (point.residual - previous.residual).abs() <= settings.eps2 * scale,
            AoStop::Secrecy { .. } => (point.rate_gap - previous.rate_gap).abs() <= settings.eps2,
        };
        if change {
            converged = true;
            break;
        }
    }

    if rank_deficient_solves > 0 {
        warn!(
            "P^H P was rank deficient in {rank_deficient_solves} of {} digital updates; \
             used minimum-norm least squares",
            trace.len()
        );
    }
    let unscaled = w.clone();
    let w = power_rescale(&p, &w, settings.p_max);
    let rescale_factor = if frobenius_sq(&unscaled) > 0.0 {
        (frobenius_sq(&w) / frobenius_sq(&unscaled)).sqrt()
    } else {
        1.0
    };
    Ok(HybridResult {
        beamformer: HybridBeamformer { p, w },
        trace,
        converged,
        rescale_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::beam_similarity;
    use crate::numerics::testutil::*;
    use proptest::prelude::*;
    use std::f64::consts::TAU;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn residual_settings() -> AoSettings {
        AoSettings { eps2: 1e-12, max_iterations: 200, p_max: f64::INFINITY }
    }

    #[test]
    fn maximizer_trivial_cases() {
        assert_eq!(unit_modulus_maximizer(c(2.0, 0.0)), Some(c(1.0, 0.0)));
        let p = unit_modulus_maximizer(c(0.0, 1.0)).unwrap();
        assert!((p - c(0.0, -1.0)).norm() < 1e-15);
        assert_eq!(unit_modulus_maximizer(c(0.0, 0.0)), None);
    }

    #[test]
    fn ls_exact_representation() {
        let p = ComplexMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(1.0, 0.0)]);
        let w_fd = ComplexMatrix::from_column_slice(2, 1, &[c(0.5, 0.0), c(0.5, 0.0)]);
        let w = ls_digital(&p, &w_fd).unwrap();
        assert!((w[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
        assert!(beam_similarity(&w_fd, &p, &w).unwrap() < 1e-30);
        let zero = ls_digital(&p, &ComplexMatrix::zeros(2, 1)).unwrap();
        assert_eq!(frobenius_sq(&zero), 0.0);
    }

    #[test]
    fn ls_orthogonality_and_perturbations() {
        let mut r = rng(21);
        let p = random_phase_matrix(8, 3, &mut r);
        let w_fd = random_matrix(&mut r, 8, 2);
        let w = ls_digital(&p, &w_fd).unwrap();
        let ortho = p.adjoint() * (&w_fd - &p * &w);
        assert!(frobenius_sq(&ortho).sqrt() < 1e-9);
        let best = beam_similarity(&w_fd, &p, &w).unwrap();
        for _ in 0..100 {
            let perturbed = &w + random_matrix(&mut r, 3, 2) * c(1e-3, 0.0);
            assert!(beam_similarity(&w_fd, &p, &perturbed).unwrap() >= best);
        }
    }

    #[test]
    fn ls_rank_deficient_is_regularized() {
        let p = ComplexMatrix::from_element(4, 2, c(1.0, 0.0));
        let w_fd = ComplexMatrix::from_element(4, 1, c(1.0, 0.0));
        let w = ls_digital(&p, &w_fd).unwrap();
        assert!(beam_similarity(&w_fd, &p, &w).unwrap() < 1e-10);
    }

    #[test]
    fn ls_duplicate_columns_give_minimum_norm_solution() {
        // With P = [a, a, b] the best fit uses a and b; the minimum-norm
        // split puts half the weight of a on each copy.
        let mut r = rng(29);
        let a = random_phase_matrix(8, 1, &mut r);
        let b = random_phase_matrix(8, 1, &mut r);
        let rot = Complex64::from_polar(1.0, 0.7);
        let ac = a.column(0).clone_owned();
        let bc = b.column(0).clone_owned();
        let p = ComplexMatrix::from_columns(&[ac.clone(), &ac * rot, bc.clone()]);
        let w_fd = random_matrix(&mut r, 8, 2);
        let w = ls_digital(&p, &w_fd).unwrap();

        let reduced = ComplexMatrix::from_columns(&[ac, bc]);
        let w_red = ls_digital(&reduced, &w_fd).unwrap();
        for c in 0..2 {
            assert!((w[(0, c)] - w_red[(0, c)] * 0.5).norm() < 1e-9);
            assert!((w[(1, c)] - w_red[(0, c)] * 0.5 * rot.conj()).norm() < 1e-9);
            assert!((w[(2, c)] - w_red[(1, c)]).norm() < 1e-9);
        }
        let gradient = p.adjoint() * (&w_fd - &p * &w);
        assert!(frobenius_sq(&gradient).sqrt() < 1e-9);
    }

    #[test]
    fn ao_stays_monotone_on_rank_one_target() {
        let mut r = rng(30);
        let v = random_matrix(&mut r, 16, 1);
        let mix = random_matrix(&mut r, 1, 2);
        let w_fd = &v * &mix;
        let p0 = matched_phase_init(&w_fd, 4, &mut r);
        let settings = AoSettings {
            eps2: 1e-14,
            max_iterations: 300,
            p_max: 1e9,
        };
        let mut worst = 0.0f64;
        let result = ao_project_observed(&w_fd, &p0, &settings, AoStop::Residual, &mut |u: &UpdateRecord<'_>| {
            if u.residual_before.is_finite() {
                worst = worst.max(u.residual_after - u.residual_before);
            }
        })
        .unwrap();
        assert!(worst <= 1e-12, "residual increased by {worst}");
        assert!(result.residual() <= result.trace[0].residual);
    }

    /// Best of 3600 phases for entry `(i, j)` against the true residual.
    fn grid_best(w_fd: &ComplexMatrix, p: &ComplexMatrix, w: &ComplexMatrix, i: usize, j: usize) -> (f64, f64) {
        let mut probe = p.clone();
        let mut best = (f64::INFINITY, 0.0);
        for s in 0..3600 {
            let theta = TAU * s as f64 / 3600.0;
            probe[(i, j)] = Complex64::from_polar(1.0, theta);
            let v = beam_similarity(w_fd, &probe, w).unwrap();
            if v < best.0 {
                best = (v, theta);
            }
        }
        best
    }

    #[test]
    fn coordinate_update_matches_grid_search() {
        let mut r = rng(22);
        let w_fd = random_matrix(&mut r, 6, 2);
        let p = random_phase_matrix(6, 2, &mut r);
        let w = random_matrix(&mut r, 2, 2);
        let x = &w * w.adjoint();
        let y = &w_fd * w.adjoint();
        for i in 0..6 {
            for j in 0..2 {
                let new = phase_coordinate_update(&p, (i, j), &x, &y).unwrap();
                assert!((new.norm() - 1.0).abs() < 1e-15);
                let mut updated = p.clone();
                updated[(i, j)] = new;
                let value = beam_similarity(&w_fd, &updated, &w).unwrap();
                let (grid_value, grid_theta) = grid_best(&w_fd, &p, &w, i, j);
                assert!(value <= grid_value + 1e-12);
                let diff = (new.arg() - grid_theta).rem_euclid(TAU);
                assert!(diff.min(TAU - diff) <= 1e-3 + 1e-12, "phase off by {diff}");
            }
        }
    }

    #[test]
    fn coordinate_update_keeps_entry_when_flat() {
        let p = ComplexMatrix::from_element(2, 1, c(0.0, 1.0));
        let x = ComplexMatrix::zeros(1, 1);
        let y = ComplexMatrix::zeros(2, 1);
        assert_eq!(phase_coordinate_update(&p, (1, 0), &x, &y).unwrap(), c(0.0, 1.0));
        assert!(phase_coordinate_update(&p, (2, 0), &x, &y).is_err());
    }

    #[test]
    fn rescale_cases() {
        let p = ComplexMatrix::from_element(2, 1, c(1.0, 0.0));
        let w = ComplexMatrix::from_element(1, 1, c(1.0, 0.0));
        // ‖PW‖² = 2
        assert_eq!(power_rescale(&p, &w, 4.0), w);
        let halved = power_rescale(&p, &w, 0.5);
        assert!((halved[(0, 0)] - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn fixed_point_converges_immediately() {
        let mut r = rng(23);
        let p0 = random_phase_matrix(8, 3, &mut r);
        let w0 = random_matrix(&mut r, 3, 2);
        let w_fd = &p0 * &w0;
        let out = ao_project(&w_fd, &p0, &residual_settings(), AoStop::Residual).unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations(), 1);
        assert!(out.residual() < 1e-20);
    }

    #[test]
    fn rank_one_beats_phase_only_projection() {
        let mut r = rng(24);
        let w_fd = random_matrix(&mut r, 10, 1);
        let abs_sum: f64 = w_fd.iter().map(|z| z.norm()).sum();
        let phase_only = frobenius_sq(&w_fd) - abs_sum * abs_sum / 10.0;
        let p0 = matched_phase_init(&w_fd, 1, &mut r);
        let out = ao_project(&w_fd, &p0, &residual_settings(), AoStop::Residual).unwrap();
        assert!(out.residual() <= phase_only + 1e-12);
        assert!(out.beamformer.is_unit_modulus());
    }

    #[test]
    fn residual_never_increases_across_updates() {
        let mut r = rng(25);
        let w_fd = random_matrix(&mut r, 8, 2);
        let p0 = random_phase_matrix(8, 4, &mut r);
        let mut worst: f64 = 0.0;
        let mut count = 0;
        ao_project_observed(&w_fd, &p0, &AoSettings { max_iterations: 20, ..residual_settings() }, AoStop::Residual, &mut |rec| {
            if rec.residual_before.is_finite() {
                worst = worst.max(rec.residual_after - rec.residual_before);
            }
            count += 1;
        })
        .unwrap();
        assert!(count > 32);
        assert!(worst <= 1e-12, "residual increased by {worst}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut r = rng(26);
        let w_fd = random_matrix(&mut r, 4, 2);
        let bad = ComplexMatrix::from_element(4, 2, c(0.5, 0.0));
        assert!(ao_project(&w_fd, &bad, &residual_settings(), AoStop::Residual).is_err());
        let narrow = random_phase_matrix(4, 1, &mut r);
        assert!(ao_project(&w_fd, &narrow, &residual_settings(), AoStop::Residual).is_err());
    }

    #[test]
    fn matched_init_is_unit_modulus_and_full_rank() {
        let mut r = rng(27);
        let mut w_fd = random_matrix(&mut r, 16, 2);
        w_fd[(3, 0)] = c(0.0, 0.0);
        let p = matched_phase_init(&w_fd, 4, &mut r);
        assert!(is_unit_modulus(&p));
        assert!(crate::numerics::logdet_hpd(&(p.adjoint() * &p)).is_ok());
        for i in 0..16 {
            if i != 3 {
                assert!((p[(i, 1)].arg() - w_fd[(i, 1)].arg()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matched_init_replaces_repeated_phase_patterns() {
        let mut r = rng(28);
        let v = random_matrix(&mut r, 16, 1);
        let w_fd = &v * ComplexMatrix::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, -2.0)]);
        let p = matched_phase_init(&w_fd, 4, &mut r);
        assert!(is_unit_modulus(&p));
        for i in 0..16 {
            assert!((p[(i, 0)] - v[(i, 0)] / v[(i, 0)].norm()).norm() < 1e-12);
        }
        let eig = hermitian_eig(&(p.adjoint() * &p)).unwrap();
        assert!(eig.eigenvalues[0] > 1e-3 * eig.eigenvalues[3], "{:?}", eig.eigenvalues);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ao_preserves_unit_modulus_and_power(seed in any::<u64>(), m_r in 2usize..5) {
            let mut r = rng(seed);
            let w_fd = random_matrix(&mut r, 8, 2);
            let p0 = random_phase_matrix(8, m_r, &mut r);
            let p_max = 0.5 * frobenius_sq(&w_fd);
            let out = ao_project(&w_fd, &p0, &AoSettings { eps2: 1e-9, max_iterations: 50, p_max }, AoStop::Residual).unwrap();
            prop_assert!(out.beamformer.is_unit_modulus());
            prop_assert!(frobenius_sq(&out.beamformer.effective()) <= p_max * (1.0 + 1e-9));
            for pair in out.trace.windows(2) {
                prop_assert!(pair[1].residual <= pair[0].residual + 1e-12);
            }
        }
    }
}
