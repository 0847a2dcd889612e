//! Fully-digital secrecy-rate maximization.
//!
//! The secrecy rate `ln det(I + H̃_u W Wᴴ H̃_uᴴ) − ln det(I + H̃_e W Wᴴ H̃_eᴴ)`
//! is replaced by a surrogate with auxiliary matrices `U`, `V_u`, `V_e` that
//! is tight when the auxiliaries are at their closed-form optima. Block
//! coordinate descent then cycles through
//!
//! 1. `U   = (I + H̃_u W Wᴴ H̃_uᴴ)⁻¹ H̃_u W`
//! 2. `V_u = F_U(U, W)⁻¹`, `V_e = (I + H̃_e W Wᴴ H̃_eᴴ)⁻¹`
//! 3. `W   = (A + μI)⁻¹ B` with `A = H̃_uᴴ U V_u Uᴴ H̃_u + H̃_eᴴ V_e H̃_e`,
//!    `B = H̃_uᴴ U V_u` and `μ ≥ 0` the smallest multiplier meeting the
//!    power budget, found by bisection on the eigenbasis of `A`.
//!
//! Every block update maximizes the surrogate, so the secrecy rate of the
//! iterates is non-decreasing. All channel arguments are noise-normalized
//! (`H / σ`) and all surrogate values are in nats.

use std::f64::consts::LN_2;

use log::warn;
use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::log_det_gain;
use crate::numerics::{
    frobenius_sq, hermitian_eig, hermitian_part, identity, inverse_hpd, logdet_hpd, solve_hpd,
    ComplexMatrix,
};

/// Diagonal loading applied when `F_U` is numerically singular.
pub const MSE_MATRIX_LOADING: f64 = 1e-12;

/// Eigenvalues of `A` below this fraction of the largest are treated as
/// exact zeros (null space of `A`).
const NULL_EIGEN_FRACTION: f64 = 1e-12;

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn check_channels(h_u: &ComplexMatrix, h_e: &ComplexMatrix, w: &ComplexMatrix) -> Result<()> {
    if h_u.ncols() != w.nrows() || h_e.ncols() != w.nrows() {
        return Err(Error::Dimension {
            op: "stage1",
            detail: format!(
                "channels have {} and {} columns but W has {} rows",
                h_u.ncols(),
                h_e.ncols(),
                w.nrows()
            ),
        });
    }
    Ok(())
}

/// Auxiliary matrices of the surrogate.
#[derive(Debug, Clone)]
pub struct AuxVariables {
    /// `M_U × K`.
    pub u: ComplexMatrix,
    /// `K × K`, Hermitian positive definite.
    pub v_u: ComplexMatrix,
    /// `M_E × M_E`, Hermitian positive definite.
    pub v_e: ComplexMatrix,
}

/// `F_U(U, W) = (I − Uᴴ H̃_u W)(I − Uᴴ H̃_u W)ᴴ + Uᴴ U`.
pub fn mse_matrix(h_u: &ComplexMatrix, u: &ComplexMatrix, w: &ComplexMatrix) -> ComplexMatrix {
    let k = w.ncols();
    let e = identity(k) - u.adjoint() * h_u * w;
    hermitian_part(&(&e * e.adjoint() + u.adjoint() * u))
}

/// `I + H̃ W Wᴴ H̃ᴴ`.
fn gain_matrix(h: &ComplexMatrix, w: &ComplexMatrix) -> ComplexMatrix {
    let g = h * w;
    identity(g.nrows()) + &g * g.adjoint()
}

/// Surrogate objective in nats:
/// `ln det V_u − Tr(V_u F_U) + K + ln det V_e − Tr(V_e (I + H̃_e W Wᴴ H̃_eᴴ)) + M_E`.
pub fn surrogate_objective(
    w: &ComplexMatrix,
    aux: &AuxVariables,
    h_u: &ComplexMatrix,
    h_e: &ComplexMatrix,
) -> Result<f64> {
    check_channels(h_u, h_e, w)?;
    let k = w.ncols() as f64;
    let m_e = h_e.nrows() as f64;
    let f_u = mse_matrix(h_u, &aux.u, w);
    let user = logdet_hpd(&aux.v_u)? - (&aux.v_u * f_u).trace().re + k;
    let eve = logdet_hpd(&aux.v_e)? - (&aux.v_e * gain_matrix(h_e, w)).trace().re + m_e;
    Ok(user + eve)
}

/// Secrecy rate `ln det(I + H̃_u W Wᴴ H̃_uᴴ) − ln det(I + H̃_e W Wᴴ H̃_eᴴ)` in nats,
/// without clipping at zero.
pub fn secrecy_rate_nats(h_u: &ComplexMatrix, h_e: &ComplexMatrix, w: &ComplexMatrix) -> Result<f64> {
    check_channels(h_u, h_e, w)?;
    Ok(log_det_gain(h_u, w)? - log_det_gain(h_e, w)?)
}

/// MMSE receiver `U = (I + H̃_u W Wᴴ H̃_uᴴ)⁻¹ H̃_u W`.
pub fn update_u(h_u: &ComplexMatrix, w: &ComplexMatrix) -> Result<ComplexMatrix> {
    if h_u.ncols() != w.nrows() {
        return Err(Error::Dimension {
            op: "update_u",
            detail: format!("H is {}x{} but W is {}x{}", h_u.nrows(), h_u.ncols(), w.nrows(), w.ncols()),
        });
    }
    solve_hpd(&gain_matrix(h_u, w), &(h_u * w))
}

/// `V_u = F_U⁻¹`, `V_e = (I + H̃_e W Wᴴ H̃_eᴴ)⁻¹`.
pub fn update_v(
    h_u: &ComplexMatrix,
    h_e: &ComplexMatrix,
    u: &ComplexMatrix,
    w: &ComplexMatrix,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    check_channels(h_u, h_e, w)?;
    let f_u = mse_matrix(h_u, u, w);
    let v_u = match inverse_hpd(&f_u) {
        Ok(v) => v,
        Err(Error::Domain { .. }) => {
            warn!("F_U is numerically singular; loading its diagonal by {MSE_MATRIX_LOADING:e}");
            inverse_hpd(&(f_u + identity(w.ncols()) * real(MSE_MATRIX_LOADING)))?
        }
        Err(e) => return Err(e),
    };
    let v_e = inverse_hpd(&gain_matrix(h_e, w))?;
    Ok((v_u, v_e))
}

/// Both auxiliary blocks at their optimum for the given beamformer.
pub fn optimal_aux(h_u: &ComplexMatrix, h_e: &ComplexMatrix, w: &ComplexMatrix) -> Result<AuxVariables> {
    let u = update_u(h_u, w)?;
    let (v_u, v_e) = update_v(h_u, h_e, &u, w)?;
    Ok(AuxVariables { u, v_u, v_e })
}

/// Quadratic and linear terms of the beamformer subproblem:
/// minimize `Tr(Wᴴ A W) − 2 Re Tr(Bᴴ W)` subject to `‖W‖_F² ≤ P_max`.
#[derive(Debug, Clone)]
pub struct BeamformerSubproblem {
    pub a: ComplexMatrix,
    pub b: ComplexMatrix,
}

impl BeamformerSubproblem {
    pub fn new(h_u: &ComplexMatrix, h_e: &ComplexMatrix, aux: &AuxVariables) -> Self {
        let hu_u = h_u.adjoint() * &aux.u;
        let b = &hu_u * &aux.v_u;
        let a = hermitian_part(&(&b * hu_u.adjoint() + h_e.adjoint() * &aux.v_e * h_e));
        Self { a, b }
    }

    /// Objective value, up to the constant dropped from the surrogate.
    pub fn objective(&self, w: &ComplexMatrix) -> f64 {
        (w.adjoint() * &self.a * w).trace().re - 2.0 * (self.b.adjoint() * w).trace().re
    }

    /// Gradient of the Lagrangian with respect to `W*`: `(A + μI) W − B`.
    pub fn lagrangian_gradient(&self, w: &ComplexMatrix, mu: f64) -> ComplexMatrix {
        &self.a * w + w * real(mu) - &self.b
    }
}

/// Result of the dual (multiplier) update.
#[derive(Debug, Clone)]
pub struct DualUpdate {
    pub w: ComplexMatrix,
    pub mu: f64,
    /// `Tr(W Wᴴ)`.
    pub power: f64,
    pub bisection_steps: usize,
}

/// `W(μ) = E (D + μI)⁻¹ Eᴴ B` evaluated in the eigenbasis of `A`.
struct SecularEquation {
    vectors: ComplexMatrix,
    eigenvalues: Vec<f64>,
    /// `Eᴴ B` with the rows in the null space of `A` zeroed.
    projected: ComplexMatrix,
    /// Squared row norms of `projected`.
    weights: Vec<f64>,
}

impl SecularEquation {
    fn new(sub: &BeamformerSubproblem) -> Result<Self> {
        let eig = hermitian_eig(&sub.a)?;
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let floor = NULL_EIGEN_FRACTION * top;
        let mut projected = eig.eigenvectors.adjoint() * &sub.b;
        let eigenvalues: Vec<f64> = eig.eigenvalues.iter().map(|&d| d.max(0.0)).collect();
        let mut weights = Vec::with_capacity(eigenvalues.len());
        for (i, &d) in eigenvalues.iter().enumerate() {
            if d <= floor {
                projected.row_mut(i).fill(Complex64::new(0.0, 0.0));
            }
            weights.push(projected.row(i).iter().map(|z| z.norm_sqr()).sum());
        }
        Ok(Self {
            vectors: eig.eigenvectors,
            eigenvalues,
            projected,
            weights,
        })
    }

    fn power(&self, mu: f64) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.weights)
            .filter(|(_, &c)| c > 0.0)
            .map(|(&d, &c)| c / ((d + mu) * (d + mu)))
            .sum()
    }

    fn beamformer(&self, mu: f64) -> ComplexMatrix {
        let scale = DVector::from_iterator(
            self.eigenvalues.len(),
            self.eigenvalues.iter().zip(&self.weights).map(|(&d, &c)| {
                if c > 0.0 {
                    real((d + mu).recip())
                } else {
                    real(0.0)
                }
            }),
        );
        let mut scaled = self.projected.clone();
        for (i, mut row) in scaled.row_iter_mut().enumerate() {
            row *= scale[i];
        }
        &self.vectors * scaled
    }
}

/// Optimal beamformer of the convex subproblem for fixed auxiliaries.
///
/// The multiplier is found by bisection on `[0, ‖B‖_F / √P_max]`; the upper
/// end is always feasible because `‖(A + μI)⁻¹B‖_F ≤ ‖B‖_F / μ`. Power is
/// strictly decreasing in `μ`, so a feasible midpoint moves the upper end
/// and an infeasible one the lower end. The search stops once the feasible
/// end is within `eps3 · P_max` of the budget, and the returned beamformer
/// is always the feasible end. When `A` is singular and the budget is slack
/// at `μ = 0`, the minimum-norm (pseudo-inverse) solution is returned.
pub fn update_w_fd(
    h_u: &ComplexMatrix,
    h_e: &ComplexMatrix,
    aux: &AuxVariables,
    p_max: f64,
    eps3: f64,
    max_bisection: usize,
) -> Result<DualUpdate> {
    if !(p_max > 0.0) {
        return Err(Error::Argument(format!("power budget must be positive, got {p_max}")));
    }
    if h_u.nrows() != aux.u.nrows() || h_e.nrows() != aux.v_e.nrows() {
        return Err(Error::Dimension {
            op: "update_w_fd",
            detail: "auxiliary variables do not match the channel dimensions".into(),
        });
    }
    let sub = BeamformerSubproblem::new(h_u, h_e, aux);
    solve_power_constrained(&sub, p_max, eps3, max_bisection)
}

/// Bisection core of [`update_w_fd`], exposed for direct testing on
/// arbitrary `(A, B)` pairs.
pub fn solve_power_constrained(
    sub: &BeamformerSubproblem,
    p_max: f64,
    eps3: f64,
    max_bisection: usize,
) -> Result<DualUpdate> {
    let secular = SecularEquation::new(sub)?;
    let unconstrained = secular.power(0.0);
    if unconstrained <= p_max {
        return Ok(DualUpdate {
            w: secular.beamformer(0.0),
            mu: 0.0,
            power: unconstrained,
            bisection_steps: 0,
        });
    }

    let tolerance = eps3 * p_max;
    let mut lower = 0.0;
    let mut upper = frobenius_sq(&sub.b).sqrt() / p_max.sqrt();
    let mut upper_power = secular.power(upper);
    if upper_power > p_max {
        return Err(Error::Numerical {
            op: "update_w_fd",
            detail: format!("bisection bracket is not feasible (power {upper_power:e} at mu {upper:e})"),
        });
    }
    let mut steps = 0;
    while p_max - upper_power > tolerance && steps < max_bisection {
        steps += 1;
        let mid = 0.5 * (lower + upper);
        if mid <= lower || mid >= upper {
            break;
        }
        let power = secular.power(mid);
        if power <= p_max {
            upper = mid;
            upper_power = power;
        } else {
            lower = mid;
        }
    }
    let w = secular.beamformer(upper);
    Ok(DualUpdate {
        power: frobenius_sq(&w),
        w,
        mu: upper,
        bisection_steps: steps,
    })
}

/// Settings for the outer BCD loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcdSettings {
    /// Watts.
    pub p_max: f64,
    /// Stop once the secrecy rate changes by at most this many bits/s/Hz.
    pub eps1: f64,
    /// Bisection tolerance, relative to `p_max`.
    pub eps3: f64,
    pub max_iterations: usize,
    pub max_bisection: usize,
}

impl Default for BcdSettings {
    fn default() -> Self {
        Self {
            p_max: 1e-4,
            eps1: 1e-4,
            eps3: 1e-6,
            max_iterations: 500,
            max_bisection: 200,
        }
    }
}

/// One row of the BCD convergence trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BcdTracePoint {
    pub iteration: usize,
    /// Bits/s/Hz.
    pub c_u: f64,
    pub c_e: f64,
    /// `max(c_u - c_e, 0)`.
    pub c_s: f64,
    /// Surrogate after the beamformer update, in nats.
    pub surrogate: f64,
    pub mu: f64,
    /// Watts.
    pub power: f64,
}

impl BcdTracePoint {
    /// Secrecy rate before clipping.
    pub fn rate_gap(&self) -> f64 {
        self.c_u - self.c_e
    }
}

/// Final state of the fully-digital design.
#[derive(Debug, Clone)]
pub struct FdState {
    /// `M × K`.
    pub w_fd: ComplexMatrix,
    pub aux: AuxVariables,
    pub surrogate: f64,
    /// Bits/s/Hz, clipped at zero.
    pub c_s: f64,
    pub mu: f64,
    /// Entry 0 describes the initial point.
    pub trace: Vec<BcdTracePoint>,
    pub bisection_steps: Vec<usize>,
    pub converged: bool,
}

impl FdState {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

/// Complex Gaussian `M × K` matrix rescaled to `‖W‖_F² = p_max`.
pub fn random_initial_beamformer(rng: &mut impl Rng, m: usize, k: usize, p_max: f64) -> ComplexMatrix {
    let w = ComplexMatrix::from_fn(m, k, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    });
    let norm = frobenius_sq(&w).sqrt();
    w * real(p_max.sqrt() / norm)
}

fn trace_point(
    iteration: usize,
    h_u: &ComplexMatrix,
    h_e: &ComplexMatrix,
    w: &ComplexMatrix,
    surrogate: f64,
    mu: f64,
) -> Result<BcdTracePoint> {
    let c_u = log_det_gain(h_u, w)? / LN_2;
    let c_e = log_det_gain(h_e, w)? / LN_2;
    Ok(BcdTracePoint {
        iteration,
        c_u,
        c_e,
        c_s: (c_u - c_e).max(0.0),
        surrogate,
        mu,
        power: frobenius_sq(w),
    })
}

/// Block coordinate descent on the surrogate, starting from `w_init`.
///
/// Stops when the unclipped secrecy rate moves by at most `eps1`, or after
/// `max_iterations` outer iterations with `converged = false`.
pub fn bcd_optimize(
    h_u: &ComplexMatrix,
    h_e: &ComplexMatrix,
    w_init: &ComplexMatrix,
    settings: &BcdSettings,
) -> Result<FdState> {
    check_channels(h_u, h_e, w_init)?;
    if frobenius_sq(w_init) > settings.p_max * (1.0 + 1e-9) {
        return Err(Error::Argument("initial beamformer exceeds the power budget".into()));
    }
    let mut w = w_init.clone();
    let mut aux = optimal_aux(h_u, h_e, &w)?;
    let mut surrogate = surrogate_objective(&w, &aux, h_u, h_e)?;
    let mut mu = f64::NAN;
    let mut trace = vec![trace_point(0, h_u, h_e, &w, surrogate, mu)?];
    let mut bisection_steps = Vec::new();
    let mut converged = false;

    for iteration in 1..=settings.max_iterations {
        if iteration > 1 {
            aux = optimal_aux(h_u, h_e, &w)?;
        }
        let dual = update_w_fd(h_u, h_e, &aux, settings.p_max, settings.eps3, settings.max_bisection)?;
        w = dual.w;
        mu = dual.mu;
        bisection_steps.push(dual.bisection_steps);
        surrogate = surrogate_objective(&w, &aux, h_u, h_e)?;
        let point = trace_point(iteration, h_u, h_e, &w, surrogate, mu)?;
        let previous = trace.last().expect("trace starts non-empty").rate_gap();
        trace.push(point);
        if (point.rate_gap() - previous).abs() <= settings.eps1 {
            converged = true;
            break;
        }
    }
    let last = *trace.last().expect("trace starts non-empty");
    Ok(FdState {
        w_fd: w,
        aux,
        surrogate,
        c_s: last.c_s,
        mu,
        trace,
        bisection_steps,
        converged,
    })
}
