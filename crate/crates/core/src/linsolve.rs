//! Matrix-free preconditioned conjugate gradient on zero-mean field pairs.
//!
//! Every time step reduces to one symmetric positive definite solve for the
//! mean-shifted pair `(phi, rho)`. The preconditioner is the
//! constant-coefficient part of the step operator, which is diagonal per
//! Fourier mode and decoupled per field, so applying its inverse costs one
//! pair of transforms.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::schemes::FrozenCoeffs;
use crate::spectral::{self, ScalarField};
use std::time::Instant;

/// Stopping and iteration-limit configuration for one solve.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Relative tolerance on the unpreconditioned residual norm.
    pub rel_tol: f64,
    /// Absolute fallback tolerance.
    pub abs_tol: f64,
    pub max_iter: usize,
    pub precondition: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { rel_tol: 1e-10, abs_tol: 1e-14, max_iter: 1000, precondition: true }
    }
}

impl SolverConfig {
    pub fn validated(self) -> Result<SolverConfig> {
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return Err(Error::InvalidParams("solver tolerances must be positive".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidParams("max_iter must be positive".into()));
        }
        Ok(self)
    }
}

/// Outcome of one Krylov solve.
#[derive(Debug, Clone)]
pub struct SolveStats {
    pub iterations: usize,
    /// Final residual relative to the right-hand side, unpreconditioned norm.
    pub final_residual: f64,
    pub converged: bool,
    /// Wall time of the solve in seconds.
    pub wall_seconds: f64,
    /// Preconditioned residual norm sqrt(r'z) per iteration, starting at entry.
    pub residual_history: Vec<f64>,
}

/// A (phi, rho) pair treated as one solver vector.
#[derive(Debug, Clone)]
pub struct FieldPair {
    pub phi: ScalarField,
    pub rho: ScalarField,
}

impl FieldPair {
    pub fn new(phi: ScalarField, rho: ScalarField) -> FieldPair {
        debug_assert_eq!(phi.grid().total(), rho.grid().total());
        FieldPair { phi, rho }
    }

    pub fn zeros_like(other: &FieldPair) -> FieldPair {
        FieldPair {
            phi: ScalarField::zeros(other.phi.grid()),
            rho: ScalarField::zeros(other.rho.grid()),
        }
    }

    /// Combined L2 inner product over both fields.
    pub fn inner(&self, other: &FieldPair) -> f64 {
        spectral::inner(&self.phi, &other.phi) + spectral::inner(&self.rho, &other.rho)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    fn axpy(&mut self, alpha: f64, other: &FieldPair) {
        for (a, b) in self.phi.values_mut().iter_mut().zip(other.phi.values()) {
            *a += alpha * b;
        }
        for (a, b) in self.rho.values_mut().iter_mut().zip(other.rho.values()) {
            *a += alpha * b;
        }
    }

    fn project_zero_mean(&mut self) {
        let mp = spectral::mean(&self.phi);
        for v in self.phi.values_mut() {
            *v -= mp;
        }
        let mr = spectral::mean(&self.rho);
        for v in self.rho.values_mut() {
            *v -= mr;
        }
    }
}

/// Preconditioned conjugate gradient for an SPD operator on zero-mean pairs.
///
/// The stopping test uses the unpreconditioned residual:
/// `||b - A x|| <= max(rel_tol * ||b||, abs_tol)`. Iterates are re-projected
/// to zero mean every iteration so round-off cannot seed the zero mode.
/// Negative curvature (`p' A p <= 0`) aborts with an explicit error instead
/// of silently returning garbage.
pub fn pcg(
    apply: impl Fn(&FieldPair) -> Result<FieldPair>,
    rhs: &FieldPair,
    precond: impl Fn(&FieldPair) -> FieldPair,
    x0: Option<&FieldPair>,
    cfg: &SolverConfig,
) -> Result<(FieldPair, SolveStats)> {
    let start = Instant::now();
    let norm_b = rhs.norm();
    if norm_b <= cfg.abs_tol {
        // rhs is (numerically) zero: the zero pair solves the system.
        let stats = SolveStats {
            iterations: 0,
            final_residual: 0.0,
            converged: true,
            wall_seconds: start.elapsed().as_secs_f64(),
            residual_history: Vec::new(),
        };
        return Ok((FieldPair::zeros_like(rhs), stats));
    }
    let tol = (cfg.rel_tol * norm_b).max(cfg.abs_tol);

    let mut x = match x0 {
        Some(g) => {
            let mut g = g.clone();
            g.project_zero_mean();
            g
        }
        None => FieldPair::zeros_like(rhs),
    };
    let mut r = rhs.clone();
    if x0.is_some() {
        let ax = apply(&x)?;
        r.axpy(-1.0, &ax);
    }

    let mut history = Vec::new();
    let mut z = precond(&r);
    let mut rz = r.inner(&z);
    history.push(rz.max(0.0).sqrt());
    let mut p = z.clone();
    let mut res_norm = r.norm();
    let mut iterations = 0;

    while res_norm > tol {
        if iterations >= cfg.max_iter {
            return Err(Error::SolverDiverged(SolveStats {
                iterations,
                final_residual: res_norm / norm_b,
                converged: false,
                wall_seconds: start.elapsed().as_secs_f64(),
                residual_history: history,
            }));
        }
        let ap = apply(&p)?;
        let pap = p.inner(&ap);
        if pap <= 0.0 {
            return Err(Error::IndefiniteOperator { iteration: iterations, curvature: pap });
        }
        let alpha = rz / pap;
        x.axpy(alpha, &p);
        x.project_zero_mean();
        r.axpy(-alpha, &ap);
        z = precond(&r);
        let rz_next = r.inner(&z);
        history.push(rz_next.max(0.0).sqrt());
        let beta = rz_next / rz;
        rz = rz_next;
        // p = z + beta p
        for (pv, zv) in p.phi.values_mut().iter_mut().zip(z.phi.values()) {
            *pv = zv + beta * *pv;
        }
        for (pv, zv) in p.rho.values_mut().iter_mut().zip(z.rho.values()) {
            *pv = zv + beta * *pv;
        }
        res_norm = r.norm();
        iterations += 1;
    }

    // Report the true residual of the returned iterate, not the recurrence.
    let ax = apply(&x)?;
    let mut true_r = rhs.clone();
    true_r.axpy(-1.0, &ax);
    let final_residual = true_r.norm() / norm_b;

    Ok((
        x,
        SolveStats {
            iterations,
            final_residual,
            converged: true,
            wall_seconds: start.elapsed().as_secs_f64(),
            residual_history: history,
        },
    ))
}

/// Constant-coefficient transform-space preconditioner.
///
/// Per wavevector `k != 0` the multipliers are
///
/// ```text
/// phi block:  1/(c M1 dt |k|^2) + eps |k|^2 + alpha <|Z*|^2> |k|^2 + (2/eps) <phi*^2>
/// rho block:  1/(c M2 dt |k|^2) + alpha + (beta/2) <H*^2>
/// ```
///
/// with `<.>` grid averages of the frozen coefficient fields; the `k = 0`
/// mode is mapped to zero (outside the solve subspace). With constant
/// coefficients and `Z* = 0` this equals the step operator exactly.
#[derive(Debug, Clone)]
pub struct SpectralPrecond {
    inv_c_m1_dt: f64,
    inv_c_m2_dt: f64,
    eps: f64,
    alpha_zsq_mean: f64,
    phi_term: f64,
    rho_term: f64,
}

pub fn make_preconditioner(
    params: &ModelParams,
    dt: f64,
    coeffs: &FrozenCoeffs,
) -> SpectralPrecond {
    let c = coeffs.mass_factor;
    let grid = coeffs.phi_star.grid();
    let total = grid.total() as f64;
    let phi_sq_mean =
        coeffs.phi_star.values().iter().map(|&v| v * v).sum::<f64>() / total;
    let h_sq_mean = coeffs.h_star.values().iter().map(|&v| v * v).sum::<f64>() / total;
    let mut z_sq_mean = 0.0;
    for comp in coeffs.z_star.components() {
        z_sq_mean += comp.values().iter().map(|&v| v * v).sum::<f64>() / total;
    }
    SpectralPrecond {
        inv_c_m1_dt: 1.0 / (c * params.m1 * dt),
        inv_c_m2_dt: 1.0 / (c * params.m2 * dt),
        eps: params.eps,
        alpha_zsq_mean: params.alpha * z_sq_mean,
        phi_term: 2.0 / params.eps * phi_sq_mean,
        rho_term: params.alpha + 0.5 * params.beta * h_sq_mean,
    }
}

impl SpectralPrecond {
    fn multipliers(&self, ksq: f64) -> (f64, f64) {
        let m_phi = self.inv_c_m1_dt / ksq + (self.eps + self.alpha_zsq_mean) * ksq + self.phi_term;
        let m_rho = self.inv_c_m2_dt / ksq + self.rho_term;
        (m_phi, m_rho)
    }

    /// Apply the inverse of the preconditioner (the PCG `M^{-1} r` action).
    pub fn apply_inv(&self, r: &FieldPair) -> FieldPair {
        self.apply_impl(r, true)
    }

    /// Apply the preconditioner itself (used to verify the round trip).
    pub fn apply_forward(&self, r: &FieldPair) -> FieldPair {
        self.apply_impl(r, false)
    }

    fn apply_impl(&self, r: &FieldPair, inverse: bool) -> FieldPair {
        let grid = r.phi.grid().clone();
        let tf = grid.tf();
        let (mut fp, mut fr) = tf.forward_pair(r.phi.values(), r.rho.values());
        tf.for_each_ksq(|l, ksq| {
            if ksq > 0.0 {
                let (m_phi, m_rho) = self.multipliers(ksq);
                if inverse {
                    fp[l] /= m_phi;
                    fr[l] /= m_rho;
                } else {
                    fp[l] *= m_phi;
                    fr[l] *= m_rho;
                }
            } else {
                fp[l] = Default::default();
                fr[l] = Default::default();
            }
        });
        let (phi, rho) = tf.inverse_pair_real(&fp, &fr);
        FieldPair {
            phi: ScalarField::from_values(&grid, phi).expect("sized by grid"),
            rho: ScalarField::from_values(&grid, rho).expect("sized by grid"),
        }
    }
}
