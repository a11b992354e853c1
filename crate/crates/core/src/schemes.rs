//! One time step of each linear energy-stable integrator.
//!
//! All three schemes share the same shape: freeze the nonlinear coefficient
//! fields at known time levels, condense the auxiliary updates into the
//! chemical potentials, eliminate the potentials with the zero-mean inverse
//! Laplacian, and solve one symmetric positive definite system for the
//! mean-shifted pair `(phi, rho)`:
//!
//! ```text
//! y_phi = -1/(c M1 dt) lap^-1 x_phi - eps lap x_phi + P(x_phi, x_rho)
//! y_rho = -1/(c M2 dt) lap^-1 x_rho             + Q(x_phi, x_rho)
//!
//! P(f, g) = (2/eps) phi*^2 f + alpha div(g Z*) - alpha div((Z*.grad f) Z*)
//! Q(f, g) = alpha g - alpha Z*.grad f + (beta/2) H*^2 g
//! ```
//!
//! with `c = 1` (first order), `c = 2/3` (BDF2) and `c = 1/2`
//! (Crank-Nicolson). Outputs are projected to the zero-mean subspace, where
//! the operator satisfies
//!
//! ```text
//! (A x, x) = 1/(c M1 dt) ||x_phi||_{H^-1}^2 + 1/(c M2 dt) ||x_rho||_{H^-1}^2
//!          + eps ||grad x_phi||^2 + (2/eps) ||phi* x_phi||^2
//!          + (beta/2) ||H* x_rho||^2 + alpha ||x_rho - Z*.grad x_phi||^2.
//! ```
//!
//! Once the pair is solved the auxiliaries update algebraically and the
//! discrete energy is guaranteed non-increasing for every step size.

use crate::diagnostics::EnergyRecord;
use crate::error::{Error, Result};
use crate::linsolve::{self, FieldPair, SolveStats, SolverConfig};
use crate::model::{ModelParams, State};
use crate::spectral::fourier::C64;
use crate::spectral::{self, ScalarField, VectorField};

/// Time integrator choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    FirstOrder,
    Bdf2,
    CrankNicolson,
}

impl SchemeKind {
    /// Factor `c` in the `1/(c M dt)` mass term of the condensed system.
    pub fn mass_factor(self) -> f64 {
        match self {
            SchemeKind::FirstOrder => 1.0,
            SchemeKind::Bdf2 => 2.0 / 3.0,
            SchemeKind::CrankNicolson => 0.5,
        }
    }

    /// BDF2 cannot start from a single state; Crank-Nicolson falls back to
    /// constant extrapolation of the coefficients on the first step.
    pub fn needs_history(self) -> bool {
        matches!(self, SchemeKind::Bdf2)
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::FirstOrder => "first-order",
            SchemeKind::Bdf2 => "bdf2",
            SchemeKind::CrankNicolson => "crank-nicolson",
        }
    }

    pub fn parse(s: &str) -> Result<SchemeKind> {
        match s {
            "first-order" | "first_order" | "ls1" | "1" => Ok(SchemeKind::FirstOrder),
            "bdf2" | "ls2" | "2" => Ok(SchemeKind::Bdf2),
            "crank-nicolson" | "crank_nicolson" | "cn" => Ok(SchemeKind::CrankNicolson),
            other => Err(Error::InvalidParams(format!("unknown scheme '{other}'"))),
        }
    }
}

/// Per-step options: the linear solver configuration plus the optional
/// 2/3-rule truncation of the frozen coefficient fields.
#[derive(Debug, Clone, Copy, Default)]
pub struct StepOptions {
    pub solver: SolverConfig,
    pub dealias: bool,
}

/// Coefficient fields frozen at known time levels, making every step linear.
///
/// First order freezes at `n`; BDF2 at the extrapolation `2 s^n - s^{n-1}`;
/// Crank-Nicolson at `(3/2) s^n - (1/2) s^{n-1}` (or `s^0` on the very
/// first step).
#[derive(Debug, Clone)]
pub struct FrozenCoeffs {
    pub kind: SchemeKind,
    pub mass_factor: f64,
    pub phi_star: ScalarField,
    pub h_star: ScalarField,
    pub z_star: VectorField,
    /// Cached squares used by the operator inner loop.
    phi_star_sq: Vec<f64>,
    h_star_sq: Vec<f64>,
}

impl FrozenCoeffs {
    pub fn build(
        kind: SchemeKind,
        state_n: &State,
        state_nm1: Option<&State>,
        params: &ModelParams,
        dealias: bool,
    ) -> Result<FrozenCoeffs> {
        if let Some(prev) = state_nm1 {
            if prev.grid().total() != state_n.grid().total() {
                return Err(Error::GridMismatch);
            }
        }
        let (mut phi_star, mut rho_star) = match kind {
            SchemeKind::FirstOrder => (state_n.phi.clone(), state_n.rho.clone()),
            SchemeKind::Bdf2 => {
                let prev = state_nm1.ok_or(Error::MissingHistory(kind))?;
                (
                    state_n.phi.zip_map(&prev.phi, |a, b| 2.0 * a - b),
                    state_n.rho.zip_map(&prev.rho, |a, b| 2.0 * a - b),
                )
            }
            SchemeKind::CrankNicolson => match state_nm1 {
                Some(prev) => (
                    state_n.phi.zip_map(&prev.phi, |a, b| 1.5 * a - 0.5 * b),
                    state_n.rho.zip_map(&prev.rho, |a, b| 1.5 * a - 0.5 * b),
                ),
                // First step only: constant extrapolation.
                None => (state_n.phi.clone(), state_n.rho.clone()),
            },
        };
        if dealias {
            phi_star = spectral::dealias_two_thirds(&phi_star);
            rho_star = spectral::dealias_two_thirds(&rho_star);
        }
        let h_star = params.h_field(&rho_star);
        let z_star = params.z_field(&phi_star);
        let phi_star_sq = phi_star.values().iter().map(|&v| v * v).collect();
        let h_star_sq = h_star.values().iter().map(|&v| v * v).collect();
        Ok(FrozenCoeffs {
            kind,
            mass_factor: kind.mass_factor(),
            phi_star,
            h_star,
            z_star,
            phi_star_sq,
            h_star_sq,
        })
    }

    fn grid(&self) -> &std::sync::Arc<spectral::Grid> {
        self.phi_star.grid()
    }

    /// `Z* . grad f` given the gradient components of `f`.
    fn z_dot(&self, grad: &[&[f64]]) -> Vec<f64> {
        let total = self.grid().total();
        let mut out = vec![0.0; total];
        for (axis, g) in grad.iter().enumerate() {
            let z = self.z_star.component(axis).values();
            for j in 0..total {
                out[j] += z[j] * g[j];
            }
        }
        out
    }
}

/// Leftover parts of the algebraic auxiliary updates: after the solve,
/// `u^{n+1} = carry.u + 2 phi* phi^{n+1}`, `v^{n+1} = carry.v + rho^{n+1} -
/// Z*.grad phi^{n+1}`, `w^{n+1} = carry.w + (1/2) H* rho^{n+1}`.
#[derive(Debug, Clone)]
pub struct AuxCarry {
    pub u: ScalarField,
    pub v: ScalarField,
    pub w: ScalarField,
}

/// Build the auxiliary-update carries from the known time levels.
///
/// For first order and Crank-Nicolson the history fields are level `n`; for
/// BDF2 they are the weighted combination `(4 s^n - s^{n-1}) / 3`.
pub fn aux_carry(
    coeffs: &FrozenCoeffs,
    state_n: &State,
    state_nm1: Option<&State>,
) -> Result<AuxCarry> {
    let hist = history_fields(coeffs.kind, state_n, state_nm1)?;
    let grad_phi_h = spectral::gradient(&hist.phi);
    let comps: Vec<&[f64]> = grad_phi_h.components().iter().map(|c| c.values()).collect();
    let zg = coeffs.z_dot(&comps);
    carry_from_history(coeffs, &hist, &zg, state_n.grid())
}

fn carry_from_history(
    coeffs: &FrozenCoeffs,
    hist: &HistoryFields,
    z_dot_grad_phi_h: &[f64],
    grid: &std::sync::Arc<spectral::Grid>,
) -> Result<AuxCarry> {
    let total = grid.total();
    let mut u = vec![0.0; total];
    let mut v = vec![0.0; total];
    let mut w = vec![0.0; total];
    for j in 0..total {
        u[j] = hist.u.values()[j] - 2.0 * coeffs.phi_star.values()[j] * hist.phi.values()[j];
        v[j] = hist.v.values()[j] - hist.rho.values()[j] + z_dot_grad_phi_h[j];
        w[j] = hist.w.values()[j] - 0.5 * coeffs.h_star.values()[j] * hist.rho.values()[j];
    }
    Ok(AuxCarry {
        u: ScalarField::from_values(grid, u)?,
        v: ScalarField::from_values(grid, v)?,
        w: ScalarField::from_values(grid, w)?,
    })
}

struct HistoryFields {
    phi: ScalarField,
    rho: ScalarField,
    u: ScalarField,
    v: ScalarField,
    w: ScalarField,
}

fn history_fields(
    kind: SchemeKind,
    state_n: &State,
    state_nm1: Option<&State>,
) -> Result<HistoryFields> {
    match kind {
        SchemeKind::FirstOrder | SchemeKind::CrankNicolson => Ok(HistoryFields {
            phi: state_n.phi.clone(),
            rho: state_n.rho.clone(),
            u: state_n.u.clone(),
            v: state_n.v.clone(),
            w: state_n.w.clone(),
        }),
        SchemeKind::Bdf2 => {
            let prev = state_nm1.ok_or(Error::MissingHistory(kind))?;
            let dagger = |a: &ScalarField, b: &ScalarField| {
                a.zip_map(b, |x, y| (4.0 * x - y) / 3.0)
            };
            Ok(HistoryFields {
                phi: dagger(&state_n.phi, &prev.phi),
                rho: dagger(&state_n.rho, &prev.rho),
                u: dagger(&state_n.u, &prev.u),
                v: dagger(&state_n.v, &prev.v),
                w: dagger(&state_n.w, &prev.w),
            })
        }
    }
}

const ZERO_MEAN_TOL: f64 = 1e-12;

fn require_zero_mean(f: &ScalarField) -> Result<()> {
    let m = spectral::mean(f);
    let bound = ZERO_MEAN_TOL * f.linf();
    if m.abs() > bound && f.linf() > 0.0 {
        return Err(Error::NonZeroMean { mean: m, bound });
    }
    Ok(())
}

/// Apply the condensed step operator to a zero-mean pair.
///
/// This is the matrix-free `A x` used inside the Krylov solve; outputs are
/// projected back to zero mean. Five full-grid transforms in 2D, seven in 3D.
pub fn apply_operator(
    x_phi: &ScalarField,
    x_rho: &ScalarField,
    coeffs: &FrozenCoeffs,
    params: &ModelParams,
    dt: f64,
) -> Result<(ScalarField, ScalarField)> {
    require_zero_mean(x_phi)?;
    require_zero_mean(x_rho)?;
    let grid = coeffs.grid().clone();
    let tf = grid.tf();
    let total = grid.total();
    let dim = grid.dim();
    let c = coeffs.mass_factor;
    let a_phi = 1.0 / (c * params.m1 * dt);
    let a_rho = 1.0 / (c * params.m2 * dt);

    let (f_phi, f_rho) = tf.forward_pair(x_phi.values(), x_rho.values());

    // Linear k-space parts: -1/(cM1 dt) lap^-1 - eps lap on phi, the mass
    // term alone on rho.
    let mut lin_phi_hat = f_phi.clone();
    let mut lin_rho_hat = f_rho.clone();
    tf.for_each_ksq(|l, ksq| {
        if ksq > 0.0 {
            lin_phi_hat[l] *= a_phi / ksq + params.eps * ksq;
            lin_rho_hat[l] *= a_rho / ksq;
        } else {
            lin_phi_hat[l] = C64::new(0.0, 0.0);
            lin_rho_hat[l] = C64::new(0.0, 0.0);
        }
    });
    let (lin_phi, lin_rho) = tf.inverse_pair_real(&lin_phi_hat, &lin_rho_hat);

    let grad = gradient_from_spectrum(&grid, &f_phi);

    // defect = x_rho - Z*.grad x_phi; both coupling terms of P collapse to
    // alpha div(defect Z*).
    let mut defect = x_rho.values().to_vec();
    for (axis, g) in grad.iter().enumerate() {
        let z = coeffs.z_star.component(axis).values();
        for j in 0..total {
            defect[j] -= z[j] * g[j];
        }
    }
    let flux: Vec<Vec<f64>> = (0..dim)
        .map(|axis| {
            let z = coeffs.z_star.component(axis).values();
            defect.iter().zip(z).map(|(&d, &zv)| d * zv).collect()
        })
        .collect();
    let div = divergence_of(&grid, &flux);

    let mut y_phi = vec![0.0; total];
    let mut y_rho = vec![0.0; total];
    let two_over_eps = 2.0 / params.eps;
    let half_beta = 0.5 * params.beta;
    for j in 0..total {
        y_phi[j] = lin_phi[j]
            + two_over_eps * coeffs.phi_star_sq[j] * x_phi.values()[j]
            + params.alpha * div[j];
        y_rho[j] = lin_rho[j]
            + params.alpha * defect[j]
            + half_beta * coeffs.h_star_sq[j] * x_rho.values()[j];
    }
    subtract_mean(&mut y_phi);
    subtract_mean(&mut y_rho);
    Ok((
        ScalarField::from_values(&grid, y_phi)?,
        ScalarField::from_values(&grid, y_rho)?,
    ))
}

fn subtract_mean(values: &mut [f64]) {
    let m = values.iter().sum::<f64>() / values.len() as f64;
    for v in values.iter_mut() {
        *v -= m;
    }
}

/// Gradient components from an already-computed spectrum.
fn gradient_from_spectrum(
    grid: &std::sync::Arc<spectral::Grid>,
    spec: &[C64],
) -> Vec<Vec<f64>> {
    let tf = grid.tf();
    let dim = grid.dim();
    let mut spectra: Vec<Vec<C64>> = Vec::with_capacity(dim);
    for axis in 0..dim {
        let mut d = spec.to_vec();
        tf.for_each_kaxis(axis, |l, k| {
            let z = d[l];
            d[l] = C64::new(-k * z.im, k * z.re);
        });
        spectra.push(d);
    }
    let mut out = Vec::with_capacity(dim);
    let mut axis = 0;
    while axis + 1 < dim {
        let (a, b) = tf.inverse_pair_real(&spectra[axis], &spectra[axis + 1]);
        out.push(a);
        out.push(b);
        axis += 2;
    }
    if axis < dim {
        out.push(tf.inverse_real(&spectra[axis]));
    }
    out
}

/// Divergence of per-axis flux components (physical space in, physical out).
fn divergence_of(grid: &std::sync::Arc<spectral::Grid>, flux: &[Vec<f64>]) -> Vec<f64> {
    let tf = grid.tf();
    let dim = grid.dim();
    let mut acc: Vec<C64> = vec![C64::new(0.0, 0.0); grid.total()];
    let mut axis = 0;
    while axis + 1 < dim {
        let (a, b) = tf.forward_pair(&flux[axis], &flux[axis + 1]);
        tf.for_each_kaxis(axis, |l, k| {
            let z = a[l];
            acc[l] += C64::new(-k * z.im, k * z.re);
        });
        tf.for_each_kaxis(axis + 1, |l, k| {
            let z = b[l];
            acc[l] += C64::new(-k * z.im, k * z.re);
        });
        axis += 2;
    }
    if axis < dim {
        let a = tf.forward(&flux[axis]);
        tf.for_each_kaxis(axis, |l, k| {
            let z = a[l];
            acc[l] += C64::new(-k * z.im, k * z.re);
        });
    }
    tf.inverse_real(&acc)
}

/// Right-hand side of the condensed system plus the conserved means and the
/// initial Krylov guess.
#[derive(Debug, Clone)]
pub struct RhsParts {
    pub rhs_phi: ScalarField,
    pub rhs_rho: ScalarField,
    /// Conserved means added back to the solved zero-mean pair.
    pub mean_phi: f64,
    pub mean_rho: f64,
    /// Mean-shifted history combination; a cheap warm start for the solve
    /// that stays deterministic across checkpoint restarts.
    pub guess: FieldPair,
    /// Auxiliary-update carries, assembled from the same history pass.
    pub carry: AuxCarry,
}

/// Assemble the zero-mean right-hand side for one step.
pub fn build_rhs(
    state_n: &State,
    state_nm1: Option<&State>,
    coeffs: &FrozenCoeffs,
    params: &ModelParams,
    dt: f64,
) -> Result<RhsParts> {
    let grid = state_n.grid().clone();
    let tf = grid.tf();
    let total = grid.total();
    let dim = grid.dim();
    let c = coeffs.mass_factor;
    let a_phi = 1.0 / (c * params.m1 * dt);
    let a_rho = 1.0 / (c * params.m2 * dt);
    let kind = coeffs.kind;

    let mean_phi = spectral::mean(&state_n.phi);
    let mean_rho = spectral::mean(&state_n.rho);

    let hist = history_fields(kind, state_n, state_nm1)?;
    let hist_mean_phi = spectral::mean(&hist.phi);
    let hist_mean_rho = spectral::mean(&hist.rho);
    let phi_h_hat = hist.phi.map(|v| v - hist_mean_phi);
    let rho_h_hat = hist.rho.map(|v| v - hist_mean_rho);
    let (f_phi_h, f_rho_h) = tf.forward_pair(phi_h_hat.values(), rho_h_hat.values());

    // Gradient of the history field (the k = 0 shift has no gradient).
    let grad_phi_h = gradient_from_spectrum(&grid, &f_phi_h);
    let grad_slices: Vec<&[f64]> = grad_phi_h.iter().map(|g| g.as_slice()).collect();
    let zg = coeffs.z_dot(&grad_slices);
    let carry = carry_from_history(coeffs, &hist, &zg, &grid)?;

    // Sources; for Crank-Nicolson they are carry + level-n fields and pick
    // up an extra -eps lap phi^n term below.
    let mut src_u = carry.u.values().to_vec();
    let mut src_v = carry.v.values().to_vec();
    let mut src_w = carry.w.values().to_vec();
    if kind == SchemeKind::CrankNicolson {
        for j in 0..total {
            src_u[j] += state_n.u.values()[j];
            src_v[j] += state_n.v.values()[j];
            src_w[j] += state_n.w.values()[j];
        }
    }

    // Divergence source: alpha div((src_v + mean_rho) Z*) folds the P(mean)
    // contribution into the same flux.
    let flux: Vec<Vec<f64>> = (0..dim)
        .map(|axis| {
            let z = coeffs.z_star.component(axis).values();
            src_v.iter().zip(z).map(|(&s, &zv)| (s + mean_rho) * zv).collect()
        })
        .collect();

    // k-space accumulation: mass history terms, the flux divergence, and for
    // Crank-Nicolson the +eps lap phi^n source.
    let mut acc_phi: Vec<C64> = vec![C64::new(0.0, 0.0); total];
    let mut acc_rho: Vec<C64> = vec![C64::new(0.0, 0.0); total];
    tf.for_each_ksq(|l, ksq| {
        if ksq > 0.0 {
            acc_phi[l] = f_phi_h[l] * (a_phi / ksq);
            acc_rho[l] = f_rho_h[l] * (a_rho / ksq);
        }
    });
    let mut axis = 0;
    while axis + 1 < dim {
        let (a, b) = tf.forward_pair(&flux[axis], &flux[axis + 1]);
        tf.for_each_kaxis(axis, |l, k| {
            let z = a[l];
            acc_phi[l] -= params.alpha * C64::new(-k * z.im, k * z.re);
        });
        tf.for_each_kaxis(axis + 1, |l, k| {
            let z = b[l];
            acc_phi[l] -= params.alpha * C64::new(-k * z.im, k * z.re);
        });
        axis += 2;
    }
    if axis < dim {
        let a = tf.forward(&flux[axis]);
        tf.for_each_kaxis(axis, |l, k| {
            let z = a[l];
            acc_phi[l] -= params.alpha * C64::new(-k * z.im, k * z.re);
        });
    }
    if kind == SchemeKind::CrankNicolson {
        // rhs gains +eps lap phi^n; phi_h == phi^n for this scheme.
        tf.for_each_ksq(|l, ksq| {
            acc_phi[l] -= params.eps * ksq * f_phi_h[l];
        });
    }
    let (spectral_phi, spectral_rho) = tf.inverse_pair_real(&acc_phi, &acc_rho);

    let inv_eps = 1.0 / params.eps;
    let mut rhs_phi = vec![0.0; total];
    let mut rhs_rho = vec![0.0; total];
    for j in 0..total {
        let p_mean = 2.0 * inv_eps * coeffs.phi_star_sq[j] * mean_phi;
        let q_mean = (params.alpha + 0.5 * params.beta * coeffs.h_star_sq[j]) * mean_rho;
        rhs_phi[j] = spectral_phi[j]
            - inv_eps * coeffs.phi_star.values()[j] * src_u[j]
            - p_mean;
        rhs_rho[j] = spectral_rho[j]
            - params.alpha * src_v[j]
            - params.beta * coeffs.h_star.values()[j] * src_w[j]
            - q_mean;
    }
    subtract_mean(&mut rhs_phi);
    subtract_mean(&mut rhs_rho);

    Ok(RhsParts {
        rhs_phi: ScalarField::from_values(&grid, rhs_phi)?,
        rhs_rho: ScalarField::from_values(&grid, rhs_rho)?,
        mean_phi,
        mean_rho,
        guess: FieldPair::new(phi_h_hat, rho_h_hat),
        carry,
    })
}

/// Everything produced by one accepted time step.
#[derive(Debug, Clone)]
pub struct StepReport {
    pub state_new: State,
    pub solve: SolveStats,
    pub energies: EnergyRecord,
}

/// Advance one step. BDF2 and (after the first step) Crank-Nicolson need
/// `state_nm1`; on solver failure no partially updated state escapes.
pub fn step(
    state_n: &State,
    state_nm1: Option<&State>,
    params: &ModelParams,
    dt: f64,
    kind: SchemeKind,
    options: &StepOptions,
) -> Result<StepReport> {
    if !(dt > 0.0) {
        return Err(Error::InvalidParams(format!("dt must be positive, got {dt}")));
    }
    let coeffs = FrozenCoeffs::build(kind, state_n, state_nm1, params, options.dealias)?;
    let rhs = build_rhs(state_n, state_nm1, &coeffs, params, dt)?;
    let carry = &rhs.carry;

    let apply = |x: &FieldPair| -> Result<FieldPair> {
        let (y_phi, y_rho) = apply_operator(&x.phi, &x.rho, &coeffs, params, dt)?;
        Ok(FieldPair::new(y_phi, y_rho))
    };
    let precond = linsolve::make_preconditioner(params, dt, &coeffs);
    let rhs_pair = FieldPair::new(rhs.rhs_phi.clone(), rhs.rhs_rho.clone());
    let (x, solve) = if options.solver.precondition {
        linsolve::pcg(apply, &rhs_pair, |r| precond.apply_inv(r), Some(&rhs.guess), &options.solver)?
    } else {
        linsolve::pcg(apply, &rhs_pair, |r| r.clone(), Some(&rhs.guess), &options.solver)?
    };

    let phi_new = x.phi.map(|v| v + rhs.mean_phi);
    let rho_new = x.rho.map(|v| v + rhs.mean_rho);

    // Algebraic auxiliary updates.
    let grad_phi_new = spectral::gradient(&phi_new);
    let grad_slices: Vec<&[f64]> = grad_phi_new.components().iter().map(|c| c.values()).collect();
    let zg_new = coeffs.z_dot(&grad_slices);
    let grid = state_n.grid();
    let total = grid.total();
    let mut u_new = vec![0.0; total];
    let mut v_new = vec![0.0; total];
    let mut w_new = vec![0.0; total];
    for j in 0..total {
        u_new[j] = carry.u.values()[j] + 2.0 * coeffs.phi_star.values()[j] * phi_new.values()[j];
        v_new[j] = carry.v.values()[j] + rho_new.values()[j] - zg_new[j];
        w_new[j] = carry.w.values()[j] + 0.5 * coeffs.h_star.values()[j] * rho_new.values()[j];
    }
    let state_new = State {
        phi: phi_new,
        rho: rho_new,
        u: ScalarField::from_values(grid, u_new)?,
        v: ScalarField::from_values(grid, v_new)?,
        w: ScalarField::from_values(grid, w_new)?,
        time: state_n.time + dt,
    };

    let (grad_mu_phi_sq, grad_mu_rho_sq) =
        grad_mu_norms(&coeffs, params, &state_new, state_n);
    let e_discrete = match kind {
        SchemeKind::Bdf2 => discrete_energy(kind, &state_new, Some(state_n), params)?,
        _ => discrete_energy(kind, &state_new, None, params)?,
    };
    let energies = EnergyRecord {
        time: state_new.time,
        e_original: params.energy_original(&state_new.phi, &state_new.rho),
        e_discrete,
        mass_phi: state_new.mass_phi(),
        mass_rho: state_new.mass_rho(),
        grad_mu_phi_sq,
        grad_mu_rho_sq,
    };

    Ok(StepReport { state_new, solve, energies })
}

/// Produce the first BDF2 step with one Crank-Nicolson step seeded by
/// constant extrapolation, preserving second-order global accuracy.
///
/// The reported discrete energy is the BDF2 two-level form of
/// `(state1, state0)`, so a BDF2 run emits one consistent energy series.
pub fn bdf2_bootstrap(
    state0: &State,
    params: &ModelParams,
    dt: f64,
    options: &StepOptions,
) -> Result<StepReport> {
    let mut report = step(state0, None, params, dt, SchemeKind::CrankNicolson, options)?;
    report.energies.e_discrete =
        discrete_energy(SchemeKind::Bdf2, &report.state_new, Some(state0), params)?;
    Ok(report)
}

/// Discrete energy the scheme dissipates.
///
/// First order and Crank-Nicolson use the single-level quadratized energy;
/// BDF2 uses the two-level form with the `(||s||^2 + ||2s - s_prev||^2)/2`
/// combinations. The gradient term is evaluated in transform space so the
/// telescoping identities hold to round-off. The additive constant
/// `-beta B |Omega|` is included in both forms.
pub fn discrete_energy(
    kind: SchemeKind,
    state: &State,
    prev: Option<&State>,
    params: &ModelParams,
) -> Result<f64> {
    let grid = state.grid();
    let vol_const = params.beta * params.b_shift * grid.volume();
    match kind {
        SchemeKind::FirstOrder | SchemeKind::CrankNicolson => {
            let grad_sq = spectral::grad_norm_sq(&state.phi);
            let u2 = spectral::inner(&state.u, &state.u);
            let v2 = spectral::inner(&state.v, &state.v);
            let w2 = spectral::inner(&state.w, &state.w);
            Ok(0.5 * params.eps * grad_sq
                + u2 / (4.0 * params.eps)
                + 0.5 * params.alpha * v2
                + params.beta * w2
                - vol_const)
        }
        SchemeKind::Bdf2 => {
            let prev = prev.ok_or(Error::MissingHistory(kind))?;
            let pair_sq = |a: &ScalarField, b: &ScalarField| {
                let ext = a.zip_map(b, |x, y| 2.0 * x - y);
                0.5 * spectral::inner(a, a) + 0.5 * spectral::inner(&ext, &ext)
            };
            let grad_pair = {
                let ext = state.phi.zip_map(&prev.phi, |x, y| 2.0 * x - y);
                0.5 * spectral::grad_norm_sq(&state.phi) + 0.5 * spectral::grad_norm_sq(&ext)
            };
            Ok(0.5 * params.eps * grad_pair
                + pair_sq(&state.u, &prev.u) / (4.0 * params.eps)
                + 0.5 * params.alpha * pair_sq(&state.v, &prev.v)
                + params.beta * pair_sq(&state.w, &prev.w)
                - vol_const)
        }
    }
}

/// Dirichlet seminorms of the reconstructed chemical potentials, the
/// dissipation-rate terms of the discrete energy law.
fn grad_mu_norms(
    coeffs: &FrozenCoeffs,
    params: &ModelParams,
    state_new: &State,
    state_n: &State,
) -> (f64, f64) {
    let grid = state_new.grid();
    let total = grid.total();
    let (phi_arg, u_arg, v_arg, w_arg): (ScalarField, ScalarField, ScalarField, ScalarField) =
        match coeffs.kind {
            // Midpoint potentials for Crank-Nicolson.
            SchemeKind::CrankNicolson => (
                state_new.phi.zip_map(&state_n.phi, |a, b| 0.5 * (a + b)),
                state_new.u.zip_map(&state_n.u, |a, b| 0.5 * (a + b)),
                state_new.v.zip_map(&state_n.v, |a, b| 0.5 * (a + b)),
                state_new.w.zip_map(&state_n.w, |a, b| 0.5 * (a + b)),
            ),
            _ => (
                state_new.phi.clone(),
                state_new.u.clone(),
                state_new.v.clone(),
                state_new.w.clone(),
            ),
        };

    // mu_phi = -eps lap phi + (1/eps) phi* u + alpha div(v Z*)
    let lap_phi = spectral::laplacian(&phi_arg);
    let flux: Vec<Vec<f64>> = (0..grid.dim())
        .map(|axis| {
            let z = coeffs.z_star.component(axis).values();
            v_arg.values().iter().zip(z).map(|(&v, &zv)| v * zv).collect()
        })
        .collect();
    let div = divergence_of(grid, &flux);
    let mut mu_phi = vec![0.0; total];
    let mut mu_rho = vec![0.0; total];
    for j in 0..total {
        mu_phi[j] = -params.eps * lap_phi.values()[j]
            + coeffs.phi_star.values()[j] * u_arg.values()[j] / params.eps
            + params.alpha * div[j];
        mu_rho[j] = params.alpha * v_arg.values()[j]
            + params.beta * coeffs.h_star.values()[j] * w_arg.values()[j];
    }
    let mu_phi = ScalarField::from_values(grid, mu_phi).expect("sized by grid");
    let mu_rho = ScalarField::from_values(grid, mu_rho).expect("sized by grid");
    (spectral::grad_norm_sq(&mu_phi), spectral::grad_norm_sq(&mu_rho))
}

/// Drive `n_steps` of the chosen scheme from `state0`, with BDF2 seeded by
/// [`bdf2_bootstrap`]. The callback sees every report in order.
pub fn integrate(
    state0: &State,
    params: &ModelParams,
    dt: f64,
    n_steps: usize,
    kind: SchemeKind,
    options: &StepOptions,
    mut on_step: impl FnMut(usize, &StepReport),
) -> Result<State> {
    let mut current = state0.clone();
    let mut previous: Option<State> = None;
    for k in 1..=n_steps {
        let report = match kind {
            SchemeKind::Bdf2 if previous.is_none() => bdf2_bootstrap(&current, params, dt, options)?,
            _ => step(&current, previous.as_ref(), params, dt, kind, options)?,
        };
        on_step(k, &report);
        previous = Some(std::mem::replace(&mut current, report.state_new));
    }
    Ok(current)
}
