//! Physics of the binary fluid-surfactant model: parameters, the regularized
//! Flory-Huggins potential, the nonlinear coefficient fields, energies and
//! auxiliary-variable initialization.
//!
//! The free energy is
//!
//! ```text
//! E[phi, rho] = int  eps/2 |grad phi|^2  +  1/(4 eps) (phi^2 - 1)^2
//!                 +  alpha/2 (rho - |grad phi|)^2  +  beta G(rho)  dx
//! ```
//!
//! with `G` the logarithmic mixing entropy, regularized outside
//! `[eps_hat, 1 - eps_hat]` by quadratic extensions so it is convex, C^2 and
//! defined on the whole real line. The quadratized form replaces the three
//! nonlinear densities by auxiliary fields
//!
//! ```text
//! u = phi^2 - 1,   v = rho - |grad phi|,   w = sqrt(G(rho) + B),
//! ```
//!
//! so the energy becomes a quadratic functional of `(phi, u, v, w)` up to
//! the constant `-beta B |Omega|`.

use crate::error::{Error, Result};
use crate::spectral::{self, gradient, Grid, ScalarField, VectorField};
use std::sync::Arc;

/// Physical and regularization constants.
///
/// Defaults follow the standard benchmark set for this model:
/// `eps_hat = 1e-4`, `m1 = m2 = 0.01`, `eps = 0.05`, `alpha = 0.01`,
/// `beta = 0.05`, `b_shift = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Interface width epsilon.
    pub eps: f64,
    /// Coupling strength alpha of the surfactant-interface entropy.
    pub alpha: f64,
    /// Entropy strength beta.
    pub beta: f64,
    /// Energy shift B keeping G + B positive.
    pub b_shift: f64,
    /// Mobility of the fluid phase variable.
    pub m1: f64,
    /// Mobility of the surfactant concentration.
    pub m2: f64,
    /// Flory-Huggins regularization width, in (0, 1/2).
    pub eps_hat: f64,
    /// Regularization of the interface direction field Z (dimensionless).
    pub eta: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            eps: 0.05,
            alpha: 0.01,
            beta: 0.05,
            b_shift: 1.0,
            m1: 0.01,
            m2: 0.01,
            eps_hat: 1e-4,
            eta: 1e-6,
        }
    }
}

impl ModelParams {
    /// Validate positivity and the global bound `G(rho) + B > 0`.
    ///
    /// `G` is convex with its minimum at `rho = 1/2` (where `G' = 0`), so the
    /// bound reduces to `ln(1/2) + B > 0`.
    pub fn validated(self) -> Result<ModelParams> {
        let pos = [
            (self.eps, "eps"),
            (self.alpha, "alpha"),
            (self.beta, "beta"),
            (self.b_shift, "b_shift"),
            (self.m1, "m1"),
            (self.m2, "m2"),
        ];
        for (v, name) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidParams(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.eps_hat > 0.0 && self.eps_hat < 0.5) {
            return Err(Error::InvalidParams(format!(
                "eps_hat must lie in (0, 1/2), got {}",
                self.eps_hat
            )));
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return Err(Error::InvalidParams(format!("eta must be >= 0, got {}", self.eta)));
        }
        let gmin = self.fh_potential(0.5);
        if gmin + self.b_shift <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "G(1/2) + B = {} must be positive",
                gmin + self.b_shift
            )));
        }
        Ok(self)
    }

    /// Regularized Flory-Huggins potential: the logarithmic entropy on
    /// `[eps_hat, 1 - eps_hat]` with quadratic C^2 extensions outside.
    pub fn fh_potential(&self, rho: f64) -> f64 {
        let e = self.eps_hat;
        if rho >= 1.0 - e {
            rho * rho.ln() + (1.0 - rho) * (1.0 - rho) / (2.0 * e) + (1.0 - rho) * e.ln()
                - 0.5 * e
        } else if rho >= e {
            rho * rho.ln() + (1.0 - rho) * (1.0 - rho).ln()
        } else {
            (1.0 - rho) * (1.0 - rho).ln() + rho * rho / (2.0 * e) + rho * e.ln() - 0.5 * e
        }
    }

    /// Derivative of [`Self::fh_potential`], branch by branch.
    pub fn fh_derivative(&self, rho: f64) -> f64 {
        let e = self.eps_hat;
        if rho >= 1.0 - e {
            rho.ln() + 1.0 - (1.0 - rho) / e - e.ln()
        } else if rho >= e {
            rho.ln() - (1.0 - rho).ln()
        } else {
            -(1.0 - rho).ln() - 1.0 + rho / e + e.ln()
        }
    }

    /// Scalar coefficient `H(rho) = G'(rho) / sqrt(G(rho) + B)`.
    pub fn h_coeff(&self, rho: f64) -> f64 {
        self.fh_derivative(rho) / (self.fh_potential(rho) + self.b_shift).sqrt()
    }

    /// Pointwise `H` field of a concentration field.
    pub fn h_field(&self, rho: &ScalarField) -> ScalarField {
        rho.map(|r| self.h_coeff(r))
    }

    /// Regularized interface direction `Z = grad phi / sqrt(|grad phi|^2 + eta^2)`.
    ///
    /// With `eta = 0`, points where the gradient vanishes yield `Z = 0` by
    /// convention; `|Z| <= 1` pointwise in every case.
    pub fn z_field(&self, phi: &ScalarField) -> VectorField {
        let grad = gradient(phi);
        self.z_from_gradient(&grad)
    }

    pub(crate) fn z_from_gradient(&self, grad: &VectorField) -> VectorField {
        let eta2 = self.eta * self.eta;
        let grid = grad.grid().clone();
        let total = grid.total();
        let mut denom = vec![eta2; total];
        for c in grad.components() {
            for (d, g) in denom.iter_mut().zip(c.values()) {
                *d += g * g;
            }
        }
        for d in denom.iter_mut() {
            *d = d.sqrt();
        }
        let comps = grad
            .components()
            .iter()
            .map(|c| {
                let values = c
                    .values()
                    .iter()
                    .zip(&denom)
                    .map(|(&g, &d)| if d > 0.0 { g / d } else { 0.0 })
                    .collect();
                ScalarField::from_values(&grid, values).expect("component sized by grid")
            })
            .collect();
        VectorField::new(comps).expect("dim components on one grid")
    }

    /// Regularized gradient magnitude `sqrt(|grad phi|^2 + eta^2)`; this is
    /// the same quantity subtracted from rho in the auxiliary field `v` and
    /// used inside the coupling energy quadrature.
    pub fn grad_magnitude(&self, phi: &ScalarField) -> ScalarField {
        let grad = gradient(phi);
        self.magnitude_from_gradient(&grad)
    }

    pub(crate) fn magnitude_from_gradient(&self, grad: &VectorField) -> ScalarField {
        let eta2 = self.eta * self.eta;
        let grid = grad.grid().clone();
        let total = grid.total();
        let mut acc = vec![eta2; total];
        for c in grad.components() {
            for (d, g) in acc.iter_mut().zip(c.values()) {
                *d += g * g;
            }
        }
        for d in acc.iter_mut() {
            *d = d.sqrt();
        }
        ScalarField::from_values(&grid, acc).expect("sized by grid")
    }

    /// Total free energy of `(phi, rho)` by grid quadrature.
    pub fn energy_original(&self, phi: &ScalarField, rho: &ScalarField) -> f64 {
        let grad = gradient(phi);
        let mag = self.magnitude_from_gradient(&grad);
        let grid = phi.grid();
        let mut density = 0.0;
        let mut grad_sq = vec![0.0; grid.total()];
        for c in grad.components() {
            for (d, g) in grad_sq.iter_mut().zip(c.values()) {
                *d += g * g;
            }
        }
        for l in 0..grid.total() {
            let p = phi.values()[l];
            let r = rho.values()[l];
            let dw = p * p - 1.0;
            let coupling = r - mag.values()[l];
            density += 0.5 * self.eps * grad_sq[l]
                + dw * dw / (4.0 * self.eps)
                + 0.5 * self.alpha * coupling * coupling
                + self.beta * self.fh_potential(r);
        }
        density * grid.cell_volume()
    }

    /// Quadratized energy of a full state:
    /// `int eps/2 |grad phi|^2 + u^2/(4 eps) + alpha/2 v^2 + beta w^2 dx - beta B |Omega|`.
    pub fn energy_quadratized(&self, state: &State) -> f64 {
        let grid = state.phi.grid();
        let grad = gradient(&state.phi);
        let mut grad_sq = vec![0.0; grid.total()];
        for c in grad.components() {
            for (d, g) in grad_sq.iter_mut().zip(c.values()) {
                *d += g * g;
            }
        }
        let mut density = 0.0;
        for l in 0..grid.total() {
            let u = state.u.values()[l];
            let v = state.v.values()[l];
            let w = state.w.values()[l];
            density += 0.5 * self.eps * grad_sq[l]
                + u * u / (4.0 * self.eps)
                + 0.5 * self.alpha * v * v
                + self.beta * w * w;
        }
        density * grid.cell_volume() - self.beta * self.b_shift * grid.volume()
    }

    /// Build the auxiliary fields for initial data `(phi0, rho0)` at t = 0.
    pub fn init_state(&self, phi0: ScalarField, rho0: ScalarField) -> Result<State> {
        if phi0.grid().n() != rho0.grid().n() || phi0.grid().dim() != rho0.grid().dim() {
            return Err(Error::GridMismatch);
        }
        let mag = self.grad_magnitude(&phi0);
        let u = phi0.map(|p| p * p - 1.0);
        let v = rho0.zip_map(&mag, |r, m| r - m);
        let mut w_values = Vec::with_capacity(rho0.grid().total());
        for &r in rho0.values() {
            let gb = self.fh_potential(r) + self.b_shift;
            if gb <= 0.0 {
                return Err(Error::InvalidParams(format!(
                    "G(rho) + B = {gb} not positive at rho = {r}"
                )));
            }
            w_values.push(gb.sqrt());
        }
        let w = ScalarField::from_values(rho0.grid(), w_values)?;
        Ok(State { phi: phi0, rho: rho0, u, v, w, time: 0.0 })
    }
}

/// Full solution tuple at one time level.
#[derive(Debug, Clone)]
pub struct State {
    pub phi: ScalarField,
    pub rho: ScalarField,
    /// Double-well auxiliary, `phi^2 - 1` at initialization.
    pub u: ScalarField,
    /// Coupling auxiliary, `rho - |grad phi|` at initialization.
    pub v: ScalarField,
    /// Entropy-root auxiliary, `sqrt(G(rho) + B)` at initialization;
    /// positive in exact arithmetic. A negative minimum is a diagnostic,
    /// not an error.
    pub w: ScalarField,
    pub time: f64,
}

impl State {
    pub fn grid(&self) -> &Arc<Grid> {
        self.phi.grid()
    }

    pub fn mass_phi(&self) -> f64 {
        spectral::mean(&self.phi)
    }

    pub fn mass_rho(&self) -> f64 {
        spectral::mean(&self.rho)
    }

    /// Minimum of the entropy-root auxiliary; negative values indicate the
    /// quadratization has drifted far from its continuous meaning.
    pub fn w_min(&self) -> f64 {
        self.w.values().iter().fold(f64::INFINITY, |m, &v| m.min(v))
    }

    pub fn is_finite(&self) -> bool {
        self.phi.is_finite()
            && self.rho.is_finite()
            && self.u.is_finite()
            && self.v.is_finite()
            && self.w.is_finite()
    }
}
