//! Error norms, convergence-order estimation, energy/mass bookkeeping and
//! the operator property harness.

use crate::error::{Error, Result};
use crate::linsolve::{self, FieldPair, SolverConfig};
use crate::model::{ModelParams, State};
use crate::rng::SplitMix64;
use crate::schemes::{self, FrozenCoeffs, SchemeKind, StepOptions};
use crate::spectral::{self, Grid, ScalarField};
use std::sync::Arc;

/// Fixed seed for the randomized property checks, so reports reproduce.
pub const HARNESS_SEED: u64 = 0x5EED;

/// One row of the per-step energy and mass bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct EnergyRecord {
    pub time: f64,
    /// Free energy of (phi, rho) under the original functional.
    pub e_original: f64,
    /// Discrete quadratized energy the scheme provably dissipates.
    pub e_discrete: f64,
    pub mass_phi: f64,
    pub mass_rho: f64,
    /// Dirichlet seminorm of the reconstructed phi-potential.
    pub grad_mu_phi_sq: f64,
    pub grad_mu_rho_sq: f64,
}

/// One row of a temporal refinement study.
#[derive(Debug, Clone, Copy)]
pub struct ConvergenceRow {
    pub dt: f64,
    /// Sum of the phi and rho L2 errors against the benchmark solution.
    pub error_l2: f64,
    /// Pairwise order against the previous row; absent on the first row.
    pub observed_order: Option<f64>,
}

/// Sum of the L2 errors of the two phase variables.
pub fn l2_error_pair(a: &State, b: &State) -> f64 {
    let dphi = a.phi.zip_map(&b.phi, |x, y| x - y);
    let drho = a.rho.zip_map(&b.rho, |x, y| x - y);
    spectral::norm_l2(&dphi) + spectral::norm_l2(&drho)
}

/// Temporal refinement sweep settings.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub kind: SchemeKind,
    pub dts: Vec<f64>,
    pub t_end: f64,
    /// Benchmark time step; the benchmark runs BDF2 at this resolution.
    pub benchmark_dt: f64,
    pub options: StepOptions,
}

fn steps_for(t_end: f64, dt: f64) -> Result<usize> {
    let steps = t_end / dt;
    let rounded = steps.round();
    if (steps - rounded).abs() > 1e-9 * steps.abs().max(1.0) || rounded < 1.0 {
        return Err(Error::InvalidParams(format!(
            "t_end = {t_end} is not an integer multiple of dt = {dt}"
        )));
    }
    Ok(rounded as usize)
}

/// Run the benchmark once and each listed time step once; orders are
/// computed pairwise down the refinement ladder.
pub fn convergence_sweep(
    state0: &State,
    params: &ModelParams,
    cfg: &SweepConfig,
) -> Result<Vec<ConvergenceRow>> {
    if cfg.dts.is_empty() {
        return Err(Error::InvalidParams("sweep needs at least one dt".into()));
    }
    let min_dt = cfg.dts.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(cfg.benchmark_dt < min_dt) {
        return Err(Error::InvalidParams(format!(
            "benchmark dt {} must be finer than the swept dts (min {})",
            cfg.benchmark_dt, min_dt
        )));
    }
    let bench_steps = steps_for(cfg.t_end, cfg.benchmark_dt)?;
    let benchmark = schemes::integrate(
        state0,
        params,
        cfg.benchmark_dt,
        bench_steps,
        SchemeKind::Bdf2,
        &cfg.options,
        |_, _| {},
    )
    .map_err(|e| Error::SweepAborted { dt: cfg.benchmark_dt, source: Box::new(e) })?;

    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(cfg.dts.len());
    for &dt in &cfg.dts {
        let steps = steps_for(cfg.t_end, dt)?;
        let final_state = schemes::integrate(
            state0,
            params,
            dt,
            steps,
            cfg.kind,
            &cfg.options,
            |_, _| {},
        )
        .map_err(|e| Error::SweepAborted { dt, source: Box::new(e) })?;
        let error_l2 = l2_error_pair(&final_state, &benchmark);
        let observed_order = rows.last().map(|prev: &ConvergenceRow| {
            (prev.error_l2 / error_l2).ln() / (prev.dt / dt).ln()
        });
        rows.push(ConvergenceRow { dt, error_l2, observed_order });
    }
    Ok(rows)
}

/// Result of the operator property checks for one scheme on one grid.
#[derive(Debug, Clone)]
pub struct HarnessEntry {
    pub kind: SchemeKind,
    pub grid_n: usize,
    pub trials: usize,
    /// max |(Ax, y) - (Ay, x)| normalized by ||Ax|| ||y|| + ||Ay|| ||x||.
    pub symmetry_defect: f64,
    /// max relative defect of (Ax, x) against its sum-of-squares expansion.
    pub positivity_defect: f64,
    /// Relative difference between the Krylov solution and a dense
    /// elimination oracle; only measured on the 8x8 grid.
    pub dense_oracle_defect: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct HarnessReport {
    pub entries: Vec<HarnessEntry>,
}

impl HarnessReport {
    pub fn max_symmetry_defect(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.symmetry_defect))
    }

    pub fn max_positivity_defect(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.positivity_defect))
    }

    pub fn max_dense_oracle_defect(&self) -> f64 {
        self.entries
            .iter()
            .filter_map(|e| e.dense_oracle_defect)
            .fold(0.0, f64::max)
    }
}

/// Zero-mean random trigonometric polynomial with modes `|k_d| <= kmax`
/// (kept clear of the highest resolvable mode), deterministic in `rng`.
pub fn random_smooth_field(
    grid: &Arc<Grid>,
    rng: &mut SplitMix64,
    kmax: usize,
    amplitude: f64,
) -> ScalarField {
    let kmax = kmax.min(grid.n() / 2 - 1) as i64;
    let modes = 12;
    let dim = grid.dim();
    let mut terms: Vec<([f64; 3], f64, f64)> = Vec::with_capacity(modes);
    while terms.len() < modes {
        let mut k = [0.0; 3];
        let mut any = false;
        for kc in k.iter_mut().take(dim) {
            let v = (rng.next_f64() * (2 * kmax + 1) as f64).floor() as i64 - kmax;
            *kc = v as f64;
            any |= v != 0;
        }
        if !any {
            continue;
        }
        let ksq: f64 = k.iter().map(|v| v * v).sum();
        let amp = amplitude * rng.next_symmetric() / (1.0 + ksq);
        let phase = rng.next_f64() * 2.0 * std::f64::consts::PI;
        terms.push((k, amp, phase));
    }
    let scale = 2.0 * std::f64::consts::PI / grid.length();
    let field = ScalarField::from_fn(grid, |x, y, z| {
        terms
            .iter()
            .map(|(k, amp, phase)| amp * (scale * (k[0] * x + k[1] * y + k[2] * z) + phase).cos())
            .sum()
    });
    spectral::project_zero_mean(&field)
}

fn random_state(grid: &Arc<Grid>, params: &ModelParams, rng: &mut SplitMix64) -> Result<State> {
    let phi = random_smooth_field(grid, rng, 3, 1.0).map(|v| v + 0.1);
    let rho = random_smooth_field(grid, rng, 3, 0.2).map(|v| v + 0.4);
    params.init_state(phi, rho)
}

/// Randomized verification that the condensed step operator is symmetric,
/// satisfies its sum-of-squares expansion on the zero-mean subspace, and
/// (at 8x8) agrees with a dense brute-force elimination oracle.
pub fn operator_property_harness(
    grid_sizes: &[usize],
    trials: usize,
    seed: u64,
) -> Result<HarnessReport> {
    let params = ModelParams::default().validated()?;
    let mut rng = SplitMix64::new(seed);
    let mut report = HarnessReport::default();
    for &kind in &[SchemeKind::FirstOrder, SchemeKind::Bdf2, SchemeKind::CrankNicolson] {
        for &n in grid_sizes {
            let grid = Grid::new_default(2, n)?;
            let mut sym_max: f64 = 0.0;
            let mut pos_max: f64 = 0.0;
            for _ in 0..trials {
                let state_n = random_state(&grid, &params, &mut rng)?;
                let state_prev = random_state(&grid, &params, &mut rng)?;
                let prev = if kind == SchemeKind::FirstOrder { None } else { Some(&state_prev) };
                let coeffs = FrozenCoeffs::build(kind, &state_n, prev, &params, false)?;
                let dt = 10f64.powf(-4.0 + 2.0 * rng.next_f64());

                let x = random_pair(&grid, &mut rng);
                let y = random_pair(&grid, &mut rng);
                let ax = apply_pair(&x, &coeffs, &params, dt)?;
                let ay = apply_pair(&y, &coeffs, &params, dt)?;
                let axy = ax.inner(&y);
                let ayx = ay.inner(&x);
                let scale = ax.norm() * y.norm() + ay.norm() * x.norm();
                sym_max = sym_max.max((axy - ayx).abs() / scale.max(f64::MIN_POSITIVE));

                let quad = ax.inner(&x);
                let expansion = positivity_expansion(&x, &coeffs, &params, dt)?;
                pos_max = pos_max
                    .max((quad - expansion).abs() / expansion.abs().max(f64::MIN_POSITIVE));
            }
            let dense_oracle_defect = if n == 8 {
                Some(dense_oracle_defect(&grid, kind, &params, &mut rng)?)
            } else {
                None
            };
            report.entries.push(HarnessEntry {
                kind,
                grid_n: n,
                trials,
                symmetry_defect: sym_max,
                positivity_defect: pos_max,
                dense_oracle_defect,
            });
        }
    }
    Ok(report)
}

fn random_pair(grid: &Arc<Grid>, rng: &mut SplitMix64) -> FieldPair {
    FieldPair::new(
        random_smooth_field(grid, rng, 3, 1.0),
        random_smooth_field(grid, rng, 3, 1.0),
    )
}

fn apply_pair(
    x: &FieldPair,
    coeffs: &FrozenCoeffs,
    params: &ModelParams,
    dt: f64,
) -> Result<FieldPair> {
    let (p, r) = schemes::apply_operator(&x.phi, &x.rho, coeffs, params, dt)?;
    Ok(FieldPair::new(p, r))
}

/// Independent evaluation of the operator's quadratic form:
/// `1/(cM1 dt)||x_phi||_{H^-1}^2 + 1/(cM2 dt)||x_rho||_{H^-1}^2
///  + eps||grad x_phi||^2 + (2/eps)||phi* x_phi||^2 + (beta/2)||H* x_rho||^2
///  + alpha||x_rho - Z*.grad x_phi||^2`, all via the plain spectral ops.
fn positivity_expansion(
    x: &FieldPair,
    coeffs: &FrozenCoeffs,
    params: &ModelParams,
    dt: f64,
) -> Result<f64> {
    let c = coeffs.mass_factor;
    let hm1_phi = spectral::norm_hminus1(&x.phi)?;
    let hm1_rho = spectral::norm_hminus1(&x.rho)?;
    let grad = spectral::gradient(&x.phi);
    let mut grad_sq = 0.0;
    for comp in grad.components() {
        grad_sq += spectral::inner(comp, comp);
    }
    let phi_weighted = x.phi.zip_map(&coeffs.phi_star, |v, p| v * p);
    let h_weighted = x.rho.zip_map(&coeffs.h_star, |v, h| v * h);
    let mut coupling = x.rho.clone();
    {
        let total = coupling.grid().total();
        let mut vals = coupling.values().to_vec();
        for (axis, comp) in grad.components().iter().enumerate() {
            let z = coeffs.z_star.component(axis).values();
            for j in 0..total {
                vals[j] -= z[j] * comp.values()[j];
            }
        }
        coupling = ScalarField::from_values(coupling.grid(), vals)?;
    }
    Ok(hm1_phi * hm1_phi / (c * params.m1 * dt)
        + hm1_rho * hm1_rho / (c * params.m2 * dt)
        + params.eps * grad_sq
        + 2.0 / params.eps * spectral::inner(&phi_weighted, &phi_weighted)
        + 0.5 * params.beta * spectral::inner(&h_weighted, &h_weighted)
        + params.alpha * spectral::inner(&coupling, &coupling))
}

/// Materialize the operator column by column on the 8x8 grid (with the mean
/// modes pinned), solve by dense Gaussian elimination, and compare against
/// the Krylov path.
fn dense_oracle_defect(
    grid: &Arc<Grid>,
    kind: SchemeKind,
    params: &ModelParams,
    rng: &mut SplitMix64,
) -> Result<f64> {
    let state_n = random_state(grid, params, rng)?;
    let state_prev = random_state(grid, params, rng)?;
    let prev = if kind == SchemeKind::FirstOrder { None } else { Some(&state_prev) };
    let coeffs = FrozenCoeffs::build(kind, &state_n, prev, params, false)?;
    let dt = 1e-3;
    let total = grid.total();
    let dim2 = 2 * total;

    // M z = A(P0 z) + mean(z_phi) 1_phi + mean(z_rho) 1_rho is nonsingular
    // and agrees with A on zero-mean pairs.
    let mut matrix = vec![vec![0.0; dim2]; dim2];
    for col in 0..dim2 {
        let mut phi = vec![0.0; total];
        let mut rho = vec![0.0; total];
        if col < total {
            phi[col] = 1.0;
        } else {
            rho[col - total] = 1.0;
        }
        let mean_phi = phi.iter().sum::<f64>() / total as f64;
        let mean_rho = rho.iter().sum::<f64>() / total as f64;
        for v in phi.iter_mut() {
            *v -= mean_phi;
        }
        for v in rho.iter_mut() {
            *v -= mean_rho;
        }
        let x = FieldPair::new(
            ScalarField::from_values(grid, phi)?,
            ScalarField::from_values(grid, rho)?,
        );
        let ax = apply_pair(&x, &coeffs, params, dt)?;
        for row in 0..total {
            matrix[row][col] = ax.phi.values()[row] + mean_phi;
            matrix[row + total][col] = ax.rho.values()[row] + mean_rho;
        }
    }

    let b = random_pair(grid, rng);
    let mut rhs_vec = vec![0.0; dim2];
    rhs_vec[..total].copy_from_slice(b.phi.values());
    rhs_vec[total..].copy_from_slice(b.rho.values());
    let direct = dense_solve(matrix, rhs_vec)?;

    let cfg = SolverConfig { rel_tol: 1e-12, ..SolverConfig::default() };
    let precond = linsolve::make_preconditioner(params, dt, &coeffs);
    let (x, _) = linsolve::pcg(
        |p| apply_pair(p, &coeffs, params, dt),
        &b,
        |r| precond.apply_inv(r),
        None,
        &cfg,
    )?;

    let mut num = 0.0;
    let mut den = 0.0;
    for j in 0..total {
        let dphi = x.phi.values()[j] - direct[j];
        let drho = x.rho.values()[j] - direct[j + total];
        num += dphi * dphi + drho * drho;
        den += direct[j] * direct[j] + direct[j + total] * direct[j + total];
    }
    Ok((num / den.max(f64::MIN_POSITIVE)).sqrt())
}

/// Plain Gaussian elimination with partial pivoting; the brute-force side
/// of the dual-route solver check, kept independent of the Krylov path.
pub(crate) fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[row][col].abs() > a[pivot][col].abs() {
                pivot = row;
            }
        }
        if a[pivot][col].abs() < 1e-300 {
            return Err(Error::InvalidParams("dense oracle matrix is singular".into()));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for col in (0..n).rev() {
        let mut s = b[col];
        for k in col + 1..n {
            s -= a[col][k] * x[k];
        }
        x[col] = s / a[col][col];
    }
    Ok(x)
}
