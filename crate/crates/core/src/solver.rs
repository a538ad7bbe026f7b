//! Penalty dual decomposition solver with closed-form BSUM block updates.
//!
//! The weighted sum-rate problem over the precoder V and IRS phases f is
//! lifted with a power-feasible precoder copy V̄ and an auxiliary cross-gain
//! matrix X tied by the consensus constraints `V̄ = V` and `X = VᴴĜᴴ`. The
//! augmented Lagrangian of the lifted problem is minimized by cyclic block
//! updates, each available in closed form:
//!
//! 1. multipliers — the WMMSE receive scalars and weights,
//! 2. V — a ridge-regularized Hermitian linear solve,
//! 3. V̄ — projection of `V + ρZ_v` onto the transmit power ball,
//! 4. X — a column-scaled affine map (the regularizing factor is diagonal),
//! 5. f — cyclic coordinate minimization of a quadratic with unit-modulus
//!    coordinates.
//!
//! An outer loop performs dual ascent on Z_v, Z_g when the constraint
//! violation is falling fast enough and otherwise shrinks the penalty
//! parameter ρ, until the violation drops below tolerance.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{effective_matrix, random_phases, ChannelEstimate};
use crate::rate::{
    al_objective, optimal_multipliers, surrogate_objective, BeamformingSolution, WmmseMultipliers,
};
use crate::{max_abs, CMat, CRow, CVec};

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("infeasible initial point: {0}")]
    InfeasibleInit(String),
    #[error("inconsistent problem dimensions: {0}")]
    DimensionMismatch(String),
    #[error("precoder system lost positive definiteness (rho = {rho})")]
    LinearSolveFailed { rho: f64 },
    #[error("non-finite objective at outer iteration {outer}, sweep {sweep}")]
    NumericalFailure { outer: usize, sweep: usize },
}

/// Stopping rules and schedule constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverOptions {
    /// Relative change of the inner objective that ends a BSUM phase.
    pub inner_tol: f64,
    pub inner_max_sweeps: usize,
    /// Constraint-violation level that terminates the outer loop.
    pub outer_tol: f64,
    pub outer_max_iters: usize,
    /// Multiplier applied to ρ on a penalty step.
    pub rho_decay: f64,
    /// Initial penalty; `None` selects 500K/(2KM + M² + KN_T).
    pub rho_init: Option<f64>,
    /// The dual step is taken when the violation is below
    /// `violation_decay · (previous violation)`; otherwise ρ decays.
    pub violation_decay: f64,
    /// Coordinate-descent passes over the phases per BSUM sweep.
    pub phase_cd_sweeps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            inner_tol: 1e-4,
            inner_max_sweeps: 100,
            outer_tol: 1e-5,
            outer_max_iters: 200,
            rho_decay: 0.7,
            rho_init: None,
            violation_decay: 0.9,
            phase_cd_sweeps: 3,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<(), SolverError> {
        let ok = self.inner_tol > 0.0
            && self.outer_tol > 0.0
            && self.rho_decay > 0.0
            && self.rho_decay < 1.0
            && self.violation_decay > 0.0
            && self.inner_max_sweeps > 0
            && self.outer_max_iters > 0
            && self.phase_cd_sweeps > 0
            && self.rho_init.map_or(true, |r| r > 0.0);
        if ok {
            Ok(())
        } else {
            Err(SolverError::DimensionMismatch(
                "solver options out of range".into(),
            ))
        }
    }
}

/// Default initial penalty, 500K/(2KM + M² + KN_T).
pub fn default_penalty(n_users: usize, n_elements: usize, n_tx: usize) -> f64 {
    let (k, m, n_t) = (n_users as f64, n_elements as f64, n_tx as f64);
    500.0 * k / (2.0 * k * m + m * m + k * n_t)
}

/// One solvable design instance: channel knowledge plus system scalars. The
/// channel rows are whatever the designer believes in (estimates for the
/// robust and non-robust schemes, the truth for perfect CSI).
#[derive(Debug, Clone)]
pub struct SolverProblem<'a> {
    /// Direct BS→user rows, K×N_T.
    pub g_bu: &'a CMat,
    /// Per-user cascaded matrices, each M×N_T.
    pub cascaded: &'a [CMat],
    /// Design-time aggregated error variance σ_g².
    pub sigma_g_sq: f64,
    pub noise_var: f64,
    pub power_budget: f64,
    /// User priority weights α_i.
    pub weights: &'a [f64],
}

impl<'a> SolverProblem<'a> {
    /// Design view of a channel estimate; `sigma_override` replaces the
    /// estimate's aggregated error variance (the non-robust scheme passes 0).
    pub fn from_estimate(
        estimate: &'a ChannelEstimate,
        sigma_override: Option<f64>,
        noise_var: f64,
        power_budget: f64,
        weights: &'a [f64],
    ) -> Self {
        Self {
            g_bu: &estimate.g_bu_hat,
            cascaded: &estimate.cascaded_hat,
            sigma_g_sq: sigma_override.unwrap_or(estimate.sigma_g_sq),
            noise_var,
            power_budget,
            weights,
        }
    }

    /// (N_T, K, M).
    pub fn dims(&self) -> (usize, usize, usize) {
        let n_t = self.g_bu.ncols();
        let k = self.g_bu.nrows();
        let m = self.cascaded.first().map_or(0, |c| c.nrows());
        (n_t, k, m)
    }

    /// Effective channel matrix Ĝ for a phase row.
    pub fn effective(&self, phases: &CRow) -> CMat {
        effective_matrix(self.g_bu, self.cascaded, phases)
    }

    fn validate(&self) -> Result<(), SolverError> {
        let (n_t, k, m) = self.dims();
        if k == 0 || n_t == 0 || m == 0 {
            return Err(SolverError::DimensionMismatch(
                "empty channel dimensions".into(),
            ));
        }
        if self.cascaded.len() != k {
            return Err(SolverError::DimensionMismatch(format!(
                "{} cascaded matrices for {} users",
                self.cascaded.len(),
                k
            )));
        }
        if self
            .cascaded
            .iter()
            .any(|c| c.nrows() != m || c.ncols() != n_t)
        {
            return Err(SolverError::DimensionMismatch(
                "cascaded matrix shape mismatch".into(),
            ));
        }
        if self.weights.len() != k {
            return Err(SolverError::DimensionMismatch(format!(
                "{} weights for {} users",
                self.weights.len(),
                k
            )));
        }
        if !(self.power_budget > 0.0) || !(self.noise_var > 0.0) || self.sigma_g_sq < 0.0 {
            return Err(SolverError::DimensionMismatch(
                "nonpositive power/noise or negative error variance".into(),
            ));
        }
        Ok(())
    }
}

/// Feasible starting point for the solver.
#[derive(Debug, Clone)]
pub struct SolverInit {
    pub v: CMat,
    pub phases: CRow,
}

impl SolverInit {
    /// Matched-filter start: random phases (or a supplied row), precoder
    /// columns proportional to the conjugated effective rows, each scaled to
    /// power P_T/K.
    pub fn matched_filter(
        problem: &SolverProblem,
        phases: Option<CRow>,
        rng: &mut impl Rng,
    ) -> Self {
        let (n_t, k, m) = problem.dims();
        let phases = phases.unwrap_or_else(|| random_phases(m, rng));
        let g = problem.effective(&phases);
        let per_user = (problem.power_budget / k as f64).sqrt();
        let mut v = CMat::zeros(n_t, k);
        for i in 0..k {
            let mut col: CVec = g.row(i).adjoint();
            let norm = col.norm();
            if norm < 1e-12 {
                // Degenerate effective row: fall back to a random direction.
                let raw = crate::channel::complex_gaussian(n_t, 1, 1.0, rng);
                let raw_norm = raw.norm().max(1e-30);
                col = CVec::from_column_slice(raw.as_slice()) / Complex64::new(raw_norm, 0.0);
            } else {
                col /= Complex64::new(norm, 0.0);
            }
            v.set_column(i, &(col * Complex64::new(per_user, 0.0)));
        }
        Self { v, phases }
    }

    /// Random start scaled onto the power boundary.
    pub fn random(problem: &SolverProblem, rng: &mut impl Rng) -> Self {
        let (n_t, k, m) = problem.dims();
        let raw = crate::channel::complex_gaussian(n_t, k, 1.0, rng);
        let scale = problem.power_budget.sqrt() / raw.norm().max(1e-30);
        Self {
            v: raw * Complex64::new(scale, 0.0),
            phases: random_phases(m, rng),
        }
    }

    fn validate(&self, problem: &SolverProblem) -> Result<(), SolverError> {
        let (n_t, k, m) = problem.dims();
        if self.v.nrows() != n_t || self.v.ncols() != k || self.phases.ncols() != m {
            return Err(SolverError::DimensionMismatch(
                "initial point shape mismatch".into(),
            ));
        }
        if self.v.norm_squared() > problem.power_budget + 1e-9 {
            return Err(SolverError::InfeasibleInit(format!(
                "initial precoder power {} exceeds budget {}",
                self.v.norm_squared(),
                problem.power_budget
            )));
        }
        if self
            .phases
            .iter()
            .any(|psi| (psi.norm() - 1.0).abs() > 1e-12)
        {
            return Err(SolverError::InfeasibleInit(
                "initial phases are not unit-modulus".into(),
            ));
        }
        Ok(())
    }
}

/// All PDD/BSUM iterates.
#[derive(Debug, Clone)]
pub struct SolverState {
    /// Precoder V, N_T×K.
    pub v: CMat,
    /// Power-feasible copy V̄.
    pub v_bar: CMat,
    /// Auxiliary cross gains X, K×K.
    pub x: CMat,
    /// IRS phase row f.
    pub phases: CRow,
    /// Dual matrix for V̄ = V.
    pub z_v: CMat,
    /// Dual matrix for X = VᴴĜᴴ.
    pub z_g: CMat,
    /// Penalty parameter ρ.
    pub rho: f64,
    pub multipliers: WmmseMultipliers,
    /// Effective channel Ĝ for the current phases.
    pub g_hat: CMat,
}

impl SolverState {
    /// Consensus start: Ĝ from the initial phases, X = VᴴĜᴴ, V̄ = V, zero
    /// duals, neutral multipliers.
    pub fn new(problem: &SolverProblem, init: &SolverInit, rho: f64) -> Self {
        let (_, k, _) = problem.dims();
        let g_hat = problem.effective(&init.phases);
        let x = init.v.adjoint() * g_hat.adjoint();
        Self {
            v: init.v.clone(),
            v_bar: init.v.clone(),
            x,
            phases: init.phases.clone(),
            z_v: CMat::zeros(init.v.nrows(), init.v.ncols()),
            z_g: CMat::zeros(k, k),
            rho,
            multipliers: WmmseMultipliers::neutral(k),
            g_hat,
        }
    }

    /// WMMSE multiplier refresh from the current (X, V).
    pub fn update_multipliers(&mut self, problem: &SolverProblem) {
        self.multipliers =
            optimal_multipliers(&self.x, &self.v, problem.sigma_g_sq, problem.noise_var);
    }

    /// Closed-form precoder update: solves
    /// `(2ρσ_g²b·I + I + ĜᴴĜ)·V = V̄ − ρZ_v + Ĝᴴ(Xᴴ + ρZ_gᴴ)`
    /// through a Cholesky factorization of the Hermitian system.
    pub fn update_precoder(&mut self, problem: &SolverProblem) -> Result<(), SolverError> {
        let n_t = self.v.nrows();
        let b = self.multipliers.b_scalar(problem.weights);
        let shift = 1.0 + 2.0 * self.rho * problem.sigma_g_sq * b;
        let mut a = self.g_hat.adjoint() * &self.g_hat;
        for i in 0..n_t {
            a[(i, i)] += Complex64::new(shift, 0.0);
        }
        let rhs = &self.v_bar - &self.z_v * Complex64::new(self.rho, 0.0)
            + self.g_hat.adjoint()
                * (self.x.adjoint() + self.z_g.adjoint() * Complex64::new(self.rho, 0.0));
        let chol = a
            .cholesky()
            .ok_or(SolverError::LinearSolveFailed { rho: self.rho })?;
        self.v = chol.solve(&rhs);
        Ok(())
    }

    /// Projects `V + ρZ_v` onto the Frobenius ball of radius √P_T.
    pub fn update_precoder_copy(&mut self, power_budget: f64) {
        let target = &self.v + &self.z_v * Complex64::new(self.rho, 0.0);
        self.v_bar = project_power_ball(&target, power_budget);
    }

    /// Closed-form auxiliary update: `X = (2ρ·DA + VᴴĜᴴ − ρZ_g)(2ρB + I)⁻¹`
    /// with diagonal B, i.e. a per-column scaling.
    pub fn update_aux(&mut self, problem: &SolverProblem) {
        let k = self.x.nrows();
        let a = self.multipliers.a_diag(problem.weights);
        let b = self.multipliers.b_diag(problem.weights);
        let mut num =
            self.v.adjoint() * self.g_hat.adjoint() - &self.z_g * Complex64::new(self.rho, 0.0);
        for i in 0..k {
            num[(i, i)] += Complex64::new(2.0 * self.rho * a[i], 0.0) * self.multipliers.u[i];
        }
        for j in 0..k {
            let scale = Complex64::new(1.0 / (2.0 * self.rho * b[j] + 1.0), 0.0);
            let col = num.column(j) * scale;
            self.x.column_mut(j).copy_from(&col);
        }
    }

    /// Quadratic form of the phase subproblem: the phase-dependent part of
    /// the objective equals `f·H·fᴴ − 2Re{c·fᴴ} + const` with Hermitian PSD
    /// H. Returns (H, c).
    pub fn build_phase_quadratic(&self, problem: &SolverProblem) -> (CMat, CRow) {
        let (_, k, m) = problem.dims();
        let inv_2rho = Complex64::new(1.0 / (2.0 * self.rho), 0.0);
        let mut h = CMat::zeros(m, m);
        let mut c_adj = CVec::zeros(m);
        // Residual coefficients X + ρZ_g − VᴴG_BUᴴ against the direct links.
        let m_mat = &self.x + &self.z_g * Complex64::new(self.rho, 0.0)
            - self.v.adjoint() * problem.g_bu.adjoint();
        for j in 0..k {
            let b_j = &problem.cascaded[j] * &self.v; // M×K, column i = Gc⁽ʲ⁾·v_i
            h += &b_j * b_j.adjoint();
            c_adj += &b_j * m_mat.column(j);
        }
        h *= inv_2rho;
        c_adj *= inv_2rho;
        // Hermitian up to rounding by construction; make it exact.
        h = (&h + h.adjoint()) * Complex64::new(0.5, 0.0);
        (h, c_adj.adjoint())
    }

    /// Cyclic coordinate descent over the unit-modulus phases: each
    /// coordinate moves to `q_k/|q_k|` with `q_k = c_k − Σ_{i≠k} ψ_i·H_ik`,
    /// the exact single-coordinate minimizer; a vanishing q_k keeps the
    /// current value (the objective is then flat in ψ_k).
    pub fn update_phases(&mut self, h: &CMat, c: &CRow, sweeps: usize) {
        let m = self.phases.ncols();
        let mut s = &self.phases * h; // s_j = Σ_i ψ_i·H_ij
        for _ in 0..sweeps {
            for k in 0..m {
                let q = c[k] - (s[k] - self.phases[k] * h[(k, k)]);
                if q.norm() <= 1e-14 {
                    continue;
                }
                let new = q / Complex64::new(q.norm(), 0.0);
                let delta = new - self.phases[k];
                if delta.norm_sqr() > 0.0 {
                    for j in 0..m {
                        s[j] += delta * h[(k, j)];
                    }
                    self.phases[k] = new;
                }
            }
        }
    }

    /// Rebuilds Ĝ from the current phases.
    pub fn refresh_effective(&mut self, problem: &SolverProblem) {
        self.g_hat = problem.effective(&self.phases);
    }

    /// One full BSUM sweep (multipliers, V, V̄, X, f, then Ĝ refresh);
    /// returns the post-sweep inner objective.
    pub fn bsum_sweep(
        &mut self,
        problem: &SolverProblem,
        phase_cd_sweeps: usize,
    ) -> Result<f64, SolverError> {
        self.update_multipliers(problem);
        self.update_precoder(problem)?;
        self.update_precoder_copy(problem.power_budget);
        self.update_aux(problem);
        let (h, c) = self.build_phase_quadratic(problem);
        self.update_phases(&h, &c, phase_cd_sweeps);
        self.refresh_effective(problem);
        Ok(self.surrogate_objective(problem))
    }

    /// Max-norm violation of the consensus constraints,
    /// `max(‖V − V̄‖_∞, ‖X − VᴴĜᴴ‖_∞)`.
    pub fn constraint_violation(&self) -> f64 {
        let r_v = &self.v - &self.v_bar;
        let r_g = &self.x - self.v.adjoint() * self.g_hat.adjoint();
        max_abs(&r_v).max(max_abs(&r_g))
    }

    /// Weighted-MSE augmented Lagrangian, Σα_i·w_i·e_i + P_ρ.
    pub fn al_objective(&self, problem: &SolverProblem) -> f64 {
        al_objective(
            problem.weights,
            &self.multipliers,
            &self.v,
            &self.v_bar,
            &self.x,
            &self.g_hat,
            &self.z_v,
            &self.z_g,
            self.rho,
            problem.sigma_g_sq,
            problem.noise_var,
        )
    }

    /// Inner objective traced by the solver, Σα_i(w_i·e_i − ln w_i − 1) + P_ρ;
    /// non-increasing under every block update including the multiplier
    /// refresh.
    pub fn surrogate_objective(&self, problem: &SolverProblem) -> f64 {
        surrogate_objective(
            problem.weights,
            &self.multipliers,
            &self.v,
            &self.v_bar,
            &self.x,
            &self.g_hat,
            &self.z_v,
            &self.z_g,
            self.rho,
            problem.sigma_g_sq,
            problem.noise_var,
        )
    }
}

/// Projection onto the Frobenius ball {‖X‖_F ≤ √budget}: the point itself
/// inside the ball, radial scaling to the boundary outside.
pub fn project_power_ball(target: &CMat, power_budget: f64) -> CMat {
    let radius = power_budget.sqrt();
    let norm = target.norm();
    let denom = norm + (radius - norm).max(0.0);
    if denom <= 0.0 {
        return target.clone();
    }
    target * Complex64::new(radius / denom, 0.0)
}

/// Progress record for one solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub outer_iters: usize,
    pub inner_sweeps_total: usize,
    pub final_violation: f64,
    /// Post-sweep inner objective, all sweeps concatenated.
    pub objective_trace: Vec<f64>,
    /// Sweep count per outer iteration; segments the trace into fixed-(ρ, Z)
    /// phases.
    pub sweeps_per_outer: Vec<usize>,
    pub wall_time_ms: f64,
}

impl ConvergenceReport {
    pub fn converged(&self, options: &SolverOptions) -> bool {
        self.final_violation < options.outer_tol
    }
}

/// Runs the full PDD loop from a feasible initial point. The returned
/// precoder is the final power-feasible copy V̄ and the phases are exactly
/// unit-modulus.
pub fn solve(
    problem: &SolverProblem,
    options: &SolverOptions,
    init: &SolverInit,
) -> Result<(BeamformingSolution, ConvergenceReport), SolverError> {
    problem.validate()?;
    options.validate()?;
    init.validate(problem)?;

    let start = std::time::Instant::now();
    let (n_t, k, m) = problem.dims();
    let rho0 = options
        .rho_init
        .unwrap_or_else(|| default_penalty(k, m, n_t));
    let mut state = SolverState::new(problem, init, rho0);

    let mut trace = Vec::new();
    let mut sweeps_per_outer = Vec::new();
    let mut total_sweeps = 0usize;
    let mut switch_level = f64::INFINITY;
    let mut outer_iters = 0usize;
    let mut violation = state.constraint_violation();

    for outer in 1..=options.outer_max_iters {
        outer_iters = outer;
        let mut prev = state.surrogate_objective(problem);
        let mut sweeps = 0usize;
        loop {
            let obj = state.bsum_sweep(problem, options.phase_cd_sweeps)?;
            sweeps += 1;
            total_sweeps += 1;
            trace.push(obj);
            if !obj.is_finite() {
                return Err(SolverError::NumericalFailure {
                    outer,
                    sweep: sweeps,
                });
            }
            let rel = (prev - obj).abs() / (1.0 + prev.abs());
            prev = obj;
            if rel < options.inner_tol || sweeps >= options.inner_max_sweeps {
                break;
            }
        }
        sweeps_per_outer.push(sweeps);

        violation = state.constraint_violation();
        if violation < options.outer_tol {
            break;
        }
        if violation < switch_level {
            // Dual ascent on both consensus constraints.
            let inv_rho = Complex64::new(1.0 / state.rho, 0.0);
            state.z_v += (&state.v - &state.v_bar) * inv_rho;
            state.z_g += (&state.x - state.v.adjoint() * state.g_hat.adjoint()) * inv_rho;
        } else {
            state.rho *= options.rho_decay;
        }
        switch_level = options.violation_decay * violation;
    }

    let solution = BeamformingSolution {
        precoder: state.v_bar.clone(),
        phases: state.phases.clone(),
    };
    let report = ConvergenceReport {
        outer_iters,
        inner_sweeps_total: total_sweeps,
        final_violation: violation,
        objective_trace: trace,
        sweeps_per_outer,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((solution, report))
}
