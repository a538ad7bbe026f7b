//! Shared fixtures for the integration suites: random solver states with a
//! consistent effective channel, and central finite differences of the
//! augmented-Lagrangian objective.

#![allow(dead_code)]

use num_complex::Complex64;
use rand::Rng;

use irsbeam::channel::{complex_gaussian, random_phases};
use irsbeam::rate::WmmseMultipliers;
use irsbeam::rng::labeled_rng;
use irsbeam::solver::{SolverProblem, SolverState};
use irsbeam::{CMat, CRow};

/// Owned problem data (the solver borrows from it).
pub struct ProblemData {
    pub g_bu: CMat,
    pub cascaded: Vec<CMat>,
    pub weights: Vec<f64>,
    pub sigma_g_sq: f64,
    pub noise_var: f64,
    pub power_budget: f64,
}

impl ProblemData {
    pub fn random(seed: u64, n_t: usize, k: usize, m: usize, sigma_g_sq: f64) -> Self {
        let mut rng = labeled_rng(0xDA7A, seed);
        let g_bu = complex_gaussian(k, n_t, 1.0, &mut rng);
        let cascaded = (0..k)
            .map(|_| complex_gaussian(m, n_t, 1.0, &mut rng))
            .collect();
        let weights = (0..k).map(|_| 0.5 + 1.5 * rng.gen::<f64>()).collect();
        Self {
            g_bu,
            cascaded,
            weights,
            sigma_g_sq,
            noise_var: 1.0,
            power_budget: 10.0,
        }
    }

    pub fn problem(&self) -> SolverProblem<'_> {
        SolverProblem {
            g_bu: &self.g_bu,
            cascaded: &self.cascaded,
            sigma_g_sq: self.sigma_g_sq,
            noise_var: self.noise_var,
            power_budget: self.power_budget,
            weights: &self.weights,
        }
    }
}

/// Fully random (not consensus-consistent) state whose cached effective
/// channel matches its phases.
pub fn random_state(data: &ProblemData, seed: u64) -> SolverState {
    let problem = data.problem();
    let (n_t, k, m) = problem.dims();
    let mut rng = labeled_rng(0x57A7E, seed);
    let phases: CRow = random_phases(m, &mut rng);
    let g_hat = problem.effective(&phases);
    let u_draw = complex_gaussian(1, k, 0.5, &mut rng);
    SolverState {
        v: complex_gaussian(n_t, k, 1.0, &mut rng),
        v_bar: complex_gaussian(n_t, k, 1.0, &mut rng),
        x: complex_gaussian(k, k, 1.0, &mut rng),
        phases,
        z_v: complex_gaussian(n_t, k, 0.3, &mut rng),
        z_g: complex_gaussian(k, k, 0.3, &mut rng),
        rho: 0.3 + 1.7 * rng.gen::<f64>(),
        multipliers: WmmseMultipliers {
            u: (0..k).map(|i| u_draw[(0, i)]).collect(),
            w: (0..k).map(|_| 1.0 + 2.0 * rng.gen::<f64>()).collect(),
        },
        g_hat,
    }
}

/// Central finite differences of the AL objective with respect to the real
/// and imaginary parts of every entry of one complex matrix field. Returns
/// the largest gradient component magnitude.
pub fn fd_gradient_max<F>(state: &SolverState, problem: &SolverProblem, field: F, step: f64) -> f64
where
    F: Fn(&mut SolverState) -> &mut CMat,
{
    let mut work = state.clone();
    let (rows, cols) = {
        let m = field(&mut work);
        (m.nrows(), m.ncols())
    };
    let mut max_grad = 0.0f64;
    for r in 0..rows {
        for c in 0..cols {
            for part in 0..2 {
                let delta = if part == 0 {
                    Complex64::new(step, 0.0)
                } else {
                    Complex64::new(0.0, step)
                };
                field(&mut work)[(r, c)] += delta;
                let plus = work.al_objective(problem);
                field(&mut work)[(r, c)] -= delta + delta;
                let minus = work.al_objective(problem);
                field(&mut work)[(r, c)] += delta;
                let grad = (plus - minus) / (2.0 * step);
                max_grad = max_grad.max(grad.abs());
            }
        }
    }
    max_grad
}
