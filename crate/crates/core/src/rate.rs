//! Rate evaluation and the WMMSE surrogate.
//!
//! With effective channel rows ĝ⁽ⁱ⁾ stacked in Ĝ and precoder columns v_k in
//! V, the robust achievable rate of user i is
//!
//! ```text
//! R_i = log2(1 + |ĝ⁽ⁱ⁾v_i|² / (Σ_{k≠i}|ĝ⁽ⁱ⁾v_k|² + σ_g²·Σ_k‖v_k‖² + σ_w²))
//! ```
//!
//! The estimation error enters only through the aggregated variance σ_g²,
//! which scales with the total transmit power. The solver works on the
//! auxiliary matrix X (x_ki standing in for conj(ĝ⁽ⁱ⁾v_k)) through the MSE
//!
//! ```text
//! e_i(u_i, X, V) = |1 − u_i*·x_ii|² + Σ_{k≠i}|u_i*·x_ki|²
//!                + σ_g²·|u_i|²·Σ_k‖v_k‖² + σ_w²·|u_i|²
//! ```
//!
//! whose optimal receive scalar u_i and weight w_i make
//! `log2(w_i) − w_i·e_i + 1` coincide with R_i.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::{CMat, CRow};

/// A joint design: BS precoder V (N_T×K, column i serves user i) and IRS
/// phase row f (length M, unit-modulus entries).
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingSolution {
    pub precoder: CMat,
    pub phases: CRow,
}

impl BeamformingSolution {
    /// Checks |f_k| = 1 within `1e-12` and trace(VVᴴ) ≤ budget + 1e-9.
    pub fn is_feasible(&self, power_budget: f64) -> bool {
        let unit = self
            .phases
            .iter()
            .all(|psi| (psi.norm() - 1.0).abs() <= 1e-12);
        unit && self.precoder.norm_squared() <= power_budget + 1e-9
    }
}

/// WMMSE receive scalars u_i and MSE weights w_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmmseMultipliers {
    pub u: Vec<Complex64>,
    pub w: Vec<f64>,
}

impl WmmseMultipliers {
    /// Neutral multipliers (u = 0, w = 1); every MSE evaluates to 1.
    pub fn neutral(n_users: usize) -> Self {
        Self {
            u: vec![Complex64::new(0.0, 0.0); n_users],
            w: vec![1.0; n_users],
        }
    }

    /// Diagonal of A = diag(α_i·w_i).
    pub fn a_diag(&self, weights: &[f64]) -> Vec<f64> {
        weights.iter().zip(&self.w).map(|(a, w)| a * w).collect()
    }

    /// Diagonal of B = diag(α_i·w_i·|u_i|²).
    pub fn b_diag(&self, weights: &[f64]) -> Vec<f64> {
        weights
            .iter()
            .zip(&self.w)
            .zip(&self.u)
            .map(|((a, w), u)| a * w * u.norm_sqr())
            .collect()
    }

    /// b = Tr(B) = Σ_i α_i·w_i·|u_i|².
    pub fn b_scalar(&self, weights: &[f64]) -> f64 {
        self.b_diag(weights).iter().sum()
    }
}

/// Per-user achievable rates (bits/s/Hz) from effective channels and a
/// precoder.
pub fn achievable_rates(g_hat: &CMat, v: &CMat, sigma_g_sq: f64, noise_var: f64) -> Vec<f64> {
    assert!(sigma_g_sq >= 0.0 && noise_var > 0.0);
    let k = g_hat.nrows();
    assert_eq!(v.ncols(), k, "precoder column count must match users");
    let y = g_hat * v; // y[(i, k)] = ĝ⁽ⁱ⁾ v_k
    let leak = sigma_g_sq * v.norm_squared() + noise_var;
    (0..k)
        .map(|i| {
            let signal = y[(i, i)].norm_sqr();
            let interference: f64 = (0..k)
                .filter(|&j| j != i)
                .map(|j| y[(i, j)].norm_sqr())
                .sum();
            (1.0 + signal / (interference + leak)).log2()
        })
        .collect()
}

/// Rates computed from the auxiliary cross-gain matrix X (x_ki in place of
/// conj(ĝ⁽ⁱ⁾v_k)); `v_frob_sq` is Σ_k‖v_k‖².
pub fn rates_from_aux(x: &CMat, v_frob_sq: f64, sigma_g_sq: f64, noise_var: f64) -> Vec<f64> {
    let k = x.nrows();
    let leak = sigma_g_sq * v_frob_sq + noise_var;
    (0..k)
        .map(|i| {
            let signal = x[(i, i)].norm_sqr();
            let interference: f64 = (0..k)
                .filter(|&j| j != i)
                .map(|j| x[(j, i)].norm_sqr())
                .sum();
            (1.0 + signal / (interference + leak)).log2()
        })
        .collect()
}

/// Weighted sum of rates, Σ_i α_i·R_i.
pub fn weighted_sum_rate(
    weights: &[f64],
    g_hat: &CMat,
    v: &CMat,
    sigma_g_sq: f64,
    noise_var: f64,
) -> f64 {
    achievable_rates(g_hat, v, sigma_g_sq, noise_var)
        .iter()
        .zip(weights)
        .map(|(r, a)| r * a)
        .sum()
}

/// Optimal receive scalars (full-denominator quotient, signal included) and
/// MSE weights (one plus SINR).
pub fn optimal_multipliers(
    x: &CMat,
    v: &CMat,
    sigma_g_sq: f64,
    noise_var: f64,
) -> WmmseMultipliers {
    let k = x.nrows();
    let leak = sigma_g_sq * v.norm_squared() + noise_var;
    let mut u = Vec::with_capacity(k);
    let mut w = Vec::with_capacity(k);
    for i in 0..k {
        let col_sq: f64 = (0..k).map(|j| x[(j, i)].norm_sqr()).sum();
        let signal = x[(i, i)].norm_sqr();
        u.push(x[(i, i)] / Complex64::new(col_sq + leak, 0.0));
        w.push(1.0 + signal / (col_sq - signal + leak));
    }
    WmmseMultipliers { u, w }
}

/// Per-user mean-square errors e_i(u_i, X, V).
pub fn mse_terms(
    mult: &WmmseMultipliers,
    x: &CMat,
    v: &CMat,
    sigma_g_sq: f64,
    noise_var: f64,
) -> Vec<f64> {
    let k = x.nrows();
    let leak = sigma_g_sq * v.norm_squared() + noise_var;
    (0..k)
        .map(|i| {
            let u = mult.u[i];
            let direct = (Complex64::new(1.0, 0.0) - u.conj() * x[(i, i)]).norm_sqr();
            let cross: f64 = (0..k)
                .filter(|&j| j != i)
                .map(|j| (u.conj() * x[(j, i)]).norm_sqr())
                .sum();
            direct + cross + u.norm_sqr() * leak
        })
        .collect()
}

/// Quadratic penalty P_ρ = (1/2ρ)·(‖V − V̄ + ρZ_v‖² + ‖X − VᴴĜᴴ + ρZ_g‖²).
pub fn penalty_term(
    v: &CMat,
    v_bar: &CMat,
    x: &CMat,
    g_hat: &CMat,
    z_v: &CMat,
    z_g: &CMat,
    rho: f64,
) -> f64 {
    assert!(rho > 0.0, "penalty parameter must be positive");
    let r_v = v - v_bar + z_v * Complex64::new(rho, 0.0);
    let r_g = x - v.adjoint() * g_hat.adjoint() + z_g * Complex64::new(rho, 0.0);
    (r_v.norm_squared() + r_g.norm_squared()) / (2.0 * rho)
}

/// Augmented-Lagrangian objective in summation form,
/// Σ_i α_i·w_i·e_i + P_ρ. This form follows the surrogate definition
/// directly and is the authoritative one.
#[allow(clippy::too_many_arguments)]
pub fn al_objective(
    weights: &[f64],
    mult: &WmmseMultipliers,
    v: &CMat,
    v_bar: &CMat,
    x: &CMat,
    g_hat: &CMat,
    z_v: &CMat,
    z_g: &CMat,
    rho: f64,
    sigma_g_sq: f64,
    noise_var: f64,
) -> f64 {
    let mse = mse_terms(mult, x, v, sigma_g_sq, noise_var);
    let rate_part: f64 = weights
        .iter()
        .zip(&mult.w)
        .zip(&mse)
        .map(|((a, w), e)| a * w * e)
        .sum();
    rate_part + penalty_term(v, v_bar, x, g_hat, z_v, z_g, rho)
}

/// The same objective in trace form,
/// Tr(XBXᴴ) − Tr(AXDᴴ) − Tr(AXᴴD) + Tr(A) + σ_g²·b·‖V‖² + σ_w²·b + P_ρ,
/// kept as an independent cross-check of the summation form.
#[allow(clippy::too_many_arguments)]
pub fn al_objective_trace(
    weights: &[f64],
    mult: &WmmseMultipliers,
    v: &CMat,
    v_bar: &CMat,
    x: &CMat,
    g_hat: &CMat,
    z_v: &CMat,
    z_g: &CMat,
    rho: f64,
    sigma_g_sq: f64,
    noise_var: f64,
) -> f64 {
    let k = x.nrows();
    let a = mult.a_diag(weights);
    let b = mult.b_diag(weights);
    let b_tr: f64 = b.iter().sum();

    // Tr(XBXᴴ) = Σ_i B_ii · ‖column i of X‖².
    let quad: f64 = (0..k)
        .map(|i| b[i] * (0..k).map(|j| x[(j, i)].norm_sqr()).sum::<f64>())
        .sum();
    // Tr(AXDᴴ) + Tr(AXᴴD) = 2·Re Σ_i α_i w_i · x_ii · u_i*.
    let lin: f64 = (0..k).map(|i| (a[i] * x[(i, i)] * mult.u[i].conj()).re).sum();
    let tr_a: f64 = a.iter().sum();

    quad - 2.0 * lin + tr_a + sigma_g_sq * b_tr * v.norm_squared() + noise_var * b_tr
        + penalty_term(v, v_bar, x, g_hat, z_v, z_g, rho)
}

/// Full inner surrogate Σ_i α_i·(w_i·e_i − ln w_i − 1) + P_ρ.
///
/// Unlike [`al_objective`], this includes the weight-entropy terms, which is
/// what makes the multiplier refresh itself a descent step; it is the
/// quantity the solver traces and tests for monotonicity.
#[allow(clippy::too_many_arguments)]
pub fn surrogate_objective(
    weights: &[f64],
    mult: &WmmseMultipliers,
    v: &CMat,
    v_bar: &CMat,
    x: &CMat,
    g_hat: &CMat,
    z_v: &CMat,
    z_g: &CMat,
    rho: f64,
    sigma_g_sq: f64,
    noise_var: f64,
) -> f64 {
    let mse = mse_terms(mult, x, v, sigma_g_sq, noise_var);
    let rate_part: f64 = weights
        .iter()
        .zip(&mult.w)
        .zip(&mse)
        .map(|((a, w), e)| a * (w * e - w.ln() - 1.0))
        .sum();
    rate_part + penalty_term(v, v_bar, x, g_hat, z_v, z_g, rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::complex_gaussian;
    use crate::rng::labeled_rng;
    use approx::assert_relative_eq;
    use num_complex::Complex64;
    use rand::RngCore;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_user_unit_snr_rate() {
        let g = CMat::from_row_slice(1, 2, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let v = CMat::from_column_slice(2, 1, &[c(1.0, 0.0), c(0.0, 0.0)]);
        let r = achievable_rates(&g, &v, 0.0, 1.0);
        assert_relative_eq!(r[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_precoder_gives_zero_rates() {
        let mut rng = labeled_rng(1, 0);
        let g = complex_gaussian(3, 4, 1.0, &mut rng);
        let v = CMat::zeros(4, 3);
        for r in achievable_rates(&g, &v, 0.5, 1.0) {
            assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn orthogonal_two_user_rates() {
        let g = CMat::from_row_slice(
            2,
            2,
            &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)],
        );
        let v = CMat::identity(2, 2);
        let rates = achievable_rates(&g, &v, 1.0, 1.0);
        for r in rates {
            assert_relative_eq!(r, (4.0f64 / 3.0).log2(), epsilon = 1e-12);
        }
    }

    #[test]
    fn scalar_optimal_multipliers() {
        let x = CMat::from_element(1, 1, c(1.0, 0.0));
        let v = CMat::from_element(1, 1, c(1.0, 0.0));
        let m = optimal_multipliers(&x, &v, 0.0, 1.0);
        assert_relative_eq!(m.u[0].re, 0.5, epsilon = 1e-12);
        assert_relative_eq!(m.u[0].im, 0.0, epsilon = 1e-12);
        assert_relative_eq!(m.w[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_signal_multipliers() {
        let x = CMat::zeros(3, 3);
        let v = complex_gaussian(2, 3, 1.0, &mut labeled_rng(5, 5));
        let m = optimal_multipliers(&x, &v, 0.2, 1.0);
        for i in 0..3 {
            assert_eq!(m.u[i], c(0.0, 0.0));
            assert_eq!(m.w[i], 1.0);
        }
    }

    #[test]
    fn mse_with_zero_receiver_is_one() {
        let mut rng = labeled_rng(6, 1);
        let x = complex_gaussian(3, 3, 1.0, &mut rng);
        let v = complex_gaussian(2, 3, 1.0, &mut rng);
        let mult = WmmseMultipliers::neutral(3);
        for e in mse_terms(&mult, &x, &v, 0.7, 1.3) {
            assert_relative_eq!(e, 1.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn scalar_mse_value() {
        let x = CMat::from_element(1, 1, c(1.0, 0.0));
        let v = CMat::from_element(1, 1, c(1.0, 0.0));
        let mult = WmmseMultipliers {
            u: vec![c(0.5, 0.0)],
            w: vec![1.0],
        };
        let e = mse_terms(&mult, &x, &v, 0.0, 1.0);
        assert_relative_eq!(e[0], 0.5, epsilon = 1e-14);
    }

    #[test]
    fn mse_interference_dropout() {
        let mut rng = labeled_rng(6, 2);
        let mut x = complex_gaussian(2, 2, 1.0, &mut rng);
        x[(0, 1)] = c(0.0, 0.0);
        x[(1, 0)] = c(0.0, 0.0);
        let v = complex_gaussian(3, 2, 1.0, &mut rng);
        let mult = WmmseMultipliers {
            u: vec![c(0.3, -0.4), c(-0.2, 0.1)],
            w: vec![1.0, 1.0],
        };
        let e = mse_terms(&mult, &x, &v, 0.0, 2.0);
        for i in 0..2 {
            let u = mult.u[i];
            let expect = (c(1.0, 0.0) - u.conj() * x[(i, i)]).norm_sqr() + 2.0 * u.norm_sqr();
            assert_relative_eq!(e[i], expect, epsilon = 1e-14);
        }
    }

    #[test]
    fn tightness_at_optimal_multipliers() {
        let mut rng = labeled_rng(7, 3);
        for _ in 0..200 {
            let k = 1 + (rng.next_u32() % 4) as usize;
            let n_t = 1 + (rng.next_u32() % 4) as usize;
            let x = complex_gaussian(k, k, 1.0, &mut rng);
            let v = complex_gaussian(n_t, k, 1.0, &mut rng);
            let sg = 0.3;
            let nv = 0.8;
            let mult = optimal_multipliers(&x, &v, sg, nv);
            let e = mse_terms(&mult, &x, &v, sg, nv);
            let rates = rates_from_aux(&x, v.norm_squared(), sg, nv);
            for i in 0..k {
                let surrogate = mult.w[i].log2() - mult.w[i] * e[i] + 1.0;
                assert!(
                    (surrogate - rates[i]).abs() < 1e-9,
                    "tightness violated: {surrogate} vs {}",
                    rates[i]
                );
            }
        }
    }

    #[test]
    fn surrogate_lower_bound_for_any_receiver() {
        // With w from the closed-form weight rule, any receive scalar u
        // keeps the bits-domain surrogate below the rate.
        let mut rng = labeled_rng(7, 4);
        for _ in 0..200 {
            let k = 1 + (rng.next_u32() % 3) as usize;
            let x = complex_gaussian(k, k, 1.0, &mut rng);
            let v = complex_gaussian(2, k, 1.0, &mut rng);
            let (sg, nv) = (0.1, 1.0);
            let mut mult = optimal_multipliers(&x, &v, sg, nv);
            // Perturb the receive scalars arbitrarily.
            let noise = complex_gaussian(1, k, 1.0, &mut rng);
            for i in 0..k {
                mult.u[i] += noise[(0, i)];
            }
            let e = mse_terms(&mult, &x, &v, sg, nv);
            let rates = rates_from_aux(&x, v.norm_squared(), sg, nv);
            for i in 0..k {
                let surrogate = mult.w[i].log2() - mult.w[i] * e[i] + 1.0;
                assert!(surrogate <= rates[i] + 1e-9);
            }
        }
    }

    #[test]
    fn surrogate_lower_bound_in_nats_for_any_pair() {
        // For fully arbitrary (u, w) the bound holds in the natural-log
        // domain: ln(w) − w·e + 1 <= ln(1 + SINR).
        let mut rng = labeled_rng(7, 5);
        for _ in 0..500 {
            let k = 1 + (rng.next_u32() % 3) as usize;
            let x = complex_gaussian(k, k, 1.0, &mut rng);
            let v = complex_gaussian(2, k, 1.0, &mut rng);
            let (sg, nv) = (0.05, 0.7);
            let u_draw = complex_gaussian(1, k, 2.0, &mut rng);
            let mult = WmmseMultipliers {
                u: (0..k).map(|i| u_draw[(0, i)]).collect(),
                w: (0..k)
                    .map(|_| 0.05 + 5.0 * (rng.next_u32() as f64 / u32::MAX as f64))
                    .collect(),
            };
            let e = mse_terms(&mult, &x, &v, sg, nv);
            let rates = rates_from_aux(&x, v.norm_squared(), sg, nv);
            for i in 0..k {
                let nats = mult.w[i].ln() - mult.w[i] * e[i] + 1.0;
                assert!(nats <= rates[i] * std::f64::consts::LN_2 + 1e-9);
            }
        }
    }

    #[test]
    fn rates_invariant_to_precoder_phase_rotation() {
        let mut rng = labeled_rng(8, 0);
        let g = complex_gaussian(3, 4, 1.0, &mut rng);
        let mut v = complex_gaussian(4, 3, 1.0, &mut rng);
        let base = achievable_rates(&g, &v, 0.3, 1.0);
        for i in 0..3 {
            let rot = Complex64::from_polar(1.0, 0.37 + 1.1 * i as f64);
            for r in 0..4 {
                v[(r, i)] *= rot;
            }
        }
        let rotated = achievable_rates(&g, &v, 0.3, 1.0);
        for (a, b) in base.iter().zip(&rotated) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rates_nonincreasing_in_error_variance() {
        let mut rng = labeled_rng(8, 1);
        let g = complex_gaussian(3, 4, 1.0, &mut rng);
        let v = complex_gaussian(4, 3, 1.0, &mut rng);
        let mut prev = achievable_rates(&g, &v, 0.0, 1.0);
        for sg in [0.1, 0.5, 1.0, 4.0] {
            let cur = achievable_rates(&g, &v, sg, 1.0);
            for (p, c) in prev.iter().zip(&cur) {
                assert!(*c <= p + 1e-12);
            }
            prev = cur;
        }
    }

    fn random_al_inputs(
        seed: u64,
    ) -> (
        Vec<f64>,
        WmmseMultipliers,
        CMat,
        CMat,
        CMat,
        CMat,
        CMat,
        CMat,
        f64,
    ) {
        let mut rng = labeled_rng(9, seed);
        let (k, n_t) = (3, 4);
        let v = complex_gaussian(n_t, k, 1.0, &mut rng);
        let v_bar = complex_gaussian(n_t, k, 1.0, &mut rng);
        let x = complex_gaussian(k, k, 1.0, &mut rng);
        let g_hat = complex_gaussian(k, n_t, 1.0, &mut rng);
        let z_v = complex_gaussian(n_t, k, 0.3, &mut rng);
        let z_g = complex_gaussian(k, k, 0.3, &mut rng);
        let um = complex_gaussian(1, k, 0.5, &mut rng);
        let mult = WmmseMultipliers {
            u: (0..k).map(|i| um[(0, i)]).collect(),
            w: vec![1.7, 2.4, 1.1],
        };
        let weights = vec![1.0, 0.5, 2.0];
        (weights, mult, v, v_bar, x, g_hat, z_v, z_g, 0.8)
    }

    #[test]
    fn summation_and_trace_forms_agree() {
        for seed in 0..20 {
            let (weights, mult, v, v_bar, x, g_hat, z_v, z_g, rho) = random_al_inputs(seed);
            let a = al_objective(
                &weights, &mult, &v, &v_bar, &x, &g_hat, &z_v, &z_g, rho, 0.4, 1.2,
            );
            let b = al_objective_trace(
                &weights, &mult, &v, &v_bar, &x, &g_hat, &z_v, &z_g, rho, 0.4, 1.2,
            );
            assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }

    #[test]
    fn al_objective_at_consensus_is_weighted_mse_only() {
        let (weights, mult, v, _, _, g_hat, _, _, rho) = random_al_inputs(77);
        let x = v.adjoint() * g_hat.adjoint();
        let z = CMat::zeros(v.nrows(), v.ncols());
        let zg = CMat::zeros(x.nrows(), x.ncols());
        let obj = al_objective(
            &weights, &mult, &v, &v, &x, &g_hat, &z, &zg, rho, 0.4, 1.2,
        );
        let mse = mse_terms(&mult, &x, &v, 0.4, 1.2);
        let expect: f64 = weights
            .iter()
            .zip(&mult.w)
            .zip(&mse)
            .map(|((a, w), e)| a * w * e)
            .sum();
        assert_relative_eq!(obj, expect, max_relative = 1e-12);
    }

    #[test]
    fn al_objective_all_zero_state_counts_users() {
        let k = 3;
        let n_t = 2;
        let zeros_v = CMat::zeros(n_t, k);
        let zeros_x = CMat::zeros(k, k);
        let g_hat = CMat::zeros(k, n_t);
        let mult = WmmseMultipliers::neutral(k);
        let weights = vec![1.0; k];
        let obj = al_objective(
            &weights, &mult, &zeros_v, &zeros_v, &zeros_x, &g_hat, &zeros_v, &zeros_x, 1.0, 0.3,
            1.0,
        );
        assert_relative_eq!(obj, k as f64, epsilon = 1e-14);
    }
}
