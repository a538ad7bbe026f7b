//! Channel generation and estimation-error injection.
//!
//! The physical layer has three Rayleigh-faded links: BS→IRS (`G_BI`,
//! M×N_T), BS→users (`G_BU`, K×N_T) and IRS→users (`G_IU`, K×M). The BS-user
//! and IRS-user links are known only through noisy estimates,
//! `G = Ĝ + G̃` with `vec(G̃) ~ CN(0, σ²I)`, while `G_BI` is treated as
//! perfectly known. For a given IRS phase row `f` the end-to-end channel of
//! user i is
//!
//! ```text
//! ĝ⁽ⁱ⁾ = ĝ_BU⁽ⁱ⁾ + f · Ĝc⁽ⁱ⁾,   Ĝc⁽ⁱ⁾ = diag(ĝ_IU⁽ⁱ⁾) · G_BI
//! ```
//!
//! and the residual estimation error aggregates, for large M, into a single
//! white term of variance `σ_g² = σ_BU² + σ_IU²·β_BI·M`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{CMat, CRow};

/// Configuration errors; each variant names the violated invariant.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("antenna/user/element counts must be positive (n_tx={n_tx}, n_users={n_users}, n_elements={n_elements})")]
    NonPositiveDimensions {
        n_tx: usize,
        n_users: usize,
        n_elements: usize,
    },
    #[error("power budget must be positive, got {0}")]
    NonPositivePower(f64),
    #[error("noise variance must be positive, got {0}")]
    NonPositiveNoiseVar(f64),
    #[error("error variance must be nonnegative, got {0}")]
    NegativeErrorVar(f64),
    #[error("weights must be nonnegative with at least one positive entry")]
    InvalidWeights,
    #[error("weights length {got} does not match n_users {expected}")]
    WeightsLength { got: usize, expected: usize },
    #[error("large-scale gain must be positive, got {0}")]
    NonPositiveGain(f64),
    #[error("per-user gain list length {got} does not match n_users {expected}")]
    GainsLength { got: usize, expected: usize },
    #[error("error variance {sigma_sq} exceeds large-scale gain {beta} on the {link} link; estimate sampling needs sigma² <= beta")]
    ErrorVarianceExceedsGain {
        link: &'static str,
        beta: f64,
        sigma_sq: f64,
    },
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("user ring must satisfy 0 < min <= max, got [{0}, {1}]")]
    InvalidRing(f64, f64),
    #[error("shadowing variance must be nonnegative, got {0}")]
    NegativeShadowVar(f64),
}

/// Transmit power, either directly in linear watts or as an SNR in dB from
/// which `P_T = σ_w² · 10^(snr_db/10)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PowerSpec {
    Watts(f64),
    SnrDb(f64),
}

/// Per-user large-scale gain, either one value shared by all users or an
/// explicit per-user list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerUserGain {
    Uniform(f64),
    PerUser(Vec<f64>),
}

impl PerUserGain {
    /// Expands to a length-K vector.
    pub fn expand(&self, n_users: usize) -> Result<Vec<f64>, ConfigError> {
        match self {
            PerUserGain::Uniform(g) => Ok(vec![*g; n_users]),
            PerUserGain::PerUser(v) => {
                if v.len() != n_users {
                    return Err(ConfigError::GainsLength {
                        got: v.len(),
                        expected: n_users,
                    });
                }
                Ok(v.clone())
            }
        }
    }
}

/// Fixed large-scale gains, normalized so that error variances of the order
/// of 0.1 are meaningful relative to the channel strength.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizedGains {
    pub beta_bu: PerUserGain,
    pub beta_iu: PerUserGain,
    pub beta_bi: f64,
}

/// Distance-based gains: `10·log10(β) = −127.8 − 27·log10(d_km) + Z` with
/// real Gaussian shadowing Z (dB). BS sits at the origin, the IRS on the
/// x-axis, and each trial places users uniformly on a ring around the BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricGains {
    pub irs_distance_m: f64,
    pub user_ring_m: (f64, f64),
    pub shadow_var_db: f64,
}

impl Default for GeometricGains {
    fn default() -> Self {
        Self {
            irs_distance_m: 50.0,
            user_ring_m: (20.0, 100.0),
            shadow_var_db: 8.0,
        }
    }
}

/// Large-scale gain model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainModel {
    Normalized(NormalizedGains),
    Geometric(GeometricGains),
}

/// All scenario scalars for one system instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub n_users: usize,
    pub n_elements: usize,
    pub power: PowerSpec,
    pub noise_var: f64,
    pub err_var_bu: f64,
    pub err_var_iu: f64,
    /// User priority weights α_i; `None` means all ones.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    pub gains: GainModel,
}

impl SystemConfig {
    /// Normalized-gain config with unit gains for all links, the common
    /// desk-scale setup.
    pub fn normalized_unit(n_tx: usize, n_users: usize, n_elements: usize) -> Self {
        Self {
            n_tx,
            n_users,
            n_elements,
            power: PowerSpec::SnrDb(10.0),
            noise_var: 1.0,
            err_var_bu: 0.1,
            err_var_iu: 0.1,
            weights: None,
            gains: GainModel::Normalized(NormalizedGains {
                beta_bu: PerUserGain::Uniform(1.0),
                beta_iu: PerUserGain::Uniform(1.0),
                beta_bi: 1.0,
            }),
        }
    }

    /// Transmit power budget P_T in linear watts.
    pub fn power_budget(&self) -> f64 {
        match self.power {
            PowerSpec::Watts(p) => p,
            PowerSpec::SnrDb(snr) => self.noise_var * 10f64.powf(snr / 10.0),
        }
    }

    /// Weights α_1..α_K, defaulting to all ones.
    pub fn weights_vec(&self) -> Vec<f64> {
        self.weights
            .clone()
            .unwrap_or_else(|| vec![1.0; self.n_users])
    }

    /// Checks every config invariant; the returned error names the violated
    /// one.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_tx == 0 || self.n_users == 0 || self.n_elements == 0 {
            return Err(ConfigError::NonPositiveDimensions {
                n_tx: self.n_tx,
                n_users: self.n_users,
                n_elements: self.n_elements,
            });
        }
        let p = self.power_budget();
        if !(p > 0.0) || !p.is_finite() {
            return Err(ConfigError::NonPositivePower(p));
        }
        if !(self.noise_var > 0.0) {
            return Err(ConfigError::NonPositiveNoiseVar(self.noise_var));
        }
        for &s in [self.err_var_bu, self.err_var_iu].iter() {
            if !(s >= 0.0) {
                return Err(ConfigError::NegativeErrorVar(s));
            }
        }
        if let Some(w) = &self.weights {
            if w.len() != self.n_users {
                return Err(ConfigError::WeightsLength {
                    got: w.len(),
                    expected: self.n_users,
                });
            }
            if w.iter().any(|&x| x < 0.0) || !w.iter().any(|&x| x > 0.0) {
                return Err(ConfigError::InvalidWeights);
            }
        }
        match &self.gains {
            GainModel::Normalized(g) => {
                let bu = g.beta_bu.expand(self.n_users)?;
                let iu = g.beta_iu.expand(self.n_users)?;
                for &b in bu.iter().chain(iu.iter()) {
                    if !(b > 0.0) {
                        return Err(ConfigError::NonPositiveGain(b));
                    }
                }
                if !(g.beta_bi > 0.0) {
                    return Err(ConfigError::NonPositiveGain(g.beta_bi));
                }
                for (link, betas, sigma_sq) in [
                    ("BS-user", &bu, self.err_var_bu),
                    ("IRS-user", &iu, self.err_var_iu),
                ] {
                    for &beta in betas.iter() {
                        if sigma_sq > beta {
                            return Err(ConfigError::ErrorVarianceExceedsGain {
                                link,
                                beta,
                                sigma_sq,
                            });
                        }
                    }
                }
                Ok(())
            }
            GainModel::Geometric(g) => {
                if !(g.irs_distance_m > 0.0) {
                    return Err(ConfigError::NonPositiveDistance(g.irs_distance_m));
                }
                if !(g.user_ring_m.0 > 0.0) || g.user_ring_m.0 > g.user_ring_m.1 {
                    return Err(ConfigError::InvalidRing(g.user_ring_m.0, g.user_ring_m.1));
                }
                if !(g.shadow_var_db >= 0.0) {
                    return Err(ConfigError::NegativeShadowVar(g.shadow_var_db));
                }
                Ok(())
            }
        }
    }
}

/// True channels for one realization.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSet {
    /// BS→IRS, M×N_T.
    pub g_bi: CMat,
    /// BS→users, K×N_T.
    pub g_bu: CMat,
    /// IRS→users, K×M.
    pub g_iu: CMat,
}

/// Estimated channels together with the aggregated error variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    /// Estimated BS→user rows, K×N_T.
    pub g_bu_hat: CMat,
    /// Estimated IRS→user rows, K×M.
    pub g_iu_hat: CMat,
    /// Per-user estimated cascaded channels diag(ĝ_IU⁽ⁱ⁾)·G_BI, each M×N_T.
    pub cascaded_hat: Vec<CMat>,
    /// Aggregated effective error variance σ_g².
    pub sigma_g_sq: f64,
}

impl ChannelEstimate {
    /// Zero-error view of a true channel set (perfect CSI): estimates equal
    /// the truth and σ_g² = 0.
    pub fn exact(channels: &ChannelSet) -> Self {
        Self {
            g_bu_hat: channels.g_bu.clone(),
            g_iu_hat: channels.g_iu.clone(),
            cascaded_hat: cascaded_matrices(&channels.g_iu, &channels.g_bi),
            sigma_g_sq: 0.0,
        }
    }
}

/// Log-distance path loss with shadowing: returns the linear gain
/// `10^((−127.8 − 27·log10(d_km) + shadow_db)/10)`.
pub fn pathloss_linear(distance_km: f64, shadow_db: f64) -> Result<f64, ConfigError> {
    if !(distance_km > 0.0) {
        return Err(ConfigError::NonPositiveDistance(distance_km));
    }
    let gain_db = -127.8 - 27.0 * distance_km.log10() + shadow_db;
    Ok(10f64.powf(gain_db / 10.0))
}

/// Aggregated effective error variance `σ_g² = σ_BU² + σ_IU²·β_BI·M`.
pub fn effective_error_variance(err_var_bu: f64, err_var_iu: f64, beta_bi: f64, m: usize) -> f64 {
    err_var_bu + err_var_iu * beta_bi * m as f64
}

/// Matrix with iid CN(0, var) entries.
pub fn complex_gaussian(rows: usize, cols: usize, var: f64, rng: &mut impl Rng) -> CMat {
    let scale = (var / 2.0).sqrt();
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re * scale, im * scale)
    })
}

/// Random IRS phase row with unit-modulus entries.
pub fn random_phases(m: usize, rng: &mut impl Rng) -> CRow {
    CRow::from_fn(m, |_, _| {
        Complex64::from_polar(1.0, rng.gen::<f64>() * std::f64::consts::TAU)
    })
}

/// Per-user cascaded matrices diag(g_IU⁽ⁱ⁾)·G_BI (row k of G_BI scaled by the
/// k-th IRS-user coefficient).
pub fn cascaded_matrices(g_iu: &CMat, g_bi: &CMat) -> Vec<CMat> {
    (0..g_iu.nrows())
        .map(|i| {
            let mut c = g_bi.clone();
            for k in 0..g_bi.nrows() {
                let s = g_iu[(i, k)];
                c.row_mut(k).iter_mut().for_each(|z| *z *= s);
            }
            c
        })
        .collect()
}

/// Effective channel of one user for phase row `phases`:
/// `g_row + phases · cascaded`.
pub fn effective_channel(g_bu_row: &CRow, cascaded: &CMat, phases: &CRow) -> CRow {
    assert_eq!(
        phases.ncols(),
        cascaded.nrows(),
        "phase count must match cascaded rows"
    );
    assert_eq!(
        g_bu_row.ncols(),
        cascaded.ncols(),
        "direct row must match cascaded columns"
    );
    g_bu_row + phases * cascaded
}

/// Stacks the K effective channel rows into the K×N_T matrix Ĝ.
pub fn effective_matrix(g_bu: &CMat, cascaded: &[CMat], phases: &CRow) -> CMat {
    let mut g = CMat::zeros(g_bu.nrows(), g_bu.ncols());
    for i in 0..g_bu.nrows() {
        let row = CRow::from(g_bu.row(i)) + phases * &cascaded[i];
        g.row_mut(i).copy_from(&row);
    }
    g
}

/// Per-trial large-scale gains after geometry/shadowing resolution.
struct ResolvedGains {
    beta_bu: Vec<f64>,
    beta_iu: Vec<f64>,
    beta_bi: f64,
}

fn resolve_gains(config: &SystemConfig, rng: &mut impl Rng) -> Result<ResolvedGains, ConfigError> {
    match &config.gains {
        GainModel::Normalized(g) => Ok(ResolvedGains {
            beta_bu: g.beta_bu.expand(config.n_users)?,
            beta_iu: g.beta_iu.expand(config.n_users)?,
            beta_bi: g.beta_bi,
        }),
        GainModel::Geometric(g) => {
            let shadow_std = g.shadow_var_db.sqrt();
            let irs = (g.irs_distance_m, 0.0);
            let z: f64 = rng.sample(StandardNormal);
            let beta_bi = pathloss_linear(g.irs_distance_m / 1000.0, z * shadow_std)?;
            let mut beta_bu = Vec::with_capacity(config.n_users);
            let mut beta_iu = Vec::with_capacity(config.n_users);
            for _ in 0..config.n_users {
                let r = rng.gen_range(g.user_ring_m.0..=g.user_ring_m.1);
                let theta = rng.gen::<f64>() * std::f64::consts::TAU;
                let pos = (r * theta.cos(), r * theta.sin());
                let d_bs = (pos.0.powi(2) + pos.1.powi(2)).sqrt();
                let d_irs = ((pos.0 - irs.0).powi(2) + (pos.1 - irs.1).powi(2)).sqrt();
                let z: f64 = rng.sample(StandardNormal);
                beta_bu.push(pathloss_linear(d_bs / 1000.0, z * shadow_std)?);
                let z: f64 = rng.sample(StandardNormal);
                beta_iu.push(pathloss_linear(d_irs.max(1e-3) / 1000.0, z * shadow_std)?);
            }
            Ok(ResolvedGains {
                beta_bu,
                beta_iu,
                beta_bi,
            })
        }
    }
}

/// Draws one channel realization together with its estimate.
///
/// The estimate split samples `Ĝ ~ CN(0, (β−σ²)I)` and `G̃ ~ CN(0, σ²I)`
/// independently and sets `G = Ĝ + G̃`, the unique independent split
/// consistent with both stated marginals; it needs `σ² <= β` per link.
/// `G_BI` is perfectly known and shared between truth and estimate.
pub fn sample_channel_pair(
    config: &SystemConfig,
    rng: &mut impl Rng,
) -> Result<(ChannelSet, ChannelEstimate), ConfigError> {
    config.validate()?;
    let (n_t, k, m) = (config.n_tx, config.n_users, config.n_elements);
    let gains = resolve_gains(config, rng)?;
    for (link, betas, sigma_sq) in [
        ("BS-user", &gains.beta_bu, config.err_var_bu),
        ("IRS-user", &gains.beta_iu, config.err_var_iu),
    ] {
        for &beta in betas.iter() {
            if sigma_sq > beta {
                return Err(ConfigError::ErrorVarianceExceedsGain {
                    link,
                    beta,
                    sigma_sq,
                });
            }
        }
    }

    let g_bi = complex_gaussian(m, n_t, gains.beta_bi, rng);

    let mut g_bu_hat = CMat::zeros(k, n_t);
    let mut g_bu = CMat::zeros(k, n_t);
    let mut g_iu_hat = CMat::zeros(k, m);
    let mut g_iu = CMat::zeros(k, m);
    for i in 0..k {
        let est = complex_gaussian(1, n_t, gains.beta_bu[i] - config.err_var_bu, rng);
        let err = complex_gaussian(1, n_t, config.err_var_bu, rng);
        g_bu_hat.row_mut(i).copy_from(&est.row(0));
        g_bu.row_mut(i).copy_from(&(est.row(0) + err.row(0)));

        let est = complex_gaussian(1, m, gains.beta_iu[i] - config.err_var_iu, rng);
        let err = complex_gaussian(1, m, config.err_var_iu, rng);
        g_iu_hat.row_mut(i).copy_from(&est.row(0));
        g_iu.row_mut(i).copy_from(&(est.row(0) + err.row(0)));
    }

    let cascaded_hat = cascaded_matrices(&g_iu_hat, &g_bi);
    let sigma_g_sq =
        effective_error_variance(config.err_var_bu, config.err_var_iu, gains.beta_bi, m);

    Ok((
        ChannelSet { g_bi, g_bu, g_iu },
        ChannelEstimate {
            g_bu_hat,
            g_iu_hat,
            cascaded_hat,
            sigma_g_sq,
        },
    ))
}
