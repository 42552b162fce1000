//! SINR, channel dispersion, finite-blocklength rates and energy efficiency.
//!
//! Rates are in bits per channel use. The normal approximation used is
//! `r = log2(1 + γ) - Q⁻¹(ε) sqrt(V / n) log2(e)` with the dispersion
//! `V = 2γ / (1 + γ)` achievable when interference is treated as noise.

use std::f64::consts::{LOG2_E, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::beam_opt::BeamformingSet;
use crate::channel::{all_effective_channels, ChannelSet};
use crate::error::{Error, Result};
use crate::ris::RisState;
use crate::C64;

/// Packet length, target error probability and the cached `Q⁻¹(ε)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FblParams {
    pub n_t: f64,
    pub eps_c: f64,
    pub q_inv: f64,
}

impl FblParams {
    pub fn new(n_t: f64, eps_c: f64) -> Result<Self> {
        if !(n_t > 0.0 && n_t.is_finite()) || !(eps_c > 0.0 && eps_c < 0.5) {
            return Err(Error::InvalidParameter(format!("n_t = {n_t}, eps_c = {eps_c}")));
        }
        Ok(Self { n_t, eps_c, q_inv: q_inv(eps_c) })
    }

    /// Infinite-blocklength limit: zero penalty, rates equal Shannon rates.
    pub fn shannon(self) -> Self {
        Self { q_inv: 0.0, ..self }
    }

    /// Penalty coefficient of the rate curve in nats:
    /// `ln(1+γ) - a sqrt(γ/(1+γ))` with `a = Q⁻¹(ε) sqrt(2/n)`.
    pub fn penalty_coefficient(&self) -> f64 {
        self.q_inv * (2.0 / self.n_t).sqrt()
    }

    /// Smallest SINR with a positive rate (zero for the Shannon limit).
    pub fn gamma_zero(&self) -> f64 {
        let a = self.penalty_coefficient();
        if a <= 0.0 {
            0.0
        } else {
            lemma2_analysis(a).map(|x| x.gamma_zero).unwrap_or(f64::INFINITY)
        }
    }
}

impl Default for FblParams {
    fn default() -> Self {
        Self::new(200.0, 1e-3).expect("valid defaults")
    }
}

/// Constant power per user and inverse amplifier efficiency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyParams {
    pub p_c: f64,
    pub eta: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        Self { p_c: 1.0, eta: 1.0 / 0.5 }
    }
}

impl EnergyParams {
    pub fn validate(&self) -> Result<()> {
        if self.p_c > 0.0 && self.eta > 0.0 && self.p_c.is_finite() && self.eta.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("energy parameters {self:?}")))
        }
    }
}

/// Standard normal quantile `Φ⁻¹(p)`: Acklam's rational approximation
/// followed by one Halley step on the exact CDF.
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    };
    for _ in 0..2 {
        let e = 0.5 * erfc(-x / SQRT_2) - p;
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
        x -= u / (1.0 + x * u / 2.0);
    }
    x
}

/// Inverse Gaussian Q-function, `Q⁻¹(ε) = Φ⁻¹(1 - ε)`, for `0 < ε < 1`.
pub fn q_inv(eps: f64) -> f64 {
    assert!(eps > 0.0 && eps < 1.0, "Q⁻¹ needs 0 < ε < 1, got {eps}");
    // Evaluating the lower tail keeps full relative accuracy for small ε.
    -normal_quantile(eps)
}

/// Gaussian tail `Q(x)`.
pub fn q_func(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Dispersion achievable with interference treated as noise.
pub fn dispersion(gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("negative SINR {gamma}")));
    }
    Ok(if gamma.is_infinite() { 2.0 } else { 2.0 * gamma / (1.0 + gamma) })
}

/// Dispersion of Gaussian point-to-point channels, a lower bound on
/// [`dispersion`].
pub fn dispersion_optimal(gamma: f64) -> Result<f64> {
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("negative SINR {gamma}")));
    }
    Ok(1.0 - (1.0 + gamma).powi(-2))
}

pub fn shannon_rate(gamma: f64) -> f64 {
    gamma.ln_1p() * LOG2_E
}

/// Rate penalty `δ = Q⁻¹(ε) sqrt(V/n) log2(e)` in bits.
pub fn rate_penalty(gamma: f64, fbl: &FblParams) -> f64 {
    let v = 2.0 * gamma / (1.0 + gamma);
    fbl.q_inv * (v / fbl.n_t).sqrt() * LOG2_E
}

/// Finite-blocklength rate in bits; negative at low SINR.
pub fn fbl_rate(gamma: f64, fbl: &FblParams) -> f64 {
    shannon_rate(gamma) - rate_penalty(gamma, fbl)
}

/// Shape of `f(γ) = ln(1+γ) - a sqrt(γ/(1+γ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FblCurveAnalysis {
    pub a: f64,
    pub gamma_star: f64,
    pub gamma_zero: f64,
    pub f_min: f64,
}

pub fn lemma2_curve(a: f64, gamma: f64) -> f64 {
    gamma.ln_1p() - a * (gamma / (1.0 + gamma)).sqrt()
}

/// Minimizer and positive root of [`lemma2_curve`]. The minimizer solves
/// `γ(1+γ) = a²/4`, the root is bracketed to the right of it and bisected.
pub fn lemma2_analysis(a: f64) -> Result<FblCurveAnalysis> {
    if !(a > 0.0 && a.is_finite()) {
        return Err(Error::InvalidParameter(format!("penalty coefficient {a}")));
    }
    let f = |g: f64| lemma2_curve(a, g);
    let gamma_star = ((1.0 + a * a).sqrt() - 1.0) / 2.0;
    let f_min = f(gamma_star);
    let mut lo = gamma_star;
    let mut hi = (2.0 * gamma_star).max(1e-300);
    let mut tries = 0;
    while f(hi) <= 0.0 {
        lo = hi;
        hi *= 2.0;
        tries += 1;
        if tries > 2000 || !hi.is_finite() {
            return Err(Error::Bracket(format!("no sign change of the rate curve for a = {a}")));
        }
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let gamma_zero = if f(lo).abs() <= f(hi).abs() { lo } else { hi };
    Ok(FblCurveAnalysis { a, gamma_star, gamma_zero, f_min })
}

pub fn per_user_ee(rate: f64, beam: &[C64], energy: &EnergyParams) -> f64 {
    let p: f64 = beam.iter().map(|z| z.norm_sqr()).sum();
    rate / (energy.p_c + energy.eta * p)
}

/// Global energy efficiency: total rate over total consumed power.
pub fn gee(rates: &[f64], beams: &BeamformingSet, energy: &EnergyParams) -> f64 {
    let p: f64 = beams.x.iter().map(|x| x.iter().map(|z| z.norm_sqr()).sum::<f64>()).sum();
    rates.iter().sum::<f64>() / (rates.len() as f64 * energy.p_c + energy.eta * p)
}

/// Rate needed to deliver `n_t` bits within `t_c` seconds over `w` Hz.
pub fn latency_threshold(n_t: f64, t_c: f64, w: f64) -> Result<f64> {
    if !(n_t > 0.0 && t_c > 0.0 && w > 0.0) {
        return Err(Error::InvalidParameter(format!("n_t={n_t}, t_c={t_c}, w={w}")));
    }
    Ok(n_t / (t_c * w))
}

/// `amps[u][v] = h_{u, bs(v)} x_v`: amplitude of user `v`'s stream at user `u`.
pub fn received_amplitudes(channels: &ChannelSet, ris: &RisState, beams: &BeamformingSet) -> Vec<Vec<C64>> {
    let h = all_effective_channels(channels, ris);
    let users = channels.num_users();
    (0..users)
        .map(|u| {
            (0..users)
                .map(|v| {
                    let hu = &h[u * channels.cells + channels.bs_of(v)];
                    hu.iter().zip(&beams.x[v]).map(|(a, b)| a * b).sum()
                })
                .collect()
        })
        .collect()
}

/// SINRs of all users from received amplitudes. Under time switching only
/// users scheduled in the same sub-slot interfere.
pub fn sinr_from_amplitudes(amps: &[Vec<C64>], ris: &RisState, noise: f64) -> Vec<f64> {
    (0..amps.len())
        .map(|u| {
            let interference: f64 =
                (0..amps.len()).filter(|&v| v != u && ris.same_slot(u, v)).map(|v| amps[u][v].norm_sqr()).sum();
            amps[u][u].norm_sqr() / (noise + interference)
        })
        .collect()
}

pub fn sinr_all(channels: &ChannelSet, ris: &RisState, beams: &BeamformingSet) -> Vec<f64> {
    sinr_from_amplitudes(&received_amplitudes(channels, ris, beams), ris, channels.noise_power)
}

/// SINR of user `k` in cell `l`.
pub fn sinr(channels: &ChannelSet, ris: &RisState, beams: &BeamformingSet, l: usize, k: usize) -> f64 {
    sinr_all(channels, ris, beams)[l * channels.users_per_cell + k]
}

/// Per-user link quantities plus the global energy efficiency.
///
/// Under time switching a user is active for `rate_fraction` of the slot, so
/// its rate and its average transmit power are both scaled by that share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub gamma: Vec<f64>,
    pub v: Vec<f64>,
    pub delta: Vec<f64>,
    pub r: Vec<f64>,
    pub c: Vec<f64>,
    pub e: Vec<f64>,
    pub gee: f64,
}

impl RateReport {
    pub fn from_sinr(
        gamma: Vec<f64>,
        fractions: &[f64],
        powers: &[f64],
        fbl: &FblParams,
        energy: &EnergyParams,
    ) -> Self {
        let n = gamma.len();
        let v: Vec<f64> = gamma.iter().map(|&g| 2.0 * g / (1.0 + g)).collect();
        let delta: Vec<f64> = gamma.iter().zip(fractions).map(|(&g, f)| f * rate_penalty(g, fbl)).collect();
        let c: Vec<f64> = gamma.iter().zip(fractions).map(|(&g, f)| f * shannon_rate(g)).collect();
        let r: Vec<f64> = c.iter().zip(&delta).map(|(c, d)| c - d).collect();
        let avg_power: Vec<f64> = powers.iter().zip(fractions).map(|(p, f)| p * f).collect();
        let e = r.iter().zip(&avg_power).map(|(r, p)| r / (energy.p_c + energy.eta * p)).collect();
        let gee = r.iter().sum::<f64>() / (n as f64 * energy.p_c + energy.eta * avg_power.iter().sum::<f64>());
        Self { gamma, v, delta, r, c, e, gee }
    }

    pub fn evaluate(
        channels: &ChannelSet,
        ris: &RisState,
        beams: &BeamformingSet,
        fbl: &FblParams,
        energy: &EnergyParams,
    ) -> Self {
        let gamma = sinr_all(channels, ris, beams);
        let fractions: Vec<f64> = (0..gamma.len()).map(|u| ris.rate_fraction(u)).collect();
        let powers: Vec<f64> = (0..gamma.len()).map(|u| beams.power(u)).collect();
        Self::from_sinr(gamma, &fractions, &powers, fbl, energy)
    }
}
