//! Concave quadratic minorizers of finite-blocklength rates.
//!
//! Every received amplitude `u_v = h_u x_v` is affine in the beams for fixed
//! surface coefficients and affine in the coefficients for fixed beams, so
//! one builder over [`ComplexAffine`] amplitudes serves both blocks.

use std::f64::consts::LOG2_E;

use crate::beam_opt::BeamformingSet;
use crate::channel::{all_effective_channels, ChannelSet};
use crate::error::{Error, Result};
use crate::metrics::FblParams;
use crate::ris::{CoefRef, RisState};
use crate::C64;

/// `constant + Σ coef_i z_i` over complex variables.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComplexAffine {
    pub constant: C64,
    pub terms: Vec<(usize, C64)>,
}

impl ComplexAffine {
    pub fn eval(&self, z: &[C64]) -> C64 {
        self.terms.iter().fold(self.constant, |acc, &(i, c)| acc + c * z[i])
    }

    pub fn scaled(&self, s: C64) -> Self {
        Self { constant: self.constant * s, terms: self.terms.iter().map(|&(i, c)| (i, c * s)).collect() }
    }
}

/// Point in a problem's variable space: complex blocks plus real auxiliaries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Variables {
    pub complex: Vec<C64>,
    pub real: Vec<f64>,
}

impl Variables {
    pub fn new(complex: Vec<C64>, real: Vec<f64>) -> Self {
        Self { complex, real }
    }

    /// Real embedding `[Re z0, Im z0, ..., t0, t1, ...]`.
    pub fn to_real(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.complex.len() + self.real.len());
        for z in &self.complex {
            y.push(z.re);
            y.push(z.im);
        }
        y.extend_from_slice(&self.real);
        y
    }

    pub fn from_real(y: &[f64], n_complex: usize) -> Self {
        let complex = (0..n_complex).map(|i| C64::new(y[2 * i], y[2 * i + 1])).collect();
        Self { complex, real: y[2 * n_complex..].to_vec() }
    }
}

/// `constant + Σ Re{c_i z_i} + Σ a_j t_j - Σ w_k |A_k(z)|²` with `w_k ≥ 0`,
/// concave by construction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadraticForm {
    pub constant: f64,
    pub linear: Vec<(usize, C64)>,
    pub real_linear: Vec<(usize, f64)>,
    pub squares: Vec<(f64, ComplexAffine)>,
}

impl QuadraticForm {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, ..Self::default() }
    }

    /// Single real auxiliary `t_j`.
    pub fn real_var(j: usize) -> Self {
        Self { real_linear: vec![(j, 1.0)], ..Self::default() }
    }

    /// `bound - Σ_{i in vars} |z_i|²`, a ball constraint.
    pub fn ball(vars: impl IntoIterator<Item = usize>, bound: f64) -> Self {
        let mut q = Self::constant(bound);
        for i in vars {
            q.sub_square(1.0, ComplexAffine { constant: C64::new(0.0, 0.0), terms: vec![(i, C64::new(1.0, 0.0))] });
        }
        q
    }

    /// Adds `Re{coef · aff(z)}`.
    pub fn add_re(&mut self, coef: C64, aff: &ComplexAffine) {
        self.constant += (coef * aff.constant).re;
        self.linear.extend(aff.terms.iter().map(|&(i, c)| (i, coef * c)));
    }

    /// Adds `-w |aff(z)|²`; `w` must be nonnegative.
    pub fn sub_square(&mut self, w: f64, aff: ComplexAffine) {
        assert!(w >= 0.0, "negative weight would break concavity");
        if w > 0.0 {
            self.squares.push((w, aff));
        }
    }

    pub fn add_real(&mut self, j: usize, a: f64) {
        self.real_linear.push((j, a));
    }

    /// `s · self` for `s ≥ 0`.
    pub fn scale(&mut self, s: f64) {
        assert!(s >= 0.0, "negative scaling would break concavity");
        self.constant *= s;
        self.linear.iter_mut().for_each(|t| t.1 *= s);
        self.real_linear.iter_mut().for_each(|t| t.1 *= s);
        self.squares.iter_mut().for_each(|t| t.0 *= s);
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.scale(s);
        self
    }

    pub fn add(&mut self, other: &QuadraticForm) {
        self.constant += other.constant;
        self.linear.extend_from_slice(&other.linear);
        self.real_linear.extend_from_slice(&other.real_linear);
        self.squares.extend(other.squares.iter().cloned());
    }

    /// `self + s · other` for `s ≥ 0`.
    pub fn add_scaled(&mut self, other: &QuadraticForm, s: f64) {
        self.add(&other.clone().scaled(s));
    }

    pub fn eval(&self, v: &Variables) -> f64 {
        self.eval_parts(&v.complex, &v.real)
    }

    pub fn eval_parts(&self, z: &[C64], t: &[f64]) -> f64 {
        let lin: f64 = self.linear.iter().map(|&(i, c)| (c * z[i]).re).sum();
        let real: f64 = self.real_linear.iter().map(|&(j, a)| a * t[j]).sum();
        let quad: f64 = self.squares.iter().map(|(w, a)| w * a.eval(z).norm_sqr()).sum();
        self.constant + lin + real - quad
    }

    /// Quadratic part along a direction `dz`: `-Σ w |Σ c_i dz_i|²`.
    pub fn quadratic_part(&self, dz: &[C64]) -> f64 {
        -self
            .squares
            .iter()
            .map(|(w, a)| {
                let s: C64 = a.terms.iter().map(|&(i, c)| c * dz[i]).sum();
                w * s.norm_sqr()
            })
            .sum::<f64>()
    }

    /// Largest complex / real variable index referenced, plus one.
    pub fn extent(&self) -> (usize, usize) {
        let c = self
            .linear
            .iter()
            .map(|t| t.0)
            .chain(self.squares.iter().flat_map(|(_, a)| a.terms.iter().map(|t| t.0)))
            .max()
            .map_or(0, |i| i + 1);
        let r = self.real_linear.iter().map(|t| t.0).max().map_or(0, |j| j + 1);
        (c, r)
    }
}

/// Appendix inequality: `sqrt(x) ≤ sqrt(x̄)/2 + x/(2 sqrt(x̄))`. Returns the
/// right-hand side.
pub fn ineq_sqrt_upper(x: f64, x_bar: f64) -> Result<f64> {
    if !(x_bar > 0.0) || x < 0.0 {
        return Err(Error::InvalidParameter(format!("sqrt bound at x={x}, x̄={x_bar}")));
    }
    let s = x_bar.sqrt();
    Ok(s / 2.0 + x / (2.0 * s))
}

/// `|x|²/y ≥ 2Re{x̄* x}/ȳ - |x̄|² y/ȳ²` for `y > 0`. Returns the right-hand side.
pub fn ineq_ratio_lower(x: C64, y: f64, x_bar: C64, y_bar: f64) -> Result<f64> {
    if !(y_bar > 0.0) || !(y > 0.0) {
        return Err(Error::InvalidParameter(format!("ratio bound at y={y}, ȳ={y_bar}")));
    }
    Ok(2.0 * (x_bar.conj() * x).re / y_bar - x_bar.norm_sqr() * y / (y_bar * y_bar))
}

/// `ln(1 + |x|²/y) ≥ ln(1 + |x̄|²/ȳ) - |x̄|²/ȳ + 2Re{x̄* x}/ȳ
///  - (|x̄|²/ȳ) (|x|² + y)/(|x̄|² + ȳ)`. Returns the right-hand side.
pub fn ineq_log_lower(x: C64, y: f64, x_bar: C64, y_bar: f64) -> Result<f64> {
    if !(y_bar > 0.0) || !(y > 0.0) {
        return Err(Error::InvalidParameter(format!("log bound at y={y}, ȳ={y_bar}")));
    }
    let p = x_bar.norm_sqr();
    if p == 0.0 {
        return Ok(0.0);
    }
    // Grouped so the terms of size γ̄ cancel exactly at the expansion point.
    let g = p / y_bar;
    Ok(g.ln_1p() + g * (2.0 * (x_bar.conj() * x).re / p - 1.0 - (x.norm_sqr() + y) / (p + y_bar)))
}

/// Received amplitudes seen by one user: its own stream and the streams that
/// interfere with it, each affine in the optimization variables.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkAffine {
    pub user: usize,
    pub own: ComplexAffine,
    pub interferers: Vec<ComplexAffine>,
}

impl LinkAffine {
    pub fn sinr(&self, z: &[C64], noise: f64) -> f64 {
        let i: f64 = self.interferers.iter().map(|a| a.eval(z).norm_sqr()).sum();
        self.own.eval(z).norm_sqr() / (noise + i)
    }
}

/// Scalars of the rate minorizer at the expansion point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateCoefficients {
    pub gamma: f64,
    pub v: f64,
    /// Noise plus interference.
    pub interference: f64,
    /// Noise plus interference plus useful power.
    pub total: f64,
    /// `interference / total`.
    pub zeta: f64,
    pub a: f64,
    pub b: f64,
}

impl SurrogateCoefficients {
    pub fn new(own: C64, interferers: &[C64], noise: f64, fbl: &FblParams) -> Self {
        let interference = noise + interferers.iter().map(|u| u.norm_sqr()).sum::<f64>();
        let total = interference + own.norm_sqr();
        let gamma = own.norm_sqr() / interference;
        let v = 2.0 * gamma / (1.0 + gamma);
        let zeta = interference / total;
        let c = fbl.q_inv / fbl.n_t.sqrt();
        let (a, b) = if c == 0.0 {
            (gamma.ln_1p() - gamma, gamma)
        } else {
            let sv = v.sqrt();
            (gamma.ln_1p() - gamma - c * (sv / 2.0 + 1.0 / sv), gamma + zeta * c / sv)
        };
        Self { gamma, v, interference, total, zeta, a, b }
    }
}

fn expansion(
    link: &LinkAffine,
    z: &[C64],
    noise: f64,
    fbl: &FblParams,
) -> Result<(C64, Vec<C64>, SurrogateCoefficients)> {
    let own = link.own.eval(z);
    let others: Vec<C64> = link.interferers.iter().map(|a| a.eval(z)).collect();
    let k = SurrogateCoefficients::new(own, &others, noise, fbl);
    if fbl.q_inv > 0.0 && !(k.gamma > 1e-300) {
        return Err(Error::ZeroSinrExpansion { user: link.user });
    }
    Ok((own, others, k))
}

/// Concave minorizer (in nats) of `ln(1+γ)` touching at `z_bar`.
pub fn shannon_lower_bound(link: &LinkAffine, z_bar: &[C64], noise: f64) -> QuadraticForm {
    let shannon = FblParams { q_inv: 0.0, n_t: 1.0, eps_c: 0.5 };
    let (own, _, k) = expansion(link, z_bar, noise, &shannon).expect("no division at zero penalty");
    let mut q = QuadraticForm::constant(k.gamma.ln_1p() - k.gamma);
    q.add_re(own.conj() * (2.0 / k.interference), &link.own);
    let w = k.gamma / k.total;
    q.constant -= w * noise;
    q.sub_square(w, link.own.clone());
    for a in &link.interferers {
        q.sub_square(w, a.clone());
    }
    q
}

/// Concave form equal to minus an upper bound (in nats) of the dispersion
/// penalty `Q⁻¹(ε) sqrt(V/n)`, touching at `z_bar`.
pub fn neg_penalty_upper_bound(link: &LinkAffine, z_bar: &[C64], noise: f64, fbl: &FblParams) -> Result<QuadraticForm> {
    let (_, others, k) = expansion(link, z_bar, noise, fbl)?;
    let c = fbl.q_inv / fbl.n_t.sqrt();
    if c == 0.0 {
        return Ok(QuadraticForm::default());
    }
    let sv = k.v.sqrt();
    let mut q = QuadraticForm::constant(-c * (sv / 2.0 + 1.0 / sv));
    let lin = 2.0 * c / (sv * k.total);
    q.constant += lin * noise;
    for (a, ub) in link.interferers.iter().zip(&others) {
        q.add_re(ub.conj() * lin, a);
    }
    let w = c * k.zeta / (sv * k.total);
    q.constant -= w * noise;
    q.sub_square(w, link.own.clone());
    for a in &link.interferers {
        q.sub_square(w, a.clone());
    }
    Ok(q)
}

/// Concave minorizer of the finite-blocklength rate of `link.user`, in bits
/// and multiplied by `fraction` (the user's share of the slot):
///
/// `a + 2Re{ū* u}/Ī + (2c/sqrt(V̄)) (σ² + Σ Re{ū_v* u_v})/T̄ - b (σ² + Σ |u_v|²)/T̄`
///
/// with `c = Q⁻¹(ε)/sqrt(n)`, `Ī` and `T̄` the interference-plus-noise and
/// total received power at the expansion point.
pub fn rate_surrogate(
    link: &LinkAffine,
    z_bar: &[C64],
    noise: f64,
    fbl: &FblParams,
    fraction: f64,
) -> Result<QuadraticForm> {
    let (own, others, k) = expansion(link, z_bar, noise, fbl)?;
    let c = fbl.q_inv / fbl.n_t.sqrt();
    let mut q = QuadraticForm::constant(k.a);
    q.add_re(own.conj() * (2.0 / k.interference), &link.own);
    if c > 0.0 {
        let lin = 2.0 * c / (k.v.sqrt() * k.total);
        q.constant += lin * noise;
        for (a, ub) in link.interferers.iter().zip(&others) {
            q.add_re(ub.conj() * lin, a);
        }
    }
    let w = k.b / k.total;
    q.constant -= w * noise;
    q.sub_square(w, link.own.clone());
    for a in &link.interferers {
        q.sub_square(w, a.clone());
    }
    Ok(q.scaled(LOG2_E * fraction))
}

/// Lower bound `2Re{ū* u} - |ū|²` of the useful power, tight at `z_bar`.
pub fn useful_power_lower_bound(link: &LinkAffine, z_bar: &[C64]) -> QuadraticForm {
    let own = link.own.eval(z_bar);
    let mut q = QuadraticForm::constant(-own.norm_sqr());
    q.add_re(own.conj() * 2.0, &link.own);
    q
}

/// `-(σ² + Σ |u_v|²)`, the negated interference-plus-noise power.
pub fn neg_interference(link: &LinkAffine, noise: f64) -> QuadraticForm {
    let mut q = QuadraticForm::constant(-noise);
    for a in &link.interferers {
        q.sub_square(1.0, a.clone());
    }
    q
}

/// Beam variables `x_v = s_v x̂_v`, one complex variable per antenna, stored
/// user-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamLayout {
    pub n_bs: usize,
    pub scale: Vec<f64>,
}

impl BeamLayout {
    pub fn unscaled(users: usize, n_bs: usize) -> Self {
        Self { n_bs, scale: vec![1.0; users] }
    }

    pub fn users(&self) -> usize {
        self.scale.len()
    }

    pub fn len(&self) -> usize {
        self.users() * self.n_bs
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, user: usize, antenna: usize) -> usize {
        user * self.n_bs + antenna
    }

    pub fn user_vars(&self, user: usize) -> std::ops::Range<usize> {
        user * self.n_bs..(user + 1) * self.n_bs
    }

    pub fn to_vars(&self, beams: &BeamformingSet) -> Vec<C64> {
        beams.x.iter().zip(&self.scale).flat_map(|(x, &s)| x.iter().map(move |z| z / s)).collect()
    }

    pub fn to_beams(&self, z: &[C64]) -> BeamformingSet {
        let x = (0..self.users()).map(|u| z[self.user_vars(u)].iter().map(|v| v * self.scale[u]).collect()).collect();
        BeamformingSet { x }
    }
}

/// Received amplitudes of every user as affine functions of the beams.
pub fn beam_links(channels: &ChannelSet, ris: &RisState, layout: &BeamLayout) -> Vec<LinkAffine> {
    let h = all_effective_channels(channels, ris);
    let users = channels.num_users();
    let amp = |u: usize, v: usize| {
        let hu = &h[u * channels.cells + channels.bs_of(v)];
        ComplexAffine {
            constant: C64::new(0.0, 0.0),
            terms: hu.iter().enumerate().map(|(n, &c)| (layout.index(v, n), c * layout.scale[v])).collect(),
        }
    };
    (0..users)
        .map(|u| LinkAffine {
            user: u,
            own: amp(u, u),
            interferers: (0..users).filter(|&v| v != u && ris.same_slot(u, v)).map(|v| amp(u, v)).collect(),
        })
        .collect()
}

/// Surface variables: the active coefficients of a state, in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaLayout {
    pub coefs: Vec<CoefRef>,
}

impl ThetaLayout {
    pub fn new(ris: &RisState) -> Self {
        Self { coefs: ris.active_coefficients() }
    }

    pub fn len(&self) -> usize {
        self.coefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefs.is_empty()
    }

    pub fn index_of(&self, c: CoefRef) -> Option<usize> {
        self.coefs.iter().position(|&x| x == c)
    }

    pub fn to_vars(&self, ris: &RisState) -> Vec<C64> {
        self.coefs.iter().map(|&c| ris.coefficient(c)).collect()
    }

    pub fn apply(&self, ris: &RisState, z: &[C64]) -> RisState {
        let mut out = ris.clone();
        for (&c, &v) in self.coefs.iter().zip(z) {
            out.set_coefficient(c, v);
        }
        out
    }
}

/// Received amplitudes of every user as affine functions of the active
/// surface coefficients, for fixed beams.
pub fn theta_links(
    channels: &ChannelSet,
    ris: &RisState,
    beams: &BeamformingSet,
    layout: &ThetaLayout,
) -> Vec<LinkAffine> {
    let users = channels.num_users();
    let mut index = std::collections::HashMap::new();
    for (i, &c) in layout.coefs.iter().enumerate() {
        index.insert(c, i);
    }
    let amp = |u: usize, v: usize| {
        let bs = channels.bs_of(v);
        let x = &beams.x[v];
        let dot = |row: &[C64]| row.iter().zip(x).map(|(a, b)| a * b).sum::<C64>();
        let mut aff = ComplexAffine { constant: dot(channels.direct(u, bs)), terms: Vec::new() };
        for m in 0..channels.num_ris {
            let Some(side) = ris.coefficient_side(u, m) else { continue };
            let f = channels.ris_user(u, m);
            for (n, &fn_) in f.iter().enumerate() {
                let c = fn_ * dot(channels.bs_ris_row(m, bs, n));
                match index.get(&CoefRef { m, n, side }) {
                    Some(&i) => aff.terms.push((i, c)),
                    None => aff.constant += c * ris.coefficients(side, m)[n],
                }
            }
        }
        aff
    };
    (0..users)
        .map(|u| LinkAffine {
            user: u,
            own: amp(u, u),
            interferers: (0..users).filter(|&v| v != u && ris.same_slot(u, v)).map(|v| amp(u, v)).collect(),
        })
        .collect()
}

/// Rate minorizer of user `u` over the beams, expanded at `beams_prev`.
pub fn rate_surrogate_in_beams(
    channels: &ChannelSet,
    ris: &RisState,
    beams_prev: &BeamformingSet,
    layout: &BeamLayout,
    fbl: &FblParams,
    u: usize,
) -> Result<QuadraticForm> {
    let links = beam_links(channels, ris, layout);
    let z = layout.to_vars(beams_prev);
    rate_surrogate(&links[u], &z, channels.noise_power, fbl, ris.rate_fraction(u))
}

/// Rate minorizer of user `u` over the active surface coefficients,
/// expanded at `ris_prev`.
pub fn rate_surrogate_in_theta(
    channels: &ChannelSet,
    ris_prev: &RisState,
    beams: &BeamformingSet,
    layout: &ThetaLayout,
    fbl: &FblParams,
    u: usize,
) -> Result<QuadraticForm> {
    let links = theta_links(channels, ris_prev, beams, layout);
    let z = layout.to_vars(ris_prev);
    rate_surrogate(&links[u], &z, channels.noise_power, fbl, ris_prev.rate_fraction(u))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inequalities_touch() {
        let x = C64::new(0.3, -1.2);
        assert!((ineq_sqrt_upper(2.5, 2.5).unwrap() - 2.5f64.sqrt()).abs() < 1e-12);
        assert!((ineq_ratio_lower(x, 0.7, x, 0.7).unwrap() - x.norm_sqr() / 0.7).abs() < 1e-12);
        let exact = (x.norm_sqr() / 0.7).ln_1p();
        assert!((ineq_log_lower(x, 0.7, x, 0.7).unwrap() - exact).abs() < 1e-12);
        assert_eq!(ineq_sqrt_upper(4.0, 1.0).unwrap(), 2.5);
        assert!(ineq_sqrt_upper(1.0, 0.0).is_err());
        assert!(ineq_ratio_lower(x, 1.0, x, -1.0).is_err());
    }

    #[test]
    fn ball_is_concave() {
        let q = QuadraticForm::ball(0..3, 2.0);
        let v = Variables::new(vec![C64::new(1.0, 0.0); 3], vec![]);
        assert_eq!(q.eval(&v), -1.0);
        assert!(q.quadratic_part(&[C64::new(0.1, 0.4); 3]) <= 0.0);
    }

    #[test]
    fn zero_sinr_rejected() {
        let link = LinkAffine {
            user: 0,
            own: ComplexAffine { constant: C64::new(0.0, 0.0), terms: vec![(0, C64::new(1.0, 0.0))] },
            interferers: vec![],
        };
        let err = rate_surrogate(&link, &[C64::new(0.0, 0.0)], 1.0, &FblParams::default(), 1.0);
        assert!(matches!(err, Err(Error::ZeroSinrExpansion { user: 0 })));
    }
}
