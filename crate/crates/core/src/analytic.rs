//! Weak-drive analytic model: truncated amplitude equations of the
//! non-Hermitian Hamiltonian, closed-form g², its dimensionless form in
//! `l = Ω_q/Ω_m − 1` and `r = κ/J`, and the extremum analysis in `l`.

use std::f64::consts::SQRT_2;

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::model::{ModelError, SystemParams};

/// Back-substitution bound for the quartic numerator.
pub const ROOT_RESIDUAL_TOL: f64 = 1e-8;
/// Imaginary part tolerated on a resolvent root before it is rejected.
const REAL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("decay rate must be positive, got {0}")]
    NonPositiveKappa(f64),
    #[error("r must be positive, got {0}")]
    NonPositiveRatio(f64),
    #[error("amplitude system is singular")]
    Singular,
    #[error("⟨m†m⟩ vanishes; g² undefined")]
    Undriven,
    #[error("no two real extrema of the quartic at r = {0}")]
    NoRealRoots(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Amplitudes of `|g0⟩, |e0⟩, |g1⟩, |e1⟩, |g2⟩` with `C_g0 = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeSet {
    pub c_g0: C64,
    pub c_e0: C64,
    pub c_g1: C64,
    pub c_e1: C64,
    pub c_g2: C64,
}

impl AmplitudeSet {
    pub fn max_abs(&self) -> f64 {
        [self.c_g0, self.c_e0, self.c_g1, self.c_e1, self.c_g2].iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `2|C_g2|² / (|C_g1|² + |C_e1|² + 2|C_g2|²)²`.
    pub fn g2_full(&self) -> f64 {
        let g2 = self.c_g2.norm_sqr();
        let n = self.c_g1.norm_sqr() + self.c_e1.norm_sqr() + 2.0 * g2;
        2.0 * g2 / (n * n)
    }

    /// `2|C_g2|² / |C_g1|⁴`.
    pub fn g2_approx(&self) -> f64 {
        2.0 * self.c_g2.norm_sqr() / self.c_g1.norm_sqr().powi(2)
    }
}

/// Real coefficients `A, B, C, D` of the two-excitation amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

pub fn coefficients(j: f64, kappa: f64, omega_m: f64, omega_q: f64) -> Coefficients {
    let (om, oq, k2) = (omega_m, omega_q, kappa * kappa);
    Coefficients {
        a: 2.0 * j * j * (3.0 * om * om + oq * oq - 4.0 * om * oq) - om * om * k2,
        b: 4.0 * j * kappa * (om * oq - om * om),
        c: 2.0 * j * j * (2.0 * om * om + oq * oq - 3.0 * om * oq) + om * oq * k2,
        d: j * kappa * (4.0 * om * oq - 2.0 * om * om - oq * oq),
    }
}

fn check_kappa(kappa: f64) -> Result<(), AnalyticError> {
    if !(kappa > 0.0) {
        return Err(AnalyticError::NonPositiveKappa(kappa));
    }
    Ok(())
}

/// Closed-form amplitudes at `Δ₊ = J`, `Δ₋ = 0`.
pub fn steady_amplitudes_closed(j: f64, kappa: f64, omega_m: f64, omega_q: f64) -> Result<AmplitudeSet, AnalyticError> {
    check_kappa(kappa)?;
    let i = C64::i();
    let co = coefficients(j, kappa, omega_m, omega_q);
    let single = C64::new(kappa * kappa, 4.0 * j * kappa);
    let double = C64::new(kappa * kappa - 2.0 * j * j, 4.0 * j * kappa) * single;
    Ok(AmplitudeSet {
        c_g0: C64::new(1.0, 0.0),
        c_e0: -(4.0 * j * (omega_m - omega_q) + 2.0 * i * omega_q * kappa) / single,
        c_g1: -(4.0 * j * (omega_q - omega_m) + 2.0 * i * omega_m * kappa) / single,
        c_g2: 2.0 * SQRT_2 * C64::new(co.a, co.b) / double,
        c_e1: -4.0 * C64::new(co.c, co.d) / double,
    })
}

/// Matrix and source of the steady amplitude equations for
/// `x = (C_e0, C_g1, C_e1, C_g2)`, `C_g0 = 1`.
fn amplitude_system(p: &SystemParams) -> (Matrix4<C64>, Vector4<C64>) {
    let c = |x: f64| C64::new(x, 0.0);
    let eq = c(p.delta_q()) - C64::new(0.0, 0.5 * p.kappa_q);
    let em = c(p.delta_m()) - C64::new(0.0, 0.5 * p.kappa_m);
    let (j, om, oq) = (c(p.coupling), c(p.rabi_m), c(p.rabi_q));
    let z = c(0.0);
    let s2 = c(SQRT_2);
    #[rustfmt::skip]
    let m = Matrix4::new(
        eq, j,  z,       z,
        j,  em, z,       z,
        om, oq, eq + em, s2 * j,
        z,  s2 * om, s2 * j, em + em,
    );
    (m, Vector4::new(-oq, -om, z, z))
}

/// Amplitudes from a direct solve of the truncated steady equations at any
/// detuning. At `Δ₊ = J`, `Δ₋ = 0` and equal decay this matches
/// [`steady_amplitudes_closed`].
pub fn steady_amplitudes_general(p: &SystemParams) -> Result<AmplitudeSet, AnalyticError> {
    p.validate()?;
    check_kappa(p.kappa_m.min(p.kappa_q))?;
    let (m, rhs) = amplitude_system(p);
    let x = m.lu().solve(&rhs).ok_or(AnalyticError::Singular)?;
    if x.iter().any(|z| !z.is_finite()) {
        return Err(AnalyticError::Singular);
    }
    Ok(AmplitudeSet { c_g0: C64::new(1.0, 0.0), c_e0: x[0], c_g1: x[1], c_e1: x[2], c_g2: x[3] })
}

/// Largest residual of the four steady equations, relative to `max|C|`.
pub fn amplitude_residual(p: &SystemParams, amps: &AmplitudeSet) -> f64 {
    let (m, rhs) = amplitude_system(p);
    let x = Vector4::new(amps.c_e0, amps.c_g1, amps.c_e1, amps.c_g2);
    let r = m * x - rhs * amps.c_g0;
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max) * amps.max_abs();
    r.iter().map(|z| z.norm()).fold(0.0, f64::max) / scale.max(f64::MIN_POSITIVE)
}

/// Analytic g² at `Δ₊ = J` in three equivalent evaluations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticG2 {
    pub full: f64,
    pub approx: f64,
    /// Coefficient form of `approx`.
    pub closed: f64,
}

pub fn g2_analytic(j: f64, kappa: f64, omega_m: f64, omega_q: f64) -> Result<AnalyticG2, AnalyticError> {
    let amps = steady_amplitudes_closed(j, kappa, omega_m, omega_q)?;
    if amps.c_g1.norm_sqr() == 0.0 {
        return Err(AnalyticError::Undriven);
    }
    Ok(AnalyticG2 { full: amps.g2_full(), approx: amps.g2_approx(), closed: g2_closed_form(j, kappa, omega_m, omega_q) })
}

/// `(A²+B²)(κ⁴+16J²κ²) / {[(2J²−κ²)²+16J²κ²][4J²(Ω_q−Ω_m)²+Ω_m²κ²]²}`.
pub fn g2_closed_form(j: f64, kappa: f64, omega_m: f64, omega_q: f64) -> f64 {
    let co = coefficients(j, kappa, omega_m, omega_q);
    let (j2, k2) = (j * j, kappa * kappa);
    let num = (co.a * co.a + co.b * co.b) * (k2 * k2 + 16.0 * j2 * k2);
    let pair = (2.0 * j2 - k2).powi(2) + 16.0 * j2 * k2;
    let single = 4.0 * j2 * (omega_q - omega_m).powi(2) + omega_m * omega_m * k2;
    num / (pair * single * single)
}

/// `1 + 4(1 − r²)/(r⁴ + 16r²)`.
fn prefactor(r: f64) -> f64 {
    let r2 = r * r;
    1.0 + 4.0 * (1.0 - r2) / (r2 * r2 + 16.0 * r2)
}

fn check_r(r: f64) -> Result<(), AnalyticError> {
    if !(r > 0.0) {
        return Err(AnalyticError::NonPositiveRatio(r));
    }
    Ok(())
}

/// Approximate g² as a function of `l = Ω_q/Ω_m − 1` and `r = κ/J`.
pub fn g2_dimensionless(l: f64, r: f64) -> Result<f64, AnalyticError> {
    check_r(r)?;
    let r2 = r * r;
    let num = 4.0 * (l - 2.0).powi(2) * l * l + 4.0 * r2 * (3.0 * l + 2.0) * l + r2 * r2;
    Ok(num / (prefactor(r) * (4.0 * l * l + r2).powi(2)))
}

/// [`g2_dimensionless`] in terms of the drive ratio `Ω_q/Ω_m` and `κ`, `J`.
pub fn g2_at_ratio(ratio: f64, kappa: f64, j: f64) -> Result<f64, AnalyticError> {
    g2_dimensionless(ratio - 1.0, kappa / j)
}

/// `(b, c, d, f)` of the monic quartic `l⁴ + bl³ + cl² + dl + f` in the
/// numerator of `dg²/dl`.
pub fn quartic_coefficients(r: f64) -> [f64; 4] {
    let r2 = r * r;
    [-1.25 * r2 - 2.0, -2.25 * r2, r2 * r2 / 8.0 + r2 / 2.0, r2 * r2 / 8.0]
}

fn quartic(q: &[f64; 4], l: f64) -> f64 {
    let [b, c, d, f] = *q;
    (((l + b) * l + c) * l + d) * l + f
}

/// First derivative `dg²/dl`.
pub fn first_derivative(l: f64, r: f64) -> Result<f64, AnalyticError> {
    check_r(r)?;
    let q = quartic_coefficients(r);
    Ok(quartic(&q, l) / (prefactor(r) * (l * l + r * r / 4.0).powi(3)))
}

/// Coefficients `(b′, c′, d′, f′, g′)` of the quintic numerator of `d²g²/dl²`.
pub fn second_derivative_coefficients(r: f64) -> [f64; 5] {
    let [b, c, d, f] = quartic_coefficients(r);
    let r2 = r * r;
    [-3.0 * b, -4.0 * c + r2, -25.0 * r2 * r2 / 16.0 - 4.0 * r2, c * r2 / 2.0 - 6.0 * f, d * r2 / 4.0]
}

/// `d′` as it appears in the commonly quoted closed form, `−5d + 9r²`.
pub fn printed_d_prime(r: f64) -> f64 {
    -5.0 * quartic_coefficients(r)[2] + 9.0 * r * r
}

/// Second derivative `d²g²/dl²`.
pub fn second_derivative(l: f64, r: f64) -> Result<f64, AnalyticError> {
    check_r(r)?;
    let [bp, cp, dp, fp, gp] = second_derivative_coefficients(r);
    let num = ((((-2.0 * l + bp) * l + cp) * l + dp) * l + fp) * l + gp;
    Ok(num / (prefactor(r) * (l * l + r * r / 4.0).powi(4)))
}

/// How a [`RootPair`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootMethod {
    Radical,
    Companion,
}

/// The two extrema `l₁` (minimum near 2) and `l₂` (near 0) of g² in `l`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootPair {
    pub r: f64,
    pub l1: f64,
    pub l2: f64,
    pub method: RootMethod,
    /// Largest quartic residual at the returned roots.
    pub residual: f64,
    /// Max distance between radical and companion roots, if both exist.
    pub divergence: Option<f64>,
    /// Cube-root branch used for the resolvent root.
    pub branch: Option<usize>,
}

/// Resolvent cubic `y³ − c y² + (bd − 4f) y − (b² − 4c) f − d² = 0`.
fn resolvent(q: &[f64; 4]) -> (f64, f64) {
    let [b, c, d, f] = *q;
    (b * d - 4.0 * f, -(b * b - 4.0 * c) * f - d * d)
}

/// Resolvent roots from the radical expression, one per cube-root branch.
pub fn resolvent_roots(r: f64) -> [C64; 3] {
    let q = quartic_coefficients(r);
    let c = q[1];
    let (c1, d1) = resolvent(&q);
    let h1 = (-36.0 * c * c1 + 8.0 * c.powi(3) - 108.0 * d1).powi(2);
    let h2 = (12.0 * c1 - 4.0 * c * c).powi(3);
    let s1 = C64::new(h1, 0.0).sqrt();
    let s2 = C64::new(h1 + h2, 0.0).sqrt();
    let u = (s1 + s2).powf(1.0 / 3.0);
    let v = (s1 - s2).powf(1.0 / 3.0);
    let w = C64::new(-0.5, 3f64.sqrt() / 2.0);
    let mut out = [C64::new(0.0, 0.0); 3];
    for (k, slot) in out.iter_mut().enumerate() {
        let wk = w.powu(k as u32);
        *slot = c / 3.0 + (w.conj() * wk * u + w * wk.conj() * v) / 6.0;
    }
    out
}

/// Roots `(l₁, l₂)` of the quadratic factor built from a resolvent root `y`.
fn ferrari_pair(q: &[f64; 4], y: f64) -> Option<(f64, f64)> {
    let [b, c, d, _] = *q;
    let e = b * b / 4.0 - c + y;
    if !(e >= 0.0) {
        return None;
    }
    let s = e.sqrt();
    let lp = (2.0 * d - b * y) / (b * b - 4.0 * c + 4.0 * y);
    let p = b / 2.0 - s;
    let disc = p * p - 2.0 * y - 4.0 * s * lp;
    if !(disc >= 0.0) || !lp.is_finite() {
        return None;
    }
    let root = disc.sqrt();
    Some(((-p + root) / 2.0, (-p - root) / 2.0))
}

/// Real roots of the quartic from the eigenvalues of its companion matrix.
pub fn companion_roots(r: f64) -> Vec<f64> {
    let [b, c, d, f] = quartic_coefficients(r);
    #[rustfmt::skip]
    let m = Matrix4::new(
        -b,  -c,  -d,  -f,
        1.0, 0.0, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
    );
    let scale = 1.0 + b.abs().max(c.abs()).max(d.abs()).max(f.abs());
    let mut roots: Vec<f64> = m
        .complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-9 * scale)
        .map(|z| z.re)
        .collect();
    roots.sort_by(f64::total_cmp);
    roots
}

fn companion_pair(r: f64) -> Option<(f64, f64)> {
    let roots = companion_roots(r);
    let l1 = roots.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let l2 = roots.iter().copied().min_by(|a, b| a.abs().total_cmp(&b.abs()))?;
    (roots.len() >= 2).then_some((l1, l2))
}

fn nearest(roots: &[f64], x: f64) -> f64 {
    roots.iter().map(|&z| (z - x).abs()).fold(f64::INFINITY, f64::min)
}

/// Extrema of g² in `l` via the resolvent cubic, verified by
/// back-substitution and cross-checked against the companion matrix, which
/// takes over if no radical branch passes.
pub fn derivative_roots(r: f64) -> Result<RootPair, AnalyticError> {
    check_r(r)?;
    let q = quartic_coefficients(r);
    let companion = companion_roots(r);
    let resid = |l1: f64, l2: f64| quartic(&q, l1).abs().max(quartic(&q, l2).abs());

    let mut best: Option<(usize, f64, f64, f64)> = None;
    for (k, y) in resolvent_roots(r).iter().enumerate() {
        if y.im.abs() > REAL_TOL * y.norm().max(1.0) {
            continue;
        }
        let Some((l1, l2)) = ferrari_pair(&q, y.re) else { continue };
        let res = resid(l1, l2);
        if res > ROOT_RESIDUAL_TOL {
            continue;
        }
        // principal branch first, otherwise smallest residual
        if best.is_none() || (k != 0 && res < best.unwrap().3 && best.unwrap().0 != 0) {
            best = Some((k, l1, l2, res));
        }
    }

    if let Some((k, l1, l2, residual)) = best {
        let divergence = (!companion.is_empty()).then(|| nearest(&companion, l1).max(nearest(&companion, l2)));
        return Ok(RootPair { r, l1, l2, method: RootMethod::Radical, residual, divergence, branch: Some(k) });
    }
    let (l1, l2) = companion_pair(r).ok_or(AnalyticError::NoRealRoots(r))?;
    Ok(RootPair { r, l1, l2, method: RootMethod::Companion, residual: resid(l1, l2), divergence: None, branch: None })
}
