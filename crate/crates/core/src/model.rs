//! Hamiltonians and dissipation channels built from one parameter record.
//!
//! Every frequency and rate in [`SystemParams`] is an angular frequency in
//! rad·µs⁻¹, so `κ t` is dimensionless with `t` in µs. Use [`from_mhz`] to
//! convert the usual `ν = ω/2π` values quoted in MHz.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::hilbert::{HilbertError, HilbertSpace, Operator};

/// Reduced Planck constant [J·s] (CODATA 2018, exact).
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant [J·K⁻¹] (CODATA 2018, exact).
pub const K_BOLTZMANN: f64 = 1.380_649e-23;
/// Probe power conversion `Ω = k √P` with k in 10⁶ rad·s⁻¹ per mW^½.
pub const RABI_PER_SQRT_MW: f64 = 103.0;

const DETUNING_ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("parameter `{name}` must be non-negative, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("parameter `{name}` must be finite")]
    NotFinite { name: &'static str },
    #[error("the longitudinal Hamiltonian requires Δ₋ = 0, got Δ₋ = {0}")]
    NonzeroDeltaMinus(f64),
    #[error("a single decay rate is required, got κ_m = {kappa_m} and κ_q = {kappa_q}")]
    UnequalDecay { kappa_m: f64, kappa_q: f64 },
    #[error("temperature must be positive, got {0} K")]
    NonPositiveTemperature(f64),
    #[error("drive power must be non-negative, got {0} mW")]
    NegativePower(f64),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// Convert `ν = ω/2π` in MHz to ω in rad·µs⁻¹.
pub fn from_mhz(nu_mhz: f64) -> f64 {
    2.0 * PI * nu_mhz
}

/// Convert ω in rad·µs⁻¹ to `ν = ω/2π` in MHz.
pub fn to_mhz(omega: f64) -> f64 {
    omega / (2.0 * PI)
}

/// Physical parameters of the driven magnon–qubit system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SystemParams {
    pub omega_q: f64,
    pub omega_m: f64,
    /// Shared frequency of the magnon drive and the qubit probe.
    pub omega_drive: f64,
    /// Transversal (exchange) coupling J.
    pub coupling: f64,
    /// Longitudinal coupling g_rp.
    pub g_rp: f64,
    /// Magnon drive Rabi frequency Ω_m.
    pub rabi_m: f64,
    /// Qubit probe Rabi frequency Ω_q.
    pub rabi_q: f64,
    pub kappa_m: f64,
    pub kappa_q: f64,
    /// Thermal magnon occupation of the bath.
    pub m_th: f64,
    pub fock_dim: usize,
}

/// Default Fock truncation.
pub const DEFAULT_FOCK_DIM: usize = 6;
/// Default drive frequency, 2π × 1.5 GHz.
pub const DEFAULT_DRIVE_MHZ: f64 = 1500.0;

impl SystemParams {
    /// Parameters specified through detunings from the drive:
    /// `Δ_m = Δ₊ + Δ₋`, `Δ_q = Δ₊ − Δ₋`.
    pub fn from_detunings(omega_drive: f64, delta_plus: f64, delta_minus: f64) -> Self {
        Self {
            omega_q: omega_drive + (delta_plus - delta_minus),
            omega_m: omega_drive + (delta_plus + delta_minus),
            omega_drive,
            coupling: 0.0,
            g_rp: 0.0,
            rabi_m: 0.0,
            rabi_q: 0.0,
            kappa_m: 0.0,
            kappa_q: 0.0,
            m_th: 0.0,
            fock_dim: DEFAULT_FOCK_DIM,
        }
    }

    /// The blockade configuration: `Δ₊ = J`, `Δ₋ = 0`, `κ_m = κ_q = κ`.
    pub fn blockade(coupling: f64, rabi_m: f64, rabi_q: f64, kappa: f64) -> Self {
        Self {
            coupling,
            rabi_m,
            rabi_q,
            kappa_m: kappa,
            kappa_q: kappa,
            ..Self::from_detunings(from_mhz(DEFAULT_DRIVE_MHZ), coupling, 0.0)
        }
    }

    pub fn with_detunings(mut self, delta_plus: f64, delta_minus: f64) -> Self {
        self.omega_q = self.omega_drive + (delta_plus - delta_minus);
        self.omega_m = self.omega_drive + (delta_plus + delta_minus);
        self
    }

    pub fn with_kappa(mut self, kappa: f64) -> Self {
        self.kappa_m = kappa;
        self.kappa_q = kappa;
        self
    }

    pub fn with_fock_dim(mut self, fock_dim: usize) -> Self {
        self.fock_dim = fock_dim;
        self
    }

    pub fn delta_q(&self) -> f64 {
        self.omega_q - self.omega_drive
    }

    pub fn delta_m(&self) -> f64 {
        self.omega_m - self.omega_drive
    }

    pub fn delta_plus(&self) -> f64 {
        0.5 * (self.delta_m() + self.delta_q())
    }

    pub fn delta_minus(&self) -> f64 {
        0.5 * (self.delta_m() - self.delta_q())
    }

    pub fn space(&self) -> Result<HilbertSpace, ModelError> {
        Ok(HilbertSpace::new(self.fock_dim)?)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("omega_q", self.omega_q),
            ("omega_m", self.omega_m),
            ("omega_drive", self.omega_drive),
            ("coupling", self.coupling),
            ("g_rp", self.g_rp),
            ("rabi_m", self.rabi_m),
            ("rabi_q", self.rabi_q),
            ("kappa_m", self.kappa_m),
            ("kappa_q", self.kappa_q),
            ("m_th", self.m_th),
        ];
        for (name, value) in fields {
            if !value.is_finite() {
                return Err(ModelError::NotFinite { name });
            }
        }
        for (name, value) in [
            ("g_rp", self.g_rp),
            ("rabi_m", self.rabi_m),
            ("rabi_q", self.rabi_q),
            ("kappa_m", self.kappa_m),
            ("kappa_q", self.kappa_q),
            ("m_th", self.m_th),
        ] {
            if value < 0.0 {
                return Err(ModelError::Negative { name, value });
            }
        }
        self.space()?;
        Ok(())
    }

    /// The single κ shared by both modes.
    pub fn common_kappa(&self) -> Result<f64, ModelError> {
        let scale = self.kappa_m.abs().max(self.kappa_q.abs()).max(1.0);
        if (self.kappa_m - self.kappa_q).abs() > 1e-12 * scale {
            return Err(ModelError::UnequalDecay { kappa_m: self.kappa_m, kappa_q: self.kappa_q });
        }
        Ok(self.kappa_m)
    }
}

/// Operators used by every builder, embedded on the composite space.
pub(crate) struct Ladder {
    pub m: Operator,
    pub m_dag: Operator,
    pub sm: Operator,
    pub sp: Operator,
    pub number: Operator,
    pub excited: Operator,
}

impl Ladder {
    pub fn new(space: HilbertSpace) -> Self {
        let m = space.magnon_lowering();
        let sm = space.qubit_lowering();
        let m_dag = m.dagger();
        let sp = sm.dagger();
        let number = &m_dag * &m;
        let excited = &sp * &sm;
        Self { m, m_dag, sm, sp, number, excited }
    }
}

fn h_eff_from(p: &SystemParams, ops: &Ladder) -> Operator {
    let mut h = p.delta_q() * &ops.excited;
    h += &(p.delta_m() * &ops.number);
    h += &(p.coupling * &(&(&ops.m * &ops.sp) + &(&ops.m_dag * &ops.sm)));
    h += &(p.rabi_m * &(&ops.m_dag + &ops.m));
    h += &(p.rabi_q * &(&ops.sp + &ops.sm));
    h
}

/// Rotating-frame Hamiltonian
/// `Δ_q σ₊σ₋ + Δ_m m†m + J(mσ₊ + m†σ₋) + Ω_m(m† + m) + Ω_q(σ₊ + σ₋)`.
pub fn build_h_eff(p: &SystemParams) -> Result<Operator, ModelError> {
    p.validate()?;
    Ok(h_eff_from(p, &Ladder::new(p.space()?)))
}

/// Static part and rotating amplitude of the longitudinal Hamiltonian,
/// `H(t) = H₀ + e^{−iωt} X + e^{iωt} X†` with `X = g_rp σ₊σ₋ m`.
#[derive(Debug, Clone)]
pub struct LongitudinalParts {
    pub static_part: Operator,
    pub rotating: Operator,
    pub omega: f64,
}

impl LongitudinalParts {
    pub fn at(&self, t: f64) -> Operator {
        let phase = C64::from_polar(1.0, -self.omega * t);
        let x = phase * &self.rotating;
        let mut h = self.static_part.clone();
        h += &x;
        h += &x.dagger();
        h
    }
}

pub fn longitudinal_parts(p: &SystemParams) -> Result<LongitudinalParts, ModelError> {
    p.validate()?;
    let dm = p.delta_minus();
    if dm.abs() > DETUNING_ZERO_TOL * p.delta_plus().abs().max(1.0) {
        return Err(ModelError::NonzeroDeltaMinus(dm));
    }
    let ops = Ladder::new(p.space()?);
    let resonant = p.with_detunings(p.delta_plus(), 0.0);
    Ok(LongitudinalParts {
        static_part: h_eff_from(&resonant, &ops),
        rotating: p.g_rp * &(&ops.excited * &ops.m),
        omega: p.omega_drive,
    })
}

/// Rotating-frame Hamiltonian with the longitudinal term
/// `g_rp σ₊σ₋ (m e^{−iωt} + m† e^{iωt})`, defined for Δ₋ = 0 only.
pub fn build_h_longitudinal(p: &SystemParams, t: f64) -> Result<Operator, ModelError> {
    Ok(longitudinal_parts(p)?.at(t))
}

/// `H_eff − i(κ/2)(σ₊σ₋ + m†m)`, for equal decay rates.
pub fn build_h_nonhermitian(p: &SystemParams) -> Result<Operator, ModelError> {
    p.validate()?;
    let kappa = p.common_kappa()?;
    let ops = Ladder::new(p.space()?);
    let h = h_eff_from(p, &ops);
    let damping = &ops.excited + &ops.number;
    Ok(&h + &(C64::new(0.0, -0.5 * kappa) * &damping))
}

/// A Lindblad channel `(γ, C)` contributing `(γ/2)(2CρC† − C†Cρ − ρC†C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub rate: f64,
    pub op: Operator,
}

/// Magnon loss `κ_m(m_th + 1)`, magnon heating `κ_m m_th` (only when
/// `m_th > 0`) and qubit decay `κ_q`.
pub fn collapse_channels(p: &SystemParams) -> Result<Vec<Channel>, ModelError> {
    p.validate()?;
    let ops = Ladder::new(p.space()?);
    let mut channels = vec![Channel { rate: p.kappa_m * (p.m_th + 1.0), op: ops.m.clone() }];
    if p.m_th > 0.0 {
        channels.push(Channel { rate: p.kappa_m * p.m_th, op: ops.m_dag.clone() });
    }
    channels.push(Channel { rate: p.kappa_q, op: ops.sm.clone() });
    Ok(channels)
}

/// Bose–Einstein occupation `[exp(ħω/k_B T) − 1]⁻¹` for ω in rad·µs⁻¹ and T in K.
pub fn thermal_occupation(omega_m: f64, temperature: f64) -> Result<f64, ModelError> {
    if !(temperature > 0.0) {
        return Err(ModelError::NonPositiveTemperature(temperature));
    }
    let x = HBAR * omega_m * 1e6 / (K_BOLTZMANN * temperature);
    Ok(1.0 / x.exp_m1())
}

/// Rabi frequency in rad·µs⁻¹ for a drive power in mW.
pub fn rabi_from_power(power_mw: f64) -> Result<f64, ModelError> {
    if power_mw < 0.0 || power_mw.is_nan() {
        return Err(ModelError::NegativePower(power_mw));
    }
    Ok(RABI_PER_SQRT_MW * power_mw.sqrt())
}

/// Inverse of [`rabi_from_power`], in mW.
pub fn power_from_rabi(rabi: f64) -> f64 {
    (rabi / RABI_PER_SQRT_MW).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{DensityMatrix, Qubit};
    use nalgebra::{DMatrix, Schur};

    fn eigenvalues(op: &Operator) -> Vec<C64> {
        Schur::new(op.matrix().clone()).eigenvalues().unwrap().iter().copied().collect()
    }

    fn sample() -> SystemParams {
        let mut p = SystemParams::blockade(from_mhz(20.0), from_mhz(0.1), from_mhz(0.3), from_mhz(1.0))
            .with_detunings(from_mhz(23.0), from_mhz(-4.0));
        p.kappa_q = from_mhz(0.7);
        p.m_th = 0.05;
        p
    }

    #[test]
    fn zero_params_give_zero_hamiltonian() {
        let p = SystemParams::from_detunings(0.0, 0.0, 0.0);
        assert_eq!(build_h_eff(&p).unwrap(), Operator::zeros(12));
    }

    #[test]
    fn detuning_identities() {
        let p = sample();
        let scale = p.omega_drive;
        assert!((p.delta_plus() + p.delta_minus() - p.delta_m()).abs() <= 1e-15 * scale);
        assert!((p.delta_plus() - p.delta_minus() - p.delta_q()).abs() <= 1e-15 * scale);
        assert!((p.delta_plus() - from_mhz(23.0)).abs() < 1e-9);
        assert!((p.delta_minus() + from_mhz(4.0)).abs() < 1e-9);
    }

    #[test]
    fn h_eff_is_hermitian() {
        let h = build_h_eff(&sample()).unwrap();
        assert!(h.hermitian_deviation() <= 1e-14);
    }

    #[test]
    fn vacuum_rabi_splitting() {
        let j = from_mhz(20.0);
        let p = SystemParams { coupling: j, ..SystemParams::from_detunings(from_mhz(1500.0), from_mhz(7.0), 0.0) };
        let space = p.space().unwrap();
        let h = build_h_eff(&p).unwrap();
        let e0 = space.index(Qubit::Excited, 0);
        let g1 = space.index(Qubit::Ground, 1);
        let idx = [e0, g1];
        let block = DMatrix::from_fn(2, 2, |a, b| h.get(idx[a], idx[b]));
        let mut vals: Vec<f64> = nalgebra::SymmetricEigen::new(block).eigenvalues.iter().copied().collect();
        vals.sort_by(f64::total_cmp);
        let dp = p.delta_plus();
        assert!((vals[0] - (dp - j)).abs() < 1e-10);
        assert!((vals[1] - (dp + j)).abs() < 1e-10);
    }

    #[test]
    fn excited_vacuum_energy_at_blockade() {
        let j = from_mhz(20.0);
        let p = SystemParams::blockade(j, 0.0, 0.0, 0.0);
        let space = p.space().unwrap();
        let h = build_h_eff(&p).unwrap();
        let k = space.index(Qubit::Excited, 0);
        assert!((h.get(k, k).re - 2.0 * PI * 20.0).abs() < 1e-12);
    }

    #[test]
    fn excitation_number_conserved_without_drives() {
        let mut p = sample();
        p.rabi_m = 0.0;
        p.rabi_q = 0.0;
        let space = p.space().unwrap();
        let h = build_h_eff(&p).unwrap();
        let ops = Ladder::new(space);
        let total = &ops.excited + &ops.number;
        let comm = h.commutator(&total);
        let n = space.fock_dim();
        // sectors touching the truncation edge are excluded
        for q in [Qubit::Ground, Qubit::Excited] {
            for k in 0..n - 1 {
                let i = space.index(q, k);
                for q2 in [Qubit::Ground, Qubit::Excited] {
                    for k2 in 0..n - 1 {
                        let j = space.index(q2, k2);
                        assert!(comm.get(i, j).norm() < 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn longitudinal_reduces_and_is_periodic() {
        let mut p = SystemParams::blockade(from_mhz(35.0), from_mhz(0.033), from_mhz(0.099), from_mhz(0.5));
        let h_eff = build_h_eff(&p).unwrap();
        for t in [0.0, 0.013, 1.7] {
            assert!(build_h_longitudinal(&p, t).unwrap().max_abs_diff(&h_eff) == 0.0);
        }

        p.g_rp = 0.2 * p.coupling;
        let ops = Ladder::new(p.space().unwrap());
        let expected = &h_eff + &(p.g_rp * &(&ops.excited * &(&ops.m + &ops.m_dag)));
        assert!(build_h_longitudinal(&p, 0.0).unwrap().max_abs_diff(&expected) < 1e-12);

        let period = 2.0 * PI / p.omega_drive;
        for t in [0.0, 0.37, 2.1] {
            let a = build_h_longitudinal(&p, t).unwrap();
            let b = build_h_longitudinal(&p, t + period).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-12 * a.max_abs().max(1.0), "t={t}");
            assert!(a.hermitian_deviation() < 1e-12);
        }

        let detuned = p.with_detunings(p.coupling, from_mhz(1.0));
        assert!(matches!(build_h_longitudinal(&detuned, 0.0), Err(ModelError::NonzeroDeltaMinus(_))));
    }

    #[test]
    fn nonhermitian_hamiltonian() {
        let mut p = SystemParams::blockade(from_mhz(20.0), from_mhz(0.1), from_mhz(0.3), 0.0);
        assert_eq!(build_h_nonhermitian(&p).unwrap(), build_h_eff(&p).unwrap());

        p = p.with_kappa(from_mhz(1.0));
        let space = p.space().unwrap();
        let h = build_h_nonhermitian(&p).unwrap();
        let k = space.index(Qubit::Excited, 1);
        assert!((h.get(k, k).im + p.kappa_m).abs() < 1e-12);
        for v in eigenvalues(&h) {
            assert!(v.im <= 1e-9, "{v}");
        }
        let anti = &(&h - &h.dagger()) * &Operator::identity(h.dim());
        let anti_herm = C64::new(0.0, -0.5) * &anti;
        assert!(anti_herm.hermitian_eigenvalues().iter().all(|&x| x <= 1e-12));

        p.kappa_q *= 2.0;
        assert!(matches!(build_h_nonhermitian(&p), Err(ModelError::UnequalDecay { .. })));
    }

    #[test]
    fn channel_layout() {
        let mut p = SystemParams::blockade(1.0, 0.0, 0.0, 3.0);
        let ch = collapse_channels(&p).unwrap();
        assert_eq!(ch.len(), 2);
        assert_eq!(ch[0].rate, 3.0);
        assert_eq!(ch[1].rate, 3.0);

        p.m_th = 1e-7;
        let ch = collapse_channels(&p).unwrap();
        assert_eq!(ch.len(), 3);
        assert!((ch[1].rate - 3.0e-7).abs() < 1e-20);
        assert!((ch[0].rate - 3.0 * (1.0 + 1e-7)).abs() < 1e-15);
        assert!(ch.iter().all(|c| c.rate >= 0.0));

        p.m_th = -1.0;
        assert!(collapse_channels(&p).is_err());
    }

    #[test]
    fn dissipator_matches_hand_coded_master_equation() {
        let p = SystemParams::blockade(from_mhz(20.0), 0.0, 0.0, 0.0);
        let mut p = p;
        p.kappa_m = from_mhz(0.8);
        p.kappa_q = from_mhz(1.3);
        let space = p.space().unwrap();
        let ops = Ladder::new(space);
        let rho = {
            let raw = Operator::from_fn(space.total_dim(), |i, j| C64::new(((i * 7 + j * 3) % 5) as f64, ((i + 2 * j) % 3) as f64 - 1.0));
            let herm = &raw * &raw.dagger();
            (1.0 / herm.trace().re) * &herm
        };
        let lind = |o: &Operator| {
            let od = o.dagger();
            let odo = &od * o;
            &(&(2.0 * &(&(o * &rho) * &od)) - &(&odo * &rho)) - &(&rho * &odo)
        };
        let direct = &((0.5 * p.kappa_m) * &lind(&ops.m)) + &((0.5 * p.kappa_q) * &lind(&ops.sm));
        let mut via_channels = Operator::zeros(space.total_dim());
        for ch in collapse_channels(&p).unwrap() {
            let cd = ch.op.dagger();
            let cdc = &cd * &ch.op;
            let term = &(&(2.0 * &(&(&ch.op * &rho) * &cd)) - &(&cdc * &rho)) - &(&rho * &cdc);
            via_channels += &((0.5 * ch.rate) * &term);
        }
        assert!(direct.max_abs_diff(&via_channels) <= 1e-12);
    }

    #[test]
    fn thermal_occupation_values() {
        let wm = from_mhz(1500.0);
        let n39 = thermal_occupation(wm, 3.9e-3).unwrap();
        let n53 = thermal_occupation(wm, 5.3e-3).unwrap();
        assert!(n39 > 3e-9 && n39 < 3e-8, "{n39}");
        assert!(n53 > 3e-7 && n53 < 3e-6, "{n53}");
        // regression values
        assert!((n39 / 9.627645048260e-9 - 1.0).abs() < 1e-9, "{n39:e}");
        assert!((n53 / 1.262063920711e-6 - 1.0).abs() < 1e-9, "{n53:e}");

        let classical = K_BOLTZMANN * 1.0 / (HBAR * wm * 1e6);
        let n1k = thermal_occupation(wm, 1.0).unwrap();
        // high-temperature expansion kT/ħω − 1/2
        assert!((n1k / (classical - 0.5) - 1.0).abs() < 1e-3);

        assert!(matches!(thermal_occupation(wm, 0.0), Err(ModelError::NonPositiveTemperature(_))));
        assert!(thermal_occupation(wm, -1.0).is_err());
    }

    #[test]
    fn power_conversion() {
        assert_eq!(rabi_from_power(0.0).unwrap(), 0.0);
        let rabi = from_mhz(0.1);
        let p_uw = power_from_rabi(rabi) * 1e3;
        assert!((p_uw - 0.037).abs() < 0.0005, "{p_uw}");
        assert!((rabi_from_power(power_from_rabi(rabi)).unwrap() - rabi).abs() < 1e-14);
        assert!(rabi_from_power(1.0).unwrap() < rabi_from_power(1.1).unwrap());
        assert!(rabi_from_power(-1e-3).is_err());
    }

    #[test]
    fn density_matrix_of_basis_state_is_valid() {
        let space = HilbertSpace::new(6).unwrap();
        let rho = DensityMatrix::basis(space, Qubit::Excited, 3);
        assert_eq!(rho.trace(), 1.0);
    }
}
