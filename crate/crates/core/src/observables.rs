//! Magnon-subsystem reductions and second-order correlation diagnostics.

use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::dynamics::Trajectory;
use crate::hilbert::{annihilation, trace_of_product, DensityMatrix, HilbertError, Operator, StateSpace};

/// `⟨m†m⟩` below this is treated as an undriven magnon.
pub const MEAN_NUMBER_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObservableError {
    #[error("⟨m†m⟩ = {0:e} is below the correlation floor")]
    UndefinedCorrelation(f64),
    #[error("P1 = {0:e} vanishes; population estimate undefined")]
    VanishingSinglePopulation(f64),
    #[error("populations do not form a distribution: {0}")]
    InvalidPopulations(String),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// `ρ_m = Tr_q ρ`.
pub fn partial_trace_qubit(rho: &DensityMatrix) -> Result<DensityMatrix, ObservableError> {
    let StateSpace::Composite(space) = rho.space() else {
        return Err(HilbertError::NotComposite(rho.dim()).into());
    };
    let n = space.fock_dim();
    let m = rho.operator().matrix();
    let reduced = Operator::from_fn(n, |i, j| m[(i, j)] + m[(n + i, n + j)]);
    Ok(DensityMatrix::from_parts_unchecked(reduced, StateSpace::Magnon { fock_dim: n }))
}

/// Normally ordered moments `(⟨m†m⟩, ⟨m†m†mm⟩)` on the magnon marginal.
pub fn magnon_moments(rho: &DensityMatrix) -> Result<(f64, f64), ObservableError> {
    let reduced;
    let rho_m = match rho.space() {
        StateSpace::Composite(_) => {
            reduced = partial_trace_qubit(rho)?;
            &reduced
        }
        StateSpace::Magnon { .. } => rho,
    };
    let a = annihilation(rho_m.dim());
    let ad = a.dagger();
    let number = &ad * &a;
    let pair = &(&ad * &ad) * &(&a * &a);
    let op = rho_m.operator();
    Ok((trace_of_product(op, &number).re, trace_of_product(op, &pair).re))
}

/// `g²(0) = ⟨m†m†mm⟩ / ⟨m†m⟩²` on either a composite or a magnon state.
pub fn g2_zero(rho: &DensityMatrix) -> Result<f64, ObservableError> {
    let (n, pair) = magnon_moments(rho)?;
    if !(n >= MEAN_NUMBER_FLOOR) {
        return Err(ObservableError::UndefinedCorrelation(n));
    }
    Ok(pair / (n * n))
}

/// `g²(t, t)` along a trajectory; `None` where the correlation is undefined.
pub fn g2_time_series(traj: &Trajectory) -> Vec<(f64, Option<f64>)> {
    traj.times.iter().zip(&traj.states).map(|(&t, s)| (t, g2_zero(s).ok())).collect()
}

/// Fock-basis populations `P[n] = ⟨n|ρ_m|n⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationVector(Vec<f64>);

impl PopulationVector {
    pub const SUM_TOL: f64 = 1e-8;
    pub const NEGATIVE_TOL: f64 = 1e-9;

    pub fn new(p: Vec<f64>) -> Result<Self, ObservableError> {
        let sum: f64 = p.iter().sum();
        if !((sum - 1.0).abs() <= Self::SUM_TOL) {
            return Err(ObservableError::InvalidPopulations(format!("sum {sum}")));
        }
        if let Some(x) = p.iter().find(|&&x| !(x >= -Self::NEGATIVE_TOL)) {
            return Err(ObservableError::InvalidPopulations(format!("entry {x}")));
        }
        Ok(Self(p))
    }

    pub fn from_state(rho: &DensityMatrix) -> Result<Self, ObservableError> {
        let rho_m = match rho.space() {
            StateSpace::Composite(_) => partial_trace_qubit(rho)?,
            StateSpace::Magnon { .. } => rho.clone(),
        };
        let op = rho_m.operator();
        Self::new((0..op.dim()).map(|n| op.get(n, n).re).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `P[n]`, zero beyond the truncation.
    pub fn get(&self, n: usize) -> f64 {
        self.0.get(n).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Low-excitation estimate `2 P₂ / P₁²`.
pub fn g2_from_populations(p: &PopulationVector) -> Result<f64, ObservableError> {
    let p1 = p.get(1);
    if !(p1 > MEAN_NUMBER_FLOOR) {
        return Err(ObservableError::VanishingSinglePopulation(p1));
    }
    Ok(2.0 * p.get(2) / (p1 * p1))
}

/// Expectation of a magnon-only operator on a state of either space.
pub fn magnon_expectation(rho: &DensityMatrix, op: &Operator) -> Result<C64, ObservableError> {
    let rho_m = match rho.space() {
        StateSpace::Composite(_) => partial_trace_qubit(rho)?,
        StateSpace::Magnon { .. } => rho.clone(),
    };
    Ok(crate::hilbert::expectation(&rho_m, op)?)
}
