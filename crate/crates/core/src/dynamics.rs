//! Lindblad dynamics: superoperator construction, steady states and
//! fixed-step RK4 time evolution.
//!
//! Density matrices are vectorized by column stacking, so that
//! `vec(A ρ B) = (Bᵀ ⊗ A) vec(ρ)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, QR, SVD};
use num_complex::Complex64 as C64;
use thiserror::Error;

use crate::hilbert::{DensityMatrix, HilbertError, HilbertSpace, Operator, Qubit, StateSpace};
use crate::model::{self, Channel, ModelError, SystemParams};

/// Trace drift allowed along a trajectory.
pub const TRACE_DRIFT_TOL: f64 = 1e-8;
/// Most negative eigenvalue accepted for an integrated state.
pub const TRAJECTORY_POSITIVITY_TOL: f64 = 1e-7;
/// Bound on `‖L vec(ρ_ss)‖∞`, relative to `max(1, ‖L‖∞)`.
pub const STEADY_RESIDUAL_TOL: f64 = 1e-10;
/// Singular values below this fraction of the largest count as kernel.
const KERNEL_REL_TOL: f64 = 1e-11;
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("Liouvillian kernel is {0}-dimensional; the steady state is not unique")]
    DegenerateKernel(usize),
    #[error("no steady state within tolerance (residual {0:e})")]
    NoKernel(f64),
    #[error("invalid time grid: {0}")]
    InvalidGrid(String),
    #[error("trace drifted by {achieved:e} at t = {time}")]
    TraceDrift { achieved: f64, time: f64 },
    #[error("state lost positivity (eigenvalue {min:e}) at t = {time}")]
    PositivityLost { min: f64, time: f64 },
    #[error("periodic steady state did not converge (period-to-period change {0:e})")]
    NonConvergence(f64),
    #[error("the periodic solver needs g_rp > 0 and a drive frequency > 0")]
    NotPeriodic,
    #[error("no dissipation: the relaxation time is undefined")]
    NoDissipation,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Hilbert(#[from] HilbertError),
}

/// `vec(A ρ)`.
pub fn spre(a: &Operator) -> DMatrix<C64> {
    DMatrix::identity(a.dim(), a.dim()).kronecker(a.matrix())
}

/// `vec(ρ A)`.
pub fn spost(a: &Operator) -> DMatrix<C64> {
    a.matrix().transpose().kronecker(&DMatrix::identity(a.dim(), a.dim()))
}

/// `vec(A ρ B)`.
pub fn sprepost(a: &Operator, b: &Operator) -> DMatrix<C64> {
    b.matrix().transpose().kronecker(a.matrix())
}

/// Superoperator of `ρ ↦ −i[H, ρ]`.
pub fn commutator_superop(h: &Operator) -> DMatrix<C64> {
    (spre(h) - spost(h)) * C64::new(0.0, -1.0)
}

/// Superoperator of `ρ ↦ (γ/2)(2CρC† − C†Cρ − ρC†C)`.
pub fn dissipator_superop(ch: &Channel) -> DMatrix<C64> {
    let cd = ch.op.dagger();
    let cdc = &cd * &ch.op;
    (sprepost(&ch.op, &cd) * C64::new(2.0, 0.0) - spre(&cdc) - spost(&cdc)) * C64::new(0.5 * ch.rate, 0.0)
}

/// Right-hand side of the master equation evaluated directly on ρ.
pub fn lindblad_rhs(h: &Operator, channels: &[Channel], rho: &Operator) -> Operator {
    let mut out = C64::new(0.0, -1.0) * &h.commutator(rho);
    for ch in channels {
        let cd = ch.op.dagger();
        let cdc = &cd * &ch.op;
        let jump = &(&ch.op * rho) * &cd;
        let term = &(&(2.0 * &jump) - &(&cdc * rho)) - &(rho * &cdc);
        out += &((0.5 * ch.rate) * &term);
    }
    out
}

/// Column-stacking of a square matrix.
pub fn vectorize(rho: &Operator) -> DVector<C64> {
    DVector::from_column_slice(rho.matrix().as_slice())
}

pub fn unvectorize(v: &DVector<C64>, dim: usize) -> Result<Operator, DynamicsError> {
    if v.len() != dim * dim {
        return Err(DynamicsError::DimensionMismatch { expected: dim * dim, found: v.len() });
    }
    Ok(Operator::from_square(DMatrix::from_column_slice(dim, dim, v.as_slice())))
}

/// Master-equation generator on column-stacked density matrices.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    dim: usize,
    matrix: DMatrix<C64>,
    hamiltonian: Operator,
    channels: Vec<Channel>,
}

impl Liouvillian {
    /// Hilbert-space dimension D (the matrix is D² × D²).
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn apply(&self, rho: &Operator) -> Result<Operator, DynamicsError> {
        if rho.dim() != self.dim {
            return Err(DynamicsError::DimensionMismatch { expected: self.dim, found: rho.dim() });
        }
        unvectorize(&(&self.matrix * vectorize(rho)), self.dim)
    }

    /// Row sums of absolute values, maximized.
    pub fn norm_inf(&self) -> f64 {
        norm_inf(&self.matrix)
    }

    /// `‖vec(I)ᵀ L‖∞`, zero for a trace-preserving generator.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0_f64;
        for col in 0..d * d {
            let mut acc = ZERO;
            for k in 0..d {
                acc += self.matrix[(k * d + k, col)];
            }
            worst = worst.max(acc.norm());
        }
        worst
    }

    /// All eigenvalues (complex Schur form).
    pub fn eigenvalues(&self) -> Vec<C64> {
        nalgebra::Schur::new(self.matrix.clone())
            .eigenvalues()
            .map(|v| v.iter().copied().collect())
            .unwrap_or_default()
    }

    /// Number of singular values that are zero to working precision.
    pub fn kernel_dimension(&self) -> usize {
        let sv = SVD::new(self.matrix.clone(), false, false).singular_values;
        let max = sv.iter().copied().fold(0.0, f64::max);
        if max == 0.0 {
            return sv.len();
        }
        sv.iter().filter(|&&s| s <= KERNEL_REL_TOL * max).count()
    }
}

fn norm_inf(m: &DMatrix<C64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn build_liouvillian(h: &Operator, channels: &[Channel]) -> Result<Liouvillian, DynamicsError> {
    let d = h.dim();
    for ch in channels {
        if ch.op.dim() != d {
            return Err(DynamicsError::DimensionMismatch { expected: d, found: ch.op.dim() });
        }
    }
    let mut matrix = commutator_superop(h);
    for ch in channels {
        if ch.rate != 0.0 {
            matrix += dissipator_superop(ch);
        }
    }
    Ok(Liouvillian { dim: d, matrix, hamiltonian: h.clone(), channels: channels.to_vec() })
}

/// Liouvillian of the static rotating-frame problem (`H_eff` plus all channels).
pub fn system_liouvillian(p: &SystemParams) -> Result<Liouvillian, DynamicsError> {
    let h = model::build_h_eff(p)?;
    let channels = model::collapse_channels(p)?;
    build_liouvillian(&h, &channels)
}

/// Diagnostics from a steady-state solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyReport {
    /// `‖L vec(ρ_ss)‖∞` of the returned (Hermitized, normalized) state.
    pub residual: f64,
    pub refinements: usize,
}

pub fn steady_state(l: &Liouvillian) -> Result<DensityMatrix, DynamicsError> {
    steady_state_with_report(l).map(|(rho, _)| rho)
}

/// Kernel of the Liouvillian through the bordered system
/// `[L; vec(I)ᵀ] vec(ρ) = [0; 1]`, solved by Householder QR with two rounds
/// of iterative refinement on a compensated residual.
pub fn steady_state_with_report(l: &Liouvillian) -> Result<(DensityMatrix, SteadyReport), DynamicsError> {
    let d = l.dim;
    let n = d * d;
    let kdim = l.kernel_dimension();
    if kdim > 1 {
        return Err(DynamicsError::DegenerateKernel(kdim));
    }
    let mut bordered = DMatrix::<C64>::zeros(n + 1, n);
    bordered.view_mut((0, 0), (n, n)).copy_from(&l.matrix);
    for k in 0..d {
        bordered[(n, k * d + k)] = ONE;
    }
    let mut rhs = DVector::<C64>::zeros(n + 1);
    rhs[n] = ONE;

    let qr = QR::new(bordered.clone());
    let q = qr.q();
    let r = qr.r();
    let solve = |b: &DVector<C64>| -> Option<DVector<C64>> { r.solve_upper_triangular(&(q.adjoint() * b)) };

    let mut x = solve(&rhs).ok_or(DynamicsError::NoKernel(f64::INFINITY))?;
    const REFINEMENTS: usize = 2;
    for _ in 0..REFINEMENTS {
        let res = compensated_residual(&bordered, &x, &rhs);
        if let Some(dx) = solve(&res) {
            x += dx;
        }
    }

    let rho = unvectorize(&x, d)?;
    let herm = rho.hermitian_part();
    let tr = herm.trace().re;
    let normalized = (1.0 / tr) * &herm;
    let residual = (&l.matrix * vectorize(&normalized)).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(residual <= STEADY_RESIDUAL_TOL * l.norm_inf().max(1.0)) {
        return Err(DynamicsError::NoKernel(residual));
    }
    let space = space_for_dim(d);
    let state = DensityMatrix::normalized(&normalized, space)?;
    Ok((state, SteadyReport { residual, refinements: REFINEMENTS }))
}

fn space_for_dim(d: usize) -> StateSpace {
    match HilbertSpace::new(d / 2) {
        Ok(s) if d % 2 == 0 => StateSpace::Composite(s),
        _ => StateSpace::Magnon { fock_dim: d },
    }
}

/// Steady state of the static problem described by `p`.
pub fn steady_state_of(p: &SystemParams) -> Result<DensityMatrix, DynamicsError> {
    steady_state(&system_liouvillian(p)?)
}

// Error-free transformations for the refinement residual.
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Accumulates a real sum of products in roughly twice working precision.
#[derive(Default, Clone, Copy)]
struct Dot2 {
    sum: f64,
    comp: f64,
}

impl Dot2 {
    fn add(&mut self, x: f64) {
        let (s, e) = two_sum(self.sum, x);
        self.sum = s;
        self.comp += e;
    }

    fn add_prod(&mut self, a: f64, b: f64) {
        let (p, e) = two_prod(a, b);
        let (s, e2) = two_sum(self.sum, p);
        self.sum = s;
        self.comp += e + e2;
    }

    fn value(self) -> f64 {
        self.sum + self.comp
    }
}

/// `b − A x` with compensated accumulation.
fn compensated_residual(a: &DMatrix<C64>, x: &DVector<C64>, b: &DVector<C64>) -> DVector<C64> {
    let rows = a.nrows();
    let mut re = vec![Dot2::default(); rows];
    let mut im = vec![Dot2::default(); rows];
    for i in 0..rows {
        re[i].add(b[i].re);
        im[i].add(b[i].im);
    }
    for (j, xj) in x.iter().enumerate() {
        if *xj == ZERO {
            continue;
        }
        for (i, aij) in a.column(j).iter().enumerate() {
            if *aij == ZERO {
                continue;
            }
            re[i].add_prod(-aij.re, xj.re);
            re[i].add_prod(aij.im, xj.im);
            im[i].add_prod(-aij.re, xj.im);
            im[i].add_prod(-aij.im, xj.re);
        }
    }
    DVector::from_iterator(rows, re.into_iter().zip(im).map(|(r, i)| C64::new(r.value(), i.value())))
}

/// RK4 step matrix of an autonomous linear system, `Σ_{k≤4} (hL)^k / k!`.
fn rk4_step_matrix(l: &DMatrix<C64>, h: f64) -> DMatrix<C64> {
    let n = l.nrows();
    let hl = l * C64::new(h, 0.0);
    let mut term = DMatrix::<C64>::identity(n, n);
    let mut acc = term.clone();
    for k in 1..=4 {
        term = &term * &hl * C64::new(1.0 / k as f64, 0.0);
        acc += &term;
    }
    acc
}

fn matrix_power(m: &DMatrix<C64>, mut k: usize) -> DMatrix<C64> {
    let n = m.nrows();
    let mut result = DMatrix::<C64>::identity(n, n);
    let mut base = m.clone();
    while k > 0 {
        if k & 1 == 1 {
            result = &result * &base;
        }
        k >>= 1;
        if k > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Step-size controls for [`evolve_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Step ≤ `kappa_factor / κ_max`.
    pub kappa_factor: f64,
    /// Step ≤ `spectral_factor / ‖L‖∞`.
    pub spectral_factor: f64,
    /// RK4 steps per drive period for the time-dependent Hamiltonian.
    pub steps_per_period: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { kappa_factor: 0.01, spectral_factor: 0.05, steps_per_period: 128 }
    }
}

/// Recorded density matrices on a time grid.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub params: SystemParams,
    pub options: EvolveOptions,
    /// Largest RK4 step actually used [µs].
    pub step: f64,
    pub max_trace_drift: f64,
    pub min_eigenvalue: f64,
}

fn validate_grid(t_grid: &[f64]) -> Result<(), DynamicsError> {
    if t_grid.is_empty() {
        return Err(DynamicsError::InvalidGrid("empty".into()));
    }
    if t_grid[0] != 0.0 {
        return Err(DynamicsError::InvalidGrid(format!("must start at 0, starts at {}", t_grid[0])));
    }
    for w in t_grid.windows(2) {
        if !(w[1] > w[0]) {
            return Err(DynamicsError::InvalidGrid(format!("not strictly increasing at {}", w[1])));
        }
    }
    Ok(())
}

fn max_kappa(p: &SystemParams) -> f64 {
    p.kappa_m.max(p.kappa_q) * (1.0 + 2.0 * p.m_th)
}

fn step_bound(p: &SystemParams, l_norm: f64, opts: &EvolveOptions) -> f64 {
    let mut h = f64::INFINITY;
    let kappa = max_kappa(p);
    if kappa > 0.0 {
        h = h.min(opts.kappa_factor / kappa);
    }
    if l_norm > 0.0 {
        h = h.min(opts.spectral_factor / l_norm);
    }
    h
}

struct Recorder {
    space: StateSpace,
    times: Vec<f64>,
    states: Vec<DensityMatrix>,
    max_trace_drift: f64,
    min_eigenvalue: f64,
}

impl Recorder {
    fn new(space: StateSpace) -> Self {
        Self { space, times: vec![], states: vec![], max_trace_drift: 0.0, min_eigenvalue: f64::INFINITY }
    }

    fn record(&mut self, t: f64, v: &DVector<C64>) -> Result<(), DynamicsError> {
        let d = self.space.dim();
        let rho = unvectorize(v, d)?.hermitian_part();
        let drift = (rho.trace().re - 1.0).abs();
        if drift > TRACE_DRIFT_TOL {
            return Err(DynamicsError::TraceDrift { achieved: drift, time: t });
        }
        let min = rho.hermitian_eigenvalues()[0];
        if min < -TRAJECTORY_POSITIVITY_TOL {
            return Err(DynamicsError::PositivityLost { min, time: t });
        }
        self.max_trace_drift = self.max_trace_drift.max(drift);
        self.min_eigenvalue = self.min_eigenvalue.min(min);
        self.times.push(t);
        self.states.push(DensityMatrix::from_parts_unchecked(rho, self.space));
        Ok(())
    }
}

pub fn evolve(
    rho0: &DensityMatrix,
    p: &SystemParams,
    t_grid: &[f64],
    time_dependent: bool,
) -> Result<Trajectory, DynamicsError> {
    evolve_with(rho0, p, t_grid, time_dependent, &EvolveOptions::default())
}

/// Fixed-step RK4 integration of the master equation, recording ρ at each
/// grid time. With `time_dependent`, the Hamiltonian is the longitudinal one.
pub fn evolve_with(
    rho0: &DensityMatrix,
    p: &SystemParams,
    t_grid: &[f64],
    time_dependent: bool,
    opts: &EvolveOptions,
) -> Result<Trajectory, DynamicsError> {
    validate_grid(t_grid)?;
    let space = p.space()?;
    if rho0.dim() != space.total_dim() {
        return Err(DynamicsError::DimensionMismatch { expected: space.total_dim(), found: rho0.dim() });
    }
    let mut rec = Recorder::new(StateSpace::Composite(space));
    let mut x = vectorize(rho0.operator());
    rec.record(0.0, &x)?;

    let step = if time_dependent {
        let prop = PeriodicPropagator::new(p, opts)?;
        let h = prop.step;
        let mut pos = 0usize; // lattice index of `x`
        for &t in &t_grid[1..] {
            let target = (t / h).floor() as usize;
            let target = if (t - (target + 1) as f64 * h).abs() <= 1e-9 * h { target + 1 } else { target };
            x = prop.advance(&x, pos, target);
            pos = target;
            let rem = t - pos as f64 * h;
            if rem.abs() > 1e-9 * h {
                let y = prop.generator.rk4_vector(pos as f64 * h, rem, &x);
                rec.record(t, &y)?;
            } else {
                rec.record(t, &x)?;
            }
        }
        h
    } else {
        let l = system_liouvillian(p)?;
        let h_max = step_bound(p, l.norm_inf(), opts);
        // linspace grids differ in the last bits of dt; reuse within 1e-12
        let mut cache: Option<(usize, f64, DMatrix<C64>)> = None;
        let mut used = 0.0_f64;
        for w in t_grid.windows(2) {
            let dt = w[1] - w[0];
            let n = if h_max.is_finite() { (dt / h_max).ceil().max(1.0) as usize } else { 1 };
            let h = dt / n as f64;
            used = used.max(h);
            let hit = matches!(&cache, Some((cn, ch, _)) if *cn == n && (ch - h).abs() <= 1e-12 * h);
            if !hit {
                let m = matrix_power(&rk4_step_matrix(&l.matrix, h), n);
                cache = Some((n, h, m));
            }
            x = &cache.as_ref().unwrap().2 * &x;
            rec.record(w[1], &x)?;
        }
        used
    };

    Ok(Trajectory {
        times: rec.times,
        states: rec.states,
        params: *p,
        options: *opts,
        step,
        max_trace_drift: rec.max_trace_drift,
        min_eigenvalue: rec.min_eigenvalue,
    })
}

/// `L(t) = L₀ + e^{−iωt} A + e^{iωt} B` stored column-compressed.
struct PeriodicGenerator {
    n: usize,
    col_ptr: Vec<usize>,
    rows: Vec<usize>,
    l0: Vec<C64>,
    a: Vec<C64>,
    b: Vec<C64>,
    omega: f64,
}

impl PeriodicGenerator {
    fn new(l0: &DMatrix<C64>, a: &DMatrix<C64>, b: &DMatrix<C64>, omega: f64) -> Self {
        let n = l0.nrows();
        let mut col_ptr = vec![0];
        let (mut rows, mut v0, mut va, mut vb) = (vec![], vec![], vec![], vec![]);
        for j in 0..n {
            for i in 0..n {
                let (x0, xa, xb) = (l0[(i, j)], a[(i, j)], b[(i, j)]);
                if x0 != ZERO || xa != ZERO || xb != ZERO {
                    rows.push(i);
                    v0.push(x0);
                    va.push(xa);
                    vb.push(xb);
                }
            }
            col_ptr.push(rows.len());
        }
        Self { n, col_ptr, rows, l0: v0, a: va, b: vb, omega }
    }

    fn values_at(&self, t: f64) -> Vec<C64> {
        let em = C64::from_polar(1.0, -self.omega * t);
        let ep = em.conj();
        self.l0.iter().zip(&self.a).zip(&self.b).map(|((l, a), b)| l + em * a + ep * b).collect()
    }

    /// `out = L x` for `ncols` column-major vectors.
    fn apply(&self, vals: &[C64], x: &[C64], out: &mut [C64]) {
        let n = self.n;
        out.iter_mut().for_each(|z| *z = ZERO);
        for (xc, oc) in x.chunks_exact(n).zip(out.chunks_exact_mut(n)) {
            for j in 0..n {
                let xj = xc[j];
                if xj == ZERO {
                    continue;
                }
                for k in self.col_ptr[j]..self.col_ptr[j + 1] {
                    oc[self.rows[k]] += vals[k] * xj;
                }
            }
        }
    }

    fn rk4(&self, t: f64, h: f64, x: &[C64]) -> Vec<C64> {
        let len = x.len();
        let (v1, v2, v4) = (self.values_at(t), self.values_at(t + 0.5 * h), self.values_at(t + h));
        let mut k = vec![ZERO; len];
        let mut acc = x.to_vec();
        let mut stage = vec![ZERO; len];

        self.apply(&v1, x, &mut k);
        axpy_into(&mut acc, h / 6.0, &k);
        combine(&mut stage, x, 0.5 * h, &k);
        self.apply(&v2, &stage, &mut k);
        axpy_into(&mut acc, h / 3.0, &k);
        combine(&mut stage, x, 0.5 * h, &k);
        self.apply(&v2, &stage, &mut k);
        axpy_into(&mut acc, h / 3.0, &k);
        combine(&mut stage, x, h, &k);
        self.apply(&v4, &stage, &mut k);
        axpy_into(&mut acc, h / 6.0, &k);
        acc
    }

    fn rk4_vector(&self, t: f64, h: f64, x: &DVector<C64>) -> DVector<C64> {
        DVector::from_vec(self.rk4(t, h, x.as_slice()))
    }
}

fn axpy_into(y: &mut [C64], a: f64, x: &[C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi * a;
    }
}

fn combine(out: &mut [C64], x: &[C64], a: f64, k: &[C64]) {
    for ((o, xi), ki) in out.iter_mut().zip(x).zip(k) {
        *o = xi + ki * a;
    }
}

/// RK4 propagation on the lattice `t_j = j h` with `h = T / steps`.
struct PeriodicPropagator {
    generator: PeriodicGenerator,
    steps: usize,
    step: f64,
    /// `P^(2^i)` for the one-period map `P`.
    period_powers: Vec<DMatrix<C64>>,
}

impl PeriodicPropagator {
    fn new(p: &SystemParams, opts: &EvolveOptions) -> Result<Self, DynamicsError> {
        if !(p.omega_drive > 0.0) {
            return Err(DynamicsError::NotPeriodic);
        }
        let parts = model::longitudinal_parts(p)?;
        let channels = model::collapse_channels(p)?;
        let l0 = build_liouvillian(&parts.static_part, &channels)?;
        let a = commutator_superop(&parts.rotating);
        let b = commutator_superop(&parts.rotating.dagger());
        let period = 2.0 * PI / parts.omega;
        let full_norm = l0.norm_inf() + norm_inf(&a) + norm_inf(&b);
        let h_bound = step_bound(p, full_norm, opts);
        let steps = opts.steps_per_period.max((period / h_bound).ceil() as usize).max(1);
        let generator = PeriodicGenerator::new(&l0.matrix, &a, &b, parts.omega);
        let step = period / steps as f64;

        let n = generator.n;
        let mut cols: Vec<C64> = DMatrix::<C64>::identity(n, n).as_slice().to_vec();
        for k in 0..steps {
            cols = generator.rk4(k as f64 * step, step, &cols);
        }
        let period_map = DMatrix::from_vec(n, n, cols);
        Ok(Self { generator, steps, step, period_powers: vec![period_map] })
    }

    fn period_map(&self) -> &DMatrix<C64> {
        &self.period_powers[0]
    }

    fn ensure_powers(&mut self, periods: usize) {
        while (1usize << (self.period_powers.len() - 1)) < periods.max(1) {
            let last = self.period_powers.last().unwrap();
            let sq = last * last;
            self.period_powers.push(sq);
        }
    }

    fn apply_periods(&self, x: &DVector<C64>, periods: usize) -> DVector<C64> {
        let mut y = x.clone();
        let mut k = periods;
        let mut i = 0;
        while k > 0 {
            if k & 1 == 1 {
                y = match self.period_powers.get(i) {
                    Some(m) => m * &y,
                    None => {
                        // powers not cached: fall back to repeated application
                        let mut z = y;
                        for _ in 0..(1usize << i) {
                            z = self.period_map() * &z;
                        }
                        z
                    }
                };
            }
            k >>= 1;
            i += 1;
        }
        y
    }

    /// Advance from lattice index `from` to `to`.
    fn advance(&self, x: &DVector<C64>, from: usize, to: usize) -> DVector<C64> {
        let mut y = x.clone();
        let mut j = from;
        while j < to && j % self.steps != 0 {
            y = self.generator.rk4_vector(j as f64 * self.step, self.step, &y);
            j += 1;
        }
        let periods = (to - j) / self.steps;
        if periods > 0 {
            y = self.apply_periods(&y, periods);
            j += periods * self.steps;
        }
        while j < to {
            y = self.generator.rk4_vector(j as f64 * self.step, self.step, &y);
            j += 1;
        }
        y
    }
}

/// How a single state is extracted from the periodic long-time limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeriodicSampling {
    /// ρ at integer multiples of the drive period (drive phase zero).
    Stroboscopic,
    /// Average of ρ over one drive period.
    #[default]
    PeriodAverage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodicOptions {
    pub sampling: PeriodicSampling,
    /// Relaxation time before sampling, in units of 1/κ.
    pub relaxation_kappa_t: f64,
    /// Minimum samples per period for [`PeriodicSampling::PeriodAverage`].
    pub min_samples: usize,
    pub convergence_tol: f64,
    pub evolve: EvolveOptions,
}

impl Default for PeriodicOptions {
    fn default() -> Self {
        Self {
            sampling: PeriodicSampling::PeriodAverage,
            relaxation_kappa_t: 30.0,
            min_samples: 32,
            convergence_tol: 1e-8,
            evolve: EvolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PeriodicSteadyState {
    pub state: DensityMatrix,
    /// Whole periods propagated before sampling.
    pub periods: usize,
    /// Max element change of the sampled state between consecutive periods.
    pub change: f64,
    pub steps_per_period: usize,
}

pub fn steady_state_periodic(p: &SystemParams) -> Result<DensityMatrix, DynamicsError> {
    steady_state_periodic_with(p, &PeriodicOptions::default()).map(|s| s.state)
}

/// Long-time state under the longitudinal Hamiltonian: relax from |g,0⟩ for
/// `relaxation_kappa_t / κ`, then sample according to `opts.sampling`.
pub fn steady_state_periodic_with(
    p: &SystemParams,
    opts: &PeriodicOptions,
) -> Result<PeriodicSteadyState, DynamicsError> {
    if !(p.g_rp > 0.0) {
        return Err(DynamicsError::NotPeriodic);
    }
    let kappa = p.kappa_m.min(p.kappa_q);
    if !(kappa > 0.0) {
        return Err(DynamicsError::NoDissipation);
    }
    let space = p.space()?;
    let mut prop = PeriodicPropagator::new(p, &opts.evolve)?;
    let period = prop.step * prop.steps as f64;
    let periods = (opts.relaxation_kappa_t / kappa / period).ceil() as usize;
    prop.ensure_powers(periods);

    let rho0 = DensityMatrix::basis(space, Qubit::Ground, 0);
    let x = prop.apply_periods(&vectorize(rho0.operator()), periods);

    let sample = |x: &DVector<C64>| -> (DVector<C64>, DVector<C64>) {
        match opts.sampling {
            PeriodicSampling::Stroboscopic => (x.clone(), prop.period_map() * x),
            PeriodicSampling::PeriodAverage => {
                let stride = (prop.steps / opts.min_samples.max(1)).max(1);
                let mut acc = DVector::<C64>::zeros(x.len());
                let mut count = 0usize;
                let mut y = x.clone();
                for k in 0..prop.steps {
                    if k % stride == 0 {
                        acc += &y;
                        count += 1;
                    }
                    y = prop.generator.rk4_vector(k as f64 * prop.step, prop.step, &y);
                }
                (acc / C64::new(count as f64, 0.0), y)
            }
        }
    };
    let (first, next_start) = sample(&x);
    let (second, _) = sample(&next_start);
    let change = (&second - &first).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(change <= opts.convergence_tol) {
        return Err(DynamicsError::NonConvergence(change));
    }
    let d = space.total_dim();
    let state = DensityMatrix::normalized(&unvectorize(&second, d)?, StateSpace::Composite(space))?;
    Ok(PeriodicSteadyState { state, periods: periods + 1, change, steps_per_period: prop.steps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::tensor;
    use crate::model::{from_mhz, Ladder};
    use crate::observables::g2_zero;

    fn random_state(d: usize, seed: u64) -> Operator {
        let mut s = seed.wrapping_add(0x9E3779B97F4A7C15);
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let a = Operator::from_fn(d, |_, _| C64::new(next(), next()));
        let pos = &a * &a.dagger();
        (1.0 / pos.trace().re) * &pos
    }

    fn fig2_params() -> SystemParams {
        SystemParams::blockade(from_mhz(20.0), from_mhz(0.1), from_mhz(0.1), from_mhz(1.0))
    }

    #[test]
    fn liouvillian_matches_direct_rhs() {
        let mut p = fig2_params().with_detunings(from_mhz(17.0), from_mhz(3.0));
        p.m_th = 0.02;
        let l = system_liouvillian(&p).unwrap();
        for seed in 0..10 {
            let rho = random_state(12, seed);
            let via_l = l.apply(&rho).unwrap();
            let direct = lindblad_rhs(l.hamiltonian(), l.channels(), &rho);
            assert!(via_l.max_abs_diff(&direct) <= 1e-12, "seed {seed}");
        }
        assert!(l.trace_defect() <= 1e-10);
    }

    #[test]
    fn single_magnon_decay() {
        let space = HilbertSpace::new(4).unwrap();
        let kappa = 2.5;
        let ch = vec![Channel { rate: kappa, op: space.magnon_lowering() }];
        let l = build_liouvillian(&Operator::zeros(8), &ch).unwrap();
        let rho = DensityMatrix::basis(space, Qubit::Ground, 1);
        let out = l.apply(rho.operator()).unwrap();
        let mut expected = Operator::zeros(8);
        expected += &(kappa * DensityMatrix::basis(space, Qubit::Ground, 0).operator());
        expected += &(-kappa * rho.operator());
        assert!(out.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn unitary_liouvillian_has_imaginary_spectrum() {
        let p = SystemParams { kappa_m: 0.0, kappa_q: 0.0, ..fig2_params() };
        let h = model::build_h_eff(&p).unwrap();
        let l = build_liouvillian(&h, &[]).unwrap();
        let eye = Operator::identity(12);
        let expected = (spre(&h) - spost(&h)) * C64::new(0.0, -1.0);
        assert_eq!(l.matrix(), &expected);
        let _ = tensor(&eye, &eye);
        let scale = l.norm_inf();
        for ev in l.eigenvalues() {
            assert!(ev.re.abs() <= 1e-10 * scale, "{ev}");
        }
    }

    #[test]
    fn dissipative_spectrum_in_left_half_plane() {
        let l = system_liouvillian(&fig2_params()).unwrap();
        for ev in l.eigenvalues() {
            assert!(ev.re <= 1e-10, "{ev}");
        }
    }

    #[test]
    fn undriven_steady_state_is_vacuum() {
        let p = SystemParams { rabi_m: 0.0, rabi_q: 0.0, ..fig2_params() };
        let rho = steady_state_of(&p).unwrap();
        let vac = DensityMatrix::basis(p.space().unwrap(), Qubit::Ground, 0);
        assert!(rho.operator().max_abs_diff(vac.operator()) < 1e-12);
    }

    #[test]
    fn degenerate_kernel_is_reported() {
        let p = SystemParams { kappa_m: 0.0, kappa_q: 0.0, rabi_m: 0.0, rabi_q: 0.0, ..fig2_params() };
        let err = steady_state_of(&p).unwrap_err();
        assert!(matches!(err, DynamicsError::DegenerateKernel(k) if k > 1), "{err:?}");
    }

    #[test]
    fn steady_state_residual_small() {
        let l = system_liouvillian(&fig2_params()).unwrap();
        let (rho, report) = steady_state_with_report(&l).unwrap();
        assert!(report.residual <= 1e-10, "{}", report.residual);
        assert!((rho.trace() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn steady_state_is_initial_state_independent() {
        let p = fig2_params();
        let space = p.space().unwrap();
        let ss = steady_state_of(&p).unwrap();
        let t_end = 40.0 / p.kappa_m;
        for rho0 in [DensityMatrix::basis(space, Qubit::Ground, 0), DensityMatrix::basis(space, Qubit::Excited, 2)] {
            let traj = evolve(&rho0, &p, &[0.0, t_end], false).unwrap();
            let last = traj.states.last().unwrap();
            assert!(last.operator().max_abs_diff(ss.operator()) < 1e-7);
        }
    }

    #[test]
    fn frozen_without_generator() {
        let p = SystemParams::from_detunings(0.0, 0.0, 0.0);
        let space = p.space().unwrap();
        let rho0 = DensityMatrix::pure(
            &DVector::from_fn(12, |i, _| C64::new(1.0 + i as f64, 0.5)),
            StateSpace::Composite(space),
        )
        .unwrap();
        let traj = evolve(&rho0, &p, &[0.0, 0.5, 1.0, 7.0], false).unwrap();
        for s in &traj.states {
            assert!(s.operator().max_abs_diff(rho0.operator()) == 0.0);
        }
    }

    #[test]
    fn qubit_rabi_flopping() {
        let rabi = from_mhz(0.5);
        let p = SystemParams { rabi_q: rabi, ..SystemParams::from_detunings(from_mhz(1500.0), 0.0, 0.0) };
        let space = p.space().unwrap();
        let ops = Ladder::new(space);
        let grid: Vec<f64> = (0..=40).map(|k| k as f64 * 0.05).collect();
        let opts = EvolveOptions { spectral_factor: 0.01, ..Default::default() };
        let traj = evolve_with(&DensityMatrix::basis(space, Qubit::Ground, 0), &p, &grid, false, &opts).unwrap();
        for (t, s) in traj.times.iter().zip(&traj.states) {
            let pe = crate::hilbert::expectation(s, &ops.excited).unwrap().re;
            assert!((pe - (rabi * t).sin().powi(2)).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let p = fig2_params();
        let rho0 = DensityMatrix::basis(p.space().unwrap(), Qubit::Ground, 0);
        assert!(matches!(evolve(&rho0, &p, &[0.1, 0.2], false), Err(DynamicsError::InvalidGrid(_))));
        assert!(matches!(evolve(&rho0, &p, &[0.0, 0.2, 0.2], false), Err(DynamicsError::InvalidGrid(_))));
        assert!(matches!(evolve(&rho0, &p, &[], false), Err(DynamicsError::InvalidGrid(_))));
    }

    #[test]
    fn periodic_solver_rejects_static_problem() {
        assert!(matches!(steady_state_periodic(&fig2_params()), Err(DynamicsError::NotPeriodic)));
    }

    #[test]
    fn time_dependent_matches_static_when_coupling_vanishes() {
        let p = SystemParams { g_rp: 0.0, ..fig2_params() };
        let rho0 = DensityMatrix::basis(p.space().unwrap(), Qubit::Ground, 0);
        let grid = [0.0, 0.0123, 0.5, 0.51];
        let a = evolve(&rho0, &p, &grid, true).unwrap();
        let b = evolve(&rho0, &p, &grid, false).unwrap();
        for (x, y) in a.states.iter().zip(&b.states) {
            assert!(x.operator().max_abs_diff(y.operator()) < 1e-9);
        }
    }

    #[test]
    fn weak_longitudinal_limit_recovers_static_steady_state() {
        let mut p = SystemParams::blockade(from_mhz(35.0), from_mhz(0.033), from_mhz(0.099), from_mhz(0.5));
        let static_ss = steady_state_of(&p).unwrap();
        p.g_rp = 1e-7 * p.coupling;
        for sampling in [PeriodicSampling::Stroboscopic, PeriodicSampling::PeriodAverage] {
            let opts = PeriodicOptions { sampling, ..Default::default() };
            let per = steady_state_periodic_with(&p, &opts).unwrap();
            assert!(per.state.operator().max_abs_diff(static_ss.operator()) < 1e-6);
            let g_static = g2_zero(&static_ss).unwrap();
            let g_per = g2_zero(&per.state).unwrap();
            assert!((g_per / g_static - 1.0).abs() < 1e-2, "{g_per} vs {g_static}");
        }
    }
}
