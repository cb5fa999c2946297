//! Scenario configuration: TOML with user-facing units (MHz for ν = ω/2π,
//! mK for temperatures, µW for drive power).

use serde::Deserialize;

use crate::dynamics::PeriodicSampling;
use crate::model::{self, from_mhz, SystemParams, DEFAULT_DRIVE_MHZ, DEFAULT_FOCK_DIM};

use super::ExperimentError;

/// Most sweep axes a scenario may declare.
pub const MAX_AXES: usize = 2;

/// Parameters in the units used for configuration.
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UserParams {
    pub J_over_2pi_MHz: f64,
    pub kappa_over_2pi_MHz: f64,
    /// Overrides `kappa_over_2pi_MHz` with `κ = r J`.
    pub kappa_over_J: Option<f64>,
    pub Omega_m_over_2pi_MHz: f64,
    /// Overrides `Omega_m_over_2pi_MHz` through the drive-power calibration.
    pub P_m_uW: Option<f64>,
    pub Omega_q_over_Omega_m: f64,
    pub Delta_plus_over_J: f64,
    pub Delta_minus_over_Delta_plus: f64,
    pub m_th: f64,
    /// Overrides `m_th` with the Bose occupation at the magnon frequency.
    pub T_mK: Option<f64>,
    /// Magnon frequency used for the thermal occupation.
    pub omega_m_over_2pi_MHz: f64,
    pub g_rp_over_J: f64,
    /// Drive (rotating-frame) frequency.
    pub omega_over_2pi_MHz: f64,
}

impl Default for UserParams {
    fn default() -> Self {
        Self {
            J_over_2pi_MHz: 20.0,
            kappa_over_2pi_MHz: 1.0,
            kappa_over_J: None,
            Omega_m_over_2pi_MHz: 0.1,
            P_m_uW: None,
            Omega_q_over_Omega_m: 1.0,
            Delta_plus_over_J: 1.0,
            Delta_minus_over_Delta_plus: 0.0,
            m_th: 0.0,
            T_mK: None,
            omega_m_over_2pi_MHz: DEFAULT_DRIVE_MHZ,
            g_rp_over_J: 0.0,
            omega_over_2pi_MHz: DEFAULT_DRIVE_MHZ,
        }
    }
}

/// Names accepted as sweep paths, with or without the `params.` prefix.
pub const PARAM_NAMES: &[&str] = &[
    "J_over_2pi_MHz",
    "kappa_over_2pi_MHz",
    "kappa_over_J",
    "Omega_m_over_2pi_MHz",
    "P_m_uW",
    "Omega_q_over_Omega_m",
    "Delta_plus_over_J",
    "Delta_minus_over_Delta_plus",
    "m_th",
    "T_mK",
    "omega_m_over_2pi_MHz",
    "g_rp_over_J",
    "omega_over_2pi_MHz",
];

fn strip(path: &str) -> &str {
    path.strip_prefix("params.").unwrap_or(path)
}

impl UserParams {
    pub fn set(&mut self, path: &str, value: f64) -> Result<(), ExperimentError> {
        match strip(path) {
            "J_over_2pi_MHz" => self.J_over_2pi_MHz = value,
            "kappa_over_2pi_MHz" => self.kappa_over_2pi_MHz = value,
            "kappa_over_J" => self.kappa_over_J = Some(value),
            "Omega_m_over_2pi_MHz" => self.Omega_m_over_2pi_MHz = value,
            "P_m_uW" => self.P_m_uW = Some(value),
            "Omega_q_over_Omega_m" => self.Omega_q_over_Omega_m = value,
            "Delta_plus_over_J" => self.Delta_plus_over_J = value,
            "Delta_minus_over_Delta_plus" => self.Delta_minus_over_Delta_plus = value,
            "m_th" => self.m_th = value,
            "T_mK" => self.T_mK = Some(value),
            "omega_m_over_2pi_MHz" => self.omega_m_over_2pi_MHz = value,
            "g_rp_over_J" => self.g_rp_over_J = value,
            "omega_over_2pi_MHz" => self.omega_over_2pi_MHz = value,
            other => return Err(ExperimentError::Config(format!("unknown parameter path `{other}`"))),
        }
        Ok(())
    }

    pub fn to_system(&self, fock_dim: usize) -> Result<SystemParams, ExperimentError> {
        let j = from_mhz(self.J_over_2pi_MHz);
        let kappa = match self.kappa_over_J {
            Some(r) => r * j,
            None => from_mhz(self.kappa_over_2pi_MHz),
        };
        let rabi_m = match self.P_m_uW {
            Some(uw) => model::rabi_from_power(uw * 1e-3)?,
            None => from_mhz(self.Omega_m_over_2pi_MHz),
        };
        let m_th = match self.T_mK {
            Some(t) => model::thermal_occupation(from_mhz(self.omega_m_over_2pi_MHz), t * 1e-3)?,
            None => self.m_th,
        };
        let delta_plus = self.Delta_plus_over_J * j;
        let mut p = SystemParams::from_detunings(
            from_mhz(self.omega_over_2pi_MHz),
            delta_plus,
            self.Delta_minus_over_Delta_plus * delta_plus,
        );
        p.coupling = j;
        p.g_rp = self.g_rp_over_J * j;
        p.rabi_m = rabi_m;
        p.rabi_q = self.Omega_q_over_Omega_m * rabi_m;
        p.kappa_m = kappa;
        p.kappa_q = kappa;
        p.m_th = m_th;
        p.fock_dim = fock_dim;
        p.validate()?;
        Ok(p)
    }
}

/// What each grid point computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    /// Static master-equation steady state.
    SteadyState,
    /// Long-time state under the longitudinal Hamiltonian.
    Periodic,
    /// g²(t, t) and populations along a trajectory.
    TimeSeries,
    /// Weak-drive amplitude model only.
    Analytic,
    /// Extrema of the dimensionless g² versus `r = κ/J`.
    Roots,
}

/// A parameter to co-vary with an axis, one value per axis value.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Linked {
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub path: String,
    pub values: Option<Vec<f64>>,
    /// `[start, stop, count]`, both ends included.
    pub linspace: Option<(f64, f64, usize)>,
    pub linked: Option<Linked>,
}

impl Axis {
    pub fn points(&self) -> Result<Vec<f64>, ExperimentError> {
        match (&self.values, self.linspace) {
            (Some(v), None) if !v.is_empty() => Ok(v.clone()),
            (None, Some((a, b, n))) if n >= 1 => Ok(linspace(a, b, n)),
            _ => Err(ExperimentError::Config(format!(
                "axis `{}` needs exactly one of a non-empty `values` or `linspace`",
                self.path
            ))),
        }
    }

    /// Column name in the output table.
    pub fn column(&self) -> &str {
        strip(&self.path)
    }
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    /// `|g, 0⟩`.
    #[default]
    G0,
    /// `|g, 1⟩`.
    G1,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeOptions {
    /// End of the trajectory in units of 1/κ.
    pub kappa_t_end: f64,
    pub points: usize,
    pub initial: InitialState,
}

impl Default for TimeOptions {
    fn default() -> Self {
        Self { kappa_t_end: 30.0, points: 301, initial: InitialState::G0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    Stroboscopic,
    #[default]
    PeriodAverage,
}

impl From<Sampling> for PeriodicSampling {
    fn from(s: Sampling) -> Self {
        match s {
            Sampling::Stroboscopic => PeriodicSampling::Stroboscopic,
            Sampling::PeriodAverage => PeriodicSampling::PeriodAverage,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub fock_dim: usize,
    pub steps_per_period: usize,
    pub sampling: Sampling,
    /// Add weak-drive analytic columns to numeric kinds.
    pub analytic: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { fock_dim: DEFAULT_FOCK_DIM, steps_per_period: 128, sampling: Sampling::PeriodAverage, analytic: false }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub kind: Kind,
    #[serde(default)]
    pub params: UserParams,
    #[serde(default)]
    pub axes: Vec<Axis>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub time: TimeOptions,
    pub output: Option<String>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExperimentError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.axes.len() > MAX_AXES {
            return Err(ExperimentError::Config(format!("{} axes given, at most {MAX_AXES}", self.axes.len())));
        }
        let mut probe = self.params;
        for axis in &self.axes {
            let points = axis.points()?;
            probe.set(&axis.path, points[0])?;
            if let Some(linked) = &axis.linked {
                probe.set(&linked.path, linked.values.first().copied().unwrap_or(0.0))?;
                if linked.values.len() != points.len() {
                    return Err(ExperimentError::Config(format!(
                        "linked `{}` has {} values for {} points",
                        linked.path,
                        linked.values.len(),
                        points.len()
                    )));
                }
            }
        }
        if self.kind == Kind::Roots && !self.axes.iter().any(|a| a.column() == "kappa_over_J") {
            return Err(ExperimentError::Config("roots scenarios need a `kappa_over_J` axis".into()));
        }
        if self.kind == Kind::TimeSeries && (self.time.points < 2 || !(self.time.kappa_t_end > 0.0)) {
            return Err(ExperimentError::Config("time series needs ≥ 2 points and kappa_t_end > 0".into()));
        }
        if self.solver.steps_per_period == 0 {
            return Err(ExperimentError::Config("steps_per_period must be positive".into()));
        }
        model::SystemParams::validate(&probe.to_system(self.solver.fock_dim)?)?;
        Ok(())
    }

    /// Replace every linspace count by `n`.
    pub fn with_grid(mut self, n: usize) -> Self {
        for axis in &mut self.axes {
            if let Some((a, b, _)) = axis.linspace {
                axis.linspace = Some((a, b, n));
            }
        }
        self
    }

    pub fn with_fock_dim(mut self, n: usize) -> Self {
        self.solver.fock_dim = n;
        self
    }

    /// Cartesian grid in row-major order (last axis fastest). Each entry is
    /// the axis values plus the parameters they imply.
    pub fn grid(&self) -> Result<Vec<(Vec<f64>, UserParams)>, ExperimentError> {
        let mut out = vec![(Vec::new(), self.params)];
        for axis in &self.axes {
            let points = axis.points()?;
            let mut next = Vec::with_capacity(out.len() * points.len());
            for (vals, params) in &out {
                for (k, &x) in points.iter().enumerate() {
                    let mut p = *params;
                    p.set(&axis.path, x)?;
                    if let Some(linked) = &axis.linked {
                        p.set(&linked.path, linked.values[k])?;
                    }
                    let mut v = vals.clone();
                    v.push(x);
                    next.push((v, p));
                }
            }
            out = next;
        }
        Ok(out)
    }
}
