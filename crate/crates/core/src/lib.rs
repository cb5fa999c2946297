//! Magnon blockade in a driven magnon–transmon system: Hamiltonian builders,
//! Lindblad steady states and dynamics, correlation diagnostics, the
//! weak-drive analytic model and a scenario runner.

pub mod analytic;
pub mod dynamics;
pub mod experiments;
pub mod hilbert;
pub mod model;
pub mod observables;

pub use dynamics::{evolve, steady_state, steady_state_periodic, Liouvillian, Trajectory};
pub use hilbert::{DensityMatrix, HilbertSpace, Operator, Qubit};
pub use model::SystemParams;
pub use observables::{g2_zero, partial_trace_qubit, PopulationVector};
