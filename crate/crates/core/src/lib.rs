//! Optimized stimulated Raman adiabatic passage in detuned three-level
//! (Lambda) and four-level (tripod) systems.
//!
//! Units are hbar = 1, rad/us for every frequency and us for time. Pulses
//! are parametrized by the normalized time `s = t / tau` in `[0, 1]`.
//!
//! ```
//! use stirap::{propagate, ground_state, min_steps, infidelity, PulseSet, SystemModel};
//!
//! let m = SystemModel::new(PulseSet::optimized3(35.0, 4.0), 0.0).unwrap();
//! let t = propagate(&m, &ground_state(3), min_steps(&m)).unwrap();
//! assert!(infidelity(&t) < 1e-2);
//! ```

pub mod cli;
pub mod darkstate;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod numerics;
pub mod pulses;
pub mod sweeps;
pub mod systems;

pub use darkstate::{dark_mixing_angle, frame_transform, reduced_dark_evolution};
pub use dynamics::{ground_state, infidelity, min_steps, propagate, propagate_adiabatic, propagate_final};
pub use error::{Error, Result};
pub use geometry::{dqgt_analytic, dqgt_numeric, transition_prob_bounds, transition_rate, RateMethod};
pub use numerics::{eig_hermitian, ComplexMatrix, C64};
pub use pulses::{sample_pulse, PulseFamily, PulseSet, Scheme};
pub use sweeps::{find_windows, refine_exact, run_sweep, SweepParameter, SweepSpec};
pub use systems::{hamiltonian, SystemModel};
