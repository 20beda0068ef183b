//! Storage, retrieval and displacement of intense broadband pulses in a
//! Doppler-broadened three-level Λ medium.
//!
//! Two independent routes are provided:
//!
//! * [`ist`] evaluates the reflection-less soliton solutions of the coupled
//!   Maxwell-Bloch equations (norming-constant evolution, N-soliton field
//!   reconstruction, post-pulse density matrix and the closed-form
//!   observables derived from them).
//! * [`cmb`] integrates the same equations numerically, including
//!   spontaneous emission from the excited state and a discretised Doppler
//!   ensemble.
//!
//! [`analysis`] extracts observables (imprint location, displacement, pulse
//! trajectories, coherence survival) from either route and runs the
//! parameter scans.
//!
//! Units are dimensionless throughout: time in units of the first pulse
//! duration τ₁, length in units of 1/κ₀, detunings and Rabi frequencies in
//! units of 1/τ₁.

pub mod analysis;
pub mod cmb;
pub mod config;
pub mod doppler;
pub mod dump;
pub mod ist;
pub mod linalg;
pub mod quadrature;
pub mod state;
pub mod types;

pub use num_complex::Complex64 as C64;

pub use config::{ConfigError, ConfigFile, ValidatedConfig};
pub use state::DensityMatrix3;
pub use types::{
    DensityField, DopplerSpec, FieldGrid, MediumConfig, NormingConstantInit, SpectralParameter,
};

/// Run `f` over `items`, in parallel when the `parallel` feature is enabled.
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        items.iter().map(f).collect()
    }
}
