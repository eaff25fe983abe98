//! Canonical coordinates near finite-gap tori of the truncated defocusing NLS
//! equation on the circle.
//!
//! The crate builds the map `Ψ = Ψ_L ∘ Ψ_C` from an exactly symplectic
//! Birkhoff-map stand-in ([`backend`]), its linearization along the torus
//! ([`chart`]) and the path-method corrector ([`corrector`]), and provides the
//! checks used by the `nlscanon` CLI ([`experiments`]).

pub mod backend;
pub mod chart;
pub mod corrector;
pub mod error;
pub mod experiments;
pub mod fit;
pub mod flow;
pub mod forms;
pub mod hamiltonian;
pub mod normal_form;
pub mod phase_space;
pub mod poly;
pub mod quadrature;
pub mod sampling;
pub mod zs;

pub use error::{Error, Result};

/// The chapters under `book/`, compiled so their snippets run as doc-tests.
#[cfg(doctest)]
pub mod book {
    #[doc = include_str!("../../../book/src/phase_space.md")]
    pub mod phase_space {}
    #[doc = include_str!("../../../book/src/chart.md")]
    pub mod chart {}
    #[doc = include_str!("../../../book/src/corrector.md")]
    pub mod corrector {}
    #[doc = include_str!("../../../book/src/normal_form.md")]
    pub mod normal_form {}
    #[doc = include_str!("../../../book/src/zs.md")]
    pub mod zs {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
}
