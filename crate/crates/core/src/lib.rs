//! Desk-scale machinery for epsilon-approximation of harmonic functions in the
//! complement of an Ahlfors-David regular set in the plane.
//!
//! The pipeline runs bottom-up: a sampled boundary ([`geometry`]), a dyadic
//! cube tree on it ([`dyadic`]), packing and sparse checks ([`carleson`]),
//! Whitney boxes and regions ([`whitney`]), harmonic test fields
//! ([`harmonic`]), cone functionals ([`functionals`]), stopping-time families
//! ([`stopping`]) and finally the approximant ([`approximator`]).

pub mod approximator;
pub mod bitset;
pub mod carleson;
pub mod dyadic;
pub mod error;
pub mod flow;
pub mod functionals;
pub mod geometry;
pub mod harmonic;
pub mod pipeline;
pub mod stopping;
pub mod tree;
pub mod whitney;

pub use error::{Error, Result};
