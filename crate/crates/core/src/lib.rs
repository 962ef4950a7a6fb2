//! Particle simulation of law-dependent semi-linear SPDEs in a truncated
//! eigenbasis, with Monte Carlo checks of Harnack-type inequalities.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod error;
pub mod girsanov;
pub mod model;
mod quad;
pub mod rng;
pub mod runner;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/spectral.md")]
    mod spectral {}
    #[doc = include_str!("../../../book/src/models.md")]
    mod models {}
    #[doc = include_str!("../../../book/src/flows.md")]
    mod flows {}
    #[doc = include_str!("../../../book/src/transport.md")]
    mod transport {}
    #[doc = include_str!("../../../book/src/harnack.md")]
    mod harnack {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
