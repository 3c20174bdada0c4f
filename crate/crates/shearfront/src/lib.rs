//! Numerical laboratory for KPP reaction–diffusion front speeds in random
//! Gaussian shear flows.
//!
//! The pipeline follows the variational/parabolic-Anderson reduction of the
//! front-speed problem: stationary Gaussian shear statistics ([`covariance`]),
//! exact field synthesis ([`field`]), almost-sure Lyapunov exponents of the
//! parabolic Anderson model ([`anderson`]), assembly and minimization of the
//! effective Hamiltonian ([`variational`]), direct 2-D front simulation
//! ([`direct`]), running-maxima statistics ([`extremes`]), and a config-driven
//! experiment harness ([`config`], [`manifest`], [`runner`], [`harness`]).

pub mod anderson;
pub mod config;
pub mod covariance;
pub mod direct;
pub mod extremes;
pub mod field;
pub mod harness;
pub mod interp;
pub mod manifest;
pub mod rng;
pub mod runner;
pub mod stats;
pub mod variational;
