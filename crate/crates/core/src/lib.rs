//! Delay-equation compiler and dynamics toolkit.
//!
//! Delay differential equations and renewal equations written in a small
//! textual DSL are compiled, by pseudospectral collocation on Chebyshev
//! nodes, into ODE systems whose state holds the current value and the
//! discretised history. The compiled systems can be integrated (with event
//! detection), continued in a parameter (equilibria and periodic orbits,
//! with bifurcation detection), and probed for Lyapunov exponents.

pub mod catalog;
pub mod model;
pub mod spectral;
pub mod system;
pub mod compiler;
pub mod integrator;
pub mod lyapunov;
pub mod linalg;
pub mod continuation;
pub mod export;
pub mod observable;
