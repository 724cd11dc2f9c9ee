//! Decide whether a piecewise-smooth function of time and state is the value
//! of a zero-sum differential game with terminal payoff, and when it is,
//! build a Hamiltonian and a game realizing it and check both numerically.

pub mod conditions;
pub mod error;
pub mod expr;
pub mod game;
pub mod geometry;
pub mod hamiltonian;
pub mod hj;
pub mod lp;
pub mod mcshane;
pub mod nonsmooth;
pub mod pipeline;

pub use error::{Error, Result};
