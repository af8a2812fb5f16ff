//! Lyapunov exponents of Markov linear cocycles over finite symbol spaces,
//! with the projective Markov operators and Hölder-regularity diagnostics
//! built on them.

pub mod error;
pub mod fit;
pub mod holder;
pub mod benchmarks;
pub mod cocycle;
pub mod linalg;
pub mod lyapunov;
pub mod markov_operator;
pub mod projective;
pub mod rng;
pub mod symbol_space;
pub mod transport;

pub use error::{Error, Result};
