//! Lattice approximations of symmetric α-stable random measures.
//!
//! An integral `∫ f dM_α` against an independently scattered SαS random
//! measure is approximated by summing cell coefficients of `f` against an
//! i.i.d. noise field. The fractional-calculus part extends this to linear
//! fractional stable motion (LFSM), and a validation harness turns the limit
//! theorems behind the scheme into executable checks.
//!
//! Module map:
//!
//! * [`stable`]: exact SαS sampling, noise in the domain of normal attraction.
//! * [`function`]: symbolic integrands, cell integrals, `L^p` norms, windows.
//! * [`lattice`]: cell coefficient families and their norms.
//! * [`measure`]: Monte-Carlo sampling of discretized stable integrals.
//! * [`frac`]: Riemann–Liouville and Marchaud operators, power-kernel convolutions.
//! * [`lfsm`]: linear fractional stable measures and path sampling.
//! * [`validate`] and [`suites`]: statistical checks and packaged suites.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod frac;
pub mod function;
pub mod io;
pub mod lattice;
pub mod lfsm;
pub mod measure;
pub mod quad;
pub mod rng;
pub mod stable;
pub mod suites;
pub mod validate;

pub use error::{Error, Result};
pub use function::{FunctionSpec, Integrand};
pub use lattice::{CellCoefficients, Scheme};
pub use measure::SampleBatch;
pub use rng::SeedSpec;
pub use stable::{NoiseModel, StableParams};
