//! # qim
//!
//! A desk-scale numerical toolkit for the information geometry of Gibbs
//! states. It builds normalized states `rho = exp(-H)/Z` from dense Hermitian
//! Hamiltonians with `H >= I`, perturbs them by relatively bounded operators,
//! and turns the resulting structure into checkable numbers:
//!
//! - the Bogoliubov-Kubo-Mori (BKM) metric and higher Kubo cumulants, each
//!   computed in closed form from divided differences of `exp(-x)` and
//!   cross-checked against quadrature;
//! - the Taylor/Dyson expansion of the partition function, with the exact
//!   spectral evaluation of the perturbed operator as ground truth;
//! - relative-boundedness norms (the omega-norm `||R V||` and the form norm
//!   `||R^{1/2} V R^{1/2}||`) with the full inequality suite that relates
//!   them: domination, interpolation, resolvent identities, and
//!   norm-equivalence sandwiches;
//! - truncation-family diagnostics for Schatten-class membership and the
//!   convergence radius of the expansion.
//!
//! Everything is dense, double precision, and deterministic: seeded models,
//! fixed reduction orders, and compensated summation where sums get long.
//!
//! ## Where to start
//!
//! The `examples/` directory is the front door; each example is a runnable
//! walkthrough of one capability:
//!
//! ```bash
//! cargo run --release -p qim --example scalar_pin
//! cargo run --release -p qim --example gibbs_states
//! cargo run --release -p qim --example bkm_metric
//! cargo run --release -p qim --example operator_norms
//! cargo run --release -p qim --example dyson_expansion
//! cargo run --release -p qim --example convergence_radius
//! cargo run --release -p qim --example membership_scan
//! ```
//!
//! Batch verification runs go through the thin `qim` binary, which ingests a
//! TOML experiment config and writes JSON/CSV/SVG reports; see `qim
//! list-suites`.

pub mod bkm;
pub mod dyson;
pub mod error;
pub mod experiment;
pub mod gibbs;
pub mod linalg;
pub mod models;
pub mod norms;
pub mod quad;
pub mod simplex;

pub use error::{Error, Result};
pub use linalg::{HermitianOperator, SpectralDecomposition};

/// Toolkit version string recorded in reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
