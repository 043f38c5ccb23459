//! Dynamic Chebyshev pricing and credit-exposure engine.
//!
//! The crate prices European, Bermudan and discretely monitored up-and-out
//! barrier options by backward induction on a Chebyshev interpolation grid
//! and evaluates the resulting closed-form value functions along simulated
//! real-world scenarios to produce expected-exposure (EE) and potential
//! future exposure (PFE) profiles.
//!
//! The pipeline has three phases:
//!
//! 1. **Simulation** — real-world paths of the log-price risk factor
//!    ([`models::simulate_paths`]).
//! 2. **Pre-computation** — the matrix `Γ[k][j] = E_Q[p_j(X_dt) | X_0 = x_k]`
//!    of conditional expectations of the Chebyshev basis, by an analytic
//!    truncated-normal recursion, Fourier quadrature against a characteristic
//!    function, or Monte Carlo ([`moments`]).
//! 3. **Time-stepping** — backward induction producing one polynomial per
//!    date ([`pricer`]), then exposure aggregation along the paths
//!    ([`exposure`]).

pub mod cheb;
pub mod error;
pub mod exposure;
pub mod grid;
pub mod models;
pub mod moments;
pub mod pricer;
pub mod rng;

pub use cheb::{ChebDomain, ChebPoly};
pub use error::{Error, Result};
pub use exposure::{ExposureMatrix, ExposureProfile, PhaseTimings};
pub use models::{Measure, ModelSpec, PathSet};
pub use moments::{MomentBackend, MomentMatrix, TruncatedNormalMoments};
pub use pricer::{DcSolution, ProductKind, ProductSpec};
