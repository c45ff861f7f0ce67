//! Boundary non-crossing probabilities of Gaussian processes.
//!
//! This crate computes sharp upper and lower bounds, and two-term logarithmic
//! asymptotics, for probabilities of the form
//!
//! ```text
//!     P = Pr( X(t) + f(t) <= u(t)  for all t )
//! ```
//!
//! where `X` is a centered Gaussian process (Wiener process, Brownian bridge,
//! Brownian sheet, or a Volterra process), `f` is a drift in the
//! Cameron–Martin space of `X` and `u` is a boundary. The central object is
//! the minimum-norm element `f~` of the Cameron–Martin space dominating `f`;
//! it is obtained either in closed form (concave majorants, [`majorant`]) or
//! by a dual active-set quadratic program ([`projection`]), and feeds the
//! bound and asymptote formulas in [`bounds`]. Monte Carlo path simulation
//! ([`simulate`]) validates every bound against closed-form laws
//! ([`oracles`]).
//!
//! The [`scenario`] module and the `noncross` binary drive the whole
//! pipeline from a JSON scenario file.

pub mod bounds;
pub mod compactify;
pub mod error;
pub mod grid;
pub mod majorant;
pub mod model;
pub mod oracles;
pub mod projection;
pub mod report;
pub mod scenario;
pub mod simulate;

pub use error::{Error, Result};
pub use grid::{Grid, GridFunction, GridMeasure};
pub use majorant::MajorantResult;
