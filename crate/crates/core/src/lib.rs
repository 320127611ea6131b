//! Pricing of RFR swaptions under the generalized Forward Market Model.
//!
//! Two engines share the market and product definitions:
//!
//! * [`mc`]: log-Euler Monte Carlo under the risk-neutral measure, with
//!   confidence intervals.
//! * [`pde`] and [`amfr`]: finite differences on sinh-stretched grids in up
//!   to five rate dimensions, integrated in time by the one-stage AMFR-W1
//!   method with directional splitting.
//!
//! [`analytics`] wires both into pricing pipelines and convergence studies;
//! [`cli`] exposes them on the command line.

pub mod amfr;
pub mod analytics;
pub mod cli;
pub mod error;
pub mod market;
pub mod mc;
pub mod payoff;
pub mod pde;

pub use error::{FmmError, Result};
pub use market::{Correlation, MarketData, RateState, TenorStructure, VolSpec, Volatility};
pub use payoff::SwaptionSpec;
