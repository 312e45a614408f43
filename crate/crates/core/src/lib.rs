//! Prediction bands for the unobserved part of partially observed functions.
//!
//! Curves live on a uniform grid over `[0, 1]`. Phase variation is handled by
//! elastic registration in the square-root slope representation: curves are
//! aligned to a Karcher-mean template by dynamic programming, and the aligned
//! amplitudes (or the registering warps themselves) become the responses of a
//! conformal procedure whose predictor is a kernel-weighted neighborhood
//! smoother over the observed fragments.
//!
//! Module map:
//!
//! - [`funcore`]: grids, curves, observation patterns and the plain distances.
//! - [`srsf`]: square-root slope transform, warps and the group action.
//! - [`registration`]: DP pairwise alignment, Karcher mean, warp distance.
//! - [`smoothing`]: neighborhood smoother, bandwidths, presmoothers.
//! - [`conformal`]: full, split-amplitude and split-phase conformal bands.
//! - [`simeval`]: data generators and the Monte Carlo coverage harness.

pub mod conformal;
pub mod error;
pub mod funcore;
pub mod registration;
pub mod simeval;
pub mod smoothing;
pub mod special;
pub mod srsf;

pub use error::{Error, Result};
pub use funcore::{Curve, ObservationPattern, PartialCurve, TimeGrid};
pub use srsf::{Srsf, Warp};
