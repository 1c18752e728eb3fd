//! Fusion of 5G mmWave line-of-sight and single-bounce multipath position fixes with
//! strapdown inertial and odometer dead reckoning.
// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod geo;
pub mod ins;
pub mod fiveg;
pub mod fusion;
pub mod sim;
pub mod harness;
