//! Outage analysis of a dual-hop decode-and-forward relay network whose
//! source and relays transmit through reconfigurable intelligent surfaces,
//! under co-channel interference at the relays and the destination.
//!
//! Three independent routes to the same outage probability cross-check
//! each other:
//!
//! * [`analytic`]: closed-form evaluation under the Gamma-law hop model,
//! * [`asymptotic`]: high-SNR expansion with diversity order and coding gain,
//! * [`montecarlo`]: simulation of the full relaying protocol,
//!
//! with [`oracle`] refereeing the closed-form algebra by adaptive quadrature.

pub mod analytic;
pub mod asymptotic;
pub mod channel;
pub mod error;
pub mod harness;
pub mod montecarlo;
pub mod oracle;
pub mod specfun;

pub use error::{Error, Result};
