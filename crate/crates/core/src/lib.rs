//! Finite-alphabet lossy compression toolkit.
//!
//! - [`prob`]: entropy, divergence, channels, posteriors, logarithmic loss.
//! - [`rd`]: informational rate-distortion points via Blahut–Arimoto,
//!   `D`-tilted information and the identities it satisfies.
//! - [`oneshot`]: exact single-shot optimal codes by enumeration, and the
//!   closed-form optima under logarithmic loss.
//! - [`equivalence`]: the logarithmic-loss problem equivalent to an
//!   arbitrary-distortion one, with code maps and identity checks.
//! - [`successive`]: successive-refinement joint laws with a log-loss first
//!   stage, and a seeded time-sharing simulator.
//!
//! All information quantities are in nats.

pub mod enumerate;
pub mod equivalence;
pub mod error;
pub mod oneshot;
pub mod prob;
pub mod problem;
pub mod rd;
pub mod successive;

pub use error::{Error, Result};
pub use prob::{Channel, Joint, Pmf};
pub use problem::SourceProblem;
