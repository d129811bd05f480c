//! Adversarial multi-agent claim verification.

pub mod arbitration;
pub mod corpus;
pub mod debate;
pub mod metrics;
pub mod mining;
pub mod panel;
pub mod pipeline;
pub mod prag;
pub mod runtime;
