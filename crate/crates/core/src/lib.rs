//! Stress-testing toolkit for IoT edge-to-cloud systems.
//!
//! The pipeline: parse a `.iotecs` spec ([`dsl`]), validate it ([`validate`]),
//! resolve it into an executable run plan ([`plan`]), execute the plan's
//! simulation nodes ([`runtime`], launched by [`orchestrate`]) against a cloud
//! (a real one, or the bundled loopback [`cloud`]), and join the two sides
//! into loss/latency reports ([`metrics`]).

pub mod clock;
pub mod cloud;
pub mod corpus;
pub mod dsl;
pub mod metrics;
pub mod orchestrate;
pub mod plan;
pub mod runtime;
pub mod transport;
pub mod validate;

pub use dsl::{parse, print, tokenize, SpecAst};
pub use metrics::MetricsReport;
pub use plan::{resolve, RunPlan};
pub use validate::{validate, Diagnostic, Severity};
