//! SLO-driven observability feedback loop for microservice pipelines.
//!
//! A [`descriptor`] declares the components, metrics, SLO conditions and
//! remediation actions of an application. Telemetry lands in a
//! [`telemetry::MetricStore`]; the [`analysis`] module turns it into a
//! dependency graph and anomaly-ranked critical metrics; the [`controller`]
//! closes the loop through an [`actuation::Actuator`]. The [`sim`] module
//! provides a deterministic edge-to-cloud video pipeline to run it against.

pub mod actuation;
pub mod analysis;
pub mod controller;
pub mod descriptor;
pub mod sim;
pub mod telemetry;

// Book chapters run as doc-tests so their snippets track the API.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/descriptor.md")]
    mod descriptor {}
    #[doc = include_str!("../../../book/src/telemetry.md")]
    mod telemetry {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/control-loop.md")]
    mod control_loop {}
    #[doc = include_str!("../../../book/src/simulator.md")]
    mod simulator {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
