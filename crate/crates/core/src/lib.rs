//! Dynamic honeypot orchestration.
//!
//! Packets addressed to a reserved address ladder trigger on-demand decoys;
//! HTTP, botnet and DDoS detectors turn traffic into alerts and follow-up
//! deployments; a deterministic simulator drives the whole engine in virtual
//! time.

pub mod backend;
pub mod botnet;
pub mod config;
pub mod ddos;
pub mod engine;
pub mod http_ids;
pub mod learners;
pub mod orchestrator;
pub mod packet;
pub mod scenario;
pub mod storage;
