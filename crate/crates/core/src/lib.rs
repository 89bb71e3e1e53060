//! Root-cause diagnosis for failed integration tests.
//!
//! A failing test leaves a directory of per-component log files. This crate
//! loads them ([`ingest`]), interleaves and sections them ([`merge`]), fits
//! them into an LLM prompt ([`prompt`]), sends the prompt to a completion
//! backend ([`backend`]), parses the answer ([`diagnosis`]) and renders it
//! as a linked markdown finding ([`finding`]). Reviewer and author feedback
//! on findings feeds the engagement metrics in [`feedback`].
//!
//! [`pipeline`] strings the stages together, [`eval`] scores the pipeline
//! on synthetic bundles with known root causes, and [`service`] / [`cli`]
//! expose it over HTTP and the command line.

pub mod backend;
pub mod cli;
pub mod config;
pub mod diagnosis;
pub mod error;
pub mod eval;
pub mod feedback;
pub mod finding;
pub mod ingest;
pub mod latency;
pub mod merge;
pub mod model;
pub mod pipeline;
pub mod prompt;
pub mod service;
