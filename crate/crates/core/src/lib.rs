//! Image-to-3D pipeline for heritage structures: site catalog, prompt
//! compilation, generator backends, glTF tooling, job orchestration,
//! timing reports and an HTTP service.

pub mod assets;
pub mod catalog;
pub mod cli;
pub mod clock;
pub mod error;
pub mod fixtures;
pub mod gateway;
mod kv;
pub mod mesh;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod service;
pub mod workspace;
