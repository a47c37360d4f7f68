pub mod classify;
pub mod features;
pub mod gmm;
pub mod ingest;
pub mod report;
pub mod synth;
pub mod trials;
