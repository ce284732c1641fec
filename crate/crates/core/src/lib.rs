pub mod datamodel;
pub mod docstore;
pub mod ingest;
pub mod embedder;
pub mod error;
pub mod vector_index;
pub mod providers;
pub mod rag;
pub mod agents;
pub mod dataset;
pub mod eval;
pub mod config;
pub mod engine;
pub mod server;
