pub mod bench;
pub mod chain;
pub mod consensus;
pub mod crypto;
pub mod docstore;
pub mod node;
pub mod registry;
pub mod service;
