pub mod config;
pub mod diagnostics;
pub mod elliptic;
pub mod error;
pub mod grid;
pub mod init;
pub mod model;
pub mod scenario;
pub mod stepper;
