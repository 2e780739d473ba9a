//! Built-in applications of the engine.

pub mod credit;
pub mod saw;
pub mod wcm;
