//! Scalable black-box optimization by decomposing conditional search spaces
//! into trees of building blocks executed Volcano-style.

pub mod space;
pub mod objective;
pub mod surrogate;
pub mod blocks;
pub mod plan;
pub mod persist;
pub mod meta;
pub mod ensemble;
