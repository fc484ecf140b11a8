//! Distributed multi-UAV persistent area coverage and multi-target tracking.
//!
//! The crate is organised along the per-step pipeline: [`world`] ground
//! truth, [`sensing`], the visiting-time map in [`evtm`], consensus
//! [`fusion`], [`tracking`] rewards, [`coverage`] decisions, flow-based task
//! [`assignment`] and the integrated [`engine`].

pub mod assignment;
pub mod coverage;
pub mod engine;
pub mod evtm;
pub mod fusion;
pub mod grid;
pub mod sensing;
pub mod tracking;
pub mod world;
