//! Deterministic, cycle-accounted simulator of a dependable RV32
//! co-processor: three cores in lockstep with majority voting and
//! software-based recovery, SEC-DED ECC memory with background
//! scrubbing, a CLIC-style fast interrupt model with register-file
//! banking, and a real-time 3-D DMA engine on a timed schedule — plus a
//! fault-injection campaign harness that measures whether the
//! platform's reliability and latency targets hold in the model.
//!
//! The crate is organized around the hardware blocks:
//!
//! * [`isa`] — RV32IM+Zicsr hart: decode, execution, traps.
//! * [`tcls`] — triple-core lockstep voter and resynchronization.
//! * [`ecc`] — (39,32) SEC-DED codec, memory banks, scrubber.
//! * [`clic`] — interrupt controller, timer, fast-path cost model.
//! * [`dma`] — 3-D strided transfers on periodic schedules.
//! * [`soc`] — memory map, crossbar, cycle loop, run control.
//! * [`campaign`] — fault schedules, outcome classification, stats.
//!
//! Everything is deterministic: identical (image, config, seed) inputs
//! produce bit-identical traces, run results and campaign reports.

pub mod asm;
pub mod campaign;
pub mod clic;
pub mod config;
pub mod dma;
pub mod ecc;
pub mod firmware;
pub mod isa;
pub mod loader;
pub mod soc;
pub mod tcls;
pub mod trace;

pub use config::{CoreMode, SimConfig};
pub use soc::{RunResult, Soc, Termination};
