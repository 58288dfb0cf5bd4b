//! Runtime hardware-Trojan protection and detection over a simulated
//! multi-vendor IP fabric.
//!
//! Four schemes are implemented against injectable Trojans, all working
//! without a golden chip:
//!
//! * **SB** — obfuscate an untrusted IP's outputs, invert at the trusted
//!   receiver, rotate the confusion function periodically ([`sb`]).
//! * **MRVO** — multiplex the outputs of several variant implementations,
//!   selecting per cycle by unbiased or weight-biased random draw
//!   ([`mrvo`]).
//! * **MCRC** — MRVO plus CRC voting, per-IP error counters, and
//!   partial-reconfiguration removal of infected IPs ([`mcrc`]).
//! * **MV** — word-level majority voting among an odd number of variants
//!   with alarm-driven replacement ([`mv`]).
//!
//! Supporting subsystems: the cycle-accurate [`fabric`] with its
//! partial-reconfiguration cost model, the attack library ([`trojan`],
//! [`variant`], [`lfsr`]), the 5-bit CRC engine ([`crc5`]), the first-party
//! CRC [`logger`], the core certificate [`authority`], and the scenario
//! [`engine`] that wires a scheme to a run and emits reports.

pub mod authority;
pub mod crc5;
pub mod detector;
pub mod engine;
pub mod error;
pub mod fabric;
pub mod lfsr;
pub mod logger;
pub mod mcrc;
pub mod mrvo;
pub mod mv;
pub mod sb;
pub mod scenario;
pub mod trojan;
pub mod variant;
pub mod word;

pub use error::Error;
pub use word::Word;
