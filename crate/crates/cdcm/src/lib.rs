//! Simulation library for clock-centric serial links using Clock Duty Cycle
//! Modulation (CDCM).
//!
//! A CDCM link transports a reference clock whose rising edges stay exactly
//! periodic while serial data rides on the position of the falling edge.
//! This crate models the whole chain at the edge-timestamp level:
//!
//! - [`codec`]: the CDCM code family (general unary, minimal-distortion,
//!   ternary, sparse) and per-cycle symbol encoding,
//! - [`stream`]: bit-stream pre-encoders (PRBS15, Manchester, scrambler) and
//!   running-disparity accounting,
//! - [`waveform`]: edge-timestamped binary signals, serialization, jitter
//!   injection and timing metrology (TIE, duty, eye),
//! - [`pll`]: a behavioral type-II PLL with pre-divider, multiplier and
//!   zero-delay feedback,
//! - [`netlink`]: transmitter/receiver/fanout nodes and chain or tree
//!   topology simulation with BER, latency and skew metrics.
//!
//! All timing is integer ticks (default 1 fs per tick) so results are
//! bitwise reproducible for a given seed.

pub mod codec;
pub mod netlink;
pub mod pll;
pub mod stream;
pub mod waveform;
