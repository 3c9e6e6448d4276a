//! Link-level building blocks: transmitter, receiver, fanout nodes, and
//! chain/tree topology simulation with end-to-end metrics.

mod fanout;
mod rx;
mod topology;
mod tx;

pub use fanout::{fanout_node, FanoutMode, FanoutSpec};
pub use rx::{
    align_and_compare, ber_test, prbs15_check, receive, BerStats, Checker, Extraction,
    LinkReport, Receive, RxSpec,
};
pub use topology::{
    run_topology, Histogram, Link, MetricsReport, Node, NodeKind, PointMetrics, PortRef,
    SkewMetrics, Topology,
};
pub use tx::{transmit, DataSource, PreEncoder, TxSpec};

use crate::codec::CodecError;
use crate::pll::PllError;
use crate::waveform::WaveformError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NetlinkError {
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Waveform(#[from] WaveformError),
    #[error(transparent)]
    Pll(#[from] PllError),
    /// The PRBS checker could not synchronize within its bit budget.
    #[error("PRBS checker failed to sync within {budget} bits")]
    SyncFailed { budget: usize },
    /// Data extraction at the carrier rate only works for one-bit-per-cycle
    /// wire formats.
    #[error("extractor mode unsupported for scheme {scheme}")]
    ExtractorUnsupported { scheme: String },
    /// A node or link specification is inconsistent.
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    /// The topology graph is malformed.
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    /// BER tests need a bit budget of at least 1000.
    #[error("bit budget {0} below the minimum of 1000")]
    InvalidBitBudget(u64),
}

/// Deterministic per-component seed derivation (splitmix64 of base ^ salt).
pub(crate) fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
