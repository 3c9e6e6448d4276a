//! Bit-stream pre-encoders placed ahead of the CDCM symbol encoder.
//!
//! A balanced user stream keeps the modulated clock DC-balanced and the
//! data-dependent jitter low, so transmitters normally run their payload
//! through one of these stages: a PRBS15 generator for test patterns,
//! Manchester pairing, or a multiplicative self-synchronizing scrambler.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StreamError {
    /// All-zero LFSR register is the absorbing state and never leaves it.
    #[error("PRBS register must be nonzero")]
    ZeroState,
    /// Manchester decoding needs whole (bit, complement) pairs.
    #[error("manchester decode input has odd length")]
    OddLength,
    /// A Manchester pair where both halves agree carries no valid bit.
    #[error("invalid manchester pair at bit pair {0}")]
    InvalidPair(usize),
}

/// PRBS15 generator state: 15-bit Fibonacci LFSR, x^15 + x^14 + 1,
/// output taken from tap 15. Period 2^15 - 1 = 32767.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prbs15(u16);

impl Prbs15 {
    pub const MASK: u16 = 0x7fff;
    pub const PERIOD: usize = 32767;

    /// All-ones seed, the conventional start state.
    pub fn new() -> Self {
        Prbs15(Self::MASK)
    }

    pub fn from_register(reg: u16) -> Result<Self, StreamError> {
        if reg & Self::MASK == 0 {
            return Err(StreamError::ZeroState);
        }
        Ok(Prbs15(reg & Self::MASK))
    }

    pub fn register(&self) -> u16 {
        self.0
    }

    /// Emit one bit and advance. The register holds the next 15 output bits,
    /// newest at the LSB; feedback is tap15 xor tap14.
    pub fn next_bit(&mut self) -> bool {
        let out = (self.0 >> 14) & 1;
        let fb = out ^ ((self.0 >> 13) & 1);
        self.0 = ((self.0 << 1) | fb) & Self::MASK;
        out == 1
    }

    /// Convenience: `count` bits into a vector.
    pub fn take_bits(&mut self, count: usize) -> Vec<bool> {
        (0..count).map(|_| self.next_bit()).collect()
    }
}

impl Default for Prbs15 {
    fn default() -> Self {
        Self::new()
    }
}

impl Iterator for Prbs15 {
    type Item = bool;
    fn next(&mut self) -> Option<bool> {
        Some(self.next_bit())
    }
}

/// Seed a PRBS15 from 15 already-observed output bits (oldest first), so the
/// generator continues the observed sequence. Returns `ZeroState` when the
/// observed window is all zeros, which no valid PRBS15 produces.
pub fn prbs15_from_observed(bits: &[bool; 15]) -> Result<Prbs15, StreamError> {
    let mut reg = 0u16;
    for &b in bits {
        reg = (reg << 1) | b as u16;
    }
    let mut p = Prbs15::from_register(reg)?;
    // The register now holds those 15 bits as its upcoming output; discard
    // them so the next emitted bit is the prediction of bit 16.
    for _ in 0..15 {
        p.next_bit();
    }
    Ok(p)
}

/// Manchester-encode: each bit b becomes the pair (b, !b), bit first.
pub fn manchester_encode(bits: &[bool]) -> Vec<bool> {
    let mut out = Vec::with_capacity(bits.len() * 2);
    for &b in bits {
        out.push(b);
        out.push(!b);
    }
    out
}

/// Invert [`manchester_encode`], flagging pairs that are not complements.
pub fn manchester_decode(bits: &[bool]) -> Result<Vec<bool>, StreamError> {
    if bits.len() % 2 != 0 {
        return Err(StreamError::OddLength);
    }
    let mut out = Vec::with_capacity(bits.len() / 2);
    for (i, pair) in bits.chunks_exact(2).enumerate() {
        if pair[0] == pair[1] {
            return Err(StreamError::InvalidPair(i));
        }
        out.push(pair[0]);
    }
    Ok(out)
}

/// Multiplicative self-synchronizing scrambler over x^7 + x^6 + 1.
///
/// The descrambler shifts received bits through its own register, so any
/// initial-state mismatch flushes out after 7 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Scrambler {
    register: u8, // 7 bits, bit 6 = oldest (delay 7)
}

impl Scrambler {
    pub fn new(register: u8) -> Self {
        Scrambler { register: register & 0x7f }
    }

    pub fn register(&self) -> u8 {
        self.register
    }

    fn feedback(&self) -> bool {
        // taps at delays 7 and 6
        ((self.register >> 6) ^ (self.register >> 5)) & 1 == 1
    }

    pub fn scramble_bit(&mut self, bit: bool) -> bool {
        let out = bit ^ self.feedback();
        self.register = ((self.register << 1) | out as u8) & 0x7f;
        out
    }

    pub fn descramble_bit(&mut self, bit: bool) -> bool {
        let out = bit ^ self.feedback();
        self.register = ((self.register << 1) | bit as u8) & 0x7f;
        out
    }

    pub fn scramble(&mut self, bits: &[bool]) -> Vec<bool> {
        bits.iter().map(|&b| self.scramble_bit(b)).collect()
    }

    pub fn descramble(&mut self, bits: &[bool]) -> Vec<bool> {
        bits.iter().map(|&b| self.descramble_bit(b)).collect()
    }
}

/// Per-slot running sum of +1 per high slot, -1 per low slot. The trace is
/// bounded if and only if the slot stream is DC-balanced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DisparityTrace {
    pub values: Vec<i64>,
}

impl DisparityTrace {
    pub fn final_value(&self) -> i64 {
        *self.values.last().unwrap_or(&0)
    }

    pub fn max_abs(&self) -> i64 {
        self.values.iter().map(|v| v.abs()).max().unwrap_or(0)
    }
}

/// Cumulative disparity of a serialized slot stream.
pub fn running_disparity(slots: &[bool]) -> DisparityTrace {
    let mut acc = 0i64;
    let values = slots
        .iter()
        .map(|&s| {
            acc += if s { 1 } else { -1 };
            acc
        })
        .collect();
    DisparityTrace { values }
}
