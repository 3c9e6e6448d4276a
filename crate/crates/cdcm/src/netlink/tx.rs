//! CDCM transmitter: data source, pre-encoder, symbol mapper and serializer.

use serde::{Deserialize, Serialize};

use super::NetlinkError;
use crate::codec::{Scheme, Symbol, Variant};
use crate::stream::{manchester_encode, Prbs15, Scrambler};
use crate::waveform::{serialize_words, EdgeWaveform};

/// Balancing stage applied to user data before symbol mapping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreEncoder {
    #[default]
    None,
    /// Each user bit becomes the pair (b, !b); halves throughput.
    Manchester,
    /// Multiplicative self-synchronizing scrambler; no overhead.
    Scrambler,
}

/// Where the transmitted bits come from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Prbs15 { seed: u16 },
    Constant { bit: bool },
    Alternating,
    Explicit { bits: Vec<bool> },
}

impl DataSource {
    fn generate(&self, count: usize) -> Result<Vec<bool>, NetlinkError> {
        match self {
            DataSource::Prbs15 { seed } => {
                let mut p = Prbs15::from_register(*seed)
                    .map_err(|e| NetlinkError::InvalidSpec(e.to_string()))?;
                Ok(p.take_bits(count))
            }
            DataSource::Constant { bit } => Ok(vec![*bit; count]),
            DataSource::Alternating => Ok((0..count).map(|i| i % 2 == 1).collect()),
            DataSource::Explicit { bits } => {
                if bits.is_empty() {
                    return Err(NetlinkError::InvalidSpec("explicit data is empty".into()));
                }
                Ok((0..count).map(|i| bits[i % bits.len()]).collect())
            }
        }
    }
}

/// Transmitter description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TxSpec {
    pub scheme: Scheme,
    /// Carrier period in ticks.
    pub period_ticks: u64,
    pub resolution_fs: u64,
    pub pre_encoder: PreEncoder,
    pub data_source: DataSource,
    /// Modulation depth selector for the 20-slot family: duty swings by
    /// +/-5% per step (0..=9), one slot per step on the 20-slot grid.
    /// `Some(0)` transmits the fixed 50% carrier and carries no data.
    pub duty_setting: Option<u8>,
}

impl TxSpec {
    /// Line bits carried per carrier cycle.
    pub fn bits_per_cycle(&self) -> usize {
        if self.duty_setting.is_some() {
            1
        } else {
            self.scheme.bits_per_cycle()
        }
    }

    /// True when the wire format carries one bit per cycle readable at
    /// mid-period, which is what the data extractor needs.
    pub fn wire_is_n1(&self) -> bool {
        self.duty_setting.is_some()
            || matches!(self.scheme.variant(), Variant::MinimalDistortionN1)
            || (matches!(self.scheme.variant(), Variant::GeneralUnary) && self.scheme.p() == 1)
    }

    pub fn validate(&self) -> Result<(), NetlinkError> {
        if self.period_ticks == 0 {
            return Err(NetlinkError::InvalidSpec("period_ticks must be positive".into()));
        }
        if let Some(step) = self.duty_setting {
            if step > 9 {
                return Err(NetlinkError::InvalidSpec(format!(
                    "duty setting {step} outside 0..=9"
                )));
            }
            // One step is 5% of the period, i.e. exactly one slot of the
            // 20-slot grid; other grids cannot represent the settings.
            if self.scheme.n() != 20
                || !matches!(self.scheme.variant(), Variant::GeneralUnary)
                || self.scheme.p() != 18
            {
                return Err(NetlinkError::InvalidSpec(
                    "duty settings require the 20-slot general unary scheme".into(),
                ));
            }
        }
        Ok(())
    }

    /// The symbol transmitted for the line bits of one cycle.
    fn symbol_for(&self, line_bits: &[bool]) -> Symbol {
        if let Some(step) = self.duty_setting {
            // Duty 50% +/- 5%*step: high run of 10 +/- step slots, i.e.
            // unary value 9 +/- step.
            let step = step as i32;
            let value = if line_bits[0] { 9 + step } else { 9 - step };
            return Symbol::Data(value as u32);
        }
        let mut value = 0u32;
        for &b in line_bits {
            value = (value << 1) | b as u32;
        }
        Symbol::Data(value)
    }
}

/// Generate `n_cycles` of modulated clock. Returns the waveform and the
/// exact post-pre-encoder line bit stream for end-to-end checking.
pub fn transmit(tx: &TxSpec, n_cycles: u64) -> Result<(EdgeWaveform, Vec<bool>), NetlinkError> {
    tx.validate()?;
    if n_cycles == 0 {
        return Err(NetlinkError::InvalidSpec("n_cycles must be at least 1".into()));
    }
    let bpc = tx.bits_per_cycle();
    let line_needed = n_cycles as usize * bpc;
    let mut line_bits = match tx.pre_encoder {
        PreEncoder::None => tx.data_source.generate(line_needed)?,
        PreEncoder::Manchester => {
            let raw = tx.data_source.generate(line_needed.div_ceil(2))?;
            manchester_encode(&raw)
        }
        PreEncoder::Scrambler => {
            let raw = tx.data_source.generate(line_needed)?;
            Scrambler::default().scramble(&raw)
        }
    };
    line_bits.truncate(line_needed);

    let words = line_bits
        .chunks(bpc)
        .map(|chunk| tx.scheme.encode_cycle(tx.symbol_for(chunk)))
        .collect::<Result<Vec<_>, _>>()?;
    let waveform = serialize_words(words.into_iter(), tx.period_ticks, tx.resolution_fs)?;
    Ok((waveform, line_bits))
}
