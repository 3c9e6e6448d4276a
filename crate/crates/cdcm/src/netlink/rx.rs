//! CDCM receiver: clock recovery, data extraction and PRBS error counting.
//!
//! The recovered carrier comes straight from the PLL; data capture derives
//! its instants from the recovered rising edges, which is the behavioral
//! equivalent of multiplying the clock and sampling. One-bit-per-cycle wire
//! formats are read at a single point (default mid-period); wider formats
//! sample every slot center and decode the reassembled word.

use serde::{Deserialize, Serialize};

use super::tx::{DataSource, PreEncoder, TxSpec};
use super::NetlinkError;
use crate::codec::{Scheme, Symbol};
use crate::pll::{pll_run, PllConfig};
use crate::stream::{prbs15_from_observed, Scrambler};
use crate::waveform::{
    inject_jitter, measure, EdgeWaveform, JitterModel, SampleCursor, TimingMetrics,
};

/// Data integrity checker run over the received user bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Checker {
    #[default]
    None,
    Prbs15,
}

/// How data is pulled off the recovered clock grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extraction {
    /// Mid-period single-bit capture for one-bit-per-cycle formats,
    /// full-word slot sampling otherwise.
    #[default]
    Auto,
    MidPeriod,
    FullWord,
}

/// Receiver description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RxSpec {
    pub pll: PllConfig,
    /// Data sampling point as a fraction of the carrier period after the
    /// recovered rising edge.
    pub sample_phase: f64,
    pub checker: Checker,
    /// Mirror of the transmit pre-encoder, undone before checking.
    pub pre_decoder: PreEncoder,
    pub extraction: Extraction,
}

impl RxSpec {
    pub fn new(pll: PllConfig) -> Self {
        RxSpec {
            pll,
            sample_phase: 0.5,
            checker: Checker::None,
            pre_decoder: PreEncoder::None,
            extraction: Extraction::Auto,
        }
    }

    fn validate(&self) -> Result<(), NetlinkError> {
        if !(self.sample_phase > 0.0 && self.sample_phase < 1.0) {
            return Err(NetlinkError::InvalidSpec(format!(
                "sample_phase {} outside (0, 1)",
                self.sample_phase
            )));
        }
        if self.pll.multiplier != 1 {
            return Err(NetlinkError::InvalidSpec(
                "receiver clock recovery runs at the carrier rate (multiplier 1)".into(),
            ));
        }
        Ok(())
    }
}

/// PRBS check outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerStats {
    pub errors: u64,
    pub bits_checked: u64,
    pub ber: f64,
    /// 95% confidence upper bound when zero errors were observed.
    pub zero_error_bound: f64,
    /// Bit offset at which the checker synchronized.
    pub sync_bit_index: u64,
}

/// Per-link measurement summary produced by [`receive`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub timing: TimingMetrics,
    pub ber: Option<BerStats>,
    pub lock_time_ticks: Option<u64>,
    /// Mean recovered-edge offset from the nearest input rising edge.
    pub alignment_mean_ticks: f64,
}

/// Receiver output.
#[derive(Debug, Clone, PartialEq)]
pub struct Receive {
    pub recovered_clock: EdgeWaveform,
    /// Line bits as sampled off the wire (before the pre-decoder).
    pub line_bits: Vec<bool>,
    /// User bits after undoing the pre-encoder.
    pub data_bits: Vec<bool>,
    pub report: LinkReport,
}

/// Cap on the number of cycles fed to the timing metrology; BER runs are
/// much longer than any TIE statistic needs.
const METROLOGY_CYCLE_CAP: usize = 200_000;

/// Synchronize a local PRBS15 to the received bits and count mismatches.
///
/// The state machine loads the local register from 15 received bits,
/// verifies the next `verify_len` bits, and restarts one bit later on any
/// verification mismatch. After sync every further bit is compared.
pub fn prbs15_check(
    bits: &[bool],
    sync_budget: usize,
    verify_len: usize,
) -> Result<BerStats, NetlinkError> {
    let mut start = 0usize;
    'search: while start <= sync_budget && start + 15 + verify_len <= bits.len() {
        let window: &[bool; 15] = bits[start..start + 15].try_into().unwrap();
        let Ok(mut gen) = prbs15_from_observed(window) else {
            start += 1;
            continue;
        };
        for i in 0..verify_len {
            if gen.next_bit() != bits[start + 15 + i] {
                start += 1;
                continue 'search;
            }
        }
        let mut errors = 0u64;
        let mut checked = verify_len as u64;
        for &b in &bits[start + 15 + verify_len..] {
            if gen.next_bit() != b {
                errors += 1;
            }
            checked += 1;
        }
        return Ok(BerStats {
            errors,
            bits_checked: checked,
            ber: if checked > 0 { errors as f64 / checked as f64 } else { 0.0 },
            zero_error_bound: if checked > 0 { 2.3 / checked as f64 } else { f64::NAN },
            sync_bit_index: start as u64,
        });
    }
    Err(NetlinkError::SyncFailed { budget: sync_budget })
}

/// Undo the transmit pre-encoder on sampled line bits. Errors in the line
/// stream stay bit errors: Manchester pairs that are not complements decode
/// best-effort to their first half.
fn apply_pre_decoder(line: &[bool], pre: PreEncoder) -> Vec<bool> {
    match pre {
        PreEncoder::None => line.to_vec(),
        PreEncoder::Scrambler => Scrambler::default().descramble(line),
        PreEncoder::Manchester => {
            // Resolve pair alignment on a window with both phases.
            let probe = line.len().min(64);
            let invalid = |off: usize| {
                line[off..probe]
                    .chunks_exact(2)
                    .filter(|pair| pair[0] == pair[1])
                    .count()
            };
            let offset = if invalid(0) <= invalid(1) { 0 } else { 1 };
            line[offset..].chunks_exact(2).map(|pair| pair[0]).collect()
        }
    }
}

fn fallback_value(slots: &[bool], max_value: u32) -> u32 {
    let ones = slots[2..].iter().filter(|&&b| b).count() as u32;
    ones.min(max_value)
}

/// Recover the clock and extract data from a CDCM stream.
pub fn receive(
    input: &EdgeWaveform,
    rx: &RxSpec,
    scheme: &Scheme,
) -> Result<Receive, NetlinkError> {
    rx.validate()?;
    let run = pll_run(input, &rx.pll)?;
    let t_nom = rx.pll.nominal_period_ticks;
    let lock_time = run.state.lock_time.unwrap_or(0);

    let extraction = match rx.extraction {
        Extraction::Auto => {
            if scheme.bits_per_cycle() == 1 {
                Extraction::MidPeriod
            } else {
                Extraction::FullWord
            }
        }
        other => other,
    };

    let recovered: Vec<u64> = run.clock.rising_edges().collect();
    let mut line_bits = Vec::new();
    let mut cursor = SampleCursor::new(input);
    match extraction {
        Extraction::Auto => unreachable!("resolved above"),
        Extraction::MidPeriod => {
            let offset = (rx.sample_phase * t_nom).round() as u64;
            for &r in recovered.iter().filter(|&&r| r >= lock_time) {
                let t = r + offset;
                if t > input.duration() {
                    break;
                }
                line_bits.push(cursor.level_before(t)?);
            }
        }
        Extraction::FullWord => {
            let n = scheme.n();
            let ui = t_nom / n as f64;
            let bpc = scheme.bits_per_cycle();
            let max_value = (1u32 << bpc) - 1;
            let mut slots = vec![false; n];
            'cycles: for &r in recovered.iter().filter(|&&r| r >= lock_time) {
                for (i, slot) in slots.iter_mut().enumerate() {
                    let t = r as f64 + (i as f64 - 0.5) * ui;
                    if t < 0.0 {
                        continue 'cycles;
                    }
                    let t = t.round() as u64;
                    if t > input.duration() {
                        break 'cycles;
                    }
                    *slot = cursor.level_before(t)?;
                }
                let value = match scheme.decode_slots(&slots) {
                    Ok(Symbol::Data(v)) => v.min(max_value),
                    Ok(Symbol::Idle) | Err(_) => fallback_value(&slots, max_value),
                };
                for bit in (0..bpc).rev() {
                    line_bits.push((value >> bit) & 1 == 1);
                }
            }
        }
    }

    let data_bits = apply_pre_decoder(&line_bits, rx.pre_decoder);
    let ber = match rx.checker {
        Checker::None => None,
        Checker::Prbs15 => Some(prbs15_check(&data_bits, 10_000, 64)?),
    };

    // Timing metrology over a bounded window of the recovered clock.
    let window_end = recovered
        .get(METROLOGY_CYCLE_CAP.min(recovered.len()).saturating_sub(1))
        .copied()
        .unwrap_or(run.clock.duration());
    let metrology_clock = if recovered.len() > METROLOGY_CYCLE_CAP {
        let edges: Vec<u64> =
            run.clock.edge_times().iter().copied().take_while(|&t| t <= window_end).collect();
        EdgeWaveform::new(false, edges, window_end, input.resolution_fs())?
    } else {
        run.clock.clone()
    };
    let timing = measure(&metrology_clock, t_nom.round() as u64, scheme.n())?;

    // Alignment of recovered edges to input rising edges (nearest matching).
    let input_rising: Vec<u64> = input.rising_edges().collect();
    let mut align_sum = 0.0;
    let mut align_n = 0u64;
    let half = t_nom / 2.0;
    let mut j = 0usize;
    for &r in recovered.iter().filter(|&&r| r >= lock_time) {
        while j + 1 < input_rising.len()
            && (input_rising[j + 1] as f64 - r as f64).abs()
                <= (input_rising[j] as f64 - r as f64).abs()
        {
            j += 1;
        }
        let d = r as f64 - input_rising[j] as f64;
        if d.abs() <= half {
            align_sum += d;
            align_n += 1;
        }
    }

    Ok(Receive {
        recovered_clock: run.clock,
        line_bits,
        data_bits,
        report: LinkReport {
            timing,
            ber,
            lock_time_ticks: run.state.lock_time,
            alignment_mean_ticks: if align_n > 0 { align_sum / align_n as f64 } else { 0.0 },
        },
    })
}

/// End-to-end bit error rate test: transmit, jitter the channel, receive
/// with the PRBS checker. Returns the checker stats.
pub fn ber_test(
    tx: &TxSpec,
    rx: &RxSpec,
    channel: &JitterModel,
    n_bits: u64,
) -> Result<BerStats, NetlinkError> {
    if n_bits < 1000 {
        return Err(NetlinkError::InvalidBitBudget(n_bits));
    }
    let bpc = tx.bits_per_cycle() as u64;
    // Overhead covers PLL lock plus checker sync so at least n_bits are
    // counted after sync.
    let n_cycles = n_bits.div_ceil(bpc) + 6_000;
    let (wave, _sent) = transmit_for_ber(tx, n_cycles)?;
    let wave = if channel.is_none() { wave } else { inject_jitter(&wave, channel)? };

    let mut rx = rx.clone();
    rx.checker = Checker::Prbs15;
    rx.pre_decoder = tx.pre_encoder;
    if tx.duty_setting.is_some() {
        rx.extraction = Extraction::MidPeriod;
    }
    let received = receive(&wave, &rx, &tx.scheme)?;
    received.report.ber.ok_or_else(|| NetlinkError::InvalidSpec("checker disabled".into()))
}

fn transmit_for_ber(
    tx: &TxSpec,
    n_cycles: u64,
) -> Result<(EdgeWaveform, Vec<bool>), NetlinkError> {
    match tx.data_source {
        DataSource::Prbs15 { .. } => {}
        _ => {
            return Err(NetlinkError::InvalidSpec(
                "ber_test needs a PRBS15 data source".into(),
            ))
        }
    }
    super::tx::transmit(tx, n_cycles)
}

/// Locate `received` within `sent` (line-bit level) and count mismatches
/// over the overlap. Returns (offset, mismatches) or None when no clean
/// alignment of the first 64 bits exists.
pub fn align_and_compare(sent: &[bool], received: &[bool]) -> Option<(usize, u64)> {
    if received.len() < 64 || sent.len() < received.len() {
        return None;
    }
    let probe = &received[..64];
    'offsets: for off in 0..sent.len() - 64 {
        for (i, &b) in probe.iter().enumerate() {
            if sent[off + i] != b {
                continue 'offsets;
            }
        }
        let overlap = received.len().min(sent.len() - off);
        let mismatches = (0..overlap).filter(|&i| sent[off + i] != received[i]).count() as u64;
        return Some((off, mismatches));
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{
        make_general_unary, make_minimal_distortion, make_sparse20, make_ternary4,
    };
    use crate::netlink::tx::transmit;
    use crate::stream::Prbs15;

    const RES: u64 = 1000;

    fn tx_for(scheme: Scheme, period: u64) -> TxSpec {
        TxSpec {
            scheme,
            period_ticks: period,
            resolution_fs: RES,
            pre_encoder: PreEncoder::None,
            data_source: DataSource::Prbs15 { seed: 0x7fff },
            duty_setting: None,
        }
    }

    fn rx_for(period: u64) -> RxSpec {
        let mut pll = PllConfig::for_period(period as f64);
        pll.record_trace = false;
        RxSpec::new(pll)
    }

    #[test]
    fn mid_period_sampling_reads_the_bit() {
        // Word "01110" (bit 1): rise + T/2 lands in slot 3, which is high.
        let tx = tx_for(make_minimal_distortion(5).unwrap(), 10_000);
        let (w, sent) = transmit(&tx, 20_000).unwrap();
        let rx = rx_for(10_000);
        let got = receive(&w, &rx, &tx.scheme).unwrap();
        let (_, mismatches) = align_and_compare(&sent, &got.line_bits).unwrap();
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn full_word_path_cdcm52() {
        let tx = tx_for(make_general_unary(5, 3).unwrap(), 10_000);
        let (w, sent) = transmit(&tx, 15_000).unwrap();
        let rx = rx_for(10_000);
        let got = receive(&w, &rx, &tx.scheme).unwrap();
        assert_eq!(got.line_bits.len() % 2, 0);
        let (_, mismatches) = align_and_compare(&sent, &got.line_bits).unwrap();
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn ternary_data_roundtrip() {
        let tx = tx_for(make_ternary4(), 8_000);
        let (w, sent) = transmit(&tx, 15_000).unwrap();
        let got = receive(&w, &rx_for(8_000), &tx.scheme).unwrap();
        let (_, mismatches) = align_and_compare(&sent, &got.line_bits).unwrap();
        assert_eq!(mismatches, 0);
    }

    #[test]
    fn prbs_checker_on_clean_stream() {
        let mut p = Prbs15::new();
        let bits = p.take_bits(5_000);
        let stats = prbs15_check(&bits, 1000, 64).unwrap();
        assert_eq!(stats.errors, 0);
        assert_eq!(stats.sync_bit_index, 0);
        assert_eq!(stats.bits_checked, 5_000 - 15);
        assert!((stats.zero_error_bound - 2.3 / stats.bits_checked as f64).abs() < 1e-15);
    }

    #[test]
    fn prbs_checker_counts_mid_stream_errors() {
        let mut p = Prbs15::new();
        let mut bits = p.take_bits(5_000);
        bits[2_000] = !bits[2_000];
        bits[3_000] = !bits[3_000];
        let stats = prbs15_check(&bits, 1000, 64).unwrap();
        assert_eq!(stats.errors, 2);
    }

    #[test]
    fn prbs_checker_rejects_garbage() {
        let bits = vec![false; 4_000];
        assert!(matches!(
            prbs15_check(&bits, 500, 64),
            Err(NetlinkError::SyncFailed { .. })
        ));
        // Alternating bits never verify either.
        let alt: Vec<bool> = (0..4_000).map(|i| i % 2 == 0).collect();
        assert!(matches!(prbs15_check(&alt, 500, 64), Err(NetlinkError::SyncFailed { .. })));
    }

    #[test]
    fn prbs_checker_skips_corrupt_preamble() {
        let mut p = Prbs15::new();
        let mut bits = vec![true, true, false, true, false, false, true];
        bits.extend(p.take_bits(3_000));
        let stats = prbs15_check(&bits, 1000, 64).unwrap();
        assert!(stats.sync_bit_index >= 1);
        assert_eq!(stats.errors, 0);
    }

    #[test]
    fn ber_ideal_channel_is_zero() {
        let tx = tx_for(make_minimal_distortion(16).unwrap(), 16_000);
        let stats = ber_test(&tx, &rx_for(16_000), &JitterModel::none(), 100_000).unwrap();
        assert_eq!(stats.errors, 0);
        assert!(stats.bits_checked >= 100_000);
    }

    #[test]
    fn ber_with_manchester_pre_encoding() {
        let mut tx = tx_for(make_minimal_distortion(8).unwrap(), 8_000);
        tx.pre_encoder = PreEncoder::Manchester;
        let stats = ber_test(&tx, &rx_for(8_000), &JitterModel::none(), 50_000).unwrap();
        assert_eq!(stats.errors, 0);
    }

    #[test]
    fn ber_with_scrambler_pre_encoding() {
        let mut tx = tx_for(make_minimal_distortion(8).unwrap(), 8_000);
        tx.pre_encoder = PreEncoder::Scrambler;
        let stats = ber_test(&tx, &rx_for(8_000), &JitterModel::none(), 50_000).unwrap();
        assert_eq!(stats.errors, 0);
    }

    #[test]
    fn mis_set_sample_phase_kills_sync() {
        // Sampling at 0.95T reads the constant slot ahead of the next
        // rising edge: every sparse codeword is low there, so no data comes
        // through and the checker cannot sync.
        let tx = tx_for(make_sparse20(), 20_000);
        let mut rx = rx_for(20_000);
        rx.sample_phase = 0.95;
        rx.extraction = Extraction::MidPeriod;
        let err = ber_test(&tx, &rx, &JitterModel::none(), 20_000);
        assert!(matches!(err, Err(NetlinkError::SyncFailed { .. })), "{err:?}");
    }

    #[test]
    fn gaussian_channel_jitter_causes_errors_at_gaussian_rate() {
        // Sampling margin for minimal-distortion n=5 is 0.5 UI on both
        // sides; sigma = 0.6 * margin flips bits whenever the modulated
        // edge wanders past the sampling point: p = Q(1/0.6).
        let period = 10_000u64;
        let ui = period as f64 / 5.0;
        let tx = tx_for(make_minimal_distortion(5).unwrap(), period);
        let sigma = 0.6 * 0.5 * ui;
        let channel = JitterModel::gaussian(sigma, 99);
        // Jitter of this size needs a lock window wider than the default.
        let mut rx = rx_for(period);
        rx.pll.lock_threshold_ticks = 6.0 * sigma;
        let stats = ber_test(&tx, &rx, &channel, 100_000).unwrap();
        assert!(stats.errors > 0);
        // Gaussian tail oracle: Q(0.5*ui / sigma) within a generous band.
        let z = 0.5 * ui / sigma;
        let q = 0.5 * erfc_approx(z / std::f64::consts::SQRT_2);
        assert!(
            stats.ber > q / 5.0 && stats.ber < q * 5.0,
            "ber {} vs oracle {q}",
            stats.ber
        );
    }

    // Abramowitz-Stegun 7.1.26 style erfc approximation, test-only oracle.
    fn erfc_approx(x: f64) -> f64 {
        let t = 1.0 / (1.0 + 0.3275911 * x);
        let poly = t
            * (0.254829592
                + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
        poly * (-x * x).exp()
    }

    #[test]
    fn bit_budget_enforced() {
        let tx = tx_for(make_minimal_distortion(5).unwrap(), 10_000);
        assert!(matches!(
            ber_test(&tx, &rx_for(10_000), &JitterModel::none(), 0),
            Err(NetlinkError::InvalidBitBudget(0))
        ));
        assert!(matches!(
            ber_test(&tx, &rx_for(10_000), &JitterModel::none(), 999),
            Err(NetlinkError::InvalidBitBudget(999))
        ));
    }

    #[test]
    fn sample_phase_validation() {
        let mut rx = rx_for(10_000);
        rx.sample_phase = 1.0;
        let tx = tx_for(make_minimal_distortion(5).unwrap(), 10_000);
        let (w, _) = transmit(&tx, 2_000).unwrap();
        assert!(matches!(
            receive(&w, &rx, &tx.scheme),
            Err(NetlinkError::InvalidSpec(_))
        ));
    }
}
