//! Active fanout node: clock buffer, jitter-filter PLL and a flip-flop
//! retiming layer feeding one or more outputs.
//!
//! The PLL multiplier selects the node's function. Running the sampling
//! clock at M times the carrier retimes the whole CDCM stream onto the
//! M-slot grid (repeater); running it at the carrier rate samples only the
//! mid-period data slot, so the outputs carry the raw bit stream and no
//! longer contain the carrier (extractor).

use serde::{Deserialize, Serialize};

use super::{derive_seed, NetlinkError};
use crate::pll::{pll_run, PllConfig};
use crate::waveform::{inject_jitter, EdgeWaveform, JitterModel, SampleCursor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FanoutMode {
    /// Retime the stream on an `multiplier`-slot grid.
    Repeater { multiplier: u32 },
    /// Output the embedded data bits at the carrier rate.
    Extractor,
}

/// Fanout node description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FanoutSpec {
    pub buffer_delay_ticks: u64,
    pub buffer_jitter_sigma_ticks: f64,
    pub pll: PllConfig,
    pub ff_delay_ticks: u64,
    pub ff_jitter_sigma_ticks: f64,
    pub mode: FanoutMode,
    pub outputs: usize,
    pub seed: u64,
}

impl FanoutSpec {
    /// Default node: 200 ps buffer and flip-flop delays at 1 ps ticks.
    pub fn new(pll: PllConfig, mode: FanoutMode) -> Self {
        FanoutSpec {
            buffer_delay_ticks: 200,
            buffer_jitter_sigma_ticks: 0.0,
            pll,
            ff_delay_ticks: 200,
            ff_jitter_sigma_ticks: 0.0,
            mode,
            outputs: 2,
            seed: 0,
        }
    }

    pub fn sampling_multiplier(&self) -> u32 {
        match self.mode {
            FanoutMode::Repeater { multiplier } => multiplier,
            FanoutMode::Extractor => 1,
        }
    }

    pub fn validate(&self) -> Result<(), NetlinkError> {
        if self.outputs == 0 {
            return Err(NetlinkError::InvalidSpec("fanout needs at least one output".into()));
        }
        if self.sampling_multiplier() == 0 {
            return Err(NetlinkError::InvalidSpec("repeater multiplier must be >= 1".into()));
        }
        Ok(())
    }
}

/// Run one fanout node over its input stream.
///
/// The input is delayed (and optionally jittered) by the buffer; one copy
/// drives the zero-delay PLL, the other feeds the flip-flop data input. The
/// flip-flop samples at the PLL's phase-shifted output edges — (0.5 + k) UI
/// into each recovered cycle — and an input level change exactly on a
/// sampling instant resolves to the level just before it.
pub fn fanout_node(
    input: &EdgeWaveform,
    spec: &FanoutSpec,
) -> Result<Vec<EdgeWaveform>, NetlinkError> {
    spec.validate()?;
    let mut delayed = input.delayed(spec.buffer_delay_ticks);
    if spec.buffer_jitter_sigma_ticks > 0.0 {
        delayed = inject_jitter(
            &delayed,
            &JitterModel::gaussian(spec.buffer_jitter_sigma_ticks, derive_seed(spec.seed, 0)),
        )?;
    }

    let mut pll_cfg = spec.pll.clone();
    pll_cfg.multiplier = spec.sampling_multiplier();
    pll_cfg.emit_sample_clock = true;
    pll_cfg.phase_offset = 0.5;
    let run = pll_run(&delayed, &pll_cfg)?;
    let sample_clock = run.sample_clock.expect("sample clock requested");

    // Flip-flop layer: output level changes only at sampling instants.
    let mut edges = Vec::new();
    let mut level = false;
    let mut cursor = SampleCursor::new(&delayed);
    for instant in sample_clock.rising_edges() {
        if instant > delayed.duration() {
            break;
        }
        let sampled = cursor.level_before(instant)?;
        if sampled != level {
            edges.push(instant);
            level = sampled;
        }
    }
    let retimed = EdgeWaveform::new(false, edges, delayed.duration(), input.resolution_fs())?;

    let mut outputs = Vec::with_capacity(spec.outputs);
    for i in 0..spec.outputs {
        let mut out = retimed.delayed(spec.ff_delay_ticks);
        if spec.ff_jitter_sigma_ticks > 0.0 {
            out = inject_jitter(
                &out,
                &JitterModel::gaussian(
                    spec.ff_jitter_sigma_ticks,
                    derive_seed(spec.seed, 1 + i as u64),
                ),
            )?;
        }
        outputs.push(out);
    }
    Ok(outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{make_general_unary, Symbol};
    use crate::netlink::tx::{transmit, DataSource, PreEncoder, TxSpec};
    use crate::stream::Prbs15;
    use crate::waveform::{measure, serialize_words};

    const RES: u64 = 1000;

    fn spec_with(period: f64, mode: FanoutMode) -> FanoutSpec {
        let mut pll = PllConfig::for_period(period);
        pll.record_trace = false;
        FanoutSpec::new(pll, mode)
    }

    fn pm10_stream(n_cycles: u64, period: u64) -> (EdgeWaveform, Vec<bool>) {
        let tx = TxSpec {
            scheme: make_general_unary(20, 18).unwrap(),
            period_ticks: period,
            resolution_fs: RES,
            pre_encoder: PreEncoder::None,
            data_source: DataSource::Prbs15 { seed: 0x7fff },
            duty_setting: Some(2),
        };
        transmit(&tx, n_cycles).unwrap()
    }

    #[test]
    fn repeater_quantizes_pm10_to_thirds() {
        // +/-10% in, 3-slot grid out: duty becomes exactly 1/3 or 2/3.
        // Period divisible by 60 so thirds and twentieths are exact ticks.
        let period = 6_000_000u64;
        let (w, bits) = pm10_stream(30_000, period);
        let spec = spec_with(period as f64, FanoutMode::Repeater { multiplier: 3 });
        let outs = fanout_node(&w, &spec).unwrap();
        assert_eq!(outs.len(), 2);
        let m = measure(&outs[0], period, 3).unwrap();
        let settle = 10_000;
        for (i, d) in m.duty_cycles.iter().enumerate().skip(settle) {
            // Output cycle i corresponds to input bit i (same count of
            // rising edges since lock).
            let expect = if bits[i] { 2.0 / 3.0 } else { 1.0 / 3.0 };
            assert!((d - expect).abs() < 1e-9, "cycle {i}: duty {d} expect {expect}");
        }
    }

    #[test]
    fn repeater_identity_on_grid_input() {
        // A CDCM-3-1 stream is already on the 3-slot grid: the repeater
        // reproduces it shifted by the node delay.
        let scheme = make_general_unary(3, 1).unwrap();
        let mut prbs = Prbs15::new();
        let period = 6_000_000u64;
        let words: Vec<_> = prbs
            .take_bits(20_000)
            .iter()
            .map(|&b| scheme.encode_cycle(Symbol::Data(b as u32)).unwrap().clone())
            .collect();
        let w = serialize_words(words.iter(), period, RES).unwrap();
        let spec = spec_with(period as f64, FanoutMode::Repeater { multiplier: 3 });
        let outs = fanout_node(&w, &spec).unwrap();

        let shift = spec.buffer_delay_ticks + spec.ff_delay_ticks + period / 6;
        let in_edges = w.edge_times();
        let out_edges = outs[0].edge_times();
        // Compare a settled window: every input edge must appear shifted.
        let probe = &in_edges[30_000..35_000];
        for &t in probe {
            let want = t + shift;
            assert!(
                out_edges.binary_search(&want).is_ok(),
                "missing edge at {want} (input {t})"
            );
        }
    }

    #[test]
    fn repeater_applied_twice_is_idempotent() {
        let period = 6_000_000u64;
        let (w, _) = pm10_stream(20_000, period);
        let spec = spec_with(period as f64, FanoutMode::Repeater { multiplier: 3 });
        let once = fanout_node(&w, &spec).unwrap().remove(0);
        let twice = fanout_node(&once, &spec).unwrap().remove(0);
        let shift = spec.buffer_delay_ticks + spec.ff_delay_ticks + period / 6;
        let a = once.edge_times();
        let b = twice.edge_times();
        let probe = &a[30_000..32_000];
        for &t in probe {
            assert!(b.binary_search(&(t + shift)).is_ok(), "edge {t} not re-timed in place");
        }
    }

    #[test]
    fn extractor_outputs_raw_bits() {
        let scheme = crate::codec::make_minimal_distortion(5).unwrap();
        let tx = TxSpec {
            scheme,
            period_ticks: 6_000_000,
            resolution_fs: RES,
            pre_encoder: PreEncoder::None,
            data_source: DataSource::Prbs15 { seed: 0x7fff },
            duty_setting: None,
        };
        let (w, sent) = transmit(&tx, 20_000).unwrap();
        let spec = spec_with(6_000_000.0, FanoutMode::Extractor);
        let out = fanout_node(&w, &spec).unwrap().remove(0);
        // The output levels at successive mid-period instants are the data
        // bits; recover them by sampling the output at the carrier period.
        let mut cursor = SampleCursor::new(&out);
        let settle = 10_000u64;
        let mut got = Vec::new();
        for k in settle..19_000 {
            // The holding interval for bit k starts at the sampling instant:
            // input rising (1 UI into cycle k) + buffer delay + T/2 + ff
            // delay. Sample just after it.
            let t = k * 6_000_000
                + 1_200_000
                + 3_000_000
                + spec.buffer_delay_ticks
                + spec.ff_delay_ticks
                + 10;
            got.push(cursor.level_before(t).unwrap());
        }
        let sent_window = &sent[settle as usize..19_000];
        let matches = got.iter().zip(sent_window).filter(|(a, b)| a == b).count();
        assert_eq!(matches, got.len());
    }

    #[test]
    fn output_count_respected() {
        let period = 6_000_000u64;
        let (w, _) = pm10_stream(10_000, period);
        let mut spec = spec_with(period as f64, FanoutMode::Repeater { multiplier: 3 });
        spec.outputs = 5;
        let outs = fanout_node(&w, &spec).unwrap();
        assert_eq!(outs.len(), 5);
        assert_eq!(outs[0], outs[4]); // no jitter: copies identical
        spec.outputs = 0;
        assert!(matches!(fanout_node(&w, &spec), Err(NetlinkError::InvalidSpec(_))));
    }

    #[test]
    fn per_output_jitter_is_independent() {
        let period = 6_000_000u64;
        let (w, _) = pm10_stream(10_000, period);
        let mut spec = spec_with(period as f64, FanoutMode::Repeater { multiplier: 3 });
        spec.ff_jitter_sigma_ticks = 1.0;
        let outs = fanout_node(&w, &spec).unwrap();
        assert_ne!(outs[0], outs[1]);
    }
}
