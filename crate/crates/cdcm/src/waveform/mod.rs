//! Edge-timestamped binary waveforms and the operations that produce and
//! perturb them.
//!
//! Time is integer ticks at a configurable resolution (default 1 fs per
//! tick). Using integers for all edge timestamps makes edge ordering and
//! reproducibility exact; fractional quantities only appear transiently in
//! jitter injection and the PLL, and are rounded once when an edge is
//! placed.

mod io;
mod metrology;

pub use io::{sidecar_json, waveform_from_csv, waveform_to_csv, WaveformSidecar};
pub use metrology::{eye_histogram, measure, EyeHistogram, TimingMetrics};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codec::CycleWord;

/// Default tick resolution: one femtosecond per tick.
pub const DEFAULT_RESOLUTION_FS: u64 = 1;

/// Ticks per second at a given resolution.
pub fn ticks_per_second(resolution_fs: u64) -> f64 {
    1e15 / resolution_fs as f64
}

/// Carrier period in ticks for a frequency in Hz.
pub fn period_ticks_for_hz(f0_hz: f64, resolution_fs: u64) -> u64 {
    (ticks_per_second(resolution_fs) / f0_hz).round() as u64
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WaveformError {
    /// Serialization requires all cycle words to share one slot count.
    #[error("mixed word lengths: expected {want}, found {got}")]
    MixedWordLength { want: usize, got: usize },
    /// Sample instant outside [0, duration].
    #[error("sample instant {t} outside waveform duration {duration}")]
    OutOfRange { t: u64, duration: u64 },
    /// Jitter perturbation broke the strict edge ordering.
    #[error("jitter reordered edges near index {0}")]
    EdgeReorder(usize),
    /// Metrology needs at least two rising edges.
    #[error("waveform has fewer than two rising edges")]
    TooFewEdges,
    /// Eye histograms need a usable bin count.
    #[error("bin count {0} too small (need >= 8)")]
    BadBins(usize),
    /// Edge list violates the waveform invariants.
    #[error("invalid edge sequence: {0}")]
    InvalidEdges(String),
    /// CSV/JSON import failure.
    #[error("waveform parse error: {0}")]
    Parse(String),
}

/// A binary signal represented by its initial level and the strictly
/// increasing tick times of its transitions. Levels alternate by
/// construction, so only times are stored.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeWaveform {
    initial_level: bool,
    edges: Vec<u64>,
    duration: u64,
    resolution_fs: u64,
}

impl EdgeWaveform {
    pub fn new(
        initial_level: bool,
        edges: Vec<u64>,
        duration: u64,
        resolution_fs: u64,
    ) -> Result<Self, WaveformError> {
        for i in 1..edges.len() {
            if edges[i] <= edges[i - 1] {
                return Err(WaveformError::InvalidEdges(format!(
                    "edge {} at {} not after edge {} at {}",
                    i,
                    edges[i],
                    i - 1,
                    edges[i - 1]
                )));
            }
        }
        if let Some(&last) = edges.last() {
            if last > duration {
                return Err(WaveformError::InvalidEdges(format!(
                    "edge at {last} beyond duration {duration}"
                )));
            }
        }
        Ok(Self { initial_level, edges, duration, resolution_fs })
    }

    pub fn initial_level(&self) -> bool {
        self.initial_level
    }

    pub fn duration(&self) -> u64 {
        self.duration
    }

    pub fn resolution_fs(&self) -> u64 {
        self.resolution_fs
    }

    pub fn edge_times(&self) -> &[u64] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Level after the i-th edge has fired.
    pub fn level_after(&self, i: usize) -> bool {
        self.initial_level ^ (i % 2 == 0)
    }

    /// (time, new_level) pairs in transmit order.
    pub fn edges(&self) -> impl Iterator<Item = (u64, bool)> + '_ {
        self.edges.iter().enumerate().map(|(i, &t)| (t, self.level_after(i)))
    }

    /// Times of low-to-high transitions.
    pub fn rising_edges(&self) -> impl Iterator<Item = u64> + '_ {
        let start = if self.initial_level { 1 } else { 0 };
        self.edges.iter().copied().skip(start).step_by(2)
    }

    /// Times of high-to-low transitions.
    pub fn falling_edges(&self) -> impl Iterator<Item = u64> + '_ {
        let start = if self.initial_level { 0 } else { 1 };
        self.edges.iter().copied().skip(start).step_by(2)
    }

    /// Level immediately before `t`: a transition at exactly `t` is not yet
    /// seen. This is the setup-time behavior of a sampling flip-flop.
    pub fn sample(&self, t: u64) -> Result<bool, WaveformError> {
        if t > self.duration {
            return Err(WaveformError::OutOfRange { t, duration: self.duration });
        }
        let idx = self.edges.partition_point(|&e| e < t);
        Ok(if idx == 0 { self.initial_level } else { self.level_after(idx - 1) })
    }

    /// The waveform shifted later in time by `dt` ticks.
    pub fn delayed(&self, dt: u64) -> EdgeWaveform {
        EdgeWaveform {
            initial_level: self.initial_level,
            edges: self.edges.iter().map(|&t| t + dt).collect(),
            duration: self.duration + dt,
            resolution_fs: self.resolution_fs,
        }
    }

    /// Total ticks spent high within [from, to).
    pub fn high_time(&self, from: u64, to: u64) -> u64 {
        let mut acc = 0u64;
        let mut level = self.sample(from).unwrap_or(self.initial_level);
        let mut cursor = from;
        let start = self.edges.partition_point(|&e| e < from);
        for i in start..self.edges.len() {
            let t = self.edges[i].min(to);
            if t > cursor && level {
                acc += t - cursor;
            }
            if self.edges[i] >= to {
                return acc;
            }
            cursor = self.edges[i];
            level = self.level_after(i);
        }
        if level && to > cursor {
            acc += to - cursor;
        }
        acc
    }
}

/// Sequential sampler: resolves monotonically increasing sample instants in
/// O(edges + samples) instead of one binary search per instant.
pub struct SampleCursor<'a> {
    w: &'a EdgeWaveform,
    idx: usize,
}

impl<'a> SampleCursor<'a> {
    pub fn new(w: &'a EdgeWaveform) -> Self {
        Self { w, idx: 0 }
    }

    /// Level just before `t`; instants must be non-decreasing across calls.
    pub fn level_before(&mut self, t: u64) -> Result<bool, WaveformError> {
        if t > self.w.duration {
            return Err(WaveformError::OutOfRange { t, duration: self.w.duration });
        }
        while self.idx < self.w.edges.len() && self.w.edges[self.idx] < t {
            self.idx += 1;
        }
        Ok(if self.idx == 0 {
            self.w.initial_level
        } else {
            self.w.level_after(self.idx - 1)
        })
    }
}

/// Serialize cycle words into time. Slot `i` of cycle `c` occupies
/// [cT + off(i), cT + off(i+1)) with off(i) = round(i*T/n), so every cycle
/// reuses identical slot offsets and rising-edge spacing is exactly T.
pub fn serialize_words<'a, I>(
    words: I,
    period_ticks: u64,
    resolution_fs: u64,
) -> Result<EdgeWaveform, WaveformError>
where
    I: IntoIterator<Item = &'a CycleWord>,
{
    let mut words = words.into_iter().peekable();
    let Some(first) = words.peek() else {
        return EdgeWaveform::new(false, vec![], 0, resolution_fs);
    };
    let n = first.len();
    let offsets: Vec<u64> = (0..n)
        .map(|i| ((i as u128 * period_ticks as u128 + n as u128 / 2) / n as u128) as u64)
        .collect();

    let mut edges = Vec::new();
    let mut initial = None;
    let mut level = false;
    let mut cycle_start = 0u64;
    let mut cycles = 0u64;
    for word in words {
        if word.len() != n {
            return Err(WaveformError::MixedWordLength { want: n, got: word.len() });
        }
        for (i, &bit) in word.bits().iter().enumerate() {
            if initial.is_none() {
                initial = Some(bit);
                level = bit;
                continue;
            }
            if bit != level {
                edges.push(cycle_start + offsets[i]);
                level = bit;
            }
        }
        cycle_start += period_ticks;
        cycles += 1;
    }
    EdgeWaveform::new(initial.unwrap_or(false), edges, cycles * period_ticks, resolution_fs)
}

/// As [`serialize_words`] with the carrier given in Hz.
pub fn serialize_words_hz<'a, I>(
    words: I,
    f0_hz: f64,
    resolution_fs: u64,
) -> Result<EdgeWaveform, WaveformError>
where
    I: IntoIterator<Item = &'a CycleWord>,
{
    serialize_words(words, period_ticks_for_hz(f0_hz, resolution_fs), resolution_fs)
}

/// An ideal 50% square wave: `cycles` periods of `period_ticks`, rising at
/// phase `rise_offset` within each period.
pub fn square_wave(
    period_ticks: u64,
    cycles: u64,
    rise_offset: u64,
    resolution_fs: u64,
) -> EdgeWaveform {
    let mut edges = Vec::with_capacity(2 * cycles as usize);
    let half = period_ticks / 2;
    for c in 0..cycles {
        edges.push(c * period_ticks + rise_offset);
        edges.push(c * period_ticks + rise_offset + half);
    }
    EdgeWaveform::new(false, edges, cycles * period_ticks + rise_offset, resolution_fs).unwrap()
}

/// Random plus periodic edge displacement. Gaussian displacement is drawn
/// per edge from the seed; the periodic term is A*sin(2*pi*t/period).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterModel {
    pub sigma_ticks: f64,
    pub periodic_amplitude_ticks: f64,
    pub periodic_period_ticks: f64,
    pub seed: u64,
}

impl JitterModel {
    pub fn none() -> Self {
        JitterModel {
            sigma_ticks: 0.0,
            periodic_amplitude_ticks: 0.0,
            periodic_period_ticks: 0.0,
            seed: 0,
        }
    }

    pub fn gaussian(sigma_ticks: f64, seed: u64) -> Self {
        JitterModel { sigma_ticks, ..Self::none() }.with_seed(seed)
    }

    pub fn sinusoidal(amplitude_ticks: f64, period_ticks: f64) -> Self {
        JitterModel {
            periodic_amplitude_ticks: amplitude_ticks,
            periodic_period_ticks: period_ticks,
            ..Self::none()
        }
    }

    fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn is_none(&self) -> bool {
        self.sigma_ticks == 0.0 && self.periodic_amplitude_ticks == 0.0
    }
}

/// Displace every edge by the jitter model. Fails with `EdgeReorder` if the
/// perturbation is large enough to make the edge sequence non-monotonic or
/// push an edge outside [0, duration].
pub fn inject_jitter(
    w: &EdgeWaveform,
    model: &JitterModel,
) -> Result<EdgeWaveform, WaveformError> {
    if model.is_none() {
        return Ok(w.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let gauss = if model.sigma_ticks > 0.0 {
        Some(Normal::new(0.0, model.sigma_ticks).expect("sigma must be finite"))
    } else {
        None
    };
    let omega = if model.periodic_amplitude_ticks > 0.0 && model.periodic_period_ticks > 0.0 {
        std::f64::consts::TAU / model.periodic_period_ticks
    } else {
        0.0
    };

    let mut edges = Vec::with_capacity(w.edges.len());
    let mut prev: Option<u64> = None;
    for (i, &t) in w.edges.iter().enumerate() {
        let mut dt = 0.0;
        if let Some(g) = &gauss {
            dt += g.sample(&mut rng);
        }
        if omega != 0.0 {
            dt += model.periodic_amplitude_ticks * (omega * t as f64).sin();
        }
        let shifted = t as f64 + dt;
        if shifted < 0.0 || shifted > w.duration as f64 {
            return Err(WaveformError::EdgeReorder(i));
        }
        let rounded = shifted.round() as u64;
        if let Some(p) = prev {
            if rounded <= p {
                return Err(WaveformError::EdgeReorder(i));
            }
        }
        prev = Some(rounded);
        edges.push(rounded);
    }
    EdgeWaveform::new(w.initial_level, edges, w.duration, w.resolution_fs)
}
