//! Timing metrology: time interval error against a best-fit grid, per-cycle
//! duty, data-dependent jitter and eye histograms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{EdgeWaveform, SampleCursor, WaveformError};

/// Timing statistics of one waveform, all times in ticks.
///
/// TIE is computed against an ideal grid of the given period whose offset is
/// least-squares fitted, so a constant phase shift is absorbed and a
/// frequency offset shows up as a ramp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingMetrics {
    /// Intervals between consecutive rising edges.
    pub rising_intervals: Vec<u64>,
    /// RMS of the grid-fitted time interval error.
    pub tie_rms: f64,
    /// Peak-to-peak of the grid-fitted time interval error.
    pub tie_pp: f64,
    /// High fraction of each rising-to-rising cycle.
    pub duty_cycles: Vec<f64>,
    /// Peak-to-peak spread of per-codeword-pattern mean TIE.
    pub ddj_pp: f64,
}

impl TimingMetrics {
    pub fn duty_min(&self) -> f64 {
        self.duty_cycles.iter().cloned().fold(f64::MAX, f64::min)
    }

    pub fn duty_max(&self) -> f64 {
        self.duty_cycles.iter().cloned().fold(f64::MIN, f64::max)
    }
}

fn grid_fit(rising: &[u64], period_ticks: u64) -> (f64, Vec<f64>) {
    // d_k = r_k - k*T; offset = mean(d_k); tie_k = d_k - offset.
    let t = period_ticks as f64;
    let d: Vec<f64> = rising.iter().enumerate().map(|(k, &r)| r as f64 - k as f64 * t).collect();
    let offset = d.iter().sum::<f64>() / d.len() as f64;
    let tie = d.iter().map(|v| v - offset).collect();
    (offset, tie)
}

/// Measure TIE, duty and data-dependent jitter of a CDCM-shaped waveform.
/// `scheme_n` is the slot count used to classify each cycle's codeword
/// pattern for the DDJ figure.
pub fn measure(
    w: &EdgeWaveform,
    period_ticks: u64,
    scheme_n: usize,
) -> Result<TimingMetrics, WaveformError> {
    let rising: Vec<u64> = w.rising_edges().collect();
    if rising.len() < 2 {
        return Err(WaveformError::TooFewEdges);
    }
    let (_, tie) = grid_fit(&rising, period_ticks);
    let tie_rms = (tie.iter().map(|v| v * v).sum::<f64>() / tie.len() as f64).sqrt();
    let tie_pp = tie.iter().cloned().fold(f64::MIN, f64::max)
        - tie.iter().cloned().fold(f64::MAX, f64::min);

    let rising_intervals: Vec<u64> = rising.windows(2).map(|p| p[1] - p[0]).collect();
    let duty_cycles: Vec<f64> = rising
        .windows(2)
        .map(|p| w.high_time(p[0], p[1]) as f64 / (p[1] - p[0]) as f64)
        .collect();

    // DDJ: group each cycle's TIE by the codeword pattern sampled at slot
    // centers; report the spread of per-pattern means. The rising edge sits
    // at the slot 0/1 boundary, so slot i's center is at (i - 0.5) UI
    // relative to it.
    let mut ddj_pp = 0.0;
    if scheme_n >= 2 && scheme_n <= 64 {
        let ui = period_ticks as f64 / scheme_n as f64;
        let mut groups: BTreeMap<u64, (f64, u64)> = BTreeMap::new();
        let mut cursor = SampleCursor::new(w);
        'cycles: for (k, pair) in rising.windows(2).enumerate() {
            let mut pattern = 0u64;
            for i in 0..scheme_n {
                let offs = (i as f64 - 0.5) * ui;
                let t = pair[0] as f64 + offs;
                if t < 0.0 {
                    continue 'cycles;
                }
                let Ok(level) = cursor.level_before(t.round() as u64) else {
                    continue 'cycles;
                };
                pattern = (pattern << 1) | level as u64;
            }
            let e = groups.entry(pattern).or_insert((0.0, 0));
            e.0 += tie[k];
            e.1 += 1;
        }
        if groups.len() > 1 {
            let means: Vec<f64> = groups.values().map(|(s, c)| s / *c as f64).collect();
            ddj_pp = means.iter().cloned().fold(f64::MIN, f64::max)
                - means.iter().cloned().fold(f64::MAX, f64::min);
        }
    }

    Ok(TimingMetrics { rising_intervals, tie_rms, tie_pp, duty_cycles, ddj_pp })
}

/// Transition-density histogram of the waveform folded modulo one period,
/// phase-referenced to the fitted rising-edge grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeHistogram {
    pub period_ticks: u64,
    pub bin_width_ticks: f64,
    /// Rising-transition counts per fold bin.
    pub rising: Vec<u64>,
    /// Falling-transition counts per fold bin.
    pub falling: Vec<u64>,
    /// Longest transition-free span containing the mid-period point, from
    /// exact folded positions (not binned).
    pub opening_ticks: f64,
}

impl EyeHistogram {
    /// CSV matrix: one row per bin, `bin_start_ticks,rising,falling`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_start_ticks,rising,falling\n");
        for (i, (r, f)) in self.rising.iter().zip(&self.falling).enumerate() {
            out.push_str(&format!("{:.1},{r},{f}\n", i as f64 * self.bin_width_ticks));
        }
        out
    }
}

/// Fold the waveform modulo the period and histogram transition positions.
/// `offset_ticks` shifts the fold phase relative to the fitted rising-edge
/// grid.
pub fn eye_histogram(
    w: &EdgeWaveform,
    period_ticks: u64,
    bins: usize,
    offset_ticks: f64,
) -> Result<EyeHistogram, WaveformError> {
    if bins < 8 {
        return Err(WaveformError::BadBins(bins));
    }
    let rising: Vec<u64> = w.rising_edges().collect();
    if rising.len() < 2 {
        return Err(WaveformError::TooFewEdges);
    }
    let (grid_offset, _) = grid_fit(&rising, period_ticks);
    let t = period_ticks as f64;
    let fold = |tt: u64| -> f64 {
        let p = (tt as f64 - grid_offset - offset_ticks) % t;
        if p < 0.0 {
            p + t
        } else {
            p
        }
    };

    let mut hist_r = vec![0u64; bins];
    let mut hist_f = vec![0u64; bins];
    let mut positions: Vec<f64> = Vec::with_capacity(w.edge_count());
    for tt in w.rising_edges() {
        let p = fold(tt);
        positions.push(p);
        hist_r[((p / t * bins as f64) as usize).min(bins - 1)] += 1;
    }
    for tt in w.falling_edges() {
        let p = fold(tt);
        positions.push(p);
        hist_f[((p / t * bins as f64) as usize).min(bins - 1)] += 1;
    }

    // Opening: the span between the last transition at or before mid-period
    // and the first at or after it, wrapping around the fold if one side is
    // empty.
    let mid = t / 2.0;
    let before = positions.iter().cloned().filter(|&p| p <= mid).fold(f64::MIN, f64::max);
    let after = positions.iter().cloned().filter(|&p| p >= mid).fold(f64::MAX, f64::min);
    let lo = if before == f64::MIN {
        positions.iter().cloned().fold(f64::MIN, f64::max) - t
    } else {
        before
    };
    let hi = if after == f64::MAX {
        positions.iter().cloned().fold(f64::MAX, f64::min) + t
    } else {
        after
    };
    let opening_ticks = (hi - lo).max(0.0);

    Ok(EyeHistogram {
        period_ticks,
        bin_width_ticks: t / bins as f64,
        rising: hist_r,
        falling: hist_f,
        opening_ticks,
    })
}
