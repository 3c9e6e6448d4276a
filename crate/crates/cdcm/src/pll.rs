//! Behavioral phase-locked loop that locks to the rising edges of a CDCM
//! stream.
//!
//! The loop is a discrete-time type-II PI controller updated once per
//! detected (pre-divided) rising edge. Falling edges never enter the loop,
//! which is what makes the recovered clock independent of duty-cycle
//! modulation. The NCO runs at `multiplier * f0` with a divided feedback at
//! the carrier rate; comparing the input against that feedback gives
//! zero-delay alignment of the output to the input.
//!
//! Loop gains are normalized per-update quantities. [`gains_for_bandwidth`]
//! maps a target bandwidth fraction (bw/f0) and damping to (kp, ki) via the
//! standard second-order approximation, which keeps desk-scale runs short:
//! a hardware-style 100 Hz loop at 125 MHz would need millions of cycles to
//! settle.

use serde::{Deserialize, Serialize};

use crate::waveform::{ticks_per_second, EdgeWaveform, WaveformError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PllError {
    /// Lock was not achieved within the input duration.
    #[error("PLL failed to lock within the input ({updates} updates, min |error| {min_abs_error:.1} ticks)")]
    NoLock { updates: usize, min_abs_error: f64 },
    /// Mean input rate outside the +/-1% capture range.
    #[error("input rate off nominal by {off_ppm:.0} ppm, outside +/-1% capture range")]
    CaptureRange { off_ppm: f64 },
    /// Not enough rising edges to run the detector.
    #[error("input has too few rising edges for the detector")]
    TooFewEdges,
    #[error(transparent)]
    Waveform(#[from] WaveformError),
}

/// Loop configuration. All times in ticks of the input waveform's timebase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PllConfig {
    /// Compare every R-th input rising edge (R >= 1).
    pub pre_divider: u32,
    /// Output frequency is `multiplier * f0`.
    pub multiplier: u32,
    /// Proportional gain per update (normalized).
    pub kp: f64,
    /// Integral gain per update (normalized).
    pub ki: f64,
    /// Nominal carrier period in ticks.
    pub nominal_period_ticks: f64,
    /// Phase of the secondary sampling output, as a fraction of the output
    /// period (0.5 is the theoretical mid-period choice; 135/360 models a
    /// receiver with unequal clock and data path delays).
    pub phase_offset: f64,
    /// Compare input against the (externally looped-back) output so the
    /// locked output aligns to the input.
    pub zero_delay: bool,
    /// Constant feedback-path delay compensated by zero-delay operation.
    pub feedback_delay_ticks: f64,
    /// Lock declared after `lock_count` consecutive errors below this.
    pub lock_threshold_ticks: f64,
    pub lock_count: u32,
    /// Keep the per-update phase error trace (sizeable for long runs).
    pub record_trace: bool,
    /// Also synthesize the phase-shifted sampling clock waveform.
    pub emit_sample_clock: bool,
}

impl PllConfig {
    /// Narrow-band defaults: bw/f0 = 1e-3 at critical-ish damping.
    pub fn for_period(nominal_period_ticks: f64) -> Self {
        let (kp, ki) = gains_for_bandwidth(1e-3, std::f64::consts::FRAC_1_SQRT_2, 1);
        PllConfig {
            pre_divider: 1,
            multiplier: 1,
            kp,
            ki,
            nominal_period_ticks,
            phase_offset: 0.5,
            zero_delay: true,
            feedback_delay_ticks: 0.0,
            lock_threshold_ticks: 0.05 * nominal_period_ticks,
            lock_count: 64,
            record_trace: true,
            emit_sample_clock: false,
        }
    }

    pub fn with_bandwidth(mut self, bw_fraction: f64, damping: f64) -> Self {
        let (kp, ki) = gains_for_bandwidth(bw_fraction, damping, self.pre_divider);
        self.kp = kp;
        self.ki = ki;
        self
    }
}

/// Map a closed-loop -3 dB bandwidth (as a fraction of the carrier f0) and
/// damping to per-update PI gains for pre-divider `r`.
///
/// Second-order approximation: the update-rate-normalized natural frequency
/// is wn*Tu with Tu = r*T, and w3dB = wn*sqrt(1 + 2z^2 + sqrt((1+2z^2)^2+1)).
pub fn gains_for_bandwidth(bw_fraction: f64, damping: f64, r: u32) -> (f64, f64) {
    let z = damping;
    let kappa = (1.0 + 2.0 * z * z + ((1.0 + 2.0 * z * z).powi(2) + 1.0).sqrt()).sqrt();
    let wn_t = std::f64::consts::TAU * bw_fraction / kappa; // wn * T
    let r = r as f64;
    // wn^2 = r*ki / Tu^2 and 2*z*wn = r*(kp+ki)/Tu with Tu = r*T.
    let ki = r * wn_t * wn_t;
    let kp = 2.0 * z * wn_t - ki;
    (kp / r, ki / r)
}

/// Loop state after a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PllState {
    /// NCO phase at the end of the run, in feedback (carrier) cycles.
    pub nco_phase: f64,
    /// NCO output frequency at the end of the run.
    pub nco_freq_hz: f64,
    /// Accumulated fractional frequency correction.
    pub integrator: f64,
    pub locked: bool,
    /// Input tick time at which lock was declared.
    pub lock_time: Option<u64>,
    /// Detector updates processed.
    pub updates: usize,
    /// Per-update phase error (input edge minus feedback edge, ticks),
    /// empty unless `record_trace`.
    pub phase_error_trace: Vec<f64>,
}

impl PllState {
    /// CSV export of the error trace: `update_index,error_ticks`.
    pub fn trace_csv(&self) -> String {
        let mut out = String::from("update_index,error_ticks\n");
        for (i, e) in self.phase_error_trace.iter().enumerate() {
            out.push_str(&format!("{i},{e}\n"));
        }
        out
    }
}

/// Result of a PLL run: the recovered clock at `multiplier * f0`, the
/// optional phase-shifted sampling clock, and the final loop state.
#[derive(Debug, Clone, PartialEq)]
pub struct PllRun {
    pub clock: EdgeWaveform,
    pub sample_clock: Option<EdgeWaveform>,
    pub state: PllState,
}

/// Emits square-wave edges at NCO phase crossings. `phase_offset` is in
/// output periods; edge q of the output lands at phase (q/2 + off)/M.
struct EdgeEmitter {
    per_m: f64,
    offset: f64,
    q: u64,
    edges: Vec<u64>,
    last: Option<u64>,
}

impl EdgeEmitter {
    fn new(multiplier: u32, phase_offset: f64) -> Self {
        EdgeEmitter {
            per_m: 1.0 / multiplier as f64,
            offset: phase_offset,
            q: 0,
            edges: Vec::new(),
            last: None,
        }
    }

    /// Emit all edges with phase target <= theta_end, where phase advances
    /// from (t_ref, theta) at `freq` cycles per tick.
    fn emit_upto(&mut self, t_ref: f64, theta: f64, freq: f64, theta_end: f64, t_max: f64) {
        loop {
            let target = (0.5 * self.q as f64 + self.offset) * self.per_m;
            if target > theta_end {
                break;
            }
            let t = t_ref + (target - theta) / freq;
            if t >= 0.0 && t <= t_max {
                let tick = t.round() as u64;
                // Crossings are strictly ordered; equal ticks can only come
                // from sub-tick rounding of adjacent crossings.
                if self.last != Some(tick) {
                    self.edges.push(tick);
                    self.last = Some(tick);
                }
            }
            self.q += 1;
        }
    }
}

/// Run the loop over an input waveform.
///
/// The phase detector fires on every `pre_divider`-th rising edge only; the
/// error is the time from the nearest feedback edge (the output divided by
/// `multiplier`, plus the compensated feedback delay in zero-delay mode) to
/// that input edge.
pub fn pll_run(input: &EdgeWaveform, cfg: &PllConfig) -> Result<PllRun, PllError> {
    let rising: Vec<u64> = input.rising_edges().collect();
    if rising.len() < 2 || rising.len() < cfg.pre_divider as usize {
        return Err(PllError::TooFewEdges);
    }
    let t_nom = cfg.nominal_period_ticks;
    let span = (rising[rising.len() - 1] - rising[0]) as f64;
    let mean_period = span / (rising.len() - 1) as f64;
    let off = mean_period / t_nom - 1.0;
    if off.abs() > 0.01 {
        return Err(PllError::CaptureRange { off_ppm: off * 1e6 });
    }

    let r = cfg.pre_divider.max(1) as usize;
    let sat = 0.5 * t_nom / r as f64;
    let fb_delay = if cfg.zero_delay { cfg.feedback_delay_ticks } else { 0.0 };
    let duration = input.duration() as f64;

    let mut main = EdgeEmitter::new(cfg.multiplier, 0.0);
    let mut samp =
        cfg.emit_sample_clock.then(|| EdgeEmitter::new(cfg.multiplier, cfg.phase_offset));

    let mut theta = 0.0f64;
    let mut t_ref = 0.0f64;
    let mut freq = 1.0 / t_nom;
    let mut integ = 0.0f64;
    let mut trace = Vec::new();
    let mut locked = false;
    let mut lock_time = None;
    let mut streak = 0u32;
    let mut updates = 0usize;
    let mut min_abs_error = f64::MAX;

    for &edge in rising.iter().step_by(r) {
        let t_in = edge as f64;
        // Synthesize output edges over the elapsed window at the old rate.
        let theta_in = theta + freq * (t_in - t_ref);
        main.emit_upto(t_ref, theta, freq, theta_in, duration);
        if let Some(s) = samp.as_mut() {
            s.emit_upto(t_ref, theta, freq, theta_in, duration);
        }

        // Nearest feedback edge (integer NCO phase) to this input edge.
        let nearest = theta_in.round();
        let t_fb = t_ref + (nearest - theta) / freq + fb_delay;
        let lateness = t_fb - t_in;
        let error = -lateness; // input minus feedback
        if cfg.record_trace {
            trace.push(error);
        }
        min_abs_error = min_abs_error.min(error.abs());
        updates += 1;

        if error.abs() < cfg.lock_threshold_ticks {
            streak += 1;
            if streak >= cfg.lock_count && !locked {
                locked = true;
                lock_time = Some(edge);
            }
        } else {
            streak = 0;
        }

        let eps = lateness.clamp(-sat, sat) / t_nom;
        integ += cfg.ki * eps;
        let y = (cfg.kp * eps + integ).clamp(-0.5, 0.5); // NCO pull range
        theta = theta_in;
        t_ref = t_in;
        freq = (1.0 + y) / t_nom;
    }

    // Free-run to the end of the input at the last commanded rate.
    let theta_end = theta + freq * (duration - t_ref);
    main.emit_upto(t_ref, theta, freq, theta_end, duration);
    if let Some(s) = samp.as_mut() {
        s.emit_upto(t_ref, theta, freq, theta_end, duration);
    }

    if !locked {
        return Err(PllError::NoLock { updates, min_abs_error });
    }

    let clock = EdgeWaveform::new(false, main.edges, input.duration(), input.resolution_fs())?;
    let sample_clock = match samp {
        Some(s) => {
            Some(EdgeWaveform::new(false, s.edges, input.duration(), input.resolution_fs())?)
        }
        None => None,
    };
    let state = PllState {
        nco_phase: theta_end,
        nco_freq_hz: freq * cfg.multiplier as f64 * ticks_per_second(input.resolution_fs()),
        integrator: integ,
        locked,
        lock_time,
        updates,
        phase_error_trace: trace,
    };
    Ok(PllRun { clock, sample_clock, state })
}

/// Jitter transfer gain at one modulation frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterTransfer {
    /// Output/input sinusoidal TIE amplitude ratio.
    pub gain: f64,
    pub input_amplitude_ticks: f64,
    pub output_amplitude_ticks: f64,
    /// False when there was no stimulus to measure (zero amplitude).
    pub defined: bool,
}

/// Drive the loop with an ideal carrier carrying sinusoidal edge jitter at
/// `mod_period_ticks`, then fit the output TIE sinusoid and report the
/// amplitude ratio. The first half of the run is discarded as settling.
pub fn jitter_transfer(
    cfg: &PllConfig,
    mod_period_ticks: f64,
    amplitude_ticks: f64,
    cycles: u64,
    resolution_fs: u64,
) -> Result<JitterTransfer, PllError> {
    if amplitude_ticks == 0.0 {
        return Ok(JitterTransfer {
            gain: 0.0,
            input_amplitude_ticks: 0.0,
            output_amplitude_ticks: 0.0,
            defined: false,
        });
    }
    let period = cfg.nominal_period_ticks.round() as u64;
    let carrier = crate::waveform::square_wave(period, cycles, 0, resolution_fs);
    let jittered = crate::waveform::inject_jitter(
        &carrier,
        &crate::waveform::JitterModel::sinusoidal(amplitude_ticks, mod_period_ticks),
    )?;
    let run = pll_run(&jittered, cfg)?;

    let rising: Vec<u64> = run.clock.rising_edges().collect();
    let tail = &rising[rising.len() / 2..];
    let out_amp = fit_sine_amplitude(tail, period, mod_period_ticks);
    Ok(JitterTransfer {
        gain: out_amp / amplitude_ticks,
        input_amplitude_ticks: amplitude_ticks,
        output_amplitude_ticks: out_amp,
        defined: true,
    })
}

/// Least-squares amplitude of a sinusoid at the given period in the TIE of
/// `rising` against an ideal grid (offset fitted).
fn fit_sine_amplitude(rising: &[u64], grid_period: u64, mod_period_ticks: f64) -> f64 {
    let t = grid_period as f64;
    let omega = std::f64::consts::TAU / mod_period_ticks;
    let d: Vec<f64> = rising.iter().enumerate().map(|(k, &r)| r as f64 - k as f64 * t).collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;

    // Solve min over (a, b): sum (d_k - mean - a sin - b cos)^2.
    let (mut ss, mut sc, mut cc, mut sy, mut cy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, &r) in rising.iter().enumerate() {
        let y = d[k] - mean;
        let (s, c) = (omega * r as f64).sin_cos();
        ss += s * s;
        sc += s * c;
        cc += c * c;
        sy += s * y;
        cy += c * y;
    }
    let det = ss * cc - sc * sc;
    if det.abs() < 1e-12 {
        return 0.0;
    }
    let a = (sy * cc - cy * sc) / det;
    let b = (cy * ss - sy * sc) / det;
    (a * a + b * b).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{make_general_unary, Symbol};
    use crate::stream::Prbs15;
    use crate::waveform::{serialize_words, square_wave};

    const T: f64 = 8000.0; // 125 MHz at 1 ps per tick
    const RES: u64 = 1000;

    fn cdcm_stream(n: usize, values: &[u32], period: u64) -> EdgeWaveform {
        let s = make_general_unary(n, n - 2).unwrap();
        let words: Vec<_> =
            values.iter().map(|&v| s.encode_cycle(Symbol::Data(v)).unwrap().clone()).collect();
        serialize_words(words.iter(), period, RES).unwrap()
    }

    /// Independent discrete-time recurrence for the same loop: feeds the
    /// deviation of each detected edge from the ideal grid and returns the
    /// per-update error trace the loop should see (first-order model).
    fn oracle_trace(deviations: &[f64], t_nom: f64, r: u32, kp: f64, ki: f64) -> Vec<f64> {
        let sat = 0.5 * t_nom / r as f64;
        let mut phi = 0.0f64;
        let mut integ = 0.0f64;
        let mut out = Vec::with_capacity(deviations.len());
        for &d in deviations {
            let lateness = phi - d;
            out.push(-lateness);
            let eps = lateness.clamp(-sat, sat) / t_nom;
            integ += ki * eps;
            let y = kp * eps + integ;
            phi -= y * r as f64 * t_nom;
        }
        out
    }

    #[test]
    fn locks_to_ideal_stream_and_aligns() {
        let mut prbs = Prbs15::new();
        let bits: Vec<u32> = prbs.take_bits(20_000).iter().map(|&b| b as u32).collect();
        let input = cdcm_stream(3, &bits, T as u64);
        let cfg = PllConfig::for_period(T);
        let run = pll_run(&input, &cfg).unwrap();
        assert!(run.state.locked);

        // After settling, output rising edges coincide with input rising
        // edges to within one tick (zero-delay alignment).
        let in_edges: Vec<u64> = input.rising_edges().collect();
        let out_edges: Vec<u64> = run.clock.rising_edges().collect();
        for &ie in &in_edges[15_000..19_900] {
            let nearest =
                out_edges.iter().map(|&oe| (oe as i64 - ie as i64).abs()).min().unwrap();
            assert!(nearest <= 1, "edge at {ie} misaligned by {nearest}");
        }
    }

    #[test]
    fn modulation_invisible_to_detector() {
        // Same rising-edge timing, different duty: bitwise-identical runs.
        let n = 20;
        let scheme = make_general_unary(n, n - 2).unwrap();
        let mut prbs = Prbs15::new();
        let bits = prbs.take_bits(5_000);
        let flat: Vec<_> =
            bits.iter().map(|_| scheme.encode_cycle(Symbol::Data(9)).unwrap().clone()).collect();
        let deep: Vec<_> = bits
            .iter()
            .map(|&b| scheme.encode_cycle(Symbol::Data(if b { 17 } else { 1 })).unwrap().clone())
            .collect();
        let w_flat = serialize_words(flat.iter(), T as u64, RES).unwrap();
        let w_deep = serialize_words(deep.iter(), T as u64, RES).unwrap();
        let cfg = PllConfig::for_period(T);
        let run_flat = pll_run(&w_flat, &cfg).unwrap();
        let run_deep = pll_run(&w_deep, &cfg).unwrap();
        assert_eq!(run_flat.clock, run_deep.clock);
        assert_eq!(run_flat.state.phase_error_trace, run_deep.state.phase_error_trace);
    }

    #[test]
    fn trace_matches_recurrence_oracle_on_phase_step() {
        // Clock with a constant phase step midway; the implementation's
        // error trace must follow the first-order loop recurrence.
        let cycles = 6_000u64;
        let step_at = 3_000u64;
        let delta = 400u64;
        let period = T as u64;
        let mut edges = Vec::new();
        for c in 0..cycles {
            let shift = if c >= step_at { delta } else { 0 };
            edges.push(c * period + shift);
            edges.push(c * period + period / 2 + shift);
        }
        let input = EdgeWaveform::new(false, edges, cycles * period + delta, RES).unwrap();
        let cfg = PllConfig::for_period(T);
        let run = pll_run(&input, &cfg).unwrap();

        let deviations: Vec<f64> =
            input.rising_edges().enumerate().map(|(k, r)| r as f64 - k as f64 * T).collect();
        let oracle = oracle_trace(&deviations, T, 1, cfg.kp, cfg.ki);
        assert_eq!(run.state.phase_error_trace.len(), oracle.len());
        for (i, (a, b)) in run.state.phase_error_trace.iter().zip(&oracle).enumerate() {
            assert!(
                (a - b).abs() <= 0.005 * delta as f64 + 0.01,
                "update {i}: impl {a} vs oracle {b}"
            );
        }
        // The output converges onto the stepped grid.
        let out: Vec<u64> = run.clock.rising_edges().collect();
        let last = out[out.len() - 2];
        let residual = (last as f64 - T * (last as f64 / T).round() - delta as f64).abs();
        assert!(residual < 2.0, "output did not converge to the step: {residual}");
    }

    #[test]
    fn settling_shrinks_with_kp() {
        let period = T as u64;
        let delta = 400u64;
        let mk_input = || {
            let mut edges = Vec::new();
            for c in 0..4000u64 {
                let shift = if c >= 1000 { delta } else { 0 };
                edges.push(c * period + shift);
                edges.push(c * period + period / 2 + shift);
            }
            EdgeWaveform::new(false, edges, 4000 * period + delta, RES).unwrap()
        };
        let settle = |kp_scale: f64| {
            let mut cfg = PllConfig::for_period(T);
            cfg.kp *= kp_scale;
            let run = pll_run(&mk_input(), &cfg).unwrap();
            let trace = &run.state.phase_error_trace;
            // Last update where the error still exceeded 5% of the step.
            let tol = 0.05 * delta as f64;
            let mut settled = 1000;
            for i in (1000..trace.len()).rev() {
                if trace[i].abs() > tol {
                    settled = i + 1;
                    break;
                }
            }
            settled - 1000
        };
        let slow = settle(1.0);
        let fast = settle(3.0);
        assert!(fast < slow, "kp x3 settled in {fast} vs {slow}");
    }

    #[test]
    fn capture_range_enforced() {
        let off_period = (T * 1.02) as u64;
        let input = square_wave(off_period, 2000, 0, RES);
        let cfg = PllConfig::for_period(T);
        assert!(matches!(pll_run(&input, &cfg), Err(PllError::CaptureRange { .. })));
    }

    #[test]
    fn no_lock_on_short_input() {
        let input = square_wave(T as u64, 20, 0, RES);
        let cfg = PllConfig::for_period(T); // lock_count 64 > 20 updates
        assert!(matches!(pll_run(&input, &cfg), Err(PllError::NoLock { .. })));
    }

    #[test]
    fn too_few_edges() {
        let input = EdgeWaveform::new(false, vec![100], 10_000, RES).unwrap();
        let cfg = PllConfig::for_period(T);
        assert!(matches!(pll_run(&input, &cfg), Err(PllError::TooFewEdges)));
    }

    #[test]
    fn zero_delay_alignment_with_offset_input() {
        let input = square_wave(T as u64, 8_000, 137, RES);
        let cfg = PllConfig::for_period(T);
        let run = pll_run(&input, &cfg).unwrap();
        let ins: Vec<u64> = input.rising_edges().collect();
        let outs: Vec<u64> = run.clock.rising_edges().collect();
        for &ie in &ins[7_000..7_900] {
            let nearest = outs.iter().map(|&oe| (oe as i64 - ie as i64).abs()).min().unwrap();
            assert!(nearest <= 1);
        }
    }

    #[test]
    fn sample_clock_phase_offset() {
        let input = square_wave(T as u64, 6_000, 0, RES);
        let mut cfg = PllConfig::for_period(T);
        cfg.emit_sample_clock = true;
        cfg.phase_offset = 0.5;
        let run = pll_run(&input, &cfg).unwrap();
        let clk: Vec<u64> = run.clock.rising_edges().collect();
        let smp: Vec<u64> = run.sample_clock.as_ref().unwrap().rising_edges().collect();
        // In steady state the sampling clock rises half a period after the
        // main output.
        for &m in &clk[clk.len() - 100..clk.len() - 1] {
            let target = m + (T as u64) / 2;
            let nearest = smp.iter().map(|&s| (s as i64 - target as i64).abs()).min().unwrap();
            assert!(nearest <= 1, "sampling edge missing near {target}");
        }
    }

    #[test]
    fn multiplied_output_rate() {
        let input = square_wave(T as u64, 4_000, 0, RES);
        let mut cfg = PllConfig::for_period(T);
        cfg.multiplier = 3;
        let run = pll_run(&input, &cfg).unwrap();
        let rising: Vec<u64> = run.clock.rising_edges().collect();
        // Steady state: three output rises per input period.
        let tail = &rising[rising.len() - 301..];
        let span = (tail[300] - tail[0]) as f64;
        let mean = span / 300.0;
        assert!((mean - T / 3.0).abs() < 1.0, "mean output period {mean}");
    }

    #[test]
    fn jitter_transfer_passband_and_stopband() {
        let cfg = PllConfig::for_period(T); // bw = 1e-3 * f0
        // Far below the loop bandwidth: passes through.
        let low = jitter_transfer(&cfg, T * 20_000.0, 200.0, 120_000, RES).unwrap();
        assert!(low.defined);
        assert!((low.gain - 1.0).abs() <= 0.05, "low-frequency gain {}", low.gain);
        // Two decades above: strongly attenuated.
        let high = jitter_transfer(&cfg, T * 10.0, 200.0, 40_000, RES).unwrap();
        assert!(high.gain <= 0.1, "stop-band gain {}", high.gain);
        // No stimulus: flagged undefined.
        let none = jitter_transfer(&cfg, T * 10.0, 0.0, 1_000, RES).unwrap();
        assert!(!none.defined);
        assert_eq!(none.gain, 0.0);
    }

    #[test]
    fn deterministic_across_runs() {
        let mut prbs = Prbs15::new();
        let bits: Vec<u32> = prbs.take_bits(6_000).iter().map(|&b| b as u32).collect();
        let input = cdcm_stream(3, &bits, T as u64);
        let cfg = PllConfig::for_period(T);
        let a = pll_run(&input, &cfg).unwrap();
        let b = pll_run(&input, &cfg).unwrap();
        assert_eq!(a.clock, b.clock);
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn bounded_error_under_bounded_jitter() {
        let mut prbs = Prbs15::new();
        let bits: Vec<u32> = prbs.take_bits(30_000).iter().map(|&b| b as u32).collect();
        let input = cdcm_stream(3, &bits, T as u64);
        let jittered = crate::waveform::inject_jitter(
            &input,
            &crate::waveform::JitterModel::gaussian(0.02 * T, 5),
        )
        .unwrap();
        let cfg = PllConfig::for_period(T);
        let run = pll_run(&jittered, &cfg).unwrap();
        // Past the pull-in transient the error stays bounded well inside a
        // few sigma of the injected jitter.
        let max_err = run.state.phase_error_trace[10_000..]
            .iter()
            .map(|e| e.abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 0.25 * T, "error grew to {max_err}");
    }
}
