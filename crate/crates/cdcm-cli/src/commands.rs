//! Command implementations. Each command returns a structured report and
//! optionally writes JSON/CSV artifacts under the output directory; file
//! contents are a pure function of the scenario and seed.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use cdcm::codec::max_efficiency;
use cdcm::netlink::{
    ber_test, receive, run_topology, transmit, BerStats, Histogram, MetricsReport,
    NetlinkError,
};
use cdcm::pll::PllError;
use cdcm::waveform::{eye_histogram, inject_jitter, measure, ticks_per_second};

use crate::scenario::{
    scheme_by_name, Checks, EyeScenario, RoundtripScenario, TopologyScenario,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EfficiencyRow {
    pub n: usize,
    pub q_max: f64,
    pub e_max: f64,
}

/// Best achievable bits-per-cycle and efficiency for n = 3..=n_max.
pub fn cmd_efficiency(n_max: usize) -> Result<Vec<EfficiencyRow>> {
    anyhow::ensure!(n_max >= 3, "n_max must be at least 3");
    (3..=n_max)
        .map(|n| {
            let e = max_efficiency(n)?;
            Ok(EfficiencyRow { n, q_max: ((n - 1) as f64).log2(), e_max: e })
        })
        .collect()
}

pub fn efficiency_csv(rows: &[EfficiencyRow]) -> String {
    let mut out = String::from("n,q_max,e_max\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.n, r.q_max, r.e_max));
    }
    out
}

/// Conformance vectors for a named scheme.
pub fn cmd_vectors(scheme_name: &str) -> Result<String> {
    Ok(scheme_by_name(scheme_name)?.to_csv())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LockSummary {
    pub locked: bool,
    pub lock_time_s: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TimingSummary {
    pub tie_rms_s: f64,
    pub tie_pp_s: f64,
    pub ddj_pp_s: f64,
    pub duty_min: f64,
    pub duty_max: f64,
}

/// One depth of a modulation sweep: the model result, with the reference
/// hardware behavior quoted alongside where it differs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepEntry {
    pub duty_setting: u8,
    pub depth_pct: u8,
    pub locked: bool,
    pub ber: Option<f64>,
    pub bits_checked: Option<u64>,
    pub data_recoverable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hardware_reference: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundtripReport {
    pub name: String,
    pub scheme: String,
    pub period_ticks: u64,
    pub resolution_fs: u64,
    pub f0_hz: f64,
    pub n_bits: u64,
    pub ber: Option<BerStats>,
    pub lock: LockSummary,
    pub timing: Option<TimingSummary>,
    pub sweep: Option<Vec<SweepEntry>>,
    pub check_failures: Vec<String>,
}

fn timing_summary(m: &cdcm::waveform::TimingMetrics, res_fs: u64) -> TimingSummary {
    let to_s = 1.0 / ticks_per_second(res_fs);
    TimingSummary {
        tie_rms_s: m.tie_rms * to_s,
        tie_pp_s: m.tie_pp * to_s,
        ddj_pp_s: m.ddj_pp * to_s,
        duty_min: m.duty_min(),
        duty_max: m.duty_max(),
    }
}

/// Run a transmit/receive scenario (and its duty sweep if configured).
pub fn run_roundtrip(sc: &RoundtripScenario, out_dir: Option<&Path>) -> Result<RoundtripReport> {
    let period = sc.timebase.period()?;
    let res = sc.timebase.resolution_fs;
    let tx = sc.tx_spec()?;
    let rx = sc.rx_spec()?;
    let channel = sc.channel.model(&sc.timebase);

    // Main measurement at the scenario's own duty setting.
    let bpc = tx.bits_per_cycle() as u64;
    let n_cycles = sc.n_bits.div_ceil(bpc) + 6_000;
    let (wave, _sent) = transmit(&tx, n_cycles)?;
    let wave = if channel.is_none() { wave } else { inject_jitter(&wave, &channel)? };

    let (ber, lock, timing) = match receive(&wave, &rx, &tx.scheme) {
        Ok(got) => (
            got.report.ber,
            LockSummary {
                locked: true,
                lock_time_s: got
                    .report
                    .lock_time_ticks
                    .map(|t| t as f64 / ticks_per_second(res)),
            },
            Some(timing_summary(&got.report.timing, res)),
        ),
        Err(NetlinkError::Pll(PllError::NoLock { .. })) => {
            (None, LockSummary { locked: false, lock_time_s: None }, None)
        }
        Err(NetlinkError::SyncFailed { .. }) => (
            None,
            LockSummary { locked: true, lock_time_s: None },
            None,
        ),
        Err(e) => return Err(e.into()),
    };

    let sweep = match &sc.sweep_duty_settings {
        None => None,
        Some(settings) => {
            let mut entries = Vec::new();
            for &step in settings {
                let mut tx_s = tx.clone();
                tx_s.duty_setting = Some(step);
                let entry = sweep_entry(&tx_s, sc, step, &channel)?;
                entries.push(entry);
            }
            Some(entries)
        }
    };

    let mut report = RoundtripReport {
        name: sc.name.clone(),
        scheme: tx.scheme.name(),
        period_ticks: period,
        resolution_fs: res,
        f0_hz: ticks_per_second(res) / period as f64,
        n_bits: sc.n_bits,
        ber,
        lock,
        timing,
        sweep,
        check_failures: vec![],
    };
    report.check_failures = evaluate_roundtrip_checks(&sc.checks, &report);

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(dir.join(format!("{}_report.json", sc.name)), json)?;
    }
    Ok(report)
}

fn sweep_entry(
    tx: &cdcm::netlink::TxSpec,
    sc: &RoundtripScenario,
    step: u8,
    channel: &cdcm::waveform::JitterModel,
) -> Result<SweepEntry> {
    let rx = sc.rx_spec()?;
    let hardware_reference = (step == 9).then(|| {
        "reference hardware failed to lock at +/-45% modulation; \
         this model's rising-edge-only detector locks (model vs hardware)"
            .to_string()
    });
    // Depth 0 transmits the fixed 50% carrier: lock is testable, data is
    // not, so only the PLL outcome is reported.
    if step == 0 {
        let n_cycles = sc.n_bits + 6_000;
        let (wave, _) = transmit(tx, n_cycles)?;
        let wave = if channel.is_none() { wave } else { inject_jitter(&wave, channel)? };
        let locked = match cdcm::pll::pll_run(&wave, &rx.pll) {
            Ok(run) => run.state.locked,
            Err(PllError::NoLock { .. }) => false,
            Err(e) => return Err(e.into()),
        };
        return Ok(SweepEntry {
            duty_setting: 0,
            depth_pct: 0,
            locked,
            ber: None,
            bits_checked: None,
            data_recoverable: false,
            hardware_reference,
        });
    }
    match ber_test(tx, &rx, channel, sc.n_bits) {
        Ok(stats) => Ok(SweepEntry {
            duty_setting: step,
            depth_pct: 5 * step,
            locked: true,
            ber: Some(stats.ber),
            bits_checked: Some(stats.bits_checked),
            data_recoverable: true,
            hardware_reference,
        }),
        Err(NetlinkError::Pll(PllError::NoLock { .. })) => Ok(SweepEntry {
            duty_setting: step,
            depth_pct: 5 * step,
            locked: false,
            ber: None,
            bits_checked: None,
            data_recoverable: false,
            hardware_reference,
        }),
        Err(NetlinkError::SyncFailed { .. }) => Ok(SweepEntry {
            duty_setting: step,
            depth_pct: 5 * step,
            locked: true,
            ber: None,
            bits_checked: None,
            data_recoverable: false,
            hardware_reference,
        }),
        Err(e) => Err(e.into()),
    }
}

fn evaluate_roundtrip_checks(checks: &Checks, report: &RoundtripReport) -> Vec<String> {
    let mut failures = Vec::new();
    if let Some(max_ber) = checks.max_ber {
        match &report.ber {
            Some(stats) if stats.ber <= max_ber => {}
            Some(stats) => {
                failures.push(format!("ber {} exceeds allowed {max_ber}", stats.ber))
            }
            None => failures.push("no BER measured".into()),
        }
    }
    if checks.require_lock == Some(true) && !report.lock.locked {
        failures.push("PLL did not lock".into());
    }
    if let Some(through) = checks.sweep_lock_through {
        match &report.sweep {
            Some(entries) => {
                for e in entries {
                    if e.duty_setting <= through && !e.locked {
                        failures.push(format!(
                            "no lock at duty setting {} (+/-{}%)",
                            e.duty_setting, e.depth_pct
                        ));
                    }
                }
            }
            None => failures.push("sweep_lock_through set but no sweep ran".into()),
        }
    }
    failures
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopologyReport {
    #[serde(flatten)]
    pub metrics: MetricsReport,
    pub check_failures: Vec<String>,
}

/// Run a topology scenario, writing the JSON report plus latency and skew
/// histogram CSVs.
pub fn run_topology_scenario(
    sc: &TopologyScenario,
    out_dir: Option<&Path>,
) -> Result<TopologyReport> {
    let topo = sc.build()?;
    let metrics = run_topology(&topo)?;
    let check_failures = evaluate_topology_checks(&sc.checks, &metrics);
    let report = TopologyReport { metrics, check_failures };

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(dir.join(format!("{}_report.json", sc.name)), json)?;
        for p in &report.metrics.points {
            let safe = p.point.replace(':', "_");
            fs::write(
                dir.join(format!("{}_{}_latency_hist.csv", sc.name, safe)),
                p.latency_histogram.to_csv(),
            )?;
        }
        if let Some(skew) = &report.metrics.skew {
            fs::write(
                dir.join(format!("{}_skew_hist.csv", sc.name)),
                skew.histogram.to_csv(),
            )?;
        }
    }
    Ok(report)
}

fn evaluate_topology_checks(checks: &Checks, m: &MetricsReport) -> Vec<String> {
    let mut failures = Vec::new();
    let to_s = 1.0 / ticks_per_second(m.resolution_fs);
    if let Some(max_skew) = checks.max_leaf_skew_rms_s {
        match &m.skew {
            Some(s) if s.rms_ticks * to_s <= max_skew => {}
            Some(s) => failures.push(format!(
                "leaf skew rms {} s exceeds {max_skew} s",
                s.rms_ticks * to_s
            )),
            None => failures.push("skew check configured but no skew pair".into()),
        }
    }
    if let Some([lo, hi]) = checks.leaf_skew_rms_between_s {
        match &m.skew {
            Some(s) => {
                let rms = s.rms_ticks * to_s;
                if rms < lo || rms > hi {
                    failures.push(format!("leaf skew rms {rms} s outside [{lo}, {hi}] s"));
                }
            }
            None => failures.push("skew check configured but no skew pair".into()),
        }
    }
    for p in &m.points {
        if checks.latency_zero_variance == Some(true) {
            if p.latency_std_ticks != 0.0 {
                failures.push(format!("{}: latency variance nonzero", p.point));
            }
            if p.latency_per_run_ticks.windows(2).any(|w| w[0] != w[1]) {
                failures.push(format!("{}: latency differs across runs", p.point));
            }
        }
        if let Some(expect) = checks.expected_latency_s {
            let got = p.latency_mean_ticks * to_s;
            if (got - expect).abs() > 0.5 * to_s {
                failures.push(format!(
                    "{}: latency {got} s != expected {expect} s",
                    p.point
                ));
            }
        }
    }
    failures
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EyeReport {
    pub name: String,
    pub scheme: String,
    pub period_ticks: u64,
    pub resolution_fs: u64,
    pub opening_s: f64,
    pub opening_ticks: f64,
    pub bins: usize,
}

/// Fold a transmitted stream into an eye histogram.
pub fn run_eye(sc: &EyeScenario, out_dir: Option<&Path>) -> Result<EyeReport> {
    let period = sc.timebase.period()?;
    let res = sc.timebase.resolution_fs;
    let tx = cdcm::netlink::TxSpec {
        scheme: sc.scheme.build()?,
        period_ticks: period,
        resolution_fs: res,
        pre_encoder: sc.pre_encoder,
        data_source: sc.data_source.clone(),
        duty_setting: sc.duty_setting,
    };
    let (wave, _) = transmit(&tx, sc.n_cycles)?;
    let channel = sc.channel.model(&sc.timebase);
    let wave = if channel.is_none() { wave } else { inject_jitter(&wave, &channel)? };
    let eye = eye_histogram(&wave, period, sc.bins, 0.0)?;
    let report = EyeReport {
        name: sc.name.clone(),
        scheme: tx.scheme.name(),
        period_ticks: period,
        resolution_fs: res,
        opening_s: eye.opening_ticks / ticks_per_second(res),
        opening_ticks: eye.opening_ticks,
        bins: sc.bins,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}_eye.csv", sc.name)), eye.to_csv())?;
        let json = serde_json::to_string_pretty(&report)?;
        fs::write(dir.join(format!("{}_report.json", sc.name)), json)?;
    }
    Ok(report)
}

/// Duty histogram helper used by the roundtrip CSV artifacts.
pub fn duty_histogram_csv(wave: &cdcm::waveform::EdgeWaveform, period: u64, n: usize) -> Result<String> {
    let m = measure(wave, period, n)?;
    Ok(Histogram::from_values(&m.duty_cycles, 50).to_csv())
}

pub fn load_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}
