//! Scenario file schemas. Scenarios use SI units (seconds, Hz) and are
//! converted to integer ticks when the simulation is built; either `f0_hz`
//! or `period_ticks` fixes the carrier, with explicit ticks winning so a
//! run file can pin the slot grid exactly.

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use cdcm::codec::{
    make_general_unary, make_minimal_distortion, make_sparse20, make_ternary4, Scheme,
};
use cdcm::netlink::{
    Checker, DataSource, Extraction, FanoutMode, FanoutSpec, Link, Node, NodeKind, PortRef,
    PreEncoder, RxSpec, Topology, TxSpec,
};
use cdcm::pll::{gains_for_bandwidth, PllConfig};
use cdcm::waveform::{ticks_per_second, JitterModel};

/// Scheme selector in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SchemeSpec {
    GeneralUnary { n: usize, p: usize },
    MinimalDistortion { n: usize },
    Ternary4,
    Sparse20,
}

impl SchemeSpec {
    pub fn build(&self) -> Result<Scheme> {
        Ok(match self {
            SchemeSpec::GeneralUnary { n, p } => make_general_unary(*n, *p)?,
            SchemeSpec::MinimalDistortion { n } => make_minimal_distortion(*n)?,
            SchemeSpec::Ternary4 => make_ternary4(),
            SchemeSpec::Sparse20 => make_sparse20(),
        })
    }
}

/// Parse a scheme name like `cdcm-3-1`, `cdcm-5-2`, `cdcm-4-1.5`,
/// `cdcm-20-1.5` or `cdcm-16-1`. `cdcm-N-1` names resolve to the
/// minimal-distortion family.
pub fn scheme_by_name(name: &str) -> Result<Scheme> {
    let lowered = name.trim().to_lowercase();
    let parts: Vec<&str> = lowered.split('-').map(str::trim).collect();
    if parts.len() != 3 || parts[0] != "cdcm" {
        bail!("unrecognized scheme name '{name}' (expected cdcm-N-Q)");
    }
    let n: usize = parts[1].parse().with_context(|| format!("bad slot count in '{name}'"))?;
    match (n, parts[2]) {
        (4, "1.5") => Ok(make_ternary4()),
        (20, "1.5") => Ok(make_sparse20()),
        (_, "1") => Ok(make_minimal_distortion(n)?),
        (_, q) => {
            let q: u32 = q.parse().with_context(|| format!("bad bit count in '{name}'"))?;
            let p = (1usize << q) - 1;
            Ok(make_general_unary(n, p)?)
        }
    }
}

/// Carrier timebase shared by all scenarios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timebase {
    #[serde(default)]
    pub f0_hz: Option<f64>,
    #[serde(default)]
    pub period_ticks: Option<u64>,
    #[serde(default = "default_resolution")]
    pub resolution_fs: u64,
}

fn default_resolution() -> u64 {
    1000
}

impl Timebase {
    pub fn period(&self) -> Result<u64> {
        if let Some(p) = self.period_ticks {
            return Ok(p);
        }
        Ok(match self.f0_hz {
            Some(f0) if f0 > 0.0 => (ticks_per_second(self.resolution_fs) / f0).round() as u64,
            _ => bail!("scenario needs f0_hz > 0 or period_ticks"),
        })
    }

    pub fn seconds_to_ticks(&self, s: f64) -> f64 {
        s * ticks_per_second(self.resolution_fs)
    }

    pub fn ticks_to_seconds(&self, t: f64) -> f64 {
        t / ticks_per_second(self.resolution_fs)
    }
}

/// Channel jitter in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ChannelSpec {
    #[serde(default)]
    pub sigma_s: f64,
    #[serde(default)]
    pub periodic_amplitude_s: f64,
    #[serde(default)]
    pub periodic_frequency_hz: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ChannelSpec {
    pub fn model(&self, tb: &Timebase) -> JitterModel {
        let tps = ticks_per_second(tb.resolution_fs);
        JitterModel {
            sigma_ticks: self.sigma_s * tps,
            periodic_amplitude_ticks: self.periodic_amplitude_s * tps,
            periodic_period_ticks: if self.periodic_frequency_hz > 0.0 {
                tps / self.periodic_frequency_hz
            } else {
                0.0
            },
            seed: self.seed,
        }
    }
}

/// Loop configuration in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PllSpec {
    #[serde(default = "default_bw")]
    pub bandwidth_frac: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
    #[serde(default = "default_one")]
    pub pre_divider: u32,
    /// Direct gain overrides; both must be present to take effect.
    #[serde(default)]
    pub kp: Option<f64>,
    #[serde(default)]
    pub ki: Option<f64>,
    #[serde(default = "default_lock_frac")]
    pub lock_threshold_fraction: f64,
    #[serde(default = "default_lock_count")]
    pub lock_count: u32,
    #[serde(default)]
    pub record_trace: bool,
}

fn default_bw() -> f64 {
    1e-3
}
fn default_damping() -> f64 {
    std::f64::consts::FRAC_1_SQRT_2
}
fn default_one() -> u32 {
    1
}
fn default_lock_frac() -> f64 {
    0.05
}
fn default_lock_count() -> u32 {
    64
}

impl Default for PllSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults")
    }
}

impl PllSpec {
    pub fn build(&self, period_ticks: u64) -> PllConfig {
        let mut cfg = PllConfig::for_period(period_ticks as f64);
        cfg.pre_divider = self.pre_divider;
        let (kp, ki) = gains_for_bandwidth(self.bandwidth_frac, self.damping, self.pre_divider);
        cfg.kp = kp;
        cfg.ki = ki;
        if let (Some(kp), Some(ki)) = (self.kp, self.ki) {
            cfg.kp = kp;
            cfg.ki = ki;
        }
        cfg.lock_threshold_ticks = self.lock_threshold_fraction * period_ticks as f64;
        cfg.lock_count = self.lock_count;
        cfg.record_trace = self.record_trace;
        cfg
    }
}

/// Pass/fail thresholds evaluated with `--check`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Checks {
    #[serde(default)]
    pub max_ber: Option<f64>,
    #[serde(default)]
    pub require_lock: Option<bool>,
    /// Sweep runs: every duty setting up to and including this must lock.
    #[serde(default)]
    pub sweep_lock_through: Option<u8>,
    #[serde(default)]
    pub max_leaf_skew_rms_s: Option<f64>,
    #[serde(default)]
    pub leaf_skew_rms_between_s: Option<[f64; 2]>,
    #[serde(default)]
    pub expected_latency_s: Option<f64>,
    #[serde(default)]
    pub latency_zero_variance: Option<bool>,
}

/// One transmit/receive experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundtripScenario {
    pub name: String,
    pub scheme: SchemeSpec,
    #[serde(flatten)]
    pub timebase: Timebase,
    #[serde(default)]
    pub pre_encoder: PreEncoder,
    pub data_source: DataSource,
    #[serde(default)]
    pub duty_setting: Option<u8>,
    pub n_bits: u64,
    #[serde(default)]
    pub channel: ChannelSpec,
    #[serde(default)]
    pub pll: PllSpec,
    #[serde(default = "default_sample_phase")]
    pub sample_phase: f64,
    /// When present, repeat the run at each listed duty setting and report
    /// lock and BER per depth.
    #[serde(default)]
    pub sweep_duty_settings: Option<Vec<u8>>,
    #[serde(default)]
    pub checks: Checks,
}

fn default_sample_phase() -> f64 {
    0.5
}

impl RoundtripScenario {
    pub fn tx_spec(&self) -> Result<TxSpec> {
        Ok(TxSpec {
            scheme: self.scheme.build()?,
            period_ticks: self.timebase.period()?,
            resolution_fs: self.timebase.resolution_fs,
            pre_encoder: self.pre_encoder,
            data_source: self.data_source.clone(),
            duty_setting: self.duty_setting,
        })
    }

    pub fn rx_spec(&self) -> Result<RxSpec> {
        let period = self.timebase.period()?;
        let mut rx = RxSpec::new(self.pll.build(period));
        rx.sample_phase = self.sample_phase;
        rx.checker = Checker::Prbs15;
        rx.pre_decoder = self.pre_encoder;
        if self.duty_setting.is_some() {
            rx.extraction = Extraction::MidPeriod;
        }
        Ok(rx)
    }
}

/// Topology node in scenario form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeSpecJson {
    Tx {
        id: String,
        scheme: SchemeSpec,
        #[serde(default)]
        pre_encoder: PreEncoder,
        data_source: DataSource,
        #[serde(default)]
        duty_setting: Option<u8>,
    },
    Fanout {
        id: String,
        mode: FanoutModeJson,
        #[serde(default = "default_outputs")]
        outputs: usize,
        #[serde(default = "default_200ps")]
        buffer_delay_s: f64,
        #[serde(default)]
        buffer_jitter_rms_s: f64,
        #[serde(default = "default_200ps")]
        ff_delay_s: f64,
        #[serde(default)]
        ff_jitter_rms_s: f64,
        #[serde(default)]
        pll: PllSpec,
    },
    Rx {
        id: String,
        #[serde(default = "default_sample_phase")]
        sample_phase: f64,
        #[serde(default)]
        checker: Checker,
        #[serde(default)]
        pll: PllSpec,
    },
}

fn default_outputs() -> usize {
    2
}
fn default_200ps() -> f64 {
    200e-12
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FanoutModeJson {
    Repeater { multiplier: u32 },
    Extractor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkJson {
    pub from: String,
    pub to: String,
}

/// A full topology experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyScenario {
    pub name: String,
    #[serde(flatten)]
    pub timebase: Timebase,
    pub n_cycles: u64,
    #[serde(default = "default_one")]
    pub runs: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_settle")]
    pub settle_cycles: u64,
    pub nodes: Vec<NodeSpecJson>,
    pub links: Vec<LinkJson>,
    #[serde(default)]
    pub observe: Vec<String>,
    #[serde(default)]
    pub skew_pair: Option<[String; 2]>,
    #[serde(default)]
    pub checks: Checks,
}

fn default_settle() -> u64 {
    20_000
}

impl TopologyScenario {
    pub fn build(&self) -> Result<Topology> {
        let period = self.timebase.period()?;
        let tb = &self.timebase;
        let ticks = |s: f64| tb.seconds_to_ticks(s);
        let mut nodes = Vec::new();
        for n in &self.nodes {
            let node = match n {
                NodeSpecJson::Tx { id, scheme, pre_encoder, data_source, duty_setting } => Node {
                    id: id.clone(),
                    kind: NodeKind::Tx(TxSpec {
                        scheme: scheme.build()?,
                        period_ticks: period,
                        resolution_fs: tb.resolution_fs,
                        pre_encoder: *pre_encoder,
                        data_source: data_source.clone(),
                        duty_setting: *duty_setting,
                    }),
                },
                NodeSpecJson::Fanout {
                    id,
                    mode,
                    outputs,
                    buffer_delay_s,
                    buffer_jitter_rms_s,
                    ff_delay_s,
                    ff_jitter_rms_s,
                    pll,
                } => {
                    let mode = match mode {
                        FanoutModeJson::Repeater { multiplier } => {
                            FanoutMode::Repeater { multiplier: *multiplier }
                        }
                        FanoutModeJson::Extractor => FanoutMode::Extractor,
                    };
                    let mut spec = FanoutSpec::new(pll.build(period), mode);
                    spec.outputs = *outputs;
                    spec.buffer_delay_ticks = ticks(*buffer_delay_s).round() as u64;
                    spec.buffer_jitter_sigma_ticks = ticks(*buffer_jitter_rms_s);
                    spec.ff_delay_ticks = ticks(*ff_delay_s).round() as u64;
                    spec.ff_jitter_sigma_ticks = ticks(*ff_jitter_rms_s);
                    Node { id: id.clone(), kind: NodeKind::Fanout(spec) }
                }
                NodeSpecJson::Rx { id, sample_phase, checker, pll } => {
                    let mut rx = RxSpec::new(pll.build(period));
                    rx.sample_phase = *sample_phase;
                    rx.checker = *checker;
                    Node { id: id.clone(), kind: NodeKind::Rx(rx) }
                }
            };
            nodes.push(node);
        }
        let links = self
            .links
            .iter()
            .map(|l| {
                Ok(Link { from: PortRef::parse(&l.from)?, to: l.to.clone() })
            })
            .collect::<Result<Vec<_>, cdcm::netlink::NetlinkError>>()?;
        let observe = self
            .observe
            .iter()
            .map(|s| PortRef::parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        let skew_pair = match &self.skew_pair {
            Some([a, b]) => Some([PortRef::parse(a)?, PortRef::parse(b)?]),
            None => None,
        };
        Ok(Topology {
            name: self.name.clone(),
            n_cycles: self.n_cycles,
            runs: self.runs,
            seed: self.seed,
            settle_cycles: self.settle_cycles,
            nodes,
            links,
            observe,
            skew_pair,
        })
    }
}

/// Eye-diagram capture of a transmitted stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeScenario {
    pub name: String,
    pub scheme: SchemeSpec,
    #[serde(flatten)]
    pub timebase: Timebase,
    #[serde(default)]
    pub pre_encoder: PreEncoder,
    pub data_source: DataSource,
    #[serde(default)]
    pub duty_setting: Option<u8>,
    pub n_cycles: u64,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub channel: ChannelSpec,
}

fn default_bins() -> usize {
    200
}

fn preview(s: &str) -> String {
    let trimmed = s.trim();
    if trimmed.is_empty() {
        "<empty file>".to_string()
    } else {
        trimmed.chars().take(40).collect()
    }
}

/// Parse a scenario file, reporting the line/column on failure.
pub fn parse_scenario<T: serde::de::DeserializeOwned>(text: &str, path: &str) -> Result<T> {
    serde_json::from_str(text).with_context(|| {
        format!("invalid scenario {path} (starts with '{}')", preview(text))
    })
}
