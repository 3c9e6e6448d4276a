//! Topology simulation: a single transmitter feeding fanout nodes and
//! receivers through a directed acyclic wiring, with per-point timing,
//! latency, BER and leaf-skew metrics over repeated re-initializations.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::fanout::{fanout_node, FanoutMode, FanoutSpec};
use super::rx::{receive, BerStats, RxSpec};
use super::tx::{transmit, TxSpec};
use super::{derive_seed, NetlinkError};
use crate::waveform::{measure, EdgeWaveform};

/// A wire endpoint: output `port` of node `node`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PortRef {
    pub node: String,
    pub port: usize,
}

impl PortRef {
    pub fn new(node: &str, port: usize) -> Self {
        PortRef { node: node.to_string(), port }
    }

    /// Parse "node:port" (":port" optional, defaulting to 0).
    pub fn parse(s: &str) -> Result<Self, NetlinkError> {
        match s.rsplit_once(':') {
            Some((node, port)) => {
                let port = port.parse().map_err(|_| {
                    NetlinkError::InvalidTopology(format!("bad port in wire ref '{s}'"))
                })?;
                Ok(PortRef { node: node.to_string(), port })
            }
            None => Ok(PortRef { node: s.to_string(), port: 0 }),
        }
    }
}

impl fmt::Display for PortRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.node, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: PortRef,
    pub to: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Tx(TxSpec),
    Fanout(FanoutSpec),
    Rx(RxSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
}

/// A complete experiment: graph, duration, re-initialization count and the
/// points to observe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub name: String,
    pub n_cycles: u64,
    /// Independent re-initializations; metrics are collected per run.
    pub runs: u32,
    pub seed: u64,
    /// Rising edges inside this prefix are excluded from the statistics.
    pub settle_cycles: u64,
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub observe: Vec<PortRef>,
    pub skew_pair: Option<[PortRef; 2]>,
}

/// Simple fixed-bin histogram for latency and skew distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub start: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn from_values(values: &[f64], bins: usize) -> Histogram {
        if values.is_empty() {
            return Histogram { start: 0.0, bin_width: 1.0, counts: vec![] };
        }
        let min = values.iter().cloned().fold(f64::MAX, f64::min);
        let max = values.iter().cloned().fold(f64::MIN, f64::max);
        if max == min {
            return Histogram { start: min, bin_width: 1.0, counts: vec![values.len() as u64] };
        }
        let width = (max - min) / bins as f64;
        let mut counts = vec![0u64; bins];
        for &v in values {
            let b = (((v - min) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        Histogram { start: min, bin_width: width, counts }
    }

    /// CSV rows: `bin_center,count`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("bin_center,count\n");
        for (i, c) in self.counts.iter().enumerate() {
            let center = self.start + (i as f64 + 0.5) * self.bin_width;
            out.push_str(&format!("{center},{c}\n"));
        }
        out
    }
}

/// Metrics for one observed wire or receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub point: String,
    pub tie_rms_ticks: f64,
    pub tie_pp_ticks: f64,
    pub ddj_pp_ticks: f64,
    pub duty_min: f64,
    pub duty_max: f64,
    /// Positive lag from the transmitter's rising edges, modulo one period
    /// for paths longer than a carrier cycle.
    pub latency_mean_ticks: f64,
    pub latency_std_ticks: f64,
    pub latency_per_run_ticks: Vec<f64>,
    pub latency_histogram: Histogram,
    pub ber: Option<BerStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkewMetrics {
    pub pair: [String; 2],
    pub mean_ticks: f64,
    /// Standard deviation of the per-edge leaf time difference.
    pub rms_ticks: f64,
    pub samples: u64,
    pub per_run_mean_ticks: Vec<f64>,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub topology: String,
    pub runs: u32,
    pub n_cycles: u64,
    pub resolution_fs: u64,
    pub points: Vec<PointMetrics>,
    pub skew: Option<SkewMetrics>,
}

struct Validated<'a> {
    tx_id: &'a str,
    tx: &'a TxSpec,
    order: Vec<usize>,
    incoming: BTreeMap<&'a str, &'a PortRef>,
}

fn validate(t: &Topology) -> Result<Validated<'_>, NetlinkError> {
    let mut tx = None;
    let mut ids = BTreeMap::new();
    for (i, node) in t.nodes.iter().enumerate() {
        if ids.insert(node.id.as_str(), i).is_some() {
            return Err(NetlinkError::InvalidTopology(format!("duplicate node id {}", node.id)));
        }
        if let NodeKind::Tx(spec) = &node.kind {
            if tx.replace((node.id.as_str(), spec)).is_some() {
                return Err(NetlinkError::InvalidTopology(
                    "topology must have exactly one transmitter".into(),
                ));
            }
        }
    }
    let Some((tx_id, tx_spec)) = tx else {
        return Err(NetlinkError::InvalidTopology("topology has no transmitter".into()));
    };

    let ports_of = |id: &str| -> Result<usize, NetlinkError> {
        let node = &t.nodes[ids[id]];
        Ok(match &node.kind {
            NodeKind::Tx(_) => 1,
            NodeKind::Fanout(f) => f.outputs,
            NodeKind::Rx(_) => 0,
        })
    };

    let mut incoming: BTreeMap<&str, &PortRef> = BTreeMap::new();
    for link in &t.links {
        if !ids.contains_key(link.from.node.as_str()) {
            return Err(NetlinkError::InvalidTopology(format!(
                "link from unknown node {}",
                link.from.node
            )));
        }
        if !ids.contains_key(link.to.as_str()) {
            return Err(NetlinkError::InvalidTopology(format!(
                "link to unknown node {}",
                link.to
            )));
        }
        if link.from.port >= ports_of(&link.from.node)? {
            return Err(NetlinkError::InvalidTopology(format!(
                "link from nonexistent port {}",
                link.from
            )));
        }
        if link.to == tx_id {
            return Err(NetlinkError::InvalidTopology("transmitter cannot have inputs".into()));
        }
        if incoming.insert(link.to.as_str(), &link.from).is_some() {
            return Err(NetlinkError::InvalidTopology(format!(
                "node {} has more than one input",
                link.to
            )));
        }
    }

    // Breadth-first from the transmitter; also the evaluation order.
    let mut order = vec![ids[tx_id]];
    let mut seen: BTreeMap<&str, ()> = BTreeMap::from([(tx_id, ())]);
    let mut queue = VecDeque::from([tx_id]);
    while let Some(cur) = queue.pop_front() {
        for link in &t.links {
            if link.from.node == cur && !seen.contains_key(link.to.as_str()) {
                seen.insert(link.to.as_str(), ());
                order.push(ids[link.to.as_str()]);
                queue.push_back(link.to.as_str());
            }
        }
    }
    for node in &t.nodes {
        if !seen.contains_key(node.id.as_str()) {
            return Err(NetlinkError::InvalidTopology(format!(
                "node {} unreachable from the transmitter",
                node.id
            )));
        }
        match &node.kind {
            NodeKind::Tx(_) => {}
            _ => {
                if !incoming.contains_key(node.id.as_str()) {
                    return Err(NetlinkError::InvalidTopology(format!(
                        "node {} has no input",
                        node.id
                    )));
                }
            }
        }
        if let NodeKind::Fanout(f) = &node.kind {
            if matches!(f.mode, FanoutMode::Extractor) && !tx_spec.wire_is_n1() {
                return Err(NetlinkError::ExtractorUnsupported {
                    scheme: tx_spec.scheme.name(),
                });
            }
        }
    }

    for p in t.observe.iter().chain(t.skew_pair.iter().flatten()) {
        if !ids.contains_key(p.node.as_str()) || p.port >= ports_of(&p.node)? {
            return Err(NetlinkError::InvalidTopology(format!("unknown wire ref {p}")));
        }
    }

    Ok(Validated { tx_id, tx: tx_spec, order, incoming })
}

/// Rising edges of a wire after the settle window.
fn settled_rising(w: &EdgeWaveform, settle_ticks: u64) -> Vec<u64> {
    w.rising_edges().filter(|&t| t >= settle_ticks).collect()
}

/// Positive lag of each observed rising edge behind the latest source
/// rising edge at or before it.
fn positive_lags(observed: &[u64], source: &[u64]) -> Vec<f64> {
    let mut lags = Vec::with_capacity(observed.len());
    let mut j = 0usize;
    for &o in observed {
        while j + 1 < source.len() && source[j + 1] <= o {
            j += 1;
        }
        if source[j] <= o {
            lags.push((o - source[j]) as f64);
        }
    }
    lags
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / values.len() as f64;
    (mean, var.sqrt())
}

struct RunOutcome {
    wires: BTreeMap<PortRef, EdgeWaveform>,
    rx_points: Vec<(String, EdgeWaveform, Option<BerStats>)>,
}

fn evaluate_once(t: &Topology, v: &Validated<'_>, run_seed: u64) -> Result<RunOutcome, NetlinkError> {
    let mut wires: BTreeMap<PortRef, EdgeWaveform> = BTreeMap::new();
    let mut rx_points = Vec::new();
    for &idx in &v.order {
        let node = &t.nodes[idx];
        match &node.kind {
            NodeKind::Tx(spec) => {
                let (w, _) = transmit(spec, t.n_cycles)?;
                wires.insert(PortRef::new(&node.id, 0), w);
            }
            NodeKind::Fanout(spec) => {
                let input = &wires[v.incoming[node.id.as_str()]];
                let mut spec = spec.clone();
                spec.seed = derive_seed(run_seed, idx as u64 + 1);
                let outputs = fanout_node(input, &spec)?;
                for (port, w) in outputs.into_iter().enumerate() {
                    wires.insert(PortRef::new(&node.id, port), w);
                }
            }
            NodeKind::Rx(spec) => {
                let input = &wires[v.incoming[node.id.as_str()]];
                let got = receive(input, spec, &v.tx.scheme)?;
                rx_points.push((node.id.clone(), got.recovered_clock, got.report.ber));
            }
        }
    }
    Ok(RunOutcome { wires, rx_points })
}

/// Run the topology `t.runs` times and assemble the metrics report.
pub fn run_topology(t: &Topology) -> Result<MetricsReport, NetlinkError> {
    let v = validate(t)?;
    let period = v.tx.period_ticks;
    let settle_ticks = t.settle_cycles * period;
    let wire_n = |point: &PortRef| -> usize {
        t.nodes
            .iter()
            .find(|n| n.id == point.node)
            .map(|n| match &n.kind {
                NodeKind::Fanout(f) => f.sampling_multiplier() as usize,
                _ => v.tx.scheme.n(),
            })
            .unwrap_or(v.tx.scheme.n())
    };

    // Observed points: explicit wires plus every receiver.
    let mut point_latencies: BTreeMap<String, Vec<Vec<f64>>> = BTreeMap::new();
    let mut point_reports: BTreeMap<String, PointMetrics> = BTreeMap::new();
    let mut point_order: Vec<String> = Vec::new();
    let mut skew_samples: Vec<f64> = Vec::new();
    let mut skew_per_run: Vec<f64> = Vec::new();

    for run in 0..t.runs.max(1) {
        let run_seed = derive_seed(t.seed, run as u64);
        let outcome = evaluate_once(t, &v, run_seed)?;
        let source = settled_rising(&outcome.wires[&PortRef::new(v.tx_id, 0)], settle_ticks);

        let mut observe_points: Vec<(String, &EdgeWaveform, Option<BerStats>, usize)> = t
            .observe
            .iter()
            .map(|p| (p.to_string(), &outcome.wires[p], None, wire_n(p)))
            .collect();
        for (id, clock, ber) in &outcome.rx_points {
            observe_points.push((id.clone(), clock, *ber, v.tx.scheme.n()));
        }

        for (name, wave, ber, n) in observe_points {
            let rising = settled_rising(wave, settle_ticks);
            let lags = positive_lags(&rising, &source);
            let (lag_mean, _) = mean_std(&lags);
            point_latencies.entry(name.clone()).or_default().push(lags);
            if run == 0 {
                // Timing metrics are reported from the first run; latency
                // aggregation spans all runs.
                let edges: Vec<u64> =
                    wave.edge_times().iter().copied().filter(|&e| e >= settle_ticks).collect();
                let initial = wave.sample(settle_ticks).unwrap_or(false);
                let settled =
                    EdgeWaveform::new(initial, edges, wave.duration(), wave.resolution_fs())?;
                let timing = measure(&settled, period, n)?;
                point_order.push(name.clone());
                point_reports.insert(
                    name.clone(),
                    PointMetrics {
                        point: name.clone(),
                        tie_rms_ticks: timing.tie_rms,
                        tie_pp_ticks: timing.tie_pp,
                        ddj_pp_ticks: timing.ddj_pp,
                        duty_min: timing.duty_min(),
                        duty_max: timing.duty_max(),
                        latency_mean_ticks: lag_mean,
                        latency_std_ticks: 0.0,
                        latency_per_run_ticks: vec![],
                        latency_histogram: Histogram { start: 0.0, bin_width: 1.0, counts: vec![] },
                        ber,
                    },
                );
            }
        }

        if let Some([a, b]) = &t.skew_pair {
            let ra = settled_rising(&outcome.wires[a], settle_ticks);
            let rb = settled_rising(&outcome.wires[b], settle_ticks);
            let mut run_samples = Vec::new();
            let (mut ia, mut ib) = (0usize, 0usize);
            for &s in &source {
                while ia < ra.len() && ra[ia] <= s {
                    ia += 1;
                }
                while ib < rb.len() && rb[ib] <= s {
                    ib += 1;
                }
                if ia >= ra.len() || ib >= rb.len() {
                    break;
                }
                // Each leaf answers this source edge within one period.
                if ra[ia] - s <= period && rb[ib] - s <= period {
                    run_samples.push(ra[ia] as f64 - rb[ib] as f64);
                }
            }
            let (m, _) = mean_std(&run_samples);
            skew_per_run.push(m);
            skew_samples.extend(run_samples);
        }
    }

    let mut points = Vec::new();
    for name in point_order {
        let mut report = point_reports.remove(&name).expect("report recorded");
        let runs_lags = &point_latencies[&name];
        let all: Vec<f64> = runs_lags.iter().flatten().copied().collect();
        let (mean, std) = mean_std(&all);
        report.latency_mean_ticks = mean;
        report.latency_std_ticks = std;
        report.latency_per_run_ticks =
            runs_lags.iter().map(|lags| mean_std(lags).0).collect();
        report.latency_histogram = Histogram::from_values(&all, 64);
        points.push(report);
    }

    let skew = t.skew_pair.as_ref().map(|[a, b]| {
        let (mean, rms) = mean_std(&skew_samples);
        SkewMetrics {
            pair: [a.to_string(), b.to_string()],
            mean_ticks: mean,
            rms_ticks: rms,
            samples: skew_samples.len() as u64,
            per_run_mean_ticks: skew_per_run.clone(),
            histogram: Histogram::from_values(&skew_samples, 64),
        }
    });

    Ok(MetricsReport {
        topology: t.name.clone(),
        runs: t.runs.max(1),
        n_cycles: t.n_cycles,
        resolution_fs: v.tx.resolution_fs,
        points,
        skew,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::make_general_unary;
    use crate::netlink::tx::{DataSource, PreEncoder};
    use crate::pll::PllConfig;

    const RES: u64 = 1000;
    const PERIOD: u64 = 24_000_000; // divisible by 3-slot and 20-slot grids

    fn tx_node(id: &str) -> Node {
        Node {
            id: id.into(),
            kind: NodeKind::Tx(TxSpec {
                scheme: make_general_unary(3, 1).unwrap(),
                period_ticks: PERIOD,
                resolution_fs: RES,
                pre_encoder: PreEncoder::None,
                data_source: DataSource::Prbs15 { seed: 0x7fff },
                duty_setting: None,
            }),
        }
    }

    fn fanout_spec(jitter: f64) -> FanoutSpec {
        let mut pll = PllConfig::for_period(PERIOD as f64);
        pll.record_trace = false;
        let mut spec = FanoutSpec::new(pll, FanoutMode::Repeater { multiplier: 3 });
        spec.ff_jitter_sigma_ticks = jitter;
        spec
    }

    fn chain(hops: usize, jitter: f64, runs: u32) -> Topology {
        let mut nodes = vec![tx_node("tx")];
        let mut links = Vec::new();
        let mut prev = "tx".to_string();
        for h in 0..hops {
            let id = format!("hop{h}");
            nodes.push(Node { id: id.clone(), kind: NodeKind::Fanout(fanout_spec(jitter)) });
            links.push(Link { from: PortRef::new(&prev, 0), to: id.clone() });
            prev = id;
        }
        Topology {
            name: "chain".into(),
            n_cycles: 30_000,
            runs,
            seed: 11,
            settle_cycles: 20_000,
            nodes,
            links,
            observe: vec![PortRef::new(&prev, 0)],
            skew_pair: None,
        }
    }

    fn tree(jitter: f64, runs: u32, n_cycles: u64) -> Topology {
        let nodes = vec![
            tx_node("tx"),
            Node { id: "trunk".into(), kind: NodeKind::Fanout(fanout_spec(jitter)) },
            Node { id: "branch_a".into(), kind: NodeKind::Fanout(fanout_spec(jitter)) },
            Node { id: "branch_b".into(), kind: NodeKind::Fanout(fanout_spec(jitter)) },
        ];
        let links = vec![
            Link { from: PortRef::new("tx", 0), to: "trunk".into() },
            Link { from: PortRef::new("trunk", 0), to: "branch_a".into() },
            Link { from: PortRef::new("trunk", 1), to: "branch_b".into() },
        ];
        Topology {
            name: "tree".into(),
            n_cycles,
            runs,
            seed: 23,
            settle_cycles: 20_000,
            nodes,
            links,
            observe: vec![],
            skew_pair: Some([PortRef::new("branch_a", 0), PortRef::new("branch_b", 0)]),
        }
    }

    #[test]
    fn ideal_chain_latency_is_analytic_and_constant() {
        let hops = 4;
        let topo = chain(hops, 0.0, 3);
        let report = run_topology(&topo).unwrap();
        let p = &report.points[0];
        // Per hop: buffer delay + half a repeater UI + ff delay.
        let expected = hops as f64 * (200.0 + (PERIOD / 6) as f64 + 200.0);
        assert_eq!(p.latency_std_ticks, 0.0, "latency not deterministic");
        assert_eq!(p.latency_mean_ticks, expected);
        for run_mean in &p.latency_per_run_ticks {
            assert_eq!(*run_mean, expected);
        }
    }

    #[test]
    fn symmetric_tree_has_zero_skew() {
        let topo = tree(0.0, 2, 30_000);
        let report = run_topology(&topo).unwrap();
        let skew = report.skew.unwrap();
        assert_eq!(skew.mean_ticks, 0.0);
        assert_eq!(skew.rms_ticks, 0.0);
        assert!(skew.samples > 1_000);
    }

    #[test]
    fn skew_sign_flips_when_leaves_swap() {
        let mut topo = tree(2.0, 1, 30_000);
        let r1 = run_topology(&topo).unwrap();
        topo.skew_pair = Some([PortRef::new("branch_b", 0), PortRef::new("branch_a", 0)]);
        let r2 = run_topology(&topo).unwrap();
        let s1 = r1.skew.unwrap();
        let s2 = r2.skew.unwrap();
        assert!((s1.mean_ticks + s2.mean_ticks).abs() < 1e-9);
        assert!((s1.rms_ticks - s2.rms_ticks).abs() < 1e-9);
    }

    #[test]
    fn validation_catches_malformed_graphs() {
        let mut topo = chain(1, 0.0, 1);
        topo.links.clear();
        assert!(matches!(run_topology(&topo), Err(NetlinkError::InvalidTopology(_))));

        let mut topo = chain(1, 0.0, 1);
        topo.nodes.push(tx_node("tx2"));
        assert!(matches!(run_topology(&topo), Err(NetlinkError::InvalidTopology(_))));

        let mut topo = chain(1, 0.0, 1);
        topo.observe = vec![PortRef::new("nope", 0)];
        assert!(matches!(run_topology(&topo), Err(NetlinkError::InvalidTopology(_))));

        let mut topo = chain(2, 0.0, 1);
        topo.links[1].to = "hop1".into();
        topo.links.push(Link { from: PortRef::new("hop0", 1), to: "hop1".into() });
        assert!(matches!(run_topology(&topo), Err(NetlinkError::InvalidTopology(_))));
    }

    #[test]
    fn extractor_rejected_for_wide_schemes() {
        let mut topo = chain(1, 0.0, 1);
        if let NodeKind::Tx(spec) = &mut topo.nodes[0].kind {
            spec.scheme = make_general_unary(5, 3).unwrap();
        }
        if let NodeKind::Fanout(f) = &mut topo.nodes[1].kind {
            f.mode = FanoutMode::Extractor;
        }
        assert!(matches!(
            run_topology(&topo),
            Err(NetlinkError::ExtractorUnsupported { .. })
        ));
    }

    #[test]
    fn port_ref_parsing() {
        assert_eq!(PortRef::parse("a:1").unwrap(), PortRef::new("a", 1));
        assert_eq!(PortRef::parse("a").unwrap(), PortRef::new("a", 0));
        assert!(PortRef::parse("a:x").is_err());
    }
}
