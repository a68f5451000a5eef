//! Discrete-event scheduler driving the three protocol state machines.
//!
//! The engine owns the virtual clock, the event queue, the channel model and
//! the node states. A transmission that starts at `t` ends at
//! `t + airtime`; at that instant every other node receives the frame with a
//! per-receiver channel verdict and the sender is told how its addressed
//! receivers fared.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::channel::{ChannelError, LinkErrorModel, Outcome};
use crate::model::{Duration, Frame, FrameKind, NodeId, ParamError, SystemParameters};
use crate::netcode::{PacketId, Payload};
use crate::protocol::{
    step, Action, ActionKind, NodeEvent, NodeState, ProtocolConfig, ProtocolError, ProtocolVariant,
    StepContext, TimerTag,
};

/// Slack allowed when checking that transmissions do not overlap.
const OVERLAP_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("at least one cycle must be requested")]
    NoCycles,
    #[error("{node} started transmitting at {start} while the medium is busy until {busy_until}")]
    Overlap {
        node: NodeId,
        start: Duration,
        busy_until: Duration,
    },
    #[error("payload {id} delivered to {node} does not match what was sent")]
    PayloadMismatch { id: PacketId, node: NodeId },
    #[error("payload {id} delivered to {node}, which is not its destination")]
    Misdelivered { id: PacketId, node: NodeId },
    #[error("payload {id} delivered twice")]
    DuplicateDelivery { id: PacketId },
    #[error("cycle {cycle} ended with {deliveries} deliveries, expected 2")]
    IncompleteCycle { cycle: u64, deliveries: usize },
    #[error("event queue ran dry after {cycles} cycles")]
    Stalled { cycles: u64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricError {
    #[error("metric undefined: {0}")]
    Undefined(&'static str),
}

/// One line of the run trace: one per action performed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub time_us: f64,
    pub node: NodeId,
    pub action: ActionKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub frame: Option<FrameKind>,
    pub attempt: u32,
    pub cycle: u64,
    /// Delivered packet, for DELIVER_TO_APP records.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub packet: Option<PacketId>,
}

pub type Trace = Vec<TraceRecord>;

/// Writes the trace as JSON lines.
pub fn write_trace<W: Write>(trace: &[TraceRecord], mut out: W) -> io::Result<()> {
    for rec in trace {
        serde_json::to_writer(&mut out, rec)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(text: &str) -> Result<Trace, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// Selects frames for [`transmission_count`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TxFilter {
    Any,
    Kind(FrameKind),
    /// Plain or piggybacked CFC.
    AnyCfc,
}

impl TxFilter {
    pub fn matches(self, kind: FrameKind) -> bool {
        match self {
            TxFilter::Any => true,
            TxFilter::Kind(k) => k == kind,
            TxFilter::AnyCfc => matches!(kind, FrameKind::Cfc | FrameKind::CfcPiggyback),
        }
    }
}

pub fn transmission_count(trace: &[TraceRecord], filter: TxFilter) -> usize {
    trace
        .iter()
        .filter(|r| r.action == ActionKind::Transmit)
        .filter(|r| r.frame.is_some_and(|k| filter.matches(k)))
        .count()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RunStats {
    pub cycles_completed: u64,
    pub delivered_payload_bits: u64,
    pub per_cycle_delay: Vec<Duration>,
    pub tx_counts: BTreeMap<FrameKind, u64>,
    /// Relay transmissions of coded or relayed data frames.
    pub relay_attempts: u64,
    pub sim_time: Duration,
}

impl RunStats {
    pub fn tx_count(&self, kind: FrameKind) -> u64 {
        self.tx_counts.get(&kind).copied().unwrap_or(0)
    }

    /// Mean number of frames of the matching kinds per completed cycle.
    pub fn tx_per_cycle(&self, filter: TxFilter) -> f64 {
        let n: u64 = self
            .tx_counts
            .iter()
            .filter(|(k, _)| filter.matches(**k))
            .map(|(_, v)| v)
            .sum();
        n as f64 / self.cycles_completed.max(1) as f64
    }

    pub fn mean_relay_attempts(&self) -> f64 {
        self.relay_attempts as f64 / self.cycles_completed.max(1) as f64
    }
}

/// Delivered payload bits per second of virtual time.
pub fn throughput(stats: &RunStats) -> Result<f64, MetricError> {
    if stats.sim_time.as_micros() <= 0.0 {
        return Err(MetricError::Undefined("no simulated time elapsed"));
    }
    Ok(stats.delivered_payload_bits as f64 / stats.sim_time.as_secs())
}

pub fn mean_delay(stats: &RunStats) -> Result<Duration, MetricError> {
    let n = stats.per_cycle_delay.len();
    if n == 0 {
        return Err(MetricError::Undefined("no completed cycles"));
    }
    let sum: f64 = stats.per_cycle_delay.iter().map(|d| d.as_micros()).sum();
    Ok(Duration::from_micros(sum / n as f64))
}

/// Normal-approximation confidence half-width of the mean cycle delay.
pub fn confidence_halfwidth(stats: &RunStats, level: f64) -> Result<Duration, MetricError> {
    let n = stats.per_cycle_delay.len();
    if n < 2 {
        return Err(MetricError::Undefined("need at least two cycles"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MetricError::Undefined(
            "confidence level must lie in (0, 1)",
        ));
    }
    let mean = mean_delay(stats)?.as_micros();
    let var = stats
        .per_cycle_delay
        .iter()
        .map(|d| (d.as_micros() - mean).powi(2))
        .sum::<f64>()
        / (n - 1) as f64;
    let z = Normal::standard().inverse_cdf(0.5 + level / 2.0);
    Ok(Duration::from_micros(z * (var / n as f64).sqrt()))
}

#[derive(Debug, Clone)]
enum EventKind {
    CycleStart { cycle: u64 },
    FrameStart { node: NodeId, frame: Frame },
    FrameEnd { frame: Frame },
    Timer { node: NodeId, tag: TimerTag },
}

#[derive(Debug, Clone)]
struct Event {
    time: Duration,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest time, then the lowest seq.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .as_micros()
            .total_cmp(&self.time.as_micros())
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Min-time event queue with FIFO ordering among equal times.
#[derive(Debug, Default)]
struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: Duration, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, kind });
    }

    fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }
}

/// Successful run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub stats: RunStats,
    pub trace: Trace,
}

/// Aborted run with whatever was accumulated before the failure.
#[derive(Debug, Clone, Error)]
#[error("simulation aborted at {time}: {error}")]
pub struct RunAbort {
    pub error: SimError,
    pub time: Duration,
    pub stats: RunStats,
    pub trace: Trace,
}

/// Configured simulation of one protocol variant.
#[derive(Debug, Clone)]
pub struct Simulation {
    params: SystemParameters,
    variant: ProtocolVariant,
    channel: LinkErrorModel,
    protocol: ProtocolConfig,
    record_trace: bool,
}

impl Simulation {
    pub fn new(
        params: SystemParameters,
        variant: ProtocolVariant,
        channel: LinkErrorModel,
    ) -> Self {
        let protocol = ProtocolConfig {
            both_legs: channel.both_legs(),
            ..ProtocolConfig::default()
        };
        Self {
            params,
            variant,
            channel,
            protocol,
            record_trace: true,
        }
    }

    pub fn protocol(mut self, protocol: ProtocolConfig) -> Self {
        self.protocol = protocol;
        self
    }

    /// Disable for long runs where only the statistics matter.
    pub fn record_trace(mut self, on: bool) -> Self {
        self.record_trace = on;
        self
    }

    pub fn run(self, cycles: u64) -> Result<RunOutput, Box<RunAbort>> {
        let mut engine = match Engine::new(self) {
            Ok(e) => e,
            Err(error) => {
                return Err(Box::new(RunAbort {
                    error,
                    time: Duration::ZERO,
                    stats: RunStats::default(),
                    trace: Vec::new(),
                }))
            }
        };
        match engine.run(cycles) {
            Ok(()) => Ok(RunOutput {
                stats: engine.stats,
                trace: engine.trace,
            }),
            Err(error) => Err(Box::new(RunAbort {
                error,
                time: engine.now,
                stats: engine.stats,
                trace: engine.trace,
            })),
        }
    }
}

/// Runs `cycles` complete exchanges with default protocol settings and a
/// full trace.
pub fn run(
    params: &SystemParameters,
    variant: ProtocolVariant,
    channel: LinkErrorModel,
    cycles: u64,
) -> Result<RunOutput, Box<RunAbort>> {
    Simulation::new(params.clone(), variant, channel).run(cycles)
}

struct Engine {
    ctx: StepContext,
    channel: LinkErrorModel,
    record_trace: bool,
    nodes: [Option<NodeState>; 3],
    queue: EventQueue,
    now: Duration,
    medium_busy_until: Duration,
    cycle: u64,
    cycle_started: Duration,
    cycle_deliveries: Vec<PacketId>,
    target_cycles: u64,
    stats: RunStats,
    trace: Trace,
}

impl Engine {
    fn new(sim: Simulation) -> Result<Self, SimError> {
        crate::model::validate_parameters(&sim.params).map_err(|v| {
            SimError::InvalidParameters(
                v.iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            )
        })?;
        let payload_len = sim.params.data_payload_bytes as usize;
        let nodes = NodeId::ALL.map(|id| Some(NodeState::new(id, sim.variant, payload_len)));
        Ok(Self {
            ctx: StepContext::new(sim.params, sim.protocol)?,
            channel: sim.channel,
            record_trace: sim.record_trace,
            nodes,
            queue: EventQueue::default(),
            now: Duration::ZERO,
            medium_busy_until: Duration::ZERO,
            cycle: 0,
            cycle_started: Duration::ZERO,
            cycle_deliveries: Vec::with_capacity(2),
            target_cycles: 0,
            stats: RunStats::default(),
            trace: Vec::new(),
        })
    }

    fn run(&mut self, cycles: u64) -> Result<(), SimError> {
        if cycles == 0 {
            return Err(SimError::NoCycles);
        }
        self.target_cycles = cycles;
        self.queue
            .push(Duration::ZERO, EventKind::CycleStart { cycle: 0 });

        while self.stats.cycles_completed < self.target_cycles {
            let Some(event) = self.queue.pop() else {
                return Err(SimError::Stalled {
                    cycles: self.stats.cycles_completed,
                });
            };
            debug_assert!(event.time >= self.now, "event scheduled in the past");
            self.now = event.time;
            match event.kind {
                EventKind::CycleStart { cycle } => {
                    self.cycle = cycle;
                    self.cycle_started = self.now;
                    self.cycle_deliveries.clear();
                    self.channel.reset_cycle();
                    self.dispatch(NodeId::Source, NodeEvent::CycleStart { cycle })?;
                }
                EventKind::FrameStart { node, frame } => self.frame_start(node, frame)?,
                EventKind::FrameEnd { frame } => self.frame_end(&frame)?,
                EventKind::Timer { node, tag } => {
                    self.dispatch(node, NodeEvent::TimerExpired { tag })?;
                }
            }
        }
        self.stats.sim_time = self.now;
        Ok(())
    }

    fn frame_start(&mut self, node: NodeId, frame: Frame) -> Result<(), SimError> {
        let start = self.now;
        let tolerance = OVERLAP_RTOL * self.medium_busy_until.as_micros();
        if start.as_micros() + tolerance < self.medium_busy_until.as_micros() {
            return Err(SimError::Overlap {
                node,
                start,
                busy_until: self.medium_busy_until,
            });
        }
        let end = start + frame.airtime(&self.ctx.params)?;
        self.medium_busy_until = end;
        self.record(TraceRecord {
            time_us: start.as_micros(),
            node,
            action: ActionKind::Transmit,
            frame: Some(frame.kind()),
            attempt: frame.attempt,
            cycle: frame.cycle,
            packet: None,
        });
        self.queue.push(end, EventKind::FrameEnd { frame });
        Ok(())
    }

    fn frame_end(&mut self, frame: &Frame) -> Result<(), SimError> {
        let kind = frame.kind();
        *self.stats.tx_counts.entry(kind).or_insert(0) += 1;
        if frame.src == NodeId::Relay && matches!(kind, FrameKind::Coded | FrameKind::Data) {
            self.stats.relay_attempts += 1;
        }

        let mut outcomes = [(NodeId::Source, Outcome::Delivered); 2];
        let receivers = NodeId::ALL.into_iter().filter(|n| *n != frame.src);
        for (slot, rx) in outcomes.iter_mut().zip(receivers) {
            let o = self
                .channel
                .deliver_outcome(frame.src, rx, kind, frame.attempt)?;
            *slot = (rx, o);
        }
        let feedback: Vec<(NodeId, Outcome)> = outcomes
            .iter()
            .copied()
            .filter(|(n, _)| frame.dst.includes(*n))
            .collect();

        for (rx, outcome) in outcomes {
            self.dispatch(rx, NodeEvent::Received { frame, outcome })?;
        }
        self.dispatch(
            frame.src,
            NodeEvent::Sent {
                frame,
                feedback: &feedback,
            },
        )
    }

    fn dispatch(&mut self, node: NodeId, event: NodeEvent<'_>) -> Result<(), SimError> {
        let state = self.nodes[node.index()]
            .take()
            .expect("node state is always restored after a step");
        let (state, actions) = step(state, event, &self.ctx)?;
        self.nodes[node.index()] = Some(state);
        for action in actions {
            self.perform(node, action)?;
        }
        Ok(())
    }

    fn record(&mut self, rec: TraceRecord) {
        if self.record_trace {
            self.trace.push(rec);
        }
    }

    fn perform(&mut self, node: NodeId, action: Action) -> Result<(), SimError> {
        match action {
            Action::Transmit { frame, delay, .. } => {
                self.queue
                    .push(self.now + delay, EventKind::FrameStart { node, frame });
            }
            Action::SetTimer { tag, delay } => {
                self.record(TraceRecord {
                    time_us: self.now.as_micros(),
                    node,
                    action: ActionKind::SetTimer,
                    frame: None,
                    attempt: tag.attempt,
                    cycle: tag.cycle,
                    packet: None,
                });
                self.queue
                    .push(self.now + delay, EventKind::Timer { node, tag });
            }
            Action::DeliverToApp { payload } => {
                self.verify_delivery(node, &payload)?;
                self.stats.delivered_payload_bits += 8 * payload.len() as u64;
                self.record(TraceRecord {
                    time_us: self.now.as_micros(),
                    node,
                    action: ActionKind::DeliverToApp,
                    frame: None,
                    attempt: 0,
                    cycle: self.cycle,
                    packet: Some(payload.id),
                });
            }
            Action::EndCycle => {
                let deliveries = self.cycle_deliveries.len();
                if deliveries != 2 {
                    return Err(SimError::IncompleteCycle {
                        cycle: self.cycle,
                        deliveries,
                    });
                }
                self.stats
                    .per_cycle_delay
                    .push(self.now - self.cycle_started);
                self.stats.cycles_completed += 1;
                self.record(TraceRecord {
                    time_us: self.now.as_micros(),
                    node,
                    action: ActionKind::EndCycle,
                    frame: None,
                    attempt: 0,
                    cycle: self.cycle,
                    packet: None,
                });
                if self.stats.cycles_completed < self.target_cycles {
                    self.queue.push(
                        self.now,
                        EventKind::CycleStart {
                            cycle: self.cycle + 1,
                        },
                    );
                }
            }
        }
        Ok(())
    }

    /// Checks destination, uniqueness and bytewise fidelity of a delivery
    /// against the packet the application originally generated.
    fn verify_delivery(&mut self, node: NodeId, payload: &Payload) -> Result<(), SimError> {
        let id = payload.id;
        if id.origin.peer() != Some(node) {
            return Err(SimError::Misdelivered { id, node });
        }
        if self.cycle_deliveries.contains(&id) {
            return Err(SimError::DuplicateDelivery { id });
        }
        let original = Payload::synthetic(id, self.ctx.params.data_payload_bytes as usize);
        if original.bytes != payload.bytes {
            return Err(SimError::PayloadMismatch { id, node });
        }
        self.cycle_deliveries.push(id);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_orders_by_time_then_insertion() {
        let mut q = EventQueue::default();
        q.push(
            Duration::from_micros(5.0),
            EventKind::CycleStart { cycle: 0 },
        );
        q.push(
            Duration::from_micros(1.0),
            EventKind::CycleStart { cycle: 1 },
        );
        q.push(
            Duration::from_micros(5.0),
            EventKind::CycleStart { cycle: 2 },
        );
        q.push(
            Duration::from_micros(1.0),
            EventKind::CycleStart { cycle: 3 },
        );
        let order: Vec<u64> = std::iter::from_fn(|| q.pop())
            .map(|e| match e.kind {
                EventKind::CycleStart { cycle } => cycle,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(order, [1, 3, 0, 2]);
    }

    #[test]
    fn metrics_on_empty_and_single_cycle() {
        let mut stats = RunStats::default();
        assert!(throughput(&stats).is_err());
        assert!(mean_delay(&stats).is_err());
        stats.sim_time = Duration::from_micros(10.0);
        assert_eq!(throughput(&stats).unwrap(), 0.0);
        stats.per_cycle_delay.push(Duration::from_micros(10.0));
        stats.cycles_completed = 1;
        assert_eq!(mean_delay(&stats).unwrap().as_micros(), 10.0);
        assert!(confidence_halfwidth(&stats, 0.95).is_err());
    }

    #[test]
    fn halfwidth_of_constant_samples_is_zero() {
        let stats = RunStats {
            per_cycle_delay: vec![Duration::from_micros(3.0); 10],
            cycles_completed: 10,
            ..Default::default()
        };
        assert_eq!(confidence_halfwidth(&stats, 0.95).unwrap(), Duration::ZERO);
    }

    #[test]
    fn halfwidth_matches_direct_computation() {
        let samples = [1.0, 2.0, 3.0, 4.0];
        let stats = RunStats {
            per_cycle_delay: samples.iter().map(|&x| Duration::from_micros(x)).collect(),
            cycles_completed: 4,
            ..Default::default()
        };
        // sample sd = sqrt(5/3), z(0.975) = 1.959964
        let expected = 1.959_963_984_540_054 * (5.0f64 / 3.0 / 4.0).sqrt();
        let got = confidence_halfwidth(&stats, 0.95).unwrap().as_micros();
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn zero_cycles_rejected() {
        let p = SystemParameters::default();
        let err = run(
            &p,
            ProtocolVariant::NccArq,
            LinkErrorModel::deterministic(&p, 1),
            0,
        )
        .unwrap_err();
        assert_eq!(err.error, SimError::NoCycles);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let p = SystemParameters {
            sifs_us: 80.0,
            ..Default::default()
        };
        let err = run(
            &p,
            ProtocolVariant::NccArq,
            LinkErrorModel::deterministic(&p, 1),
            1,
        )
        .unwrap_err();
        assert!(matches!(err.error, SimError::InvalidParameters(_)));
    }

    #[test]
    fn trace_jsonl_round_trip() {
        let p = SystemParameters::default();
        let out = run(
            &p,
            ProtocolVariant::NccArq,
            LinkErrorModel::deterministic(&p, 2),
            3,
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trace(&out.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), out.trace.len());
        assert_eq!(read_trace(&text).unwrap(), out.trace);
    }
}
