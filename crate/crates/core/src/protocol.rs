//! Per-node state machines for NCC-ARQ and the plain cooperative ARQ
//! baseline.
//!
//! Each transition is a pure function: it consumes a [`NodeState`] and one
//! [`NodeEvent`] and returns the next state plus the [`Action`]s the node
//! wants performed. Nodes own no clock and no queue; the engine supplies
//! both.
//!
//! NCC-ARQ cycle, packet `A` from the source and `B` from the destination:
//!
//! 1. source sends DATA `A`; the destination receives it corrupted, the
//!    relay overhears and stores it;
//! 2. after SIFS the destination sends CFC with `B` piggybacked to the relay;
//! 3. after DIFS (plus coding time) the relay multicasts `A ⊕ B`, repeating
//!    back-to-back until the destination decodes;
//! 4. after SIFS the destination acknowledges `A`;
//! 5. after another SIFS the source acknowledges `B` and the next cycle starts.
//!
//! The baseline moves `A` and then `B` through two independent cooperative
//! cycles (DATA, CFC, relayed DATA, ACK), without piggybacking or coding.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::Outcome;
use crate::model::{
    frame_airtime, Address, Duration, Frame, FrameBody, FrameKind, NodeId, ParamError,
    SystemParameters,
};
use crate::netcode::{xor_decode, xor_encode, CodingError, OverheardStore, PacketId, Payload};

pub type NodeRole = NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolVariant {
    NccArq,
    CArq,
}

impl std::fmt::Display for ProtocolVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ProtocolVariant::NccArq => "ncc-arq",
            ProtocolVariant::CArq => "c-arq",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Idle,
    AwaitCfc,
    /// Waiting for the relay's coded (or relayed) copy.
    AwaitCoded,
    AwaitAckD,
    AwaitAckS,
    Cooperating,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("protocol violation at {node} in cycle {cycle}: {detail}")]
    Violation {
        node: NodeId,
        cycle: u64,
        detail: String,
    },
    #[error("{node} gave up after {attempts} relay attempts in cycle {cycle}")]
    MaxAttempts {
        node: NodeId,
        cycle: u64,
        attempts: u32,
    },
    #[error(transparent)]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// Identifies one armed cooperation timer so stale expiries can be ignored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TimerTag {
    pub cycle: u64,
    pub attempt: u32,
}

/// Something that happens to a node.
#[derive(Debug, Clone, Copy)]
pub enum NodeEvent<'a> {
    /// Start of a new exchange; delivered to the source only.
    CycleStart {
        cycle: u64,
    },
    /// End of a frame sent by another node, with the channel's verdict at
    /// this receiver.
    Received {
        frame: &'a Frame,
        outcome: Outcome,
    },
    /// End of this node's own transmission. `feedback` holds the verdict at
    /// each addressed receiver (instantaneous failure detection).
    Sent {
        frame: &'a Frame,
        feedback: &'a [(NodeId, Outcome)],
    },
    TimerExpired {
        tag: TimerTag,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ActionKind {
    Transmit,
    SetTimer,
    DeliverToApp,
    EndCycle,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Transmit {
        frame: Frame,
        delay: Duration,
        note: &'static str,
    },
    SetTimer {
        tag: TimerTag,
        delay: Duration,
    },
    DeliverToApp {
        payload: Payload,
    },
    /// The exchange is complete; only the source emits this.
    EndCycle,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Transmit { .. } => ActionKind::Transmit,
            Action::SetTimer { .. } => ActionKind::SetTimer,
            Action::DeliverToApp { .. } => ActionKind::DeliverToApp,
            Action::EndCycle => ActionKind::EndCycle,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    /// Relay transmissions allowed per cycle before the run is aborted.
    pub max_attempts: u32,
    /// Per-acknowledgment slot of the cooperation timeout used when coded
    /// frames can fail on either leg. Defaults to SIFS + T_ACK.
    pub coop_timeout: Option<Duration>,
    /// Coded multicast must reach both endpoints; the relay then relies on
    /// the cooperation timer instead of instantaneous failure detection.
    pub both_legs: bool,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            max_attempts: 100,
            coop_timeout: None,
            both_legs: false,
        }
    }
}

/// Read-only inputs to every transition.
#[derive(Debug, Clone)]
pub struct StepContext {
    pub params: SystemParameters,
    pub config: ProtocolConfig,
    sifs: Duration,
    difs: Duration,
    onc: Duration,
    ack_slot: Duration,
}

impl StepContext {
    pub fn new(params: SystemParameters, config: ProtocolConfig) -> Result<Self, ParamError> {
        let sifs = Duration::try_from_micros(params.sifs_us)?;
        let t_ack = frame_airtime(
            params.ctrl_packet_bytes,
            params.source_control_rate_bps,
            &params,
        )?;
        let ack_slot = config.coop_timeout.unwrap_or(sifs + t_ack);
        if ack_slot < sifs + t_ack {
            return Err(ParamError::Invalid {
                name: "coop_timeout",
                reason: format!("must be at least SIFS + T_ACK ({})", sifs + t_ack),
            });
        }
        Ok(Self {
            difs: Duration::try_from_micros(params.difs_us)?,
            onc: Duration::try_from_micros(params.t_onc_us)?,
            sifs,
            ack_slot,
            params,
            config,
        })
    }
}

/// Protocol state of one station.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    pub role: NodeRole,
    pub variant: ProtocolVariant,
    pub store: OverheardStore,
    /// Application packets waiting to be sent; refilled on demand (saturation).
    pub pending_tx: VecDeque<Payload>,
    pub phase: Phase,
    pub current_cycle: u64,
    /// Relay transmissions of the coded (or relayed) frame this cycle.
    pub attempt_count: u32,
    next_seq: u64,
    payload_len: usize,
    /// Relay: frame being retransmitted.
    relaying: Option<FrameBody>,
    relay_target: Option<NodeId>,
    /// Endpoint: already decoded this cycle's coded frame.
    decoded: bool,
    /// Endpoint: own acknowledgment has been scheduled / has gone out.
    ack_scheduled: bool,
    ack_sent: bool,
    /// Source: the destination's acknowledgment has been observed.
    peer_acked: bool,
    /// Endpoint: packet recovered this cycle, still to be acknowledged.
    decoded_id: Option<PacketId>,
}

impl NodeState {
    pub fn new(role: NodeRole, variant: ProtocolVariant, payload_len: usize) -> Self {
        Self {
            role,
            variant,
            store: OverheardStore::new(),
            pending_tx: VecDeque::new(),
            phase: Phase::Idle,
            current_cycle: 0,
            attempt_count: 0,
            next_seq: 0,
            payload_len,
            relaying: None,
            relay_target: None,
            decoded: false,
            ack_scheduled: false,
            ack_sent: false,
            peer_acked: false,
            decoded_id: None,
        }
    }

    /// Pops the next application packet, generating one when the queue is
    /// empty.
    fn take_outbound(&mut self) -> Payload {
        if let Some(p) = self.pending_tx.pop_front() {
            return p;
        }
        let id = PacketId::new(self.role, self.next_seq);
        self.next_seq += 1;
        Payload::synthetic(id, self.payload_len)
    }

    fn begin_cycle(&mut self, cycle: u64) {
        self.current_cycle = cycle;
        self.attempt_count = 0;
        self.decoded = false;
        self.ack_scheduled = false;
        self.ack_sent = false;
        self.peer_acked = false;
        self.decoded_id = None;
    }

    fn violation(&self, detail: impl Into<String>) -> ProtocolError {
        ProtocolError::Violation {
            node: self.role,
            cycle: self.current_cycle,
            detail: detail.into(),
        }
    }

    fn frame(&self, dst: Address, body: FrameBody) -> Frame {
        Frame {
            src: self.role,
            dst,
            body,
            attempt: 1,
            cycle: self.current_cycle,
        }
    }

    /// Drops the own packet once the peer has acknowledged it and it is no
    /// longer needed to decode the peer's packet.
    fn release_own(&mut self) {
        if let Some(id) = self.store.find_from(self.role).map(|p| p.id) {
            self.store.release(id);
        }
    }

    /// Own packet that is still awaiting acknowledgment.
    fn own_unacked(&self) -> Result<&Payload, ProtocolError> {
        self.store
            .find_from(self.role)
            .ok_or_else(|| self.violation("no own packet held to decode against"))
    }
}

type StepResult = Result<(NodeState, Vec<Action>), ProtocolError>;

/// Dispatches to the transition function of the state's variant.
pub fn step(state: NodeState, event: NodeEvent<'_>, ctx: &StepContext) -> StepResult {
    match state.variant {
        ProtocolVariant::NccArq => ncc_step(state, event, ctx),
        ProtocolVariant::CArq => carq_step(state, event, ctx),
    }
}

fn transmit(frame: Frame, delay: Duration, note: &'static str) -> Action {
    Action::Transmit { frame, delay, note }
}

fn addressed_outcome(feedback: &[(NodeId, Outcome)], node: NodeId) -> Option<Outcome> {
    feedback.iter().find(|(n, _)| *n == node).map(|(_, o)| *o)
}

pub fn ncc_step(state: NodeState, event: NodeEvent<'_>, ctx: &StepContext) -> StepResult {
    match state.role {
        NodeId::Source => ncc_source(state, event, ctx),
        NodeId::Destination => ncc_destination(state, event, ctx),
        NodeId::Relay => ncc_relay(state, event, ctx),
    }
}

fn ncc_source(mut s: NodeState, event: NodeEvent<'_>, ctx: &StepContext) -> StepResult {
    let mut actions = Vec::new();
    match event {
        NodeEvent::CycleStart { cycle } => {
            if s.phase != Phase::Idle {
                return Err(s.violation(format!("cycle start while in {:?}", s.phase)));
            }
            s.begin_cycle(cycle);
            let a = s.take_outbound();
            s.store.store(a.clone());
            let frame = s.frame(Address::Unicast(NodeId::Destination), FrameBody::Data(a));
            actions.push(transmit(frame, Duration::ZERO, "data A"));
            s.phase = Phase::AwaitCoded;
        }
        NodeEvent::Received { frame, outcome } => match &frame.body {
            FrameBody::Coded(coded) if outcome.is_delivered() && !s.decoded => {
                let known = s.own_unacked()?;
                if !coded.contains(known.id) {
                    return Err(s.violation(format!("coded pair does not include {}", known.id)));
                }
                let b = xor_decode(coded, known)?;
                s.decoded = true;
                s.decoded_id = Some(b.id);
                if s.peer_acked {
                    s.release_own();
                }
                actions.push(Action::DeliverToApp { payload: b });
                if ctx.config.both_legs {
                    // Fixed ACK slots: destination first, then source.
                    let delay = if s.peer_acked {
                        ctx.sifs
                    } else {
                        ctx.sifs + ctx.ack_slot
                    };
                    actions.push(ack_to(&mut s, delay)?);
                    s.phase = Phase::AwaitAckS;
                } else if s.peer_acked {
                    actions.push(ack_to(&mut s, ctx.sifs)?);
                    s.phase = Phase::AwaitAckS;
                } else {
                    s.phase = Phase::AwaitAckD;
                }
            }
            FrameBody::Ack(id) if frame.src == NodeId::Destination => {
                if id.origin != NodeId::Source {
                    return Err(s.violation(format!("unexpected ack for {id}")));
                }
                if s.decoded {
                    s.store.release(*id);
                }
                s.peer_acked = true;
                if s.ack_sent {
                    return Ok(finish_cycle(s, actions));
                }
                if s.decoded && !s.ack_scheduled {
                    actions.push(ack_to(&mut s, ctx.sifs)?);
                    s.phase = Phase::AwaitAckS;
                }
            }
            _ => {}
        },
        NodeEvent::Sent { frame, .. } => {
            if frame.kind() == FrameKind::Ack {
                s.ack_sent = true;
                if s.peer_acked {
                    return Ok(finish_cycle(s, actions));
                }
            }
        }
        NodeEvent::TimerExpired { .. } => {}
    }
    Ok((s, actions))
}

/// Schedules the acknowledgment for the packet decoded this cycle.
fn ack_to(s: &mut NodeState, delay: Duration) -> Result<Action, ProtocolError> {
    let id = s
        .decoded_id
        .ok_or_else(|| s.violation("acknowledgment requested before decoding"))?;
    s.ack_scheduled = true;
    let frame = s.frame(Address::Unicast(id.origin), FrameBody::Ack(id));
    Ok(transmit(frame, delay, "ack"))
}

fn finish_cycle(mut s: NodeState, mut actions: Vec<Action>) -> (NodeState, Vec<Action>) {
    s.phase = Phase::Idle;
    actions.push(Action::EndCycle);
    (s, actions)
}

fn ncc_destination(mut s: NodeState, event: NodeEvent<'_>, ctx: &StepContext) -> StepResult {
    let mut actions = Vec::new();
    if let NodeEvent::Received { frame, outcome } = event {
        match &frame.body {
            FrameBody::Data(_) if frame.src == NodeId::Source => {
                if outcome.is_delivered() {
                    return Err(s.violation("direct delivery of source data is not modelled"));
                }
                if s.phase != Phase::Idle {
                    return Err(s.violation(format!("new data while in {:?}", s.phase)));
                }
                s.begin_cycle(frame.cycle);
                let b = s.take_outbound();
                s.store.store(b.clone());
                let cfc = s.frame(Address::Unicast(NodeId::Relay), FrameBody::CfcPiggyback(b));
                actions.push(transmit(cfc, ctx.sifs, "cfc + B"));
                s.phase = Phase::AwaitCoded;
            }
            FrameBody::Coded(coded) if outcome.is_delivered() && !s.decoded => {
                let known = s.own_unacked()?;
                let a = xor_decode(coded, known)?;
                s.decoded = true;
                s.decoded_id = Some(a.id);
                actions.push(Action::DeliverToApp { payload: a });
                actions.push(ack_to(&mut s, ctx.sifs)?);
                if s.peer_acked {
                    s.release_own();
                    s.phase = Phase::Idle;
                } else {
                    s.phase = Phase::AwaitAckS;
                }
            }
            FrameBody::Ack(id) if frame.src == NodeId::Source => {
                if id.origin != NodeId::Destination {
                    return Err(s.violation(format!("unexpected ack for {id}")));
                }
                s.peer_acked = true;
                if s.decoded {
                    s.store.release(*id);
                    s.phase = Phase::Idle;
                }
            }
            _ => {}
        }
    }
    Ok((s, actions))
}

fn ncc_relay(mut s: NodeState, event: NodeEvent<'_>, ctx: &StepContext) -> StepResult {
    let mut actions = Vec::new();
    match event {
        NodeEvent::Received { frame, outcome } => match &frame.body {
            FrameBody::Data(p) if outcome.is_delivered() => {
                s.store.store(p.clone());
                s.current_cycle = frame.cycle;
                s.phase = Phase::AwaitCfc;
            }
            FrameBody::CfcPiggyback(b) => {
                if s.phase != Phase::AwaitCfc {
                    return Err(s.violation(format!("CFC while in {:?}", s.phase)));
                }
                s.store.store(b.clone());
                let a = s
                    .store
                    .find_from(NodeId::Source)
                    .ok_or_else(|| s.violation("CFC received but no overheard source packet"))?;
                let coded = xor_encode(a, b)?;
                s.begin_cycle(frame.cycle);
                s.attempt_count = 1;
                s.phase = Phase::Cooperating;
                let body = FrameBody::Coded(coded);
                s.relaying = Some(body.clone());
                let frame = s.frame(Address::Multicast, body);
                actions.push(transmit(frame, ctx.difs + ctx.onc, "coded A^B"));
            }
            FrameBody::Ack(id) => {
                s.store.release(*id);
                if s.relaying.is_some() {
                    if relay_pending(&s) == 0 {
                        s.relaying = None;
                        s.phase = Phase::Idle;
                    } else if !ctx.config.both_legs {
                        s.phase = Phase::AwaitAckS;
                    }
                }
            }
            _ => {}
        },
        NodeEvent::Sent { frame, feedback } if frame.kind() == FrameKind::Coded => {
            if ctx.config.both_legs {
                let pending = relay_pending(&s) as f64;
                let tag = TimerTag {
                    cycle: s.current_cycle,
                    attempt: s.attempt_count,
                };
                actions.push(Action::SetTimer {
                    tag,
                    delay: ctx.ack_slot * pending + ctx.sifs,
                });
            } else {
                match addressed_outcome(feedback, NodeId::Destination) {
                    Some(Outcome::Corrupted) => actions.push(relay_again(&mut s, ctx)?),
                    Some(Outcome::Delivered) => s.phase = Phase::AwaitAckD,
                    None => return Err(s.violation("no feedback for coded frame")),
                }
            }
        }
        NodeEvent::TimerExpired { tag } => {
            let current = tag.cycle == s.current_cycle && tag.attempt == s.attempt_count;
            if current && s.phase == Phase::Cooperating && relay_pending(&s) > 0 {
                actions.push(relay_again(&mut s, ctx)?);
            }
        }
        _ => {}
    }
    Ok((s, actions))
}

/// Packets of the frame being relayed that are still unacknowledged.
fn relay_pending(s: &NodeState) -> usize {
    match &s.relaying {
        Some(FrameBody::Coded(c)) => [c.ids.0, c.ids.1]
            .iter()
            .filter(|id| s.store.lookup(**id).is_some())
            .count(),
        Some(FrameBody::Data(p)) => usize::from(s.store.lookup(p.id).is_some()),
        _ => 0,
    }
}

/// Retransmits the relayed frame immediately.
fn relay_again(s: &mut NodeState, ctx: &StepContext) -> Result<Action, ProtocolError> {
    if s.attempt_count >= ctx.config.max_attempts {
        return Err(ProtocolError::MaxAttempts {
            node: s.role,
            cycle: s.current_cycle,
            attempts: s.attempt_count,
        });
    }
    let body = s
        .relaying
        .clone()
        .ok_or_else(|| s.violation("retransmission requested with nothing to relay"))?;
    s.attempt_count += 1;
    let dst = match s.relay_target {
        Some(n) => Address::Unicast(n),
        None => Address::Multicast,
    };
    let mut frame = s.frame(dst, body);
    frame.attempt = s.attempt_count;
    Ok(transmit(frame, Duration::ZERO, "relay retransmission"))
}

pub fn carq_step(state: NodeState, event: NodeEvent<'_>, ctx: &StepContext) -> StepResult {
    match state.role {
        NodeId::Relay => carq_relay(state, event, ctx),
        _ => carq_endpoint(state, event, ctx),
    }
}

/// Both endpoints run the same unidirectional logic: send own packet, ask
/// for cooperation when the peer's packet arrives corrupted, acknowledge the
/// relayed copy. The source opens the exchange and the destination sends its
/// packet once its acknowledgment for the first one has gone out.
fn carq_endpoint(mut s: NodeState, event: NodeEvent<'_>, ctx: &StepContext) -> StepResult {
    let mut actions = Vec::new();
    let me = s.role;
    let peer = me.peer().expect("endpoint has a peer");
    match event {
        NodeEvent::CycleStart { cycle } => {
            if me != NodeId::Source || s.phase != Phase::Idle {
                return Err(s.violation(format!("cycle start while in {:?}", s.phase)));
            }
            s.begin_cycle(cycle);
            actions.push(send_own_data(&mut s));
        }
        NodeEvent::Received { frame, outcome } => match &frame.body {
            FrameBody::Data(_) if frame.src == peer => {
                if outcome.is_delivered() {
                    return Err(s.violation("direct delivery of peer data is not modelled"));
                }
                if me == NodeId::Destination {
                    s.begin_cycle(frame.cycle);
                }
                let cfc = s.frame(Address::Unicast(NodeId::Relay), FrameBody::Cfc);
                actions.push(transmit(cfc, ctx.sifs, "cfc"));
                s.phase = Phase::AwaitCoded;
            }
            FrameBody::Data(p)
                if frame.src == NodeId::Relay
                    && frame.dst == Address::Unicast(me)
                    && outcome.is_delivered()
                    && !s.decoded =>
            {
                if p.id.origin != peer {
                    return Err(s.violation(format!("relayed packet {} is not for us", p.id)));
                }
                actions.push(Action::DeliverToApp { payload: p.clone() });
                s.decoded = true;
                s.decoded_id = Some(p.id);
                s.ack_scheduled = true;
                let ack = s.frame(Address::Unicast(peer), FrameBody::Ack(p.id));
                actions.push(transmit(ack, ctx.sifs, "ack"));
                s.phase = if me == NodeId::Destination {
                    Phase::AwaitAckD
                } else {
                    Phase::AwaitAckS
                };
            }
            FrameBody::Ack(id) if frame.src == peer => {
                if id.origin != me {
                    return Err(s.violation(format!("unexpected ack for {id}")));
                }
                s.store.release(*id);
                s.peer_acked = true;
                s.phase = Phase::Idle;
            }
            _ => {}
        },
        NodeEvent::Sent { frame, .. } if frame.kind() == FrameKind::Ack => {
            s.ack_sent = true;
            if me == NodeId::Destination {
                actions.push(send_own_data(&mut s));
            } else {
                return Ok(finish_cycle(s, actions));
            }
        }
        _ => {}
    }
    Ok((s, actions))
}

fn send_own_data(s: &mut NodeState) -> Action {
    let peer = s.role.peer().expect("endpoint has a peer");
    let p = s.take_outbound();
    s.store.store(p.clone());
    s.phase = if s.role == NodeId::Source {
        Phase::AwaitAckD
    } else {
        Phase::AwaitAckS
    };
    let frame = s.frame(Address::Unicast(peer), FrameBody::Data(p));
    transmit(frame, Duration::ZERO, "data")
}

fn carq_relay(mut s: NodeState, event: NodeEvent<'_>, ctx: &StepContext) -> StepResult {
    let mut actions = Vec::new();
    match event {
        NodeEvent::Received { frame, outcome } => match &frame.body {
            FrameBody::Data(p) if frame.src != NodeId::Relay && outcome.is_delivered() => {
                s.store.store(p.clone());
                s.current_cycle = frame.cycle;
                s.phase = Phase::AwaitCfc;
            }
            FrameBody::Cfc => {
                if s.phase != Phase::AwaitCfc {
                    return Err(s.violation(format!("CFC while in {:?}", s.phase)));
                }
                let requester = frame.src;
                let origin = requester
                    .peer()
                    .ok_or_else(|| s.violation("CFC from relay"))?;
                let p = s.store.find_from(origin).cloned().ok_or_else(|| {
                    s.violation(format!("CFC from {requester} but no overheard packet"))
                })?;
                let cycle = s.current_cycle;
                s.begin_cycle(cycle);
                s.attempt_count = 1;
                s.phase = Phase::Cooperating;
                s.relay_target = Some(requester);
                let body = FrameBody::Data(p);
                s.relaying = Some(body.clone());
                let frame = s.frame(Address::Unicast(requester), body);
                actions.push(transmit(frame, ctx.difs, "relayed data"));
            }
            FrameBody::Ack(id) => {
                s.store.release(*id);
                if relay_pending(&s) == 0 {
                    s.relaying = None;
                    s.relay_target = None;
                    s.phase = Phase::Idle;
                }
            }
            _ => {}
        },
        NodeEvent::Sent { frame, feedback } if frame.kind() == FrameKind::Data => {
            let target = s
                .relay_target
                .ok_or_else(|| s.violation("relayed frame without target"))?;
            match addressed_outcome(feedback, target) {
                Some(Outcome::Corrupted) => actions.push(relay_again(&mut s, ctx)?),
                Some(Outcome::Delivered) => {
                    s.phase = if target == NodeId::Destination {
                        Phase::AwaitAckD
                    } else {
                        Phase::AwaitAckS
                    }
                }
                None => return Err(s.violation("no feedback for relayed frame")),
            }
        }
        _ => {}
    }
    Ok((s, actions))
}
