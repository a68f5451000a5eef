//! Shared configuration, frame definitions and time arithmetic.
//!
//! Everything here is a plain value type. Times are real-valued microseconds
//! in double precision; rates are bits per second.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::netcode::{CodedPayload, PacketId, Payload};

/// Relative tolerance used when comparing derived microsecond values.
pub const TIME_RTOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("invalid parameter `{name}`: {reason}")]
    Invalid { name: &'static str, reason: String },
}

impl ParamError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        ParamError::Invalid {
            name,
            reason: reason.into(),
        }
    }
}

/// A span of virtual time, or an absolute instant measured from zero, in µs.
#[derive(Debug, Clone, Copy, Default, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Duration(f64);

impl Duration {
    pub const ZERO: Duration = Duration(0.0);

    /// Panics on negative or non-finite input; use [`Duration::try_from_micros`]
    /// for untrusted values.
    pub fn from_micros(us: f64) -> Self {
        Self::try_from_micros(us).expect("duration must be finite and non-negative")
    }

    pub fn try_from_micros(us: f64) -> Result<Self, ParamError> {
        if us.is_finite() && us >= 0.0 {
            Ok(Duration(us))
        } else {
            Err(ParamError::invalid(
                "duration",
                format!("{us} µs is not a finite non-negative time"),
            ))
        }
    }

    pub fn as_micros(self) -> f64 {
        self.0
    }

    pub fn as_millis(self) -> f64 {
        self.0 / 1e3
    }

    pub fn as_secs(self) -> f64 {
        self.0 / 1e6
    }

    /// `true` when `self` and `other` agree within relative tolerance `rtol`.
    pub fn approx_eq(self, other: Duration, rtol: f64) -> bool {
        let scale = self.0.abs().max(other.0.abs());
        (self.0 - other.0).abs() <= rtol * scale
    }
}

impl Add for Duration {
    type Output = Duration;
    fn add(self, rhs: Duration) -> Duration {
        Duration(self.0 + rhs.0)
    }
}

impl AddAssign for Duration {
    fn add_assign(&mut self, rhs: Duration) {
        self.0 += rhs.0;
    }
}

/// Saturates at zero; durations never go negative.
impl Sub for Duration {
    type Output = Duration;
    fn sub(self, rhs: Duration) -> Duration {
        Duration((self.0 - rhs.0).max(0.0))
    }
}

impl Mul<f64> for Duration {
    type Output = Duration;
    fn mul(self, rhs: f64) -> Duration {
        Duration::from_micros(self.0 * rhs)
    }
}

impl Sum for Duration {
    fn sum<I: Iterator<Item = Duration>>(iter: I) -> Duration {
        iter.fold(Duration::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Duration> for Duration {
    fn sum<I: Iterator<Item = &'a Duration>>(iter: I) -> Duration {
        iter.copied().sum()
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4} µs", self.0)
    }
}

/// Timing, size and rate constants of the three-node scenario plus the
/// per-link packet error rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParameters {
    pub mac_header_bytes: u32,
    pub phy_header_us: f64,
    /// Payload size; E[P] in bits is eight times this.
    pub data_payload_bytes: u32,
    /// Size of ACK and CFC control packets.
    pub ctrl_packet_bytes: u32,
    pub sifs_us: f64,
    pub difs_us: f64,
    pub source_control_rate_bps: f64,
    pub source_data_rate_bps: f64,
    pub relay_control_rate_bps: f64,
    pub relay_data_rate_bps: f64,
    /// Time the relay spends XOR-combining two packets.
    pub t_onc_us: f64,
    /// Source↔destination PER (symmetric).
    pub per_sd: f64,
    /// Relay→destination PER.
    pub per_rd: f64,
    /// Relay→source PER.
    pub per_rs: f64,
}

impl Default for SystemParameters {
    fn default() -> Self {
        Self {
            mac_header_bytes: 34,
            phy_header_us: 96.0,
            data_payload_bytes: 1500,
            ctrl_packet_bytes: 14,
            sifs_us: 10.0,
            difs_us: 50.0,
            source_control_rate_bps: 6e6,
            source_data_rate_bps: 6e6,
            relay_control_rate_bps: 6e6,
            relay_data_rate_bps: 54e6,
            t_onc_us: 0.0,
            per_sd: 0.0,
            per_rd: 0.0,
            per_rs: 0.0,
        }
    }
}

/// One violated invariant reported by [`validate_parameters`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Checks every parameter invariant and returns all violations found.
pub fn validate_parameters(params: &SystemParameters) -> Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let mut push = |field: &'static str, message: String| out.push(Violation { field, message });

    for (field, v) in [
        ("mac_header_bytes", params.mac_header_bytes),
        ("data_payload_bytes", params.data_payload_bytes),
        ("ctrl_packet_bytes", params.ctrl_packet_bytes),
    ] {
        if v == 0 {
            push(field, "byte count must be > 0".into());
        }
    }
    for (field, v) in [
        ("source_control_rate_bps", params.source_control_rate_bps),
        ("source_data_rate_bps", params.source_data_rate_bps),
        ("relay_control_rate_bps", params.relay_control_rate_bps),
        ("relay_data_rate_bps", params.relay_data_rate_bps),
    ] {
        if !(v.is_finite() && v > 0.0) {
            push(field, format!("rate must be finite and > 0, got {v}"));
        }
    }
    for (field, v) in [
        ("phy_header_us", params.phy_header_us),
        ("sifs_us", params.sifs_us),
        ("difs_us", params.difs_us),
        ("t_onc_us", params.t_onc_us),
    ] {
        if !(v.is_finite() && v >= 0.0) {
            push(field, format!("duration must be finite and >= 0, got {v}"));
        }
    }
    if params.sifs_us.partial_cmp(&params.difs_us) != Some(std::cmp::Ordering::Less) {
        push(
            "sifs_us",
            format!(
                "SIFS ({}) must be shorter than DIFS ({})",
                params.sifs_us, params.difs_us
            ),
        );
    }
    for (field, v) in [
        ("per_sd", params.per_sd),
        ("per_rd", params.per_rd),
        ("per_rs", params.per_rs),
    ] {
        if !(0.0..1.0).contains(&v) {
            push(
                field,
                format!("packet error rate must lie in [0, 1), got {v}"),
            );
        }
    }

    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// PHY header plus the serialization time of `size_bytes` at `rate_bps`.
pub fn frame_airtime(
    size_bytes: u32,
    rate_bps: f64,
    params: &SystemParameters,
) -> Result<Duration, ParamError> {
    if size_bytes == 0 {
        return Err(ParamError::invalid("size_bytes", "frame size must be > 0"));
    }
    if !(rate_bps.is_finite() && rate_bps > 0.0) {
        return Err(ParamError::invalid(
            "rate_bps",
            format!("rate must be finite and > 0, got {rate_bps}"),
        ));
    }
    let bits = 8.0 * f64::from(size_bytes);
    Duration::try_from_micros(params.phy_header_us + bits / (rate_bps / 1e6))
}

/// The three stations of the two-way relay topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeId {
    Source,
    Destination,
    Relay,
}

impl NodeId {
    pub const ALL: [NodeId; 3] = [NodeId::Source, NodeId::Destination, NodeId::Relay];

    pub fn index(self) -> usize {
        self as usize
    }

    /// The other endpoint of the bidirectional flow; `None` for the relay.
    pub fn peer(self) -> Option<NodeId> {
        match self {
            NodeId::Source => Some(NodeId::Destination),
            NodeId::Destination => Some(NodeId::Source),
            NodeId::Relay => None,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeId::Source => "S",
            NodeId::Destination => "D",
            NodeId::Relay => "R",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Address {
    Unicast(NodeId),
    /// Both endpoints; used only for the relay's coded frame.
    Multicast,
}

impl Address {
    pub fn includes(self, node: NodeId) -> bool {
        match self {
            Address::Unicast(n) => n == node,
            Address::Multicast => node != NodeId::Relay,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FrameKind {
    Data,
    Cfc,
    CfcPiggyback,
    Coded,
    Ack,
}

impl FrameKind {
    pub const ALL: [FrameKind; 5] = [
        FrameKind::Data,
        FrameKind::Cfc,
        FrameKind::CfcPiggyback,
        FrameKind::Coded,
        FrameKind::Ack,
    ];

    pub fn is_control(self) -> bool {
        matches!(
            self,
            FrameKind::Cfc | FrameKind::CfcPiggyback | FrameKind::Ack
        )
    }
}

impl fmt::Display for FrameKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FrameKind::Data => "DATA",
            FrameKind::Cfc => "CFC",
            FrameKind::CfcPiggyback => "CFC_PIGGYBACK",
            FrameKind::Coded => "CODED",
            FrameKind::Ack => "ACK",
        })
    }
}

/// What a frame carries. The frame kind is derived from this.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameBody {
    Data(Payload),
    Cfc,
    CfcPiggyback(Payload),
    Coded(CodedPayload),
    Ack(PacketId),
}

/// A MAC-layer message on the shared channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub src: NodeId,
    pub dst: Address,
    pub body: FrameBody,
    /// 1-based transmission attempt of this frame within the cycle.
    pub attempt: u32,
    pub cycle: u64,
}

impl Frame {
    pub fn kind(&self) -> FrameKind {
        match self.body {
            FrameBody::Data(_) => FrameKind::Data,
            FrameBody::Cfc => FrameKind::Cfc,
            FrameBody::CfcPiggyback(_) => FrameKind::CfcPiggyback,
            FrameBody::Coded(_) => FrameKind::Coded,
            FrameBody::Ack(_) => FrameKind::Ack,
        }
    }

    /// Packet identities carried: one for DATA, piggyback and ACK, two for
    /// CODED, none for CFC.
    pub fn carries(&self) -> Vec<PacketId> {
        match &self.body {
            FrameBody::Data(p) | FrameBody::CfcPiggyback(p) => vec![p.id],
            FrameBody::Coded(c) => vec![c.ids.0, c.ids.1],
            FrameBody::Ack(id) => vec![*id],
            FrameBody::Cfc => Vec::new(),
        }
    }

    /// MAC size in bytes. A piggybacked CFC is two back-to-back units; this
    /// returns their combined byte count.
    pub fn size_bytes(&self, params: &SystemParameters) -> u32 {
        let data = params.mac_header_bytes + params.data_payload_bytes;
        match self.kind() {
            FrameKind::Data | FrameKind::Coded => data,
            FrameKind::Cfc | FrameKind::Ack => params.ctrl_packet_bytes,
            FrameKind::CfcPiggyback => params.ctrl_packet_bytes + data,
        }
    }

    /// Channel occupancy of this frame. Stations use their control and data
    /// rates; the piggybacked packet rides the relay-adjacent link and is
    /// sent at the relay data rate with its own PHY header.
    pub fn airtime(&self, params: &SystemParameters) -> Result<Duration, ParamError> {
        let data = params.mac_header_bytes + params.data_payload_bytes;
        let ctrl = params.ctrl_packet_bytes;
        let from_relay = self.src == NodeId::Relay;
        let (control_rate, data_rate) = if from_relay {
            (params.relay_control_rate_bps, params.relay_data_rate_bps)
        } else {
            (params.source_control_rate_bps, params.source_data_rate_bps)
        };
        match self.kind() {
            FrameKind::Data => frame_airtime(data, data_rate, params),
            FrameKind::Coded => frame_airtime(data, params.relay_data_rate_bps, params),
            FrameKind::Cfc | FrameKind::Ack => frame_airtime(ctrl, control_rate, params),
            FrameKind::CfcPiggyback => Ok(frame_airtime(ctrl, control_rate, params)?
                + frame_airtime(data, params.relay_data_rate_bps, params)?),
        }
    }
}
