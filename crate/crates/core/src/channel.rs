//! Per-link frame error model.
//!
//! Two modes:
//!
//! * **Deterministic**: each link has a scripted number of initial failures
//!   per cooperation cycle. Attempt `k` of a frame fails iff
//!   `k <= scripted_failures`, so a relay needs exactly `failures + 1`
//!   transmissions.
//! * **Stochastic**: every evaluated delivery is a Bernoulli trial with the
//!   link's PER, drawn from a ChaCha8 stream seeded with a 64-bit seed. A
//!   draw is consumed only when the link's PER is positive.
//!
//! Regardless of mode, data frames on the direct source↔destination link
//! always arrive corrupted and control frames always arrive intact.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{FrameKind, NodeId, SystemParameters};

pub type Link = (NodeId, NodeId);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    Deterministic,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Delivered,
    Corrupted,
}

impl Outcome {
    pub fn is_delivered(self) -> bool {
        self == Outcome::Delivered
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("no link configured from {0} to {1}")]
    UnknownLink(NodeId, NodeId),
    #[error("packet error rate for link {0}->{1} must lie in [0, 1), got {2}")]
    InvalidPer(NodeId, NodeId, f64),
}

#[derive(Debug, Clone)]
pub struct LinkErrorModel {
    mode: ChannelMode,
    per: BTreeMap<Link, f64>,
    scripted_failures: BTreeMap<Link, u32>,
    seed: u64,
    /// Coded multicast fails if either leg fails, not only relay→destination.
    both_legs: bool,
    rng: ChaCha8Rng,
    failures_this_cycle: BTreeMap<Link, u32>,
}

impl LinkErrorModel {
    fn with_mode(mode: ChannelMode, params: &SystemParameters, seed: u64) -> Self {
        use NodeId::*;
        let per = BTreeMap::from([
            ((Source, Destination), params.per_sd),
            ((Destination, Source), params.per_sd),
            ((Relay, Destination), params.per_rd),
            ((Relay, Source), params.per_rs),
            ((Source, Relay), 0.0),
            ((Destination, Relay), 0.0),
        ]);
        Self {
            mode,
            per,
            scripted_failures: BTreeMap::new(),
            seed,
            both_legs: false,
            rng: ChaCha8Rng::seed_from_u64(seed),
            failures_this_cycle: BTreeMap::new(),
        }
    }

    /// Scripted channel: the relay needs exactly `retx` transmissions on
    /// both relay-adjacent links in every cycle.
    pub fn deterministic(params: &SystemParameters, retx: u32) -> Self {
        let mut m = Self::with_mode(ChannelMode::Deterministic, params, 0);
        let failures = retx.saturating_sub(1);
        m.scripted_failures
            .insert((NodeId::Relay, NodeId::Destination), failures);
        m.scripted_failures
            .insert((NodeId::Relay, NodeId::Source), failures);
        m
    }

    /// Bernoulli channel using the PERs in `params`.
    pub fn stochastic(params: &SystemParameters, seed: u64) -> Self {
        Self::with_mode(ChannelMode::Stochastic, params, seed)
    }

    pub fn with_scripted_failures(mut self, link: Link, failures: u32) -> Self {
        self.scripted_failures.insert(link, failures);
        self
    }

    pub fn with_link_per(mut self, link: Link, per: f64) -> Result<Self, ChannelError> {
        if !(0.0..1.0).contains(&per) {
            return Err(ChannelError::InvalidPer(link.0, link.1, per));
        }
        self.per.insert(link, per);
        Ok(self)
    }

    pub fn with_both_legs(mut self, both_legs: bool) -> Self {
        self.both_legs = both_legs;
        self
    }

    pub fn mode(&self) -> ChannelMode {
        self.mode
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn both_legs(&self) -> bool {
        self.both_legs
    }

    pub fn per(&self, link: Link) -> Option<f64> {
        self.per.get(&link).copied()
    }

    pub fn scripted_failures(&self, link: Link) -> u32 {
        self.scripted_failures.get(&link).copied().unwrap_or(0)
    }

    /// Failures injected on `link` since the last [`reset_cycle`](Self::reset_cycle).
    pub fn failures_this_cycle(&self, link: Link) -> u32 {
        self.failures_this_cycle.get(&link).copied().unwrap_or(0)
    }

    /// Decides whether `dst` receives attempt `attempt_index` (1-based) of a
    /// frame of `kind` sent by `src`.
    pub fn deliver_outcome(
        &mut self,
        src: NodeId,
        dst: NodeId,
        kind: FrameKind,
        attempt_index: u32,
    ) -> Result<Outcome, ChannelError> {
        let link = (src, dst);
        let per = self
            .per
            .get(&link)
            .copied()
            .ok_or(ChannelError::UnknownLink(src, dst))?;

        let direct = matches!(
            link,
            (NodeId::Source, NodeId::Destination) | (NodeId::Destination, NodeId::Source)
        );
        if kind == FrameKind::Data && direct {
            return Ok(Outcome::Corrupted);
        }
        if kind.is_control() {
            return Ok(Outcome::Delivered);
        }
        if kind == FrameKind::Coded && dst == NodeId::Source && !self.both_legs {
            return Ok(Outcome::Delivered);
        }

        let failed = match self.mode {
            ChannelMode::Deterministic => attempt_index <= self.scripted_failures(link),
            ChannelMode::Stochastic => per > 0.0 && self.rng.random::<f64>() < per,
        };
        if failed {
            *self.failures_this_cycle.entry(link).or_insert(0) += 1;
            Ok(Outcome::Corrupted)
        } else {
            Ok(Outcome::Delivered)
        }
    }

    /// Starts a new cooperation cycle. Clears the per-cycle failure
    /// counters; the random stream keeps its position.
    pub fn reset_cycle(&mut self) {
        self.failures_this_cycle.clear();
    }
}
