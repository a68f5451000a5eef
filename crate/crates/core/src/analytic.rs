//! Closed-form cycle delay and aggregated throughput for NCC-ARQ and the
//! plain cooperative ARQ baseline.
//!
//! A "cycle" is the exchange of one packet in each direction between source
//! and destination. NCC-ARQ completes it with a single cooperation phase:
//!
//! ```text
//! T_A + SIFS + T_CFC + T_B + DIFS + T_ONC + E[r]·T_{A⊕B} + SIFS + T_ACK + SIFS + T_ACK
//! ```
//!
//! C-ARQ runs two independent unidirectional cooperative cycles, each with
//! its own CFC and relayed retransmissions at the relay data rate.

use serde::Serialize;

use crate::model::{frame_airtime, validate_parameters, Duration, ParamError, SystemParameters};

/// Breakdown of the expected NCC-ARQ cycle delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CycleBreakdown {
    /// Direct source→destination data transmission.
    pub t_a: Duration,
    /// Cooperation phase.
    pub t_coop: Duration,
    /// `t_a + t_coop`.
    pub total: Duration,
    /// Expected number of coded transmissions.
    pub expected_retx: f64,
}

/// One point of the throughput/delay comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub retx: f64,
    pub ncc_delay_us: Duration,
    pub carq_delay_us: Duration,
    pub ncc_throughput_bps: f64,
    pub carq_throughput_bps: f64,
    pub gain_ratio: f64,
}

/// Airtimes of the frames appearing in the closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Airtimes {
    /// Data frame on the direct source↔destination link.
    pub direct_data: Duration,
    /// Data or coded frame sent over a relay-adjacent link.
    pub relay_data: Duration,
    /// CFC or ACK.
    pub control: Duration,
}

impl Airtimes {
    pub fn new(params: &SystemParameters) -> Result<Self, ParamError> {
        let data = params.mac_header_bytes + params.data_payload_bytes;
        Ok(Self {
            direct_data: frame_airtime(data, params.source_data_rate_bps, params)?,
            relay_data: frame_airtime(data, params.relay_data_rate_bps, params)?,
            control: frame_airtime(
                params.ctrl_packet_bytes,
                params.source_control_rate_bps,
                params,
            )?,
        })
    }
}

fn check_params(params: &SystemParameters) -> Result<(), ParamError> {
    validate_parameters(params).map_err(|v| {
        let first = &v[0];
        ParamError::Invalid {
            name: first.field,
            reason: first.message.clone(),
        }
    })
}

fn check_retx(e_r: f64) -> Result<(), ParamError> {
    if e_r.is_finite() && e_r >= 1.0 {
        Ok(())
    } else {
        Err(ParamError::invalid(
            "e_r",
            format!("expected transmissions must be >= 1, got {e_r}"),
        ))
    }
}

/// Mean number of relay transmissions until the destination decodes,
/// `1 / (1 - per_rd)`.
pub fn expected_retransmissions(per_rd: f64) -> Result<f64, ParamError> {
    if !(0.0..1.0).contains(&per_rd) {
        return Err(ParamError::invalid(
            "per_rd",
            format!("packet error rate must lie in [0, 1), got {per_rd}"),
        ));
    }
    Ok(1.0 / (1.0 - per_rd))
}

pub fn ncc_cooperation_delay(params: &SystemParameters, e_r: f64) -> Result<Duration, ParamError> {
    check_params(params)?;
    check_retx(e_r)?;
    let air = Airtimes::new(params)?;
    let sifs = Duration::from_micros(params.sifs_us);
    let difs = Duration::from_micros(params.difs_us);
    let onc = Duration::from_micros(params.t_onc_us);
    // CFC and piggybacked B are separate units, each with its own preamble.
    let t_b = air.relay_data;
    let t_coded = air.relay_data;
    Ok(sifs
        + air.control
        + t_b
        + difs
        + onc
        + t_coded * e_r
        + sifs
        + air.control
        + sifs
        + air.control)
}

pub fn ncc_cycle_delay(params: &SystemParameters, e_r: f64) -> Result<CycleBreakdown, ParamError> {
    let t_coop = ncc_cooperation_delay(params, e_r)?;
    let t_a = Airtimes::new(params)?.direct_data;
    Ok(CycleBreakdown {
        t_a,
        t_coop,
        total: t_a + t_coop,
        expected_retx: e_r,
    })
}

/// Aggregated throughput in b/s: two payloads per cycle.
pub fn ncc_throughput(params: &SystemParameters, e_r: f64) -> Result<f64, ParamError> {
    let delay = ncc_cycle_delay(params, e_r)?.total;
    Ok(two_packet_throughput(params, delay))
}

/// Time for C-ARQ to move one packet each way.
pub fn carq_cycle_delay(params: &SystemParameters, e_r: f64) -> Result<Duration, ParamError> {
    check_params(params)?;
    check_retx(e_r)?;
    let air = Airtimes::new(params)?;
    let sifs = Duration::from_micros(params.sifs_us);
    let difs = Duration::from_micros(params.difs_us);
    let one_way =
        air.direct_data + sifs + air.control + difs + air.relay_data * e_r + sifs + air.control;
    Ok(one_way * 2.0)
}

pub fn carq_throughput(params: &SystemParameters, e_r: f64) -> Result<f64, ParamError> {
    let delay = carq_cycle_delay(params, e_r)?;
    Ok(two_packet_throughput(params, delay))
}

fn two_packet_throughput(params: &SystemParameters, delay: Duration) -> f64 {
    let payload_bits = 8.0 * f64::from(params.data_payload_bytes);
    2.0 * payload_bits / delay.as_secs()
}

pub fn sweep(params: &SystemParameters, retx_values: &[f64]) -> Result<Vec<SweepRow>, ParamError> {
    retx_values
        .iter()
        .map(|&retx| {
            let ncc_delay_us = ncc_cycle_delay(params, retx)?.total;
            let carq_delay_us = carq_cycle_delay(params, retx)?;
            let ncc_throughput_bps = two_packet_throughput(params, ncc_delay_us);
            let carq_throughput_bps = two_packet_throughput(params, carq_delay_us);
            Ok(SweepRow {
                retx,
                ncc_delay_us,
                carq_delay_us,
                ncc_throughput_bps,
                carq_throughput_bps,
                gain_ratio: ncc_throughput_bps / carq_throughput_bps,
            })
        })
        .collect()
}
