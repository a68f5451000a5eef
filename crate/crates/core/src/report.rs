//! Analytic/simulated comparison tables and their tolerance checks.

use std::fmt::Write as _;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analytic::{self, expected_retransmissions};
use crate::channel::LinkErrorModel;
use crate::engine::{mean_delay, throughput, RunAbort, RunStats, Simulation, TxFilter};
use crate::model::{Duration, FrameKind, ParamError, SystemParameters};
use crate::protocol::{ProtocolConfig, ProtocolVariant};
use crate::scenario::{ScenarioConfig, Sweep};

/// Fixed column order of the CSV output.
pub const CSV_HEADER: &str =
    "retx,variant,source,throughput_mbps,delay_ms,gain,tx_data,tx_cfc,tx_coded,tx_ack";

/// Tolerances applied in check mode.
pub mod tolerance {
    /// Deterministic simulation against the closed form (relative).
    pub const SIM_VS_ANALYTIC: f64 = 1e-9;
    /// Seeded Bernoulli simulation against the closed form (relative).
    pub const STOCHASTIC_VS_ANALYTIC: f64 = 0.01;
    /// Published throughput figures (relative).
    pub const PUBLISHED_THROUGHPUT: f64 = 0.05;
    /// Published delay figures (relative).
    pub const PUBLISHED_DELAY: f64 = 0.10;
    /// Band for NCC-ARQ / C-ARQ throughput ratio, r = 1..=5.
    pub const GAIN_BAND: (f64, f64) = (1.70, 1.85);
}

/// Published reference values for the default parameter set.
pub mod published {
    pub const NCC_THROUGHPUT_R1_BPS: f64 = 7.52e6;
    pub const CARQ_THROUGHPUT_R1_BPS: f64 = 4.3e6;
    pub const NCC_DELAY_R1_MS: f64 = 3.0;
    pub const NCC_DELAY_R5_MS: f64 = 4.4;
    pub const CARQ_DELAY_R1_MS: f64 = 5.6;
    pub const CARQ_DELAY_R5_MS: f64 = 8.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ResultSource {
    Analytic,
    Sim,
}

impl ResultSource {
    pub fn label(self) -> &'static str {
        match self {
            ResultSource::Analytic => "analytic",
            ResultSource::Sim => "sim",
        }
    }
}

/// Mean transmissions per exchange, by frame kind. Piggybacked CFCs count
/// as CFCs.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct TxCounts {
    pub data: f64,
    pub cfc: f64,
    pub coded: f64,
    pub ack: f64,
}

impl TxCounts {
    pub fn total(&self) -> f64 {
        self.data + self.cfc + self.coded + self.ack
    }

    fn closed_form(variant: ProtocolVariant, e_r: f64) -> Self {
        match variant {
            ProtocolVariant::NccArq => Self {
                data: 1.0,
                cfc: 1.0,
                coded: e_r,
                ack: 2.0,
            },
            ProtocolVariant::CArq => Self {
                data: 2.0 + 2.0 * e_r,
                cfc: 2.0,
                coded: 0.0,
                ack: 2.0,
            },
        }
    }

    fn measured(stats: &RunStats) -> Self {
        Self {
            data: stats.tx_per_cycle(TxFilter::Kind(FrameKind::Data)),
            cfc: stats.tx_per_cycle(TxFilter::AnyCfc),
            coded: stats.tx_per_cycle(TxFilter::Kind(FrameKind::Coded)),
            ack: stats.tx_per_cycle(TxFilter::Kind(FrameKind::Ack)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    /// Sweep point index.
    #[serde(skip)]
    pub point: usize,
    /// Relay transmissions per direction: scripted count, or E[r] for a PER sweep.
    pub retx: f64,
    pub variant: ProtocolVariant,
    pub source: ResultSource,
    pub throughput_bps: f64,
    pub delay: Duration,
    /// NCC-ARQ over C-ARQ throughput from the same source, when both ran.
    pub gain: Option<f64>,
    pub tx: TxCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    /// `true` when the sweep used scripted retransmission counts.
    pub deterministic: bool,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Error)]
pub enum ComparisonError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error("{variant} simulation at sweep point {point} failed: {abort}")]
    Sim {
        point: usize,
        variant: ProtocolVariant,
        abort: Box<RunAbort>,
        /// Rows that were computed successfully.
        partial: Comparison,
    },
}

struct Point {
    index: usize,
    e_r: f64,
    params: SystemParameters,
    channel: LinkErrorModel,
}

fn sweep_points(cfg: &ScenarioConfig) -> Result<Vec<Point>, ParamError> {
    match &cfg.sweep {
        Sweep::Retx(list) => Ok(list
            .iter()
            .enumerate()
            .map(|(index, &r)| Point {
                index,
                e_r: f64::from(r),
                params: cfg.params.clone(),
                channel: LinkErrorModel::deterministic(&cfg.params, r)
                    .with_both_legs(cfg.both_legs),
            })
            .collect()),
        Sweep::PerRd(list) => list
            .iter()
            .enumerate()
            .map(|(index, &per)| {
                // One PER for both relay links so each C-ARQ direction sees
                // the same expected number of relay attempts.
                let params = SystemParameters {
                    per_rd: per,
                    per_rs: per,
                    ..cfg.params.clone()
                };
                Ok(Point {
                    index,
                    e_r: expected_retransmissions(per)?,
                    channel: LinkErrorModel::stochastic(&params, cfg.seed)
                        .with_both_legs(cfg.both_legs),
                    params,
                })
            })
            .collect(),
    }
}

fn analytic_row(point: &Point, variant: ProtocolVariant) -> Result<ComparisonRow, ParamError> {
    let delay = match variant {
        ProtocolVariant::NccArq => analytic::ncc_cycle_delay(&point.params, point.e_r)?.total,
        ProtocolVariant::CArq => analytic::carq_cycle_delay(&point.params, point.e_r)?,
    };
    let bits = 2.0 * 8.0 * f64::from(point.params.data_payload_bytes);
    Ok(ComparisonRow {
        point: point.index,
        retx: point.e_r,
        variant,
        source: ResultSource::Analytic,
        throughput_bps: bits / delay.as_secs(),
        delay,
        gain: None,
        tx: TxCounts::closed_form(variant, point.e_r),
    })
}

fn sim_row(
    point: &Point,
    variant: ProtocolVariant,
    cfg: &ScenarioConfig,
) -> Result<ComparisonRow, Box<RunAbort>> {
    let protocol = ProtocolConfig {
        max_attempts: cfg.max_attempts,
        both_legs: cfg.both_legs,
        ..ProtocolConfig::default()
    };
    let out = Simulation::new(point.params.clone(), variant, point.channel.clone())
        .protocol(protocol)
        .record_trace(false)
        .run(cfg.cycles)?;
    let stats = &out.stats;
    Ok(ComparisonRow {
        point: point.index,
        retx: point.e_r,
        variant,
        source: ResultSource::Sim,
        throughput_bps: throughput(stats).unwrap_or(0.0),
        delay: mean_delay(stats).unwrap_or(Duration::ZERO),
        gain: None,
        tx: TxCounts::measured(stats),
    })
}

/// Evaluates every sweep point for the selected variants and sources.
/// Simulations run in parallel; rows come back ordered by sweep point,
/// variant (NCC-ARQ first) and source (analytic first).
pub fn run_comparison(cfg: &ScenarioConfig) -> Result<Comparison, ComparisonError> {
    let points = sweep_points(cfg)?;
    let variants = cfg.variant.variants();
    let mut rows = Vec::new();

    if cfg.mode.analytic() {
        for point in &points {
            for &v in variants {
                rows.push(analytic_row(point, v)?);
            }
        }
    }

    let mut failure = None;
    if cfg.mode.sim() {
        let jobs: Vec<(&Point, ProtocolVariant)> = points
            .iter()
            .flat_map(|p| variants.iter().map(move |&v| (p, v)))
            .collect();
        let results: Vec<_> = jobs
            .par_iter()
            .map(|(p, v)| (p.index, *v, sim_row(p, *v, cfg)))
            .collect();
        for (point, variant, res) in results {
            match res {
                Ok(row) => rows.push(row),
                Err(abort) if failure.is_none() => failure = Some((point, variant, abort)),
                Err(_) => {}
            }
        }
    }

    let mut comparison = Comparison {
        deterministic: matches!(cfg.sweep, Sweep::Retx(_)),
        rows,
    };
    comparison.sort_and_fill_gain();
    match failure {
        None => Ok(comparison),
        Some((point, variant, abort)) => Err(ComparisonError::Sim {
            point,
            variant,
            abort,
            partial: comparison,
        }),
    }
}

impl Comparison {
    fn sort_and_fill_gain(&mut self) {
        self.rows
            .sort_by_key(|r| (r.point, r.variant != ProtocolVariant::NccArq, r.source));
        let snapshot = self.rows.clone();
        for row in &mut self.rows {
            let find = |v: ProtocolVariant| {
                snapshot
                    .iter()
                    .find(|o| o.point == row.point && o.source == row.source && o.variant == v)
            };
            if let (Some(ncc), Some(carq)) =
                (find(ProtocolVariant::NccArq), find(ProtocolVariant::CArq))
            {
                row.gain = Some(ncc.throughput_bps / carq.throughput_bps);
            }
        }
    }

    pub fn row(
        &self,
        retx: f64,
        variant: ProtocolVariant,
        source: ResultSource,
    ) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.retx == retx && r.variant == variant && r.source == source)
    }

    /// Scales every simulated delay by `1 + fraction`; throughput is left
    /// alone. Used to exercise check mode.
    pub fn perturb_sim_delay(&mut self, fraction: f64) {
        for row in self
            .rows
            .iter_mut()
            .filter(|r| r.source == ResultSource::Sim)
        {
            row.delay = row.delay * (1.0 + fraction);
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let retx = if self.deterministic {
                format!("{}", r.retx as u64)
            } else {
                sig6(r.retx)
            };
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                retx,
                r.variant,
                r.source.label(),
                sig6(r.throughput_bps / 1e6),
                sig6(r.delay.as_millis()),
                r.gain.map(sig6).unwrap_or_default(),
                sig6(r.tx.data),
                sig6(r.tx.cfc),
                sig6(r.tx.coded),
                sig6(r.tx.ack),
            );
        }
        out
    }

    pub fn write_json<W: Write>(&self, out: W) -> io::Result<()> {
        #[derive(Serialize)]
        struct JsonRow<'a> {
            retx: f64,
            variant: String,
            source: &'a str,
            throughput_mbps: f64,
            delay_ms: f64,
            gain: Option<f64>,
            tx: TxCounts,
        }
        let rows: Vec<_> = self
            .rows
            .iter()
            .map(|r| JsonRow {
                retx: r.retx,
                variant: r.variant.to_string(),
                source: r.source.label(),
                throughput_mbps: r.throughput_bps / 1e6,
                delay_ms: r.delay.as_millis(),
                gain: r.gain,
                tx: r.tx,
            })
            .collect();
        serde_json::to_writer_pretty(out, &rows).map_err(io::Error::from)
    }
}

/// Formats `x` with six significant digits in fixed notation.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{:.5}", x);
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn rel_err(value: f64, target: f64) -> f64 {
    (value - target).abs() / target.abs()
}

fn within(name: String, value: f64, target: f64, rtol: f64) -> CheckResult {
    let err = rel_err(value, target);
    CheckResult {
        passed: err <= rtol,
        detail: format!("{value:.9} vs {target:.9} (rel err {err:.3e}, tol {rtol:.1e})"),
        name,
    }
}

/// Sim-vs-analytic agreement for every point with both sources and, for the
/// default parameter set on a scripted sweep, the published figures.
pub fn check(cfg: &ScenarioConfig, cmp: &Comparison) -> Vec<CheckResult> {
    let mut results = Vec::new();
    let sim_tol = if cmp.deterministic {
        tolerance::SIM_VS_ANALYTIC
    } else {
        tolerance::STOCHASTIC_VS_ANALYTIC
    };

    for sim in cmp.rows.iter().filter(|r| r.source == ResultSource::Sim) {
        let Some(ana) = cmp.rows.iter().find(|r| {
            r.point == sim.point && r.variant == sim.variant && r.source == ResultSource::Analytic
        }) else {
            continue;
        };
        let tag = format!("{} retx={}", sim.variant, sim.retx);
        results.push(within(
            format!("sim throughput = analytic [{tag}]"),
            sim.throughput_bps,
            ana.throughput_bps,
            sim_tol,
        ));
        results.push(within(
            format!("sim delay = analytic [{tag}]"),
            sim.delay.as_micros(),
            ana.delay.as_micros(),
            sim_tol,
        ));
    }

    if cmp.deterministic && cfg.params == SystemParameters::default() {
        results.extend(published_checks(cmp));
    }
    results
}

fn published_checks(cmp: &Comparison) -> Vec<CheckResult> {
    use published::*;
    use ProtocolVariant::{CArq, NccArq};
    let mut results = Vec::new();
    for source in [ResultSource::Analytic, ResultSource::Sim] {
        let s = source.label();
        let thr = [
            (NccArq, NCC_THROUGHPUT_R1_BPS),
            (CArq, CARQ_THROUGHPUT_R1_BPS),
        ];
        for (variant, target) in thr {
            if let Some(r) = cmp.row(1.0, variant, source) {
                results.push(within(
                    format!("{variant} throughput r=1 vs published [{s}]"),
                    r.throughput_bps,
                    target,
                    tolerance::PUBLISHED_THROUGHPUT,
                ));
            }
        }
        let delays = [
            (NccArq, 1.0, NCC_DELAY_R1_MS),
            (NccArq, 5.0, NCC_DELAY_R5_MS),
            (CArq, 1.0, CARQ_DELAY_R1_MS),
            (CArq, 5.0, CARQ_DELAY_R5_MS),
        ];
        for (variant, retx, target) in delays {
            if let Some(r) = cmp.row(retx, variant, source) {
                results.push(within(
                    format!("{variant} delay r={retx} vs published [{s}]"),
                    r.delay.as_millis(),
                    target,
                    tolerance::PUBLISHED_DELAY,
                ));
            }
        }
        let (lo, hi) = tolerance::GAIN_BAND;
        for r in cmp
            .rows
            .iter()
            .filter(|r| r.source == source && r.variant == NccArq && (1.0..=5.0).contains(&r.retx))
        {
            if let Some(g) = r.gain {
                results.push(CheckResult {
                    name: format!("gain band r={} [{s}]", r.retx),
                    passed: (lo..=hi).contains(&g),
                    detail: format!("{g:.6} in [{lo}, {hi}]"),
                });
            }
        }
    }
    results
}
