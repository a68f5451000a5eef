//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines always
//! appear in `cargo test` output.

use std::collections::HashSet;
use std::process::{Command, ExitCode};
use std::time::{Duration as WallTime, Instant};

use ncc_arq::analytic::{carq_cycle_delay, carq_throughput, ncc_cycle_delay, ncc_throughput};
use ncc_arq::channel::LinkErrorModel;
use ncc_arq::engine::{
    confidence_halfwidth, mean_delay, run, throughput, transmission_count, RunOutput, Simulation,
    TxFilter,
};
use ncc_arq::model::{FrameKind, NodeId};
use ncc_arq::netcode::{xor_decode, xor_encode, PacketId, Payload};
use ncc_arq::protocol::ActionKind;
use ncc_arq::scenario::ScenarioConfig;
use ncc_arq::{ProtocolVariant, SystemParameters};

use ProtocolVariant::{CArq, NccArq};

const BIN: &str = env!("CARGO_BIN_EXE_ncc-arq");

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rel(value: f64, target: f64) -> f64 {
    (value - target).abs() / target.abs()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(label: &str, value: f64, target: f64, rtol: f64) -> Result<(), String> {
    ensure(rel(value, target) <= rtol, || {
        format!("{label}: {value} vs {target} exceeds rel {rtol}")
    })
}

fn in_time(elapsed: WallTime, limit_s: f64) -> Result<(), String> {
    ensure(elapsed.as_secs_f64() < limit_s, || {
        format!("took {elapsed:.2?}, limit {limit_s} s")
    })
}

fn det_run(
    p: &SystemParameters,
    variant: ProtocolVariant,
    retx: u32,
    cycles: u64,
) -> Result<RunOutput, String> {
    run(p, variant, LinkErrorModel::deterministic(p, retx), cycles).map_err(|a| a.to_string())
}

fn published_values() -> Outcome {
    let started = Instant::now();
    let p = SystemParameters::default();
    let s1 = |v| det_run(&p, v, 1, 100);
    let s5 = |v| det_run(&p, v, 5, 100);
    let (n1, c1, n5, c5) = (s1(NccArq)?, s1(CArq)?, s5(NccArq)?, s5(CArq)?);
    let ms = |o: &RunOutput| mean_delay(&o.stats).unwrap().as_millis();
    let thr = |o: &RunOutput| throughput(&o.stats).unwrap();

    for (src, ncc_thr, carq_thr) in [
        (
            "analytic",
            ncc_throughput(&p, 1.0).unwrap(),
            carq_throughput(&p, 1.0).unwrap(),
        ),
        ("sim", thr(&n1), thr(&c1)),
    ] {
        within(&format!("{src} NCC throughput r=1"), ncc_thr, 7.52e6, 0.05)?;
        within(
            &format!("{src} C-ARQ throughput r=1"),
            carq_thr,
            4.3e6,
            0.05,
        )?;
    }
    let ncc_ms = |r| ncc_cycle_delay(&p, r).unwrap().total.as_millis();
    let carq_ms = |r| carq_cycle_delay(&p, r).unwrap().as_millis();
    for (src, d_n1, d_n5, d_c1, d_c5) in [
        (
            "analytic",
            ncc_ms(1.0),
            ncc_ms(5.0),
            carq_ms(1.0),
            carq_ms(5.0),
        ),
        ("sim", ms(&n1), ms(&n5), ms(&c1), ms(&c5)),
    ] {
        within(&format!("{src} NCC delay r=1"), d_n1, 3.0, 0.10)?;
        within(&format!("{src} NCC delay r=5"), d_n5, 4.4, 0.10)?;
        within(&format!("{src} C-ARQ delay r=1"), d_c1, 5.6, 0.10)?;
        within(&format!("{src} C-ARQ delay r=5"), d_c5, 8.0, 0.10)?;
    }
    in_time(started.elapsed(), 1.0)?;
    Ok(format!(
        "NCC {:.4} Mb/s, C-ARQ {:.4} Mb/s at r=1; delays {:.3}/{:.3} ms and {:.3}/{:.3} ms at r=1/5",
        thr(&n1) / 1e6,
        thr(&c1) / 1e6,
        ms(&n1),
        ms(&n5),
        ms(&c1),
        ms(&c5)
    ))
}

fn sim_equals_analysis() -> Outcome {
    let started = Instant::now();
    let p = SystemParameters::default();
    let mut worst: f64 = 0.0;
    for r in 1..=10u32 {
        let e = f64::from(r);
        for variant in [NccArq, CArq] {
            let out = det_run(&p, variant, r, 1_000)?;
            let (delay, thr) = match variant {
                NccArq => (
                    ncc_cycle_delay(&p, e).unwrap().total,
                    ncc_throughput(&p, e).unwrap(),
                ),
                CArq => (
                    carq_cycle_delay(&p, e).unwrap(),
                    carq_throughput(&p, e).unwrap(),
                ),
            };
            let d = rel(
                mean_delay(&out.stats).unwrap().as_micros(),
                delay.as_micros(),
            );
            let t = rel(throughput(&out.stats).unwrap(), thr);
            worst = worst.max(d).max(t);
            ensure(d <= 1e-9 && t <= 1e-9, || {
                format!("{variant} r={r}: delay err {d:e}, throughput err {t:e}")
            })?;
        }
    }
    in_time(started.elapsed(), 5.0)?;
    Ok(format!("r=1..10, both variants, worst rel err {worst:.2e}"))
}

fn gain_band() -> Outcome {
    let p = SystemParameters::default();
    let mut gains = Vec::new();
    for r in 1..=5 {
        let e = f64::from(r);
        let g = ncc_throughput(&p, e).unwrap() / carq_throughput(&p, e).unwrap();
        ensure((1.70..=1.85).contains(&g), || {
            format!("gain {g} at r={r} outside [1.70, 1.85]")
        })?;
        gains.push(format!("{g:.4}"));
    }
    Ok(format!("gains r=1..5: {}", gains.join(", ")))
}

fn stochastic_convergence() -> Outcome {
    let started = Instant::now();
    let p = SystemParameters {
        per_rd: 0.5,
        ..Default::default()
    };
    let out = Simulation::new(p.clone(), NccArq, LinkErrorModel::stochastic(&p, 1))
        .record_trace(false)
        .run(100_000)
        .map_err(|a| a.to_string())?;
    let mean = mean_delay(&out.stats).unwrap().as_micros();
    let attempts = out.stats.mean_relay_attempts();
    within("mean cycle delay", mean, 3535.111, 0.01)?;
    within("mean coded attempts", attempts, 2.0, 0.01)?;
    let hw = confidence_halfwidth(&out.stats, 0.95).unwrap().as_micros();
    in_time(started.elapsed(), 10.0)?;
    Ok(format!(
        "mean {mean:.3} us (95% ±{hw:.3}), attempts {attempts:.4}, {:.2?}",
        started.elapsed()
    ))
}

fn property_suites() -> Outcome {
    // XOR involution and commutativity over 10^4 pseudo-random pairs
    for i in 0..10_000u64 {
        let len = 1 + (i as usize * 7919) % 1500;
        let a = Payload::synthetic(PacketId::new(NodeId::Source, i), len);
        let b = Payload::synthetic(PacketId::new(NodeId::Destination, i), len);
        let ab = xor_encode(&a, &b).map_err(|e| e.to_string())?;
        let ba = xor_encode(&b, &a).map_err(|e| e.to_string())?;
        ensure(ab.bytes == ba.bytes, || {
            format!("pair {i}: not commutative")
        })?;
        ensure(xor_decode(&ab, &b).ok() == Some(a.clone()), || {
            format!("pair {i}: A not recovered")
        })?;
        ensure(xor_decode(&ab, &a).ok() == Some(b.clone()), || {
            format!("pair {i}: B not recovered")
        })?;
    }

    let p = SystemParameters::default();
    for r in 1..=5u32 {
        let cycles = 50;
        let ncc = det_run(&p, NccArq, r, cycles)?;
        let s = &ncc.stats;
        let per = |k| s.tx_count(k) as f64 / cycles as f64;
        ensure(
            per(FrameKind::Data) == 1.0
                && per(FrameKind::CfcPiggyback) == 1.0
                && per(FrameKind::Coded) == f64::from(r)
                && per(FrameKind::Ack) == 2.0,
            || format!("NCC r={r}: per-cycle counts {:?}", s.tx_counts),
        )?;
        let carq = det_run(&p, CArq, r, cycles)?;
        let total = transmission_count(&carq.trace, TxFilter::Any) as u64;
        ensure(total == cycles * (6 + 2 * u64::from(r)), || {
            format!("C-ARQ r={r}: {total} transmissions over {cycles} cycles")
        })?;
    }

    // conservation, ordering and determinism under a random channel; the
    // engine itself rejects any delivery whose bytes differ from the original
    let lossy = SystemParameters {
        per_rd: 0.5,
        per_rs: 0.5,
        ..Default::default()
    };
    let cycles = 2_000;
    for variant in [NccArq, CArq] {
        let a = run(
            &lossy,
            variant,
            LinkErrorModel::stochastic(&lossy, 42),
            cycles,
        )
        .map_err(|e| e.to_string())?;
        let b = run(
            &lossy,
            variant,
            LinkErrorModel::stochastic(&lossy, 42),
            cycles,
        )
        .map_err(|e| e.to_string())?;
        ensure(a.trace == b.trace, || {
            format!("{variant}: same seed, different traces")
        })?;
        let mut seen = HashSet::new();
        for rec in a
            .trace
            .iter()
            .filter(|r| r.action == ActionKind::DeliverToApp)
        {
            let id = rec.packet.unwrap();
            ensure(id.origin.peer() == Some(rec.node), || {
                format!("{id} delivered to {}", rec.node)
            })?;
            ensure(seen.insert(id), || format!("{id} delivered twice"))?;
        }
        ensure(seen.len() as u64 == 2 * cycles, || {
            format!("{variant}: {} deliveries over {cycles} cycles", seen.len())
        })?;
        if variant == NccArq {
            let acks: Vec<_> = a
                .trace
                .iter()
                .filter(|r| r.action == ActionKind::Transmit && r.frame == Some(FrameKind::Ack))
                .collect();
            ensure(acks.len() as u64 == 2 * cycles, || "missing ACKs".into())?;
            for pair in acks.chunks(2) {
                ensure(
                    pair[0].node == NodeId::Destination
                        && pair[1].node == NodeId::Source
                        && pair[0].cycle == pair[1].cycle,
                    || format!("cycle {}: ACK order violated", pair[0].cycle),
                )?;
            }
        }
    }
    Ok("XOR 10^4 pairs; counts r=1..5; conservation, fidelity, seed determinism, ACK order".into())
}

fn cli_contract() -> Outcome {
    let default = Command::new(BIN).output().map_err(|e| e.to_string())?;
    ensure(default.status.success(), || {
        format!("default run exited {}", default.status)
    })?;
    let csv = String::from_utf8_lossy(&default.stdout);
    let mut lines = csv.lines();
    ensure(
        lines.next()
            == Some(
                "retx,variant,source,throughput_mbps,delay_ms,gain,tx_data,tx_cfc,tx_coded,tx_ack",
            ),
        || "unexpected CSV header".into(),
    )?;
    let rows: Vec<&str> = lines.collect();
    let points: Vec<&str> =
        rows.iter()
            .map(|l| l.split(',').next().unwrap_or(""))
            .fold(Vec::new(), |mut acc, p| {
                if acc.last() != Some(&p) {
                    acc.push(p);
                }
                acc
            });
    ensure(
        points == ["1", "2", "3", "4", "5"] && rows.len() == 20,
        || {
            format!(
                "expected 5 points x 4 rows, got points {points:?} in {} rows",
                rows.len()
            )
        },
    )?;
    ensure(
        rows.iter()
            .any(|r| r.starts_with("1,ncc-arq,sim,7.47232,3.21185,")),
        || "r=1 NCC sim row mismatch".into(),
    )?;

    let second = Command::new(BIN).output().map_err(|e| e.to_string())?;
    ensure(second.stdout == default.stdout, || {
        "CSV is not byte-stable".into()
    })?;

    let check = Command::new(BIN)
        .arg("--check")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(check.status.code() == Some(0), || {
        format!("--check exited {}", check.status)
    })?;
    let perturbed = Command::new(BIN)
        .args(["--check", "--perturb-sim-delay", "0.1"])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(perturbed.status.code() == Some(1), || {
        format!("perturbed --check exited {}", perturbed.status)
    })?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dumped = Command::new(BIN)
        .args([
            "--dump-config",
            "--retx",
            "2..4",
            "--seed",
            "7",
            "--cycles",
            "500",
        ])
        .output()
        .map_err(|e| e.to_string())?;
    ensure(dumped.status.success(), || "--dump-config failed".into())?;
    let path = dir.path().join("scenario.toml");
    std::fs::write(&path, &dumped.stdout).map_err(|e| e.to_string())?;
    let reloaded = ScenarioConfig::load(Some(&path)).map_err(|e| e.to_string())?;
    let redumped = Command::new(BIN)
        .arg("--config")
        .arg(&path)
        .arg("--dump-config")
        .output()
        .map_err(|e| e.to_string())?;
    ensure(redumped.stdout == dumped.stdout, || {
        "dump of reloaded config differs".into()
    })?;
    let expected = ScenarioConfig {
        sweep: ncc_arq::scenario::Sweep::Retx(vec![2, 3, 4]),
        seed: 7,
        cycles: 500,
        ..Default::default()
    };
    ensure(reloaded == expected, || format!("reloaded {reloaded:?}"))?;

    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "seed = 3\nper_rd = 1.2\n").map_err(|e| e.to_string())?;
    let rejected = Command::new(BIN)
        .arg("--config")
        .arg(&bad)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(rejected.status.code() == Some(2), || {
        format!("bad config exited {}", rejected.status)
    })?;

    Ok("5-point CSV, byte-stable; --check 0, perturbed 1, bad config 2; dump round-trips".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 6] = [
        ("1 published values", published_values),
        ("2 sim equals analysis", sim_equals_analysis),
        ("3 gain band", gain_band),
        ("4 stochastic convergence", stochastic_convergence),
        ("5 property suites", property_suites),
        ("6 CLI contract", cli_contract),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        match criterion() {
            Ok(detail) => println!("PASS criterion {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {name}: {why}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
