//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::*;
use qnet::codec::{decode_frame, encode_frame, reassemble, segment_message};
use qnet::scenario::ExampleKind;
use qnet::{Direction, FailureReason, Frame, PairPool, RecordType, Scenario, SessionId, SessionState, SimConfig, Simulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use RecordType::*;

const SEED: u64 = 0x5eed;
const CODEC_FRAMES: usize = 10_000;
const CODEC_PAYLOADS: usize = 1_000;
const CODEC_MAX_LEN: usize = 4096;
const CODEC_DEADLINE: Duration = Duration::from_secs(5);
const PAIRS: usize = 100_000;
const UP_TOLERANCE: f64 = 0.005;
const NEAR_METERS: f64 = 1.0;
const FAR_METERS: f64 = 9.46e15;
const RATIO_TOLERANCE: f64 = 1e-9;
const DESK_CHILDREN: usize = 10;
const DESK_USERS: usize = 1_000;
const DESK_SESSIONS: usize = 5_000;
const DESK_DEADLINE: Duration = Duration::from_secs(60);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn codec_identity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut pool = PairPool::new(SEED);
    let (mut tx, mut rx) = pool.make_plate_pair();
    let mut bad = 0;
    for _ in 0..CODEC_FRAMES {
        let f = Frame::from_u128(rng.gen());
        encode_frame(&mut pool, &tx, f).map_err(|e| e.to_string())?;
        let got = decode_frame(&mut pool, &rx).map_err(|e| e.to_string())?;
        bad += usize::from(got != f);
        pool.reset_plate_pair(&mut tx, &mut rx).map_err(|e| e.to_string())?;
    }
    for _ in 0..CODEC_PAYLOADS {
        let len = rng.gen_range(0..=CODEC_MAX_LEN);
        let payload: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let back = reassemble(&segment_message(&payload)).map_err(|e| e.to_string())?;
        bad += usize::from(back != payload);
    }
    let took = start.elapsed();
    ensure(bad == 0, || format!("{bad} round-trip failures"))?;
    ensure(took < CODEC_DEADLINE, || format!("took {took:?}"))?;
    Ok(format!("{CODEC_FRAMES} frames, {CODEC_PAYLOADS} payloads, 0 failures in {took:.2?}"))
}

fn anti_correlation() -> Outcome {
    let mut pool = PairPool::new(SEED);
    let mut up = 0usize;
    let mut opposite = 0usize;
    for _ in 0..PAIRS {
        let (a, b) = pool.create_pair(false);
        let first = pool.observe(a).map_err(|e| e.to_string())?;
        let second = pool.observe(b).map_err(|e| e.to_string())?;
        up += usize::from(first == Direction::Up);
        opposite += usize::from(second == first.opposite());
    }
    let freq = up as f64 / PAIRS as f64;
    ensure(opposite == PAIRS, || format!("{} of {PAIRS} pairs correlated", PAIRS - opposite))?;
    ensure((freq - 0.5).abs() < UP_TOLERANCE, || format!("freq(Up) = {freq}"))?;
    Ok(format!("{PAIRS} pairs 100% opposite, freq(Up) = {freq:.4}"))
}

fn same_qbs_conformance() -> Outcome {
    let s = example(ExampleKind::SameQbs);
    let sim = run(&s);
    let t = types(&sim);
    let want = [SessionRequest, LookupLocalHit, Negotiate, Accept, Established, Data, Teardown, CircuitReleased, Closed];
    ensure(is_subsequence(&t, &want), || format!("sequence {t:?}"))?;
    ensure(!t.contains(&MotherLookup), || "MOTHER_LOOKUP present".into())?;
    let bad = violations(&sim, &s);
    ensure(bad.is_empty(), || format!("{bad:?}"))?;
    Ok(format!("{} records, golden order holds", t.len()))
}

fn cross_qbs_conformance() -> Outcome {
    let s = example(ExampleKind::CrossQbs);
    let mut sim = Simulation::from_scenario(&s, SimConfig::with_seed(s.seed)).map_err(|e| e.to_string())?;
    let table = |sim: &Simulation| -> Vec<_> { sim.network().circuits().map(|c| (c.id(), c.ends(), c.scope())).collect() };
    let before = table(&sim);
    sim.run_until_idle().map_err(|e| e.to_string())?;
    let t = types(&sim);
    let want = [LookupLocalMiss, MotherLookup, CircuitProvisioned, Negotiate, Accept, Established];
    ensure(is_subsequence(&t, &want), || format!("sequence {t:?}"))?;
    let mut hops: BTreeMap<u64, Vec<&str>> = BTreeMap::new();
    for r in sim.trace().iter().filter(|r| r.record_type == Data) {
        hops.entry(r.detail_u64("frame").unwrap()).or_default().push(&r.node);
    }
    let path = ["user-a", "qbs-1", "qbs-2", "user-c"];
    ensure(!hops.is_empty() && hops.values().all(|h| h == &path), || format!("DATA hops {hops:?}"))?;
    let provisioned = sim.trace().iter().find(|r| r.record_type == CircuitProvisioned).and_then(|r| r.detail_u64("circuit"));
    let released = sim
        .trace()
        .iter()
        .any(|r| r.record_type == CircuitReleased && r.detail_u64("circuit") == provisioned);
    ensure(released, || "provisioned circuit never released".into())?;
    ensure(table(&sim) == before, || "circuit table changed".into())?;
    Ok(format!("{} frames over {}", hops.len(), path.join(" -> ")))
}

fn distance_independence() -> Outcome {
    let at = |meters: f64| {
        let mut s = example(ExampleKind::CrossQbs);
        for l in &mut s.links {
            l.distance_meters = meters;
        }
        run(&s)
    };
    let (near, far) = (at(NEAR_METERS), at(FAR_METERS));
    ensure(near.trace_ndjson() == far.trace_ndjson(), || "traces differ".into())?;
    let rn = near.latency_report(SessionId(1)).map_err(|e| e.to_string())?;
    let rf = far.latency_report(SessionId(1)).map_err(|e| e.to_string())?;
    ensure(rn.entangled_channel_ticks == 0 && rf.entangled_channel_ticks == 0, || "non-zero channel ticks".into())?;
    let ratio = rf.classical_baseline_seconds / rn.classical_baseline_seconds;
    let expect = FAR_METERS / NEAR_METERS;
    let err = (ratio / expect - 1.0).abs();
    ensure(err < RATIO_TOLERANCE, || format!("ratio {ratio} vs {expect}, rel err {err}"))?;
    Ok(format!("identical traces, baselines {:.3e} s vs {:.3e} s", rn.classical_baseline_seconds, rf.classical_baseline_seconds))
}

fn failure_branches() -> Outcome {
    use qnet::AcceptPolicy::*;
    let reject = planet(vec![("qbs-1", vec![user("a", 1, AcceptAll), user("b", 2, RejectAll)])], vec![work(0, 1, 2, b"x")]);
    let sim = run(&reject);
    let state = sim.session(SessionId(1)).map_err(|e| e.to_string())?.state();
    ensure(state == SessionState::Failed(FailureReason::Rejected), || format!("reject gave {state:?}"))?;
    ensure(!types(&sim).contains(&Data), || "DATA on rejected session".into())?;
    let bad = violations(&sim, &reject);
    ensure(bad.is_empty(), || format!("{bad:?}"))?;

    let missing = planet(vec![("qbs-1", vec![user("a", 1, AcceptAll)])], vec![work(0, 1, 404, b"x")]);
    let sim = run(&missing);
    let state = sim.session(SessionId(1)).map_err(|e| e.to_string())?.state();
    ensure(state == SessionState::Failed(FailureReason::NotFound), || format!("unknown QID gave {state:?}"))?;
    ensure(is_subsequence(&types(&sim), &[MotherLookupMiss, Failed]), || "no MOTHER_LOOKUP_MISS before FAILED".into())?;
    let bad = violations(&sim, &missing);
    ensure(bad.is_empty(), || format!("{bad:?}"))?;
    Ok("rejected and not-found both conserve circuits".into())
}

fn determinism() -> Outcome {
    let dir = std::env::temp_dir().join(format!("qnet-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).map_err(|e| e.to_string())?;
    for kind in ExampleKind::ALL {
        let s = example(kind);
        let mut files = Vec::new();
        for i in 0..2 {
            let path = dir.join(format!("{}-{i}.ndjson", kind.name()));
            let f = std::fs::File::create(&path).map_err(|e| e.to_string())?;
            run(&s).write_trace(f).map_err(|e| e.to_string())?;
            files.push(std::fs::read(&path).map_err(|e| e.to_string())?);
        }
        ensure(files[0] == files[1], || format!("{} traces differ", kind.name()))?;
        let base = types(&run(&s));
        for seed in [0, 1, u64::MAX] {
            let t = types(&run_with(&s, SimConfig::with_seed(seed)));
            ensure(t == base, || format!("{} seed {seed} changed record types", kind.name()))?;
        }
    }
    let _ = std::fs::remove_dir_all(&dir);
    Ok("byte-identical trace files; record types seed-independent".into())
}

fn desk_scale() -> Outcome {
    let s: Scenario = desk_scenario(SEED, DESK_CHILDREN, DESK_USERS, DESK_SESSIONS);
    let start = Instant::now();
    let sim = run(&s);
    let bad = violations(&sim, &s);
    let took = start.elapsed();
    ensure(bad.is_empty(), || format!("{} violations, first {:?}", bad.len(), bad.first()))?;
    ensure(took < DESK_DEADLINE, || format!("took {took:?}"))?;
    let st = sim.stats();
    ensure(st.sessions.requested == DESK_SESSIONS as u64, || format!("{} sessions", st.sessions.requested))?;
    Ok(format!(
        "{} sessions ({} established, {} failed), {} records in {took:.2?}",
        st.sessions.requested,
        st.sessions.established,
        st.sessions.failed,
        sim.trace().len()
    ))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("codec identity", codec_identity),
        ("anti-correlation", anti_correlation),
        ("same-QBS conformance", same_qbs_conformance),
        ("cross-QBS conformance", cross_qbs_conformance),
        ("distance independence", distance_independence),
        ("failure branches", failure_branches),
        ("determinism", determinism),
        ("desk scale", desk_scale),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(note) => println!("AC{} PASS {name}: {note}", i + 1),
            Err(why) => {
                failed += 1;
                println!("AC{} FAIL {name}: {why}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
