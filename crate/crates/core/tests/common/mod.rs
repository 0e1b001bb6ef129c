//! Scenario generators and whole-run invariant checks shared by the
//! integration tests and the acceptance suite.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use qnet::codec::reassemble;
use qnet::scenario::{ChildSpec, ExampleKind, LinkSpec, Payload, PlanetSpec, UserSpec, WorkItem};
use qnet::{AcceptPolicy, FailureReason, Frame, Qid, RecordType, Scenario, SessionId, SessionState, SimConfig, Simulation};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn run(scenario: &Scenario) -> Simulation {
    run_with(scenario, SimConfig::with_seed(scenario.seed))
}

pub fn run_with(scenario: &Scenario, config: SimConfig) -> Simulation {
    let mut sim = Simulation::from_scenario(scenario, config).expect("scenario builds");
    sim.run_until_idle().expect("run completes");
    sim
}

pub fn example(kind: ExampleKind) -> Scenario {
    Scenario::example(kind)
}

pub fn types(sim: &Simulation) -> Vec<RecordType> {
    sim.trace().iter().map(|r| r.record_type).collect()
}

/// True if `want` occurs in `have` in order, not necessarily contiguously.
pub fn is_subsequence(have: &[RecordType], want: &[RecordType]) -> bool {
    let mut it = have.iter();
    want.iter().all(|w| it.any(|h| h == w))
}

pub fn user(node: &str, qid: u64, policy: AcceptPolicy) -> UserSpec {
    UserSpec {
        node_id: node.into(),
        qid: Qid(qid),
        accept_policy: policy,
    }
}

pub fn work(at: u64, from: u64, to: u64, payload: &[u8]) -> WorkItem {
    WorkItem {
        at_tick: at,
        from_qid: Qid(from),
        to_qid: Qid(to),
        payload: Payload::from(payload),
    }
}

/// One mother, `children` stations, `users` users spread round-robin and
/// `sessions` random calls. About one callee in ten rejects everyone, and
/// one call in twenty targets an unregistered QID.
pub fn desk_scenario(seed: u64, children: usize, users: usize, sessions: usize) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kids: Vec<ChildSpec> = (0..children)
        .map(|c| ChildSpec {
            qbs_id: format!("qbs-{}", c + 1),
            users: Vec::new(),
        })
        .collect();
    let mut links = Vec::new();
    for u in 0..users {
        let policy = if rng.gen_ratio(1, 10) {
            AcceptPolicy::RejectAll
        } else {
            AcceptPolicy::AcceptAll
        };
        let name = format!("user-{u}");
        let child = &mut kids[u % children];
        links.push(LinkSpec {
            a: name.clone(),
            b: child.qbs_id.clone(),
            distance_meters: rng.gen_range(1.0..100.0),
        });
        child.users.push(user(&name, 10_000 + u as u64, policy));
    }
    for k in &kids {
        links.push(LinkSpec {
            a: k.qbs_id.clone(),
            b: "mother".into(),
            distance_meters: rng.gen_range(1e3..1e6),
        });
    }
    let qids: Vec<u64> = (0..users as u64).map(|u| 10_000 + u).collect();
    let mut workload = Vec::with_capacity(sessions);
    for _ in 0..sessions {
        let from = *qids.choose(&mut rng).unwrap();
        let to = if rng.gen_ratio(1, 20) {
            1_000_000 + rng.gen_range(0..1000)
        } else {
            loop {
                let t = *qids.choose(&mut rng).unwrap();
                if t != from {
                    break t;
                }
            }
        };
        let len = rng.gen_range(0..64);
        let payload: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        workload.push(work(rng.gen_range(0..200), from, to, &payload));
    }
    Scenario {
        seed,
        planets: vec![PlanetSpec {
            mother_id: "mother".into(),
            children: kids,
        }],
        links,
        workload,
    }
}

/// Checks every whole-run invariant on a quiescent simulation and returns a
/// description of each violation.
pub fn violations(sim: &Simulation, scenario: &Scenario) -> Vec<String> {
    let mut bad = Vec::new();
    let trace = sim.trace();
    let net = sim.network();

    // record order
    for w in trace.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let ok = if a.tick == b.tick { b.seq == a.seq + 1 } else { b.tick > a.tick && b.seq == 0 };
        if !ok {
            bad.push(format!("record order broken at tick {} seq {}", b.tick, b.seq));
        }
    }

    // state machine replay
    let mut replay: BTreeMap<u64, SessionState> = BTreeMap::new();
    let mut window: BTreeMap<u64, (Option<usize>, Option<usize>)> = BTreeMap::new();
    for (i, r) in trace.iter().enumerate() {
        let Some(s) = r.session else { continue };
        let cur = replay.get(&s).copied().unwrap_or(SessionState::Idle);
        let next = match r.record_type {
            RecordType::SessionRequest => Some(SessionState::LookingUpLocal),
            RecordType::LookupLocalMiss => Some(SessionState::QueryingMother),
            RecordType::Negotiate if cur != SessionState::Negotiating => Some(SessionState::Negotiating),
            RecordType::Established => Some(SessionState::Established),
            RecordType::Teardown => Some(SessionState::TearingDown),
            RecordType::Closed => Some(SessionState::Closed),
            RecordType::Failed => Some(SessionState::Failed(match r.detail_str("reason") {
                Some("not_found") => FailureReason::NotFound,
                _ => FailureReason::Rejected,
            })),
            _ => None,
        };
        if let Some(n) = next {
            if !cur.can_transition_to(n) {
                bad.push(format!("session {s}: illegal {cur:?} -> {n:?} at record {i}"));
            }
            replay.insert(s, n);
        }
        let w = window.entry(s).or_default();
        match r.record_type {
            RecordType::Established => w.0 = Some(i),
            RecordType::Closed => w.1 = Some(i),
            RecordType::Data | RecordType::Send | RecordType::Deliver => {
                let inside = w.0.is_some_and(|e| e < i) && w.1.is_none();
                if !inside {
                    bad.push(format!("session {s}: {} outside ESTABLISHED..CLOSED", r.record_type));
                }
            }
            _ => {}
        }
    }
    for rec in net.sessions() {
        let id = rec.session_id.0;
        if replay.get(&id) != Some(&rec.state()) {
            bad.push(format!("session {id}: replay {:?} != state {:?}", replay.get(&id), rec.state()));
        }
        if !rec.state().is_terminal() {
            bad.push(format!("session {id}: not terminal at quiescence ({:?})", rec.state()));
        }
        if !rec.circuits.is_empty() {
            bad.push(format!("session {id}: still holds {:?}", rec.circuits));
        }
    }

    // circuit conservation
    let permanent = expected_permanent_circuits(scenario);
    if net.permanent_circuit_count() != permanent {
        bad.push(format!("{} permanent circuits, expected {permanent}", net.permanent_circuit_count()));
    }
    if net.session_circuit_count() != 0 {
        bad.push(format!("{} session circuits left", net.session_circuit_count()));
    }
    let mut provisioned = BTreeSet::new();
    let mut released = BTreeSet::new();
    for r in trace {
        match r.record_type {
            RecordType::CircuitProvisioned => {
                provisioned.insert(r.detail_u64("circuit").unwrap());
            }
            RecordType::CircuitReleased
                if r.detail.get("permanent") == Some(&false.into())
                    && !released.insert(r.detail_u64("circuit").unwrap()) =>
            {
                bad.push(format!("circuit {:?} released twice", r.detail_u64("circuit")));
            }
            _ => {}
        }
    }
    if provisioned != released {
        bad.push("provisioned and released session circuits differ".into());
    }

    if !net.registry_incoherences().is_empty() {
        bad.push(format!("registry incoherent for {:?}", net.registry_incoherences()));
    }

    // causality and delivery integrity
    let mut sent: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut hop0: BTreeMap<(u64, u64), Vec<Frame>> = BTreeMap::new();
    for (i, r) in trace.iter().enumerate() {
        let key = (r.session.unwrap_or(0), r.detail_u64("msg").unwrap_or(0));
        match r.record_type {
            RecordType::Send => {
                sent.insert(key, i);
            }
            RecordType::Data if r.detail_u64("hop") == Some(0) => {
                hop0.entry(key).or_default().push(r.detail_str("bits").unwrap().parse().unwrap());
            }
            RecordType::Deliver => match sent.get(&key) {
                Some(&j) if j < i => {
                    let frames = &hop0[&key];
                    let n = reassemble(frames).map(|p| p.len() as u64);
                    if n.ok() != r.detail_u64("bytes") {
                        bad.push(format!("{key:?}: delivered size differs from sent frames"));
                    }
                }
                _ => bad.push(format!("{key:?}: DELIVER without earlier SEND")),
            },
            _ => {}
        }
    }

    // every sent payload came from the workload and reached its callee intact
    let mut expected: BTreeMap<(u64, u64), Vec<Vec<u8>>> = BTreeMap::new();
    for w in &scenario.workload {
        expected
            .entry((w.from_qid.0, w.to_qid.0))
            .or_default()
            .push(w.payload.bytes().unwrap());
    }
    let sessions: BTreeMap<SessionId, (Qid, Qid)> =
        net.sessions().map(|s| (s.session_id, (s.caller, s.callee))).collect();
    let mut got: BTreeMap<(u64, u64), Vec<Vec<u8>>> = BTreeMap::new();
    for u in net.users() {
        for e in u.inbox() {
            let (caller, callee) = sessions[&e.session];
            if callee != u.qid {
                bad.push(format!("session {} delivered to a non-callee", e.session.0));
            }
            got.entry((caller.0, callee.0)).or_default().push(e.payload.clone());
        }
    }
    for (k, mut g) in got {
        let mut pool = expected.get(&k).cloned().unwrap_or_default();
        for p in g.drain(..) {
            match pool.iter().position(|x| *x == p) {
                Some(at) => {
                    pool.swap_remove(at);
                }
                None => bad.push(format!("{k:?}: spontaneous or corrupted payload")),
            }
        }
    }
    let established = net.sessions().filter(|s| s.established_at.is_some()).count();
    let sends = trace.iter().filter(|r| r.record_type == RecordType::Send).count();
    let delivers = trace.iter().filter(|r| r.record_type == RecordType::Deliver).count();
    if sends != established || delivers != sends {
        bad.push(format!("{established} established, {sends} sends, {delivers} delivers"));
    }

    for c in net.circuits() {
        if !c.pool().anti_correlation_violations().is_empty() {
            bad.push(format!("circuit {} has correlated pairs", c.id()));
        }
    }
    bad
}

/// Permanent circuits implied by the scenario: one per user, one per child
/// and one per pair of mothers.
pub fn expected_permanent_circuits(s: &Scenario) -> usize {
    let m = s.planets.len();
    let children: usize = s.planets.iter().map(|p| p.children.len()).sum();
    let users: usize = s
        .planets
        .iter()
        .flat_map(|p| &p.children)
        .map(|c| c.users.len())
        .sum();
    users + children + m * m.saturating_sub(1) / 2
}

/// A single planet under `mother` with no link distances.
pub fn planet(children: Vec<(&str, Vec<UserSpec>)>, workload: Vec<WorkItem>) -> Scenario {
    Scenario {
        seed: 7,
        planets: vec![PlanetSpec {
            mother_id: "mother".into(),
            children: children
                .into_iter()
                .map(|(id, users)| ChildSpec {
                    qbs_id: id.into(),
                    users,
                })
                .collect(),
        }],
        links: Vec::new(),
        workload,
    }
}
