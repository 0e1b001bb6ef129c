//! Scenario files: topology, link distances and workload, as JSON.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::qbs::Qid;
use crate::user::AcceptPolicy;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub planets: Vec<PlanetSpec>,
    #[serde(default)]
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub workload: Vec<WorkItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanetSpec {
    pub mother_id: String,
    #[serde(default)]
    pub children: Vec<ChildSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChildSpec {
    pub qbs_id: String,
    #[serde(default)]
    pub users: Vec<UserSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserSpec {
    pub node_id: String,
    pub qid: Qid,
    pub accept_policy: AcceptPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub distance_meters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkItem {
    pub at_tick: u64,
    pub from_qid: Qid,
    pub to_qid: Qid,
    pub payload: Payload,
}

/// A UTF-8 string, or `{"hex": "..."}` for arbitrary bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Text(String),
    Hex { hex: String },
}

impl Payload {
    pub fn bytes(&self) -> Result<Vec<u8>, String> {
        match self {
            Payload::Text(s) => Ok(s.as_bytes().to_vec()),
            Payload::Hex { hex } => hex::decode(hex).map_err(|e| format!("invalid hex payload: {e}")),
        }
    }
}

impl From<&[u8]> for Payload {
    fn from(bytes: &[u8]) -> Self {
        match std::str::from_utf8(bytes) {
            Ok(s) => Payload::Text(s.to_string()),
            Err(_) => Payload::Hex { hex: hex::encode(bytes) },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Issue {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidationError {
    pub issues: Vec<Issue>,
}

impl ValidationError {
    pub fn single(path: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationError {
            issues: vec![Issue {
                path: path.into(),
                message: message.into(),
            }],
        }
    }
}

impl fmt::Display for ValidationError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ValidationError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Mother(usize),
    Child(usize),
    User,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExampleKind {
    /// Two users on the same child station.
    SameQbs,
    /// Caller and callee on different children of one mother.
    CrossQbs,
    /// Two planets, each with its own mother.
    Interplanet,
}

impl ExampleKind {
    pub const ALL: [ExampleKind; 3] = [ExampleKind::SameQbs, ExampleKind::CrossQbs, ExampleKind::Interplanet];

    pub fn name(self) -> &'static str {
        match self {
            ExampleKind::SameQbs => "same-qbs",
            ExampleKind::CrossQbs => "cross-qbs",
            ExampleKind::Interplanet => "interplanet",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

fn user(node_id: &str, qid: u64) -> UserSpec {
    UserSpec {
        node_id: node_id.into(),
        qid: Qid(qid),
        accept_policy: AcceptPolicy::AcceptAll,
    }
}

fn link(a: &str, b: &str, distance_meters: f64) -> LinkSpec {
    LinkSpec {
        a: a.into(),
        b: b.into(),
        distance_meters,
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ValidationError> {
        serde_json::from_str(text).map_err(|e| {
            ValidationError::single(
                format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenarios always serialize");
        s.push('\n');
        s
    }

    pub fn example(kind: ExampleKind) -> Scenario {
        match kind {
            ExampleKind::SameQbs => Scenario {
                seed: 42,
                planets: vec![PlanetSpec {
                    mother_id: "mother-earth".into(),
                    children: vec![ChildSpec {
                        qbs_id: "qbs-1".into(),
                        users: vec![user("user-a", 1001), user("user-b", 1002)],
                    }],
                }],
                links: vec![
                    link("user-a", "qbs-1", 10.0),
                    link("user-b", "qbs-1", 10.0),
                    link("qbs-1", "mother-earth", 1000.0),
                ],
                workload: vec![WorkItem {
                    at_tick: 0,
                    from_qid: Qid(1001),
                    to_qid: Qid(1002),
                    payload: Payload::Text("HELLO".into()),
                }],
            },
            ExampleKind::CrossQbs => Scenario {
                seed: 42,
                planets: vec![PlanetSpec {
                    mother_id: "mother-earth".into(),
                    children: vec![
                        ChildSpec {
                            qbs_id: "qbs-1".into(),
                            users: vec![user("user-a", 1001)],
                        },
                        ChildSpec {
                            qbs_id: "qbs-2".into(),
                            users: vec![user("user-c", 1003)],
                        },
                    ],
                }],
                links: vec![
                    link("user-a", "qbs-1", 10.0),
                    link("user-c", "qbs-2", 10.0),
                    link("qbs-1", "mother-earth", 5.0e5),
                    link("qbs-2", "mother-earth", 7.0e5),
                ],
                workload: vec![WorkItem {
                    at_tick: 0,
                    from_qid: Qid(1001),
                    to_qid: Qid(1003),
                    payload: Payload::Text("HELLO FROM QBS-1 TO QBS-2".into()),
                }],
            },
            ExampleKind::Interplanet => Scenario {
                seed: 42,
                planets: vec![
                    PlanetSpec {
                        mother_id: "mother-earth".into(),
                        children: vec![ChildSpec {
                            qbs_id: "qbs-earth-1".into(),
                            users: vec![user("user-a", 1001)],
                        }],
                    },
                    PlanetSpec {
                        mother_id: "mother-mars".into(),
                        children: vec![ChildSpec {
                            qbs_id: "qbs-mars-1".into(),
                            users: vec![user("user-m", 2001)],
                        }],
                    },
                ],
                links: vec![
                    link("user-a", "qbs-earth-1", 10.0),
                    link("qbs-earth-1", "mother-earth", 1.0e3),
                    link("mother-earth", "mother-mars", 2.25e11),
                    link("qbs-mars-1", "mother-mars", 1.0e3),
                    link("user-m", "qbs-mars-1", 10.0),
                ],
                workload: vec![WorkItem {
                    at_tick: 0,
                    from_qid: Qid(1001),
                    to_qid: Qid(2001),
                    payload: Payload::Text("HELLO MARS".into()),
                }],
            },
        }
    }

    /// Checks every cross-reference and limit, collecting all problems.
    pub fn validate(&self, max_payload_bytes: usize) -> Result<(), ValidationError> {
        let mut issues = Vec::new();
        let mut issue = |path: String, message: String| issues.push(Issue { path, message });

        let mut roles: BTreeMap<&str, (Role, Option<usize>)> = BTreeMap::new();
        let mut parent: BTreeMap<&str, &str> = BTreeMap::new();
        let mut qids: BTreeSet<Qid> = BTreeSet::new();

        let claim = |name: &str, path: String, issue: &mut dyn FnMut(String, String)| -> bool {
            if name.is_empty() {
                issue(path, "node id must not be empty".into());
                return false;
            }
            true
        };

        for (pi, planet) in self.planets.iter().enumerate() {
            let path = format!("planets[{pi}].mother_id");
            if claim(&planet.mother_id, path.clone(), &mut issue) {
                if roles.contains_key(planet.mother_id.as_str()) {
                    issue(path, format!("duplicate node id {:?}", planet.mother_id));
                } else {
                    roles.insert(&planet.mother_id, (Role::Mother(pi), None));
                }
            }
            for (ci, child) in planet.children.iter().enumerate() {
                let path = format!("planets[{pi}].children[{ci}].qbs_id");
                if claim(&child.qbs_id, path.clone(), &mut issue) {
                    if roles.contains_key(child.qbs_id.as_str()) {
                        issue(path, format!("duplicate node id {:?}", child.qbs_id));
                    } else {
                        roles.insert(&child.qbs_id, (Role::Child(pi), None));
                        parent.insert(&child.qbs_id, &planet.mother_id);
                    }
                }
                for (ui, u) in child.users.iter().enumerate() {
                    let base = format!("planets[{pi}].children[{ci}].users[{ui}]");
                    let path = format!("{base}.node_id");
                    if claim(&u.node_id, path.clone(), &mut issue) {
                        if roles.contains_key(u.node_id.as_str()) {
                            issue(path, format!("duplicate node id {:?}", u.node_id));
                        } else {
                            roles.insert(&u.node_id, (Role::User, Some(pi)));
                            parent.insert(&u.node_id, &child.qbs_id);
                        }
                    }
                    if !qids.insert(u.qid) {
                        issue(format!("{base}.qid"), format!("duplicate QID {}", u.qid));
                    }
                }
            }
        }

        let mut seen_links = BTreeSet::new();
        for (li, l) in self.links.iter().enumerate() {
            let base = format!("links[{li}]");
            let ra = roles.get(l.a.as_str()).map(|r| r.0);
            let rb = roles.get(l.b.as_str()).map(|r| r.0);
            if ra.is_none() {
                issue(format!("{base}.a"), format!("unknown node {:?}", l.a));
            }
            if rb.is_none() {
                issue(format!("{base}.b"), format!("unknown node {:?}", l.b));
            }
            if !l.distance_meters.is_finite() || l.distance_meters < 0.0 {
                issue(
                    format!("{base}.distance_meters"),
                    format!("distance must be a finite non-negative number, got {}", l.distance_meters),
                );
            }
            let (Some(ra), Some(rb)) = (ra, rb) else { continue };
            if l.a == l.b {
                issue(base.clone(), "a link cannot connect a node to itself".into());
                continue;
            }
            let adjacent = parent.get(l.a.as_str()) == Some(&l.b.as_str())
                || parent.get(l.b.as_str()) == Some(&l.a.as_str());
            let allowed = adjacent
                || matches!((ra, rb), (Role::Mother(_), Role::Mother(_)) | (Role::Child(_), Role::Child(_)));
            if !allowed {
                issue(
                    base.clone(),
                    format!("{:?} and {:?} are not adjacent in the station tree", l.a, l.b),
                );
            }
            let key = if l.a < l.b { (&l.a, &l.b) } else { (&l.b, &l.a) };
            if !seen_links.insert(key) {
                issue(base, format!("duplicate link between {:?} and {:?}", l.a, l.b));
            }
        }

        for (wi, w) in self.workload.iter().enumerate() {
            let base = format!("workload[{wi}]");
            if !qids.contains(&w.from_qid) {
                issue(format!("{base}.from_qid"), format!("caller QID {} is not registered", w.from_qid));
            }
            if w.from_qid == w.to_qid {
                issue(format!("{base}.to_qid"), format!("QID {} cannot call itself", w.to_qid));
            }
            match w.payload.bytes() {
                Ok(bytes) if bytes.len() > max_payload_bytes => issue(
                    format!("{base}.payload"),
                    format!("payload of {} bytes exceeds the {max_payload_bytes}-byte cap", bytes.len()),
                ),
                Ok(_) => {}
                Err(e) => issue(format!("{base}.payload"), e),
            }
        }

        if issues.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { issues })
        }
    }
}
