use super::engine::{SimConfig, Simulation};
use super::protocol::Action;
use crate::network::Network;
use crate::scenario::{Scenario, ValidationError};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct Planet {
    pub mother: NodeId,
    /// Each child with its attached users.
    pub children: Vec<(NodeId, Vec<NodeId>)>,
}

/// A permanent link of the station tree, or an extra child-child link.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub a: NodeId,
    pub b: NodeId,
    pub distance_meters: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    pub planets: Vec<Planet>,
    pub links: Vec<Link>,
}

/// Validates `scenario` and builds its network: every station, every user
/// registration and every permanent circuit.
pub fn build_topology(scenario: &Scenario, config: &SimConfig) -> Result<(Topology, Network), ValidationError> {
    scenario.validate(config.max_payload_bytes)?;
    let mut net = Network::new(config.seed);
    let mut topo = Topology::default();
    let internal = |e: crate::qbs::ProtocolError| ValidationError::single("$", e.to_string());

    for planet in &scenario.planets {
        let mother = net.add_mother(&planet.mother_id).map_err(internal)?;
        let mut children = Vec::new();
        for child in &planet.children {
            let c = net.add_child(&child.qbs_id, mother).map_err(internal)?;
            let mut users = Vec::new();
            for u in &child.users {
                users.push(
                    net.attach_user(&u.node_id, c, u.qid, u.accept_policy.clone())
                        .map_err(internal)?,
                );
            }
            children.push((c, users));
        }
        topo.planets.push(Planet { mother, children });
    }

    for l in &scenario.links {
        let a = net.id_of(&l.a).expect("validated");
        let b = net.id_of(&l.b).expect("validated");
        net.set_distance(a, b, l.distance_meters);
    }
    let mut links: Vec<Link> = net
        .circuits()
        .filter(|c| c.is_permanent())
        .map(|c| {
            let (a, b) = c.ends();
            Link {
                a,
                b,
                distance_meters: net.link_distance(a, b).unwrap_or(0.0),
            }
        })
        .collect();
    for l in &scenario.links {
        let (a, b) = (net.id_of(&l.a).expect("validated"), net.id_of(&l.b).expect("validated"));
        if net.permanent_circuit_between(a, b).is_none() {
            links.push(Link {
                a,
                b,
                distance_meters: l.distance_meters,
            });
        }
    }
    topo.links = links;
    Ok((topo, net))
}

impl Simulation {
    /// Builds the network and queues the scenario's workload.
    pub fn from_scenario(scenario: &Scenario, config: SimConfig) -> Result<Simulation, ValidationError> {
        let (topology, net) = build_topology(scenario, &config)?;
        let mut sim = Simulation::new(net, config);
        sim.topology = topology;
        for (i, w) in scenario.workload.iter().enumerate() {
            let caller = sim.net.user_by_qid(w.from_qid).expect("validated");
            let payload = w
                .payload
                .bytes()
                .map_err(|e| ValidationError::single(format!("workload[{i}].payload"), e))?;
            sim.at(
                w.at_tick,
                caller,
                Action::Start {
                    callee: w.to_qid,
                    payload,
                },
            )
            .expect("clock starts at zero");
        }
        Ok(sim)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }
}
