//! Network state shared by every station: nodes, registries, circuits and
//! link distances.
//!
//! Registration is atomic across the child and every mother: the child maps
//! the QID to the user, the home mother maps it to the child, and each peer
//! mother maps it to the home mother.

use std::collections::{BTreeMap, HashMap};

use crate::circuit::{Circuit, CircuitId, CircuitScope};
use crate::qbs::{
    GlobalLookup, LocalLookup, Location, ProtocolError, QbsKind, QbsNode, Qid, SessionId,
    SessionRecord,
};
use crate::user::{AcceptPolicy, UserNode};
use crate::NodeId;

#[derive(Debug, Clone)]
pub enum Node {
    User(UserNode),
    Qbs(QbsNode),
}

#[derive(Debug, Clone)]
struct NodeEntry {
    name: String,
    node: Node,
}

#[derive(Debug, Clone)]
pub struct Network {
    seed: u64,
    nodes: Vec<NodeEntry>,
    names: HashMap<String, NodeId>,
    qids: HashMap<Qid, NodeId>,
    mothers: Vec<NodeId>,
    circuits: BTreeMap<CircuitId, Circuit>,
    next_circuit: u64,
    distances: HashMap<(NodeId, NodeId), f64>,
    session_owner: HashMap<SessionId, NodeId>,
}

fn link_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl Network {
    /// `seed` keys every circuit's pair pool.
    pub fn new(seed: u64) -> Self {
        Network {
            seed,
            nodes: Vec::new(),
            names: HashMap::new(),
            qids: HashMap::new(),
            mothers: Vec::new(),
            circuits: BTreeMap::new(),
            next_circuit: 1,
            distances: HashMap::new(),
            session_owner: HashMap::new(),
        }
    }

    fn push_node(&mut self, name: &str, node: impl FnOnce(NodeId) -> Node) -> Result<NodeId, ProtocolError> {
        if self.names.contains_key(name) {
            return Err(ProtocolError::DuplicateName(name.to_string()));
        }
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(NodeEntry {
            name: name.to_string(),
            node: node(id),
        });
        self.names.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn add_mother(&mut self, name: &str) -> Result<NodeId, ProtocolError> {
        let id = self.push_node(name, |id| Node::Qbs(QbsNode::new(id, QbsKind::Mother)))?;
        let peers = self.mothers.clone();
        for peer in peers {
            self.provision(peer, id, CircuitScope::Permanent);
            // delegate everything the peer already knows about its own planet
            let owned: Vec<Qid> = self
                .qbs(peer)?
                .registry
                .iter()
                .filter(|(_, loc)| matches!(loc, Location::ChildQbs(_)))
                .map(|(q, _)| q)
                .collect();
            let me = self.qbs_mut(id)?;
            for q in owned {
                me.registry.insert(q, Location::RemotePlanet(peer));
            }
        }
        self.mothers.push(id);
        Ok(id)
    }

    pub fn add_child(&mut self, name: &str, mother: NodeId) -> Result<NodeId, ProtocolError> {
        if !self.qbs(mother)?.is_mother() {
            return Err(ProtocolError::NotAMother(mother));
        }
        let id = self.push_node(name, |id| {
            Node::Qbs(QbsNode::new(id, QbsKind::Child { mother }))
        })?;
        self.qbs_mut(mother)?.children.insert(id);
        self.provision(id, mother, CircuitScope::Permanent);
        Ok(id)
    }

    /// Creates a user node on `child` and registers its QID.
    pub fn attach_user(
        &mut self,
        name: &str,
        child: NodeId,
        qid: Qid,
        policy: AcceptPolicy,
    ) -> Result<NodeId, ProtocolError> {
        if self.qids.contains_key(&qid) {
            return Err(ProtocolError::DuplicateQid(qid));
        }
        self.qbs(child)?.mother().ok_or(ProtocolError::NotAChild(child))?;
        let id = self.push_node(name, |id| Node::User(UserNode::new(id, qid, child, policy)))?;
        self.register_user(child, qid, id)?;
        Ok(id)
    }

    /// Registers `qid` as `user` on `child`, its mother and every peer mother,
    /// and provisions the permanent user-child circuit.
    pub fn register_user(&mut self, child: NodeId, qid: Qid, user: NodeId) -> Result<(), ProtocolError> {
        if self.qids.contains_key(&qid) {
            return Err(ProtocolError::DuplicateQid(qid));
        }
        let mother = self.qbs(child)?.mother().ok_or(ProtocolError::NotAChild(child))?;
        self.user(user)?;
        self.qbs_mut(child)?.registry.insert(qid, Location::LocalUser(user));
        self.qbs_mut(mother)?.registry.insert(qid, Location::ChildQbs(child));
        for peer in self.mothers.clone() {
            if peer != mother {
                self.qbs_mut(peer)?
                    .registry
                    .insert(qid, Location::RemotePlanet(mother));
            }
        }
        self.qids.insert(qid, user);
        let circuit = self.provision(user, child, CircuitScope::Permanent);
        self.user_mut(user)?.access_circuit = Some(circuit);
        Ok(())
    }

    pub fn lookup_local(&self, qbs: NodeId, qid: Qid) -> LocalLookup {
        match self.qbs(qbs).ok().and_then(|q| q.registry.get(qid)) {
            Some(Location::LocalUser(user)) => LocalLookup::Found(user),
            _ => LocalLookup::NotFound,
        }
    }

    /// Resolves `qid` at `mother`, asking the peer mother once when the entry
    /// is a remote-planet delegation.
    pub fn lookup_global(&self, mother: NodeId, qid: Qid) -> GlobalLookup {
        let Ok(m) = self.qbs(mother) else {
            return GlobalLookup::NotFound;
        };
        match m.registry.get(qid) {
            Some(Location::ChildQbs(child)) => GlobalLookup::ChildQbs(child),
            Some(Location::RemotePlanet(peer)) => match self.qbs(peer).ok().and_then(|p| p.registry.get(qid)) {
                Some(Location::ChildQbs(child)) => GlobalLookup::RemotePlanet { mother: peer, child },
                _ => GlobalLookup::NotFound,
            },
            _ => GlobalLookup::NotFound,
        }
    }

    fn provision(&mut self, a: NodeId, b: NodeId, scope: CircuitScope) -> CircuitId {
        let id = CircuitId(self.next_circuit);
        self.next_circuit += 1;
        self.circuits.insert(id, Circuit::new(id, a, b, scope, self.seed));
        for (end, peer) in [(a, b), (b, a)] {
            if let Some(Node::Qbs(q)) = self.nodes.get_mut(end.0 as usize).map(|e| &mut e.node) {
                q.circuits.insert(id, peer);
            }
        }
        id
    }

    /// Sets up a session-scoped child-child circuit brokered by `mother`.
    ///
    /// Both children must belong to `mother` or to one of its peer mothers,
    /// with at least one on `mother`'s own planet.
    pub fn provision_interqbs_circuit(
        &mut self,
        mother: NodeId,
        a: NodeId,
        b: NodeId,
        session: SessionId,
    ) -> Result<CircuitId, ProtocolError> {
        if !self.qbs(mother)?.is_mother() {
            return Err(ProtocolError::NotAMother(mother));
        }
        let ma = self.qbs(a)?.mother().ok_or(ProtocolError::NotAChild(a))?;
        let mb = self.qbs(b)?.mother().ok_or(ProtocolError::NotAChild(b))?;
        if a == b || (ma != mother && mb != mother) {
            return Err(ProtocolError::NotBrokerable { mother, a, b });
        }
        Ok(self.provision(a, b, CircuitScope::Session(session)))
    }

    /// Removes a session-scoped circuit from the store and both ends' tables.
    pub fn release_circuit(&mut self, id: CircuitId) -> Result<Circuit, ProtocolError> {
        let circuit = self.circuits.get(&id).ok_or(ProtocolError::UnknownCircuit(id))?;
        if circuit.is_permanent() {
            return Err(ProtocolError::PermanentCircuit(id));
        }
        let circuit = self.circuits.remove(&id).expect("checked above");
        let (a, b) = circuit.ends();
        for end in [a, b] {
            if let Ok(q) = self.qbs_mut(end) {
                q.circuits.remove(&id);
            }
        }
        Ok(circuit)
    }

    pub fn circuit(&self, id: CircuitId) -> Option<&Circuit> {
        self.circuits.get(&id)
    }

    pub fn circuit_mut(&mut self, id: CircuitId) -> Option<&mut Circuit> {
        self.circuits.get_mut(&id)
    }

    pub fn circuits(&self) -> impl Iterator<Item = &Circuit> {
        self.circuits.values()
    }

    pub fn permanent_circuit_count(&self) -> usize {
        self.circuits.values().filter(|c| c.is_permanent()).count()
    }

    pub fn session_circuit_count(&self) -> usize {
        self.circuits.len() - self.permanent_circuit_count()
    }

    pub fn permanent_circuit_between(&self, a: NodeId, b: NodeId) -> Option<CircuitId> {
        self.circuits
            .values()
            .find(|c| c.is_permanent() && c.connects(a, b))
            .map(|c| c.id())
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, ProtocolError> {
        self.nodes
            .get(id.0 as usize)
            .map(|e| &e.node)
            .ok_or(ProtocolError::UnknownNode(id))
    }

    pub fn name(&self, id: NodeId) -> &str {
        self.nodes.get(id.0 as usize).map_or("?", |e| e.name.as_str())
    }

    pub fn id_of(&self, name: &str) -> Option<NodeId> {
        self.names.get(name).copied()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn qbs(&self, id: NodeId) -> Result<&QbsNode, ProtocolError> {
        match self.node(id)? {
            Node::Qbs(q) => Ok(q),
            Node::User(_) => Err(ProtocolError::NotAChild(id)),
        }
    }

    pub fn qbs_mut(&mut self, id: NodeId) -> Result<&mut QbsNode, ProtocolError> {
        match self.nodes.get_mut(id.0 as usize).map(|e| &mut e.node) {
            Some(Node::Qbs(q)) => Ok(q),
            Some(Node::User(_)) => Err(ProtocolError::NotAChild(id)),
            None => Err(ProtocolError::UnknownNode(id)),
        }
    }

    pub fn user(&self, id: NodeId) -> Result<&UserNode, ProtocolError> {
        match self.node(id)? {
            Node::User(u) => Ok(u),
            Node::Qbs(_) => Err(ProtocolError::UnknownNode(id)),
        }
    }

    pub fn user_mut(&mut self, id: NodeId) -> Result<&mut UserNode, ProtocolError> {
        match self.nodes.get_mut(id.0 as usize).map(|e| &mut e.node) {
            Some(Node::User(u)) => Ok(u),
            _ => Err(ProtocolError::UnknownNode(id)),
        }
    }

    pub fn user_by_qid(&self, qid: Qid) -> Option<NodeId> {
        self.qids.get(&qid).copied()
    }

    pub fn users(&self) -> impl Iterator<Item = &UserNode> {
        self.nodes.iter().filter_map(|e| match &e.node {
            Node::User(u) => Some(u),
            _ => None,
        })
    }

    pub fn stations(&self) -> impl Iterator<Item = &QbsNode> {
        self.nodes.iter().filter_map(|e| match &e.node {
            Node::Qbs(q) => Some(q),
            _ => None,
        })
    }

    pub fn mothers(&self) -> &[NodeId] {
        &self.mothers
    }

    pub(crate) fn insert_session(&mut self, record: SessionRecord) -> Result<(), ProtocolError> {
        let owner = record.owner;
        let id = record.session_id;
        self.qbs_mut(owner)?.sessions.insert(id, record);
        self.session_owner.insert(id, owner);
        Ok(())
    }

    pub fn session(&self, id: SessionId) -> Result<&SessionRecord, ProtocolError> {
        let owner = self
            .session_owner
            .get(&id)
            .ok_or(ProtocolError::UnknownSession(id))?;
        self.qbs(*owner)?
            .sessions
            .get(&id)
            .ok_or(ProtocolError::UnknownSession(id))
    }

    pub fn session_mut(&mut self, id: SessionId) -> Result<&mut SessionRecord, ProtocolError> {
        let owner = *self
            .session_owner
            .get(&id)
            .ok_or(ProtocolError::UnknownSession(id))?;
        self.qbs_mut(owner)?
            .sessions
            .get_mut(&id)
            .ok_or(ProtocolError::UnknownSession(id))
    }

    pub fn sessions(&self) -> impl Iterator<Item = &SessionRecord> {
        let mut all: Vec<&SessionRecord> = self.stations().flat_map(|q| q.sessions.values()).collect();
        all.sort_by_key(|s| s.session_id);
        all.into_iter()
    }

    pub fn set_distance(&mut self, a: NodeId, b: NodeId, meters: f64) {
        self.distances.insert(link_key(a, b), meters);
    }

    /// Configured length of the direct link between `a` and `b`, if any.
    pub fn link_distance(&self, a: NodeId, b: NodeId) -> Option<f64> {
        self.distances.get(&link_key(a, b)).copied()
    }

    fn parent(&self, id: NodeId) -> Option<NodeId> {
        match self.node(id).ok()? {
            Node::User(u) => Some(u.home_qbs),
            Node::Qbs(q) => q.mother(),
        }
    }

    /// Length of the conventional route between two nodes: the direct link
    /// when one is configured, otherwise up the station tree and across the
    /// mother-mother link. Unlisted links count as zero.
    pub fn classical_distance(&self, a: NodeId, b: NodeId) -> f64 {
        if let Some(d) = self.link_distance(a, b) {
            return d;
        }
        let chain = |mut n: NodeId| {
            let mut v = vec![n];
            while let Some(p) = self.parent(n) {
                v.push(p);
                n = p;
            }
            v
        };
        let up_a = chain(a);
        let up_b = chain(b);
        let sum = |v: &[NodeId]| -> f64 {
            v.windows(2)
                .map(|w| self.link_distance(w[0], w[1]).unwrap_or(0.0))
                .sum()
        };
        if let Some(ia) = up_a.iter().position(|n| up_b.contains(n)) {
            let ib = up_b.iter().position(|n| *n == up_a[ia]).expect("common ancestor");
            return sum(&up_a[..=ia]) + sum(&up_b[..=ib]);
        }
        let top_a = *up_a.last().expect("non-empty");
        let top_b = *up_b.last().expect("non-empty");
        sum(&up_a) + self.link_distance(top_a, top_b).unwrap_or(0.0) + sum(&up_b)
    }

    /// Follows mother -> child -> user pointers for every known QID and
    /// returns the QIDs that do not end at their owning user.
    pub fn registry_incoherences(&self) -> Vec<Qid> {
        let mut bad = Vec::new();
        for (&qid, &owner) in &self.qids {
            let ok = self.mothers.iter().all(|&m| {
                let child = match self.lookup_global(m, qid) {
                    GlobalLookup::ChildQbs(c) => c,
                    GlobalLookup::RemotePlanet { child, .. } => child,
                    GlobalLookup::NotFound => return false,
                };
                self.lookup_local(child, qid) == LocalLookup::Found(owner)
            });
            if !ok {
                bad.push(qid);
            }
        }
        bad.sort();
        bad
    }
}
