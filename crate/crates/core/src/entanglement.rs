//! Entangled particle pairs, spin observation and the 128-particle plates.
//!
//! A [`PairPool`] owns every live particle of one entangled circuit. Particles
//! are created in anti-correlated pairs and stay [`Spin::Unobserved`] until
//! either end is triggered (ionized particles only) or observed. Once a pair
//! is fixed it never changes again; a plate is re-provisioned with fresh
//! pairs through [`PairPool::reset_plate_pair`].

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Number of particles on every Tx and Rx plate.
pub const PLATE_WIDTH: usize = 128;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParticleId(pub u64);

impl fmt::Display for ParticleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}

/// A measured spin direction.
///
/// `Up` carries raw bit 1 and `Down` raw bit 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
}

impl Direction {
    pub fn opposite(self) -> Self {
        match self {
            Direction::Up => Direction::Down,
            Direction::Down => Direction::Up,
        }
    }

    pub fn raw_bit(self) -> bool {
        matches!(self, Direction::Up)
    }

    pub fn from_raw_bit(bit: bool) -> Self {
        if bit {
            Direction::Up
        } else {
            Direction::Down
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Spin {
    Unobserved,
    Up,
    Down,
}

impl Spin {
    pub fn direction(self) -> Option<Direction> {
        match self {
            Spin::Unobserved => None,
            Spin::Up => Some(Direction::Up),
            Spin::Down => Some(Direction::Down),
        }
    }

    pub fn is_fixed(self) -> bool {
        !matches!(self, Spin::Unobserved)
    }
}

impl From<Direction> for Spin {
    fn from(d: Direction) -> Self {
        match d {
            Direction::Up => Spin::Up,
            Direction::Down => Spin::Down,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Particle {
    pub id: ParticleId,
    /// Ionized particles have a fixed measurement axis and may be triggered.
    pub ionized: bool,
    pub spin: Spin,
    pub partner: ParticleId,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EntanglementError {
    #[error("unknown particle {0}")]
    UnknownParticle(ParticleId),
    #[error("particle {0} is not ionized and cannot be triggered")]
    TriggerOnNonIonized(ParticleId),
    #[error("particle {0} already has a fixed spin")]
    AlreadyFixed(ParticleId),
    #[error("plates are not a matched Tx/Rx pair")]
    MismatchedPlates,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PlateRole {
    Tx,
    Rx,
}

/// An ordered array of exactly [`PLATE_WIDTH`] particle ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Plate {
    role: PlateRole,
    particle_ids: Vec<ParticleId>,
    generation: u64,
}

impl Plate {
    pub fn role(&self) -> PlateRole {
        self.role
    }

    pub fn particle_ids(&self) -> &[ParticleId] {
        &self.particle_ids
    }

    pub fn len(&self) -> usize {
        self.particle_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particle_ids.is_empty()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn get(&self, index: usize) -> ParticleId {
        self.particle_ids[index]
    }
}

/// Store of live entangled pairs with its own deterministic random stream.
#[derive(Debug, Clone)]
pub struct PairPool {
    particles: HashMap<ParticleId, Particle>,
    next_id: u64,
    rng: ChaCha8Rng,
}

impl PairPool {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    /// A pool whose random stream is `stream` of the generator keyed by `seed`.
    ///
    /// Pools built from the same seed but different streams draw independent
    /// sequences, so each circuit's outcomes do not depend on event order
    /// elsewhere in the network.
    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        PairPool {
            particles: HashMap::new(),
            next_id: 0,
            rng,
        }
    }

    /// Number of live particles (twice the number of live pairs).
    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particle(&self, id: ParticleId) -> Result<&Particle, EntanglementError> {
        self.particles
            .get(&id)
            .ok_or(EntanglementError::UnknownParticle(id))
    }

    pub fn spin(&self, id: ParticleId) -> Result<Spin, EntanglementError> {
        self.particle(id).map(|p| p.spin)
    }

    pub fn partner(&self, id: ParticleId) -> Result<ParticleId, EntanglementError> {
        self.particle(id).map(|p| p.partner)
    }

    pub fn particles(&self) -> impl Iterator<Item = &Particle> {
        self.particles.values()
    }

    pub fn create_pair(&mut self, ionize_first: bool) -> (ParticleId, ParticleId) {
        let a = ParticleId(self.next_id);
        let b = ParticleId(self.next_id + 1);
        self.next_id += 2;
        self.particles.insert(
            a,
            Particle {
                id: a,
                ionized: ionize_first,
                spin: Spin::Unobserved,
                partner: b,
            },
        );
        self.particles.insert(
            b,
            Particle {
                id: b,
                ionized: false,
                spin: Spin::Unobserved,
                partner: a,
            },
        );
        (a, b)
    }

    /// Forces `direction` on an ionized particle and the opposite spin on its
    /// partner in the same step.
    pub fn trigger_spin(
        &mut self,
        id: ParticleId,
        direction: Direction,
    ) -> Result<(), EntanglementError> {
        let p = self.particle(id)?;
        if !p.ionized {
            return Err(EntanglementError::TriggerOnNonIonized(id));
        }
        if p.spin.is_fixed() {
            return Err(EntanglementError::AlreadyFixed(id));
        }
        let partner = p.partner;
        self.fix_pair(id, partner, direction);
        Ok(())
    }

    /// Reads a particle's spin, collapsing an unobserved pair with a fair draw
    /// from the pool's stream.
    pub fn observe(&mut self, id: ParticleId) -> Result<Direction, EntanglementError> {
        let p = self.particle(id)?;
        if let Some(d) = p.spin.direction() {
            return Ok(d);
        }
        let partner = p.partner;
        let drawn = Direction::from_raw_bit(self.rng.gen::<bool>());
        self.fix_pair(id, partner, drawn);
        Ok(drawn)
    }

    fn fix_pair(&mut self, id: ParticleId, partner: ParticleId, direction: Direction) {
        if let Some(p) = self.particles.get_mut(&id) {
            p.spin = direction.into();
        }
        if let Some(q) = self.particles.get_mut(&partner) {
            q.spin = direction.opposite().into();
        }
    }

    fn retire_pair(&mut self, id: ParticleId) {
        if let Some(p) = self.particles.remove(&id) {
            self.particles.remove(&p.partner);
        }
    }

    /// Builds an index-aligned Tx/Rx plate pair: `tx[i]` is ionized and
    /// entangled with the non-ionized `rx[i]`.
    pub fn make_plate_pair(&mut self) -> (Plate, Plate) {
        let mut tx = Vec::with_capacity(PLATE_WIDTH);
        let mut rx = Vec::with_capacity(PLATE_WIDTH);
        for _ in 0..PLATE_WIDTH {
            let (a, b) = self.create_pair(true);
            tx.push(a);
            rx.push(b);
        }
        (
            Plate {
                role: PlateRole::Tx,
                particle_ids: tx,
                generation: 0,
            },
            Plate {
                role: PlateRole::Rx,
                particle_ids: rx,
                generation: 0,
            },
        )
    }

    /// Re-provisions a plate pair for the next frame.
    ///
    /// Every pair that has been fixed is retired and replaced by a fresh
    /// unobserved pair; pairs still unobserved are kept. Both generation
    /// counters advance by one.
    pub fn reset_plate_pair(
        &mut self,
        tx: &mut Plate,
        rx: &mut Plate,
    ) -> Result<(), EntanglementError> {
        self.check_matched(tx, rx)?;
        for i in 0..PLATE_WIDTH {
            let old = tx.particle_ids[i];
            if self.spin(old)?.is_fixed() {
                self.retire_pair(old);
                let (a, b) = self.create_pair(true);
                tx.particle_ids[i] = a;
                rx.particle_ids[i] = b;
            }
        }
        tx.generation += 1;
        rx.generation += 1;
        Ok(())
    }

    pub fn check_matched(&self, tx: &Plate, rx: &Plate) -> Result<(), EntanglementError> {
        if tx.role != PlateRole::Tx
            || rx.role != PlateRole::Rx
            || tx.generation != rx.generation
            || tx.len() != PLATE_WIDTH
            || rx.len() != PLATE_WIDTH
        {
            return Err(EntanglementError::MismatchedPlates);
        }
        for (&t, &r) in tx.particle_ids.iter().zip(&rx.particle_ids) {
            match self.particles.get(&t) {
                Some(p) if p.partner == r && p.ionized => {}
                _ => return Err(EntanglementError::MismatchedPlates),
            }
        }
        Ok(())
    }

    /// Pairs whose two ends are both fixed to the same direction. Always
    /// empty unless the pool was corrupted.
    pub fn anti_correlation_violations(&self) -> Vec<(ParticleId, ParticleId)> {
        let mut bad = Vec::new();
        for p in self.particles.values() {
            if p.id > p.partner {
                continue;
            }
            match self.particles.get(&p.partner) {
                Some(q) if q.partner == p.id => {
                    if let (Some(a), Some(b)) = (p.spin.direction(), q.spin.direction()) {
                        if a != b.opposite() {
                            bad.push((p.id, q.id));
                        }
                    } else if p.spin.is_fixed() != q.spin.is_fixed() {
                        bad.push((p.id, q.id));
                    }
                }
                _ => bad.push((p.id, p.partner)),
            }
        }
        bad
    }
}
