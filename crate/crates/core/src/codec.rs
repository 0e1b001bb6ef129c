//! 128-bit frames: plate encoding and decoding, plus message segmentation.
//!
//! Bit `i` of a frame drives particle `i` of a plate. The sender triggers
//! `Up` for a 1 and `Down` for a 0; the receiver observes the partner, reads
//! the raw bit (`Up` = 1) and inverts it.
//!
//! Messages travel as a header frame (payload length, big-endian, in bits
//! 0..64) followed by ceil(len / 16) data frames, packed MSB first and
//! zero padded.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::entanglement::{Direction, EntanglementError, PairPool, Plate, PlateRole, PLATE_WIDTH};

/// Payload bytes carried by one data frame.
pub const FRAME_BYTES: usize = PLATE_WIDTH / 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("plate generation {0} already carries data")]
    PlateAlreadyUsed(u64),
    #[error("wrong plate role: expected {expected:?}")]
    WrongPlateRole { expected: PlateRole },
    #[error("frame received after the message was complete")]
    LengthOverrun,
    #[error("frame sequence ended before the declared length")]
    Truncated,
    #[error("header frame has non-zero reserved bits")]
    MalformedHeader,
    #[error("frame needs exactly 128 bits, got {0}")]
    BadFrameLength(usize),
    #[error("invalid frame hex: {0}")]
    BadHex(String),
    #[error(transparent)]
    Entanglement(#[from] EntanglementError),
}

/// The data image of one plate generation. Bit 0 is the most significant bit.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Frame(u128);

impl Frame {
    pub const ZERO: Frame = Frame(0);
    pub const ONES: Frame = Frame(u128::MAX);

    pub fn from_u128(value: u128) -> Self {
        Frame(value)
    }

    pub fn as_u128(self) -> u128 {
        self.0
    }

    pub fn from_bits(bits: &[bool]) -> Result<Self, CodecError> {
        if bits.len() != PLATE_WIDTH {
            return Err(CodecError::BadFrameLength(bits.len()));
        }
        Ok(Frame(
            bits.iter().fold(0u128, |acc, &b| (acc << 1) | u128::from(b)),
        ))
    }

    pub fn from_bytes(bytes: [u8; FRAME_BYTES]) -> Self {
        Frame(u128::from_be_bytes(bytes))
    }

    pub fn to_bytes(self) -> [u8; FRAME_BYTES] {
        self.0.to_be_bytes()
    }

    pub fn bit(self, index: usize) -> bool {
        assert!(index < PLATE_WIDTH, "bit index {index} out of range");
        (self.0 >> (PLATE_WIDTH - 1 - index)) & 1 == 1
    }

    pub fn with_bit(self, index: usize, value: bool) -> Self {
        assert!(index < PLATE_WIDTH, "bit index {index} out of range");
        let mask = 1u128 << (PLATE_WIDTH - 1 - index);
        Frame(if value { self.0 | mask } else { self.0 & !mask })
    }

    pub fn bits(self) -> impl Iterator<Item = bool> {
        (0..PLATE_WIDTH).map(move |i| self.bit(i))
    }

    pub fn header(payload_len: u64) -> Self {
        Frame(u128::from(payload_len) << 64)
    }
}

/// 32 lowercase hex digits; the first digit holds bits 0..4.
impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:032x}", self.0)
    }
}

impl fmt::Debug for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Frame({self})")
    }
}

impl FromStr for Frame {
    type Err = CodecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 32 || !s.bytes().all(|b| b.is_ascii_hexdigit()) {
            return Err(CodecError::BadHex(s.to_string()));
        }
        u128::from_str_radix(s, 16)
            .map(Frame)
            .map_err(|_| CodecError::BadHex(s.to_string()))
    }
}

/// Triggers every Tx particle with the spin for its bit.
pub fn encode_frame(pool: &mut PairPool, tx: &Plate, frame: Frame) -> Result<(), CodecError> {
    if tx.role() != PlateRole::Tx {
        return Err(CodecError::WrongPlateRole {
            expected: PlateRole::Tx,
        });
    }
    for &id in tx.particle_ids() {
        if pool.spin(id)?.is_fixed() {
            return Err(CodecError::PlateAlreadyUsed(tx.generation()));
        }
    }
    for (i, &id) in tx.particle_ids().iter().enumerate() {
        pool.trigger_spin(id, Direction::from_raw_bit(frame.bit(i)))?;
    }
    Ok(())
}

/// Observes every Rx particle and inverts the raw reading.
pub fn decode_frame(pool: &mut PairPool, rx: &Plate) -> Result<Frame, CodecError> {
    if rx.role() != PlateRole::Rx {
        return Err(CodecError::WrongPlateRole {
            expected: PlateRole::Rx,
        });
    }
    let mut value = 0u128;
    for &id in rx.particle_ids() {
        let raw = pool.observe(id)?.raw_bit();
        value = (value << 1) | u128::from(!raw);
    }
    Ok(Frame(value))
}

pub fn frame_count(payload_len: usize) -> usize {
    1 + payload_len.div_ceil(FRAME_BYTES)
}

pub fn segment_message(payload: &[u8]) -> Vec<Frame> {
    let mut frames = Vec::with_capacity(frame_count(payload.len()));
    frames.push(Frame::header(payload.len() as u64));
    for chunk in payload.chunks(FRAME_BYTES) {
        let mut bytes = [0u8; FRAME_BYTES];
        bytes[..chunk.len()].copy_from_slice(chunk);
        frames.push(Frame::from_bytes(bytes));
    }
    frames
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Reassembly {
    Pending,
    Complete(Vec<u8>),
}

/// Receiver-side state for one in-order message.
#[derive(Debug, Clone, Default)]
pub struct MessageBuffer {
    payload: Vec<u8>,
    declared_length: Option<u64>,
    received_frames: u64,
    complete: bool,
}

impl MessageBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn declared_length(&self) -> Option<u64> {
        self.declared_length
    }

    pub fn received_frames(&self) -> u64 {
        self.received_frames
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    pub fn push(&mut self, frame: Frame) -> Result<Reassembly, CodecError> {
        if self.complete {
            return Err(CodecError::LengthOverrun);
        }
        self.received_frames += 1;
        let declared = match self.declared_length {
            None => {
                if frame.as_u128() as u64 != 0 {
                    return Err(CodecError::MalformedHeader);
                }
                let len = (frame.as_u128() >> 64) as u64;
                self.declared_length = Some(len);
                // grow with the data rather than trusting the header up front
                self.payload
                    .reserve(len.min(64 * FRAME_BYTES as u64) as usize);
                len
            }
            Some(len) => {
                let remaining = (len - self.payload.len() as u64) as usize;
                let take = remaining.min(FRAME_BYTES);
                self.payload.extend_from_slice(&frame.to_bytes()[..take]);
                len
            }
        };
        if self.payload.len() as u64 >= declared {
            self.complete = true;
            Ok(Reassembly::Complete(std::mem::take(&mut self.payload)))
        } else {
            Ok(Reassembly::Pending)
        }
    }
}

/// Convenience for in-order delivery of a whole frame sequence.
pub fn reassemble(frames: &[Frame]) -> Result<Vec<u8>, CodecError> {
    let mut buffer = MessageBuffer::new();
    let mut out = None;
    for &frame in frames {
        match buffer.push(frame)? {
            Reassembly::Pending => {}
            Reassembly::Complete(bytes) => out = Some(bytes),
        }
    }
    out.ok_or(CodecError::Truncated)
}
