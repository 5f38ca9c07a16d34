use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::mdp::{StateVector, Trajectory, Transition};
use crate::nn::digest64;

const FORMAT: u64 = 1;
/// format, id, actor, policy version, transitions, state width, task width,
/// action count, checksum
const HEADER_FIELDS: usize = 9;
/// Refuse frames larger than this before allocating.
pub const MAX_FRAME: usize = 64 << 20;

/// Envelope id for the `seq`-th trajectory of `actor`; unique per run.
pub fn envelope_id(actor: usize, seq: u64) -> u64 {
    ((actor as u64) << 40) | (seq & ((1 << 40) - 1))
}

/// A trajectory in transit from an actor to the learner.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnvelope {
    pub id: u64,
    pub actor: usize,
    /// Snapshot version the actor held while generating.
    pub policy_version: u64,
    pub trajectory: Trajectory,
    pub checksum: u64,
}

impl TrajectoryEnvelope {
    pub fn seal(actor: usize, seq: u64, trajectory: Trajectory) -> Result<Self> {
        let body = encode_body(&trajectory)?;
        Ok(TrajectoryEnvelope {
            id: envelope_id(actor, seq),
            actor,
            policy_version: trajectory.policy_version,
            checksum: digest64(&body),
            trajectory,
        })
    }

    /// Recomputes the checksum over the carried trajectory.
    pub fn verify(&self) -> Result<()> {
        let found = digest64(&encode_body(&self.trajectory)?);
        if found != self.checksum {
            return Err(Error::Checksum {
                expected: self.checksum,
                found,
            });
        }
        if self.trajectory.policy_version != self.policy_version {
            return Err(Error::Validation(format!(
                "envelope {} claims version {} but carries {}",
                self.id, self.policy_version, self.trajectory.policy_version
            )));
        }
        Ok(())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let body = encode_body(&self.trajectory)?;
        let first = self
            .trajectory
            .transitions
            .first()
            .ok_or_else(|| Error::Precondition("cannot encode an empty trajectory".into()))?;
        let mut out = Vec::with_capacity(HEADER_FIELDS * 8 + body.len());
        for field in [
            FORMAT,
            self.id,
            self.actor as u64,
            self.policy_version,
            self.trajectory.transitions.len() as u64,
            first.state.features.len() as u64,
            first.state.task_dim as u64,
            first.mask.len() as u64,
            self.checksum,
        ] {
            out.extend_from_slice(&field.to_le_bytes());
        }
        out.extend_from_slice(&body);
        Ok(out)
    }

    /// Parses and verifies an encoded envelope.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_FIELDS * 8 {
            return Err(Error::Format("envelope shorter than its header".into()));
        }
        let field =
            |i: usize| u64::from_le_bytes(bytes[i * 8..i * 8 + 8].try_into().expect("8 bytes"));
        if field(0) != FORMAT {
            return Err(Error::Format(format!("unsupported envelope format {}", field(0))));
        }
        let (count, width, task_dim, actions) = (
            field(4) as usize,
            field(5) as usize,
            field(6) as usize,
            field(7) as usize,
        );
        let body = &bytes[HEADER_FIELDS * 8..];
        let expected = field(8);
        let found = digest64(body);
        if found != expected {
            return Err(Error::Checksum { expected, found });
        }
        let mut r = Reader { bytes: body, at: 0 };
        let mut transitions = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let state = r.state(width, task_dim)?;
            let mask = r.mask(actions)?;
            let action = r.u64()? as usize;
            let reward = r.f64()?;
            let behavior_prob = r.f64()?;
            let priority = r.f64()?;
            let done = r.u64()? != 0;
            let next_state = r.state(width, task_dim)?;
            transitions.push(Transition {
                state,
                mask,
                action,
                reward,
                behavior_prob,
                next_state,
                priority,
                done,
            });
        }
        if r.at != body.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after envelope body",
                body.len() - r.at
            )));
        }
        Ok(TrajectoryEnvelope {
            id: field(1),
            actor: field(2) as usize,
            policy_version: field(3),
            trajectory: Trajectory {
                transitions,
                policy_version: field(3),
            },
            checksum: expected,
        })
    }
}

fn encode_body(traj: &Trajectory) -> Result<Vec<u8>> {
    let Some(first) = traj.transitions.first() else {
        return Ok(Vec::new());
    };
    let (width, actions) = (first.state.features.len(), first.mask.len());
    let mut out = Vec::new();
    let push_state = |out: &mut Vec<u8>, s: &StateVector| -> Result<()> {
        if s.features.len() != width || s.task_dim != first.state.task_dim {
            return Err(Error::Shape("trajectory mixes state widths".into()));
        }
        for v in &s.features {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(())
    };
    for t in &traj.transitions {
        if t.mask.len() != actions {
            return Err(Error::Shape("trajectory mixes action counts".into()));
        }
        push_state(&mut out, &t.state)?;
        for word in t.mask.chunks(64) {
            let bits = word
                .iter()
                .enumerate()
                .fold(0u64, |acc, (i, &m)| acc | ((m as u64) << i));
            out.extend_from_slice(&bits.to_le_bytes());
        }
        out.extend_from_slice(&(t.action as u64).to_le_bytes());
        for v in [t.reward, t.behavior_prob, t.priority] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(t.done as u64).to_le_bytes());
        push_state(&mut out, &t.next_state)?;
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn word(&mut self) -> Result<[u8; 8]> {
        let end = self.at + 8;
        let chunk = self
            .bytes
            .get(self.at..end)
            .ok_or_else(|| Error::Format("envelope body truncated".into()))?;
        self.at = end;
        Ok(chunk.try_into().expect("8 bytes"))
    }

    fn u64(&mut self) -> Result<u64> {
        self.word().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64> {
        self.word().map(f64::from_le_bytes)
    }

    fn state(&mut self, width: usize, task_dim: usize) -> Result<StateVector> {
        let features = (0..width).map(|_| self.f64()).collect::<Result<_>>()?;
        Ok(StateVector { features, task_dim })
    }

    fn mask(&mut self, actions: usize) -> Result<Vec<bool>> {
        let mut mask = Vec::with_capacity(actions);
        for _ in 0..actions.div_ceil(64) {
            let bits = self.u64()?;
            for i in 0..64 {
                if mask.len() < actions {
                    mask.push(bits >> i & 1 == 1);
                }
            }
        }
        Ok(mask)
    }
}

/// Writes one frame: a 4-byte big-endian length, then the envelope.
pub fn write_frame(w: &mut impl Write, envelope: &TrajectoryEnvelope) -> Result<()> {
    let payload = envelope.encode()?;
    let len = u32::try_from(payload.len())
        .ok()
        .filter(|&l| l as usize <= MAX_FRAME)
        .ok_or_else(|| Error::LimitExceeded(format!("frame of {} bytes", payload.len())))?;
    w.write_all(&len.to_be_bytes())?;
    w.write_all(&payload)?;
    w.flush()?;
    Ok(())
}

/// Reads one frame. `Ok(None)` on a clean end of stream.
pub fn read_frame(r: &mut impl Read) -> Result<Option<TrajectoryEnvelope>> {
    let mut len = [0u8; 4];
    match r.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e.into()),
    }
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(Error::LimitExceeded(format!("frame of {len} bytes")));
    }
    let mut payload = vec![0u8; len];
    r.read_exact(&mut payload)?;
    TrajectoryEnvelope::decode(&payload).map(Some)
}
