//! Binary checkpoints and the state digest.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "SIMM" | version u16 | variant u8 | config text (u32 length + UTF-8)
//! | step u64 | arrays | checksum u64
//! ```
//!
//! Each array is a u64 element count followed by its elements: floats as
//! f64, ages as u64, alive flags as u8. The checksum is the first eight bytes
//! of SHA-256 over everything before it. The random state is fully
//! determined by the seed in the config text and the step.

use std::io::{self, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::atomic_write;
use super::config_text::{config_to_text, parse_config};
use crate::config::{Variant, WorldConfig};
use crate::engine::State;
use crate::error::{Result, SimError};
use crate::scalar::Scalar;
use crate::variants::ParticleWorld;
use crate::world::World;

pub const MAGIC: &[u8; 4] = b"SIMM";
pub const FORMAT_VERSION: u16 = 1;

fn variant_tag(v: Variant) -> u8 {
    match v {
        Variant::Grid => 0,
        Variant::PureEnergy => 1,
        Variant::Particles => 2,
    }
}

fn put_floats<S: Scalar>(w: &mut impl Write, v: &[S]) -> io::Result<()> {
    w.write_all(&(v.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(8 * 1024);
    for chunk in v.chunks(1024) {
        buf.clear();
        for x in chunk {
            buf.extend_from_slice(&x.wide().to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn put_u64s(w: &mut impl Write, v: &[u64]) -> io::Result<()> {
    w.write_all(&(v.len() as u64).to_le_bytes())?;
    for x in v {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

fn put_flags(w: &mut impl Write, v: &[bool]) -> io::Result<()> {
    w.write_all(&(v.len() as u64).to_le_bytes())?;
    let bytes: Vec<u8> = v.iter().map(|b| *b as u8).collect();
    w.write_all(&bytes)
}

/// Streams the checkpoint payload (everything but the checksum).
pub fn encode_state<S: Scalar>(state: &State<S>, w: &mut impl Write) -> io::Result<()> {
    let cfg = state.config();
    let text = config_to_text(cfg);
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[variant_tag(cfg.variant)])?;
    w.write_all(&(text.len() as u32).to_le_bytes())?;
    w.write_all(text.as_bytes())?;
    w.write_all(&state.step().to_le_bytes())?;
    match state {
        State::Grid(g) => {
            put_floats(w, &g.genome)?;
            put_floats(w, &g.h)?;
            put_u64s(w, &g.age)?;
            put_flags(w, &g.alive)?;
            put_floats(w, &g.energy)?;
            put_floats(w, &g.chem)?;
            put_floats(w, &g.enz)?;
            for layer in &g.signals.layers {
                put_floats(w, layer)?;
            }
        }
        State::Particles(p) => {
            put_floats(w, &p.xs)?;
            put_floats(w, &p.ys)?;
            put_floats(w, &p.energy)?;
            put_floats(w, &p.genome)?;
            put_floats(w, &p.h)?;
            put_floats(w, &p.background)?;
        }
    }
    let d = state.designated();
    put_u64s(w, &d.map(|i| i as u64))
}

struct HashWriter(Sha256);

impl Write for HashWriter {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        self.0.update(buf);
        Ok(buf.len())
    }
    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

fn digest64(bytes: &[u8]) -> u64 {
    let mut first = [0u8; 8];
    first.copy_from_slice(&bytes[..8]);
    u64::from_le_bytes(first)
}

/// 64-bit digest of the full state: config, step, every array.
pub fn world_hash<S: Scalar>(state: &State<S>) -> u64 {
    let mut h = HashWriter(Sha256::new());
    encode_state(state, &mut h).expect("hashing cannot fail");
    digest64(&h.0.finalize())
}

pub fn save_checkpoint<S: Scalar>(state: &State<S>, path: &Path) -> Result<()> {
    let mut bytes = Vec::new();
    encode_state(state, &mut bytes).map_err(|e| SimError::io(path, Some(state.step()), e))?;
    let sum = digest64(&Sha256::digest(&bytes));
    bytes.extend_from_slice(&sum.to_le_bytes());
    atomic_write(path, &bytes, Some(state.step()))
}

pub fn read_checkpoint_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| SimError::io(path, None, e))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.at.checked_add(n).filter(|e| *e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.at))?;
        let out = &self.bytes[self.at..end];
        self.at = end;
        Ok(out)
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self, expect: usize, what: &str) -> std::result::Result<(), String> {
        let n = self.u64()?;
        if n != expect as u64 {
            return Err(format!("{what}: expected {expect} entries, found {n}"));
        }
        Ok(())
    }

    fn floats<S: Scalar>(&mut self, out: &mut [S], what: &str) -> std::result::Result<(), String> {
        self.len(out.len(), what)?;
        let raw = self.take(8 * out.len())?;
        for (o, b) in out.iter_mut().zip(raw.chunks_exact(8)) {
            *o = S::of(f64::from_le_bytes(b.try_into().unwrap()));
        }
        Ok(())
    }

    fn u64s(&mut self, out: &mut [u64], what: &str) -> std::result::Result<(), String> {
        self.len(out.len(), what)?;
        for o in out.iter_mut() {
            *o = self.u64()?;
        }
        Ok(())
    }

    fn flags(&mut self, out: &mut [bool], what: &str) -> std::result::Result<(), String> {
        self.len(out.len(), what)?;
        let raw = self.take(out.len())?;
        for (o, b) in out.iter_mut().zip(raw) {
            *o = match b {
                0 => false,
                1 => true,
                _ => return Err(format!("{what}: invalid flag byte {b}")),
            };
        }
        Ok(())
    }
}

/// Checks magic, version and checksum; returns the header fields and the
/// cursor positioned at the first array.
fn open(bytes: &[u8]) -> std::result::Result<(WorldConfig, u8, u64, Cursor<'_>), String> {
    if bytes.len() < 4 + 2 + 1 + 4 + 8 + 8 {
        return Err("file too short".into());
    }
    let (payload, tail) = bytes.split_at(bytes.len() - 8);
    if &payload[..4] != MAGIC {
        return Err("not a checkpoint (bad magic)".into());
    }
    let stored = u64::from_le_bytes(tail.try_into().unwrap());
    if digest64(&Sha256::digest(payload)) != stored {
        return Err("checksum mismatch".into());
    }
    let mut c = Cursor {
        bytes: payload,
        at: 4,
    };
    let version = u16::from_le_bytes(c.take(2)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(format!("unsupported format version {version}"));
    }
    let tag = c.take(1)?[0];
    let n = u32::from_le_bytes(c.take(4)?.try_into().unwrap()) as usize;
    let text = std::str::from_utf8(c.take(n)?).map_err(|e| format!("config text: {e}"))?;
    let cfg = parse_config(text).map_err(|e| format!("config text: {e}"))?;
    if tag != variant_tag(cfg.variant) {
        return Err(format!("variant tag {tag} disagrees with config ({})", cfg.variant));
    }
    let step = c.u64()?;
    Ok((cfg, tag, step, c))
}

/// Config stored in a checkpoint, without decoding the arrays.
pub fn peek_config(bytes: &[u8], path: &Path) -> Result<WorldConfig> {
    open(bytes).map(|o| o.0).map_err(|reason| SimError::Checkpoint {
        path: path.into(),
        reason,
    })
}

pub fn decode_state<S: Scalar>(bytes: &[u8], path: &Path) -> Result<State<S>> {
    let fail = |reason: String| SimError::Checkpoint {
        path: path.into(),
        reason,
    };
    let (cfg, _, step, mut c) = open(bytes).map_err(fail)?;
    let mut designated = [0u64; 3];
    let state = match cfg.variant {
        Variant::Grid | Variant::PureEnergy => {
            let mut g = World::<S>::blank(cfg)?;
            g.step = step;
            (|| {
                c.floats(&mut g.genome, "genome")?;
                c.floats(&mut g.h, "activations")?;
                c.u64s(&mut g.age, "age")?;
                c.flags(&mut g.alive, "alive")?;
                c.floats(&mut g.energy, "energy")?;
                c.floats(&mut g.chem, "chemicals")?;
                c.floats(&mut g.enz, "enzymes")?;
                for layer in g.signals.layers.iter_mut() {
                    c.floats(layer, "signals")?;
                }
                c.u64s(&mut designated, "designated")
            })()
            .map_err(fail)?;
            State::Grid(g)
        }
        Variant::Particles => {
            let mut p = ParticleWorld::<S>::new(cfg)?;
            p.step = step;
            (|| {
                c.floats(&mut p.xs, "x")?;
                c.floats(&mut p.ys, "y")?;
                c.floats(&mut p.energy, "energy")?;
                c.floats(&mut p.genome, "genome")?;
                c.floats(&mut p.h, "activations")?;
                c.floats(&mut p.background, "background")?;
                c.u64s(&mut designated, "designated")
            })()
            .map_err(fail)?;
            State::Particles(p)
        }
    };
    if c.at != c.bytes.len() {
        return Err(fail(format!("{} trailing bytes", c.bytes.len() - c.at)));
    }
    let expected = state.designated().map(|i| i as u64);
    if designated != expected {
        return Err(fail("designated coordinates disagree with the seed".into()));
    }
    Ok(state)
}

pub fn load_checkpoint<S: Scalar>(path: &Path) -> Result<State<S>> {
    decode_state(&read_checkpoint_bytes(path)?, path)
}
