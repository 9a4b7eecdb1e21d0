//! Binary checkpoint format.
//!
//! ```text
//! magic      8 bytes  "EVGRCKPT"
//! version    u32
//! config     role u8, window u32, heads u32, hidden u32, embed u32,
//!            lr f64, epochs u64, gamma f64, seed u64
//! tensors    count u32, then per tensor:
//!            name_len u16, name utf-8, rows u32, cols u32, rows*cols f64
//! registry   count u64, then raw ids u64
//! checksum   u64 FNV-1a of every preceding byte
//! ```
//!
//! All integers and floats are little-endian. Floats are written as raw
//! bits, so a round trip is bit-exact.

use crate::attention::{AttentionHeadParams, TransitionParams};
use crate::config::{ModelConfig, Role};
use crate::error::{Error, Result};
use crate::graph::NodeRegistry;
use crate::matrix::DenseMatrix;
use crate::teacher::EgadModel;

pub const MAGIC: &[u8; 8] = b"EVGRCKPT";
pub const FORMAT_VERSION: u32 = 1;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn save(model: &EgadModel) -> Result<Vec<u8>> {
    model.validate()?;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());

    let c = &model.config;
    out.push(match c.role {
        Role::Teacher => 0,
        Role::Student => 1,
    });
    for v in [c.window, c.heads, c.hidden_dim, c.embed_dim] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&c.learning_rate.to_bits().to_le_bytes());
    out.extend_from_slice(&(c.epochs as u64).to_le_bytes());
    out.extend_from_slice(&c.gamma.to_bits().to_le_bytes());
    out.extend_from_slice(&c.seed.to_le_bytes());

    let names = model.param_names();
    let params = model.params();
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, p) in names.iter().zip(params) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(p.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(p.cols() as u32).to_le_bytes());
        for v in p.as_slice() {
            out.extend_from_slice(&v.to_bits().to_le_bytes());
        }
    }

    let ids = model.registry.raw_ids();
    out.extend_from_slice(&(ids.len() as u64).to_le_bytes());
    for id in ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    let sum = fnv1a(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint(format!("truncated payload at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
}

/// Decodes a checkpoint, verifying magic, version and checksum before
/// anything else.
pub fn load(bytes: &[u8]) -> Result<EgadModel> {
    if bytes.len() < MAGIC.len() + 4 + 8 {
        return Err(Error::Checkpoint("truncated payload".into()));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    if fnv1a(body) != stored {
        return Err(Error::Checkpoint("checksum mismatch (corrupted or truncated)".into()));
    }

    let mut r = Reader { buf: body, pos: 12 };
    let role = match r.u8()? {
        0 => Role::Teacher,
        1 => Role::Student,
        other => return Err(Error::Checkpoint(format!("unknown role tag {other}"))),
    };
    let window = r.u32()? as usize;
    let heads = r.u32()? as usize;
    let hidden_dim = r.u32()? as usize;
    let embed_dim = r.u32()? as usize;
    let learning_rate = r.f64()?;
    let epochs = r.u64()? as usize;
    let gamma = r.f64()?;
    let seed = r.u64()?;
    let config =
        ModelConfig { window, heads, hidden_dim, embed_dim, learning_rate, epochs, gamma, seed, role };

    let count = r.u32()? as usize;
    let mut tensors = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?
            .to_string();
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let n = rows
            .checked_mul(cols)
            .filter(|&n| n.saturating_mul(8) <= body.len())
            .ok_or_else(|| Error::Checkpoint(format!("implausible tensor shape {rows}x{cols}")))?;
        let data = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        tensors.push((name, DenseMatrix::from_vec(rows, cols, data)?));
    }

    let n_ids = r.u64()? as usize;
    if n_ids.saturating_mul(8) > body.len() {
        return Err(Error::Checkpoint(format!("implausible registry size {n_ids}")));
    }
    let ids = (0..n_ids).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    if r.pos != body.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", body.len() - r.pos)));
    }

    let expected_names = {
        let mut v = vec!["w1".to_string()];
        v.extend((0..=window).map(|j| format!("w2.{j}")));
        for t in 0..window {
            for j in 0..heads {
                v.push(format!("h.{t}.{j}"));
                v.push(format!("a.{t}.{j}"));
            }
        }
        v
    };
    let names: Vec<&str> = tensors.iter().map(|(n, _)| n.as_str()).collect();
    if names != expected_names.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(Error::Checkpoint("tensor names do not match the stored config".into()));
    }

    let mut it = tensors.into_iter().map(|(_, t)| t);
    let w1 = it.next().expect("checked names");
    let w2 = (0..=window).map(|_| it.next().expect("checked names")).collect();
    let transitions = (0..window)
        .map(|_| TransitionParams {
            heads: (0..heads)
                .map(|_| AttentionHeadParams {
                    h: it.next().expect("checked names"),
                    a: it.next().expect("checked names"),
                })
                .collect(),
        })
        .collect();
    let model = EgadModel { config, w1, w2, transitions, registry: NodeRegistry::from(ids) };
    model.validate()?;
    Ok(model)
}

/// Like [`load`], but rejects a checkpoint whose architecture differs from
/// `expected` with a shape error.
pub fn load_for(bytes: &[u8], expected: &ModelConfig) -> Result<EgadModel> {
    let m = load(bytes)?;
    let c = &m.config;
    let got = (c.window, c.heads, c.hidden_dim, c.embed_dim);
    let want = (expected.window, expected.heads, expected.hidden_dim, expected.embed_dim);
    if got != want {
        return Err(Error::Shape {
            op: "checkpoint_load",
            detail: format!("checkpoint has (l, h, d1, d2) = {got:?}, pipeline expects {want:?}"),
        });
    }
    Ok(m)
}
