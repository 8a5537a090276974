//! Self-describing binary weight container.
//!
//! Layout (little endian): magic `TASANN\0\x01`, format version `u32`,
//! kind `u8` (1 = MLP, 2 = Gaussian policy), activation id `u8`, seed `u64`,
//! layer count `u32`, layer widths `u32 * (count + 1)`, parameter count
//! `u64`, parameters `f64 * n`. Gaussian policies append `log_std`
//! (`f64 * out`), a bounds flag `u8` and, when set, low/high `f64 * out`.

use std::io::{Read, Write};
use std::path::Path;

use super::mlp::{Activation, Mlp};
use super::policy::{ActionBounds, GaussianPolicy};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"TASANN\0\x01";
pub const FORMAT_VERSION: u32 = 1;
const KIND_MLP: u8 = 1;
const KIND_POLICY: u8 = 2;

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Artifact("weight file truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::Artifact("bad length".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

fn put_f64s(out: &mut Vec<u8>, v: &[f64]) {
    for x in v {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn encode_mlp(out: &mut Vec<u8>, kind: u8, mlp: &Mlp) {
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(kind);
    out.push(mlp.activation().id());
    out.extend_from_slice(&mlp.seed().to_le_bytes());
    let dims = mlp.dims();
    out.extend_from_slice(&((dims.len() - 1) as u32).to_le_bytes());
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(mlp.num_params() as u64).to_le_bytes());
    put_f64s(out, mlp.params());
}

fn decode_mlp(r: &mut Reader<'_>, expect_kind: u8) -> Result<Mlp> {
    if r.take(8)? != MAGIC {
        return Err(Error::Artifact("not a weight file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Artifact(format!("unsupported weight format version {version}")));
    }
    let kind = r.u8()?;
    if kind != expect_kind {
        return Err(Error::Artifact(format!("weight file kind {kind}, expected {expect_kind}")));
    }
    let act = r.u8()?;
    let activation =
        Activation::from_id(act).ok_or_else(|| Error::Artifact(format!("unknown activation id {act}")))?;
    let seed = r.u64()?;
    let n_layers = r.u32()? as usize;
    let dims = (0..=n_layers).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    let n = r.u64()? as usize;
    let params = r.f64s(n)?;
    Mlp::from_parts(dims, activation, seed, params).map_err(|e| Error::Artifact(e.to_string()))
}

pub fn encode_mlp_bytes(mlp: &Mlp) -> Vec<u8> {
    let mut out = Vec::new();
    encode_mlp(&mut out, KIND_MLP, mlp);
    out
}

pub fn decode_mlp_bytes(bytes: &[u8]) -> Result<Mlp> {
    let mut r = Reader { buf: bytes, pos: 0 };
    decode_mlp(&mut r, KIND_MLP)
}

pub fn encode_policy(policy: &GaussianPolicy) -> Vec<u8> {
    let mut out = Vec::new();
    encode_mlp(&mut out, KIND_POLICY, &policy.mlp);
    put_f64s(&mut out, policy.log_std());
    match &policy.action_bounds {
        None => out.push(0),
        Some(b) => {
            out.push(1);
            put_f64s(&mut out, &b.low);
            put_f64s(&mut out, &b.high);
        }
    }
    out
}

pub fn decode_policy(bytes: &[u8]) -> Result<GaussianPolicy> {
    let mut r = Reader { buf: bytes, pos: 0 };
    let mlp = decode_mlp(&mut r, KIND_POLICY)?;
    let out = mlp.output_dim();
    let log_std = r.f64s(out)?;
    let bounds = match r.u8()? {
        0 => None,
        1 => Some(ActionBounds { low: r.f64s(out)?, high: r.f64s(out)? }),
        f => return Err(Error::Artifact(format!("bad bounds flag {f}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Artifact("trailing bytes in weight file".into()));
    }
    GaussianPolicy::from_parts(mlp, log_std, bounds).map_err(|e| Error::Artifact(e.to_string()))
}

pub fn save_policy(path: &Path, policy: &GaussianPolicy) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode_policy(policy))?;
    Ok(())
}

pub fn load_policy(path: &Path) -> Result<GaussianPolicy> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_policy(&bytes)
}
