//! Model checkpoint format.
//!
//! Little-endian: magic `MDSM`, u16 version, u32 heads, u32 receivers,
//! u32 window, u32 d_k, u32 layer count, u32 per layer width, f64 pair lag
//! (seconds), then every parameter as f64 in declaration order.

use std::io::{Read, Write};
use std::path::Path;

use thiserror::Error;

use super::model::{ModelDims, SeparatorModel};

pub const MAGIC: &[u8; 4] = b"MDSM";
pub const VERSION: u16 = 1;
/// Guard against absurd header values before allocating.
const MAX_DIM: u32 = 1 << 20;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: not a model checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u16),
    #[error("checkpoint truncated in {0}")]
    Truncated(&'static str),
    #[error("invalid checkpoint header: {0}")]
    Header(String),
    #[error("trailing bytes after parameters")]
    Trailing,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn to_bytes(model: &SeparatorModel) -> Vec<u8> {
    let d = &model.dims;
    let mut b = Vec::with_capacity(64 + 8 * model.params.len());
    b.extend_from_slice(MAGIC);
    b.extend_from_slice(&VERSION.to_le_bytes());
    for v in [d.heads, d.receivers, d.window, d.d_k, d.hidden.len()] {
        b.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for &h in &d.hidden {
        b.extend_from_slice(&(h as u32).to_le_bytes());
    }
    b.extend_from_slice(&model.lag_s.to_le_bytes());
    for p in &model.params {
        b.extend_from_slice(&p.to_le_bytes());
    }
    b
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        if self.buf.len() - self.pos < n {
            return Err(CheckpointError::Truncated(what));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        let v = u32::from_le_bytes(self.take(4, what)?.try_into().unwrap());
        if v > MAX_DIM {
            return Err(CheckpointError::Header(format!("{what} = {v}")));
        }
        Ok(v)
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn from_bytes(buf: &[u8]) -> Result<SeparatorModel, CheckpointError> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4, "magic").map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u16::from_le_bytes(c.take(2, "header")?.try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let heads = c.u32("header")? as usize;
    let receivers = c.u32("header")? as usize;
    let window = c.u32("header")? as usize;
    let d_k = c.u32("header")? as usize;
    let n_layers = c.u32("header")? as usize;
    let hidden = (0..n_layers).map(|_| c.u32("header").map(|v| v as usize)).collect::<Result<Vec<_>, _>>()?;
    let lag_s = c.f64("header")?;
    let dims = ModelDims { heads, receivers, window, d_k, hidden };
    let shell = SeparatorModel::zeros(dims.clone(), lag_s).map_err(|e| CheckpointError::Header(e.to_string()))?;
    let n = shell.n_params();
    let raw = c.take(8 * n, "parameters")?;
    if c.pos != buf.len() {
        return Err(CheckpointError::Trailing);
    }
    let params = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
    SeparatorModel::from_params(dims, lag_s, params).map_err(|e| CheckpointError::Header(e.to_string()))
}

pub fn save(model: &SeparatorModel, path: &Path) -> Result<(), CheckpointError> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&to_bytes(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<SeparatorModel, CheckpointError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    from_bytes(&buf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> SeparatorModel {
        let dims = ModelDims { heads: 3, receivers: 5, window: 4, d_k: 2, hidden: vec![7, 3] };
        let mut m = SeparatorModel::init(dims, 1.25, 11).unwrap();
        m.params[0] = f64::from_bits(0x3FF0_0000_0000_0001);
        m
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model();
        let b = to_bytes(&m);
        let back = from_bytes(&b).unwrap();
        assert_eq!(back.dims, m.dims);
        assert_eq!(back.lag_s.to_bits(), m.lag_s.to_bits());
        assert!(back.params.iter().zip(&m.params).all(|(a, b)| a.to_bits() == b.to_bits()));
        assert_eq!(to_bytes(&back), b);
    }

    #[test]
    fn corrupt_inputs() {
        let b = to_bytes(&model());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(from_bytes(&bad), Err(CheckpointError::BadMagic)));
        assert!(matches!(from_bytes(b"MD"), Err(CheckpointError::BadMagic)));
        let mut v = b.clone();
        v[4] = 9;
        assert!(matches!(from_bytes(&v), Err(CheckpointError::BadVersion(9))));
        assert!(matches!(from_bytes(&b[..b.len() - 3]), Err(CheckpointError::Truncated("parameters"))));
        assert!(matches!(from_bytes(&b[..10]), Err(CheckpointError::Truncated("header"))));
        let mut t = b.clone();
        t.push(0);
        assert!(matches!(from_bytes(&t), Err(CheckpointError::Trailing)));
    }
}
