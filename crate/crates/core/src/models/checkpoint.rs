//! Binary model checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic    8 bytes  "FBUFCKPT"
//! version  u32      1
//! kind     u8       0 = logistic, 1 = mlp
//! features u64
//! hidden   u64      0 for logistic
//! classes  u64
//! count    u64      number of parameters
//! values   count x f64 (IEEE-754 bits, little-endian)
//! ```

use std::io::{Read, Write};

use super::{Architecture, ModelParams};
use crate::error::{Error, Result};
use crate::numkit::DenseVec;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FBUFCKPT";
const VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::io("<checkpoint>", e)
}

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> Result<()> {
    let (kind, features, hidden, classes) = match params.arch {
        Architecture::Logistic { features, classes } => (0u8, features, 0, classes),
        Architecture::Mlp {
            features,
            hidden,
            classes,
        } => (1u8, features, hidden, classes),
    };
    let mut buf = Vec::with_capacity(45 + 8 * params.flat.dim());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(kind);
    for v in [features, hidden, classes, params.flat.dim()] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for v in params.flat.as_slice() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf).map_err(io_err)
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<ModelParams> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes).map_err(io_err)?;
    let bad = |msg: &str| Error::Structural(format!("checkpoint: {msg}"));
    if bytes.len() < 45 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing magic header"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let kind = bytes[12];
    let word = |i: usize| {
        let at = 13 + 8 * i;
        u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap()) as usize
    };
    let (features, hidden, classes, count) = (word(0), word(1), word(2), word(3));
    let arch = match kind {
        0 => Architecture::Logistic { features, classes },
        1 => Architecture::Mlp {
            features,
            hidden,
            classes,
        },
        k => return Err(bad(&format!("unknown model kind {k}"))),
    };
    let body = &bytes[45..];
    if count != arch.param_count() || body.len() != 8 * count {
        return Err(bad("parameter count does not match layout"));
    }
    let flat = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    ModelParams::new(arch, DenseVec::from_vec(flat))
}
