//! Parameter checkpoint.
//!
//! ```text
//! "SYPO" | version u16 | window u32 | embed u32 | hidden u32 | vocab u32 | out u32 | seed u64
//! embedding | hidden weights | hidden bias | head weights | head bias   (f32 each)
//! ```
//!
//! Little-endian. Parameters are kept as f64 in memory and rounded to f32 on
//! save, so a loaded model equals the saved one up to that rounding.

use std::fs;
use std::path::Path;

use super::mlp::{Hyper, Mlp};
use super::PolicyError;
use crate::binio::{Reader, Writer};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SYPO";
pub const CHECKPOINT_VERSION: u16 = 1;

impl Mlp {
    pub fn to_bytes(&self) -> Vec<u8> {
        let h = self.hyper();
        let mut w = Writer::new();
        w.bytes(CHECKPOINT_MAGIC);
        w.u16(CHECKPOINT_VERSION);
        for d in [h.window, h.embed, h.hidden, h.vocab, h.out] {
            w.u32(d as u32);
        }
        w.u64(self.seed());
        w.f32s(self.params().iter().map(|&x| x as f32));
        w.finish()
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self, PolicyError> {
        let corrupt = PolicyError::CorruptCheckpoint;
        let mut r = Reader::new(data);
        if r.take(4).map_err(corrupt)? != CHECKPOINT_MAGIC {
            return Err(PolicyError::CorruptCheckpoint("bad magic".into()));
        }
        let version = r.u16().map_err(corrupt)?;
        if version != CHECKPOINT_VERSION {
            return Err(PolicyError::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u32().map_err(corrupt)? as usize;
        }
        let [window, embed, hidden, vocab, out] = dims;
        let hyper = Hyper {
            window,
            embed,
            hidden,
            vocab,
            out,
        };
        let seed = r.u64().map_err(corrupt)?;
        let invalid = |e: PolicyError| PolicyError::CorruptCheckpoint(e.to_string());
        // validates the shape before anything is sized from it
        hyper.validate().map_err(invalid)?;
        let params: Vec<f64> = r
            .f32s(hyper.param_count())
            .map_err(corrupt)?
            .into_iter()
            .map(f64::from)
            .collect();
        r.finish().map_err(corrupt)?;
        if params.iter().any(|x| !x.is_finite()) {
            return Err(PolicyError::CorruptCheckpoint(
                "non-finite parameter".into(),
            ));
        }
        let pad_nonzero = params[..embed].iter().any(|&x| x != 0.0);
        if pad_nonzero {
            return Err(PolicyError::CorruptCheckpoint(
                "PAD embedding is not zero".into(),
            ));
        }
        Mlp::from_raw(hyper, seed, params).map_err(invalid)
    }

    pub fn save(&self, path: &Path) -> Result<(), PolicyError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        Self::from_bytes(&fs::read(path)?)
    }
}
