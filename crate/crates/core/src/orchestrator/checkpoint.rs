//! Prior checkpoints.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! magic            8 bytes  "FAERYCK\0"
//! version          u32
//! input_dim        u32
//! hidden_count     u32
//! hidden_dims      u32 x hidden_count
//! output_dim       u32
//! bounds           f64 lo, f64 hi
//! master_seed      u64
//! next_generation  u64      first meta-generation still to run
//! mu               u32
//! param_count      u32
//! members          mu x (f64 x param_count, f0 u64, f1 f64)
//! ```
//!
//! The RNG needs no cursor beyond the seed and the meta-generation index,
//! since every stream is keyed by them.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::genome::{Bounds, Genome, NetworkShape};
use crate::meta::{MetaScore, PriorMember, PriorPopulation};

pub const MAGIC: &[u8; 8] = b"FAERYCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub shape: NetworkShape,
    pub bounds: Bounds,
    pub master_seed: u64,
    pub next_generation: u64,
    pub prior: PriorPopulation<Genome>,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| {
                Error::format("checkpoint", format!("truncated at byte {}", self.pos))
            })?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        Ok(self.u32()? as usize)
    }
}

fn put_len(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

impl Checkpoint {
    pub fn new(
        shape: NetworkShape,
        master_seed: u64,
        next_generation: u64,
        prior: PriorPopulation<Genome>,
    ) -> Result<Self> {
        let bounds = prior
            .members
            .first()
            .map(|m| m.genome.bounds())
            .ok_or(Error::EmptyPopulation)?;
        let expected = shape.parameter_count();
        for m in &prior.members {
            if m.genome.len() != expected {
                return Err(Error::DimensionMismatch {
                    what: "checkpoint genome",
                    expected,
                    actual: m.genome.len(),
                });
            }
        }
        Ok(Checkpoint {
            shape,
            bounds,
            master_seed,
            next_generation,
            prior,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_len(&mut out, self.shape.input_dim);
        put_len(&mut out, self.shape.hidden_dims.len());
        for &h in &self.shape.hidden_dims {
            put_len(&mut out, h);
        }
        put_len(&mut out, self.shape.output_dim);
        out.extend_from_slice(&self.bounds.lo.to_le_bytes());
        out.extend_from_slice(&self.bounds.hi.to_le_bytes());
        out.extend_from_slice(&self.master_seed.to_le_bytes());
        out.extend_from_slice(&self.next_generation.to_le_bytes());
        put_len(&mut out, self.prior.len());
        put_len(&mut out, self.shape.parameter_count());
        for m in &self.prior.members {
            for p in m.genome.params() {
                out.extend_from_slice(&p.to_le_bytes());
            }
            out.extend_from_slice(&m.score.f0.to_le_bytes());
            out.extend_from_slice(&m.score.f1.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        let mut r = Reader { data, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::format("checkpoint", "bad magic"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                "checkpoint",
                format!("unsupported version {version}"),
            ));
        }
        let input_dim = r.len()?;
        let hidden_count = r.len()?;
        let hidden = (0..hidden_count)
            .map(|_| r.len())
            .collect::<Result<Vec<_>>>()?;
        let output_dim = r.len()?;
        let shape = NetworkShape::new(input_dim, hidden, output_dim)?;
        let bounds = Bounds::new(r.f64()?, r.f64()?)?;
        let master_seed = r.u64()?;
        let next_generation = r.u64()?;
        let mu = r.len()?;
        let param_count = r.len()?;
        if param_count != shape.parameter_count() {
            return Err(Error::DimensionMismatch {
                what: "checkpoint parameter count",
                expected: shape.parameter_count(),
                actual: param_count,
            });
        }
        let mut members = Vec::with_capacity(mu.min(1 << 16));
        for _ in 0..mu {
            let params = (0..param_count)
                .map(|_| r.f64())
                .collect::<Result<Vec<_>>>()?;
            let genome = Genome::new(params, bounds)?;
            let score = MetaScore {
                f0: r.u64()?,
                f1: r.f64()?,
            };
            members.push(PriorMember { genome, score });
        }
        if r.pos != data.len() {
            return Err(Error::format("checkpoint", "trailing bytes"));
        }
        Checkpoint::new(
            shape,
            master_seed,
            next_generation,
            PriorPopulation { members },
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&data)
    }

    /// Human-readable export; `f1` of unscored members is `null`.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Member<'a> {
            f0: u64,
            f1: Option<f64>,
            params: &'a [f64],
        }
        #[derive(Serialize)]
        struct Export<'a> {
            format_version: u32,
            input_dim: usize,
            hidden_dims: &'a [usize],
            output_dim: usize,
            bounds: [f64; 2],
            master_seed: u64,
            next_generation: u64,
            members: Vec<Member<'a>>,
        }
        let export = Export {
            format_version: CHECKPOINT_VERSION,
            input_dim: self.shape.input_dim,
            hidden_dims: &self.shape.hidden_dims,
            output_dim: self.shape.output_dim,
            bounds: [self.bounds.lo, self.bounds.hi],
            master_seed: self.master_seed,
            next_generation: self.next_generation,
            members: self
                .prior
                .members
                .iter()
                .map(|m| Member {
                    f0: m.score.f0,
                    f1: m.score.f1.is_finite().then_some(m.score.f1),
                    params: m.genome.params(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&export).expect("checkpoint export serializes")
    }
}

/// Writes through a sibling temporary file so readers never see a partial file.
pub(crate) fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    std::fs::write(&tmp, data).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
