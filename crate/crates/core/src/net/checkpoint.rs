//! Binary model checkpoints.
//!
//! Little-endian layout:
//!
//! ```text
//! magic "EDLCKPT\0" | u32 version | u64 seed | f64 evidence weight
//! u32 D | u32 layer count | u32 width... | u32 K | u8 has logit head
//! K x (u32 len, utf-8 class name) | K x (f64 a+, f64 a-)
//! parameter blocks in Model::param_blocks order, each u64 len + f64 values
//! ```

use std::fs;
use std::path::Path;

use super::{Dense, EgmParams, Mlp, Model, ModelShape};
use crate::ebra::BaseRateSet;
use crate::error::{Error, Result};
use crate::opinion::{BaseRatePair, EvidenceWeight};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"EDLCKPT\0";

/// A trained model together with what inference needs to interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub class_names: Vec<String>,
    pub base_rates: BaseRateSet,
    pub weight: EvidenceWeight,
    pub seed: u64,
}

impl Checkpoint {
    pub fn new(
        model: Model,
        class_names: Vec<String>,
        base_rates: BaseRateSet,
        weight: EvidenceWeight,
        seed: u64,
    ) -> Result<Self> {
        let k = model.classes();
        if class_names.len() != k || base_rates.len() != k {
            return Err(Error::invalid(format!(
                "checkpoint for {k} heads given {} class names and {} base rates",
                class_names.len(),
                base_rates.len()
            )));
        }
        Ok(Self {
            model,
            class_names,
            base_rates,
            weight,
            seed,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let shape = self.model.shape();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.weight.get().to_le_bytes());
        let put_u32 = |out: &mut Vec<u8>, v: usize| out.extend_from_slice(&(v as u32).to_le_bytes());
        put_u32(&mut out, shape.input_dim);
        put_u32(&mut out, shape.widths.len());
        for &w in &shape.widths {
            put_u32(&mut out, w);
        }
        put_u32(&mut out, shape.classes);
        out.push(self.model.classifier.is_some() as u8);
        for name in &self.class_names {
            put_u32(&mut out, name.len());
            out.extend_from_slice(name.as_bytes());
        }
        for p in self.base_rates.pairs() {
            out.extend_from_slice(&p.pos().to_le_bytes());
            out.extend_from_slice(&p.neg().to_le_bytes());
        }
        for block in self.model.param_blocks() {
            out.extend_from_slice(&(block.len() as u64).to_le_bytes());
            for v in block {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(MAGIC.len())? != MAGIC {
            return Err(Error::invalid("not a checkpoint file (bad magic)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                found: version.to_string(),
                expected: CHECKPOINT_VERSION.to_string(),
            });
        }
        let seed = r.u64()?;
        let weight = EvidenceWeight::new(r.f64()?)?;
        let input_dim = r.u32()? as usize;
        let layers = r.u32()? as usize;
        let widths = (0..layers).map(|_| r.u32().map(|w| w as usize)).collect::<Result<Vec<_>>>()?;
        let classes = r.u32()? as usize;
        let has_classifier = match r.take(1)?[0] {
            0 => false,
            1 => true,
            other => return Err(Error::invalid(format!("checkpoint: bad logit-head flag {other}"))),
        };
        let shape = ModelShape::new(input_dim, widths, classes)?;

        let class_names = (0..classes)
            .map(|_| {
                let len = r.u32()? as usize;
                String::from_utf8(r.take(len)?.to_vec())
                    .map_err(|_| Error::invalid("checkpoint: class name is not UTF-8"))
            })
            .collect::<Result<Vec<_>>>()?;
        let pairs = (0..classes)
            .map(|_| BaseRatePair::new(r.f64()?, r.f64()?))
            .collect::<Result<Vec<_>>>()?;
        let base_rates = BaseRateSet::new(pairs)?;

        let mut block = |expected: usize| -> Result<Vec<f64>> {
            let len = r.u64()? as usize;
            if len != expected {
                return Err(Error::invalid(format!(
                    "checkpoint: parameter block holds {len} values, shape needs {expected}"
                )));
            }
            (0..len).map(|_| r.f64()).collect()
        };
        let mut dense = |in_dim: usize, out_dim: usize| -> Result<Dense> {
            Ok(Dense {
                in_dim,
                out_dim,
                weights: block(in_dim * out_dim)?,
                bias: block(out_dim)?,
            })
        };
        let mut fan_in = input_dim;
        let mut backbone = Vec::with_capacity(shape.widths.len());
        for &w in &shape.widths {
            backbone.push(dense(fan_in, w)?);
            fan_in = w;
        }
        let c = shape.feature_dim();
        let egm_layer = dense(c, 2 * classes)?;
        let classifier = if has_classifier { Some(dense(c, classes)?) } else { None };
        if r.pos != bytes.len() {
            return Err(Error::invalid(format!(
                "checkpoint: {} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        // Only the block sizes matter here; the head keeps its own C x 2K
        // layout.
        let egm = EgmParams {
            channels: c,
            classes,
            weights: egm_layer.weights,
            bias: egm_layer.bias,
        };
        let model = Model::new(Mlp::new(backbone)?, egm, classifier)?;
        Self::new(model, class_names, base_rates, weight, seed)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| match e {
            Error::InvalidInput(m) => Error::invalid(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::invalid(format!("checkpoint truncated at byte {}", self.bytes.len()))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}
