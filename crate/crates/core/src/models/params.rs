use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};

/// Flat model parameters tagged with their prototype.
///
/// Layout follows [`super::Prototype::layout`]: layers in forward order,
/// each as a row-major weight block followed by its bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub prototype_id: String,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn new(prototype_id: impl Into<String>, values: Vec<f64>) -> Self {
        Self { prototype_id: prototype_id.into(), values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn l2_distance(&self, other: &ParamVector) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    }

    /// True when both vectors have the same tag and bit-identical values.
    pub fn bitwise_eq(&self, other: &ParamVector) -> bool {
        self.prototype_id == other.prototype_id
            && self.values.len() == other.values.len()
            && self.values.iter().zip(&other.values).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Binary checkpoint: `u32` id length, UTF-8 id, `u64` value count,
    /// then the values as little-endian `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let id = self.prototype_id.as_bytes();
        let id_len = u32::try_from(id.len()).map_err(|_| FedError::Config("prototype id too long".into()))?;
        w.write_all(&id_len.to_le_bytes())?;
        w.write_all(id)?;
        w.write_all(&(self.values.len() as u64).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let id_len = u32::from_le_bytes(b4) as usize;
        let mut id = vec![0u8; id_len];
        r.read_exact(&mut id)?;
        let prototype_id = String::from_utf8(id).map_err(|e| FedError::Parse(format!("checkpoint id: {e}")))?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let n = u64::from_le_bytes(b8) as usize;
        let mut values = Vec::with_capacity(n.min(1 << 24));
        for _ in 0..n {
            r.read_exact(&mut b8)?;
            values.push(f64::from_le_bytes(b8));
        }
        Ok(Self { prototype_id, values })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(12 + self.prototype_id.len() + 8 * self.values.len());
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }
}
