use half::{bf16, f16};
use serde::{Deserialize, Serialize};

/// Storage dtypes understood by the container reader and writer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DType {
    BF16,
    F16,
    F32,
}

impl DType {
    /// Bytes per element.
    pub const fn width(self) -> usize {
        match self {
            DType::BF16 | DType::F16 => 2,
            DType::F32 => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DType::BF16 => "BF16",
            DType::F16 => "F16",
            DType::F32 => "F32",
        }
    }

    pub fn parse(s: &str) -> Option<DType> {
        match s {
            "BF16" => Some(DType::BF16),
            "F16" => Some(DType::F16),
            "F32" => Some(DType::F32),
            _ => None,
        }
    }

    /// Widens little-endian payload bytes to `f32`. Widening from the half
    /// formats is exact.
    pub fn decode(self, bytes: &[u8]) -> Vec<f32> {
        match self {
            DType::F32 => bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect(),
            DType::BF16 => bytes
                .chunks_exact(2)
                .map(|b| bf16::from_bits(u16::from_le_bytes([b[0], b[1]])).to_f32())
                .collect(),
            DType::F16 => bytes
                .chunks_exact(2)
                .map(|b| f16::from_bits(u16::from_le_bytes([b[0], b[1]])).to_f32())
                .collect(),
        }
    }

    /// Narrows `value` onto this dtype's grid (round-to-nearest-even) and
    /// returns the widened result.
    pub fn round_trip(self, value: f32) -> f32 {
        match self {
            DType::F32 => value,
            DType::BF16 => bf16::from_f32(value).to_f32(),
            DType::F16 => f16::from_f32(value).to_f32(),
        }
    }

    /// Appends the encoding of `values` to `out`. Returns the index of the
    /// first finite value that overflowed to infinity, if any.
    pub(crate) fn encode_into(self, values: &[f32], out: &mut Vec<u8>) -> Result<(), usize> {
        out.reserve(values.len() * self.width());
        for (i, &v) in values.iter().enumerate() {
            match self {
                DType::F32 => out.extend_from_slice(&v.to_le_bytes()),
                DType::BF16 => {
                    let h = bf16::from_f32(v);
                    if h.is_infinite() && v.is_finite() {
                        return Err(i);
                    }
                    out.extend_from_slice(&h.to_bits().to_le_bytes());
                }
                DType::F16 => {
                    let h = f16::from_f32(v);
                    if h.is_infinite() && v.is_finite() {
                        return Err(i);
                    }
                    out.extend_from_slice(&h.to_bits().to_le_bytes());
                }
            }
        }
        Ok(())
    }
}

impl std::fmt::Display for DType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DType::parse(&s.to_ascii_uppercase()).ok_or_else(|| format!("unknown dtype {s}"))
    }
}
