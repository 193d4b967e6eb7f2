//! Named weight tensors and their binary container.
//!
//! The MTDM container is little-endian throughout: magic `MTDM`, u32
//! version (currently 1), u32 tensor count, then per tensor a u16 name
//! length, the UTF-8 name, a u8 dtype (0 = f32, 1 = f16 storage), a u8
//! rank, rank u32 dims, and the raw payload. A u32 CRC32 (IEEE) of every
//! preceding byte closes the file. f16 payloads are storage-only; they are
//! widened to f32 on load.

use std::collections::BTreeMap;
use std::io::{Read, Write as _};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::ModelSpec;
use super::MicronetError;

const MAGIC: &[u8; 4] = b"MTDM";
const VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;
const DTYPE_F16: u8 = 1;

/// One stored tensor: shape plus row-major f32 data.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

/// Named tensor collection. Iteration is name-ordered, so serialized bytes
/// are deterministic for equal contents.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightStore {
    tensors: BTreeMap<String, WeightTensor>,
}

impl WeightStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        name: impl Into<String>,
        dims: Vec<usize>,
        data: Vec<f32>,
    ) -> Result<(), MicronetError> {
        let name = name.into();
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(MicronetError::ShapeMismatch {
                context: name,
                detail: format!("data length {} != product of dims {:?}", data.len(), dims),
            });
        }
        self.tensors.insert(name, WeightTensor { dims, data });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&WeightTensor> {
        self.tensors.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut WeightTensor> {
        self.tensors.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<WeightTensor> {
        self.tensors.remove(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &WeightTensor)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Every tensor the architecture needs, zero-filled.
    pub fn zeros(spec: &ModelSpec) -> Self {
        let mut store = Self::new();
        for info in spec.tensor_inventory() {
            store.insert(info.name.clone(), info.dims.clone(), vec![0.0; info.len()]).unwrap();
        }
        store
    }

    /// Every tensor the architecture needs, filled deterministically from
    /// `seed`: weights uniform in `[-a, a]` with `a = 1/sqrt(fan_in)`,
    /// biases uniform in `[-0.1, 0.1]`.
    pub fn seeded(spec: &ModelSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = Self::new();
        for info in spec.tensor_inventory() {
            let n = info.len();
            let data: Vec<f32> = if info.name.ends_with(".bias") {
                (0..n).map(|_| rng.gen_range(-0.1..0.1)).collect()
            } else {
                let fan_in = (n / info.dims[0]).max(1);
                let a = 1.0 / (fan_in as f32).sqrt();
                (0..n).map(|_| rng.gen_range(-a..a)).collect()
            };
            store.insert(info.name.clone(), info.dims.clone(), data).unwrap();
        }
        store
    }

    /// Serialize; `f16_storage` halves the payload at reduced precision.
    pub fn to_bytes(&self, f16_storage: bool) -> Result<Vec<u8>, MicronetError> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            if name.len() > u16::MAX as usize {
                return Err(MicronetError::InvalidTensor(format!("name too long: {name}")));
            }
            if t.dims.len() > u8::MAX as usize {
                return Err(MicronetError::InvalidTensor(format!("rank too high: {name}")));
            }
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(if f16_storage { DTYPE_F16 } else { DTYPE_F32 });
            out.push(t.dims.len() as u8);
            for &d in &t.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &t.data {
                if f16_storage {
                    out.extend_from_slice(&f32_to_f16_bits(v).to_le_bytes());
                } else {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let crc = crc32(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, MicronetError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(MicronetError::BadMagic);
        }
        let mut cur = Cursor { bytes, pos: MAGIC.len() };
        let version = cur.u32()?;
        if version != VERSION {
            return Err(MicronetError::VersionUnsupported(version));
        }
        let count = cur.u32()?;
        let mut store = Self::new();
        for _ in 0..count {
            let name_len = cur.u16()? as usize;
            let name = String::from_utf8(cur.take(name_len)?.to_vec())
                .map_err(|_| MicronetError::InvalidTensor("name is not UTF-8".into()))?;
            let dtype = cur.u8()?;
            let rank = cur.u8()? as usize;
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(cur.u32()? as usize);
            }
            let n: usize = dims.iter().product();
            let data = match dtype {
                DTYPE_F32 => {
                    let raw = cur.take(n * 4)?;
                    raw.chunks_exact(4)
                        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                        .collect()
                }
                DTYPE_F16 => {
                    let raw = cur.take(n * 2)?;
                    raw.chunks_exact(2)
                        .map(|b| f16_bits_to_f32(u16::from_le_bytes([b[0], b[1]])))
                        .collect()
                }
                other => {
                    return Err(MicronetError::InvalidTensor(format!(
                        "tensor {name} has unknown dtype {other}"
                    )))
                }
            };
            store.insert(name, dims, data)?;
        }
        let body_end = cur.pos;
        let stored = u32::from_le_bytes(
            cur.take(4)?
                .try_into()
                .expect("take(4) yields 4 bytes"),
        );
        if cur.pos != bytes.len() {
            return Err(MicronetError::InvalidTensor("trailing bytes after checksum".into()));
        }
        if crc32(&bytes[..body_end]) != stored {
            return Err(MicronetError::ChecksumMismatch);
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>, f16_storage: bool) -> Result<(), MicronetError> {
        let bytes = self.to_bytes(f16_storage)?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, MicronetError> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], MicronetError> {
        if self.pos + n > self.bytes.len() {
            return Err(MicronetError::TruncatedFile);
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, MicronetError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, MicronetError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, MicronetError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// CRC32 (IEEE 802.3, reflected polynomial 0xEDB88320).
pub fn crc32(bytes: &[u8]) -> u32 {
    let mut crc = !0u32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            crc = (crc >> 1) ^ (0xEDB8_8320 & (!(crc & 1)).wrapping_add(1));
        }
    }
    !crc
}

/// Narrow to IEEE half precision with round-to-nearest-even.
pub fn f32_to_f16_bits(value: f32) -> u16 {
    let bits = value.to_bits();
    let sign = ((bits >> 16) & 0x8000) as u16;
    let exp = ((bits >> 23) & 0xff) as i32;
    let mant = bits & 0x007f_ffff;

    if exp == 0xff {
        if mant == 0 {
            return sign | 0x7c00; // infinity
        }
        // NaN: keep the top payload bits, force the quiet bit.
        return sign | 0x7c00 | 0x0200 | ((mant >> 13) as u16 & 0x03ff);
    }
    let unbiased = exp - 127;
    if unbiased > 15 {
        return sign | 0x7c00; // overflow
    }
    if unbiased >= -14 {
        // Normal half. A mantissa carry bumps the exponent field, which is
        // exactly the right encoding (including carry into infinity).
        let half = (((unbiased + 15) as u32) << 10) + round_shift(mant, 13);
        return sign | half as u16;
    }
    if unbiased >= -25 {
        // Subnormal half: value quantized to multiples of 2^-24.
        let full = 0x0080_0000 | mant;
        return sign | round_shift(full, (-unbiased - 1) as u32) as u16;
    }
    sign // underflow to signed zero
}

/// Widen IEEE half bits to f32 (exact for every finite half).
pub fn f16_bits_to_f32(h: u16) -> f32 {
    let sign = ((h & 0x8000) as u32) << 16;
    let exp = ((h >> 10) & 0x1f) as u32;
    let mant = (h & 0x03ff) as u32;
    match exp {
        0 => {
            if mant == 0 {
                f32::from_bits(sign)
            } else {
                let v = mant as f32 * (-24f32).exp2();
                if sign != 0 {
                    -v
                } else {
                    v
                }
            }
        }
        31 => f32::from_bits(sign | 0x7f80_0000 | (mant << 13)),
        _ => f32::from_bits(sign | ((exp + 112) << 23) | (mant << 13)),
    }
}

/// Shift right with round-to-nearest, ties to even.
fn round_shift(v: u32, shift: u32) -> u32 {
    let half = 1u32 << (shift - 1);
    let floor = v >> shift;
    let rem = v & ((1u32 << shift) - 1);
    if rem > half || (rem == half && floor & 1 == 1) {
        floor + 1
    } else {
        floor
    }
}
