//! `PIDT` tensor container.
//!
//! Little-endian layout, no padding:
//!
//! | field   | size          |
//! |---------|---------------|
//! | magic   | 4 bytes `PIDT`|
//! | version | u32 = 1       |
//! | dtype   | u8: 0=f32, 1=f64, 2=c64, 3=c128 |
//! | rank    | u8            |
//! | dims    | rank × u64    |
//! | payload | row-major elements; complex as (re, im) pairs |
//!
//! Several records may be concatenated in one file; [`decode`] reports where
//! each record ends.

use std::fs;
use std::path::Path;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::image::{ComplexImage, MultiCoil};
use crate::real::Real;
use crate::tensor::RealTensor;

pub const MAGIC: [u8; 4] = *b"PIDT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    C64(Vec<Complex<f32>>),
    C128(Vec<Complex<f64>>),
}

impl TensorData {
    pub fn dtype(&self) -> u8 {
        match self {
            TensorData::F32(_) => 0,
            TensorData::F64(_) => 1,
            TensorData::C64(_) => 2,
            TensorData::C128(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
            TensorData::C64(v) => v.len(),
            TensorData::C128(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn element_size(dtype: u8) -> Option<usize> {
    match dtype {
        0 => Some(4),
        1 => Some(8),
        2 => Some(8),
        3 => Some(16),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredTensor {
    pub dims: Vec<usize>,
    pub data: TensorData,
}

impl StoredTensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::invalid("tensor rank exceeds 255"));
        }
        if dims.iter().product::<usize>() != data.len() {
            return Err(Error::invalid(format!(
                "dims {:?} do not match {} elements",
                dims,
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }
}

pub fn encode(t: &StoredTensor) -> Vec<u8> {
    let elem = element_size(t.data.dtype()).unwrap_or(0);
    let mut out = Vec::with_capacity(10 + 8 * t.dims.len() + elem * t.data.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(t.data.dtype());
    out.push(t.dims.len() as u8);
    for &d in &t.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match &t.data {
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::C64(v) => v.iter().for_each(|c| {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }),
        TensorData::C128(v) => v.iter().for_each(|c| {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }),
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                self.pos,
                format!(
                    "truncated {what}: need {n} bytes, {} available",
                    self.bytes.len() - self.pos
                ),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// Decodes one record starting at `start`; returns it and the end offset.
pub fn decode(bytes: &[u8], start: usize) -> Result<(StoredTensor, usize)> {
    if start > bytes.len() {
        return Err(Error::format(start, "record offset past end of data"));
    }
    let mut cur = Cursor { bytes, pos: start };
    let magic = cur.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::format(start, format!("bad magic {magic:02x?}")));
    }
    let ver_at = cur.pos;
    let version = u32::from_le_bytes(cur.take(4, "version")?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::format(ver_at, format!("unsupported version {version}")));
    }
    let dtype_at = cur.pos;
    let dtype = cur.take(1, "dtype")?[0];
    let elem = element_size(dtype)
        .ok_or_else(|| Error::format(dtype_at, format!("unknown dtype code {dtype}")))?;
    let rank = cur.take(1, "rank")?[0] as usize;
    let mut dims = Vec::with_capacity(rank);
    let mut count: usize = 1;
    for _ in 0..rank {
        let at = cur.pos;
        let d = u64::from_le_bytes(cur.take(8, "dims")?.try_into().unwrap());
        let d = usize::try_from(d).map_err(|_| Error::format(at, "dimension overflows usize"))?;
        count = count
            .checked_mul(d)
            .ok_or_else(|| Error::format(at, "element count overflows"))?;
        dims.push(d);
    }
    let nbytes = count
        .checked_mul(elem)
        .ok_or_else(|| Error::format(cur.pos, "payload size overflows"))?;
    let payload = cur.take(nbytes, "payload")?;
    let data = match dtype {
        0 => TensorData::F32(
            payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        ),
        1 => TensorData::F64(
            payload
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        ),
        2 => TensorData::C64(
            payload
                .chunks_exact(8)
                .map(|b| {
                    Complex::new(
                        f32::from_le_bytes(b[..4].try_into().unwrap()),
                        f32::from_le_bytes(b[4..].try_into().unwrap()),
                    )
                })
                .collect(),
        ),
        _ => TensorData::C128(
            payload
                .chunks_exact(16)
                .map(|b| {
                    Complex::new(
                        f64::from_le_bytes(b[..8].try_into().unwrap()),
                        f64::from_le_bytes(b[8..].try_into().unwrap()),
                    )
                })
                .collect(),
        ),
    };
    Ok((StoredTensor { dims, data }, cur.pos))
}

pub fn save(path: impl AsRef<Path>, t: &StoredTensor) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(t)).map_err(|e| Error::io(path, e))
}

/// Loads a file holding exactly one record.
pub fn load(path: impl AsRef<Path>) -> Result<StoredTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (t, end) = decode(&bytes, 0)?;
    if end != bytes.len() {
        return Err(Error::format(end, "trailing bytes after tensor record"));
    }
    Ok(t)
}

impl<T: Real> From<&RealTensor<T>> for StoredTensor {
    fn from(t: &RealTensor<T>) -> Self {
        StoredTensor {
            dims: t.dims().to_vec(),
            data: T::wrap_real(t.data().to_vec()),
        }
    }
}

impl<T: Real> From<&ComplexImage<T>> for StoredTensor {
    fn from(img: &ComplexImage<T>) -> Self {
        StoredTensor {
            dims: vec![img.height(), img.width()],
            data: T::wrap_complex(img.data().to_vec()),
        }
    }
}

impl<T: Real> From<&MultiCoil<T>> for StoredTensor {
    fn from(mc: &MultiCoil<T>) -> Self {
        let (q, h, w) = mc.dims();
        StoredTensor {
            dims: vec![q, h, w],
            data: T::wrap_complex(mc.data().to_vec()),
        }
    }
}

fn dtype_mismatch(found: u8, wanted: u8) -> Error {
    Error::format(8, format!("dtype code {found} where {wanted} was expected"))
}

impl StoredTensor {
    pub fn into_real<T: Real>(self) -> Result<RealTensor<T>> {
        if self.dims.len() != 4 {
            return Err(Error::format(9, format!("rank {} where 4 was expected", self.dims.len())));
        }
        let found = self.data.dtype();
        let data = T::unwrap_real(self.data).ok_or_else(|| dtype_mismatch(found, T::REAL_DTYPE))?;
        RealTensor::new([self.dims[0], self.dims[1], self.dims[2], self.dims[3]], data)
    }

    pub fn into_complex_image<T: Real>(self) -> Result<ComplexImage<T>> {
        if self.dims.len() != 2 {
            return Err(Error::format(9, format!("rank {} where 2 was expected", self.dims.len())));
        }
        let found = self.data.dtype();
        let data =
            T::unwrap_complex(self.data).ok_or_else(|| dtype_mismatch(found, T::COMPLEX_DTYPE))?;
        ComplexImage::new(self.dims[0], self.dims[1], data)
    }

    pub fn into_multi_coil<T: Real>(self) -> Result<MultiCoil<T>> {
        if self.dims.len() != 3 {
            return Err(Error::format(9, format!("rank {} where 3 was expected", self.dims.len())));
        }
        let found = self.data.dtype();
        let data =
            T::unwrap_complex(self.data).ok_or_else(|| dtype_mismatch(found, T::COMPLEX_DTYPE))?;
        MultiCoil::new(self.dims[0], self.dims[1], self.dims[2], data)
    }
}

pub fn save_real<T: Real>(path: impl AsRef<Path>, t: &RealTensor<T>) -> Result<()> {
    save(path, &StoredTensor::from(t))
}

pub fn load_real<T: Real>(path: impl AsRef<Path>) -> Result<RealTensor<T>> {
    load(path)?.into_real()
}

pub fn save_complex<T: Real>(path: impl AsRef<Path>, img: &ComplexImage<T>) -> Result<()> {
    save(path, &StoredTensor::from(img))
}

pub fn load_complex<T: Real>(path: impl AsRef<Path>) -> Result<ComplexImage<T>> {
    load(path)?.into_complex_image()
}

pub fn save_multi_coil<T: Real>(path: impl AsRef<Path>, mc: &MultiCoil<T>) -> Result<()> {
    save(path, &StoredTensor::from(mc))
}

pub fn load_multi_coil<T: Real>(path: impl AsRef<Path>) -> Result<MultiCoil<T>> {
    load(path)?.into_multi_coil()
}
