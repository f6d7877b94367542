//! Dense row-major tensors and the `TTEN` binary file format.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Highest rank a [`DenseTensor`] may have (batch × camera × time × w × h).
pub const MAX_RANK: usize = 5;

const TTEN_MAGIC: &[u8; 4] = b"TTEN";
const TTEN_VERSION: u8 = 0x01;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DenseTensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> DenseTensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if shape.len() > MAX_RANK {
            return Err(Error::InvalidInput(format!(
                "rank {} exceeds the maximum of {MAX_RANK}",
                shape.len()
            )));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidInput(format!(
                "shape {shape:?} holds {expected} values but {} were given",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        assert!(shape.len() <= MAX_RANK, "rank {} > {MAX_RANK}", shape.len());
        Self {
            shape: shape.to_vec(),
            data: vec![value; shape.iter().product()],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        assert!(shape.len() <= MAX_RANK, "rank {} > {MAX_RANK}", shape.len());
        let n: usize = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Row-major strides in elements.
    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                debug_assert!(i < d);
                acc * d + i
            })
    }

    pub fn at(&self, index: &[usize]) -> T {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: T) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data)
    }

    pub fn expect_shape(&self, context: &str, expected: &[usize]) -> Result<()> {
        if self.shape != expected {
            return Err(Error::shape(context, expected, &self.shape));
        }
        Ok(())
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn dot(&self, other: &Self) -> T {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, &v| m.max(v.abs()))
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// Generic axis permutation: output axis `i` is input axis `axes[i]`.
    pub fn permute(&self, axes: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if axes.len() != rank || axes.iter().any(|&a| a >= rank || std::mem::replace(&mut seen[a], true)) {
            return Err(Error::InvalidInput(format!(
                "{axes:?} is not a permutation of {rank} axes"
            )));
        }
        let in_strides = self.strides();
        let out_shape: Vec<usize> = axes.iter().map(|&a| self.shape[a]).collect();
        let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; rank];
        for _ in 0..self.len() {
            let src: usize = idx.iter().zip(&src_strides).map(|(i, s)| i * s).sum();
            out.push(self.data[src]);
            for ax in (0..rank).rev() {
                idx[ax] += 1;
                if idx[ax] < out_shape[ax] {
                    break;
                }
                idx[ax] = 0;
            }
        }
        Self::new(&out_shape, out)
    }

    /// Sub-tensor at position `i` of the leading axis.
    pub fn index_outer(&self, i: usize) -> Self {
        let inner: usize = self.shape[1..].iter().product();
        Self {
            shape: self.shape[1..].to_vec(),
            data: self.data[i * inner..(i + 1) * inner].to_vec(),
        }
    }

    /// Stacks equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Self]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::InvalidInput("cannot stack zero tensors".into()))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            t.expect_shape("stack", &first.shape)?;
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Self::new(&shape, data)
    }

    pub fn cast<U: Scalar>(&self) -> DenseTensor<U> {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }

    /// Serializes as `TTEN`: magic, version, rank, `u32` dims, then `f32`
    /// values, all little-endian.
    pub fn write_tten<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(TTEN_MAGIC)?;
        w.write_all(&[TTEN_VERSION, self.rank() as u8])?;
        write_dims(&mut w, &self.shape)?;
        write_f32_values(&mut w, &self.data)?;
        Ok(())
    }

    pub fn read_tten<R: Read>(mut r: R) -> Result<Self> {
        let mut head = [0u8; 6];
        r.read_exact(&mut head)
            .map_err(|e| Error::Format(format!("TTEN header: {e}")))?;
        if &head[..4] != TTEN_MAGIC {
            return Err(Error::Format("missing TTEN magic".into()));
        }
        if head[4] != TTEN_VERSION {
            return Err(Error::Format(format!("unsupported TTEN version {}", head[4])));
        }
        let shape = read_dims(&mut r, head[5] as usize)?;
        let data = read_f32_values(&mut r, shape.iter().product())?;
        Self::new(&shape, data)
    }

    pub fn save_tten(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(file);
        self.write_tten(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load_tten(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_tten(std::io::BufReader::new(file))
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

pub(crate) fn write_dims<W: Write>(w: &mut W, dims: &[usize]) -> Result<()> {
    for &d in dims {
        let d = u32::try_from(d).map_err(|_| Error::Format(format!("dimension {d} exceeds u32")))?;
        w.write_all(&d.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_dims<R: Read>(r: &mut R, rank: usize) -> Result<Vec<usize>> {
    if rank > MAX_RANK {
        return Err(Error::Format(format!("rank {rank} exceeds {MAX_RANK}")));
    }
    (0..rank)
        .map(|_| {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)
                .map_err(|e| Error::Format(format!("truncated dims: {e}")))?;
            Ok(u32::from_le_bytes(b) as usize)
        })
        .collect()
}

pub(crate) fn write_f32_values<W: Write, T: Scalar>(w: &mut W, values: &[T]) -> Result<()> {
    for v in values {
        w.write_all(&(v.as_f64() as f32).to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f32_values<R: Read, T: Scalar>(r: &mut R, n: usize) -> Result<Vec<T>> {
    let mut bytes = vec![0u8; n * 4];
    r.read_exact(&mut bytes)
        .map_err(|e| Error::Format(format!("truncated values ({n} expected): {e}")))?;
    Ok(bytes
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_count_must_match_shape() {
        assert!(DenseTensor::<f64>::new(&[2, 3], vec![0.0; 5]).is_err());
        assert!(DenseTensor::<f64>::new(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(DenseTensor::<f64>::new(&[1; 6], vec![0.0]).is_err());
    }

    #[test]
    fn tten_layout_is_bit_exact() {
        let t = DenseTensor::<f64>::new(&[1, 2], vec![1.0, -0.5]).unwrap();
        let mut buf = Vec::new();
        t.write_tten(&mut buf).unwrap();
        let mut expected = b"TTEN".to_vec();
        expected.extend_from_slice(&[1, 2]);
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(&1.0f32.to_le_bytes());
        expected.extend_from_slice(&(-0.5f32).to_le_bytes());
        assert_eq!(buf, expected);
        let back = DenseTensor::<f64>::read_tten(&buf[..]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn truncated_tten_is_rejected() {
        let t = DenseTensor::<f32>::zeros(&[3, 3]);
        let mut buf = Vec::new();
        t.write_tten(&mut buf).unwrap();
        buf.truncate(buf.len() - 1);
        assert!(matches!(DenseTensor::<f32>::read_tten(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn permute_moves_axes() {
        let t = DenseTensor::<f64>::from_fn(&[2, 3, 4], |i| i as f64);
        let p = t.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        for a in 0..2 {
            for b in 0..3 {
                for c in 0..4 {
                    assert_eq!(p.at(&[c, a, b]), t.at(&[a, b, c]));
                }
            }
        }
        assert!(t.permute(&[0, 0, 1]).is_err());
    }
}
