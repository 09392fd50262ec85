//! Dense row-major f64 tensor used throughout the differentiable graph.

use crate::error::{Error, Result};
use rand::Rng;
use rayon::prelude::*;

/// Row-major dense tensor. Scalars use an empty shape and a single element.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(Error::invalid_argument(format!(
                "tensor data length {} does not match shape {:?} (expects {})",
                data.len(),
                shape,
                expected
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![],
            data: vec![v],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn ones(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![1.0; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> f64) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(|i| f(i)).collect(),
        }
    }

    /// Uniform samples in [lo, hi), drawn in index order for reproducibility.
    pub fn rand_uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut impl Rng) -> Self {
        Tensor::from_fn(shape, |_| rng.gen_range(lo..hi))
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn item(&self) -> f64 {
        debug_assert_eq!(self.data.len(), 1);
        self.data[0]
    }

    /// Reinterprets the buffer under a new shape of the same length.
    pub fn reshaped(&self, shape: &[usize]) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != self.data.len() {
            return Err(Error::Shape {
                op: "reshape".into(),
                lhs: self.shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64 + Sync) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Shape {
                op: "zip".into(),
                lhs: self.shape.clone(),
                rhs: other.shape.clone(),
            });
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|x| k * x)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// 2-D matrix product. Rows of the output are computed independently
    /// (parallel over row blocks), so results are bit-identical regardless
    /// of the worker count.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = as_2d(self, "matmul")?;
        let (k2, n) = as_2d(rhs, "matmul")?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul".into(),
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&self.data, &rhs.data, &mut out, m, k, n);
        Tensor::new(vec![m, n], out)
    }

    /// Batched 3-D matrix product: [b, m, k] x [b, k, n] -> [b, m, n].
    pub fn batched_matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (b, m, k) = as_3d(self, "batched_matmul")?;
        let (b2, k2, n) = as_3d(rhs, "batched_matmul")?;
        if b != b2 || k != k2 {
            return Err(Error::Shape {
                op: "batched_matmul".into(),
                lhs: self.shape.clone(),
                rhs: rhs.shape.clone(),
            });
        }
        let mut out = vec![0.0; b * m * n];
        out.par_chunks_mut(m * n)
            .enumerate()
            .for_each(|(bi, chunk)| {
                let a = &self.data[bi * m * k..(bi + 1) * m * k];
                let bmat = &rhs.data[bi * k * n..(bi + 1) * k * n];
                matmul_serial(a, bmat, chunk, m, k, n);
            });
        Tensor::new(vec![b, m, n], out)
    }

    /// 2-D transpose.
    pub fn transposed(&self) -> Result<Tensor> {
        let (m, n) = as_2d(self, "transpose")?;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = self.data[i * n + j];
            }
        }
        Tensor::new(vec![n, m], out)
    }

    /// Swaps the last two axes of a 3-D tensor.
    pub fn transposed_last2(&self) -> Result<Tensor> {
        let (b, m, n) = as_3d(self, "transpose_last2")?;
        let mut out = vec![0.0; b * m * n];
        for bi in 0..b {
            for i in 0..m {
                for j in 0..n {
                    out[bi * m * n + j * m + i] = self.data[bi * m * n + i * n + j];
                }
            }
        }
        Tensor::new(vec![b, n, m], out)
    }

    /// Swaps axes 0 and 1 of a 3-D tensor.
    pub fn swapped_axes01(&self) -> Result<Tensor> {
        let (a, b, c) = as_3d(self, "swap_axes01")?;
        let mut out = vec![0.0; a * b * c];
        for i in 0..a {
            for j in 0..b {
                let src = &self.data[(i * b + j) * c..(i * b + j + 1) * c];
                out[(j * a + i) * c..(j * a + i + 1) * c].copy_from_slice(src);
            }
        }
        Tensor::new(vec![b, a, c], out)
    }

    pub fn has_non_finite(&self) -> bool {
        self.data.iter().any(|x| !x.is_finite())
    }
}

pub(crate) fn as_2d(t: &Tensor, op: &str) -> Result<(usize, usize)> {
    match t.shape() {
        [m, n] => Ok((*m, *n)),
        _ => Err(Error::Shape {
            op: op.into(),
            lhs: t.shape().to_vec(),
            rhs: vec![],
        }),
    }
}

pub(crate) fn as_3d(t: &Tensor, op: &str) -> Result<(usize, usize, usize)> {
    match t.shape() {
        [a, b, c] => Ok((*a, *b, *c)),
        _ => Err(Error::Shape {
            op: op.into(),
            lhs: t.shape().to_vec(),
            rhs: vec![],
        }),
    }
}

/// C[m,n] = A[m,k] B[k,n], parallel over output rows. Each output row is
/// produced by exactly one worker with a fixed inner loop order, so the
/// result does not depend on thread count.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    if m * k * n < 32_768 {
        matmul_serial(a, b, out, m, k, n);
        return;
    }
    out.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        let arow = &a[i * k..(i + 1) * k];
        row.fill(0.0);
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (r, &bv) in row.iter_mut().zip(brow) {
                *r += av * bv;
            }
        }
    });
}

fn matmul_serial(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    out.fill(0.0);
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in arow.iter().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_identity_returns_input() {
        let x = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let eye = Tensor::from_fn(&[2, 2], |i| if i % 3 == 0 { 1.0 } else { 0.0 });
        let y = eye.matmul(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[4, 2]);
        let err = a.matmul(&b).unwrap_err();
        assert!(err.to_string().contains("matmul"));
    }

    #[test]
    fn batched_matmul_matches_per_batch() {
        let a = Tensor::from_fn(&[2, 2, 3], |i| i as f64);
        let b = Tensor::from_fn(&[2, 3, 2], |i| (i as f64) * 0.5);
        let c = a.batched_matmul(&b).unwrap();
        for bi in 0..2 {
            let a2 = Tensor::new(vec![2, 3], a.data()[bi * 6..(bi + 1) * 6].to_vec()).unwrap();
            let b2 = Tensor::new(vec![3, 2], b.data()[bi * 6..(bi + 1) * 6].to_vec()).unwrap();
            let c2 = a2.matmul(&b2).unwrap();
            assert_eq!(&c.data()[bi * 4..(bi + 1) * 4], c2.data());
        }
    }

    #[test]
    fn swap_axes_round_trips() {
        let t = Tensor::from_fn(&[3, 2, 4], |i| i as f64);
        let back = t.swapped_axes01().unwrap().swapped_axes01().unwrap();
        assert_eq!(t, back);
    }

    #[test]
    fn transpose_last2_round_trips() {
        let t = Tensor::from_fn(&[2, 3, 4], |i| i as f64);
        let back = t.transposed_last2().unwrap().transposed_last2().unwrap();
        assert_eq!(t, back);
    }
}
