//! Dense order-M tensors and CP factor sets.
//!
//! Storage is row-major (last index fastest). The mode-n unfolding places
//! `index_n` on rows and enumerates the remaining modes on columns, again
//! with the last remaining mode varying fastest. With that convention the
//! mode-n unfolding of a CP tensor is
//! `A_n · diag(λ) · (A_0 ⊙ … ⊙ A_{n-1} ⊙ A_{n+1} ⊙ … ⊙ A_{M-1})ᵀ`,
//! where `⊙` is [`khatri_rao`] with its first argument varying slowest.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::matrix::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::invalid("tensor order must be at least 1"));
    }
    if let Some(pos) = shape.iter().position(|&d| d == 0) {
        return Err(Error::invalid(format!("tensor dimension {pos} is zero")));
    }
    Ok(shape.iter().product())
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len = check_shape(&shape)?;
        if data.len() != len {
            return Err(Error::invalid(format!(
                "tensor data has {} entries, shape {:?} needs {len}",
                data.len(),
                shape
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let len = check_shape(&shape)?;
        Ok(Self {
            shape,
            data: vec![0.0; len],
        })
    }

    /// Fills the tensor by evaluating `f` at every multi-index in storage order.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let len = check_shape(&shape)?;
        let mut data = Vec::with_capacity(len);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, &shape);
        }
        Ok(Self { shape, data })
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        debug_assert_eq!(index.len(), self.order());
        let flat = index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| acc * d + i);
        self.data[flat]
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius_norm(self)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `c · self`.
    pub fn scaled(&self, c: f64) -> DenseTensor {
        DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| c * v).collect(),
        }
    }

    /// Entrywise difference `self - other`.
    pub fn sub(&self, other: &DenseTensor) -> Result<DenseTensor> {
        if self.shape != other.shape {
            return Err(Error::invalid(format!(
                "shape mismatch {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(DenseTensor {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }
}

impl From<Matrix> for DenseTensor {
    fn from(m: Matrix) -> Self {
        let (r, c) = m.shape();
        DenseTensor {
            shape: vec![r, c],
            data: m.into_data(),
        }
    }
}

/// Advances a row-major multi-index in place.
#[inline]
pub(crate) fn increment(idx: &mut [usize], shape: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < shape[k] {
            return;
        }
        idx[k] = 0;
    }
}

/// `v_0 ⊗ v_1 ⊗ … ⊗ v_{M-1}`.
pub fn outer_product<V: AsRef<[f64]>>(vectors: &[V]) -> Result<DenseTensor> {
    if vectors.is_empty() {
        return Err(Error::invalid("outer_product needs at least one vector"));
    }
    let shape: Vec<usize> = vectors.iter().map(|v| v.as_ref().len()).collect();
    check_shape(&shape)?;
    // Expand one mode at a time; row-major order means each new mode is appended innermost.
    let mut data = vec![1.0];
    for v in vectors {
        let v = v.as_ref();
        let mut next = Vec::with_capacity(data.len() * v.len());
        for &a in &data {
            next.extend(v.iter().map(|b| a * b));
        }
        data = next;
    }
    Ok(DenseTensor { shape, data })
}

/// Square root of the sum of squared entries.
pub fn frobenius_norm(t: &DenseTensor) -> f64 {
    libm::sqrt(t.data.iter().map(|v| v * v).sum::<f64>())
}

fn check_mode(order: usize, mode: usize) -> Result<()> {
    if mode >= order {
        return Err(Error::invalid(format!(
            "mode {mode} out of range for an order-{order} tensor"
        )));
    }
    Ok(())
}

/// Column stride of each mode inside a mode-`mode` unfolding (0 for `mode` itself).
fn unfold_strides(shape: &[usize], mode: usize) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut s = 1;
    for k in (0..shape.len()).rev() {
        if k != mode {
            strides[k] = s;
            s *= shape[k];
        }
    }
    strides
}

/// Mode-`mode` matricization: `d_mode × Π_{i≠mode} d_i`.
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    check_mode(t.order(), mode)?;
    let rows = t.shape[mode];
    let cols = t.len() / rows;
    let strides = unfold_strides(&t.shape, mode);
    let mut out = Matrix::zeros(rows, cols);
    let mut idx = vec![0usize; t.order()];
    for &v in &t.data {
        let col: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.set(idx[mode], col, v);
        increment(&mut idx, &t.shape);
    }
    Ok(out)
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    let len = check_shape(shape)?;
    check_mode(shape.len(), mode)?;
    if m.rows() != shape[mode] || m.rows() * m.cols() != len {
        return Err(Error::invalid(format!(
            "cannot fold a {}x{} matrix into shape {:?} along mode {mode}",
            m.rows(),
            m.cols(),
            shape
        )));
    }
    let strides = unfold_strides(shape, mode);
    let mut data = Vec::with_capacity(len);
    let mut idx = vec![0usize; shape.len()];
    for _ in 0..len {
        let col: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        data.push(m.get(idx[mode], col));
        increment(&mut idx, shape);
    }
    Ok(DenseTensor {
        shape: shape.to_vec(),
        data,
    })
}

/// Column-wise Kronecker product; row `i_a · d_b + i_b` of column `k` is `a[i_a,k]·b[i_b,k]`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::invalid(format!(
            "khatri_rao column mismatch: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    let r = a.cols();
    let mut out = Matrix::zeros(a.rows() * b.rows(), r);
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            let row = out.row_mut(i * b.rows() + j);
            for k in 0..r {
                row[k] = a.get(i, k) * b.get(j, k);
            }
        }
    }
    Ok(out)
}

/// Weighted CP factor set: `Σ_i λ_i ⊗_m w_m^i`, with `w_m^i` the i-th column of factor `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct CpFactors {
    weights: Vec<f64>,
    factors: Vec<Matrix>,
}

impl CpFactors {
    pub fn new(weights: Vec<f64>, factors: Vec<Matrix>) -> Result<Self> {
        let r = weights.len();
        if r == 0 {
            return Err(Error::invalid("CP rank must be positive"));
        }
        if factors.is_empty() {
            return Err(Error::invalid("CP factor set needs at least one mode"));
        }
        for (m, f) in factors.iter().enumerate() {
            if f.cols() != r {
                return Err(Error::invalid(format!(
                    "factor {m} has {} columns, rank is {r}",
                    f.cols()
                )));
            }
            if f.rows() == 0 {
                return Err(Error::invalid(format!("factor {m} has no rows")));
            }
        }
        Ok(Self { weights, factors })
    }

    /// Unit weights.
    pub fn from_factors(factors: Vec<Matrix>) -> Result<Self> {
        let r = factors.first().map_or(0, Matrix::cols);
        Self::new(vec![1.0; r], factors)
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.weights.len()
    }

    #[inline]
    pub fn order(&self) -> usize {
        self.factors.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn shape(&self) -> Vec<usize> {
        self.factors.iter().map(Matrix::rows).collect()
    }

    /// Rescales every column to unit Euclidean norm, moving magnitudes into the weights.
    /// Zero columns become the first basis vector with the weight zeroed.
    pub fn normalize(&mut self) {
        for f in &mut self.factors {
            for k in 0..f.cols() {
                let n = libm::sqrt((0..f.rows()).map(|i| f.get(i, k) * f.get(i, k)).sum::<f64>());
                if n > 0.0 {
                    for i in 0..f.rows() {
                        f.set(i, k, f.get(i, k) / n);
                    }
                    self.weights[k] *= n;
                } else {
                    for i in 0..f.rows() {
                        f.set(i, k, if i == 0 { 1.0 } else { 0.0 });
                    }
                    self.weights[k] = 0.0;
                }
            }
        }
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        self.factors.iter().all(|f| {
            (0..f.cols()).all(|k| {
                let n = libm::sqrt((0..f.rows()).map(|i| f.get(i, k) * f.get(i, k)).sum::<f64>());
                (n - 1.0).abs() <= tol
            })
        })
    }

    pub(crate) fn parts_mut(&mut self) -> (&mut Vec<f64>, &mut Vec<Matrix>) {
        (&mut self.weights, &mut self.factors)
    }
}

/// Dense tensor `Σ_i λ_i ⊗_m w_m^i`.
pub fn reconstruct(f: &CpFactors) -> DenseTensor {
    let shape = f.shape();
    let len: usize = shape.iter().product();
    let r = f.rank();
    let mut data = Vec::with_capacity(len);
    let mut idx = vec![0usize; shape.len()];
    let mut prod = vec![0.0; r];
    for _ in 0..len {
        prod.copy_from_slice(&f.weights);
        for (m, fac) in f.factors.iter().enumerate() {
            let row = fac.row(idx[m]);
            for (p, w) in prod.iter_mut().zip(row) {
                *p *= w;
            }
        }
        data.push(prod.iter().sum());
        increment(&mut idx, &shape);
    }
    DenseTensor { shape, data }
}
