//! Dense row-major tensors and a tape-based reverse-mode autodiff engine.
//!
//! The engine implements only what the tiny transformer needs. Every
//! reduction runs in a fixed order so that identical inputs give
//! bit-identical outputs; that property is what makes state arithmetic
//! recover earlier checkpoints exactly.
//!
//! Computation is generic over [`Scalar`]: experiments run in `f32`, the
//! finite-difference oracle runs in `f64`.

mod gradcheck;
pub mod kernels;
mod tape;

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive};

pub use gradcheck::{finite_diff_check, finite_diff_report, GradCheckConfig, GradCheckReport, Stencil};
pub use tape::{Grads, Tape, Var};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TensorError {
    #[error("{op}: dimension mismatch ({detail})")]
    Dimension { op: &'static str, detail: String },
    #[error("shape {shape:?} does not match data length {len}")]
    ShapeData { shape: Vec<usize>, len: usize },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("cross_entropy: no supervised positions in batch")]
    DegenerateBatch,
    #[error("backward already ran on this tape")]
    BackwardTwice,
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("index {index} out of range for {op} with bound {bound}")]
    Index { op: &'static str, index: usize, bound: usize },
    #[error("evaluation produced a non-finite objective")]
    Evaluation,
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// Floating-point element type. Implemented for `f32` and `f64`.
pub trait Scalar:
    Float + FromPrimitive + AddAssign + SubAssign + MulAssign + Default + Debug + Send + Sync + 'static
{
    /// Converts an `f64` constant into this type (rounding for `f32`).
    #[inline]
    fn cst(v: f64) -> Self {
        Self::from_f64(v).expect("finite constant")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("float to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Contiguous row-major tensor. `shape` may be empty for a scalar.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeData { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![T::zero(); n] }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = shape.iter().product();
        Self { shape: shape.to_vec(), data: vec![value; n] }
    }

    pub fn scalar(value: T) -> Self {
        Self { shape: Vec::new(), data: vec![value] }
    }

    pub fn from_rows(rows: &[&[T]]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != cols) {
            return Err(TensorError::Dimension {
                op: "from_rows",
                detail: "ragged rows".into(),
            });
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Ok(Self { shape: vec![rows.len(), cols], data })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Number of rows when viewed as a matrix whose last axis is the row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            0 => 1,
            _ => self.numel() / self.cols().max(1),
        }
    }

    pub fn cols(&self) -> usize {
        self.shape.last().copied().unwrap_or(1)
    }

    pub fn item(&self) -> T {
        self.data[0]
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::cst(v.as_f64())).collect(),
        }
    }
}

/// Plain matrix product without recording, `a[m×k] · b[k×n]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k, n) = matmul_dims(a, b)?;
    let mut out = vec![T::zero(); m * n];
    kernels::gemm_acc(&mut out, a.data(), b.data(), m, k, n);
    Tensor::new(vec![m, n], out)
}

pub(crate) fn matmul_dims<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize, usize)> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(TensorError::Dimension {
            op: "matmul",
            detail: format!("{:?} x {:?}", a.shape(), b.shape()),
        });
    }
    Ok((a.shape()[0], a.shape()[1], b.shape()[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_times_matrix_is_matrix() {
        let eye = Tensor::from_rows(&[&[1.0f32, 0.0], &[0.0, 1.0]]).unwrap();
        let a = Tensor::from_rows(&[&[1.5f32, -2.0], &[3.25, 4.0]]).unwrap();
        assert_eq!(matmul(&eye, &a).unwrap(), a);
    }

    #[test]
    fn hand_product() {
        let a = Tensor::from_rows(&[&[1.0f32, 2.0], &[3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[&[1.0f32], &[1.0]]).unwrap();
        let c = matmul(&a, &b).unwrap();
        assert_eq!(c.shape(), &[2, 1]);
        assert_eq!(c.data(), &[3.0, 7.0]);
    }

    #[test]
    fn zeros_annihilate() {
        let z = Tensor::<f32>::zeros(&[3, 4]);
        let b = Tensor::new(vec![4, 2], (0..8).map(|v| v as f32 - 3.5).collect()).unwrap();
        assert!(matmul(&z, &b).unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn inner_dimension_mismatch() {
        let a = Tensor::<f32>::zeros(&[2, 3]);
        let b = Tensor::<f32>::zeros(&[2, 3]);
        assert!(matches!(matmul(&a, &b), Err(TensorError::Dimension { .. })));
    }

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(vec![2, 2], vec![1.0f32; 3]).is_err());
        assert_eq!(Tensor::scalar(2.0f64).numel(), 1);
    }
}
