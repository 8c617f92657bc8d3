//! Dense row-major tensors and the handful of kernels the graph layers need.
//!
//! Storage is generic over [`Scalar`] so the same layer code runs in `f32`
//! for training and in `f64` for finite-difference gradient checks. Every
//! reduction accumulates in `f64` in a fixed order, so results do not depend
//! on how callers split work across threads.

use std::fmt::Debug;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::Float;

use crate::error::{shape_err, Error, Result};
use crate::graph::Csr;

/// Floating-point element type of a [`Tensor`].
pub trait Scalar:
    Float + Default + Debug + Send + Sync + AddAssign + SubAssign + MulAssign + 'static
{
    /// Narrow (or copy) an `f64` into this type.
    fn of(v: f64) -> Self;
    /// Widen to `f64`.
    fn wide(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn wide(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }
    #[inline]
    fn wide(self) -> f64 {
        self
    }
}

/// Shape plus row-major payload.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); len],
        }
    }

    /// Builds a tensor, rejecting length disagreements and non-finite values.
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(shape_err(format!(
                "shape {:?} needs {} values, got {}",
                shape,
                len,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Tensor::from_vec"));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Convenience constructor for small literal matrices.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        if rows.iter().any(|row| row.len() != c) {
            return Err(shape_err("ragged rows"));
        }
        let data = rows.iter().flat_map(|row| row.iter().map(|&v| T::of(v))).collect();
        Tensor::from_vec(&[r, c], data)
    }

    pub fn row_vector(values: &[f64]) -> Result<Self> {
        Tensor::from_rows(&[values])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Leading dimension of a matrix.
    pub fn rows(&self) -> usize {
        self.shape.first().copied().unwrap_or(1)
    }

    /// Trailing dimension of a matrix (1 for vectors).
    pub fn cols(&self) -> usize {
        if self.shape.len() >= 2 {
            self.shape[1..].iter().product()
        } else {
            1
        }
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

    pub fn row(&self, i: usize) -> &[T] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let c = self.cols();
        &mut self.data[i * c..(i + 1) * c]
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols() + j]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite(op))
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::of(v.wide())).collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|v| *v = T::zero());
    }

    /// `self += other` elementwise.
    pub fn add_assign(&mut self, other: &Tensor<T>) -> Result<()> {
        if self.shape != other.shape {
            return Err(shape_err(format!("{:?} += {:?}", self.shape, other.shape)));
        }
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: T) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    /// Largest absolute elementwise difference; `None` on shape mismatch.
    pub fn max_abs_diff(&self, other: &Tensor<T>) -> Option<f64> {
        if self.shape != other.shape {
            return None;
        }
        Some(
            self.data
                .iter()
                .zip(&other.data)
                .map(|(a, b)| (a.wide() - b.wide()).abs())
                .fold(0.0, f64::max),
        )
    }

    fn check_matrix(&self, op: &str) -> Result<()> {
        if self.shape.len() != 2 {
            return Err(shape_err(format!("{op}: expected matrix, got {:?}", self.shape)));
        }
        Ok(())
    }
}

/// `X · Y` for `X: m×k`, `Y: k×n`.
pub fn matmul<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    x.check_matrix("matmul")?;
    y.check_matrix("matmul")?;
    let (m, k, n) = (x.rows(), x.cols(), y.cols());
    if y.rows() != k {
        return Err(shape_err(format!("matmul {:?} x {:?}", x.shape, y.shape)));
    }
    let mut out = Vec::with_capacity(m * n);
    let mut acc = vec![0.0f64; n];
    for i in 0..m {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (p, &xv) in x.row(i).iter().enumerate() {
            let xv = xv.wide();
            if xv == 0.0 {
                continue;
            }
            for (a, &yv) in acc.iter_mut().zip(y.row(p)) {
                *a += xv * yv.wide();
            }
        }
        out.extend(acc.iter().map(|&a| T::of(a)));
    }
    Tensor {
        shape: vec![m, n],
        data: out,
    }
    .ensure_finite("matmul")
}

/// `Xᵀ · Y` for `X: k×m`, `Y: k×n`.
pub fn matmul_tn<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    x.check_matrix("matmul_tn")?;
    y.check_matrix("matmul_tn")?;
    let (k, m, n) = (x.rows(), x.cols(), y.cols());
    if y.rows() != k {
        return Err(shape_err(format!("matmul_tn {:?} x {:?}", x.shape, y.shape)));
    }
    let mut acc = vec![0.0f64; m * n];
    for p in 0..k {
        let yrow = y.row(p);
        for (i, &xv) in x.row(p).iter().enumerate() {
            let xv = xv.wide();
            if xv == 0.0 {
                continue;
            }
            for (a, &yv) in acc[i * n..(i + 1) * n].iter_mut().zip(yrow) {
                *a += xv * yv.wide();
            }
        }
    }
    Tensor {
        shape: vec![m, n],
        data: acc.into_iter().map(T::of).collect(),
    }
    .ensure_finite("matmul_tn")
}

/// `X · Yᵀ` for `X: m×k`, `Y: n×k`.
pub fn matmul_nt<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    x.check_matrix("matmul_nt")?;
    y.check_matrix("matmul_nt")?;
    let (m, k, n) = (x.rows(), x.cols(), y.rows());
    if y.cols() != k {
        return Err(shape_err(format!("matmul_nt {:?} x {:?}", x.shape, y.shape)));
    }
    let mut out = Vec::with_capacity(m * n);
    for i in 0..m {
        let xrow = x.row(i);
        for j in 0..n {
            let dot: f64 = xrow
                .iter()
                .zip(y.row(j))
                .map(|(&a, &b)| a.wide() * b.wide())
                .sum();
            out.push(T::of(dot));
        }
    }
    Tensor {
        shape: vec![m, n],
        data: out,
    }
    .ensure_finite("matmul_nt")
}

/// Sparse-times-dense product `S · X`.
pub fn spmm<T: Scalar>(s: &Csr, x: &Tensor<T>) -> Result<Tensor<T>> {
    x.check_matrix("spmm")?;
    if s.ncols() != x.rows() {
        return Err(shape_err(format!(
            "spmm {}x{} x {:?}",
            s.nrows(),
            s.ncols(),
            x.shape
        )));
    }
    let n = x.cols();
    let mut out = Vec::with_capacity(s.nrows() * n);
    let mut acc = vec![0.0f64; n];
    for i in 0..s.nrows() {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for (j, w) in s.row(i) {
            for (a, &xv) in acc.iter_mut().zip(x.row(j)) {
                *a += w * xv.wide();
            }
        }
        out.extend(acc.iter().map(|&a| T::of(a)));
    }
    Tensor {
        shape: vec![s.nrows(), n],
        data: out,
    }
    .ensure_finite("spmm")
}

#[inline]
pub fn leaky_relu_scalar<T: Scalar>(v: T, slope: T) -> T {
    if v >= T::zero() {
        v
    } else {
        slope * v
    }
}

/// Derivative of LeakyReLU; 1 at exactly zero.
#[inline]
pub fn leaky_relu_deriv<T: Scalar>(v: T, slope: T) -> T {
    if v >= T::zero() {
        T::one()
    } else {
        slope
    }
}

pub fn leaky_relu<T: Scalar>(x: &Tensor<T>, slope: T) -> Tensor<T> {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|&v| leaky_relu_scalar(v, slope)).collect(),
    }
}

/// Masks `upstream` by the LeakyReLU derivative evaluated at `pre`.
pub fn leaky_relu_backward<T: Scalar>(pre: &Tensor<T>, upstream: &Tensor<T>, slope: T) -> Tensor<T> {
    debug_assert_eq!(pre.shape, upstream.shape);
    Tensor {
        shape: pre.shape.clone(),
        data: pre
            .data
            .iter()
            .zip(&upstream.data)
            .map(|(&p, &g)| g * leaky_relu_deriv(p, slope))
            .collect(),
    }
}

/// Max-subtracted softmax over a slice, computed in `f64`.
pub fn softmax_slice<T: Scalar>(values: &[T]) -> Vec<T> {
    let max = values.iter().map(|v| v.wide()).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (v.wide() - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| T::of(e / total)).collect()
}

/// Softmax of a single-row tensor.
pub fn softmax_row<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rows() != 1 || x.is_empty() {
        return Err(shape_err(format!("softmax_row expects 1×n, got {:?}", x.shape)));
    }
    Tensor {
        shape: x.shape.clone(),
        data: softmax_slice(&x.data),
    }
    .ensure_finite("softmax_row")
}

/// Horizontal concatenation of single-row tensors.
pub fn concat_rows<T: Scalar>(parts: &[&Tensor<T>]) -> Result<Tensor<T>> {
    if parts.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut data = Vec::new();
    for p in parts {
        if p.rows() != 1 {
            return Err(shape_err(format!("concat_rows part has shape {:?}", p.shape)));
        }
        data.extend_from_slice(&p.data);
    }
    let width = data.len();
    Ok(Tensor {
        shape: vec![1, width],
        data,
    })
}

/// A named collection of parameter tensors, visited in a stable order.
pub trait ParamSet<T: Scalar> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)>;
    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>>;
}

impl<T: Scalar> ParamSet<T> for Vec<Tensor<T>> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        self.iter().enumerate().map(|(i, t)| (format!("param{i}"), t)).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        self.iter_mut().collect()
    }
}

/// Outcome of a finite-difference comparison.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    pub entries_checked: usize,
}

/// Relative error used by [`gradcheck`].
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / f64::max(1e-8, analytic.abs() + numeric.abs())
}

/// Compares `analytic` against central differences of `loss` for every
/// parameter entry. `params` is perturbed in place and restored.
pub fn gradcheck<P, F>(params: &mut P, analytic: &P, eps: f64, mut loss: F) -> Result<GradcheckReport>
where
    P: ParamSet<f64>,
    F: FnMut(&P) -> Result<f64>,
{
    let grads: Vec<(String, Tensor<f64>)> = analytic
        .named_tensors()
        .into_iter()
        .map(|(n, t)| (n, t.clone()))
        .collect();
    let shapes: Vec<Vec<usize>> = params
        .named_tensors()
        .iter()
        .map(|(_, t)| t.shape().to_vec())
        .collect();
    if shapes.len() != grads.len()
        || shapes.iter().zip(&grads).any(|(s, (_, g))| s.as_slice() != g.shape())
    {
        return Err(shape_err("gradcheck: parameter and gradient sets disagree"));
    }

    let mut report = GradcheckReport {
        max_rel_error: 0.0,
        worst: None,
        entries_checked: 0,
    };
    for (ti, (name, grad)) in grads.iter().enumerate() {
        for idx in 0..grad.len() {
            let orig = params.tensors_mut()[ti].data()[idx];
            params.tensors_mut()[ti].data_mut()[idx] = orig + eps;
            let plus = loss(params)?;
            params.tensors_mut()[ti].data_mut()[idx] = orig - eps;
            let minus = loss(params)?;
            params.tensors_mut()[ti].data_mut()[idx] = orig;
            for v in [plus, minus] {
                if !v.is_finite() {
                    return Err(Error::NonFiniteLoss(v));
                }
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let err = relative_error(grad.data()[idx], numeric);
            report.entries_checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((name.clone(), idx));
            }
        }
    }
    Ok(report)
}
