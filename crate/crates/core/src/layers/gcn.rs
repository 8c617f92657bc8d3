use crate::error::{shape_err, Result};
use crate::graph::Csr;
use crate::tensor::{leaky_relu, leaky_relu_backward, matmul, matmul_nt, matmul_tn, spmm, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GcnLayerParams<T> {
    /// `d_in × d_out`
    pub w: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct GcnCache<T> {
    /// `Â H`
    propagated: Tensor<T>,
    pre: Tensor<T>,
}

/// `σ(Â H W)`.
pub fn gcn_forward<T: Scalar>(
    a_hat: &Csr,
    h: &Tensor<T>,
    p: &GcnLayerParams<T>,
    slope: T,
) -> Result<(Tensor<T>, GcnCache<T>)> {
    if h.cols() != p.w.rows() {
        return Err(shape_err(format!("gcn: H {:?} vs W {:?}", h.shape(), p.w.shape())));
    }
    let propagated = spmm(a_hat, h)?;
    let pre = matmul(&propagated, &p.w)?;
    let out = leaky_relu(&pre, slope);
    Ok((out, GcnCache { propagated, pre }))
}

/// Accumulates `dW` into `grad` and returns `dH`. Relies on `Â` being symmetric.
pub fn gcn_backward<T: Scalar>(
    a_hat: &Csr,
    cache: &GcnCache<T>,
    p: &GcnLayerParams<T>,
    d_out: &Tensor<T>,
    slope: T,
    grad: &mut GcnLayerParams<T>,
) -> Result<Tensor<T>> {
    let d_pre = leaky_relu_backward(&cache.pre, d_out, slope);
    grad.w.add_assign(&matmul_tn(&cache.propagated, &d_pre)?)?;
    spmm(a_hat, &matmul_nt(&d_pre, &p.w)?)
}
