use crate::error::{shape_err, Result};
use crate::graph::Csr;
use crate::tensor::{leaky_relu, leaky_relu_backward, matmul, matmul_nt, matmul_tn, spmm, Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Nn4gLayerParams<T> {
    /// `d_in × d_out`, applied to the node input features.
    pub w_input: Tensor<T>,
    /// `d_hidden × d_out`, applied to the summed previous-layer neighbor states.
    pub theta: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct Nn4gCache<T> {
    input: Tensor<T>,
    /// `A · H_prev` over the raw (unnormalized) adjacency.
    neighbor_sum: Tensor<T>,
    pre: Tensor<T>,
}

/// `h_v = f(x_v W_input + (Σ_u A_vu h_prev_u) Θ)`.
pub fn nn4g_forward<T: Scalar>(
    x: &Tensor<T>,
    h_prev: &Tensor<T>,
    a: &Csr,
    p: &Nn4gLayerParams<T>,
    slope: T,
) -> Result<(Tensor<T>, Nn4gCache<T>)> {
    if x.rows() != h_prev.rows()
        || x.cols() != p.w_input.rows()
        || h_prev.cols() != p.theta.rows()
        || p.w_input.cols() != p.theta.cols()
    {
        return Err(shape_err(format!(
            "nn4g: X {:?}, H {:?}, W_input {:?}, Θ {:?}",
            x.shape(),
            h_prev.shape(),
            p.w_input.shape(),
            p.theta.shape()
        )));
    }
    let neighbor_sum = spmm(a, h_prev)?;
    let mut pre = matmul(x, &p.w_input)?;
    pre.add_assign(&matmul(&neighbor_sum, &p.theta)?)?;
    let pre = pre.ensure_finite("nn4g_forward")?;
    let out = leaky_relu(&pre, slope);
    Ok((
        out,
        Nn4gCache {
            input: x.clone(),
            neighbor_sum,
            pre,
        },
    ))
}

/// Returns `(dX, dH_prev)`. Relies on `A` being symmetric.
pub fn nn4g_backward<T: Scalar>(
    a: &Csr,
    cache: &Nn4gCache<T>,
    p: &Nn4gLayerParams<T>,
    d_out: &Tensor<T>,
    slope: T,
    grad: &mut Nn4gLayerParams<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let d_pre = leaky_relu_backward(&cache.pre, d_out, slope);
    grad.w_input.add_assign(&matmul_tn(&cache.input, &d_pre)?)?;
    grad.theta.add_assign(&matmul_tn(&cache.neighbor_sum, &d_pre)?)?;
    let d_x = matmul_nt(&d_pre, &p.w_input)?;
    let d_h = spmm(a, &matmul_nt(&d_pre, &p.theta)?)?;
    Ok((d_x, d_h))
}
