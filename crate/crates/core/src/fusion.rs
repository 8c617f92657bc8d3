//! Modality transforms, concatenation fusion and the softmax classifier head.

use crate::error::{shape_err, Result};
use crate::tensor::{
    concat_rows, leaky_relu, leaky_relu_backward, matmul, matmul_nt, matmul_tn, softmax_row, Scalar, Tensor,
};

/// A precomputed non-text feature vector, e.g. image or metadata features.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityVector<T = f32> {
    pub name: String,
    /// `1 × d_i`
    pub values: Tensor<T>,
}

/// Affine map plus LeakyReLU into the shared fusion width.
#[derive(Clone, Debug, PartialEq)]
pub struct ModalityTransform<T> {
    /// `d_i × d_fuse`
    pub w: Tensor<T>,
    /// `1 × d_fuse`
    pub b: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead<T> {
    /// `d_total × K`
    pub w: Tensor<T>,
    /// `1 × K`
    pub b: Tensor<T>,
}

fn add_bias<T: Scalar>(mut x: Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if x.rows() != 1 || x.cols() != b.len() {
        return Err(shape_err(format!("bias {:?} for {:?}", b.shape(), x.shape())));
    }
    for (v, &bv) in x.data_mut().iter_mut().zip(b.data()) {
        *v += bv;
    }
    x.ensure_finite("add_bias")
}

/// `LeakyReLU(m W + b)`; also returns the pre-activation for backward.
pub fn transform_modality<T: Scalar>(
    m: &Tensor<T>,
    t: &ModalityTransform<T>,
    slope: T,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if m.rows() != 1 || m.cols() != t.w.rows() {
        return Err(shape_err(format!("modality {:?} vs W {:?}", m.shape(), t.w.shape())));
    }
    let pre = add_bias(matmul(m, &t.w)?, &t.b)?;
    Ok((leaky_relu(&pre, slope), pre))
}

pub fn transform_modality_backward<T: Scalar>(
    m: &Tensor<T>,
    pre: &Tensor<T>,
    d_out: &Tensor<T>,
    slope: T,
    grad: &mut ModalityTransform<T>,
) -> Result<()> {
    let d_pre = leaky_relu_backward(pre, d_out, slope);
    grad.w.add_assign(&matmul_tn(m, &d_pre)?)?;
    grad.b.add_assign(&d_pre)?;
    Ok(())
}

/// `Concat(h_doc, m'_1, …, m'_N)`.
pub fn fuse_concat<T: Scalar>(h_doc: &Tensor<T>, modality_outputs: &[Tensor<T>]) -> Result<Tensor<T>> {
    let mut parts = Vec::with_capacity(1 + modality_outputs.len());
    parts.push(h_doc);
    parts.extend(modality_outputs.iter());
    concat_rows(&parts)
}

/// Class probabilities `softmax(h W + b)`.
pub fn classify<T: Scalar>(h_fused: &Tensor<T>, head: &ClassifierHead<T>) -> Result<Tensor<T>> {
    if h_fused.rows() != 1 || h_fused.cols() != head.w.rows() {
        return Err(shape_err(format!(
            "classifier input {:?} vs W {:?}",
            h_fused.shape(),
            head.w.shape()
        )));
    }
    softmax_row(&add_bias(matmul(h_fused, &head.w)?, &head.b)?)
}

/// Index of the largest probability, lowest index on ties.
pub fn predicted_label<T: Scalar>(probs: &Tensor<T>) -> usize {
    let mut best = 0;
    for (i, &p) in probs.data().iter().enumerate() {
        if p > probs.data()[best] {
            best = i;
        }
    }
    best
}

/// Backward of `scale · -log(max(p_label, clamp))` through the softmax
/// head. Accumulates into `grad` and returns `d h_fused`.
pub fn classify_backward<T: Scalar>(
    h_fused: &Tensor<T>,
    probs: &Tensor<T>,
    label: usize,
    scale: f64,
    clamp: f64,
    head: &ClassifierHead<T>,
    grad: &mut ClassifierHead<T>,
) -> Result<Tensor<T>> {
    let mut d_logits = Tensor::zeros(probs.shape());
    if probs.data()[label].wide() >= clamp {
        for (i, (d, &p)) in d_logits.data_mut().iter_mut().zip(probs.data()).enumerate() {
            let target = if i == label { 1.0 } else { 0.0 };
            *d = T::of(scale * (p.wide() - target));
        }
    }
    grad.w.add_assign(&matmul_tn(h_fused, &d_logits)?)?;
    grad.b.add_assign(&d_logits)?;
    matmul_nt(&d_logits, &head.w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::testutil::*;
    use crate::tensor::gradcheck;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn t(rows: &[&[f64]]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn transform_examples() {
        let zero = ModalityTransform { w: Tensor::zeros(&[3, 2]), b: Tensor::zeros(&[1, 2]) };
        let (out, _) = transform_modality(&Tensor::zeros(&[1, 3]), &zero, 0.2).unwrap();
        assert_eq!(out, Tensor::zeros(&[1, 2]));
        let unit = ModalityTransform { w: t(&[&[2.0]]), b: t(&[&[1.0]]) };
        let (out, _) = transform_modality(&t(&[&[3.0]]), &unit, 0.2).unwrap();
        assert_eq!(out.data(), &[7.0]);
        assert!(transform_modality(&t(&[&[3.0, 1.0]]), &unit, 0.2).is_err());
    }

    #[test]
    fn transform_gradcheck() {
        let mut r = rng(21);
        let m = random(&mut r, &[1, 5], 1.0);
        let w = random(&mut r, &[5, 3], 1.0);
        let b = random(&mut r, &[1, 3], 1.0);
        let probe_w = random(&mut r, &[1, 3], 1.0);
        let tr = ModalityTransform { w: w.clone(), b: b.clone() };
        let (_, pre) = transform_modality(&m, &tr, 0.2).unwrap();
        let mut grad = ModalityTransform { w: Tensor::zeros(&[5, 3]), b: Tensor::zeros(&[1, 3]) };
        transform_modality_backward(&m, &pre, &probe_w, 0.2, &mut grad).unwrap();
        let mut theta = vec![w, b];
        let rep = gradcheck(&mut theta, &vec![grad.w, grad.b], 1e-4, |p| {
            let tr = ModalityTransform { w: p[0].clone(), b: p[1].clone() };
            Ok(probe(&transform_modality(&m, &tr, 0.2)?.0, &probe_w))
        })
        .unwrap();
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    #[test]
    fn fuse_examples() {
        let h = t(&[&[1.0, 2.0]]);
        assert_eq!(fuse_concat(&h, &[]).unwrap(), h);
        let fused = fuse_concat(&h, &[t(&[&[3.0]]), t(&[&[4.0]])]).unwrap();
        assert_eq!(fused.data(), &[1.0, 2.0, 3.0, 4.0]);
        let swapped = fuse_concat(&h, &[t(&[&[4.0]]), t(&[&[3.0]])]).unwrap();
        assert_eq!(swapped.data(), &[1.0, 2.0, 4.0, 3.0]);
    }

    #[test]
    fn classify_examples() {
        let head = ClassifierHead { w: Tensor::zeros(&[3, 2]), b: Tensor::zeros(&[1, 2]) };
        let p = classify(&t(&[&[1.0, -2.0, 5.0]]), &head).unwrap();
        assert_eq!(p.data(), &[0.5, 0.5]);
        assert_eq!(predicted_label(&p), 0);

        let head = ClassifierHead { w: Tensor::zeros(&[1, 2]), b: t(&[&[2f64.ln(), 0.0]]) };
        let p = classify(&t(&[&[0.0]]), &head).unwrap();
        assert_abs_diff_eq!(p.data()[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(predicted_label(&p), 0);
    }

    #[test]
    fn head_gradcheck() {
        let mut r = rng(22);
        let h = random(&mut r, &[1, 4], 1.0);
        let w = random(&mut r, &[4, 3], 1.0);
        let b = random(&mut r, &[1, 3], 1.0);
        let head = ClassifierHead { w: w.clone(), b: b.clone() };
        let probs = classify(&h, &head).unwrap();
        let mut grad = ClassifierHead { w: Tensor::zeros(&[4, 3]), b: Tensor::zeros(&[1, 3]) };
        let dh = classify_backward(&h, &probs, 2, 1.0, 1e-12, &head, &mut grad).unwrap();
        let mut theta = vec![h, w, b];
        let rep = gradcheck(&mut theta, &vec![dh, grad.w, grad.b], 1e-4, |p| {
            let head = ClassifierHead { w: p[1].clone(), b: p[2].clone() };
            Ok(-classify(&p[0], &head)?.data()[2].ln())
        })
        .unwrap();
        assert!(rep.max_rel_error < 1e-4, "{rep:?}");
    }

    proptest! {
        #[test]
        fn probabilities_sum_to_one_and_are_shift_invariant(
            logits in proptest::collection::vec(-20.0f64..20.0, 2..6), c in -10.0f64..10.0) {
            let k = logits.len();
            let h = Tensor::<f64>::zeros(&[1, 1]);
            let head = ClassifierHead { w: Tensor::zeros(&[1, k]), b: Tensor::from_vec(&[1, k], logits.clone()).unwrap() };
            let shifted = ClassifierHead {
                w: Tensor::zeros(&[1, k]),
                b: Tensor::from_vec(&[1, k], logits.iter().map(|l| l + c).collect()).unwrap(),
            };
            let p = classify(&h, &head).unwrap();
            let q = classify(&h, &shifted).unwrap();
            prop_assert!((p.data().iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(p.max_abs_diff(&q).unwrap() < 1e-6);
        }

        #[test]
        fn fused_width_is_sum(d_doc in 1usize..5, widths in proptest::collection::vec(1usize..5, 0..4)) {
            let mods: Vec<Tensor<f64>> = widths.iter().map(|&w| Tensor::zeros(&[1, w])).collect();
            let fused = fuse_concat(&Tensor::zeros(&[1, d_doc]), &mods).unwrap();
            prop_assert_eq!(fused.cols(), d_doc + widths.iter().sum::<usize>());
        }
    }
}
