use num_traits::Float;

use super::Tensor;
use crate::{Error, Result};

/// `c = a · b` for 2-D tensors.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::Shape {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut c = Tensor::zeros(&[m, n]);
    matmul_into(a.data(), b.data(), c.data_mut(), m, k, n);
    Ok(c)
}

/// Accumulates `a[m×k] · b[k×n]` into `c[m×n]`.
///
/// i-k-j order: the inner loop is a contiguous axpy over a row of `b`, and
/// every output row only depends on its own input row, so results do not
/// change with how many rows are batched together.
pub fn matmul_into(a: &[f32], b: &[f32], c: &mut [f32], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for (arow, crow) in a.chunks_exact(k).zip(c.chunks_exact_mut(n)) {
        for (&av, brow) in arow.iter().zip(b.chunks_exact(n)) {
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += av * bv;
            }
        }
    }
}

/// In-place softmax of one row, max-subtracted. NaN anywhere in the row
/// yields an all-NaN row.
pub fn softmax_row<T: Float>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}

/// Softmax over the last axis.
pub fn softmax(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = out.cols();
    for row in out.data_mut().chunks_exact_mut(cols) {
        softmax_row(row);
    }
    out
}

/// Normalizes `row` into `out` with population variance, then applies the
/// affine `gamma`/`beta`. Reductions run in f64.
pub fn layer_norm_row(row: &[f32], gamma: &[f32], beta: &[f32], eps: f32, out: &mut [f32]) {
    let d = row.len() as f64;
    let mean = row.iter().map(|&v| v as f64).sum::<f64>() / d;
    let var = row
        .iter()
        .map(|&v| {
            let c = v as f64 - mean;
            c * c
        })
        .sum::<f64>()
        / d;
    let inv = 1.0 / (var + eps as f64).sqrt();
    for (((o, &v), &g), &b) in out.iter_mut().zip(row).zip(gamma).zip(beta) {
        *o = (((v as f64 - mean) * inv) as f32) * g + b;
    }
}

pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    let d = x.cols();
    if gamma.len() != d || beta.len() != d {
        return Err(Error::Shape {
            op: "layer_norm",
            left: x.shape().to_vec(),
            right: gamma.shape().to_vec(),
        });
    }
    let mut out = Tensor::zeros(x.shape());
    for (row, o) in x.data().chunks_exact(d).zip(out.data_mut().chunks_exact_mut(d)) {
        layer_norm_row(row, gamma.data(), beta.data(), eps, o);
    }
    Ok(out)
}

/// Exact-erf GELU: `0.5·x·(1 + erf(x/√2))`.
pub fn gelu_scalar(x: f32) -> f32 {
    let x = x as f64;
    (0.5 * x * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))) as f32
}

pub fn gelu(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    out.data_mut().iter_mut().for_each(|v| *v = gelu_scalar(*v));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f32]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn matmul_identity_and_hand_values() {
        let i = t(&[2, 2], &[1., 0., 0., 1.]);
        let b = t(&[2, 2], &[5., 6., 7., 8.]);
        assert_eq!(matmul(&i, &b).unwrap().data(), &[5., 6., 7., 8.]);

        let a = t(&[1, 2], &[1., 2.]);
        let b = t(&[2, 1], &[3., 4.]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[11.]);
    }

    #[test]
    fn matmul_rejects_inner_mismatch() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        let err = matmul(&a, &b).unwrap_err().to_string();
        assert!(err.contains("[2, 3]"), "{err}");
    }

    #[test]
    fn softmax_basic_cases() {
        let s = softmax(&t(&[3], &[0., 0., 0.]));
        for v in s.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-7);
        }
        let s = softmax(&t(&[2], &[1000., 1000.]));
        assert_eq!(s.data(), &[0.5, 0.5]);
        let s = softmax(&t(&[2], &[f32::NAN, 1.0]));
        assert!(s.data().iter().all(|v| v.is_nan()));
    }

    #[test]
    fn layer_norm_degenerate_rows() {
        let ones = Tensor::full(&[4], 1.0);
        let zeros = Tensor::zeros(&[4]);
        let out = layer_norm(&t(&[1, 4], &[5., 5., 5., 5.]), &ones, &zeros, 1e-5).unwrap();
        assert_eq!(out.data(), &[0.0; 4]);

        let beta = t(&[4], &[0.5, -1.0, 2.0, 3.0]);
        let out = layer_norm(&t(&[1, 4], &[1., 7., -2., 4.]), &zeros, &beta, 1e-5).unwrap();
        assert_eq!(out.data(), beta.data());
    }

    #[test]
    fn gelu_anchor_points() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-6);
        assert!(gelu_scalar(-10.0).abs() < 1e-6);
    }
}
