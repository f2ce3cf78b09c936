use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{bce_term, sigmoid, ClassWeights};
use crate::weights::TensorBundle;
use crate::{Error, Result, Tensor};

/// Gated dual-branch head. Weight matrices are stored `[out, in]`.
#[derive(Debug, Clone)]
pub struct FusionHead {
    pub w_a: Tensor,
    pub b_a: Tensor,
    pub w_b: Tensor,
    pub b_b: Tensor,
    pub w_g: Tensor,
    pub b_g: Tensor,
    pub w: Tensor,
    pub b: Tensor,
}

/// Fused representation and gate activations for one input pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub fused: Vec<f64>,
    pub gate: Vec<f64>,
}

pub(crate) struct Activations {
    pub p_a: Vec<f64>,
    pub p_b: Vec<f64>,
    pub gate: Vec<f64>,
    pub fused: Vec<f64>,
}

fn affine(w: &Tensor, b: &Tensor, x: &[f64], out: &mut [f64]) {
    let cols = w.cols();
    for (i, o) in out.iter_mut().enumerate() {
        let row = w.row(i);
        let mut acc = b.data()[i] as f64;
        for t in 0..cols {
            acc += row[t] as f64 * x[t];
        }
        *o = acc;
    }
}

fn uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = 1.0 / (cols as f64).sqrt();
    Tensor::from_fn(&[rows, cols], |_| rng.random_range(-bound..bound) as f32)
}

const NAMES: [&str; 8] = [
    "head.a.w", "head.a.b", "head.b.w", "head.b.b", "head.gate.w", "head.gate.b", "head.cls.w",
    "head.cls.b",
];

impl FusionHead {
    /// Uniform ±1/√fan_in weights, zero biases.
    pub fn init(d_a: usize, d_b: usize, d_f: usize, seed: u64) -> Result<Self> {
        if d_a == 0 || d_b == 0 || d_f == 0 {
            return Err(Error::invalid("fusion head dimensions must be ≥ 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            w_a: uniform(&mut rng, d_f, d_a),
            b_a: Tensor::zeros(&[d_f]),
            w_b: uniform(&mut rng, d_f, d_b),
            b_b: Tensor::zeros(&[d_f]),
            w_g: uniform(&mut rng, d_f, d_a + d_b),
            b_g: Tensor::zeros(&[d_f]),
            w: uniform(&mut rng, 1, d_f).reshape(vec![d_f])?,
            b: Tensor::scalar(0.0),
        })
    }

    pub fn zeros(d_a: usize, d_b: usize, d_f: usize) -> Self {
        Self {
            w_a: Tensor::zeros(&[d_f, d_a]),
            b_a: Tensor::zeros(&[d_f]),
            w_b: Tensor::zeros(&[d_f, d_b]),
            b_b: Tensor::zeros(&[d_f]),
            w_g: Tensor::zeros(&[d_f, d_a + d_b]),
            b_g: Tensor::zeros(&[d_f]),
            w: Tensor::zeros(&[d_f]),
            b: Tensor::scalar(0.0),
        }
    }

    pub fn d_a(&self) -> usize {
        self.w_a.cols()
    }

    pub fn d_b(&self) -> usize {
        self.w_b.cols()
    }

    pub fn d_f(&self) -> usize {
        self.w_a.rows()
    }

    fn check_inputs(&self, h_a: &[f32], h_b: &[f32]) -> Result<()> {
        if h_a.len() != self.d_a() || h_b.len() != self.d_b() {
            return Err(Error::Shape {
                op: "fuse_forward",
                left: vec![self.d_a(), self.d_b()],
                right: vec![h_a.len(), h_b.len()],
            });
        }
        Ok(())
    }

    pub(crate) fn activations(&self, h_a: &[f32], h_b: &[f32]) -> Activations {
        let d_f = self.d_f();
        let x_a: Vec<f64> = h_a.iter().map(|&v| v as f64).collect();
        let x_b: Vec<f64> = h_b.iter().map(|&v| v as f64).collect();
        let x_ab: Vec<f64> = x_a.iter().chain(&x_b).copied().collect();
        let mut p_a = vec![0.0; d_f];
        let mut p_b = vec![0.0; d_f];
        let mut gate = vec![0.0; d_f];
        affine(&self.w_a, &self.b_a, &x_a, &mut p_a);
        affine(&self.w_b, &self.b_b, &x_b, &mut p_b);
        affine(&self.w_g, &self.b_g, &x_ab, &mut gate);
        for g in &mut gate {
            *g = sigmoid(*g);
        }
        let fused = (0..d_f).map(|i| gate[i] * p_a[i] + (1.0 - gate[i]) * p_b[i]).collect();
        Activations { p_a, p_b, gate, fused }
    }

    pub fn fuse_forward(&self, h_a: &[f32], h_b: &[f32]) -> Result<FusionOutput> {
        self.check_inputs(h_a, h_b)?;
        let act = self.activations(h_a, h_b);
        Ok(FusionOutput { fused: act.fused, gate: act.gate })
    }

    pub fn classify_logit(&self, fused: &[f64]) -> Result<f64> {
        if fused.len() != self.d_f() {
            return Err(Error::Shape {
                op: "classify_logit",
                left: vec![self.d_f()],
                right: vec![fused.len()],
            });
        }
        Ok(self.logit_of(fused))
    }

    fn logit_of(&self, fused: &[f64]) -> f64 {
        let w = self.w.data();
        self.b.data()[0] as f64 + fused.iter().zip(w).map(|(f, &w)| f * w as f64).sum::<f64>()
    }

    /// `classify_logit ∘ fuse_forward`.
    pub fn logit(&self, h_a: &[f32], h_b: &[f32]) -> Result<f64> {
        self.check_inputs(h_a, h_b)?;
        Ok(self.logit_of(&self.activations(h_a, h_b).fused))
    }

    /// Mean class-balanced loss over the batch and its gradient with respect
    /// to every parameter, in [`FusionHead::params`] order.
    pub fn head_gradients(
        &self,
        batch: &[(&[f32], &[f32])],
        labels: &[u8],
        cw: ClassWeights,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        if batch.is_empty() || batch.len() != labels.len() {
            return Err(Error::invalid("head_gradients needs a non-empty labeled batch"));
        }
        let (d_a, d_b, d_f) = (self.d_a(), self.d_b(), self.d_f());
        let mut g: Vec<Vec<f64>> = self.params().iter().map(|t| vec![0.0; t.len()]).collect();
        let n = batch.len() as f64;
        let mut loss = 0.0;
        let w = self.w.data();
        for (&(h_a, h_b), &y) in batch.iter().zip(labels) {
            self.check_inputs(h_a, h_b)?;
            let act = self.activations(h_a, h_b);
            let z = self.logit_of(&act.fused);
            let (l, dl) = bce_term(z, y, cw.weight(y));
            loss += l / n;
            let dz = dl / n;
            for i in 0..d_f {
                g[6][i] += dz * act.fused[i];
                let df = dz * w[i] as f64;
                let gi = act.gate[i];
                let dp_a = df * gi;
                let dp_b = df * (1.0 - gi);
                let ds = df * (act.p_a[i] - act.p_b[i]) * gi * (1.0 - gi);
                for t in 0..d_a {
                    let x = h_a[t] as f64;
                    g[0][i * d_a + t] += dp_a * x;
                    g[4][i * (d_a + d_b) + t] += ds * x;
                }
                for t in 0..d_b {
                    let x = h_b[t] as f64;
                    g[2][i * d_b + t] += dp_b * x;
                    g[4][i * (d_a + d_b) + d_a + t] += ds * x;
                }
                g[1][i] += dp_a;
                g[3][i] += dp_b;
                g[5][i] += ds;
            }
            g[7][0] += dz;
        }
        Ok((loss, g))
    }

    pub fn params(&self) -> [&Tensor; 8] {
        [&self.w_a, &self.b_a, &self.w_b, &self.b_b, &self.w_g, &self.b_g, &self.w, &self.b]
    }

    pub fn params_mut(&mut self) -> [&mut Tensor; 8] {
        [
            &mut self.w_a,
            &mut self.b_a,
            &mut self.w_b,
            &mut self.b_b,
            &mut self.w_g,
            &mut self.b_g,
            &mut self.w,
            &mut self.b,
        ]
    }

    /// Parameters under their `head.*` names plus dimension metadata.
    pub fn to_bundle(&self) -> Result<TensorBundle> {
        let mut b = TensorBundle::new();
        for (name, t) in NAMES.iter().zip(self.params()) {
            b.insert(*name, t.clone())?;
        }
        b.set_meta("kind", "fusion-head");
        b.set_meta("d_A", self.d_a());
        b.set_meta("d_B", self.d_b());
        b.set_meta("d_f", self.d_f());
        Ok(b)
    }

    pub fn from_bundle(b: &TensorBundle) -> Result<Self> {
        let d_a: usize = b.meta_parse("d_A")?;
        let d_b: usize = b.meta_parse("d_B")?;
        let d_f: usize = b.meta_parse("d_f")?;
        let shapes: [Vec<usize>; 8] = [
            vec![d_f, d_a],
            vec![d_f],
            vec![d_f, d_b],
            vec![d_f],
            vec![d_f, d_a + d_b],
            vec![d_f],
            vec![d_f],
            vec![1],
        ];
        let mut ts = Vec::with_capacity(8);
        for (name, shape) in NAMES.iter().zip(&shapes) {
            ts.push(b.expect(name, shape)?.clone());
        }
        let mut it = ts.into_iter();
        let mut next = || it.next().expect("eight tensors");
        Ok(Self {
            w_a: next(),
            b_a: next(),
            w_b: next(),
            b_b: next(),
            w_g: next(),
            b_g: next(),
            w: next(),
            b: next(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f32> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn saturated_gate_passes_branch_a() {
        let mut h = FusionHead::init(3, 4, 5, 1).unwrap();
        h.w_g = Tensor::zeros(&[5, 7]);
        h.b_g = Tensor::full(&[5], 30.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b) = (rand_vec(&mut rng, 3), rand_vec(&mut rng, 4));
        let out = h.fuse_forward(&a, &b).unwrap();
        for i in 0..5 {
            let pa: f64 = h.w_a.row(i).iter().zip(&a).map(|(&w, &x)| w as f64 * x as f64).sum();
            assert!((out.fused[i] - pa).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_gate_averages_branches() {
        let mut h = FusionHead::init(2, 2, 3, 4).unwrap();
        h.w_g = Tensor::zeros(&[3, 4]);
        let out = h.fuse_forward(&[1.0, -2.0], &[0.5, 3.0]).unwrap();
        let act = h.activations(&[1.0, -2.0], &[0.5, 3.0]);
        for i in 0..3 {
            assert_eq!(out.gate[i], 0.5);
            assert_eq!(out.fused[i], 0.5 * act.p_a[i] + 0.5 * act.p_b[i]);
        }
    }

    #[test]
    fn logit_cases() {
        let mut h = FusionHead::zeros(2, 2, 3);
        h.b = Tensor::scalar(0.25);
        assert_eq!(h.classify_logit(&[9.0, -1.0, 4.0]).unwrap(), 0.25);
        h.w = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert_eq!(h.classify_logit(&[0.0, 1.0, 0.0]).unwrap(), 2.25);
        assert!(h.classify_logit(&[1.0]).is_err());
        assert!(h.fuse_forward(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn symmetric_batch_zero_bias_gradient() {
        let h = FusionHead::zeros(2, 2, 3);
        let (a, b) = ([0.3f32, 0.1], [0.2f32, -0.4]);
        let batch = [(&a[..], &b[..]), (&a[..], &b[..])];
        let (loss, g) = h.head_gradients(&batch, &[0, 1], ClassWeights::UNIT).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g[7][0], 0.0);
    }

    #[test]
    fn gradients_scale_with_class_weights() {
        let h = FusionHead::init(3, 2, 4, 9).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<(Vec<f32>, Vec<f32>)> =
            (0..4).map(|_| (rand_vec(&mut rng, 3), rand_vec(&mut rng, 2))).collect();
        let batch: Vec<(&[f32], &[f32])> = xs.iter().map(|(a, b)| (&a[..], &b[..])).collect();
        let y = [0, 1, 1, 0];
        let cw = ClassWeights { w0: 0.7, w1: 1.9 };
        let (_, g1) = h.head_gradients(&batch, &y, cw).unwrap();
        let (_, g4) = h.head_gradients(&batch, &y, cw.scaled(4.0)).unwrap();
        for (p, q) in g1.iter().flatten().zip(g4.iter().flatten()) {
            assert_eq!(p * 4.0, *q);
        }
    }

    #[test]
    fn bundle_round_trip() {
        let h = FusionHead::init(3, 5, 4, 11).unwrap();
        let back = FusionHead::from_bundle(&h.to_bundle().unwrap()).unwrap();
        for (p, q) in h.params().iter().zip(back.params()) {
            assert!(p.bit_eq(q));
        }
    }
}
