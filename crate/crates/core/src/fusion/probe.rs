use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{bce_term, ClassWeights};
use crate::weights::TensorBundle;
use crate::{Error, Result, Tensor};

/// Logistic regression on one frozen pooled vector.
#[derive(Debug, Clone)]
pub struct LinearProbe {
    pub w: Tensor,
    pub b: Tensor,
}

impl LinearProbe {
    pub fn init(d: usize, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("probe dimension must be ≥ 1"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bound = 1.0 / (d as f64).sqrt();
        Ok(Self {
            w: Tensor::from_fn(&[d], |_| rng.random_range(-bound..bound) as f32),
            b: Tensor::scalar(0.0),
        })
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn logit(&self, x: &[f32]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                op: "probe",
                left: vec![self.dim()],
                right: vec![x.len()],
            });
        }
        Ok(self.logit_of(x))
    }

    fn logit_of(&self, x: &[f32]) -> f64 {
        self.b.data()[0] as f64
            + self.w.data().iter().zip(x).map(|(&w, &x)| w as f64 * x as f64).sum::<f64>()
    }

    /// Mean class-balanced loss and gradients `[dw, db]`.
    pub fn gradients(&self, batch: &[&[f32]], labels: &[u8], cw: ClassWeights) -> Result<(f64, Vec<Vec<f64>>)> {
        if batch.is_empty() || batch.len() != labels.len() {
            return Err(Error::invalid("probe gradients need a non-empty labeled batch"));
        }
        let n = batch.len() as f64;
        let mut dw = vec![0.0; self.dim()];
        let mut db = 0.0;
        let mut loss = 0.0;
        for (&x, &y) in batch.iter().zip(labels) {
            let z = self.logit(x)?;
            let (l, dl) = bce_term(z, y, cw.weight(y));
            loss += l / n;
            let dz = dl / n;
            for (g, &x) in dw.iter_mut().zip(x) {
                *g += dz * x as f64;
            }
            db += dz;
        }
        Ok((loss, vec![dw, vec![db]]))
    }

    pub fn to_bundle(&self) -> Result<TensorBundle> {
        let mut b = TensorBundle::new();
        b.insert("head.probe.w", self.w.clone())?;
        b.insert("head.probe.b", self.b.clone())?;
        b.set_meta("kind", "linear-probe");
        b.set_meta("d", self.dim());
        Ok(b)
    }

    pub fn from_bundle(b: &TensorBundle) -> Result<Self> {
        let d: usize = b.meta_parse("d")?;
        Ok(Self {
            w: b.expect("head.probe.w", &[d])?.clone(),
            b: b.expect("head.probe.b", &[1])?.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logit_is_affine() {
        let p = LinearProbe { w: Tensor::vector(vec![1.0, -2.0]), b: Tensor::scalar(0.5) };
        assert_eq!(p.logit(&[3.0, 1.0]).unwrap(), 1.5);
        assert!(p.logit(&[1.0]).is_err());
    }

    #[test]
    fn bundle_round_trip() {
        let p = LinearProbe::init(6, 3).unwrap();
        let q = LinearProbe::from_bundle(&p.to_bundle().unwrap()).unwrap();
        assert!(p.w.bit_eq(&q.w) && p.b.bit_eq(&q.b));
    }
}
