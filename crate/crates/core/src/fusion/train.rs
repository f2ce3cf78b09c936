use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::head::FusionHead;
use super::loss::ClassWeights;
use super::probe::LinearProbe;
use crate::corpus::Sample;
use crate::features::{Branch, DualEncoder, PooledPair};
use crate::metrics::{auroc, f1_macro};
use crate::pipeline::{aggregate, Aggregation, ChunkConfig};
use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Optimizer {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd { momentum: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: u32,
    pub batch: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    /// Epochs without a dev AUROC improvement before stopping.
    pub patience: Option<u32>,
    pub fusion_dim: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 20,
            batch: 32,
            seed: 42,
            optimizer: Optimizer::default(),
            patience: Some(5),
            fusion_dim: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate {} must be finite and non-negative", self.lr)));
        }
        if self.epochs == 0 || self.batch == 0 || self.fusion_dim == 0 {
            return Err(Error::invalid("epochs, batch and fusion_dim must be ≥ 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: u32,
    pub train_loss: f64,
    pub dev_auroc: f64,
    pub best_dev_auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub class_weights: ClassWeights,
    pub train_examples: usize,
    pub epochs: Vec<EpochLog>,
    pub best_epoch: u32,
    pub best_dev_auroc: f64,
    pub stopped_early: bool,
}

/// A trainable classifier over per-chunk inputs.
pub trait Head: Clone {
    type Input: Sync;

    fn logit(&self, x: &Self::Input) -> Result<f64>;

    /// Mean loss and gradients, one buffer per tensor of [`Head::params_mut`].
    fn loss_and_grad(&self, batch: &[&Self::Input], labels: &[u8], cw: ClassWeights) -> Result<(f64, Vec<Vec<f64>>)>;

    fn params_mut(&mut self) -> Vec<&mut Tensor>;
}

impl Head for FusionHead {
    type Input = PooledPair;

    fn logit(&self, x: &PooledPair) -> Result<f64> {
        FusionHead::logit(self, &x.a, &x.b)
    }

    fn loss_and_grad(&self, batch: &[&PooledPair], labels: &[u8], cw: ClassWeights) -> Result<(f64, Vec<Vec<f64>>)> {
        let pairs: Vec<(&[f32], &[f32])> = batch.iter().map(|p| (&p.a[..], &p.b[..])).collect();
        self.head_gradients(&pairs, labels, cw)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        FusionHead::params_mut(self).into_iter().collect()
    }
}

impl Head for LinearProbe {
    type Input = Vec<f32>;

    fn logit(&self, x: &Vec<f32>) -> Result<f64> {
        LinearProbe::logit(self, x)
    }

    fn loss_and_grad(&self, batch: &[&Vec<f32>], labels: &[u8], cw: ClassWeights) -> Result<(f64, Vec<Vec<f64>>)> {
        let xs: Vec<&[f32]> = batch.iter().map(|x| &x[..]).collect();
        self.gradients(&xs, labels, cw)
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.w, &mut self.b]
    }
}

/// A document as its chunk inputs plus the document label.
#[derive(Debug, Clone)]
pub struct LabeledDoc<I> {
    pub chunks: Vec<I>,
    pub label: u8,
}

/// Mean-aggregated document logits.
pub fn doc_logits<H: Head>(head: &H, docs: &[LabeledDoc<H::Input>]) -> Result<Vec<f64>> {
    docs.iter()
        .map(|d| {
            let zs = d.chunks.iter().map(|c| head.logit(c)).collect::<Result<Vec<_>>>()?;
            aggregate(&zs, Aggregation::Mean)
        })
        .collect()
}

struct OptState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: i32,
}

impl OptState {
    fn new(grads_like: &[Vec<f64>]) -> Self {
        Self {
            first: grads_like.iter().map(|g| vec![0.0; g.len()]).collect(),
            second: grads_like.iter().map(|g| vec![0.0; g.len()]).collect(),
            step: 0,
        }
    }

    fn apply(&mut self, opt: Optimizer, lr: f64, params: Vec<&mut Tensor>, grads: &[Vec<f64>]) {
        self.step += 1;
        for (k, (p, g)) in params.into_iter().zip(grads).enumerate() {
            let data = p.data_mut();
            for (i, &gi) in g.iter().enumerate() {
                let delta = match opt {
                    Optimizer::Adam { beta1, beta2, eps } => {
                        let m = &mut self.first[k][i];
                        let v = &mut self.second[k][i];
                        *m = beta1 * *m + (1.0 - beta1) * gi;
                        *v = beta2 * *v + (1.0 - beta2) * gi * gi;
                        let m_hat = *m / (1.0 - beta1.powi(self.step));
                        let v_hat = *v / (1.0 - beta2.powi(self.step));
                        lr * m_hat / (v_hat.sqrt() + eps)
                    }
                    Optimizer::Sgd { momentum } => {
                        let m = &mut self.first[k][i];
                        *m = momentum * *m + gi;
                        lr * *m
                    }
                };
                data[i] = (data[i] as f64 - delta) as f32;
            }
        }
    }
}

/// Mini-batch training on chunk-level examples labeled with their document
/// label. After every epoch the dev AUROC of mean-aggregated document logits
/// is measured; the best epoch's parameters are returned (ties keep the
/// earlier epoch).
pub fn fit<H: Head>(
    init: H,
    train: &[LabeledDoc<H::Input>],
    dev: &[LabeledDoc<H::Input>],
    tc: &TrainConfig,
) -> Result<(H, TrainLog)> {
    tc.validate()?;
    if train.is_empty() || dev.is_empty() {
        return Err(Error::invalid("train and dev splits must be non-empty"));
    }
    let examples: Vec<(&H::Input, u8)> =
        train.iter().flat_map(|d| d.chunks.iter().map(move |c| (c, d.label))).collect();
    let labels: Vec<u8> = examples.iter().map(|e| e.1).collect();
    let cw = ClassWeights::from_labels(&labels)?;
    let dev_labels: Vec<u8> = dev.iter().map(|d| d.label).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    rng.set_stream(1);
    let mut head = init;
    let mut best = head.clone();
    let mut best_auroc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut state: Option<OptState> = None;
    let mut log = Vec::new();
    let mut stale = 0;
    let mut stopped_early = false;
    let mut order: Vec<usize> = (0..examples.len()).collect();

    for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(tc.batch) {
            let xs: Vec<&H::Input> = batch.iter().map(|&i| examples[i].0).collect();
            let ys: Vec<u8> = batch.iter().map(|&i| examples[i].1).collect();
            let (loss, grads) = head.loss_and_grad(&xs, &ys, cw)?;
            loss_sum += loss * batch.len() as f64;
            state
                .get_or_insert_with(|| OptState::new(&grads))
                .apply(tc.optimizer, tc.lr, head.params_mut(), &grads);
        }
        let dev_auroc = auroc(&doc_logits(&head, dev)?, &dev_labels)?;
        if dev_auroc > best_auroc {
            best_auroc = dev_auroc;
            best_epoch = epoch;
            best = head.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        log::info!("epoch {epoch}: loss {:.6} dev auroc {dev_auroc:.6}", loss_sum / examples.len() as f64);
        log.push(EpochLog {
            epoch,
            train_loss: loss_sum / examples.len() as f64,
            dev_auroc,
            best_dev_auroc: best_auroc,
        });
        if tc.patience.is_some_and(|p| stale >= p) && epoch < tc.epochs {
            stopped_early = true;
            break;
        }
    }
    Ok((
        best,
        TrainLog {
            class_weights: cw,
            train_examples: examples.len(),
            epochs: log,
            best_epoch,
            best_dev_auroc: best_auroc,
            stopped_early,
        },
    ))
}

fn labeled<I>(features: Vec<Vec<I>>, samples: &[Sample]) -> Vec<LabeledDoc<I>> {
    features
        .into_iter()
        .zip(samples)
        .map(|(chunks, s)| LabeledDoc { chunks, label: s.label })
        .collect()
}

fn texts(samples: &[Sample]) -> Vec<&str> {
    samples.iter().map(|s| s.text.as_str()).collect()
}

/// Trains a fusion head on top of two frozen encoders.
pub fn train_head(
    dual: &DualEncoder,
    cc: &ChunkConfig,
    train: &[Sample],
    dev: &[Sample],
    tc: &TrainConfig,
) -> Result<(FusionHead, TrainLog)> {
    tc.validate()?;
    let tr = labeled(dual.corpus_features(&texts(train), cc)?, train);
    let dv = labeled(dual.corpus_features(&texts(dev), cc)?, dev);
    let init = FusionHead::init(dual.a.dim(), dual.b.dim(), tc.fusion_dim, tc.seed)?;
    fit(init, &tr, &dv, tc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub train_accuracy: f64,
    pub dev_auroc: f64,
    pub dev_f1_macro: f64,
    pub log: TrainLog,
}

fn predictions(logits: &[f64]) -> Vec<u8> {
    logits.iter().map(|&z| (z >= 0.0) as u8).collect()
}

/// Logistic-regression probe over one frozen encoder's pooled vectors.
pub fn linear_probe_fit(
    branch: &Branch,
    cc: &ChunkConfig,
    train: &[Sample],
    dev: &[Sample],
    tc: &TrainConfig,
) -> Result<(LinearProbe, ProbeReport)> {
    tc.validate()?;
    let tr = labeled(branch.corpus_features(&texts(train), cc)?, train);
    let dv = labeled(branch.corpus_features(&texts(dev), cc)?, dev);
    let (probe, log) = fit(LinearProbe::init(branch.dim(), tc.seed)?, &tr, &dv, tc)?;
    let report = probe_report(&probe, &tr, &dv, log)?;
    Ok((probe, report))
}

pub fn probe_report(
    probe: &LinearProbe,
    train: &[LabeledDoc<Vec<f32>>],
    dev: &[LabeledDoc<Vec<f32>>],
    log: TrainLog,
) -> Result<ProbeReport> {
    let tr_labels: Vec<u8> = train.iter().map(|d| d.label).collect();
    let dv_labels: Vec<u8> = dev.iter().map(|d| d.label).collect();
    let tr_pred = predictions(&doc_logits(probe, train)?);
    let dv_logits = doc_logits(probe, dev)?;
    let correct = tr_pred.iter().zip(&tr_labels).filter(|(p, y)| p == y).count();
    Ok(ProbeReport {
        train_accuracy: correct as f64 / train.len() as f64,
        dev_auroc: auroc(&dv_logits, &dv_labels)?,
        dev_f1_macro: f1_macro(&predictions(&dv_logits), &dv_labels)?,
        log,
    })
}
