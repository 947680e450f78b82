use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Dense, EgmParams, Model, ModelShape};
use crate::ebra::{adjust_base_rates, BaseRateSet, CiwTable};
use crate::error::{Error, Result};
use crate::loss::{edl_loss_grad, edl_loss_total, binarize_labels, MultiLabel};
use crate::opinion::{BaseRatePair, EvidencePair, EvidenceWeight, EVIDENCE_CAP};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_decay_ratio: f64,
    pub lr_decay_every: usize,
    pub weight_decay: f64,
    /// Heavy-ball coefficient; 0 gives plain SGD.
    pub momentum: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 64,
            learning_rate: 0.05,
            lr_decay_ratio: 0.1,
            lr_decay_every: 10,
            weight_decay: 1e-4,
            momentum: 0.9,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Settings for the frozen-backbone head fine-tune: 20 epochs at 1e-3.
    pub fn finetune(seed: u64) -> Self {
        Self {
            epochs: 20,
            learning_rate: 1e-3,
            lr_decay_every: 20,
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::config(format!("train config: {what}")));
        if self.batch_size == 0 {
            return bad("batch size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.lr_decay_ratio.is_finite() && self.lr_decay_ratio > 0.0) {
            return bad("decay ratio must be positive");
        }
        if self.lr_decay_every == 0 {
            return bad("decay interval must be positive");
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return bad("weight decay must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay_ratio.powi((epoch / self.lr_decay_every) as i32)
    }
}

/// One training input: features and its multi-hot labels over the K heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: Vec<f64>,
    pub labels: MultiLabel,
}

/// Which head the loss is computed on.
#[derive(Debug, Clone)]
pub enum Objective {
    /// Evidential NLL summed over heads.
    Evidential {
        base: BaseRateSet,
        weight: EvidenceWeight,
    },
    /// Sigmoid cross-entropy on the logit head.
    Classifier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Joint,
    Classifier,
    Finetune,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Joint => "joint",
            Stage::Classifier => "classifier",
            Stage::Finetune => "finetune",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub stage: Stage,
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub base_rates: BaseRateSet,
    pub weight: EvidenceWeight,
    pub log: Vec<EpochRecord>,
}

/// Gradient buffers laid out like [`Model::param_blocks`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub blocks: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros_like(model: &Model) -> Self {
        Self {
            blocks: model.param_blocks().iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }
}

fn check_examples(model: &Model, data: &[Example]) -> Result<()> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    let (d, k) = (model.backbone.input_dim(), model.classes());
    for (i, ex) in data.iter().enumerate() {
        if ex.features.len() != d || ex.labels.len() != k {
            return Err(Error::invalid(format!(
                "example {i} has {} features and {} labels, model expects {d} and {k}",
                ex.features.len(),
                ex.labels.len()
            )));
        }
    }
    Ok(())
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Forward-only mean loss over `data`.
pub fn objective_loss(model: &Model, data: &[Example], objective: &Objective) -> Result<f64> {
    check_examples(model, data)?;
    let mut total = 0.0;
    for ex in data {
        total += match objective {
            Objective::Evidential { base, weight } => {
                edl_loss_total(&model.evidence(&ex.features)?, &ex.labels, base, *weight)?.total
            }
            Objective::Classifier => {
                let logits = model
                    .logits(&ex.features)?
                    .ok_or_else(|| Error::invalid("model has no logit head"))?;
                logits
                    .iter()
                    .zip(ex.labels.bits())
                    .map(|(&z, &y)| softplus(z) - if y { z } else { 0.0 })
                    .sum()
            }
        };
    }
    Ok(total / data.len() as f64)
}

/// Mean loss and its gradient over a batch. The backbone gradient is only
/// computed when `backbone` is set. Returns a NaN loss if any value
/// along the way stops being finite.
pub fn loss_and_gradients<'a, I>(
    model: &Model,
    batch: I,
    objective: &Objective,
    backbone: bool,
) -> (f64, Gradients)
where
    I: IntoIterator<Item = &'a Example>,
{
    let mut grads = Gradients::zeros_like(model);
    let layers = model.backbone.layers.len();
    let head_block = 2 * layers;
    let mut loss = 0.0;
    let mut n = 0usize;

    for ex in batch {
        n += 1;
        let acts = model.backbone.trace(&ex.features);
        let f = acts.last().expect("trace includes the input");
        let c = f.len();
        let mut df = vec![0.0; c];

        match objective {
            Objective::Evidential { base, weight } => {
                let k = model.egm.classes;
                let z = model.egm.affine(f);
                let mut dz = vec![0.0; 2 * k];
                for (head, label) in binarize_labels(&ex.labels).into_iter().enumerate() {
                    let (zp, zn) = (z[2 * head], z[2 * head + 1]);
                    let e = match EvidencePair::new(zp.max(0.0), zn.max(0.0)) {
                        Ok(e) => e,
                        Err(_) => return (f64::NAN, grads),
                    };
                    let a: BaseRatePair = base[head];
                    loss += crate::loss::edl_loss_head(e, label, a, *weight);
                    let (gp, gn) = edl_loss_grad(e, label, a, *weight);
                    // ReLU, and the flat region above the evidence cap.
                    let pass = |z: f64| z > 0.0 && z < EVIDENCE_CAP;
                    dz[2 * head] = if pass(zp) { gp } else { 0.0 };
                    dz[2 * head + 1] = if pass(zn) { gn } else { 0.0 };
                }
                let width = 2 * k;
                let (gw, rest) = grads.blocks[head_block..].split_at_mut(1);
                let gw = &mut gw[0];
                let gb = &mut rest[0];
                for (ci, &fc) in f.iter().enumerate() {
                    let row = &model.egm.weights[ci * width..(ci + 1) * width];
                    let grow = &mut gw[ci * width..(ci + 1) * width];
                    let mut acc = 0.0;
                    for j in 0..width {
                        grow[j] += fc * dz[j];
                        acc += row[j] * dz[j];
                    }
                    df[ci] = acc;
                }
                for (b, d) in gb.iter_mut().zip(&dz) {
                    *b += d;
                }
            }
            Objective::Classifier => {
                let m = model
                    .classifier
                    .as_ref()
                    .expect("classifier objective requires a logit head");
                let z = m.affine(f);
                let block = head_block + 2;
                let mut dz = vec![0.0; z.len()];
                for (kk, (&zk, &y)) in z.iter().zip(ex.labels.bits()).enumerate() {
                    let y = if y { 1.0 } else { 0.0 };
                    loss += softplus(zk) - y * zk;
                    dz[kk] = crate::ebra::sigmoid(zk) - y;
                }
                for (kk, &d) in dz.iter().enumerate() {
                    let row = &m.weights[kk * c..(kk + 1) * c];
                    let grow = &mut grads.blocks[block][kk * c..(kk + 1) * c];
                    for ci in 0..c {
                        grow[ci] += d * f[ci];
                        df[ci] += row[ci] * d;
                    }
                    grads.blocks[block + 1][kk] += d;
                }
            }
        }

        if !backbone {
            continue;
        }
        let mut da = df;
        for l in (0..layers).rev() {
            let layer = &model.backbone.layers[l];
            let (a_in, a_out) = (&acts[l], &acts[l + 1]);
            let dz: Vec<f64> = da
                .iter()
                .zip(a_out)
                .map(|(d, &a)| if a > 0.0 { *d } else { 0.0 })
                .collect();
            let mut da_prev = vec![0.0; layer.in_dim];
            {
                let gw = &mut grads.blocks[2 * l];
                for (o, &d) in dz.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let row = &layer.weights[o * layer.in_dim..(o + 1) * layer.in_dim];
                    let grow = &mut gw[o * layer.in_dim..(o + 1) * layer.in_dim];
                    for i in 0..layer.in_dim {
                        grow[i] += d * a_in[i];
                        da_prev[i] += row[i] * d;
                    }
                }
            }
            for (b, d) in grads.blocks[2 * l + 1].iter_mut().zip(&dz) {
                *b += d;
            }
            da = da_prev;
        }
    }

    if n > 0 {
        let scale = 1.0 / n as f64;
        for g in grads.blocks.iter_mut().flatten() {
            *g *= scale;
        }
        loss *= scale;
    }
    (loss, grads)
}

/// SGD with momentum and decoupled weight decay:
/// `v <- m v + g`, `p <- p (1 - lr wd) - lr v`.
fn sgd_step(
    model: &mut Model,
    grads: &Gradients,
    velocity: &mut Gradients,
    trainable: &[bool],
    lr: f64,
    cfg: &TrainConfig,
) {
    let shrink = 1.0 - lr * cfg.weight_decay;
    let blocks = model.param_blocks_mut().into_iter().zip(&grads.blocks);
    for (((block, grad), vel), &on) in blocks.zip(&mut velocity.blocks).zip(trainable) {
        if !on {
            continue;
        }
        for ((p, g), v) in block.iter_mut().zip(grad).zip(vel.iter_mut()) {
            *v = cfg.momentum * *v + g;
            *p = *p * shrink - lr * *v;
        }
    }
}

fn run_sgd(
    model: &mut Model,
    data: &[Example],
    cfg: &TrainConfig,
    objective: &Objective,
    stage: Stage,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<EpochRecord>> {
    cfg.validate()?;
    check_examples(model, data)?;
    let layers = model.backbone.layers.len();
    let blocks = model.param_blocks().len();
    let trainable: Vec<bool> = (0..blocks)
        .map(|b| match stage {
            Stage::Joint => b < 2 * layers + 2,
            Stage::Classifier => b < 2 * layers || b >= 2 * layers + 2,
            Stage::Finetune => (2 * layers..2 * layers + 2).contains(&b),
        })
        .collect();
    let backbone = stage != Stage::Finetune;

    let mut velocity = Gradients::zeros_like(model);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for (batch_idx, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let (loss, grads) =
                loss_and_gradients(model, chunk.iter().map(|&i| &data[i]), objective, backbone);
            if !loss.is_finite() || grads.blocks.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: batch_idx,
                });
            }
            epoch_loss += loss * chunk.len() as f64;
            sgd_step(model, &grads, &mut velocity, &trainable, lr, cfg);
        }
        log.push(EpochRecord {
            stage,
            epoch,
            learning_rate: lr,
            mean_loss: epoch_loss / data.len() as f64,
        });
    }
    Ok(log)
}

fn ebra_objective(ciw: &CiwTable, classes: usize) -> Result<(BaseRateSet, EvidenceWeight)> {
    if ciw.len() != classes {
        return Err(Error::config(format!(
            "CIW table has {} classes, model has {classes} heads",
            ciw.len()
        )));
    }
    Ok((
        adjust_base_rates(ciw, BaseRatePair::uniform())?,
        EvidenceWeight::default(),
    ))
}

/// Trains backbone and evidential head jointly from a seeded initialization.
pub fn train(
    data: &[Example],
    cfg: &TrainConfig,
    shape: &ModelShape,
    ciw: &CiwTable,
) -> Result<TrainOutcome> {
    let (base, weight) = ebra_objective(ciw, shape.classes)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::init(shape, &mut rng)?;
    let objective = Objective::Evidential {
        base: base.clone(),
        weight,
    };
    let log = run_sgd(&mut model, data, cfg, &objective, Stage::Joint, &mut rng)?;
    Ok(TrainOutcome {
        model,
        base_rates: base,
        weight,
        log,
    })
}

/// Trains backbone and a linear logit head with sigmoid cross-entropy. The
/// evidential head keeps its random initialization.
pub fn train_classifier(
    data: &[Example],
    cfg: &TrainConfig,
    shape: &ModelShape,
) -> Result<(Model, Vec<EpochRecord>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::init(shape, &mut rng)?;
    model.classifier = Some(Dense::init(shape.feature_dim(), shape.classes, &mut rng));
    let log = run_sgd(&mut model, data, cfg, &Objective::Classifier, Stage::Classifier, &mut rng)?;
    Ok((model, log))
}

/// Fine-tunes the evidential head on top of a fixed backbone. The backbone
/// (and any logit head) is left bit-identical.
pub fn freeze_and_finetune(
    model: &Model,
    data: &[Example],
    cfg: &TrainConfig,
    base: &BaseRateSet,
    weight: EvidenceWeight,
) -> Result<(EgmParams, Vec<EpochRecord>)> {
    if base.len() != model.classes() {
        return Err(Error::config(format!(
            "{} base rates for {} heads",
            base.len(),
            model.classes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut work = model.clone();
    let objective = Objective::Evidential {
        base: base.clone(),
        weight,
    };
    let log = run_sgd(&mut work, data, cfg, &objective, Stage::Finetune, &mut rng)?;
    Ok((work.egm, log))
}

/// Classifier pre-training, then an evidential head fine-tuned on the frozen
/// backbone.
///
/// The head starts from the trained logit layer (see
/// [`EgmParams::from_logit_head`]) rather than from random weights: on
/// non-negative ReLU features a random head leaves many evidence outputs
/// negative for every sample, and those never receive a gradient.
pub fn train_two_phase(
    data: &[Example],
    cfg: &TrainConfig,
    finetune: &TrainConfig,
    shape: &ModelShape,
    ciw: &CiwTable,
) -> Result<TrainOutcome> {
    let (base, weight) = ebra_objective(ciw, shape.classes)?;
    let (mut model, mut log) = train_classifier(data, cfg, shape)?;
    let head = model.classifier.as_ref().expect("classifier stage attaches a logit head");
    model.egm = EgmParams::from_logit_head(head);
    let (egm, ft_log) = freeze_and_finetune(&model, data, finetune, &base, weight)?;
    model.egm = egm;
    log.extend(ft_log);
    Ok(TrainOutcome {
        model,
        base_rates: base,
        weight,
        log,
    })
}
