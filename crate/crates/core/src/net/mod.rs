//! Feature extractor, evidential generation head and the trainer.
//!
//! The backbone is a small ReLU MLP that maps an input vector to a
//! `C`-channel feature vector. The evidential head is a single affine layer
//! followed by ReLU producing `2K` evidence values laid out as
//! `[e1+, e1-, e2+, e2-, ...]`. An optional linear logit head stands in for
//! a conventional multi-label classifier and backs the baseline OOD scorers.

mod checkpoint;
mod train;

use rand::Rng;

use crate::error::{Error, Result};
use crate::opinion::EvidencePair;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use train::{
    freeze_and_finetune, train, train_classifier, train_two_phase, EpochRecord, Example,
    Gradients, Objective, Stage, TrainConfig, TrainOutcome, loss_and_gradients, objective_loss,
};

/// Channel-major `C x H x W` feature map.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::invalid("feature map dimensions must be at least 1"));
        }
        if data.len() != channels * height * width {
            return Err(Error::invalid(format!(
                "feature map {channels}x{height}x{width} needs {} values, got {}",
                channels * height * width,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("feature map contains non-finite values"));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }
}

pub fn global_average_pool(f: &FeatureMap) -> Vec<f64> {
    let area = f.height * f.width;
    f.data
        .chunks_exact(area)
        .map(|c| c.iter().sum::<f64>() / area as f64)
        .collect()
}

fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Fully connected layer, weights stored `out x in` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform in `[-1/sqrt(in), 1/sqrt(in)]` for weights and bias.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim);
        for w in layer.weights.iter_mut().chain(layer.bias.iter_mut()) {
            *w = rng.random_range(-bound..=bound);
        }
        layer
    }

    /// Pre-activation `W x + b`.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weights
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + b)
            .collect()
    }
}

/// Dense layers with ReLU after each one.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("backbone needs at least one layer"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::invalid(format!(
                    "layer widths disagree: {} -> {}",
                    pair[0].out_dim, pair[1].in_dim
                )));
            }
        }
        Ok(Self { layers })
    }

    pub fn init<R: Rng>(input_dim: usize, widths: &[usize], rng: &mut R) -> Result<Self> {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input_dim;
        for &w in widths {
            layers.push(Dense::init(fan_in, w, rng));
            fan_in = w;
        }
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn extract_features(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::invalid(format!(
                "input has {} features, backbone expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        Ok(self.trace(x).pop().unwrap_or_default())
    }

    /// Activations of every layer, input first.
    pub(crate) fn trace(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for layer in &self.layers {
            let mut z = layer.affine(acts.last().unwrap());
            z.iter_mut().for_each(|v| *v = relu(*v));
            acts.push(z);
        }
        acts
    }
}

/// Evidential generation head: `e = relu(w^T f + b)` with `w` of shape `C x 2K`.
#[derive(Debug, Clone, PartialEq)]
pub struct EgmParams {
    pub channels: usize,
    pub classes: usize,
    /// Row-major `C x 2K`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl EgmParams {
    pub fn zeros(channels: usize, classes: usize) -> Self {
        Self {
            channels,
            classes,
            weights: vec![0.0; channels * 2 * classes],
            bias: vec![0.0; 2 * classes],
        }
    }

    pub fn init<R: Rng>(channels: usize, classes: usize, rng: &mut R) -> Self {
        let bound = 1.0 / (channels as f64).sqrt();
        let mut head = Self::zeros(channels, classes);
        for w in head.weights.iter_mut().chain(head.bias.iter_mut()) {
            *w = rng.random_range(-bound..=bound);
        }
        head
    }

    /// Evidence head that starts from a trained logit layer: the positive
    /// output of head `k` reproduces logit `k` and the negative output its
    /// negation, so `e+ - e-` equals the logit wherever either side fires.
    pub fn from_logit_head(head: &Dense) -> Self {
        let (channels, classes) = (head.in_dim, head.out_dim);
        let mut egm = Self::zeros(channels, classes);
        for k in 0..classes {
            for c in 0..channels {
                let w = head.weights[k * channels + c];
                egm.weights[c * 2 * classes + 2 * k] = w;
                egm.weights[c * 2 * classes + 2 * k + 1] = -w;
            }
            egm.bias[2 * k] = head.bias[k];
            egm.bias[2 * k + 1] = -head.bias[k];
        }
        egm
    }

    /// Pre-activation of the 2K outputs.
    pub(crate) fn affine(&self, f: &[f64]) -> Vec<f64> {
        let width = 2 * self.classes;
        let mut z = self.bias.clone();
        for (row, &fc) in self.weights.chunks_exact(width).zip(f) {
            for (zj, w) in z.iter_mut().zip(row) {
                *zj += w * fc;
            }
        }
        z
    }

    pub fn forward(&self, f_star: &[f64]) -> Result<Vec<EvidencePair>> {
        if f_star.len() != self.channels {
            return Err(Error::invalid(format!(
                "feature vector has {} channels, head expects {}",
                f_star.len(),
                self.channels
            )));
        }
        self.affine(f_star)
            .chunks_exact(2)
            .map(|z| EvidencePair::new(relu(z[0]), relu(z[1])))
            .collect()
    }
}

pub fn egm_forward(f_star: &[f64], params: &EgmParams) -> Result<Vec<EvidencePair>> {
    params.forward(f_star)
}

/// Layer widths of the backbone and the number of heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelShape {
    pub input_dim: usize,
    /// Hidden widths followed by the feature width `C`.
    pub widths: Vec<usize>,
    pub classes: usize,
}

impl ModelShape {
    pub fn new(input_dim: usize, widths: Vec<usize>, classes: usize) -> Result<Self> {
        if input_dim == 0 || classes == 0 || widths.is_empty() || widths.contains(&0) {
            return Err(Error::config(format!(
                "invalid model shape: D={input_dim}, widths={widths:?}, K={classes}"
            )));
        }
        Ok(Self {
            input_dim,
            widths,
            classes,
        })
    }

    /// `D -> 64 -> 64 -> 32`.
    pub fn desk(input_dim: usize, classes: usize) -> Self {
        Self {
            input_dim,
            widths: vec![64, 64, 32],
            classes,
        }
    }

    pub fn feature_dim(&self) -> usize {
        *self.widths.last().expect("validated non-empty")
    }
}

/// Backbone, evidential head and optional logit head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub backbone: Mlp,
    pub egm: EgmParams,
    pub classifier: Option<Dense>,
}

impl Model {
    pub fn new(backbone: Mlp, egm: EgmParams, classifier: Option<Dense>) -> Result<Self> {
        let c = backbone.output_dim();
        if egm.channels != c || egm.weights.len() != c * 2 * egm.classes {
            return Err(Error::invalid(format!(
                "evidential head expects {} channels, backbone produces {c}",
                egm.channels
            )));
        }
        if let Some(m) = &classifier {
            if m.in_dim != c || m.out_dim != egm.classes {
                return Err(Error::invalid(format!(
                    "logit head is {}x{}, expected {}x{c}",
                    m.out_dim, m.in_dim, egm.classes
                )));
            }
        }
        Ok(Self {
            backbone,
            egm,
            classifier,
        })
    }

    pub fn init<R: Rng>(shape: &ModelShape, rng: &mut R) -> Result<Self> {
        let backbone = Mlp::init(shape.input_dim, &shape.widths, rng)?;
        let egm = EgmParams::init(shape.feature_dim(), shape.classes, rng);
        Self::new(backbone, egm, None)
    }

    pub fn shape(&self) -> ModelShape {
        ModelShape {
            input_dim: self.backbone.input_dim(),
            widths: self.backbone.layers.iter().map(|l| l.out_dim).collect(),
            classes: self.egm.classes,
        }
    }

    pub fn classes(&self) -> usize {
        self.egm.classes
    }

    pub fn evidence(&self, x: &[f64]) -> Result<Vec<EvidencePair>> {
        let f = self.backbone.extract_features(x)?;
        self.egm.forward(&f)
    }

    /// Pools an image-shaped feature map before the evidential head.
    pub fn evidence_from_map(&self, f: &FeatureMap) -> Result<Vec<EvidencePair>> {
        self.egm.forward(&global_average_pool(f))
    }

    pub fn logits(&self, x: &[f64]) -> Result<Option<Vec<f64>>> {
        match &self.classifier {
            None => Ok(None),
            Some(m) => Ok(Some(m.affine(&self.backbone.extract_features(x)?))),
        }
    }

    /// Parameter blocks in a fixed order: backbone (weights, bias) per
    /// layer, evidential head, then the logit head if present.
    pub fn param_blocks(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for l in &self.backbone.layers {
            out.push(&l.weights);
            out.push(&l.bias);
        }
        out.push(&self.egm.weights);
        out.push(&self.egm.bias);
        if let Some(m) = &self.classifier {
            out.push(&m.weights);
            out.push(&m.bias);
        }
        out
    }

    pub fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in &mut self.backbone.layers {
            out.push(&mut l.weights);
            out.push(&mut l.bias);
        }
        out.push(&mut self.egm.weights);
        out.push(&mut self.egm.bias);
        if let Some(m) = &mut self.classifier {
            out.push(&mut m.weights);
            out.push(&mut m.bias);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert_eq, proptest};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pooling() {
        let f = FeatureMap::new(2, 2, 2, vec![3.0; 4].into_iter().chain([1.0, 2.0, 3.0, 4.0]).collect())
            .unwrap();
        assert_eq!(global_average_pool(&f), vec![3.0, 2.5]);
        let f = FeatureMap::new(3, 1, 1, vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(global_average_pool(&f), vec![1.0, -2.0, 0.5]);
        assert!(FeatureMap::new(1, 2, 2, vec![0.0; 3]).is_err());
        assert!(FeatureMap::new(0, 2, 2, vec![]).is_err());
        assert!(FeatureMap::new(1, 1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn zero_backbone_gives_zero_features() {
        let mlp = Mlp::new(vec![Dense::zeros(3, 4), Dense::zeros(4, 2)]).unwrap();
        assert_eq!(mlp.extract_features(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        assert!(mlp.extract_features(&[1.0]).is_err());
        assert!(Mlp::new(vec![Dense::zeros(3, 4), Dense::zeros(3, 2)]).is_err());
    }

    #[test]
    fn identity_layer_applies_relu() {
        let mut layer = Dense::zeros(3, 3);
        for i in 0..3 {
            layer.weights[i * 3 + i] = 1.0;
        }
        let mlp = Mlp::new(vec![layer]).unwrap();
        assert_eq!(mlp.extract_features(&[1.5, -2.0, 0.0]).unwrap(), vec![1.5, 0.0, 0.0]);
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let shape = ModelShape::desk(8, 3);
        let a = Model::init(&shape, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = Model::init(&shape, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let x = [0.3, -1.0, 2.0, 0.0, 0.1, 0.9, -0.4, 1.2];
        let fa = a.backbone.extract_features(&x).unwrap();
        let fb = b.backbone.extract_features(&x).unwrap();
        assert_eq!(
            fa.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            fb.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let l = Dense::init(16, 8, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(l.weights.iter().chain(&l.bias).all(|w| w.abs() <= 0.25));
    }

    #[test]
    fn egm_zero_params_is_vacuous() {
        use crate::opinion::{opinion_from_evidence, BaseRatePair, EvidenceWeight};
        let head = EgmParams::zeros(4, 3);
        let e = egm_forward(&[1.0, 2.0, 3.0, 4.0], &head).unwrap();
        assert_eq!(e.len(), 3);
        for pair in e {
            let o = opinion_from_evidence(pair, BaseRatePair::uniform(), EvidenceWeight::default());
            assert_eq!(o.u, 1.0);
        }
    }

    #[test]
    fn egm_bias_only() {
        let mut head = EgmParams::zeros(2, 2);
        head.bias = vec![3.0, 1.0, -1.0, 0.5];
        let e = head.forward(&[7.0, -7.0]).unwrap();
        assert_eq!((e[0].pos(), e[0].neg()), (3.0, 1.0));
        assert_eq!((e[1].pos(), e[1].neg()), (0.0, 0.5));
        assert!(head.forward(&[1.0]).is_err());
    }

    #[test]
    fn egm_layout_is_channel_major() {
        let mut head = EgmParams::zeros(2, 1);
        // w[c][j]: channel 1 feeds e1- only
        head.weights = vec![1.0, 0.0, 0.0, 2.0];
        let e = head.forward(&[3.0, 5.0]).unwrap();
        assert_eq!((e[0].pos(), e[0].neg()), (3.0, 10.0));
    }

    #[test]
    fn evidence_is_nonnegative_over_random_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10_000 {
            let head = EgmParams::init(4, 2, &mut rng);
            let f: Vec<f64> = (0..4).map(|_| rng.random_range(-10.0..10.0)).collect();
            for e in head.forward(&f).unwrap() {
                assert!(e.pos() >= 0.0 && e.neg() >= 0.0);
            }
        }
    }

    #[test]
    fn model_checks_dimensions() {
        let mlp = Mlp::new(vec![Dense::zeros(3, 4)]).unwrap();
        assert!(Model::new(mlp.clone(), EgmParams::zeros(5, 2), None).is_err());
        assert!(Model::new(mlp.clone(), EgmParams::zeros(4, 2), Some(Dense::zeros(4, 3))).is_err());
        assert!(Model::new(mlp, EgmParams::zeros(4, 2), Some(Dense::zeros(4, 2))).is_ok());
        assert!(ModelShape::new(0, vec![4], 2).is_err());
        assert!(ModelShape::new(3, vec![], 2).is_err());
    }

    #[test]
    fn head_from_logits_splits_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits = Dense::init(5, 3, &mut rng);
        let egm = EgmParams::from_logit_head(&logits);
        for _ in 0..200 {
            let f: Vec<f64> = (0..5).map(|_| rng.random_range(0.0..4.0)).collect();
            let z = logits.affine(&f);
            for (e, z) in egm.forward(&f).unwrap().iter().zip(z) {
                assert!((e.pos() - e.neg() - z).abs() < 1e-12);
                assert!(e.pos() == 0.0 || e.neg() == 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn map_path_matches_vector_path(seed: u64, xs in prop::collection::vec(-3.0f64..3.0, 6)) {
            let model = Model::init(&ModelShape::new(6, vec![5, 4], 2).unwrap(),
                &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let f = model.backbone.extract_features(&xs).unwrap();
            let map = FeatureMap::new(4, 1, 1, f).unwrap();
            prop_assert_eq!(model.evidence(&xs).unwrap(), model.evidence_from_map(&map).unwrap());
        }
    }
}
