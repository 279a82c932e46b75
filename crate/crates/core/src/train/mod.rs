//! Loss, Adam with per-group rates, the epoch loop and checkpoints.

mod checkpoint;
mod optim;
mod schedule;

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::augment::{augment_pipeline, image_rng, AugmentConfig, Image};
use crate::captioner::{CaptionModel, ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::features::{toy_patch_encode, FeatureSet, Split, SyntheticDataset};
use crate::metrics::{bleu, EvalCorpus, EvalItem};
use crate::scalar::Scalar;
use crate::tensor::{Bound, Graph, ParamStore, Tensor, Var};
use crate::text::{tokenize, EncodedCaption, Vocabulary};

pub use checkpoint::{decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint};
pub use optim::Adam;
pub use schedule::{best_epoch, validate_and_schedule, Action, EpochReport, GroupRate, UnfreezePolicy};

/// Which of an image's captions feed each epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum CaptionPolicy {
    /// Every caption, each as its own sequence.
    All,
    /// Only the first caption.
    First,
    /// One caption per image, drawn afresh every epoch.
    RandomOne,
}

impl fmt::Display for CaptionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaptionPolicy::All => "all",
            CaptionPolicy::First => "first",
            CaptionPolicy::RandomOne => "random_one",
        })
    }
}

impl FromStr for CaptionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(CaptionPolicy::All),
            "first" => Ok(CaptionPolicy::First),
            "random_one" => Ok(CaptionPolicy::RandomOne),
            other => Err(Error::Config(format!(
                "unknown caption policy {other:?} (expected all, first or random_one)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub embedding_lr_scale: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub attention_dim: usize,
    pub layers: usize,
    /// Longest caption, in words, produced during validation.
    pub n_max: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub unfreeze_policy: UnfreezePolicy,
    pub caption_policy: CaptionPolicy,
    pub augment: AugmentConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 1e-3,
            embedding_lr_scale: 0.1,
            batch_size: 32,
            hidden: 512,
            embed_dim: 300,
            attention_dim: 256,
            layers: 3,
            n_max: 16,
            epochs: 20,
            patience: 5,
            seed: 7,
            unfreeze_policy: UnfreezePolicy::OnBreakdown,
            caption_policy: CaptionPolicy::All,
            augment: AugmentConfig::default(),
        }
    }
}

/// Keys accepted by [`TrainConfig::set`], in echo order.
pub const TRAIN_CONFIG_KEYS: [&str; 17] = [
    "base_lr",
    "embedding_lr_scale",
    "batch_size",
    "hidden",
    "embed_dim",
    "attention_dim",
    "layers",
    "n_max",
    "epochs",
    "patience",
    "seed",
    "unfreeze_policy",
    "caption_policy",
    "hflip_prob",
    "vflip_prob",
    "perspective_prob",
    "distortion",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.embedding_lr_scale > 0.0 && self.embedding_lr_scale <= 1.0) {
            return Err(Error::Config(format!(
                "embedding_lr_scale must lie in (0, 1], got {}",
                self.embedding_lr_scale
            )));
        }
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be non-negative, got {}", self.base_lr)));
        }
        for (name, p) in [
            ("hflip_prob", self.augment.hflip_prob),
            ("vflip_prob", self.augment.vflip_prob),
            ("perspective_prob", self.augment.perspective_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(0.0..1.0).contains(&self.augment.distortion) {
            return Err(Error::Config(format!(
                "distortion must lie in [0, 1), got {}",
                self.augment.distortion
            )));
        }
        Ok(())
    }

    /// Sets one option from its textual form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "base_lr" => self.base_lr = parse_value(key, value)?,
            "embedding_lr_scale" => self.embedding_lr_scale = parse_value(key, value)?,
            "batch_size" => self.batch_size = parse_value(key, value)?,
            "hidden" => self.hidden = parse_value(key, value)?,
            "embed_dim" => self.embed_dim = parse_value(key, value)?,
            "attention_dim" => self.attention_dim = parse_value(key, value)?,
            "layers" => self.layers = parse_value(key, value)?,
            "n_max" => self.n_max = parse_value(key, value)?,
            "epochs" => self.epochs = parse_value(key, value)?,
            "patience" => self.patience = parse_value(key, value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "unfreeze_policy" => self.unfreeze_policy = value.trim().parse()?,
            "caption_policy" => self.caption_policy = value.trim().parse()?,
            "hflip_prob" => self.augment.hflip_prob = parse_value(key, value)?,
            "vflip_prob" => self.augment.vflip_prob = parse_value(key, value)?,
            "perspective_prob" => self.augment.perspective_prob = parse_value(key, value)?,
            "distortion" => self.augment.distortion = parse_value(key, value)?,
            other => return Err(Error::Config(format!("unknown training option {other:?}"))),
        }
        Ok(())
    }

    /// Every option as `(key, value)` text.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        TRAIN_CONFIG_KEYS
            .iter()
            .map(|&k| {
                let v = match k {
                    "base_lr" => self.base_lr.to_string(),
                    "embedding_lr_scale" => self.embedding_lr_scale.to_string(),
                    "batch_size" => self.batch_size.to_string(),
                    "hidden" => self.hidden.to_string(),
                    "embed_dim" => self.embed_dim.to_string(),
                    "attention_dim" => self.attention_dim.to_string(),
                    "layers" => self.layers.to_string(),
                    "n_max" => self.n_max.to_string(),
                    "epochs" => self.epochs.to_string(),
                    "patience" => self.patience.to_string(),
                    "seed" => self.seed.to_string(),
                    "unfreeze_policy" => self.unfreeze_policy.to_string(),
                    "caption_policy" => self.caption_policy.to_string(),
                    "hflip_prob" => self.augment.hflip_prob.to_string(),
                    "vflip_prob" => self.augment.vflip_prob.to_string(),
                    "perspective_prob" => self.augment.perspective_prob.to_string(),
                    _ => self.augment.distortion.to_string(),
                };
                (k, v)
            })
            .collect()
    }

    pub fn model_config(&self, variant: Variant, vocab_size: usize, feature_dim: usize) -> ModelConfig {
        ModelConfig {
            variant,
            vocab_size,
            embed_dim: self.embed_dim,
            feature_dim,
            hidden: self.hidden,
            attention_dim: self.attention_dim,
            layers: self.layers,
        }
    }
}

/// One image with its features and encoded captions. Synthetic items keep
/// their image so augmentation can re-render features each epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingItem<S> {
    pub id: String,
    pub features: FeatureSet<S>,
    pub image: Option<Image>,
    pub captions: Vec<EncodedCaption>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingData<S> {
    pub train: Vec<TrainingItem<S>>,
    pub val: Vec<TrainingItem<S>>,
    /// Patch grid used to re-encode augmented images.
    pub grid: usize,
}

/// Tokenizes and encodes raw captions, keeping at most `n_max` words each.
pub fn encode_captions(vocab: &Vocabulary, captions: &[String], n_max: usize) -> Result<Vec<EncodedCaption>> {
    captions.iter().map(|c| vocab.encode(&tokenize(c), n_max + 2)).collect()
}

impl<S: Scalar> TrainingData<S> {
    /// Items of `split` from a synthetic dataset.
    pub fn synthetic_items(
        ds: &SyntheticDataset,
        split: Split,
        vocab: &Vocabulary,
        n_max: usize,
    ) -> Result<Vec<TrainingItem<S>>> {
        ds.split(split)
            .map(|s| {
                Ok(TrainingItem {
                    id: s.id.clone(),
                    features: toy_patch_encode(s.id.clone(), &s.image, ds.grid)?,
                    image: Some(s.image.clone()),
                    captions: encode_captions(vocab, &s.captions, n_max)?,
                })
            })
            .collect()
    }

    /// Train and validation splits of a synthetic dataset.
    pub fn from_synthetic(ds: &SyntheticDataset, vocab: &Vocabulary, n_max: usize) -> Result<Self> {
        Ok(TrainingData {
            train: Self::synthetic_items(ds, Split::Train, vocab, n_max)?,
            val: Self::synthetic_items(ds, Split::Val, vocab, n_max)?,
            grid: ds.grid,
        })
    }
}

/// Mean per-token negative log-likelihood of `targets` under `logits`,
/// counting only positions where `mask` is set.
pub fn cross_entropy<S: Scalar>(logits: &Tensor<S>, targets: &[usize], mask: &[bool]) -> Result<S> {
    let mut g = Graph::new();
    let l = g.constant(logits.clone());
    let loss = g.cross_entropy(l, targets, mask)?;
    Ok(g.value(loss).data()[0])
}

/// Teacher-forced loss over several `(annotations, caption)` pairs, as the
/// mean over every predicted token. Returns the loss node and the number of
/// tokens it averages.
pub fn batch_loss<S: Scalar>(
    model: &CaptionModel<S>,
    g: &mut Graph<S>,
    bound: &Bound,
    batch: &[(Var, &EncodedCaption)],
) -> Result<(Var, usize)> {
    let k = model.config().vocab_size;
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    for &(annotations, caption) in batch {
        let f = model.forward(g, bound, annotations, caption.tokens())?;
        for l in f.logits {
            rows.push(g.reshape(l, &[1, k])?);
        }
        targets.extend_from_slice(&caption.tokens()[1..]);
    }
    let logits = g.concat(&rows, 0)?;
    let mask = vec![true; targets.len()];
    Ok((g.cross_entropy(logits, &targets, &mask)?, targets.len()))
}

/// Validation numbers for a model on `items`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    /// Teacher-forced per-token loss over every caption.
    pub loss: f64,
    /// Corpus BLEU-4 of greedy captions against all references.
    pub bleu4: f64,
}

pub fn evaluate<S: Scalar>(model: &CaptionModel<S>, items: &[TrainingItem<S>], n_max: usize) -> Result<Evaluation> {
    if items.is_empty() {
        return Err(Error::Domain("cannot evaluate on an empty split".into()));
    }
    let mut total = 0.0;
    let mut tokens = 0usize;
    let mut corpus = Vec::with_capacity(items.len());
    for item in items {
        for c in &item.captions {
            let logits = model.forward_teacher_forced(&item.features, c.tokens())?;
            let targets = &c.tokens()[1..];
            let loss = cross_entropy(&logits, targets, &vec![true; targets.len()])?;
            total += loss.as_f64() * targets.len() as f64;
            tokens += targets.len();
        }
        let decoded = model.greedy_decode(&item.features, n_max)?;
        corpus.push(EvalItem {
            candidate: decoded.tokens,
            references: item.captions.iter().map(|c| c.words().to_vec()).collect(),
        });
    }
    Ok(Evaluation {
        loss: total / tokens as f64,
        bleu4: bleu(&EvalCorpus::new(corpus)?, 4)?,
    })
}

/// Result of [`Trainer::fit`].
#[derive(Clone, Debug, PartialEq)]
pub struct FitSummary {
    pub epochs_run: usize,
    /// Epoch with the best validation BLEU-4, whose weights the model holds
    /// after fitting. `None` without a validation split.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
}

/// Owns a model and its optimizer through training.
#[derive(Clone, Debug)]
pub struct Trainer<S> {
    pub model: CaptionModel<S>,
    pub optimizer: Adam<S>,
    pub config: TrainConfig,
    pub history: Vec<EpochReport>,
}

impl<S: Scalar> Trainer<S> {
    /// Applies the configured embedding rate and initial freeze state.
    pub fn new(mut model: CaptionModel<S>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let emb = model.embeddings();
        let p = model.params_mut().get_mut(emb);
        p.lr_scale = S::of(config.embedding_lr_scale);
        p.trainable = config.unfreeze_policy == UnfreezePolicy::FromStart;
        let optimizer = Adam::new(model.params(), config.base_lr);
        Ok(Trainer {
            model,
            optimizer,
            config,
            history: Vec::new(),
        })
    }

    /// Resumes from a stored model and optimizer.
    pub fn resume(model: CaptionModel<S>, optimizer: Adam<S>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Trainer {
            model,
            optimizer,
            config,
            history: Vec::new(),
        })
    }

    pub fn embeddings_frozen(&self) -> bool {
        !self.model.params().get(self.model.embeddings()).trainable
    }

    pub fn unfreeze_embeddings(&mut self) {
        let emb = self.model.embeddings();
        self.model.params_mut().get_mut(emb).trainable = true;
    }

    pub fn lr_state(&self) -> Vec<GroupRate> {
        let emb = self.model.params().get(self.model.embeddings());
        vec![
            GroupRate {
                group: "decoder".into(),
                rate: self.optimizer.base_lr,
            },
            GroupRate {
                group: "embeddings".into(),
                rate: if emb.trainable {
                    self.optimizer.base_lr * emb.lr_scale.as_f64()
                } else {
                    0.0
                },
            },
        ]
    }

    /// Features each training image presents in `epoch`: augmented and
    /// re-encoded when the item carries an image, stored ones otherwise.
    pub fn epoch_features(&self, data: &TrainingData<S>, epoch: usize) -> Result<Vec<FeatureSet<S>>> {
        let aug = &self.config.augment;
        data.train
            .iter()
            .enumerate()
            .map(|(i, item)| match &item.image {
                Some(img) if !aug.is_identity() => {
                    let mut rng = image_rng(self.config.seed, epoch, i);
                    let out = augment_pipeline(img, aug, &mut rng)?;
                    toy_patch_encode(item.id.clone(), &out, data.grid)
                }
                _ => Ok(item.features.clone()),
            })
            .collect()
    }

    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x9e37_79b9_7f4a_7c15);
        rng.set_stream(epoch as u64);
        rng
    }

    /// `(item, caption)` pairs for one epoch, shuffled.
    fn epoch_units(&self, data: &TrainingData<S>, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
        let mut units = Vec::new();
        for (i, item) in data.train.iter().enumerate() {
            match self.config.caption_policy {
                CaptionPolicy::All => units.extend((0..item.captions.len()).map(|c| (i, c))),
                CaptionPolicy::First => units.push((i, 0)),
                CaptionPolicy::RandomOne => units.push((i, rng.gen_range(0..item.captions.len()))),
            }
        }
        units.shuffle(rng);
        units
    }

    /// One pass over the training split. Returns the token-weighted mean
    /// batch loss.
    pub fn train_epoch(&mut self, data: &TrainingData<S>, epoch: usize) -> Result<f64> {
        if data.train.is_empty() {
            return Err(Error::Domain("training split is empty".into()));
        }
        if let Some(item) = data.train.iter().find(|it| it.captions.is_empty()) {
            return Err(Error::Domain(format!("image {} has no captions", item.id)));
        }
        let features = self.epoch_features(data, epoch)?;
        let mut rng = self.epoch_rng(epoch);
        let units = self.epoch_units(data, &mut rng);
        let mut total = 0.0;
        let mut tokens = 0usize;
        for chunk in units.chunks(self.config.batch_size) {
            let mut g = Graph::new();
            let bound = self.model.params().bind(&mut g);
            let batch: Vec<(Var, &EncodedCaption)> = chunk
                .iter()
                .map(|&(i, c)| (g.constant(features[i].annotations.clone()), &data.train[i].captions[c]))
                .collect();
            let (loss, n) = batch_loss(&self.model, &mut g, &bound, &batch)?;
            let grads = g.backward(loss)?.for_params(self.model.params().len());
            self.optimizer.step(self.model.params_mut(), &grads)?;
            total += g.value(loss).data()[0].as_f64() * n as f64;
            tokens += n;
        }
        Ok(total / tokens as f64)
    }

    /// Trains one epoch, validates, schedules, and records the report.
    pub fn run_epoch(&mut self, data: &TrainingData<S>) -> Result<EpochReport> {
        let epoch = self.history.len();
        let lr_state = self.lr_state();
        let train_loss = self.train_epoch(data, epoch)?;
        let eval = if data.val.is_empty() {
            None
        } else {
            Some(evaluate(&self.model, &data.val, self.config.n_max)?)
        };
        self.history.push(EpochReport {
            epoch,
            train_loss,
            val_loss: eval.map(|e| e.loss),
            val_bleu4: eval.map(|e| e.bleu4),
            lr_state,
            action: Action::Continue,
        });
        let action = validate_and_schedule(&self.history, self.config.unfreeze_policy, self.config.patience);
        if action == Action::UnfreezeEmbeddings && self.embeddings_frozen() {
            self.unfreeze_embeddings();
        }
        let last = self.history.last_mut().expect("just pushed");
        last.action = action;
        Ok(last.clone())
    }

    /// Runs up to `config.epochs` epochs or until the schedule says stop,
    /// then restores the weights of the best validation epoch.
    pub fn fit(&mut self, data: &TrainingData<S>, mut on_epoch: impl FnMut(&EpochReport)) -> Result<FitSummary> {
        let mut best: Option<(f64, ParamStore<S>)> = None;
        let mut stopped_early = false;
        let start = self.history.len();
        while self.history.len() - start < self.config.epochs {
            let report = self.run_epoch(data)?;
            on_epoch(&report);
            if let Some(b) = report.val_bleu4 {
                if best.as_ref().is_none_or(|(v, _)| b > *v) {
                    best = Some((b, self.model.params().clone()));
                }
            }
            if report.action == Action::Stop {
                stopped_early = true;
                break;
            }
        }
        let best_epoch = best_epoch(&self.history[start..]).map(|e| e + start);
        if let Some((_, params)) = best {
            // Keep the current freeze state; only the weights roll back.
            for ((_, dst), (_, src)) in self.model.params_mut().iter_mut().zip(params.iter()) {
                dst.tensor = src.tensor.clone();
            }
        }
        Ok(FitSummary {
            epochs_run: self.history.len() - start,
            best_epoch,
            stopped_early,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::generate_synthetic_dataset;
    use crate::text::build_vocab;

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            hidden: 8,
            embed_dim: 6,
            attention_dim: 5,
            batch_size: 4,
            epochs: 2,
            n_max: 8,
            ..TrainConfig::default()
        }
    }

    fn tiny_setup(variant: Variant, cfg: &TrainConfig) -> (Trainer<f64>, TrainingData<f64>) {
        let ds = generate_synthetic_dataset(12, 3, 24, 3).unwrap();
        let caps: Vec<Vec<String>> = ds
            .samples
            .iter()
            .flat_map(|s| s.captions.iter().map(|c| tokenize(c)))
            .collect();
        let vocab = build_vocab(&caps, 1).unwrap();
        let data = TrainingData::from_synthetic(&ds, &vocab, cfg.n_max).unwrap();
        let mc = cfg.model_config(variant, vocab.len(), data.train[0].features.dim());
        let model = CaptionModel::new(mc, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
        (Trainer::new(model, cfg.clone()).unwrap(), data)
    }

    #[test]
    fn config_round_trips_through_pairs() {
        let mut cfg = TrainConfig::default();
        cfg.set("hidden", "16").unwrap();
        cfg.set("caption_policy", "random_one").unwrap();
        cfg.set("distortion", "0.2").unwrap();
        let mut copy = TrainConfig::default();
        for (k, v) in cfg.to_pairs() {
            copy.set(k, &v).unwrap();
        }
        assert_eq!(copy, cfg);
        assert!(matches!(cfg.set("learning_rate", "1"), Err(Error::Config(_))));
        assert!(cfg.set("batch_size", "x").is_err());
    }

    #[test]
    fn config_validation() {
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            embedding_lr_scale: 1.5,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn cross_entropy_two_step_example() {
        let logits = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let l = cross_entropy(&logits, &[0, 1], &[true, true]).unwrap();
        assert!((l - (1.0 + (-1.0f64).exp()).ln()).abs() < 1e-15);
        assert!((l - 0.313262).abs() < 1e-6);
    }

    #[test]
    fn zero_rate_keeps_parameters() {
        let cfg = TrainConfig {
            base_lr: 0.0,
            unfreeze_policy: UnfreezePolicy::FromStart,
            ..tiny_config()
        };
        let (mut t, data) = tiny_setup(Variant::SoftAttention, &cfg);
        let before = t.model.params().clone();
        let loss = t.train_epoch(&data, 0).unwrap();
        assert!(loss > 0.0);
        assert_eq!(t.model.params(), &before);
    }

    #[test]
    fn frozen_embeddings_stay_put() {
        let cfg = TrainConfig {
            unfreeze_policy: UnfreezePolicy::Never,
            base_lr: 1e-2,
            ..tiny_config()
        };
        let (mut t, data) = tiny_setup(Variant::EncoderDecoder, &cfg);
        let emb = t.model.embeddings();
        let before = t.model.params().get(emb).tensor.clone();
        let out = t.model.output().weight;
        let out_before = t.model.params().get(out).tensor.clone();
        t.train_epoch(&data, 0).unwrap();
        assert_eq!(t.model.params().get(emb).tensor, before);
        assert_ne!(t.model.params().get(out).tensor, out_before);
        assert_eq!(t.lr_state()[1].rate, 0.0);
    }

    #[test]
    fn epochs_are_deterministic() {
        let cfg = tiny_config();
        let run = || {
            let (mut t, data) = tiny_setup(Variant::SoftAttention, &cfg);
            let reports: Vec<EpochReport> = (0..2).map(|_| t.run_epoch(&data).unwrap()).collect();
            (reports, t.model.params().clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn single_batch_loss_decreases() {
        let cfg = TrainConfig {
            batch_size: 64,
            caption_policy: CaptionPolicy::First,
            augment: AugmentConfig::disabled(),
            unfreeze_policy: UnfreezePolicy::FromStart,
            ..tiny_config()
        };
        let (mut t, mut data) = tiny_setup(Variant::SoftAttention, &cfg);
        data.train.truncate(4);
        let mut last = f64::INFINITY;
        for epoch in 0..10 {
            let loss = t.train_epoch(&data, epoch).unwrap();
            assert!(loss < last, "step {epoch}: {loss} !< {last}");
            last = loss;
        }
    }

    #[test]
    fn fit_records_reports_and_restores_best() {
        let cfg = TrainConfig {
            epochs: 3,
            ..tiny_config()
        };
        let (mut t, data) = tiny_setup(Variant::EncoderDecoder, &cfg);
        let mut lines = Vec::new();
        let summary = t.fit(&data, |r| lines.push(r.log_line())).unwrap();
        assert_eq!(lines.len(), summary.epochs_run);
        assert!(summary.best_epoch.is_some());
        assert!(t.history.iter().all(|r| r.train_loss >= 0.0 && r.val_loss.unwrap() >= 0.0));
    }

    #[test]
    fn empty_split_is_rejected() {
        let cfg = tiny_config();
        let (mut t, mut data) = tiny_setup(Variant::EncoderDecoder, &cfg);
        data.train.clear();
        assert!(matches!(t.train_epoch(&data, 0), Err(Error::Domain(_))));
    }
}
