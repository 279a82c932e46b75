//! Finite-difference verification of the analytic gradients of both
//! caption models.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::captioner::{CaptionModel, ModelConfig, Variant};
use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamStore, Tensor};
use crate::text::{EncodedCaption, END, START};
use crate::train::batch_loss;

/// Size of the model under test and of the difference scheme.
#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckConfig {
    pub hidden: usize,
    pub embed_dim: usize,
    pub feature_dim: usize,
    pub locations: usize,
    pub vocab_size: usize,
    pub attention_dim: usize,
    pub layers: usize,
    /// Words per test caption.
    pub caption_words: usize,
    /// Number of captions in the test batch.
    pub batch: usize,
    /// Central-difference step.
    pub step: f64,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig {
            hidden: 16,
            embed_dim: 8,
            feature_dim: 5,
            locations: 4,
            vocab_size: 12,
            attention_dim: 8,
            layers: 3,
            caption_words: 4,
            batch: 2,
            step: 1e-5,
            tolerance: 1e-4,
            seed: 7,
        }
    }
}

pub const GRADCHECK_KEYS: [&str; 12] = [
    "hidden",
    "embed_dim",
    "feature_dim",
    "locations",
    "vocab_size",
    "attention_dim",
    "layers",
    "caption_words",
    "batch",
    "step",
    "tolerance",
    "seed",
];

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

impl GradcheckConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "hidden" => self.hidden = parse(key, value)?,
            "embed_dim" => self.embed_dim = parse(key, value)?,
            "feature_dim" => self.feature_dim = parse(key, value)?,
            "locations" => self.locations = parse(key, value)?,
            "vocab_size" => self.vocab_size = parse(key, value)?,
            "attention_dim" => self.attention_dim = parse(key, value)?,
            "layers" => self.layers = parse(key, value)?,
            "caption_words" => self.caption_words = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "step" => self.step = parse(key, value)?,
            "tolerance" => self.tolerance = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown gradcheck option {other:?}"))),
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let values = [
            self.hidden.to_string(),
            self.embed_dim.to_string(),
            self.feature_dim.to_string(),
            self.locations.to_string(),
            self.vocab_size.to_string(),
            self.attention_dim.to_string(),
            self.layers.to_string(),
            self.caption_words.to_string(),
            self.batch.to_string(),
            self.step.to_string(),
            self.tolerance.to_string(),
            self.seed.to_string(),
        ];
        GRADCHECK_KEYS.iter().copied().zip(values).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.vocab_size < 5 {
            return Err(Error::Config("vocab_size must be at least 5".into()));
        }
        if self.locations == 0 || self.batch == 0 {
            return Err(Error::Config("locations and batch must be positive".into()));
        }
        if !(self.step > 0.0 && self.tolerance > 0.0) {
            return Err(Error::Config("step and tolerance must be positive".into()));
        }
        Ok(())
    }

    pub fn model_config(&self, variant: Variant) -> ModelConfig {
        ModelConfig {
            variant,
            vocab_size: self.vocab_size,
            embed_dim: self.embed_dim,
            feature_dim: self.feature_dim,
            hidden: self.hidden,
            attention_dim: self.attention_dim,
            layers: self.layers,
        }
    }
}

/// Worst relative error within one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupReport {
    pub group: String,
    pub elements: usize,
    pub max_rel_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VariantReport {
    pub variant: Variant,
    pub groups: Vec<GroupReport>,
}

impl VariantReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradcheckReport {
    pub tolerance: f64,
    pub variants: Vec<VariantReport>,
}

impl GradcheckReport {
    pub fn passed(&self) -> bool {
        self.variants.iter().all(|v| v.max_rel_error() < self.tolerance)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.variants {
            for g in &v.groups {
                let verdict = if g.max_rel_error < self.tolerance { "ok" } else { "FAIL" };
                writeln!(
                    f,
                    "{}\t{}\t{}\t{:.3e}\t{verdict}",
                    v.variant, g.group, g.elements, g.max_rel_error
                )?;
            }
        }
        write!(
            f,
            "{} (tolerance {:e})",
            if self.passed() { "PASS" } else { "FAIL" },
            self.tolerance
        )
    }
}

/// Parameter group of a parameter name: `lstm.<layer>` for the stack,
/// otherwise the leading component.
pub fn group_of(name: &str) -> String {
    let mut parts = name.split('.');
    let head = parts.next().unwrap_or(name);
    match (head, parts.next()) {
        ("lstm", Some(layer)) => format!("lstm.{layer}"),
        _ => head.to_owned(),
    }
}

struct Problem {
    annotations: Vec<Tensor<f64>>,
    captions: Vec<EncodedCaption>,
}

fn problem(cfg: &GradcheckConfig, rng: &mut ChaCha8Rng) -> Result<Problem> {
    let mut annotations = Vec::with_capacity(cfg.batch);
    let mut captions = Vec::with_capacity(cfg.batch);
    for _ in 0..cfg.batch {
        annotations.push(Tensor::uniform(&[cfg.locations, cfg.feature_dim], 1.0, rng));
        let mut tokens = vec![START];
        tokens.extend((0..cfg.caption_words).map(|_| rng.gen_range(END + 1..cfg.vocab_size)));
        tokens.push(END);
        captions.push(EncodedCaption::new(tokens)?);
    }
    Ok(Problem { annotations, captions })
}

fn loss_and_grads(
    model: &CaptionModel<f64>,
    params: &ParamStore<f64>,
    p: &Problem,
    with_grads: bool,
) -> Result<(f64, Vec<Option<Tensor<f64>>>)> {
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let batch: Vec<_> = p
        .annotations
        .iter()
        .zip(&p.captions)
        .map(|(a, c)| (g.constant(a.clone()), c))
        .collect();
    let (loss, _) = batch_loss(model, &mut g, &bound, &batch)?;
    let value = g.value(loss).data()[0];
    let grads = if with_grads {
        g.backward(loss)?.for_params(params.len())
    } else {
        Vec::new()
    };
    Ok((value, grads))
}

/// Compares every analytic gradient element of one variant with a central
/// difference. Relative error is `|g_ad − g_fd| / max(1, |g_fd|)`.
///
/// `corrupt` adds 0.5 to one analytic element, which the check must catch.
pub fn check_variant(cfg: &GradcheckConfig, variant: Variant, corrupt: bool) -> Result<VariantReport> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let model = CaptionModel::<f64>::new(cfg.model_config(variant), &mut rng)?;
    let p = problem(cfg, &mut rng)?;
    let (_, mut grads) = loss_and_grads(&model, model.params(), &p, true)?;
    if corrupt {
        if let Some(g) = grads.iter_mut().flatten().next() {
            g.data_mut()[0] += 0.5;
        }
    }

    let mut params = model.params().clone();
    let mut groups: Vec<GroupReport> = Vec::new();
    for i in 0..params.len() {
        let id = crate::tensor::ParamId::new(i);
        let name = params.get(id).name.clone();
        let n = params.get(id).tensor.len();
        let analytic = grads[i]
            .as_ref()
            .ok_or_else(|| Error::Contract(format!("no gradient reached {name}")))?
            .clone();
        let mut worst: f64 = 0.0;
        for k in 0..n {
            let orig = params.get(id).tensor.data()[k];
            params.get_mut(id).tensor.data_mut()[k] = orig + cfg.step;
            let (plus, _) = loss_and_grads(&model, &params, &p, false)?;
            params.get_mut(id).tensor.data_mut()[k] = orig - cfg.step;
            let (minus, _) = loss_and_grads(&model, &params, &p, false)?;
            params.get_mut(id).tensor.data_mut()[k] = orig;
            let fd = (plus - minus) / (2.0 * cfg.step);
            let err = (analytic.data()[k] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
        let group = group_of(&name);
        match groups.iter_mut().find(|g| g.group == group) {
            Some(g) => {
                g.elements += n;
                g.max_rel_error = g.max_rel_error.max(worst);
            }
            None => groups.push(GroupReport {
                group,
                elements: n,
                max_rel_error: worst,
            }),
        }
    }
    Ok(VariantReport { variant, groups })
}

/// Checks both variants.
pub fn run(cfg: &GradcheckConfig, corrupt: bool) -> Result<GradcheckReport> {
    Ok(GradcheckReport {
        tolerance: cfg.tolerance,
        variants: vec![
            check_variant(cfg, Variant::EncoderDecoder, corrupt)?,
            check_variant(cfg, Variant::SoftAttention, corrupt)?,
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> GradcheckConfig {
        GradcheckConfig {
            hidden: 4,
            embed_dim: 3,
            feature_dim: 2,
            locations: 3,
            vocab_size: 6,
            attention_dim: 3,
            caption_words: 2,
            ..GradcheckConfig::default()
        }
    }

    #[test]
    fn groups_by_prefix() {
        assert_eq!(group_of("lstm.2.forget.w"), "lstm.2");
        assert_eq!(group_of("attention.w_a"), "attention");
        assert_eq!(group_of("embeddings"), "embeddings");
    }

    #[test]
    fn small_models_pass() {
        let report = run(&small(), false).unwrap();
        assert!(report.passed(), "{report}");
        let groups: Vec<&str> = report.variants[1].groups.iter().map(|g| g.group.as_str()).collect();
        assert!(groups.contains(&"attention") && groups.contains(&"lstm.3"));
        assert!(!report.variants[0].groups.iter().any(|g| g.group == "attention"));
    }

    #[test]
    fn corruption_is_caught() {
        let report = run(&small(), true).unwrap();
        assert!(!report.passed());
        assert!(report.to_string().contains("FAIL"));
    }

    #[test]
    fn options_round_trip() {
        let mut c = GradcheckConfig::default();
        c.set("hidden", "12").unwrap();
        let mut d = GradcheckConfig::default();
        for (k, v) in c.to_pairs() {
            d.set(k, &v).unwrap();
        }
        assert_eq!(c, d);
        assert!(d.set("bogus", "1").is_err());
    }
}
