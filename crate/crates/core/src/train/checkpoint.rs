//! `ICKP` checkpoints.
//!
//! Layout (little-endian): magic `ICKP`, `u32` version, `u32`-prefixed
//! UTF-8 config text (`key=value` lines), `u32` vocabulary size followed by
//! length-prefixed tokens, `u32` parameter count followed by one blob per
//! parameter (name, `u8` trainable flag, `f64` rate scale, `u32` rank,
//! `u32` dims, `f64` values), then a `u8` optimizer flag and, when set, the
//! Adam hyperparameters plus `u64` step count and `f64` moments per
//! parameter.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Adam, TrainConfig};
use crate::captioner::{CaptionModel, ModelConfig};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use crate::text::Vocabulary;

const MAGIC: &[u8; 4] = b"ICKP";
const VERSION: u32 = 1;

/// Everything needed to resume training or decode.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<S> {
    pub model: CaptionModel<S>,
    pub optimizer: Option<Adam<S>>,
    pub vocab: Option<Vocabulary>,
    pub train_config: Option<TrainConfig>,
}

fn config_text(model: &ModelConfig, train: Option<&TrainConfig>) -> String {
    let mut s = format!(
        "variant={}\nvocab_size={}\nembed_dim={}\nfeature_dim={}\nhidden={}\nattention_dim={}\nlayers={}\n",
        model.variant,
        model.vocab_size,
        model.embed_dim,
        model.feature_dim,
        model.hidden,
        model.attention_dim,
        model.layers
    );
    if let Some(t) = train {
        for (k, v) in t.to_pairs() {
            s.push_str(&format!("train.{k}={v}\n"));
        }
    }
    s
}

fn parse_config_text(text: &str) -> Result<(ModelConfig, Option<TrainConfig>)> {
    let mut fields = std::collections::BTreeMap::new();
    let mut train: Option<TrainConfig> = None;
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("config line {line:?} lacks '='")))?;
        if let Some(key) = k.strip_prefix("train.") {
            train
                .get_or_insert_with(TrainConfig::default)
                .set(key, v)
                .map_err(|e| Error::Format(format!("stored training config: {e}")))?;
        } else {
            fields.insert(k.to_owned(), v.to_owned());
        }
    }
    let get = |k: &str| {
        fields
            .get(k)
            .ok_or_else(|| Error::Format(format!("config echo is missing {k}")))
    };
    let num = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::Format(format!("config value for {k} is not a number")))
    };
    let config = ModelConfig {
        variant: get("variant")?
            .parse()
            .map_err(|e| Error::Format(format!("stored variant: {e}")))?,
        vocab_size: num("vocab_size")?,
        embed_dim: num("embed_dim")?,
        feature_dim: num("feature_dim")?,
        hidden: num("hidden")?,
        attention_dim: num("attention_dim")?,
        layers: num("layers")?,
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("stored model config: {e}")))?;
    Ok((config, train))
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

fn put_values<S: Scalar>(out: &mut Vec<u8>, t: &Tensor<S>) {
    for v in t.data() {
        out.extend_from_slice(&v.as_f64().to_le_bytes());
    }
}

pub fn encode_checkpoint<S: Scalar>(ckpt: &Checkpoint<S>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize);
    put_str(&mut out, &config_text(ckpt.model.config(), ckpt.train_config.as_ref()));
    let tokens = ckpt.vocab.as_ref().map_or(&[][..], |v| v.tokens());
    put_u32(&mut out, tokens.len());
    for t in tokens {
        put_str(&mut out, t);
    }
    let params = ckpt.model.params();
    put_u32(&mut out, params.len());
    for (_, p) in params.iter() {
        put_str(&mut out, &p.name);
        out.push(p.trainable as u8);
        out.extend_from_slice(&p.lr_scale.as_f64().to_le_bytes());
        put_u32(&mut out, p.tensor.rank());
        for &d in p.tensor.shape() {
            put_u32(&mut out, d);
        }
        put_values(&mut out, &p.tensor);
    }
    match &ckpt.optimizer {
        None => out.push(0),
        Some(adam) => {
            out.push(1);
            for h in [adam.base_lr, adam.beta1, adam.beta2, adam.eps] {
                out.extend_from_slice(&h.to_le_bytes());
            }
            for i in 0..params.len() {
                out.extend_from_slice(&adam.t[i].to_le_bytes());
                put_values(&mut out, &adam.m[i]);
                put_values(&mut out, &adam.v[i]);
            }
        }
    }
    out
}

pub fn write_checkpoint<S: Scalar>(path: &Path, ckpt: &Checkpoint<S>) -> Result<()> {
    fs::write(path, encode_checkpoint(ckpt)).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        match self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()) {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::Format(format!(
                "checkpoint truncated at byte offset {} while reading {what}",
                self.pos
            ))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::Format(format!("{what} is not UTF-8")))
    }

    fn values<S: Scalar>(&mut self, shape: &[usize], what: &str) -> Result<Tensor<S>> {
        let n: usize = shape.iter().product();
        let bytes = self.take(n.saturating_mul(8), what)?;
        let data = bytes
            .chunks_exact(8)
            .map(|c| S::of(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        Tensor::new(shape.to_vec(), data).map_err(|e| Error::Format(format!("{what}: {e}")))
    }
}

pub fn decode_checkpoint<S: Scalar>(bytes: &[u8]) -> Result<Checkpoint<S>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format("not an ICKP checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let (config, train_config) = parse_config_text(&r.string("config echo")?)?;
    let n_tokens = r.u32("vocabulary size")?;
    let vocab = if n_tokens == 0 {
        None
    } else {
        let mut tokens = Vec::with_capacity(n_tokens.min(1 << 20));
        for _ in 0..n_tokens {
            tokens.push(r.string("vocabulary token")?);
        }
        let v = Vocabulary::from_tokens(tokens.into_iter().skip(4))
            .map_err(|e| Error::Format(format!("stored vocabulary: {e}")))?;
        if v.len() != config.vocab_size {
            return Err(Error::Format(format!(
                "stored vocabulary has {} tokens but the model expects {}",
                v.len(),
                config.vocab_size
            )));
        }
        Some(v)
    };

    // The layout of every parameter follows from the config; the stored
    // blobs must match it name for name.
    let mut model = CaptionModel::<S>::new(config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let count = r.u32("parameter count")?;
    if count != model.params().len() {
        return Err(Error::Format(format!(
            "checkpoint holds {count} parameters, the configured model has {}",
            model.params().len()
        )));
    }
    for (_, p) in model.params_mut().iter_mut() {
        let name = r.string("parameter name")?;
        if name != p.name {
            return Err(Error::Format(format!(
                "expected parameter {} but found {name}",
                p.name
            )));
        }
        let trainable = r.u8("trainable flag")? != 0;
        let lr_scale = r.f64("rate scale")?;
        let rank = r.u32("rank")?;
        let mut dims = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            dims.push(r.u32("dimension")?);
        }
        if dims != p.tensor.shape() {
            return Err(Error::Format(format!(
                "parameter {name} has dims {dims:?} in the checkpoint but {:?} in the model",
                p.tensor.shape()
            )));
        }
        p.tensor = r.values(&dims, &name)?;
        p.trainable = trainable;
        p.lr_scale = S::of(lr_scale);
    }
    let optimizer = match r.u8("optimizer flag")? {
        0 => None,
        1 => {
            let base_lr = r.f64("learning rate")?;
            let mut adam = Adam::new(model.params(), base_lr);
            adam.beta1 = r.f64("beta1")?;
            adam.beta2 = r.f64("beta2")?;
            adam.eps = r.f64("epsilon")?;
            for (id, p) in model.params().iter() {
                let i = id.index();
                adam.t[i] = r.u64("step count")?;
                adam.m[i] = r.values(p.tensor.shape(), "first moment")?;
                adam.v[i] = r.values(p.tensor.shape(), "second moment")?;
            }
            Some(adam)
        }
        other => return Err(Error::Format(format!("invalid optimizer flag {other}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    Ok(Checkpoint {
        model,
        optimizer,
        vocab,
        train_config,
    })
}

pub fn read_checkpoint<S: Scalar>(path: &Path) -> Result<Checkpoint<S>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}

impl<S: Scalar> Checkpoint<S> {
    /// Copies the stored weights into an existing model of the same shape.
    pub fn load_into(&self, model: &mut CaptionModel<S>) -> Result<()> {
        let (a, b) = (self.model.config(), model.config());
        for (name, stored, target) in [
            ("vocab_size", a.vocab_size, b.vocab_size),
            ("embed_dim", a.embed_dim, b.embed_dim),
            ("feature_dim", a.feature_dim, b.feature_dim),
            ("hidden", a.hidden, b.hidden),
            ("attention_dim", a.attention_dim, b.attention_dim),
            ("layers", a.layers, b.layers),
        ] {
            if stored != target {
                return Err(Error::Format(format!(
                    "checkpoint {name} is {stored} but the model has {target}"
                )));
            }
        }
        if a.variant != b.variant {
            return Err(Error::Format(format!(
                "checkpoint variant is {} but the model is {}",
                a.variant, b.variant
            )));
        }
        *model.params_mut() = self.model.params().clone();
        Ok(())
    }
}
