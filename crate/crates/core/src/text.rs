//! Tokenization, vocabularies, caption encoding and pretrained embeddings.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Graph, Tensor, Var};

pub const PAD: usize = 0;
pub const START: usize = 1;
pub const END: usize = 2;
pub const UNK: usize = 3;

const RESERVED: [&str; 4] = ["<PAD>", "<START>", "<END>", "<UNK>"];

/// Lowercases, deletes ASCII punctuation, and splits on whitespace.
pub fn tokenize(sentence: &str) -> Vec<String> {
    sentence
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect::<String>()
        .to_lowercase()
        .split_whitespace()
        .map(str::to_owned)
        .collect()
}

/// Bijective token/index map with fixed reserved entries at 0..4.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    token_to_index: HashMap<String, usize>,
    index_to_token: Vec<String>,
}

impl Vocabulary {
    /// Builds a vocabulary from tokens listed in index order after the
    /// reserved entries.
    pub fn from_tokens<I, T>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let mut index_to_token: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        index_to_token.extend(tokens.into_iter().map(Into::into));
        Self::from_index_order(index_to_token)
    }

    fn from_index_order(index_to_token: Vec<String>) -> Result<Self> {
        if index_to_token.len() < 5 {
            return Err(Error::Domain(format!(
                "vocabulary needs at least one non-reserved token, got {} entries",
                index_to_token.len()
            )));
        }
        for (i, name) in RESERVED.iter().enumerate() {
            if index_to_token[i] != *name {
                return Err(Error::Format(format!(
                    "entry {i} must be {name}, found {:?}",
                    index_to_token[i]
                )));
            }
        }
        let mut token_to_index = HashMap::with_capacity(index_to_token.len());
        for (i, tok) in index_to_token.iter().enumerate() {
            if tok.is_empty() || tok.contains(char::is_whitespace) {
                return Err(Error::Format(format!("invalid token {tok:?} at index {i}")));
            }
            if token_to_index.insert(tok.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocabulary {
            token_to_index,
            index_to_token,
        })
    }

    pub fn len(&self) -> usize {
        self.index_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index(&self, token: &str) -> usize {
        self.token_to_index.get(token).copied().unwrap_or(UNK)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.token_to_index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> Option<&str> {
        self.index_to_token.get(index).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.index_to_token
    }

    /// Wraps `words` in `<START>`/`<END>`, truncating interior words so the
    /// result holds at most `max_len` indices.
    pub fn encode<T: AsRef<str>>(&self, words: &[T], max_len: usize) -> Result<EncodedCaption> {
        if max_len < 2 {
            return Err(Error::Config(format!(
                "maximum caption length {max_len} cannot hold both sentinels"
            )));
        }
        let mut tokens = Vec::with_capacity(words.len().min(max_len - 2) + 2);
        tokens.push(START);
        tokens.extend(words.iter().take(max_len - 2).map(|w| self.index(w.as_ref())));
        tokens.push(END);
        Ok(EncodedCaption { tokens })
    }

    /// Tokens for `indices`, skipping sentinels and padding.
    pub fn decode(&self, indices: &[usize]) -> Vec<String> {
        indices
            .iter()
            .filter(|&&i| !matches!(i, PAD | START | END))
            .map(|&i| self.token(i).unwrap_or("<UNK>").to_owned())
            .collect()
    }

    /// One token per line, in index order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = self.index_to_token.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_index_order(
            text.lines()
                .filter(|l| !l.is_empty())
                .map(str::to_owned)
                .collect(),
        )
    }
}

/// Builds a vocabulary from tokenized captions, keeping tokens seen at
/// least `min_freq` times. Indices are assigned by descending frequency,
/// ties broken lexicographically.
pub fn build_vocab<T: AsRef<str>>(captions: &[Vec<T>], min_freq: usize) -> Result<Vocabulary> {
    if captions.iter().all(Vec::is_empty) {
        return Err(Error::Domain("cannot build a vocabulary from an empty corpus".into()));
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for tok in captions.iter().flatten() {
        let tok = tok.as_ref();
        if !RESERVED.contains(&tok) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = counts
        .into_iter()
        .filter(|&(_, n)| n >= min_freq)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Vocabulary::from_tokens(kept.into_iter().map(|(t, _)| t))
}

/// Index sequence `<START> w_1 .. w_n <END>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedCaption {
    tokens: Vec<usize>,
}

impl EncodedCaption {
    /// Validates that the sequence is framed by the sentinels.
    pub fn new(tokens: Vec<usize>) -> Result<Self> {
        if tokens.first() != Some(&START) {
            return Err(Error::Contract("caption must begin with <START>".into()));
        }
        if tokens.len() < 2 || tokens.last() != Some(&END) {
            return Err(Error::Contract("caption must end with <END>".into()));
        }
        Ok(EncodedCaption { tokens })
    }

    pub fn tokens(&self) -> &[usize] {
        &self.tokens
    }

    /// Count including both sentinels.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Interior word indices.
    pub fn words(&self) -> &[usize] {
        &self.tokens[1..self.tokens.len() - 1]
    }
}

/// Reads whitespace-separated text vectors (`token v_1 .. v_m` per line,
/// with an optional `count dim` header) into a `[K×m]` matrix aligned with
/// `vocab`. Rows for tokens missing from the file get the mean of all
/// loaded rows plus uniform noise in ±0.01.
pub fn load_embedding_file<S: Scalar, R: Rng + ?Sized>(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<Tensor<S>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_embeddings(&text, vocab, dim, rng)
}

pub fn parse_embeddings<S: Scalar, R: Rng + ?Sized>(
    text: &str,
    vocab: &Vocabulary,
    dim: usize,
    rng: &mut R,
) -> Result<Tensor<S>> {
    if dim == 0 {
        return Err(Error::Config("embedding dimension must be positive".into()));
    }
    let k = vocab.len();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; k];
    let mut sum = vec![0.0f64; dim];
    let mut loaded = 0usize;

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if i == 0 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            let header_dim: usize = fields[1].parse().expect("checked");
            if header_dim != dim {
                return Err(Error::Config(format!(
                    "embedding file declares dimension {header_dim}, expected {dim}"
                )));
            }
            continue;
        }
        if fields.len() != dim + 1 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected a token and {dim} values, found {} values", fields.len() - 1),
            });
        }
        let values = fields[1..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        line: line_no,
                        message: format!("invalid number {f:?}"),
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        for (acc, v) in sum.iter_mut().zip(&values) {
            *acc += v;
        }
        loaded += 1;
        if let Some(idx) = vocab.get(fields[0]) {
            rows[idx] = Some(values);
        }
    }

    let mean: Vec<f64> = if loaded == 0 {
        vec![0.0; dim]
    } else {
        sum.iter().map(|s| s / loaded as f64).collect()
    };
    let mut data = Vec::with_capacity(k * dim);
    for row in rows {
        match row {
            Some(v) => data.extend(v.into_iter().map(S::of)),
            None => data.extend(mean.iter().map(|m| S::of(m + rng.gen_range(-0.01..=0.01)))),
        }
    }
    Tensor::matrix(k, dim, data)
}

/// Looks up embedding rows for `tokens`.
pub fn embed<S: Scalar>(graph: &mut Graph<S>, table: Var, tokens: &[usize]) -> Result<Vec<Var>> {
    let k = graph.value(table).rows();
    tokens
        .iter()
        .map(|&t| {
            if t >= k {
                Err(Error::Contract(format!(
                    "token index {t} outside embedding table of {k} rows"
                )))
            } else {
                graph.row(table, t)
            }
        })
        .collect()
}
