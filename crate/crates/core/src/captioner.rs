//! Encoder-decoder and soft-attention caption models with decoding.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::attention::{self, AttentionParams};
use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::lstm::{self, Affine, StackParams, StackState};
use crate::scalar::Scalar;
use crate::tensor::{log_softmax, Bound, Graph, ParamId, ParamStore, Tensor, Var};
use crate::text::{END, START};

/// Learning-rate multiplier given to the embedding table at construction.
pub const EMBEDDING_LR_SCALE: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    EncoderDecoder,
    SoftAttention,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::EncoderDecoder => "encoder_decoder",
            Variant::SoftAttention => "soft_attention",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "encoder_decoder" => Ok(Variant::EncoderDecoder),
            "soft_attention" => Ok(Variant::SoftAttention),
            other => Err(Error::Config(format!(
                "unknown variant {other:?} (expected encoder_decoder or soft_attention)"
            ))),
        }
    }
}

/// Shape of a caption model.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelConfig {
    pub variant: Variant,
    /// `K`, including the four reserved tokens.
    pub vocab_size: usize,
    /// `m`
    pub embed_dim: usize,
    /// `D`
    pub feature_dim: usize,
    pub hidden: usize,
    pub attention_dim: usize,
    pub layers: usize,
}

impl ModelConfig {
    /// Default sizes: m = 300, hidden 512, attention 256, three layers.
    pub fn new(variant: Variant, vocab_size: usize, feature_dim: usize) -> Self {
        ModelConfig {
            variant,
            vocab_size,
            embed_dim: 300,
            feature_dim,
            hidden: 512,
            attention_dim: 256,
            layers: 3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size <= END {
            return Err(Error::Config(format!(
                "vocab_size must exceed {END} so <START> and <END> exist, got {}",
                self.vocab_size
            )));
        }
        for (name, v) in [
            ("embed_dim", self.embed_dim),
            ("feature_dim", self.feature_dim),
            ("hidden", self.hidden),
            ("attention_dim", self.attention_dim),
            ("layers", self.layers),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Width of the first LSTM layer's input.
    pub fn input_dim(&self) -> usize {
        match self.variant {
            Variant::EncoderDecoder => self.embed_dim,
            Variant::SoftAttention => self.embed_dim + self.feature_dim,
        }
    }
}

/// A decoded caption without sentinels.
#[derive(Clone, Debug, PartialEq)]
pub struct Decoded<S> {
    pub tokens: Vec<usize>,
    /// Sum of the per-step log-probabilities of the emitted tokens,
    /// including `<END>` when it was emitted.
    pub log_prob: S,
    /// One weight vector per step for the attention variant, else empty.
    pub alphas: Vec<Vec<S>>,
}

/// Graph handles produced by one teacher-forced pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// One `[K]` vector per predicted position.
    pub logits: Vec<Var>,
    pub alphas: Vec<Var>,
}

/// Output of a single decoder step.
#[derive(Clone, Debug)]
pub struct Step {
    pub logits: Var,
    pub state: StackState,
    pub alpha: Option<Var>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaptionModel<S> {
    config: ModelConfig,
    params: ParamStore<S>,
    embeddings: ParamId,
    stack: StackParams,
    attention: Option<AttentionParams>,
    output: Affine,
}

impl<S: Scalar> CaptionModel<S> {
    /// Random initialization: weights uniform in `±1/√fan_in`, embeddings
    /// in `±1`.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let embeddings = params.add_scaled(
            "embeddings",
            Tensor::uniform(&[config.vocab_size, config.embed_dim], 1.0, rng),
            S::of(EMBEDDING_LR_SCALE),
        );
        let stack = StackParams::register(
            &mut params,
            config.layers,
            config.input_dim(),
            config.hidden,
            config.feature_dim,
            rng,
        );
        let attention = match config.variant {
            Variant::SoftAttention => Some(AttentionParams::register(
                &mut params,
                config.feature_dim,
                config.hidden,
                config.attention_dim,
                rng,
            )),
            Variant::EncoderDecoder => None,
        };
        let output = Affine::register(&mut params, "output", config.vocab_size, config.hidden, rng);
        Ok(CaptionModel {
            config,
            params,
            embeddings,
            stack,
            attention,
            output,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn variant(&self) -> Variant {
        self.config.variant
    }

    pub fn params(&self) -> &ParamStore<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<S> {
        &mut self.params
    }

    pub fn embeddings(&self) -> ParamId {
        self.embeddings
    }

    pub fn stack(&self) -> &StackParams {
        &self.stack
    }

    pub fn attention(&self) -> Option<&AttentionParams> {
        self.attention.as_ref()
    }

    pub fn output(&self) -> Affine {
        self.output
    }

    /// Replaces the embedding table, e.g. with pretrained vectors.
    pub fn set_embeddings(&mut self, table: Tensor<S>) -> Result<()> {
        let expected = [self.config.vocab_size, self.config.embed_dim];
        if table.shape() != expected {
            return Err(Error::dim("set_embeddings", &expected, table.shape()));
        }
        self.params.get_mut(self.embeddings).tensor = table;
        Ok(())
    }

    fn check_features(&self, features: &FeatureSet<S>) -> Result<()> {
        if features.dim() != self.config.feature_dim {
            return Err(Error::dim(
                "features",
                &[features.locations(), self.config.feature_dim],
                features.annotations.shape(),
            ));
        }
        Ok(())
    }

    /// Initial decoder state for an image.
    pub fn start(&self, g: &mut Graph<S>, bound: &Bound, annotations: Var) -> Result<StackState> {
        lstm::init_states(g, bound, &self.stack, annotations)
    }

    /// Consumes `token` and predicts the next one.
    pub fn step(
        &self,
        g: &mut Graph<S>,
        bound: &Bound,
        annotations: Var,
        state: &StackState,
        token: usize,
    ) -> Result<Step> {
        if token >= self.config.vocab_size {
            return Err(Error::Contract(format!(
                "token {token} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let emb = g.row(bound[self.embeddings], token)?;
        let (input, alpha) = match &self.attention {
            Some(p) => {
                let att = attention::attend(g, bound, p, annotations, state.top())?;
                (g.concat(&[emb, att.context], 0)?, Some(att.alpha))
            }
            None => (emb, None),
        };
        let (top, state) = lstm::stack_step(g, bound, &self.stack, input, state)?;
        let logits = self.output.apply(g, bound, top)?;
        Ok(Step {
            logits,
            state,
            alpha,
        })
    }

    /// Teacher-forced pass on an existing graph: position `t` reads
    /// `tokens[t]` and predicts `tokens[t + 1]`.
    pub fn forward(&self, g: &mut Graph<S>, bound: &Bound, annotations: Var, tokens: &[usize]) -> Result<Forward> {
        if tokens.first() != Some(&START) {
            return Err(Error::Contract("caption must begin with <START>".into()));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(Error::Contract(format!(
                "token {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        let mut state = self.start(g, bound, annotations)?;
        let steps = tokens.len().saturating_sub(1);
        let mut out = Forward {
            logits: Vec::with_capacity(steps),
            alphas: Vec::new(),
        };
        for &token in &tokens[..steps] {
            let s = self.step(g, bound, annotations, &state, token)?;
            out.logits.push(s.logits);
            out.alphas.extend(s.alpha);
            state = s.state;
        }
        Ok(out)
    }

    /// Teacher-forced logits as a `[T×K]` matrix, `T = len − 1`.
    pub fn forward_teacher_forced(&self, features: &FeatureSet<S>, tokens: &[usize]) -> Result<Tensor<S>> {
        self.check_features(features)?;
        let mut g = Graph::new();
        let bound = self.params.bind(&mut g);
        let a = g.constant(features.annotations.clone());
        let f = self.forward(&mut g, &bound, a, tokens)?;
        let k = self.config.vocab_size;
        let mut data = Vec::with_capacity(f.logits.len() * k);
        for &l in &f.logits {
            data.extend_from_slice(g.value(l).data());
        }
        Tensor::matrix(f.logits.len(), k, data)
    }

    /// `Σ_t log softmax(logits_t)[w_{t+1}]` over the teacher-forced pass.
    pub fn sequence_logprob(&self, features: &FeatureSet<S>, tokens: &[usize]) -> Result<S> {
        let logits = self.forward_teacher_forced(features, tokens)?;
        let mut total = S::zero();
        for t in 0..logits.rows() {
            let lp = log_softmax(logits.row(t))?;
            total += lp[tokens[t + 1]];
        }
        Ok(total)
    }

    fn session(&self, features: &FeatureSet<S>) -> Result<Session<'_, S>> {
        self.check_features(features)?;
        let mut graph = Graph::new();
        let bound = self.params.bind(&mut graph);
        let annotations = graph.constant(features.annotations.clone());
        Ok(Session {
            model: self,
            graph,
            bound,
            annotations,
        })
    }

    /// Picks the most probable token at every step (lowest index on ties)
    /// until `<END>` or `n_max` words.
    pub fn greedy_decode(&self, features: &FeatureSet<S>, n_max: usize) -> Result<Decoded<S>> {
        let mut s = self.session(features)?;
        let mut state = s.start()?;
        let mut out = Decoded {
            tokens: Vec::new(),
            log_prob: S::zero(),
            alphas: Vec::new(),
        };
        let mut token = START;
        while out.tokens.len() < n_max {
            let (lp, next, alpha) = s.advance(&state, token)?;
            out.alphas.extend(alpha);
            let k = argmax(&lp);
            out.log_prob += lp[k];
            if k == END {
                break;
            }
            out.tokens.push(k);
            token = k;
            state = next;
        }
        Ok(out)
    }

    /// Beam search without length normalization. Every step keeps the
    /// `beam_width` best expansions; those ending in `<END>` retire to a
    /// pool, and beams still open after `n_max` words retire as they are.
    /// Ties between equal scores go to the lexicographically smaller
    /// sequence.
    pub fn beam_decode(&self, features: &FeatureSet<S>, beam_width: usize, n_max: usize) -> Result<Decoded<S>> {
        if beam_width == 0 {
            return Err(Error::Domain("beam width must be at least 1".into()));
        }
        let mut s = self.session(features)?;
        let mut beams = vec![Hypothesis {
            tokens: Vec::new(),
            log_prob: S::zero(),
            alphas: Vec::new(),
            state: s.start()?,
            last: START,
        }];
        let mut pool: Vec<Decoded<S>> = Vec::new();

        for _ in 0..n_max {
            let mut expansions = Vec::new();
            let mut successors = Vec::with_capacity(beams.len());
            for (b, hyp) in beams.iter().enumerate() {
                let (lp, next, alpha) = s.advance(&hyp.state, hyp.last)?;
                for (k, &l) in lp.iter().enumerate() {
                    expansions.push((b, k, hyp.log_prob + l));
                }
                successors.push((next, alpha));
            }
            expansions.sort_by(|x, y| {
                y.2.partial_cmp(&x.2)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| beams[x.0].tokens.cmp(&beams[y.0].tokens))
                    .then(x.1.cmp(&y.1))
            });
            expansions.truncate(beam_width);

            let mut next_beams = Vec::with_capacity(expansions.len());
            for (b, k, score) in expansions {
                let hyp = &beams[b];
                let mut alphas = hyp.alphas.clone();
                alphas.extend(successors[b].1.clone());
                if k == END {
                    pool.push(Decoded {
                        tokens: hyp.tokens.clone(),
                        log_prob: score,
                        alphas,
                    });
                } else {
                    let mut tokens = hyp.tokens.clone();
                    tokens.push(k);
                    next_beams.push(Hypothesis {
                        tokens,
                        log_prob: score,
                        alphas,
                        state: successors[b].0.clone(),
                        last: k,
                    });
                }
            }
            beams = next_beams;
            if beams.is_empty() {
                break;
            }
        }
        pool.extend(beams.into_iter().map(|h| Decoded {
            tokens: h.tokens,
            log_prob: h.log_prob,
            alphas: h.alphas,
        }));
        Ok(pool
            .into_iter()
            .min_by(|x, y| {
                y.log_prob
                    .partial_cmp(&x.log_prob)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| x.tokens.cmp(&y.tokens))
            })
            .expect("pool holds at least one sequence"))
    }
}

struct Hypothesis<S> {
    tokens: Vec<usize>,
    log_prob: S,
    alphas: Vec<Vec<S>>,
    state: StackState,
    last: usize,
}

/// A decoding graph for one image.
struct Session<'m, S: Scalar> {
    model: &'m CaptionModel<S>,
    graph: Graph<S>,
    bound: Bound,
    annotations: Var,
}

impl<S: Scalar> Session<'_, S> {
    fn start(&mut self) -> Result<StackState> {
        self.model.start(&mut self.graph, &self.bound, self.annotations)
    }

    /// Log-probabilities of the next token, the new state and the weights.
    fn advance(&mut self, state: &StackState, token: usize) -> Result<(Vec<S>, StackState, Option<Vec<S>>)> {
        let s = self
            .model
            .step(&mut self.graph, &self.bound, self.annotations, state, token)?;
        let lp = log_softmax(self.graph.value(s.logits).data())?;
        let alpha = s.alpha.map(|a| self.graph.value(a).data().to_vec());
        Ok((lp, s.state, alpha))
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<S: Scalar>(v: &[S]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::simplex_stats;
    use crate::text::PAD;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tiny(variant: Variant, k: usize, seed: u64) -> CaptionModel<f64> {
        let config = ModelConfig {
            variant,
            vocab_size: k,
            embed_dim: 4,
            feature_dim: 3,
            hidden: 5,
            attention_dim: 4,
            layers: 3,
        };
        CaptionModel::new(config, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
    }

    fn features(seed: u64) -> FeatureSet<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureSet::new("x", Tensor::uniform(&[4, 3], 1.0, &mut rng)).unwrap()
    }

    /// Scales the output layer so the model has sharp, varied preferences.
    fn sharpen(m: &mut CaptionModel<f64>, factor: f64) {
        let w = m.output().weight;
        let t = m.params().get(w).tensor.map(|x| x * factor);
        m.params_mut().get_mut(w).tensor = t;
    }

    fn zeroed(variant: Variant, k: usize) -> CaptionModel<f64> {
        let mut m = tiny(variant, k, 0);
        for (_, p) in m.params_mut().iter_mut() {
            p.tensor.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        m
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("soft_attention".parse::<Variant>().unwrap(), Variant::SoftAttention);
        assert_eq!(Variant::EncoderDecoder.to_string(), "encoder_decoder");
        assert!("hard".parse::<Variant>().is_err());
    }

    #[test]
    fn attention_present_iff_soft_attention() {
        assert!(tiny(Variant::SoftAttention, 7, 0).attention().is_some());
        let ed = tiny(Variant::EncoderDecoder, 7, 0);
        assert!(ed.attention().is_none());
        assert!(ed.params().iter().all(|(_, p)| !p.name.starts_with("attention")));
        let out = ed.params().get(ed.output().weight);
        assert_eq!(out.tensor.shape(), [7, 5]);
    }

    #[test]
    fn one_logit_row_for_start_end() {
        let m = tiny(Variant::SoftAttention, 6, 1);
        let l = m.forward_teacher_forced(&features(0), &[START, END]).unwrap();
        assert_eq!(l.shape(), [1, 6]);
    }

    #[test]
    fn missing_start_is_rejected() {
        let m = tiny(Variant::EncoderDecoder, 6, 1);
        assert!(matches!(
            m.forward_teacher_forced(&features(0), &[4, END]),
            Err(Error::Contract(_))
        ));
        assert!(matches!(
            m.sequence_logprob(&features(0), &[START, 9, END]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn feature_width_mismatch() {
        let m = tiny(Variant::EncoderDecoder, 6, 1);
        let f = FeatureSet::new("x", Tensor::zeros(&[2, 5])).unwrap();
        assert!(matches!(m.greedy_decode(&f, 3), Err(Error::Dimension { .. })));
    }

    #[test]
    fn zero_model_is_uniform() {
        for variant in [Variant::EncoderDecoder, Variant::SoftAttention] {
            let m = zeroed(variant, 6);
            let caption = [START, 4, 5, 3, END];
            let a = m.forward_teacher_forced(&features(1), &caption).unwrap();
            let b = m.forward_teacher_forced(&features(1), &caption).unwrap();
            assert_eq!(a, b);
            assert!(a.data().iter().all(|&x| x == 0.0));
            let lp = m.sequence_logprob(&features(2), &caption).unwrap();
            assert!((lp - 4.0 * (1.0f64 / 6.0).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_built_three_token_model() {
        let mut m = zeroed(Variant::EncoderDecoder, 3);
        let bias = [0.5, -1.0, 2.0];
        let b = m.output().bias;
        m.params_mut().get_mut(b).tensor = Tensor::vector(bias.to_vec());
        // Logits equal the bias at every step; softmax by hand.
        let z: f64 = bias.iter().map(|x: &f64| x.exp()).sum();
        let expected = (bias[PAD].exp() / z).ln() + (bias[END].exp() / z).ln();
        let lp = m.sequence_logprob(&features(0), &[START, PAD, END]).unwrap();
        assert!((lp - expected).abs() < 1e-12);
        assert!(lp <= 0.0);
    }

    #[test]
    fn encoder_decoder_sees_only_the_mean() {
        let m = tiny(Variant::EncoderDecoder, 7, 3);
        let rows = vec![vec![0.5, -0.25, 0.75], vec![0.125, 0.5, -1.0], vec![1.0, 0.0, 0.25]];
        let mut shifted = rows.clone();
        shifted[0][1] += 0.5;
        shifted[2][1] -= 0.5;
        let permuted = vec![rows[2].clone(), rows[0].clone(), rows[1].clone()];
        let caption = [START, 4, 6, 5, END];
        let base = FeatureSet::new("a", Tensor::from_rows(&rows).unwrap()).unwrap();
        let l0 = m.forward_teacher_forced(&base, &caption).unwrap();
        for other in [shifted, permuted] {
            let f = FeatureSet::new("b", Tensor::from_rows(&other).unwrap()).unwrap();
            let l1 = m.forward_teacher_forced(&f, &caption).unwrap();
            for (x, y) in l0.data().iter().zip(l1.data()) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn soft_attention_depends_on_individual_rows() {
        let m = tiny(Variant::SoftAttention, 7, 3);
        let rows = vec![vec![0.5, -0.25, 0.75], vec![0.125, 0.5, -1.0]];
        let mut shifted = rows.clone();
        shifted[0][1] += 0.5;
        shifted[1][1] -= 0.5;
        let a = FeatureSet::new("a", Tensor::from_rows(&rows).unwrap()).unwrap();
        let b = FeatureSet::new("b", Tensor::from_rows(&shifted).unwrap()).unwrap();
        let la = m.forward_teacher_forced(&a, &[START, 4, END]).unwrap();
        let lb = m.forward_teacher_forced(&b, &[START, 4, END]).unwrap();
        assert!(la.data().iter().zip(lb.data()).any(|(x, y)| (x - y).abs() > 1e-9));
    }

    #[test]
    fn greedy_zero_length_and_determinism() {
        let m = tiny(Variant::SoftAttention, 8, 4);
        let f = features(5);
        let empty = m.greedy_decode(&f, 0).unwrap();
        assert!(empty.tokens.is_empty());
        assert_eq!(empty.log_prob, 0.0);
        assert_eq!(m.greedy_decode(&f, 6).unwrap(), m.greedy_decode(&f, 6).unwrap());
    }

    #[test]
    fn greedy_log_prob_matches_teacher_forcing() {
        let mut m = tiny(Variant::SoftAttention, 8, 6);
        sharpen(&mut m, 6.0);
        let f = features(2);
        let d = m.greedy_decode(&f, 10).unwrap();
        let mut seq = vec![START];
        seq.extend(&d.tokens);
        let finished = d.tokens.len() < 10;
        if finished {
            seq.push(END);
        }
        let lp = m.sequence_logprob(&f, &seq).unwrap();
        assert!((lp - d.log_prob).abs() < 1e-12);
    }

    #[test]
    fn soft_attention_decode_emits_simplex_weights() {
        let before = simplex_stats();
        let m = tiny(Variant::SoftAttention, 8, 7);
        let d = m.greedy_decode(&features(3), 5).unwrap();
        assert!(!d.alphas.is_empty());
        for a in &d.alphas {
            assert_eq!(a.len(), 4);
            assert!(a.iter().all(|&x| x > 0.0));
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let after = simplex_stats().since(before);
        assert!(after.checked >= d.alphas.len() as u64);
        let ed = tiny(Variant::EncoderDecoder, 8, 7);
        assert!(ed.greedy_decode(&features(3), 5).unwrap().alphas.is_empty());
    }

    #[test]
    fn beam_width_one_is_greedy() {
        for seed in 0..12 {
            let variant = if seed % 2 == 0 { Variant::EncoderDecoder } else { Variant::SoftAttention };
            let mut m = tiny(variant, 6 + seed as usize % 3, seed);
            sharpen(&mut m, 1.0 + seed as f64);
            let f = features(seed + 100);
            let g = m.greedy_decode(&f, 7).unwrap();
            let b = m.beam_decode(&f, 1, 7).unwrap();
            assert_eq!(g.tokens, b.tokens);
            assert_eq!(g.log_prob, b.log_prob);
            assert_eq!(g.alphas, b.alphas);
        }
    }

    #[test]
    fn beam_width_zero_is_rejected() {
        let m = tiny(Variant::EncoderDecoder, 6, 0);
        assert!(matches!(m.beam_decode(&features(0), 0, 3), Err(Error::Domain(_))));
    }

    /// Every caption of at most `n_max` words, scored by teacher forcing.
    /// Captions shorter than `n_max` must end with `<END>`; captions of
    /// exactly `n_max` words are also complete without it.
    fn enumerate(m: &CaptionModel<f64>, f: &FeatureSet<f64>, n_max: usize) -> Vec<(Vec<usize>, f64, bool)> {
        let k = m.config().vocab_size;
        let words: Vec<usize> = (0..k).filter(|&t| t != END).collect();
        let mut prefixes: Vec<Vec<usize>> = vec![vec![]];
        let mut out = Vec::new();
        for len in 0..=n_max {
            for w in &prefixes {
                let mut seq = vec![START];
                seq.extend(w);
                let mut closed = seq.clone();
                closed.push(END);
                out.push((w.clone(), m.sequence_logprob(f, &closed).unwrap(), true));
                if len == n_max {
                    let mut open = seq;
                    // Score the words alone: append a dummy target and
                    // drop its term.
                    open.push(END);
                    let logits = m.forward_teacher_forced(f, &open).unwrap();
                    let mut lp = 0.0;
                    for t in 0..n_max {
                        let row = logits.row(t);
                        let z: f64 = row.iter().map(|x| x.exp()).sum();
                        lp += (row[open[t + 1]].exp() / z).ln();
                    }
                    out.push((w.clone(), lp, false));
                }
            }
            prefixes = prefixes
                .iter()
                .flat_map(|p| {
                    words.iter().map(move |&t| {
                        let mut q = p.clone();
                        q.push(t);
                        q
                    })
                })
                .collect();
        }
        out
    }

    #[test]
    fn exhaustive_beam_matches_enumeration() {
        for (seed, variant) in [(1, Variant::EncoderDecoder), (2, Variant::SoftAttention), (3, Variant::SoftAttention)] {
            let mut m = tiny(variant, 5, seed);
            sharpen(&mut m, 3.0);
            let f = features(seed);
            let n_max = 3;
            let all = enumerate(&m, &f, n_max);
            let best = all
                .iter()
                .max_by(|x, y| x.1.partial_cmp(&y.1).unwrap().then_with(|| y.0.cmp(&x.0)))
                .unwrap();
            let beam = m.beam_decode(&f, 125, n_max).unwrap();
            assert_eq!(beam.tokens, best.0);
            assert!((beam.log_prob - best.1).abs() < 1e-9);
            for width in [1, 2, 3, 5, 20] {
                let narrow = m.beam_decode(&f, width, n_max).unwrap();
                assert!(narrow.log_prob <= beam.log_prob + 1e-12);
            }
        }
    }

    #[test]
    fn probability_mass_at_most_one() {
        for variant in [Variant::EncoderDecoder, Variant::SoftAttention] {
            let m = tiny(variant, 5, 11);
            let total: f64 = enumerate(&m, &features(4), 3)
                .iter()
                .filter(|e| e.2)
                .map(|e| e.1.exp())
                .sum();
            assert!(total <= 1.0 + 1e-12, "mass {total}");
            assert!(total > 0.0);
        }
    }

    #[test]
    fn argmax_prefers_lower_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[0.0f64; 4]), 0);
    }
}
