//! Additive soft attention over annotation vectors.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Bound, Graph, ParamId, ParamStore, Tensor, Var};

/// Largest tolerated deviation of `Σα` from 1.
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionParams {
    /// `att × D`
    pub w_a: ParamId,
    /// `att × hidden`
    pub u_a: ParamId,
    /// `att`
    pub b_a: ParamId,
    /// `att`
    pub w_s: ParamId,
    pub feature_dim: usize,
    pub hidden: usize,
    pub attention_dim: usize,
}

impl AttentionParams {
    pub fn register<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        feature_dim: usize,
        hidden: usize,
        attention_dim: usize,
        rng: &mut R,
    ) -> Self {
        let att = attention_dim;
        let inv = |n: usize| 1.0 / (n as f64).sqrt();
        AttentionParams {
            w_a: store.add("attention.w_a", Tensor::uniform(&[att, feature_dim], inv(feature_dim), rng)),
            u_a: store.add("attention.u_a", Tensor::uniform(&[att, hidden], inv(hidden), rng)),
            b_a: store.add("attention.b_a", Tensor::uniform(&[att], inv(hidden), rng)),
            w_s: store.add("attention.w_s", Tensor::uniform(&[att], inv(att), rng)),
            feature_dim,
            hidden,
            attention_dim,
        }
    }
}

/// Weights and context vector produced at one decoding step.
#[derive(Clone, Copy, Debug)]
pub struct AttentionStep {
    pub alpha: Var,
    pub context: Var,
}

/// `e_i = w_sᵀ tanh(W_a a_i + U_a h_prev + b_a)` for every row `a_i`.
pub fn score<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    p: &AttentionParams,
    annotations: Var,
    h_prev: Var,
) -> Result<Var> {
    let a_shape = g.value(annotations).shape().to_vec();
    if a_shape.len() != 2 || a_shape[1] != p.feature_dim {
        return Err(Error::Contract(format!(
            "annotations must be L×{}, got {a_shape:?}",
            p.feature_dim
        )));
    }
    if g.value(h_prev).shape() != [p.hidden] {
        return Err(Error::Contract(format!(
            "attention state must have length {}, got {:?}",
            p.hidden,
            g.value(h_prev).shape()
        )));
    }
    let wt = g.transpose(bound[p.w_a])?;
    let proj = g.matmul(annotations, wt)?;
    let uh = g.matmul(bound[p.u_a], h_prev)?;
    let shift = g.add(uh, bound[p.b_a])?;
    let pre = g.add_row(proj, shift)?;
    let act = g.tanh(pre);
    g.matmul(act, bound[p.w_s])
}

/// Softmax over the location scores.
pub fn normalize<S: Scalar>(g: &mut Graph<S>, scores: Var) -> Result<Var> {
    g.softmax(scores)
}

/// `s = Σ_i α_i a_i`.
pub fn context<S: Scalar>(g: &mut Graph<S>, annotations: Var, alpha: Var) -> Result<Var> {
    let rows = g.value(annotations).shape()[0];
    if g.value(alpha).shape() != [rows] {
        return Err(Error::Contract(format!(
            "{} weights for {rows} annotation rows",
            g.value(alpha).len()
        )));
    }
    let at = g.transpose(annotations)?;
    g.matmul(at, alpha)
}

/// Scores, normalizes and pools in one step, recording the simplex check.
pub fn attend<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    p: &AttentionParams,
    annotations: Var,
    h_prev: Var,
) -> Result<AttentionStep> {
    let e = score(g, bound, p, annotations, h_prev)?;
    let alpha = normalize(g, e)?;
    check_simplex(g.value(alpha).data());
    let context = context(g, annotations, alpha)?;
    Ok(AttentionStep { alpha, context })
}

static CHECKED: AtomicU64 = AtomicU64::new(0);
static VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// Process-wide tally of attention weight vectors checked so far.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimplexStats {
    pub checked: u64,
    pub violations: u64,
}

impl SimplexStats {
    /// Counts accumulated since `earlier`.
    pub fn since(self, earlier: SimplexStats) -> SimplexStats {
        SimplexStats {
            checked: self.checked - earlier.checked,
            violations: self.violations - earlier.violations,
        }
    }
}

pub fn simplex_stats() -> SimplexStats {
    SimplexStats {
        checked: CHECKED.load(Ordering::Relaxed),
        violations: VIOLATIONS.load(Ordering::Relaxed),
    }
}

/// True when every weight is positive and they sum to 1 within
/// [`SIMPLEX_TOLERANCE`]. Every call is counted in [`simplex_stats`].
pub fn check_simplex<S: Scalar>(alpha: &[S]) -> bool {
    let sum: f64 = alpha.iter().map(|a| a.as_f64()).sum();
    let ok = !alpha.is_empty()
        && alpha.iter().all(|&a| a > S::zero())
        && (sum - 1.0).abs() <= SIMPLEX_TOLERANCE;
    CHECKED.fetch_add(1, Ordering::Relaxed);
    if !ok {
        VIOLATIONS.fetch_add(1, Ordering::Relaxed);
    }
    ok
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(d: usize, hidden: usize, att: usize, seed: u64) -> (ParamStore<f64>, AttentionParams) {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = AttentionParams::register(&mut store, d, hidden, att, &mut rng);
        (store, p)
    }

    fn scores_of(store: &ParamStore<f64>, p: &AttentionParams, a: &[Vec<f64>], h: &[f64]) -> Vec<f64> {
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let a = g.constant(Tensor::from_rows(a).unwrap());
        let h = g.constant(Tensor::vector(h.to_vec()));
        let e = score(&mut g, &b, p, a, h).unwrap();
        g.value(e).data().to_vec()
    }

    #[test]
    fn one_dimensional_hand_example() {
        let (mut store, p) = setup(1, 1, 1, 0);
        for (_, param) in store.iter_mut() {
            param.tensor.data_mut().iter_mut().for_each(|v| *v = 1.0);
        }
        let e = scores_of(&store, &p, &[vec![0.0], vec![1.0]], &[0.0]);
        assert!((e[0] - 1.0f64.tanh()).abs() < 1e-15);
        assert!((e[1] - 2.0f64.tanh()).abs() < 1e-15);
        assert!((e[0] - 0.76159).abs() < 1e-5 && (e[1] - 0.96403).abs() < 1e-5);
    }

    #[test]
    fn identical_rows_score_identically() {
        let (store, p) = setup(3, 4, 5, 1);
        let row = vec![0.3, -0.7, 1.1];
        let e = scores_of(&store, &p, &[row.clone(), row.clone(), row], &[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(e[0], e[1]);
        assert_eq!(e[1], e[2]);
    }

    #[test]
    fn zero_ws_gives_zero_scores() {
        let (mut store, p) = setup(2, 2, 3, 2);
        store.get_mut(p.w_s).tensor = Tensor::zeros(&[3]);
        let e = scores_of(&store, &p, &[vec![1.0, 2.0], vec![-1.0, 0.5]], &[0.3, 0.3]);
        assert!(e.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn score_dimension_mismatch() {
        let (store, p) = setup(2, 2, 3, 2);
        let mut g = Graph::new();
        let b = store.bind(&mut g);
        let a = g.constant(Tensor::zeros(&[2, 3]));
        let h = g.constant(Tensor::zeros(&[2]));
        assert!(matches!(score(&mut g, &b, &p, a, h), Err(Error::Contract(_))));
    }

    fn norm(scores: &[f64]) -> Vec<f64> {
        let mut g = Graph::new();
        let e = g.constant(Tensor::vector(scores.to_vec()));
        let a = normalize(&mut g, e).unwrap();
        g.value(a).data().to_vec()
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(norm(&[0.4; 4]), vec![0.25; 4]);
        assert_eq!(norm(&[-3.0]), vec![1.0]);
        let a = norm(&[0.0, 3.0f64.ln()]);
        assert!((a[0] - 0.25).abs() < 1e-15 && (a[1] - 0.75).abs() < 1e-15);
    }

    fn ctx(a: &[Vec<f64>], alpha: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let a = g.constant(Tensor::from_rows(a).unwrap());
        let al = g.constant(Tensor::vector(alpha.to_vec()));
        let s = context(&mut g, a, al)?;
        Ok(g.value(s).data().to_vec())
    }

    #[test]
    fn context_examples() {
        let a = vec![vec![0.0, 4.0], vec![4.0, 0.0]];
        assert_eq!(ctx(&a, &[0.25, 0.75]).unwrap(), vec![3.0, 1.0]);
        assert_eq!(ctx(&a, &[0.0, 1.0]).unwrap(), vec![4.0, 0.0]);
        assert_eq!(ctx(&a, &[0.5, 0.5]).unwrap(), vec![2.0, 2.0]);
        assert!(matches!(ctx(&a, &[0.2, 0.3, 0.5]), Err(Error::Contract(_))));
    }

    #[test]
    fn permutation_equivariance() {
        let (store, p) = setup(3, 4, 6, 5);
        let rows = vec![vec![0.1, 0.5, -0.2], vec![0.9, -0.4, 0.3], vec![-0.6, 0.2, 0.8], vec![0.0, 0.0, 1.0]];
        let perm = [2, 0, 3, 1];
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| rows[i].clone()).collect();
        let h = [0.2, -0.1, 0.4, 0.0];
        let run = |a: &[Vec<f64>]| {
            let mut g = Graph::new();
            let b = store.bind(&mut g);
            let av = g.constant(Tensor::from_rows(a).unwrap());
            let hv = g.constant(Tensor::vector(h.to_vec()));
            let step = attend(&mut g, &b, &p, av, hv).unwrap();
            (g.value(step.alpha).data().to_vec(), g.value(step.context).data().to_vec())
        };
        let (alpha, s) = run(&rows);
        let (alpha_p, s_p) = run(&permuted);
        for (k, &i) in perm.iter().enumerate() {
            assert!((alpha_p[k] - alpha[i]).abs() < 1e-15);
        }
        for (x, y) in s.iter().zip(&s_p) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_check_counts() {
        let before = simplex_stats();
        assert!(check_simplex(&[0.25, 0.75]));
        assert!(!check_simplex(&[0.0, 1.0]));
        assert!(!check_simplex(&[0.5, 0.6]));
        let d = simplex_stats().since(before);
        assert!(d.checked >= 3 && d.violations >= 2);
    }
}
