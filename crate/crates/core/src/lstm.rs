//! LSTM cell, stacked layers, and mean-annotation initial states.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Bound, Graph, ParamId, ParamStore, Tensor, Var};

/// Input projection, recurrent projection and bias of one gate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GateParams {
    pub input: ParamId,
    pub recurrent: ParamId,
    pub bias: ParamId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LstmLayerParams {
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub output_gate: GateParams,
    /// The `tanh` candidate `z_t`.
    pub candidate: GateParams,
    pub input_dim: usize,
    pub hidden: usize,
}

/// `x ↦ W·x + b`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Affine {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Affine {
    pub fn register<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        out_dim: usize,
        in_dim: usize,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim as f64).sqrt();
        Affine {
            weight: store.add(
                format!("{name}.weight"),
                Tensor::uniform(&[out_dim, in_dim], bound, rng),
            ),
            bias: store.add(format!("{name}.bias"), Tensor::uniform(&[out_dim], bound, rng)),
        }
    }

    pub fn apply<S: Scalar>(&self, g: &mut Graph<S>, bound: &Bound, x: Var) -> Result<Var> {
        let wx = g.matmul(bound[self.weight], x)?;
        g.add(wx, bound[self.bias])
    }
}

/// Weights of the layer stack and of the per-layer initial-state maps.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StackParams {
    pub layers: Vec<LstmLayerParams>,
    pub init_h: Vec<Affine>,
    pub init_c: Vec<Affine>,
}

/// Hidden and cell state of every layer, bottom first.
#[derive(Clone, Debug)]
pub struct StackState {
    pub h: Vec<Var>,
    pub c: Vec<Var>,
}

impl StackState {
    pub fn top(&self) -> Var {
        *self.h.last().expect("at least one layer")
    }
}

fn register_gate<S: Scalar, R: Rng + ?Sized>(
    store: &mut ParamStore<S>,
    name: &str,
    input_dim: usize,
    hidden: usize,
    rng: &mut R,
) -> GateParams {
    GateParams {
        input: store.add(
            format!("{name}.w"),
            Tensor::uniform(&[hidden, input_dim], 1.0 / (input_dim as f64).sqrt(), rng),
        ),
        recurrent: store.add(
            format!("{name}.r"),
            Tensor::uniform(&[hidden, hidden], 1.0 / (hidden as f64).sqrt(), rng),
        ),
        bias: store.add(
            format!("{name}.b"),
            Tensor::uniform(&[hidden], 1.0 / (hidden as f64).sqrt(), rng),
        ),
    }
}

impl LstmLayerParams {
    pub fn register<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        input_dim: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let mut gate = |g: &str| register_gate(store, &format!("{name}.{g}"), input_dim, hidden, rng);
        LstmLayerParams {
            input_gate: gate("input"),
            forget_gate: gate("forget"),
            output_gate: gate("output"),
            candidate: gate("cell"),
            input_dim,
            hidden,
        }
    }
}

impl StackParams {
    /// Registers `layers` LSTM layers (the first reading `input_dim`, the
    /// rest reading the layer below) and one `h`/`c` initializer per layer
    /// reading `feature_dim`.
    pub fn register<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        layers: usize,
        input_dim: usize,
        hidden: usize,
        feature_dim: usize,
        rng: &mut R,
    ) -> Self {
        let layer_params = (0..layers)
            .map(|l| {
                let in_dim = if l == 0 { input_dim } else { hidden };
                LstmLayerParams::register(store, &format!("lstm.{}", l + 1), in_dim, hidden, rng)
            })
            .collect();
        let init_h = (0..layers)
            .map(|l| Affine::register(store, &format!("init_h.{}", l + 1), hidden, feature_dim, rng))
            .collect();
        let init_c = (0..layers)
            .map(|l| Affine::register(store, &format!("init_c.{}", l + 1), hidden, feature_dim, rng))
            .collect();
        StackParams {
            layers: layer_params,
            init_h,
            init_c,
        }
    }
}

fn gate_preactivation<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    p: &GateParams,
    u: Var,
    h_prev: Var,
) -> Result<Var> {
    let wu = g.matmul(bound[p.input], u)?;
    let rh = g.matmul(bound[p.recurrent], h_prev)?;
    let sum = g.add(wu, rh)?;
    g.add(sum, bound[p.bias])
}

fn expect_len<S: Scalar>(g: &Graph<S>, v: Var, len: usize, what: &str) -> Result<()> {
    let shape = g.value(v).shape();
    if shape != [len] {
        return Err(Error::Contract(format!(
            "{what} must be a vector of length {len}, got shape {shape:?}"
        )));
    }
    Ok(())
}

/// One LSTM update:
/// `i, f, o = σ(W u + R h + b)`, `z = tanh(W_z u + R_z h + b_z)`,
/// `c_t = i⊙z + f⊙c_{t-1}`, `h_t = o⊙tanh(c_t)`.
pub fn cell_step<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    p: &LstmLayerParams,
    u: Var,
    h_prev: Var,
    c_prev: Var,
) -> Result<(Var, Var)> {
    expect_len(g, u, p.input_dim, "LSTM input")?;
    expect_len(g, h_prev, p.hidden, "previous hidden state")?;
    expect_len(g, c_prev, p.hidden, "previous cell state")?;

    let pre = gate_preactivation(g, bound, &p.input_gate, u, h_prev)?;
    let i = g.sigmoid(pre);
    let pre = gate_preactivation(g, bound, &p.forget_gate, u, h_prev)?;
    let f = g.sigmoid(pre);
    let pre = gate_preactivation(g, bound, &p.output_gate, u, h_prev)?;
    let o = g.sigmoid(pre);
    let pre = gate_preactivation(g, bound, &p.candidate, u, h_prev)?;
    let z = g.tanh(pre);

    let iz = g.mul(i, z)?;
    let fc = g.mul(f, c_prev)?;
    let c = g.add(iz, fc)?;
    let tc = g.tanh(c);
    let h = g.mul(o, tc)?;
    Ok((h, c))
}

/// Feeds the mean annotation through each layer's `tanh(A·ā + b)` maps.
pub fn init_states<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    p: &StackParams,
    annotations: Var,
) -> Result<StackState> {
    if g.value(annotations).rank() != 2 {
        return Err(Error::Domain(format!(
            "annotations must be an L×D matrix with L ≥ 1, got shape {:?}",
            g.value(annotations).shape()
        )));
    }
    let mean = g.mean_rows(annotations)?;
    let mut state = StackState {
        h: Vec::with_capacity(p.layers.len()),
        c: Vec::with_capacity(p.layers.len()),
    };
    for (fh, fc) in p.init_h.iter().zip(&p.init_c) {
        let h = fh.apply(g, bound, mean)?;
        state.h.push(g.tanh(h));
        let c = fc.apply(g, bound, mean)?;
        state.c.push(g.tanh(c));
    }
    Ok(state)
}

/// Runs `input` up the stack. Returns the top layer's hidden state and the
/// updated state of every layer.
pub fn stack_step<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    p: &StackParams,
    input: Var,
    state: &StackState,
) -> Result<(Var, StackState)> {
    if state.h.len() != p.layers.len() || state.c.len() != p.layers.len() {
        return Err(Error::Contract(format!(
            "state holds {} layers, stack has {}",
            state.h.len(),
            p.layers.len()
        )));
    }
    let mut x = input;
    let mut next = StackState {
        h: Vec::with_capacity(p.layers.len()),
        c: Vec::with_capacity(p.layers.len()),
    };
    for (l, layer) in p.layers.iter().enumerate() {
        let (h, c) = cell_step(g, bound, layer, x, state.h[l], state.c[l])?;
        next.h.push(h);
        next.c.push(c);
        x = h;
    }
    Ok((x, next))
}
