use super::{sigmoid, ParamId, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<S> {
    Leaf,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    /// Matrix plus a row vector broadcast over every row.
    AddRow(Var, Var),
    Scale(Var, S),
    Sigmoid(Var),
    Tanh(Var),
    Softmax(Var),
    Concat(Vec<Var>, usize),
    Transpose(Var),
    Reshape(Var),
    Row(Var, usize),
    MeanRows(Var),
    Sum(Var),
    CrossEntropy {
        logits: Var,
        targets: Vec<usize>,
        mask: Vec<bool>,
    },
}

#[derive(Debug)]
struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
}

/// Tape of recorded operations. Nodes are appended in evaluation order, so
/// the node list is already a topological order for the reverse sweep.
#[derive(Debug, Default)]
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    params: Vec<(ParamId, Var)>,
}

/// Operand shapes seen as matrices: a vector on the left is a row, on the
/// right a column.
fn matmul_dims(a: &[usize], b: &[usize]) -> Option<(usize, usize, usize, Vec<usize>)> {
    let (m, k) = match a {
        [k] => (1, *k),
        [m, k] => (*m, *k),
        _ => return None,
    };
    let (k2, n) = match b {
        [k] => (*k, 1),
        [k, n] => (*k, *n),
        _ => return None,
    };
    if k != k2 {
        return None;
    }
    let shape = match (a.len(), b.len()) {
        (2, 2) => vec![m, n],
        (2, 1) => vec![m],
        (1, 2) => vec![n],
        _ => vec![1],
    };
    Some((m, k, n, shape))
}

fn matmul_kernel<S: Scalar>(a: &[S], b: &[S], m: usize, k: usize, n: usize) -> Vec<S> {
    let mut c = vec![S::zero(); m * n];
    if n == 1 {
        for (i, out) in c.iter_mut().enumerate() {
            *out = a[i * k..(i + 1) * k]
                .iter()
                .zip(b)
                .map(|(&x, &y)| x * y)
                .sum();
        }
        return c;
    }
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            if a_ip == S::zero() {
                continue;
            }
            for (cj, &bj) in c_row.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *cj += a_ip * bj;
            }
        }
    }
    c
}

fn concat_layout(shapes: &[&[usize]], axis: usize) -> (usize, Vec<usize>) {
    let outer: usize = shapes[0][..axis].iter().product();
    let chunks = shapes
        .iter()
        .map(|s| s[axis..].iter().product())
        .collect();
    (outer, chunks)
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            params: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// A value that receives no gradient of interest (inputs, features).
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf)
    }

    /// A copy of a stored parameter whose gradient is reported back by id.
    pub fn param(&mut self, id: ParamId, value: &Tensor<S>) -> Var {
        let v = self.push(value.clone(), Op::Param);
        self.params.push((id, v));
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, n, shape) = matmul_dims(self.shape(a), self.shape(b))
            .ok_or_else(|| Error::dim("matmul", self.shape(a), self.shape(b)))?;
        let data = matmul_kernel(self.value(a).data(), self.value(b).data(), m, k, n);
        Ok(self.push(Tensor { shape, data }, Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(S, S) -> S) -> Tensor<S> {
        let (x, y) = (self.value(a), self.value(b));
        Tensor {
            shape: x.shape().to_vec(),
            data: x.data().iter().zip(y.data()).map(|(&p, &q)| f(p, q)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let value = self.zip_with(a, b, |p, q| p + q);
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let value = self.zip_with(a, b, |p, q| p * q);
        Ok(self.push(value, Op::Mul(a, b)))
    }

    /// `m[i, :] + v` for every row `i` of a matrix (or `m + v` for a vector).
    pub fn add_row(&mut self, m: Var, v: Var) -> Result<Var> {
        let (ms, vs) = (self.shape(m), self.shape(v));
        if vs.len() != 1 || ms.last() != vs.last() {
            return Err(Error::dim("add_row", ms, vs));
        }
        let (x, row) = (self.value(m), self.value(v).data());
        let cols = row.len();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &p)| p + row[i % cols])
            .collect();
        let value = Tensor {
            shape: x.shape().to_vec(),
            data,
        };
        Ok(self.push(value, Op::AddRow(m, v)))
    }

    pub fn scale(&mut self, a: Var, factor: S) -> Var {
        let value = self.value(a).map(|x| x * factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).map(sigmoid);
        self.push(value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(S::tanh);
        self.push(value, Op::Tanh(a))
    }

    /// Stabilized softmax over a vector.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        if self.value(a).rank() != 1 {
            return Err(Error::Contract(format!(
                "softmax expects a vector, got shape {:?}",
                self.shape(a)
            )));
        }
        let data = super::softmax(self.value(a).data())?;
        Ok(self.push(Tensor::vector(data), Op::Softmax(a)))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| Error::Contract("concat of zero tensors".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::Contract(format!(
                "concat axis {axis} out of range for rank {}",
                base.len()
            )));
        }
        for &x in &xs[1..] {
            let s = self.shape(x);
            let agrees = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(d, (p, q))| d == axis || p == q);
            if !agrees {
                return Err(Error::dim("concat", &base, s));
            }
        }
        let shapes: Vec<&[usize]> = xs.iter().map(|&x| self.shape(x)).collect();
        let (outer, chunks) = concat_layout(&shapes, axis);
        let mut shape = base;
        shape[axis] = shapes.iter().map(|s| s[axis]).sum();
        let mut data = Vec::with_capacity(chunks.iter().sum::<usize>() * outer);
        for o in 0..outer {
            for (&x, &chunk) in xs.iter().zip(&chunks) {
                data.extend_from_slice(&self.value(x).data()[o * chunk..(o + 1) * chunk]);
            }
        }
        Ok(self.push(Tensor { shape, data }, Op::Concat(xs.to_vec(), axis)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        let &[r, c] = x.shape() else {
            return Err(Error::Contract(format!(
                "transpose expects a matrix, got shape {:?}",
                x.shape()
            )));
        };
        let mut data = vec![S::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                data[j * r + i] = x.data()[i * c + j];
            }
        }
        Ok(self.push(
            Tensor {
                shape: vec![c, r],
                data,
            },
            Op::Transpose(a),
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(a).reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    /// Row `i` of a matrix as a vector. The backward pass writes only into
    /// that row.
    pub fn row(&mut self, m: Var, i: usize) -> Result<Var> {
        let x = self.value(m);
        if x.rank() != 2 || i >= x.rows() {
            return Err(Error::Contract(format!(
                "row {i} requested from tensor of shape {:?}",
                x.shape()
            )));
        }
        let value = Tensor::vector(x.row(i).to_vec());
        Ok(self.push(value, Op::Row(m, i)))
    }

    /// Column-wise mean of a matrix.
    pub fn mean_rows(&mut self, m: Var) -> Result<Var> {
        let x = self.value(m);
        if x.rank() != 2 {
            return Err(Error::Contract(format!(
                "mean_rows expects a matrix, got shape {:?}",
                x.shape()
            )));
        }
        let (rows, cols) = (x.rows(), x.cols());
        let inv = S::one() / S::from_usize(rows).expect("row count");
        let mut data = vec![S::zero(); cols];
        for r in 0..rows {
            for (acc, &v) in data.iter_mut().zip(x.row(r)) {
                *acc += v;
            }
        }
        data.iter_mut().for_each(|v| *v *= inv);
        Ok(self.push(Tensor::vector(data), Op::MeanRows(m)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let total = self.value(a).data().iter().copied().sum();
        self.push(Tensor::scalar(total), Op::Sum(a))
    }

    /// Masked mean negative log-likelihood of `targets` under row-wise
    /// softmax of `logits` `[T×K]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize], mask: &[bool]) -> Result<Var> {
        let x = self.value(logits);
        let (t, k) = match x.shape() {
            &[t, k] => (t, k),
            &[k] => (1, k),
            s => {
                return Err(Error::Contract(format!(
                    "cross_entropy expects [T×K] logits, got {s:?}"
                )))
            }
        };
        if targets.len() != t || mask.len() != t {
            return Err(Error::dim("cross_entropy", &[t], &[targets.len(), mask.len()]));
        }
        if let Some(&bad) = targets.iter().find(|&&y| y >= k) {
            return Err(Error::Contract(format!(
                "target index {bad} outside vocabulary of {k}"
            )));
        }
        let active = mask.iter().filter(|&&m| m).count();
        if active == 0 {
            return Err(Error::Domain("cross_entropy over an all-masked sequence".into()));
        }
        let mut total = S::zero();
        for (row, (&y, &m)) in targets.iter().zip(mask).enumerate() {
            if m {
                let logp = super::log_softmax(&x.data()[row * k..(row + 1) * k])?;
                total -= logp[y];
            }
        }
        let loss = total / S::from_usize(active).expect("count");
        Ok(self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy {
                logits,
                targets: targets.to_vec(),
                mask: mask.to_vec(),
            },
        ))
    }

    /// Reverse sweep from a scalar loss.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![S::one()]);

        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &dy, &mut grads);
            grads[i] = Some(dy);
        }

        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| {
                g.map(|data| Tensor {
                    shape: n.value.shape().to_vec(),
                    data,
                })
            })
            .collect();
        Ok(Gradients {
            grads,
            params: self.params.clone(),
        })
    }

    fn grad_slot<'g>(&self, grads: &'g mut [Option<Vec<S>>], v: Var) -> &'g mut Vec<S> {
        let n = self.nodes[v.0].value.len();
        grads[v.0].get_or_insert_with(|| vec![S::zero(); n])
    }

    fn propagate(&self, node: &Node<S>, dy: &[S], grads: &mut [Option<Vec<S>>]) {
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let (m, k, n, _) =
                    matmul_dims(self.shape(*a), self.shape(*b)).expect("checked in forward");
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let da = self.grad_slot(grads, *a);
                for i in 0..m {
                    for p in 0..k {
                        let dot: S = dy[i * n..(i + 1) * n]
                            .iter()
                            .zip(&bv[p * n..(p + 1) * n])
                            .map(|(&x, &y)| x * y)
                            .sum();
                        da[i * k + p] += dot;
                    }
                }
                let db = self.grad_slot(grads, *b);
                for i in 0..m {
                    for p in 0..k {
                        let a_ip = av[i * k + p];
                        for (d, &g) in db[p * n..(p + 1) * n].iter_mut().zip(&dy[i * n..(i + 1) * n])
                        {
                            *d += a_ip * g;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [*a, *b] {
                    self.grad_slot(grads, v).iter_mut().zip(dy).for_each(|(d, &g)| *d += g);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let da = self.grad_slot(grads, *a);
                for ((d, &g), &y) in da.iter_mut().zip(dy).zip(bv) {
                    *d += g * y;
                }
                let db = self.grad_slot(grads, *b);
                for ((d, &g), &x) in db.iter_mut().zip(dy).zip(av) {
                    *d += g * x;
                }
            }
            Op::AddRow(m, v) => {
                self.grad_slot(grads, *m).iter_mut().zip(dy).for_each(|(d, &g)| *d += g);
                let dv = self.grad_slot(grads, *v);
                let cols = dv.len();
                for (i, &g) in dy.iter().enumerate() {
                    dv[i % cols] += g;
                }
            }
            Op::Scale(a, factor) => {
                self.grad_slot(grads, *a)
                    .iter_mut()
                    .zip(dy)
                    .for_each(|(d, &g)| *d += g * *factor);
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                for ((d, &g), &s) in self.grad_slot(grads, *a).iter_mut().zip(dy).zip(y) {
                    *d += g * s * (S::one() - s);
                }
            }
            Op::Tanh(a) => {
                let y = node.value.data();
                for ((d, &g), &t) in self.grad_slot(grads, *a).iter_mut().zip(dy).zip(y) {
                    *d += g * (S::one() - t * t);
                }
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let inner: S = dy.iter().zip(y).map(|(&g, &p)| g * p).sum();
                for ((d, &g), &p) in self.grad_slot(grads, *a).iter_mut().zip(dy).zip(y) {
                    *d += p * (g - inner);
                }
            }
            Op::Concat(xs, axis) => {
                let shapes: Vec<&[usize]> = xs.iter().map(|&x| self.shape(x)).collect();
                let (outer, chunks) = concat_layout(&shapes, *axis);
                let total: usize = chunks.iter().sum();
                let mut offset = 0;
                for (&x, &chunk) in xs.iter().zip(&chunks) {
                    let dx = self.grad_slot(grads, x);
                    for o in 0..outer {
                        let src = &dy[o * total + offset..o * total + offset + chunk];
                        for (d, &g) in dx[o * chunk..(o + 1) * chunk].iter_mut().zip(src) {
                            *d += g;
                        }
                    }
                    offset += chunk;
                }
            }
            Op::Transpose(a) => {
                let (r, c) = (self.shape(*a)[0], self.shape(*a)[1]);
                let da = self.grad_slot(grads, *a);
                for i in 0..r {
                    for j in 0..c {
                        da[i * c + j] += dy[j * r + i];
                    }
                }
            }
            Op::Reshape(a) => {
                self.grad_slot(grads, *a).iter_mut().zip(dy).for_each(|(d, &g)| *d += g);
            }
            Op::Row(m, i) => {
                let cols = self.value(*m).cols();
                let dm = self.grad_slot(grads, *m);
                for (d, &g) in dm[i * cols..(i + 1) * cols].iter_mut().zip(dy) {
                    *d += g;
                }
            }
            Op::MeanRows(m) => {
                let x = self.value(*m);
                let (rows, cols) = (x.rows(), x.cols());
                let inv = S::one() / S::from_usize(rows).expect("row count");
                let dm = self.grad_slot(grads, *m);
                for r in 0..rows {
                    for (d, &g) in dm[r * cols..(r + 1) * cols].iter_mut().zip(dy) {
                        *d += g * inv;
                    }
                }
            }
            Op::Sum(a) => {
                let g = dy[0];
                self.grad_slot(grads, *a).iter_mut().for_each(|d| *d += g);
            }
            Op::CrossEntropy {
                logits,
                targets,
                mask,
            } => {
                let x = self.value(*logits);
                let k = x.cols();
                let active = mask.iter().filter(|&&m| m).count();
                let w = dy[0] / S::from_usize(active).expect("count");
                let dl = self.grad_slot(grads, *logits);
                for (row, (&y, &m)) in targets.iter().zip(mask).enumerate() {
                    if !m {
                        continue;
                    }
                    let p = super::softmax(&x.data()[row * k..(row + 1) * k])
                        .expect("non-empty row");
                    for (j, &pj) in p.iter().enumerate() {
                        let onehot = if j == y { S::one() } else { S::zero() };
                        dl[row * k + j] += w * (pj - onehot);
                    }
                }
            }
        }
    }
}

/// Result of a reverse sweep.
#[derive(Debug)]
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
    params: Vec<(ParamId, Var)>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient for `v`, or `None` when the loss does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradients summed per parameter id. A parameter bound more than once
    /// receives the sum of its copies' gradients.
    pub fn for_params(&self, n_params: usize) -> Vec<Option<Tensor<S>>> {
        let mut out: Vec<Option<Tensor<S>>> = vec![None; n_params];
        for &(id, v) in &self.params {
            let Some(g) = self.get(v) else { continue };
            match &mut out[id.index()] {
                Some(existing) => existing
                    .data_mut()
                    .iter_mut()
                    .zip(g.data())
                    .for_each(|(d, &x)| *d += x),
                slot => *slot = Some(g.clone()),
            }
        }
        out
    }
}
