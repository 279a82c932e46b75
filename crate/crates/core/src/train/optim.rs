use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{ParamStore, Tensor};

/// Adam with per-parameter step counts. Each parameter's step is scaled by
/// its `lr_scale`; frozen parameters and their moments are left alone.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<S> {
    pub base_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub(crate) m: Vec<Tensor<S>>,
    pub(crate) v: Vec<Tensor<S>>,
    pub(crate) t: Vec<u64>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(params: &ParamStore<S>, base_lr: f64) -> Self {
        let zeros = || params.iter().map(|(_, p)| Tensor::zeros(p.tensor.shape())).collect();
        Adam {
            base_lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros(),
            v: zeros(),
            t: vec![0; params.len()],
        }
    }

    /// Number of updates applied to parameter `index` so far.
    pub fn steps(&self, index: usize) -> u64 {
        self.t[index]
    }

    pub fn first_moment(&self, index: usize) -> &Tensor<S> {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &Tensor<S> {
        &self.v[index]
    }

    /// Applies one update. `grads` is indexed like `params`.
    pub fn step(&mut self, params: &mut ParamStore<S>, grads: &[Option<Tensor<S>>]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Contract(format!(
                "{} gradients and {} optimizer slots for {} parameters",
                grads.len(),
                self.m.len(),
                params.len()
            )));
        }
        let (b1, b2) = (S::of(self.beta1), S::of(self.beta2));
        let (one, eps, lr) = (S::one(), S::of(self.eps), S::of(self.base_lr));
        for (id, p) in params.iter_mut() {
            if !p.trainable {
                continue;
            }
            let i = id.index();
            let g = grads[i]
                .as_ref()
                .ok_or_else(|| Error::Contract(format!("missing gradient for {}", p.name)))?;
            if g.shape() != p.tensor.shape() {
                return Err(Error::dim("adam", p.tensor.shape(), g.shape()));
            }
            self.t[i] += 1;
            let t = self.t[i] as i32;
            let c1 = one - b1.powi(t);
            let c2 = one - b2.powi(t);
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((w, &gk), mk), vk) in p.tensor.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mk = b1 * *mk + (one - b1) * gk;
                *vk = b2 * *vk + (one - b2) * gk * gk;
                let delta = lr * (*mk / c1) / ((*vk / c2).sqrt() + eps);
                *w -= p.lr_scale * delta;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: &[(&str, f64, Vec<f64>)]) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        for (name, scale, v) in values {
            s.add_scaled(*name, Tensor::vector(v.clone()), *scale);
        }
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = store(&[("w", 1.0, vec![0.5, -2.0])]);
        let before = s.clone();
        let mut adam = Adam::new(&s, 1e-3);
        adam.step(&mut s, &[Some(Tensor::zeros(&[2]))]).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn first_step_moves_by_base_rate() {
        let mut s = store(&[("w", 1.0, vec![0.0])]);
        let mut adam = Adam::new(&s, 1e-3);
        adam.step(&mut s, &[Some(Tensor::vector(vec![1.0]))]).unwrap();
        // m̂ = 1, v̂ = 1, so the step is lr / (1 + ε).
        let w = s.get(crate::tensor::ParamId::new(0)).tensor.data()[0];
        assert!((w + 1e-3 / (1.0 + 1e-8)).abs() < 1e-15);
        assert!((w + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn scaled_group_moves_exactly_a_tenth() {
        let g = vec![0.3, -1.7, 4.0, 1e-4];
        let mut s = store(&[("decoder", 1.0, vec![0.0; 4]), ("embeddings", 0.1, vec![0.0; 4])]);
        let mut adam = Adam::new(&s, 1e-3);
        let grads = vec![Some(Tensor::vector(g.clone())), Some(Tensor::vector(g))];
        adam.step(&mut s, &grads).unwrap();
        let d: Vec<f64> = s.get(crate::tensor::ParamId::new(0)).tensor.data().to_vec();
        let e: Vec<f64> = s.get(crate::tensor::ParamId::new(1)).tensor.data().to_vec();
        for (x, y) in d.iter().zip(&e) {
            assert_eq!(*y, 0.1 * x);
        }
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut s = store(&[("w", 1.0, vec![0.25, 0.5])]);
        s.get_mut(crate::tensor::ParamId::new(0)).trainable = false;
        let before = s.clone();
        let mut adam = Adam::new(&s, 0.5);
        for _ in 0..3 {
            adam.step(&mut s, &[Some(Tensor::vector(vec![100.0, -3.0]))]).unwrap();
        }
        assert_eq!(s, before);
        assert_eq!(adam.steps(0), 0);
    }

    #[test]
    fn missing_gradient_is_a_contract_error() {
        let mut s = store(&[("w", 1.0, vec![0.0])]);
        let mut adam = Adam::new(&s, 1e-3);
        assert!(matches!(adam.step(&mut s, &[None]), Err(Error::Contract(_))));
    }
}
