//! Adam with optional L2 weight decay (decay added to the gradient).

use crate::{ParamSet, Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        let zeros = |p: &crate::Param<T>| Tensor::zeros(p.value().shape());
        Adam {
            config,
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }

    /// One update. Parameters whose gradient slot is `None` are skipped,
    /// moments included.
    pub fn update(&mut self, lr: f64, params: &mut ParamSet<T>, grads: &[Option<&Tensor<T>>]) {
        assert_eq!(grads.len(), params.len(), "one gradient slot per parameter");
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let (one, eps, wd) = (T::one(), T::lit(c.eps), T::lit(c.weight_decay));
        let step = T::lit(lr / (1.0 - c.beta1.powi(t)));
        let inv_bc2 = T::lit(1.0 / (1.0 - c.beta2.powi(t)));
        let decay = c.weight_decay != 0.0;
        for (i, p) in params.iter_mut().enumerate() {
            let Some(g) = grads[i] else { continue };
            assert_eq!(g.shape(), p.value().shape(), "gradient shape for {}", p.name);
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            let w = p.value_mut().data_mut();
            for (((wj, mj), vj), &gj) in w.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()).zip(g.data()) {
                let gj = if decay { gj + wd * *wj } else { gj };
                *mj = b1 * *mj + (one - b1) * gj;
                *vj = b2 * *vj + (one - b2) * gj * gj;
                *wj = *wj - step * *mj / ((*vj * inv_bc2).sqrt() + eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut ps = ParamSet::<f64>::new();
        ps.push("w", Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]));
        let mut adam = Adam::new(AdamConfig::default(), &ps);
        let g = Tensor::from_vec(&[3], vec![0.3, -4.0, 0.0]);
        adam.update(0.1, &mut ps, &[Some(&g)]);
        let w = ps.get(0).value().data();
        assert!((w[0] - 0.9).abs() < 1e-6);
        assert!((w[1] + 1.9).abs() < 1e-6);
        assert_eq!(w[2], 0.5);
    }

    #[test]
    fn zero_gradients_leave_parameters_fixed() {
        let mut ps = ParamSet::<f32>::new();
        ps.push("w", Tensor::from_vec(&[2], vec![1.0, 2.0]));
        let mut adam = Adam::new(AdamConfig::default(), &ps);
        let g = Tensor::zeros(&[2]);
        for _ in 0..5 {
            adam.update(1e-3, &mut ps, &[Some(&g)]);
        }
        adam.update(1e-3, &mut ps, &[None]);
        assert_eq!(adam.step, 6);
        assert_eq!(ps.get(0).value().data(), &[1.0, 2.0]);
    }
}
