use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{GradientSet, Network};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OptimizerKind {
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
    SgdMomentum { lr: f64, momentum: f64 },
}

impl OptimizerKind {
    /// Adam with `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn adam(lr: f64) -> Self {
        OptimizerKind::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn sgd_momentum(lr: f64, momentum: f64) -> Self {
        OptimizerKind::SgdMomentum { lr, momentum }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            OptimizerKind::Adam { lr, .. } | OptimizerKind::SgdMomentum { lr, .. } => lr,
        }
    }

    pub fn with_lr(self, lr: f64) -> Self {
        match self {
            OptimizerKind::Adam { beta1, beta2, eps, .. } => OptimizerKind::Adam { lr, beta1, beta2, eps },
            OptimizerKind::SgdMomentum { momentum, .. } => OptimizerKind::SgdMomentum { lr, momentum },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                lr > 0.0 && (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0
            }
            OptimizerKind::SgdMomentum { lr, momentum } => lr > 0.0 && (0.0..1.0).contains(&momentum),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Per-tensor Adam moments.
#[derive(Clone, Debug, Default)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

/// One bias-corrected Adam update of a flat parameter slice. `t` is the
/// 1-based step count after incrementing.
pub fn adam_step(
    state: &mut AdamState,
    params: &mut [f64],
    grads: &[f64],
    t: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
) {
    if state.m.len() != params.len() {
        state.m = vec![0.0; params.len()];
        state.v = vec![0.0; params.len()];
    }
    let bc1 = 1.0 - beta1.powi(t as i32);
    let bc2 = 1.0 - beta2.powi(t as i32);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = beta1 * *m + (1.0 - beta1) * g;
        *v = beta2 * *v + (1.0 - beta2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// `v <- mu v + g; p <- p - lr v`.
pub fn sgd_momentum_step(velocity: &mut Vec<f64>, params: &mut [f64], grads: &[f64], lr: f64, momentum: f64) {
    if velocity.len() != params.len() {
        *velocity = vec![0.0; params.len()];
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

/// Stateful optimizer over all trainable parameters of a network.
#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    step: u64,
    adam: Vec<AdamState>,
    velocity: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind) -> Result<Self> {
        kind.validate()?;
        Ok(Self {
            kind,
            step: 0,
            adam: Vec::new(),
            velocity: Vec::new(),
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, net: &mut Network, grads: &GradientSet) -> Result<()> {
        let mut params = net.parameters_mut();
        if params.len() != grads.len() {
            return Err(Error::Contract(format!(
                "{} gradients for {} parameters",
                grads.len(),
                params.len()
            )));
        }
        self.step += 1;
        if self.adam.len() != params.len() {
            self.adam = vec![AdamState::default(); params.len()];
            self.velocity = vec![Vec::new(); params.len()];
        }
        for (k, ((id, p), (gid, g))) in params.iter_mut().zip(grads.iter()).enumerate() {
            if id != gid || !same(p, g) {
                return Err(Error::Contract(format!("gradient {gid:?} does not match parameter {id:?}")));
            }
            match self.kind {
                OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                    adam_step(&mut self.adam[k], p.data_mut(), g.data(), self.step, lr, beta1, beta2, eps)
                }
                OptimizerKind::SgdMomentum { lr, momentum } => {
                    sgd_momentum_step(&mut self.velocity[k], p.data_mut(), g.data(), lr, momentum)
                }
            }
        }
        Ok(())
    }
}

fn same(p: &Tensor, g: &Tensor) -> bool {
    p.shape() == g.shape()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    // element-at-a-time reference without bias-correction shortcuts
    fn adam_oracle(p: &mut [f64], g_seq: &[Vec<f64>], lr: f64, b1: f64, b2: f64, eps: f64) {
        for i in 0..p.len() {
            let (mut m, mut v) = (0.0, 0.0);
            for (t, g) in g_seq.iter().enumerate() {
                let t = (t + 1) as f64;
                m = b1 * m + (1.0 - b1) * g[i];
                v = b2 * v + (1.0 - b2) * g[i] * g[i];
                let mh = m / (1.0 - b1.powf(t));
                let vh = v / (1.0 - b2.powf(t));
                p[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
    }

    #[test]
    fn adam_zero_gradient_leaves_params() {
        let mut s = AdamState::default();
        let mut p = vec![1.0, -2.0];
        adam_step(&mut s, &mut p, &[0.0, 0.0], 1, 0.1, 0.9, 0.999, 1e-8);
        assert_eq!(p, vec![1.0, -2.0]);

        // moments decay under zero gradient
        let mut s = AdamState::default();
        let mut p = vec![1.0];
        adam_step(&mut s, &mut p, &[1.0], 1, 0.1, 0.9, 0.999, 1e-8);
        let (m1, v1) = (s.m[0], s.v[0]);
        adam_step(&mut s, &mut p, &[0.0], 2, 0.1, 0.9, 0.999, 1e-8);
        assert!((s.m[0] - 0.9 * m1).abs() < 1e-15);
        assert!((s.v[0] - 0.999 * v1).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        for g in [1e-3, 0.5, 7.0, -3.0] {
            let mut s = AdamState::default();
            let mut p = vec![0.0];
            let lr = 0.005;
            adam_step(&mut s, &mut p, &[g], 1, lr, 0.9, 0.999, 1e-8);
            let expect = lr * g.abs() / (g.abs() + 1e-8);
            assert!((p[0].abs() - expect).abs() < 1e-15);
            assert!((p[0].abs() - lr).abs() < 1e-7);
        }
    }

    #[test]
    fn adam_matches_loop_oracle() {
        let mut r = RandomStream::new(1);
        let gs: Vec<Vec<f64>> = (0..25).map(|_| (0..6).map(|_| r.standard_normal()).collect()).collect();
        let init: Vec<f64> = (0..6).map(|_| r.standard_normal()).collect();
        let mut a = init.clone();
        let mut s = AdamState::default();
        for (t, g) in gs.iter().enumerate() {
            adam_step(&mut s, &mut a, g, t as u64 + 1, 0.01, 0.9, 0.999, 1e-8);
        }
        let mut b = init;
        adam_oracle(&mut b, &gs, 0.01, 0.9, 0.999, 1e-8);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn sgd_momentum_examples() {
        let mut v = Vec::new();
        let mut p = vec![1.0];
        sgd_momentum_step(&mut v, &mut p, &[2.0], 0.1, 0.0);
        assert!((p[0] - 0.8).abs() < 1e-15);

        // constant g: velocity after k steps = g (1 - mu^k) / (1 - mu)
        let (g, mu) = (0.7, 0.9);
        let mut v = Vec::new();
        let mut p = vec![0.0];
        for k in 1..=30 {
            sgd_momentum_step(&mut v, &mut p, &[g], 0.01, mu);
            let expect = g * (1.0 - mu_pow(mu, k)) / (1.0 - mu);
            assert!((v[0] - expect).abs() < 1e-12);
        }

        // zero gradient still moves by -lr * mu * v
        let before = p[0];
        let v_prev = v[0];
        sgd_momentum_step(&mut v, &mut p, &[0.0], 0.01, mu);
        assert!((p[0] - (before - 0.01 * mu * v_prev)).abs() < 1e-15);
    }

    fn mu_pow(mu: f64, k: i32) -> f64 {
        (0..k).fold(1.0, |a, _| a * mu)
    }

    #[test]
    fn one_step_decreases_convex_quadratic() {
        // L = ||p||^2, grad = 2p
        for kind in [OptimizerKind::adam(1e-3), OptimizerKind::sgd_momentum(1e-3, 0.9)] {
            let mut p = vec![0.3, -1.2, 2.0];
            let l0: f64 = p.iter().map(|v| v * v).sum();
            let g: Vec<f64> = p.iter().map(|v| 2.0 * v).collect();
            match kind {
                OptimizerKind::Adam { lr, beta1, beta2, eps } => {
                    adam_step(&mut AdamState::default(), &mut p, &g, 1, lr, beta1, beta2, eps)
                }
                OptimizerKind::SgdMomentum { lr, momentum } => sgd_momentum_step(&mut Vec::new(), &mut p, &g, lr, momentum),
            }
            let l1: f64 = p.iter().map(|v| v * v).sum();
            assert!(l1 < l0);
        }
    }

    #[test]
    fn invalid_settings_rejected() {
        assert!(Optimizer::new(OptimizerKind::adam(0.0)).is_err());
        assert!(Optimizer::new(OptimizerKind::Adam { lr: 0.1, beta1: 1.0, beta2: 0.9, eps: 1e-8 }).is_err());
        assert!(Optimizer::new(OptimizerKind::sgd_momentum(0.1, 1.0)).is_err());
    }
}
