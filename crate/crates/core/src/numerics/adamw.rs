use super::{ParamStore, Tensor};

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub first_moments: Vec<Tensor>,
    pub second_moments: Vec<Tensor>,
}

impl AdamW {
    pub fn new(params: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        Self::with_betas(params, lr, (0.9, 0.999), 1e-8, weight_decay)
    }

    pub fn with_betas(params: &ParamStore, lr: f64, betas: (f64, f64), eps: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, p)| Tensor::zeros(p.value.shape())).collect();
        Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
            weight_decay,
            step: 0,
            first_moments: zeros.clone(),
            second_moments: zeros,
        }
    }

    /// One update from the gradients currently held in `params`.
    pub fn step(&mut self, params: &mut ParamStore) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let decay = 1.0 - self.lr * self.weight_decay;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        for (((_, p), m), v) in params
            .iter_mut()
            .zip(self.first_moments.iter_mut())
            .zip(self.second_moments.iter_mut())
        {
            let grad = p.grad.data();
            for (((theta, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad)
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *theta *= decay;
                *m = b1 * *m + (1.0 - b1) * g;
                *v = b2 * *v + (1.0 - b2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *theta -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
