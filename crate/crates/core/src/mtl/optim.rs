use super::net::Weights;

/// Adam with decoupled weight decay. Decay applies to weight matrices only,
/// never to biases, and only tensors flagged trainable are updated.
#[derive(Clone, Debug)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Weights,
    v: Weights,
    step: u64,
}

impl AdamW {
    pub fn new(shape: &Weights, betas: (f64, f64), eps: f64, weight_decay: f64) -> Self {
        Self {
            beta1: betas.0,
            beta2: betas.1,
            eps,
            weight_decay,
            m: shape.zeros_like(),
            v: shape.zeros_like(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut Weights, grads: &Weights, trainable: &[bool], lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let names: Vec<bool> = params.tensors().iter().map(|(n, _)| n.ends_with(".weight")).collect();
        let grads = grads.tensors();
        let (b1, b2, eps, wd) = (self.beta1, self.beta2, self.eps, self.weight_decay);
        for (((((p, (_, g)), m), v), &train), &is_weight) in params
            .tensors_mut()
            .into_iter()
            .zip(grads)
            .zip(self.m.tensors_mut())
            .zip(self.v.tensors_mut())
            .zip(trainable)
            .zip(&names)
        {
            if !train {
                continue;
            }
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let update = (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
                if is_weight {
                    p[i] -= lr * wd * p[i];
                }
                p[i] -= lr * update;
            }
        }
    }
}
