use crate::models::ParamStore;
use crate::scalar::Scalar;

/// Adam with the ℓ2 penalty `λ·Σ‖W‖²` added to the gradients of decaying parameters.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub l2_lambda: f64,
    step: u32,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(params: &ParamStore<T>, learning_rate: f64, l2_lambda: f64) -> Self {
        let zeros = || params.entries().iter().map(|e| vec![T::zero(); e.data.len()]).collect();
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2_lambda,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps(&self) -> u32 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Vec<T>]) {
        self.step += 1;
        let (b1, b2) = (T::of(self.beta1), T::of(self.beta2));
        let c1 = T::of(1.0 - self.beta1.powi(self.step as i32));
        let c2 = T::of(1.0 - self.beta2.powi(self.step as i32));
        let (lr, eps) = (T::of(self.learning_rate), T::of(self.eps));
        let l2 = T::of(2.0 * self.l2_lambda);
        for (((e, g), m), v) in params.entries_mut().iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            for i in 0..e.data.len() {
                let mut gi = g[i];
                if e.decay {
                    gi += l2 * e.data[i];
                }
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                e.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
