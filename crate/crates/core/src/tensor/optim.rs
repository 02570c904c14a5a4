//! Bias-corrected adaptive-moment optimizer.

use super::Param;

/// Adam with the standard bias correction. Gradients are cleared after
/// each step.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self { lr, beta1, beta2, eps, step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: Vec<&mut Param>) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for p in params {
            let n = p.value.numel();
            for i in 0..n {
                let g = p.grad.data()[i];
                let m = self.beta1 * p.moment1.data()[i] + (1.0 - self.beta1) * g;
                let v = self.beta2 * p.moment2.data()[i] + (1.0 - self.beta2) * g * g;
                p.moment1.data_mut()[i] = m;
                p.moment2.data_mut()[i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                p.value.data_mut()[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn zero_grads_leave_params_unchanged() {
        let mut p = Param::new(Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap());
        let before = p.value.clone();
        let mut adam = Adam::new(0.01, 0.9, 0.999, 1e-8);
        adam.step(vec![&mut p]);
        assert_eq!(p.value, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        // With constant gradient g and fresh moments, the bias-corrected
        // update is lr * g / (|g| + eps) which is lr up to eps.
        let lr = 0.003;
        let mut p = Param::new(Tensor::from_vec(&[2], vec![0.0, 0.0]).unwrap());
        p.grad.data_mut().copy_from_slice(&[5.0, -0.2]);
        let mut adam = Adam::new(lr, 0.9, 0.999, 1e-8);
        adam.step(vec![&mut p]);
        assert!((p.value.data()[0] + lr).abs() < 1e-8);
        assert!((p.value.data()[1] - lr).abs() < 1e-7);
        // Gradients cleared afterwards.
        assert!(p.grad.data().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn quadratic_objective_decreases_monotonically_after_warmup() {
        // Minimize ||theta||^2 / 2; gradient is theta itself. The step
        // size keeps the iterates short of the optimum, where Adam's
        // constant-magnitude updates would start to oscillate.
        let mut p = Param::new(Tensor::from_vec(&[4], vec![1.0, -2.0, 3.0, -0.5]).unwrap());
        let mut adam = Adam::new(0.002, 0.9, 0.999, 1e-8);
        let loss = |p: &Param| 0.5 * p.value.data().iter().map(|v| v * v).sum::<f64>();
        let start = loss(&p);
        let mut losses = Vec::new();
        for _ in 0..200 {
            let g: Vec<f64> = p.value.data().to_vec();
            p.grad.data_mut().copy_from_slice(&g);
            adam.step(vec![&mut p]);
            losses.push(loss(&p));
        }
        for w in losses[10..].windows(2) {
            assert!(w[1] <= w[0], "loss increased after warmup: {} -> {}", w[0], w[1]);
        }
        assert!(losses[199] < start);
    }
}
