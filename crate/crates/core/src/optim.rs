//! Heavy-ball momentum SGD: `v ← μ·v + g`, `θ ← θ − lr·v`.

/// One momentum update applied in place.
pub fn momentum_step(
    params: &mut [f64],
    velocity: &mut [f64],
    grad: &[f64],
    lr: f64,
    momentum: f64,
) {
    debug_assert_eq!(params.len(), velocity.len());
    debug_assert_eq!(grad.len(), velocity.len());
    for ((p, v), g) in params.iter_mut().zip(velocity.iter_mut()).zip(grad) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Momentum {
    pub lr: f64,
    pub momentum: f64,
    velocity: Vec<f64>,
}

impl Momentum {
    pub fn new(lr: f64, momentum: f64, num_params: usize) -> Self {
        Self {
            lr,
            momentum,
            velocity: vec![0.0; num_params],
        }
    }

    pub fn velocity(&self) -> &[f64] {
        &self.velocity
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        momentum_step(params, &mut self.velocity, grad, self.lr, self.momentum);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_step() {
        let mut p = [5.0, 3.0];
        let mut opt = Momentum::new(0.1, 0.0, 2);
        opt.step(&mut p, &[1.0, -1.0]);
        assert!((p[0] - 4.9).abs() < 1e-12 && (p[1] - 3.1).abs() < 1e-12);
    }

    #[test]
    fn velocity_accumulates() {
        let mut p = [0.0];
        let mut opt = Momentum::new(1.0, 0.9, 1);
        opt.step(&mut p, &[1.0]);
        opt.step(&mut p, &[1.0]);
        assert_eq!(opt.velocity(), &[1.9]);
        assert!((p[0] + 2.9).abs() < 1e-12);
    }
}
