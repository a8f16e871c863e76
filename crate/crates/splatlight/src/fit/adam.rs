//! First-order adaptive-moment optimizer with bias correction and a
//! per-scalar freeze mask.

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update in place. Masked-off scalars keep their value and moments.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], mask: &[bool]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        assert_eq!(mask.len(), self.m.len());
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - self.beta1.powf(t);
        let c2 = 1.0 - self.beta2.powf(t);
        for i in 0..params.len() {
            if !mask[i] {
                continue;
            }
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mhat = self.m[i] / c1;
            let vhat = self.v[i] / c2;
            params[i] -= self.lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic_bowl() {
        let mut p = vec![3.0, -2.0];
        let mask = vec![true, true];
        let mut opt = Adam::new(2, 0.05);
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &g, &mask);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-3), "{p:?}");
    }

    #[test]
    fn masked_scalars_never_move() {
        let mut p = vec![1.0, 1.0];
        let mask = vec![true, false];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..50 {
            opt.step(&mut p, &[0.7, 0.7], &mask);
        }
        assert!(p[0] < 1.0);
        assert_eq!(p[1], 1.0);
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut p = vec![0.25; 4];
        let mask = vec![true; 4];
        let mut opt = Adam::new(4, 0.01);
        for _ in 0..10 {
            opt.step(&mut p, &[0.0; 4], &mask);
        }
        assert_eq!(p, vec![0.25; 4]);
    }
}
