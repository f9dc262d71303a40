use serde::{Deserialize, Serialize};

/// ADAM moments with bias correction; `reset` zeroes both moments and the
/// step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl Adam {
    pub fn new(len: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam {
            beta1,
            beta2,
            eps,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
        self.t = 0;
    }

    pub fn is_reset(&self) -> bool {
        self.t == 0 && self.m.iter().chain(&self.v).all(|&x| x == 0.0)
    }

    /// Update the moments with `g` and return the bias-corrected pair
    /// `(m̂, v̂)`.
    pub fn moments(&mut self, g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        assert_eq!(g.len(), self.m.len(), "gradient length");
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - self.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        let mut mh = Vec::with_capacity(g.len());
        let mut vh = Vec::with_capacity(g.len());
        for ((m, v), &gi) in self.m.iter_mut().zip(self.v.iter_mut()).zip(g) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * gi;
            *v = self.beta2 * *v + (1.0 - self.beta2) * gi * gi;
            mh.push(*m / c1);
            vh.push(*v / c2);
        }
        (mh, vh)
    }

    /// Update the moments with `g` and return the preconditioned direction
    /// `m̂ / (√v̂ + ε)`.
    pub fn direction(&mut self, g: &[f64]) -> Vec<f64> {
        let (mh, vh) = self.moments(g);
        mh.iter().zip(&vh).map(|(m, v)| m / (v.sqrt() + self.eps)).collect()
    }

    /// One scalar step for a group of coordinates: `lr / (mean √v̂ + ε)`.
    pub fn scalar_step(&self, v_hat: &[f64], lr: f64) -> f64 {
        let mean = v_hat.iter().map(|v| v.sqrt()).sum::<f64>() / v_hat.len().max(1) as f64;
        lr / (mean + self.eps)
    }

    /// `x ← x − lr · direction(g)`
    pub fn step(&mut self, x: &mut [f64], g: &[f64], lr: f64) {
        let d = self.direction(g);
        for (xi, di) in x.iter_mut().zip(&d) {
            *xi -= lr * di;
        }
    }
}
