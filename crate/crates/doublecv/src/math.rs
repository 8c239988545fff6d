//! Small numeric helpers shared across modules: stable sigmoid/softplus,
//! dot products, and compensated summation for order-robust reductions.

/// Numerically stable logistic function, safe for large |z|.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softplus log(1 + exp(z)) = max(z, 0) + log1p(exp(-|z|)).
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dot: length mismatch {} vs {}", a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Neumaier-compensated accumulator. Exhaustive-enumeration reductions sum
/// many terms of mixed sign; plain summation can lose the tiny residual that
/// the unbiasedness checks compare against.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Compensated accumulator over a vector of fixed dimension.
#[derive(Debug, Clone)]
pub struct CompensatedVecSum {
    terms: Vec<CompensatedSum>,
}

impl CompensatedVecSum {
    pub fn new(dim: usize) -> Self {
        Self { terms: vec![CompensatedSum::new(); dim] }
    }

    pub fn add_scaled(&mut self, v: &[f64], scale: f64) {
        assert_eq!(v.len(), self.terms.len(), "add_scaled: length mismatch");
        for (acc, &x) in self.terms.iter_mut().zip(v) {
            acc.add(scale * x);
        }
    }

    pub fn value(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.value()).collect()
    }
}
