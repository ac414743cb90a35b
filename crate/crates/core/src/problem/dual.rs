//! Forward-mode dual numbers carrying a full gradient.

use std::hint::black_box;
use std::ops::{Add, Div, Mul, Neg, Sub};

#[derive(Debug, Clone, PartialEq)]
pub struct DualNumber {
    pub value: f64,
    pub derivatives: Vec<f64>,
}

impl DualNumber {
    pub fn constant(value: f64, n: usize) -> Self {
        DualNumber {
            value,
            derivatives: vec![0.0; n],
        }
    }

    /// The `index`-th coordinate of an `n`-vector.
    pub fn variable(value: f64, index: usize, n: usize) -> Self {
        let mut d = DualNumber::constant(value, n);
        d.derivatives[index] = 1.0;
        d
    }

    pub fn dim(&self) -> usize {
        self.derivatives.len()
    }

    /// Applies a scalar function with value `v` and derivative `dv` at `self.value`.
    fn chain(mut self, v: f64, dv: f64) -> Self {
        self.value = v;
        for d in &mut self.derivatives {
            *d *= dv;
        }
        self
    }

    // The derivative argument goes through `black_box` so that optimized
    // builds cannot merge the pair into `sincos`, which may differ from `sin`
    // in the last bit and break agreement with plain evaluation.
    pub fn sin(self) -> Self {
        let x = self.value;
        self.chain(x.sin(), black_box(x).cos())
    }

    pub fn cos(self) -> Self {
        let x = self.value;
        self.chain(x.cos(), -black_box(x).sin())
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }

    pub fn ln(self) -> Self {
        let x = self.value;
        self.chain(x.ln(), 1.0 / x)
    }

    pub fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        self.chain(s, 0.5 / s)
    }

    /// `self^p` for a constant exponent.
    pub fn powf(self, p: f64) -> Self {
        let x = self.value;
        if p == 0.0 {
            let n = self.dim();
            return DualNumber::constant(1.0, n);
        }
        let dv = if p == 1.0 { 1.0 } else { p * x.powf(p - 1.0) };
        self.chain(x.powf(p), dv)
    }
}

impl Neg for DualNumber {
    type Output = DualNumber;
    fn neg(self) -> DualNumber {
        let v = -self.value;
        self.chain(v, -1.0)
    }
}

impl Add for DualNumber {
    type Output = DualNumber;
    fn add(mut self, rhs: DualNumber) -> DualNumber {
        self.value += rhs.value;
        for (a, b) in self.derivatives.iter_mut().zip(&rhs.derivatives) {
            *a += b;
        }
        self
    }
}

impl Sub for DualNumber {
    type Output = DualNumber;
    fn sub(mut self, rhs: DualNumber) -> DualNumber {
        self.value -= rhs.value;
        for (a, b) in self.derivatives.iter_mut().zip(&rhs.derivatives) {
            *a -= b;
        }
        self
    }
}

impl Mul for DualNumber {
    type Output = DualNumber;
    fn mul(mut self, rhs: DualNumber) -> DualNumber {
        let (u, v) = (self.value, rhs.value);
        self.value = u * v;
        for (a, b) in self.derivatives.iter_mut().zip(&rhs.derivatives) {
            *a = *a * v + u * b;
        }
        self
    }
}

impl Div for DualNumber {
    type Output = DualNumber;
    fn div(mut self, rhs: DualNumber) -> DualNumber {
        let (u, v) = (self.value, rhs.value);
        let q = u / v;
        self.value = q;
        for (a, b) in self.derivatives.iter_mut().zip(&rhs.derivatives) {
            *a = (*a - q * b) / v;
        }
        self
    }
}
