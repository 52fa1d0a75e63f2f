//! A small reverse-mode tape for scalar computations.
//!
//! The spline transformer's partial derivatives run through softmax, cumsum,
//! and a rational quadratic, which is tedious to differentiate by hand. The
//! tape records the scalar graph once per evaluation and supports repeated
//! backward sweeps from different outputs. Buffers are reused across calls.

/// Index of a recorded value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(u32);

const NONE: u32 = u32::MAX;

struct Node {
    p1: u32,
    d1: f64,
    p2: u32,
    d2: f64,
}

/// Records scalar operations and their local partials.
pub struct Tape {
    vals: Vec<f64>,
    nodes: Vec<Node>,
    grads: Vec<f64>,
}

impl Tape {
    pub fn new() -> Self {
        Self {
            vals: Vec::new(),
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    /// Clears the tape for a fresh computation, keeping capacity.
    pub fn reset(&mut self) {
        self.vals.clear();
        self.nodes.clear();
        self.grads.clear();
    }

    pub fn value(&self, v: Var) -> f64 {
        self.vals[v.0 as usize]
    }

    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(value, NONE, 0.0, NONE, 0.0)
    }

    fn push(&mut self, value: f64, p1: u32, d1: f64, p2: u32, d2: f64) -> Var {
        let idx = self.vals.len() as u32;
        self.vals.push(value);
        self.nodes.push(Node { p1, d1, p2, d2 });
        Var(idx)
    }

    fn unary(&mut self, a: Var, value: f64, da: f64) -> Var {
        self.push(value, a.0, da, NONE, 0.0)
    }

    fn binary(&mut self, a: Var, b: Var, value: f64, da: f64, db: f64) -> Var {
        self.push(value, a.0, da, b.0, db)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.binary(
            a,
            b,
            self.vals[a.0 as usize] + self.vals[b.0 as usize],
            1.0,
            1.0,
        )
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.binary(
            a,
            b,
            self.vals[a.0 as usize] - self.vals[b.0 as usize],
            1.0,
            -1.0,
        )
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.vals[a.0 as usize], self.vals[b.0 as usize]);
        self.binary(a, b, x * y, y, x)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.vals[a.0 as usize], self.vals[b.0 as usize]);
        self.binary(a, b, x / y, 1.0 / y, -x / (y * y))
    }

    pub fn add_const(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, self.vals[a.0 as usize] + c, 1.0)
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, self.vals[a.0 as usize] * c, c)
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let e = self.vals[a.0 as usize].exp();
        self.unary(a, e, e)
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let x = self.vals[a.0 as usize];
        self.unary(a, x.ln(), 1.0 / x)
    }

    /// ln(1 + e^x), computed in its overflow-safe form.
    pub fn softplus(&mut self, a: Var) -> Var {
        let x = self.vals[a.0 as usize];
        let value = if x > 30.0 { x } else { x.exp().ln_1p() };
        let sig = 1.0 / (1.0 + (-x).exp());
        self.unary(a, value, sig)
    }

    pub fn square(&mut self, a: Var) -> Var {
        let x = self.vals[a.0 as usize];
        self.unary(a, x * x, 2.0 * x)
    }

    /// Reverse sweep seeding d(out)/d(out) = 1. Leaves previous sweeps'
    /// results behind; read gradients before the next sweep.
    pub fn backward(&mut self, out: Var) {
        self.grads.clear();
        self.grads.resize(self.vals.len(), 0.0);
        self.grads[out.0 as usize] = 1.0;
        for i in (0..self.nodes.len()).rev() {
            let g = self.grads[i];
            if g == 0.0 {
                continue;
            }
            let node = &self.nodes[i];
            if node.p1 != NONE {
                self.grads[node.p1 as usize] += node.d1 * g;
            }
            if node.p2 != NONE {
                self.grads[node.p2 as usize] += node.d2 * g;
            }
        }
    }

    pub fn grad(&self, v: Var) -> f64 {
        self.grads[v.0 as usize]
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}
