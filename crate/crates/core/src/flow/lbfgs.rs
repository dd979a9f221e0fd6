//! Limited-memory BFGS memory and two-loop recursion.

use std::collections::VecDeque;

use crate::kernel::dot;

/// Pairs with `<s, y> <= CURVATURE_TOL |s| |y|` are not stored.
pub const CURVATURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LbfgsMemory {
    capacity: usize,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
}

impl LbfgsMemory {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), s: VecDeque::new(), y: VecDeque::new() }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.s.iter().zip(&self.y).map(|(s, y)| (s.as_slice(), y.as_slice()))
    }

    pub fn clear(&mut self) {
        self.s.clear();
        self.y.clear();
    }

    /// Stores `(s, y)` unless the curvature condition fails; returns whether
    /// the pair was kept. The oldest pair is evicted at capacity.
    pub fn push(&mut self, s: Vec<f64>, y: Vec<f64>) -> bool {
        let sy = dot(&s, &y);
        let bound = CURVATURE_TOL * dot(&s, &s).sqrt() * dot(&y, &y).sqrt();
        if !(sy > bound) {
            return false;
        }
        if self.s.len() == self.capacity {
            self.s.pop_front();
            self.y.pop_front();
        }
        self.s.push_back(s);
        self.y.push_back(y);
        true
    }

    /// `-H g` with `H` the L-BFGS inverse-Hessian approximation and initial
    /// scaling `<s, y> / <y, y>` from the newest pair.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let mut q = g.to_vec();
        let k = self.s.len();
        let mut alphas = vec![0.0; k];
        let rhos: Vec<f64> = self.pairs().map(|(s, y)| 1.0 / dot(s, y)).collect();
        for i in (0..k).rev() {
            let a = rhos[i] * dot(&self.s[i], &q);
            alphas[i] = a;
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= a * yj;
            }
        }
        if let (Some(s), Some(y)) = (self.s.back(), self.y.back()) {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for i in 0..k {
            let b = rhos[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alphas[i] - b) * sj;
            }
        }
        q.iter_mut().for_each(|v| *v = -*v);
        q
    }
}
