//! Positive-definite kernels with first-argument gradients, and bandwidth
//! heuristics computed from the data.
//!
//! The Gaussian kernel uses `exp(-|x - y|^2 / sigma^2)`, with no factor two in
//! the denominator. Bandwidth values quoted for the experiments assume this
//! convention.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    Gaussian { bandwidth: f64 },
    /// `(offset + x.y)^degree`. Only used where an explicit finite feature
    /// map is needed.
    Polynomial { degree: u32, offset: f64 },
}

impl KernelSpec {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        let k = KernelSpec::Gaussian { bandwidth };
        k.validate()?;
        Ok(k)
    }

    pub fn polynomial(degree: u32, offset: f64) -> Result<Self> {
        let k = KernelSpec::Polynomial { degree, offset };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                if !(bandwidth > 0.0 && bandwidth.is_finite()) {
                    return Err(Error::InvalidBandwidth(bandwidth));
                }
            }
            KernelSpec::Polynomial { degree, offset } => {
                if degree == 0 {
                    return Err(Error::InvalidParameter("polynomial degree must be positive".into()));
                }
                if !(offset >= 0.0 && offset.is_finite()) {
                    return Err(Error::InvalidParameter(format!("polynomial offset {offset} must be nonnegative")));
                }
            }
        }
        Ok(())
    }

    /// `k(x, y)`.
    pub fn value(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_dims(x, y)?;
        Ok(self.eval(x, y))
    }

    /// Gradient of `k(., y)` at `x`.
    pub fn grad1(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        check_dims(x, y)?;
        let mut g = vec![0.0; x.len()];
        self.grad1_into(x, y, 1.0, &mut g);
        Ok(g)
    }

    #[inline]
    pub(crate) fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Gaussian { bandwidth } => (-sq_dist(x, y) / (bandwidth * bandwidth)).exp(),
            KernelSpec::Polynomial { degree, offset } => (offset + dot(x, y)).powi(degree as i32),
        }
    }

    /// Accumulates `scale * grad_x k(x, y)` into `out`.
    #[inline]
    pub(crate) fn grad1_into(&self, x: &[f64], y: &[f64], scale: f64, out: &mut [f64]) {
        match *self {
            KernelSpec::Gaussian { bandwidth } => {
                let s2 = bandwidth * bandwidth;
                let c = -2.0 / s2 * (-sq_dist(x, y) / s2).exp() * scale;
                for ((o, a), b) in out.iter_mut().zip(x).zip(y) {
                    *o += c * (a - b);
                }
            }
            KernelSpec::Polynomial { degree, offset } => {
                let c = degree as f64 * (offset + dot(x, y)).powi(degree as i32 - 1) * scale;
                for (o, b) in out.iter_mut().zip(y) {
                    *o += c * b;
                }
            }
        }
    }

    /// Gradient of the diagonal `x -> k(x, x)`, which is `2 grad1(x, x)` for a
    /// symmetric kernel. Zero for the Gaussian.
    pub(crate) fn diag_grad_into(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        if let KernelSpec::Polynomial { .. } = self {
            self.grad1_into(x, x, 2.0 * scale, out);
        }
    }

    /// Gram matrix `K[i, j] = k(a_i, b_j)` over the atoms of two measures.
    pub fn gram(&self, a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<DMatrix<f64>> {
        a.check_same_dim(b)?;
        Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| self.eval(a.point(i), b.point(j))))
    }

    /// Symmetric Gram matrix of one measure's atoms.
    pub fn gram_self(&self, a: &DiscreteMeasure) -> DMatrix<f64> {
        let n = a.len();
        let mut g = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = self.eval(a.point(i), a.point(j));
                g[(i, j)] = v;
                g[(j, i)] = v;
            }
        }
        g
    }
}

/// Free-function form of [`KernelSpec::value`].
pub fn kernel_value(k: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    k.value(x, y)
}

/// Free-function form of [`KernelSpec::grad1`].
pub fn kernel_grad1(k: &KernelSpec, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
    k.grad1(x, y)
}

fn check_dims(x: &[f64], y: &[f64]) -> Result<()> {
    if x.is_empty() {
        return Err(Error::EmptyInput);
    }
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), found: y.len() });
    }
    Ok(())
}

#[inline]
pub(crate) fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
pub(crate) fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// How to pick a Gaussian bandwidth from two point clouds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `(mean_{i,j} |x_i - y_j|)^2`.
    SquaredMeanDistance,
    /// `mean_{i,j} |x_i - y_j|^2`.
    MeanSquaredDistance,
    Fixed(f64),
}

/// Bandwidth from cross distances between the atoms of `x` and `y` (weights
/// are ignored; every pair counts once).
pub fn bandwidth_heuristic(x: &DiscreteMeasure, y: &DiscreteMeasure, rule: BandwidthRule) -> Result<f64> {
    x.check_same_dim(y)?;
    let value = match rule {
        BandwidthRule::Fixed(s) => s,
        BandwidthRule::SquaredMeanDistance | BandwidthRule::MeanSquaredDistance => {
            let mut sum = 0.0;
            for a in x.points() {
                for b in y.points() {
                    let d2 = sq_dist(a, b);
                    sum += if rule == BandwidthRule::SquaredMeanDistance { d2.sqrt() } else { d2 };
                }
            }
            let mean = sum / (x.len() * y.len()) as f64;
            if rule == BandwidthRule::SquaredMeanDistance {
                mean * mean
            } else {
                mean
            }
        }
    };
    if value == 0.0 {
        return Err(Error::DegenerateBandwidth);
    }
    if !(value > 0.0 && value.is_finite()) {
        return Err(Error::InvalidBandwidth(value));
    }
    Ok(value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gaussian_values() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(k.value(&[0.3, -1.0], &[0.3, -1.0]).unwrap(), 1.0);
        let v = k.value(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn polynomial_values_and_gradient() {
        let k = KernelSpec::polynomial(2, 1.0).unwrap();
        assert_eq!(k.value(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        let lin = KernelSpec::polynomial(1, 0.0).unwrap();
        assert_eq!(lin.grad1(&[0.4, 2.0], &[-1.5, 3.0]).unwrap(), vec![-1.5, 3.0]);
    }

    #[test]
    fn gaussian_gradient_examples() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert_eq!(k.grad1(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), vec![0.0, 0.0]);
        let g = k.grad1(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        // central difference oracle, step 1e-6
        let h = 1e-6;
        let fd = (k.value(&[h, 0.0], &[1.0, 0.0]).unwrap() - k.value(&[-h, 0.0], &[1.0, 0.0]).unwrap()) / (2.0 * h);
        assert!((g[0] - fd).abs() < 1e-9);
        assert!((g[0] - 2.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn errors() {
        let k = KernelSpec::gaussian(1.0).unwrap();
        assert!(matches!(k.value(&[0.0], &[0.0, 1.0]), Err(Error::DimensionMismatch { .. })));
        assert!(k.grad1(&[0.0], &[0.0, 1.0]).is_err());
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(f64::NAN).is_err());
        assert!(KernelSpec::polynomial(0, 1.0).is_err());
    }

    #[test]
    fn bandwidth_rules() {
        let x = DiscreteMeasure::from_rows(&[vec![0.0, 0.0]]).unwrap();
        let y = DiscreteMeasure::from_rows(&[vec![3.0, 4.0]]).unwrap();
        assert_eq!(bandwidth_heuristic(&x, &y, BandwidthRule::SquaredMeanDistance).unwrap(), 25.0);
        assert_eq!(bandwidth_heuristic(&x, &y, BandwidthRule::MeanSquaredDistance).unwrap(), 25.0);
        assert_eq!(bandwidth_heuristic(&x, &y, BandwidthRule::Fixed(0.3)).unwrap(), 0.3);
        assert!(matches!(
            bandwidth_heuristic(&x, &x, BandwidthRule::SquaredMeanDistance),
            Err(Error::DegenerateBandwidth)
        ));

        let a = DiscreteMeasure::from_rows(&[vec![0.0], vec![2.0]]).unwrap();
        let b = DiscreteMeasure::from_rows(&[vec![1.0]]).unwrap();
        // distances 1, 1
        assert_eq!(bandwidth_heuristic(&a, &b, BandwidthRule::SquaredMeanDistance).unwrap(), 1.0);
        let c = DiscreteMeasure::from_rows(&[vec![3.0]]).unwrap();
        // distances 3, 1: (2)^2 = 4 versus (9 + 1) / 2 = 5
        assert_eq!(bandwidth_heuristic(&a, &c, BandwidthRule::SquaredMeanDistance).unwrap(), 4.0);
        assert_eq!(bandwidth_heuristic(&a, &c, BandwidthRule::MeanSquaredDistance).unwrap(), 5.0);
    }

    fn point(d: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-3.0f64..3.0, d)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn symmetric(x in point(3), y in point(3), s in 0.1f64..5.0, deg in 1u32..4, c in 0.0f64..2.0) {
            let g = KernelSpec::gaussian(s).unwrap();
            prop_assert_eq!(g.value(&x, &y).unwrap(), g.value(&y, &x).unwrap());
            let p = KernelSpec::polynomial(deg, c).unwrap();
            prop_assert_eq!(p.value(&x, &y).unwrap(), p.value(&y, &x).unwrap());
        }

        #[test]
        fn gradient_matches_central_differences(x in point(3), y in point(3), s in 0.5f64..4.0) {
            let k = KernelSpec::gaussian(s).unwrap();
            let g = k.grad1(&x, &y).unwrap();
            let h = 1e-5;
            for i in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (k.value(&xp, &y).unwrap() - k.value(&xm, &y).unwrap()) / (2.0 * h);
                let scale = g.iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-3);
                prop_assert!((fd - g[i]).abs() <= 1e-6 * scale, "fd {} vs {}", fd, g[i]);
            }
        }

        #[test]
        fn gram_is_psd(pts in proptest::collection::vec(point(2), 1..20), s in 0.2f64..3.0) {
            let m = DiscreteMeasure::from_rows(&pts).unwrap();
            let k = KernelSpec::gaussian(s).unwrap();
            let eig = k.gram_self(&m).symmetric_eigenvalues();
            let max = eig.max();
            prop_assert!(eig.min() >= -1e-10 * max);
        }
    }
}
