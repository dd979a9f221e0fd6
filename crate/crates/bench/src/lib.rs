//! Shared inputs for the benchmarks.

use kklflow::{DiscreteMeasure, TargetSpec};

/// Source and target clouds of `n` points each in dimension `d`.
pub fn gaussian_pair(n: usize, d: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let mut mean = vec![0.0; d];
    let p = TargetSpec::isotropic_gaussian(mean.clone(), 1.0).sample(n, 1).expect("valid spec");
    mean[0] = 1.0;
    let q = TargetSpec::isotropic_gaussian(mean, 2.0).sample(n, 2).expect("valid spec");
    (p, q)
}

pub fn rings_pair(n: usize) -> (DiscreteMeasure, DiscreteMeasure) {
    let q = TargetSpec::three_rings().sample(n, 3).expect("valid spec");
    let p = kklflow::study::three_rings_source().sample(n, 4).expect("valid spec");
    (p, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes() {
        let (p, q) = gaussian_pair(7, 3);
        assert_eq!((p.len(), q.len(), p.dim()), (7, 7, 3));
        let (p, q) = rings_pair(5);
        assert_eq!((p.len(), q.dim()), (5, 2));
    }
}
