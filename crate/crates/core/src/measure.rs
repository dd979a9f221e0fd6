//! Weighted point clouds, the samplers used by the experiments, and seeded
//! random streams.
//!
//! A [`DiscreteMeasure`] stores its atoms row-major in a flat buffer together
//! with a probability vector. Every constructor checks the invariants (at
//! least one atom, a shared dimension, nonnegative weights summing to one),
//! so downstream code never re-validates.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total mass of a measure.
pub const MASS_TOL: f64 = 1e-12;

/// Looser mass tolerance for clouds read back from text, where weights were
/// rounded on output.
pub const CSV_MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Vec<f64>,
    dim: usize,
    weights: Vec<f64>,
}

impl DiscreteMeasure {
    /// Builds a measure from row-major points and explicit weights.
    pub fn new(points: Vec<f64>, dim: usize, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        if weights.is_empty() || points.is_empty() {
            return Err(Error::EmptyInput);
        }
        if points.len() != weights.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: weights.len() * dim,
                found: points.len(),
            });
        }
        if let Some(bad) = points.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("point coordinate {bad}")));
        }
        if let Some(bad) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidWeights(format!("weight {bad} is not a nonnegative number")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { points, dim, weights })
    }

    /// Uniform weights `1/n` on the given atoms.
    pub fn uniform(points: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        let n = points.len() / dim;
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        Self::new(points, dim, vec![1.0 / n as f64; n])
    }

    /// Uniform measure from a list of points.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().ok_or(Error::EmptyInput)?.len();
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: r.len() });
            }
            flat.extend_from_slice(r);
        }
        Self::uniform(flat, dim)
    }

    /// Weighted measure; weights are rescaled to unit mass.
    pub fn normalized(points: Vec<f64>, dim: usize, mut weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidWeights(format!("total mass {total} cannot be normalized")));
        }
        weights.iter_mut().for_each(|w| *w /= total);
        let fix: f64 = 1.0 - weights.iter().sum::<f64>();
        if let Some(w) = weights.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *w += fix;
        }
        Self::new(points, dim, weights)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    /// Row-major coordinates, `len() * dim()` values.
    pub fn flat_points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    /// True when every weight equals `1/n` within `tol`.
    pub fn is_uniform(&self, tol: f64) -> bool {
        let u = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - u).abs() <= tol)
    }

    /// Same weights, new atom positions.
    pub fn with_points(&self, points: Vec<f64>) -> Result<Self> {
        Self::new(points, self.dim, self.weights.clone())
    }

    /// Points as an `n x d` matrix.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.len(), self.dim, &self.points)
    }

    pub fn mean(&self) -> DVector<f64> {
        let mut m = DVector::zeros(self.dim);
        for (x, w) in self.points().zip(&self.weights) {
            for (mk, xk) in m.iter_mut().zip(x) {
                *mk += w * xk;
            }
        }
        m
    }

    pub(crate) fn check_same_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        Ok(())
    }

    /// Reads the point-cloud CSV format: header `x0,...,x{d-1},weight`.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| csv_err(e, 1))?.clone();
        let ncol = headers.len();
        if ncol < 2 || headers.get(ncol - 1) != Some("weight") {
            return Err(Error::Parse { line: 1, msg: "header must be x0,...,x{d-1},weight".into() });
        }
        for (k, h) in headers.iter().take(ncol - 1).enumerate() {
            if h != format!("x{k}") {
                return Err(Error::Parse { line: 1, msg: format!("column {k} should be named x{k}, found {h:?}") });
            }
        }
        let dim = ncol - 1;
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let line = row + 2;
            let rec = rec.map_err(|e| csv_err(e, line))?;
            if rec.len() != ncol {
                return Err(Error::Parse { line, msg: format!("expected {ncol} fields, found {}", rec.len()) });
            }
            for (k, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::Parse { line, msg: format!("cannot parse {field:?} as a number") })?;
                if !v.is_finite() {
                    return Err(Error::Parse { line, msg: format!("non-finite value {field:?}") });
                }
                if k < dim {
                    points.push(v);
                } else {
                    if v < 0.0 {
                        return Err(Error::Parse { line, msg: format!("negative weight {v}") });
                    }
                    weights.push(v);
                }
            }
        }
        if weights.is_empty() {
            return Err(Error::EmptyInput);
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > CSV_MASS_TOL {
            return Err(Error::InvalidWeights(format!("weights in file sum to {total}, expected 1")));
        }
        Self::normalized(points, dim, weights)
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        let header: Vec<String> = (0..self.dim).map(|k| format!("x{k}")).chain(["weight".to_string()]).collect();
        writeln!(writer, "{}", header.join(","))?;
        for (x, w) in self.points().zip(&self.weights) {
            let mut fields: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            fields.push(format!("{w:?}"));
            writeln!(writer, "{}", fields.join(","))?;
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(f)
    }
}

fn csv_err(e: csv::Error, line: usize) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(line);
    Error::Parse { line, msg: e.to_string() }
}

/// `(1 - eps) p + eps r` on the union of atoms. Zero-weight atoms are dropped.
pub fn mix(p: &DiscreteMeasure, r: &DiscreteMeasure, eps: f64) -> Result<DiscreteMeasure> {
    p.check_same_dim(r)?;
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::InvalidParameter(format!("mixture weight {eps} outside [0, 1]")));
    }
    let mut points = Vec::with_capacity(p.points.len() + r.points.len());
    let mut weights = Vec::with_capacity(p.len() + r.len());
    let parts = [(p, 1.0 - eps), (r, eps)];
    for (m, scale) in parts {
        for (x, w) in m.points().zip(m.weights()) {
            let w = scale * w;
            if w > 0.0 {
                points.extend_from_slice(x);
                weights.push(w);
            }
        }
    }
    DiscreteMeasure::normalized(points, p.dim, weights)
}

/// Counter-based stream: the same `(seed, stream)` pair always yields the same
/// sequence, independently of how many other streams exist.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One component of a Gaussian mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

/// Source and target distributions used by the experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum TargetSpec {
    Gaussian {
        mean: Vec<f64>,
        cov: Vec<Vec<f64>>,
    },
    GaussianMixture {
        components: Vec<MixtureComponent>,
    },
    /// Independent `Exp(rate)` coordinates.
    Exponential {
        rate: f64,
        dim: usize,
    },
    /// Uniform on the union of circles, with respect to arc length.
    Rings {
        centers: Vec<[f64; 2]>,
        radii: Vec<f64>,
    },
    /// Uniform (arc length) on the Archimedean spiral `r = scale * theta`,
    /// `theta` in `[2 pi * start_turn, 2 pi * turns]`.
    Spiral {
        turns: f64,
        scale: f64,
        #[serde(default)]
        start_turn: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    /// Uniform inside `(x^2 + y^2 - 1)^3 - x^2 y^3 <= 0`, scaled and shifted.
    Heart {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        center: [f64; 2],
    },
    UniformBox {
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
}

fn one() -> f64 {
    1.0
}

impl TargetSpec {
    /// Three unit circles centred at (0,0), (2.5,0), (5,0).
    pub fn three_rings() -> Self {
        TargetSpec::Rings { centers: vec![[0.0, 0.0], [2.5, 0.0], [5.0, 0.0]], radii: vec![1.0; 3] }
    }

    pub fn isotropic_gaussian(mean: Vec<f64>, var: f64) -> Self {
        let d = mean.len();
        let cov = (0..d).map(|i| (0..d).map(|j| if i == j { var } else { 0.0 }).collect()).collect();
        TargetSpec::Gaussian { mean, cov }
    }

    pub fn dim(&self) -> usize {
        match self {
            TargetSpec::Gaussian { mean, .. } => mean.len(),
            TargetSpec::GaussianMixture { components } => components.first().map_or(0, |c| c.mean.len()),
            TargetSpec::Exponential { dim, .. } => *dim,
            TargetSpec::Rings { .. } | TargetSpec::Spiral { .. } | TargetSpec::Heart { .. } => 2,
            TargetSpec::UniformBox { lower, .. } => lower.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prepare().map(|_| ())
    }

    fn prepare(&self) -> Result<Sampler<'_>> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        match self {
            TargetSpec::Gaussian { mean, cov } => Ok(Sampler::Gaussian(GaussianFactor::new(mean, cov)?)),
            TargetSpec::GaussianMixture { components } => {
                if components.is_empty() {
                    return bad("mixture has no components".into());
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if components.iter().any(|c| !(c.weight >= 0.0)) || (total - 1.0).abs() > MASS_TOL {
                    return bad(format!("mixture weights must be nonnegative and sum to 1 (sum {total})"));
                }
                let d = components[0].mean.len();
                let mut factors = Vec::with_capacity(components.len());
                for c in components {
                    if c.mean.len() != d {
                        return Err(Error::DimensionMismatch { expected: d, found: c.mean.len() });
                    }
                    factors.push((c.weight, GaussianFactor::new(&c.mean, &c.cov)?));
                }
                Ok(Sampler::Mixture(factors))
            }
            TargetSpec::Exponential { rate, dim } => {
                if *dim == 0 {
                    return bad("exponential dimension must be at least 1".into());
                }
                let exp = Exp::new(*rate).map_err(|_| Error::InvalidParameter(format!("exponential rate {rate}")))?;
                if !(*rate > 0.0 && rate.is_finite()) {
                    return bad(format!("exponential rate {rate} must be positive"));
                }
                Ok(Sampler::Exponential(exp, *dim))
            }
            TargetSpec::Rings { centers, radii } => {
                if centers.is_empty() || centers.len() != radii.len() {
                    return bad("rings need one radius per center".into());
                }
                if radii.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
                    return bad("ring radii must be positive".into());
                }
                Ok(Sampler::Rings(centers, radii))
            }
            TargetSpec::Spiral { turns, scale, start_turn, center } => {
                if !(*scale > 0.0 && scale.is_finite()) || !(*start_turn >= 0.0) || !(turns > start_turn) {
                    return bad("spiral needs scale > 0 and turns > start_turn >= 0".into());
                }
                let t0 = 2.0 * std::f64::consts::PI * start_turn;
                let t1 = 2.0 * std::f64::consts::PI * turns;
                Ok(Sampler::Spiral { scale: *scale, t0, t1, center: *center })
            }
            TargetSpec::Heart { scale, center } => {
                if !(*scale > 0.0 && scale.is_finite()) {
                    return bad("heart scale must be positive".into());
                }
                Ok(Sampler::Heart { scale: *scale, center: *center })
            }
            TargetSpec::UniformBox { lower, upper } => {
                if lower.is_empty() || lower.len() != upper.len() {
                    return bad("box bounds must have equal, nonzero length".into());
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u) || !l.is_finite() || !u.is_finite()) {
                    return bad("box bounds must satisfy lower < upper".into());
                }
                Ok(Sampler::Box(lower, upper))
            }
        }
    }

    /// Draws `n` points with uniform weights from the stream `(seed, 0)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<DiscreteMeasure> {
        self.sample_with(n, &mut rng_stream(seed, 0))
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<DiscreteMeasure> {
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let sampler = self.prepare()?;
        let d = self.dim();
        let mut points = Vec::with_capacity(n * d);
        for _ in 0..n {
            sampler.draw(rng, &mut points);
        }
        DiscreteMeasure::uniform(points, d)
    }
}

/// Free-function form of [`TargetSpec::sample`].
pub fn sample(spec: &TargetSpec, n: usize, seed: u64) -> Result<DiscreteMeasure> {
    spec.sample(n, seed)
}

struct GaussianFactor {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
}

impl GaussianFactor {
    fn new(mean: &[f64], cov: &[Vec<f64>]) -> Result<Self> {
        let d = mean.len();
        if d == 0 {
            return Err(Error::InvalidParameter("gaussian mean is empty".into()));
        }
        if cov.len() != d || cov.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidParameter(format!("covariance must be {d}x{d}")));
        }
        let c = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
        for i in 0..d {
            for j in 0..i {
                if (c[(i, j)] - c[(j, i)]).abs() > 1e-12 * (1.0 + c[(i, j)].abs()) {
                    return Err(Error::InvalidParameter("covariance is not symmetric".into()));
                }
            }
        }
        let chol = c
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("covariance is not positive definite".into()))?;
        Ok(Self { mean: DVector::from_column_slice(mean), chol: chol.l() })
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        let d = self.mean.len();
        let z = DVector::from_fn(d, |_, _| StandardNormal.sample(rng));
        let x = &self.mean + &self.chol * z;
        out.extend(x.iter());
    }
}

enum Sampler<'a> {
    Gaussian(GaussianFactor),
    Mixture(Vec<(f64, GaussianFactor)>),
    Exponential(Exp<f64>, usize),
    Rings(&'a [[f64; 2]], &'a [f64]),
    Spiral { scale: f64, t0: f64, t1: f64, center: [f64; 2] },
    Heart { scale: f64, center: [f64; 2] },
    Box(&'a [f64], &'a [f64]),
}

impl Sampler<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        use std::f64::consts::PI;
        match self {
            Sampler::Gaussian(g) => g.draw(rng, out),
            Sampler::Mixture(parts) => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = &parts[parts.len() - 1].1;
                for (w, g) in parts {
                    acc += w;
                    if u < acc {
                        chosen = g;
                        break;
                    }
                }
                chosen.draw(rng, out);
            }
            Sampler::Exponential(exp, d) => {
                for _ in 0..*d {
                    out.push(exp.sample(rng));
                }
            }
            Sampler::Rings(centers, radii) => {
                // ring chosen proportionally to circumference
                let total: f64 = radii.iter().sum();
                let u: f64 = rng.random::<f64>() * total;
                let mut acc = 0.0;
                let mut idx = radii.len() - 1;
                for (i, r) in radii.iter().enumerate() {
                    acc += r;
                    if u < acc {
                        idx = i;
                        break;
                    }
                }
                let theta = 2.0 * PI * rng.random::<f64>();
                let (c, r) = (centers[idx], radii[idx]);
                out.push(c[0] + r * theta.cos());
                out.push(c[1] + r * theta.sin());
            }
            Sampler::Spiral { scale, t0, t1, center } => {
                let s0 = spiral_arc(*t0);
                let s1 = spiral_arc(*t1);
                let target = s0 + rng.random::<f64>() * (s1 - s0);
                let theta = invert_spiral_arc(target, *t0, *t1);
                out.push(center[0] + scale * theta * theta.cos());
                out.push(center[1] + scale * theta * theta.sin());
            }
            Sampler::Heart { scale, center } => loop {
                let x = -1.2 + 2.4 * rng.random::<f64>();
                let y = -1.1 + 2.4 * rng.random::<f64>();
                if in_heart(x, y) {
                    out.push(center[0] + scale * x);
                    out.push(center[1] + scale * y);
                    break;
                }
            },
            Sampler::Box(lo, hi) => {
                for (l, h) in lo.iter().zip(hi.iter()) {
                    out.push(l + (h - l) * rng.random::<f64>());
                }
            }
        }
    }
}

/// Arc length of `r = theta` from 0 to `theta` (unit scale).
fn spiral_arc(theta: f64) -> f64 {
    0.5 * (theta * (1.0 + theta * theta).sqrt() + theta.asinh())
}

fn invert_spiral_arc(target: f64, lo: f64, hi: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if spiral_arc(mid) < target {
            a = mid;
        } else {
            b = mid;
        }
        if b - a <= 1e-15 * (1.0 + b) {
            break;
        }
    }
    0.5 * (a + b)
}

pub(crate) fn in_heart(x: f64, y: f64) -> bool {
    let s = x * x + y * y - 1.0;
    s * s * s - x * x * y * y * y <= 0.0
}
