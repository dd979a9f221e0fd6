//! Symmetric eigendecomposition and spectral matrix functions.
//!
//! Gram matrices of nearby points are numerically rank deficient. Every
//! eigenvalue below the floor `r * eps * max(lambda_max, 1) * floor_scale` is
//! clamped to zero and treated as *dropped*: spectral functions evaluate to
//! zero on those directions, which matches the `0 log 0 = 0` convention.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance for the symmetry check on inputs.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Eigenvalues below `-PSD_TOL * lambda_max` reject the matrix.
pub const PSD_TOL: f64 = 1e-8;

/// Default relative tolerance under which two eigenvalues are treated as equal
/// in divided differences.
pub const DEFAULT_DEGENERACY_TOL: f64 = 1e-8;

/// Options for [`sym_eig_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigOptions {
    /// Multiplier on the default eigenvalue floor.
    pub floor_scale: f64,
}

impl Default for EigOptions {
    fn default() -> Self {
        Self { floor_scale: 1.0 }
    }
}

#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    /// Descending; dropped entries are exactly zero.
    eigenvalues: DVector<f64>,
    /// Orthonormal columns, in the order of `eigenvalues`.
    eigenvectors: DMatrix<f64>,
    floor: f64,
    retained: usize,
}

impl EigenDecomposition {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<f64> {
        &self.eigenvectors
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Number of strictly positive eigenvalues kept; they come first.
    pub fn retained(&self) -> usize {
        self.retained
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn retained_values(&self) -> impl Iterator<Item = f64> + '_ {
        self.eigenvalues.iter().take(self.retained).copied()
    }

    /// Eigenvectors of the retained eigenvalues, `dim x retained`.
    pub fn retained_vectors(&self) -> DMatrix<f64> {
        self.eigenvectors.columns(0, self.retained).into_owned()
    }

    /// `V diag(f(lambda)) V^T` with `f` applied to retained eigenvalues only.
    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> DMatrix<f64> {
        let r = self.retained;
        let v = self.eigenvectors.columns(0, r);
        let mut scaled = v.into_owned();
        for (j, lam) in self.eigenvalues.iter().take(r).enumerate() {
            let fj = f(*lam);
            scaled.column_mut(j).scale_mut(fj);
        }
        let mut out = &scaled * v.transpose();
        symmetrize(&mut out);
        out
    }

    pub fn apply(&self, f: SpectralFn) -> DMatrix<f64> {
        self.map(|l| f.eval(l))
    }

    /// `V diag(lambda) V^T` from the clamped spectrum.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        self.map(|l| l)
    }

    /// `sum_j lambda_j log lambda_j` over retained eigenvalues.
    pub fn entropy_trace(&self) -> f64 {
        self.retained_values().map(xlogx).sum()
    }
}

/// Named spectral functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpectralFn {
    /// `log(x) / x`.
    LogOverX,
    Log,
    XLogX,
    Sqrt,
    InvSqrt,
}

impl SpectralFn {
    #[inline]
    pub fn eval(self, x: f64) -> f64 {
        match self {
            SpectralFn::LogOverX => x.ln() / x,
            SpectralFn::Log => x.ln(),
            SpectralFn::XLogX => xlogx(x),
            SpectralFn::Sqrt => x.sqrt(),
            SpectralFn::InvSqrt => 1.0 / x.sqrt(),
        }
    }
}

#[inline]
pub(crate) fn xlogx(x: f64) -> f64 {
    if x > 0.0 {
        x * x.ln()
    } else {
        0.0
    }
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Largest `|M_ij - M_ji|`.
pub fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in 0..i {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub fn sym_eig(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    sym_eig_with(m, EigOptions::default())
}

pub fn sym_eig_with(m: &DMatrix<f64>, opts: EigOptions) -> Result<EigenDecomposition> {
    let (r, c) = m.shape();
    if r != c {
        return Err(Error::NotSquare(r, c));
    }
    if r == 0 {
        return Err(Error::EmptyInput);
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix entry".into()));
    }
    let scale = m.amax().max(1.0);
    let asym = max_asymmetry(m);
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric(asym));
    }
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = sym.symmetric_eigen();

    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lmax = eig.eigenvalues[order[0]];
    let lmin = eig.eigenvalues[order[r - 1]];
    if lmin < -PSD_TOL * lmax.max(0.0) || (lmax <= 0.0 && lmin < 0.0) {
        return Err(Error::NotPsd { min: lmin, max: lmax });
    }
    let floor = r as f64 * f64::EPSILON * lmax.max(1.0) * opts.floor_scale;

    let mut values = DVector::zeros(r);
    let mut vectors = DMatrix::zeros(r, r);
    let mut retained = 0;
    for (dst, &src) in order.iter().enumerate() {
        let lam = eig.eigenvalues[src];
        if lam > floor {
            values[dst] = lam;
            retained += 1;
        }
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenDecomposition { eigenvalues: values, eigenvectors: vectors, floor, retained })
}

/// `Tr(M log M)` with `0 log 0 = 0`.
pub fn entropy_trace(m: &DMatrix<f64>) -> Result<f64> {
    Ok(sym_eig(m)?.entropy_trace())
}

/// `f(M)` restricted to the range of `M`.
pub fn spectral_apply(m: &DMatrix<f64>, f: SpectralFn) -> Result<DMatrix<f64>> {
    Ok(sym_eig(m)?.apply(f))
}

/// Divided differences of `log` over the retained spectrum.
#[derive(Debug, Clone)]
pub struct LoewnerTable {
    entries: DMatrix<f64>,
}

impl LoewnerTable {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.entries
    }
}

/// Entry `(j, k)` is `(log eta_j - log eta_k) / (eta_j - eta_k)`, `1 / eta_j`
/// on the diagonal, and `2 / (eta_j + eta_k)` for near-equal pairs.
pub fn loewner(eig: &EigenDecomposition, degeneracy_tol: f64) -> LoewnerTable {
    let eta: Vec<f64> = eig.retained_values().collect();
    let r = eta.len();
    let mut entries = DMatrix::zeros(r, r);
    for j in 0..r {
        entries[(j, j)] = 1.0 / eta[j];
        for k in 0..j {
            let v = log_divided_difference(eta[j], eta[k], degeneracy_tol);
            entries[(j, k)] = v;
            entries[(k, j)] = v;
        }
    }
    LoewnerTable { entries }
}

#[inline]
pub(crate) fn log_divided_difference(a: f64, b: f64, degeneracy_tol: f64) -> f64 {
    if (a - b).abs() <= degeneracy_tol * a.max(b) {
        2.0 / (a + b)
    } else {
        (a.ln() - b.ln()) / (a - b)
    }
}

/// Both sides of `f(psi^T psi) = psi^T (psi psi^T)^{-1/2} f(psi psi^T) (psi psi^T)^{-1/2} psi`
/// for a wide factor `psi` (`r x D`, `r <= D`) with invertible `psi psi^T`.
pub fn psi_transfer(psi: &DMatrix<f64>, f: SpectralFn) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let small = psi * psi.transpose();
    let eig_small = sym_eig(&small)?;
    if eig_small.retained() < eig_small.dim() {
        return Err(Error::RankDeficient(format!(
            "psi psi^T has {} of {} eigenvalues above the floor",
            eig_small.retained(),
            eig_small.dim()
        )));
    }
    let large = psi.transpose() * psi;
    let lhs = sym_eig(&large)?.apply(f);

    let inv_sqrt = eig_small.apply(SpectralFn::InvSqrt);
    let middle = &inv_sqrt * eig_small.apply(f) * &inv_sqrt;
    let mut rhs = psi.transpose() * middle * psi;
    symmetrize(&mut rhs);
    Ok((lhs, rhs))
}
