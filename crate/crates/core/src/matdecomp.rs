//! Dense complex matrices and the factorizations used across the crate.
//!
//! Storage is nalgebra's column-major `DMatrix<Complex<f64>>`, and the
//! Hermitian eigen-solver and QR are nalgebra's. The Cholesky log-determinant,
//! a one-sided Jacobi SVD and the generalized SVD are implemented here.

pub use nalgebra::Complex;
use nalgebra::DMatrix;

use crate::{Error, Result};

pub type C64 = Complex<f64>;

const EIGEN_MAX_ITER: usize = 10_000;
const JACOBI_MAX_SWEEPS: usize = 100;
const PSD_FLOOR: f64 = -1e-12;
const GSVD_RANK_TOL: f64 = 1e-10;

/// Dense complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<C64>);

impl ComplexMatrix {
    pub fn from_dmatrix(m: DMatrix<C64>) -> Self {
        Self(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn from_fn(rows: usize, cols: usize, f: impl FnMut(usize, usize) -> C64) -> Self {
        Self(DMatrix::from_fn(rows, cols, f))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self::from_fn(n, n, |a, b| {
            if a == b {
                C64::new(diag[a], 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<C64> {
        self.0
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn mul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.cols() != rhs.rows() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} times {}x{}",
                self.rows(),
                self.cols(),
                rhs.rows(),
                rhs.cols()
            )));
        }
        Ok(Self(&self.0 * &rhs.0))
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.map(|z| z * factor))
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Self {
        Self(&self.0 - &rhs.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

/// Square complex matrix with exact conjugate symmetry.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(DMatrix<C64>);

impl HermitianMatrix {
    /// Builds `(X + Xᴴ)/2`. Fails if `x` is not square or has non-finite entries.
    pub fn new(x: ComplexMatrix) -> Result<Self> {
        let m = x.0;
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if !m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::InvalidArgument(
                "matrix has non-finite entries".into(),
            ));
        }
        let n = m.nrows();
        let sym = DMatrix::from_fn(n, n, |a, b| (m[(a, b)] + m[(b, a)].conj()) * 0.5);
        Ok(Self(sym))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        Self(ComplexMatrix::from_real_diagonal(diag).0)
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> C64 {
        self.0[(row, col)]
    }

    pub fn as_dmatrix(&self) -> &DMatrix<C64> {
        &self.0
    }

    pub fn to_complex(&self) -> ComplexMatrix {
        ComplexMatrix(self.0.clone())
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim()).map(|i| self.0[(i, i)].re).sum()
    }

    pub fn scale(&self, factor: f64) -> Self {
        Self(self.0.map(|z| z * factor))
    }

    /// `I + factor·self`.
    pub fn shifted_identity_plus(&self, factor: f64) -> Self {
        let mut m = self.0.map(|z| z * factor);
        for i in 0..self.dim() {
            m[(i, i)] += C64::new(1.0, 0.0);
        }
        Self(m)
    }

    /// `Xᴴ · self · X`, re-symmetrized.
    pub fn congruence(&self, x: &ComplexMatrix) -> Result<HermitianMatrix> {
        let inner = x.adjoint().mul(&self.to_complex())?.mul(x)?;
        HermitianMatrix::new(inner)
    }
}

/// Natural log-determinant of a Hermitian positive definite matrix via Cholesky.
pub fn logdet_hpd(a: &HermitianMatrix) -> Result<f64> {
    let n = a.dim();
    let m = a.as_dmatrix();
    let mut l = DMatrix::<C64>::zeros(n, n);
    let mut logdet = 0.0;
    for j in 0..n {
        let mut pivot = m[(j, j)].re;
        for k in 0..j {
            pivot -= l[(j, k)].norm_sqr();
        }
        if !(pivot > 0.0) {
            return Err(Error::NotPositiveDefinite { index: j, pivot });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = C64::new(ljj, 0.0);
        logdet += 2.0 * ljj.ln();
        for i in (j + 1)..n {
            let mut s = m[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)].conj();
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(logdet)
}

/// Hermitian eigen-decomposition with eigenvalues in ascending order.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl Eigh {
    /// `Q diag(f(λ)) Qᴴ`.
    pub fn reassemble(&self, mut f: impl FnMut(f64) -> f64) -> Result<HermitianMatrix> {
        let q = self.eigenvectors.as_dmatrix();
        let n = q.nrows();
        let mut scaled = q.clone();
        for (j, &lambda) in self.eigenvalues.iter().enumerate() {
            let v = f(lambda);
            for i in 0..n {
                scaled[(i, j)] *= v;
            }
        }
        HermitianMatrix::new(ComplexMatrix(scaled * q.adjoint()))
    }
}

pub fn eigh(a: &HermitianMatrix) -> Result<Eigh> {
    let n = a.dim();
    if n == 0 {
        return Ok(Eigh {
            eigenvalues: Vec::new(),
            eigenvectors: ComplexMatrix::zeros(0, 0),
        });
    }
    let eig = a
        .as_dmatrix()
        .clone()
        .try_symmetric_eigen(f64::EPSILON, EIGEN_MAX_ITER)
        .ok_or(Error::ConvergenceFailure("Hermitian eigen-solver"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Eigh {
        eigenvalues,
        eigenvectors: ComplexMatrix(eigenvectors),
    })
}

/// Principal square root of a positive semi-definite matrix.
///
/// Eigenvalues in `[-1e-12, 0)` are clipped to zero.
pub fn hermitian_sqrt(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    let eig = eigh(a)?;
    if let Some(&min) = eig.eigenvalues.first() {
        if min < PSD_FLOOR {
            return Err(Error::NotPsd(min));
        }
    }
    eig.reassemble(|lambda| lambda.max(0.0).sqrt())
}

/// Joint factorization `A = U_M diag(σ_M) Vᴴ`, `B = U_E diag(σ_E) Vᴴ`.
#[derive(Debug, Clone)]
pub struct GsvdFactorization {
    pub u_m: ComplexMatrix,
    pub u_e: ComplexMatrix,
    /// Descending.
    pub sigma_m: Vec<f64>,
    pub sigma_e: Vec<f64>,
    pub v: ComplexMatrix,
    /// Diagonal of `V⁻¹V⁻ᴴ`.
    pub v_inv_gram_diag: Vec<f64>,
    /// `V⁻ᴴ`, the beamforming matrix mapping subchannel symbols to antennas.
    pub v_inv_adjoint: ComplexMatrix,
}

/// Thin SVD of a tall or square matrix, singular values descending.
///
/// One-sided Jacobi: column pairs of `A·V` are rotated until mutually
/// orthogonal to working precision, then a QR of the result yields `U`.
fn svd_sorted(m: &DMatrix<C64>) -> Result<(DMatrix<C64>, Vec<f64>, DMatrix<C64>)> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(Error::DimensionMismatch(format!(
            "SVD expects rows >= cols, got {rows}x{cols}"
        )));
    }
    let mut a = m.clone();
    let mut v = DMatrix::<C64>::identity(cols, cols);
    let mut converged = false;
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = a.column(p).norm_squared();
                let beta = a.column(q).norm_squared();
                let gamma = a.column(p).dotc(&a.column(q));
                let g = gamma.norm();
                if g == 0.0 || g <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = (gamma / g).conj();
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + zeta.hypot(1.0));
                let c = 1.0 / t.hypot(1.0);
                let s = c * t;
                for mat in [&mut a, &mut v] {
                    for r in 0..mat.nrows() {
                        let (xp, xq) = (mat[(r, p)], mat[(r, q)] * phase);
                        mat[(r, p)] = xp * c - xq * s;
                        mat[(r, q)] = xp * s + xq * c;
                    }
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::ConvergenceFailure("Jacobi SVD"));
    }

    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let a_sorted = DMatrix::from_fn(rows, cols, |r, c| a[(r, order[c])]);
    let v_sorted = DMatrix::from_fn(cols, cols, |r, c| v[(r, order[c])]);
    // The columns are orthogonal, so R is diagonal up to round-off and its
    // diagonal carries the singular values with a phase.
    let qr = a_sorted.qr();
    let mut u = qr.q();
    let r = qr.r();
    let mut values = Vec::with_capacity(cols);
    for j in 0..cols {
        let d = r[(j, j)];
        let mag = d.norm();
        if mag > 0.0 {
            let ph = d / mag;
            for row in 0..rows {
                u[(row, j)] *= ph;
            }
        }
        values.push(norms[order[j]]);
    }
    Ok((u, values, v_sorted))
}

fn column_norm(m: &DMatrix<C64>, j: usize) -> f64 {
    m.column(j).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Generalized SVD of two square matrices sharing the right factor.
///
/// The stacked matrix `[A; B]` is QR-factorized and the orthonormal factor
/// split into a cosine-sine pair. An SVD of the top block yields the cosines;
/// the bottom block is orthogonalized by a QR, and the subchannels whose sine
/// is small are refined with a second SVD so both unitary factors stay
/// orthonormal to working precision.
pub fn gsvd(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<GsvdFactorization> {
    let m = a.rows();
    if a.cols() != m || b.rows() != m || b.cols() != m {
        return Err(Error::DimensionMismatch(format!(
            "gsvd expects two square matrices of equal size, got {}x{} and {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("gsvd of empty matrices".into()));
    }
    if !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(
            "gsvd input has non-finite entries".into(),
        ));
    }

    let stacked = DMatrix::from_fn(
        2 * m,
        m,
        |r, c| if r < m { a.0[(r, c)] } else { b.0[(r - m, c)] },
    );
    let (_, stacked_sv, _) = svd_sorted(&stacked)?;
    let largest = stacked_sv[0];
    let ratio = if largest > 0.0 {
        stacked_sv[m - 1] / largest
    } else {
        0.0
    };
    if !(ratio > GSVD_RANK_TOL) {
        return Err(Error::RankDeficient { ratio });
    }

    let qr = stacked.qr();
    let q = qr.q();
    let r = qr.r();
    let q1 = q.rows(0, m).into_owned();
    let q2 = q.rows(m, m).into_owned();

    // Top block: Q1 = U1 diag(c) Wᴴ with c descending; reverse to ascending so
    // that the bottom block is processed with sines in descending order.
    let (u1, c_desc, w_desc) = svd_sorted(&q1)?;
    let rev = |mat: &DMatrix<C64>| DMatrix::from_fn(mat.nrows(), m, |i, j| mat[(i, m - 1 - j)]);
    let mut u_m = rev(&u1);
    let mut w = rev(&w_desc);
    let mut cos: Vec<f64> = c_desc.iter().rev().copied().collect();

    let z = &q2 * &w;
    let sines_raw: Vec<f64> = (0..m).map(|j| column_norm(&z, j)).collect();
    let split = sines_raw
        .iter()
        .position(|&s| s < std::f64::consts::FRAC_1_SQRT_2)
        .unwrap_or(m);

    let zqr = z.qr();
    let qz = zqr.q();
    let rz = zqr.r();
    let mut u_e = qz.clone();
    let mut sin = vec![0.0; m];
    for i in 0..split {
        let d = rz[(i, i)];
        let mag = d.norm();
        sin[i] = mag;
        if mag > 0.0 {
            let phase = d / mag;
            for row in 0..m {
                u_e[(row, i)] *= phase;
            }
        }
    }

    if split < m {
        let tail = m - split;
        let block = rz.view((split, split), (tail, tail)).into_owned();
        let (ur, sv, vr) = svd_sorted(&block)?;
        let w_tail = w.columns(split, tail) * &vr;
        w.columns_mut(split, tail).copy_from(&w_tail);
        let ue_tail = qz.columns(split, tail) * &ur;
        u_e.columns_mut(split, tail).copy_from(&ue_tail);
        sin[split..].copy_from_slice(&sv);

        // Cosines of the refined block are large, so normalizing Q1·w is accurate.
        let y = &q1 * &w_tail;
        for j in 0..tail {
            let c = column_norm(&y, j);
            cos[split + j] = c;
            for row in 0..m {
                u_m[(row, split + j)] = y[(row, j)] / c;
            }
        }
    }

    for i in 0..m {
        let norm = cos[i].hypot(sin[i]);
        cos[i] /= norm;
        sin[i] /= norm;
    }

    // A = Q1 R = U_M diag(c) Wᴴ R, so Vᴴ = Wᴴ R.
    let v = r.adjoint() * &w;
    // V⁻¹ = Wᴴ R⁻ᴴ, hence (V⁻¹V⁻ᴴ)_ii = ‖R⁻¹ w_i‖².
    let r_inv_w = r
        .solve_upper_triangular(&w)
        .ok_or(Error::RankDeficient { ratio })?;
    let v_inv_gram: Vec<f64> = (0..m).map(|j| column_norm(&r_inv_w, j).powi(2)).collect();

    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| cos[j].total_cmp(&cos[i]));
    let permute = |mat: &DMatrix<C64>| {
        ComplexMatrix(DMatrix::from_fn(mat.nrows(), m, |i, j| mat[(i, order[j])]))
    };

    Ok(GsvdFactorization {
        u_m: permute(&u_m),
        u_e: permute(&u_e),
        sigma_m: order.iter().map(|&i| cos[i]).collect(),
        sigma_e: order.iter().map(|&i| sin[i]).collect(),
        v: permute(&v),
        v_inv_gram_diag: order.iter().map(|&i| v_inv_gram[i]).collect(),
        v_inv_adjoint: permute(&r_inv_w),
    })
}

#[cfg(test)]
pub(crate) mod test_support {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    pub fn random_complex(rows: usize, cols: usize, seed: u64) -> ComplexMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ComplexMatrix::from_fn(rows, cols, |_, _| {
            C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    /// `I + G Gᴴ / n`.
    pub fn random_hpd(n: usize, seed: u64) -> HermitianMatrix {
        let g = random_complex(n, n, seed);
        let gg = g.mul(&g.adjoint()).unwrap().scale(1.0 / n as f64);
        HermitianMatrix::new(gg).unwrap().shifted_identity_plus(1.0)
    }
}
