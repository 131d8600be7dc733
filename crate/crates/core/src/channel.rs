//! Transmit correlation from a Gaussian power azimuth spectrum, per-link
//! statistics and Kronecker-model channel sampling.

use std::f64::consts::PI;
use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::matdecomp::{eigh, hermitian_sqrt, ComplexMatrix, HermitianMatrix, C64};
use crate::{Error, Result};

const QUADRATURE_NODES: usize = 4096;
const QUADRATURE_TOL: f64 = 1e-9;
const PSD_FLOOR: f64 = -1e-12;

/// Uniform linear array seen through a Gaussian power azimuth spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub num_antennas: usize,
    /// Inter-element spacing in wavelengths.
    pub spacing_wavelengths: f64,
    pub mean_angle_deg: f64,
    /// Root-mean-square angle spread.
    pub angle_spread_deg: f64,
}

impl ArraySpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 {
            return Err(Error::InvalidArgument(
                "array needs at least one antenna".into(),
            ));
        }
        if !(self.spacing_wavelengths >= 0.0) || !self.spacing_wavelengths.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "antenna spacing must be finite and >= 0, got {}",
                self.spacing_wavelengths
            )));
        }
        if !(self.angle_spread_deg > 0.0) || !self.angle_spread_deg.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "angle spread must be finite and > 0, got {}",
                self.angle_spread_deg
            )));
        }
        if !self.mean_angle_deg.is_finite() {
            return Err(Error::InvalidArgument("mean angle must be finite".into()));
        }
        Ok(())
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1].
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and its derivative.
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn_1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn_1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

struct Rule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

fn rule(n: usize) -> &'static Rule {
    static COARSE: OnceLock<Rule> = OnceLock::new();
    static FINE: OnceLock<Rule> = OnceLock::new();
    let cell = match n {
        QUADRATURE_NODES => &COARSE,
        _ if n == 2 * QUADRATURE_NODES => &FINE,
        _ => unreachable!("only the production rule sizes are cached"),
    };
    cell.get_or_init(|| {
        let (x, w) = gauss_legendre(n);
        // map [-1, 1] -> [-π, π]
        Rule {
            nodes: x.iter().map(|x| PI * x).collect(),
            weights: w.iter().map(|w| PI * w).collect(),
        }
    })
}

/// Raw spectrum integrals for lags `0..num_lags`.
fn lag_integrals(spec: &ArraySpec, rule: &Rule) -> Vec<C64> {
    let theta = wrap_degrees(spec.mean_angle_deg).to_radians();
    let spread = spec.angle_spread_deg.to_radians();
    let two_var = 2.0 * spread * spread;
    let mut sums = vec![C64::new(0.0, 0.0); spec.num_antennas];
    for (&phi, &w) in rule.nodes.iter().zip(&rule.weights) {
        let weight = w * (-(phi - theta).powi(2) / two_var).exp();
        let phase = 2.0 * PI * spec.spacing_wavelengths * phi.sin();
        for (lag, s) in sums.iter_mut().enumerate() {
            *s += C64::from_polar(weight, phase * lag as f64);
        }
    }
    sums
}

fn wrap_degrees(deg: f64) -> f64 {
    (deg + 180.0).rem_euclid(360.0) - 180.0
}

/// Transmit correlation matrix with unit diagonal.
///
/// Entry `(a, b)` is the Gaussian-weighted integral of
/// `exp(2πi·d·(a−b)·sin φ)` over `φ ∈ [−π, π]`, divided by the lag-zero
/// integral. The mean angle is reduced modulo 360° first.
pub fn gen_correlation(spec: &ArraySpec) -> Result<HermitianMatrix> {
    spec.validate()?;
    let coarse = lag_integrals(spec, rule(QUADRATURE_NODES));
    let fine = lag_integrals(spec, rule(2 * QUADRATURE_NODES));
    if !(coarse[0].re > 0.0) {
        return Err(Error::QuadratureFailure(f64::INFINITY));
    }
    let normalize = |v: &[C64]| -> Vec<C64> { v.iter().map(|z| z / v[0].re).collect() };
    let coarse = normalize(&coarse);
    let fine = normalize(&fine);
    let err = coarse
        .iter()
        .zip(&fine)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if !(err <= QUADRATURE_TOL) {
        return Err(Error::QuadratureFailure(err));
    }

    let m = spec.num_antennas;
    let t = ComplexMatrix::from_fn(m, m, |a, b| {
        if a == b {
            C64::new(1.0, 0.0)
        } else if a > b {
            coarse[a - b]
        } else {
            coarse[b - a].conj()
        }
    });
    let t = HermitianMatrix::new(t)?;
    let min_eig = eigh(&t)?.eigenvalues[0];
    if min_eig < PSD_FLOOR {
        return Err(Error::NotPsd(min_eig));
    }
    Ok(t)
}

/// Statistical CSI of one link: SNR, antenna counts and Kronecker correlations.
///
/// Both correlation matrices must be positive semi-definite; the ones built
/// by [`gen_correlation`] additionally have a unit diagonal.
#[derive(Debug, Clone)]
pub struct ChannelStatistics {
    snr: f64,
    t_corr: HermitianMatrix,
    r_corr: HermitianMatrix,
    t_sqrt: HermitianMatrix,
    r_sqrt: HermitianMatrix,
}

impl ChannelStatistics {
    pub fn new(snr: f64, t_corr: HermitianMatrix, r_corr: HermitianMatrix) -> Result<Self> {
        if !(snr >= 0.0) || !snr.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "snr must be finite and >= 0, got {snr}"
            )));
        }
        if t_corr.dim() == 0 || r_corr.dim() == 0 {
            return Err(Error::InvalidArgument("antenna counts must be >= 1".into()));
        }
        let t_sqrt = hermitian_sqrt(&t_corr)?;
        let r_sqrt = hermitian_sqrt(&r_corr)?;
        Ok(Self {
            snr,
            t_corr,
            r_corr,
            t_sqrt,
            r_sqrt,
        })
    }

    /// Uncorrelated link with `num_rx` receive and `num_tx` transmit antennas.
    pub fn iid(snr: f64, num_rx: usize, num_tx: usize) -> Result<Self> {
        Self::new(
            snr,
            HermitianMatrix::identity(num_tx),
            HermitianMatrix::identity(num_rx),
        )
    }

    /// Link with transmit correlation from `array` and identity receive correlation.
    pub fn from_array(snr: f64, num_rx: usize, array: &ArraySpec) -> Result<Self> {
        Self::new(
            snr,
            gen_correlation(array)?,
            HermitianMatrix::identity(num_rx),
        )
    }

    pub fn with_snr(&self, snr: f64) -> Result<Self> {
        if !(snr >= 0.0) || !snr.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "snr must be finite and >= 0, got {snr}"
            )));
        }
        Ok(Self {
            snr,
            ..self.clone()
        })
    }

    pub fn snr(&self) -> f64 {
        self.snr
    }

    pub fn num_rx(&self) -> usize {
        self.r_corr.dim()
    }

    pub fn num_tx(&self) -> usize {
        self.t_corr.dim()
    }

    /// `N / M`.
    pub fn beta(&self) -> f64 {
        self.num_rx() as f64 / self.num_tx() as f64
    }

    pub fn t_corr(&self) -> &HermitianMatrix {
        &self.t_corr
    }

    pub fn r_corr(&self) -> &HermitianMatrix {
        &self.r_corr
    }

    pub fn t_sqrt(&self) -> &HermitianMatrix {
        &self.t_sqrt
    }

    pub fn r_sqrt(&self) -> &HermitianMatrix {
        &self.r_sqrt
    }
}

/// One channel draw `H` (`N × M`).
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h: ComplexMatrix,
}

/// Independent RNG stream `stream` derived from a master seed.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Matrix of i.i.d. circularly-symmetric CN(0, 1) entries.
pub fn complex_gaussian_matrix<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rng: &mut R,
) -> ComplexMatrix {
    let scale = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re * scale, im * scale)
    })
}

/// Kronecker-model draw `H = sqrt(ρ/M)·R^{1/2}·W·T^{1/2}`.
pub fn sample_channel<R: Rng + ?Sized>(
    stats: &ChannelStatistics,
    rng: &mut R,
) -> ChannelRealization {
    let (n, m) = (stats.num_rx(), stats.num_tx());
    let w = complex_gaussian_matrix(n, m, rng);
    let gain = (stats.snr / m as f64).sqrt();
    let r = stats.r_sqrt.as_dmatrix();
    let t = stats.t_sqrt.as_dmatrix();
    let h = (r * w.as_dmatrix() * t).map(|z| z * gain);
    ChannelRealization {
        h: ComplexMatrix::from_dmatrix(h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(m: usize, d: f64, theta: f64, spread: f64) -> ArraySpec {
        ArraySpec {
            num_antennas: m,
            spacing_wavelengths: d,
            mean_angle_deg: theta,
            angle_spread_deg: spread,
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let total: f64 = w.iter().sum();
        assert!((total - 2.0).abs() < 1e-14);
        // degree 8 is exact for 5 nodes
        let quad: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(8)).sum();
        assert!((quad - 2.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn large_rule_weights_sum_to_two() {
        let (_, w) = gauss_legendre(QUADRATURE_NODES);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_spacing_gives_all_ones() {
        let t = gen_correlation(&spec(4, 0.0, 40.0, 5.0)).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                assert!((t.get(a, b) - C64::new(1.0, 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn diagonal_is_exactly_one_and_conjugate_symmetric() {
        let t = gen_correlation(&spec(6, 1.0, -10.0, 5.0)).unwrap();
        for a in 0..6 {
            assert_eq!(t.get(a, a), C64::new(1.0, 0.0));
            for b in 0..6 {
                assert_eq!(t.get(a, b), t.get(b, a).conj());
            }
        }
    }

    #[test]
    fn invariant_under_full_turn() {
        let a = gen_correlation(&spec(4, 1.0, 40.0, 5.0)).unwrap();
        let b = gen_correlation(&spec(4, 1.0, 400.0, 5.0)).unwrap();
        let c = gen_correlation(&spec(4, 1.0, -320.0, 5.0)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn wide_spread_decorrelates() {
        let narrow = gen_correlation(&spec(2, 1.0, 40.0, 5.0)).unwrap();
        let wide = gen_correlation(&spec(2, 1.0, 40.0, 1e4)).unwrap();
        assert!(wide.get(0, 1).norm() < narrow.get(0, 1).norm());
        // uniform scattering over [-π, π] gives J0(2π) ≈ 0.2203
        assert!((wide.get(0, 1).norm() - 0.220_276_908_4).abs() < 1e-3);
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(gen_correlation(&spec(0, 1.0, 0.0, 5.0)).is_err());
        assert!(gen_correlation(&spec(2, -1.0, 0.0, 5.0)).is_err());
        assert!(gen_correlation(&spec(2, 1.0, 0.0, 0.0)).is_err());
    }

    #[test]
    fn extremely_narrow_spread_fails_quadrature() {
        assert!(matches!(
            gen_correlation(&spec(2, 1.0, 40.0, 1e-3)),
            Err(Error::QuadratureFailure(_))
        ));
    }

    #[test]
    fn statistics_reject_bad_input() {
        assert!(ChannelStatistics::iid(-1.0, 2, 2).is_err());
        assert!(matches!(
            ChannelStatistics::new(
                1.0,
                HermitianMatrix::from_real_diagonal(&[1.0, -0.5]),
                HermitianMatrix::identity(1)
            ),
            Err(Error::NotPsd(_))
        ));
        let s = ChannelStatistics::iid(2.0, 6, 3).unwrap();
        assert_eq!(s.beta(), 2.0);
    }

    #[test]
    fn zero_snr_gives_zero_channel() {
        let stats = ChannelStatistics::iid(0.0, 3, 2).unwrap();
        let h = sample_channel(&stats, &mut rng_stream(1, 0)).h;
        assert_eq!(h.frobenius_norm(), 0.0);
    }

    #[test]
    fn fixed_seed_is_bit_identical() {
        let stats = ChannelStatistics::from_array(3.0, 3, &spec(4, 1.0, 40.0, 5.0)).unwrap();
        let a = sample_channel(&stats, &mut rng_stream(42, 7));
        let b = sample_channel(&stats, &mut rng_stream(42, 7));
        let c = sample_channel(&stats, &mut rng_stream(42, 8));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn iid_channel_has_unit_variance_entries() {
        // T = R = I and ρ = M make H = W.
        let m = 4;
        let stats = ChannelStatistics::iid(m as f64, 5, m).unwrap();
        let mut rng = rng_stream(9, 0);
        let mut sum = 0.0;
        let mut count = 0usize;
        while count < 100_000 {
            let h = sample_channel(&stats, &mut rng).h;
            sum += h.as_dmatrix().iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += 20;
        }
        let var = sum / count as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
    }

    #[test]
    fn complex_gaussian_moments() {
        let mut rng = rng_stream(123, 0);
        let w = complex_gaussian_matrix(1000, 1000, &mut rng);
        let n = 1e6;
        let mean: C64 = w.as_dmatrix().iter().sum::<C64>() / n;
        let power: f64 = w.as_dmatrix().iter().map(|z| z.norm_sqr()).sum::<f64>() / n;
        assert!(mean.norm() < 3e-3, "{mean}");
        assert!((power - 1.0).abs() < 0.01, "{power}");
        let real_var: f64 = w.as_dmatrix().iter().map(|z| z.re * z.re).sum::<f64>() / n;
        assert!((real_var - 0.5).abs() < 0.01);
        let again = complex_gaussian_matrix(1000, 1000, &mut rng_stream(123, 0));
        assert_eq!(w, again);
    }

    #[test]
    fn empirical_covariance_matches_kronecker() {
        // Cov(vec H) = (ρ/M)·(Tᵀ ⊗ R) for column-major vec.
        let m = 3;
        let n = 2;
        let t = gen_correlation(&spec(m, 0.5, 20.0, 10.0)).unwrap();
        let r = HermitianMatrix::new(ComplexMatrix::from_fn(n, n, |a, b| {
            if a == b {
                C64::new(1.0, 0.0)
            } else if a < b {
                C64::new(0.3, 0.4)
            } else {
                C64::new(0.3, -0.4)
            }
        }))
        .unwrap();
        let rho = 2.0;
        let stats = ChannelStatistics::new(rho, t.clone(), r.clone()).unwrap();
        let mut rng = rng_stream(5, 0);
        let dim = m * n;
        let mut cov = nalgebra::DMatrix::<C64>::zeros(dim, dim);
        let samples = 10_000;
        for _ in 0..samples {
            let h = sample_channel(&stats, &mut rng).h;
            let v = nalgebra::DVector::from_iterator(dim, h.as_dmatrix().iter().copied());
            cov += &v * v.adjoint();
        }
        cov /= C64::new(samples as f64, 0.0);
        let expected = nalgebra::DMatrix::from_fn(dim, dim, |i, j| {
            let (ri, ci) = (i % n, i / n);
            let (rj, cj) = (j % n, j / n);
            t.get(cj, ci) * r.get(ri, rj) * (rho / m as f64)
        });
        let rel = (&cov - &expected).norm() / expected.norm();
        assert!(rel < 0.05, "relative error {rel}");
    }
}
