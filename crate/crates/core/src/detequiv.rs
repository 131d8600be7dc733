//! Deterministic equivalent of the ergodic mutual information.
//!
//! For a Kronecker channel with statistics `(ρ, T, R)` and transmit
//! covariance `P`, the pair `(e, δ)` solves
//!
//! ```text
//! e = (ρ/N)·tr{R (I + δR)⁻¹}
//! δ = (ρ/M)·tr{S (I + β e S)⁻¹},   S = T^{1/2} P T^{1/2}
//! ```
//!
//! and the per-antenna mutual information is approximated by
//! `(1/M)·ln det(I + β e S) + (1/M)·ln det(I + δR) − (β/ρ)·δ·e`.

use crate::channel::ChannelStatistics;
use crate::matdecomp::{eigh, logdet_hpd, HermitianMatrix};
use crate::precoders::Precoder;
use crate::{Error, Result};

const TOLERANCE: f64 = 1e-12;
const MAX_ITERATIONS: usize = 10_000;
const STALL_LIMIT: usize = 10;
const RELAXATION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub e: f64,
    pub delta: f64,
    pub iterations: usize,
    /// Largest absolute update in the final iteration.
    pub residual: f64,
}

/// Large-system rates in nats per transmit antenna.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LslRate {
    pub i_main: f64,
    pub i_eave: f64,
    pub rs: f64,
}

/// `T^{1/2} P T^{1/2}`.
pub(crate) fn effective_covariance(
    stats: &ChannelStatistics,
    p: &Precoder,
) -> Result<HermitianMatrix> {
    if p.dim() != stats.num_tx() {
        return Err(Error::DimensionMismatch(format!(
            "precoder is {0}x{0} but the channel has {1} transmit antennas",
            p.dim(),
            stats.num_tx()
        )));
    }
    p.matrix().congruence(&stats.t_sqrt().to_complex())
}

fn nonnegative_eigenvalues(a: &HermitianMatrix) -> Result<Vec<f64>> {
    Ok(eigh(a)?
        .eigenvalues
        .into_iter()
        .map(|l| l.max(0.0))
        .collect())
}

/// Solves the coupled `(e, δ)` equations by alternating substitution.
///
/// Starts at `e = δ = ρ`. If the update size fails to shrink for ten
/// consecutive steps the iteration switches to a 0.5 under-relaxation.
pub fn solve_fixed_point(stats: &ChannelStatistics, p: &Precoder) -> Result<FixedPoint> {
    let s_eig = nonnegative_eigenvalues(&effective_covariance(stats, p)?)?;
    let r_eig = nonnegative_eigenvalues(stats.r_corr())?;
    let rho = stats.snr();
    let beta = stats.beta();
    let n = stats.num_rx() as f64;
    let m = stats.num_tx() as f64;

    let e_of = |delta: f64| rho / n * r_eig.iter().map(|r| r / (1.0 + delta * r)).sum::<f64>();
    let delta_of = |e: f64| rho / m * s_eig.iter().map(|s| s / (1.0 + beta * e * s)).sum::<f64>();

    let (mut e, mut delta) = (rho, rho);
    let mut relax = 1.0;
    let mut previous = f64::INFINITY;
    let mut stalled = 0;
    for iteration in 1..=MAX_ITERATIONS {
        let e_next = e + relax * (e_of(delta) - e);
        let delta_next = delta + relax * (delta_of(e_next) - delta);
        let residual = (e_next - e).abs().max((delta_next - delta).abs());
        e = e_next;
        delta = delta_next;
        if !residual.is_finite() {
            break;
        }
        if residual <= TOLERANCE {
            return Ok(FixedPoint {
                e,
                delta,
                iterations: iteration,
                residual,
            });
        }
        if residual >= previous {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                relax = RELAXATION;
            }
        } else {
            stalled = 0;
        }
        previous = residual;
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: previous,
    })
}

/// Large-system per-antenna mutual information (nats) at a solved fixed point.
pub fn lsl_mutual_information(
    stats: &ChannelStatistics,
    p: &Precoder,
    fp: &FixedPoint,
) -> Result<f64> {
    let rho = stats.snr();
    if rho == 0.0 {
        return Ok(0.0);
    }
    let beta = stats.beta();
    let m = stats.num_tx() as f64;
    let s = effective_covariance(stats, p)?;
    let transmit = logdet_hpd(&s.shifted_identity_plus(beta * fp.e))?;
    let receive = logdet_hpd(&stats.r_corr().shifted_identity_plus(fp.delta))?;
    Ok(transmit / m + receive / m - beta / rho * fp.delta * fp.e)
}

fn check_same_transmitter(stats_m: &ChannelStatistics, stats_e: &ChannelStatistics) -> Result<()> {
    if stats_m.num_tx() != stats_e.num_tx() {
        return Err(Error::DimensionMismatch(format!(
            "main channel has {} transmit antennas, eavesdropper channel {}",
            stats_m.num_tx(),
            stats_e.num_tx()
        )));
    }
    Ok(())
}

/// Both fixed points plus the clamped large-system secrecy rate.
pub fn lsl_secrecy_rate_with_fixed_points(
    stats_m: &ChannelStatistics,
    stats_e: &ChannelStatistics,
    p: &Precoder,
) -> Result<(LslRate, FixedPoint, FixedPoint)> {
    check_same_transmitter(stats_m, stats_e)?;
    let (fp_m, fp_e) = rayon::join(
        || solve_fixed_point(stats_m, p),
        || solve_fixed_point(stats_e, p),
    );
    let (fp_m, fp_e) = (fp_m?, fp_e?);
    let i_main = lsl_mutual_information(stats_m, p, &fp_m)?;
    let i_eave = lsl_mutual_information(stats_e, p, &fp_e)?;
    let rate = LslRate {
        i_main,
        i_eave,
        rs: (i_main - i_eave).max(0.0),
    };
    Ok((rate, fp_m, fp_e))
}

pub fn lsl_secrecy_rate(
    stats_m: &ChannelStatistics,
    stats_e: &ChannelStatistics,
    p: &Precoder,
) -> Result<LslRate> {
    lsl_secrecy_rate_with_fixed_points(stats_m, stats_e, p).map(|(rate, _, _)| rate)
}

/// Design objective with the scaled traces `em`, `ee` frozen:
/// `(1/M)·[ln det(I + β_M·em·S_M) − ln det(I + β_E·ee·S_E)]⁺`.
pub fn lsl_objective(
    em: f64,
    ee: f64,
    stats_m: &ChannelStatistics,
    stats_e: &ChannelStatistics,
    p: &Precoder,
) -> Result<f64> {
    check_same_transmitter(stats_m, stats_e)?;
    let m = stats_m.num_tx() as f64;
    let main =
        logdet_hpd(&effective_covariance(stats_m, p)?.shifted_identity_plus(stats_m.beta() * em))?;
    let eave =
        logdet_hpd(&effective_covariance(stats_e, p)?.shifted_identity_plus(stats_e.beta() * ee))?;
    Ok(((main - eave) / m).max(0.0))
}
