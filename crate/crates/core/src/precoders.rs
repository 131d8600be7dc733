//! Transmit covariance design: isotropic, statistical water-filling and
//! GSVD beamforming, plus the outer loop that couples a design to the
//! fixed-point statistics it is built from.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelStatistics;
use crate::detequiv::{lsl_secrecy_rate_with_fixed_points, FixedPoint, LslRate};
use crate::matdecomp::{eigh, gsvd, ComplexMatrix, GsvdFactorization, HermitianMatrix};
use crate::{Error, Result};

const PSD_FLOOR: f64 = -1e-10;
const TRACE_SLACK: f64 = 1e-6;
const MU_MIN: f64 = 1e-12;
const MU_MAX: f64 = 1e12;
const BISECTION_STEPS: usize = 200;
const POWER_TOL: f64 = 1e-8;
/// Subchannels whose main/eavesdropper gain gap is below this get no power.
const GAIN_TIE_TOL: f64 = 1e-10;
const OUTER_TOL: f64 = 1e-9;
const OUTER_MAX_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "iso")]
    Isotropic,
    #[serde(rename = "wf")]
    WaterFilling,
    #[serde(rename = "gsvd")]
    GsvdBeamforming,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [
        Strategy::Isotropic,
        Strategy::WaterFilling,
        Strategy::GsvdBeamforming,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            Strategy::Isotropic => "iso",
            Strategy::WaterFilling => "wf",
            Strategy::GsvdBeamforming => "gsvd",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iso" => Ok(Strategy::Isotropic),
            "wf" => Ok(Strategy::WaterFilling),
            "gsvd" => Ok(Strategy::GsvdBeamforming),
            other => Err(Error::InvalidArgument(format!(
                "unknown strategy `{other}`"
            ))),
        }
    }
}

/// Transmit covariance `P` with `P ⪰ 0` and `tr P ≤ M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Precoder {
    p: HermitianMatrix,
    strategy: Strategy,
}

impl Precoder {
    /// Validates and stores `p`. Eigenvalues in `[-1e-10, 0)` are clipped.
    pub fn new(p: HermitianMatrix, strategy: Strategy) -> Result<Self> {
        let m = p.dim();
        if m == 0 {
            return Err(Error::InvalidArgument(
                "precoder must be at least 1x1".into(),
            ));
        }
        let eig = eigh(&p)?;
        let min = eig.eigenvalues[0];
        if min < PSD_FLOOR {
            return Err(Error::NotPsd(min));
        }
        let p = if min < 0.0 {
            eig.reassemble(|l| l.max(0.0))?
        } else {
            p
        };
        let trace = p.trace();
        if trace > m as f64 + TRACE_SLACK {
            return Err(Error::InvalidArgument(format!(
                "precoder trace {trace} exceeds the budget {m}"
            )));
        }
        Ok(Self { p, strategy })
    }

    pub fn matrix(&self) -> &HermitianMatrix {
        &self.p
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }

    /// Power budget `M`.
    pub fn trace_budget(&self) -> f64 {
        self.p.dim() as f64
    }
}

/// `P = I_M`.
pub fn isotropic_precoder(m: usize) -> Precoder {
    assert!(m >= 1, "isotropic precoder needs m >= 1");
    Precoder {
        p: HermitianMatrix::identity(m),
        strategy: Strategy::Isotropic,
    }
}

/// Per-subchannel powers and the water level / multiplier that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub levels: Vec<f64>,
    pub mu: f64,
}

/// Classical water-filling `p_i = [1/μ − 1/g_i]⁺` with `Σ p_i = budget`.
///
/// The active set is found exactly: subchannels are added in order of
/// decreasing gain until the next one would sit above the water level.
pub fn waterfill_levels(gains: &[f64], budget: f64) -> Result<PowerAllocation> {
    if !(budget > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "budget must be positive, got {budget}"
        )));
    }
    if gains.iter().any(|g| !(*g >= 0.0) || !g.is_finite()) {
        return Err(Error::InvalidArgument(
            "gains must be finite and nonnegative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    if order.is_empty() {
        return Err(Error::AllZeroGains);
    }
    order.sort_by(|&a, &b| gains[b].total_cmp(&gains[a]));

    let mut inv_sum = 0.0;
    let mut water = 0.0;
    for (k, &i) in order.iter().enumerate() {
        let candidate = (budget + inv_sum + 1.0 / gains[i]) / (k + 1) as f64;
        if k > 0 && candidate <= 1.0 / gains[i] {
            break;
        }
        inv_sum += 1.0 / gains[i];
        water = candidate;
    }
    let mu = 1.0 / water;
    let levels = gains
        .iter()
        .map(|&g| {
            if g > 0.0 {
                (1.0 / mu - 1.0 / g).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(PowerAllocation { levels, mu })
}

/// How the eigenvalues of `β_M·E_M·T_M` enter the water-filling gains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WaterFillGains {
    /// Gains are the eigenvalues themselves (KKT-consistent).
    #[default]
    Eigenvalues,
    /// Gains are their square roots, i.e. the singular values of
    /// `sqrt(β_M·E_M)·T_M^{1/2}` used literally as the water-filling input.
    SingularValues,
}

/// Water-filling over the main channel only.
pub fn waterfill_precoder(stats_m: &ChannelStatistics, em: f64) -> Result<Precoder> {
    waterfill_precoder_with(stats_m, em, WaterFillGains::default())
}

pub fn waterfill_precoder_with(
    stats_m: &ChannelStatistics,
    em: f64,
    mode: WaterFillGains,
) -> Result<Precoder> {
    if !(em > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scaled trace must be positive, got {em}"
        )));
    }
    let eig = eigh(&stats_m.t_corr().scale(stats_m.beta() * em))?;
    let gains: Vec<f64> = eig
        .eigenvalues
        .iter()
        .map(|&l| match mode {
            WaterFillGains::Eigenvalues => l.max(0.0),
            WaterFillGains::SingularValues => l.max(0.0).sqrt(),
        })
        .collect();
    let alloc = waterfill_levels(&gains, stats_m.num_tx() as f64)?;
    let mut index = 0;
    let p = eig.reassemble(|_| {
        let level = alloc.levels[index];
        index += 1;
        level
    })?;
    Precoder::new(p, Strategy::WaterFilling)
}

/// Optimal level of one GSVD subchannel for a fixed multiplier `mu`.
///
/// Maximizes `log₂(1 + a·p) − log₂(1 + b·p) − μ·v·p` with `a + b = 1`.
/// Evaluated in the cancellation-free form
/// `2(k − 1) / (1 + sqrt(1 + 4ab(k − 1)))`, `k = (a − b)/(ln 2·μ·v)`, which
/// equals `(−1 + sqrt(1 − 4ab + 4(a − b)ab/(ln 2·μ·v)))/(2ab)` and extends
/// continuously to `ab = 0`.
fn gsvd_level(a: f64, b: f64, v: f64, mu: f64) -> f64 {
    if a - b <= GAIN_TIE_TOL {
        return 0.0;
    }
    let k = (a - b) / (std::f64::consts::LN_2 * mu * v);
    if k <= 1.0 {
        return 0.0;
    }
    let disc = 1.0 + 4.0 * a * b * (k - 1.0);
    2.0 * (k - 1.0) / (1.0 + disc.sqrt())
}

/// Closed-form GSVD power allocation for a given multiplier.
///
/// `sigma_m2[i]`, `sigma_e2[i]` are squared generalized singular values and
/// `v_diag[i]` the diagonal of `V⁻¹V⁻ᴴ`. Subchannels where the eavesdropper
/// is at least as strong get zero power.
pub fn gsvd_power_allocation(
    sigma_m2: &[f64],
    sigma_e2: &[f64],
    v_diag: &[f64],
    mu: f64,
) -> Vec<f64> {
    sigma_m2
        .iter()
        .zip(sigma_e2)
        .zip(v_diag)
        .map(|((&a, &b), &v)| gsvd_level(a, b, v, mu))
        .collect()
}

/// Bisects the multiplier so that `Σ levels[i]·v_diag[i] = budget`.
///
/// Returns all-zero levels when no subchannel favors the main channel.
pub fn gsvd_levels_for_budget(
    sigma_m2: &[f64],
    sigma_e2: &[f64],
    v_diag: &[f64],
    budget: f64,
) -> Result<PowerAllocation> {
    let total = |mu: f64| -> f64 {
        gsvd_power_allocation(sigma_m2, sigma_e2, v_diag, mu)
            .iter()
            .zip(v_diag)
            .map(|(p, v)| p * v)
            .sum()
    };
    let any_active = sigma_m2
        .iter()
        .zip(sigma_e2)
        .any(|(a, b)| a - b > GAIN_TIE_TOL);
    if !any_active {
        return Ok(PowerAllocation {
            levels: vec![0.0; sigma_m2.len()],
            mu: f64::INFINITY,
        });
    }
    let (mut lo, mut hi) = (MU_MIN, MU_MAX);
    let (at_lo, at_hi) = (total(lo), total(hi));
    if at_lo < budget - POWER_TOL {
        return Err(Error::BisectionFailure {
            total_power: at_lo,
            budget,
        });
    }
    if at_hi > budget + POWER_TOL {
        return Err(Error::BisectionFailure {
            total_power: at_hi,
            budget,
        });
    }
    let mut best = (f64::INFINITY, lo);
    for _ in 0..BISECTION_STEPS {
        let mid = (lo * hi).sqrt();
        let power = total(mid);
        let gap = (power - budget).abs();
        if gap < best.0 {
            best = (gap, mid);
        }
        if gap <= POWER_TOL {
            break;
        }
        // total power decreases in μ
        if power > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (gap, mu) = best;
    if gap > POWER_TOL {
        return Err(Error::BisectionFailure {
            total_power: total(mu),
            budget,
        });
    }
    Ok(PowerAllocation {
        levels: gsvd_power_allocation(sigma_m2, sigma_e2, v_diag, mu),
        mu,
    })
}

/// GSVD of the two effective channel roots and the matching power allocation.
#[derive(Debug, Clone)]
pub struct GsvdDesign {
    pub factorization: GsvdFactorization,
    pub allocation: PowerAllocation,
}

impl GsvdDesign {
    /// `Σ levels[i]·v_i`.
    pub fn transmit_power(&self) -> f64 {
        self.allocation
            .levels
            .iter()
            .zip(&self.factorization.v_inv_gram_diag)
            .map(|(p, v)| p * v)
            .sum()
    }

    /// `V⁻ᴴ diag(levels) V⁻¹`.
    pub fn covariance(&self) -> Result<HermitianMatrix> {
        let x = &self.factorization.v_inv_adjoint;
        let scaled = x.mul(&ComplexMatrix::from_real_diagonal(&self.allocation.levels))?;
        HermitianMatrix::new(scaled.mul(&x.adjoint())?)
    }
}

pub fn gsvd_design(
    stats_m: &ChannelStatistics,
    stats_e: &ChannelStatistics,
    em: f64,
    ee: f64,
) -> Result<GsvdDesign> {
    if stats_m.num_tx() != stats_e.num_tx() {
        return Err(Error::DimensionMismatch(
            "main and eavesdropper transmit dimensions differ".into(),
        ));
    }
    if !(em >= 0.0 && ee >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "scaled traces must be nonnegative, got {em}, {ee}"
        )));
    }
    let a = stats_m
        .t_sqrt()
        .to_complex()
        .scale((stats_m.beta() * em).sqrt());
    let b = stats_e
        .t_sqrt()
        .to_complex()
        .scale((stats_e.beta() * ee).sqrt());
    let factorization = gsvd(&a, &b)?;
    let sm2: Vec<f64> = factorization.sigma_m.iter().map(|s| s * s).collect();
    let se2: Vec<f64> = factorization.sigma_e.iter().map(|s| s * s).collect();
    let allocation = gsvd_levels_for_budget(
        &sm2,
        &se2,
        &factorization.v_inv_gram_diag,
        stats_m.num_tx() as f64,
    )?;
    Ok(GsvdDesign {
        factorization,
        allocation,
    })
}

/// GSVD beamforming covariance `V⁻ᴴ diag(levels) V⁻¹`.
pub fn gsvd_precoder(
    stats_m: &ChannelStatistics,
    stats_e: &ChannelStatistics,
    em: f64,
    ee: f64,
) -> Result<Precoder> {
    let design = gsvd_design(stats_m, stats_e, em, ee)?;
    Precoder::new(design.covariance()?, Strategy::GsvdBeamforming)
}

/// Result of the alternating design loop.
#[derive(Debug, Clone)]
pub struct Optimized {
    pub precoder: Precoder,
    pub rate: LslRate,
    pub fixed_point_main: FixedPoint,
    pub fixed_point_eave: FixedPoint,
    pub outer_iterations: usize,
    /// `false` when the loop hit its iteration cap; the last iterate is kept.
    pub converged: bool,
}

/// Alternates between solving both fixed points for the current covariance
/// and rebuilding the covariance from the resulting `(E_M, E_E)`, starting
/// from `P = I`, until the secrecy rate changes by less than 1e-9.
pub fn optimize(
    strategy: Strategy,
    stats_m: &ChannelStatistics,
    stats_e: &ChannelStatistics,
) -> Result<Optimized> {
    optimize_with(strategy, stats_m, stats_e, WaterFillGains::default())
}

pub fn optimize_with(
    strategy: Strategy,
    stats_m: &ChannelStatistics,
    stats_e: &ChannelStatistics,
    wf_mode: WaterFillGains,
) -> Result<Optimized> {
    let mut precoder = isotropic_precoder(stats_m.num_tx());
    let mut previous: Option<f64> = None;
    let mut last = None;
    for iteration in 1..=OUTER_MAX_ITERATIONS {
        let (rate, fp_m, fp_e) = lsl_secrecy_rate_with_fixed_points(stats_m, stats_e, &precoder)?;
        let done = strategy == Strategy::Isotropic
            || previous.is_some_and(|prev| (rate.rs - prev).abs() < OUTER_TOL);
        if done {
            return Ok(Optimized {
                precoder,
                rate,
                fixed_point_main: fp_m,
                fixed_point_eave: fp_e,
                outer_iterations: iteration,
                converged: true,
            });
        }
        let next = match strategy {
            Strategy::Isotropic => unreachable!(),
            Strategy::WaterFilling => waterfill_precoder_with(stats_m, fp_m.e, wf_mode)?,
            Strategy::GsvdBeamforming => gsvd_precoder(stats_m, stats_e, fp_m.e, fp_e.e)?,
        };
        last = Some((precoder, rate, fp_m, fp_e));
        precoder = next;
        previous = Some(rate.rs);
    }
    let (precoder, rate, fp_m, fp_e) = last.expect("at least one outer iteration");
    Ok(Optimized {
        precoder,
        rate,
        fixed_point_main: fp_m,
        fixed_point_eave: fp_e,
        outer_iterations: OUTER_MAX_ITERATIONS,
        converged: false,
    })
}
