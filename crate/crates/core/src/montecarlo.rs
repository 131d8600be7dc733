//! Monte Carlo estimates of the ergodic mutual information and secrecy rate.
//!
//! Realizations are generated in fixed blocks of 256, each block drawing from
//! its own ChaCha stream `(seed, block index)`. Per-block samples are reduced
//! in block order, so an estimate depends only on `(seed, n)` and not on the
//! number of worker threads.

use rayon::prelude::*;

use crate::channel::{rng_stream, sample_channel, ChannelStatistics};
use crate::detequiv::{lsl_secrecy_rate, LslRate};
use crate::expcli::ExperimentConfig;
use crate::matdecomp::{logdet_hpd, HermitianMatrix};
use crate::precoders::{optimize, Precoder, Strategy};
use crate::{Error, Result};

pub const BLOCK_SIZE: usize = 256;
pub const DEFAULT_REALIZATIONS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    /// Nats per transmit antenna.
    pub mean: f64,
    pub std_error: f64,
    pub num_realizations: usize,
    pub seed: u64,
}

impl McEstimate {
    fn from_samples(samples: &[f64], seed: u64) -> Self {
        let n = samples.len();
        let mean = samples.iter().sum::<f64>() / n as f64;
        let std_error = if n > 1 {
            let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std_error,
            num_realizations: n,
            seed,
        }
    }
}

/// `(1/M)·ln det(I_N + H P Hᴴ)` for one channel draw.
fn per_antenna_mi(
    stats: &ChannelStatistics,
    p: &Precoder,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<f64> {
    let h = sample_channel(stats, rng).h;
    let gram = h.mul(&p.matrix().to_complex())?.mul(&h.adjoint())?;
    let logdet = logdet_hpd(&HermitianMatrix::new(gram)?.shifted_identity_plus(1.0))?;
    Ok(logdet / stats.num_tx() as f64)
}

/// Sample mean of the per-antenna mutual information over `n` draws.
pub fn mc_ergodic_mi(
    stats: &ChannelStatistics,
    p: &Precoder,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "need at least one realization".into(),
        ));
    }
    if p.dim() != stats.num_tx() {
        return Err(Error::DimensionMismatch(format!(
            "precoder is {0}x{0} but the channel has {1} transmit antennas",
            p.dim(),
            stats.num_tx()
        )));
    }
    let blocks = n.div_ceil(BLOCK_SIZE);
    let per_block: Vec<Vec<f64>> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = rng_stream(seed, block as u64);
            let count = BLOCK_SIZE.min(n - block * BLOCK_SIZE);
            (0..count)
                .map(|_| per_antenna_mi(stats, p, &mut rng))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let samples: Vec<f64> = per_block.into_iter().flatten().collect();
    Ok(McEstimate::from_samples(&samples, seed))
}

/// `[E{I_M} − E{I_E}]⁺` with the clamp applied after averaging.
///
/// Both links are driven by the same random streams; the standard error is
/// the quadrature sum of the two.
pub fn mc_secrecy_rate(
    stats_m: &ChannelStatistics,
    stats_e: &ChannelStatistics,
    p: &Precoder,
    n: usize,
    seed: u64,
) -> Result<McEstimate> {
    let (main, eave) = rayon::join(
        || mc_ergodic_mi(stats_m, p, n, seed),
        || mc_ergodic_mi(stats_e, p, n, seed),
    );
    let (main, eave) = (main?, eave?);
    Ok(McEstimate {
        mean: (main.mean - eave.mean).max(0.0),
        std_error: main.std_error.hypot(eave.std_error),
        num_realizations: n,
        seed,
    })
}

/// One grid point of an LSL-vs-simulation comparison (rates in nats).
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationRow {
    pub snr_db: f64,
    pub strategy: Strategy,
    pub rs_lsl: f64,
    pub rs_mc: f64,
    pub std_error: f64,
    pub flagged: bool,
}

/// The tolerance rule shared by validation runs:
/// `|rs_lsl − rs_mc| ≤ max(3·std_error, 0.02·rs_mc)`.
pub fn within_tolerance(rs_lsl: f64, rs_mc: f64, std_error: f64) -> bool {
    (rs_lsl - rs_mc).abs() <= (3.0 * std_error).max(0.02 * rs_mc)
}

/// Runs the optimized large-system pipeline and the Monte Carlo estimator at
/// every SNR (both links set to the same dB value) and flags disagreements.
pub fn validate_lsl(
    config: &ExperimentConfig,
    snr_grid_db: &[f64],
    n: usize,
    seed: u64,
) -> Result<Vec<ValidationRow>> {
    let mut rows = Vec::with_capacity(snr_grid_db.len() * config.strategies.len());
    for &snr_db in snr_grid_db {
        let (stats_m, stats_e) = config.links_at_snr_db(snr_db)?;
        for &strategy in &config.strategies {
            let opt = optimize(strategy, &stats_m, &stats_e)?;
            let mc = mc_secrecy_rate(&stats_m, &stats_e, &opt.precoder, n, seed)?;
            rows.push(ValidationRow {
                snr_db,
                strategy,
                rs_lsl: opt.rate.rs,
                rs_mc: mc.mean,
                std_error: mc.std_error,
                flagged: !within_tolerance(opt.rate.rs, mc.mean, mc.std_error),
            });
        }
    }
    Ok(rows)
}

/// Large-system and simulated rate for a fixed precoder.
pub fn compare_at(
    stats_m: &ChannelStatistics,
    stats_e: &ChannelStatistics,
    p: &Precoder,
    n: usize,
    seed: u64,
) -> Result<(LslRate, McEstimate)> {
    Ok((
        lsl_secrecy_rate(stats_m, stats_e, p)?,
        mc_secrecy_rate(stats_m, stats_e, p, n, seed)?,
    ))
}
