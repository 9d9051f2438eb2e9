//! Scenario generators and the seeded Monte Carlo engine.
//!
//! Every replication draws from its own counter-based RNG stream keyed by
//! `(seed, replication index)`, so results are identical whatever the
//! worker count. Scenario-level randomness (covariance eigenvectors,
//! sparsity patterns) lives on reserved streams.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{DataMatrix, Dims, MeanMode, PartitionedCov, StatisticId};
use crate::statistics::{
    self, fisher_pair, normal_upper_quantile, quantile_sorted, sample_cov, StatContext,
};

/// Stream reserved for drawing the scenario covariance.
const SCENARIO_STREAM: u64 = u64::MAX;
/// Stream reserved for the sparsity pattern of alternative scenarios.
const PATTERN_STREAM: u64 = u64::MAX - 1;
/// Base stream for competitor critical-value calibration runs.
const CALIBRATION_STREAM: u64 = u64::MAX - 1024;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Counter-based stream: a ChaCha generator keyed by `(seed, stream)`.
///
/// Distinct stream indices give independent generators for the same seed,
/// which makes parallel execution order-independent.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut state = seed ^ stream.wrapping_mul(0xA24B_AED4_963E_E407).wrapping_add(1);
    let mut key = [0u8; 32];
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// An `rows x cols` matrix of i.i.d. standard normals.
pub fn standard_normal_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Haar-distributed orthogonal matrix via QR of a Gaussian matrix with the
/// sign correction from the R diagonal.
pub fn haar_orthogonal(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    assert!(dim >= 1);
    let z = standard_normal_matrix(dim, dim, rng);
    let qr = z.qr();
    let r_diag = qr.r().diagonal();
    let mut q = qr.q();
    for j in 0..dim {
        if r_diag[j] < 0.0 {
            for i in 0..dim {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Monte Carlo run parameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct McConfig {
    pub reps: usize,
    pub seed: u64,
    pub alpha: f64,
    /// Worker count; 0 uses the rayon default.
    pub jobs: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            reps: 1000,
            seed: 42,
            alpha: 0.05,
            jobs: 0,
        }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::Simulation("reps must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Simulation(format!(
                "alpha {} outside [0, 1]",
                self.alpha
            )));
        }
        Ok(())
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::Simulation(format!("thread pool: {e}")))
    }
}

/// Null design: block-diagonal covariance with uniformly drawn eigenvalues
/// and Haar-rotated eigenvectors, fixed once per run by default.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NullScenario {
    pub dims: Dims,
    /// Eigenvalue range of the first block (half-open at the left edge).
    pub block1_range: (f64, f64),
    /// Eigenvalue range of the second block.
    pub block2_range: (f64, f64),
    /// Re-draw the covariance on every replication instead of fixing it.
    pub refresh_sigma: bool,
}

impl NullScenario {
    pub fn new(dims: Dims) -> Self {
        NullScenario {
            dims,
            block1_range: (0.0, 1.0),
            block2_range: (1.0, 10.0),
            refresh_sigma: false,
        }
    }

    /// Draws the block-diagonal covariance for this scenario.
    pub fn build_sigma(&self, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
        let p1 = self.dims.p1;
        let p2 = self.dims.p2();
        let b1 = rotated_block(p1, self.block1_range, true, rng);
        let b2 = rotated_block(p2, self.block2_range, false, rng);
        let mut sigma = DMatrix::zeros(self.dims.p, self.dims.p);
        sigma.view_mut((0, 0), (p1, p1)).copy_from(&b1);
        sigma.view_mut((p1, p1), (p2, p2)).copy_from(&b2);
        Ok(sigma)
    }
}

/// `Q diag(e) Q^T` with uniform eigenvalues and a Haar rotation.
/// `open_left` maps the draw onto the half-open interval `(lo, hi]`.
fn rotated_block(
    dim: usize,
    range: (f64, f64),
    open_left: bool,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let (lo, hi) = range;
    let eigs: Vec<f64> = (0..dim)
        .map(|_| {
            let u: f64 = rng.random();
            if open_left {
                hi - u * (hi - lo) // u in [0,1) gives (lo, hi]
            } else {
                lo + u * (hi - lo)
            }
        })
        .collect();
    let q = haar_orthogonal(dim, rng);
    let mut d = DMatrix::zeros(dim, dim);
    for (i, e) in eigs.iter().enumerate() {
        d[(i, i)] = *e;
    }
    let qd = &q * d;
    let sym = &qd * q.transpose();
    (&sym + sym.transpose()) * 0.5
}

/// Alternative design: equal `sigma I` blocks coupled by a rank-1
/// equicorrelation matrix `Sigma12` with all entries `rho * sigma`,
/// optionally sparsified.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AltScenario {
    pub dims: Dims,
    /// Common scale of the diagonal blocks.
    pub sigma: f64,
    /// Correlation coefficient `sigma12 / sigma`.
    pub rho: f64,
    /// Fraction of `Sigma12` entries forced to zero.
    pub sparsity: f64,
}

impl AltScenario {
    pub fn new(dims: Dims, sigma: f64, rho: f64, sparsity: f64) -> Result<Self> {
        if sigma <= 0.0 {
            return Err(Error::Construction("sigma must be positive".into()));
        }
        if !(0.0..1.0).contains(&sparsity) {
            return Err(Error::Construction("sparsity must lie in [0, 1)".into()));
        }
        Ok(AltScenario {
            dims,
            sigma,
            rho,
            sparsity,
        })
    }

    /// Positions of `Sigma12` zeroed by sparsification; drawn once per
    /// scenario, not per replication.
    pub fn sparsity_pattern(&self, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
        let p1 = self.dims.p1;
        let p2 = self.dims.p2();
        let total = p1 * p2;
        let n_zero = (self.sparsity * total as f64).round() as usize;
        let mut idx: Vec<usize> = (0..total).collect();
        // partial Fisher-Yates: the first n_zero entries are the sample
        for i in 0..n_zero.min(total) {
            let j = rng.random_range(i..total);
            idx.swap(i, j);
        }
        idx[..n_zero.min(total)]
            .iter()
            .map(|&k| (k % p1, k / p1))
            .collect()
    }

    /// Builds the full covariance for correlation `rho`, returning it with
    /// the largest eigenvalue of the induced matrix `R`. Fails if the
    /// covariance is not positive definite.
    pub fn build_sigma(&self, pattern: &[(usize, usize)]) -> Result<(DMatrix<f64>, f64)> {
        let p = self.dims.p;
        let p1 = self.dims.p1;
        let p2 = self.dims.p2();
        let sigma12 = self.rho * self.sigma;
        let mut full = DMatrix::zeros(p, p);
        for i in 0..p {
            full[(i, i)] = self.sigma;
        }
        let mut s12 = DMatrix::from_element(p1, p2, sigma12);
        for &(i, j) in pattern {
            s12[(i, j)] = 0.0;
        }
        full.view_mut((0, p1), (p1, p2)).copy_from(&s12);
        full.view_mut((p1, 0), (p2, p1)).copy_from(&s12.transpose());

        if full.clone().cholesky().is_none() {
            return Err(Error::Construction(format!(
                "sigma not positive definite at rho = {}",
                self.rho
            )));
        }

        // R shares its spectrum with Sigma21 Sigma12 (sigma^2 I - Sigma21 Sigma12)^{-1}
        let m = s12.transpose() * &s12;
        let eigs = ((&m + m.transpose()) * 0.5).symmetric_eigen().eigenvalues;
        let m_max = eigs.iter().cloned().fold(0.0, f64::max);
        let denom = self.sigma * self.sigma - m_max;
        if denom <= 0.0 {
            return Err(Error::Construction(format!(
                "R diverges at rho = {} (Schur complement singular)",
                self.rho
            )));
        }
        Ok((full, m_max / denom))
    }
}

/// Per-statistic summary of a null run.
#[derive(Debug, Clone, Serialize)]
pub struct NullStatSummary {
    pub statistic_id: StatisticId,
    /// Empirical rejection rate at the nominal level.
    pub level: f64,
    /// Binomial standard error of the level.
    pub se: f64,
    pub mean: f64,
    pub sd: f64,
    /// Kolmogorov-Smirnov distance of the standardized sample to N(0, 1).
    pub ks_to_normal: f64,
    /// Standardized draws, one per successful replication.
    #[serde(skip)]
    pub draws: Vec<f64>,
}

/// Output of [`run_null`].
#[derive(Debug, Clone, Serialize)]
pub struct NullRunResult {
    pub dims: Dims,
    pub alpha: f64,
    pub reps: usize,
    pub failures: usize,
    pub stats: Vec<NullStatSummary>,
}

struct RepStats {
    standardized: Vec<f64>,
    rejected: Vec<bool>,
}

fn competitor_null_quantiles(
    ids: &[StatisticId],
    dims: &Dims,
    mc: &McConfig,
    yang_t: f64,
    sigma_scale: f64,
) -> Result<Vec<(StatisticId, f64, f64, f64)>> {
    // (id, critical, null mean, null sd)
    let mut out = Vec::new();
    for (k, &id) in ids.iter().enumerate() {
        if !matches!(id, StatisticId::Jiang | StatisticId::Yang) {
            continue;
        }
        let reps = mc.reps.max(200);
        let ratios = dims.ratios()?;
        let mut draws = Vec::with_capacity(reps);
        for rep in 0..reps {
            let mut rng = stream_rng(
                mc.seed,
                CALIBRATION_STREAM - k as u64 * 1_000_000 - rep as u64,
            );
            let mut x = standard_normal_matrix(dims.n, dims.p, &mut rng);
            if sigma_scale != 1.0 {
                x *= sigma_scale.sqrt();
            }
            let data = DataMatrix::new(x)?;
            let cov = sample_cov(&data, MeanMode::KnownZero)?;
            let part = PartitionedCov::from_full(&cov, dims.p1)?;
            let value = match id {
                StatisticId::Jiang => {
                    let fp = fisher_pair(&part, dims)?;
                    statistics::stat_jiang(&fp, &ratios)
                }
                StatisticId::Yang => statistics::stat_yang(&part, yang_t)?,
                _ => unreachable!(),
            };
            draws.push(value);
        }
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = draws.iter().sum::<f64>() / reps as f64;
        let sd =
            (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
        out.push((id, quantile_sorted(&draws, 1.0 - mc.alpha), mean, sd));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn evaluate_rep(
    sigma_chol: Option<&DMatrix<f64>>,
    scenario: Option<&NullScenario>,
    dims: &Dims,
    ids: &[StatisticId],
    competitor: &[(StatisticId, f64, f64, f64)],
    yang_t: f64,
    alpha: f64,
    seed: u64,
    rep: u64,
) -> Result<RepStats> {
    let mut rng = stream_rng(seed, rep);
    let l = match (sigma_chol, scenario) {
        (Some(l), _) => l.clone(),
        (None, Some(sc)) => {
            let sigma = sc.build_sigma(&mut rng)?;
            sigma
                .cholesky()
                .ok_or(Error::Construction("scenario sigma not PD".into()))?
                .l()
        }
        _ => unreachable!(),
    };
    let z = standard_normal_matrix(dims.n, dims.p, &mut rng);
    let x = z * l.transpose();
    let data = DataMatrix::new(x)?;
    let cov = sample_cov(&data, MeanMode::KnownZero)?;
    let part = PartitionedCov::from_full(&cov, dims.p1)?;
    let fisher = fisher_pair(&part, dims)?;
    let ratios = dims.ratios()?;
    let ctx = StatContext {
        cov: &part,
        fisher: &fisher,
        dims: *dims,
        ratios,
        yang_t,
    };
    let reg = statistics::registry();
    let u = normal_upper_quantile(alpha);
    let mut standardized = Vec::with_capacity(ids.len());
    let mut rejected = Vec::with_capacity(ids.len());
    for &id in ids {
        let strategy = reg.by_id(id);
        let raw = strategy.raw(&ctx)?;
        match strategy.calibration(&ratios)? {
            Some(cal) => {
                let std = (raw - dims.p2() as f64 * cal.s - cal.mu) / cal.sigma2.sqrt();
                let rej = match strategy.tail() {
                    statistics::Tail::Lower => std < -u,
                    statistics::Tail::Upper => std > u,
                };
                standardized.push(std);
                rejected.push(rej);
            }
            None => {
                let (_, crit, mean, sd) = competitor
                    .iter()
                    .find(|(cid, ..)| *cid == id)
                    .map(|(cid, c, m, s)| (*cid, *c, *m, *s))
                    .ok_or_else(|| Error::Simulation("missing competitor calibration".into()))?;
                standardized.push((raw - mean) / sd);
                rejected.push(raw > crit);
            }
        }
    }
    Ok(RepStats {
        standardized,
        rejected,
    })
}

/// Runs the null study: empirical level, standardized draws and failure
/// count per requested statistic.
pub fn run_null(
    scenario: &NullScenario,
    ids: &[StatisticId],
    mc: &McConfig,
    yang_t: f64,
) -> Result<NullRunResult> {
    mc.validate()?;
    scenario.dims.validate()?;
    let dims = scenario.dims;
    let fixed_chol = if scenario.refresh_sigma {
        None
    } else {
        let mut rng = stream_rng(mc.seed, SCENARIO_STREAM);
        let sigma = scenario.build_sigma(&mut rng)?;
        Some(
            sigma
                .cholesky()
                .ok_or(Error::Construction("scenario sigma not PD".into()))?
                .l(),
        )
    };
    let competitor = competitor_null_quantiles(ids, &dims, mc, yang_t, 1.0)?;

    let pool = mc.pool()?;
    let results: Vec<Result<RepStats>> = pool.install(|| {
        (0..mc.reps as u64)
            .into_par_iter()
            .map(|rep| {
                evaluate_rep(
                    fixed_chol.as_ref(),
                    Some(scenario),
                    &dims,
                    ids,
                    &competitor,
                    yang_t,
                    mc.alpha,
                    mc.seed,
                    rep,
                )
            })
            .collect()
    });
    aggregate_null(results, ids, &dims, mc)
}

fn aggregate_null(
    results: Vec<Result<RepStats>>,
    ids: &[StatisticId],
    dims: &Dims,
    mc: &McConfig,
) -> Result<NullRunResult> {
    let reps = results.len();
    let mut failures = 0usize;
    let mut draws: Vec<Vec<f64>> = vec![Vec::with_capacity(reps); ids.len()];
    let mut rejects: Vec<usize> = vec![0; ids.len()];
    for r in results {
        match r {
            Ok(stats) => {
                for (k, (std, rej)) in stats
                    .standardized
                    .iter()
                    .zip(stats.rejected.iter())
                    .enumerate()
                {
                    draws[k].push(*std);
                    if *rej {
                        rejects[k] += 1;
                    }
                }
            }
            Err(_) => failures += 1,
        }
    }
    if failures * 100 > reps {
        return Err(Error::Simulation(format!(
            "{failures} of {reps} replications failed (more than 1%)"
        )));
    }
    let effective = reps - failures;
    if effective == 0 {
        return Err(Error::Simulation("every replication failed".into()));
    }
    let stats = ids
        .iter()
        .enumerate()
        .map(|(k, &id)| {
            let level = rejects[k] as f64 / effective as f64;
            let mean = draws[k].iter().sum::<f64>() / effective as f64;
            let sd = (draws[k].iter().map(|d| (d - mean).powi(2)).sum::<f64>()
                / (effective as f64 - 1.0).max(1.0))
            .sqrt();
            NullStatSummary {
                statistic_id: id,
                level,
                se: (level * (1.0 - level) / effective as f64).sqrt(),
                mean,
                sd,
                ks_to_normal: ks_to_std_normal(&draws[k]),
                draws: draws[k].clone(),
            }
        })
        .collect();
    Ok(NullRunResult {
        dims: *dims,
        alpha: mc.alpha,
        reps,
        failures,
        stats,
    })
}

/// One point of a power curve.
#[derive(Debug, Clone, Serialize)]
pub struct PowerRow {
    pub statistic_id: StatisticId,
    pub rho: f64,
    pub power: f64,
    pub se: f64,
}

/// Output of [`run_power`].
#[derive(Debug, Clone, Serialize)]
pub struct PowerTable {
    pub dims: Dims,
    pub alpha: f64,
    pub reps_per_point: usize,
    pub sigma: f64,
    pub sparsity: f64,
    pub rows: Vec<PowerRow>,
    /// Largest eigenvalue of `R` at each grid value.
    pub lambda_max: Vec<(f64, f64)>,
    /// Per-statistic maximum deviation from the isotonic fit of its curve.
    pub monotonicity_residual: Vec<(StatisticId, f64)>,
    pub failures: usize,
}

/// Runs the power study over a correlation grid.
///
/// Competitor critical values are simulated under the scenario's own null
/// (`rho = 0`, equal `sigma I` blocks). Replication `i` reuses stream `i`
/// across the grid (common random numbers), which smooths the curves
/// without biasing any single point.
pub fn run_power(
    template: &AltScenario,
    rho_grid: &[f64],
    ids: &[StatisticId],
    mc: &McConfig,
    yang_t: f64,
) -> Result<PowerTable> {
    mc.validate()?;
    template.dims.validate()?;
    if rho_grid.is_empty() {
        return Err(Error::Simulation("empty rho grid".into()));
    }
    let dims = template.dims;
    let mut pattern_rng = stream_rng(mc.seed, PATTERN_STREAM);
    let pattern = template.sparsity_pattern(&mut pattern_rng);
    let competitor = competitor_null_quantiles(ids, &dims, mc, yang_t, template.sigma)?;

    let pool = mc.pool()?;
    let mut rows = Vec::new();
    let mut lambda_max = Vec::new();
    let mut failures = 0usize;
    let mut curves: Vec<Vec<f64>> = vec![Vec::new(); ids.len()];
    for &rho in rho_grid {
        let scenario = AltScenario {
            rho,
            ..template.clone()
        };
        let (sigma, lmax) = scenario.build_sigma(&pattern)?;
        let chol = sigma
            .cholesky()
            .ok_or(Error::Construction(format!("sigma not PD at rho = {rho}")))?
            .l();
        lambda_max.push((rho, lmax));
        let results: Vec<Result<RepStats>> = pool.install(|| {
            (0..mc.reps as u64)
                .into_par_iter()
                .map(|rep| {
                    evaluate_rep(
                        Some(&chol),
                        None,
                        &dims,
                        ids,
                        &competitor,
                        yang_t,
                        mc.alpha,
                        mc.seed,
                        rep,
                    )
                })
                .collect()
        });
        let mut rejected = vec![0usize; ids.len()];
        let mut ok = 0usize;
        for r in results {
            match r {
                Ok(stats) => {
                    ok += 1;
                    for (k, rej) in stats.rejected.iter().enumerate() {
                        if *rej {
                            rejected[k] += 1;
                        }
                    }
                }
                Err(_) => failures += 1,
            }
        }
        if ok * 100 < mc.reps * 99 {
            return Err(Error::Simulation(format!(
                "more than 1% of replications failed at rho = {rho}"
            )));
        }
        for (k, &id) in ids.iter().enumerate() {
            let power = rejected[k] as f64 / ok as f64;
            curves[k].push(power);
            rows.push(PowerRow {
                statistic_id: id,
                rho,
                power,
                se: (power * (1.0 - power) / ok as f64).sqrt(),
            });
        }
    }
    let monotonicity_residual = ids
        .iter()
        .enumerate()
        .map(|(k, &id)| {
            let fit = isotonic_fit(&curves[k]);
            let resid = curves[k]
                .iter()
                .zip(&fit)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            (id, resid)
        })
        .collect();
    Ok(PowerTable {
        dims,
        alpha: mc.alpha,
        reps_per_point: mc.reps,
        sigma: template.sigma,
        sparsity: template.sparsity,
        rows,
        lambda_max,
        monotonicity_residual,
        failures,
    })
}

/// Pool-adjacent-violators nondecreasing fit.
pub fn isotonic_fit(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut level: Vec<f64> = values.to_vec();
    let mut weight: Vec<f64> = vec![1.0; n];
    let mut len = 0usize;
    for &value in values {
        level[len] = value;
        weight[len] = 1.0;
        len += 1;
        while len > 1 && level[len - 2] > level[len - 1] {
            let w = weight[len - 2] + weight[len - 1];
            let v = (level[len - 2] * weight[len - 2] + level[len - 1] * weight[len - 1]) / w;
            level[len - 2] = v;
            weight[len - 2] = w;
            len -= 1;
        }
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..len {
        for _ in 0..weight[k] as usize {
            out.push(level[k]);
        }
    }
    out
}

/// Kolmogorov-Smirnov distance of a sample to the standard normal.
pub fn ks_to_std_normal(sample: &[f64]) -> f64 {
    if sample.is_empty() {
        return 1.0;
    }
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = sorted.len() as f64;
    let mut sup: f64 = 0.0;
    for (i, x) in sorted.iter().enumerate() {
        let f = normal.cdf(*x);
        sup = sup.max(((i + 1) as f64 / m - f).abs());
        sup = sup.max((i as f64 / m - f).abs());
    }
    sup
}

/// Histogram of a sample as `(bin centre, count)` pairs.
pub fn histogram(sample: &[f64], bins: usize) -> Vec<(f64, usize)> {
    if sample.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = sample.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = sample.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let width = ((hi - lo) / bins as f64).max(f64::MIN_POSITIVE);
    let mut counts = vec![0usize; bins];
    for &x in sample {
        let k = (((x - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, c)| (lo + width * (k as f64 + 0.5), c))
        .collect()
}
