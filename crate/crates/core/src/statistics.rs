//! From data to test decisions.
//!
//! The test statistics form a family of interchangeable strategies behind
//! the [`TestStatistic`] trait: each one knows its name, how to compute its
//! raw value from a [`StatContext`], its analytic null calibration when the
//! theory provides one, and which tail of the standardized distribution
//! rejects. Strategies are registered by name and selected at runtime.

use nalgebra::DMatrix;
use statrs::distribution::{ContinuousCDF, Normal};
use std::sync::OnceLock;

use crate::calibration::{
    bnp_calibration, lh_calibration, lr_calibration, wilks_calibration, NullCalibration,
};
use crate::error::{Error, Result};
use crate::model::{
    DataMatrix, Dims, MeanMode, PartitionedCov, RatioSet, StatisticId, TestOutcome,
};
use crate::simulate::{standard_normal_matrix, stream_rng, McConfig};

/// Default regularization parameter for the Yang statistic.
pub const DEFAULT_YANG_T: f64 = 10.0;

/// The scaled "between" and "within" matrices and the eigenvalues of
/// `W T^{-1}`.
#[derive(Debug, Clone)]
pub struct FisherPair {
    /// `S21 S11^{-1} S12 / p1`, symmetric PSD.
    pub w: DMatrix<f64>,
    /// Schur complement `S22 - S21 S11^{-1} S12` over `n - p1`, symmetric PD.
    pub t: DMatrix<f64>,
    /// Eigenvalues of `W T^{-1}`, sorted descending, all nonnegative.
    pub eigs: Vec<f64>,
}

/// Sample covariance of the observations.
///
/// Known-zero mean uses divisor `n`; estimated mean centres the columns and
/// divides by `n - 1`.
pub fn sample_cov(data: &DataMatrix, mean_mode: MeanMode) -> Result<DMatrix<f64>> {
    let x = data.rows();
    let n = x.nrows();
    let cov = match mean_mode {
        MeanMode::KnownZero => x.transpose() * x / n as f64,
        MeanMode::Estimated => {
            if n < 2 {
                return Err(Error::Dimension(
                    "estimated mean requires at least 2 observations".into(),
                ));
            }
            let mean = x.row_mean();
            let mut centred = x.clone();
            for mut row in centred.row_iter_mut() {
                row -= &mean;
            }
            centred.transpose() * centred / (n as f64 - 1.0)
        }
    };
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "sample covariance has non-finite entries".into(),
        ));
    }
    Ok(cov)
}

fn cholesky_of(
    m: &DMatrix<f64>,
    block: &'static str,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    m.clone().cholesky().ok_or(Error::LinearAlgebra {
        block,
        detail: "matrix is not positive definite".into(),
    })
}

/// Builds the Fisher pair from a partitioned covariance.
///
/// Eigenvalues come from the symmetric-definite pencil: with `T = L L^T`,
/// the eigenvalues of `W T^{-1}` are those of `L^{-1} W L^{-T}`. Tiny
/// negative eigenvalues (round-off) are clamped to zero; anything below
/// `-1e-10 * max(1, v_max)` is treated as a logic error.
pub fn fisher_pair(cov: &PartitionedCov, dims: &Dims) -> Result<FisherPair> {
    if cov.p1() != dims.p1 || cov.p2() != dims.p2() {
        return Err(Error::Dimension(
            "partition does not match the supplied dimensions".into(),
        ));
    }
    let chol11 = cholesky_of(cov.s11(), "S11")?;
    let s11_inv_s12 = chol11.solve(cov.s12());
    let what = cov.s21() * &s11_inv_s12;
    let t_hat = cov.s22() - &what;

    let w = what / dims.p1 as f64;
    let t = t_hat / (dims.n - dims.p1) as f64;

    let chol_t = cholesky_of(&t, "S22.1")?;
    let l = chol_t.l();
    let a = l.solve_lower_triangular(&w).ok_or(Error::LinearAlgebra {
        block: "S22.1",
        detail: "triangular solve failed".into(),
    })?;
    let m = l
        .solve_lower_triangular(&a.transpose())
        .ok_or(Error::LinearAlgebra {
            block: "S22.1",
            detail: "triangular solve failed".into(),
        })?;
    let sym = (&m + m.transpose()) * 0.5;
    let mut eigs: Vec<f64> = sym.symmetric_eigen().eigenvalues.iter().copied().collect();
    let v_max = eigs.iter().cloned().fold(0.0, f64::max);
    let clamp = -1e-10 * v_max.max(1.0);
    for v in eigs.iter_mut() {
        if *v < clamp {
            return Err(Error::LinearAlgebra {
                block: "W T^-1",
                detail: format!("eigenvalue {v} below the round-off clamp"),
            });
        }
        *v = v.max(0.0);
    }
    eigs.sort_by(|x, y| y.partial_cmp(x).unwrap());
    Ok(FisherPair { w, t, eigs })
}

/// Wilks' statistic `sum log(1 + v_i)`.
pub fn stat_wilks(fp: &FisherPair) -> f64 {
    fp.eigs.iter().map(|v| v.ln_1p()).sum()
}

/// Lawley-Hotelling trace `sum v_i`.
pub fn stat_lh(fp: &FisherPair) -> f64 {
    fp.eigs.iter().sum()
}

/// Bartlett-Nanda-Pillai trace `sum v_i / (1 + v_i)`.
pub fn stat_bnp(fp: &FisherPair) -> f64 {
    fp.eigs.iter().map(|v| v / (1.0 + v)).sum()
}

/// Corrected likelihood-ratio statistic `log V_n`, computed from the Fisher
/// eigenvalues as `-sum log(1 + (gamma2/gamma1) v_i)`.
pub fn stat_lr(fp: &FisherPair, ratios: &RatioSet) -> f64 {
    let factor = ratios.gamma2 / ratios.gamma1; // p1 / (n - p1)
    -fp.eigs.iter().map(|v| (factor * v).ln_1p()).sum::<f64>()
}

/// `log V_n` through log-determinants of the covariance blocks
/// (`log det(S22.1) - log det(S22)`); the algebraic identity with
/// [`stat_lr`] is exercised in tests and the acceptance suite.
pub fn stat_lr_logdet(cov: &PartitionedCov) -> Result<f64> {
    let chol11 = cholesky_of(cov.s11(), "S11")?;
    let schur = cov.s22() - cov.s21() * chol11.solve(cov.s12());
    Ok(log_det(&schur, "S22.1")? - log_det(cov.s22(), "S22")?)
}

/// Log-determinant from a Cholesky factor; never forms the determinant
/// itself, which would overflow around p = 60.
fn log_det(m: &DMatrix<f64>, block: &'static str) -> Result<f64> {
    let chol = cholesky_of(m, block)?;
    Ok(2.0 * chol.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

/// Jiang's trace criterion `sum v_i / (gamma1/gamma2 + v_i)`.
pub fn stat_jiang(fp: &FisherPair, ratios: &RatioSet) -> f64 {
    let shift = ratios.gamma1 / ratios.gamma2; // (n - p1) / p1
    fp.eigs.iter().map(|v| v / (shift + v)).sum()
}

/// Yang's regularized sum of canonical correlations: the trace of
/// `(S22 + t I)^{-1} S21 S11^{-1} S12`. At `t = 0` it coincides with
/// Jiang's statistic.
pub fn stat_yang(cov: &PartitionedCov, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::InvalidInput("yang t must be nonnegative".into()));
    }
    let chol11 = cholesky_of(cov.s11(), "S11")?;
    let b = cov.s21() * chol11.solve(cov.s12());
    let mut reg = cov.s22().clone();
    for i in 0..reg.nrows() {
        reg[(i, i)] += t;
    }
    let chol = cholesky_of(&reg, "S22 + tI")?;
    Ok(chol.solve(&b).trace())
}

/// Which tail of the standardized statistic rejects the null.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Tail {
    /// Reject for standardized values below `-u_{1-alpha}`.
    Lower,
    /// Reject for standardized values above `u_{1-alpha}`.
    Upper,
}

fn std_normal() -> &'static Normal {
    static NORMAL: OnceLock<Normal> = OnceLock::new();
    NORMAL.get_or_init(|| Normal::new(0.0, 1.0).unwrap())
}

/// Upper quantile `u_{1-alpha}` of the standard normal.
pub fn normal_upper_quantile(alpha: f64) -> f64 {
    std_normal().inverse_cdf(1.0 - alpha)
}

/// Standardizes a raw statistic against its analytic calibration and turns
/// it into a decision.
pub fn decide(
    raw: f64,
    statistic_id: StatisticId,
    cal: &NullCalibration,
    dims: &Dims,
    alpha: f64,
) -> Result<TestOutcome> {
    if cal.statistic_id != statistic_id {
        return Err(Error::Mismatch(format!(
            "calibration for {} applied to {}",
            cal.statistic_id, statistic_id
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidInput(format!("alpha {alpha} outside [0, 1]")));
    }
    let tail = match statistic_id {
        StatisticId::Lr => Tail::Lower,
        StatisticId::W | StatisticId::Lh | StatisticId::Bnp => Tail::Upper,
        other => {
            return Err(Error::Mismatch(format!(
                "{other} has no analytic calibration; use a Monte Carlo critical value"
            )))
        }
    };
    let standardized = (raw - dims.p2() as f64 * cal.s - cal.mu) / cal.sigma2.sqrt();
    let u = normal_upper_quantile(alpha);
    let (p_value, reject) = match tail {
        Tail::Lower => (std_normal().cdf(standardized), standardized < -u),
        Tail::Upper => (1.0 - std_normal().cdf(standardized), standardized > u),
    };
    Ok(TestOutcome {
        statistic_id,
        raw,
        standardized,
        p_value,
        reject,
        alpha,
    })
}

/// Linear-interpolation (type 7) empirical quantile of a sorted sample.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Draws the null distribution of a competitor statistic under `Sigma = I`.
///
/// Replication `i` uses the counter-based stream `(seed, i)`, so the draws
/// do not depend on scheduling.
pub fn mc_null_draws(
    statistic_id: StatisticId,
    dims: &Dims,
    reps: usize,
    seed: u64,
    yang_t: f64,
) -> Result<Vec<f64>> {
    dims.validate()?;
    let ratios = dims.ratios()?;
    let mut draws = Vec::with_capacity(reps);
    for rep in 0..reps {
        let mut rng = stream_rng(seed, rep as u64);
        let x = standard_normal_matrix(dims.n, dims.p, &mut rng);
        let data = DataMatrix::new(x)?;
        let cov = sample_cov(&data, MeanMode::KnownZero)?;
        let part = PartitionedCov::from_full(&cov, dims.p1)?;
        let value = match statistic_id {
            StatisticId::Jiang => {
                let fp = fisher_pair(&part, dims)?;
                stat_jiang(&fp, &ratios)
            }
            StatisticId::Yang => stat_yang(&part, yang_t)?,
            other => {
                return Err(Error::Mismatch(format!(
                    "{other} is calibrated analytically, not by Monte Carlo"
                )))
            }
        };
        draws.push(value);
    }
    Ok(draws)
}

/// Empirical `(1 - alpha)` critical value for a competitor statistic,
/// simulated under the `Sigma = I` null with a fixed seed.
pub fn mc_critical_value(
    statistic_id: StatisticId,
    dims: &Dims,
    mc: &McConfig,
    yang_t: f64,
) -> Result<f64> {
    if mc.reps < 200 {
        return Err(Error::Simulation(format!(
            "at least 200 replications required for a critical value, got {}",
            mc.reps
        )));
    }
    let mut draws = mc_null_draws(statistic_id, dims, mc.reps, mc.seed, yang_t)?;
    draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(quantile_sorted(&draws, 1.0 - mc.alpha))
}

/// Everything a strategy needs to compute its raw value.
pub struct StatContext<'a> {
    pub cov: &'a PartitionedCov,
    pub fisher: &'a FisherPair,
    pub dims: Dims,
    pub ratios: RatioSet,
    pub yang_t: f64,
}

/// One member of the statistic family.
pub trait TestStatistic: Send + Sync {
    fn id(&self) -> StatisticId;

    fn name(&self) -> &'static str {
        self.id().name()
    }

    fn tail(&self) -> Tail;

    /// Raw statistic value.
    fn raw(&self, ctx: &StatContext<'_>) -> Result<f64>;

    /// Analytic null calibration; `None` for Monte Carlo calibrated members.
    fn calibration(&self, ratios: &RatioSet) -> Result<Option<NullCalibration>>;
}

struct LrStatistic;
struct WilksStatistic;
struct LhStatistic;
struct BnpStatistic;
struct JiangStatistic;
struct YangStatistic;

impl TestStatistic for LrStatistic {
    fn id(&self) -> StatisticId {
        StatisticId::Lr
    }
    fn tail(&self) -> Tail {
        Tail::Lower
    }
    fn raw(&self, ctx: &StatContext<'_>) -> Result<f64> {
        Ok(stat_lr(ctx.fisher, &ctx.ratios))
    }
    fn calibration(&self, ratios: &RatioSet) -> Result<Option<NullCalibration>> {
        lr_calibration(ratios).map(Some)
    }
}

impl TestStatistic for WilksStatistic {
    fn id(&self) -> StatisticId {
        StatisticId::W
    }
    fn tail(&self) -> Tail {
        Tail::Upper
    }
    fn raw(&self, ctx: &StatContext<'_>) -> Result<f64> {
        Ok(stat_wilks(ctx.fisher))
    }
    fn calibration(&self, ratios: &RatioSet) -> Result<Option<NullCalibration>> {
        wilks_calibration(ratios).map(Some)
    }
}

impl TestStatistic for LhStatistic {
    fn id(&self) -> StatisticId {
        StatisticId::Lh
    }
    fn tail(&self) -> Tail {
        Tail::Upper
    }
    fn raw(&self, ctx: &StatContext<'_>) -> Result<f64> {
        Ok(stat_lh(ctx.fisher))
    }
    fn calibration(&self, ratios: &RatioSet) -> Result<Option<NullCalibration>> {
        lh_calibration(ratios).map(Some)
    }
}

impl TestStatistic for BnpStatistic {
    fn id(&self) -> StatisticId {
        StatisticId::Bnp
    }
    fn tail(&self) -> Tail {
        Tail::Upper
    }
    fn raw(&self, ctx: &StatContext<'_>) -> Result<f64> {
        Ok(stat_bnp(ctx.fisher))
    }
    fn calibration(&self, ratios: &RatioSet) -> Result<Option<NullCalibration>> {
        bnp_calibration(ratios).map(Some)
    }
}

impl TestStatistic for JiangStatistic {
    fn id(&self) -> StatisticId {
        StatisticId::Jiang
    }
    fn tail(&self) -> Tail {
        Tail::Upper
    }
    fn raw(&self, ctx: &StatContext<'_>) -> Result<f64> {
        Ok(stat_jiang(ctx.fisher, &ctx.ratios))
    }
    fn calibration(&self, _ratios: &RatioSet) -> Result<Option<NullCalibration>> {
        Ok(None)
    }
}

impl TestStatistic for YangStatistic {
    fn id(&self) -> StatisticId {
        StatisticId::Yang
    }
    fn tail(&self) -> Tail {
        Tail::Upper
    }
    fn raw(&self, ctx: &StatContext<'_>) -> Result<f64> {
        stat_yang(ctx.cov, ctx.yang_t)
    }
    fn calibration(&self, _ratios: &RatioSet) -> Result<Option<NullCalibration>> {
        Ok(None)
    }
}

/// Name-indexed registry of every statistic.
pub struct Registry {
    entries: Vec<Box<dyn TestStatistic>>,
}

impl Registry {
    fn build() -> Self {
        Registry {
            entries: vec![
                Box::new(LrStatistic),
                Box::new(WilksStatistic),
                Box::new(LhStatistic),
                Box::new(BnpStatistic),
                Box::new(JiangStatistic),
                Box::new(YangStatistic),
            ],
        }
    }

    pub fn all(&self) -> impl Iterator<Item = &dyn TestStatistic> {
        self.entries.iter().map(|b| b.as_ref())
    }

    pub fn by_id(&self, id: StatisticId) -> &dyn TestStatistic {
        self.entries
            .iter()
            .map(|b| b.as_ref())
            .find(|s| s.id() == id)
            .expect("every statistic id is registered")
    }

    pub fn by_name(&self, name: &str) -> Option<&dyn TestStatistic> {
        let id: StatisticId = name.parse().ok()?;
        Some(self.by_id(id))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|b| b.name()).collect()
    }
}

/// The global registry instance.
pub fn registry() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(Registry::build)
}

/// Runs the selected statistics on a data set end to end.
///
/// Monte Carlo calibrated members (Jiang, Yang) are standardized against
/// their simulated null draws: the standardized value uses the null mean
/// and standard deviation, the p-value is the empirical tail fraction and
/// rejection compares against the empirical `(1 - alpha)` quantile.
pub fn test_data(
    data: &DataMatrix,
    p1: usize,
    ids: &[StatisticId],
    alpha: f64,
    mean_mode: MeanMode,
    yang_t: f64,
    competitor_mc: &McConfig,
) -> Result<Vec<TestOutcome>> {
    let n_eff = mean_mode.effective_n(data.n());
    let dims = Dims::new(n_eff, data.p(), p1)?;
    let ratios = dims.ratios()?;
    let cov = sample_cov(data, mean_mode)?;
    let part = PartitionedCov::from_full(&cov, p1)?;
    let fisher = fisher_pair(&part, &dims)?;
    let ctx = StatContext {
        cov: &part,
        fisher: &fisher,
        dims,
        ratios,
        yang_t,
    };
    let reg = registry();
    let mut outcomes = Vec::with_capacity(ids.len());
    for &id in ids {
        let strategy = reg.by_id(id);
        let raw = strategy.raw(&ctx)?;
        let outcome = match strategy.calibration(&ratios)? {
            Some(cal) => decide(raw, id, &cal, &dims, alpha)?,
            None => {
                let mut draws =
                    mc_null_draws(id, &dims, competitor_mc.reps, competitor_mc.seed, yang_t)?;
                draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let reps = draws.len();
                let mean = draws.iter().sum::<f64>() / reps as f64;
                let var =
                    draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
                let exceed = draws.iter().filter(|&&d| d >= raw).count();
                let critical = quantile_sorted(&draws, 1.0 - alpha);
                TestOutcome {
                    statistic_id: id,
                    raw,
                    standardized: (raw - mean) / var.sqrt(),
                    p_value: (1.0 + exceed as f64) / (reps as f64 + 1.0),
                    reject: raw > critical,
                    alpha,
                }
            }
        };
        outcomes.push(outcome);
    }
    Ok(outcomes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::DMatrix;
    use rand_distr::{Distribution, StandardNormal};

    fn wishart_cov(n: usize, p: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = stream_rng(seed, 0);
        let x = standard_normal_matrix(n, p, &mut rng);
        x.transpose() * x / n as f64
    }

    #[test]
    fn sample_cov_single_variable_known_zero() {
        let obs = DMatrix::from_column_slice(4, 1, &[1.0, -1.0, 1.0, -1.0]);
        let data = DataMatrix::new(obs).unwrap();
        let cov = sample_cov(&data, MeanMode::KnownZero).unwrap();
        assert_relative_eq!(cov[(0, 0)], 1.0);
    }

    #[test]
    fn sample_cov_estimated_on_constant_data_is_zero() {
        let obs = DMatrix::from_element(5, 3, 2.5);
        let data = DataMatrix::new(obs).unwrap();
        let cov = sample_cov(&data, MeanMode::Estimated).unwrap();
        assert!(cov.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn sample_cov_identity_recovery() {
        let mut rng = stream_rng(2024, 0);
        let x = standard_normal_matrix(10_000, 4, &mut rng);
        let data = DataMatrix::new(x).unwrap();
        let cov = sample_cov(&data, MeanMode::KnownZero).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((cov[(i, j)] - expect).abs() < 0.1);
            }
        }
    }

    #[test]
    fn fisher_pair_zero_cross_block() {
        let mut cov = DMatrix::<f64>::identity(6, 6);
        cov[(4, 4)] = 2.0;
        let part = PartitionedCov::from_full(&cov, 3).unwrap();
        let dims = Dims::new(40, 6, 3).unwrap();
        let fp = fisher_pair(&part, &dims).unwrap();
        assert!(fp.eigs.iter().all(|v| v.abs() < 1e-12));
        let ratios = dims.ratios().unwrap();
        assert_relative_eq!(stat_wilks(&fp), 0.0);
        assert_relative_eq!(stat_lh(&fp), 0.0);
        assert_relative_eq!(stat_bnp(&fp), 0.0);
        assert_relative_eq!(stat_lr(&fp, &ratios), 0.0);
        assert_relative_eq!(stat_jiang(&fp, &ratios), 0.0);
        assert_relative_eq!(stat_yang(&part, 0.0).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fisher_pair_scalar_second_block() {
        // p - p1 = 1: v_1 = ((n-p1)/p1) * S21 S11^-1 S12 / (S22 - S21 S11^-1 S12)
        let cov = wishart_cov(50, 4, 7);
        let part = PartitionedCov::from_full(&cov, 3).unwrap();
        let dims = Dims::new(50, 4, 3).unwrap();
        let fp = fisher_pair(&part, &dims).unwrap();
        let chol = cov.view((0, 0), (3, 3)).into_owned().cholesky().unwrap();
        let s12 = cov.view((0, 3), (3, 1)).into_owned();
        let quad = (s12.transpose() * chol.solve(&s12))[(0, 0)];
        let expected = (47.0 / 3.0) * quad / (cov[(3, 3)] - quad);
        assert_relative_eq!(fp.eigs[0], expected, epsilon = 1e-10);
    }

    #[test]
    fn eigenvalues_match_nonsymmetric_product() {
        // 10 x 10 product matrices
        let cov = wishart_cov(60, 15, 11);
        let part = PartitionedCov::from_full(&cov, 5).unwrap();
        let dims = Dims::new(60, 15, 5).unwrap();
        let fp = fisher_pair(&part, &dims).unwrap();
        // brute-force oracle: eigenvalues of the explicit product W T^{-1}
        let t_inv = fp.t.clone().try_inverse().unwrap();
        let product = &fp.w * t_inv;
        let mut oracle: Vec<f64> = product.complex_eigenvalues().iter().map(|z| z.re).collect();
        oracle.sort_by(|a, b| b.partial_cmp(a).unwrap());
        assert_eq!(fp.eigs.len(), 10);
        for (got, want) in fp.eigs.iter().zip(&oracle) {
            assert!((got - want).abs() <= 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn wilks_and_bnp_matrix_identities() {
        let cov = wishart_cov(45, 8, 3);
        let part = PartitionedCov::from_full(&cov, 4).unwrap();
        let dims = Dims::new(45, 8, 4).unwrap();
        let fp = fisher_pair(&part, &dims).unwrap();
        let t_inv = fp.t.clone().try_inverse().unwrap();
        let product = &fp.w * t_inv;
        let eye = DMatrix::<f64>::identity(4, 4);
        let log_det_form = (&eye + &product).determinant().ln();
        assert_relative_eq!(stat_wilks(&fp), log_det_form, epsilon = 1e-9);
        let bnp_form = 4.0 - (&eye + &product).try_inverse().unwrap().trace();
        assert_relative_eq!(stat_bnp(&fp), bnp_form, epsilon = 1e-9);
    }

    #[test]
    fn statistic_values_on_fixed_eigenvalues() {
        let fp = FisherPair {
            w: DMatrix::identity(2, 2),
            t: DMatrix::identity(2, 2),
            eigs: vec![3.0, 1.0],
        };
        assert_relative_eq!(stat_wilks(&fp), 2.0f64.ln() + 4.0f64.ln(), epsilon = 1e-14);
        assert_relative_eq!(stat_lh(&fp), 4.0);
        assert_relative_eq!(stat_bnp(&fp), 1.25);
        // gamma1/gamma2 = 7/3 at (100, 60, 30)
        let ratios = Dims::new(100, 60, 30).unwrap().ratios().unwrap();
        assert_relative_eq!(stat_jiang(&fp, &ratios), 0.8625, epsilon = 1e-12);
    }

    #[test]
    fn lr_eigenvalue_and_logdet_forms_agree() {
        for seed in 0..20 {
            let cov = wishart_cov(40, 6, 100 + seed);
            let part = PartitionedCov::from_full(&cov, 3).unwrap();
            let dims = Dims::new(40, 6, 3).unwrap();
            let fp = fisher_pair(&part, &dims).unwrap();
            let ratios = dims.ratios().unwrap();
            let by_eigs = stat_lr(&fp, &ratios);
            let by_logdet = stat_lr_logdet(&part).unwrap();
            assert!((by_eigs - by_logdet).abs() <= 1e-8);
            assert!(by_eigs <= 1e-12, "T_LR must be nonpositive");
        }
    }

    #[test]
    fn yang_at_zero_matches_jiang_transform() {
        let cov = wishart_cov(60, 9, 5);
        let part = PartitionedCov::from_full(&cov, 4).unwrap();
        let dims = Dims::new(60, 9, 4).unwrap();
        let fp = fisher_pair(&part, &dims).unwrap();
        let ratios = dims.ratios().unwrap();
        assert_relative_eq!(
            stat_yang(&part, 0.0).unwrap(),
            stat_jiang(&fp, &ratios),
            epsilon = 1e-8
        );
    }

    #[test]
    fn statistic_ordering_bnp_wilks_lh() {
        let cov = wishart_cov(80, 10, 9);
        let part = PartitionedCov::from_full(&cov, 5).unwrap();
        let dims = Dims::new(80, 10, 5).unwrap();
        let fp = fisher_pair(&part, &dims).unwrap();
        let (b, w, l) = (stat_bnp(&fp), stat_wilks(&fp), stat_lh(&fp));
        assert!(0.0 <= b && b <= w && w <= l);
        assert!(b < 5.0);
    }

    #[test]
    fn block_transformation_invariance() {
        let cov = wishart_cov(60, 8, 21);
        let dims = Dims::new(60, 8, 4).unwrap();
        let ratios = dims.ratios().unwrap();
        let part = PartitionedCov::from_full(&cov, 4).unwrap();
        let fp = fisher_pair(&part, &dims).unwrap();

        // congruence by block-diagonal A = diag(A1, A2) on the covariance
        let mut rng = stream_rng(77, 0);
        let mut a = DMatrix::<f64>::zeros(8, 8);
        for i in 0..4 {
            for j in 0..4 {
                a[(i, j)] = StandardNormal.sample(&mut rng);
                a[(4 + i, 4 + j)] = StandardNormal.sample(&mut rng);
            }
        }
        for i in 0..8 {
            a[(i, i)] += 3.0; // keep the blocks comfortably nonsingular
        }
        let transformed = &a * &cov * a.transpose();
        let part_t = PartitionedCov::from_full(&transformed, 4).unwrap();
        let fp_t = fisher_pair(&part_t, &dims).unwrap();
        for (x, y) in fp.eigs.iter().zip(&fp_t.eigs) {
            assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0));
        }
        assert!((stat_jiang(&fp, &ratios) - stat_jiang(&fp_t, &ratios)).abs() <= 1e-8);
    }

    #[test]
    fn decide_p_values_and_rejections() {
        let dims = Dims::new(100, 60, 30).unwrap();
        let ratios = dims.ratios().unwrap();
        let cal = lh_calibration(&ratios).unwrap();
        // standardized exactly 0 -> p = 0.5, no rejection
        let raw0 = dims.p2() as f64 * cal.s + cal.mu;
        let out = decide(raw0, StatisticId::Lh, &cal, &dims, 0.05).unwrap();
        assert_relative_eq!(out.standardized, 0.0, epsilon = 1e-12);
        assert_relative_eq!(out.p_value, 0.5, epsilon = 1e-12);
        assert!(!out.reject);

        // LH at the 1.6449 boundary
        let raw_b = raw0 + 1.6449 * cal.sigma2.sqrt();
        let out = decide(raw_b, StatisticId::Lh, &cal, &dims, 0.05).unwrap();
        assert!((out.p_value - 0.05).abs() < 1e-4);
        assert!(out.reject);

        // LR at standardized -2.33
        let lr_cal = lr_calibration(&ratios).unwrap();
        let raw_lr = dims.p2() as f64 * lr_cal.s + lr_cal.mu - 2.33 * lr_cal.sigma2.sqrt();
        let out = decide(raw_lr, StatisticId::Lr, &lr_cal, &dims, 0.05).unwrap();
        assert!((out.p_value - 0.0099).abs() < 2e-4);
        assert!(out.reject);
    }

    #[test]
    fn decide_rejects_mismatched_calibration() {
        let dims = Dims::new(100, 60, 30).unwrap();
        let cal = lh_calibration(&dims.ratios().unwrap()).unwrap();
        assert!(decide(1.0, StatisticId::W, &cal, &dims, 0.05).is_err());
    }

    #[test]
    fn registry_resolves_names() {
        let reg = registry();
        assert_eq!(reg.by_name("lh").unwrap().id(), StatisticId::Lh);
        assert_eq!(reg.by_name("WILKS").unwrap().id(), StatisticId::W);
        assert!(reg.by_name("nope").is_none());
        assert_eq!(reg.names().len(), 6);
        assert_eq!(reg.by_id(StatisticId::Lr).tail() as u8, Tail::Lower as u8);
    }

    #[test]
    fn mc_critical_value_median_and_stability() {
        let dims = Dims::new(30, 8, 4).unwrap();
        let mc = McConfig {
            reps: 400,
            seed: 9,
            alpha: 0.5,
            jobs: 1,
        };
        let crit = mc_critical_value(StatisticId::Jiang, &dims, &mc, 0.0).unwrap();
        let mut draws = mc_null_draws(StatisticId::Jiang, &dims, 400, 9, 0.0).unwrap();
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = (draws[199] + draws[200]) / 2.0;
        assert_relative_eq!(crit, median, epsilon = 1e-12);

        // doubling reps moves the 95% quantile by less than twice its
        // bootstrap standard error
        let mc95 = McConfig {
            reps: 600,
            seed: 9,
            alpha: 0.05,
            jobs: 1,
        };
        let c1 = mc_critical_value(StatisticId::Jiang, &dims, &mc95, 0.0).unwrap();
        let mc95b = McConfig {
            reps: 1200,
            seed: 9,
            alpha: 0.05,
            jobs: 1,
        };
        let c2 = mc_critical_value(StatisticId::Jiang, &dims, &mc95b, 0.0).unwrap();
        // bootstrap SE of the 0.95 quantile at 600 reps
        let mut boot = Vec::new();
        let mut rng = stream_rng(123, 0);
        for _ in 0..200 {
            let sample: Vec<f64> = (0..600)
                .map(|_| draws[(rand::Rng::random_range(&mut rng, 0..400)) as usize])
                .collect();
            let mut s = sample;
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            boot.push(quantile_sorted(&s, 0.95));
        }
        let bm = boot.iter().sum::<f64>() / boot.len() as f64;
        let bse = (boot.iter().map(|b| (b - bm).powi(2)).sum::<f64>() / 199.0).sqrt();
        assert!(
            (c1 - c2).abs() < 2.0 * bse.max(1e-6),
            "c1={c1} c2={c2} se={bse}"
        );
    }

    #[test]
    fn mc_critical_value_requires_enough_reps() {
        let dims = Dims::new(30, 8, 4).unwrap();
        let mc = McConfig {
            reps: 100,
            seed: 9,
            alpha: 0.05,
            jobs: 1,
        };
        assert!(mc_critical_value(StatisticId::Jiang, &dims, &mc, 0.0).is_err());
    }

    #[test]
    fn test_data_runs_all_statistics() {
        let mut rng = stream_rng(5150, 0);
        let x = standard_normal_matrix(60, 12, &mut rng);
        let data = DataMatrix::new(x).unwrap();
        let mc = McConfig {
            reps: 250,
            seed: 1,
            alpha: 0.05,
            jobs: 1,
        };
        let outcomes = test_data(
            &data,
            6,
            &StatisticId::ALL,
            0.05,
            MeanMode::KnownZero,
            DEFAULT_YANG_T,
            &mc,
        )
        .unwrap();
        assert_eq!(outcomes.len(), 6);
        for o in &outcomes {
            assert!(o.p_value >= 0.0 && o.p_value <= 1.0);
            assert!(o.raw.is_finite() && o.standardized.is_finite());
        }
    }
}
