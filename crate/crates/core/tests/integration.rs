//! Cross-module integration checks that are too slow for unit tests.

use blocktest_core::model::{Dims, MeanMode, PartitionedCov, StatisticId};
use blocktest_core::simulate::{
    run_power, standard_normal_matrix, stream_rng, AltScenario, McConfig,
};
use blocktest_core::spectral::{ks_distance, Esd, FisherLsd};
use blocktest_core::statistics::{fisher_pair, mc_critical_value, sample_cov, stat_jiang};
use blocktest_core::DataMatrix;

#[test]
fn esd_of_large_null_fisher_matrix_tracks_the_law() {
    // one large draw: the empirical spectrum of W T^{-1} should be close to
    // the finite-sample proxy law
    let dims = Dims::new(1000, 600, 300).unwrap();
    let mut rng = stream_rng(2718, 0);
    let x = standard_normal_matrix(1000, 600, &mut rng);
    let data = DataMatrix::new(x).unwrap();
    let cov = sample_cov(&data, MeanMode::KnownZero).unwrap();
    let part = PartitionedCov::from_full(&cov, 300).unwrap();
    let fp = fisher_pair(&part, &dims).unwrap();
    let esd = Esd::from_eigenvalues(&fp.eigs).unwrap();
    let lsd = FisherLsd::new(&dims.ratios().unwrap()).unwrap();
    let dist = ks_distance(&esd, &lsd);
    assert!(dist < 0.05, "KS distance {dist}");
}

#[test]
fn lh_power_curve_is_monotone_up_to_noise() {
    let dims = Dims::new(80, 40, 20).unwrap();
    let template = AltScenario::new(dims, 40.0, 0.0, 0.0).unwrap();
    let rho: Vec<f64> = (0..8).map(|i| 0.045 * i as f64 / 7.0).collect();
    let mc = McConfig {
        reps: 300,
        seed: 99,
        alpha: 0.05,
        jobs: 0,
    };
    let table = run_power(&template, &rho, &[StatisticId::Lh], &mc, 10.0).unwrap();
    let max_se = table.rows.iter().map(|r| r.se).fold(0.0f64, f64::max);
    let (_, residual) = table.monotonicity_residual[0];
    assert!(
        residual <= 2.0 * max_se.max((0.05f64 * 0.95 / 300.0).sqrt()),
        "isotonic residual {residual} vs se {max_se}"
    );
    // the curve actually rises over this grid
    let first = table.rows.first().unwrap().power;
    let last = table.rows.last().unwrap().power;
    assert!(last > first + 0.3, "power should climb: {first} -> {last}");
}

#[test]
fn mc_critical_value_calibrates_the_jiang_test() {
    // fresh null data evaluated against the simulated critical value
    // rejects at roughly the nominal rate
    let dims = Dims::new(60, 16, 8).unwrap();
    let ratios = dims.ratios().unwrap();
    let mc = McConfig {
        reps: 800,
        seed: 5,
        alpha: 0.05,
        jobs: 0,
    };
    let critical = mc_critical_value(StatisticId::Jiang, &dims, &mc, 0.0).unwrap();
    let fresh = 600;
    let mut rejections = 0;
    for rep in 0..fresh {
        let mut rng = stream_rng(777, rep);
        let x = standard_normal_matrix(60, 16, &mut rng);
        let data = DataMatrix::new(x).unwrap();
        let cov = sample_cov(&data, MeanMode::KnownZero).unwrap();
        let part = PartitionedCov::from_full(&cov, 8).unwrap();
        let fp = fisher_pair(&part, &dims).unwrap();
        if stat_jiang(&fp, &ratios) > critical {
            rejections += 1;
        }
    }
    let rate = rejections as f64 / fresh as f64;
    let se = (0.05f64 * 0.95 / fresh as f64).sqrt();
    assert!(
        (rate - 0.05).abs() <= 3.0 * se + 0.01,
        "rejection rate {rate}"
    );
}

#[test]
fn estimated_mean_mode_keeps_the_level() {
    // data with a large nonzero mean: estimated mode recovers the null
    // behavior, known-zero mode is destroyed by the mean shift
    let dims_raw = Dims::new(80, 20, 10).unwrap();
    let mut rejections_est = 0;
    let reps = 300;
    let mc = McConfig {
        reps: 200,
        seed: 4,
        alpha: 0.05,
        jobs: 1,
    };
    for rep in 0..reps {
        let mut rng = stream_rng(31337, rep);
        let mut x = standard_normal_matrix(80, 20, &mut rng);
        for v in x.iter_mut() {
            *v += 5.0;
        }
        let data = DataMatrix::new(x).unwrap();
        let outcomes = blocktest_core::statistics::test_data(
            &data,
            10,
            &[StatisticId::Lh],
            0.05,
            MeanMode::Estimated,
            10.0,
            &mc,
        )
        .unwrap();
        if outcomes[0].reject {
            rejections_est += 1;
        }
    }
    let rate = rejections_est as f64 / reps as f64;
    assert!(rate < 0.15, "estimated-mean level {rate}");
    let _ = dims_raw;
}
