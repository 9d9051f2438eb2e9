//! Closed-form calibration constants for the null distributions.
//!
//! Each statistic `T_a` is standardized as
//! `(T_a - (p - p1) * s_a - mu_a) / sigma_a`, which is asymptotically
//! standard normal under the block-diagonal null. The constants are
//! functions of the finite-sample ratios in [`RatioSet`] and of the pair
//! `(w, d)` solving `w^2 + d^2 = (1 - gamma2)^2 + 1 + h^2`, `w d = h`.
//!
//! Two of the published constants are adjusted here:
//!
//! * the `gamma1 > 1` branch of the `s_W` (and the equivalent integral
//!   centering) uses the analytic continuation of the `gamma1 < 1` branch,
//!   which is the value of `int log(1+x) dF(x)`; the alternative branch
//!   fails that integral identity (see the quadrature tests in the
//!   `spectral` module);
//! * the BNP mean carries an extra `1/(w^2 - gamma2)` factor and the BNP
//!   variance is `2 h^2 (1-gamma2)^4 / (w^2 - d^2)^4`; both forms are fixed
//!   points of the defining contour integrals and are confirmed by Monte
//!   Carlo at several dimension ratios, while the commonly printed variants
//!   are not.
//!
//! The likelihood-ratio centering `s_LR` is kept exactly in its published
//! piecewise form, including the `gamma1 > 1` branch; reproducing the
//! documented breakdown of the LR test for small first blocks depends on it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{RatioSet, StatisticId};

/// The positive pair `(w, d)` with `w > d` used throughout the Wilks,
/// Lawley-Hotelling and Bartlett-Nanda-Pillai calibrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WdPair {
    pub w: f64,
    pub d: f64,
}

impl WdPair {
    pub fn w2(&self) -> f64 {
        self.w * self.w
    }

    pub fn d2(&self) -> f64 {
        self.d * self.d
    }
}

/// Null standardization constants for one statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullCalibration {
    pub statistic_id: StatisticId,
    /// Asymptotic mean of the centred statistic.
    pub mu: f64,
    /// Asymptotic variance; strictly positive.
    pub sigma2: f64,
    /// Centering per dimension; multiplied by `p - p1` in standardization.
    pub s: f64,
}

impl NullCalibration {
    fn finite(self) -> Result<Self> {
        if !(self.mu.is_finite() && self.sigma2.is_finite() && self.s.is_finite()) {
            return Err(Error::Domain(format!(
                "non-finite calibration for {}",
                self.statistic_id
            )));
        }
        if self.sigma2 <= 0.0 {
            return Err(Error::Domain(format!(
                "sigma2 <= 0 for {}",
                self.statistic_id
            )));
        }
        Ok(self)
    }
}

/// Guards a logarithm argument, turning non-positive inputs into a domain
/// error instead of a silent NaN.
fn checked_ln(x: f64, what: &str) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x.ln())
    } else {
        Err(Error::Domain(format!(
            "log argument {what} = {x} outside (0, inf)"
        )))
    }
}

/// Solves `t^2 - ((1-gamma2)^2 + 1 + h^2) t + h^2 = 0` for `t = w^2 > d^2`.
///
/// The larger root is computed directly and the smaller as `h^2 / w^2`,
/// which avoids cancellation when `h` is small. The discriminant factors as
/// `((1-gamma2)^2 + (1-h)^2)((1-gamma2)^2 + (1+h)^2)` and is strictly
/// positive for every valid ratio set.
pub fn solve_wd(ratios: &RatioSet) -> WdPair {
    let g2 = ratios.gamma2;
    let h = ratios.h;
    let sum = (1.0 - g2) * (1.0 - g2) + 1.0 + h * h;
    let disc = (sum * sum - 4.0 * h * h).max(0.0);
    let w2 = 0.5 * (sum + disc.sqrt());
    let d2 = h * h / w2;
    WdPair {
        w: w2.sqrt(),
        d: d2.sqrt(),
    }
}

/// Piecewise term shared by `s_W` and `s_LR`.
///
/// `inner_low` is the log argument for `gamma1 < 1`, `inner_high` the one
/// for `gamma1 > 1`; the coefficient vanishes at `gamma1 = 1`.
fn gamma1_branch(gamma1: f64, inner_low: f64, inner_high: f64, what: &str) -> Result<f64> {
    if gamma1 == 1.0 {
        Ok(0.0)
    } else if gamma1 < 1.0 {
        Ok((1.0 - gamma1) / gamma1 * checked_ln(inner_low, what)?)
    } else {
        Ok(-(1.0 - gamma1) / gamma1 * checked_ln(inner_high, what)?)
    }
}

/// Corrected likelihood-ratio calibration, with `w* = h/sqrt(gamma2)` and
/// `d* = sqrt(gamma2)`. The standardized statistic rejects for values below
/// `-u_{1-alpha}`.
pub fn lr_calibration(ratios: &RatioSet) -> Result<NullCalibration> {
    let g1 = ratios.gamma1;
    let g2 = ratios.gamma2;
    let h = ratios.h;
    let ws = h / g2.sqrt();
    let ds = g2.sqrt();
    let ws2 = ws * ws;
    let ds2 = g2;

    let mu = 0.5 * checked_ln((ws2 - ds2) * h * h / ((ws * h - g2 * ds2).powi(2)), "mu_LR")?;
    let sigma2 = 2.0 * checked_ln(ws2 / (ws2 - ds2), "sigma2_LR")?;
    let s = checked_ln(g1 / g2 * (1.0 - g2) * (1.0 - g2), "s_LR term 1")?
        + (1.0 - g2) / g2 * checked_ln(ws, "s_LR term 2")?
        - (g1 + g2) / (g1 * g2) * checked_ln(ws - ds * g2 / h, "s_LR term 3")?
        + gamma1_branch(g1, ws - ds * h, ws - ds / h, "s_LR branch")?;

    NullCalibration {
        statistic_id: StatisticId::Lr,
        mu,
        sigma2,
        s,
    }
    .finite()
}

/// Wilks' log-determinant calibration. Rejects for standardized values
/// above `u_{1-alpha}`.
pub fn wilks_calibration(ratios: &RatioSet) -> Result<NullCalibration> {
    let g1 = ratios.gamma1;
    let g2 = ratios.gamma2;
    let h = ratios.h;
    let wd = solve_wd(ratios);
    let (w, d) = (wd.w, wd.d);
    let (w2, d2) = (wd.w2(), wd.d2());

    let mu = 0.5 * checked_ln((w2 - d2) * h * h / ((w * h - g2 * d).powi(2)), "mu_W")?;
    let sigma2 = 2.0 * checked_ln(w2 / (w2 - d2), "sigma2_W")?;
    // s_W = int log(1+x) dF(x); the gamma1 < 1 branch continues across
    // gamma1 = 1 (the coefficient vanishes there) and stays valid for
    // gamma1 > 1, where it keeps the integral identity intact.
    let s = -checked_ln((1.0 - g2) * (1.0 - g2), "s_W term 1")?
        - (1.0 - g2) / g2 * checked_ln(w, "s_W term 2")?
        + (g1 + g2) / (g1 * g2) * checked_ln(w - d * g2 / h, "s_W term 3")?
        - (1.0 - g1) / g1 * checked_ln(w - d * h, "s_W branch")?;

    NullCalibration {
        statistic_id: StatisticId::W,
        mu,
        sigma2,
        s,
    }
    .finite()
}

/// Lawley-Hotelling trace calibration; fully rational closed forms.
pub fn lh_calibration(ratios: &RatioSet) -> Result<NullCalibration> {
    let g2 = ratios.gamma2;
    let h = ratios.h;
    let om = 1.0 - g2;
    NullCalibration {
        statistic_id: StatisticId::Lh,
        mu: g2 / (om * om),
        sigma2: 2.0 * h * h / om.powi(4),
        s: 1.0 / om,
    }
    .finite()
}

/// Bartlett-Nanda-Pillai trace calibration.
pub fn bnp_calibration(ratios: &RatioSet) -> Result<NullCalibration> {
    let g2 = ratios.gamma2;
    let h = ratios.h;
    let wd = solve_wd(ratios);
    let (w2, d2) = (wd.w2(), wd.d2());
    let om = 1.0 - g2;
    let span = w2 - d2;
    let mu = -om * om * w2 * (d2 - g2) / (span * span * (w2 - g2));
    let sigma2 = 2.0 * h * h * om.powi(4) / span.powi(4);
    NullCalibration {
        statistic_id: StatisticId::Bnp,
        mu,
        sigma2,
        s: om / (w2 - g2),
    }
    .finite()
}

/// All four analytic calibrations for a ratio set.
pub fn all_calibrations(ratios: &RatioSet) -> Result<Vec<NullCalibration>> {
    Ok(vec![
        lr_calibration(ratios)?,
        wilks_calibration(ratios)?,
        lh_calibration(ratios)?,
        bnp_calibration(ratios)?,
    ])
}
