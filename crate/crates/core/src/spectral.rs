//! The limiting spectral law of the null Fisher matrix `W T^{-1}` and
//! empirical-spectral-distribution utilities.
//!
//! The law has density
//! `q(x) = (1-gamma2) sqrt((b-x)(x-a)) / (2 pi x (gamma1 + gamma2 x))`
//! on `[a, b]` with `a = (1-h)^2/(1-gamma2)^2`, `b = (1+h)^2/(1-gamma2)^2`,
//! plus an atom of mass `1 - 1/gamma1` at zero when `gamma1 > 1`. Evaluated
//! with finite-sample ratios it is the finite-sample proxy; with limiting
//! ratios it is the limit law itself.

use crate::error::{Error, Result};
use crate::model::RatioSet;
use crate::quadrature::{integrate_refining, GaussLegendre};

const CDF_GRID_POINTS: usize = 4096;

/// Limiting spectral distribution of the null Fisher matrix.
#[derive(Debug, Clone)]
pub struct FisherLsd {
    gamma1: f64,
    gamma2: f64,
    a: f64,
    b: f64,
    mass0: f64,
    /// Cumulative distribution sampled on a uniform grid over `[a, b]`,
    /// built eagerly so lookups are lock-free.
    cdf_grid: Vec<f64>,
}

impl FisherLsd {
    /// Builds the law for the given ratios, caching the CDF grid.
    pub fn new(ratios: &RatioSet) -> Result<Self> {
        let g1 = ratios.gamma1;
        let g2 = ratios.gamma2;
        if !(g1 > 0.0 && g2 > 0.0 && g2 < 1.0) {
            return Err(Error::Dimension(
                "fisher LSD requires gamma1 > 0 and 0 < gamma2 < 1".into(),
            ));
        }
        let h = ratios.h;
        let om = 1.0 - g2;
        let a = (1.0 - h) * (1.0 - h) / (om * om);
        let b = (1.0 + h) * (1.0 + h) / (om * om);
        let mass0 = if g1 > 1.0 { 1.0 - 1.0 / g1 } else { 0.0 };
        let mut lsd = FisherLsd {
            gamma1: g1,
            gamma2: g2,
            a,
            b,
            mass0,
            cdf_grid: Vec::new(),
        };
        lsd.build_cdf_grid();
        Ok(lsd)
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Mass of the atom at zero, `(1 - 1/gamma1) 1{gamma1 > 1}`.
    pub fn mass0(&self) -> f64 {
        self.mass0
    }

    /// Density of the absolutely continuous part; zero outside `(a, b)`.
    pub fn q(&self, x: f64) -> f64 {
        if x <= self.a || x >= self.b || x <= 0.0 {
            return 0.0;
        }
        (1.0 - self.gamma2) / (2.0 * std::f64::consts::PI * x * (self.gamma1 + self.gamma2 * x))
            * ((self.b - x) * (x - self.a)).sqrt()
    }

    /// Integrates `f` against the law: `mass0 * f(0) + int_a^b f q`.
    ///
    /// The square-root edge factor is removed by substituting
    /// `x = a + (b-a) sin^2(theta)`, after which Gauss-Legendre converges
    /// rapidly; the rule order is doubled from 128 until two estimates agree
    /// to 1e-10.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        let (a, b) = (self.a, self.b);
        let g1 = self.gamma1;
        let g2 = self.gamma2;
        let om = 1.0 - g2;
        let span = b - a;
        let atom = if self.mass0 > 0.0 {
            let f0 = f(0.0);
            if !f0.is_finite() {
                return Err(Error::Integration("f(0) is non-finite at the atom".into()));
            }
            self.mass0 * f0
        } else {
            0.0
        };
        let integrand = |theta: f64| {
            let (sin, cos) = theta.sin_cos();
            let s2 = sin * sin;
            let x = a + span * s2;
            if x <= 0.0 {
                return 0.0;
            }
            // q(x) * dx/dtheta with sqrt((b-x)(x-a)) = span * sin * cos
            let jac = 2.0 * span * span * s2 * cos * cos;
            f(x) * om / (2.0 * std::f64::consts::PI * x * (g1 + g2 * x)) * jac
        };
        let bulk = integrate_refining(0.0, std::f64::consts::FRAC_PI_2, &integrand, 128, 1e-10)?;
        Ok(atom + bulk)
    }

    fn build_cdf_grid(&mut self) {
        // cumulative quadrature in theta space, one panel per grid cell
        let rule = GaussLegendre::new(16);
        let n = CDF_GRID_POINTS;
        let g1 = self.gamma1;
        let g2 = self.gamma2;
        let om = 1.0 - g2;
        let (a, span) = (self.a, self.b - self.a);
        let density_theta = |theta: f64| {
            let (sin, cos) = theta.sin_cos();
            let x = a + span * sin * sin;
            if x <= 0.0 {
                return 0.0;
            }
            om / (2.0 * std::f64::consts::PI * x * (g1 + g2 * x))
                * 2.0
                * span
                * span
                * sin
                * sin
                * cos
                * cos
        };
        let mut grid = Vec::with_capacity(n + 1);
        grid.push(0.0);
        let mut acc = 0.0;
        for i in 0..n {
            let t0 = std::f64::consts::FRAC_PI_2 * i as f64 / n as f64;
            let t1 = std::f64::consts::FRAC_PI_2 * (i + 1) as f64 / n as f64;
            acc += rule.integrate(t0, t1, &density_theta);
            grid.push(acc);
        }
        // normalize the continuous part to exactly 1 - mass0 so the CDF is a
        // proper distribution function despite quadrature round-off
        let total = acc;
        let target = 1.0 - self.mass0;
        if total > 0.0 {
            let scale = target / total;
            for v in grid.iter_mut() {
                *v *= scale;
            }
        }
        self.cdf_grid = grid;
    }

    /// Distribution function `F(x) = mass0 + int_a^x q`.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if x <= self.a {
            return self.mass0;
        }
        if x >= self.b {
            return 1.0;
        }
        // invert x = a + span sin^2 theta to locate the grid cell
        let u = ((x - self.a) / (self.b - self.a)).clamp(0.0, 1.0);
        let theta = u.sqrt().asin();
        let pos = theta / std::f64::consts::FRAC_PI_2 * (self.cdf_grid.len() - 1) as f64;
        let idx = (pos.floor() as usize).min(self.cdf_grid.len() - 2);
        let frac = pos - idx as f64;
        let cont = self.cdf_grid[idx] * (1.0 - frac) + self.cdf_grid[idx + 1] * frac;
        (self.mass0 + cont).min(1.0)
    }

    /// Quantile function; the flat stretch `[0, a)` caused by the atom maps
    /// every `u <= mass0` to zero.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::InvalidInput(format!(
                "quantile level {u} outside [0, 1]"
            )));
        }
        if u <= self.mass0 {
            return Ok(0.0);
        }
        if u >= 1.0 {
            return Ok(self.b);
        }
        let target = u - self.mass0;
        let grid = &self.cdf_grid;
        let mut lo = 0usize;
        let mut hi = grid.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if grid[mid] < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let seg = grid[hi] - grid[lo];
        let frac = if seg > 0.0 {
            (target - grid[lo]) / seg
        } else {
            0.5
        };
        let theta = std::f64::consts::FRAC_PI_2 * (lo as f64 + frac) / (grid.len() - 1) as f64;
        Ok(self.a + (self.b - self.a) * theta.sin().powi(2))
    }
}

/// Empirical spectral distribution of a set of eigenvalues.
#[derive(Debug, Clone)]
pub struct Esd {
    /// Ascending eigenvalues, tiny negatives clamped to zero.
    sorted: Vec<f64>,
}

impl Esd {
    /// Builds the step CDF. Eigenvalues below `-1e-10` are rejected; values
    /// in `[-1e-10, 0)` are treated as round-off and clamped.
    pub fn from_eigenvalues(eigs: &[f64]) -> Result<Self> {
        if eigs.is_empty() {
            return Err(Error::InvalidInput("empty eigenvalue list".into()));
        }
        let mut sorted = Vec::with_capacity(eigs.len());
        for &v in eigs {
            if !v.is_finite() || v < -1e-10 {
                return Err(Error::InvalidInput(format!(
                    "invalid eigenvalue {v} in ESD"
                )));
            }
            sorted.push(v.max(0.0));
        }
        sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
        Ok(Esd { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    /// Eigenvalues in descending order.
    pub fn descending(&self) -> Vec<f64> {
        self.sorted.iter().rev().copied().collect()
    }

    /// Step CDF value at `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|&v| v <= x);
        count as f64 / self.sorted.len() as f64
    }
}

/// Kolmogorov-Smirnov sup-distance between a step CDF and the law's CDF.
///
/// Each distinct jump is compared from both sides; tied eigenvalues (exact
/// zeros are routine when `gamma1 > 1`) form a single jump, and the law's
/// left limit differs from its value only at the atom.
pub fn ks_distance(esd: &Esd, lsd: &FisherLsd) -> f64 {
    let m = esd.sorted.len() as f64;
    let mut sup: f64 = 0.0;
    let mut i = 0;
    while i < esd.sorted.len() {
        let v = esd.sorted[i];
        let j = esd.sorted.partition_point(|&u| u <= v);
        let f_right = lsd.cdf(v);
        let f_left = if v <= 0.0 { 0.0 } else { f_right };
        sup = sup.max((j as f64 / m - f_right).abs());
        sup = sup.max((i as f64 / m - f_left).abs());
        i = j;
    }
    sup
}
