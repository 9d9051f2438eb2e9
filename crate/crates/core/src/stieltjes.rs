//! Alternative-hypothesis spectral machinery.
//!
//! Under the alternative, the limiting spectral distribution of `W T^{-1}`
//! is characterized by a nested system of three Stieltjes-transform
//! equations driven by the limiting law `G` of the cross-block matrix `R`:
//!
//! ```text
//! s(z) / (1 + g2 z s(z))           = m_H(z (1 + g2 z s(z)))
//! m_H(z) / (1 + g1 m_H(z))         = m_Ht(psi(z)),
//!     psi(z) = (1 + g1 m_H(z)) [ (1 + g1 m_H(z)) z - (1 - g1) ]
//! m_Ht(z) (1 - b - b z m_Ht(z))/c1 = m_G(c1 z / (1 - b - b z m_Ht(z))),
//!     b = c - c1
//! ```
//!
//! subject to `Im s(z)` having the sign of `Im z`. Each equation is solved
//! pointwise by Newton's method with derivatives obtained from the implicit
//! function theorem, starting from the closed-form null solution
//! (`G = delta_0` collapses the system to a quadratic in `s`); a damped
//! fixed-point iteration serves as fallback. Near the real axis damped
//! iteration alone stalls, which is why Newton is the primary path.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Read;

use crate::error::{Error, Result};
use crate::model::RatioSet;

type C64 = Complex64;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 200;
const RESIDUAL_CONTRACT: f64 = 1e-9;

/// One atom of a discrete spectral law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GAtom {
    pub lambda: f64,
    pub weight: f64,
}

/// Limiting spectral distribution of `R`: a point mass at zero under the
/// null, or a finite mixture of atoms under the alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SpectrumG {
    /// Point mass at zero (`m_G(z) = -1/z`).
    Null,
    Atoms(Vec<GAtom>),
}

impl SpectrumG {
    /// Validates weights (nonnegative, summing to one) and eigenvalues.
    pub fn atoms(atoms: Vec<GAtom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidInput("G needs at least one atom".into()));
        }
        let mut total = 0.0;
        for a in &atoms {
            if a.weight < 0.0 || !a.weight.is_finite() {
                return Err(Error::InvalidInput(format!("bad weight {}", a.weight)));
            }
            if a.lambda < 0.0 || !a.lambda.is_finite() {
                return Err(Error::InvalidInput(format!("bad eigenvalue {}", a.lambda)));
            }
            total += a.weight;
        }
        if (total - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "atom weights sum to {total}, expected 1"
            )));
        }
        Ok(SpectrumG::Atoms(atoms))
    }

    /// Parses `lambda,weight` CSV lines into an atomic law.
    pub fn parse_atoms_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut atoms = Vec::new();
        for record in rdr.records() {
            let record = record?;
            if record.len() != 2 {
                return Err(Error::InvalidInput(
                    "each G row must be `lambda,weight`".into(),
                ));
            }
            let lambda: f64 = record[0]
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad lambda `{}`", &record[0])))?;
            let weight: f64 = record[1]
                .parse()
                .map_err(|_| Error::InvalidInput(format!("bad weight `{}`", &record[1])))?;
            atoms.push(GAtom { lambda, weight });
        }
        SpectrumG::atoms(atoms)
    }

    /// Stieltjes transform `m_G(z) = sum w_k / (lambda_k - z)`.
    pub fn m_g(&self, z: C64) -> C64 {
        match self {
            SpectrumG::Null => -z.inv(),
            SpectrumG::Atoms(atoms) => atoms
                .iter()
                .map(|a| a.weight / (C64::new(a.lambda, 0.0) - z))
                .sum(),
        }
    }

    fn m_g_prime(&self, z: C64) -> C64 {
        match self {
            SpectrumG::Null => {
                let inv = z.inv();
                inv * inv
            }
            SpectrumG::Atoms(atoms) => atoms
                .iter()
                .map(|a| {
                    let d = C64::new(a.lambda, 0.0) - z;
                    a.weight / (d * d)
                })
                .sum(),
        }
    }
}

/// One solved grid point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LsdPoint {
    pub z_re: f64,
    pub z_im: f64,
    pub s: C64,
    pub m_h: C64,
    pub m_th: C64,
    /// Residuals of the three system equations at this point.
    pub residuals: [f64; 3],
}

/// Solution of the system on a grid at fixed height `eps` above the axis.
#[derive(Debug, Clone, Serialize)]
pub struct LsdSolution {
    pub eps: f64,
    pub points: Vec<LsdPoint>,
}

/// Density samples obtained by Stieltjes inversion.
#[derive(Debug, Clone, Serialize)]
pub struct DensityCurve {
    pub points: Vec<(f64, f64)>,
    /// Trapezoid mass of the samples over the grid.
    pub mass: f64,
}

/// Pointwise solver for the three-equation system.
#[derive(Debug, Clone)]
pub struct LsdSolver {
    ratios: RatioSet,
    g: SpectrumG,
}

/// Picks the quadratic root whose imaginary part matches the sign of
/// `Im(anchor)`, using the cancellation-free root pair.
fn quadratic_root_signed(a: C64, b: C64, c: C64, anchor: C64) -> C64 {
    let sign = if anchor.im >= 0.0 { 1.0 } else { -1.0 };
    if a.norm() < 1e-300 {
        return -c / b;
    }
    let disc = (b * b - 4.0 * a * c).sqrt();
    // q = -(b + sgn(Re(conj(b) * disc)) disc) / 2 avoids cancellation
    let q = if (b.conj() * disc).re >= 0.0 {
        -(b + disc) * 0.5
    } else {
        -(b - disc) * 0.5
    };
    let r1 = q / a;
    let r2 = if q.norm() > 0.0 { c / q } else { r1 };
    if r1.im * sign >= r2.im * sign {
        r1
    } else {
        r2
    }
}

impl LsdSolver {
    pub fn new(ratios: RatioSet, g: SpectrumG) -> Self {
        LsdSolver { ratios, g }
    }

    pub fn ratios(&self) -> &RatioSet {
        &self.ratios
    }

    fn beta(&self) -> f64 {
        self.ratios.c - self.ratios.c1
    }

    /// Null closed form for `m_Ht`: the point mass at zero gives `-1/u`.
    fn mth_null(u: C64) -> C64 {
        -u.inv()
    }

    /// Solves the innermost equation at argument `u`.
    fn solve_mth(&self, u: C64) -> Result<C64> {
        let c1 = self.ratios.c1;
        let beta = self.beta();
        let f = |m: C64| {
            let d = C64::new(1.0 - beta, 0.0) - beta * u * m;
            m * d / c1 - self.g.m_g(c1 * u / d)
        };
        let fp = |m: C64| {
            let d = C64::new(1.0 - beta, 0.0) - beta * u * m;
            let darg = c1 * u * beta * u / (d * d);
            (d - beta * u * m) / c1 - self.g.m_g_prime(c1 * u / d) * darg
        };
        self.newton(Self::mth_null(u), &f, &fp, u).or_else(|_| {
            self.damped_fixed_point(
                Self::mth_null(u),
                u,
                |m| {
                    let d = C64::new(1.0 - beta, 0.0) - beta * u * m;
                    c1 * self.g.m_g(c1 * u / d) / d
                },
                &f,
            )
        })
    }

    /// `m_Ht` and its derivative in the argument, by implicit differentiation.
    fn mth_with_prime(&self, u: C64) -> Result<(C64, C64)> {
        let c1 = self.ratios.c1;
        let beta = self.beta();
        let m = self.solve_mth(u)?;
        let d = C64::new(1.0 - beta, 0.0) - beta * u * m;
        let gp = self.g.m_g_prime(c1 * u / d);
        let df_dm = (d - beta * u * m) / c1 - gp * (c1 * u * beta * u / (d * d));
        let df_du = m * (-beta * m) / c1 - gp * (c1 / d + c1 * u * beta * m / (d * d));
        Ok((m, -df_du / df_dm))
    }

    /// Null (Marchenko-Pastur) closed form for `m_H` at argument `v`:
    /// `g1 v m^2 + (v - (1 - g1)) m + 1 = 0`.
    fn mh_null(&self, v: C64) -> C64 {
        let g1 = self.ratios.gamma1;
        quadratic_root_signed(g1 * v, v - (1.0 - g1), C64::new(1.0, 0.0), v)
    }

    /// Solves the middle equation at argument `v`.
    fn solve_mh(&self, v: C64) -> Result<C64> {
        let g1 = self.ratios.gamma1;
        let psi = |m: C64| {
            let t = 1.0 + g1 * m;
            t * (t * v - (1.0 - g1))
        };
        let f = |m: C64| -> Result<C64> {
            let t = 1.0 + g1 * m;
            Ok(m / t - self.solve_mth(psi(m))?)
        };
        let fp = |m: C64| -> Result<C64> {
            let t = 1.0 + g1 * m;
            let (_, mtp) = self.mth_with_prime(psi(m))?;
            let dpsi = 2.0 * g1 * t * v - g1 * (1.0 - g1);
            Ok((t * t).inv() - mtp * dpsi)
        };
        self.newton_fallible(self.mh_null(v), &f, &fp, v)
    }

    /// `m_H` and its derivative by implicit differentiation.
    fn mh_with_prime(&self, v: C64) -> Result<(C64, C64)> {
        let g1 = self.ratios.gamma1;
        let m = self.solve_mh(v)?;
        let t = 1.0 + g1 * m;
        let psi = t * (t * v - (1.0 - g1));
        let (_, mtp) = self.mth_with_prime(psi)?;
        let dpsi_dm = 2.0 * g1 * t * v - g1 * (1.0 - g1);
        let df_dm = (t * t).inv() - mtp * dpsi_dm;
        let df_dv = -mtp * (t * t);
        Ok((m, -df_dv / df_dm))
    }

    /// Null closed form for `s`: `z (g1 + g2 z) s^2 + (z (1+g2) - (1-g1)) s + 1 = 0`.
    pub fn s_null(&self, z: C64) -> C64 {
        let g1 = self.ratios.gamma1;
        let g2 = self.ratios.gamma2;
        quadratic_root_signed(
            z * (g1 + g2 * z),
            z * (1.0 + g2) - (1.0 - g1),
            C64::new(1.0, 0.0),
            z,
        )
    }

    /// Solves the full system at `z`, checking the residual contract and the
    /// sign condition on `Im s`.
    pub fn solve_lsd(&self, z: C64) -> Result<LsdPoint> {
        if z.im == 0.0 {
            return Err(Error::InvalidInput(
                "z must have nonzero imaginary part".into(),
            ));
        }
        let g2 = self.ratios.gamma2;
        let f = |s: C64| -> Result<C64> {
            let b = 1.0 + g2 * z * s;
            Ok(s / b - self.solve_mh(z * b)?)
        };
        let fp = |s: C64| -> Result<C64> {
            let b = 1.0 + g2 * z * s;
            let (_, mhp) = self.mh_with_prime(z * b)?;
            Ok((b * b).inv() - mhp * g2 * z * z)
        };
        let s = self.newton_fallible(self.s_null(z), &f, &fp, z)?;
        if s.im * z.im <= 0.0 {
            return Err(Error::Solver {
                z: format!("{z}"),
                residuals: [f64::NAN; 3],
            });
        }
        let m_h = self.solve_mh(z)?;
        let m_th = self.solve_mth(z)?;
        let residuals = self.residuals(z, s, m_h, m_th)?;
        if residuals
            .iter()
            .any(|r| r.is_nan() || *r > RESIDUAL_CONTRACT)
        {
            return Err(Error::Solver {
                z: format!("{z}"),
                residuals,
            });
        }
        Ok(LsdPoint {
            z_re: z.re,
            z_im: z.im,
            s,
            m_h,
            m_th,
            residuals,
        })
    }

    /// Residuals of the three equations given candidate values at `z`.
    fn residuals(&self, z: C64, s: C64, m_h: C64, m_th: C64) -> Result<[f64; 3]> {
        let g1 = self.ratios.gamma1;
        let g2 = self.ratios.gamma2;
        let c1 = self.ratios.c1;
        let beta = self.beta();
        let b = 1.0 + g2 * z * s;
        let r1 = (s / b - self.solve_mh(z * b)?).norm();
        let t = 1.0 + g1 * m_h;
        let r2 = (m_h / t - self.solve_mth(t * (t * z - (1.0 - g1)))?).norm();
        let d = C64::new(1.0 - beta, 0.0) - beta * z * m_th;
        let r3 = (m_th * d / c1 - self.g.m_g(c1 * z / d)).norm();
        Ok([r1, r2, r3])
    }

    /// Solves on a real grid at height `eps`.
    pub fn solve_grid(&self, xs: &[f64], eps: f64) -> Result<LsdSolution> {
        if !(1e-6..=1e-2).contains(&eps) {
            return Err(Error::InvalidInput(format!(
                "eps = {eps} outside [1e-6, 1e-2]"
            )));
        }
        let points = xs
            .iter()
            .map(|&x| self.solve_lsd(C64::new(x, eps)))
            .collect::<Result<Vec<_>>>()?;
        Ok(LsdSolution { eps, points })
    }

    fn newton<F, P>(&self, init: C64, f: &F, fp: &P, _anchor: C64) -> Result<C64>
    where
        F: Fn(C64) -> C64,
        P: Fn(C64) -> C64,
    {
        let mut m = init;
        for _ in 0..NEWTON_MAX_ITER {
            let val = f(m);
            if val.norm() < NEWTON_TOL {
                return Ok(m);
            }
            let deriv = fp(m);
            if deriv.norm() < 1e-300 || !deriv.is_finite() {
                break;
            }
            let mut step = val / deriv;
            let cap = 0.5 * m.norm().max(1.0);
            while step.norm() > cap {
                step *= 0.5;
            }
            m -= step;
        }
        if f(m).norm() < NEWTON_TOL {
            Ok(m)
        } else {
            Err(Error::Solver {
                z: format!("{m}"),
                residuals: [f(m).norm(), 0.0, 0.0],
            })
        }
    }

    fn newton_fallible<F, P>(&self, init: C64, f: &F, fp: &P, anchor: C64) -> Result<C64>
    where
        F: Fn(C64) -> Result<C64>,
        P: Fn(C64) -> Result<C64>,
    {
        let mut m = init;
        let mut last = f64::INFINITY;
        for _ in 0..NEWTON_MAX_ITER {
            let val = f(m)?;
            last = val.norm();
            if last < NEWTON_TOL {
                return Ok(m);
            }
            let deriv = fp(m)?;
            if deriv.norm() < 1e-300 || !deriv.is_finite() {
                break;
            }
            let mut step = val / deriv;
            let cap = 0.5 * m.norm().max(1.0);
            while step.norm() > cap {
                step *= 0.5;
            }
            m -= step;
        }
        // damped fixed-point fallback on the same residual
        for damping in [0.5, 0.1] {
            let mut m2 = init;
            for _ in 0..5000 {
                let val = f(m2)?;
                if val.norm() < NEWTON_TOL {
                    return Ok(m2);
                }
                m2 -= damping * val;
            }
        }
        Err(Error::Solver {
            z: format!("{anchor}"),
            residuals: [last, 0.0, 0.0],
        })
    }

    fn damped_fixed_point<G2, F>(&self, init: C64, anchor: C64, update: G2, f: &F) -> Result<C64>
    where
        G2: Fn(C64) -> C64,
        F: Fn(C64) -> C64,
    {
        for damping in [0.5, 0.1] {
            let mut m = init;
            for _ in 0..5000 {
                if f(m).norm() < NEWTON_TOL {
                    return Ok(m);
                }
                let next = update(m);
                m = m + damping * (next - m);
            }
        }
        Err(Error::Solver {
            z: format!("{anchor}"),
            residuals: [f(init).norm(), 0.0, 0.0],
        })
    }
}

/// Stieltjes inversion: `density(x) = Im s(x + i eps) / pi`, with samples
/// clamped at `-1e-6` tolerance.
pub fn invert_to_density(solution: &LsdSolution) -> Result<DensityCurve> {
    if solution.points.is_empty() {
        return Err(Error::InvalidInput("empty solution grid".into()));
    }
    let mut points = Vec::with_capacity(solution.points.len());
    for p in &solution.points {
        let d = p.s.im / std::f64::consts::PI;
        if d < -1e-6 {
            return Err(Error::Solver {
                z: format!("{}+{}i", p.z_re, p.z_im),
                residuals: p.residuals,
            });
        }
        points.push((p.z_re, d.max(0.0)));
    }
    let mut mass = 0.0;
    for w in points.windows(2) {
        mass += 0.5 * (w[1].1 + w[0].1) * (w[1].0 - w[0].0);
    }
    Ok(DensityCurve { points, mass })
}

/// Upper bound on the limiting spectrum of `W T^{-1}`:
/// `r = 2 [ (1 + sqrt(g1))^2 + lambda_max(R) (1 + sqrt(c1))^2 ] / (1 - sqrt(g2))^2`.
pub fn spectral_bound(ratios: &RatioSet, lambda_max_r: f64) -> f64 {
    let num =
        (1.0 + ratios.gamma1.sqrt()).powi(2) + lambda_max_r * (1.0 + ratios.c1.sqrt()).powi(2);
    2.0 * num / (1.0 - ratios.gamma2.sqrt()).powi(2)
}

/// The CLT kernel functions, evaluated pointwise from the solved `m_H`.
///
/// Derivatives are central finite differences in the complex plane with a
/// step proportional to `|z|`; no symbolic differentiation.
pub struct CltKernels {
    solver: LsdSolver,
    step_scale: f64,
}

impl CltKernels {
    pub fn new(ratios: RatioSet, g: SpectrumG) -> Self {
        CltKernels {
            solver: LsdSolver::new(ratios, g),
            step_scale: 1e-4,
        }
    }

    /// Overrides the relative finite-difference step (default `1e-4`).
    pub fn with_step_scale(mut self, scale: f64) -> Self {
        self.step_scale = scale;
        self
    }

    fn g1(&self) -> f64 {
        self.solver.ratios.gamma1
    }

    fn step(&self, z: C64) -> f64 {
        self.step_scale * z.norm().max(1e-8)
    }

    /// `delta(z) = gamma1 m_H(z)`.
    pub fn delta(&self, z: C64) -> Result<C64> {
        Ok(self.g1() * self.solver.solve_mh(z)?)
    }

    /// `delta~(z) = delta(z) - (1 - gamma1)/z`.
    pub fn delta_tilde(&self, z: C64) -> Result<C64> {
        Ok(self.delta(z)? - (1.0 - self.g1()) / z)
    }

    /// `eta(z) = (1 + delta)(1 + delta~)`.
    pub fn eta(&self, z: C64) -> Result<C64> {
        Ok((1.0 + self.delta(z)?) * (1.0 + self.delta_tilde(z)?))
    }

    fn central<F: Fn(C64) -> Result<C64>>(&self, f: F, z: C64) -> Result<C64> {
        let h = self.step(z);
        Ok((f(z + C64::new(h, 0.0))? - f(z - C64::new(h, 0.0))?) / (2.0 * h))
    }

    /// `xi(z) = delta'(z) / (z eta(z))'`.
    pub fn xi(&self, z: C64) -> Result<C64> {
        let dp = self.central(|w| self.delta(w), z)?;
        let zep = self.central(|w| Ok(w * self.eta(w)?), z)?;
        Ok(dp / zep)
    }

    /// `psi^{-1}(z) = 1/(1+delta) - 2 xi z + (1 - gamma1) xi / (1 + delta)`.
    pub fn psi_inv(&self, z: C64) -> Result<C64> {
        let delta = self.delta(z)?;
        let xi = self.xi(z)?;
        Ok((1.0 + delta).inv() - 2.0 * xi * z + (1.0 - self.g1()) * xi / (1.0 + delta))
    }

    pub fn psi(&self, z: C64) -> Result<C64> {
        Ok(self.psi_inv(z)?.inv())
    }

    /// `N(z) = xi'(z) psi^{-1}(z) / 2 - xi^2(z)`.
    pub fn n(&self, z: C64) -> Result<C64> {
        let xip = self.central(|w| self.xi(w), z)?;
        let xi = self.xi(z)?;
        Ok(xip * self.psi_inv(z)? * 0.5 - xi * xi)
    }

    /// `omega~(z) = z^2 xi(z) + (1 - gamma1) psi^{-1}(z) / (1 + delta)`.
    pub fn omega_tilde(&self, z: C64) -> Result<C64> {
        let delta = self.delta(z)?;
        Ok(z * z * self.xi(z)? + (1.0 - self.g1()) * self.psi_inv(z)? / (1.0 + delta))
    }

    /// The bias kernel `B(z)`.
    pub fn big_b(&self, z: C64) -> Result<C64> {
        let g1 = self.g1();
        let delta = self.delta(z)?;
        let dtilde = self.delta_tilde(z)?;
        let xi = self.xi(z)?;
        let psi_inv = self.psi_inv(z)?;
        let psi = psi_inv.inv();
        let n = self.n(z)?;
        let omega = self.omega_tilde(z)?;
        let inner = -omega * n * (1.0 - delta)
            + n / (1.0 + delta)
            + xi * psi_inv
            + z * xi * xi
            + z * z
                * dtilde
                * dtilde
                * (xi * xi - delta * n * (z - (1.0 - g1) / (1.0 + delta) + 1.0));
        Ok(psi * psi * inner)
    }

    /// `b(z) = 1 + gamma2 z s(z)`.
    pub fn b(&self, z: C64) -> Result<C64> {
        let point = self.solver.solve_lsd(z)?;
        Ok(1.0 + self.solver.ratios.gamma2 * z * point.s)
    }

    /// `b~(z) = 1 + gamma1 m_H(z)`.
    pub fn b_tilde(&self, z: C64) -> Result<C64> {
        Ok(1.0 + self.g1() * self.solver.solve_mh(z)?)
    }

    /// `underline m_Ht(z) = -(1 - c1)/z + c1 m_Ht(z)`.
    pub fn underline_m_th(&self, z: C64) -> Result<C64> {
        let c1 = self.solver.ratios.c1;
        Ok(-(1.0 - c1) / z + c1 * self.solver.solve_mth(z)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RatioSet;
    use crate::spectral::FisherLsd;
    use approx::assert_relative_eq;

    fn ratios_for(g1: f64, g2: f64) -> RatioSet {
        // consistent c1 via n chosen so that p1 = n g2 / (g1 + g2)
        let c1 = g2 / (g1 + g2);
        RatioSet::from_gammas(g1, g2, c1).unwrap()
    }

    #[test]
    fn null_reduction_matches_analytic_density() {
        for (g1, g2) in [(0.2, 0.2), (1.0, 3.0 / 7.0)] {
            let ratios = ratios_for(g1, g2);
            let solver = LsdSolver::new(
                ratios,
                SpectrumG::atoms(vec![GAtom {
                    lambda: 0.0,
                    weight: 1.0,
                }])
                .unwrap(),
            );
            let lsd = FisherLsd::new(&ratios).unwrap();
            let (a, b) = (lsd.a(), lsd.b());
            let lo = a + 0.05 * (b - a);
            let hi = b - 0.05 * (b - a);
            let mut sup: f64 = 0.0;
            for i in 0..40 {
                let x = lo + (hi - lo) * i as f64 / 39.0;
                let point = solver.solve_lsd(C64::new(x, 1e-4)).unwrap();
                let density = point.s.im / std::f64::consts::PI;
                sup = sup.max((density - lsd.q(x)).abs());
            }
            assert!(sup <= 1e-3, "g1={g1} g2={g2}: sup={sup}");
        }
    }

    #[test]
    fn residual_contract_and_sign_condition() {
        let ratios = ratios_for(1.0, 3.0 / 7.0);
        let solver = LsdSolver::new(
            ratios,
            SpectrumG::atoms(vec![
                GAtom {
                    lambda: 0.0,
                    weight: 0.7,
                },
                GAtom {
                    lambda: 2.0,
                    weight: 0.3,
                },
            ])
            .unwrap(),
        );
        for &x in &[0.5, 1.0, 3.0, 8.0] {
            let point = solver.solve_lsd(C64::new(x, 1e-3)).unwrap();
            assert!(point.s.im > 0.0);
            assert!(point.residuals.iter().all(|r| *r <= 1e-9));
        }
        // conjugate side flips the sign of Im s
        let below = solver.solve_lsd(C64::new(3.0, -1e-3)).unwrap();
        assert!(below.s.im < 0.0);
    }

    #[test]
    fn vanishing_weight_atom_recovers_null() {
        let ratios = ratios_for(1.0, 3.0 / 7.0);
        let null = LsdSolver::new(ratios, SpectrumG::Null);
        let pert = LsdSolver::new(
            ratios,
            SpectrumG::atoms(vec![
                GAtom {
                    lambda: 0.0,
                    weight: 1.0 - 1e-9,
                },
                GAtom {
                    lambda: 5.0,
                    weight: 1e-9,
                },
            ])
            .unwrap(),
        );
        for i in 0..20 {
            let z = C64::new(0.2 + i as f64 * 0.5, 0.05);
            let a = null.solve_lsd(z).unwrap().s;
            let b = pert.solve_lsd(z).unwrap().s;
            assert!((a - b).norm() <= 1e-7, "z={z}: {a} vs {b}");
        }
    }

    #[test]
    fn null_spectrum_variants_agree() {
        let ratios = ratios_for(0.5, 0.3);
        let a = LsdSolver::new(ratios, SpectrumG::Null);
        let b = LsdSolver::new(
            ratios,
            SpectrumG::atoms(vec![GAtom {
                lambda: 0.0,
                weight: 1.0,
            }])
            .unwrap(),
        );
        let z = C64::new(2.0, 1e-3);
        assert!((a.solve_lsd(z).unwrap().s - b.solve_lsd(z).unwrap().s).norm() < 1e-11);
    }

    #[test]
    fn inversion_mass_and_support() {
        let ratios = ratios_for(0.2, 0.2);
        let solver = LsdSolver::new(ratios, SpectrumG::Null);
        // support should be about [0.25, 4.0]
        let xs: Vec<f64> = (0..400).map(|i| 0.01 + i as f64 * 0.0125).collect();
        let solution = solver.solve_grid(&xs, 1e-4).unwrap();
        let curve = invert_to_density(&solution).unwrap();
        assert!((curve.mass - 1.0).abs() <= 5e-2);
        let inside = curve
            .points
            .iter()
            .find(|(x, _)| (*x - 1.0).abs() < 0.01)
            .unwrap();
        assert!(inside.1 > 0.1);
        let outside = curve.points.iter().find(|(x, _)| *x < 0.2).unwrap();
        assert!(outside.1 < 5e-3);
    }

    #[test]
    fn inversion_mass_with_atom() {
        let ratios = ratios_for(5.0, 0.3);
        let solver = LsdSolver::new(ratios, SpectrumG::Null);
        let lsd = FisherLsd::new(&ratios).unwrap();
        let xs: Vec<f64> = (0..500)
            .map(|i| lsd.a() * 0.7 + i as f64 * (lsd.b() * 1.1 - lsd.a() * 0.7) / 499.0)
            .collect();
        let solution = solver.solve_grid(&xs, 1e-4).unwrap();
        let curve = invert_to_density(&solution).unwrap();
        // continuous mass is 1 - mass0 = 1/gamma1
        assert!((curve.mass - 0.2).abs() <= 5e-2, "mass = {}", curve.mass);
    }

    #[test]
    fn inversion_bias_shrinks_with_eps() {
        let ratios = ratios_for(1.0, 3.0 / 7.0);
        let solver = LsdSolver::new(ratios, SpectrumG::Null);
        let lsd = FisherLsd::new(&ratios).unwrap();
        let x = 4.0;
        let d1 = solver.solve_lsd(C64::new(x, 2e-4)).unwrap().s.im / std::f64::consts::PI;
        let d2 = solver.solve_lsd(C64::new(x, 1e-4)).unwrap().s.im / std::f64::consts::PI;
        let q = lsd.q(x);
        assert!((d2 - q).abs() <= 0.6 * (d1 - q).abs() + 1e-9);
    }

    #[test]
    fn kernels_identities_hold_pointwise() {
        let ratios = ratios_for(1.0, 3.0 / 7.0);
        let k = CltKernels::new(ratios, SpectrumG::Null);
        for i in 0..20 {
            let z = C64::new(0.3 + 0.45 * i as f64, 0.3);
            let delta = k.delta(z).unwrap();
            let dtilde = k.delta_tilde(z).unwrap();
            // gamma1 = 1 makes delta~ = delta and eta = (1 + delta)^2
            assert!((dtilde - delta).norm() <= 1e-10);
            let eta = k.eta(z).unwrap();
            assert!((eta - (1.0 + delta) * (1.0 + dtilde)).norm() <= 1e-10);
            let psi_inv = k.psi_inv(z).unwrap();
            let xi = k.xi(z).unwrap();
            let reference = (1.0 + delta).inv() - 2.0 * xi * z;
            // gamma1 = 1 removes the third term
            assert!((psi_inv - reference).norm() <= 1e-10);
        }

        // gamma1 -> 0: delta vanishes and psi^{-1} -> 1
        let degenerate = RatioSet {
            gamma1: 0.0,
            gamma2: 0.3,
            h: 0.3f64.sqrt(),
            c1: 0.5,
            c: 0.65,
        };
        let k0 = CltKernels::new(degenerate, SpectrumG::Null);
        let z = C64::new(1.0, 0.5);
        assert!(k0.delta(z).unwrap().norm() <= 1e-12);
        assert!((k0.psi_inv(z).unwrap() - 1.0).norm() <= 1e-10);
    }

    #[test]
    fn xi_stable_under_step_halving() {
        let ratios = ratios_for(0.5, 0.3);
        let z = C64::new(1.5, 0.4);
        let a = CltKernels::new(ratios, SpectrumG::Null)
            .with_step_scale(1e-4)
            .xi(z)
            .unwrap();
        let b = CltKernels::new(ratios, SpectrumG::Null)
            .with_step_scale(5e-5)
            .xi(z)
            .unwrap();
        assert!((a - b).norm() / a.norm() <= 1e-5, "{a} vs {b}");
    }

    #[test]
    fn big_b_is_finite_on_test_grid() {
        let ratios = ratios_for(1.0, 3.0 / 7.0);
        let k = CltKernels::new(ratios, SpectrumG::Null);
        for i in 0..5 {
            let z = C64::new(1.0 + i as f64, 0.8);
            let b = k.big_b(z).unwrap();
            assert!(b.is_finite());
            assert!(k.b(z).unwrap().is_finite());
            assert!(k.b_tilde(z).unwrap().is_finite());
            // null case: m_Ht = -1/z, so underline m = -(1-c1)/z - c1/z = -1/z
            let um = k.underline_m_th(z).unwrap();
            assert!((um + z.inv()).norm() <= 1e-9);
        }
    }

    #[test]
    fn spectral_bound_values() {
        let ratios = ratios_for(1.0, 3.0 / 7.0);
        let r = spectral_bound(&ratios, 0.0);
        assert_relative_eq!(
            r,
            8.0 / (1.0 - (3.0f64 / 7.0).sqrt()).powi(2),
            epsilon = 1e-12
        );
        assert!((r - 67.078).abs() < 0.01);

        // gamma1, gamma2 -> 0 with lambda_max = 0 gives r -> 2
        let tiny = RatioSet {
            gamma1: 1e-12,
            gamma2: 1e-12,
            h: 0.0,
            c1: 0.5,
            c: 0.5,
        };
        assert_relative_eq!(spectral_bound(&tiny, 0.0), 2.0, epsilon = 1e-5);
    }

    #[test]
    fn g_atoms_validation() {
        assert!(SpectrumG::atoms(vec![]).is_err());
        assert!(SpectrumG::atoms(vec![GAtom {
            lambda: 1.0,
            weight: 0.5
        }])
        .is_err());
        assert!(SpectrumG::atoms(vec![GAtom {
            lambda: -1.0,
            weight: 1.0
        }])
        .is_err());
        let csv = "0.0,0.6\n2.0,0.4\n";
        let g = SpectrumG::parse_atoms_csv(csv.as_bytes()).unwrap();
        let z = C64::new(0.0, 1.0);
        let expect = 0.6 / (C64::new(0.0, 0.0) - z) + 0.4 / (C64::new(2.0, 0.0) - z);
        assert!((g.m_g(z) - expect).norm() < 1e-14);
    }

    #[test]
    fn rejects_real_z_and_bad_eps() {
        let ratios = ratios_for(1.0, 0.3);
        let solver = LsdSolver::new(ratios, SpectrumG::Null);
        assert!(solver.solve_lsd(C64::new(1.0, 0.0)).is_err());
        assert!(solver.solve_grid(&[1.0], 0.5).is_err());
    }
}
