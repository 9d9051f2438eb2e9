//! Problem dimensions, derived ratios and data containers.
//!
//! Everything downstream (calibration constants, spectral laws, the test
//! statistics themselves) is parametrized by the triple `(n, p, p1)` through
//! the derived ratios of [`RatioSet`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Sample size and block dimensions of the testing problem.
///
/// `p1` is the size of the first sub-vector, `p - p1` the size of the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub p: usize,
    pub p1: usize,
}

impl Dims {
    /// Builds a validated set of dimensions.
    pub fn new(n: usize, p: usize, p1: usize) -> Result<Self> {
        let dims = Dims { n, p, p1 };
        dims.validate()?;
        Ok(dims)
    }

    /// Checks every dimension invariant, naming the violated inequality.
    pub fn validate(&self) -> Result<()> {
        if self.p1 < 1 {
            return Err(Error::Dimension("1 <= p1 violated".into()));
        }
        if self.p1 >= self.p {
            return Err(Error::Dimension(format!(
                "p1 < p violated (p1 = {}, p = {})",
                self.p1, self.p
            )));
        }
        if self.p1 >= self.n {
            return Err(Error::Dimension(format!(
                "p1 < n violated (p1 = {}, n = {})",
                self.p1, self.n
            )));
        }
        if self.p - self.p1 >= self.n - self.p1 {
            return Err(Error::Dimension(format!(
                "p - p1 < n - p1 violated ({} < {} is false)",
                self.p - self.p1,
                self.n - self.p1
            )));
        }
        Ok(())
    }

    /// Dimension of the second block, `p - p1`.
    pub fn p2(&self) -> usize {
        self.p - self.p1
    }

    /// Derived ratios for these dimensions.
    pub fn ratios(&self) -> Result<RatioSet> {
        self.validate()?;
        let n = self.n as f64;
        let p = self.p as f64;
        let p1 = self.p1 as f64;
        let p2 = p - p1;
        let gamma1 = p2 / p1;
        let gamma2 = p2 / (n - p1);
        let h = (gamma1 + gamma2 - gamma1 * gamma2).sqrt();
        Ok(RatioSet {
            gamma1,
            gamma2,
            h,
            c1: p1 / n,
            c: p / n,
        })
    }
}

/// The dimension ratios driving every asymptotic formula.
///
/// `gamma1 = (p-p1)/p1`, `gamma2 = (p-p1)/(n-p1)`,
/// `h = sqrt(gamma1 + gamma2 - gamma1*gamma2)`, `c1 = p1/n`, `c = p/n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioSet {
    pub gamma1: f64,
    pub gamma2: f64,
    pub h: f64,
    pub c1: f64,
    pub c: f64,
}

impl RatioSet {
    /// Builds a ratio set directly from raw ratios. `h`, `c1` and `c` are
    /// derived; use this when working with limiting ratios rather than
    /// concrete dimensions.
    pub fn from_gammas(gamma1: f64, gamma2: f64, c1: f64) -> Result<Self> {
        // NaN inputs must fail each comparison and land in the error arm
        if gamma1.is_nan() || gamma1 <= 0.0 {
            return Err(Error::Dimension("gamma1 > 0 violated".into()));
        }
        if !(gamma2 > 0.0 && gamma2 < 1.0) {
            return Err(Error::Dimension("0 < gamma2 < 1 violated".into()));
        }
        if !(c1 > 0.0 && c1 < 1.0) {
            return Err(Error::Dimension("0 < c1 < 1 violated".into()));
        }
        let h = (gamma1 + gamma2 - gamma1 * gamma2).sqrt();
        // c2 = p2/n = gamma2 * (n - p1)/n = gamma2 * (1 - c1)
        let c = c1 + gamma2 * (1.0 - c1);
        Ok(RatioSet {
            gamma1,
            gamma2,
            h,
            c1,
            c,
        })
    }
}

/// How the unknown mean is handled when estimating the covariance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMode {
    /// The mean is known to be zero; covariance divisor is `n`.
    #[default]
    KnownZero,
    /// The mean is estimated; observations are centred and the divisor is
    /// `n - 1`, with all downstream formulas using effective sample size
    /// `n - 1` (substitution principle).
    Estimated,
}

impl MeanMode {
    /// Effective sample size entering the ratio and calibration formulas.
    pub fn effective_n(&self, n: usize) -> usize {
        match self {
            MeanMode::KnownZero => n,
            MeanMode::Estimated => n - 1,
        }
    }
}

impl FromStr for MeanMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "known-zero" | "zero" => Ok(MeanMode::KnownZero),
            "estimated" => Ok(MeanMode::Estimated),
            other => Err(Error::InvalidInput(format!("unknown mean mode `{other}`"))),
        }
    }
}

/// Dense data matrix with one observation per row (`n x p`).
#[derive(Debug, Clone)]
pub struct DataMatrix {
    obs: DMatrix<f64>,
}

impl DataMatrix {
    /// Wraps an `n x p` matrix of observations, checking finiteness.
    pub fn new(obs: DMatrix<f64>) -> Result<Self> {
        if obs.nrows() == 0 || obs.ncols() == 0 {
            return Err(Error::InvalidInput("empty data matrix".into()));
        }
        if obs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "data matrix contains non-finite entries".into(),
            ));
        }
        Ok(DataMatrix { obs })
    }

    /// Reads a numeric CSV. No header row by default; set `has_header` to
    /// skip one line. All rows must have the same number of fields.
    pub fn from_csv_reader<R: Read>(reader: R, has_header: bool, delimiter: u8) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .delimiter(delimiter)
            .flexible(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let row = record
                .iter()
                .map(|field| {
                    field.parse::<f64>().map_err(|_| {
                        Error::InvalidInput(format!("non-numeric CSV field `{field}`"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::InvalidInput("CSV contains no data rows".into()));
        }
        let ncols = rows[0].len();
        let nrows = rows.len();
        let obs = DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]);
        DataMatrix::new(obs)
    }

    pub fn from_csv_path<P: AsRef<Path>>(path: P, has_header: bool, delimiter: u8) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, has_header, delimiter)
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.obs.nrows()
    }

    /// Number of variables.
    pub fn p(&self) -> usize {
        self.obs.ncols()
    }

    /// Observations as rows.
    pub fn rows(&self) -> &DMatrix<f64> {
        &self.obs
    }
}

/// The four blocks of a partitioned `p x p` covariance matrix.
///
/// `s21` is kept implicitly as the transpose of `s12`.
#[derive(Debug, Clone)]
pub struct PartitionedCov {
    s11: DMatrix<f64>,
    s12: DMatrix<f64>,
    s22: DMatrix<f64>,
}

impl PartitionedCov {
    /// Partitions a symmetric `p x p` matrix at row/column `p1`.
    pub fn from_full(cov: &DMatrix<f64>, p1: usize) -> Result<Self> {
        let p = cov.nrows();
        if cov.ncols() != p {
            return Err(Error::InvalidInput("covariance matrix not square".into()));
        }
        if p1 == 0 || p1 >= p {
            return Err(Error::Dimension(format!(
                "partition index p1 = {p1} outside (0, {p})"
            )));
        }
        let p2 = p - p1;
        Ok(PartitionedCov {
            s11: cov.view((0, 0), (p1, p1)).into_owned(),
            s12: cov.view((0, p1), (p1, p2)).into_owned(),
            s22: cov.view((p1, p1), (p2, p2)).into_owned(),
        })
    }

    pub fn s11(&self) -> &DMatrix<f64> {
        &self.s11
    }

    pub fn s12(&self) -> &DMatrix<f64> {
        &self.s12
    }

    /// `s21 = s12^T`, materialized on demand.
    pub fn s21(&self) -> DMatrix<f64> {
        self.s12.transpose()
    }

    pub fn s22(&self) -> &DMatrix<f64> {
        &self.s22
    }

    pub fn p1(&self) -> usize {
        self.s11.nrows()
    }

    pub fn p2(&self) -> usize {
        self.s22.nrows()
    }
}

/// Identifier for one of the registered test statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum StatisticId {
    Lr,
    W,
    Lh,
    Bnp,
    Jiang,
    Yang,
}

impl StatisticId {
    pub const ALL: [StatisticId; 6] = [
        StatisticId::Lr,
        StatisticId::W,
        StatisticId::Lh,
        StatisticId::Bnp,
        StatisticId::Jiang,
        StatisticId::Yang,
    ];

    /// Lowercase registry name.
    pub fn name(&self) -> &'static str {
        match self {
            StatisticId::Lr => "lr",
            StatisticId::W => "wilks",
            StatisticId::Lh => "lh",
            StatisticId::Bnp => "bnp",
            StatisticId::Jiang => "jiang",
            StatisticId::Yang => "yang",
        }
    }
}

impl fmt::Display for StatisticId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let label = match self {
            StatisticId::Lr => "LR",
            StatisticId::W => "W",
            StatisticId::Lh => "LH",
            StatisticId::Bnp => "BNP",
            StatisticId::Jiang => "JIANG",
            StatisticId::Yang => "YANG",
        };
        f.write_str(label)
    }
}

impl FromStr for StatisticId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lr" => Ok(StatisticId::Lr),
            "w" | "wilks" => Ok(StatisticId::W),
            "lh" => Ok(StatisticId::Lh),
            "bnp" => Ok(StatisticId::Bnp),
            "jiang" => Ok(StatisticId::Jiang),
            "yang" => Ok(StatisticId::Yang),
            other => Err(Error::InvalidInput(format!("unknown statistic `{other}`"))),
        }
    }
}

/// Result of applying one test to one data set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic_id: StatisticId,
    pub raw: f64,
    pub standardized: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
}
