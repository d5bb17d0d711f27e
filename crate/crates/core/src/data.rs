//! Design matrix and dataset containers shared by the fitting, estimation
//! and simulation code.

use crate::error::{Error, Result};

/// Column-major n x p design matrix with column names.
///
/// When `has_intercept` is true the first column is identically 1 and is
/// treated as unpenalized by the lasso solvers. All entries must be finite;
/// this is enforced at construction so downstream numeric code can trust the
/// storage.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    n: usize,
    p: usize,
    /// column-major storage, `cols[j*n..(j+1)*n]` is column j
    cols: Vec<f64>,
    names: Vec<String>,
    has_intercept: bool,
}

impl DesignMatrix {
    /// Build from a list of columns. `names` may be empty, in which case
    /// columns are named `x1..xp` (with `(intercept)` for an intercept).
    pub fn from_columns(
        columns: Vec<Vec<f64>>,
        names: Vec<String>,
        has_intercept: bool,
    ) -> Result<Self> {
        let p = columns.len();
        if p == 0 {
            return Err(Error::Data("design matrix needs at least one column".into()));
        }
        let n = columns[0].len();
        if n < 2 {
            return Err(Error::Data(format!("design matrix needs n >= 2 rows, got {n}")));
        }
        for (j, c) in columns.iter().enumerate() {
            if c.len() != n {
                return Err(Error::Data(format!(
                    "column {j} has {} rows, expected {n}",
                    c.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!("column {j} contains non-finite values")));
            }
        }
        if has_intercept && columns[0].iter().any(|&v| v != 1.0) {
            return Err(Error::Data(
                "has_intercept is set but column 0 is not constant 1".into(),
            ));
        }
        let names = if names.is_empty() {
            (0..p)
                .map(|j| {
                    if has_intercept && j == 0 {
                        "(intercept)".to_string()
                    } else {
                        format!("x{}", if has_intercept { j } else { j + 1 })
                    }
                })
                .collect()
        } else {
            if names.len() != p {
                return Err(Error::Data(format!(
                    "{} names for {p} columns",
                    names.len()
                )));
            }
            names
        };
        let mut cols = Vec::with_capacity(n * p);
        for c in &columns {
            cols.extend_from_slice(c);
        }
        Ok(DesignMatrix { n, p, cols, names, has_intercept })
    }

    /// Build from row-major data (each inner slice is a row).
    pub fn from_rows(rows: &[Vec<f64>], names: Vec<String>, has_intercept: bool) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Data("design matrix needs at least one row".into()));
        }
        let p = rows[0].len();
        let mut columns = vec![Vec::with_capacity(rows.len()); p];
        for (i, r) in rows.iter().enumerate() {
            if r.len() != p {
                return Err(Error::Data(format!("row {i} has {} entries, expected {p}", r.len())));
            }
            for (j, &v) in r.iter().enumerate() {
                columns[j].push(v);
            }
        }
        Self::from_columns(columns, names, has_intercept)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn has_intercept(&self) -> bool {
        self.has_intercept
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.cols[j * self.n..(j + 1) * self.n]
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.cols[j * self.n + i]
    }

    /// Row-wise dot products X * beta. Zero coefficients are skipped, so the
    /// cost is O(n * #nonzero).
    pub fn xdot(&self, beta: &[f64]) -> Vec<f64> {
        assert_eq!(beta.len(), self.p, "coefficient length mismatch");
        let mut out = vec![0.0; self.n];
        for (j, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                let col = self.col(j);
                for (o, &x) in out.iter_mut().zip(col) {
                    *o += b * x;
                }
            }
        }
        out
    }

    /// Returns a copy with an intercept column prepended (no-op when one is
    /// already present).
    pub fn with_intercept(&self) -> Self {
        if self.has_intercept {
            return self.clone();
        }
        let mut cols = Vec::with_capacity(self.n * (self.p + 1));
        cols.extend(std::iter::repeat(1.0).take(self.n));
        cols.extend_from_slice(&self.cols);
        let mut names = Vec::with_capacity(self.p + 1);
        names.push("(intercept)".to_string());
        names.extend(self.names.iter().cloned());
        DesignMatrix { n: self.n, p: self.p + 1, cols, names, has_intercept: true }
    }

    /// Copy of the rows where `keep` is true.
    pub fn filter_rows(&self, keep: &[bool]) -> Result<Self> {
        if keep.len() != self.n {
            return Err(Error::InvalidArgument("row mask length mismatch".into()));
        }
        let m = keep.iter().filter(|&&k| k).count();
        if m < 2 {
            return Err(Error::Data(format!("row subset needs n >= 2 rows, got {m}")));
        }
        let mut cols = Vec::with_capacity(m * self.p);
        for j in 0..self.p {
            let c = self.col(j);
            cols.extend(c.iter().zip(keep).filter(|(_, &k)| k).map(|(&v, _)| v));
        }
        Ok(DesignMatrix {
            n: m,
            p: self.p,
            cols,
            names: self.names.clone(),
            has_intercept: self.has_intercept,
        })
    }
}

/// Observed data: covariates, binary treatment and outcome.
///
/// The outcome may be NaN on rows where it is never read (the simulation
/// harness leaves the unobserved potential outcome undefined); every
/// estimator validates finiteness of the outcome values it actually uses.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub design: DesignMatrix,
    pub treat: Vec<bool>,
    pub y: Vec<f64>,
}

impl Dataset {
    pub fn new(design: DesignMatrix, treat: Vec<bool>, y: Vec<f64>) -> Result<Self> {
        if treat.len() != design.n() || y.len() != design.n() {
            return Err(Error::Data(format!(
                "length mismatch: design has {} rows, treat {}, y {}",
                design.n(),
                treat.len(),
                y.len()
            )));
        }
        Ok(Dataset { design, treat, y })
    }

    pub fn n(&self) -> usize {
        self.design.n()
    }

    pub fn n_treated(&self) -> usize {
        self.treat.iter().filter(|&&t| t).count()
    }

    /// Both treatment classes present?
    pub fn has_both_classes(&self) -> bool {
        let nt = self.n_treated();
        nt > 0 && nt < self.n()
    }
}
