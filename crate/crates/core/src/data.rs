//! Observations `(x_i, y_i)` and CSV ingestion.

use nalgebra::{DMatrix, DVector};
use std::path::Path;

use crate::error::{GsimError, Result};
use crate::expfam::Family;

/// Covariates (no intercept column), response and family.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: DMatrix<f64>,
    y: DVector<f64>,
    family: Family,
    names: Vec<String>,
}

impl Dataset {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, family: Family) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(x, y, family, names)
    }

    pub fn with_names(
        x: DMatrix<f64>,
        y: DVector<f64>,
        family: Family,
        names: Vec<String>,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(GsimError::Data(format!(
                "{} covariate rows but {} responses",
                x.nrows(),
                y.len()
            )));
        }
        if names.len() != x.ncols() {
            return Err(GsimError::Data("one name per covariate column is required".into()));
        }
        if x.ncols() == 0 {
            return Err(GsimError::Data("at least one covariate is required".into()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GsimError::Data("non-finite covariate value".into()));
        }
        for (j, col) in x.column_iter().enumerate() {
            let first = col[0];
            if col.iter().all(|&v| v == first) {
                return Err(GsimError::Data(format!(
                    "covariate `{}` is constant; the model has no intercept",
                    names[j]
                )));
            }
        }
        for (i, &v) in y.iter().enumerate() {
            family
                .validate_response(v)
                .map_err(|e| GsimError::Data(format!("row {}: {e}", i + 1)))?;
        }
        Ok(Self { x, y, family, names })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Same observations with the covariate columns permuted:
    /// new column `k` is old column `perm[k]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Result<Self> {
        let d = self.d();
        let mut seen = vec![false; d];
        if perm.len() != d || perm.iter().any(|&p| p >= d || std::mem::replace(&mut seen[p], true)) {
            return Err(GsimError::Usage("not a permutation of the covariates".into()));
        }
        let x = DMatrix::from_fn(self.n(), d, |i, k| self.x[(i, perm[k])]);
        let names = perm.iter().map(|&p| self.names[p].clone()).collect();
        Self::with_names(x, self.y.clone(), self.family, names)
    }

    /// Cheap content hash used to check that two fits saw the same data.
    pub fn fingerprint(&self) -> u64 {
        const PRIME: u64 = 0x0000_0100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: f64| {
            for b in v.to_bits().to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        eat(self.n() as f64);
        self.y.iter().for_each(|&v| eat(v));
        self.x.iter().for_each(|&v| eat(v));
        h
    }

    /// Reads a comma-separated file with a header row.
    ///
    /// `covariates = None` takes every column except the response.
    pub fn from_csv_path(
        path: &Path,
        response: &str,
        covariates: Option<&[String]>,
        family: Family,
    ) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, response, covariates, family)
    }

    pub fn from_csv_reader<R: std::io::Read>(
        reader: R,
        response: &str,
        covariates: Option<&[String]>,
        family: Family,
    ) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(|s| s.trim().to_string()).collect();
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| GsimError::Data(format!("line 1: column `{name}` not found")))
        };
        let y_col = find(response)?;
        let x_cols: Vec<usize> = match covariates {
            Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
            None => (0..header.len()).filter(|&j| j != y_col).collect(),
        };
        if x_cols.contains(&y_col) {
            return Err(GsimError::Data("the response cannot also be a covariate".into()));
        }
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (r, rec) in rdr.records().enumerate() {
            let line = r + 2;
            let rec = rec?;
            let cell = |j: usize| -> Result<f64> {
                let raw = rec.get(j).unwrap_or("").trim();
                raw.parse::<f64>().map_err(|_| {
                    GsimError::Data(format!(
                        "line {line}: non-numeric value `{raw}` in column `{}`",
                        header[j]
                    ))
                })
            };
            let yv = cell(y_col)?;
            family
                .validate_response(yv)
                .map_err(|e| GsimError::Data(format!("line {line}: {e}")))?;
            ys.push(yv);
            for &j in &x_cols {
                xs.push(cell(j)?);
            }
        }
        let n = ys.len();
        if n == 0 {
            return Err(GsimError::Data("no data rows".into()));
        }
        let x = DMatrix::from_row_slice(n, x_cols.len(), &xs);
        let names = x_cols.iter().map(|&j| header[j].clone()).collect();
        Self::with_names(x, DVector::from_vec(ys), family, names)
    }

    /// Writes the dataset as CSV with covariate columns followed by `y`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut head = self.names.clone();
        head.push("y".into());
        w.write_record(&head)?;
        for i in 0..self.n() {
            let mut row: Vec<String> = (0..self.d()).map(|j| format!("{}", self.x[(i, j)])).collect();
            row.push(format!("{}", self.y[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_roundtrip_and_errors() {
        let text = "a,b,resp\n1,2,0\n2,1.5,1\n3,0.5,1\n";
        let ds = Dataset::from_csv_reader(text.as_bytes(), "resp", None, Family::Binomial).unwrap();
        assert_eq!(ds.n(), 3);
        assert_eq!(ds.names(), &["a".to_string(), "b".to_string()]);

        let bad = "a,b,resp\n1,2,0\n2,oops,1\n";
        let err = Dataset::from_csv_reader(bad.as_bytes(), "resp", None, Family::Binomial).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let bady = "a,b,resp\n1,2,0\n2,3,2\n";
        let err = Dataset::from_csv_reader(bady.as_bytes(), "resp", None, Family::Binomial).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");

        let missing = Dataset::from_csv_reader(text.as_bytes(), "zzz", None, Family::Gaussian);
        assert!(matches!(missing, Err(GsimError::Data(_))));
    }

    #[test]
    fn constant_column_rejected() {
        let text = "a,b,y\n1,2,0.1\n1,1.5,1\n1,0.5,1\n";
        assert!(Dataset::from_csv_reader(text.as_bytes(), "y", None, Family::Gaussian).is_err());
    }
}
