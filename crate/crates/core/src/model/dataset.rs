use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `N` observations in `D` dimensions, stored row-major. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    n: usize,
    dim: usize,
    values: Vec<T>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(rows: Vec<Vec<T>>) -> Result<Self> {
        let n = rows.len();
        let dim = rows.first().map_or(0, Vec::len);
        if n == 0 || dim == 0 {
            return Err(Error::InvalidInput("dataset must have at least one row and one column".into()));
        }
        let mut values = Vec::with_capacity(n * dim);
        for (i, r) in rows.into_iter().enumerate() {
            if r.len() != dim {
                return Err(Error::InvalidInput(format!("row {i} has {} columns, expected {dim}", r.len())));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput(format!("row {i} has a non-finite value")));
            }
            values.extend(r);
        }
        Ok(Self { n, dim, values })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.values.chunks(self.dim)
    }

    /// Reads one observation per line. A first line that does not parse as
    /// numbers is treated as a header.
    pub fn from_csv_reader<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(reader);
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            if rec.iter().all(str::is_empty) {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(r) => rows.push(r.into_iter().map(T::of).collect()),
                Err(_) if line == 0 => continue,
                Err(e) => return Err(Error::InvalidInput(format!("line {}: {e}", line + 1))),
            }
        }
        Self::new(rows)
    }

    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    /// Writes headerless CSV with round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for r in self.rows() {
            let line: Vec<String> = r.iter().map(|x| format!("{:?}", x.as_f64())).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}
