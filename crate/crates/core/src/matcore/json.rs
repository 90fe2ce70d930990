use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{CMat, C64};

/// Interchange format: `{ "rows": n, "cols": m, "re": [...], "im": [...] }`,
/// entries in row-major order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("malformed matrix JSON at line {line}, column {column}: {msg}")]
    Syntax {
        line: usize,
        column: usize,
        msg: String,
    },
    #[error("field `{field}` has {got} entries, expected rows*cols = {expected}")]
    Length {
        field: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("matrix must have positive dimensions, got {rows}x{cols}")]
    Empty { rows: usize, cols: usize },
    #[error("entry {index} of `{field}` is not finite")]
    NotFinite { field: &'static str, index: usize },
}

impl MatrixJson {
    pub fn from_matrix(m: &CMat) -> Self {
        let (rows, cols) = m.shape();
        let mut re = Vec::with_capacity(rows * cols);
        let mut im = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                re.push(m[(i, j)].re);
                im.push(m[(i, j)].im);
            }
        }
        MatrixJson { rows, cols, re, im }
    }

    pub fn to_matrix(&self) -> Result<CMat, SchemaError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(SchemaError::Empty {
                rows: self.rows,
                cols: self.cols,
            });
        }
        let expected = self.rows * self.cols;
        for (field, v) in [("re", &self.re), ("im", &self.im)] {
            if v.len() != expected {
                return Err(SchemaError::Length {
                    field,
                    got: v.len(),
                    expected,
                });
            }
            if let Some(index) = v.iter().position(|x| !x.is_finite()) {
                return Err(SchemaError::NotFinite { field, index });
            }
        }
        Ok(CMat::from_fn(self.rows, self.cols, |i, j| {
            let idx = i * self.cols + j;
            C64::new(self.re[idx], self.im[idx])
        }))
    }

    pub fn parse(text: &str) -> Result<CMat, SchemaError> {
        let parsed: MatrixJson = serde_json::from_str(text).map_err(|e| SchemaError::Syntax {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        parsed.to_matrix()
    }

    pub fn render(m: &CMat) -> String {
        serde_json::to_string_pretty(&MatrixJson::from_matrix(m)).expect("plain data serialises")
    }
}
