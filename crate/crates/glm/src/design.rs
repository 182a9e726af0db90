//! Model specifications, the in-memory analysis table and design matrices.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{GlmError, Result};
use crate::family::Family;

/// Column-oriented table of numeric variables plus string label columns
/// (used for cluster identifiers).
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    n_rows: usize,
    numeric: BTreeMap<String, Vec<f64>>,
    labels: BTreeMap<String, Vec<String>>,
}

impl Dataset {
    pub fn new(n_rows: usize) -> Self {
        Self {
            n_rows,
            ..Self::default()
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn add_numeric(&mut self, name: impl Into<String>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if values.len() != self.n_rows {
            return Err(GlmError::LengthMismatch {
                column: name,
                expected: self.n_rows,
                found: values.len(),
            });
        }
        self.numeric.insert(name, values);
        Ok(())
    }

    pub fn add_labels(&mut self, name: impl Into<String>, values: Vec<String>) -> Result<()> {
        let name = name.into();
        if values.len() != self.n_rows {
            return Err(GlmError::LengthMismatch {
                column: name,
                expected: self.n_rows,
                found: values.len(),
            });
        }
        self.labels.insert(name, values);
        Ok(())
    }

    pub fn numeric(&self, name: &str) -> Result<&[f64]> {
        self.numeric
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| GlmError::UnknownColumn(name.to_string()))
    }

    pub fn labels(&self, name: &str) -> Result<&[String]> {
        self.labels
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| GlmError::UnknownColumn(name.to_string()))
    }

    pub fn has_numeric(&self, name: &str) -> bool {
        self.numeric.contains_key(name)
    }

    /// Copy of the table restricted to the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        let numeric = self
            .numeric
            .iter()
            .map(|(k, v)| (k.clone(), rows.iter().map(|&i| v[i]).collect()))
            .collect();
        let labels = self
            .labels
            .iter()
            .map(|(k, v)| (k.clone(), rows.iter().map(|&i| v[i].clone()).collect()))
            .collect();
        Dataset {
            n_rows: rows.len(),
            numeric,
            labels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Term {
    Main(String),
    Interaction(String, String),
}

impl Term {
    pub fn main(name: impl Into<String>) -> Self {
        Term::Main(name.into())
    }

    pub fn interaction(a: impl Into<String>, b: impl Into<String>) -> Self {
        Term::Interaction(a.into(), b.into())
    }

    pub fn label(&self) -> String {
        match self {
            Term::Main(a) => a.clone(),
            Term::Interaction(a, b) => format!("{a}:{b}"),
        }
    }

    fn references(&self, var: &str) -> bool {
        match self {
            Term::Main(a) => a == var,
            Term::Interaction(a, b) => a == var || b == var,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub response: String,
    pub terms: Vec<Term>,
    /// Label column holding cluster ids. `None` treats every row as its own
    /// cluster.
    pub cluster: Option<String>,
    pub intercept: bool,
}

impl ModelSpec {
    pub fn new(family: Family, response: impl Into<String>) -> Self {
        Self {
            family,
            response: response.into(),
            terms: Vec::new(),
            cluster: None,
            intercept: true,
        }
    }

    pub fn term(mut self, term: Term) -> Self {
        self.terms.push(term);
        self
    }

    pub fn main(self, name: impl Into<String>) -> Self {
        self.term(Term::main(name))
    }

    pub fn interaction(self, a: impl Into<String>, b: impl Into<String>) -> Self {
        self.term(Term::interaction(a, b))
    }

    pub fn cluster(mut self, name: impl Into<String>) -> Self {
        self.cluster = Some(name.into());
        self
    }

    pub fn without_intercept(mut self) -> Self {
        self.intercept = false;
        self
    }

    /// Interaction terms must reference declared main effects; labels must be
    /// unique.
    pub fn validate(&self) -> Result<()> {
        let mains: Vec<&str> = self
            .terms
            .iter()
            .filter_map(|t| match t {
                Term::Main(a) => Some(a.as_str()),
                _ => None,
            })
            .collect();
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.terms {
            if let Term::Interaction(a, b) = t {
                for v in [a, b] {
                    if !mains.contains(&v.as_str()) {
                        return Err(GlmError::InvalidSpec(format!(
                            "interaction `{}` references `{v}`, which is not a main effect",
                            t.label()
                        )));
                    }
                }
                if a == b {
                    return Err(GlmError::InvalidSpec(format!(
                        "interaction `{}` repeats a variable",
                        t.label()
                    )));
                }
            }
            if !seen.insert(t.label()) {
                return Err(GlmError::InvalidSpec(format!("duplicate term `{}`", t.label())));
            }
        }
        if self.terms.is_empty() && !self.intercept {
            return Err(GlmError::InvalidSpec("model has no columns".into()));
        }
        Ok(())
    }
}

/// One column of the design matrix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DesignColumn {
    Intercept,
    Term(Term),
}

impl DesignColumn {
    pub fn label(&self) -> String {
        match self {
            DesignColumn::Intercept => "(Intercept)".to_string(),
            DesignColumn::Term(t) => t.label(),
        }
    }

    pub fn references(&self, var: &str) -> bool {
        match self {
            DesignColumn::Intercept => false,
            DesignColumn::Term(t) => t.references(var),
        }
    }
}

/// Overrides applied while evaluating design rows, used for counterfactual
/// predictions.
#[derive(Debug, Clone, Copy)]
pub enum Override<'a> {
    None,
    /// Set a variable everywhere it appears, including inside interactions.
    Variable(&'a str, f64),
    /// Set one design column (by label) directly.
    Column(&'a str, f64),
}

pub(crate) fn columns_for(spec: &ModelSpec) -> Vec<DesignColumn> {
    let mut cols = Vec::with_capacity(spec.terms.len() + 1);
    if spec.intercept {
        cols.push(DesignColumn::Intercept);
    }
    cols.extend(spec.terms.iter().cloned().map(DesignColumn::Term));
    cols
}

/// Builds the design matrix for `columns` over all rows of `data`.
pub fn build_design(
    columns: &[DesignColumn],
    data: &Dataset,
    ov: Override<'_>,
) -> Result<DMatrix<f64>> {
    let n = data.n_rows();
    let mut x = DMatrix::<f64>::zeros(n, columns.len());
    for (j, col) in columns.iter().enumerate() {
        if let Override::Column(label, v) = ov {
            if col.label() == label {
                x.column_mut(j).fill(v);
                continue;
            }
        }
        match col {
            DesignColumn::Intercept => x.column_mut(j).fill(1.0),
            DesignColumn::Term(Term::Main(a)) => {
                let va = variable(data, a, ov)?;
                for i in 0..n {
                    x[(i, j)] = va.get(i);
                }
            }
            DesignColumn::Term(Term::Interaction(a, b)) => {
                let va = variable(data, a, ov)?;
                let vb = variable(data, b, ov)?;
                for i in 0..n {
                    x[(i, j)] = va.get(i) * vb.get(i);
                }
            }
        }
    }
    for (j, col) in columns.iter().enumerate() {
        if let Some(i) = (0..n).find(|&i| !x[(i, j)].is_finite()) {
            return Err(GlmError::NonFiniteCovariate {
                column: col.label(),
                row: i,
            });
        }
    }
    Ok(x)
}

enum VarView<'a> {
    Data(&'a [f64]),
    Constant(f64),
}

impl VarView<'_> {
    fn get(&self, i: usize) -> f64 {
        match self {
            VarView::Data(v) => v[i],
            VarView::Constant(c) => *c,
        }
    }
}

fn variable<'a>(data: &'a Dataset, name: &str, ov: Override<'_>) -> Result<VarView<'a>> {
    if let Override::Variable(var, v) = ov {
        if var == name {
            return Ok(VarView::Constant(v));
        }
    }
    data.numeric(name).map(VarView::Data)
}

/// Indices of columns that are (numerically) linear combinations of the
/// columns before them, found by modified Gram-Schmidt.
pub fn collinear_columns(x: &DMatrix<f64>) -> Vec<usize> {
    const REL_TOL: f64 = 1e-9;
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..x.ncols() {
        let mut v: Vec<f64> = x.column(j).iter().copied().collect();
        let norm0 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        for q in &basis {
            let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= dot * qi;
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm0 == 0.0 || norm <= REL_TOL * norm0 {
            dependent.push(j);
        } else {
            v.iter_mut().for_each(|a| *a /= norm);
            basis.push(v);
        }
    }
    dependent
}
