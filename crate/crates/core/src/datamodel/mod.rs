//! Core data types: observational datasets, truth sets, estimate records,
//! and the tags shared by every other module.

mod csv_io;
mod design;

use std::fmt;
use std::str::FromStr;

pub use csv_io::{
    fmt_f64, load_covariates_csv, load_dataset_csv, read_records_csv, read_truths_csv, write_covariates_csv,
    write_dataset_csv, write_records_csv, write_truths_csv, RECORD_COLUMNS,
};
pub use design::{expit, logit, DesignMatrix, Factor, Link, ModelSpec, ResolvedDesign, ResolvedModel, Term};

use crate::error::{Error, Result};

/// Covariate matrix: `nrows x ncols`, row-major, with column names.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    names: Vec<String>,
    data: Vec<f64>,
    nrows: usize,
}

impl Covariates {
    pub fn new(names: Vec<String>, data: Vec<f64>) -> Result<Self> {
        let ncols = names.len();
        if ncols == 0 {
            if !data.is_empty() {
                return Err(Error::InvalidDataset("data given for zero columns".into()));
            }
            return Ok(Self { names, data, nrows: 0 });
        }
        if !data.len().is_multiple_of(ncols) {
            return Err(Error::InvalidDataset(format!(
                "{} values do not fill rows of {} columns",
                data.len(),
                ncols
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::InvalidDataset(format!("duplicate column name '{name}'")));
            }
        }
        let nrows = data.len() / ncols;
        Ok(Self { names, data, nrows })
    }

    /// Covariate matrix with `nrows` rows and no columns.
    pub fn empty(nrows: usize) -> Self {
        Self {
            names: Vec::new(),
            data: Vec::new(),
            nrows,
        }
    }

    pub fn from_rows(names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        if let Some(bad) = rows.iter().position(|r| r.len() != names.len()) {
            return Err(Error::InvalidDataset(format!(
                "row {bad} has {} values, expected {}",
                rows[bad].len(),
                names.len()
            )));
        }
        let mut cov = Self::new(names, rows.concat())?;
        if cov.names.is_empty() {
            cov.nrows = rows.len();
        }
        Ok(cov)
    }

    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>]) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::InvalidDataset("names and columns differ in length".into()));
        }
        let nrows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != nrows) {
            return Err(Error::InvalidDataset("columns differ in length".into()));
        }
        let ncols = columns.len();
        let mut data = vec![0.0; nrows * ncols];
        for (j, col) in columns.iter().enumerate() {
            for (i, v) in col.iter().enumerate() {
                data[i * ncols + j] = *v;
            }
        }
        Self::new(names, data)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let p = self.ncols();
        &self.data[i * p..(i + 1) * p]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.ncols() + j]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.nrows).map(|i| self.get(i, j)).collect()
    }

    /// Rows `indices[0], indices[1], ...` stacked into a new matrix.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let p = self.ncols();
        let mut data = Vec::with_capacity(indices.len() * p);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            names: self.names.clone(),
            data,
            nrows: indices.len(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

impl OutcomeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutcomeKind::Continuous => "continuous",
            OutcomeKind::Binary => "binary",
        }
    }
}

/// An observational sample `(W, A, Y)`.
///
/// Fields are public so that invalid datasets can be represented and
/// diagnosed with [`validate_dataset`]; [`Dataset::new`] only admits valid
/// ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub w: Covariates,
    pub a: Vec<u8>,
    pub y: Vec<f64>,
    pub outcome_kind: OutcomeKind,
}

impl Dataset {
    pub fn new(w: Covariates, a: Vec<u8>, y: Vec<f64>, outcome_kind: OutcomeKind) -> Result<Self> {
        let d = Self {
            w,
            a,
            y,
            outcome_kind,
        };
        match validate_dataset(&d) {
            Ok(()) => Ok(d),
            Err(violations) => Err(Error::InvalidDataset(
                violations
                    .iter()
                    .map(ToString::to_string)
                    .collect::<Vec<_>>()
                    .join("; "),
            )),
        }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn n_treated(&self) -> usize {
        self.a.iter().filter(|&&a| a == 1).count()
    }

    /// Treatment as a 0.0/1.0 vector, the form GLM fitting consumes.
    pub fn treatment_f64(&self) -> Vec<f64> {
        self.a.iter().map(|&a| f64::from(a)).collect()
    }
}

/// One violated dataset invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Empty,
    LengthMismatch {
        component: &'static str,
        len: usize,
        expected: usize,
    },
    NonBinaryTreatment { row: usize, value: u8 },
    NonBinaryOutcome { row: usize, value: f64 },
    NonFiniteOutcome { row: usize },
    NonFiniteCovariate { row: usize, column: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "dataset has no rows"),
            Violation::LengthMismatch {
                component,
                len,
                expected,
            } => write!(f, "{component} has {len} rows, expected {expected}"),
            Violation::NonBinaryTreatment { row, value } => {
                write!(f, "non-binary treatment at row {row} (value {value})")
            }
            Violation::NonBinaryOutcome { row, value } => {
                write!(f, "non-binary outcome at row {row} (value {value})")
            }
            Violation::NonFiniteOutcome { row } => write!(f, "non-finite outcome at row {row}"),
            Violation::NonFiniteCovariate { row, column } => {
                write!(f, "non-finite covariate '{column}' at row {row}")
            }
        }
    }
}

/// Checks every [`Dataset`] invariant, returning all violations found.
/// Row indices are zero-based.
pub fn validate_dataset(d: &Dataset) -> std::result::Result<(), Vec<Violation>> {
    let mut out = Vec::new();
    let n = d.a.len();
    if n == 0 {
        out.push(Violation::Empty);
    }
    if d.y.len() != n {
        out.push(Violation::LengthMismatch {
            component: "y",
            len: d.y.len(),
            expected: n,
        });
    }
    if d.w.nrows() != n {
        out.push(Violation::LengthMismatch {
            component: "w",
            len: d.w.nrows(),
            expected: n,
        });
    }
    for (row, &value) in d.a.iter().enumerate() {
        if value > 1 {
            out.push(Violation::NonBinaryTreatment { row, value });
        }
    }
    for (row, &value) in d.y.iter().enumerate() {
        if !value.is_finite() {
            out.push(Violation::NonFiniteOutcome { row });
        } else if d.outcome_kind == OutcomeKind::Binary && value != 0.0 && value != 1.0 {
            out.push(Violation::NonBinaryOutcome { row, value });
        }
    }
    for row in 0..d.w.nrows() {
        for (j, v) in d.w.row(row).iter().enumerate() {
            if !v.is_finite() {
                out.push(Violation::NonFiniteCovariate {
                    row,
                    column: d.w.names()[j].clone(),
                });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

/// Plasmode truth set: source-sample averages of the true conditional
/// counterfactual means, and the contrasts derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSet {
    pub ey1: f64,
    pub ey0: f64,
    pub ate: f64,
    pub rr: Option<f64>,
    pub logcor: Option<f64>,
}

impl TruthSet {
    pub fn from_means(ey1: f64, ey0: f64, kind: OutcomeKind) -> Self {
        let rr = (kind == OutcomeKind::Binary && ey0 != 0.0).then(|| ey1 / ey0);
        Self {
            ey1,
            ey0,
            ate: ey1 - ey0,
            rr,
            logcor: None,
        }
    }

    pub fn value(&self, estimand: Estimand) -> Option<f64> {
        match estimand {
            Estimand::Ate => Some(self.ate),
            Estimand::Ey1 => Some(self.ey1),
            Estimand::Ey0 => Some(self.ey0),
            Estimand::Rr => self.rr,
            Estimand::Logcor => self.logcor,
        }
    }
}

/// A source dataset together with how it was generated and its truths.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDataset {
    pub data: Dataset,
    pub scenario_id: String,
    pub seed: u64,
    pub truths: TruthSet,
}

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $s:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $s),+ }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($s => Ok($name::$variant),)+
                    other => Err(Error::InvalidArgument(format!(
                        concat!("unknown ", stringify!($name), " '{}'"), other
                    ))),
                }
            }
        }
    };
}

string_enum!(
    /// The two plasmode resampling frameworks.
    Framework {
        SampleTreatment => "sample_treatment",
        GenerateTreatment => "generate_treatment",
    }
);

string_enum!(
    /// Estimator identifiers, in canonical output order.
    EstimatorId {
        Unadj => "unadj",
        Match => "match",
        Iptw => "iptw",
        IptwHt => "iptw_ht",
        Tmle => "tmle",
        GlmCm => "glm_cm",
        GlmPs => "glm_ps",
        Msm => "msm",
    }
);

string_enum!(
    Estimand {
        Ate => "ate",
        Rr => "rr",
        Logcor => "logcor",
        Ey1 => "ey1",
        Ey0 => "ey0",
    }
);

/// One replicate's output for one estimator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateRecord {
    pub replicate_index: usize,
    pub estimator: EstimatorId,
    pub framework: Framework,
    pub ey1: f64,
    pub ey0: f64,
    pub ate: f64,
    pub rr: Option<f64>,
    pub logcor: Option<f64>,
    pub converged: bool,
}

impl EstimateRecord {
    pub fn value(&self, estimand: Estimand) -> Option<f64> {
        let v = match estimand {
            Estimand::Ate => Some(self.ate),
            Estimand::Ey1 => Some(self.ey1),
            Estimand::Ey0 => Some(self.ey0),
            Estimand::Rr => self.rr,
            Estimand::Logcor => self.logcor,
        };
        v.filter(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(ns: &[&str]) -> Vec<String> {
        ns.iter().map(|s| s.to_string()).collect()
    }

    fn valid(n: usize) -> Dataset {
        let w = Covariates::from_columns(
            names(&["w1", "w2"]),
            &[
                (0..n).map(|i| i as f64).collect(),
                (0..n).map(|i| (i as f64).sin()).collect(),
            ],
        )
        .unwrap();
        let a = (0..n).map(|i| (i % 2) as u8).collect();
        let y = (0..n).map(|i| (i % 3) as f64).collect();
        Dataset::new(w, a, y, OutcomeKind::Continuous).unwrap()
    }

    #[test]
    fn consistent_dataset_is_ok() {
        assert_eq!(validate_dataset(&valid(10)), Ok(()));
    }

    #[test]
    fn non_binary_treatment_names_row() {
        let mut d = valid(3);
        d.a = vec![0, 1, 2];
        let v = validate_dataset(&d).unwrap_err();
        assert_eq!(v, vec![Violation::NonBinaryTreatment { row: 2, value: 2 }]);
        assert!(v[0].to_string().starts_with("non-binary treatment at row 2"));
    }

    #[test]
    fn nan_outcome_names_row() {
        let mut d = valid(10);
        d.y[5] = f64::NAN;
        let v = validate_dataset(&d).unwrap_err();
        assert_eq!(v, vec![Violation::NonFiniteOutcome { row: 5 }]);
        assert!(v[0].to_string().contains("row 5"));
    }

    #[test]
    fn reports_every_violation() {
        let mut d = valid(4);
        d.y.pop();
        d.a[0] = 7;
        d.outcome_kind = OutcomeKind::Binary;
        let v = validate_dataset(&d).unwrap_err();
        assert!(v.contains(&Violation::LengthMismatch { component: "y", len: 3, expected: 4 }));
        assert!(v.contains(&Violation::NonBinaryTreatment { row: 0, value: 7 }));
        // y = [0, 1, 2]: row 2 is not binary
        assert!(v.contains(&Violation::NonBinaryOutcome { row: 2, value: 2.0 }));
    }

    #[test]
    fn truth_set_contrasts() {
        let t = TruthSet::from_means(0.3, 0.2, OutcomeKind::Binary);
        assert!((t.ate - 0.1).abs() < 1e-15);
        assert!((t.rr.unwrap() - 1.5).abs() < 1e-12);
        let c = TruthSet::from_means(12.0, 10.0, OutcomeKind::Continuous);
        assert_eq!(c.rr, None);
        assert_eq!(TruthSet::from_means(0.1, 0.0, OutcomeKind::Binary).rr, None);
    }

    #[test]
    fn tags_round_trip() {
        for e in EstimatorId::ALL {
            assert_eq!(e.as_str().parse::<EstimatorId>().unwrap(), *e);
        }
        for f in Framework::ALL {
            assert_eq!(f.to_string().parse::<Framework>().unwrap(), *f);
        }
        assert!("bogus".parse::<Estimand>().is_err());
    }

    #[test]
    fn select_rows_copies_rows() {
        let c = Covariates::from_rows(names(&["a", "b"]), &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let s = c.select_rows(&[1, 1, 0]);
        assert_eq!(s.data(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
        assert_eq!(s.nrows(), 3);
    }
}
