//! Design terms, model specifications and design matrices.
//!
//! Term syntax (used in config files and `Display` output):
//!
//! | text        | meaning                               |
//! |-------------|---------------------------------------|
//! | `A`         | treatment indicator                   |
//! | `W1`        | covariate `W1`                        |
//! | `W1^2`      | square of `W1`                        |
//! | `W1*W2`     | product of factors (`A` allowed)      |
//! | `W1>0.2`    | indicator `1{W1 > 0.2}`               |
//! | `W4<0.2`    | indicator `1{W4 < 0.2}`               |

use std::fmt;
use std::str::FromStr;

use super::{Covariates, Dataset, OutcomeKind};
use crate::error::{Error, Result};

/// Name reserved for the treatment indicator in term syntax.
pub const TREATMENT: &str = "A";

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Link {
    Identity,
    Logit,
}

impl Link {
    #[inline]
    pub fn inverse(self, eta: f64) -> f64 {
        match self {
            Link::Identity => eta,
            Link::Logit => expit(eta),
        }
    }

    pub fn outcome_kind(self) -> OutcomeKind {
        match self {
            Link::Identity => OutcomeKind::Continuous,
            Link::Logit => OutcomeKind::Binary,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Link::Identity => "identity",
            Link::Logit => "logit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    Treatment,
    Covariate(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Term {
    Treatment,
    Covariate(String),
    Square(String),
    Product(Vec<Factor>),
    Indicator {
        covariate: String,
        cutoff: f64,
        above: bool,
    },
}

impl Term {
    pub fn covariate(name: &str) -> Self {
        Term::Covariate(name.to_string())
    }

    pub fn involves_treatment(&self) -> bool {
        match self {
            Term::Treatment => true,
            Term::Product(fs) => fs.contains(&Factor::Treatment),
            _ => false,
        }
    }

    /// Covariate names this term reads.
    pub fn covariates(&self) -> Vec<&str> {
        match self {
            Term::Treatment => vec![],
            Term::Covariate(c) | Term::Square(c) => vec![c],
            Term::Indicator { covariate, .. } => vec![covariate],
            Term::Product(fs) => fs
                .iter()
                .filter_map(|f| match f {
                    Factor::Covariate(c) => Some(c.as_str()),
                    Factor::Treatment => None,
                })
                .collect(),
        }
    }
}

fn valid_name(s: &str) -> bool {
    !s.is_empty()
        && s.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '.')
        && s != TREATMENT
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let s = text.trim();
        let bad = || Error::BadTerm(text.to_string());
        if s == TREATMENT {
            return Ok(Term::Treatment);
        }
        if s.contains('*') {
            let factors = s
                .split('*')
                .map(|f| {
                    let f = f.trim();
                    if f == TREATMENT {
                        Ok(Factor::Treatment)
                    } else if valid_name(f) {
                        Ok(Factor::Covariate(f.to_string()))
                    } else {
                        Err(bad())
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            return Ok(Term::Product(factors));
        }
        if let Some(base) = s.strip_suffix("^2") {
            let base = base.trim();
            return if valid_name(base) {
                Ok(Term::Square(base.to_string()))
            } else {
                Err(bad())
            };
        }
        for (op, above) in [('>', true), ('<', false)] {
            if let Some((name, cut)) = s.split_once(op) {
                let name = name.trim();
                let cutoff: f64 = cut.trim().parse().map_err(|_| bad())?;
                if !valid_name(name) || !cutoff.is_finite() {
                    return Err(bad());
                }
                return Ok(Term::Indicator {
                    covariate: name.to_string(),
                    cutoff,
                    above,
                });
            }
        }
        if valid_name(s) {
            Ok(Term::Covariate(s.to_string()))
        } else {
            Err(bad())
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Treatment => f.write_str(TREATMENT),
            Term::Covariate(c) => f.write_str(c),
            Term::Square(c) => write!(f, "{c}^2"),
            Term::Product(fs) => {
                for (i, fac) in fs.iter().enumerate() {
                    if i > 0 {
                        f.write_str("*")?;
                    }
                    match fac {
                        Factor::Treatment => f.write_str(TREATMENT)?,
                        Factor::Covariate(c) => f.write_str(c)?,
                    }
                }
                Ok(())
            }
            Term::Indicator {
                covariate,
                cutoff,
                above,
            } => write!(f, "{covariate}{}{cutoff}", if *above { '>' } else { '<' }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ResolvedTerm {
    Treatment,
    Column(usize),
    Square(usize),
    Product2(usize, usize),
    TreatmentTimes(usize),
    Indicator { column: usize, cutoff: f64, above: bool },
    General(usize),
}

/// A design (term list) bound to the column layout of a covariate matrix.
/// Column 0 of every design row is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedDesign {
    terms: Vec<ResolvedTerm>,
    // products with more than two factors: (columns, includes treatment)
    products: Vec<(Vec<usize>, bool)>,
}

impl ResolvedDesign {
    pub fn resolve(terms: &[Term], names: &[String]) -> Result<Self> {
        let col = |name: &str| {
            names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::UnknownCovariate(name.to_string()))
        };
        let mut resolved = Vec::with_capacity(terms.len());
        let mut products = Vec::new();
        for term in terms {
            let r = match term {
                Term::Treatment => ResolvedTerm::Treatment,
                Term::Covariate(c) => ResolvedTerm::Column(col(c)?),
                Term::Square(c) => ResolvedTerm::Square(col(c)?),
                Term::Indicator {
                    covariate,
                    cutoff,
                    above,
                } => ResolvedTerm::Indicator {
                    column: col(covariate)?,
                    cutoff: *cutoff,
                    above: *above,
                },
                Term::Product(fs) => {
                    let cols = fs
                        .iter()
                        .filter_map(|f| match f {
                            Factor::Covariate(c) => Some(col(c)),
                            Factor::Treatment => None,
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let n_treat = fs.len() - cols.len();
                    match (cols.as_slice(), n_treat) {
                        ([a, b], 0) => ResolvedTerm::Product2(*a, *b),
                        ([a], 1) => ResolvedTerm::TreatmentTimes(*a),
                        ([a], 0) => ResolvedTerm::Column(*a),
                        ([], _) => ResolvedTerm::Treatment,
                        _ => {
                            products.push((cols, n_treat > 0));
                            ResolvedTerm::General(products.len() - 1)
                        }
                    }
                }
            };
            resolved.push(r);
        }
        Ok(Self {
            terms: resolved,
            products,
        })
    }

    /// Number of design columns including the intercept.
    pub fn width(&self) -> usize {
        self.terms.len() + 1
    }

    #[inline]
    fn term_value(&self, k: usize, w: &[f64], a: f64) -> f64 {
        match self.terms[k] {
            ResolvedTerm::Treatment => a,
            ResolvedTerm::General(g) => {
                let (cols, treat) = &self.products[g];
                let v: f64 = cols.iter().map(|&c| w[c]).product();
                if *treat {
                    v * a
                } else {
                    v
                }
            }
            ResolvedTerm::Column(c) => w[c],
            ResolvedTerm::Square(c) => w[c] * w[c],
            ResolvedTerm::Product2(i, j) => w[i] * w[j],
            ResolvedTerm::TreatmentTimes(c) => a * w[c],
            ResolvedTerm::Indicator {
                column,
                cutoff,
                above,
            } => {
                let hit = if above { w[column] > cutoff } else { w[column] < cutoff };
                if hit {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Writes the design row (intercept first) for covariate row `w` and
    /// treatment value `a`.
    #[inline]
    pub fn fill_row(&self, w: &[f64], a: f64, out: &mut [f64]) {
        out[0] = 1.0;
        for k in 0..self.terms.len() {
            out[k + 1] = self.term_value(k, w, a);
        }
    }

    /// `coefs[0] + sum_k coefs[k+1] * term_k(w, a)`.
    #[inline]
    pub fn linear_predictor(&self, coefs: &[f64], w: &[f64], a: f64) -> f64 {
        let mut eta = coefs[0];
        for k in 0..self.terms.len() {
            eta += coefs[k + 1] * self.term_value(k, w, a);
        }
        eta
    }

    /// Design matrix over a dataset; `treatment_override` replaces every A.
    pub fn matrix(&self, d: &Dataset, treatment_override: Option<u8>) -> DesignMatrix {
        self.matrix_from(&d.w, |i| f64::from(treatment_override.unwrap_or(d.a[i])))
    }

    pub fn matrix_from(&self, w: &Covariates, treatment: impl Fn(usize) -> f64) -> DesignMatrix {
        let n = w.nrows();
        let p = self.width();
        let mut data = vec![0.0; n * p];
        for (i, out) in data.chunks_exact_mut(p).enumerate() {
            self.fill_row(w.row(i), treatment(i), out);
        }
        DesignMatrix { nrows: n, ncols: p, data }
    }
}

/// Dense row-major design matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub data: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(nrows: usize, ncols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nrows * ncols {
            return Err(Error::InvalidArgument(format!(
                "design data has {} values, expected {}x{}",
                data.len(),
                nrows,
                ncols
            )));
        }
        Ok(Self { nrows, ncols, data })
    }

    /// Intercept column followed by the given columns.
    pub fn with_intercept(columns: &[&[f64]]) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.len());
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidArgument("design columns differ in length".into()));
        }
        let p = columns.len() + 1;
        let mut data = vec![1.0; n * p];
        for (i, row) in data.chunks_exact_mut(p).enumerate() {
            for (j, c) in columns.iter().enumerate() {
                row[j + 1] = c[i];
            }
        }
        Ok(Self { nrows: n, ncols: p, data })
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.ncols..(i + 1) * self.ncols]
    }

    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.ncols)
            .map(|r| r.iter().zip(beta).map(|(x, b)| x * b).sum())
            .collect()
    }
}

/// Intercept, ordered `(term, coefficient)` pairs and link; `noise_sd` is the
/// Gaussian residual SD when an identity-link model is used generatively.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub intercept: f64,
    pub terms: Vec<(Term, f64)>,
    pub link: Link,
    pub noise_sd: Option<f64>,
}

impl ModelSpec {
    pub fn new(intercept: f64, terms: Vec<(Term, f64)>, link: Link) -> Self {
        Self {
            intercept,
            terms,
            link,
            noise_sd: None,
        }
    }

    /// Parses `(term text, coefficient)` pairs.
    pub fn parse(intercept: f64, terms: &[(&str, f64)], link: Link) -> Result<Self> {
        let terms = terms
            .iter()
            .map(|(t, c)| Ok((t.parse::<Term>()?, *c)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::new(intercept, terms, link))
    }

    pub fn with_noise_sd(mut self, sd: f64) -> Self {
        self.noise_sd = Some(sd);
        self
    }

    pub fn design(&self) -> Vec<Term> {
        self.terms.iter().map(|(t, _)| t.clone()).collect()
    }

    /// `[intercept, coef_1, ..., coef_k]`.
    pub fn coefficients(&self) -> Vec<f64> {
        std::iter::once(self.intercept)
            .chain(self.terms.iter().map(|(_, c)| *c))
            .collect()
    }

    /// Coefficient of the first term that is exactly `term`.
    pub fn coefficient_of(&self, term: &Term) -> Option<f64> {
        self.terms.iter().find(|(t, _)| t == term).map(|(_, c)| *c)
    }

    pub fn resolve(&self, names: &[String]) -> Result<ResolvedModel> {
        Ok(ResolvedModel {
            design: ResolvedDesign::resolve(&self.design(), names)?,
            coefs: self.coefficients(),
            link: self.link,
        })
    }

    pub fn linear_predictor(&self, d: &Dataset, treatment_override: Option<u8>) -> Result<Vec<f64>> {
        let m = self.resolve(d.w.names())?;
        Ok((0..d.n())
            .map(|i| m.linear_predictor(d.w.row(i), f64::from(treatment_override.unwrap_or(d.a[i]))))
            .collect())
    }

    /// Model mean per row (`expit` of the linear predictor for logit).
    pub fn mean(&self, d: &Dataset, treatment_override: Option<u8>) -> Result<Vec<f64>> {
        let link = self.link;
        Ok(self
            .linear_predictor(d, treatment_override)?
            .into_iter()
            .map(|eta| link.inverse(eta))
            .collect())
    }
}

/// A model bound to a covariate layout, for fast row-wise evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedModel {
    pub design: ResolvedDesign,
    pub coefs: Vec<f64>,
    pub link: Link,
}

impl ResolvedModel {
    #[inline]
    pub fn linear_predictor(&self, w: &[f64], a: f64) -> f64 {
        self.design.linear_predictor(&self.coefs, w, a)
    }

    #[inline]
    pub fn mean(&self, w: &[f64], a: f64) -> f64 {
        self.link.inverse(self.linear_predictor(w, a))
    }
}
