//! System definition files.
//!
//! A system is a TOML document:
//!
//! ```toml
//! name = "saddle"
//! dimension = 2
//! linear = [[-1.0, 0.0], [0.0, 1.0]]
//!
//! [[terms]]
//! component = 2        # 1-based equation index
//! exponents = [2, 0]   # one entry per state
//! coeff = 1.0
//!
//! [metadata]
//! note = "free-form"
//! ```
//!
//! `linear` may be omitted when the degree-1 terms define it.

use std::collections::BTreeMap;
use std::path::Path;

use modalpf::{PolynomialVectorField, StateMatrix};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Tolerance for agreement between `linear` and degree-1 terms.
pub const LINEAR_AGREEMENT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Term {
    pub component: usize,
    pub exponents: Vec<u32>,
    pub coeff: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    pub name: String,
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub terms: Vec<Term>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metadata: BTreeMap<String, toml::Value>,
}

/// A parsed system plus the warnings raised while reading it.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub spec: SystemSpec,
    pub warnings: Vec<String>,
}

pub fn parse_system_file(path: &Path) -> Result<Parsed, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    parse_system(&text)
}

/// Parse and validate; duplicate `(component, exponents)` entries are summed.
pub fn parse_system(text: &str) -> Result<Parsed, CliError> {
    let raw: SystemSpec =
        toml::from_str(text).map_err(|e| CliError::Schema(e.to_string().trim_end().to_string()))?;
    let mut warnings = Vec::new();
    let n = raw.dimension;
    if n == 0 {
        return Err(CliError::Schema("dimension: must be at least 1".into()));
    }
    if let Some(lin) = &raw.linear {
        if lin.len() != n {
            return Err(CliError::DimensionMismatch {
                field: "linear".into(),
                expected: n,
                got: lin.len(),
            });
        }
        for (i, row) in lin.iter().enumerate() {
            if row.len() != n {
                return Err(CliError::DimensionMismatch {
                    field: format!("linear[{i}]"),
                    expected: n,
                    got: row.len(),
                });
            }
            if let Some(j) = row.iter().position(|v| !v.is_finite()) {
                return Err(CliError::Schema(format!(
                    "linear[{i}][{j}]: not a finite number"
                )));
            }
        }
    }

    let mut terms: Vec<Term> = Vec::with_capacity(raw.terms.len());
    for (t, term) in raw.terms.iter().enumerate() {
        if term.component == 0 || term.component > n {
            return Err(CliError::Schema(format!(
                "terms[{t}].component: {} is outside 1..={n}",
                term.component
            )));
        }
        if term.exponents.len() != n {
            return Err(CliError::DimensionMismatch {
                field: format!("terms[{t}].exponents"),
                expected: n,
                got: term.exponents.len(),
            });
        }
        if term.exponents.iter().all(|&e| e == 0) {
            return Err(CliError::Schema(format!(
                "terms[{t}].exponents: constant terms are not allowed (the equilibrium must sit at the origin)"
            )));
        }
        if !term.coeff.is_finite() {
            return Err(CliError::Schema(format!(
                "terms[{t}].coeff: not a finite number"
            )));
        }
        match terms
            .iter_mut()
            .find(|u| u.component == term.component && u.exponents == term.exponents)
        {
            Some(existing) => {
                warnings.push(format!(
                    "terms[{t}]: duplicate of component {} exponents {:?}; coefficients summed",
                    term.component, term.exponents
                ));
                existing.coeff += term.coeff;
            }
            None => terms.push(term.clone()),
        }
    }

    if raw.linear.is_none() && terms.iter().all(|t| degree(t) != 1) {
        return Err(CliError::Schema(
            "linear: missing, and no degree-1 terms to derive it from".into(),
        ));
    }
    let spec = SystemSpec { terms, ..raw };
    if let Some(lin) = &spec.linear {
        for (t, term) in spec
            .terms
            .iter()
            .enumerate()
            .filter(|(_, t)| degree(t) == 1)
        {
            let j = term
                .exponents
                .iter()
                .position(|&e| e == 1)
                .expect("degree one");
            let expect = lin[term.component - 1][j];
            if (term.coeff - expect).abs() > LINEAR_AGREEMENT_TOL * expect.abs().max(1.0) {
                return Err(CliError::Schema(format!(
                    "terms[{t}]: degree-1 coefficient {} disagrees with linear[{}][{j}] = {expect}",
                    term.coeff,
                    term.component - 1
                )));
            }
        }
    }
    Ok(Parsed { spec, warnings })
}

fn degree(t: &Term) -> u32 {
    t.exponents.iter().sum()
}

pub fn serialize_system(spec: &SystemSpec) -> String {
    toml::to_string(spec).expect("system specs always serialize")
}

impl SystemSpec {
    /// The Jacobian at the origin.
    pub fn linear_matrix(&self) -> Vec<Vec<f64>> {
        if let Some(lin) = &self.linear {
            return lin.clone();
        }
        let n = self.dimension;
        let mut lin = vec![vec![0.0; n]; n];
        for t in self.terms.iter().filter(|t| degree(t) == 1) {
            let j = t
                .exponents
                .iter()
                .position(|&e| e == 1)
                .expect("degree one");
            lin[t.component - 1][j] += t.coeff;
        }
        lin
    }

    pub fn state_matrix(&self) -> Result<StateMatrix, CliError> {
        Ok(StateMatrix::from_rows(&self.linear_matrix())?)
    }

    pub fn is_linear(&self) -> bool {
        self.terms.iter().all(|t| degree(t) <= 1)
    }

    pub fn field(&self) -> Result<PolynomialVectorField, CliError> {
        let a = self.state_matrix()?;
        let nonlinear: Vec<(usize, Vec<u32>, f64)> = self
            .terms
            .iter()
            .filter(|t| degree(t) >= 2)
            .map(|t| (t.component - 1, t.exponents.clone(), t.coeff))
            .collect();
        Ok(PolynomialVectorField::from_real(a.as_matrix(), &nonlinear)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SADDLE: &str = r#"
name = "saddle"
dimension = 2
linear = [[-1.0, 0.0], [0.0, 1.0]]

[[terms]]
component = 2
exponents = [2, 0]
coeff = 1.0
"#;

    #[test]
    fn reads_the_saddle() {
        let p = parse_system(SADDLE).unwrap();
        assert!(p.warnings.is_empty());
        assert_eq!(p.spec.dimension, 2);
        assert_eq!(
            p.spec.linear_matrix(),
            vec![vec![-1.0, 0.0], vec![0.0, 1.0]]
        );
        assert_eq!(p.spec.terms.len(), 1);
        let f = p.spec.field().unwrap();
        assert_eq!(f.eval_real(&[2.0, 1.0]), vec![-2.0, 5.0]);
    }

    #[test]
    fn linear_only_and_derived_linear() {
        let p = parse_system("name = \"lin\"\ndimension = 2\nlinear = [[2.0, 0.0], [0.0, 1.0]]\n")
            .unwrap();
        assert!(p.spec.is_linear());
        let text = r#"
name = "derived"
dimension = 2
terms = [
  { component = 1, exponents = [1, 0], coeff = -1.0 },
  { component = 2, exponents = [0, 1], coeff = 1.0 },
  { component = 2, exponents = [2, 0], coeff = 1.0 },
]
"#;
        let p = parse_system(text).unwrap();
        assert_eq!(
            p.spec.linear_matrix(),
            vec![vec![-1.0, 0.0], vec![0.0, 1.0]]
        );
        assert_eq!(
            p.spec.field().unwrap().eval_real(&[2.0, 1.0]),
            vec![-2.0, 5.0]
        );
    }

    #[test]
    fn rejects_bad_documents() {
        let constant = SADDLE.replace("[2, 0]", "[0, 0]");
        let err = parse_system(&constant).unwrap_err();
        assert!(matches!(err, CliError::Schema(ref m) if m.contains("terms[0].exponents")));
        let short = SADDLE.replace("[2, 0]", "[2]");
        assert!(matches!(
            parse_system(&short),
            Err(CliError::DimensionMismatch { .. })
        ));
        let clash =
            format!("{SADDLE}\n[[terms]]\ncomponent = 1\nexponents = [1, 0]\ncoeff = -0.5\n");
        assert!(
            matches!(parse_system(&clash), Err(CliError::Schema(ref m)) if m.contains("disagrees"))
        );
        let unknown = format!("{SADDLE}\ncolour = 3\n");
        assert!(matches!(parse_system(&unknown), Err(CliError::Schema(_))));
        assert!(matches!(parse_system("name = 1"), Err(CliError::Schema(_))));
    }

    #[test]
    fn duplicates_are_summed() {
        let dup = format!("{SADDLE}\n[[terms]]\ncomponent = 2\nexponents = [2, 0]\ncoeff = 0.5\n");
        let p = parse_system(&dup).unwrap();
        assert_eq!(p.spec.terms.len(), 1);
        assert_eq!(p.spec.terms[0].coeff, 1.5);
        assert_eq!(p.warnings.len(), 1);
    }

    #[test]
    fn round_trip() {
        let mut p = parse_system(SADDLE).unwrap().spec;
        p.metadata
            .insert("source".into(), toml::Value::String("notes".into()));
        p.metadata
            .insert("weight".into(), toml::Value::Float(0.1 + 0.2));
        let again = parse_system(&serialize_system(&p)).unwrap().spec;
        assert_eq!(again, p);
    }
}
