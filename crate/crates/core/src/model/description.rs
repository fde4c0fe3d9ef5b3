//! JSON model description files.

use serde::{Deserialize, Serialize};

use super::{Model, ModelKind, Representation};
use crate::error::{Error, Result};
use crate::models::{assemble, BuiltinSpec};

/// `table_H` accepts a single list (σ = 1) or one list per component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TableRows {
    Single(Vec<f64>),
    Many(Vec<Vec<f64>>),
}

impl TableRows {
    pub fn into_rows(self) -> Vec<Vec<f64>> {
        match self {
            TableRows::Single(v) => vec![v],
            TableRows::Many(v) => v,
        }
    }
}

/// On-disk model description. Fields that do not apply to `kind` are
/// rejected, as are unknown fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDescription {
    pub kind: Option<ModelKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphabet: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<Vec<f64>>,
    /// One row-major matrix (as nested rows) per component; `null` entries
    /// mean no quadratic part.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<Vec<Option<Vec<Vec<f64>>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linear: Option<Vec<Option<Vec<f64>>>>,
    #[serde(default, rename = "table_I", skip_serializing_if = "Option::is_none")]
    pub table_i: Option<Vec<f64>>,
    #[serde(default, rename = "table_H", skip_serializing_if = "Option::is_none")]
    pub table_h: Option<TableRows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<usize>,
    /// Curie–Weiss coupling strength; negative values are antiferromagnetic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<f64>,
    /// Three-state model: coefficient of the `−m²/2` term.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadratic: Option<f64>,
    /// Fourier cutoff for the vortex kernels.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    /// Per-letter coefficients of the linear functional (three-state single
    /// field term, Miller–Robert enstrophy).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub letter_weights: Option<Vec<f64>>,
}

impl ModelDescription {
    fn present(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! mark {
            ($($f:ident => $name:literal),*) => {
                $(if self.$f.is_some() { out.push($name); })*
            };
        }
        mark!(alphabet => "alphabet", prior => "prior", kernel => "kernel", linear => "linear",
              table_i => "table_I", table_h => "table_H", sigma => "sigma", tau => "tau",
              a_n => "a_n", q => "q", coupling => "coupling", quadratic => "quadratic",
              cutoff => "cutoff", letter_weights => "letter_weights");
        out
    }

    fn allowed(kind: ModelKind) -> &'static [&'static str] {
        match kind {
            ModelKind::Tabular | ModelKind::TabularMixed => &["table_I", "table_H", "sigma", "tau"],
            ModelKind::CurieWeiss => &["coupling", "a_n", "sigma", "kernel", "linear"],
            ModelKind::ThreeStateSkew => &[
                "alphabet",
                "prior",
                "quadratic",
                "letter_weights",
                "a_n",
                "sigma",
                "kernel",
                "linear",
            ],
            ModelKind::PointVortex => &["q", "cutoff", "a_n", "sigma", "kernel", "linear"],
            ModelKind::MillerRobert => &[
                "q",
                "alphabet",
                "prior",
                "cutoff",
                "letter_weights",
                "sigma",
                "tau",
                "a_n",
                "kernel",
                "linear",
            ],
        }
    }

    fn require<T: Clone>(v: &Option<T>, name: &str) -> Result<T> {
        v.clone()
            .ok_or_else(|| Error::structure(name, "required for this kind"))
    }

    /// Builds the model without validating invariants.
    pub fn into_model(self) -> Result<Model> {
        let kind = self
            .kind
            .ok_or_else(|| Error::structure("kind", "missing field"))?;
        let allowed = Self::allowed(kind);
        if let Some(bad) = self.present().into_iter().find(|f| !allowed.contains(f)) {
            return Err(Error::structure(
                bad,
                format!("not a field of kind {kind:?}"),
            ));
        }

        let spec = match kind {
            ModelKind::Tabular | ModelKind::TabularMixed => BuiltinSpec::Tabular {
                rate: Self::require(&self.table_i, "table_I")?,
                repr: Self::require(&self.table_h, "table_H")?.into_rows(),
            },
            ModelKind::CurieWeiss => BuiltinSpec::CurieWeiss {
                coupling: self.coupling.unwrap_or(1.0),
                sites: self.a_n,
            },
            ModelKind::ThreeStateSkew => {
                let d = BuiltinSpec::three_state_default();
                let BuiltinSpec::ThreeStateSkew {
                    alphabet,
                    prior,
                    quadratic,
                    field,
                    ..
                } = d
                else {
                    unreachable!()
                };
                BuiltinSpec::ThreeStateSkew {
                    alphabet: self.alphabet.clone().unwrap_or(alphabet),
                    prior: self.prior.clone().unwrap_or(prior),
                    quadratic: self.quadratic.unwrap_or(quadratic),
                    field: self.letter_weights.clone().or(field),
                    sites: self.a_n,
                }
            }
            ModelKind::PointVortex => BuiltinSpec::PointVortex {
                cells: Self::require(&self.q, "q")?,
                cutoff: self.cutoff.unwrap_or(2),
                sites: self.a_n,
            },
            ModelKind::MillerRobert => BuiltinSpec::MillerRobert {
                cells: Self::require(&self.q, "q")?,
                alphabet: Self::require(&self.alphabet, "alphabet")?,
                prior: Self::require(&self.prior, "prior")?,
                cutoff: self.cutoff.unwrap_or(2),
                enstrophy: self.letter_weights.clone(),
                sigma: self.sigma.unwrap_or(1),
                sites: self.a_n,
            },
        };

        let mut model = assemble(&spec)?;
        model.kind = kind;

        if self.kernel.is_some() || self.linear.is_some() {
            model.components = self.field_components(model.dim())?;
        }
        if kind.is_tabular() || kind == ModelKind::MillerRobert {
            if let Some(tau) = self.tau {
                model.tau = Some(tau);
            }
        }
        if kind == ModelKind::TabularMixed && model.tau.is_none() {
            model.tau = Some(1);
        }
        if let Some(sigma) = self.sigma {
            if sigma != model.sigma() {
                return Err(Error::structure(
                    "sigma",
                    format!(
                        "declares {sigma} components, description defines {}",
                        model.sigma()
                    ),
                ));
            }
        }
        if kind == ModelKind::TabularMixed && model.sigma() != 2 {
            return Err(Error::structure(
                "table_H",
                "tabular_mixed needs exactly two rows",
            ));
        }
        Ok(model)
    }

    fn field_components(&self, dim: usize) -> Result<Vec<Representation>> {
        let kernels = self.kernel.clone().unwrap_or_default();
        let linears = self.linear.clone().unwrap_or_default();
        let sigma = kernels.len().max(linears.len());
        (0..sigma)
            .map(|i| {
                let kernel = match kernels.get(i).cloned().flatten() {
                    Some(rows) => {
                        if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                            return Err(Error::structure(
                                "kernel",
                                format!("component {i} must be a {dim}×{dim} matrix"),
                            ));
                        }
                        Some(rows.into_iter().flatten().collect())
                    }
                    None => None,
                };
                let linear = linears.get(i).cloned().flatten();
                Ok(Representation::Field { kernel, linear })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_model;

    #[test]
    fn unknown_field_rejected() {
        let err = Model::from_json(r#"{"kind":"curie_weiss","temperature":1}"#).unwrap_err();
        assert!(
            matches!(err, Error::Structure { ref field, .. } if field == "temperature"),
            "{err}"
        );
    }

    #[test]
    fn field_of_other_kind_rejected() {
        let err = Model::from_json(r#"{"kind":"curie_weiss","table_I":[0]}"#).unwrap_err();
        assert!(matches!(err, Error::Structure { ref field, .. } if field == "table_I"));
    }

    #[test]
    fn ill_typed_field_named() {
        let err =
            Model::from_json(r#"{"kind":"tabular","table_I":"zero","table_H":[0]}"#).unwrap_err();
        assert!(matches!(err, Error::Structure { .. }));
    }

    #[test]
    fn tabular_roundtrip() {
        let m = Model::from_json(r#"{"kind":"tabular","table_I":[0,0.5,0.2],"table_H":[0,1,2]}"#)
            .unwrap();
        assert!(validate_model(&m).is_empty());
        assert_eq!(m.sigma(), 1);
    }

    #[test]
    fn tabular_missing_zero_parses_but_fails_validation() {
        let m =
            Model::from_json(r#"{"kind":"tabular","table_I":[0.2,0.5],"table_H":[0,1]}"#).unwrap();
        let v = validate_model(&m);
        assert_eq!(v.len(), 1);
        assert!(v[0].message.contains("inf I ≠ 0"));
    }

    #[test]
    fn mixed_defaults_tau() {
        let m = Model::from_json(
            r#"{"kind":"tabular_mixed","table_I":[0,0.4,0.3,0.1],"table_H":[[0,1,0,1],[0,0,1,1]]}"#,
        )
        .unwrap();
        assert_eq!(m.tau, Some(1));
        assert!(validate_model(&m).is_empty());
    }

    #[test]
    fn kernel_override() {
        let m = Model::from_json(
            r#"{"kind":"curie_weiss","kernel":[[[-1,1],[1,-1]]],"linear":[[0.1,-0.1]]}"#,
        )
        .unwrap();
        assert!(validate_model(&m).is_empty());
        assert_eq!(m.sigma(), 1);
    }

    #[test]
    fn sigma_mismatch_is_structural() {
        let err = Model::from_json(r#"{"kind":"curie_weiss","sigma":2}"#).unwrap_err();
        assert!(matches!(err, Error::Structure { ref field, .. } if field == "sigma"));
    }
}
