//! Label spaces: the finite outcome set, its kind, and the base category.

use serde::{Deserialize, Serialize};

use crate::error::LflError;
use crate::Result;

/// Whether the labels carry a meaningful order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelKind {
    Nominal,
    Ordinal,
}

/// The finite label set with a designated base category.
///
/// The base category's weights are pinned at zero throughout the crate; it
/// fixes the scale of the softmax. By default the base is the last label in
/// label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSpace {
    labels: Vec<String>,
    kind: LabelKind,
    /// Real value per label; required for mean/median prediction and for
    /// ordinal training objectives.
    numeric_values: Option<Vec<f64>>,
    base_index: usize,
}

impl LabelSpace {
    /// Build a label space, defaulting the base category to the final label.
    pub fn new(
        labels: Vec<String>,
        kind: LabelKind,
        numeric_values: Option<Vec<f64>>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(LflError::InvalidConfig("label space is empty".into()));
        }
        let base_index = labels.len() - 1;
        Self::with_base(labels, kind, numeric_values, base_index)
    }

    /// Build a label space with an explicit base category.
    pub fn with_base(
        labels: Vec<String>,
        kind: LabelKind,
        numeric_values: Option<Vec<f64>>,
        base_index: usize,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(LflError::InvalidConfig("label space is empty".into()));
        }
        if base_index >= labels.len() {
            return Err(LflError::InvalidConfig(format!(
                "base index {} out of range for {} labels",
                base_index,
                labels.len()
            )));
        }
        for (i, a) in labels.iter().enumerate() {
            if labels[i + 1..].contains(a) {
                return Err(LflError::InvalidConfig(format!("duplicate label {a:?}")));
            }
        }
        if let Some(values) = &numeric_values {
            if values.len() != labels.len() {
                return Err(LflError::InvalidConfig(
                    "numeric_values length differs from label count".into(),
                ));
            }
        }
        if kind == LabelKind::Ordinal {
            let values = numeric_values.as_ref().ok_or_else(|| {
                LflError::InvalidConfig("ordinal label space requires numeric values".into())
            })?;
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LflError::InvalidConfig(
                    "ordinal numeric values must be strictly increasing".into(),
                ));
            }
        }
        Ok(LabelSpace {
            labels,
            kind,
            numeric_values,
            base_index,
        })
    }

    /// Ordinal labels named after their numeric values, e.g. ratings 1..=5.
    pub fn ordinal_numeric(values: Vec<f64>) -> Result<Self> {
        let labels = values.iter().map(|v| format!("{v}")).collect();
        Self::new(labels, LabelKind::Ordinal, Some(values))
    }

    /// The binary {0, 1} space used by link prediction, with 0 as base.
    pub fn binary_link() -> Self {
        LabelSpace {
            labels: vec!["0".into(), "1".into()],
            kind: LabelKind::Nominal,
            numeric_values: Some(vec![0.0, 1.0]),
            base_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label_name(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == name)
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn base_index(&self) -> usize {
        self.base_index
    }

    pub fn numeric_values(&self) -> Option<&[f64]> {
        self.numeric_values.as_deref()
    }

    /// Numeric value of one label; errors when the space has no values.
    pub fn numeric_value(&self, index: usize) -> Result<f64> {
        self.numeric_values
            .as_ref()
            .map(|v| v[index])
            .ok_or_else(|| {
                LflError::LabelKindMismatch(
                    "label space has no numeric values; mean/median prediction and \
                     ordinal objectives need them"
                        .into(),
                )
            })
    }

    /// Same labels re-declared as ordinal (numeric values must exist).
    pub fn as_ordinal(&self) -> Result<Self> {
        Self::with_base(
            self.labels.clone(),
            LabelKind::Ordinal,
            self.numeric_values.clone(),
            self.base_index,
        )
    }

    /// Non-base label indices in label order.
    pub fn free_labels(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.labels.len()).filter(move |&y| y != self.base_index)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_defaults_to_last_label() {
        let space = LabelSpace::new(
            vec!["a".into(), "b".into(), "c".into()],
            LabelKind::Nominal,
            None,
        )
        .unwrap();
        assert_eq!(space.base_index(), 2);
    }

    #[test]
    fn duplicate_labels_rejected() {
        assert!(LabelSpace::new(
            vec!["a".into(), "a".into()],
            LabelKind::Nominal,
            None
        )
        .is_err());
    }

    #[test]
    fn ordinal_requires_increasing_values() {
        assert!(LabelSpace::new(
            vec!["1".into(), "2".into()],
            LabelKind::Ordinal,
            Some(vec![2.0, 1.0])
        )
        .is_err());
        assert!(LabelSpace::new(vec!["1".into(), "2".into()], LabelKind::Ordinal, None).is_err());
    }

    #[test]
    fn free_labels_skip_base() {
        let space = LabelSpace::with_base(
            vec!["a".into(), "b".into(), "c".into()],
            LabelKind::Nominal,
            None,
            1,
        )
        .unwrap();
        assert_eq!(space.free_labels().collect::<Vec<_>>(), vec![0, 2]);
    }
}
