//! The LFL parameterization and all forward computations.
//!
//! Every variant scores a dyad per label and pushes the scores through a
//! softmax in which the base category's score is pinned at zero:
//!
//! - `Dyadic`: score(y) = α[y][r,:]·β[y][c,:] + w_s[y]·s + γ[y]. With biases
//!   enabled the factor layout is `k + 2` columns per object: column 0 of the
//!   row weights is frozen at 1 (its column-side partner is the per-column
//!   bias) and column 1 of the column weights is frozen at 1 (its row-side
//!   partner is the per-row bias). The optional per-label offset γ[y] plays
//!   the role of a third, virtual frozen-input column and realizes the
//!   bias-only baseline model when `rank == 0`.
//! - `SymmetricLink`: binary labels, one shared object matrix;
//!   p(edge) = σ(α[r,:]·α[c,:]), symmetric in (r, c) by construction.
//! - `DirectedLink`: three matrices over one object set — incoming α,
//!   outgoing β, node γ — with p(edge) = σ(α[r,:]·β[c,:] + γ[r,:]·γ[c,:]).
//! - `MultiRelational`: shared α, β plus a per-relation diagonal scale Λ[t];
//!   p(relation t) = σ(Σ_i α[r,i] Λ[t][i] β[c,i]).
//! - `Stereotype`: ρ shared base pairs (α̃[i], β̃[i]) and per-label mixing
//!   scalars φ[y][i]; score(y) = Σ_i φ[y][i] α̃[i][r,:]·β̃[i][c,:].

use serde::{Deserialize, Serialize};

use crate::error::LflError;
use crate::labels::{LabelKind, LabelSpace};
use crate::mat::{dot, Mat};
use crate::Result;

/// Logistic sigmoid.
#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Model variant tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Dyadic,
    SymmetricLink,
    DirectedLink,
    MultiRelational,
    Stereotype,
}

/// Variant-specific weight storage.
///
/// Per-label containers are indexed by label and keep the base label's block
/// allocated but identically zero; that block is never visited by gradients
/// or updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum VariantWeights {
    Dyadic {
        /// α[y]: `num_rows x k_total` per label.
        row: Vec<Mat>,
        /// β[y]: `num_cols x k_total` per label.
        col: Vec<Mat>,
    },
    SymmetricLink {
        /// Shared object matrix; the row weights alias the column weights.
        shared: Mat,
    },
    DirectedLink {
        incoming: Mat,
        outgoing: Mat,
        node: Mat,
    },
    MultiRelational {
        row: Mat,
        col: Mat,
        /// Λ[t]: one diagonal scaling vector of length `k_total` per relation.
        relation_scale: Vec<Vec<f64>>,
    },
    Stereotype {
        /// α̃[i]: `num_rows x k_total` per base pair.
        base_row: Vec<Mat>,
        /// β̃[i]: `num_cols x k_total` per base pair.
        base_col: Vec<Mat>,
        /// φ[y][i]: per-label mixing scalars; the base label's row is zero.
        mix: Vec<Vec<f64>>,
    },
}

impl VariantWeights {
    pub fn tag(&self) -> Variant {
        match self {
            VariantWeights::Dyadic { .. } => Variant::Dyadic,
            VariantWeights::SymmetricLink { .. } => Variant::SymmetricLink,
            VariantWeights::DirectedLink { .. } => Variant::DirectedLink,
            VariantWeights::MultiRelational { .. } => Variant::MultiRelational,
            VariantWeights::Stereotype { .. } => Variant::Stereotype,
        }
    }
}

/// Shape description used to allocate a model before initialization.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub label_space: LabelSpace,
    pub num_rows: usize,
    pub num_cols: usize,
    /// Free latent factors, excluding bias columns.
    pub rank: usize,
    pub bias: bool,
    /// Per-dyad side-information dimension (dyadic variant only).
    pub side_dim: Option<usize>,
    /// Store per-label global offsets γ[y] (the bias-only baseline needs them).
    pub global_offsets: bool,
    pub variant: VariantSpec,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum VariantSpec {
    Dyadic,
    SymmetricLink,
    DirectedLink,
    MultiRelational { num_relations: usize },
    Stereotype { base_pairs: usize },
}

impl ModelSpec {
    pub fn dyadic(label_space: LabelSpace, num_rows: usize, num_cols: usize, rank: usize) -> Self {
        ModelSpec {
            label_space,
            num_rows,
            num_cols,
            rank,
            bias: true,
            side_dim: None,
            global_offsets: false,
            variant: VariantSpec::Dyadic,
        }
    }

    /// The bias-only log-linear baseline: rank 0, biases on, offsets stored.
    pub fn baseline(label_space: LabelSpace, num_rows: usize, num_cols: usize) -> Self {
        ModelSpec {
            rank: 0,
            bias: true,
            global_offsets: true,
            ..Self::dyadic(label_space, num_rows, num_cols, 0)
        }
    }

    pub fn symmetric_link(num_objects: usize, rank: usize) -> Self {
        ModelSpec {
            label_space: LabelSpace::binary_link(),
            num_rows: num_objects,
            num_cols: num_objects,
            rank,
            bias: false,
            side_dim: None,
            global_offsets: false,
            variant: VariantSpec::SymmetricLink,
        }
    }

    pub fn directed_link(num_objects: usize, rank: usize) -> Self {
        ModelSpec {
            variant: VariantSpec::DirectedLink,
            ..Self::symmetric_link(num_objects, rank)
        }
    }

    pub fn multi_relational(
        num_rows: usize,
        num_cols: usize,
        rank: usize,
        num_relations: usize,
    ) -> Self {
        ModelSpec {
            label_space: LabelSpace::binary_link(),
            num_rows,
            num_cols,
            rank,
            bias: false,
            side_dim: None,
            global_offsets: false,
            variant: VariantSpec::MultiRelational { num_relations },
        }
    }

    pub fn stereotype(
        label_space: LabelSpace,
        num_rows: usize,
        num_cols: usize,
        rank: usize,
        base_pairs: usize,
    ) -> Self {
        ModelSpec {
            label_space,
            num_rows,
            num_cols,
            rank,
            bias: false,
            side_dim: None,
            global_offsets: false,
            variant: VariantSpec::Stereotype { base_pairs },
        }
    }

    pub fn with_side_dim(mut self, dim: usize) -> Self {
        self.side_dim = Some(dim);
        self
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }
}

/// A (row, column) pair to score, with optional side features and, for
/// multi-relational models, the relation being queried.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dyad {
    pub row: usize,
    pub col: usize,
    pub side: Option<Vec<f64>>,
    pub relation: Option<usize>,
}

impl Dyad {
    pub fn new(row: usize, col: usize) -> Self {
        Dyad {
            row,
            col,
            side: None,
            relation: None,
        }
    }

    pub fn with_side(mut self, side: Vec<f64>) -> Self {
        self.side = Some(side);
        self
    }

    pub fn with_relation(mut self, relation: usize) -> Self {
        self.relation = Some(relation);
        self
    }
}

/// A conditional distribution over labels, in label order.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelDistribution {
    probs: Vec<f64>,
}

impl LabelDistribution {
    /// Softmax with max-subtraction, so arbitrarily large score magnitudes
    /// stay finite.
    pub fn from_scores(scores: &[f64]) -> Self {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut probs: Vec<f64> = scores.iter().map(|&z| (z - max).exp()).collect();
        let total: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= total;
        }
        LabelDistribution { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, label: usize) -> f64 {
        self.probs[label]
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Argmax label index; ties break toward the lowest index.
    pub fn mode_index(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate().skip(1) {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }

    /// Smallest label index whose cumulative probability reaches 0.5.
    pub fn median_index(&self) -> usize {
        let mut cum = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            cum += p;
            if cum >= 0.5 {
                return i;
            }
        }
        self.probs.len() - 1
    }

    /// Expected label value Σ_y value[y]·p[y].
    pub fn mean(&self, values: &[f64]) -> f64 {
        dot(&self.probs, values)
    }
}

/// Prediction rule for [`LflModel::predict`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictRule {
    Mode,
    Median,
    Mean,
}

impl std::str::FromStr for PredictRule {
    type Err = LflError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mode" => Ok(PredictRule::Mode),
            "median" => Ok(PredictRule::Median),
            "mean" => Ok(PredictRule::Mean),
            other => Err(LflError::InvalidConfig(format!(
                "unknown prediction rule {other:?} (expected mode, median, or mean)"
            ))),
        }
    }
}

/// Outcome of a [`LflModel::predict`] call: a label for mode/median rules,
/// a real value for the mean rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    Label(usize),
    Value(f64),
}

/// A latent feature log-linear model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LflModel {
    pub(crate) label_space: LabelSpace,
    pub(crate) rank: usize,
    pub(crate) bias_enabled: bool,
    pub(crate) num_rows: usize,
    pub(crate) num_cols: usize,
    pub(crate) weights: VariantWeights,
    /// w_s[y]: side-information weights per label; base label's vector is zero.
    pub(crate) side_weights: Option<Vec<Vec<f64>>>,
    /// γ[y]: per-label global offsets; base entry is zero.
    pub(crate) global_offsets: Option<Vec<f64>>,
    /// When set, latent weights are excluded from the free-parameter set
    /// (stage two of cold-start training).
    pub(crate) latent_frozen: bool,
    pub(crate) row_names: Option<Vec<String>>,
    pub(crate) col_names: Option<Vec<String>>,
}

const MODEL_FORMAT: &str = "lfl-model/1";

impl LflModel {
    /// Allocate a model with all free weights at zero and frozen entries set.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        if spec.label_space.is_empty() {
            return Err(LflError::InvalidConfig("zero-sized label space".into()));
        }
        let num_labels = spec.label_space.len();
        if spec.bias && spec.variant != VariantSpec::Dyadic {
            return Err(LflError::InvalidConfig(
                "bias columns are only defined for the dyadic variant".into(),
            ));
        }
        if spec.side_dim.is_some() && spec.variant != VariantSpec::Dyadic {
            return Err(LflError::InvalidConfig(
                "side-information weights are only defined for the dyadic variant".into(),
            ));
        }
        if spec.global_offsets && spec.variant != VariantSpec::Dyadic {
            return Err(LflError::InvalidConfig(
                "global offsets are only defined for the dyadic variant".into(),
            ));
        }
        let k_total = spec.rank + if spec.bias { 2 } else { 0 };
        let weights = match spec.variant {
            VariantSpec::Dyadic => VariantWeights::Dyadic {
                row: (0..num_labels)
                    .map(|_| Mat::zeros(spec.num_rows, k_total))
                    .collect(),
                col: (0..num_labels)
                    .map(|_| Mat::zeros(spec.num_cols, k_total))
                    .collect(),
            },
            VariantSpec::SymmetricLink => {
                if spec.num_rows != spec.num_cols {
                    return Err(LflError::InvalidConfig(
                        "symmetric-link models need one object set (rows == cols)".into(),
                    ));
                }
                if num_labels != 2 {
                    return Err(LflError::InvalidConfig(
                        "symmetric-link models are binary".into(),
                    ));
                }
                VariantWeights::SymmetricLink {
                    shared: Mat::zeros(spec.num_rows, k_total),
                }
            }
            VariantSpec::DirectedLink => {
                if spec.num_rows != spec.num_cols {
                    return Err(LflError::InvalidConfig(
                        "directed-link models need one object set (rows == cols)".into(),
                    ));
                }
                if num_labels != 2 {
                    return Err(LflError::InvalidConfig(
                        "directed-link models are binary".into(),
                    ));
                }
                VariantWeights::DirectedLink {
                    incoming: Mat::zeros(spec.num_rows, k_total),
                    outgoing: Mat::zeros(spec.num_rows, k_total),
                    node: Mat::zeros(spec.num_rows, k_total),
                }
            }
            VariantSpec::MultiRelational { num_relations } => {
                if num_labels != 2 {
                    return Err(LflError::InvalidConfig(
                        "multi-relational models are binary per relation".into(),
                    ));
                }
                if num_relations == 0 {
                    return Err(LflError::InvalidConfig(
                        "multi-relational models need at least one relation".into(),
                    ));
                }
                VariantWeights::MultiRelational {
                    row: Mat::zeros(spec.num_rows, k_total),
                    col: Mat::zeros(spec.num_cols, k_total),
                    relation_scale: vec![vec![0.0; k_total]; num_relations],
                }
            }
            VariantSpec::Stereotype { base_pairs } => {
                if base_pairs == 0 {
                    return Err(LflError::InvalidConfig(
                        "stereotype models need at least one base pair".into(),
                    ));
                }
                VariantWeights::Stereotype {
                    base_row: (0..base_pairs)
                        .map(|_| Mat::zeros(spec.num_rows, k_total))
                        .collect(),
                    base_col: (0..base_pairs)
                        .map(|_| Mat::zeros(spec.num_cols, k_total))
                        .collect(),
                    mix: vec![vec![0.0; base_pairs]; num_labels],
                }
            }
        };
        let mut model = LflModel {
            label_space: spec.label_space.clone(),
            rank: spec.rank,
            bias_enabled: spec.bias,
            num_rows: spec.num_rows,
            num_cols: spec.num_cols,
            weights,
            side_weights: spec
                .side_dim
                .map(|d| vec![vec![0.0; d]; num_labels]),
            global_offsets: if spec.global_offsets {
                Some(vec![0.0; num_labels])
            } else {
                None
            },
            latent_frozen: false,
            row_names: None,
            col_names: None,
        };
        model.reset_frozen_entries();
        Ok(model)
    }

    /// Write the frozen bias constants (1.0) into their columns.
    pub(crate) fn reset_frozen_entries(&mut self) {
        if !self.bias_enabled {
            return;
        }
        let base = self.label_space.base_index();
        if let VariantWeights::Dyadic { row, col } = &mut self.weights {
            for (y, (rw, cw)) in row.iter_mut().zip(col.iter_mut()).enumerate() {
                if y == base {
                    continue;
                }
                for r in 0..rw.rows() {
                    *rw.at_mut(r, 0) = 1.0;
                }
                for c in 0..cw.rows() {
                    *cw.at_mut(c, 1) = 1.0;
                }
            }
        }
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    /// Free latent factors (bias columns excluded).
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Stored factor columns: `rank + 2` when biases are enabled.
    pub fn k_total(&self) -> usize {
        self.rank + if self.bias_enabled { 2 } else { 0 }
    }

    pub fn bias_enabled(&self) -> bool {
        self.bias_enabled
    }

    pub fn num_rows(&self) -> usize {
        self.num_rows
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn variant(&self) -> Variant {
        self.weights.tag()
    }

    pub fn weights(&self) -> &VariantWeights {
        &self.weights
    }

    pub fn side_dim(&self) -> Option<usize> {
        self.side_weights.as_ref().map(|w| w[0].len())
    }

    pub fn has_global_offsets(&self) -> bool {
        self.global_offsets.is_some()
    }

    pub fn latent_frozen(&self) -> bool {
        self.latent_frozen
    }

    /// Exclude latent weights from the free-parameter set (cold-start
    /// stage two trains side weights against these frozen factors).
    pub fn set_latent_frozen(&mut self, frozen: bool) {
        self.latent_frozen = frozen;
    }

    /// Attach zero-initialized side-information weights to a dyadic model.
    pub fn add_side_weights(&mut self, dim: usize) -> Result<()> {
        if self.variant() != Variant::Dyadic {
            return Err(LflError::InvalidModel(
                "side-information weights are only defined for the dyadic variant".into(),
            ));
        }
        if self.side_weights.is_some() {
            return Err(LflError::InvalidModel(
                "model already has side weights".into(),
            ));
        }
        if dim == 0 {
            return Err(LflError::InvalidConfig(
                "side dimension must be positive".into(),
            ));
        }
        self.side_weights = Some(vec![vec![0.0; dim]; self.label_space.len()]);
        Ok(())
    }

    pub fn num_relations(&self) -> usize {
        match &self.weights {
            VariantWeights::MultiRelational { relation_scale, .. } => relation_scale.len(),
            _ => 0,
        }
    }

    pub fn set_names(&mut self, row_names: Option<Vec<String>>, col_names: Option<Vec<String>>) {
        self.row_names = row_names;
        self.col_names = col_names;
    }

    pub fn row_names(&self) -> Option<&[String]> {
        self.row_names.as_deref()
    }

    pub fn col_names(&self) -> Option<&[String]> {
        self.col_names.as_deref()
    }

    fn check_dyad(&self, dyad: &Dyad) -> Result<()> {
        if dyad.row >= self.num_rows {
            return Err(LflError::IndexOutOfBounds(format!(
                "row {} out of bounds for {} rows",
                dyad.row, self.num_rows
            )));
        }
        if dyad.col >= self.num_cols {
            return Err(LflError::IndexOutOfBounds(format!(
                "col {} out of bounds for {} cols",
                dyad.col, self.num_cols
            )));
        }
        match (&self.side_weights, &dyad.side) {
            (Some(w), Some(s)) => {
                if w[0].len() != s.len() {
                    return Err(LflError::SideDimMismatch {
                        expected: w[0].len(),
                        got: s.len(),
                    });
                }
            }
            (Some(w), None) => {
                return Err(LflError::SideDimMismatch {
                    expected: w[0].len(),
                    got: 0,
                })
            }
            (None, Some(s)) => {
                return Err(LflError::SideDimMismatch {
                    expected: 0,
                    got: s.len(),
                })
            }
            (None, None) => {}
        }
        if matches!(self.weights, VariantWeights::MultiRelational { .. }) {
            let t = dyad.relation.ok_or_else(|| {
                LflError::InvalidConfig("multi-relational prediction needs a relation".into())
            })?;
            if t >= self.num_relations() {
                return Err(LflError::IndexOutOfBounds(format!(
                    "relation {} out of bounds for {} relations",
                    t,
                    self.num_relations()
                )));
            }
        }
        Ok(())
    }

    /// Per-label scores with the base slot pinned at zero.
    pub fn scores(&self, dyad: &Dyad) -> Result<Vec<f64>> {
        self.check_dyad(dyad)?;
        Ok(self.scores_unchecked(dyad.row, dyad.col, dyad.side.as_deref(), dyad.relation))
    }

    /// Score kernel shared with the objective module; bounds already checked.
    pub(crate) fn scores_unchecked(
        &self,
        r: usize,
        c: usize,
        side: Option<&[f64]>,
        relation: Option<usize>,
    ) -> Vec<f64> {
        let mut scores = Vec::new();
        self.scores_into(r, c, side, relation, &mut scores);
        scores
    }

    /// Buffer-reusing form of [`scores_unchecked`](Self::scores_unchecked).
    pub(crate) fn scores_into(
        &self,
        r: usize,
        c: usize,
        side: Option<&[f64]>,
        relation: Option<usize>,
        scores: &mut Vec<f64>,
    ) {
        let num_labels = self.label_space.len();
        let base = self.label_space.base_index();
        scores.clear();
        scores.resize(num_labels, 0.0);
        match &self.weights {
            VariantWeights::Dyadic { row, col } => {
                for y in 0..num_labels {
                    if y == base {
                        continue;
                    }
                    let mut z = row[y].row_dot(r, &col[y], c);
                    if let (Some(ws), Some(s)) = (&self.side_weights, side) {
                        z += dot(&ws[y], s);
                    }
                    if let Some(offsets) = &self.global_offsets {
                        z += offsets[y];
                    }
                    scores[y] = z;
                }
            }
            VariantWeights::SymmetricLink { shared } => {
                for y in self.label_space.free_labels() {
                    scores[y] = shared.row_dot(r, shared, c);
                }
            }
            VariantWeights::DirectedLink {
                incoming,
                outgoing,
                node,
            } => {
                for y in self.label_space.free_labels() {
                    scores[y] = incoming.row_dot(r, outgoing, c) + node.row_dot(r, node, c);
                }
            }
            VariantWeights::MultiRelational {
                row,
                col,
                relation_scale,
            } => {
                let scale = &relation_scale[relation.expect("relation checked")];
                let z: f64 = row
                    .row(r)
                    .iter()
                    .zip(col.row(c))
                    .zip(scale)
                    .map(|((a, b), l)| a * l * b)
                    .sum();
                for y in self.label_space.free_labels() {
                    scores[y] = z;
                }
            }
            VariantWeights::Stereotype {
                base_row,
                base_col,
                mix,
            } => {
                let pair_scores: Vec<f64> = base_row
                    .iter()
                    .zip(base_col)
                    .map(|(a, b)| a.row_dot(r, b, c))
                    .collect();
                for y in 0..num_labels {
                    if y == base {
                        continue;
                    }
                    scores[y] = dot(&mix[y], &pair_scores);
                }
            }
        }
    }

    /// Conditional label distribution for a dyad.
    pub fn predict_proba(&self, dyad: &Dyad) -> Result<LabelDistribution> {
        Ok(LabelDistribution::from_scores(&self.scores(dyad)?))
    }

    /// Same as [`predict_proba`](Self::predict_proba) but insists the model
    /// is the bias-only log-linear baseline (rank 0, biases and offsets on).
    pub fn predict_proba_baseline(&self, dyad: &Dyad) -> Result<LabelDistribution> {
        if self.variant() != Variant::Dyadic
            || self.rank != 0
            || !self.bias_enabled
            || self.global_offsets.is_none()
        {
            return Err(LflError::InvalidModel(
                "baseline prediction expects a dyadic model with rank 0, biases, \
                 and global offsets"
                    .into(),
            ));
        }
        self.predict_proba(dyad)
    }

    /// Point prediction under the given rule.
    ///
    /// Mode applies to any label space; median and mean require an ordinal
    /// space with numeric values. Mode and median return labels, mean
    /// returns a real value.
    pub fn predict(&self, dyad: &Dyad, rule: PredictRule) -> Result<Prediction> {
        let dist = self.predict_proba(dyad)?;
        match rule {
            PredictRule::Mode => Ok(Prediction::Label(dist.mode_index())),
            PredictRule::Median => {
                self.require_ordinal("median prediction")?;
                Ok(Prediction::Label(dist.median_index()))
            }
            PredictRule::Mean => {
                self.require_ordinal("mean prediction")?;
                let values = self.label_space.numeric_values().expect("ordinal space");
                Ok(Prediction::Value(dist.mean(values)))
            }
        }
    }

    /// Mean-rule prediction as a real value.
    pub fn predict_mean(&self, dyad: &Dyad) -> Result<f64> {
        match self.predict(dyad, PredictRule::Mean)? {
            Prediction::Value(v) => Ok(v),
            Prediction::Label(_) => unreachable!("mean rule returns a value"),
        }
    }

    fn require_ordinal(&self, what: &str) -> Result<()> {
        if self.label_space.kind() != LabelKind::Ordinal {
            return Err(LflError::LabelKindMismatch(format!(
                "{what} requires an ordinal label space with numeric values"
            )));
        }
        Ok(())
    }

    /// p(edge) for a symmetric-link model: σ(α[r,:]·α[c,:]).
    pub fn predict_link_symmetric(&self, r: usize, c: usize) -> Result<f64> {
        let VariantWeights::SymmetricLink { shared } = &self.weights else {
            return Err(LflError::InvalidModel(
                "predict_link_symmetric needs a symmetric-link model".into(),
            ));
        };
        if r >= shared.rows() || c >= shared.rows() {
            return Err(LflError::IndexOutOfBounds(format!(
                "object pair ({r}, {c}) out of bounds for {} objects",
                shared.rows()
            )));
        }
        Ok(sigmoid(shared.row_dot(r, shared, c)))
    }

    /// p(edge) for a directed-link model: σ(α[r,:]·β[c,:] + γ[r,:]·γ[c,:]).
    pub fn predict_link_directed(&self, r: usize, c: usize) -> Result<f64> {
        let VariantWeights::DirectedLink {
            incoming,
            outgoing,
            node,
        } = &self.weights
        else {
            return Err(LflError::InvalidModel(
                "predict_link_directed needs a directed-link model".into(),
            ));
        };
        if r >= incoming.rows() || c >= incoming.rows() {
            return Err(LflError::IndexOutOfBounds(format!(
                "object pair ({r}, {c}) out of bounds for {} objects",
                incoming.rows()
            )));
        }
        Ok(sigmoid(
            incoming.row_dot(r, outgoing, c) + node.row_dot(r, node, c),
        ))
    }

    /// p(relation t holds) for a multi-relational model: σ(α[r,:] Λ[t] β[c,:]ᵀ).
    pub fn predict_multirelational(&self, r: usize, c: usize, relation: usize) -> Result<f64> {
        if !matches!(self.weights, VariantWeights::MultiRelational { .. }) {
            return Err(LflError::InvalidModel(
                "predict_multirelational needs a multi-relational model".into(),
            ));
        }
        let dyad = Dyad::new(r, c).with_relation(relation);
        self.check_dyad(&dyad)?;
        let scores = self.scores_unchecked(r, c, None, Some(relation));
        let free = self.label_space.free_labels().next().expect("binary");
        Ok(sigmoid(scores[free]))
    }

    /// Effective per-label weight pair of a stereotype model: the scaled
    /// concatenation (φ[y][i]·α̃[i] | i) and (β̃[i] | i), whose bilinear
    /// product equals Σ_i φ[y][i] α̃[i] β̃[i]ᵀ.
    pub fn expand_stereotype(&self, label: usize) -> Result<(Mat, Mat)> {
        let VariantWeights::Stereotype {
            base_row,
            base_col,
            mix,
        } = &self.weights
        else {
            return Err(LflError::InvalidModel(
                "expand_stereotype needs a stereotype model".into(),
            ));
        };
        if label >= self.label_space.len() {
            return Err(LflError::IndexOutOfBounds(format!(
                "label {label} out of bounds"
            )));
        }
        let k = self.k_total();
        let pairs = base_row.len();
        let mut row_eff = Mat::zeros(self.num_rows, pairs * k);
        let mut col_eff = Mat::zeros(self.num_cols, pairs * k);
        for i in 0..pairs {
            for r in 0..self.num_rows {
                for j in 0..k {
                    *row_eff.at_mut(r, i * k + j) = mix[label][i] * base_row[i].at(r, j);
                }
            }
            for c in 0..self.num_cols {
                for j in 0..k {
                    *col_eff.at_mut(c, i * k + j) = base_col[i].at(c, j);
                }
            }
        }
        Ok((row_eff, col_eff))
    }

    /// Serialize to a self-describing JSON document.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Doc<'a> {
            format: &'static str,
            model: &'a LflModel,
        }
        Ok(serde_json::to_string_pretty(&Doc {
            format: MODEL_FORMAT,
            model: self,
        })?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Doc {
            format: String,
            model: LflModel,
        }
        let doc: Doc = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT {
            return Err(LflError::InvalidModel(format!(
                "unsupported model format {:?} (expected {MODEL_FORMAT:?})",
                doc.format
            )));
        }
        doc.model.validate()?;
        Ok(doc.model)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Check structural invariants: shapes, base-label pinning, frozen bias
    /// constants. Run on every deserialized model.
    pub fn validate(&self) -> Result<()> {
        let num_labels = self.label_space.len();
        let base = self.label_space.base_index();
        let k_total = self.k_total();
        let fail = |msg: String| Err(LflError::InvalidModel(msg));
        match &self.weights {
            VariantWeights::Dyadic { row, col } => {
                if row.len() != num_labels || col.len() != num_labels {
                    return fail("per-label weight count differs from label count".into());
                }
                for (y, (rw, cw)) in row.iter().zip(col).enumerate() {
                    if rw.rows() != self.num_rows
                        || cw.rows() != self.num_cols
                        || rw.cols() != k_total
                        || cw.cols() != k_total
                    {
                        return fail(format!("label {y} weight shape mismatch"));
                    }
                    if y == base {
                        if rw.as_slice().iter().any(|&w| w != 0.0)
                            || cw.as_slice().iter().any(|&w| w != 0.0)
                        {
                            return fail("base-label weights must be zero".into());
                        }
                    } else if self.bias_enabled {
                        for r in 0..rw.rows() {
                            if rw.at(r, 0) != 1.0 {
                                return fail("row bias column must be frozen at 1".into());
                            }
                        }
                        for c in 0..cw.rows() {
                            if cw.at(c, 1) != 1.0 {
                                return fail("column bias column must be frozen at 1".into());
                            }
                        }
                    }
                }
            }
            VariantWeights::SymmetricLink { shared } => {
                if num_labels != 2 || self.num_rows != self.num_cols {
                    return fail("symmetric-link model must be binary over one object set".into());
                }
                if shared.rows() != self.num_rows || shared.cols() != k_total {
                    return fail("shared weight shape mismatch".into());
                }
            }
            VariantWeights::DirectedLink {
                incoming,
                outgoing,
                node,
            } => {
                if num_labels != 2 || self.num_rows != self.num_cols {
                    return fail("directed-link model must be binary over one object set".into());
                }
                for m in [incoming, outgoing, node] {
                    if m.rows() != self.num_rows || m.cols() != k_total {
                        return fail("directed-link weight shape mismatch".into());
                    }
                }
            }
            VariantWeights::MultiRelational {
                row,
                col,
                relation_scale,
            } => {
                if num_labels != 2 {
                    return fail("multi-relational model must be binary per relation".into());
                }
                if row.rows() != self.num_rows
                    || col.rows() != self.num_cols
                    || row.cols() != k_total
                    || col.cols() != k_total
                {
                    return fail("multi-relational weight shape mismatch".into());
                }
                if relation_scale.is_empty()
                    || relation_scale.iter().any(|s| s.len() != k_total)
                {
                    return fail("relation scaling shape mismatch".into());
                }
            }
            VariantWeights::Stereotype {
                base_row,
                base_col,
                mix,
            } => {
                if base_row.is_empty() || base_row.len() != base_col.len() {
                    return fail("stereotype base pair shape mismatch".into());
                }
                for (a, b) in base_row.iter().zip(base_col) {
                    if a.rows() != self.num_rows
                        || b.rows() != self.num_cols
                        || a.cols() != k_total
                        || b.cols() != k_total
                    {
                        return fail("stereotype base pair shape mismatch".into());
                    }
                }
                if mix.len() != num_labels || mix.iter().any(|m| m.len() != base_row.len()) {
                    return fail("stereotype mixing shape mismatch".into());
                }
                if mix[base].iter().any(|&phi| phi != 0.0) {
                    return fail("base-label mixing scalars must be zero".into());
                }
            }
        }
        if let Some(ws) = &self.side_weights {
            if ws.len() != num_labels {
                return fail("side-weight label count mismatch".into());
            }
            let dim = ws[0].len();
            if ws.iter().any(|w| w.len() != dim) {
                return fail("side-weight dimension mismatch".into());
            }
            if ws[base].iter().any(|&w| w != 0.0) {
                return fail("base-label side weights must be zero".into());
            }
        }
        if let Some(offsets) = &self.global_offsets {
            if offsets.len() != num_labels {
                return fail("offset label count mismatch".into());
            }
            if offsets[base] != 0.0 {
                return fail("base-label offset must be zero".into());
            }
        }
        Ok(())
    }
}
