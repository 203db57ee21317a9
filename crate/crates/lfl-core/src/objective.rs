//! Training objectives, regularization, and analytic gradients.
//!
//! The free parameters of a model are enumerated in one canonical flat
//! order, shared by [`LflModel::free_params`], [`gradient`], and the batch
//! optimizer:
//!
//! - dyadic: per non-base label (ascending): row block, column block, side
//!   block, offset — all row-major, frozen bias columns skipped;
//! - symmetric link: the shared matrix;
//! - directed link: incoming, outgoing, node matrices;
//! - multi-relational: row matrix, column matrix, per-relation scalings;
//! - stereotype: base pairs (row then column per pair), then per-label
//!   mixing scalars.
//!
//! Base-label blocks and frozen bias constants have no position in this
//! order, so no optimizer step can touch them. With `latent_frozen` set on
//! the model, only side-information weights remain free.

use serde::{Deserialize, Serialize};

use crate::data::DyadDataset;
use crate::error::LflError;
use crate::labels::LabelKind;
use crate::model::{LflModel, Variant, VariantWeights};
use crate::Result;

/// Loss component of the training objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveKind {
    /// Regularized negative conditional log-likelihood.
    Nll,
    /// Mean absolute error of the expected label.
    Mae,
    /// Mean squared error of the expected label.
    Mse,
}

impl std::str::FromStr for ObjectiveKind {
    type Err = LflError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nll" => Ok(ObjectiveKind::Nll),
            "mae" => Ok(ObjectiveKind::Mae),
            "mse" => Ok(ObjectiveKind::Mse),
            other => Err(LflError::InvalidConfig(format!(
                "unknown objective {other:?} (expected nll, mae, or mse)"
            ))),
        }
    }
}

/// Objective = loss + L2 penalty configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub kind: ObjectiveKind,
    /// Penalty strength for latent weights (factors, biases, offsets,
    /// mixing and relation scalars).
    pub l2_latent: f64,
    /// Penalty strength for side-information weights.
    pub l2_side: f64,
    /// Scale each object's block penalty by 1/sqrt(its dyad count in the
    /// training set); objects with no observations keep multiplier 1.
    pub count_scaled: bool,
}

impl Default for Objective {
    fn default() -> Self {
        Objective {
            kind: ObjectiveKind::Nll,
            l2_latent: 0.1,
            l2_side: 0.1,
            count_scaled: false,
        }
    }
}

impl Objective {
    pub fn new(kind: ObjectiveKind, l2_latent: f64, l2_side: f64) -> Self {
        Objective {
            kind,
            l2_latent,
            l2_side,
            count_scaled: false,
        }
    }

    pub fn nll(l2: f64) -> Self {
        Self::new(ObjectiveKind::Nll, l2, l2)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("l2_latent", self.l2_latent), ("l2_side", self.l2_side)] {
            if !v.is_finite() || v < 0.0 {
                return Err(LflError::InvalidConfig(format!(
                    "{name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// One free parameter's address within a model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Slot {
    Row { y: usize, r: usize, j: usize },
    Col { y: usize, c: usize, j: usize },
    Side { y: usize, d: usize },
    Offset { y: usize },
    Shared { o: usize, j: usize },
    Incoming { o: usize, j: usize },
    Outgoing { o: usize, j: usize },
    Node { o: usize, j: usize },
    MrRow { r: usize, i: usize },
    MrCol { c: usize, i: usize },
    RelScale { t: usize, i: usize },
    MixPhi { y: usize, i: usize },
    BaseRow { i: usize, r: usize, j: usize },
    BaseCol { i: usize, c: usize, j: usize },
}

/// Flat addressing of a model's free parameters.
#[derive(Debug, Clone)]
pub struct ParamLayout {
    variant: Variant,
    num_labels: usize,
    base: usize,
    k_total: usize,
    bias: bool,
    num_rows: usize,
    num_cols: usize,
    side_dim: usize,
    has_offsets: bool,
    latent_frozen: bool,
    base_pairs: usize,
    num_relations: usize,
    total: usize,
}

impl ParamLayout {
    pub fn of(model: &LflModel) -> Self {
        let (base_pairs, num_relations) = match model.weights() {
            VariantWeights::Stereotype { base_row, .. } => (base_row.len(), 0),
            VariantWeights::MultiRelational { relation_scale, .. } => (0, relation_scale.len()),
            _ => (0, 0),
        };
        let mut layout = ParamLayout {
            variant: model.variant(),
            num_labels: model.label_space().len(),
            base: model.label_space().base_index(),
            k_total: model.k_total(),
            bias: model.bias_enabled(),
            num_rows: model.num_rows(),
            num_cols: model.num_cols(),
            side_dim: model.side_dim().unwrap_or(0),
            has_offsets: model.has_global_offsets(),
            latent_frozen: model.latent_frozen(),
            base_pairs,
            num_relations,
            total: 0,
        };
        layout.total = layout.compute_total();
        layout
    }

    pub fn total(&self) -> usize {
        self.total
    }

    fn free_labels(&self) -> usize {
        self.num_labels - 1
    }

    /// Free columns per row-weight row (bias column 0 is frozen).
    fn free_row_cols(&self) -> usize {
        if self.latent_frozen {
            0
        } else if self.bias {
            self.k_total - 1
        } else {
            self.k_total
        }
    }

    fn free_col_cols(&self) -> usize {
        self.free_row_cols()
    }

    fn map_row_j(&self, j: usize) -> Option<usize> {
        if self.bias {
            if j == 0 {
                None
            } else {
                Some(j - 1)
            }
        } else {
            Some(j)
        }
    }

    fn map_col_j(&self, j: usize) -> Option<usize> {
        if self.bias {
            if j == 1 {
                None
            } else if j == 0 {
                Some(0)
            } else {
                Some(j - 1)
            }
        } else {
            Some(j)
        }
    }

    fn label_pos(&self, y: usize) -> Option<usize> {
        use std::cmp::Ordering;
        match y.cmp(&self.base) {
            Ordering::Less => Some(y),
            Ordering::Equal => None,
            Ordering::Greater => Some(y - 1),
        }
    }

    fn dyadic_block(&self) -> usize {
        let latent = self.num_rows * self.free_row_cols() + self.num_cols * self.free_col_cols();
        let offset = usize::from(self.has_offsets && !self.latent_frozen);
        latent + self.side_dim + offset
    }

    fn compute_total(&self) -> usize {
        let latent_k = if self.latent_frozen { 0 } else { self.k_total };
        match self.variant {
            Variant::Dyadic => self.free_labels() * self.dyadic_block(),
            Variant::SymmetricLink => self.num_rows * latent_k,
            Variant::DirectedLink => 3 * self.num_rows * latent_k,
            Variant::MultiRelational => {
                (self.num_rows + self.num_cols + self.num_relations) * latent_k
            }
            Variant::Stereotype => {
                self.base_pairs * (self.num_rows + self.num_cols) * latent_k
                    + if self.latent_frozen {
                        0
                    } else {
                        self.free_labels() * self.base_pairs
                    }
            }
        }
    }

    /// Flat index of a slot; `None` for frozen or base-label entries.
    pub(crate) fn index(&self, slot: Slot) -> Option<usize> {
        let k = self.k_total;
        match slot {
            Slot::Row { y, r, j } => {
                if self.latent_frozen {
                    return None;
                }
                let lp = self.label_pos(y)?;
                let jp = self.map_row_j(j)?;
                Some(lp * self.dyadic_block() + r * self.free_row_cols() + jp)
            }
            Slot::Col { y, c, j } => {
                if self.latent_frozen {
                    return None;
                }
                let lp = self.label_pos(y)?;
                let jp = self.map_col_j(j)?;
                Some(
                    lp * self.dyadic_block()
                        + self.num_rows * self.free_row_cols()
                        + c * self.free_col_cols()
                        + jp,
                )
            }
            Slot::Side { y, d } => {
                if self.side_dim == 0 {
                    return None;
                }
                let lp = self.label_pos(y)?;
                Some(
                    lp * self.dyadic_block()
                        + self.num_rows * self.free_row_cols()
                        + self.num_cols * self.free_col_cols()
                        + d,
                )
            }
            Slot::Offset { y } => {
                if !self.has_offsets || self.latent_frozen {
                    return None;
                }
                let lp = self.label_pos(y)?;
                Some(
                    lp * self.dyadic_block()
                        + self.num_rows * self.free_row_cols()
                        + self.num_cols * self.free_col_cols()
                        + self.side_dim,
                )
            }
            Slot::Shared { o, j } => {
                if self.latent_frozen {
                    return None;
                }
                Some(o * k + j)
            }
            Slot::Incoming { o, j } => {
                if self.latent_frozen {
                    return None;
                }
                Some(o * k + j)
            }
            Slot::Outgoing { o, j } => {
                if self.latent_frozen {
                    return None;
                }
                Some(self.num_rows * k + o * k + j)
            }
            Slot::Node { o, j } => {
                if self.latent_frozen {
                    return None;
                }
                Some(2 * self.num_rows * k + o * k + j)
            }
            Slot::MrRow { r, i } => {
                if self.latent_frozen {
                    return None;
                }
                Some(r * k + i)
            }
            Slot::MrCol { c, i } => {
                if self.latent_frozen {
                    return None;
                }
                Some(self.num_rows * k + c * k + i)
            }
            Slot::RelScale { t, i } => {
                if self.latent_frozen {
                    return None;
                }
                Some((self.num_rows + self.num_cols) * k + t * k + i)
            }
            Slot::MixPhi { y, i } => {
                if self.latent_frozen {
                    return None;
                }
                let lp = self.label_pos(y)?;
                Some(
                    self.base_pairs * (self.num_rows + self.num_cols) * k
                        + lp * self.base_pairs
                        + i,
                )
            }
            Slot::BaseRow { i, r, j } => {
                if self.latent_frozen {
                    return None;
                }
                Some(i * (self.num_rows + self.num_cols) * k + r * k + j)
            }
            Slot::BaseCol { i, c, j } => {
                if self.latent_frozen {
                    return None;
                }
                Some(i * (self.num_rows + self.num_cols) * k + self.num_rows * k + c * k + j)
            }
        }
    }
}

/// Visit every free slot in canonical order.
pub(crate) fn for_each_slot(model: &LflModel, mut f: impl FnMut(Slot)) {
    let layout = ParamLayout::of(model);
    let k = layout.k_total;
    match model.weights() {
        VariantWeights::Dyadic { .. } => {
            for y in model.label_space().free_labels() {
                if !layout.latent_frozen {
                    for r in 0..layout.num_rows {
                        for j in 0..k {
                            if layout.map_row_j(j).is_some() {
                                f(Slot::Row { y, r, j });
                            }
                        }
                    }
                    for c in 0..layout.num_cols {
                        for j in 0..k {
                            if layout.map_col_j(j).is_some() {
                                f(Slot::Col { y, c, j });
                            }
                        }
                    }
                }
                for d in 0..layout.side_dim {
                    f(Slot::Side { y, d });
                }
                if layout.has_offsets && !layout.latent_frozen {
                    f(Slot::Offset { y });
                }
            }
        }
        VariantWeights::SymmetricLink { .. } => {
            if !layout.latent_frozen {
                for o in 0..layout.num_rows {
                    for j in 0..k {
                        f(Slot::Shared { o, j });
                    }
                }
            }
        }
        VariantWeights::DirectedLink { .. } => {
            if !layout.latent_frozen {
                for o in 0..layout.num_rows {
                    for j in 0..k {
                        f(Slot::Incoming { o, j });
                    }
                }
                for o in 0..layout.num_rows {
                    for j in 0..k {
                        f(Slot::Outgoing { o, j });
                    }
                }
                for o in 0..layout.num_rows {
                    for j in 0..k {
                        f(Slot::Node { o, j });
                    }
                }
            }
        }
        VariantWeights::MultiRelational { .. } => {
            if !layout.latent_frozen {
                for r in 0..layout.num_rows {
                    for i in 0..k {
                        f(Slot::MrRow { r, i });
                    }
                }
                for c in 0..layout.num_cols {
                    for i in 0..k {
                        f(Slot::MrCol { c, i });
                    }
                }
                for t in 0..layout.num_relations {
                    for i in 0..k {
                        f(Slot::RelScale { t, i });
                    }
                }
            }
        }
        VariantWeights::Stereotype { .. } => {
            if !layout.latent_frozen {
                for i in 0..layout.base_pairs {
                    for r in 0..layout.num_rows {
                        for j in 0..k {
                            f(Slot::BaseRow { i, r, j });
                        }
                    }
                    for c in 0..layout.num_cols {
                        for j in 0..k {
                            f(Slot::BaseCol { i, c, j });
                        }
                    }
                }
                for y in model.label_space().free_labels() {
                    for i in 0..layout.base_pairs {
                        f(Slot::MixPhi { y, i });
                    }
                }
            }
        }
    }
}

impl LflModel {
    pub(crate) fn slot_get(&self, slot: Slot) -> f64 {
        match (slot, self.weights()) {
            (Slot::Row { y, r, j }, VariantWeights::Dyadic { row, .. }) => row[y].at(r, j),
            (Slot::Col { y, c, j }, VariantWeights::Dyadic { col, .. }) => col[y].at(c, j),
            (Slot::Side { y, d }, _) => self.side_weights.as_ref().unwrap()[y][d],
            (Slot::Offset { y }, _) => self.global_offsets.as_ref().unwrap()[y],
            (Slot::Shared { o, j }, VariantWeights::SymmetricLink { shared }) => shared.at(o, j),
            (Slot::Incoming { o, j }, VariantWeights::DirectedLink { incoming, .. }) => {
                incoming.at(o, j)
            }
            (Slot::Outgoing { o, j }, VariantWeights::DirectedLink { outgoing, .. }) => {
                outgoing.at(o, j)
            }
            (Slot::Node { o, j }, VariantWeights::DirectedLink { node, .. }) => node.at(o, j),
            (Slot::MrRow { r, i }, VariantWeights::MultiRelational { row, .. }) => row.at(r, i),
            (Slot::MrCol { c, i }, VariantWeights::MultiRelational { col, .. }) => col.at(c, i),
            (Slot::RelScale { t, i }, VariantWeights::MultiRelational { relation_scale, .. }) => {
                relation_scale[t][i]
            }
            (Slot::MixPhi { y, i }, VariantWeights::Stereotype { mix, .. }) => mix[y][i],
            (Slot::BaseRow { i, r, j }, VariantWeights::Stereotype { base_row, .. }) => {
                base_row[i].at(r, j)
            }
            (Slot::BaseCol { i, c, j }, VariantWeights::Stereotype { base_col, .. }) => {
                base_col[i].at(c, j)
            }
            _ => unreachable!("slot does not match model variant"),
        }
    }

    pub(crate) fn slot_add(&mut self, slot: Slot, delta: f64) {
        let v = self.slot_mut(slot);
        *v += delta;
    }

    pub(crate) fn slot_set(&mut self, slot: Slot, value: f64) {
        *self.slot_mut(slot) = value;
    }

    fn slot_mut(&mut self, slot: Slot) -> &mut f64 {
        match slot {
            Slot::Side { y, d } => return &mut self.side_weights.as_mut().unwrap()[y][d],
            Slot::Offset { y } => return &mut self.global_offsets.as_mut().unwrap()[y],
            _ => {}
        }
        match (slot, &mut self.weights) {
            (Slot::Row { y, r, j }, VariantWeights::Dyadic { row, .. }) => row[y].at_mut(r, j),
            (Slot::Col { y, c, j }, VariantWeights::Dyadic { col, .. }) => col[y].at_mut(c, j),
            (Slot::Shared { o, j }, VariantWeights::SymmetricLink { shared }) => shared.at_mut(o, j),
            (Slot::Incoming { o, j }, VariantWeights::DirectedLink { incoming, .. }) => {
                incoming.at_mut(o, j)
            }
            (Slot::Outgoing { o, j }, VariantWeights::DirectedLink { outgoing, .. }) => {
                outgoing.at_mut(o, j)
            }
            (Slot::Node { o, j }, VariantWeights::DirectedLink { node, .. }) => node.at_mut(o, j),
            (Slot::MrRow { r, i }, VariantWeights::MultiRelational { row, .. }) => row.at_mut(r, i),
            (Slot::MrCol { c, i }, VariantWeights::MultiRelational { col, .. }) => col.at_mut(c, i),
            (Slot::RelScale { t, i }, VariantWeights::MultiRelational { relation_scale, .. }) => {
                &mut relation_scale[t][i]
            }
            (Slot::MixPhi { y, i }, VariantWeights::Stereotype { mix, .. }) => &mut mix[y][i],
            (Slot::BaseRow { i, r, j }, VariantWeights::Stereotype { base_row, .. }) => {
                base_row[i].at_mut(r, j)
            }
            (Slot::BaseCol { i, c, j }, VariantWeights::Stereotype { base_col, .. }) => {
                base_col[i].at_mut(c, j)
            }
            _ => unreachable!("slot does not match model variant"),
        }
    }

    /// Number of free parameters.
    pub fn free_param_count(&self) -> usize {
        ParamLayout::of(self).total()
    }

    /// Free parameters in canonical order.
    pub fn free_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.free_param_count());
        for_each_slot(self, |slot| out.push(self.slot_get(slot)));
        out
    }

    /// Overwrite the free parameters from canonical order. Frozen entries
    /// (base labels, bias constants) are untouched by construction.
    pub fn set_free_params(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.free_param_count() {
            return Err(LflError::InvalidConfig(format!(
                "expected {} free parameters, got {}",
                self.free_param_count(),
                values.len()
            )));
        }
        let mut slots = Vec::with_capacity(values.len());
        for_each_slot(self, |slot| slots.push(slot));
        for (slot, &v) in slots.iter().zip(values) {
            self.slot_set(*slot, v);
        }
        Ok(())
    }
}

/// Gradient over a model's free parameters, in canonical layout order.
///
/// Entries for base-label weights and frozen bias constants are structurally
/// absent: they have no position in the layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    values: Vec<f64>,
}

impl GradientSet {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Penalty strengths and per-object count multipliers.
///
/// Count scaling multiplies an object's block penalty by 1/sqrt(its dyad
/// count in the training split); objects appearing in both roles (shared and
/// node matrices of link models) count their row and column observations
/// together.
pub(crate) struct RegContext {
    row_scale: Vec<f64>,
    col_scale: Vec<f64>,
    combined_scale: Vec<f64>,
    enabled: bool,
    l2_latent: f64,
    l2_side: f64,
}

impl RegContext {
    pub(crate) fn new(objective: &Objective, dataset: &DyadDataset) -> Self {
        let scale = |n: usize| if n == 0 { 1.0 } else { 1.0 / (n as f64).sqrt() };
        let enabled = objective.count_scaled;
        let (row_scale, col_scale, combined_scale) = if enabled {
            let rows = dataset.row_obs_counts();
            let cols = dataset.col_obs_counts();
            let combined: Vec<f64> = (0..rows.len().max(cols.len()))
                .map(|o| {
                    let n = rows.get(o).copied().unwrap_or(0) + cols.get(o).copied().unwrap_or(0);
                    scale(n)
                })
                .collect();
            (
                rows.iter().map(|&n| scale(n)).collect(),
                cols.iter().map(|&n| scale(n)).collect(),
                combined,
            )
        } else {
            (Vec::new(), Vec::new(), Vec::new())
        };
        RegContext {
            row_scale,
            col_scale,
            combined_scale,
            enabled,
            l2_latent: objective.l2_latent,
            l2_side: objective.l2_side,
        }
    }

    /// (penalty strength, count multiplier) for one slot.
    pub(crate) fn of(&self, slot: Slot) -> (f64, f64) {
        if !self.enabled {
            let strength = match slot {
                Slot::Side { .. } => self.l2_side,
                _ => self.l2_latent,
            };
            return (strength, 1.0);
        }
        match slot {
            Slot::Side { .. } => (self.l2_side, 1.0),
            Slot::Row { r, .. } | Slot::BaseRow { r, .. } | Slot::MrRow { r, .. } => {
                (self.l2_latent, self.row_scale[r])
            }
            Slot::Col { c, .. } | Slot::BaseCol { c, .. } | Slot::MrCol { c, .. } => {
                (self.l2_latent, self.col_scale[c])
            }
            Slot::Incoming { o, .. } => (self.l2_latent, self.row_scale[o]),
            Slot::Outgoing { o, .. } => (self.l2_latent, self.col_scale[o]),
            Slot::Shared { o, .. } | Slot::Node { o, .. } => {
                (self.l2_latent, self.combined_scale[o])
            }
            Slot::Offset { .. } | Slot::RelScale { .. } | Slot::MixPhi { .. } => {
                (self.l2_latent, 1.0)
            }
        }
    }
}

/// Reusable per-example buffers.
pub(crate) struct ExampleWorkspace {
    scores: Vec<f64>,
    probs: Vec<f64>,
    pub(crate) dz: Vec<f64>,
    pub(crate) emissions: Vec<(Slot, f64)>,
}

impl ExampleWorkspace {
    pub(crate) fn new() -> Self {
        ExampleWorkspace {
            scores: Vec::new(),
            probs: Vec::new(),
            dz: Vec::new(),
            emissions: Vec::new(),
        }
    }
}

/// Compute one example's loss and fill `ws.dz` with the derivative of the
/// loss with respect to each non-base label's score.
///
/// NLL: dz[Y] = p(Y) - 1[Y = y]. MAE/MSE chain through the expected label
/// R = Σ_y v_y p(y): dR/dz_Y = p(Y)(v_Y - R), with the MAE subgradient
/// sign(R - v_y) taken as 0 at zero residual.
pub(crate) fn example_loss_and_dz(
    model: &LflModel,
    r: usize,
    c: usize,
    side: Option<&[f64]>,
    relation: Option<usize>,
    label: usize,
    kind: ObjectiveKind,
    ws: &mut ExampleWorkspace,
) -> f64 {
    model.scores_into(r, c, side, relation, &mut ws.scores);
    let num_labels = ws.scores.len();
    // Softmax with max-subtraction.
    let max = ws.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ws.probs.clear();
    ws.probs.extend(ws.scores.iter().map(|&z| (z - max).exp()));
    let total: f64 = ws.probs.iter().sum();
    for p in &mut ws.probs {
        *p /= total;
    }
    ws.dz.clear();
    ws.dz.resize(num_labels, 0.0);
    let base = model.label_space().base_index();
    match kind {
        ObjectiveKind::Nll => {
            for y in 0..num_labels {
                if y != base {
                    ws.dz[y] = ws.probs[y] - f64::from(y == label);
                }
            }
            -ws.probs[label].ln()
        }
        ObjectiveKind::Mae | ObjectiveKind::Mse => {
            let values = model
                .label_space()
                .numeric_values()
                .expect("ordinal objective checked upstream");
            let expected: f64 = ws
                .probs
                .iter()
                .zip(values)
                .map(|(p, v)| p * v)
                .sum();
            let resid = expected - values[label];
            let outer = match kind {
                ObjectiveKind::Mae => {
                    if resid > 0.0 {
                        1.0
                    } else if resid < 0.0 {
                        -1.0
                    } else {
                        0.0
                    }
                }
                ObjectiveKind::Mse => 2.0 * resid,
                ObjectiveKind::Nll => unreachable!(),
            };
            for y in 0..num_labels {
                if y != base {
                    ws.dz[y] = outer * ws.probs[y] * (values[y] - expected);
                }
            }
            match kind {
                ObjectiveKind::Mae => resid.abs(),
                ObjectiveKind::Mse => resid * resid,
                ObjectiveKind::Nll => unreachable!(),
            }
        }
    }
}

/// Emit one example's loss-gradient contributions as (slot, value) pairs.
///
/// Frozen entries are never emitted and each slot appears at most once, so
/// SGD can fold its per-example regularization share over the emission list
/// without double counting.
pub(crate) fn emit_example_gradient(
    model: &LflModel,
    r: usize,
    c: usize,
    side: Option<&[f64]>,
    relation: Option<usize>,
    dz: &[f64],
    out: &mut Vec<(Slot, f64)>,
) {
    out.clear();
    let frozen = model.latent_frozen();
    let k = model.k_total();
    let bias = model.bias_enabled();
    match model.weights() {
        VariantWeights::Dyadic { row, col } => {
            for y in model.label_space().free_labels() {
                let g = dz[y];
                if !frozen {
                    for j in 0..k {
                        if !(bias && j == 0) {
                            out.push((Slot::Row { y, r, j }, g * col[y].at(c, j)));
                        }
                        if !(bias && j == 1) {
                            out.push((Slot::Col { y, c, j }, g * row[y].at(r, j)));
                        }
                    }
                    if model.has_global_offsets() {
                        out.push((Slot::Offset { y }, g));
                    }
                }
                if let Some(s) = side {
                    if model.side_dim().is_some() {
                        for (d, &sv) in s.iter().enumerate() {
                            out.push((Slot::Side { y, d }, g * sv));
                        }
                    }
                }
            }
        }
        VariantWeights::SymmetricLink { shared } => {
            if frozen {
                return;
            }
            let y = model.label_space().free_labels().next().expect("binary");
            let g = dz[y];
            if r == c {
                for j in 0..k {
                    out.push((Slot::Shared { o: r, j }, 2.0 * g * shared.at(r, j)));
                }
            } else {
                for j in 0..k {
                    out.push((Slot::Shared { o: r, j }, g * shared.at(c, j)));
                    out.push((Slot::Shared { o: c, j }, g * shared.at(r, j)));
                }
            }
        }
        VariantWeights::DirectedLink {
            incoming,
            outgoing,
            node,
        } => {
            if frozen {
                return;
            }
            let y = model.label_space().free_labels().next().expect("binary");
            let g = dz[y];
            for j in 0..k {
                out.push((Slot::Incoming { o: r, j }, g * outgoing.at(c, j)));
                out.push((Slot::Outgoing { o: c, j }, g * incoming.at(r, j)));
                if r == c {
                    out.push((Slot::Node { o: r, j }, 2.0 * g * node.at(r, j)));
                } else {
                    out.push((Slot::Node { o: r, j }, g * node.at(c, j)));
                    out.push((Slot::Node { o: c, j }, g * node.at(r, j)));
                }
            }
        }
        VariantWeights::MultiRelational {
            row,
            col,
            relation_scale,
        } => {
            if frozen {
                return;
            }
            let y = model.label_space().free_labels().next().expect("binary");
            let g = dz[y];
            let t = relation.expect("relation checked upstream");
            let scale = &relation_scale[t];
            for i in 0..k {
                out.push((Slot::MrRow { r, i }, g * scale[i] * col.at(c, i)));
                out.push((Slot::MrCol { c, i }, g * scale[i] * row.at(r, i)));
                out.push((Slot::RelScale { t, i }, g * row.at(r, i) * col.at(c, i)));
            }
        }
        VariantWeights::Stereotype {
            base_row,
            base_col,
            mix,
        } => {
            if frozen {
                return;
            }
            let pairs = base_row.len();
            for i in 0..pairs {
                let pair_score = base_row[i].row_dot(r, &base_col[i], c);
                // dz folded over labels for the shared pair weights.
                let mut coeff = 0.0;
                for y in model.label_space().free_labels() {
                    let g = dz[y];
                    out.push((Slot::MixPhi { y, i }, g * pair_score));
                    coeff += g * mix[y][i];
                }
                for j in 0..k {
                    out.push((Slot::BaseRow { i, r, j }, coeff * base_col[i].at(c, j)));
                    out.push((Slot::BaseCol { i, c, j }, coeff * base_row[i].at(r, j)));
                }
            }
        }
    }
}

/// Sanity checks shared by the objective/gradient entry points.
pub(crate) fn check_compat(model: &LflModel, dataset: &DyadDataset) -> Result<()> {
    if dataset.row_count() != model.num_rows() || dataset.col_count() != model.num_cols() {
        return Err(LflError::InvalidConfig(format!(
            "dataset is {}x{} but model is {}x{}",
            dataset.row_count(),
            dataset.col_count(),
            model.num_rows(),
            model.num_cols()
        )));
    }
    if dataset.label_space().len() != model.label_space().len() {
        return Err(LflError::InvalidConfig(
            "dataset and model label counts differ".into(),
        ));
    }
    match (model.side_dim(), dataset.side_dim()) {
        (Some(m), Some(d)) if m != d => {
            return Err(LflError::SideDimMismatch {
                expected: m,
                got: d,
            })
        }
        (Some(m), None) => {
            return Err(LflError::SideDimMismatch {
                expected: m,
                got: 0,
            })
        }
        (None, Some(d)) if d > 0 => {
            return Err(LflError::SideDimMismatch {
                expected: 0,
                got: d,
            })
        }
        _ => {}
    }
    if model.variant() == Variant::MultiRelational {
        if dataset.relations().is_none() {
            return Err(LflError::InvalidConfig(
                "multi-relational model needs per-example relations".into(),
            ));
        }
        if dataset.num_relations() > model.num_relations() {
            return Err(LflError::IndexOutOfBounds(format!(
                "dataset has {} relations but model stores {}",
                dataset.num_relations(),
                model.num_relations()
            )));
        }
    }
    for (i, ex) in dataset.examples().iter().enumerate() {
        if ex.label >= model.label_space().len() {
            return Err(LflError::IndexOutOfBounds(format!(
                "example {i} label {} out of bounds",
                ex.label
            )));
        }
    }
    Ok(())
}

fn check_objective_kind(model: &LflModel, objective: &Objective) -> Result<()> {
    if matches!(objective.kind, ObjectiveKind::Mae | ObjectiveKind::Mse)
        && model.label_space().kind() != LabelKind::Ordinal
    {
        return Err(LflError::LabelKindMismatch(
            "mae/mse objectives need an ordinal label space".into(),
        ));
    }
    Ok(())
}

/// Regularized objective value over a dataset.
///
/// An empty dataset is allowed and yields the pure penalty term, which is
/// what the ridge-only optimizer tests exercise.
pub fn objective_value(
    model: &LflModel,
    dataset: &DyadDataset,
    objective: &Objective,
) -> Result<f64> {
    objective.validate()?;
    check_compat(model, dataset)?;
    check_objective_kind(model, objective)?;
    let mut ws = ExampleWorkspace::new();
    let mut loss = 0.0;
    for i in 0..dataset.len() {
        let (r, c, y, side, relation) = dataset.example_parts(i);
        loss += example_loss_and_dz(model, r, c, side, relation, y, objective.kind, &mut ws);
    }
    Ok(loss + penalty_value(model, dataset, objective))
}

pub(crate) fn penalty_value(
    model: &LflModel,
    dataset: &DyadDataset,
    objective: &Objective,
) -> f64 {
    let reg = RegContext::new(objective, dataset);
    let mut total = 0.0;
    for_each_slot(model, |slot| {
        let (strength, scale) = reg.of(slot);
        let w = model.slot_get(slot);
        total += 0.5 * strength * scale * w * w;
    });
    total
}

/// Analytic gradient of [`objective_value`] over the free parameters.
pub fn gradient(
    model: &LflModel,
    dataset: &DyadDataset,
    objective: &Objective,
) -> Result<GradientSet> {
    objective.validate()?;
    check_compat(model, dataset)?;
    check_objective_kind(model, objective)?;
    let layout = ParamLayout::of(model);
    let mut values = vec![0.0; layout.total()];
    let mut ws = ExampleWorkspace::new();
    for i in 0..dataset.len() {
        let (r, c, y, side, relation) = dataset.example_parts(i);
        example_loss_and_dz(model, r, c, side, relation, y, objective.kind, &mut ws);
        let mut emissions = std::mem::take(&mut ws.emissions);
        emit_example_gradient(model, r, c, side, relation, &ws.dz, &mut emissions);
        for &(slot, g) in &emissions {
            if let Some(idx) = layout.index(slot) {
                values[idx] += g;
            }
        }
        ws.emissions = emissions;
    }
    let reg = RegContext::new(objective, dataset);
    let mut pos = 0usize;
    for_each_slot(model, |slot| {
        let (strength, scale) = reg.of(slot);
        values[pos] += strength * scale * model.slot_get(slot);
        pos += 1;
    });
    Ok(GradientSet { values })
}

/// Central-difference gradient oracle.
///
/// Verification plumbing for tests and the `check-grad` command; it touches
/// the objective only through [`objective_value`].
pub fn finite_difference_oracle(
    model: &LflModel,
    dataset: &DyadDataset,
    objective: &Objective,
    h: f64,
) -> Result<GradientSet> {
    if !(h > 0.0) {
        return Err(LflError::InvalidConfig(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    let mut probe = model.clone();
    let x = probe.free_params();
    let mut values = vec![0.0; x.len()];
    let mut xp = x.clone();
    for i in 0..x.len() {
        xp[i] = x[i] + h;
        probe.set_free_params(&xp)?;
        let f_plus = objective_value(&probe, dataset, objective)?;
        xp[i] = x[i] - h;
        probe.set_free_params(&xp)?;
        let f_minus = objective_value(&probe, dataset, objective)?;
        xp[i] = x[i];
        values[i] = (f_plus - f_minus) / (2.0 * h);
    }
    probe.set_free_params(&x)?;
    Ok(GradientSet { values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{DyadDataset, Example};
    use crate::labels::LabelSpace;
    use crate::model::{LflModel, ModelSpec};

    fn nominal(n: usize) -> LabelSpace {
        let labels = (0..n).map(|i| format!("l{i}")).collect();
        LabelSpace::new(labels, LabelKind::Nominal, None).unwrap()
    }

    fn ordinal(n: usize) -> LabelSpace {
        LabelSpace::ordinal_numeric((1..=n).map(|v| v as f64).collect()).unwrap()
    }

    fn dataset(rows: usize, cols: usize, examples: &[(usize, usize, usize)], space: LabelSpace) -> DyadDataset {
        let ex = examples
            .iter()
            .map(|&(row, col, label)| Example { row, col, label })
            .collect();
        DyadDataset::new(rows, cols, ex, space).unwrap()
    }

    #[test]
    fn layout_order_matches_index_arithmetic() {
        for spec in [
            ModelSpec {
                side_dim: Some(3),
                global_offsets: true,
                ..ModelSpec::dyadic(nominal(4), 3, 5, 2)
            },
            ModelSpec {
                bias: false,
                ..ModelSpec::dyadic(nominal(3), 4, 2, 2)
            },
            ModelSpec::symmetric_link(5, 3),
            ModelSpec::directed_link(4, 2),
            ModelSpec::multi_relational(3, 4, 2, 3),
            ModelSpec::stereotype(nominal(4), 3, 4, 2, 2),
        ] {
            let model = LflModel::zeros(&spec).unwrap();
            let layout = ParamLayout::of(&model);
            let mut pos = 0usize;
            for_each_slot(&model, |slot| {
                assert_eq!(layout.index(slot), Some(pos), "slot {slot:?}");
                pos += 1;
            });
            assert_eq!(pos, layout.total());
        }
    }

    #[test]
    fn frozen_entries_have_no_layout_position() {
        let model =
            LflModel::zeros(&ModelSpec::dyadic(nominal(3), 2, 2, 1)).unwrap();
        let layout = ParamLayout::of(&model);
        // Bias-frozen columns.
        assert_eq!(layout.index(Slot::Row { y: 0, r: 0, j: 0 }), None);
        assert_eq!(layout.index(Slot::Col { y: 0, c: 0, j: 1 }), None);
        // Base label (index 2) blocks.
        assert_eq!(layout.index(Slot::Row { y: 2, r: 0, j: 2 }), None);
        assert_eq!(layout.index(Slot::Col { y: 2, c: 0, j: 0 }), None);
        // Free entries do have positions.
        assert!(layout.index(Slot::Row { y: 0, r: 0, j: 1 }).is_some());
        assert!(layout.index(Slot::Col { y: 1, c: 1, j: 0 }).is_some());
    }

    #[test]
    fn set_free_params_never_touches_frozen_entries() {
        let mut model =
            LflModel::zeros(&ModelSpec::dyadic(nominal(3), 2, 2, 1)).unwrap();
        let n = model.free_param_count();
        model.set_free_params(&vec![9.0; n]).unwrap();
        model.validate().unwrap();
        if let VariantWeights::Dyadic { row, col } = model.weights() {
            for y in 0..2 {
                for r in 0..2 {
                    assert_eq!(row[y].at(r, 0), 1.0);
                }
                for c in 0..2 {
                    assert_eq!(col[y].at(c, 1), 1.0);
                }
            }
            assert!(row[2].as_slice().iter().all(|&w| w == 0.0));
        }
    }

    #[test]
    fn uniform_nll_is_n_log_labels() {
        let space = nominal(3);
        let model = LflModel::zeros(&ModelSpec {
            bias: false,
            ..ModelSpec::dyadic(space.clone(), 2, 2, 1)
        })
        .unwrap();
        let ds = dataset(2, 2, &[(0, 0, 0), (0, 1, 1), (1, 0, 2), (1, 1, 0)], space);
        let obj = Objective::new(ObjectiveKind::Nll, 0.0, 0.0);
        let value = objective_value(&model, &ds, &obj).unwrap();
        assert!((value - 4.0 * 3.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_mae_is_distance_to_midpoint() {
        let space = ordinal(5);
        let model = LflModel::zeros(&ModelSpec {
            bias: false,
            ..ModelSpec::dyadic(space.clone(), 1, 1, 1)
        })
        .unwrap();
        let ds = dataset(1, 1, &[(0, 0, 4)], space); // y = 5, uniform mean = 3
        let obj = Objective::new(ObjectiveKind::Mae, 0.0, 0.0);
        let value = objective_value(&model, &ds, &obj).unwrap();
        assert!((value - 2.0).abs() < 1e-12);
    }

    #[test]
    fn single_example_nll_hand_value() {
        let space =
            LabelSpace::with_base(vec!["0".into(), "1".into()], LabelKind::Nominal, None, 0)
                .unwrap();
        let mut model = LflModel::zeros(&ModelSpec {
            bias: false,
            ..ModelSpec::dyadic(space.clone(), 1, 1, 1)
        })
        .unwrap();
        model.set_free_params(&[2.0, 1.0]).unwrap();
        let ds = dataset(1, 1, &[(0, 0, 1)], space);
        let obj = Objective::new(ObjectiveKind::Nll, 0.0, 0.0);
        let value = objective_value(&model, &ds, &obj).unwrap();
        assert!((value - 0.12692801104297263).abs() < 1e-12);
    }

    #[test]
    fn mae_mse_rejected_on_nominal_space() {
        let space = nominal(3);
        let model = LflModel::zeros(&ModelSpec::dyadic(space.clone(), 2, 2, 1)).unwrap();
        let ds = dataset(2, 2, &[(0, 0, 0)], space);
        for kind in [ObjectiveKind::Mae, ObjectiveKind::Mse] {
            let obj = Objective::new(kind, 0.0, 0.0);
            assert!(objective_value(&model, &ds, &obj).is_err());
        }
    }

    #[test]
    fn zero_weight_nll_gradient_closed_form() {
        // With all free weights zero and biases enabled, the only nonzero
        // gradient entries are the bias partners, whose values reduce to
        // sums of (1/|Y| - 1[y_obs = y]) over the touched examples.
        let space = nominal(3);
        let model = LflModel::zeros(&ModelSpec::dyadic(space.clone(), 2, 2, 0)).unwrap();
        let ds = dataset(2, 2, &[(0, 0, 0), (0, 1, 1), (1, 0, 2), (1, 1, 0)], space);
        let obj = Objective::new(ObjectiveKind::Nll, 0.0, 0.0);
        let grad = gradient(&model, &ds, &obj).unwrap();
        let layout = ParamLayout::of(&model);

        let third: f64 = 1.0 / 3.0;
        // Row 0's per-row bias (row weights, factor column 1) under label 0:
        // examples (0,0,y=0) and (0,1,y=1) contribute (1/3 - 1) + (1/3 - 0).
        let idx = layout.index(Slot::Row { y: 0, r: 0, j: 1 }).unwrap();
        assert!((grad.values()[idx] - ((third - 1.0) + third)).abs() < 1e-12);
        // Column 0's per-column bias under label 1: examples (0,0,y=0) and
        // (1,0,y=2) both contribute 1/3 - 0.
        let idx = layout.index(Slot::Col { y: 1, c: 0, j: 0 }).unwrap();
        assert!((grad.values()[idx] - 2.0 * third).abs() < 1e-12);
    }

    #[test]
    fn empty_dataset_gradient_is_pure_penalty() {
        let space = nominal(3);
        let mut model = LflModel::zeros(&ModelSpec {
            bias: false,
            ..ModelSpec::dyadic(space.clone(), 2, 2, 2)
        })
        .unwrap();
        let n = model.free_param_count();
        let w: Vec<f64> = (0..n).map(|i| (i as f64) * 0.1 - 0.4).collect();
        model.set_free_params(&w).unwrap();
        let empty = dataset(2, 2, &[], space);
        let lambda = 0.7;
        let obj = Objective::new(ObjectiveKind::Nll, lambda, lambda);
        let grad = gradient(&model, &empty, &obj).unwrap();
        for (g, wi) in grad.values().iter().zip(&w) {
            assert!((g - lambda * wi).abs() < 1e-12);
        }
        let value = objective_value(&model, &empty, &obj).unwrap();
        let expected: f64 = w.iter().map(|wi| 0.5 * lambda * wi * wi).sum();
        assert!((value - expected).abs() < 1e-12);
    }

    #[test]
    fn finite_difference_matches_ridge_derivative() {
        // One free parameter (symmetric link over a single object) with
        // lambda = 2 makes the objective w^2: derivative 6 at w = 3.
        let mut model = LflModel::zeros(&ModelSpec::symmetric_link(1, 1)).unwrap();
        model.set_free_params(&[3.0]).unwrap();
        let empty = DyadDataset::new(1, 1, vec![], LabelSpace::binary_link()).unwrap();
        let obj = Objective::new(ObjectiveKind::Nll, 2.0, 2.0);
        let fd = finite_difference_oracle(&model, &empty, &obj, 1e-5).unwrap();
        assert!((fd.values()[0] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn zero_step_rejected() {
        let model = LflModel::zeros(&ModelSpec::symmetric_link(2, 1)).unwrap();
        let empty = DyadDataset::new(2, 2, vec![], LabelSpace::binary_link()).unwrap();
        let obj = Objective::default();
        assert!(finite_difference_oracle(&model, &empty, &obj, 0.0).is_err());
    }

    #[test]
    fn count_scaled_penalty_uses_inverse_sqrt_counts() {
        let space = nominal(2);
        let mut model = LflModel::zeros(&ModelSpec {
            bias: false,
            ..ModelSpec::dyadic(space.clone(), 2, 1, 1)
        })
        .unwrap();
        model.set_free_params(&[1.0, 1.0, 1.0]).unwrap(); // alpha_0, alpha_1, beta_0
        // Row 0 has 4 observations, row 1 has 1, column 0 has 5.
        let ds = dataset(
            2,
            1,
            &[(0, 0, 0), (0, 0, 0), (0, 0, 0), (0, 0, 0), (1, 0, 0)],
            space,
        );
        let obj = Objective {
            kind: ObjectiveKind::Nll,
            l2_latent: 2.0,
            l2_side: 0.0,
            count_scaled: true,
        };
        let penalty = penalty_value(&model, &ds, &obj);
        let expected = 0.5 * 2.0 * (1.0 / 2.0 + 1.0 + 1.0 / 5.0f64.sqrt());
        assert!((penalty - expected).abs() < 1e-12);
    }
}
