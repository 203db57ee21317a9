//! Dataset ingestion, splitting, and synthetic generators.
//!
//! The on-disk triplet format is UTF-8 text, one observation per line:
//!
//! ```text
//! row<TAB or ,>col<TAB or ,>label[,side1,side2,...]
//! ```
//!
//! `#`-prefixed lines are comments. With `has_relations` set, a relation
//! index sits between the column and the label
//! (`row,col,relation,label[,...]`). Side-information tables for cold-start
//! experiments carry per-object features under `ROW` / `COL` section
//! headers; the per-dyad side vector is the concatenation of the row
//! object's and the column object's feature rows.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::LflError;
use crate::labels::{LabelKind, LabelSpace};
use crate::mat::Mat;
use crate::model::sigmoid;
use crate::Result;

/// One observed dyad: (row object, column object, label index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub row: usize,
    pub col: usize,
    pub label: usize,
}

/// A set of observed dyads over fixed row/column universes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DyadDataset {
    row_count: usize,
    col_count: usize,
    examples: Vec<Example>,
    /// Per-example side-information vectors, parallel to `examples`.
    side: Option<Vec<Vec<f64>>>,
    /// Per-example relation indices (multi-relational data only).
    relations: Option<Vec<usize>>,
    num_relations: usize,
    row_obs_counts: Vec<usize>,
    col_obs_counts: Vec<usize>,
    label_space: LabelSpace,
    row_names: Vec<String>,
    col_names: Vec<String>,
}

impl DyadDataset {
    pub fn new(
        row_count: usize,
        col_count: usize,
        examples: Vec<Example>,
        label_space: LabelSpace,
    ) -> Result<Self> {
        let mut row_obs_counts = vec![0usize; row_count];
        let mut col_obs_counts = vec![0usize; col_count];
        for (i, ex) in examples.iter().enumerate() {
            if ex.row >= row_count || ex.col >= col_count || ex.label >= label_space.len() {
                return Err(LflError::IndexOutOfBounds(format!(
                    "example {i} out of bounds: ({}, {}, label {})",
                    ex.row, ex.col, ex.label
                )));
            }
            row_obs_counts[ex.row] += 1;
            col_obs_counts[ex.col] += 1;
        }
        let row_names = (0..row_count).map(|i| format!("r{i}")).collect();
        let col_names = (0..col_count).map(|j| format!("c{j}")).collect();
        Ok(DyadDataset {
            row_count,
            col_count,
            examples,
            side: None,
            relations: None,
            num_relations: 0,
            row_obs_counts,
            col_obs_counts,
            label_space,
            row_names,
            col_names,
        })
    }

    pub fn with_side(mut self, side: Vec<Vec<f64>>) -> Result<Self> {
        if side.len() != self.examples.len() {
            return Err(LflError::InvalidConfig(
                "side vector count differs from example count".into(),
            ));
        }
        let dim = side.first().map_or(0, Vec::len);
        if side.iter().any(|s| s.len() != dim) {
            return Err(LflError::SideDimMismatch {
                expected: dim,
                got: side.iter().find(|s| s.len() != dim).unwrap().len(),
            });
        }
        self.side = Some(side);
        Ok(self)
    }

    pub fn with_relations(mut self, relations: Vec<usize>, num_relations: usize) -> Result<Self> {
        if relations.len() != self.examples.len() {
            return Err(LflError::InvalidConfig(
                "relation count differs from example count".into(),
            ));
        }
        if let Some(&bad) = relations.iter().find(|&&t| t >= num_relations) {
            return Err(LflError::IndexOutOfBounds(format!(
                "relation {bad} out of bounds for {num_relations} relations"
            )));
        }
        self.relations = Some(relations);
        self.num_relations = num_relations;
        Ok(self)
    }

    pub fn with_names(mut self, row_names: Vec<String>, col_names: Vec<String>) -> Result<Self> {
        if row_names.len() != self.row_count || col_names.len() != self.col_count {
            return Err(LflError::InvalidConfig(
                "name count differs from object count".into(),
            ));
        }
        self.row_names = row_names;
        self.col_names = col_names;
        Ok(self)
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn col_count(&self) -> usize {
        self.col_count
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn side(&self) -> Option<&[Vec<f64>]> {
        self.side.as_deref()
    }

    pub fn side_dim(&self) -> Option<usize> {
        self.side.as_ref().map(|s| s.first().map_or(0, Vec::len))
    }

    pub fn relations(&self) -> Option<&[usize]> {
        self.relations.as_deref()
    }

    pub fn num_relations(&self) -> usize {
        self.num_relations
    }

    pub fn row_obs_counts(&self) -> &[usize] {
        &self.row_obs_counts
    }

    pub fn col_obs_counts(&self) -> &[usize] {
        &self.col_obs_counts
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn row_names(&self) -> &[String] {
        &self.row_names
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    /// Per-example access: (row, col, label, side, relation).
    pub fn example_parts(&self, i: usize) -> (usize, usize, usize, Option<&[f64]>, Option<usize>) {
        let ex = &self.examples[i];
        (
            ex.row,
            ex.col,
            ex.label,
            self.side.as_ref().map(|s| s[i].as_slice()),
            self.relations.as_ref().map(|r| r[i]),
        )
    }

    /// Same dataset re-kinded (e.g. nominal labels treated as ordinal).
    pub fn with_label_space(mut self, label_space: LabelSpace) -> Result<Self> {
        if label_space.len() != self.label_space.len() {
            return Err(LflError::InvalidConfig(
                "replacement label space has a different label count".into(),
            ));
        }
        self.label_space = label_space;
        Ok(self)
    }

    /// Copy without side-information (cold-start stage one trains on this).
    pub fn without_side(&self) -> Self {
        let mut copy = self.clone();
        copy.side = None;
        copy
    }

    /// Subset by example indices; object universes and names are preserved.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let examples: Vec<Example> = indices.iter().map(|&i| self.examples[i]).collect();
        let mut row_obs_counts = vec![0usize; self.row_count];
        let mut col_obs_counts = vec![0usize; self.col_count];
        for ex in &examples {
            row_obs_counts[ex.row] += 1;
            col_obs_counts[ex.col] += 1;
        }
        DyadDataset {
            row_count: self.row_count,
            col_count: self.col_count,
            examples,
            side: self
                .side
                .as_ref()
                .map(|s| indices.iter().map(|&i| s[i].clone()).collect()),
            relations: self
                .relations
                .as_ref()
                .map(|r| indices.iter().map(|&i| r[i]).collect()),
            num_relations: self.num_relations,
            row_obs_counts,
            col_obs_counts,
            label_space: self.label_space.clone(),
            row_names: self.row_names.clone(),
            col_names: self.col_names.clone(),
        }
    }

    /// Write the triplet text form.
    pub fn save_triplets(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for i in 0..self.examples.len() {
            let (r, c, y, side, relation) = self.example_parts(i);
            write!(out, "{}\t{}", self.row_names[r], self.col_names[c])?;
            if let Some(t) = relation {
                write!(out, "\t{t}")?;
            }
            write!(out, "\t{}", self.label_space.label_name(y))?;
            if let Some(s) = side {
                for v in s {
                    write!(out, "\t{v}")?;
                }
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Options for [`load_triplets`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Validate labels against this space instead of inferring one.
    pub declared_labels: Option<LabelSpace>,
    /// Lines carry a relation index between column and label.
    pub has_relations: bool,
}

fn split_fields(line: &str) -> Vec<&str> {
    let sep = if line.contains('\t') { '\t' } else { ',' };
    line.split(sep).map(str::trim).collect()
}

/// Parse a triplet file into a dataset.
///
/// String ids are interned to dense indices in first-appearance order. When
/// no label space is declared, labels are inferred as the sorted distinct
/// label strings (numeric sort when every label parses as a number, which
/// also populates numeric values); the inferred kind is nominal.
pub fn load_triplets(path: &Path, options: &LoadOptions) -> Result<DyadDataset> {
    let text = std::fs::read_to_string(path)?;
    struct Raw {
        row: String,
        col: String,
        relation: Option<usize>,
        label: String,
        side: Vec<f64>,
        line_no: usize,
    }
    let mut raws: Vec<Raw> = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = split_fields(trimmed);
        let min_fields = if options.has_relations { 4 } else { 3 };
        if fields.len() < min_fields {
            return Err(LflError::Parse {
                line: line_no,
                message: format!(
                    "expected at least {min_fields} fields, got {}",
                    fields.len()
                ),
            });
        }
        let relation = if options.has_relations {
            Some(fields[2].parse::<usize>().map_err(|_| LflError::Parse {
                line: line_no,
                message: format!("bad relation index {:?}", fields[2]),
            })?)
        } else {
            None
        };
        let label_idx = if options.has_relations { 3 } else { 2 };
        let mut side = Vec::new();
        for f in &fields[label_idx + 1..] {
            side.push(f.parse::<f64>().map_err(|_| LflError::Parse {
                line: line_no,
                message: format!("bad side value {f:?}"),
            })?);
        }
        raws.push(Raw {
            row: fields[0].to_string(),
            col: fields[1].to_string(),
            relation,
            label: fields[label_idx].to_string(),
            side,
            line_no,
        });
    }
    if raws.is_empty() {
        return Err(LflError::EmptyDataset);
    }

    let label_space = match &options.declared_labels {
        Some(space) => space.clone(),
        None => {
            let mut names: Vec<String> = raws.iter().map(|r| r.label.clone()).collect();
            names.sort();
            names.dedup();
            let numeric: Option<Vec<f64>> =
                names.iter().map(|n| n.parse::<f64>().ok()).collect();
            if let Some(mut values) = numeric {
                values.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let names: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
                LabelSpace::new(names, LabelKind::Nominal, Some(values))?
            } else {
                LabelSpace::new(names, LabelKind::Nominal, None)?
            }
        }
    };

    let mut row_ids: HashMap<String, usize> = HashMap::new();
    let mut col_ids: HashMap<String, usize> = HashMap::new();
    let mut row_names = Vec::new();
    let mut col_names = Vec::new();
    let mut examples = Vec::with_capacity(raws.len());
    let mut sides = Vec::with_capacity(raws.len());
    let mut relations = Vec::new();
    let side_dim = raws[0].side.len();
    let mut max_relation = 0usize;
    for raw in &raws {
        if raw.side.len() != side_dim {
            return Err(LflError::Parse {
                line: raw.line_no,
                message: format!(
                    "inconsistent side dimension: expected {side_dim}, got {}",
                    raw.side.len()
                ),
            });
        }
        let row = *row_ids.entry(raw.row.clone()).or_insert_with(|| {
            row_names.push(raw.row.clone());
            row_names.len() - 1
        });
        let col = *col_ids.entry(raw.col.clone()).or_insert_with(|| {
            col_names.push(raw.col.clone());
            col_names.len() - 1
        });
        let label = label_space
            .index_of(&raw.label)
            .ok_or_else(|| LflError::Parse {
                line: raw.line_no,
                message: format!("unknown label {:?}", raw.label),
            })?;
        examples.push(Example { row, col, label });
        sides.push(raw.side.clone());
        if let Some(t) = raw.relation {
            relations.push(t);
            max_relation = max_relation.max(t);
        }
    }
    let mut dataset = DyadDataset::new(row_names.len(), col_names.len(), examples, label_space)?
        .with_names(row_names, col_names)?;
    if side_dim > 0 {
        dataset = dataset.with_side(sides)?;
    }
    if options.has_relations {
        dataset = dataset.with_relations(relations, max_relation + 1)?;
    }
    Ok(dataset)
}

/// Per-object feature table for cold-start side-information.
#[derive(Debug, Clone, Default)]
pub struct SideTable {
    pub row_features: HashMap<String, Vec<f64>>,
    pub col_features: HashMap<String, Vec<f64>>,
    pub row_dim: usize,
    pub col_dim: usize,
}

/// Parse a side-information table: `ROW` / `COL` section header lines,
/// then `object_id,f1,f2,...` feature lines.
pub fn load_side_table(path: &Path) -> Result<SideTable> {
    let text = std::fs::read_to_string(path)?;
    let mut table = SideTable::default();
    let mut in_rows: Option<bool> = None;
    for (line_no, line) in text.lines().enumerate() {
        let line_no = line_no + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match trimmed {
            "ROW" => {
                in_rows = Some(true);
                continue;
            }
            "COL" => {
                in_rows = Some(false);
                continue;
            }
            _ => {}
        }
        let fields = split_fields(trimmed);
        if fields.len() < 2 {
            return Err(LflError::Parse {
                line: line_no,
                message: "expected object_id followed by feature values".into(),
            });
        }
        let mut feats = Vec::with_capacity(fields.len() - 1);
        for f in &fields[1..] {
            feats.push(f.parse::<f64>().map_err(|_| LflError::Parse {
                line: line_no,
                message: format!("bad feature value {f:?}"),
            })?);
        }
        let is_row = in_rows.ok_or_else(|| LflError::Parse {
            line: line_no,
            message: "feature line before any ROW/COL section header".into(),
        })?;
        let (map, dim) = if is_row {
            (&mut table.row_features, &mut table.row_dim)
        } else {
            (&mut table.col_features, &mut table.col_dim)
        };
        if *dim == 0 {
            *dim = feats.len();
        } else if *dim != feats.len() {
            return Err(LflError::Parse {
                line: line_no,
                message: format!(
                    "inconsistent feature dimension: expected {}, got {}",
                    dim,
                    feats.len()
                ),
            });
        }
        map.insert(fields[0].to_string(), feats);
    }
    Ok(table)
}

/// Attach per-dyad side vectors built from a per-object feature table.
///
/// Each example's side vector is the row object's features followed by the
/// column object's features.
pub fn attach_side_table(dataset: DyadDataset, table: &SideTable) -> Result<DyadDataset> {
    let mut sides = Vec::with_capacity(dataset.len());
    for ex in dataset.examples() {
        let row_name = &dataset.row_names()[ex.row];
        let col_name = &dataset.col_names()[ex.col];
        let rf = table.row_features.get(row_name).ok_or_else(|| {
            LflError::InvalidConfig(format!("no row features for object {row_name:?}"))
        })?;
        let cf = table.col_features.get(col_name).ok_or_else(|| {
            LflError::InvalidConfig(format!("no column features for object {col_name:?}"))
        })?;
        let mut s = Vec::with_capacity(rf.len() + cf.len());
        s.extend_from_slice(rf);
        s.extend_from_slice(cf);
        sides.push(s);
    }
    dataset.with_side(sides)
}

/// Train/test partition schemes.
#[derive(Debug, Clone, PartialEq)]
pub enum SplitScheme {
    /// Move a uniformly random fraction of examples to the test set.
    RandomFraction { test_fraction: f64 },
    /// Hold out `per_row` random examples from every row that has more than
    /// `per_row` observations.
    PerRowHoldout { per_row: usize },
    /// Move every example of the named rows to the test set.
    ColdstartRows { rows: Vec<usize> },
}

/// Disjoint, exhaustive, seed-deterministic split into (train, test).
pub fn split(
    dataset: &DyadDataset,
    scheme: &SplitScheme,
    seed: u64,
) -> Result<(DyadDataset, DyadDataset)> {
    let n = dataset.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let test_indices: Vec<usize> = match scheme {
        SplitScheme::RandomFraction { test_fraction } => {
            if !(0.0..=1.0).contains(test_fraction) {
                return Err(LflError::InfeasibleSplit(format!(
                    "test fraction {test_fraction} outside [0, 1]"
                )));
            }
            let n_test = (test_fraction * n as f64).round() as usize;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            order.truncate(n_test);
            order
        }
        SplitScheme::PerRowHoldout { per_row } => {
            if *per_row == 0 {
                return Err(LflError::InfeasibleSplit("per_row must be positive".into()));
            }
            let mut by_row: Vec<Vec<usize>> = vec![Vec::new(); dataset.row_count];
            for (i, ex) in dataset.examples.iter().enumerate() {
                by_row[ex.row].push(i);
            }
            let mut picked = Vec::new();
            let mut any = false;
            for indices in by_row.iter_mut() {
                if indices.len() > *per_row {
                    any = true;
                    indices.shuffle(&mut rng);
                    picked.extend_from_slice(&indices[..*per_row]);
                }
            }
            if !any {
                return Err(LflError::InfeasibleSplit(format!(
                    "no row has more than {per_row} examples"
                )));
            }
            picked
        }
        SplitScheme::ColdstartRows { rows } => {
            if let Some(&bad) = rows.iter().find(|&&r| r >= dataset.row_count) {
                return Err(LflError::InfeasibleSplit(format!(
                    "cold-start row {bad} out of bounds"
                )));
            }
            let held: std::collections::HashSet<usize> = rows.iter().copied().collect();
            (0..n)
                .filter(|&i| held.contains(&dataset.examples[i].row))
                .collect()
        }
    };
    let mut is_test = vec![false; n];
    for &i in &test_indices {
        is_test[i] = true;
    }
    let train_indices: Vec<usize> = (0..n).filter(|&i| !is_test[i]).collect();
    let mut test_sorted = test_indices;
    test_sorted.sort_unstable();
    Ok((dataset.subset(&train_indices), dataset.subset(&test_sorted)))
}

/// One held-out matrix cell with its generating-model diagnosis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeldoutCell {
    pub row: usize,
    pub col: usize,
    /// Label actually sampled for this cell.
    pub true_label: usize,
    /// Argmax label under the generating distribution.
    pub bayes_label: usize,
    /// Probability of the Bayes label under the generating distribution.
    pub bayes_prob: f64,
}

/// Ground truth for a synthetic instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub label_space: LabelSpace,
    /// Generating row weights, one matrix per label (base label zero).
    pub true_row_weights: Vec<Mat>,
    /// Generating column weights, one matrix per label.
    pub true_col_weights: Vec<Mat>,
    /// Generating node weights (directed link graphs only).
    pub true_node_weights: Option<Mat>,
    pub heldout: Vec<HeldoutCell>,
    /// Mean over all cells of 1 - max_y p(y|r,c) under the generating model.
    pub mean_bayes_error: f64,
    /// Full sampled label matrix (link graphs only).
    pub full_labels: Option<Vec<Vec<usize>>>,
}

impl SyntheticTruth {
    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Held-out cells as a dataset (labels are the sampled ones).
    pub fn heldout_dataset(&self, row_count: usize, col_count: usize) -> Result<DyadDataset> {
        let examples = self
            .heldout
            .iter()
            .map(|h| Example {
                row: h.row,
                col: h.col,
                label: h.true_label,
            })
            .collect();
        DyadDataset::new(row_count, col_count, examples, self.label_space.clone())
    }
}

/// Configuration for the synthetic nominal generator.
#[derive(Debug, Clone)]
pub struct SynthNominalConfig {
    /// Square matrix size.
    pub n: usize,
    /// Generating rank.
    pub rank: usize,
    pub num_labels: usize,
    /// Fraction of cells kept for training.
    pub retention: f64,
    /// Uniform range for generating weight entries.
    pub weight_range: (f64, f64),
    pub seed: u64,
    /// Retain exactly round(retention * n^2) cells; otherwise i.i.d. per cell.
    pub exact_retention: bool,
}

impl SynthNominalConfig {
    pub fn new(n: usize, rank: usize, num_labels: usize, retention: f64, seed: u64) -> Self {
        SynthNominalConfig {
            n,
            rank,
            num_labels,
            retention,
            weight_range: (-3.0, 3.0),
            seed,
            exact_retention: true,
        }
    }
}

/// Sample a full nominal label matrix from a random low-rank LFL generator,
/// keep a retention fraction of cells as the training set, and record the
/// rest with their Bayes-optimal diagnoses.
pub fn synth_nominal(config: &SynthNominalConfig) -> Result<(DyadDataset, SyntheticTruth)> {
    let SynthNominalConfig {
        n,
        rank,
        num_labels,
        retention,
        weight_range: (lo, hi),
        seed,
        exact_retention,
    } = *config;
    if n < 2 || rank < 1 || num_labels < 2 {
        return Err(LflError::InvalidConfig(
            "synthetic generator needs n >= 2, rank >= 1, labels >= 2".into(),
        ));
    }
    if !(retention > 0.0 && retention < 1.0) {
        return Err(LflError::InvalidConfig(format!(
            "retention {retention} outside (0, 1)"
        )));
    }
    if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
        return Err(LflError::InvalidConfig(format!(
            "degenerate weight range [{lo}, {hi}]"
        )));
    }
    let values: Vec<f64> = (1..=num_labels).map(|v| v as f64).collect();
    let names: Vec<String> = values.iter().map(|v| format!("{v}")).collect();
    let label_space = LabelSpace::new(names, LabelKind::Nominal, Some(values))?;
    let base = label_space.base_index();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw_mat = |rows: usize| {
        let mut m = Mat::zeros(rows, rank);
        for v in m.as_mut_slice() {
            *v = if lo == hi { lo } else { rng.random_range(lo..hi) };
        }
        m
    };
    let mut true_row_weights = Vec::with_capacity(num_labels);
    let mut true_col_weights = Vec::with_capacity(num_labels);
    for y in 0..num_labels {
        if y == base {
            true_row_weights.push(Mat::zeros(n, rank));
            true_col_weights.push(Mat::zeros(n, rank));
        } else {
            true_row_weights.push(draw_mat(n));
            true_col_weights.push(draw_mat(n));
        }
    }

    // Sample every cell and tally the Bayes error along the way.
    let mut labels = vec![0usize; n * n];
    let mut bayes_labels = vec![0usize; n * n];
    let mut bayes_probs = vec![0.0f64; n * n];
    let mut bayes_err_sum = 0.0;
    let mut scores = vec![0.0f64; num_labels];
    for r in 0..n {
        for c in 0..n {
            for y in 0..num_labels {
                scores[y] = if y == base {
                    0.0
                } else {
                    true_row_weights[y].row_dot(r, &true_col_weights[y], c)
                };
            }
            let dist = crate::model::LabelDistribution::from_scores(&scores);
            let probs = dist.probs();
            let u: f64 = rng.random_range(0.0..1.0);
            let mut cum = 0.0;
            let mut label = num_labels - 1;
            for (y, &p) in probs.iter().enumerate() {
                cum += p;
                if u < cum {
                    label = y;
                    break;
                }
            }
            let bayes = dist.mode_index();
            let cell = r * n + c;
            labels[cell] = label;
            bayes_labels[cell] = bayes;
            bayes_probs[cell] = probs[bayes];
            bayes_err_sum += 1.0 - probs[bayes];
        }
    }

    let mut cells: Vec<usize> = (0..n * n).collect();
    let retained: Vec<bool> = if exact_retention {
        cells.shuffle(&mut rng);
        let n_train = (retention * (n * n) as f64).round() as usize;
        let mut keep = vec![false; n * n];
        for &cell in &cells[..n_train] {
            keep[cell] = true;
        }
        keep
    } else {
        (0..n * n)
            .map(|_| rng.random_range(0.0..1.0) < retention)
            .collect()
    };

    let mut examples = Vec::new();
    let mut heldout = Vec::new();
    for cell in 0..n * n {
        let (r, c) = (cell / n, cell % n);
        if retained[cell] {
            examples.push(Example {
                row: r,
                col: c,
                label: labels[cell],
            });
        } else {
            heldout.push(HeldoutCell {
                row: r,
                col: c,
                true_label: labels[cell],
                bayes_label: bayes_labels[cell],
                bayes_prob: bayes_probs[cell],
            });
        }
    }
    let train = DyadDataset::new(n, n, examples, label_space.clone())?;
    let truth = SyntheticTruth {
        label_space,
        true_row_weights,
        true_col_weights,
        true_node_weights: None,
        heldout,
        mean_bayes_error: bayes_err_sum / (n * n) as f64,
        full_labels: None,
    };
    Ok((train, truth))
}

/// Configuration for the synthetic link-graph generator.
#[derive(Debug, Clone)]
pub struct SynthLinkConfig {
    pub n: usize,
    pub rank: usize,
    pub symmetric: bool,
    pub seed: u64,
    /// Uniform range for generating weight entries.
    pub weight_scale: f64,
    pub test_fraction: f64,
}

impl SynthLinkConfig {
    pub fn new(n: usize, rank: usize, symmetric: bool, seed: u64) -> Self {
        SynthLinkConfig {
            n,
            rank,
            symmetric,
            seed,
            weight_scale: 1.5,
            test_fraction: 0.2,
        }
    }
}

/// Sample a binary link graph from σ(ααᵀ) (or σ(αβᵀ + γγᵀ) when directed)
/// and split the sampled cells 80-20.
///
/// Symmetric mode samples only the upper triangle and mirrors it; train and
/// test example lists then carry each undirected pair once (r <= c).
pub fn synth_link_graph(
    config: &SynthLinkConfig,
) -> Result<(DyadDataset, DyadDataset, SyntheticTruth)> {
    let SynthLinkConfig {
        n,
        rank,
        symmetric,
        seed,
        weight_scale,
        test_fraction,
    } = *config;
    if n < 2 || rank < 1 {
        return Err(LflError::InvalidConfig(
            "link generator needs n >= 2 and rank >= 1".into(),
        ));
    }
    let label_space = LabelSpace::binary_link();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw_mat = |rows: usize| {
        let mut m = Mat::zeros(rows, rank);
        for v in m.as_mut_slice() {
            *v = rng.random_range(-weight_scale..weight_scale);
        }
        m
    };
    let alpha = draw_mat(n);
    let (beta, gamma) = if symmetric {
        (None, None)
    } else {
        (Some(draw_mat(n)), Some(draw_mat(n)))
    };

    let edge_prob = |r: usize, c: usize| -> f64 {
        if symmetric {
            sigmoid(alpha.row_dot(r, &alpha, c))
        } else {
            let b = beta.as_ref().unwrap();
            let g = gamma.as_ref().unwrap();
            sigmoid(alpha.row_dot(r, b, c) + g.row_dot(r, g, c))
        }
    };

    // Sample labels; symmetric graphs mirror the upper triangle.
    let mut full = vec![vec![0usize; n]; n];
    let mut bayes_err_sum = 0.0;
    for r in 0..n {
        for c in 0..n {
            if symmetric && c < r {
                continue;
            }
            let p = edge_prob(r, c);
            let label = usize::from(rng.random_range(0.0..1.0) < p);
            full[r][c] = label;
            if symmetric {
                full[c][r] = label;
            }
        }
    }
    for r in 0..n {
        for c in 0..n {
            let p = edge_prob(r, c);
            bayes_err_sum += 1.0 - p.max(1.0 - p);
        }
    }

    let mut cells: Vec<(usize, usize)> = Vec::new();
    for r in 0..n {
        for c in 0..n {
            if symmetric && c < r {
                continue;
            }
            cells.push((r, c));
        }
    }
    cells.shuffle(&mut rng);
    let n_test = (test_fraction * cells.len() as f64).round() as usize;

    let make_examples = |cells: &[(usize, usize)]| -> Vec<Example> {
        cells
            .iter()
            .map(|&(r, c)| Example {
                row: r,
                col: c,
                label: full[r][c],
            })
            .collect()
    };
    let mut test_cells = cells[..n_test].to_vec();
    let mut train_cells = cells[n_test..].to_vec();
    train_cells.sort_unstable();
    test_cells.sort_unstable();
    let train = DyadDataset::new(n, n, make_examples(&train_cells), label_space.clone())?;
    let test = DyadDataset::new(n, n, make_examples(&test_cells), label_space.clone())?;

    let heldout = test_cells
        .iter()
        .map(|&(r, c)| {
            let p = edge_prob(r, c);
            HeldoutCell {
                row: r,
                col: c,
                true_label: full[r][c],
                bayes_label: usize::from(p >= 0.5),
                bayes_prob: p.max(1.0 - p),
            }
        })
        .collect();
    let truth = SyntheticTruth {
        label_space,
        true_col_weights: vec![if symmetric {
            alpha.clone()
        } else {
            beta.clone().unwrap()
        }],
        true_row_weights: vec![alpha],
        true_node_weights: gamma,
        heldout,
        mean_bayes_error: bayes_err_sum / (n * n) as f64,
        full_labels: Some(full),
    };
    Ok((train, test, truth))
}

/// Configuration for the synthetic ordinal cold-start generator.
#[derive(Debug, Clone)]
pub struct SynthColdstartConfig {
    pub num_rows: usize,
    pub num_cols: usize,
    /// Generating latent rank.
    pub rank: usize,
    pub num_labels: usize,
    pub row_side_dim: usize,
    pub col_side_dim: usize,
    /// Uniform range for generating latent weights.
    pub latent_scale: f64,
    /// Uniform range for generating side weights.
    pub side_scale: f64,
    /// Fraction of cells observed.
    pub density: f64,
    pub seed: u64,
}

impl Default for SynthColdstartConfig {
    fn default() -> Self {
        SynthColdstartConfig {
            num_rows: 120,
            num_cols: 60,
            rank: 2,
            num_labels: 5,
            row_side_dim: 3,
            col_side_dim: 3,
            latent_scale: 0.6,
            side_scale: 1.6,
            density: 0.3,
            seed: 0,
        }
    }
}

/// Sample sparse ordinal ratings whose generating model mixes latent factors
/// with informative per-object side features. Every example carries the
/// concatenated (row features, column features) side vector, so rows held
/// out of training remain predictable from their features.
pub fn synth_coldstart_ordinal(config: &SynthColdstartConfig) -> Result<DyadDataset> {
    let cfg = config;
    if cfg.num_rows < 2 || cfg.num_cols < 2 || cfg.rank < 1 || cfg.num_labels < 2 {
        return Err(LflError::InvalidConfig(
            "cold-start generator needs rows, cols >= 2, rank >= 1, labels >= 2".into(),
        ));
    }
    if !(cfg.density > 0.0 && cfg.density <= 1.0) {
        return Err(LflError::InvalidConfig(format!(
            "density {} outside (0, 1]",
            cfg.density
        )));
    }
    let values: Vec<f64> = (1..=cfg.num_labels).map(|v| v as f64).collect();
    let label_space = LabelSpace::ordinal_numeric(values)?;
    let base = label_space.base_index();
    let side_dim = cfg.row_side_dim + cfg.col_side_dim;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut draw = |rows: usize, cols: usize, scale: f64| {
        let mut m = Mat::zeros(rows, cols);
        for v in m.as_mut_slice() {
            *v = rng.random_range(-scale..scale);
        }
        m
    };
    let row_feats = draw(cfg.num_rows, cfg.row_side_dim, 1.0);
    let col_feats = draw(cfg.num_cols, cfg.col_side_dim, 1.0);
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    let mut side_w = Vec::new();
    for y in 0..cfg.num_labels {
        if y == base {
            alphas.push(Mat::zeros(cfg.num_rows, cfg.rank));
            betas.push(Mat::zeros(cfg.num_cols, cfg.rank));
            side_w.push(vec![0.0; side_dim]);
        } else {
            alphas.push(draw(cfg.num_rows, cfg.rank, cfg.latent_scale));
            betas.push(draw(cfg.num_cols, cfg.rank, cfg.latent_scale));
            side_w.push(
                (0..side_dim)
                    .map(|_| rng.random_range(-cfg.side_scale..cfg.side_scale))
                    .collect(),
            );
        }
    }

    let total = cfg.num_rows * cfg.num_cols;
    let mut cells: Vec<usize> = (0..total).collect();
    cells.shuffle(&mut rng);
    let n_obs = ((cfg.density * total as f64).round() as usize).max(1);
    let mut observed = cells[..n_obs].to_vec();
    observed.sort_unstable();

    let mut examples = Vec::with_capacity(n_obs);
    let mut sides = Vec::with_capacity(n_obs);
    let mut scores = vec![0.0f64; cfg.num_labels];
    for cell in observed {
        let (r, c) = (cell / cfg.num_cols, cell % cfg.num_cols);
        let mut side = Vec::with_capacity(side_dim);
        side.extend_from_slice(row_feats.row(r));
        side.extend_from_slice(col_feats.row(c));
        for y in 0..cfg.num_labels {
            scores[y] = if y == base {
                0.0
            } else {
                alphas[y].row_dot(r, &betas[y], c) + crate::mat::dot(&side_w[y], &side)
            };
        }
        let dist = crate::model::LabelDistribution::from_scores(&scores);
        let u: f64 = rng.random_range(0.0..1.0);
        let mut cum = 0.0;
        let mut label = cfg.num_labels - 1;
        for (y, &p) in dist.probs().iter().enumerate() {
            cum += p;
            if u < cum {
                label = y;
                break;
            }
        }
        examples.push(Example {
            row: r,
            col: c,
            label,
        });
        sides.push(side);
    }
    DyadDataset::new(cfg.num_rows, cfg.num_cols, examples, label_space)?.with_side(sides)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        use std::io::Write;
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_basic_triplets() {
        let space = LabelSpace::new(
            (1..=5).map(|v| v.to_string()).collect(),
            LabelKind::Nominal,
            Some((1..=5).map(|v| v as f64).collect()),
        )
        .unwrap();
        let f = write_temp("u1,m1,3\nu2,m1,5\n");
        let ds = load_triplets(
            f.path(),
            &LoadOptions {
                declared_labels: Some(space),
                has_relations: false,
            },
        )
        .unwrap();
        assert_eq!(ds.row_count(), 2);
        assert_eq!(ds.col_count(), 1);
        assert_eq!(
            ds.examples(),
            &[
                Example {
                    row: 0,
                    col: 0,
                    label: 2
                },
                Example {
                    row: 1,
                    col: 0,
                    label: 4
                }
            ]
        );
    }

    #[test]
    fn empty_file_is_error() {
        let f = write_temp("# only comments\n\n");
        match load_triplets(f.path(), &LoadOptions::default()) {
            Err(LflError::EmptyDataset) => {}
            other => panic!("expected empty dataset error, got {other:?}"),
        }
    }

    #[test]
    fn side_columns_parsed() {
        let f = write_temp("u1,m1,3,0.5,1.0\nu2,m1,2,0.25,-1.0\n");
        let ds = load_triplets(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.side_dim(), Some(2));
        assert_eq!(ds.side().unwrap()[0], vec![0.5, 1.0]);
    }

    #[test]
    fn inconsistent_side_dimension_reports_line() {
        let f = write_temp("u1,m1,3,0.5\nu2,m1,2,0.25,1.0\n");
        match load_triplets(f.path(), &LoadOptions::default()) {
            Err(LflError::Parse { line: 2, .. }) => {}
            other => panic!("expected parse error at line 2, got {other:?}"),
        }
    }

    #[test]
    fn malformed_line_reports_number() {
        let f = write_temp("u1,m1,3\nu2,m1\n");
        match load_triplets(f.path(), &LoadOptions::default()) {
            Err(LflError::Parse { line: 2, .. }) => {}
            other => panic!("expected parse error at line 2, got {other:?}"),
        }
    }

    #[test]
    fn unknown_label_rejected_under_declared_space() {
        let space =
            LabelSpace::new(vec!["a".into(), "b".into()], LabelKind::Nominal, None).unwrap();
        let f = write_temp("u1,m1,zzz\n");
        assert!(load_triplets(
            f.path(),
            &LoadOptions {
                declared_labels: Some(space),
                has_relations: false
            }
        )
        .is_err());
    }

    #[test]
    fn relation_column_parsed() {
        let f = write_temp("a,b,0,1\na,c,1,0\nb,c,1,1\n");
        let ds = load_triplets(
            f.path(),
            &LoadOptions {
                declared_labels: Some(LabelSpace::binary_link()),
                has_relations: true,
            },
        )
        .unwrap();
        assert_eq!(ds.num_relations(), 2);
        assert_eq!(ds.relations().unwrap(), &[0, 1, 1]);
    }

    #[test]
    fn save_load_round_trip() {
        let (train, _) = synth_nominal(&SynthNominalConfig::new(8, 2, 3, 0.8, 5)).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        train.save_triplets(f.path()).unwrap();
        let loaded = load_triplets(
            f.path(),
            &LoadOptions {
                declared_labels: Some(train.label_space().clone()),
                has_relations: false,
            },
        )
        .unwrap();
        // Every row/col of an 8x8 instance at 80% retention appears, so
        // first-appearance interning relabels objects but preserves content.
        assert_eq!(loaded.len(), train.len());
        let key = |ds: &DyadDataset| {
            let mut keys: Vec<(String, String, usize)> = ds
                .examples()
                .iter()
                .map(|ex| {
                    (
                        ds.row_names()[ex.row].clone(),
                        ds.col_names()[ex.col].clone(),
                        ex.label,
                    )
                })
                .collect();
            keys.sort();
            keys
        };
        assert_eq!(key(&loaded), key(&train));
    }

    #[test]
    fn random_fraction_split_is_exact_and_disjoint() {
        let (train, _) = synth_nominal(&SynthNominalConfig::new(10, 2, 3, 0.999, 1)).unwrap();
        let base = train.subset(&(0..100).collect::<Vec<_>>());
        let (tr, te) = split(
            &base,
            &SplitScheme::RandomFraction { test_fraction: 0.2 },
            3,
        )
        .unwrap();
        assert_eq!(te.len(), 20);
        assert_eq!(tr.len(), 80);
        let mut seen: Vec<(usize, usize)> = tr
            .examples()
            .iter()
            .chain(te.examples())
            .map(|e| (e.row, e.col))
            .collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 100);
    }

    #[test]
    fn per_row_holdout_takes_one_per_selected_row() {
        let (full, _) = synth_nominal(&SynthNominalConfig::new(6, 2, 3, 0.9, 2)).unwrap();
        let (tr, te) = split(&full, &SplitScheme::PerRowHoldout { per_row: 1 }, 9).unwrap();
        for r in 0..6 {
            let held = te.examples().iter().filter(|e| e.row == r).count();
            assert_eq!(held, 1, "row {r}");
        }
        assert_eq!(tr.len() + te.len(), full.len());
    }

    #[test]
    fn coldstart_rows_move_entirely_to_test() {
        let (full, _) = synth_nominal(&SynthNominalConfig::new(6, 2, 3, 0.9, 4)).unwrap();
        let (tr, te) = split(
            &full,
            &SplitScheme::ColdstartRows { rows: vec![2, 4] },
            0,
        )
        .unwrap();
        assert!(tr.examples().iter().all(|e| e.row != 2 && e.row != 4));
        assert!(te.examples().iter().all(|e| e.row == 2 || e.row == 4));
        assert_eq!(tr.len() + te.len(), full.len());
    }

    #[test]
    fn split_is_seed_deterministic() {
        let (full, _) = synth_nominal(&SynthNominalConfig::new(8, 2, 3, 0.9, 6)).unwrap();
        let scheme = SplitScheme::RandomFraction { test_fraction: 0.25 };
        let (tr1, te1) = split(&full, &scheme, 42).unwrap();
        let (tr2, te2) = split(&full, &scheme, 42).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        let (_, te3) = split(&full, &scheme, 43).unwrap();
        assert_ne!(te1.examples(), te3.examples());
    }

    #[test]
    fn degenerate_weight_range_gives_uniform_bayes_error() {
        let (_, truth) = synth_nominal(&SynthNominalConfig {
            weight_range: (0.0, 0.0),
            ..SynthNominalConfig::new(6, 2, 4, 0.5, 3)
        })
        .unwrap();
        assert!((truth.mean_bayes_error - 0.75).abs() < 1e-12);
    }

    #[test]
    fn retention_count_is_exact() {
        let (train, truth) = synth_nominal(&SynthNominalConfig::new(10, 2, 3, 0.8, 7)).unwrap();
        assert_eq!(train.len(), 80);
        assert_eq!(truth.heldout.len(), 20);
    }

    #[test]
    fn bayes_error_matches_closed_form_for_binary() {
        let (_, truth) = synth_nominal(&SynthNominalConfig::new(2, 1, 2, 0.5, 11)).unwrap();
        // Closed form via the sigmoid: labels {1, 2} with base 2, so
        // p(1) = sigmoid(alpha_r . beta_c).
        let mut expected = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                let z = truth.true_row_weights[0].row_dot(r, &truth.true_col_weights[0], c);
                let p = sigmoid(z);
                expected += 1.0 - p.max(1.0 - p);
            }
        }
        expected /= 4.0;
        assert!((truth.mean_bayes_error - expected).abs() < 1e-12);
    }

    #[test]
    fn symmetric_link_graph_matrix_is_symmetric() {
        let (_, _, truth) = synth_link_graph(&SynthLinkConfig::new(20, 2, true, 1)).unwrap();
        let full = truth.full_labels.unwrap();
        for r in 0..20 {
            for c in 0..20 {
                assert_eq!(full[r][c], full[c][r]);
            }
        }
    }

    #[test]
    fn zero_weight_link_graph_has_half_density() {
        let (train, test, _) = synth_link_graph(&SynthLinkConfig {
            weight_scale: 1e-12,
            ..SynthLinkConfig::new(100, 2, false, 5)
        })
        .unwrap();
        let total = (train.len() + test.len()) as f64;
        let positives = train
            .examples()
            .iter()
            .chain(test.examples())
            .filter(|e| e.label == 1)
            .count() as f64;
        let density = positives / total;
        assert!((0.45..=0.55).contains(&density), "density {density}");
    }

    #[test]
    fn link_split_sizes_are_80_20() {
        let (train, test, _) = synth_link_graph(&SynthLinkConfig::new(30, 2, false, 8)).unwrap();
        let total = train.len() + test.len();
        assert_eq!(total, 900);
        let expected = (0.2 * total as f64).round() as usize;
        assert!(test.len().abs_diff(expected) <= 1);
    }

    #[test]
    fn coldstart_generator_attaches_side() {
        let ds = synth_coldstart_ordinal(&SynthColdstartConfig {
            num_rows: 10,
            num_cols: 8,
            ..SynthColdstartConfig::default()
        })
        .unwrap();
        assert_eq!(ds.side_dim(), Some(6));
        assert_eq!(ds.label_space().kind(), LabelKind::Ordinal);
        assert!(!ds.is_empty());
    }

    #[test]
    fn side_table_round_trip() {
        let f = write_temp("ROW\nu1,0.5,1.0\nu2,-0.5,0.25\nCOL\nm1,1.0\n");
        let table = load_side_table(f.path()).unwrap();
        assert_eq!(table.row_dim, 2);
        assert_eq!(table.col_dim, 1);

        let data = write_temp("u1,m1,3\nu2,m1,5\n");
        let ds = load_triplets(data.path(), &LoadOptions::default()).unwrap();
        let ds = attach_side_table(ds, &table).unwrap();
        assert_eq!(ds.side_dim(), Some(3));
        assert_eq!(ds.side().unwrap()[0], vec![0.5, 1.0, 1.0]);
    }
}
