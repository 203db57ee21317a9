//! Optimizers, initialization, and the cold-start heuristic.
//!
//! Two training paths share the objective/gradient kernels:
//!
//! - [`fit_sgd`]: one pass per epoch over a seeded shuffle of the examples,
//!   updating only the parameters each example touches; the regularizer is
//!   apportioned as λ/n per example over those parameters. Strictly
//!   sequential, deterministic given its seeds.
//! - [`fit_batch`]: full-gradient L-BFGS with a backtracking Armijo line
//!   search, so the objective trace is monotone non-increasing. Gradient
//!   accumulation can fan out over a bounded worker count with an ordered
//!   chunk reduction; the `deterministic` flag forces single-threaded
//!   accumulation, whose result is independent of the environment.

use std::path::PathBuf;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DyadDataset;
use crate::error::LflError;
use crate::labels::LabelKind;
use crate::model::{Dyad, LflModel, ModelSpec};
use crate::objective::{
    check_compat, emit_example_gradient, example_loss_and_dz, gradient, objective_value,
    ExampleWorkspace, Objective, ParamLayout, RegContext,
};
use crate::Result;

/// Which optimizer drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Batch,
}

impl std::str::FromStr for OptimizerKind {
    type Err = LflError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "batch" => Ok(OptimizerKind::Batch),
            other => Err(LflError::InvalidConfig(format!(
                "unknown optimizer {other:?} (expected sgd or batch)"
            ))),
        }
    }
}

/// Training configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub objective: Objective,
    pub optimizer: OptimizerKind,
    /// SGD epochs.
    pub epochs: usize,
    pub learning_rate: f64,
    /// Multiplicative per-epoch learning-rate factor in (0, 1].
    pub lr_decay: f64,
    pub batch_shuffle_seed: u64,
    /// Free weights initialize uniform on [-init_scale, init_scale].
    pub init_scale: f64,
    pub init_seed: u64,
    /// Relative objective decrease below which training counts as converged.
    pub convergence_tol: f64,
    /// Batch iteration cap.
    pub max_batch_iters: usize,
    /// Write the model after each epoch/iteration to numbered files here.
    pub checkpoint_dir: Option<PathBuf>,
    /// Force ordered single-threaded gradient reduction.
    pub deterministic: bool,
    /// Worker cap for batch gradient fan-out (ignored when deterministic).
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::default(),
            optimizer: OptimizerKind::Sgd,
            epochs: 50,
            learning_rate: 0.05,
            lr_decay: 0.95,
            batch_shuffle_seed: 0,
            init_scale: 0.1,
            init_seed: 0,
            convergence_tol: 1e-6,
            max_batch_iters: 200,
            checkpoint_dir: None,
            deterministic: true,
            threads: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.objective.validate()?;
        if self.epochs == 0 {
            return Err(LflError::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(LflError::InvalidConfig(format!(
                "learning rate must be finite and positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.lr_decay > 0.0 && self.lr_decay <= 1.0) {
            return Err(LflError::InvalidConfig(format!(
                "lr decay must lie in (0, 1], got {}",
                self.lr_decay
            )));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(LflError::InvalidConfig(format!(
                "init scale must be finite and non-negative, got {}",
                self.init_scale
            )));
        }
        if !(self.convergence_tol >= 0.0) {
            return Err(LflError::InvalidConfig(format!(
                "convergence tolerance must be non-negative, got {}",
                self.convergence_tol
            )));
        }
        if self.max_batch_iters == 0 {
            return Err(LflError::InvalidConfig(
                "max batch iterations must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn workers(&self) -> usize {
        if self.deterministic {
            1
        } else {
            self.threads.max(1)
        }
    }
}

/// Outcome of a training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    /// Objective after initialization, then after each epoch/iteration.
    pub trace: Vec<f64>,
    pub final_objective: f64,
    pub epochs_run: usize,
    pub wall_time_secs: f64,
    pub converged: bool,
    pub line_search_failures: usize,
}

impl FitReport {
    fn new(trace: Vec<f64>, epochs_run: usize, started: Instant, converged: bool) -> Self {
        let final_objective = *trace.last().expect("trace never empty");
        FitReport {
            trace,
            final_objective,
            epochs_run,
            wall_time_secs: started.elapsed().as_secs_f64(),
            converged,
            line_search_failures: 0,
        }
    }
}

/// Allocate a model and draw its free weights i.i.d. uniform on
/// [-init_scale, init_scale] from a seeded generator. Identical spec and
/// seed give bit-identical models.
pub fn init_model(spec: &ModelSpec, config: &TrainConfig) -> Result<LflModel> {
    config.validate()?;
    let mut model = LflModel::zeros(spec)?;
    if config.init_scale > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(config.init_seed);
        let s = config.init_scale;
        let values: Vec<f64> = (0..model.free_param_count())
            .map(|_| rng.random_range(-s..s))
            .collect();
        model.set_free_params(&values)?;
    }
    Ok(model)
}

fn checkpoint(model: &LflModel, dir: &Option<PathBuf>, step: usize) -> Result<()> {
    if let Some(dir) = dir {
        std::fs::create_dir_all(dir)?;
        model.save(&dir.join(format!("checkpoint_{step:04}.json")))?;
    }
    Ok(())
}

/// Stochastic gradient descent over a seeded shuffled example order.
pub fn fit_sgd(model: &mut LflModel, dataset: &DyadDataset, config: &TrainConfig) -> Result<FitReport> {
    config.validate()?;
    check_compat(model, dataset)?;
    if dataset.is_empty() {
        return Err(LflError::EmptyDataset);
    }
    let started = Instant::now();
    let n = dataset.len() as f64;
    let reg = RegContext::new(&config.objective, dataset);
    let mut rng = ChaCha8Rng::seed_from_u64(config.batch_shuffle_seed);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut ws = ExampleWorkspace::new();
    let mut lr = config.learning_rate;
    let mut trace = vec![objective_value(model, dataset, &config.objective)?];

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let (r, c, y, side, relation) = dataset.example_parts(i);
            example_loss_and_dz(model, r, c, side, relation, y, config.objective.kind, &mut ws);
            let mut emissions = std::mem::take(&mut ws.emissions);
            emit_example_gradient(model, r, c, side, relation, &ws.dz, &mut emissions);
            for &(slot, g) in &emissions {
                let (strength, scale) = reg.of(slot);
                let w = model.slot_get(slot);
                model.slot_add(slot, -lr * (g + strength * scale * w / n));
            }
            ws.emissions = emissions;
        }
        lr *= config.lr_decay;
        let objective = objective_value(model, dataset, &config.objective)?;
        if !objective.is_finite() {
            return Err(LflError::NonFiniteObjective {
                context: format!("sgd epoch {}", epoch + 1),
            });
        }
        trace.push(objective);
        checkpoint(model, &config.checkpoint_dir, epoch + 1)?;
    }
    let epochs_run = config.epochs;
    let converged = trace
        .iter()
        .rev()
        .take(2)
        .collect::<Vec<_>>()
        .windows(2)
        .all(|w| {
            let (last, prev) = (*w[0], *w[1]);
            (prev - last).abs() <= config.convergence_tol * prev.abs().max(1.0)
        });
    Ok(FitReport::new(trace, epochs_run, started, converged))
}

/// Full objective and gradient over the dataset, optionally fanned out over
/// contiguous chunks whose partial sums reduce in chunk order.
fn full_objective_and_gradient(
    model: &LflModel,
    dataset: &DyadDataset,
    objective: &Objective,
    workers: usize,
) -> Result<(f64, Vec<f64>)> {
    if workers <= 1 || dataset.len() < 2 * workers {
        let value = objective_value(model, dataset, objective)?;
        let grad = gradient(model, dataset, objective)?;
        return Ok((value, grad.into_values()));
    }
    let layout = ParamLayout::of(model);
    let total = layout.total();
    let n = dataset.len();
    let chunk = n.div_ceil(workers);
    let bounds: Vec<(usize, usize)> = (0..workers)
        .map(|w| (w * chunk, ((w + 1) * chunk).min(n)))
        .filter(|(lo, hi)| lo < hi)
        .collect();
    let partials: Vec<(f64, Vec<f64>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = bounds
            .iter()
            .map(|&(lo, hi)| {
                let layout = &layout;
                scope.spawn(move || {
                    let mut ws = ExampleWorkspace::new();
                    let mut loss = 0.0;
                    let mut grad = vec![0.0; total];
                    for i in lo..hi {
                        let (r, c, y, side, relation) = dataset.example_parts(i);
                        loss += example_loss_and_dz(
                            model,
                            r,
                            c,
                            side,
                            relation,
                            y,
                            objective.kind,
                            &mut ws,
                        );
                        let mut emissions = std::mem::take(&mut ws.emissions);
                        emit_example_gradient(model, r, c, side, relation, &ws.dz, &mut emissions);
                        for &(slot, g) in &emissions {
                            if let Some(idx) = layout.index(slot) {
                                grad[idx] += g;
                            }
                        }
                        ws.emissions = emissions;
                    }
                    (loss, grad)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });
    let mut loss = 0.0;
    let mut grad = vec![0.0; total];
    for (partial_loss, partial_grad) in partials {
        loss += partial_loss;
        for (g, p) in grad.iter_mut().zip(partial_grad) {
            *g += p;
        }
    }
    // Penalty terms are cheap; add them serially.
    loss += crate::objective::penalty_value(model, dataset, objective);
    let reg = RegContext::new(objective, dataset);
    let mut pos = 0usize;
    crate::objective::for_each_slot(model, |slot| {
        let (strength, scale) = reg.of(slot);
        grad[pos] += strength * scale * model.slot_get(slot);
        pos += 1;
    });
    Ok((loss, grad))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Deterministic batch optimizer: L-BFGS (memory 10) with backtracking
/// Armijo line search. The objective trace is monotone non-increasing; a
/// line-search failure is reported, not fatal — the best iterate so far is
/// returned.
pub fn fit_batch(
    model: &mut LflModel,
    dataset: &DyadDataset,
    config: &TrainConfig,
) -> Result<FitReport> {
    config.validate()?;
    check_compat(model, dataset)?;
    let started = Instant::now();
    let workers = config.workers();
    let dim = model.free_param_count();
    if dim == 0 {
        return Err(LflError::InvalidConfig(
            "model has no free parameters to optimize".into(),
        ));
    }

    const MEMORY: usize = 10;
    const ARMIJO_C1: f64 = 1e-4;
    const MAX_BACKTRACKS: usize = 60;

    let mut x = model.free_params();
    let (mut f, mut g) = full_objective_and_gradient(model, dataset, &config.objective, workers)?;
    if !f.is_finite() {
        return Err(LflError::NonFiniteObjective {
            context: "batch initialization".into(),
        });
    }
    let mut trace = vec![f];
    let mut s_memory: Vec<Vec<f64>> = Vec::new();
    let mut y_memory: Vec<Vec<f64>> = Vec::new();
    let mut converged = false;
    let mut line_search_failures = 0usize;
    let mut iterations = 0usize;

    for _ in 0..config.max_batch_iters {
        if norm(&g) <= 1e-12 {
            converged = true;
            break;
        }

        // Two-loop recursion for the L-BFGS direction.
        let mut direction: Vec<f64> = g.iter().map(|v| -v).collect();
        if !s_memory.is_empty() {
            let m = s_memory.len();
            let mut alphas = vec![0.0; m];
            let mut q = direction.clone();
            for i in (0..m).rev() {
                let rho = 1.0 / dot(&y_memory[i], &s_memory[i]);
                alphas[i] = rho * dot(&s_memory[i], &q);
                for (qv, yv) in q.iter_mut().zip(&y_memory[i]) {
                    *qv -= alphas[i] * yv;
                }
            }
            let last = m - 1;
            let gamma = dot(&s_memory[last], &y_memory[last]) / dot(&y_memory[last], &y_memory[last]);
            for qv in q.iter_mut() {
                *qv *= gamma;
            }
            for i in 0..m {
                let rho = 1.0 / dot(&y_memory[i], &s_memory[i]);
                let beta = rho * dot(&y_memory[i], &q);
                for (qv, sv) in q.iter_mut().zip(&s_memory[i]) {
                    *qv += (alphas[i] - beta) * sv;
                }
            }
            direction = q;
        }

        let mut slope = dot(&g, &direction);
        if slope >= 0.0 {
            // Not a descent direction; drop the memory and fall back to
            // steepest descent.
            s_memory.clear();
            y_memory.clear();
            direction = g.iter().map(|v| -v).collect();
            slope = dot(&g, &direction);
        }

        let mut step = if s_memory.is_empty() {
            (1.0 / norm(&direction)).min(1.0)
        } else {
            1.0
        };
        let mut accepted = false;
        let mut x_new = x.clone();
        let mut f_new = f;
        for _ in 0..MAX_BACKTRACKS {
            for ((xn, xv), dv) in x_new.iter_mut().zip(&x).zip(&direction) {
                *xn = xv + step * dv;
            }
            model.set_free_params(&x_new)?;
            f_new = objective_with_workers(model, dataset, &config.objective, workers)?;
            if f_new.is_finite() && f_new <= f + ARMIJO_C1 * step * slope {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            // Restore the best iterate and stop.
            model.set_free_params(&x)?;
            line_search_failures += 1;
            break;
        }

        iterations += 1;
        let (f_next, g_next) =
            full_objective_and_gradient(model, dataset, &config.objective, workers)?;
        debug_assert!((f_next - f_new).abs() <= 1e-9 * f_new.abs().max(1.0));
        let s_vec: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y_vec: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();
        if dot(&s_vec, &y_vec) > 1e-10 {
            s_memory.push(s_vec);
            y_memory.push(y_vec);
            if s_memory.len() > MEMORY {
                s_memory.remove(0);
                y_memory.remove(0);
            }
        }
        let prev = f;
        x = x_new;
        f = f_next;
        g = g_next;
        trace.push(f);
        checkpoint(model, &config.checkpoint_dir, iterations)?;
        if (prev - f).abs() <= config.convergence_tol * prev.abs().max(1.0) {
            converged = true;
            break;
        }
    }
    model.set_free_params(&x)?;
    let mut report = FitReport::new(trace, iterations, started, converged);
    report.line_search_failures = line_search_failures;
    Ok(report)
}

fn objective_with_workers(
    model: &LflModel,
    dataset: &DyadDataset,
    objective: &Objective,
    workers: usize,
) -> Result<f64> {
    if workers <= 1 || dataset.len() < 2 * workers {
        return objective_value(model, dataset, objective);
    }
    // Line-search probes reuse the fan-out path for its loss sum.
    full_objective_and_gradient(model, dataset, objective, workers).map(|(f, _)| f)
}

/// Dispatch on the configured optimizer.
pub fn fit(model: &mut LflModel, dataset: &DyadDataset, config: &TrainConfig) -> Result<FitReport> {
    match config.optimizer {
        OptimizerKind::Sgd => fit_sgd(model, dataset, config),
        OptimizerKind::Batch => fit_batch(model, dataset, config),
    }
}

/// Two-stage cold-start training.
///
/// Stage one trains a latent-only model (side-information stripped). Stage
/// two attaches zero-initialized side weights, freezes the latent weights,
/// and optimizes the side weights alone. Returns the stage-two model with
/// both fit reports.
pub fn fit_coldstart(
    spec: &ModelSpec,
    dataset: &DyadDataset,
    config: &TrainConfig,
) -> Result<(LflModel, FitReport, FitReport)> {
    let side_dim = dataset
        .side_dim()
        .filter(|&d| d > 0)
        .ok_or_else(|| LflError::InvalidConfig("cold-start training needs side features".into()))?;
    if let Some(expected) = spec.side_dim {
        if expected != side_dim {
            return Err(LflError::SideDimMismatch {
                expected,
                got: side_dim,
            });
        }
    }
    let latent_spec = ModelSpec {
        side_dim: None,
        ..spec.clone()
    };
    let mut model = init_model(&latent_spec, config)?;
    let stage1 = fit(&mut model, &dataset.without_side(), config)?;

    model.add_side_weights(side_dim)?;
    model.set_latent_frozen(true);
    let stage2 = fit(&mut model, dataset, config)?;
    Ok((model, stage1, stage2))
}

/// Mean-rule prediction with the cold-start fallback of a latent-only model.
///
/// Unseen row, seen column: the mean of the model's mean-rule predictions
/// over the training rows observed for that column. Seen row, unseen
/// column: the mirror image. Both unseen: the mean prediction over every
/// training dyad. Both seen: the ordinary mean prediction.
pub fn coldstart_mean_prediction(
    model: &LflModel,
    train: &DyadDataset,
    row: Option<usize>,
    col: Option<usize>,
) -> Result<f64> {
    if model.label_space().kind() != LabelKind::Ordinal {
        return Err(LflError::LabelKindMismatch(
            "cold-start fallback needs an ordinal label space".into(),
        ));
    }
    let seen_row = row.filter(|&r| r < train.row_count() && train.row_obs_counts()[r] > 0);
    let seen_col = col.filter(|&c| c < train.col_count() && train.col_obs_counts()[c] > 0);
    match (seen_row, seen_col, row, col) {
        (Some(r), Some(c), _, _) => model.predict_mean(&Dyad::new(r, c)),
        (None, Some(c), _, _) => {
            let mut total = 0.0;
            let mut count = 0usize;
            for ex in train.examples() {
                if ex.col == c {
                    total += model.predict_mean(&Dyad::new(ex.row, c))?;
                    count += 1;
                }
            }
            Ok(total / count as f64)
        }
        (Some(r), None, _, _) => {
            let mut total = 0.0;
            let mut count = 0usize;
            for ex in train.examples() {
                if ex.row == r {
                    total += model.predict_mean(&Dyad::new(r, ex.col))?;
                    count += 1;
                }
            }
            Ok(total / count as f64)
        }
        (None, None, _, _) => {
            let mut total = 0.0;
            for ex in train.examples() {
                total += model.predict_mean(&Dyad::new(ex.row, ex.col))?;
            }
            if train.is_empty() {
                return Err(LflError::EmptyDataset);
            }
            Ok(total / train.len() as f64)
        }
    }
}

/// Spec-shaped wrapper over [`coldstart_mean_prediction`] for in-bounds ids.
pub fn predict_coldstart_fallback(
    model: &LflModel,
    train: &DyadDataset,
    dyad: &Dyad,
) -> Result<f64> {
    coldstart_mean_prediction(model, train, Some(dyad.row), Some(dyad.col))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::LabelSpace;
    use crate::model::VariantWeights;
    use crate::objective::ObjectiveKind;

    fn binary_space() -> LabelSpace {
        LabelSpace::with_base(
            vec!["0".into(), "1".into()],
            LabelKind::Nominal,
            None,
            0,
        )
        .unwrap()
    }

    #[test]
    fn init_is_seed_deterministic() {
        let spec = ModelSpec::dyadic(
            LabelSpace::ordinal_numeric(vec![1.0, 2.0, 3.0]).unwrap(),
            10,
            10,
            3,
        );
        let config = TrainConfig::default();
        let a = init_model(&spec, &config).unwrap();
        let b = init_model(&spec, &config).unwrap();
        assert_eq!(a, b);

        let c = init_model(
            &spec,
            &TrainConfig {
                init_seed: 1,
                ..config
            },
        )
        .unwrap();
        assert_ne!(a.free_params(), c.free_params());
    }

    #[test]
    fn zero_init_scale_gives_uniform_predictions() {
        let spec = ModelSpec::dyadic(binary_space(), 3, 3, 2);
        let config = TrainConfig {
            init_scale: 0.0,
            ..TrainConfig::default()
        };
        let model = init_model(&spec, &config).unwrap();
        let dist = model.predict_proba(&Dyad::new(0, 0)).unwrap();
        assert!((dist.prob(0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_learning_rate_leaves_model_unchanged() {
        let (train, _) =
            crate::data::synth_nominal(&crate::data::SynthNominalConfig::new(5, 2, 3, 0.8, 1))
                .unwrap();
        let spec = ModelSpec::dyadic(train.label_space().clone(), 5, 5, 2);
        let config = TrainConfig {
            learning_rate: 1e-300, // positive per the config contract, effectively zero
            epochs: 1,
            ..TrainConfig::default()
        };
        let mut model = init_model(&spec, &config).unwrap();
        let before = model.free_params();
        let report = fit_sgd(&mut model, &train, &config).unwrap();
        let after = model.free_params();
        for (a, b) in before.iter().zip(&after) {
            assert!((a - b).abs() < 1e-290);
        }
        assert!((report.trace[0] - report.trace[1]).abs() < 1e-9);
    }

    #[test]
    fn batch_pure_ridge_converges_to_zero() {
        // Large lambda, empty dataset: the optimum is the zero vector.
        let spec = ModelSpec {
            bias: false,
            ..ModelSpec::dyadic(binary_space(), 3, 3, 2)
        };
        let config = TrainConfig {
            optimizer: OptimizerKind::Batch,
            objective: Objective::new(ObjectiveKind::Nll, 50.0, 50.0),
            convergence_tol: 0.0,
            max_batch_iters: 50,
            ..TrainConfig::default()
        };
        let mut model = init_model(&spec, &config).unwrap();
        let empty = DyadDataset::new(3, 3, vec![], binary_space()).unwrap();
        let report = fit_batch(&mut model, &empty, &config).unwrap();
        assert!(report.epochs_run <= 50);
        for w in model.free_params() {
            assert!(w.abs() < 1e-8, "weight {w} not driven to zero");
        }
    }

    #[test]
    fn batch_trace_is_monotone_nonincreasing() {
        let (train, _) =
            crate::data::synth_nominal(&crate::data::SynthNominalConfig::new(8, 2, 3, 0.8, 3))
                .unwrap();
        let spec = ModelSpec::dyadic(train.label_space().clone(), 8, 8, 2);
        let config = TrainConfig {
            optimizer: OptimizerKind::Batch,
            objective: Objective::nll(0.1),
            max_batch_iters: 40,
            ..TrainConfig::default()
        };
        let mut model = init_model(&spec, &config).unwrap();
        let report = fit_batch(&mut model, &train, &config).unwrap();
        for pair in report.trace.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
        let direct = objective_value(&model, &train, &config.objective).unwrap();
        assert!((report.final_objective - direct).abs() < 1e-10);
    }

    /// Logistic sub-case: rank 0 with biases is convex, so SGD approaches
    /// the batch optimum and a default-tolerance batch run matches a
    /// high-precision reference.
    #[test]
    fn convex_subcase_sgd_meets_batch_optimum() {
        let space = binary_space();
        let mut examples = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for r in 0..20 {
            let p = 0.2 + 0.6 * (r as f64) / 19.0;
            let y = usize::from(rng.random_range(0.0..1.0) < p);
            examples.push(crate::data::Example {
                row: r,
                col: 0,
                label: y,
            });
        }
        let train = DyadDataset::new(20, 1, examples, space.clone()).unwrap();
        let spec = ModelSpec::dyadic(space, 20, 1, 0); // bias-only: convex
        let objective = Objective::nll(0.05);

        let reference_config = TrainConfig {
            optimizer: OptimizerKind::Batch,
            objective,
            convergence_tol: 1e-10,
            max_batch_iters: 500,
            ..TrainConfig::default()
        };
        let mut reference = init_model(&spec, &reference_config).unwrap();
        let ref_report = fit_batch(&mut reference, &train, &reference_config).unwrap();

        let default_config = TrainConfig {
            optimizer: OptimizerKind::Batch,
            objective,
            ..TrainConfig::default()
        };
        let mut batch_model = init_model(&spec, &default_config).unwrap();
        let batch_report = fit_batch(&mut batch_model, &train, &default_config).unwrap();
        assert!(
            (batch_report.final_objective - ref_report.final_objective).abs() < 1e-6,
            "batch {} vs reference {}",
            batch_report.final_objective,
            ref_report.final_objective
        );

        let sgd_config = TrainConfig {
            optimizer: OptimizerKind::Sgd,
            objective,
            learning_rate: 0.1,
            lr_decay: 1.0,
            epochs: 200,
            ..TrainConfig::default()
        };
        let mut sgd_model = init_model(&spec, &sgd_config).unwrap();
        let sgd_report = fit_sgd(&mut sgd_model, &train, &sgd_config).unwrap();
        assert!(
            sgd_report.final_objective - ref_report.final_objective < 1e-2,
            "sgd {} vs reference {}",
            sgd_report.final_objective,
            ref_report.final_objective
        );
    }

    #[test]
    fn sgd_descends_on_synthetic_instances() {
        for seed in 0..5 {
            let (train, _) = crate::data::synth_nominal(&crate::data::SynthNominalConfig::new(
                10, 5, 3, 0.999, seed,
            ))
            .unwrap();
            let spec = ModelSpec::dyadic(train.label_space().clone(), 10, 10, 5);
            let config = TrainConfig {
                epochs: 10,
                init_seed: seed,
                batch_shuffle_seed: seed,
                objective: Objective::nll(0.01),
                ..TrainConfig::default()
            };
            let mut model = init_model(&spec, &config).unwrap();
            let report = fit_sgd(&mut model, &train, &config).unwrap();
            assert!(
                report.final_objective < report.trace[0],
                "seed {seed}: {} !< {}",
                report.final_objective,
                report.trace[0]
            );
        }
    }

    #[test]
    fn sgd_is_bit_deterministic() {
        let (train, _) =
            crate::data::synth_nominal(&crate::data::SynthNominalConfig::new(8, 2, 3, 0.9, 7))
                .unwrap();
        let spec = ModelSpec::dyadic(train.label_space().clone(), 8, 8, 2);
        let config = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let run = || {
            let mut model = init_model(&spec, &config).unwrap();
            let report = fit_sgd(&mut model, &train, &config).unwrap();
            (model, report.trace, report.final_objective)
        };
        let (m1, t1, f1) = run();
        let (m2, t2, f2) = run();
        assert_eq!(m1, m2);
        assert_eq!(t1, t2);
        assert_eq!(f1.to_bits(), f2.to_bits());
    }

    #[test]
    fn coldstart_freezes_stage_one_latents() {
        let ds = crate::data::synth_coldstart_ordinal(&crate::data::SynthColdstartConfig {
            num_rows: 12,
            num_cols: 8,
            seed: 2,
            ..Default::default()
        })
        .unwrap();
        let spec = ModelSpec {
            side_dim: ds.side_dim(),
            ..ModelSpec::dyadic(ds.label_space().clone(), 12, 8, 2)
        };
        let config = TrainConfig {
            optimizer: OptimizerKind::Batch,
            objective: Objective::new(ObjectiveKind::Nll, 0.1, 0.05),
            max_batch_iters: 30,
            ..TrainConfig::default()
        };
        // Reproduce stage one alone to compare latent weights bit-for-bit.
        let latent_spec = ModelSpec {
            side_dim: None,
            ..spec.clone()
        };
        let mut stage1_model = init_model(&latent_spec, &config).unwrap();
        fit(&mut stage1_model, &ds.without_side(), &config).unwrap();

        let (model, _r1, r2) = fit_coldstart(&spec, &ds, &config).unwrap();
        if let (
            VariantWeights::Dyadic { row: ra, col: ca },
            VariantWeights::Dyadic { row: rb, col: cb },
        ) = (stage1_model.weights(), model.weights())
        {
            assert_eq!(ra, rb);
            assert_eq!(ca, cb);
        } else {
            panic!("expected dyadic weights");
        }
        assert!(model.latent_frozen());
        assert!(r2.final_objective <= r2.trace[0] + 1e-12);
    }

    #[test]
    fn coldstart_with_zero_side_features_changes_nothing() {
        let ds = crate::data::synth_coldstart_ordinal(&crate::data::SynthColdstartConfig {
            num_rows: 10,
            num_cols: 6,
            seed: 5,
            ..Default::default()
        })
        .unwrap();
        // Replace all side vectors with zeros.
        let zero_side = vec![vec![0.0; ds.side_dim().unwrap()]; ds.len()];
        let ds = ds.without_side().with_side(zero_side).unwrap();
        let spec = ModelSpec {
            side_dim: ds.side_dim(),
            ..ModelSpec::dyadic(ds.label_space().clone(), 10, 6, 2)
        };
        let config = TrainConfig {
            optimizer: OptimizerKind::Batch,
            max_batch_iters: 20,
            ..TrainConfig::default()
        };
        let (model, _, _) = fit_coldstart(&spec, &ds, &config).unwrap();
        // Side weights stay zero (their gradient is identically zero and the
        // penalty keeps them pinned), so predictions equal stage one's.
        for i in 0..ds.len() {
            let (r, c, _, side, _) = ds.example_parts(i);
            let with_side = model
                .predict_proba(&Dyad::new(r, c).with_side(side.unwrap().to_vec()))
                .unwrap();
            let mut latent_only = model.clone();
            latent_only.side_weights = None;
            let without = latent_only.predict_proba(&Dyad::new(r, c)).unwrap();
            for (a, b) in with_side.probs().iter().zip(without.probs()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fallback_prediction_cases() {
        let space = LabelSpace::ordinal_numeric(vec![1.0, 5.0]).unwrap();
        let model = LflModel::zeros(&ModelSpec {
            bias: false,
            ..ModelSpec::dyadic(space.clone(), 4, 3, 1)
        })
        .unwrap();
        // Uniform model: every mean prediction is 3.0.
        let train = DyadDataset::new(
            4,
            3,
            vec![
                crate::data::Example {
                    row: 0,
                    col: 0,
                    label: 0,
                },
                crate::data::Example {
                    row: 1,
                    col: 0,
                    label: 1,
                },
            ],
            space,
        )
        .unwrap();
        // Both unseen -> global mean prediction.
        let p = coldstart_mean_prediction(&model, &train, Some(3), Some(2)).unwrap();
        assert!((p - 3.0).abs() < 1e-12);
        // Unseen row, column rated by exactly two rows -> average of their
        // predictions (also 3.0 for the uniform model).
        let p = coldstart_mean_prediction(&model, &train, Some(3), Some(0)).unwrap();
        assert!((p - 3.0).abs() < 1e-12);
        // Both seen -> ordinary prediction.
        let p = predict_coldstart_fallback(&model, &train, &Dyad::new(0, 0)).unwrap();
        assert!((p - 3.0).abs() < 1e-12);
    }

    #[test]
    fn fallback_matches_bruteforce_column_average() {
        let ds = crate::data::synth_coldstart_ordinal(&crate::data::SynthColdstartConfig {
            num_rows: 10,
            num_cols: 6,
            density: 0.5,
            seed: 9,
            ..Default::default()
        })
        .unwrap();
        let ds = ds.without_side();
        let spec = ModelSpec::dyadic(ds.label_space().clone(), 10, 6, 2);
        let config = TrainConfig {
            epochs: 5,
            ..TrainConfig::default()
        };
        let mut model = init_model(&spec, &config).unwrap();
        fit_sgd(&mut model, &ds, &config).unwrap();
        let c = 3;
        let brute: Vec<f64> = ds
            .examples()
            .iter()
            .filter(|e| e.col == c)
            .map(|e| model.predict_mean(&Dyad::new(e.row, c)).unwrap())
            .collect();
        let expected = brute.iter().sum::<f64>() / brute.len() as f64;
        let got = coldstart_mean_prediction(&model, &ds, None, Some(c)).unwrap();
        assert!((got - expected).abs() < 1e-12);
    }
}
