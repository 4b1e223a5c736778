//! Learning base classifiers from seen-class data with the similarity
//! weights held fixed.
//!
//! Three loss settings are supported: per-class one-vs-other squared hinge,
//! the Crammer-Singer multi-class loss, and its structured-margin variant
//! where the margin between two classes is the l2 distance between their
//! semantic embeddings. All three carry the ridge term (lambda/2) sum_c
//! ||w_c||^2 on the synthesized classifiers and are minimized by full-batch
//! gradient descent with Armijo backtracking, so the objective never
//! increases across accepted iterations.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::semantic::EmbeddingTable;
use crate::semantic::SimilarityMatrix;
use crate::synthesis::BaseClassifierSet;

/// Seen-class training data: features plus integer class labels.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    features: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(features: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::ShapeMismatch("dataset has no samples".into()));
        }
        if features.nrows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::InvalidLabel {
                label: bad,
                num_classes,
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "dataset features",
            });
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Number of seen classes S.
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, labels unchanged.
    pub fn select(&self, indices: &[usize]) -> Result<LabeledDataset> {
        if indices.is_empty() {
            return Err(Error::ShapeMismatch("empty sample selection".into()));
        }
        let features = self.features.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        LabeledDataset::new(features, labels, self.num_classes)
    }

    /// Keeps samples of the listed classes and relabels them densely in the
    /// listed order.
    pub fn restrict_to_classes(&self, classes: &[usize]) -> Result<LabeledDataset> {
        let mut remap = vec![usize::MAX; self.num_classes];
        for (new, &old) in classes.iter().enumerate() {
            remap[old] = new;
        }
        let indices: Vec<usize> = (0..self.num_samples())
            .filter(|&i| remap[self.labels[i]] != usize::MAX)
            .collect();
        if indices.is_empty() {
            return Err(Error::ShapeMismatch(
                "no samples left after class restriction".into(),
            ));
        }
        let features = self.features.select(Axis(0), &indices);
        let labels = indices.iter().map(|&i| remap[self.labels[i]]).collect();
        LabeledDataset::new(features, labels, classes.len())
    }
}

/// Loss setting for base-classifier learning.
#[derive(Debug, Clone)]
pub enum LossKind {
    OneVsOther,
    CrammerSinger,
    /// Margin scaled by the l2 distance between seen-class embeddings.
    CrammerSingerStruct { seen_embeddings: EmbeddingTable },
}

/// Armijo backtracking parameters for the batch solver.
#[derive(Debug, Clone)]
pub struct StepRule {
    pub initial_step: f64,
    pub shrink: f64,
    pub accept: f64,
    pub min_step: f64,
}

impl Default for StepRule {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            accept: 1e-4,
            min_step: 1e-18,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_rule: StepRule,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            max_iters: 300,
            grad_tol: 1e-6,
            step_rule: StepRule::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 || !self.lambda.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "lambda must be a non-negative real, got {}",
                self.lambda
            )));
        }
        if !(self.grad_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "grad_tol must be positive, got {}",
                self.grad_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be positive".into()));
        }
        Ok(())
    }
}

/// Why the solver stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    MaxIterations,
    StepVanished,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub iterations: usize,
    pub final_objective: f64,
    pub final_grad_norm: f64,
    pub converged: bool,
    pub termination: Termination,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub bases: BaseClassifierSet,
    pub report: TrainReport,
}

/// One-vs-other objective of the synthesized classifiers:
/// sum_c sum_n max(0, 1 - I_{y_n,c} w_c'x_n)^2 + (lambda/2) sum_c ||w_c||^2.
pub fn ovo_objective(
    bases: &BaseClassifierSet,
    data: &LabeledDataset,
    weights: &SimilarityMatrix,
    lambda: f64,
) -> Result<f64> {
    check_shapes(bases, data, weights)?;
    let w = weights.weights().dot(bases.vectors());
    Ok(ovo_value(&w, data, lambda))
}

/// Exact gradient of [`ovo_objective`] with respect to the base classifiers.
/// The squared hinge is continuously differentiable, so this is the unique
/// gradient; the chain rule through w_c = sum_r s_cr v_r turns the per-class
/// gradient into S' dL/dW.
pub fn ovo_gradient(
    bases: &BaseClassifierSet,
    data: &LabeledDataset,
    weights: &SimilarityMatrix,
    lambda: f64,
) -> Result<Array2<f64>> {
    check_shapes(bases, data, weights)?;
    let w = weights.weights().dot(bases.vectors());
    let (_, grad_w) = ovo_value_grad(&w, data, lambda);
    Ok(weights.weights().t().dot(&grad_w))
}

fn check_shapes(
    bases: &BaseClassifierSet,
    data: &LabeledDataset,
    weights: &SimilarityMatrix,
) -> Result<()> {
    if weights.num_rows() != data.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "{} similarity rows vs {} seen classes",
            weights.num_rows(),
            data.num_classes()
        )));
    }
    if weights.num_phantom() != bases.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} similarity columns vs {} base classifiers",
            weights.num_phantom(),
            bases.len()
        )));
    }
    if bases.feature_dim() != data.feature_dim() {
        return Err(Error::ShapeMismatch(format!(
            "base classifier dim {} vs feature dim {}",
            bases.feature_dim(),
            data.feature_dim()
        )));
    }
    Ok(())
}

fn ovo_value(w: &Array2<f64>, data: &LabeledDataset, lambda: f64) -> f64 {
    let scores = data.features().dot(&w.t());
    let mut loss = 0.0;
    for (n, &y) in data.labels().iter().enumerate() {
        for c in 0..data.num_classes() {
            let sign = if y == c { 1.0 } else { -1.0 };
            let slack = 1.0 - sign * scores[[n, c]];
            if slack > 0.0 {
                loss += slack * slack;
            }
        }
    }
    loss + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Value and gradient with respect to the synthesized classifiers W.
fn ovo_value_grad(w: &Array2<f64>, data: &LabeledDataset, lambda: f64) -> (f64, Array2<f64>) {
    let scores = data.features().dot(&w.t());
    let n_samples = data.num_samples();
    let s = data.num_classes();
    let mut loss = 0.0;
    // t[n, c] = d loss / d scores[n, c]
    let mut t = Array2::<f64>::zeros((n_samples, s));
    for (n, &y) in data.labels().iter().enumerate() {
        for c in 0..s {
            let sign = if y == c { 1.0 } else { -1.0 };
            let slack = 1.0 - sign * scores[[n, c]];
            if slack > 0.0 {
                loss += slack * slack;
                t[[n, c]] = -2.0 * slack * sign;
            }
        }
    }
    let mut grad_w = t.t().dot(data.features());
    grad_w.scaled_add(lambda, w);
    let obj = loss + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    (obj, grad_w)
}

/// Crammer-Singer loss for one sample:
/// max(0, max_{c != y} Delta(c, y) + score_c - score_y).
pub fn cs_loss(scores: &[f64], y: usize, delta: impl Fn(usize, usize) -> f64) -> Result<f64> {
    if scores.len() < 2 {
        return Err(Error::ShapeMismatch(
            "crammer-singer loss needs at least 2 classes".into(),
        ));
    }
    if y >= scores.len() {
        return Err(Error::InvalidLabel {
            label: y,
            num_classes: scores.len(),
        });
    }
    let mut worst = f64::NEG_INFINITY;
    for (c, &sc) in scores.iter().enumerate() {
        if c == y {
            continue;
        }
        let violation = delta(c, y) + sc - scores[y];
        if violation > worst {
            worst = violation;
        }
    }
    Ok(worst.max(0.0))
}

/// Pairwise structured margins: Delta[c, y] = ||a_c - a_y||_2.
fn structured_margins(seen: &EmbeddingTable) -> Array2<f64> {
    let s = seen.len();
    let mut delta = Array2::zeros((s, s));
    for c in 0..s {
        for y in 0..s {
            if c != y {
                let diff = &seen.row(c) - &seen.row(y);
                delta[[c, y]] = diff.dot(&diff).sqrt();
            }
        }
    }
    delta
}

/// Value of the Crammer-Singer objective (data term + ridge on W).
fn cs_value(w: &Array2<f64>, data: &LabeledDataset, delta: Option<&Array2<f64>>, lambda: f64) -> f64 {
    let scores = data.features().dot(&w.t());
    let s = data.num_classes();
    let mut loss = 0.0;
    for (n, &y) in data.labels().iter().enumerate() {
        let mut worst = f64::NEG_INFINITY;
        for c in 0..s {
            if c == y {
                continue;
            }
            let margin = delta.map_or(1.0, |d| d[[c, y]]);
            let violation = margin + scores[[n, c]] - scores[[n, y]];
            if violation > worst {
                worst = violation;
            }
        }
        loss += worst.max(0.0);
    }
    loss + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>()
}

/// Deterministic subgradient of the Crammer-Singer objective: the inner max
/// resolves ties toward the lowest class index.
fn cs_value_grad(
    w: &Array2<f64>,
    data: &LabeledDataset,
    delta: Option<&Array2<f64>>,
    lambda: f64,
) -> (f64, Array2<f64>) {
    let scores = data.features().dot(&w.t());
    let s = data.num_classes();
    let n_samples = data.num_samples();
    let mut loss = 0.0;
    let mut t = Array2::<f64>::zeros((n_samples, s));
    for (n, &y) in data.labels().iter().enumerate() {
        let mut worst = f64::NEG_INFINITY;
        let mut worst_c = usize::MAX;
        for c in 0..s {
            if c == y {
                continue;
            }
            let margin = delta.map_or(1.0, |d| d[[c, y]]);
            let violation = margin + scores[[n, c]] - scores[[n, y]];
            if violation > worst {
                worst = violation;
                worst_c = c;
            }
        }
        if worst > 0.0 {
            loss += worst;
            t[[n, worst_c]] += 1.0;
            t[[n, y]] -= 1.0;
        }
    }
    let mut grad_w = t.t().dot(data.features());
    grad_w.scaled_add(lambda, w);
    let obj = loss + 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
    (obj, grad_w)
}

/// Objective machinery shared by the public trainers and the adaptation
/// module's alternating loops.
pub(crate) struct SynthesisProblem<'a> {
    data: &'a LabeledDataset,
    s_matrix: ArrayView2<'a, f64>,
    lambda: f64,
    delta: Option<Array2<f64>>,
    kind: ProblemKind,
    /// Where the ridge applies: on synthesized classifiers W (the usual
    /// setting) or on the bases V themselves (metric-learning setting).
    reg_target: RegTarget,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum ProblemKind {
    OneVsOther,
    CrammerSinger,
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum RegTarget {
    Synthesized,
    Bases,
}

impl<'a> SynthesisProblem<'a> {
    pub(crate) fn new(
        data: &'a LabeledDataset,
        weights: &'a SimilarityMatrix,
        loss: &LossKind,
        lambda: f64,
    ) -> Result<Self> {
        let delta = match loss {
            LossKind::OneVsOther | LossKind::CrammerSinger => None,
            LossKind::CrammerSingerStruct { seen_embeddings } => {
                if seen_embeddings.len() != data.num_classes() {
                    return Err(Error::ShapeMismatch(format!(
                        "structured loss embeddings cover {} classes, data has {}",
                        seen_embeddings.len(),
                        data.num_classes()
                    )));
                }
                Some(structured_margins(seen_embeddings))
            }
        };
        let kind = match loss {
            LossKind::OneVsOther => ProblemKind::OneVsOther,
            _ => ProblemKind::CrammerSinger,
        };
        if matches!(kind, ProblemKind::CrammerSinger) && data.num_classes() < 2 {
            return Err(Error::ShapeMismatch(
                "crammer-singer training needs at least 2 classes".into(),
            ));
        }
        Ok(Self {
            data,
            s_matrix: weights.weights().view(),
            lambda,
            delta,
            kind,
            reg_target: RegTarget::Synthesized,
        })
    }

    pub(crate) fn with_explicit_weights(
        data: &'a LabeledDataset,
        s_matrix: ArrayView2<'a, f64>,
        lambda: f64,
        reg_target: RegTarget,
    ) -> Self {
        Self {
            data,
            s_matrix,
            lambda,
            delta: None,
            kind: ProblemKind::OneVsOther,
            reg_target,
        }
    }

    pub(crate) fn value(&self, v: &Array2<f64>) -> f64 {
        let w = self.s_matrix.dot(v);
        match self.reg_target {
            RegTarget::Synthesized => match self.kind {
                ProblemKind::OneVsOther => ovo_value(&w, self.data, self.lambda),
                ProblemKind::CrammerSinger => {
                    cs_value(&w, self.data, self.delta.as_ref(), self.lambda)
                }
            },
            RegTarget::Bases => {
                let data_term = match self.kind {
                    ProblemKind::OneVsOther => ovo_value(&w, self.data, 0.0),
                    ProblemKind::CrammerSinger => {
                        cs_value(&w, self.data, self.delta.as_ref(), 0.0)
                    }
                };
                data_term + 0.5 * self.lambda * v.iter().map(|x| x * x).sum::<f64>()
            }
        }
    }

    pub(crate) fn value_grad(&self, v: &Array2<f64>) -> (f64, Array2<f64>) {
        let w = self.s_matrix.dot(v);
        let reg_lambda = match self.reg_target {
            RegTarget::Synthesized => self.lambda,
            RegTarget::Bases => 0.0,
        };
        let (mut obj, grad_w) = match self.kind {
            ProblemKind::OneVsOther => ovo_value_grad(&w, self.data, reg_lambda),
            ProblemKind::CrammerSinger => {
                cs_value_grad(&w, self.data, self.delta.as_ref(), reg_lambda)
            }
        };
        let mut grad_v = self.s_matrix.t().dot(&grad_w);
        if self.reg_target == RegTarget::Bases {
            grad_v.scaled_add(self.lambda, v);
            obj += 0.5 * self.lambda * v.iter().map(|x| x * x).sum::<f64>();
        }
        (obj, grad_v)
    }

    /// Gradient of the data term with respect to the synthesized W, plus the
    /// objective value. Used by the adaptation module to chain through the
    /// similarity weights.
    pub(crate) fn value_grad_wrt_w(&self, v: &Array2<f64>) -> (f64, Array2<f64>) {
        let w = self.s_matrix.dot(v);
        let reg_lambda = match self.reg_target {
            RegTarget::Synthesized => self.lambda,
            RegTarget::Bases => 0.0,
        };
        let (mut obj, grad_w) = match self.kind {
            ProblemKind::OneVsOther => ovo_value_grad(&w, self.data, reg_lambda),
            ProblemKind::CrammerSinger => {
                cs_value_grad(&w, self.data, self.delta.as_ref(), reg_lambda)
            }
        };
        if self.reg_target == RegTarget::Bases {
            obj += 0.5 * self.lambda * v.iter().map(|x| x * x).sum::<f64>();
        }
        (obj, grad_w)
    }
}

/// Batch gradient descent with Armijo backtracking. Never accepts a step
/// that fails the sufficient-decrease test, so the objective is monotone
/// non-increasing across iterations.
pub(crate) fn descend<F, G>(
    mut point: Array2<f64>,
    config: &TrainConfig,
    value: F,
    value_grad: G,
) -> Result<(Array2<f64>, TrainReport)>
where
    F: Fn(&Array2<f64>) -> f64,
    G: Fn(&Array2<f64>) -> (f64, Array2<f64>),
{
    config.validate()?;
    let rule = &config.step_rule;
    let mut step = rule.initial_step;
    let mut iterations = 0;
    let (mut obj, mut grad) = value_grad(&point);
    if !obj.is_finite() {
        return Err(Error::NonFinite {
            context: "initial objective",
        });
    }
    let mut grad_norm_sq: f64 = grad.iter().map(|g| g * g).sum();
    let termination = loop {
        if grad_norm_sq.sqrt() <= config.grad_tol {
            break Termination::GradientTolerance;
        }
        if iterations >= config.max_iters {
            break Termination::MaxIterations;
        }
        // Backtrack from twice the last accepted step.
        let mut t = (step * 2.0).min(1e6);
        let accepted = loop {
            let candidate = &point - &(t * &grad);
            let cand_obj = value(&candidate);
            if !cand_obj.is_finite() {
                return Err(Error::NonFinite {
                    context: "line search objective",
                });
            }
            if cand_obj <= obj - rule.accept * t * grad_norm_sq {
                break Some((candidate, cand_obj));
            }
            t *= rule.shrink;
            if t < rule.min_step {
                break None;
            }
        };
        match accepted {
            Some((candidate, _)) => {
                step = t;
                point = candidate;
                iterations += 1;
                let (new_obj, new_grad) = value_grad(&point);
                if !new_obj.is_finite() {
                    return Err(Error::NonFinite {
                        context: "objective after step",
                    });
                }
                obj = new_obj;
                grad = new_grad;
                grad_norm_sq = grad.iter().map(|g| g * g).sum();
            }
            None => break Termination::StepVanished,
        }
    };
    Ok((
        point,
        TrainReport {
            iterations,
            final_objective: obj,
            final_grad_norm: grad_norm_sq.sqrt(),
            converged: termination == Termination::GradientTolerance,
            termination,
        },
    ))
}

/// Trains the base classifiers from zero initialization.
pub fn train_base_classifiers(
    data: &LabeledDataset,
    weights: &SimilarityMatrix,
    loss: &LossKind,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let init = Array2::zeros((weights.num_phantom(), data.feature_dim()));
    train_base_classifiers_from(init, data, weights, loss, config)
}

/// Trains the base classifiers from an explicit starting point; the
/// adaptation loops warm-start here so their outer objective stays monotone.
pub fn train_base_classifiers_from(
    initial: Array2<f64>,
    data: &LabeledDataset,
    weights: &SimilarityMatrix,
    loss: &LossKind,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    if initial.nrows() != weights.num_phantom() || initial.ncols() != data.feature_dim() {
        return Err(Error::ShapeMismatch(format!(
            "initial bases are {}x{}, expected {}x{}",
            initial.nrows(),
            initial.ncols(),
            weights.num_phantom(),
            data.feature_dim()
        )));
    }
    let problem = SynthesisProblem::new(data, weights, loss, config.lambda)?;
    let (v, report) = descend(
        initial,
        config,
        |v| problem.value(v),
        |v| problem.value_grad(v),
    )?;
    Ok(TrainOutcome {
        bases: BaseClassifierSet::new(v)?,
        report,
    })
}
