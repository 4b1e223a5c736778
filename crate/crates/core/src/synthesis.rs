//! Classifier synthesis and prediction.
//!
//! Base classifiers form a dictionary; a real class's linear model is the
//! similarity-weighted combination of those bases. Prediction is a plain
//! argmax of dot products, with no bias term. Append a constant feature to
//! the inputs if an offset is wanted.

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::parallel;
use crate::semantic::SimilarityMatrix;

/// The R base ("phantom") classifier vectors, one row per base.
#[derive(Debug, Clone, PartialEq)]
pub struct BaseClassifierSet {
    vectors: Array2<f64>,
}

impl BaseClassifierSet {
    pub fn new(vectors: Array2<f64>) -> Result<Self> {
        if vectors.nrows() == 0 {
            return Err(Error::ShapeMismatch(
                "base classifier set needs at least one row".into(),
            ));
        }
        Ok(Self { vectors })
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    /// Number of base classifiers R.
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    /// Feature dimension D.
    pub fn feature_dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Synthesized per-class linear classifiers.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierSet {
    class_ids: Vec<String>,
    vectors: Array2<f64>,
}

impl ClassifierSet {
    pub fn new(class_ids: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if class_ids.len() != vectors.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} class ids vs {} classifier rows",
                class_ids.len(),
                vectors.nrows()
            )));
        }
        Ok(Self { class_ids, vectors })
    }

    pub fn class_ids(&self) -> &[String] {
        &self.class_ids
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.vectors.ncols()
    }
}

/// Synthesizes one classifier per similarity row: w_c = sum_r s_cr v_r.
pub fn synthesize(weights: &SimilarityMatrix, bases: &BaseClassifierSet) -> Result<ClassifierSet> {
    if weights.num_phantom() != bases.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} similarity columns vs {} base classifiers",
            weights.num_phantom(),
            bases.len()
        )));
    }
    let vectors = weights.weights().dot(bases.vectors());
    Ok(ClassifierSet {
        class_ids: weights.row_classes().to_vec(),
        vectors,
    })
}

/// Decision values w_c' x_n for every sample and class, as an N x C matrix.
pub fn decision_values(models: &ClassifierSet, features: ArrayView2<f64>) -> Result<Array2<f64>> {
    if features.ncols() != models.feature_dim() {
        return Err(Error::DimensionMismatch {
            context: "decision values",
            expected: models.feature_dim(),
            got: features.ncols(),
        });
    }
    Ok(features.dot(&models.vectors.t()))
}

fn argmax_tie_lowest(scores: ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Predicted class for a single input: argmax of decision values, ties
/// broken toward the lowest class index.
pub fn predict<'m>(models: &'m ClassifierSet, x: ArrayView1<f64>) -> Result<&'m str> {
    if x.len() != models.feature_dim() {
        return Err(Error::DimensionMismatch {
            context: "predict",
            expected: models.feature_dim(),
            got: x.len(),
        });
    }
    let scores = models.vectors.dot(&x);
    Ok(&models.class_ids[argmax_tie_lowest(scores.view())])
}

/// Top-k classes by decision value, descending; ties go to the lower index.
/// The first element always agrees with [`predict`].
pub fn rank_classes<'m>(
    models: &'m ClassifierSet,
    x: ArrayView1<f64>,
    k: usize,
) -> Result<Vec<&'m str>> {
    if k == 0 || k > models.len() {
        return Err(Error::KTooLarge {
            k,
            available: models.len(),
        });
    }
    if x.len() != models.feature_dim() {
        return Err(Error::DimensionMismatch {
            context: "rank classes",
            expected: models.feature_dim(),
            got: x.len(),
        });
    }
    let scores = models.vectors.dot(&x);
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    Ok(order[..k]
        .iter()
        .map(|&i| models.class_ids[i].as_str())
        .collect())
}

/// [`rank_classes`] for a batch of inputs, one ranking per feature row.
pub fn rank_batch(
    models: &ClassifierSet,
    features: ArrayView2<f64>,
    k: usize,
) -> Result<Vec<Vec<String>>> {
    if k == 0 || k > models.len() {
        return Err(Error::KTooLarge {
            k,
            available: models.len(),
        });
    }
    if features.ncols() != models.feature_dim() {
        return Err(Error::DimensionMismatch {
            context: "rank batch",
            expected: models.feature_dim(),
            got: features.ncols(),
        });
    }
    let rankings = parallel::ordered_map(features.nrows(), |n| {
        rank_classes(models, features.row(n), k)
            .expect("checked dims")
            .into_iter()
            .map(|s| s.to_string())
            .collect()
    });
    Ok(rankings)
}
