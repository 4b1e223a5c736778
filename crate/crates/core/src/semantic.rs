//! Semantic embeddings, distance metrics, and the real-class to phantom-class
//! similarity weights.
//!
//! Classes live in a semantic space (attribute vectors or word vectors). Each
//! real class is tied to every phantom class by a softmax over negative
//! Mahalanobis distances, giving a row-stochastic weight matrix that later
//! drives classifier synthesis.

use ndarray::{Array1, Array2, ArrayView1, Axis};

use crate::error::{Error, Result};
use crate::parallel;

/// Per-class semantic vectors, one row per class.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    class_ids: Vec<String>,
    vectors: Array2<f64>,
    normalized: bool,
}

impl EmbeddingTable {
    /// Builds a table from class identifiers and a `(num_classes, d)` matrix.
    /// Ordering is load order and stays stable for the life of the table.
    pub fn new(class_ids: Vec<String>, vectors: Array2<f64>) -> Result<Self> {
        if class_ids.len() != vectors.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "{} class ids vs {} embedding rows",
                class_ids.len(),
                vectors.nrows()
            )));
        }
        if vectors.ncols() == 0 {
            return Err(Error::ShapeMismatch(
                "embedding dimension must be at least 1".into(),
            ));
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "embedding table construction",
            });
        }
        Ok(Self {
            class_ids,
            vectors,
            normalized: false,
        })
    }

    pub fn class_ids(&self) -> &[String] {
        &self.class_ids
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Number of classes.
    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    /// Embedding dimension d.
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.vectors.row(i)
    }

    pub fn index_of(&self, class_id: &str) -> Option<usize> {
        self.class_ids.iter().position(|c| c == class_id)
    }

    /// Keeps only the listed classes, in the listed order.
    pub fn subset(&self, class_ids: &[String]) -> Result<EmbeddingTable> {
        let mut rows = Vec::with_capacity(class_ids.len());
        for id in class_ids {
            let idx = self.index_of(id).ok_or_else(|| {
                Error::InvalidConfig(format!("class `{id}` not present in embedding table"))
            })?;
            rows.push(idx);
        }
        let vectors = self.vectors.select(Axis(0), &rows);
        Ok(EmbeddingTable {
            class_ids: class_ids.to_vec(),
            vectors,
            normalized: self.normalized,
        })
    }
}

/// Divides every row by its l2 norm. Rows with norm below 1e-12 are rejected.
pub fn normalize_embeddings(table: &EmbeddingTable) -> Result<EmbeddingTable> {
    let mut vectors = table.vectors.clone();
    for (i, mut row) in vectors.rows_mut().into_iter().enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm < 1e-12 {
            return Err(Error::ZeroVector {
                class_id: table.class_ids[i].clone(),
            });
        }
        row.mapv_inplace(|v| v / norm);
    }
    Ok(EmbeddingTable {
        class_ids: table.class_ids.clone(),
        vectors,
        normalized: true,
    })
}

/// Distance metric between semantic vectors: d(a, b) = (a-b)' Sigma^{-1} (a-b).
///
/// `ScaledIdentity` takes Sigma = sigma^2 I, so Sigma^{-1} = I / sigma^2.
/// `Diagonal` takes Sigma^{-1} = M'M with M = diag(m), which keeps the
/// induced distance non-negative for any real m.
#[derive(Debug, Clone)]
pub enum Metric {
    ScaledIdentity { sigma: f64 },
    Diagonal { m: Array1<f64> },
}

impl Metric {
    pub fn scaled_identity(sigma: f64) -> Result<Metric> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "metric sigma must be a positive finite real, got {sigma}"
            )));
        }
        Ok(Metric::ScaledIdentity { sigma })
    }

    pub fn diagonal(m: Array1<f64>) -> Result<Metric> {
        if m.is_empty() || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig(
                "diagonal metric entries must be finite and non-empty".into(),
            ));
        }
        Ok(Metric::Diagonal { m })
    }

    /// Dimension constraint, if any: a diagonal metric only applies to
    /// vectors of its own length.
    fn check_dim(&self, d: usize) -> Result<()> {
        if let Metric::Diagonal { m } = self {
            if m.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "diagonal metric",
                    expected: m.len(),
                    got: d,
                });
            }
        }
        Ok(())
    }
}

/// Squared Mahalanobis distance (a-b)' Sigma^{-1} (a-b).
pub fn mahalanobis_distance(a: ArrayView1<f64>, b: ArrayView1<f64>, metric: &Metric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            context: "mahalanobis distance",
            expected: a.len(),
            got: b.len(),
        });
    }
    metric.check_dim(a.len())?;
    let d = match metric {
        Metric::ScaledIdentity { sigma } => {
            let mut acc = 0.0;
            for (&x, &y) in a.iter().zip(b.iter()) {
                let diff = x - y;
                acc += diff * diff;
            }
            acc / (sigma * sigma)
        }
        Metric::Diagonal { m } => {
            let mut acc = 0.0;
            for ((&x, &y), &mi) in a.iter().zip(b.iter()).zip(m.iter()) {
                let diff = mi * (x - y);
                acc += diff * diff;
            }
            acc
        }
    };
    Ok(d)
}

/// Row-stochastic class-to-phantom weights s_cr.
#[derive(Debug, Clone)]
pub struct SimilarityMatrix {
    weights: Array2<f64>,
    row_classes: Vec<String>,
}

impl SimilarityMatrix {
    /// Wraps an explicit weight matrix. Rows must sum to 1 within 1e-10.
    pub fn from_rows(weights: Array2<f64>, row_classes: Vec<String>) -> Result<Self> {
        if weights.nrows() != row_classes.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} weight rows vs {} row classes",
                weights.nrows(),
                row_classes.len()
            )));
        }
        if weights.ncols() == 0 {
            return Err(Error::ShapeMismatch(
                "similarity matrix needs at least one phantom column".into(),
            ));
        }
        for (i, row) in weights.rows().into_iter().enumerate() {
            let sum: f64 = row.sum();
            if !sum.is_finite() || (sum - 1.0).abs() > 1e-10 {
                return Err(Error::ShapeMismatch(format!(
                    "similarity row {i} sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self {
            weights,
            row_classes,
        })
    }

    /// Identity weights; handy when every class is its own phantom.
    pub fn identity(row_classes: Vec<String>) -> Self {
        let n = row_classes.len();
        Self {
            weights: Array2::eye(n),
            row_classes,
        }
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn row_classes(&self) -> &[String] {
        &self.row_classes
    }

    /// Number of phantom classes R.
    pub fn num_phantom(&self) -> usize {
        self.weights.ncols()
    }

    pub fn num_rows(&self) -> usize {
        self.weights.nrows()
    }
}

fn softmax_of_negated(distances: &[f64]) -> Vec<f64> {
    // Max-shifted exponentials: subtracting the row minimum distance keeps
    // the largest exponent at exactly 0, so no row underflows to all-zero.
    let min_d = distances.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut row: Vec<f64> = distances.iter().map(|&d| (-(d - min_d)).exp()).collect();
    let sum: f64 = row.iter().sum();
    for v in &mut row {
        // Entries are positive in exact arithmetic; keep them positive in
        // floating point too when exp underflows outright.
        *v = (*v / sum).max(f64::MIN_POSITIVE);
    }
    row
}

/// Softmax similarity weights between real classes and phantom classes:
/// s_cr = exp(-d(a_c, b_r)) / sum_r' exp(-d(a_c, b_r')).
pub fn similarity_weights(
    real: &EmbeddingTable,
    phantom: &EmbeddingTable,
    metric: &Metric,
) -> Result<SimilarityMatrix> {
    if real.dim() != phantom.dim() {
        return Err(Error::DimensionMismatch {
            context: "similarity weights",
            expected: real.dim(),
            got: phantom.dim(),
        });
    }
    metric.check_dim(real.dim())?;
    let c = real.len();
    let r = phantom.len();
    if r == 0 {
        return Err(Error::ShapeMismatch(
            "phantom table must have at least one row".into(),
        ));
    }

    let rows = parallel::ordered_map(c, |i| {
        let a = real.row(i);
        let mut distances = Vec::with_capacity(r);
        for j in 0..r {
            // dims checked above; per-element arithmetic cannot fail
            let d = mahalanobis_distance(a, phantom.row(j), metric).expect("checked dims");
            distances.push(d);
        }
        softmax_of_negated(&distances)
    });

    let mut weights = Array2::zeros((c, r));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            weights[[i, j]] = v;
        }
    }
    Ok(SimilarityMatrix {
        weights,
        row_classes: real.class_ids().to_vec(),
    })
}

/// Entrywise convex combination of similarity matrices from multiple
/// semantic sources. The result is still row-stochastic.
pub fn blend_similarities(mats: &[SimilarityMatrix], coeffs: &[f64]) -> Result<SimilarityMatrix> {
    if mats.is_empty() || mats.len() != coeffs.len() {
        return Err(Error::InvalidCoefficients(format!(
            "{} matrices vs {} coefficients",
            mats.len(),
            coeffs.len()
        )));
    }
    if coeffs.iter().any(|&c| !c.is_finite() || c < 0.0) {
        return Err(Error::InvalidCoefficients(
            "coefficients must be non-negative".into(),
        ));
    }
    let total: f64 = coeffs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidCoefficients(format!(
            "coefficients sum to {total}, expected 1"
        )));
    }
    let first = &mats[0];
    for m in &mats[1..] {
        if m.weights.dim() != first.weights.dim() {
            return Err(Error::ShapeMismatch(format!(
                "blend inputs disagree on shape: {:?} vs {:?}",
                first.weights.dim(),
                m.weights.dim()
            )));
        }
        if m.row_classes != first.row_classes {
            return Err(Error::ShapeMismatch(
                "blend inputs disagree on row class ordering".into(),
            ));
        }
    }
    let mut weights = Array2::zeros(first.weights.dim());
    for (m, &c) in mats.iter().zip(coeffs.iter()) {
        weights.scaled_add(c, &m.weights);
    }
    Ok(SimilarityMatrix {
        weights,
        row_classes: first.row_classes.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use rand::Rng;

    use crate::rng::substream;

    pub(crate) fn table(ids: &[&str], vectors: Array2<f64>) -> EmbeddingTable {
        EmbeddingTable::new(ids.iter().map(|s| s.to_string()).collect(), vectors).unwrap()
    }

    #[test]
    fn normalize_rescales_rows() {
        let t = table(&["a"], array![[3.0, 4.0]]);
        let n = normalize_embeddings(&t).unwrap();
        assert_abs_diff_eq!(n.vectors()[[0, 0]], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(n.vectors()[[0, 1]], 0.8, epsilon = 1e-15);
        assert!(n.is_normalized());

        let t = table(&["a", "b"], array![[1.0, 0.0], [0.0, 2.0]]);
        let n = normalize_embeddings(&t).unwrap();
        assert_eq!(n.vectors(), &array![[1.0, 0.0], [0.0, 1.0]]);
    }

    #[test]
    fn normalize_rejects_zero_rows() {
        let t = table(&["a", "z"], array![[1.0, 0.0], [0.0, 0.0]]);
        match normalize_embeddings(&t) {
            Err(Error::ZeroVector { class_id }) => assert_eq!(class_id, "z"),
            other => panic!("expected ZeroVector, got {other:?}"),
        }
    }

    #[test]
    fn distance_scaled_identity() {
        let m = Metric::scaled_identity(1.0).unwrap();
        let d = mahalanobis_distance(
            array![1.0, 0.0].view(),
            array![0.0, 1.0].view(),
            &m,
        )
        .unwrap();
        assert_abs_diff_eq!(d, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn distance_is_zero_at_equal_points() {
        for metric in [
            Metric::scaled_identity(0.7).unwrap(),
            Metric::diagonal(array![2.0, -3.0]).unwrap(),
        ] {
            let d =
                mahalanobis_distance(array![0.3, -1.2].view(), array![0.3, -1.2].view(), &metric)
                    .unwrap();
            assert_eq!(d, 0.0);
        }
    }

    #[test]
    fn distance_diagonal_hand_case() {
        // (a-b)' M'M (a-b) with m = [2, 1]: 4*1 + 1*1 = 5
        let m = Metric::diagonal(array![2.0, 1.0]).unwrap();
        let d = mahalanobis_distance(
            array![1.0, 1.0].view(),
            array![0.0, 0.0].view(),
            &m,
        )
        .unwrap();
        assert_abs_diff_eq!(d, 5.0, epsilon = 1e-15);
    }

    #[test]
    fn distance_rejects_dimension_mismatch() {
        let m = Metric::scaled_identity(1.0).unwrap();
        let r = mahalanobis_distance(array![1.0].view(), array![0.0, 1.0].view(), &m);
        assert!(matches!(r, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn weights_single_phantom_is_one() {
        let real = table(&["a", "b"], array![[0.0], [3.0]]);
        let phantom = table(&["p"], array![[1.0]]);
        let s = similarity_weights(&real, &phantom, &Metric::scaled_identity(1.0).unwrap())
            .unwrap();
        assert_eq!(s.weights(), &array![[1.0], [1.0]]);
    }

    #[test]
    fn weights_equidistant_split_evenly() {
        let real = table(&["a"], array![[0.0, 0.0]]);
        let phantom = table(&["p", "q"], array![[1.0, 0.0], [-1.0, 0.0]]);
        let s = similarity_weights(&real, &phantom, &Metric::scaled_identity(1.0).unwrap())
            .unwrap();
        assert_abs_diff_eq!(s.weights()[[0, 0]], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(s.weights()[[0, 1]], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn weights_match_softmax_oracle() {
        // d=1, sigma=1, a=0, phantoms at 0 and 1: distances (0, 1).
        // Independent oracle: softmax(0, -1) = (1, e^-1) / (1 + e^-1).
        let real = table(&["a"], array![[0.0]]);
        let phantom = table(&["p", "q"], array![[0.0], [1.0]]);
        let s = similarity_weights(&real, &phantom, &Metric::scaled_identity(1.0).unwrap())
            .unwrap();
        let z = 1.0 + (-1.0_f64).exp();
        assert_abs_diff_eq!(s.weights()[[0, 0]], 1.0 / z, epsilon = 1e-12);
        assert_abs_diff_eq!(s.weights()[[0, 1]], (-1.0_f64).exp() / z, epsilon = 1e-12);
        assert_abs_diff_eq!(s.weights()[[0, 0]], 0.7311, epsilon = 5e-5);
        assert_abs_diff_eq!(s.weights()[[0, 1]], 0.2689, epsilon = 5e-5);
    }

    #[test]
    fn weights_survive_huge_distances() {
        // Distances of order 1e8 would underflow exp without max-shifting.
        let real = table(&["a"], array![[0.0]]);
        let phantom = table(&["p", "q"], array![[1.0], [2.0]]);
        let s = similarity_weights(&real, &phantom, &Metric::scaled_identity(1e-4).unwrap())
            .unwrap();
        let row = s.weights().row(0);
        assert!(row.iter().all(|&v| v > 0.0));
        assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-10);
    }

    fn random_tables(seed: u64) -> (EmbeddingTable, EmbeddingTable, Metric) {
        let mut rng = substream(seed, "semantic-test");
        let c = rng.gen_range(1..6);
        let r = rng.gen_range(1..6);
        let d = rng.gen_range(1..5);
        let real = Array2::from_shape_fn((c, d), |_| rng.gen_range(-2.0..2.0));
        let phantom = Array2::from_shape_fn((r, d), |_| rng.gen_range(-2.0..2.0));
        let metric = if rng.gen_bool(0.5) {
            Metric::scaled_identity(rng.gen_range(0.05..4.0)).unwrap()
        } else {
            Metric::diagonal(Array1::from_shape_fn(d, |_| rng.gen_range(-2.0..2.0))).unwrap()
        };
        let ids =
            |n: usize, p: &str| -> Vec<String> { (0..n).map(|i| format!("{p}{i}")).collect() };
        (
            EmbeddingTable::new(ids(c, "c"), real).unwrap(),
            EmbeddingTable::new(ids(r, "r"), phantom).unwrap(),
            metric,
        )
    }

    #[test]
    fn rows_are_stochastic_on_random_inputs() {
        for seed in 0..1000 {
            let (real, phantom, metric) = random_tables(seed);
            let s = similarity_weights(&real, &phantom, &metric).unwrap();
            for row in s.weights().rows() {
                assert!(row.iter().all(|&v| v > 0.0));
                assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn sigma_scaling_matches_explicit_distance_softmax() {
        // Rows from ScaledIdentity{sigma} must equal a hand softmax of the
        // raw squared distances divided by sigma^2.
        let mut rng = substream(11, "shift");
        for _ in 0..50 {
            let d = rng.gen_range(1..4);
            let real = Array2::from_shape_fn((3, d), |_| rng.gen_range(-1.0..1.0));
            let phantom = Array2::from_shape_fn((4, d), |_| rng.gen_range(-1.0..1.0));
            let sigma: f64 = rng.gen_range(0.2..3.0);
            let rt = EmbeddingTable::new(vec!["a".into(), "b".into(), "c".into()], real).unwrap();
            let pt = EmbeddingTable::new(
                vec!["p".into(), "q".into(), "r".into(), "s".into()],
                phantom,
            )
            .unwrap();
            let s = similarity_weights(&rt, &pt, &Metric::scaled_identity(sigma).unwrap())
                .unwrap();
            for (i, row) in s.weights().rows().into_iter().enumerate() {
                let dists: Vec<f64> = (0..4)
                    .map(|j| {
                        let diff = &rt.row(i) - &pt.row(j);
                        diff.dot(&diff) / (sigma * sigma)
                    })
                    .collect();
                let oracle = softmax_of_negated(&dists);
                for (got, want) in row.iter().zip(oracle.iter()) {
                    assert_abs_diff_eq!(got, want, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn small_sigma_converges_to_identity() {
        let mut rng = substream(3, "identity-limit");
        let raw = Array2::from_shape_fn((5, 4), |_| rng.gen_range(-1.0..1.0));
        let t = normalize_embeddings(&table(&["a", "b", "c", "d", "e"], raw)).unwrap();
        let s = similarity_weights(&t, &t, &Metric::scaled_identity(1e-3).unwrap()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                if i == j {
                    assert!(s.weights()[[i, j]] > 1.0 - 1e-6);
                } else {
                    assert!(s.weights()[[i, j]] < 1e-6);
                }
            }
        }
    }

    #[test]
    fn blend_identity_and_midpoint() {
        let a = SimilarityMatrix::from_rows(array![[1.0, 0.0]], vec!["c".into()]).unwrap();
        let b = SimilarityMatrix::from_rows(array![[0.0, 1.0]], vec!["c".into()]).unwrap();

        let same = blend_similarities(&[a.clone()], &[1.0]).unwrap();
        assert_eq!(same.weights(), a.weights());

        let idem = blend_similarities(&[a.clone(), a.clone()], &[0.3, 0.7]).unwrap();
        assert_abs_diff_eq!(idem.weights()[[0, 0]], 1.0, epsilon = 1e-15);

        let mid = blend_similarities(&[a, b], &[0.5, 0.5]).unwrap();
        assert_eq!(mid.weights(), &array![[0.5, 0.5]]);
    }

    #[test]
    fn blend_rejects_bad_coefficients() {
        let a = SimilarityMatrix::from_rows(array![[1.0, 0.0]], vec!["c".into()]).unwrap();
        let r = blend_similarities(&[a.clone(), a.clone()], &[0.9, 0.2]);
        assert!(matches!(r, Err(Error::InvalidCoefficients(_))));
        let r = blend_similarities(&[a.clone(), a], &[1.2, -0.2]);
        assert!(matches!(r, Err(Error::InvalidCoefficients(_))));
    }

    #[test]
    fn blend_preserves_row_sums_on_random_inputs() {
        let mut rng = substream(17, "blend");
        for _ in 0..200 {
            let (real, phantom, metric) = random_tables(rng.gen());
            let s1 = similarity_weights(&real, &phantom, &metric).unwrap();
            let s2 = similarity_weights(
                &real,
                &phantom,
                &Metric::scaled_identity(rng.gen_range(0.1..2.0)).unwrap(),
            )
            .unwrap();
            let alpha: f64 = rng.gen_range(0.0..1.0);
            let blended = blend_similarities(&[s1, s2], &[alpha, 1.0 - alpha]).unwrap();
            for row in blended.weights().rows() {
                assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-10);
            }
        }
    }
}
