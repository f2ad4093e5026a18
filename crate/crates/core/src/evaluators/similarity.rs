//! Sentence-pair similarity protocols: unsupervised cosine scoring and a
//! learned ridge-regression similarity.

use serde::Serialize;

use crate::compose::{Diagnostics, Encoder};
use crate::corpus::{PairDataset, PairSplit, Sentence};
use crate::error::{Error, Result};
use crate::linalg::{cholesky_solve, dot, norm, Matrix};
use crate::metrics::{cosine, mse, pearson, spearman};
use crate::normalize::{apply_znorm, fit_znorm, normalize_ucp, NormStats, SplitTag};

/// Gold scores live in `[0, GOLD_MAX]`; regression targets are divided by it.
pub const GOLD_MAX: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UcpResult {
    pub pearson: f64,
    pub spearman: f64,
    pub n_pairs: usize,
    pub skipped_pairs: usize,
    pub normalized: bool,
    pub diagnostics: Diagnostics,
}

fn items(split: &PairSplit) -> Vec<(usize, &Sentence)> {
    split.ids().zip(split.sentences()).collect()
}

/// Cosine similarity of each pair correlated with the gold scores.
///
/// Pairs where either embedding is the zero vector are skipped before
/// normalization; with `normalized`, the remaining `2M × D` matrix is
/// z-normalized as a whole and pairs that collapse to a zero row are
/// skipped as well. If the encoder needs fitting, it is fitted on the
/// evaluated sentences.
pub fn eval_ucp(split: &PairSplit, encoder: &Encoder, normalized: bool) -> Result<UcpResult> {
    if split.is_empty() {
        return Err(Error::invalid("empty pair split"));
    }
    let items = items(split);
    let mut encoder = encoder.clone();
    if encoder.needs_fit() {
        encoder.fit(&items)?;
    }
    let mut diagnostics = Diagnostics::default();
    let emb = encoder.encode_all(&items, &mut diagnostics)?;

    let kept: Vec<usize> = (0..split.len())
        .filter(|&k| norm(emb.row(2 * k)) > 0.0 && norm(emb.row(2 * k + 1)) > 0.0)
        .collect();
    let rows: Vec<usize> = kept.iter().flat_map(|&k| [2 * k, 2 * k + 1]).collect();
    let mut stacked = emb.select_rows(&rows);
    let mut kept_pairs: Vec<usize> = (0..kept.len()).collect();
    if normalized && kept.len() >= 1 {
        let (_, out) = normalize_ucp(&stacked)?;
        kept_pairs.retain(|&p| {
            !out.zero_rows.contains(&(2 * p)) && !out.zero_rows.contains(&(2 * p + 1))
        });
        stacked = out.matrix;
    }
    let mut sims = Vec::with_capacity(kept_pairs.len());
    let mut gold = Vec::with_capacity(kept_pairs.len());
    for &p in &kept_pairs {
        sims.push(cosine(stacked.row(2 * p), stacked.row(2 * p + 1))?);
        gold.push(split.pairs[kept[p]].gold);
    }
    let skipped_pairs = split.len() - sims.len();
    if sims.is_empty() {
        return Err(Error::invalid("every pair was skipped (zero embeddings)"));
    }
    Ok(UcpResult {
        pearson: pearson(&sims, &gold)?,
        spearman: spearman(&sims, &gold)?,
        n_pairs: split.len(),
        skipped_pairs,
        normalized,
        diagnostics,
    })
}

/// `[u ⊙ v ; |u − v|]`, symmetric in its arguments.
pub fn build_pair_features(u: &[f64], v: &[f64]) -> Vec<f64> {
    assert_eq!(u.len(), v.len(), "pair features need equal dimensions");
    u.iter()
        .zip(v)
        .map(|(a, b)| a * b)
        .chain(u.iter().zip(v).map(|(a, b)| (a - b).abs()))
        .collect()
}

/// Linear model `w·f + b` fitted by ridge regression with an unpenalized
/// intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Ridge {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
}

impl Ridge {
    /// Minimizes `(1/n) Σ (w·fᵢ + b − yᵢ)² + l2 ‖w‖²`.
    ///
    /// Solves the primal normal equations when there are at least as many
    /// samples as features, otherwise the equivalent dual system. Returns
    /// `None` when the system is not positive definite.
    pub fn fit(features: &Matrix, targets: &[f64], l2: f64) -> Option<Ridge> {
        let (n, p) = (features.rows(), features.cols());
        assert_eq!(n, targets.len());
        if n == 0 {
            return None;
        }
        let mut mean_f = vec![0.0; p];
        for r in features.iter_rows() {
            for (m, v) in mean_f.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean_f.iter_mut().for_each(|m| *m /= n as f64);
        let mean_y = targets.iter().sum::<f64>() / n as f64;
        let mut centered = features.clone();
        for i in 0..n {
            for (v, m) in centered.row_mut(i).iter_mut().zip(&mean_f) {
                *v -= m;
            }
        }
        let yc: Vec<f64> = targets.iter().map(|y| y - mean_y).collect();
        let nl = n as f64 * l2;

        let weights = if n >= p {
            let mut gram = Matrix::zeros(p, p);
            for r in centered.iter_rows() {
                for a in 0..p {
                    if r[a] == 0.0 {
                        continue;
                    }
                    for b in a..p {
                        let v = gram.get(a, b) + r[a] * r[b];
                        gram.set(a, b, v);
                    }
                }
            }
            for a in 0..p {
                for b in 0..a {
                    gram.set(a, b, gram.get(b, a));
                }
                gram.set(a, a, gram.get(a, a) + nl);
            }
            cholesky_solve(&gram, &centered.tr_mul_vec(&yc))?
        } else {
            let mut kernel = Matrix::zeros(n, n);
            for a in 0..n {
                for b in a..n {
                    let v = dot(centered.row(a), centered.row(b));
                    kernel.set(a, b, v);
                    kernel.set(b, a, v);
                }
                kernel.set(a, a, kernel.get(a, a) + nl);
            }
            let alpha = cholesky_solve(&kernel, &yc)?;
            centered.tr_mul_vec(&alpha)
        };
        if weights.iter().any(|w| !w.is_finite()) {
            return None;
        }
        let bias = mean_y - dot(&weights, &mean_f);
        Some(Ridge { weights, bias, l2 })
    }

    pub fn predict(&self, f: &[f64]) -> f64 {
        dot(&self.weights, f) + self.bias
    }
}

/// Learned similarity: a ridge model over pair features, the encoder it was
/// trained with, and the normalization fitted on the training embeddings.
#[derive(Debug, Clone)]
pub struct SimilarityModel {
    pub ridge: Ridge,
    pub encoder: Encoder,
    pub norm: Option<NormStats>,
    pub dev_pearson: f64,
    pub diagnostics: Diagnostics,
}

impl SimilarityModel {
    pub fn normalized(&self) -> bool {
        self.norm.is_some()
    }

    /// Pair features for every pair of a split, with train-fitted
    /// normalization applied.
    fn features(&self, split: &PairSplit, diag: &mut Diagnostics) -> Result<Matrix> {
        pair_feature_matrix(&self.encoder, self.norm.as_ref(), split, diag)
    }

    /// Predicted similarity on the `[0, 1]` scale, clipped.
    pub fn predict_scaled(&self, u: &[f64], v: &[f64]) -> f64 {
        self.ridge.predict(&build_pair_features(u, v)).clamp(0.0, 1.0)
    }
}

fn pair_feature_matrix(
    encoder: &Encoder,
    norm: Option<&NormStats>,
    split: &PairSplit,
    diag: &mut Diagnostics,
) -> Result<Matrix> {
    let mut emb = encoder.encode_all(&items(split), diag)?;
    if let Some(stats) = norm {
        stats.require_fitted_on(SplitTag::Train)?;
        emb = apply_znorm(stats, &emb)?.matrix;
    }
    let rows: Vec<Vec<f64>> = (0..split.len())
        .map(|k| build_pair_features(emb.row(2 * k), emb.row(2 * k + 1)))
        .collect();
    Matrix::from_rows(&rows)
}

/// Fits ridge models for every penalty in `l2_grid` on the train split and
/// keeps the one with the best dev Pearson correlation (earlier penalty on
/// ties). Normalization statistics and SIF components come from the train
/// split only.
pub fn train_similarity_regressor(
    data: &PairDataset,
    encoder: &Encoder,
    normalized: bool,
    l2_grid: &[f64],
) -> Result<SimilarityModel> {
    let train = data
        .train
        .as_ref()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::invalid("learned similarity needs a non-empty train split"))?;
    let dev = data
        .dev
        .as_ref()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::invalid("learned similarity needs a dev split for penalty selection"))?;
    if l2_grid.is_empty() {
        return Err(Error::invalid("empty l2 grid"));
    }

    let train_items = items(train);
    let mut encoder = encoder.clone();
    if encoder.needs_fit() {
        encoder.fit(&train_items)?;
    }
    let mut diagnostics = Diagnostics::default();
    let norm = if normalized {
        let emb = encoder.encode_all(&train_items, &mut Diagnostics::default())?;
        Some(fit_znorm(&emb, SplitTag::Train)?)
    } else {
        None
    };
    let train_x = pair_feature_matrix(&encoder, norm.as_ref(), train, &mut diagnostics)?;
    let train_y: Vec<f64> = train.gold().iter().map(|g| g / GOLD_MAX).collect();
    let dev_x = pair_feature_matrix(&encoder, norm.as_ref(), dev, &mut diagnostics)?;
    let dev_y = dev.gold();

    let mut best: Option<(Ridge, f64)> = None;
    for &l2 in l2_grid {
        let Some(ridge) = Ridge::fit(&train_x, &train_y, l2) else {
            continue;
        };
        let preds: Vec<f64> = dev_x.iter_rows().map(|f| ridge.predict(f)).collect();
        let score = pearson(&preds, &dev_y).unwrap_or(f64::NEG_INFINITY);
        if best.as_ref().is_none_or(|(_, s)| score > *s) {
            best = Some((ridge, score));
        }
    }
    let (ridge, dev_pearson) = best.ok_or(Error::Singular)?;
    Ok(SimilarityModel {
        ridge,
        encoder,
        norm,
        dev_pearson,
        diagnostics,
    })
}

/// Scores of a learned similarity model on a test split. Correlations are
/// `None` when the predictions are constant; MSE is always reported.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnedSimResult {
    pub pearson: Option<f64>,
    pub spearman: Option<f64>,
    /// In gold units (`[0, 5]` scale).
    pub mse: f64,
    pub n_pairs: usize,
    pub diagnostics: Diagnostics,
}

pub fn eval_learned_similarity(model: &SimilarityModel, test: &PairSplit) -> Result<LearnedSimResult> {
    if test.is_empty() {
        return Err(Error::invalid("empty test split"));
    }
    let mut diagnostics = Diagnostics::default();
    let x = model.features(test, &mut diagnostics)?;
    let preds: Vec<f64> = x
        .iter_rows()
        .map(|f| model.ridge.predict(f).clamp(0.0, 1.0) * GOLD_MAX)
        .collect();
    let gold = test.gold();
    let degenerate = |r: Result<f64>| match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::DegenerateCorrelation(_)) => Ok(None),
        Err(e) => Err(e),
    };
    Ok(LearnedSimResult {
        pearson: degenerate(pearson(&preds, &gold))?,
        spearman: degenerate(spearman(&preds, &gold))?,
        mse: mse(&preds, &gold)?,
        n_pairs: test.len(),
        diagnostics,
    })
}
