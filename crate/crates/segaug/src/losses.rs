//! Ranking losses as pure value+gradient kernels.
//!
//! The batch holds one "similar" class (label 1) and unrelated fillers
//! (label 0), so the smoothed-AP loss scores only the positive class:
//! with `D_ij = s_j - s_i` and `G(x) = 1 / (1 + exp(-x / tau))`,
//!
//! ```text
//! AP~ = (1/P) * sum_{i in pos} [1 + sum_{j in pos, j!=i} G(D_ij)]
//!                            / [1 + sum_{j != i}       G(D_ij)]
//! loss = 1 - AP~
//! ```
//!
//! As `tau -> 0` this approaches exact average precision from below the
//! discontinuities; [`exact_ap`] is the untied oracle for that limit, and
//! [`grad_check`] verifies the closed-form gradient by central differences.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    MismatchedLengths { scores: usize, labels: usize },
    #[error("batch must contain at least one positive")]
    NoPositives,
    #[error("score at index {0} is not finite")]
    NonFiniteScore(usize),
    #[error("tied scores at indices {0} and {1}; exact AP is ambiguous")]
    TiedScores(usize, usize),
    #[error("tau must be a positive finite number, got {0}")]
    InvalidTau(f64),
    #[error("distance {0} must be finite and non-negative, got {1}")]
    InvalidDistance(&'static str, f64),
    #[error("non-finite intermediate in {0}")]
    NonFinite(&'static str),
    #[error("gradient length {got} does not match input length {expected}")]
    GradientLength { got: usize, expected: usize },
    #[error("distance matrix has {got} entries, expected {expected}")]
    BadMatrix { got: usize, expected: usize },
}

/// Scores with binary relevance labels for one mini-batch. Higher score
/// means more similar to the query; `true` marks the similar set.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreBatch {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoreBatch {
    /// Validates lengths, finiteness, and that at least one label is positive.
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self, LossError> {
        if scores.len() != labels.len() {
            return Err(LossError::MismatchedLengths {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(LossError::NonFiniteScore(i));
        }
        if !labels.iter().any(|&l| l) {
            return Err(LossError::NoPositives);
        }
        Ok(Self { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positive_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }
}

/// Sigmoid temperature for the smoothed AP; smaller is closer to exact AP.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothApParams {
    pub tau: f64,
}

impl Default for SmoothApParams {
    fn default() -> Self {
        Self { tau: 0.01 }
    }
}

/// One triplet as precomputed anchor-positive / anchor-negative distances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TripletBatch {
    pub d_ap: f64,
    pub d_an: f64,
    pub margin: f64,
}

impl TripletBatch {
    pub fn new(d_ap: f64, d_an: f64, margin: f64) -> Result<Self, LossError> {
        for (name, v) in [("d_ap", d_ap), ("d_an", d_an), ("margin", margin)] {
            if !v.is_finite() || v < 0.0 {
                return Err(LossError::InvalidDistance(name, v));
            }
        }
        Ok(Self { d_ap, d_an, margin })
    }
}

/// Exact average precision of the positive class. Refuses tied scores so the
/// result is unambiguous: sort by descending score, then
/// `AP = (1/P) * sum over positives of precision-at-their-rank`.
pub fn exact_ap(batch: &ScoreBatch) -> Result<f64, LossError> {
    let scores = batch.scores();
    let mut order: Vec<usize> = (0..batch.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).expect("scores are finite"));
    for w in order.windows(2) {
        if scores[w[0]] == scores[w[1]] {
            return Err(LossError::TiedScores(w[0].min(w[1]), w[0].max(w[1])));
        }
    }
    let mut positives_seen = 0u64;
    let mut sum = 0.0;
    for (rank0, &i) in order.iter().enumerate() {
        if batch.labels()[i] {
            positives_seen += 1;
            sum += positives_seen as f64 / (rank0 as f64 + 1.0);
        }
    }
    Ok(sum / batch.positive_count() as f64)
}

/// Numerically stable logistic function.
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Smoothed-AP loss of the positive class with its exact analytic gradient
/// with respect to every score.
///
/// Runs in O(P * B) time and O(B) extra space for P positives in a batch of
/// B. Errors instead of clamping if any intermediate goes non-finite.
pub fn smooth_ap_loss(
    batch: &ScoreBatch,
    params: &SmoothApParams,
) -> Result<(f64, Vec<f64>), LossError> {
    let tau = params.tau;
    if !tau.is_finite() || tau <= 0.0 {
        return Err(LossError::InvalidTau(tau));
    }
    let n = batch.len();
    let scores = batch.scores();
    let labels = batch.labels();
    let positives: Vec<usize> = (0..n).filter(|&i| labels[i]).collect();
    let p_count = positives.len() as f64;

    let mut ap_sum = 0.0;
    let mut d_ap = vec![0.0f64; n]; // gradient of AP~, negated at the end
    let mut g_prime_row = vec![0.0f64; n];

    for &i in &positives {
        let si = scores[i];
        let mut num = 1.0;
        let mut den = 1.0;
        let mut sum_gp_all = 0.0;
        let mut sum_gp_pos = 0.0;
        for j in 0..n {
            if j == i {
                g_prime_row[j] = 0.0;
                continue;
            }
            let g = sigmoid((scores[j] - si) / tau);
            let gp = g * (1.0 - g) / tau;
            g_prime_row[j] = gp;
            den += g;
            sum_gp_all += gp;
            if labels[j] {
                num += g;
                sum_gp_pos += gp;
            }
        }
        ap_sum += num / den;
        let den_sq = den * den;
        for j in 0..n {
            if j == i {
                continue;
            }
            let num_term = if labels[j] { g_prime_row[j] } else { 0.0 };
            d_ap[j] += (num_term * den - num * g_prime_row[j]) / den_sq;
        }
        d_ap[i] += (num * sum_gp_all - sum_gp_pos * den) / den_sq;
    }

    let loss = 1.0 - ap_sum / p_count;
    let grad: Vec<f64> = d_ap.iter().map(|&d| -d / p_count).collect();
    if !loss.is_finite() {
        return Err(LossError::NonFinite("smooth_ap loss"));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(LossError::NonFinite("smooth_ap gradient"));
    }
    Ok((loss, grad))
}

/// Hinge triplet loss with its subgradient: `max(0, d_ap - d_an + margin)`.
/// The gradient is `(1, -1)` on the active side and `(0, 0)` elsewhere,
/// including exactly at the kink.
pub fn triplet_loss(t: &TripletBatch) -> (f64, (f64, f64)) {
    let arg = t.d_ap - t.d_an + t.margin;
    if arg > 0.0 {
        (arg, (1.0, -1.0))
    } else {
        (0.0, (0.0, 0.0))
    }
}

/// Mean hinge loss over every (anchor, positive, negative) triplet whose
/// anchor and positive are both labeled similar. `distances` is a row-major
/// B x B matrix of precomputed pairwise distances. Returns 0 when the batch
/// admits no triplet.
pub fn triplet_batch_loss(
    distances: &[f64],
    labels: &[bool],
    margin: f64,
) -> Result<f64, LossError> {
    let b = labels.len();
    if distances.len() != b * b {
        return Err(LossError::BadMatrix {
            got: distances.len(),
            expected: b * b,
        });
    }
    if !margin.is_finite() || margin < 0.0 {
        return Err(LossError::InvalidDistance("margin", margin));
    }
    if let Some(i) = distances.iter().position(|d| !d.is_finite() || *d < 0.0) {
        return Err(LossError::InvalidDistance("distances", distances[i]));
    }
    let positives: Vec<usize> = (0..b).filter(|&i| labels[i]).collect();
    let negatives: Vec<usize> = (0..b).filter(|&i| !labels[i]).collect();
    let mut total = 0.0;
    let mut count = 0u64;
    for &anchor in &positives {
        for &pos in &positives {
            if pos == anchor {
                continue;
            }
            for &neg in &negatives {
                let t = TripletBatch {
                    d_ap: distances[anchor * b + pos],
                    d_an: distances[anchor * b + neg],
                    margin,
                };
                total += triplet_loss(&t).0;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(total / count as f64)
}

/// Compares a function's analytic gradient against central finite
/// differences at `x0` and returns the worst relative disagreement:
/// `max_i |delta_i| / max(1e-12, |analytic_i| + |numeric_i|)`.
///
/// `f` must return the value and its gradient; only the value is used at the
/// perturbed points.
pub fn grad_check<F>(f: F, x0: &[f64], h: f64) -> Result<f64, LossError>
where
    F: Fn(&[f64]) -> Result<(f64, Vec<f64>), LossError>,
{
    let (_, analytic) = f(x0)?;
    if analytic.len() != x0.len() {
        return Err(LossError::GradientLength {
            got: analytic.len(),
            expected: x0.len(),
        });
    }
    let mut x = x0.to_vec();
    let mut max_rel: f64 = 0.0;
    for i in 0..x0.len() {
        x[i] = x0[i] + h;
        let (f_plus, _) = f(&x)?;
        x[i] = x0[i] - h;
        let (f_minus, _) = f(&x)?;
        x[i] = x0[i];
        if !f_plus.is_finite() || !f_minus.is_finite() {
            return Err(LossError::NonFinite("grad_check evaluation"));
        }
        let numeric = (f_plus - f_minus) / (2.0 * h);
        let rel = (analytic[i] - numeric).abs()
            / f64::max(1e-12, analytic[i].abs() + numeric.abs());
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

/// Convenience closure for checking [`smooth_ap_loss`] with fixed labels.
pub fn smooth_ap_for_check(
    labels: &[bool],
    tau: f64,
) -> impl Fn(&[f64]) -> Result<(f64, Vec<f64>), LossError> + '_ {
    move |scores: &[f64]| {
        let batch = ScoreBatch::new(scores.to_vec(), labels.to_vec())?;
        smooth_ap_loss(&batch, &SmoothApParams { tau })
    }
}
