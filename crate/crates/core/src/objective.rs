//! Losses over sigmoid probabilities and their gradients with respect to the
//! pre-sigmoid logits, plus the frequency-derived class weights.
//!
//! Reduction is a sum over classes and a mean over the batch rows. Logarithms
//! see probabilities clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`; the fused
//! logit gradient `w_j * (p - y) / N` uses the unclamped probabilities.

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::corpus::LabelFrequencies;
use crate::error::{Error, Result};

pub const PROB_CLAMP: f64 = 1e-7;

/// Sigmoid outputs, one row per sample and one column per class.
#[derive(Debug, Clone, PartialEq)]
pub struct Probabilities(pub Array2<f64>);

impl Probabilities {
    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn nrows(&self) -> usize {
        self.0.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }
}

/// Per-class loss multipliers `max_k f_k / f_j`; the most frequent class
/// has weight exactly 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassWeights(Vec<f64>);

impl ClassWeights {
    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0; num_classes])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Accepts arbitrary weights, e.g. for ablations. Entries must be finite
    /// and positive.
    pub fn from_vec(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidArgument("class weights must be finite and positive".into()));
        }
        Ok(Self(weights))
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.iter().map(|w| w * factor).collect())
    }
}

/// `w_j = max_k(f_k) / f_j`.
///
/// The relative-frequency form `f_j / N` gives the same ratios, since `N`
/// cancels. A zero count is an error unless `floor_zero` is set, in which case
/// it is treated as a count of 1.
pub fn compute_class_weights(freq: &LabelFrequencies, names: &[String], floor_zero: bool) -> Result<ClassWeights> {
    if freq.counts.is_empty() {
        return Err(Error::InvalidArgument("no classes to weight".into()));
    }
    let mut counts = freq.counts.clone();
    for (j, c) in counts.iter_mut().enumerate() {
        if *c == 0 {
            if !floor_zero {
                return Err(Error::ZeroFrequency {
                    class: j,
                    name: names.get(j).cloned().unwrap_or_else(|| j.to_string()),
                });
            }
            *c = 1;
        }
    }
    let max = *counts.iter().max().expect("non-empty") as f64;
    Ok(ClassWeights(counts.iter().map(|&c| max / c as f64).collect()))
}

/// How class weights enter the binary cross-entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// `w_j` multiplies both the positive and the negative term.
    #[default]
    WholeTerm,
    /// `w_j` multiplies only the positive term.
    PositiveOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// Gradient with respect to the pre-sigmoid logits.
    pub grad_logits: Array2<f64>,
}

#[inline]
fn clamp(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

fn check_pair(probs: &Probabilities, targets: ArrayView2<f64>) -> Result<()> {
    if probs.0.dim() != targets.dim() {
        return Err(Error::Contract(format!(
            "probabilities {:?} and targets {:?} differ in shape",
            probs.0.dim(),
            targets.dim()
        )));
    }
    if targets.iter().any(|&y| !(0.0..=1.0).contains(&y)) {
        return Err(Error::Contract("targets must lie in [0, 1]".into()));
    }
    Ok(())
}

fn bce_impl(
    probs: &Probabilities,
    targets: ArrayView2<f64>,
    weights: Option<&ClassWeights>,
    scheme: WeightScheme,
) -> Result<LossOutput> {
    check_pair(probs, targets)?;
    let (n, c) = probs.0.dim();
    let unit;
    let w = match weights {
        Some(w) => {
            if w.len() != c {
                return Err(Error::Contract(format!("{} class weights for {c} classes", w.len())));
            }
            w.as_slice()
        }
        None => {
            unit = vec![1.0; c];
            &unit[..]
        }
    };
    if n == 0 {
        return Ok(LossOutput {
            loss: 0.0,
            grad_logits: Array2::zeros((0, c)),
        });
    }
    let inv_n = 1.0 / n as f64;
    let mut total = 0.0;
    let mut grad = Array2::zeros((n, c));
    for i in 0..n {
        for j in 0..c {
            let p = probs.0[[i, j]];
            let y = targets[[i, j]];
            let q = clamp(p);
            let pos = y * q.ln();
            let neg = (1.0 - y) * (1.0 - q).ln();
            let (term, g) = match scheme {
                WeightScheme::WholeTerm => (w[j] * (pos + neg), w[j] * (p - y)),
                // d/dz of -(w y ln s + (1-y) ln(1-s)) = (1-y) s - w y (1-s)
                WeightScheme::PositiveOnly => (w[j] * pos + neg, (1.0 - y) * p - w[j] * y * (1.0 - p)),
            };
            total += term;
            grad[[i, j]] = g * inv_n;
        }
    }
    Ok(LossOutput {
        loss: -total * inv_n,
        grad_logits: grad,
    })
}

pub fn bce_loss(probs: &Probabilities, targets: ArrayView2<f64>) -> Result<LossOutput> {
    bce_impl(probs, targets, None, WeightScheme::WholeTerm)
}

/// Class-weighted binary cross-entropy. With all weights equal to 1 this is
/// bit-for-bit [`bce_loss`].
pub fn weighted_bce_loss(
    probs: &Probabilities,
    targets: ArrayView2<f64>,
    weights: &ClassWeights,
    scheme: WeightScheme,
) -> Result<LossOutput> {
    bce_impl(probs, targets, Some(weights), scheme)
}

/// Smoothing strength `epsilon` in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SmoothingConfig(f64);

impl SmoothingConfig {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("smoothing must lie in [0, 1), got {epsilon}")));
        }
        Ok(Self(epsilon))
    }

    pub fn epsilon(self) -> f64 {
        self.0
    }
}

/// `y' = (1 - epsilon) y + epsilon / C`.
pub fn smooth_labels(targets: ArrayView2<f64>, cfg: SmoothingConfig, num_classes: usize) -> Array2<f64> {
    let eps = cfg.0;
    if eps == 0.0 {
        return targets.to_owned();
    }
    let shift = eps / num_classes as f64;
    targets.mapv(|y| (1.0 - eps) * y + shift)
}

/// Categorical cross-entropy for row-stochastic predictions and one-hot
/// targets. Kept as a reference; training uses the binary losses.
pub fn cross_entropy_loss(probs: ArrayView2<f64>, targets: ArrayView2<f64>) -> Result<f64> {
    if probs.dim() != targets.dim() {
        return Err(Error::Contract("probabilities and targets differ in shape".into()));
    }
    for (i, row) in probs.rows().into_iter().enumerate() {
        if (row.sum() - 1.0).abs() > 1e-6 || row.iter().any(|&p| p < 0.0) {
            return Err(Error::Contract(format!("row {i} is not a probability distribution")));
        }
    }
    for (i, row) in targets.rows().into_iter().enumerate() {
        let ones = row.iter().filter(|&&y| y == 1.0).count();
        if ones != 1 || row.iter().any(|&y| y != 0.0 && y != 1.0) {
            return Err(Error::Contract(format!("target row {i} is not one-hot")));
        }
    }
    let n = probs.nrows();
    if n == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    Zip::from(&probs).and(&targets).for_each(|&p, &y| {
        total += y * clamp(p).ln();
    });
    Ok(-total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::predict_probs;
    use crate::model::Logits;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn names(c: usize) -> Vec<String> {
        (0..c).map(|j| format!("c{j}")).collect()
    }

    fn freq(counts: &[u64], total: u64) -> LabelFrequencies {
        LabelFrequencies {
            counts: counts.to_vec(),
            total,
        }
    }

    /// Naive double loop straight from the definition, no clamping helpers
    /// shared with the implementation.
    fn oracle_bce(p: &Array2<f64>, y: &Array2<f64>, w: &[f64]) -> f64 {
        let (n, c) = p.dim();
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..c {
                let q = p[[i, j]].clamp(1e-7, 1.0 - 1e-7);
                s += w[j] * (y[[i, j]] * q.ln() + (1.0 - y[[i, j]]) * (1.0 - q).ln());
            }
        }
        -s / n as f64
    }

    #[test]
    fn class_weights_from_counts() {
        let w = compute_class_weights(&freq(&[40, 20, 10], 70), &names(3), false).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 2.0, 4.0]);
        let w = compute_class_weights(&freq(&[5; 5], 5), &names(5), false).unwrap();
        assert_eq!(w.as_slice(), &[1.0; 5]);
    }

    #[test]
    fn zero_frequency_is_an_error_unless_floored() {
        let err = compute_class_weights(&freq(&[3, 0, 3], 6), &names(3), false).unwrap_err();
        assert!(matches!(err, Error::ZeroFrequency { class: 1, .. }));
        let w = compute_class_weights(&freq(&[3, 0, 3], 6), &names(3), true).unwrap();
        assert_eq!(w.as_slice(), &[1.0, 3.0, 1.0]);
    }

    #[test]
    fn near_perfect_predictions_have_near_zero_loss() {
        let y = array![[1.0, 0.0, 1.0], [0.0, 0.0, 1.0]];
        let p = y.mapv(|v| if v == 1.0 { 1.0 - 1e-7 } else { 1e-7 });
        let out = bce_loss(&Probabilities(p), y.view()).unwrap();
        assert!(out.loss < 1e-5, "{}", out.loss);
    }

    #[test]
    fn half_probability_costs_ln2() {
        let out = bce_loss(&Probabilities(array![[0.5]]), array![[1.0]].view()).unwrap();
        assert!((out.loss - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(out.grad_logits, array![[-0.5]]);
    }

    #[test]
    fn weighted_two_class_example() {
        let w = ClassWeights::from_vec(vec![2.0, 1.0]).unwrap();
        let out = weighted_bce_loss(
            &Probabilities(array![[0.8, 0.3]]),
            array![[1.0, 0.0]].view(),
            &w,
            WeightScheme::WholeTerm,
        )
        .unwrap();
        let expected = -2.0 * 0.8f64.ln() - 0.7f64.ln();
        assert!((out.loss - expected).abs() < 1e-15);
        assert!((out.loss - 0.802_962).abs() < 1e-6);
    }

    #[test]
    fn random_instance_matches_double_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let p = Array2::from_shape_fn((4, 5), |_| rng.random_range(0.01..0.99));
        let y = Array2::from_shape_fn((4, 5), |_| f64::from(rng.random_bool(0.4) as u8));
        let out = bce_loss(&Probabilities(p.clone()), y.view()).unwrap();
        assert!((out.loss - oracle_bce(&p, &y, &[1.0; 5])).abs() < 1e-12);
    }

    #[test]
    fn doubling_weights_doubles_loss_and_gradient() {
        let p = Probabilities(array![[0.2, 0.7, 0.4], [0.9, 0.1, 0.5]]);
        let y = array![[0.0, 1.0, 1.0], [1.0, 0.0, 0.0]];
        let w = ClassWeights::from_vec(vec![1.0, 3.0, 1.5]).unwrap();
        let a = weighted_bce_loss(&p, y.view(), &w, WeightScheme::WholeTerm).unwrap();
        let b = weighted_bce_loss(&p, y.view(), &w.scaled(2.0), WeightScheme::WholeTerm).unwrap();
        assert_eq!(b.loss, 2.0 * a.loss);
        assert_eq!(b.grad_logits, &a.grad_logits * 2.0);
    }

    #[test]
    fn positive_only_scheme_leaves_negatives_unweighted() {
        let w = ClassWeights::from_vec(vec![4.0]).unwrap();
        let p = Probabilities(array![[0.3]]);
        let neg = weighted_bce_loss(&p, array![[0.0]].view(), &w, WeightScheme::PositiveOnly).unwrap();
        assert!((neg.loss + 0.7f64.ln()).abs() < 1e-15);
        let pos = weighted_bce_loss(&p, array![[1.0]].view(), &w, WeightScheme::PositiveOnly).unwrap();
        assert!((pos.loss + 4.0 * 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch_is_a_contract_error() {
        let p = Probabilities(Array2::from_elem((2, 3), 0.5));
        assert!(matches!(bce_loss(&p, Array2::zeros((3, 2)).view()), Err(Error::Contract(_))));
        let w = ClassWeights::uniform(2);
        assert!(weighted_bce_loss(&p, Array2::zeros((2, 3)).view(), &w, WeightScheme::WholeTerm).is_err());
    }

    #[test]
    fn smoothing_values() {
        let y = array![[1.0, 0.0, 1.0, 0.0, 0.0]];
        assert_eq!(smooth_labels(y.view(), SmoothingConfig::new(0.0).unwrap(), 5), y);
        let s = smooth_labels(y.view(), SmoothingConfig::new(0.1).unwrap(), 5);
        assert!((s[[0, 0]] - 0.92).abs() < 1e-15);
        assert!((s[[0, 1]] - 0.02).abs() < 1e-15);
        assert!(SmoothingConfig::new(1.0).is_err());
    }

    #[test]
    fn cross_entropy_cases() {
        let uniform = Array2::from_elem((2, 4), 0.25);
        let y = array![[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]];
        let l = cross_entropy_loss(uniform.view(), y.view()).unwrap();
        assert!((l - 4f64.ln()).abs() < 1e-15);
        let perfect = y.clone();
        assert!(cross_entropy_loss(perfect.view(), y.view()).unwrap() < 1e-5);
        let bad = array![[0.5, 0.4, 0.0, 0.0], [0.25, 0.25, 0.25, 0.25]];
        assert!(matches!(cross_entropy_loss(bad.view(), y.view()), Err(Error::Contract(_))));
    }

    #[test]
    fn cross_entropy_matches_double_loop() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let raw = Array2::from_shape_fn((3, 4), |_| rng.random_range(0.1f64..1.0));
        let mut p = raw.clone();
        for mut row in p.rows_mut() {
            let s = row.sum();
            row /= s;
        }
        let y = array![[0.0, 1.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
        let mut oracle = 0.0;
        for i in 0..3 {
            for j in 0..4 {
                oracle += y[[i, j]] * p[[i, j]].ln();
            }
        }
        oracle /= -3.0;
        assert!((cross_entropy_loss(p.view(), y.view()).unwrap() - oracle).abs() < 1e-12);
    }

    /// Loss as a function of the logits, for finite differences.
    fn loss_at(z: &Array2<f64>, y: &Array2<f64>, w: &ClassWeights) -> f64 {
        let p = predict_probs(&Logits(z.clone()));
        weighted_bce_loss(&p, y.view(), w, WeightScheme::WholeTerm).unwrap().loss
    }

    #[test]
    fn fused_gradient_matches_central_differences() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let z = Array2::from_shape_fn((3, 4), |_| rng.random_range(-3.0..3.0));
        let y = Array2::from_shape_fn((3, 4), |_| rng.random_range(0.0..1.0));
        let w = ClassWeights::from_vec(vec![1.0, 2.5, 4.0, 1.2]).unwrap();
        let analytic = weighted_bce_loss(&predict_probs(&Logits(z.clone())), y.view(), &w, WeightScheme::WholeTerm)
            .unwrap()
            .grad_logits;
        let h = 1e-5;
        for i in 0..3 {
            for j in 0..4 {
                let mut zp = z.clone();
                zp[[i, j]] += h;
                let mut zm = z.clone();
                zm[[i, j]] -= h;
                let numeric = (loss_at(&zp, &y, &w) - loss_at(&zm, &y, &w)) / (2.0 * h);
                let a = analytic[[i, j]];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
                assert!(rel < 1e-8, "({i},{j}) analytic {a} numeric {numeric} rel {rel}");
            }
        }
    }

    proptest! {
        #[test]
        fn unit_weights_are_bitwise_identical(
            cells in prop::collection::vec((0.001f64..0.999, 0u8..2), 1..40),
            c in 1usize..6,
        ) {
            let n = cells.len() / c;
            prop_assume!(n >= 1);
            let p = Array2::from_shape_fn((n, c), |(i, j)| cells[i * c + j].0);
            let y = Array2::from_shape_fn((n, c), |(i, j)| f64::from(cells[i * c + j].1));
            let probs = Probabilities(p);
            let plain = bce_loss(&probs, y.view()).unwrap();
            let weighted = weighted_bce_loss(&probs, y.view(), &ClassWeights::uniform(c), WeightScheme::WholeTerm).unwrap();
            prop_assert_eq!(plain.loss.to_bits(), weighted.loss.to_bits());
            prop_assert_eq!(plain.grad_logits, weighted.grad_logits);
        }

        #[test]
        fn smoothed_loss_bounded_by_entropy(
            cells in prop::collection::vec((0.001f64..0.999, 0u8..2), 5..30),
            eps in 0.0f64..0.5,
        ) {
            let c = 5;
            let n = cells.len() / c;
            let p = Array2::from_shape_fn((n, c), |(i, j)| cells[i * c + j].0);
            let y = Array2::from_shape_fn((n, c), |(i, j)| f64::from(cells[i * c + j].1));
            let smooth = smooth_labels(y.view(), SmoothingConfig::new(eps).unwrap(), c);
            let lo = eps / c as f64;
            let hi = 1.0 - eps + eps / c as f64;
            prop_assert!(smooth.iter().all(|&v| v >= lo - 1e-15 && v <= hi + 1e-15));
            let loss = bce_loss(&Probabilities(p), smooth.view()).unwrap().loss;
            let entropy: f64 = smooth.iter().map(|&t| {
                let a = if t > 0.0 { -t * t.ln() } else { 0.0 };
                let b = if t < 1.0 { -(1.0 - t) * (1.0 - t).ln() } else { 0.0 };
                a + b
            }).sum::<f64>() / n as f64;
            prop_assert!(loss >= entropy - 1e-12);
            prop_assert!(loss >= 0.0);
        }

        #[test]
        fn class_permutation_invariance(seed in any::<u64>()) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (n, c) = (4, 5);
            let p = Array2::from_shape_fn((n, c), |_| rng.random_range(0.01..0.99));
            let y = Array2::from_shape_fn((n, c), |_| f64::from(rng.random_bool(0.5) as u8));
            let w: Vec<f64> = (0..c).map(|_| rng.random_range(1.0..5.0)).collect();
            let perm = [3usize, 0, 4, 1, 2];
            let pp = Array2::from_shape_fn((n, c), |(i, j)| p[[i, perm[j]]]);
            let yp = Array2::from_shape_fn((n, c), |(i, j)| y[[i, perm[j]]]);
            let wp: Vec<f64> = perm.iter().map(|&k| w[k]).collect();
            let a = weighted_bce_loss(&Probabilities(p), y.view(), &ClassWeights::from_vec(w).unwrap(), WeightScheme::WholeTerm).unwrap().loss;
            let b = weighted_bce_loss(&Probabilities(pp), yp.view(), &ClassWeights::from_vec(wp).unwrap(), WeightScheme::WholeTerm).unwrap().loss;
            prop_assert!((a - b).abs() < 1e-12);
        }

        #[test]
        fn weights_invariant_to_count_scaling(counts in prop::collection::vec(1u64..500, 2..7), k in 1u64..50) {
            let names = names(counts.len());
            let a = compute_class_weights(&freq(&counts, 1000), &names, false).unwrap();
            let scaled: Vec<u64> = counts.iter().map(|c| c * k).collect();
            let b = compute_class_weights(&freq(&scaled, 1000 * k), &names, false).unwrap();
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-12 * x.abs());
            }
            prop_assert!(a.as_slice().contains(&1.0));
            prop_assert!(a.as_slice().iter().all(|&w| w >= 1.0));
        }
    }
}
