//! Focal loss over independent sigmoid outputs, with a plain
//! binary-cross-entropy reference.

/// Probabilities are clamped to [eps, 1 - eps] before any log.
pub const PROB_CLAMP_EPSILON: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP_EPSILON, 1.0 - PROB_CLAMP_EPSILON)
}

/// One label's focal term: -alpha_t * (1 - p_t)^gamma * ln(p_t).
pub(crate) fn focal_element(prob: f64, target: bool, gamma: f64, alpha: f64) -> f64 {
    let p = clamp_prob(prob);
    let (p_t, alpha_t) = if target {
        (p, alpha)
    } else {
        (1.0 - p, 1.0 - alpha)
    };
    -alpha_t * (1.0 - p_t).powf(gamma) * p_t.ln()
}

/// Derivative of `focal_element` with respect to the logit feeding the
/// sigmoid that produced `prob`. Where the clamp is active the loss is
/// locally constant in the probability, so the derivative is zero.
pub(crate) fn focal_element_grad(prob: f64, target: bool, gamma: f64, alpha: f64) -> f64 {
    if !(PROB_CLAMP_EPSILON..=1.0 - PROB_CLAMP_EPSILON).contains(&prob) {
        return 0.0;
    }
    let p = prob;
    if target {
        -alpha * (1.0 - p).powf(gamma) * ((1.0 - p) - gamma * p * p.ln())
    } else {
        (1.0 - alpha) * p.powf(gamma) * (p - gamma * (1.0 - p) * (1.0 - p).ln())
    }
}

/// Mean focal loss over a label vector.
pub fn focal_loss(probs: &[f64], targets: &[bool], gamma: f64, alpha: f64) -> f64 {
    assert_eq!(probs.len(), targets.len(), "probs/targets length mismatch");
    assert!(!probs.is_empty(), "focal loss over zero labels");
    let sum: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| focal_element(p, t, gamma, alpha))
        .sum();
    sum / probs.len() as f64
}

/// Mean binary cross-entropy with the same clamp, for reference: focal
/// loss at gamma = 0, alpha = 0.5 equals exactly half of this.
pub fn bce_loss(probs: &[f64], targets: &[bool]) -> f64 {
    assert_eq!(probs.len(), targets.len(), "probs/targets length mismatch");
    assert!(!probs.is_empty(), "bce loss over zero labels");
    let sum: f64 = probs
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let p = clamp_prob(p);
            let p_t = if t { p } else { 1.0 - p };
            -p_t.ln()
        })
        .sum();
    sum / probs.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_probability_positive_point_value() {
        // -0.25 * (1 - 0.5)^2 * ln(0.5) = 0.0625 * ln 2 / ... = 0.25 * 0.25 * ln 2
        let expected = 0.25 * 0.25 * std::f64::consts::LN_2;
        let got = focal_loss(&[0.5], &[true], 2.0, 0.25);
        assert!((got - expected).abs() < 1e-15, "got {got}");
        assert!((got - 0.043_321_7).abs() < 1e-6);
    }

    #[test]
    fn gamma_zero_alpha_half_is_half_bce() {
        let probs = [0.9, 0.2, 0.5, 0.999, 0.03, 0.62];
        let targets = [true, false, true, false, false, true];
        let focal = focal_loss(&probs, &targets, 0.0, 0.5);
        let bce = bce_loss(&probs, &targets);
        assert!((focal - 0.5 * bce).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_predictions_cost_little() {
        let sure = focal_loss(&[0.99], &[true], 2.0, 0.25);
        let unsure = focal_loss(&[0.6], &[true], 2.0, 0.25);
        let wrong = focal_loss(&[0.1], &[true], 2.0, 0.25);
        assert!(sure < unsure && unsure < wrong);
        assert!(sure < 1e-5);
    }

    #[test]
    fn extreme_probabilities_stay_finite() {
        for &p in &[0.0, 1.0, f64::MIN_POSITIVE] {
            for &t in &[true, false] {
                assert!(focal_element(p, t, 2.0, 0.25).is_finite());
                assert!(bce_loss(&[p], &[t]).is_finite());
            }
        }
        // At a clamped probability the logit gradient is defined as zero.
        assert_eq!(focal_element_grad(1.0, true, 2.0, 0.25), 0.0);
        assert_eq!(focal_element_grad(0.0, false, 2.0, 0.25), 0.0);
    }

    #[test]
    fn gradient_matches_central_differences_through_sigmoid() {
        let sigmoid = |z: f64| 1.0 / (1.0 + (-z).exp());
        let h = 1e-6;
        for &z in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            for &t in &[true, false] {
                for &(gamma, alpha) in &[(2.0, 0.25), (0.0, 0.5), (1.5, 0.75)] {
                    let analytic = focal_element_grad(sigmoid(z), t, gamma, alpha);
                    let plus = focal_element(sigmoid(z + h), t, gamma, alpha);
                    let minus = focal_element(sigmoid(z - h), t, gamma, alpha);
                    let numeric = (plus - minus) / (2.0 * h);
                    assert!(
                        (analytic - numeric).abs() < 1e-6,
                        "z={z} t={t} gamma={gamma}: {analytic} vs {numeric}"
                    );
                }
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn loss_is_nonnegative_and_finite(
                probs in proptest::collection::vec(0.0f64..=1.0, 1..20),
                gamma in 0.0f64..4.0,
                alpha in 0.01f64..=1.0,
                seed in any::<u64>(),
            ) {
                let targets: Vec<bool> =
                    probs.iter().enumerate().map(|(i, _)| (seed >> (i % 64)) & 1 == 1).collect();
                let loss = focal_loss(&probs, &targets, gamma, alpha);
                prop_assert!(loss.is_finite());
                prop_assert!(loss >= 0.0);
            }

            #[test]
            fn gamma_zero_alpha_half_identity_holds_generally(
                probs in proptest::collection::vec(0.0f64..=1.0, 1..20),
                seed in any::<u64>(),
            ) {
                let targets: Vec<bool> =
                    probs.iter().enumerate().map(|(i, _)| (seed >> (i % 64)) & 1 == 1).collect();
                let focal = focal_loss(&probs, &targets, 0.0, 0.5);
                let bce = bce_loss(&probs, &targets);
                prop_assert!((focal - 0.5 * bce).abs() <= 1e-12 * bce.abs().max(1.0));
            }
        }
    }
}
