//! Pseudo-true fundamentals for L-period stopping problems with constant
//! cutoffs, by direct iteration and by signed path sums over the lag graph.
//!
//! Periods are numbered from 1, matching how the problem is usually stated.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gauss::{truncated_lower_moments, GaussianSpec};

/// Lower-triangular lag weights: `get(i, j)` is how strongly period-i
/// draws are believed to revert the period-j draw, for j < i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagWeights {
    periods: usize,
    // row i - 1 holds entries for j = 1..i-1
    rows: Vec<Vec<f64>>,
}

impl LagWeights {
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self> {
        let periods = rows.len();
        for (k, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(invalid(format!("lag row {} must have {k} entries, has {}", k + 1, row.len())));
            }
            if let Some(bad) = row.iter().find(|g| !(g.is_finite() && **g >= 0.0)) {
                return Err(invalid(format!("lag weights must be finite and non-negative, got {bad}")));
            }
        }
        Ok(Self { periods, rows })
    }

    /// The geometric family: weight alpha * delta^(i - j - 1).
    pub fn alpha_delta(alpha: f64, delta: f64, periods: usize) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) || !(0.0..=1.0).contains(&delta) {
            return Err(invalid(format!("need alpha > 0 and delta in [0,1], got ({alpha}, {delta})")));
        }
        Self::new(
            (0..periods)
                .map(|k| (0..k).map(|j| alpha * delta.powi((k - j - 1) as i32)).collect())
                .collect(),
        )
    }

    pub fn periods(&self) -> usize {
        self.periods
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i - 1][j - 1]
    }
}

/// A stopping threshold for one period.
#[derive(Clone)]
pub enum CutoffRule {
    Constant(f64),
    /// Threshold depending on earlier draws. Not supported by the
    /// closed-form machinery here.
    HistoryDependent(Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for CutoffRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Constant(c) => write!(f, "Constant({c})"),
            Self::HistoryDependent(_) => write!(f, "HistoryDependent(..)"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiPeriodSpec {
    pub lags: LagWeights,
    pub mu_true: Vec<f64>,
    pub sd: f64,
    /// Continuation thresholds for periods 1..L-1: continue iff x_i <= c_i.
    pub cutoffs: Vec<f64>,
}

impl MultiPeriodSpec {
    pub fn new(lags: LagWeights, mu_true: Vec<f64>, sd: f64, cutoffs: Vec<f64>) -> Result<Self> {
        let l = lags.periods();
        if l < 2 {
            return Err(invalid(format!("need at least two periods, got {l}")));
        }
        if mu_true.len() != l || cutoffs.len() != l - 1 {
            return Err(invalid(format!(
                "{l} periods need {l} means and {} cutoffs, got {} and {}",
                l - 1,
                mu_true.len(),
                cutoffs.len()
            )));
        }
        if !(sd > 0.0 && sd.is_finite()) || mu_true.iter().any(|m| !m.is_finite()) {
            return Err(invalid("means must be finite and sd positive"));
        }
        if cutoffs.iter().any(|c| c.is_nan() || *c == f64::NEG_INFINITY) {
            return Err(invalid("cutoffs must be above -inf so that later periods are observed"));
        }
        Ok(Self { lags, mu_true, sd, cutoffs })
    }

    /// As `new`, but from general threshold rules. History-dependent rules
    /// are rejected: the conditional means they need have no closed form.
    pub fn from_rules(lags: LagWeights, mu_true: Vec<f64>, sd: f64, rules: Vec<CutoffRule>) -> Result<Self> {
        let cutoffs = rules
            .into_iter()
            .enumerate()
            .map(|(k, r)| match r {
                CutoffRule::Constant(c) => Ok(c),
                CutoffRule::HistoryDependent(_) => Err(Error::Unsupported(format!(
                    "period {} uses a history-dependent cutoff; only constant thresholds have closed-form \
                     pseudo-true values (the general case needs conditional means over the continuation region)",
                    k + 1
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(lags, mu_true, sd, cutoffs)
    }

    pub fn periods(&self) -> usize {
        self.lags.periods()
    }

    /// mu_j - E[X_j | X_j <= c_j] for each continuation period j.
    fn selection_gaps(&self) -> Result<Vec<f64>> {
        self.cutoffs
            .iter()
            .zip(&self.mu_true)
            .map(|(&c, &m)| Ok(m - truncated_lower_moments(&GaussianSpec::new(m, self.sd)?, c)?.0))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Iterative,
    Paths,
}

fn check_pair(periods: usize, i: usize, j: usize) -> Result<()> {
    if !(1 <= j && j < i && i <= periods) {
        return Err(invalid(format!("need 1 <= j < i <= {periods}, got i={i}, j={j}")));
    }
    Ok(())
}

/// Table of path sums: entry [i][j] (1-based, j < i) is the total weight of
/// all descending paths from i to j, each edge k -> m weighing -gamma(k, m).
fn path_table(lags: &LagWeights) -> Vec<Vec<f64>> {
    let l = lags.periods();
    let mut s = vec![vec![0.0; l + 1]; l + 1];
    for j in 1..=l {
        for i in j + 1..=l {
            let via: f64 = (j + 1..i).map(|k| -lags.get(i, k) * s[k][j]).sum();
            s[i][j] = -lags.get(i, j) + via;
        }
    }
    s
}

/// Sum of path weights from period i down to period j.
pub fn path_weight_sum(spec: &MultiPeriodSpec, i: usize, j: usize) -> Result<f64> {
    path_weight_sum_lags(&spec.lags, i, j)
}

pub fn path_weight_sum_lags(lags: &LagWeights, i: usize, j: usize) -> Result<f64> {
    check_pair(lags.periods(), i, j)?;
    Ok(path_table(lags)[i][j])
}

/// Pseudo-true means of every period under constant cutoffs.
pub fn pseudo_true_l(spec: &MultiPeriodSpec, method: Method) -> Result<Vec<f64>> {
    let l = spec.periods();
    let gaps = spec.selection_gaps()?;
    let mut out = spec.mu_true.clone();
    match method {
        Method::Iterative => {
            // gaps are taken at the truth; the estimate of an earlier period
            // enters through its own deviation from the truth
            for i in 2..=l {
                let shift: f64 = (1..i)
                    .map(|j| spec.lags.get(i, j) * (out[j - 1] - spec.mu_true[j - 1] + gaps[j - 1]))
                    .sum();
                out[i - 1] = spec.mu_true[i - 1] - shift;
            }
        }
        Method::Paths => {
            let s = path_table(&spec.lags);
            for i in 2..=l {
                out[i - 1] += (1..i).map(|j| s[i][j] * gaps[j - 1]).sum::<f64>();
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PessimismVerdict {
    /// Every path sum is negative: all later means are understated for any
    /// constant cutoffs.
    AllPessimistic,
    /// Some path sum is positive: suitable cutoffs make an agent optimistic
    /// about that period.
    OptimismPossible,
    /// No positive path sum, but some vanish (delta = alpha).
    Boundary,
}

/// Classifies the geometric lag family by the signs of its path sums.
pub fn alpha_delta_classify(alpha: f64, delta: f64, periods: usize) -> Result<PessimismVerdict> {
    if periods < 2 {
        return Err(invalid(format!("need at least two periods, got {periods}")));
    }
    let lags = LagWeights::alpha_delta(alpha, delta, periods)?;
    let s = path_table(&lags);
    let zero = 1e-12 * alpha.max(1.0);
    let sums = (1..=periods).flat_map(|i| (1..i).map(move |j| (i, j))).map(|(i, j)| s[i][j]);
    let (mut positive, mut vanishing) = (false, false);
    for v in sums {
        if v > zero {
            positive = true;
        } else if v >= -zero {
            vanishing = true;
        }
    }
    Ok(if positive {
        PessimismVerdict::OptimismPossible
    } else if vanishing {
        PessimismVerdict::Boundary
    } else {
        PessimismVerdict::AllPessimistic
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gauss::{norm_cdf, norm_pdf};
    use crate::inference::pseudo_true;
    use crate::stage_game::TrueModel;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Explicit enumeration of every descending path i -> j.
    fn enumerate_paths(lags: &LagWeights, i: usize, j: usize) -> f64 {
        if i == j {
            return 1.0;
        }
        (j..i).map(|k| -lags.get(i, k) * enumerate_paths(lags, k, j)).sum()
    }

    fn spec(lags: LagWeights, cutoffs: Vec<f64>) -> MultiPeriodSpec {
        let l = lags.periods();
        MultiPeriodSpec::new(lags, vec![0.0; l], 1.0, cutoffs).unwrap()
    }

    #[test]
    fn path_sum_examples() {
        let lags = LagWeights::alpha_delta(0.4, 0.7, 4).unwrap();
        assert_eq!(path_weight_sum_lags(&lags, 2, 1).unwrap(), -0.4);
        assert_relative_eq!(path_weight_sum_lags(&lags, 3, 1).unwrap(), -0.4 * 0.7 + 0.16, epsilon = 1e-15);
        let half = LagWeights::alpha_delta(0.5, 1.0, 3).unwrap();
        assert_relative_eq!(path_weight_sum_lags(&half, 3, 1).unwrap(), -0.25, epsilon = 1e-15);
        assert!(path_weight_sum_lags(&half, 1, 1).is_err());
        assert!(path_weight_sum_lags(&half, 4, 1).is_err());
    }

    #[test]
    fn three_period_optimism() {
        let s = spec(LagWeights::alpha_delta(0.5, 0.0, 3).unwrap(), vec![-2.0, 0.0]);
        // gaps: 0 - E[X | X <= c] = phi(c) / Phi(c)
        let gap = |c: f64| norm_pdf(c) / norm_cdf(c);
        let want = 0.25 * gap(-2.0) - 0.5 * gap(0.0);
        for m in [Method::Iterative, Method::Paths] {
            let mu = pseudo_true_l(&s, m).unwrap();
            assert_eq!(mu[0], 0.0);
            assert_relative_eq!(mu[2], want, epsilon = 1e-12);
            assert_relative_eq!(mu[2], 0.194361602804277539, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_periods_match_single_cutoff() {
        let t = TrueModel::new(0.3, -0.2, 1.4).unwrap();
        let lags = LagWeights::new(vec![vec![], vec![0.6]]).unwrap();
        let s = MultiPeriodSpec::new(lags, vec![0.3, -0.2], 1.4, vec![0.9]).unwrap();
        let mu = pseudo_true_l(&s, Method::Paths).unwrap();
        assert_relative_eq!(mu[1], pseudo_true(&t, 0.9, 0.6).unwrap().mu2_star, epsilon = 1e-13);
    }

    #[test]
    fn zero_bias_is_truth() {
        let lags = LagWeights::new(vec![vec![], vec![0.0], vec![0.0, 0.0]]).unwrap();
        let s = MultiPeriodSpec::new(lags, vec![0.1, 0.2, 0.3], 1.0, vec![0.0, 1.0]).unwrap();
        assert_eq!(pseudo_true_l(&s, Method::Iterative).unwrap(), vec![0.1, 0.2, 0.3]);
    }

    #[test]
    fn rejects_history_dependent_rules() {
        let lags = LagWeights::alpha_delta(0.5, 0.5, 3).unwrap();
        let rules = vec![CutoffRule::Constant(0.0), CutoffRule::HistoryDependent(Arc::new(|h| h[0]))];
        assert!(matches!(
            MultiPeriodSpec::from_rules(lags, vec![0.0; 3], 1.0, rules),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn classifier_examples() {
        assert_eq!(alpha_delta_classify(0.3, 0.9, 5).unwrap(), PessimismVerdict::AllPessimistic);
        for l in 3..8 {
            assert_eq!(alpha_delta_classify(0.5, 0.0, l).unwrap(), PessimismVerdict::OptimismPossible);
        }
        assert_eq!(alpha_delta_classify(0.4, 0.4, 6).unwrap(), PessimismVerdict::Boundary);
        assert_eq!(alpha_delta_classify(0.5, 0.0, 2).unwrap(), PessimismVerdict::AllPessimistic);
    }

    #[test]
    fn recursion_law() {
        for (a, d) in [(0.3, 0.9), (0.5, 0.0), (0.2, 0.2), (0.9, 0.4)] {
            let lags = LagWeights::alpha_delta(a, d, 8).unwrap();
            for s in 2..8 {
                let next = path_weight_sum_lags(&lags, s + 1, 1).unwrap();
                let prev = path_weight_sum_lags(&lags, s, 1).unwrap();
                assert_relative_eq!(next, (d - a) * prev, epsilon = 1e-14);
            }
        }
    }

    fn lag_strategy() -> impl Strategy<Value = (LagWeights, Vec<f64>)> {
        (2usize..=8).prop_flat_map(|l| {
            let rows = (0..l).map(|k| prop::collection::vec(0.0f64..1.0, k)).collect::<Vec<_>>();
            (rows, prop::collection::vec(-2.5f64..2.5, l - 1))
                .prop_map(|(rows, cuts)| (LagWeights::new(rows).unwrap(), cuts))
        })
    }

    proptest! {
        #[test]
        fn methods_agree((lags, cuts) in lag_strategy(), mu in -1.0f64..1.0) {
            let l = lags.periods();
            for i in 2..=l {
                for j in 1..i {
                    let dp = path_weight_sum_lags(&lags, i, j).unwrap();
                    prop_assert!((dp - enumerate_paths(&lags, i, j)).abs() < 1e-12);
                }
            }
            let s = MultiPeriodSpec::new(lags, vec![mu; l], 1.3, cuts).unwrap();
            let a = pseudo_true_l(&s, Method::Iterative).unwrap();
            let b = pseudo_true_l(&s, Method::Paths).unwrap();
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12, "{a:?} vs {b:?}");
            }
        }

        #[test]
        fn reversion_dominant_family_is_pessimistic(
            alpha in 0.05f64..0.5, extra in 0.01f64..0.5, l in 2usize..8,
            cuts in prop::collection::vec(-3.0f64..3.0, 7),
        ) {
            let delta = (alpha + extra).min(1.0);
            prop_assume!(delta > alpha);
            let s = MultiPeriodSpec::new(
                LagWeights::alpha_delta(alpha, delta, l).unwrap(), vec![0.0; l], 1.0, cuts[..l - 1].to_vec(),
            ).unwrap();
            let mu = pseudo_true_l(&s, Method::Paths).unwrap();
            for m in &mu[1..] {
                prop_assert!(*m < 0.0);
            }
        }
    }
}
