//! Pseudo-true parameters: the feasible-model parameters closest in KL
//! divergence to the distribution of censored histories, in closed form for
//! each estimation variant, plus a brute-force numeric minimizer used to
//! cross-check them.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gauss::{gaussian_region_integral, truncated_lower_moments, truncated_upper_moments};
use crate::stage_game::{optimal_cutoff, StageGame, SubjectiveModel, TrueModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoTrueEstimate {
    pub mu1_star: f64,
    pub mu2_star: f64,
    pub var1_star: Option<f64>,
    pub var2_star: Option<f64>,
    pub gamma_star: Option<f64>,
}

impl PseudoTrueEstimate {
    fn means(mu1_star: f64, mu2_star: f64) -> Self {
        Self { mu1_star, mu2_star, var1_star: None, var2_star: None, gamma_star: None }
    }
}

/// A population of predecessors using different cutoffs, with population shares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoringSpec {
    cutoffs: Vec<f64>,
    weights: Vec<f64>,
}

impl CensoringSpec {
    /// Weights are normalized to sum to one.
    pub fn new(cutoffs: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if cutoffs.is_empty() || cutoffs.len() != weights.len() {
            return Err(invalid(format!(
                "need matching non-empty cutoff/weight lists, got {} and {}",
                cutoffs.len(),
                weights.len()
            )));
        }
        if cutoffs.iter().any(|c| c.is_nan()) {
            return Err(invalid("cutoff is NaN"));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(invalid("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(invalid("weights sum to zero"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { cutoffs, weights })
    }

    pub fn equal(cutoffs: Vec<f64>) -> Result<Self> {
        let n = cutoffs.len();
        Self::new(cutoffs, vec![1.0; n])
    }

    pub fn single(c: f64) -> Result<Self> {
        Self::new(vec![c], vec![1.0])
    }

    pub fn cutoffs(&self) -> &[f64] {
        &self.cutoffs
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be finite and >= 0, got {gamma}")));
    }
    Ok(())
}

fn check_independent(truth: &TrueModel) -> Result<()> {
    if truth.gamma_true != 0.0 {
        return Err(invalid("this estimator assumes objectively independent draws (gamma_true = 0)"));
    }
    Ok(())
}

/// E[X1 | X1 <= c] under the true first-period marginal.
fn censored_first_mean(truth: &TrueModel, c: f64) -> Result<f64> {
    if c == f64::NEG_INFINITY {
        return Err(Error::NoIdentification(
            "cutoff -inf censors every second-period draw".into(),
        ));
    }
    Ok(truncated_lower_moments(&truth.marginal1(), c)?.0)
}

/// mu2* = mu2 - gamma (mu1 - E[X1 | X1 <= c]), mu1* = mu1.
pub fn pseudo_true(truth: &TrueModel, c: f64, gamma: f64) -> Result<PseudoTrueEstimate> {
    check_gamma(gamma)?;
    check_independent(truth)?;
    let e = censored_first_mean(truth, c)?;
    Ok(PseudoTrueEstimate::means(
        truth.mu1_true,
        truth.mu2_true - gamma * (truth.mu1_true - e),
    ))
}

/// Observation-frequency weights w_k P[X1 <= c_k], normalized.
fn observation_weights(truth: &TrueModel, spec: &CensoringSpec) -> Result<Vec<f64>> {
    let g = truth.marginal1();
    let raw: Vec<f64> = spec
        .cutoffs
        .iter()
        .zip(&spec.weights)
        .map(|(&c, &w)| w * g.cdf(c))
        .collect();
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(Error::NoIdentification(
            "no predecessor population ever observes a second-period draw".into(),
        ));
    }
    Ok(raw.into_iter().map(|w| w / total).collect())
}

/// Pseudo-true means from a pooled dataset of several predecessor cutoffs.
pub fn pseudo_true_multi(truth: &TrueModel, spec: &CensoringSpec, gamma: f64) -> Result<PseudoTrueEstimate> {
    check_gamma(gamma)?;
    check_independent(truth)?;
    let w = observation_weights(truth, spec)?;
    let mut mu2 = 0.0;
    for (&c, &wk) in spec.cutoffs.iter().zip(&w) {
        if wk > 0.0 {
            mu2 += wk * pseudo_true(truth, c, gamma)?.mu2_star;
        }
    }
    Ok(PseudoTrueEstimate::means(truth.mu1_true, mu2))
}

/// Joint estimation of means and both variances.
pub fn pseudo_true_mean_var(truth: &TrueModel, c: f64, gamma: f64) -> Result<PseudoTrueEstimate> {
    let base = pseudo_true(truth, c, gamma)?;
    let (_, var_c) = truncated_lower_moments(&truth.marginal1(), c)?;
    let s2 = truth.sd * truth.sd;
    Ok(PseudoTrueEstimate {
        var1_star: Some(s2),
        var2_star: Some(s2 + gamma * gamma * var_c),
        ..base
    })
}

/// Agents who know both periods share one mean estimate that common value.
/// The estimate is returned in both mean fields.
pub fn pseudo_true_constrained(mu_common: f64, sd: f64, c: f64, gamma: f64) -> Result<PseudoTrueEstimate> {
    check_gamma(gamma)?;
    let truth = TrueModel::new(mu_common, mu_common, sd)?;
    let g = truth.marginal1();
    let p = g.cdf(c);
    let est = if p == 0.0 {
        mu_common
    } else {
        let e = truncated_lower_moments(&g, c)?.0;
        let second = mu_common - gamma / (1.0 + gamma) * (mu_common - e);
        let k = p * (1.0 + gamma).powi(2);
        let w2 = k / (1.0 + k);
        (1.0 - w2) * mu_common + w2 * second
    };
    Ok(PseudoTrueEstimate::means(est, est))
}

/// Joint estimation of means and gamma restricted to [gamma_lo, gamma_hi],
/// when the true process may itself be serially correlated.
pub fn pseudo_true_gamma_range(
    truth: &TrueModel,
    c: f64,
    gamma_lo: f64,
    gamma_hi: f64,
) -> Result<PseudoTrueEstimate> {
    if !(gamma_lo <= gamma_hi && gamma_lo.is_finite() && gamma_hi.is_finite()) {
        return Err(invalid(format!("bad gamma range [{gamma_lo}, {gamma_hi}]")));
    }
    let gt = truth.gamma_true;
    let degenerate = gamma_lo == gamma_hi;
    if !degenerate && (gamma_lo..=gamma_hi).contains(&gt) {
        return Err(Error::OutOfHypothesis(format!(
            "true gamma {gt} lies inside [{gamma_lo}, {gamma_hi}]"
        )));
    }
    let gamma_star = if degenerate || gt < gamma_lo { gamma_lo } else { gamma_hi };
    let e = censored_first_mean(truth, c)?;
    Ok(PseudoTrueEstimate {
        gamma_star: Some(gamma_star),
        ..PseudoTrueEstimate::means(
            truth.mu1_true,
            truth.mu2_true + (gt - gamma_star) * (truth.mu1_true - e),
        )
    })
}

/// Cost-direction censoring: second draws are seen when X1 >= c.
pub fn pseudo_true_cost(truth: &TrueModel, c: f64, gamma: f64) -> Result<PseudoTrueEstimate> {
    check_gamma(gamma)?;
    check_independent(truth)?;
    if c == f64::INFINITY {
        return Err(Error::NoIdentification(
            "cutoff +inf censors every second-period draw".into(),
        ));
    }
    let e = truncated_upper_moments(&truth.marginal1(), c)?.0;
    Ok(PseudoTrueEstimate::means(
        truth.mu1_true,
        truth.mu2_true - gamma * (truth.mu1_true - e),
    ))
}

/// Predecessors are a mix: share `alpha` neglect selection and use the
/// cutoff for the true means, the rest use `c_baseline`.
pub fn pseudo_true_selection_mix(
    truth: &TrueModel,
    c_baseline: f64,
    alpha: f64,
    gamma: f64,
    game: &StageGame,
) -> Result<PseudoTrueEstimate> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(invalid(format!("neglecter share must lie in [0,1), got {alpha}")));
    }
    let neglecter = neglecter_cutoff(truth, gamma, game)?;
    let spec = CensoringSpec::new(vec![neglecter, c_baseline], vec![alpha, 1.0 - alpha])?;
    pseudo_true_multi(truth, &spec, gamma)
}

/// Cutoff used by selection neglecters, who learn the true means.
pub fn neglecter_cutoff(truth: &TrueModel, gamma: f64, game: &StageGame) -> Result<f64> {
    optimal_cutoff(game, &truth.biased(truth.mu1_true, truth.mu2_true, gamma))
}

/// Misattributed reference dependence with scale eta and prior means
/// (mu1o, mu2o).
pub fn pseudo_true_ref_dependence(
    truth: &TrueModel,
    prior: (f64, f64),
    eta: f64,
    c: f64,
    gamma: f64,
) -> Result<PseudoTrueEstimate> {
    check_gamma(gamma)?;
    check_independent(truth)?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(invalid(format!("eta must be finite and >= 0, got {eta}")));
    }
    let (mu1o, mu2o) = prior;
    let (m1, m2) = (truth.mu1_true, truth.mu2_true);
    let e = censored_first_mean(truth, c)?;
    let mu1 = (1.0 + eta) * m1 - eta * mu1o;
    let mu2 = (1.0 + eta) * m2 - eta * mu2o - gamma * ((1.0 + eta) * (m1 - e) + eta * (mu1o - e));
    Ok(PseudoTrueEstimate::means(mu1, mu2))
}

/// Data statistics (E[h1], E[h2 + gamma h1 | h2 observed]) implied by the
/// true process under the pooled censoring.
pub fn sufficient_statistics(truth: &TrueModel, spec: &CensoringSpec, gamma: f64) -> Result<(f64, f64)> {
    check_gamma(gamma)?;
    check_independent(truth)?;
    let w = observation_weights(truth, spec)?;
    let mut pooled = 0.0;
    for (&c, &wk) in spec.cutoffs.iter().zip(&w) {
        if wk > 0.0 {
            pooled += wk * censored_first_mean(truth, c)?;
        }
    }
    Ok((truth.mu1_true, truth.mu2_true + gamma * pooled))
}

// ---------------------------------------------------------------------------
// KL divergence and the numeric oracle

fn gaussian_kl(mean_t: f64, var_t: f64, mean_m: f64, var_m: f64) -> f64 {
    0.5 * (var_m / var_t).ln() + (var_t + (mean_t - mean_m).powi(2)) / (2.0 * var_m) - 0.5
}

/// KL divergence from the true censored-history law to the one implied by
/// `subj`, second draws observed iff x1 <= c.
pub fn kl_divergence(truth: &TrueModel, subj: &SubjectiveModel, c: f64) -> Result<f64> {
    if !(subj.var1 > 0.0 && subj.var2 > 0.0) {
        return Err(invalid("subjective variances must be positive"));
    }
    if c.is_nan() {
        return Err(invalid("cutoff is NaN"));
    }
    let s2 = truth.sd * truth.sd;
    let first = gaussian_kl(truth.mu1_true, s2, subj.mu1, subj.var1);
    let true_cond = |x1: f64| truth.mu2_true - truth.gamma_true * (x1 - truth.mu1_true);
    let second = gaussian_region_integral(
        |x1| gaussian_kl(true_cond(x1), s2, subj.conditional_mean(x1), subj.var2),
        &truth.marginal1(),
        f64::NEG_INFINITY,
        c,
    );
    Ok(first + second)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParameterSet {
    /// (mu1, mu2) with variances fixed at the true value.
    Means,
    /// (mu1, mu2, var1, var2).
    MeansAndVars,
    /// A single common mean for both periods.
    Diagonal,
    /// (mu1, mu2, gamma) with gamma restricted to [lo, hi].
    WithGamma { lo: f64, hi: f64 },
}

/// Numerically minimize `kl_divergence` over the chosen parameters. Uses
/// only the divergence itself, never the closed forms.
pub fn kl_oracle_minimize(
    truth: &TrueModel,
    c: f64,
    gamma: f64,
    params: ParameterSet,
) -> Result<PseudoTrueEstimate> {
    let s2 = truth.sd * truth.sd;
    let sd = truth.sd;
    let (m1, m2) = (truth.mu1_true, truth.mu2_true);
    let offsets = [-1.0, 0.0, 1.0];

    let (starts, decode): (Vec<Vec<f64>>, Box<dyn Fn(&[f64]) -> SubjectiveModel>) = match params {
        ParameterSet::Means => (
            grid2(&offsets, m1, m2, sd),
            Box::new(move |p: &[f64]| SubjectiveModel::new(p[0], p[1], s2, s2, gamma)),
        ),
        ParameterSet::MeansAndVars => {
            let ls = s2.ln();
            let starts = grid2(&offsets, m1, m2, sd)
                .into_iter()
                .flat_map(|p| [vec![p[0], p[1], ls, ls], vec![p[0], p[1], ls + 0.5, ls - 0.5]])
                .collect();
            (
                starts,
                Box::new(move |p: &[f64]| SubjectiveModel::new(p[0], p[1], p[2].exp(), p[3].exp(), gamma)),
            )
        }
        ParameterSet::Diagonal => {
            if m1 != m2 {
                return Err(invalid("diagonal family needs equal true means"));
            }
            (
                offsets.iter().map(|o| vec![m1 + o * sd]).collect(),
                Box::new(move |p: &[f64]| SubjectiveModel::new(p[0], p[0], s2, s2, gamma)),
            )
        }
        ParameterSet::WithGamma { lo, hi } => {
            if !(lo <= hi) {
                return Err(invalid(format!("bad gamma range [{lo}, {hi}]")));
            }
            let mid = 0.5 * (lo + hi);
            let starts = grid2(&offsets, m1, m2, sd)
                .into_iter()
                .flat_map(|p| [vec![p[0], p[1], lo], vec![p[0], p[1], mid], vec![p[0], p[1], hi]])
                .collect();
            (
                starts,
                Box::new(move |p: &[f64]| SubjectiveModel::new(p[0], p[1], s2, s2, p[2].clamp(lo, hi))),
            )
        }
    };

    let objective = |p: &[f64]| -> f64 {
        kl_divergence(truth, &decode(p), c).unwrap_or(f64::INFINITY)
    };

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let step: Vec<f64> = vec![0.5 * sd; start.len()];
        let first = nelder_mead(&objective, &start, &step, NM_TOL, NM_MAX_ITER)?;
        // restart from the optimum to escape a collapsed simplex
        let polished = nelder_mead(&objective, &first.0, &vec![0.05 * sd; start.len()], NM_TOL, NM_MAX_ITER)?;
        let better = match &best {
            None => true,
            Some((bp, bv)) => polished.1 < *bv || (polished.1 == *bv && lexi_less(&polished.0, bp)),
        };
        if better {
            best = Some(polished);
        }
    }
    let (p, _) = best.expect("at least one start");
    let m = decode(&p);
    Ok(match params {
        ParameterSet::Means | ParameterSet::Diagonal => PseudoTrueEstimate::means(m.mu1, m.mu2),
        ParameterSet::MeansAndVars => PseudoTrueEstimate {
            var1_star: Some(m.var1),
            var2_star: Some(m.var2),
            ..PseudoTrueEstimate::means(m.mu1, m.mu2)
        },
        ParameterSet::WithGamma { .. } => PseudoTrueEstimate {
            gamma_star: Some(m.gamma),
            ..PseudoTrueEstimate::means(m.mu1, m.mu2)
        },
    })
}

fn grid2(offsets: &[f64], m1: f64, m2: f64, sd: f64) -> Vec<Vec<f64>> {
    offsets
        .iter()
        .flat_map(|a| offsets.iter().map(move |b| vec![m1 + a * sd, m2 + b * sd]))
        .collect()
}

fn lexi_less(a: &[f64], b: &[f64]) -> bool {
    a.partial_cmp(b) == Some(std::cmp::Ordering::Less)
}

const NM_TOL: f64 = 1e-10;
const NM_MAX_ITER: usize = 20_000;

/// Nelder-Mead simplex search. Stops when the spread of objective values on
/// the simplex is below `ftol` and the simplex diameter is below sqrt(ftol).
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(
    f: &F,
    start: &[f64],
    step: &[f64],
    ftol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, f64)> {
    let n = start.len();
    let mut simplex: Vec<Vec<f64>> = vec![start.to_vec()];
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += step[i];
        simplex.push(p);
    }
    let mut values: Vec<f64> = simplex.iter().map(|p| f(p)).collect();
    let xtol = ftol.sqrt() * 1e-2;

    for _ in 0..max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let spread = values[n] - values[0];
        let diameter = simplex[1..]
            .iter()
            .map(|p| p.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.abs() <= ftol && diameter <= xtol {
            return Ok((simplex[0].clone(), values[0]));
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect()
        };

        let reflected = along(1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[n] {
            let p = along(0.5);
            let v = f(&p);
            (p, v)
        } else {
            let p = along(-0.5);
            let v = f(&p);
            (p, v)
        };
        if fc < values[n].min(fr) {
            simplex[n] = contracted;
            values[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        for i in 1..=n {
            let p: Vec<f64> = simplex[i].iter().zip(&simplex[0]).map(|(x, b)| b + 0.5 * (x - b)).collect();
            values[i] = f(&p);
            simplex[i] = p;
        }
    }
    let (i, v) = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, v)| (i, *v))
        .unwrap();
    Err(Error::NonConvergence { best: simplex[i].clone(), value: v })
}
