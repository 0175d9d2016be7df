//! Method-of-moments inference for non-Gaussian feasible families, and the
//! generation dynamics of moment-matching agents.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gauss::{adaptive_legendre, truncated_lower_moments, GaussianSpec};
use crate::inference::CensoringSpec;
use crate::stage_game::{Direction, StageGame};

/// A parametric family of joint models for (X1, X2), indexed by
/// (theta1, theta2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FeasibleFamily {
    /// X1 ~ N(theta1, sd^2), X2 | x1 ~ N(theta2 - gamma (x1 - theta1), sd^2).
    Gaussian { sd: f64, gamma: f64 },
    /// Gumbel's bivariate exponential with dependence `alpha` in [-1, 0),
    /// scaled by theta1 and theta2.
    GumbelExponential { alpha: f64 },
    /// X1 ~ Beta(theta1, 1), X2 | x1 ~ Beta((1 - x1) theta2, 1).
    Beta,
}

/// Closed interval with possibly infinite ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Support {
    pub lo: f64,
    pub hi: f64,
}

impl Support {
    fn interior(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }
}

const TOL: f64 = 1e-10;

impl FeasibleFamily {
    pub fn gaussian(sd: f64, gamma: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite() && gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid(format!("gaussian family needs sd > 0 and gamma > 0, got ({sd}, {gamma})")));
        }
        Self::Gaussian { sd, gamma }.probed()
    }

    pub fn gumbel(alpha: f64) -> Result<Self> {
        if !(-1.0..0.0).contains(&alpha) {
            return Err(invalid(format!("gumbel dependence must lie in [-1, 0), got {alpha}")));
        }
        Self::GumbelExponential { alpha }.probed()
    }

    pub fn beta() -> Result<Self> {
        Self::Beta.probed()
    }

    /// Support of X1 (X2 shares it in all three families).
    pub fn support(&self) -> Support {
        match self {
            Self::Gaussian { .. } => Support { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
            Self::GumbelExponential { .. } => Support { lo: 0.0, hi: f64::INFINITY },
            Self::Beta => Support { lo: 0.0, hi: 1.0 },
        }
    }

    /// Parameter range for theta1 and theta2.
    fn parameter_range(&self) -> Support {
        match self {
            Self::Gaussian { .. } => Support { lo: f64::NEG_INFINITY, hi: f64::INFINITY },
            _ => Support { lo: 0.0, hi: f64::INFINITY },
        }
    }

    pub fn marginal1_mean(&self, theta1: f64) -> f64 {
        match self {
            Self::Gaussian { .. } | Self::GumbelExponential { .. } => theta1,
            Self::Beta => theta1 / (theta1 + 1.0),
        }
    }

    fn theta1_for_mean(&self, m1: f64) -> Result<f64> {
        if !self.support().interior(m1) {
            let s = self.support();
            return Err(Error::NoSolution(format!(
                "first-draw mean {m1} is outside the interior of the support ({}, {}); no theta1 matches it",
                s.lo, s.hi
            )));
        }
        Ok(match self {
            Self::Gaussian { .. } | Self::GumbelExponential { .. } => m1,
            Self::Beta => m1 / (1.0 - m1),
        })
    }

    pub fn conditional2_mean(&self, theta1: f64, theta2: f64, x1: f64) -> f64 {
        match *self {
            Self::Gaussian { gamma, .. } => theta2 - gamma * (x1 - theta1),
            Self::GumbelExponential { alpha } => theta2 * (1.0 - 0.5 * alpha - alpha * (-x1 / theta1).exp()),
            Self::Beta => {
                let a = (1.0 - x1) * theta2;
                a / (a + 1.0)
            }
        }
    }

    /// P[X1 <= c] under the model.
    pub fn marginal1_cdf(&self, theta1: f64, c: f64) -> f64 {
        match *self {
            Self::Gaussian { sd, .. } => GaussianSpec { mean: theta1, sd }.cdf(c),
            Self::GumbelExponential { .. } => {
                if c <= 0.0 {
                    0.0
                } else {
                    -(-c / theta1).exp_m1()
                }
            }
            Self::Beta => c.clamp(0.0, 1.0).powf(theta1),
        }
    }

    /// E[X2 | X1 <= c] under the model. Needs P[X1 <= c] > 0.
    pub fn censored2_mean(&self, theta1: f64, theta2: f64, c: f64) -> Result<f64> {
        if self.marginal1_cdf(theta1, c) <= 0.0 {
            return Err(Error::NoIdentification(format!("no second draws are observed below cutoff {c}")));
        }
        Ok(match *self {
            Self::Gaussian { sd, gamma } => {
                let (m, _) = truncated_lower_moments(&GaussianSpec { mean: theta1, sd }, c)?;
                theta2 - gamma * (m - theta1)
            }
            Self::GumbelExponential { alpha } => {
                // E[exp(-X1/theta1) | X1 <= c] = (1 + exp(-c/theta1)) / 2
                let e = 0.5 * (1.0 + (-c / theta1).exp());
                theta2 * (1.0 - 0.5 * alpha - alpha * e)
            }
            Self::Beta => {
                // X1 | X1 <= c has cdf (x/c)^theta1; write x = c u^(1/theta1).
                let c = c.min(1.0);
                let g = |u: f64| self.conditional2_mean(theta1, theta2, c * u.powf(1.0 / theta1));
                adaptive_legendre(&g, 0.0, 1.0, TOL)
            }
        })
    }

    /// Mixture second-draw mean over the predecessor populations, each
    /// weighted by its share and its model continuation probability.
    pub fn pooled2_mean(&self, theta1: f64, theta2: f64, spec: &CensoringSpec) -> Result<f64> {
        let mut num = 0.0;
        let mut den = 0.0;
        for (&c, &w) in spec.cutoffs().iter().zip(spec.weights()) {
            let p = w * self.marginal1_cdf(theta1, c);
            if p > 0.0 {
                num += p * self.censored2_mean(theta1, theta2, c)?;
                den += p;
            }
        }
        if den <= 0.0 {
            return Err(Error::NoIdentification("every predecessor population stops after the first draw".into()));
        }
        Ok(num / den)
    }

    /// Grid check that the first mean rises in theta1 and the conditional
    /// mean rises in theta2 and falls in x1.
    fn probed(self) -> Result<Self> {
        let thetas: Vec<f64> = match self.parameter_range().lo {
            lo if lo == 0.0 => (1..=12).map(|k| 0.1 * 1.5f64.powi(k)).collect(),
            _ => (-6..=6).map(|k| k as f64 * 0.75).collect(),
        };
        let xs: Vec<f64> = match self {
            Self::Gaussian { .. } => (-8..=8).map(|k| k as f64 * 0.5).collect(),
            Self::GumbelExponential { .. } => (0..=16).map(|k| k as f64 * 0.5).collect(),
            Self::Beta => (0..=16).map(|k| k as f64 / 16.0).collect(),
        };
        let fail = |what: &str| Err(Error::AssumptionViolated(format!("{self:?}: {what}")));
        // A row must move in the stated direction end to end and never step
        // the wrong way; flat stretches where the value has saturated in
        // double precision are tolerated.
        let rising = |v: &[f64]| {
            v.last() > v.first() && v.windows(2).all(|w| w[1] >= w[0] - 1e-12 * w[0].abs().max(1.0))
        };
        let m1: Vec<f64> = thetas.iter().map(|&t| self.marginal1_mean(t)).collect();
        if !rising(&m1) {
            return fail("first-draw mean is not increasing in theta1");
        }
        // at x1 = 1 the beta conditional law degenerates; probe the interior
        let inner: Vec<f64> = xs.iter().copied().filter(|x| *x < 1.0 || !matches!(self, Self::Beta)).collect();
        for &t1 in &thetas {
            for &x in &inner {
                let row: Vec<f64> = thetas.iter().map(|&t2| self.conditional2_mean(t1, t2, x)).collect();
                if !rising(&row) {
                    return fail("conditional mean is not increasing in theta2");
                }
            }
            for &t2 in &thetas {
                let row: Vec<f64> = inner.iter().map(|&x| -self.conditional2_mean(t1, t2, x)).collect();
                if !rising(&row) {
                    return fail("conditional mean is not decreasing in the first draw");
                }
            }
        }
        Ok(self)
    }
}

/// Unconditional draw means under the (independent) truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueMoments {
    pub m1: f64,
    pub m2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomEstimate {
    pub theta1: f64,
    pub theta2: f64,
}

/// Bisection for an increasing `f` crossing `target` on the parameter range,
/// expanding the bracket outward from `start`.
fn solve_increasing<F: Fn(f64) -> Result<f64>>(f: F, target: f64, positive: bool, what: &str) -> Result<f64> {
    // positive parameters are searched on the log scale
    let to = |s: f64| if positive { s.exp() } else { s };
    let g = |s: f64| -> Result<f64> { Ok(f(to(s))? - target) };
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut expansions = 0;
    while g(lo)? > 0.0 {
        lo = 2.0 * lo - 1.0;
        expansions += 1;
        if expansions > 60 {
            return Err(Error::NoSolution(format!("{what}: target {target} is below the attainable range")));
        }
    }
    while g(hi)? < 0.0 {
        hi = 2.0 * hi + 1.0;
        expansions += 1;
        if expansions > 120 {
            return Err(Error::NoSolution(format!("{what}: target {target} is above the attainable range")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(to(0.5 * (lo + hi)))
}

/// Parameters whose model moments match the observed first-draw mean and
/// pooled uncensored second-draw mean.
pub fn mom_estimate(family: &FeasibleFamily, truth: &TrueMoments, spec: &CensoringSpec) -> Result<MomEstimate> {
    let theta1 = family.theta1_for_mean(truth.m1)?;
    let s = family.support();
    if !s.interior(truth.m2) {
        return Err(Error::NoSolution(format!(
            "second-draw mean {} is outside the interior of the support ({}, {}); no theta2 matches it",
            truth.m2, s.lo, s.hi
        )));
    }
    let positive = family.parameter_range().lo == 0.0;
    let theta2 = solve_increasing(
        |t2| family.pooled2_mean(theta1, t2, spec),
        truth.m2,
        positive,
        "second-draw moment condition",
    )?;
    Ok(MomEstimate { theta1, theta2 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomRecord {
    pub t: usize,
    pub theta1: f64,
    pub theta2: f64,
    pub cutoff: f64,
    /// Set when the indifference point left the support and the cutoff
    /// was pinned to a support end.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomTrace {
    pub c0: f64,
    pub records: Vec<MomRecord>,
}

impl MomTrace {
    pub fn theta2(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.theta2).collect()
    }

    pub fn cutoffs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cutoff).collect()
    }
}

/// Indifference point of a linear-continuation game under the family's
/// conditional mean, pinned to the support when there is none inside.
pub fn mom_cutoff(family: &FeasibleFamily, game: &StageGame, est: &MomEstimate) -> Result<(f64, bool)> {
    let d = |x: f64| game.u1(x) - game.u2(x, family.conditional2_mean(est.theta1, est.theta2, x));
    let s = family.support();
    let (mut lo, mut hi) = match (s.lo.is_finite(), s.hi.is_finite()) {
        (true, true) => (s.lo, s.hi),
        (true, false) => (s.lo, s.lo + 1.0),
        _ => (est.theta1 - 1.0, est.theta1 + 1.0),
    };
    if s.lo.is_finite() && d(lo) >= 0.0 {
        return Ok((s.lo, true));
    }
    let mut reach = 1.0;
    while d(lo) >= 0.0 {
        reach *= 2.0;
        lo = est.theta1 - reach;
        if reach > 1e12 {
            return Ok((f64::NEG_INFINITY, true));
        }
    }
    reach = 1.0;
    while d(hi) < 0.0 {
        if s.hi.is_finite() {
            return Ok((s.hi, true));
        }
        reach *= 2.0;
        hi = lo.max(est.theta1) + reach;
        if reach > 1e12 {
            return Ok((f64::INFINITY, true));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if d(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi), false))
}

/// Generation dynamics of moment-matching agents: generation t matches the
/// moments of all histories from generations 0..t-1, then plays the
/// indifference cutoff of its fitted model.
pub fn mom_dynamics(
    family: &FeasibleFamily,
    game: &StageGame,
    truth: &TrueMoments,
    c0: f64,
    generations: usize,
) -> Result<MomTrace> {
    if !game.linear_in_second_draw() || game.direction() != Direction::Benefit {
        return Err(Error::Unsupported(
            "moment-matching dynamics need a benefit-direction game whose continuation payoff is linear in the second draw"
                .into(),
        ));
    }
    if !family.support().interior(c0) {
        return Err(invalid(format!("initial cutoff {c0} must be interior to the first-draw support")));
    }
    if generations == 0 {
        return Err(invalid("need at least one generation"));
    }
    let mut cutoffs = vec![c0];
    let mut records = Vec::with_capacity(generations);
    for t in 1..=generations {
        let est = mom_estimate(family, truth, &CensoringSpec::equal(cutoffs.clone())?)?;
        let (cutoff, clamped) = mom_cutoff(family, game, &est)?;
        records.push(MomRecord { t, theta1: est.theta1, theta2: est.theta2, cutoff, clamped });
        cutoffs.push(cutoff);
    }
    Ok(MomTrace { c0, records })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{run_generations, trend, Environment, Trend};
    use crate::gauss::legendre_integral;
    use crate::inference::{pseudo_true, pseudo_true_multi};
    use crate::stage_game::TrueModel;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn swr0() -> StageGame {
        StageGame::search_with_recall(0.0).unwrap()
    }

    #[test]
    fn gaussian_matches_pseudo_true() {
        let fam = FeasibleFamily::gaussian(1.0, 0.5).unwrap();
        let est = mom_estimate(&fam, &TrueMoments { m1: 0.0, m2: 0.0 }, &CensoringSpec::single(1.0).unwrap()).unwrap();
        assert_eq!(est.theta1, 0.0);
        assert_relative_eq!(est.theta2, -0.1437999854695892, epsilon = 1e-9);
    }

    #[test]
    fn gumbel_example() {
        let alpha = -0.5;
        let fam = FeasibleFamily::gumbel(alpha).unwrap();
        let est = mom_estimate(&fam, &TrueMoments { m1: 1.0, m2: 1.0 }, &CensoringSpec::single(1.0).unwrap()).unwrap();
        assert_eq!(est.theta1, 1.0);
        let want = 1.0 / (1.0 - alpha / 2.0 - alpha * (1.0 + (-1f64).exp()) / 2.0);
        assert_relative_eq!(want, 0.62815259568798549, epsilon = 1e-15);
        assert_relative_eq!(est.theta2, want, epsilon = 1e-9);
        // the censored mean against direct quadrature of the conditional mean
        let direct = legendre_integral(|x: f64| fam.conditional2_mean(1.0, 2.0, x) * (-x).exp(), 0.0, 1.0, 40)
            / fam.marginal1_cdf(1.0, 1.0);
        assert_relative_eq!(fam.censored2_mean(1.0, 2.0, 1.0).unwrap(), direct, epsilon = 1e-13);
    }

    #[test]
    fn beta_censored_mean_against_density_quadrature() {
        let fam = FeasibleFamily::beta().unwrap();
        for (t1, t2, c) in [(0.7, 2.0, 0.5), (3.0, 0.4, 0.9), (1.0, 1.0, 0.2)] {
            // direct integral against the Beta(t1, 1) density; t1 < 1 has an
            // integrable endpoint singularity, so split near zero
            let dens = |x: f64| fam.conditional2_mean(t1, t2, x) * t1 * x.powf(t1 - 1.0);
            let mut direct = 0.0;
            let mut a = 0.0;
            let mut b = c * 1e-12;
            while b < c {
                direct += legendre_integral(dens, a, b, 30);
                a = b;
                b = (b * 4.0).min(c);
            }
            direct += legendre_integral(dens, a, c, 30);
            direct /= c.powf(t1);
            assert_relative_eq!(fam.censored2_mean(t1, t2, c).unwrap(), direct, epsilon = 1e-8);
        }
    }

    #[test]
    fn beta_monotone_in_cutoff() {
        let fam = FeasibleFamily::beta().unwrap();
        let truth = TrueMoments { m1: 0.5, m2: 0.5 };
        let lo = mom_estimate(&fam, &truth, &CensoringSpec::single(0.3).unwrap()).unwrap();
        let hi = mom_estimate(&fam, &truth, &CensoringSpec::single(0.7).unwrap()).unwrap();
        assert_eq!(lo.theta1, hi.theta1);
        assert!(lo.theta2 < hi.theta2);
    }

    #[test]
    fn unattainable_moments() {
        let fam = FeasibleFamily::beta().unwrap();
        let spec = CensoringSpec::single(0.5).unwrap();
        assert!(matches!(mom_estimate(&fam, &TrueMoments { m1: 1.2, m2: 0.5 }, &spec), Err(Error::NoSolution(_))));
        assert!(matches!(mom_estimate(&fam, &TrueMoments { m1: 0.5, m2: 0.0 }, &spec), Err(Error::NoSolution(_))));
        let g = FeasibleFamily::gumbel(-1.0).unwrap();
        assert!(matches!(mom_estimate(&g, &TrueMoments { m1: -1.0, m2: 1.0 }, &spec), Err(Error::NoSolution(_))));
    }

    #[test]
    fn invalid_families() {
        assert!(FeasibleFamily::gumbel(0.5).is_err());
        assert!(FeasibleFamily::gaussian(1.0, 0.0).is_err());
    }

    #[test]
    fn gaussian_dynamics_match_baseline() {
        let t = TrueModel::standard();
        let fam = FeasibleFamily::gaussian(1.0, 0.5).unwrap();
        let tr = mom_dynamics(&fam, &swr0(), &TrueMoments { m1: 0.0, m2: 0.0 }, 0.0, 15).unwrap();
        let base = run_generations(Environment::Baseline, &swr0(), &t, 0.5, 0.0, 15).unwrap();
        for (a, b) in tr.records.iter().zip(&base.records) {
            assert_relative_eq!(a.theta2, b.mu2, epsilon = 1e-9);
            assert_relative_eq!(a.cutoff, b.cutoff, epsilon = 1e-9);
        }
    }

    #[test]
    fn gumbel_dynamics_monotone() {
        let fam = FeasibleFamily::gumbel(-0.5).unwrap();
        let tr = mom_dynamics(&fam, &swr0(), &TrueMoments { m1: 1.0, m2: 1.0 }, 1.0, 10).unwrap();
        assert_eq!(trend(&tr.theta2(), 0.0), Some(Trend::Decreasing));
        assert_eq!(trend(&tr.cutoffs(), 0.0), Some(Trend::Decreasing));
        // generation 1: x = theta2 (1.25 + 0.5 e^-x)
        let r = tr.records[0];
        assert_relative_eq!(r.cutoff, r.theta2 * (1.25 + 0.5 * (-r.cutoff).exp()), epsilon = 1e-12);
        assert!(!tr.records.iter().any(|r| r.clamped));
    }

    #[test]
    fn zero_bias_is_flat() {
        let fam = FeasibleFamily::gaussian(1.0, 1e-9).unwrap();
        let tr = mom_dynamics(&fam, &swr0(), &TrueMoments { m1: 0.0, m2: 0.0 }, 0.5, 8).unwrap();
        for r in &tr.records {
            assert!(r.theta2.abs() < 1e-8 && r.cutoff.abs() < 1e-8);
        }
    }

    #[test]
    fn clamps_at_support_edge() {
        // a large waiting cost makes stopping optimal at every draw
        let fam = FeasibleFamily::gumbel(-0.5).unwrap();
        let game = StageGame::wait_cost(swr0(), 50.0).unwrap();
        let (c, clamped) = mom_cutoff(&fam, &game, &MomEstimate { theta1: 1.0, theta2: 1.0 }).unwrap();
        assert_eq!((c, clamped), (0.0, true));
        assert!(mom_dynamics(&fam, &StageGame::search_with_recall(0.5).unwrap(), &TrueMoments { m1: 1.0, m2: 1.0 }, 1.0, 3)
            .is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn gaussian_mom_is_pseudo_true(c in -2.5f64..2.5, gamma in 0.05f64..1.5, m1 in -1.0f64..1.0, m2 in -1.0f64..1.0) {
            let fam = FeasibleFamily::gaussian(1.0, gamma).unwrap();
            let t = TrueModel::new(m1, m2, 1.0).unwrap();
            let est = mom_estimate(&fam, &TrueMoments { m1, m2 }, &CensoringSpec::single(c).unwrap()).unwrap();
            prop_assert!((est.theta2 - pseudo_true(&t, c, gamma).unwrap().mu2_star).abs() < 1e-9);
            let spec = CensoringSpec::equal(vec![c, c + 1.0]).unwrap();
            let est = mom_estimate(&fam, &TrueMoments { m1, m2 }, &spec).unwrap();
            prop_assert!((est.theta2 - pseudo_true_multi(&t, &spec, gamma).unwrap().mu2_star).abs() < 1e-9);
        }

        #[test]
        fn monotone_in_cutoff(fam_idx in 0usize..3, a in 0.1f64..0.8, gap in 0.05f64..0.15) {
            let (fam, truth, lo, hi) = match fam_idx {
                0 => (FeasibleFamily::gaussian(1.0, 0.5).unwrap(), TrueMoments { m1: 0.0, m2: 0.0 }, 4.0 * a - 2.0, 4.0 * (a + gap) - 2.0),
                1 => (FeasibleFamily::gumbel(-0.7).unwrap(), TrueMoments { m1: 1.0, m2: 1.0 }, 3.0 * a, 3.0 * (a + gap)),
                _ => (FeasibleFamily::beta().unwrap(), TrueMoments { m1: 0.4, m2: 0.6 }, a, a + gap),
            };
            let e1 = mom_estimate(&fam, &truth, &CensoringSpec::single(lo).unwrap()).unwrap();
            let e2 = mom_estimate(&fam, &truth, &CensoringSpec::single(hi).unwrap()).unwrap();
            prop_assert_eq!(e1.theta1, e2.theta1);
            prop_assert!(e1.theta2 < e2.theta2);
        }

        #[test]
        fn mean_parameterized_pessimism(c in 0.05f64..5.0, alpha in -1.0f64..-0.05, m in 0.2f64..3.0) {
            // gumbel parameters are the unconditional means
            let fam = FeasibleFamily::gumbel(alpha).unwrap();
            let est = mom_estimate(&fam, &TrueMoments { m1: m, m2: m }, &CensoringSpec::single(c).unwrap()).unwrap();
            prop_assert!(est.theta2 < m);
        }
    }
}
