//! Two-period stopping games, subjective continuation values and the
//! indifference cutoff.
//!
//! Benefit-direction games stop when the first draw is above the cutoff;
//! cost-direction games stop when it is below, and are solved by mirroring
//! draws and means into a benefit-direction game.

use std::cell::RefCell;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gauss::{
    gauss_expectation, gaussian_region_integral, norm_cdf, norm_pdf, truncated_lower_moments,
    truncated_upper_moments, GaussianSpec, DEFAULT_NODES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Benefit,
    Cost,
}

pub type FirstPayoff = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type SecondPayoff = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// User-supplied payoff pair. Only constructible through [`Tabulated::new`],
/// which runs the regularity probe.
#[derive(Clone)]
pub struct Tabulated {
    u1: FirstPayoff,
    u2: SecondPayoff,
    direction: Direction,
}

impl fmt::Debug for Tabulated {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tabulated").field("direction", &self.direction).finish_non_exhaustive()
    }
}

/// Box on which the regularity probe samples the payoffs.
#[derive(Debug, Clone, Copy)]
pub struct ProbeBox {
    pub center1: f64,
    pub center2: f64,
    pub sd: f64,
}

impl Default for ProbeBox {
    fn default() -> Self {
        Self { center1: 0.0, center2: 0.0, sd: 1.0 }
    }
}

const PROBE_POINTS: usize = 41;

impl Tabulated {
    pub fn new(u1: FirstPayoff, u2: SecondPayoff, direction: Direction) -> Result<Self> {
        Self::with_probe(u1, u2, direction, ProbeBox::default())
    }

    pub fn with_probe(
        u1: FirstPayoff,
        u2: SecondPayoff,
        direction: Direction,
        probe: ProbeBox,
    ) -> Result<Self> {
        let t = Self { u1, u2, direction };
        let (benefit, box_) = match direction {
            Direction::Benefit => (t.clone(), probe),
            Direction::Cost => (
                t.mirrored(),
                ProbeBox { center1: -probe.center1, center2: -probe.center2, sd: probe.sd },
            ),
        };
        benefit.probe(box_, direction)?;
        Ok(t)
    }

    fn mirrored(&self) -> Self {
        let u1 = self.u1.clone();
        let u2 = self.u2.clone();
        let direction = match self.direction {
            Direction::Benefit => Direction::Cost,
            Direction::Cost => Direction::Benefit,
        };
        Self {
            u1: Arc::new(move |x| u1(-x)),
            u2: Arc::new(move |x1, x2| u2(-x1, -x2)),
            direction,
        }
    }

    /// Grid check of the benefit-direction regularity conditions. `original`
    /// is only used to phrase the diagnostic for mirrored cost games.
    fn probe(&self, b: ProbeBox, original: Direction) -> Result<()> {
        let axis = |center: f64| -> Vec<f64> {
            (0..PROBE_POINTS)
                .map(|i| center + 5.0 * b.sd * (i as f64 - 20.0) / 20.0)
                .collect()
        };
        let xs1 = axis(b.center1);
        let xs2 = axis(b.center2);
        let flip = |x: f64| if original == Direction::Cost { -x } else { x };
        let fail = |msg: String| Err(Error::AssumptionViolated(msg));

        for &x1 in &xs1 {
            if !(self.u1)(x1).is_finite() {
                return fail(format!("u1 not finite at x1={}", flip(x1)));
            }
            for &x2 in &xs2 {
                if !(self.u2)(x1, x2).is_finite() {
                    return fail(format!("u2 not finite at ({}, {})", flip(x1), flip(x2)));
                }
            }
        }
        let sense = if original == Direction::Cost { "decreasing" } else { "increasing" };
        for w in xs1.windows(2) {
            if (self.u1)(w[1]) <= (self.u1)(w[0]) {
                return fail(format!(
                    "(a) u1 not strictly {sense} between x1={} and x1={}",
                    flip(w[0]),
                    flip(w[1])
                ));
            }
        }
        for &x1 in &xs1 {
            for w in xs2.windows(2) {
                if (self.u2)(x1, w[1]) <= (self.u2)(x1, w[0]) {
                    return fail(format!(
                        "(a) u2 not strictly {sense} in x2 at x1={}, between x2={} and x2={}",
                        flip(x1),
                        flip(w[0]),
                        flip(w[1])
                    ));
                }
            }
        }
        for w in xs1.windows(2) {
            let du1 = (self.u1)(w[1]) - (self.u1)(w[0]);
            for &x2 in &xs2 {
                let du2 = ((self.u2)(w[1], x2) - (self.u2)(w[0], x2)).abs();
                if du1 <= du2 {
                    return fail(format!(
                        "(b) |u1 change| {du1:.6} <= |u2 change| {du2:.6} between x1={} and x1={} at x2={}",
                        flip(w[0]),
                        flip(w[1]),
                        flip(x2)
                    ));
                }
            }
        }
        let mut pos = false;
        let mut neg = false;
        for &x1 in &xs1 {
            for &x2 in &xs2 {
                let d = (self.u1)(x1) - (self.u2)(x1, x2);
                pos |= d > 0.0;
                neg |= d < 0.0;
            }
        }
        if !(pos && neg) {
            return fail(format!(
                "(c) u1 - u2 never {} on the probe grid",
                if pos { "negative" } else { "positive" }
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum StageGame {
    /// u1 = x1, u2 = q max(x1, x2) + (1 - q) x2.
    SearchWithRecall { q: f64 },
    /// The base game with `kappa` subtracted from the continuation payoff.
    WaitCost { base: Box<StageGame>, kappa: f64 },
    /// u1 = -x1, u2 = -x2; stop on low draws.
    CostDraws,
    Tabulated(Tabulated),
}

impl StageGame {
    pub fn search_with_recall(q: f64) -> Result<Self> {
        let g = StageGame::SearchWithRecall { q };
        g.validate()?;
        Ok(g)
    }

    pub fn wait_cost(base: StageGame, kappa: f64) -> Result<Self> {
        let g = StageGame::WaitCost { base: Box::new(base), kappa };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StageGame::SearchWithRecall { q } => {
                if !(0.0..1.0).contains(q) {
                    return Err(invalid(format!("recall probability q must lie in [0,1), got {q}")));
                }
            }
            StageGame::WaitCost { base, kappa } => {
                if !(*kappa >= 0.0 && kappa.is_finite()) {
                    return Err(invalid(format!("waiting cost must be finite and >= 0, got {kappa}")));
                }
                if base.direction() != Direction::Benefit {
                    return Err(invalid("waiting cost wraps benefit-direction games only"));
                }
                base.validate()?;
            }
            StageGame::CostDraws | StageGame::Tabulated(_) => {}
        }
        Ok(())
    }

    pub fn direction(&self) -> Direction {
        match self {
            StageGame::SearchWithRecall { .. } | StageGame::WaitCost { .. } => Direction::Benefit,
            StageGame::CostDraws => Direction::Cost,
            StageGame::Tabulated(t) => t.direction,
        }
    }

    pub fn u1(&self, x1: f64) -> f64 {
        match self {
            StageGame::SearchWithRecall { .. } => x1,
            StageGame::WaitCost { base, .. } => base.u1(x1),
            StageGame::CostDraws => -x1,
            StageGame::Tabulated(t) => (t.u1)(x1),
        }
    }

    pub fn u2(&self, x1: f64, x2: f64) -> f64 {
        match self {
            StageGame::SearchWithRecall { q } => q * x1.max(x2) + (1.0 - q) * x2,
            StageGame::WaitCost { base, kappa } => base.u2(x1, x2) - kappa,
            StageGame::CostDraws => -x2,
            StageGame::Tabulated(t) => (t.u2)(x1, x2),
        }
    }

    /// The benefit-direction game faced after mirroring draws (x -> -x).
    /// Benefit games are returned unchanged.
    pub fn to_benefit(&self) -> StageGame {
        match self.direction() {
            Direction::Benefit => self.clone(),
            Direction::Cost => match self {
                StageGame::CostDraws => StageGame::SearchWithRecall { q: 0.0 },
                StageGame::Tabulated(t) => StageGame::Tabulated(t.mirrored()),
                _ => unreachable!("only CostDraws and Tabulated can be cost-direction"),
            },
        }
    }

    /// When the continuation value is `offset + slope * conditional_mean`,
    /// returns (offset, slope). Lets mixtures over means collapse to the mean.
    pub fn affine_continuation(&self) -> Option<(f64, f64)> {
        match self {
            StageGame::SearchWithRecall { q } if *q == 0.0 => Some((0.0, 1.0)),
            StageGame::WaitCost { base, kappa } => base.affine_continuation().map(|(a, b)| (a - kappa, b)),
            StageGame::CostDraws => Some((0.0, -1.0)),
            _ => None,
        }
    }

    /// Whether u2 is linear in x2, as required by the moment-matching dynamics.
    pub fn linear_in_second_draw(&self) -> bool {
        self.affine_continuation().is_some()
    }
}

/// Feasible subjective model: X1 ~ N(mu1, var1), X2 | x1 ~ N(mu2 - gamma (x1 - mu1), var2).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveModel {
    pub mu1: f64,
    pub mu2: f64,
    pub var1: f64,
    pub var2: f64,
    pub gamma: f64,
}

impl SubjectiveModel {
    pub fn new(mu1: f64, mu2: f64, var1: f64, var2: f64, gamma: f64) -> Self {
        Self { mu1, mu2, var1, var2, gamma }
    }

    /// Common dispersion in both periods.
    pub fn with_sd(mu1: f64, mu2: f64, sd: f64, gamma: f64) -> Self {
        Self::new(mu1, mu2, sd * sd, sd * sd, gamma)
    }

    pub fn conditional_mean(&self, x1: f64) -> f64 {
        self.mu2 - self.gamma * (x1 - self.mu1)
    }

    pub fn marginal1(&self) -> GaussianSpec {
        GaussianSpec { mean: self.mu1, sd: self.var1.sqrt() }
    }

    fn mirrored(&self) -> Self {
        Self { mu1: -self.mu1, mu2: -self.mu2, ..*self }
    }

    fn check(&self) -> Result<()> {
        if !(self.var1 > 0.0 && self.var2 > 0.0) {
            return Err(invalid(format!(
                "model variances must be positive, got var1={} var2={}",
                self.var1, self.var2
            )));
        }
        if !(self.mu1.is_finite() && self.mu2.is_finite() && self.gamma.is_finite()) {
            return Err(invalid("model means and gamma must be finite"));
        }
        Ok(())
    }
}

/// Objective draw-generating process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub mu1_true: f64,
    pub mu2_true: f64,
    pub sd: f64,
    #[serde(default)]
    pub gamma_true: f64,
}

impl TrueModel {
    pub fn new(mu1_true: f64, mu2_true: f64, sd: f64) -> Result<Self> {
        Self::with_gamma(mu1_true, mu2_true, sd, 0.0)
    }

    pub fn with_gamma(mu1_true: f64, mu2_true: f64, sd: f64, gamma_true: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite()) {
            return Err(invalid(format!("true sd must be positive, got {sd}")));
        }
        if !(mu1_true.is_finite() && mu2_true.is_finite() && gamma_true.is_finite()) {
            return Err(invalid("true means and gamma must be finite"));
        }
        Ok(Self { mu1_true, mu2_true, sd, gamma_true })
    }

    pub fn standard() -> Self {
        Self { mu1_true: 0.0, mu2_true: 0.0, sd: 1.0, gamma_true: 0.0 }
    }

    pub fn marginal1(&self) -> GaussianSpec {
        GaussianSpec { mean: self.mu1_true, sd: self.sd }
    }

    /// The true process written as a feasible model.
    pub fn as_model(&self) -> SubjectiveModel {
        SubjectiveModel::with_sd(self.mu1_true, self.mu2_true, self.sd, self.gamma_true)
    }

    /// A biased agent's model at given means, with the true dispersion.
    pub fn biased(&self, mu1: f64, mu2: f64, gamma: f64) -> SubjectiveModel {
        SubjectiveModel::with_sd(mu1, mu2, self.sd, gamma)
    }
}

/// E[max(k, X)] for X ~ N(m, s^2).
pub fn expected_max(k: f64, m: f64, s: f64) -> f64 {
    let z = (k - m) / s;
    k * norm_cdf(z) + m * norm_cdf(-z) + s * norm_pdf(z)
}

/// Subjective expected continuation payoff after first draw `x1`.
pub fn continuation_value(game: &StageGame, x1: f64, model: &SubjectiveModel) -> Result<f64> {
    model.check()?;
    game.validate()?;
    continuation_unchecked(game, x1, model)
}

fn continuation_unchecked(game: &StageGame, x1: f64, model: &SubjectiveModel) -> Result<f64> {
    let m = model.conditional_mean(x1);
    match game {
        StageGame::SearchWithRecall { q } => {
            let tail = if *q > 0.0 { q * expected_max(x1, m, model.var2.sqrt()) } else { 0.0 };
            Ok(tail + (1.0 - q) * m)
        }
        StageGame::WaitCost { base, kappa } => Ok(continuation_unchecked(base, x1, model)? - kappa),
        StageGame::CostDraws => Ok(-m),
        StageGame::Tabulated(t) => {
            let g = GaussianSpec { mean: m, sd: model.var2.sqrt() };
            gauss_expectation(|x2| (t.u2)(x1, x2), &g, DEFAULT_NODES)
        }
    }
}

enum Crossing {
    Root(f64),
    /// u1 - continuation > 0 on the whole search range.
    AlwaysStop,
    /// u1 - continuation < 0 on the whole search range.
    NeverStop,
}

/// Root of D(x) = u1(x) - continuation(x) for a benefit-direction game.
fn benefit_crossing(game: &StageGame, model: &SubjectiveModel) -> Result<Crossing> {
    let d = |x: f64| -> Result<f64> { Ok(game.u1(x) - continuation_unchecked(game, x, model)?) };
    let scale = model.var1.max(model.var2).sqrt();
    let center = 0.5 * (model.mu1 + model.mu2);
    let reach = 50.0 * scale + 0.5 * (model.mu1 - model.mu2).abs();

    let mut step = scale;
    let mut lo = center - step;
    let mut d_lo = d(lo)?;
    while d_lo > 0.0 {
        if center - lo >= reach {
            return Ok(Crossing::AlwaysStop);
        }
        step *= 2.0;
        lo = (center - step).max(center - reach);
        d_lo = d(lo)?;
    }
    step = scale;
    let mut hi = center + step;
    let mut d_hi = d(hi)?;
    while d_hi < 0.0 {
        if hi - center >= reach {
            return Ok(Crossing::NeverStop);
        }
        step *= 2.0;
        hi = (center + step).min(center + reach);
        d_hi = d(hi)?;
    }
    if d_lo == 0.0 {
        return Ok(Crossing::Root(lo));
    }
    if d_hi == 0.0 {
        return Ok(Crossing::Root(hi));
    }
    // Bisect until the bracket cannot shrink any further.
    loop {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = d(mid)?;
        if v == 0.0 {
            return Ok(Crossing::Root(mid));
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Crossing::Root(0.5 * (lo + hi)))
}

/// Subjectively optimal cutoff. Benefit games stop iff x1 > c; cost games
/// stop iff x1 < c.
pub fn optimal_cutoff(game: &StageGame, model: &SubjectiveModel) -> Result<f64> {
    model.check()?;
    game.validate()?;
    match game.direction() {
        Direction::Benefit => match benefit_crossing(game, model)? {
            Crossing::Root(c) => Ok(c),
            _ => Err(no_root(model)),
        },
        Direction::Cost => optimal_cutoff(&game.to_benefit(), &model.mirrored()).map(|c| -c),
    }
}

fn no_root(model: &SubjectiveModel) -> Error {
    let scale = model.var1.max(model.var2).sqrt();
    let center = 0.5 * (model.mu1 + model.mu2);
    let reach = 50.0 * scale + 0.5 * (model.mu1 - model.mu2).abs();
    Error::NoRoot { lo: center - reach, hi: center + reach }
}

/// Objectively optimal cutoff under the true process; +-inf when one action
/// dominates everywhere.
pub fn objective_cutoff(game: &StageGame, truth: &TrueModel) -> Result<f64> {
    game.validate()?;
    let model = truth.as_model();
    match game.direction() {
        Direction::Benefit => Ok(match benefit_crossing(game, &model)? {
            Crossing::Root(c) => c,
            Crossing::AlwaysStop => f64::NEG_INFINITY,
            Crossing::NeverStop => f64::INFINITY,
        }),
        Direction::Cost => {
            let mirrored = model.mirrored();
            Ok(match benefit_crossing(&game.to_benefit(), &mirrored)? {
                Crossing::Root(c) => -c,
                Crossing::AlwaysStop => f64::INFINITY,
                Crossing::NeverStop => f64::NEG_INFINITY,
            })
        }
    }
}

/// Integral over a region of the first-draw density of a fallible integrand.
fn region_integral<F>(f: F, g: &GaussianSpec, lo: f64, hi: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let err = RefCell::new(None);
    let v = gaussian_region_integral(
        |x| match f(x) {
            Ok(v) => v,
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        },
        g,
        lo,
        hi,
    );
    match err.into_inner() {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Expected payoff of the cutoff strategy `c` under `model`.
pub fn strategy_value(c: f64, game: &StageGame, model: &SubjectiveModel) -> Result<f64> {
    model.check()?;
    game.validate()?;
    if c.is_nan() {
        return Err(invalid("cutoff is NaN"));
    }
    match game.direction() {
        Direction::Benefit => benefit_strategy_value(c, game, model),
        Direction::Cost => benefit_strategy_value(-c, &game.to_benefit(), &model.mirrored()),
    }
}

fn benefit_strategy_value(c: f64, game: &StageGame, model: &SubjectiveModel) -> Result<f64> {
    let g = model.marginal1();
    let p_cont = g.cdf(c);
    let stop_part = if c == f64::INFINITY {
        0.0
    } else if first_payoff_is_identity(game) {
        let (m, _) = truncated_upper_moments(&g, c)?;
        (1.0 - p_cont) * m
    } else {
        region_integral(|x| Ok(game.u1(x)), &g, c, f64::INFINITY)?
    };
    let cont_part = if c == f64::NEG_INFINITY {
        0.0
    } else if let Some((offset, slope)) = game.affine_continuation() {
        let (m, _) = truncated_lower_moments(&g, c)?;
        p_cont * (offset + slope * model.conditional_mean(m))
    } else {
        region_integral(|x| continuation_unchecked(game, x, model), &g, f64::NEG_INFINITY, c)?
    };
    Ok(stop_part + cont_part)
}

fn first_payoff_is_identity(game: &StageGame) -> bool {
    match game {
        StageGame::SearchWithRecall { .. } => true,
        StageGame::WaitCost { base, .. } => first_payoff_is_identity(base),
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn swr(q: f64) -> StageGame {
        StageGame::search_with_recall(q).unwrap()
    }

    fn tabulated_swr(q: f64) -> StageGame {
        StageGame::Tabulated(
            Tabulated::new(
                Arc::new(|x| x),
                Arc::new(move |x1: f64, x2: f64| q * x1.max(x2) + (1.0 - q) * x2),
                Direction::Benefit,
            )
            .unwrap(),
        )
    }

    #[test]
    fn continuation_examples() {
        let m = SubjectiveModel::with_sd(0.0, 0.0, 1.0, 0.5);
        for x1 in [-2.0, 0.0, 0.7, 3.0] {
            assert_relative_eq!(continuation_value(&swr(0.0), x1, &m).unwrap(), -0.5 * x1, epsilon = 1e-15);
            assert_relative_eq!(
                continuation_value(&StageGame::CostDraws, x1, &m).unwrap(),
                0.5 * x1,
                epsilon = 1e-15
            );
        }
        assert_relative_eq!(continuation_value(&swr(0.5), 0.0, &m).unwrap(), 0.1994711, epsilon = 1e-7);
    }

    #[test]
    fn expected_max_against_quadrature() {
        for (k, mu, s) in [(0.5, 0.0, 1.0), (-1.0, 0.3, 2.0), (2.0, -1.0, 0.5)] {
            let g = GaussianSpec::new(mu, s).unwrap();
            let q = gaussian_region_integral(|_| k, &g, f64::NEG_INFINITY, k)
                + gaussian_region_integral(|x| x, &g, k, f64::INFINITY);
            assert_relative_eq!(expected_max(k, mu, s), q, epsilon = 1e-9);
        }
    }

    #[test]
    fn tabulated_matches_closed_form() {
        let m = SubjectiveModel::new(0.2, -0.3, 1.3, 0.8, 0.4);
        for q in [0.0, 0.3, 0.8] {
            for x1 in [-1.5, 0.0, 0.9] {
                let a = continuation_value(&swr(q), x1, &m).unwrap();
                let b = continuation_value(&tabulated_swr(q), x1, &m).unwrap();
                assert_relative_eq!(a, b, epsilon = 1e-4);
            }
            let ca = optimal_cutoff(&swr(q), &m).unwrap();
            let cb = optimal_cutoff(&tabulated_swr(q), &m).unwrap();
            assert_relative_eq!(ca, cb, epsilon = 1e-4);
        }
    }

    #[test]
    fn probe_rejects_irregular_payoffs() {
        let decreasing = Tabulated::new(Arc::new(|x| -x), Arc::new(|_, x2| x2), Direction::Benefit);
        match decreasing {
            Err(Error::AssumptionViolated(msg)) => assert!(msg.starts_with("(a)"), "{msg}"),
            other => panic!("expected probe failure, got {other:?}"),
        }
        let steep = Tabulated::new(Arc::new(|x| x), Arc::new(|x1, x2| x2 + 2.0 * x1), Direction::Benefit);
        match steep {
            Err(Error::AssumptionViolated(msg)) => assert!(msg.starts_with("(b)"), "{msg}"),
            other => panic!("expected probe failure, got {other:?}"),
        }
        let dominated = Tabulated::new(Arc::new(|x| x + 100.0), Arc::new(|_, x2| x2), Direction::Benefit);
        match dominated {
            Err(Error::AssumptionViolated(msg)) => assert!(msg.starts_with("(c)"), "{msg}"),
            other => panic!("expected probe failure, got {other:?}"),
        }
        let nan = Tabulated::new(Arc::new(|x| x), Arc::new(|_, x2: f64| x2.ln()), Direction::Benefit);
        assert!(nan.is_err());
        // cost payoffs pass the mirrored probe
        assert!(Tabulated::new(Arc::new(|x| -x), Arc::new(|_, x2| -x2), Direction::Cost).is_ok());
        assert!(Tabulated::new(Arc::new(|x| x), Arc::new(|_, x2| x2), Direction::Cost).is_err());
    }

    #[test]
    fn cutoff_examples() {
        for g in [0.1, 0.5, 2.0] {
            let c = optimal_cutoff(&swr(0.0), &SubjectiveModel::with_sd(0.0, 0.0, 1.0, g)).unwrap();
            assert!(c.abs() < 1e-12);
        }
        let c = optimal_cutoff(&swr(0.0), &SubjectiveModel::with_sd(0.0, 1.0, 1.0, 0.5)).unwrap();
        assert_relative_eq!(c, 1.0 / 1.5, epsilon = 1e-12);
        let c = optimal_cutoff(&StageGame::CostDraws, &SubjectiveModel::with_sd(0.0, 0.0, 1.0, 0.5)).unwrap();
        assert!(c.abs() < 1e-12);
        // cost cutoff increases in mu2 and is the mirror of the benefit cutoff
        let m = SubjectiveModel::with_sd(0.3, 0.8, 1.0, 0.5);
        let cc = optimal_cutoff(&StageGame::CostDraws, &m).unwrap();
        let cb = optimal_cutoff(&swr(0.0), &SubjectiveModel::with_sd(-0.3, -0.8, 1.0, 0.5)).unwrap();
        assert_relative_eq!(cc, -cb, epsilon = 1e-14);
        let cc_hi = optimal_cutoff(&StageGame::CostDraws, &SubjectiveModel::with_sd(0.3, 1.0, 1.0, 0.5)).unwrap();
        assert!(cc_hi > cc);
    }

    #[test]
    fn invalid_inputs() {
        assert!(StageGame::search_with_recall(1.0).is_err());
        assert!(StageGame::search_with_recall(-0.1).is_err());
        assert!(StageGame::wait_cost(swr(0.0), -1.0).is_err());
        assert!(StageGame::wait_cost(StageGame::CostDraws, 1.0).is_err());
        let bad = SubjectiveModel::new(0.0, 0.0, 1.0, 0.0, 0.5);
        assert!(continuation_value(&swr(0.0), 0.0, &bad).is_err());
    }

    #[test]
    fn no_root_without_bias_in_flat_game() {
        // gamma = 0 with u1 - u2 constant sign: the subjective solver reports no root.
        let t = StageGame::Tabulated(
            Tabulated::with_probe(
                Arc::new(|x| x),
                Arc::new(|x1: f64, x2: f64| 0.5 * x1 + 0.1 * x2 + 1000.0),
                Direction::Benefit,
                ProbeBox { center1: 2000.0, center2: 0.0, sd: 1.0 },
            )
            .unwrap(),
        );
        let m = SubjectiveModel::with_sd(0.0, 0.0, 1.0, 0.0);
        assert!(matches!(optimal_cutoff(&t, &m), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn objective_cutoff_examples() {
        assert!(objective_cutoff(&swr(0.0), &TrueModel::standard()).unwrap().abs() < 1e-12);
        let t = TrueModel::new(0.0, -10.0, 1.0).unwrap();
        assert_relative_eq!(objective_cutoff(&swr(0.0), &t).unwrap(), -10.0, epsilon = 1e-10);
        let w = StageGame::wait_cost(swr(0.0), 10.0).unwrap();
        assert_relative_eq!(objective_cutoff(&w, &TrueModel::standard()).unwrap(), -10.0, epsilon = 1e-10);
        // a tabulated game where stopping always wins returns -inf
        let always = StageGame::Tabulated(
            Tabulated::with_probe(
                Arc::new(|x| x),
                Arc::new(|x1: f64, x2: f64| 0.5 * x1 + 0.01 * x2 - 100.0),
                Direction::Benefit,
                ProbeBox { center1: -200.0, center2: 0.0, sd: 1.0 },
            )
            .unwrap(),
        );
        assert_eq!(objective_cutoff(&always, &TrueModel::standard()).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn strategy_value_examples() {
        let m = SubjectiveModel::with_sd(0.0, 0.0, 1.0, 0.5);
        let g = swr(0.0);
        assert!(strategy_value(f64::INFINITY, &g, &m).unwrap().abs() < 1e-15);
        assert!(strategy_value(f64::NEG_INFINITY, &g, &m).unwrap().abs() < 1e-15);
        let v = strategy_value(0.0, &g, &m).unwrap();
        assert_relative_eq!(v, norm_pdf(0.0) * 1.5, epsilon = 1e-14);
        assert_relative_eq!(v, 0.5984, epsilon = 1e-4);
    }

    #[test]
    fn strategy_value_closed_and_numeric_paths_agree() {
        let m = SubjectiveModel::new(0.4, -0.2, 1.5, 0.7, 0.6);
        for c in [-2.0, -0.3, 0.0, 1.1, f64::INFINITY, f64::NEG_INFINITY] {
            let a = strategy_value(c, &swr(0.0), &m).unwrap();
            let b = strategy_value(c, &tabulated_swr(0.0), &m).unwrap();
            assert_relative_eq!(a, b, epsilon = 1e-9);
        }
        // cost game mirrors the benefit game
        let mc = SubjectiveModel::new(-0.4, 0.2, 1.5, 0.7, 0.6);
        for c in [-1.0, 0.5] {
            let cost = strategy_value(c, &StageGame::CostDraws, &mc).unwrap();
            let ben = strategy_value(-c, &swr(0.0), &m).unwrap();
            assert_relative_eq!(cost, ben, epsilon = 1e-13);
        }
    }

    #[test]
    fn single_peaked_at_cutoff() {
        for q in [0.0, 0.4, 0.8] {
            let m = SubjectiveModel::with_sd(0.1, -0.4, 1.2, 0.7);
            let game = swr(q);
            let star = optimal_cutoff(&game, &m).unwrap();
            let vstar = strategy_value(star, &game, &m).unwrap();
            let mut prev = strategy_value(star - 4.0, &game, &m).unwrap();
            for k in 1..=40 {
                let c = star - 4.0 + 0.1 * k as f64;
                if (c - star).abs() < 1e-9 {
                    continue;
                }
                let v = strategy_value(c, &game, &m).unwrap();
                assert!(v < vstar);
                if c < star {
                    assert!(v > prev, "q={q} c={c}");
                }
                prev = v;
            }
            let mut prev = vstar;
            for k in 1..=40 {
                let v = strategy_value(star + 0.1 * k as f64, &game, &m).unwrap();
                assert!(v < prev, "q={q}");
                prev = v;
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn cutoff_monotone_and_lipschitz(
            q in 0.0f64..0.9, gamma in 0.05f64..2.0, mu1 in -2.0f64..2.0,
            a in -3.0f64..3.0, d in 0.01f64..2.0
        ) {
            let game = swr(q);
            let lo = optimal_cutoff(&game, &SubjectiveModel::with_sd(mu1, a, 1.0, gamma)).unwrap();
            let hi = optimal_cutoff(&game, &SubjectiveModel::with_sd(mu1, a + d, 1.0, gamma)).unwrap();
            prop_assert!(hi > lo);
            prop_assert!(hi - lo <= d / gamma + 1e-8);
            prop_assert!(hi - lo <= d / (1.0 + gamma) + 1e-8);
            if q == 0.0 {
                prop_assert!(((hi - lo) - d / (1.0 + gamma)).abs() < 1e-9);
            }
        }

        #[test]
        fn translation_identity(
            q in 0.0f64..0.9, gamma in 0.05f64..2.0, mu1 in -2.0f64..2.0,
            mu2 in -2.0f64..2.0, anchor in -2.0f64..2.0
        ) {
            let game = swr(q);
            let a = optimal_cutoff(&game, &SubjectiveModel::with_sd(mu1, mu2, 1.0, gamma)).unwrap();
            let b = optimal_cutoff(
                &game,
                &SubjectiveModel::with_sd(anchor, mu2 + gamma * (mu1 - anchor), 1.0, gamma),
            ).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn recall_raises_cutoff(
            q in 0.0f64..0.8, dq in 0.01f64..0.19, gamma in 0.05f64..2.0, mu2 in -2.0f64..2.0
        ) {
            let m = SubjectiveModel::with_sd(0.0, mu2, 1.0, gamma);
            let lo = optimal_cutoff(&swr(q), &m).unwrap();
            let hi = optimal_cutoff(&swr(q + dq), &m).unwrap();
            prop_assert!(hi > lo);
        }

        #[test]
        fn wait_cost_lowers_cutoff(kappa in 0.01f64..3.0, gamma in 0.05f64..2.0, mu2 in -2.0f64..2.0) {
            let m = SubjectiveModel::with_sd(0.0, mu2, 1.0, gamma);
            let base = optimal_cutoff(&swr(0.3), &m).unwrap();
            let w = optimal_cutoff(&StageGame::wait_cost(swr(0.3), kappa).unwrap(), &m).unwrap();
            prop_assert!(w < base);
        }
    }
}
