//! Belief iteration map, steady states and generation-by-generation
//! learning dynamics with welfare accounting.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gauss::truncated_lower_moments;
use crate::inference::{
    neglecter_cutoff, pseudo_true_mean_var, pseudo_true_multi, pseudo_true_ref_dependence,
    CensoringSpec, PseudoTrueEstimate,
};
use crate::stage_game::{
    objective_cutoff, optimal_cutoff, strategy_value, Direction, StageGame, SubjectiveModel, TrueModel,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub t: usize,
    pub mu1: f64,
    pub mu2: f64,
    pub var2: Option<f64>,
    pub cutoff: f64,
    pub welfare_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTrace {
    /// Cutoff used by generation 0.
    pub c0: f64,
    pub records: Vec<GenerationRecord>,
}

impl GenerationTrace {
    pub fn mu2(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mu2).collect()
    }

    pub fn cutoffs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cutoff).collect()
    }

    pub fn var2(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.var2).collect()
    }

    pub fn welfare(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.welfare_loss).collect()
    }

    pub fn last(&self) -> &GenerationRecord {
        self.records.last().expect("trace has at least one generation")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Increasing,
    Decreasing,
    Constant,
}

/// Direction of a weakly monotone sequence, or None if it changes direction.
/// Steps smaller than `tol` count as ties.
pub fn trend(xs: &[f64], tol: f64) -> Option<Trend> {
    let mut up = false;
    let mut down = false;
    for w in xs.windows(2) {
        let d = w[1] - w[0];
        up |= d > tol;
        down |= d < -tol;
    }
    match (up, down) {
        (true, true) => None,
        (true, false) => Some(Trend::Increasing),
        (false, true) => Some(Trend::Decreasing),
        (false, false) => Some(Trend::Constant),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyState {
    pub mu2_inf: f64,
    pub c_inf: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    /// Each generation pools the histories of every earlier generation.
    Baseline,
    /// Each generation sees only its immediate predecessors.
    Auxiliary,
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

/// Cutoff of a biased agent who knows mu1 and believes `mu2`.
pub fn belief_cutoff(game: &StageGame, truth: &TrueModel, mu2: f64, gamma: f64) -> Result<f64> {
    optimal_cutoff(game, &truth.biased(truth.mu1_true, mu2, gamma))
}

/// Pseudo-true mu2 from pooled predecessor populations, respecting the
/// game's censoring direction.
pub fn pooled_mu2(game: &StageGame, truth: &TrueModel, spec: &CensoringSpec, gamma: f64) -> Result<f64> {
    match game.direction() {
        Direction::Benefit => Ok(pseudo_true_multi(truth, spec, gamma)?.mu2_star),
        Direction::Cost => {
            let mirrored = TrueModel { mu1_true: -truth.mu1_true, mu2_true: -truth.mu2_true, ..*truth };
            let flipped = CensoringSpec::new(
                spec.cutoffs().iter().map(|c| -c).collect(),
                spec.weights().to_vec(),
            )?;
            Ok(-pseudo_true_multi(&mirrored, &flipped, gamma)?.mu2_star)
        }
    }
}

fn mu2_at(game: &StageGame, truth: &TrueModel, c: f64, gamma: f64) -> Result<f64> {
    pooled_mu2(game, truth, &CensoringSpec::single(c)?, gamma)
}

/// One-generation belief update: the inference drawn from histories of
/// predecessors who all hold belief `mu2`.
pub fn iteration_map(mu2: f64, game: &StageGame, truth: &TrueModel, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    let c = belief_cutoff(game, truth, mu2, gamma)?;
    mu2_at(game, truth, c, gamma)
}

fn fixed_point<F>(map: F, start: f64, tol: f64, max_iter: usize) -> Result<(f64, usize, f64)>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut m = start;
    let mut weight = 1.0;
    let mut prev_residual = f64::INFINITY;
    for it in 0..max_iter {
        let next = map(m)?;
        let residual = (next - m).abs();
        if !residual.is_finite() {
            return Err(Error::NonContraction { residual, detail: format!("diverged from start {start}") });
        }
        if residual <= tol {
            return Ok((m, it, residual));
        }
        if residual >= prev_residual {
            weight *= 0.5;
        }
        prev_residual = residual;
        m += weight * (next - m);
    }
    Err(Error::NonContraction {
        residual: prev_residual,
        detail: format!("no convergence from start {start} within {max_iter} iterations"),
    })
}

/// Fixed point of the iteration map, with uniqueness checked from two
/// distant starts.
pub fn steady_state(
    game: &StageGame,
    truth: &TrueModel,
    gamma: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SteadyState> {
    check_gamma(gamma)?;
    let map = |m: f64| iteration_map(m, game, truth, gamma);
    let (mu2_inf, iterations, residual) = fixed_point(map, truth.mu2_true, tol, max_iter)?;
    for start in [truth.mu2_true - 5.0 * truth.sd, truth.mu2_true + 5.0 * truth.sd] {
        let (other, _, _) = fixed_point(map, start, tol, max_iter)?;
        if (other - mu2_inf).abs() > 10.0 * tol {
            return Err(Error::NonContraction {
                residual: (other - mu2_inf).abs(),
                detail: format!("start {start} reached {other}, main run reached {mu2_inf}"),
            });
        }
    }
    Ok(SteadyState {
        mu2_inf,
        c_inf: belief_cutoff(game, truth, mu2_inf, gamma)?,
        iterations,
        residual,
    })
}

/// Objective payoff shortfall of cutoff `c` relative to the objectively
/// optimal cutoff.
pub fn welfare_loss(c: f64, game: &StageGame, truth: &TrueModel) -> Result<f64> {
    Welfare::new(game, truth)?.loss(c)
}

struct Welfare<'a> {
    game: &'a StageGame,
    model: SubjectiveModel,
    best: f64,
}

impl<'a> Welfare<'a> {
    fn new(game: &'a StageGame, truth: &TrueModel) -> Result<Self> {
        let model = truth.as_model();
        let c_star = objective_cutoff(game, truth)?;
        let best = strategy_value(c_star, game, &model)?;
        Ok(Self { game, model, best })
    }

    fn loss(&self, c: f64) -> Result<f64> {
        Ok((self.best - strategy_value(c, self.game, &self.model)?).max(0.0))
    }
}

fn record(t: usize, truth: &TrueModel, mu2: f64, var2: Option<f64>, cutoff: f64, w: &Welfare) -> Result<GenerationRecord> {
    Ok(GenerationRecord { t, mu1: truth.mu1_true, mu2, var2, cutoff, welfare_loss: w.loss(cutoff)? })
}

/// Deterministic large-generation dynamics from generation-0 cutoff `c0`.
pub fn run_generations(
    env: Environment,
    game: &StageGame,
    truth: &TrueModel,
    gamma: f64,
    c0: f64,
    generations: usize,
) -> Result<GenerationTrace> {
    check_gamma(gamma)?;
    check_generations(generations)?;
    let welfare = Welfare::new(game, truth)?;
    let mut cutoffs = vec![c0];
    let mut records = Vec::with_capacity(generations);
    for t in 1..=generations {
        let mu2 = match env {
            Environment::Auxiliary => mu2_at(game, truth, cutoffs[t - 1], gamma)?,
            Environment::Baseline => pooled_mu2(game, truth, &CensoringSpec::equal(cutoffs.clone())?, gamma)?,
        };
        let c = belief_cutoff(game, truth, mu2, gamma)?;
        records.push(record(t, truth, mu2, None, c, &welfare)?);
        cutoffs.push(c);
    }
    Ok(GenerationTrace { c0, records })
}

fn check_generations(generations: usize) -> Result<()> {
    if generations == 0 {
        return Err(invalid("need at least one generation"));
    }
    Ok(())
}

/// Auxiliary-environment dynamics when agents also estimate both variances.
pub fn run_generations_mean_var(
    game: &StageGame,
    truth: &TrueModel,
    gamma: f64,
    c0: f64,
    generations: usize,
) -> Result<GenerationTrace> {
    check_gamma(gamma)?;
    check_generations(generations)?;
    if game.direction() != Direction::Benefit {
        return Err(Error::Unsupported("variance-estimating dynamics for cost-direction games".into()));
    }
    let welfare = Welfare::new(game, truth)?;
    let mut c = c0;
    let mut records = Vec::with_capacity(generations);
    for t in 1..=generations {
        let est = pseudo_true_mean_var(truth, c, gamma)?;
        let var2 = est.var2_star.expect("mean-variance estimate has var2");
        let model = SubjectiveModel::new(truth.mu1_true, est.mu2_star, est.var1_star.unwrap(), var2, gamma);
        c = optimal_cutoff(game, &model)?;
        records.push(record(t, truth, est.mu2_star, Some(var2), c, &welfare)?);
    }
    Ok(GenerationTrace { c0, records })
}

// ---------------------------------------------------------------------------
// Society comparisons

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SocietyKind {
    /// Variances known; estimates the means.
    KnownVar,
    /// Estimates means and both variances.
    UnknownVar,
    /// A share `alpha` of every generation neglects selection.
    SelectionMix { alpha: f64 },
}

#[derive(Debug, Clone)]
pub struct Society {
    pub game: StageGame,
    pub kind: SocietyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedAssertion {
    pub name: String,
    /// None for a steady-state comparison.
    pub generation: Option<usize>,
    pub holds: bool,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub a: GenerationTrace,
    pub b: GenerationTrace,
    pub assertions: Vec<NamedAssertion>,
}

impl Comparison {
    pub fn all_hold(&self) -> bool {
        self.assertions.iter().all(|a| a.holds)
    }
}

fn selection_mix_trace(
    game: &StageGame,
    truth: &TrueModel,
    gamma: f64,
    alpha: f64,
    c0: f64,
    generations: usize,
) -> Result<GenerationTrace> {
    if game.direction() != Direction::Benefit {
        return Err(Error::Unsupported("selection-neglect mix for cost-direction games".into()));
    }
    let welfare = Welfare::new(game, truth)?;
    let neglect = neglecter_cutoff(truth, gamma, game)?;
    let mut c = c0;
    let mut records = Vec::with_capacity(generations);
    for t in 1..=generations {
        let spec = CensoringSpec::new(vec![neglect, c], vec![alpha, 1.0 - alpha])?;
        let mu2 = pseudo_true_multi(truth, &spec, gamma)?.mu2_star;
        c = belief_cutoff(game, truth, mu2, gamma)?;
        records.push(record(t, truth, mu2, None, c, &welfare)?);
    }
    Ok(GenerationTrace { c0, records })
}

fn society_trace(s: &Society, truth: &TrueModel, gamma: f64, c0: f64, generations: usize) -> Result<GenerationTrace> {
    match s.kind {
        SocietyKind::KnownVar => run_generations(Environment::Auxiliary, &s.game, truth, gamma, c0, generations),
        SocietyKind::UnknownVar => run_generations_mean_var(&s.game, truth, gamma, c0, generations),
        SocietyKind::SelectionMix { alpha } => {
            if !(0.0..1.0).contains(&alpha) {
                return Err(invalid(format!("neglecter share must lie in [0,1), got {alpha}")));
            }
            selection_mix_trace(&s.game, truth, gamma, alpha, c0, generations)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Curvature {
    Linear,
    Convex,
    Unknown,
}

fn curvature(game: &StageGame) -> Curvature {
    match game {
        StageGame::SearchWithRecall { q } if *q == 0.0 => Curvature::Linear,
        StageGame::SearchWithRecall { .. } => Curvature::Convex,
        StageGame::WaitCost { base, .. } => curvature(base),
        StageGame::CostDraws => Curvature::Linear,
        StageGame::Tabulated(_) => Curvature::Unknown,
    }
}

/// +1 if `a` payoff-dominates `b`, -1 if `b` dominates `a`, 0 if equal or
/// not comparable by construction.
fn dominance(a: &StageGame, b: &StageGame) -> i32 {
    fn parts(g: &StageGame) -> Option<(f64, f64)> {
        match g {
            StageGame::SearchWithRecall { q } => Some((*q, 0.0)),
            StageGame::WaitCost { base, kappa } => parts(base).map(|(q, k)| (q, k + kappa)),
            _ => None,
        }
    }
    match (parts(a), parts(b)) {
        (Some((qa, ka)), Some((qb, kb))) => {
            if qa >= qb && ka <= kb && (qa > qb || ka < kb) {
                1
            } else if qb >= qa && kb <= ka && (qb > qa || kb < ka) {
                -1
            } else {
                0
            }
        }
        _ => 0,
    }
}

fn alpha_of(kind: SocietyKind) -> Option<f64> {
    match kind {
        SocietyKind::KnownVar => Some(0.0),
        SocietyKind::SelectionMix { alpha } => Some(alpha),
        SocietyKind::UnknownVar => None,
    }
}

const TIE: f64 = 1e-12;

/// Paired auxiliary-environment traces for two societies sharing the truth
/// and the bias, with the ordering predicted for that pair checked per
/// generation.
pub fn compare_societies(
    a: &Society,
    b: &Society,
    truth: &TrueModel,
    gamma: f64,
    c0: f64,
    generations: usize,
) -> Result<Comparison> {
    let ta = society_trace(a, truth, gamma, c0, generations)?;
    let tb = society_trace(b, truth, gamma, c0, generations)?;
    let mut out = Vec::new();
    let mut per_gen = |name: &str, from: usize, pred: &dyn Fn(&GenerationRecord, &GenerationRecord) -> bool| {
        for (ra, rb) in ta.records.iter().zip(&tb.records).filter(|(r, _)| r.t >= from) {
            out.push(NamedAssertion { name: name.into(), generation: Some(ra.t), holds: pred(ra, rb) });
        }
    };

    let same_game = format!("{:?}", a.game) == format!("{:?}", b.game);
    match (a.kind, b.kind) {
        (SocietyKind::KnownVar, SocietyKind::UnknownVar) | (SocietyKind::UnknownVar, SocietyKind::KnownVar)
            if same_game =>
        {
            let sign = if a.kind == SocietyKind::KnownVar { 1.0 } else { -1.0 };
            per_gen("first_generation_means_equal", 1, &|ra, rb| ra.t != 1 || (ra.mu2 - rb.mu2).abs() <= TIE);
            match curvature(&a.game) {
                Curvature::Convex => {
                    per_gen("unknown_var_more_optimistic", 2, &|ra, rb| sign * (rb.mu2 - ra.mu2) > 0.0);
                    per_gen("unknown_var_higher_cutoff", 2, &|ra, rb| sign * (rb.cutoff - ra.cutoff) > 0.0);
                }
                Curvature::Linear => {
                    per_gen("means_equal", 2, &|ra, rb| (ra.mu2 - rb.mu2).abs() <= 1e-9);
                }
                Curvature::Unknown => {}
            }
        }
        (ka, kb) if ka == kb && ka == SocietyKind::KnownVar && !same_game => {
            let d = dominance(&a.game, &b.game);
            if d != 0 {
                let s = d as f64;
                per_gen("dominant_higher_cutoff", 1, &|ra, rb| s * (ra.cutoff - rb.cutoff) > 0.0);
                per_gen("dominant_more_optimistic", 2, &|ra, rb| s * (ra.mu2 - rb.mu2) > 0.0);
                let sa = steady_state(&a.game, truth, gamma, 1e-10, 10_000)?;
                let sb = steady_state(&b.game, truth, gamma, 1e-10, 10_000)?;
                out.push(NamedAssertion {
                    name: "dominant_steady_state_more_optimistic".into(),
                    generation: None,
                    holds: s * (sa.mu2_inf - sb.mu2_inf) > 0.0,
                });
                out.push(NamedAssertion {
                    name: "dominant_steady_state_higher_cutoff".into(),
                    generation: None,
                    holds: s * (sa.c_inf - sb.c_inf) > 0.0,
                });
            }
        }
        (ka, kb) if same_game => {
            if let (Some(alpha_a), Some(alpha_b)) = (alpha_of(ka), alpha_of(kb)) {
                if alpha_a != alpha_b {
                    let s = if alpha_b > alpha_a { 1.0 } else { -1.0 };
                    per_gen("more_neglect_more_optimistic", 2, &|ra, rb| s * (rb.mu2 - ra.mu2) > 0.0);
                    per_gen("more_neglect_higher_cutoff", 2, &|ra, rb| s * (rb.cutoff - ra.cutoff) > 0.0);
                }
            }
        }
        _ => {}
    }
    Ok(Comparison { a: ta, b: tb, assertions: out })
}

// ---------------------------------------------------------------------------
// Reference-dependence misattribution

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefDependenceSteadyState {
    pub mu1_inf: f64,
    pub mu2_inf: f64,
    pub c_inf: f64,
    pub iterations: usize,
    pub residual: f64,
    /// (mu2_true - mu2_inf) / (gamma (mu1_true - E[X1 | X1 <= c_inf])).
    pub distortion_factor: f64,
}

/// Self-consistent beliefs when the reference point equals the belief
/// itself. Iterates the belief update with step 1/(1+eta).
pub fn ref_dependence_steady_state(
    game: &StageGame,
    truth: &TrueModel,
    gamma: f64,
    eta: f64,
    tol: f64,
    max_iter: usize,
) -> Result<RefDependenceSteadyState> {
    check_gamma(gamma)?;
    if game.direction() != Direction::Benefit {
        return Err(Error::Unsupported("reference dependence for cost-direction games".into()));
    }
    let step = 1.0 / (1.0 + eta);
    let update = |m1: f64, m2: f64| -> Result<(f64, PseudoTrueEstimate)> {
        let c = optimal_cutoff(game, &truth.biased(m1, m2, gamma))?;
        Ok((c, pseudo_true_ref_dependence(truth, (m1, m2), eta, c, gamma)?))
    };
    let (mut m1, mut m2) = (truth.mu1_true, truth.mu2_true);
    for it in 0..max_iter {
        let (c, est) = update(m1, m2)?;
        let residual = (est.mu1_star - m1).abs().max((est.mu2_star - m2).abs());
        if residual <= tol {
            let e = truncated_lower_moments(&truth.marginal1(), c)?.0;
            return Ok(RefDependenceSteadyState {
                mu1_inf: m1,
                mu2_inf: m2,
                c_inf: c,
                iterations: it,
                residual,
                distortion_factor: (truth.mu2_true - m2) / (gamma * (truth.mu1_true - e)),
            });
        }
        m1 += step * (est.mu1_star - m1);
        m2 += step * (est.mu2_star - m2);
    }
    Err(Error::NonContraction { residual: f64::NAN, detail: "reference-dependence beliefs did not settle".into() })
}
