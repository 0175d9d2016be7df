//! Agents arriving one at a time: grid posteriors over the fundamentals,
//! myopic cutoffs under posterior uncertainty, and seeded simulation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::stage_game::{continuation_value, optimal_cutoff, Direction, StageGame, SubjectiveModel, TrueModel};

/// The first-draw mean: either known to the agent or a grid axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FirstAxis {
    Known(f64),
    Grid(Vec<f64>),
}

/// Discrete posterior over (mu1,) mu2, stored as normalized log weights
/// (log-sum-exp of zero). Nodes outside the support carry -inf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorGrid {
    axis1: FirstAxis,
    axis2: Vec<f64>,
    /// Row-major over (axis1, axis2).
    log_weights: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("need a finite interval lo < hi and at least 2 nodes, got [{lo}, {hi}] x {n}")));
    }
    Ok((0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect())
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn ln_norm_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

impl PosteriorGrid {
    /// Flat prior over mu2 on [lo, hi] with mu1 known.
    pub fn flat_known_mu1(mu1: f64, lo: f64, hi: f64, nodes: usize) -> Result<Self> {
        let axis2 = linspace(lo, hi, nodes)?;
        let n = axis2.len();
        Self::from_log_weights(FirstAxis::Known(mu1), axis2, vec![0.0; n])
    }

    /// Flat prior on a rectangle over (mu1, mu2).
    pub fn flat_2d(range1: (f64, f64), range2: (f64, f64), nodes: usize) -> Result<Self> {
        let axis1 = linspace(range1.0, range1.1, nodes)?;
        let axis2 = linspace(range2.0, range2.1, nodes)?;
        Self::from_log_weights(FirstAxis::Grid(axis1), axis2, vec![0.0; nodes * nodes])
    }

    /// Flat prior on the parallelogram of the rectangle where
    /// mu2 + gamma mu1 lies in `band`: edges of slope -gamma.
    pub fn parallelogram(range1: (f64, f64), range2: (f64, f64), band: (f64, f64), gamma: f64, nodes: usize) -> Result<Self> {
        let axis1 = linspace(range1.0, range1.1, nodes)?;
        let axis2 = linspace(range2.0, range2.1, nodes)?;
        let lw = axis1
            .iter()
            .flat_map(|&m1| {
                axis2.iter().map(move |&m2| {
                    let s = m2 + gamma * m1;
                    if s >= band.0 && s <= band.1 {
                        0.0
                    } else {
                        f64::NEG_INFINITY
                    }
                })
            })
            .collect();
        Self::from_log_weights(FirstAxis::Grid(axis1), axis2, lw)
    }

    /// All mass on one node.
    pub fn point_mass(mu1: f64, mu2: f64) -> Self {
        Self { axis1: FirstAxis::Known(mu1), axis2: vec![mu2], log_weights: vec![0.0] }
    }

    pub fn from_log_weights(axis1: FirstAxis, axis2: Vec<f64>, log_weights: Vec<f64>) -> Result<Self> {
        let rows = match &axis1 {
            FirstAxis::Known(_) => 1,
            FirstAxis::Grid(a) => a.len(),
        };
        if axis2.is_empty() || log_weights.len() != rows * axis2.len() {
            return Err(invalid("log weights must match the grid shape"));
        }
        let mut g = Self { axis1, axis2, log_weights };
        g.normalize()?;
        Ok(g)
    }

    fn normalize(&mut self) -> Result<()> {
        let z = log_sum_exp(&self.log_weights);
        if !z.is_finite() {
            return Err(Error::NoIdentification("posterior has no mass on the grid".into()));
        }
        self.log_weights.iter_mut().for_each(|w| *w -= z);
        Ok(())
    }

    pub fn axis1(&self) -> &FirstAxis {
        &self.axis1
    }

    pub fn axis2(&self) -> &[f64] {
        &self.axis2
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// (mu1, mu2, weight) for every node.
    pub fn nodes(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        let n2 = self.axis2.len();
        self.log_weights.iter().enumerate().map(move |(k, lw)| {
            let m1 = match &self.axis1 {
                FirstAxis::Known(m) => *m,
                FirstAxis::Grid(a) => a[k / n2],
            };
            (m1, self.axis2[k % n2], lw.exp())
        })
    }

    pub fn mean(&self) -> (f64, f64) {
        self.nodes().fold((0.0, 0.0), |(a, b), (m1, m2, w)| (a + w * m1, b + w * m2))
    }

    /// Marginal posterior over axis2.
    pub fn marginal2(&self) -> Vec<f64> {
        let n2 = self.axis2.len();
        let mut out = vec![0.0; n2];
        for (k, lw) in self.log_weights.iter().enumerate() {
            out[k % n2] += lw.exp();
        }
        out
    }

    /// Node of largest weight, as (mu1, mu2).
    pub fn mode(&self) -> (f64, f64) {
        let (k, _) = self
            .log_weights
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (k, &w)| if w > best.1 { (k, w) } else { best });
        let n2 = self.axis2.len();
        let m1 = match &self.axis1 {
            FirstAxis::Known(m) => *m,
            FirstAxis::Grid(a) => a[k / n2],
        };
        (m1, self.axis2[k % n2])
    }

    /// Whether the mu2 mode sits on an edge of the grid.
    pub fn mode_on_edge(&self) -> bool {
        let m2 = self.mode().1;
        m2 == self.axis2[0] || m2 == *self.axis2.last().unwrap()
    }

    /// Posterior mass of mu2 inside [lo, hi].
    pub fn mass2_within(&self, lo: f64, hi: f64) -> f64 {
        self.axis2.iter().zip(self.marginal2()).filter(|(m, _)| **m >= lo && **m <= hi).map(|(_, w)| w).sum()
    }
}

/// One agent's record: first draw and, if the agent continued, second draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub x1: f64,
    pub x2: Option<f64>,
}

/// Adds the log-likelihood of one history at every node and renormalizes.
/// With mu1 known, a censored history leaves the posterior unchanged.
pub fn posterior_update(grid: &PosteriorGrid, history: &History, gamma: f64, sd: f64) -> Result<PosteriorGrid> {
    let mut out = grid.clone();
    update_in_place(&mut out, history, gamma, sd)?;
    Ok(out)
}

fn update_in_place(grid: &mut PosteriorGrid, h: &History, gamma: f64, sd: f64) -> Result<()> {
    if !(sd > 0.0) {
        return Err(invalid(format!("sd must be positive, got {sd}")));
    }
    let known = matches!(grid.axis1, FirstAxis::Known(_));
    if known && h.x2.is_none() {
        return Ok(());
    }
    let n2 = grid.axis2.len();
    for k in 0..grid.log_weights.len() {
        if grid.log_weights[k] == f64::NEG_INFINITY {
            continue;
        }
        let m1 = match &grid.axis1 {
            FirstAxis::Known(m) => *m,
            FirstAxis::Grid(a) => a[k / n2],
        };
        let mut ll = if known { 0.0 } else { ln_norm_pdf(h.x1, m1, sd) };
        if let Some(x2) = h.x2 {
            ll += ln_norm_pdf(x2, grid.axis2[k % n2] - gamma * (h.x1 - m1), sd);
        }
        grid.log_weights[k] += ll;
    }
    grid.normalize()
}

/// Weights below this (relative to the total) are skipped when mixing
/// continuation values.
const NEGLIGIBLE: f64 = 1e-14;

/// Cutoff of an agent who maximizes expected payoff under the posterior
/// mixture of feasible models.
pub fn myopic_cutoff(grid: &PosteriorGrid, game: &StageGame, gamma: f64, sd: f64) -> Result<f64> {
    if game.affine_continuation().is_some() {
        // The continuation is affine in the conditional mean, which is
        // affine in (mu1, mu2): the mixture acts like its mean.
        let (m1, m2) = grid.mean();
        return optimal_cutoff(game, &SubjectiveModel::with_sd(m1, m2, sd, gamma));
    }
    let nodes: Vec<(SubjectiveModel, f64)> = grid
        .nodes()
        .filter(|(_, _, w)| *w > NEGLIGIBLE)
        .map(|(m1, m2, w)| (SubjectiveModel::with_sd(m1, m2, sd, gamma), w))
        .collect();
    let gap = |x: f64| -> Result<f64> {
        let mut cont = 0.0;
        for (m, w) in &nodes {
            cont += w * continuation_value(game, x, m)?;
        }
        let d = game.u1(x) - cont;
        Ok(if game.direction() == Direction::Benefit { d } else { -d })
    };
    let (m1, m2) = grid.mean();
    let center = 0.5 * (m1 + m2);
    let (mut lo, mut hi) = (center - sd, center + sd);
    let mut step = sd;
    while gap(lo)? >= 0.0 {
        step *= 2.0;
        lo = center - step;
        if step > 1e6 * sd {
            return Err(Error::NoRoot { lo, hi });
        }
    }
    step = sd;
    while gap(hi)? <= 0.0 {
        step *= 2.0;
        hi = center + step;
        if step > 1e6 * sd {
            return Err(Error::NoRoot { lo, hi });
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if gap(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub t: usize,
    /// Cutoff used in round t, set before the round's draws are seen.
    pub cutoff: f64,
    pub x1: f64,
    pub x2: Option<f64>,
    /// Posterior mean after the round's update.
    pub posterior_mean1: f64,
    pub posterior_mean2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialRun {
    pub seed: u64,
    pub scenario: String,
    pub rounds: Vec<RoundRecord>,
    /// Set when the final mu2 mode sits on the grid edge, a sign that the
    /// prior support excludes the steady state.
    pub support_flag: bool,
    pub final_posterior: PosteriorGrid,
}

impl SequentialRun {
    pub fn last(&self) -> &RoundRecord {
        self.rounds.last().expect("at least one round")
    }

    pub fn histories(&self) -> Vec<History> {
        self.rounds.iter().map(|r| History { x1: r.x1, x2: r.x2 }).collect()
    }
}

/// Draws for round `t` of run `seed`. Each round has its own stream, so any
/// round can be replayed without the ones before it.
pub fn round_draws(truth: &TrueModel, seed: u64, t: usize) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    let z1: f64 = StandardNormal.sample(&mut rng);
    let z2: f64 = StandardNormal.sample(&mut rng);
    (truth.mu1_true + truth.sd * z1, truth.mu2_true + truth.sd * z2)
}

fn observes_second(direction: Direction, x1: f64, c: f64) -> bool {
    match direction {
        Direction::Benefit => x1 <= c,
        Direction::Cost => x1 >= c,
    }
}

fn check_run(rounds: usize, gamma: f64) -> Result<()> {
    if rounds == 0 {
        return Err(invalid("need at least one round"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(invalid(format!("gamma must be positive, got {gamma}")));
    }
    Ok(())
}

fn run(
    game: &StageGame,
    truth: &TrueModel,
    gamma: f64,
    prior: &PosteriorGrid,
    rounds: usize,
    seed: u64,
    clamp: Option<(f64, f64)>,
) -> Result<SequentialRun> {
    check_run(rounds, gamma)?;
    let mut post = prior.clone();
    let mut out = Vec::with_capacity(rounds);
    for t in 1..=rounds {
        let mut c = myopic_cutoff(&post, game, gamma, truth.sd)?;
        if let Some((lo, hi)) = clamp {
            c = c.clamp(lo, hi);
        }
        let (x1, x2) = round_draws(truth, seed, t);
        let h = History { x1, x2: observes_second(game.direction(), x1, c).then_some(x2) };
        update_in_place(&mut post, &h, gamma, truth.sd)?;
        let (m1, m2) = post.mean();
        out.push(RoundRecord { t, cutoff: c, x1, x2: h.x2, posterior_mean1: m1, posterior_mean2: m2 });
    }
    Ok(SequentialRun {
        seed,
        scenario: String::new(),
        rounds: out,
        support_flag: post.mode_on_edge(),
        final_posterior: post,
    })
}

/// One seeded run of `rounds` agents, each updating on every earlier
/// history and then playing its myopic cutoff.
pub fn simulate_sequential(
    game: &StageGame,
    truth: &TrueModel,
    gamma: f64,
    prior: &PosteriorGrid,
    rounds: usize,
    seed: u64,
) -> Result<SequentialRun> {
    run(game, truth, gamma, prior, rounds, seed, None)
}

/// As `simulate_sequential`, with every cutoff forced into [lo, hi].
pub fn simulate_sequential_clamped(
    game: &StageGame,
    truth: &TrueModel,
    gamma: f64,
    prior: &PosteriorGrid,
    rounds: usize,
    seed: u64,
    bounds: (f64, f64),
) -> Result<SequentialRun> {
    run(game, truth, gamma, prior, rounds, seed, Some(bounds))
}

/// Independent runs for each seed, in parallel; results in seed order.
pub fn simulate_many(
    game: &StageGame,
    truth: &TrueModel,
    gamma: f64,
    prior: &PosteriorGrid,
    rounds: usize,
    seeds: &[u64],
) -> Result<Vec<SequentialRun>> {
    seeds.par_iter().map(|&s| simulate_sequential(game, truth, gamma, prior, rounds, s)).collect()
}

/// Cutoff an agent in round `t` would use given the stored histories of
/// rounds before t.
pub fn replay_cutoff(
    prior: &PosteriorGrid,
    histories: &[History],
    game: &StageGame,
    gamma: f64,
    sd: f64,
) -> Result<f64> {
    let mut post = prior.clone();
    for h in histories {
        update_in_place(&mut post, h, gamma, sd)?;
    }
    myopic_cutoff(&post, game, gamma, sd)
}

pub fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::steady_state;
    use crate::inference::pseudo_true;
    use crate::stage_game::objective_cutoff;
    use approx::assert_relative_eq;

    fn swr(q: f64) -> StageGame {
        StageGame::search_with_recall(q).unwrap()
    }

    #[test]
    fn weights_normalized() {
        let g = PosteriorGrid::flat_known_mu1(0.0, -3.0, 1.0, 401).unwrap();
        assert_relative_eq!(g.nodes().map(|n| n.2).sum::<f64>(), 1.0, epsilon = 1e-12);
        let p = PosteriorGrid::parallelogram((-1.0, 1.0), (-2.0, 2.0), (-0.5, 0.5), 0.5, 41).unwrap();
        assert_relative_eq!(p.nodes().map(|n| n.2).sum::<f64>(), 1.0, epsilon = 1e-12);
        for (m1, m2, w) in p.nodes() {
            let s = m2 + 0.5 * m1;
            assert!(w == 0.0 || (-0.5 - 1e-12..=0.5 + 1e-12).contains(&s));
        }
        assert!(PosteriorGrid::parallelogram((-1.0, 1.0), (-2.0, 2.0), (5.0, 6.0), 0.5, 41).is_err());
    }

    #[test]
    fn update_examples() {
        let g = PosteriorGrid::flat_known_mu1(0.0, -3.0, 1.0, 401).unwrap();
        let same = posterior_update(&g, &History { x1: 2.0, x2: None }, 0.5, 1.0).unwrap();
        assert_eq!(same, g);
        let moved = posterior_update(&g, &History { x1: 0.0, x2: Some(0.37) }, 0.5, 1.0).unwrap();
        assert_relative_eq!(moved.mode().1, 0.37, epsilon = 0.005 + 1e-12);
        let mut p = g.clone();
        for _ in 0..1000 {
            p = posterior_update(&p, &History { x1: 0.0, x2: Some(0.3) }, 0.5, 1.0).unwrap();
        }
        assert!((p.mode().1 - 0.3).abs() <= 0.01 + 1e-12);
        assert!(p.mass2_within(0.3 - 0.1, 0.3 + 0.1) > 0.99);
        // the two-dimensional grid learns mu1 from censored histories too
        let g2 = PosteriorGrid::flat_2d((-1.0, 1.0), (-1.0, 1.0), 21).unwrap();
        let u = posterior_update(&g2, &History { x1: 0.8, x2: None }, 0.5, 1.0).unwrap();
        assert!(u.mean().0 > 0.0);
    }

    #[test]
    fn myopic_examples() {
        let m = SubjectiveModel::with_sd(0.2, -0.4, 1.0, 0.5);
        for q in [0.0, 0.4] {
            let c = myopic_cutoff(&PosteriorGrid::point_mass(0.2, -0.4), &swr(q), 0.5, 1.0).unwrap();
            assert_relative_eq!(c, optimal_cutoff(&swr(q), &m).unwrap(), epsilon = 1e-9);
        }
        let axis = vec![-1.0, -0.2, 0.6];
        let lw: Vec<f64> = [0.2f64, 0.5, 0.3].iter().map(|w| w.ln()).collect();
        let g = PosteriorGrid::from_log_weights(FirstAxis::Known(0.0), axis, lw).unwrap();
        let want = (0.2 * -1.0 + 0.5 * -0.2 + 0.3 * 0.6) / 1.5;
        assert_relative_eq!(myopic_cutoff(&g, &swr(0.0), 0.5, 1.0).unwrap(), want, epsilon = 1e-12);
        let sym = PosteriorGrid::from_log_weights(FirstAxis::Known(0.0), vec![-0.7, 0.7], vec![0.0, 0.0]).unwrap();
        assert!(myopic_cutoff(&sym, &swr(0.0), 0.5, 1.0).unwrap().abs() < 1e-12);
    }

    #[test]
    fn mixture_cutoff_for_convex_game() {
        // brute force: scan for the sign change of the mixed indifference gap
        let g = PosteriorGrid::from_log_weights(FirstAxis::Known(0.0), vec![-1.0, 0.5], vec![0.3f64.ln(), 0.7f64.ln()])
            .unwrap();
        let game = swr(0.5);
        let c = myopic_cutoff(&g, &game, 0.5, 1.0).unwrap();
        let gap = |x: f64| {
            x - 0.3 * continuation_value(&game, x, &SubjectiveModel::with_sd(0.0, -1.0, 1.0, 0.5)).unwrap()
                - 0.7 * continuation_value(&game, x, &SubjectiveModel::with_sd(0.0, 0.5, 1.0, 0.5)).unwrap()
        };
        assert!(gap(c - 1e-7) < 0.0 && gap(c + 1e-7) > 0.0);
    }

    #[test]
    fn predictable_and_deterministic() {
        let t = TrueModel::standard();
        let prior = PosteriorGrid::flat_known_mu1(0.0, -3.0, 1.0, 201).unwrap();
        let a = simulate_sequential(&swr(0.0), &t, 0.5, &prior, 60, 7).unwrap();
        let b = simulate_sequential(&swr(0.0), &t, 0.5, &prior, 60, 7).unwrap();
        assert_eq!(a, b);
        let hs = a.histories();
        for t_idx in [0usize, 10, 59] {
            let c = replay_cutoff(&prior, &hs[..t_idx], &swr(0.0), 0.5, 1.0).unwrap();
            assert_eq!(c.to_bits(), a.rounds[t_idx].cutoff.to_bits());
        }
        for r in &a.rounds {
            assert_eq!(r.x2.is_some(), r.x1 <= r.cutoff);
        }
        let (x1, x2) = round_draws(&t, 7, 30);
        assert_eq!((a.rounds[29].x1, a.rounds[29].x2.unwrap_or(x2)), (x1, x2));
    }

    #[test]
    fn unbiased_limit() {
        let t = TrueModel::standard();
        let prior = PosteriorGrid::flat_known_mu1(0.0, -3.0, 1.0, 401).unwrap();
        let r = simulate_sequential(&swr(0.0), &t, 1e-6, &prior, 2000, 3).unwrap();
        assert!(r.last().posterior_mean2.abs() < 0.1);
        assert!((r.last().cutoff - objective_cutoff(&swr(0.0), &t).unwrap()).abs() < 0.1);
    }

    #[test]
    fn clamped_cutoffs_bound_posterior() {
        let t = TrueModel::standard();
        let prior = PosteriorGrid::flat_known_mu1(0.0, -3.0, 1.0, 401).unwrap();
        let (cl, ch) = (-0.6, 0.4);
        let r = simulate_sequential_clamped(&swr(0.0), &t, 0.5, &prior, 4000, 11, (cl, ch)).unwrap();
        let lo = pseudo_true(&t, cl, 0.5).unwrap().mu2_star;
        let hi = pseudo_true(&t, ch, 0.5).unwrap().mu2_star;
        assert!(r.final_posterior.mass2_within(lo - 0.1, hi + 0.1) > 0.99);
    }

    #[test]
    fn excluded_steady_state_is_flagged() {
        let t = TrueModel::standard();
        let prior = PosteriorGrid::flat_known_mu1(0.0, 0.0, 1.0, 101).unwrap();
        let r = simulate_sequential(&swr(0.0), &t, 0.5, &prior, 1500, 5).unwrap();
        assert!(r.support_flag);
        let ss = steady_state(&swr(0.0), &t, 0.5, 1e-10, 1000).unwrap();
        assert!(ss.mu2_inf < 0.0);
    }

    #[test]
    fn two_dimensional_run() {
        let t = TrueModel::standard();
        let ss = steady_state(&swr(0.0), &t, 0.5, 1e-10, 1000).unwrap();
        let prior = PosteriorGrid::parallelogram((-1.0, 1.0), (-2.5, 1.0), (-2.5, 1.0), 0.5, 61).unwrap();
        let r = simulate_sequential(&swr(0.0), &t, 0.5, &prior, 3000, 21).unwrap();
        assert!((r.last().cutoff - ss.c_inf).abs() < 0.15, "{}", r.last().cutoff);
        assert!(r.last().posterior_mean1.abs() < 0.1);
    }
}
