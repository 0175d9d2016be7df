//! One parameter set and runner per subcommand.

use clap::ValueEnum;
use gfstop_core::dynamics::{
    compare_societies, run_generations, run_generations_mean_var, steady_state, Environment, GenerationTrace,
    Society, SocietyKind,
};
use gfstop_core::inference::{
    kl_oracle_minimize, pseudo_true, pseudo_true_cost, pseudo_true_mean_var, ParameterSet,
};
use gfstop_core::mom::{mom_dynamics, mom_estimate, FeasibleFamily, TrueMoments};
use gfstop_core::montecarlo::{
    format_rational, freddy_urn, mc_pessimism_experiment, outcome_history_inference, UrnSpec,
};
use gfstop_core::multiperiod::{
    alpha_delta_classify, path_weight_sum, pseudo_true_l, LagWeights, Method, MultiPeriodSpec,
};
use gfstop_core::sequential::{simulate_many, PosteriorGrid};
use gfstop_core::stage_game::objective_cutoff;
use gfstop_core::{CensoringSpec, StageGame, TrueModel};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{params, LagRows, Real, StartPoint};
use crate::error::CliError;
use crate::output::{int, opt, r, Table};

type CoreResult<T> = gfstop_core::Result<T>;

pub trait Scenario: Serialize + DeserializeOwned + Default {
    /// Checks that need the field name; numeric preconditions are also
    /// enforced by the core routines.
    fn validate(&self) -> Result<(), CliError> {
        Ok(())
    }

    fn run(&self, seed: u64) -> CoreResult<Vec<Table>>;
}

fn require(ok: bool, field: &str, message: &str) -> Result<(), CliError> {
    if ok {
        Ok(())
    } else {
        Err(CliError::config(Some(field), message))
    }
}

fn non_empty<T>(xs: &[T], field: &str) -> Result<(), CliError> {
    require(!xs.is_empty(), field, "needs at least one value")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum GameKind {
    /// Search with recall; `q` is the recall weight.
    Recall,
    /// Costs instead of benefits; stop on low draws.
    CostDraws,
}

fn build_game(kind: GameKind, q: f64, wait_cost: f64) -> CoreResult<StageGame> {
    let base = match kind {
        GameKind::Recall => StageGame::search_with_recall(q)?,
        GameKind::CostDraws => StageGame::CostDraws,
    };
    if wait_cost == 0.0 {
        Ok(base)
    } else {
        StageGame::wait_cost(base, wait_cost)
    }
}

fn check_game(kind: GameKind, qs: &[f64]) -> Result<(), CliError> {
    require(kind == GameKind::Recall || qs.iter().all(|&q| q == 0.0), "q", "recall weight only applies to the recall game")
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Estimator {
    /// Means only, variances known.
    Means,
    /// Means and both variances.
    MeanVar,
    /// Cost-direction censoring: second draws seen when x1 >= c.
    Cost,
}

params! {
    PseudoTrueParams / PseudoTrueArgs {
        /// True first-period mean.
        mu1: f64 = 0.0,
        /// True second-period mean.
        mu2: f64 = 0.0,
        /// Common standard deviation.
        sd: f64 = 1.0,
        /// Believed reversal strength.
        gamma: f64 = 0.5,
        /// Cutoffs (comma separated; inf and -inf allowed).
        #[arg(value_delimiter = ',')]
        c: Vec<Real> = vec![Real(1.0)],
        #[arg(value_enum)]
        estimator: Estimator = Estimator::Means,
    }
}

impl Scenario for PseudoTrueParams {
    fn validate(&self) -> Result<(), CliError> {
        non_empty(&self.c, "c")
    }

    fn run(&self, _seed: u64) -> CoreResult<Vec<Table>> {
        let t = TrueModel::new(self.mu1, self.mu2, self.sd)?;
        let mut tab = Table::new("", &["c", "mu1_star", "mu2_star", "var1_star", "var2_star"]);
        for &Real(c) in &self.c {
            let est = match self.estimator {
                Estimator::Means => pseudo_true(&t, c, self.gamma)?,
                Estimator::MeanVar => pseudo_true_mean_var(&t, c, self.gamma)?,
                Estimator::Cost => pseudo_true_cost(&t, c, self.gamma)?,
            };
            tab.push(vec![r(c), r(est.mu1_star), r(est.mu2_star), opt(est.var1_star), opt(est.var2_star)]);
        }
        Ok(vec![tab])
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum OracleParameters {
    Means,
    MeansAndVars,
}

params! {
    KlOracleParams / KlOracleArgs {
        mu1: f64 = 0.0,
        mu2: f64 = 0.0,
        sd: f64 = 1.0,
        gamma: f64 = 0.5,
        #[arg(value_delimiter = ',')]
        c: Vec<Real> = vec![Real(1.0)],
        /// Parameters the divergence is minimized over.
        #[arg(value_enum)]
        parameters: OracleParameters = OracleParameters::Means,
    }
}

impl Scenario for KlOracleParams {
    fn validate(&self) -> Result<(), CliError> {
        non_empty(&self.c, "c")
    }

    fn run(&self, _seed: u64) -> CoreResult<Vec<Table>> {
        let t = TrueModel::new(self.mu1, self.mu2, self.sd)?;
        let mut tab = Table::new(
            "",
            &["c", "closed_mu1", "closed_mu2", "closed_var2", "oracle_mu1", "oracle_mu2", "oracle_var2"],
        );
        for &Real(c) in &self.c {
            let (closed, set) = match self.parameters {
                OracleParameters::Means => (pseudo_true(&t, c, self.gamma)?, ParameterSet::Means),
                OracleParameters::MeansAndVars => (pseudo_true_mean_var(&t, c, self.gamma)?, ParameterSet::MeansAndVars),
            };
            let oracle = kl_oracle_minimize(&t, c, self.gamma, set)?;
            tab.push(vec![
                r(c),
                r(closed.mu1_star),
                r(closed.mu2_star),
                opt(closed.var2_star),
                r(oracle.mu1_star),
                r(oracle.mu2_star),
                opt(oracle.var2_star),
            ]);
        }
        Ok(vec![tab])
    }
}

// ---------------------------------------------------------------------------

params! {
    SteadyStateParams / SteadyStateArgs {
        #[arg(value_enum)]
        game: GameKind = GameKind::Recall,
        /// Recall weights (comma separated).
        #[arg(value_delimiter = ',')]
        q: Vec<f64> = vec![0.0],
        /// Cost of waiting for the second draw.
        wait_cost: f64 = 0.0,
        /// Bias strengths (comma separated).
        #[arg(value_delimiter = ',')]
        gamma: Vec<f64> = vec![0.5],
        mu1: f64 = 0.0,
        mu2: f64 = 0.0,
        sd: f64 = 1.0,
        tol: f64 = 1e-12,
        max_iter: usize = 10_000,
    }
}

impl Scenario for SteadyStateParams {
    fn validate(&self) -> Result<(), CliError> {
        non_empty(&self.q, "q")?;
        non_empty(&self.gamma, "gamma")?;
        check_game(self.game, &self.q)?;
        require(self.tol > 0.0, "tol", "must be positive")
    }

    fn run(&self, _seed: u64) -> CoreResult<Vec<Table>> {
        let t = TrueModel::new(self.mu1, self.mu2, self.sd)?;
        let mut tab = Table::new(
            "",
            &["q", "gamma", "mu2_inf", "c_inf", "c_objective", "iterations", "residual"],
        );
        for &q in &self.q {
            let g = build_game(self.game, q, self.wait_cost)?;
            let c_obj = objective_cutoff(&g, &t)?;
            for &gamma in &self.gamma {
                let ss = steady_state(&g, &t, gamma, self.tol, self.max_iter)?;
                tab.push(vec![r(q), r(gamma), r(ss.mu2_inf), r(ss.c_inf), r(c_obj), int(ss.iterations), r(ss.residual)]);
            }
        }
        Ok(vec![tab])
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Env {
    /// Each generation pools all earlier generations.
    Baseline,
    /// Each generation sees only its immediate predecessor.
    Auxiliary,
    /// Auxiliary, with both variances also estimated.
    AuxiliaryMeanVar,
}

impl Env {
    fn label(self) -> &'static str {
        match self {
            Env::Baseline => "baseline",
            Env::Auxiliary => "auxiliary",
            Env::AuxiliaryMeanVar => "auxiliary_mean_var",
        }
    }
}

params! {
    DynamicsParams / DynamicsArgs {
        #[arg(value_enum)]
        game: GameKind = GameKind::Recall,
        #[arg(value_delimiter = ',')]
        q: Vec<f64> = vec![0.0],
        wait_cost: f64 = 0.0,
        #[arg(value_delimiter = ',')]
        gamma: Vec<f64> = vec![0.5],
        mu1: f64 = 0.0,
        mu2: f64 = 0.0,
        sd: f64 = 1.0,
        /// Generation-0 cutoffs: numbers, c_star, or c_inf+-offset.
        #[arg(value_delimiter = ',')]
        c0: Vec<StartPoint> = vec![StartPoint::Objective],
        generations: usize = 200,
        #[arg(value_delimiter = ',', value_enum)]
        env: Vec<Env> = vec![Env::Baseline, Env::Auxiliary],
    }
}

fn resolve_start(
    start: StartPoint,
    game: &StageGame,
    truth: &TrueModel,
    gamma: f64,
) -> CoreResult<f64> {
    Ok(match start {
        StartPoint::At(x) => x,
        StartPoint::Objective => objective_cutoff(game, truth)?,
        StartPoint::SteadyOffset(o) => steady_state(game, truth, gamma, 1e-12, 10_000)?.c_inf + o,
    })
}

impl Scenario for DynamicsParams {
    fn validate(&self) -> Result<(), CliError> {
        non_empty(&self.q, "q")?;
        non_empty(&self.gamma, "gamma")?;
        non_empty(&self.c0, "c0")?;
        non_empty(&self.env, "env")?;
        check_game(self.game, &self.q)?;
        require(self.generations > 0, "generations", "must be at least 1")
    }

    fn run(&self, _seed: u64) -> CoreResult<Vec<Table>> {
        let t = TrueModel::new(self.mu1, self.mu2, self.sd)?;
        let mut tab = Table::new(
            "",
            &["q", "gamma", "c0", "t", "env", "mu2", "var2", "cutoff", "welfare_loss"],
        );
        for &q in &self.q {
            let g = build_game(self.game, q, self.wait_cost)?;
            for &gamma in &self.gamma {
                for &start in &self.c0 {
                    let c0 = resolve_start(start, &g, &t, gamma)?;
                    for &env in &self.env {
                        let trace = match env {
                            Env::Baseline => run_generations(Environment::Baseline, &g, &t, gamma, c0, self.generations)?,
                            Env::Auxiliary => run_generations(Environment::Auxiliary, &g, &t, gamma, c0, self.generations)?,
                            Env::AuxiliaryMeanVar => run_generations_mean_var(&g, &t, gamma, c0, self.generations)?,
                        };
                        for rec in &trace.records {
                            tab.push(vec![
                                r(q),
                                r(gamma),
                                r(c0),
                                int(rec.t),
                                env.label().into(),
                                r(rec.mu2),
                                opt(rec.var2),
                                r(rec.cutoff),
                                r(rec.welfare_loss),
                            ]);
                        }
                    }
                }
            }
        }
        Ok(vec![tab])
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Kind {
    KnownVar,
    UnknownVar,
    SelectionMix,
}

params! {
    CompareParams / CompareArgs {
        #[arg(value_enum)]
        a_kind: Kind = Kind::KnownVar,
        a_q: f64 = 0.0,
        /// Neglecter share for a selection-mix society.
        a_alpha: f64 = 0.0,
        #[arg(value_enum)]
        b_kind: Kind = Kind::UnknownVar,
        b_q: f64 = 0.0,
        b_alpha: f64 = 0.0,
        mu1: f64 = 0.0,
        mu2: f64 = 0.0,
        sd: f64 = 1.0,
        gamma: f64 = 0.5,
        c0: StartPoint = StartPoint::Objective,
        generations: usize = 50,
    }
}

fn society(kind: Kind, q: f64, alpha: f64) -> CoreResult<Society> {
    Ok(Society {
        game: StageGame::search_with_recall(q)?,
        kind: match kind {
            Kind::KnownVar => SocietyKind::KnownVar,
            Kind::UnknownVar => SocietyKind::UnknownVar,
            Kind::SelectionMix => SocietyKind::SelectionMix { alpha },
        },
    })
}

impl Scenario for CompareParams {
    fn validate(&self) -> Result<(), CliError> {
        require(self.generations > 0, "generations", "must be at least 1")
    }

    fn run(&self, _seed: u64) -> CoreResult<Vec<Table>> {
        let t = TrueModel::new(self.mu1, self.mu2, self.sd)?;
        let a = society(self.a_kind, self.a_q, self.a_alpha)?;
        let b = society(self.b_kind, self.b_q, self.b_alpha)?;
        let c0 = resolve_start(self.c0, &a.game, &t, self.gamma)?;
        let cmp = compare_societies(&a, &b, &t, self.gamma, c0, self.generations)?;
        let mut asserts = Table::new("", &["assertion", "generation", "holds"]);
        for x in &cmp.assertions {
            asserts.push(vec![x.name.clone(), x.generation.map(int).unwrap_or_default(), int(x.holds)]);
        }
        let mut traces = Table::new("_traces", &["society", "t", "mu2", "var2", "cutoff", "welfare_loss"]);
        for (label, tr) in [("a", &cmp.a), ("b", &cmp.b)] {
            push_trace(&mut traces, label, tr);
        }
        Ok(vec![asserts, traces])
    }
}

fn push_trace(tab: &mut Table, label: &str, tr: &GenerationTrace) {
    for rec in &tr.records {
        tab.push(vec![label.into(), int(rec.t), r(rec.mu2), opt(rec.var2), r(rec.cutoff), r(rec.welfare_loss)]);
    }
}

// ---------------------------------------------------------------------------

params! {
    SequentialParams / SequentialArgs {
        #[arg(value_enum)]
        game: GameKind = GameKind::Recall,
        q: f64 = 0.0,
        wait_cost: f64 = 0.0,
        gamma: f64 = 0.5,
        mu1: f64 = 0.0,
        mu2: f64 = 0.0,
        sd: f64 = 1.0,
        /// Lower end of the mu2 prior grid (mu1 known).
        mu2_lo: f64 = -3.0,
        mu2_hi: f64 = 1.0,
        nodes: usize = 401,
        rounds: usize = 5000,
        /// Independent runs, seeded seed, seed+1, ...
        runs: usize = 1,
        /// Write every k-th round of each run (0: final round only).
        every: usize = 0,
    }
}

impl Scenario for SequentialParams {
    fn validate(&self) -> Result<(), CliError> {
        check_game(self.game, &[self.q])?;
        require(self.runs > 0, "runs", "must be at least 1")?;
        require(self.rounds > 0, "rounds", "must be at least 1")?;
        require(self.nodes >= 2, "nodes", "must be at least 2")?;
        require(self.mu2_lo < self.mu2_hi, "mu2_hi", "must exceed mu2_lo")
    }

    fn run(&self, seed: u64) -> CoreResult<Vec<Table>> {
        let t = TrueModel::new(self.mu1, self.mu2, self.sd)?;
        let g = build_game(self.game, self.q, self.wait_cost)?;
        let prior = PosteriorGrid::flat_known_mu1(self.mu1, self.mu2_lo, self.mu2_hi, self.nodes)?;
        let seeds: Vec<u64> = (0..self.runs as u64).map(|k| seed.wrapping_add(k)).collect();
        let runs = simulate_many(&g, &t, self.gamma, &prior, self.rounds, &seeds)?;
        let ss = steady_state(&g, &t, self.gamma, 1e-12, 10_000)?;

        let mut rounds = Table::new("", &["seed", "t", "cutoff", "x1", "x2", "posterior_mean_mu2"]);
        let mut summary = Table::new(
            "_summary",
            &["seed", "final_cutoff", "posterior_mean_mu2", "posterior_mode_mu2", "mode_on_edge", "c_inf", "mu2_inf"],
        );
        for run in &runs {
            for rec in &run.rounds {
                let keep = if self.every == 0 { rec.t == self.rounds } else { rec.t % self.every == 0 || rec.t == self.rounds };
                if keep {
                    rounds.push(vec![int(run.seed), int(rec.t), r(rec.cutoff), r(rec.x1), opt(rec.x2), r(rec.posterior_mean2)]);
                }
            }
            let post = &run.final_posterior;
            summary.push(vec![
                int(run.seed),
                r(run.last().cutoff),
                r(post.mean().1),
                r(post.mode().1),
                int(run.support_flag),
                r(ss.c_inf),
                r(ss.mu2_inf),
            ]);
        }
        Ok(vec![rounds, summary])
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Experiment {
    /// Share of datasets giving pessimistic mean and inflated variance.
    Pessimism,
    /// Expected posterior mode when only the final draw is recorded.
    OutcomeHistory,
}

params! {
    MonteCarloParams / MonteCarloArgs {
        #[arg(value_enum)]
        experiment: Experiment = Experiment::Pessimism,
        /// Dataset sizes (comma separated).
        #[arg(value_delimiter = ',')]
        n: Vec<usize> = vec![100],
        reps: usize = 1000,
        #[arg(value_delimiter = ',')]
        c: Vec<Real> = vec![Real(1.0)],
        gamma: f64 = 0.5,
        mu1: f64 = 0.0,
        mu2: f64 = 0.0,
        sd: f64 = 1.0,
        /// mu2 grid for the outcome-history posterior.
        mu2_lo: f64 = -2.0,
        mu2_hi: f64 = 1.0,
        nodes: usize = 401,
    }
}

impl Scenario for MonteCarloParams {
    fn validate(&self) -> Result<(), CliError> {
        non_empty(&self.n, "n")?;
        non_empty(&self.c, "c")?;
        require(self.n.iter().all(|&n| n > 0), "n", "sizes must be positive")?;
        require(self.reps > 0, "reps", "must be at least 1")?;
        require(self.nodes >= 2, "nodes", "must be at least 2")
    }

    fn run(&self, seed: u64) -> CoreResult<Vec<Table>> {
        let t = TrueModel::new(self.mu1, self.mu2, self.sd)?;
        let tab = match self.experiment {
            Experiment::Pessimism => {
                let mut tab = Table::new("", &["n", "c", "reps", "mu2_below_truth", "var2_above_truth"]);
                for &n in &self.n {
                    for &Real(c) in &self.c {
                        let f = mc_pessimism_experiment(n, self.reps, &t, c, self.gamma, seed)?;
                        tab.push(vec![int(n), r(c), int(f.reps), r(f.mu2_below_truth), r(f.var2_above_truth)]);
                    }
                }
                tab
            }
            Experiment::OutcomeHistory => {
                let grid = PosteriorGrid::flat_known_mu1(self.mu1, self.mu2_lo, self.mu2_hi, self.nodes)?;
                let mut tab = Table::new("", &["n", "c", "reps", "mean_mode", "pseudo_true_mu2"]);
                for &n in &self.n {
                    for &Real(c) in &self.c {
                        let res = outcome_history_inference(&t, c, n, self.gamma, &grid, self.reps, seed)?;
                        let star = pseudo_true(&t, c, self.gamma)?.mu2_star;
                        tab.push(vec![int(n), r(c), int(self.reps), r(res.mean_mode), r(star)]);
                    }
                }
                tab
            }
        };
        Ok(vec![tab])
    }
}

// ---------------------------------------------------------------------------

params! {
    MultiPeriodParams / MultiPeriodArgs {
        periods: usize = 3,
        /// Geometric lag family: weight alpha * delta^(i-j-1).
        alpha: f64 = 0.5,
        delta: f64 = 0.0,
        /// Explicit lag rows for periods 2..L, e.g. "0.5;0.25,0.5"; overrides alpha/delta.
        lags: Option<LagRows> = None,
        /// True means per period (default all zero).
        #[arg(value_delimiter = ',')]
        mu: Vec<f64> = Vec::new(),
        sd: f64 = 1.0,
        /// Constant cutoffs for periods 1..L-1.
        #[arg(value_delimiter = ',')]
        cutoffs: Vec<Real> = vec![Real(-2.0), Real(0.0)],
    }
}

impl Scenario for MultiPeriodParams {
    fn validate(&self) -> Result<(), CliError> {
        require(self.periods >= 2, "periods", "must be at least 2")?;
        require(self.mu.is_empty() || self.mu.len() == self.periods, "mu", "needs one mean per period")?;
        require(self.cutoffs.len() + 1 == self.periods, "cutoffs", "needs periods - 1 values")?;
        if let Some(lags) = &self.lags {
            require(lags.0.len() + 1 == self.periods, "lags", "needs one row for each of periods 2..L")?;
        }
        Ok(())
    }

    fn run(&self, _seed: u64) -> CoreResult<Vec<Table>> {
        let lags = match &self.lags {
            Some(rows) => LagWeights::new(std::iter::once(Vec::new()).chain(rows.0.iter().cloned()).collect())?,
            None => LagWeights::alpha_delta(self.alpha, self.delta, self.periods)?,
        };
        let mu = if self.mu.is_empty() { vec![0.0; self.periods] } else { self.mu.clone() };
        let cutoffs = self.cutoffs.iter().map(|c| c.0).collect();
        let spec = MultiPeriodSpec::new(lags, mu.clone(), self.sd, cutoffs)?;
        let iterative = pseudo_true_l(&spec, Method::Iterative)?;
        let paths = pseudo_true_l(&spec, Method::Paths)?;

        let mut means = Table::new("", &["period", "mu_true", "mu_star_iterative", "mu_star_paths"]);
        for (i, ((m, a), b)) in mu.iter().zip(&iterative).zip(&paths).enumerate() {
            means.push(vec![int(i + 1), r(*m), r(*a), r(*b)]);
        }
        let mut sums = Table::new("_paths", &["i", "j", "path_weight_sum"]);
        for i in 2..=self.periods {
            for j in 1..i {
                sums.push(vec![int(i), int(j), r(path_weight_sum(&spec, i, j)?)]);
            }
        }
        let mut out = vec![means, sums];
        if self.lags.is_none() {
            let verdict = alpha_delta_classify(self.alpha, self.delta, self.periods)?;
            let mut v = Table::new("_verdict", &["alpha", "delta", "periods", "verdict"]);
            let label = serde_json::to_value(verdict).ok().and_then(|x| x.as_str().map(str::to_owned)).unwrap_or_default();
            v.push(vec![r(self.alpha), r(self.delta), int(self.periods), label]);
            out.push(v);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
#[value(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Gumbel,
    Beta,
}

params! {
    MomParams / MomArgs {
        #[arg(value_enum)]
        family: Family = Family::Gumbel,
        /// Gumbel dependence, in [-1, 0).
        alpha: f64 = -0.5,
        /// Gaussian family standard deviation and bias.
        sd: f64 = 1.0,
        gamma: f64 = 0.5,
        /// True first- and second-draw means.
        m1: f64 = 1.0,
        m2: f64 = 1.0,
        #[arg(value_delimiter = ',')]
        c: Vec<Real> = vec![Real(1.0)],
        /// Generations of moment-matching dynamics (0: estimates only).
        generations: usize = 0,
        c0: f64 = 1.0,
    }
}

impl MomParams {
    fn family(&self) -> CoreResult<FeasibleFamily> {
        match self.family {
            Family::Gaussian => FeasibleFamily::gaussian(self.sd, self.gamma),
            Family::Gumbel => FeasibleFamily::gumbel(self.alpha),
            Family::Beta => FeasibleFamily::beta(),
        }
    }
}

impl Scenario for MomParams {
    fn validate(&self) -> Result<(), CliError> {
        non_empty(&self.c, "c")
    }

    fn run(&self, _seed: u64) -> CoreResult<Vec<Table>> {
        let fam = self.family()?;
        let truth = TrueMoments { m1: self.m1, m2: self.m2 };
        let mut est = Table::new("", &["c", "theta1", "theta2"]);
        for &Real(c) in &self.c {
            let e = mom_estimate(&fam, &truth, &CensoringSpec::single(c)?)?;
            est.push(vec![r(c), r(e.theta1), r(e.theta2)]);
        }
        let mut out = vec![est];
        if self.generations > 0 {
            let tr = mom_dynamics(&fam, &StageGame::search_with_recall(0.0)?, &truth, self.c0, self.generations)?;
            let mut dynamics = Table::new("_dynamics", &["t", "theta1", "theta2", "cutoff", "clamped"]);
            for rec in &tr.records {
                dynamics.push(vec![int(rec.t), r(rec.theta1), r(rec.theta2), r(rec.cutoff), int(rec.clamped)]);
            }
            out.push(dynamics);
        }
        Ok(out)
    }
}

// ---------------------------------------------------------------------------

params! {
    FreddyParams / FreddyArgs {
        /// Balls per urn (multiple of 4).
        n: i64 = 4,
        /// Stop watching after a bad first signal.
        censor: bool = true,
        /// Shares of non-average analysts for the mixture fit (four-ball urn).
        #[arg(value_delimiter = ',')]
        kappa: Vec<f64> = Vec::new(),
    }
}

impl Scenario for FreddyParams {
    fn run(&self, _seed: u64) -> CoreResult<Vec<Table>> {
        let spec = UrnSpec::new(self.n, self.censor)?;
        let rep = freddy_urn(&spec, None)?;
        let header: &[&'static str] = &[
            "signal",
            "theta_1_4",
            "theta_1_4_float",
            "theta_1_2",
            "theta_1_2_float",
            "theta_3_4",
            "theta_3_4_float",
        ];
        let mut table = Table::new("", header);
        for row in &rep.table {
            let mut cells = vec![row.signal.label().to_string()];
            for p in &row.probs {
                cells.push(format_rational(p));
                cells.push(r(rational_f64(p)));
            }
            table.push(cells);
        }
        let mut loglik = Table::new("_loglik", &["theta", "theta_float", "expected_loglik"]);
        for (th, ll) in rep.thetas.iter().zip(&rep.loglik_by_theta) {
            loglik.push(vec![format_rational(th), r(rational_f64(th)), r(*ll)]);
        }
        let mut out = vec![table, loglik];
        if !self.kappa.is_empty() {
            let mut mix = Table::new("_mixture", &["kappa", "q_a_star"]);
            for &k in &self.kappa {
                mix.push(vec![r(k), opt(freddy_urn(&spec, Some(k))?.q_a_star)]);
            }
            out.push(mix);
        }
        Ok(out)
    }
}

fn rational_f64(p: &gfstop_core::montecarlo::Rational) -> f64 {
    *p.numer() as f64 / *p.denom() as f64
}
