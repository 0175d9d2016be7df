//! Finite-sample experiments: seeded censored datasets, flat-prior MAP
//! estimates, pessimism frequencies, inference from outcome histories, and
//! the finite-urn model of binary signals.

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::gauss::{inverse_mills, norm_cdf};
use crate::inference::PseudoTrueEstimate;
use crate::sequential::{FirstAxis, History, PosteriorGrid};
use crate::stage_game::TrueModel;

/// Generator for replication `rep` of experiment `seed`.
pub fn stream(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledDataset {
    pub histories: Vec<History>,
    pub cutoff: f64,
    pub seed: u64,
}

impl SampledDataset {
    pub fn uncensored(&self) -> usize {
        self.histories.iter().filter(|h| h.x2.is_some()).count()
    }
}

/// `n` independent histories from the truth, each continuing to the
/// second draw iff x1 <= c.
pub fn sample_histories(truth: &TrueModel, c: f64, n: usize, seed: u64) -> Result<SampledDataset> {
    if n == 0 {
        return Err(invalid("need at least one history"));
    }
    if c.is_nan() {
        return Err(invalid("cutoff is NaN"));
    }
    let mut rng = stream(seed, 0);
    let histories = (0..n)
        .map(|_| {
            let x1 = truth.mu1_true + truth.sd * normal(&mut rng);
            let x2 = truth.mu2_true + truth.sd * normal(&mut rng);
            History { x1, x2: (x1 <= c).then_some(x2) }
        })
        .collect();
    Ok(SampledDataset { histories, cutoff: c, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unknowns {
    Means,
    MeansAndVars,
}

/// Running sums that determine the flat-prior MAP.
#[derive(Debug, Clone, Copy, Default)]
struct Sums {
    n: f64,
    sx1: f64,
    sx1x1: f64,
    // over uncensored histories
    k: f64,
    uy: f64,
    uyy: f64,
}

impl Sums {
    fn push(&mut self, x1: f64, x2: Option<f64>, gamma: f64) {
        self.n += 1.0;
        self.sx1 += x1;
        self.sx1x1 += x1 * x1;
        if let Some(x2) = x2 {
            let y = x2 + gamma * x1;
            self.k += 1.0;
            self.uy += y;
            self.uyy += y * y;
        }
    }

    /// (mu1, mu2, var1, var2). With y = x2 + gamma x1, the MAP mu2 is
    /// mean_u(y) - gamma mu1 and var2 is the uncensored variance of y.
    fn estimate(&self, gamma: f64) -> Result<(f64, f64, f64, f64)> {
        if self.k == 0.0 {
            return Err(Error::NoIdentification("no uncensored histories; second-period mean is not identified".into()));
        }
        let mu1 = self.sx1 / self.n;
        let ybar = self.uy / self.k;
        let mu2 = ybar - gamma * mu1;
        let var1 = (self.sx1x1 / self.n - mu1 * mu1).max(0.0);
        let var2 = (self.uyy / self.k - ybar * ybar).max(0.0);
        Ok((mu1, mu2, var1, var2))
    }
}

/// Closed-form posterior mode under a flat prior.
pub fn map_estimate(data: &SampledDataset, gamma: f64, unknowns: Unknowns) -> Result<PseudoTrueEstimate> {
    // two-pass form for the variances, to keep them accurate when means are large
    let n = data.histories.len() as f64;
    let mu1 = data.histories.iter().map(|h| h.x1).sum::<f64>() / n;
    let unc: Vec<(f64, f64)> = data.histories.iter().filter_map(|h| h.x2.map(|x2| (h.x1, x2))).collect();
    if unc.is_empty() {
        return Err(Error::NoIdentification("no uncensored histories; second-period mean is not identified".into()));
    }
    let k = unc.len() as f64;
    let mu2 = unc.iter().map(|(x1, x2)| x2 + gamma * (x1 - mu1)).sum::<f64>() / k;
    let mut est = PseudoTrueEstimate { mu1_star: mu1, mu2_star: mu2, var1_star: None, var2_star: None, gamma_star: None };
    if unknowns == Unknowns::MeansAndVars {
        est.var1_star = Some(data.histories.iter().map(|h| (h.x1 - mu1).powi(2)).sum::<f64>() / n);
        est.var2_star = Some(unc.iter().map(|(x1, x2)| (x2 - mu2 + gamma * (x1 - mu1)).powi(2)).sum::<f64>() / k);
    }
    Ok(est)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PessimismFrequencies {
    /// Share of replications with estimated mu2 below the truth.
    pub mu2_below_truth: f64,
    /// Share of replications with estimated var2 above the true variance.
    pub var2_above_truth: f64,
    pub reps: usize,
}

/// Repeated datasets of size `n`, each estimated by the flat-prior MAP.
/// Replication r draws from stream (seed, r).
pub fn mc_pessimism_experiment(
    n: usize,
    reps: usize,
    truth: &TrueModel,
    c: f64,
    gamma: f64,
    seed: u64,
) -> Result<PessimismFrequencies> {
    if n == 0 || reps == 0 {
        return Err(invalid("need n >= 1 and reps >= 1"));
    }
    let var_true = truth.sd * truth.sd;
    let counts = (0..reps as u64)
        .into_par_iter()
        .map(|r| -> Result<(u64, u64)> {
            let mut rng = stream(seed, r);
            let mut s = Sums::default();
            for _ in 0..n {
                let x1 = truth.mu1_true + truth.sd * normal(&mut rng);
                let x2 = truth.mu2_true + truth.sd * normal(&mut rng);
                s.push(x1, (x1 <= c).then_some(x2), gamma);
            }
            match s.estimate(gamma) {
                Ok((_, mu2, _, var2)) => Ok(((mu2 < truth.mu2_true) as u64, (var2 > var_true) as u64)),
                // a replication with no uncensored draws is neither
                Err(Error::NoIdentification(_)) => Ok((0, 0)),
                Err(e) => Err(e),
            }
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    Ok(PessimismFrequencies {
        mu2_below_truth: counts.0 as f64 / reps as f64,
        var2_above_truth: counts.1 as f64 / reps as f64,
        reps,
    })
}

// ---------------------------------------------------------------------------
// Outcome histories

/// Density of a second draw observed alone, as a function of
/// d = x2 - mu2: the joint density integrated over first draws below c.
///
/// With u = x1 - mu1, the Gaussian product factors as
/// phi(d; 0, s sqrt(1+g^2)) * Phi((c - mu1 + g d / (1+g^2)) sqrt(1+g^2) / s).
fn ln_outcome_density(d: f64, c_rel: f64, gamma: f64, sd: f64) -> f64 {
    let k = 1.0 + gamma * gamma;
    let s = sd * k.sqrt();
    let z = (c_rel + gamma * d / k) * k.sqrt() / sd;
    let ln_phi_d = -0.5 * (d / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    ln_phi_d + ln_norm_cdf(z)
}

fn ln_norm_cdf(z: f64) -> f64 {
    if z > -5.0 {
        norm_cdf(z).ln()
    } else {
        // Phi = phi / lambda
        -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln() - inverse_mills(z).ln()
    }
}

/// ln of the outcome density on a uniform lattice, linearly interpolated.
struct LogDensityTable {
    lo: f64,
    step: f64,
    values: Vec<f64>,
    c_rel: f64,
    gamma: f64,
    sd: f64,
}

impl LogDensityTable {
    fn new(lo: f64, hi: f64, step: f64, c_rel: f64, gamma: f64, sd: f64) -> Self {
        let n = ((hi - lo) / step).ceil() as usize + 2;
        let values = (0..n).map(|k| ln_outcome_density(lo + k as f64 * step, c_rel, gamma, sd)).collect();
        Self { lo, step, values, c_rel, gamma, sd }
    }

    fn eval(&self, d: f64) -> f64 {
        let pos = (d - self.lo) / self.step;
        let k = pos.floor();
        if k < 0.0 || k as usize + 1 >= self.values.len() {
            return ln_outcome_density(d, self.c_rel, self.gamma, self.sd);
        }
        let i = k as usize;
        let f = pos - k;
        self.values[i] + f * (self.values[i + 1] - self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeHistoryResult {
    /// Average over replications of the posterior mode of mu2.
    pub mean_mode: f64,
    pub modes: Vec<f64>,
}

/// Expected posterior mode of mu2 for an agent who, knowing mu1, sees
/// only the draw from the period each predecessor stopped in.
pub fn outcome_history_inference(
    truth: &TrueModel,
    c: f64,
    n: usize,
    gamma: f64,
    grid: &PosteriorGrid,
    reps: usize,
    seed: u64,
) -> Result<OutcomeHistoryResult> {
    let FirstAxis::Known(mu1) = *grid.axis1() else {
        return Err(Error::Unsupported("outcome-history inference holds mu1 fixed; use a grid over mu2 only".into()));
    };
    if n == 0 || reps == 0 {
        return Err(invalid("need n >= 1 and reps >= 1"));
    }
    if !(gamma > 0.0) || c.is_nan() {
        return Err(invalid("need gamma > 0 and a cutoff"));
    }
    let sd = truth.sd;
    let axis = grid.axis2();
    let prior = grid.log_weights();
    let (gmin, gmax) = (axis[0], axis[axis.len() - 1]);
    let c_rel = if c == f64::INFINITY { 40.0 * sd } else { c - mu1 };
    let table = LogDensityTable::new(
        truth.mu2_true - 10.0 * sd - gmax,
        truth.mu2_true + 10.0 * sd - gmin,
        1e-3 * sd,
        c_rel,
        gamma,
        sd,
    );
    let modes = (0..reps as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, r);
            let mut seen = Vec::with_capacity(n);
            for _ in 0..n {
                let x1 = truth.mu1_true + sd * normal(&mut rng);
                let x2 = truth.mu2_true + sd * normal(&mut rng);
                // stopping after a high first draw records only x1, which
                // carries no information about mu2
                if x1 < c {
                    seen.push(x2);
                }
            }
            let best = axis
                .iter()
                .zip(prior)
                .map(|(&m2, &lp)| lp + seen.iter().map(|&x2| table.eval(x2 - m2)).sum::<f64>())
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |b, (k, v)| if v > b.1 { (k, v) } else { b });
            axis[best.0]
        })
        .collect::<Vec<f64>>();
    let mean_mode = modes.iter().sum::<f64>() / modes.len() as f64;
    Ok(OutcomeHistoryResult { mean_mode, modes })
}

// ---------------------------------------------------------------------------
// Finite-urn model of binary signals

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UrnSpec {
    /// Balls per urn; a multiple of 4.
    pub balls: i64,
    /// Stop watching after a bad first signal.
    pub censor_on_first_b: bool,
}

impl UrnSpec {
    pub fn new(balls: i64, censor_on_first_b: bool) -> Result<Self> {
        if balls < 4 || balls % 4 != 0 {
            return Err(invalid(format!("urn size must be a positive multiple of 4, got {balls}")));
        }
        Ok(Self { balls, censor_on_first_b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Signal {
    AA,
    AB,
    BA,
    BB,
    /// Bad first signal, second not observed.
    BNone,
}

impl Signal {
    pub const ALL: [Signal; 5] = [Signal::AA, Signal::AB, Signal::BA, Signal::BB, Signal::BNone];

    pub fn label(&self) -> &'static str {
        match self {
            Signal::AA => "aa",
            Signal::AB => "ab",
            Signal::BA => "ba",
            Signal::BB => "bb",
            Signal::BNone => "b_",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrnRow {
    pub signal: Signal,
    /// Likelihood at each quality, in `UrnReport::thetas` order.
    pub probs: Vec<Rational>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UrnReport {
    pub thetas: Vec<Rational>,
    pub table: Vec<UrnRow>,
    /// Expected log-likelihood of the objective signal mix at each quality.
    pub loglik_by_theta: Vec<f64>,
    pub q_a_star: Option<f64>,
}

fn qualities() -> Vec<Rational> {
    vec![Rational::new(1, 4), Rational::new(1, 2), Rational::new(3, 4)]
}

/// Likelihood of a length-two signal from an urn of `balls` with share
/// `theta` of good balls, drawn without replacement.
pub fn signal_likelihood(balls: i64, theta: Rational, s: Signal) -> Rational {
    let a = (theta * balls).to_integer();
    let b = balls - a;
    let pairs = balls * (balls - 1);
    match s {
        Signal::AA => Rational::new(a * (a - 1), pairs),
        Signal::AB => Rational::new(a * b, pairs),
        Signal::BA => Rational::new(b * a, pairs),
        Signal::BB => Rational::new(b * (b - 1), pairs),
        Signal::BNone => Rational::new(b, balls),
    }
}

/// Objective long-run signal mix when every analyst has quality 1/2.
fn objective_mix(censor: bool) -> Vec<(Signal, f64)> {
    if censor {
        vec![(Signal::AA, 0.25), (Signal::AB, 0.25), (Signal::BNone, 0.5)]
    } else {
        vec![(Signal::AA, 0.25), (Signal::AB, 0.25), (Signal::BA, 0.25), (Signal::BB, 0.25)]
    }
}

fn expected_loglik(mix: &[(Signal, f64)], lik: impl Fn(Signal) -> f64) -> f64 {
    mix.iter()
        .map(|&(s, p)| {
            let l = lik(s);
            if l > 0.0 {
                p * l.ln()
            } else {
                f64::NEG_INFINITY
            }
        })
        .sum()
}

/// Likelihood table, expected log-likelihood per quality, and (for the
/// four-ball urn with `kappa` given) the maximizing share of high-quality
/// analysts when a share 1 - kappa is known to be average.
pub fn freddy_urn(spec: &UrnSpec, kappa: Option<f64>) -> Result<UrnReport> {
    let thetas = qualities();
    let table: Vec<UrnRow> = Signal::ALL
        .iter()
        .map(|&s| UrnRow { signal: s, probs: thetas.iter().map(|&t| signal_likelihood(spec.balls, t, s)).collect() })
        .collect();
    let mix = objective_mix(spec.censor_on_first_b);
    let loglik_by_theta = thetas
        .iter()
        .map(|&t| expected_loglik(&mix, |s| signal_likelihood(spec.balls, t, s).to_f64().unwrap()))
        .collect();
    let q_a_star = match kappa {
        None => None,
        Some(_) if spec.balls != 4 => {
            return Err(Error::Unsupported("the mixture share is only solved for the four-ball urn".into()))
        }
        Some(k) if !(k > 0.0 && k <= 1.0) => return Err(invalid(format!("kappa must lie in (0,1], got {k}"))),
        Some(k) => Some(max_mixture_share(spec, k)),
    };
    Ok(UrnReport { thetas, table, loglik_by_theta, q_a_star })
}

/// Expected log-likelihood of the mixture putting `q` on quality 3/4,
/// `kappa - q` on 1/4 and `1 - kappa` on 1/2.
pub fn mixture_loglik(spec: &UrnSpec, kappa: f64, q: f64) -> f64 {
    let th = qualities();
    let w = [kappa - q, 1.0 - kappa, q];
    let lik = |s: Signal| -> f64 {
        th.iter().zip(w).map(|(&t, wt)| wt * signal_likelihood(spec.balls, t, s).to_f64().unwrap()).sum()
    };
    expected_loglik(&objective_mix(spec.censor_on_first_b), lik)
}

/// Maximizer over [0, kappa]. Each signal's mixture likelihood is linear
/// in q, so the objective is concave and its derivative is bisected.
fn max_mixture_share(spec: &UrnSpec, kappa: f64) -> f64 {
    let th = qualities();
    let lik = |s: Signal, t: usize| signal_likelihood(spec.balls, th[t], s).to_f64().unwrap();
    let mix = objective_mix(spec.censor_on_first_b);
    let slope = |q: f64| -> f64 {
        mix.iter()
            .map(|&(s, p)| {
                let level = (kappa - q) * lik(s, 0) + (1.0 - kappa) * lik(s, 1) + q * lik(s, 2);
                let d = lik(s, 2) - lik(s, 0);
                if d == 0.0 {
                    0.0
                } else if level <= 0.0 {
                    // log-likelihood is -inf here and rises as q moves away
                    d.signum() * f64::INFINITY
                } else {
                    p * d / level
                }
            })
            .sum()
    };
    if slope(0.0) <= 0.0 {
        return 0.0;
    }
    if slope(kappa) >= 0.0 {
        return kappa;
    }
    let (mut a, mut b) = (0.0, kappa);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        if slope(m) > 0.0 {
            a = m;
        } else {
            b = m;
        }
    }
    0.5 * (a + b)
}

/// Formats a rational as "p/q" (or "p" when whole).
pub fn format_rational(r: &Rational) -> String {
    if r.denom() == &1 || r.is_zero() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
