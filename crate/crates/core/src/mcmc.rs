//! Metropolis–Hastings over θ and summaries of the resulting chain.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Normal, Triangular};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared as ChiSquaredPdf, Continuous};

use crate::error::{Error, Result};
use crate::numerics::GridFn;
use crate::posterior::LogPosterior;

/// Abort after this many consecutive non-finite candidate evaluations.
pub const MAX_NON_FINITE_RUN: usize = 10_000;

const GOLDEN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Proposal {
    /// Triangular on `[lo, hi]` with mode at the current state.
    Triangular { lo: f64, hi: f64 },
    /// `χ²` with `⌈θ⌉` degrees of freedom (at least one).
    ChiSquaredCeil,
    GaussianRw { scale: f64 },
}

fn ceil_dof(theta: f64) -> f64 {
    theta.ceil().max(1.0)
}

impl Proposal {
    pub fn kind(&self) -> &'static str {
        match self {
            Proposal::Triangular { .. } => "triangular",
            Proposal::ChiSquaredCeil => "chi_squared_ceil",
            Proposal::GaussianRw { .. } => "gaussian_rw",
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        match *self {
            Proposal::Triangular { lo, hi } if !(lo < hi) || p != 1 => {
                Err(Error::Config("triangular proposal needs scalar θ and lo < hi".into()))
            }
            Proposal::ChiSquaredCeil if p != 1 => Err(Error::Config("chi-squared proposal needs scalar θ".into())),
            Proposal::GaussianRw { scale } if !(scale > 0.0) => {
                Err(Error::Config(format!("random-walk scale must be positive, got {scale}")))
            }
            _ => Ok(()),
        }
    }

    pub fn sample(&self, current: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        match *self {
            Proposal::Triangular { lo, hi } => {
                let mode = current[0].clamp(lo, hi);
                let dist = Triangular::new(lo, hi, mode).expect("validated bounds");
                vec![dist.sample(rng)]
            }
            Proposal::ChiSquaredCeil => {
                let dist = ChiSquared::new(ceil_dof(current[0])).expect("positive dof");
                vec![dist.sample(rng)]
            }
            Proposal::GaussianRw { scale } => {
                let dist = Normal::new(0.0, scale).expect("validated scale");
                current.iter().map(|c| c + dist.sample(rng)).collect()
            }
        }
    }

    /// `log g(candidate | current)`
    pub fn log_density(&self, candidate: &[f64], current: &[f64]) -> f64 {
        match *self {
            Proposal::Triangular { lo, hi } => {
                let (x, mode) = (candidate[0], current[0].clamp(lo, hi));
                let dens = if !(lo..=hi).contains(&x) {
                    0.0
                } else if x < mode {
                    2.0 * (x - lo) / ((hi - lo) * (mode - lo))
                } else if x > mode {
                    2.0 * (hi - x) / ((hi - lo) * (hi - mode))
                } else {
                    2.0 / (hi - lo)
                };
                dens.ln()
            }
            Proposal::ChiSquaredCeil => {
                let dist = ChiSquaredPdf::new(ceil_dof(current[0])).expect("positive dof");
                if candidate[0] > 0.0 {
                    dist.ln_pdf(candidate[0])
                } else {
                    f64::NEG_INFINITY
                }
            }
            Proposal::GaussianRw { scale } => candidate
                .iter()
                .zip(current)
                .map(|(a, b)| {
                    let z = (a - b) / scale;
                    -0.5 * z * z - scale.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln()
                })
                .sum(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        matches!(self, Proposal::GaussianRw { .. })
    }
}

#[derive(Clone, PartialEq)]
pub struct Chain {
    /// Retained states, one per iteration after burn-in.
    pub draws: Vec<Vec<f64>>,
    pub log_posts: Vec<f64>,
    /// Whether the move into each retained state was accepted.
    pub accepted: Vec<bool>,
    pub accepted_total: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub total: usize,
}

impl fmt::Debug for Chain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chain")
            .field("len", &self.draws.len())
            .field("acceptance_rate", &self.acceptance_rate())
            .field("seed", &self.seed)
            .field("burn_in", &self.burn_in)
            .field("total", &self.total)
            .finish()
    }
}

impl Chain {
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted_total as f64 / self.total as f64
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.draws.first().map_or(0, Vec::len)
    }

    /// Draws of coordinate `k`.
    pub fn coordinate(&self, k: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[k]).collect()
    }

    /// Rows `iter, theta_1.., logpost, accepted`.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iter".to_string()];
        if self.dim() == 1 {
            header.push("theta".into());
        } else {
            header.extend((1..=self.dim()).map(|k| format!("theta{k}")));
        }
        header.push("logpost".into());
        header.push("accepted".into());
        w.write_record(&header)?;
        for (i, ((d, lp), acc)) in self.draws.iter().zip(&self.log_posts).zip(&self.accepted).enumerate() {
            let mut row = vec![(self.burn_in + i).to_string()];
            row.extend(d.iter().map(|v| v.to_string()));
            row.push(lp.to_string());
            row.push(u8::from(*acc).to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn run_mh(
    log_post: &LogPosterior,
    proposal: &Proposal,
    init: &[f64],
    total: usize,
    burn_in: usize,
    seed: u64,
) -> Result<Chain> {
    if total <= burn_in {
        return Err(Error::Config(format!("total ({total}) must exceed burn-in ({burn_in})")));
    }
    proposal.validate(init.len())?;
    let mut current = init.to_vec();
    let mut current_lp = log_post.evaluate(&current)?;
    if !current_lp.is_finite() {
        return Err(Error::Sampler(format!("initial state {init:?} has log-posterior {current_lp}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = total - burn_in;
    let mut chain = Chain {
        draws: Vec::with_capacity(keep),
        log_posts: Vec::with_capacity(keep),
        accepted: Vec::with_capacity(keep),
        accepted_total: 0,
        seed,
        burn_in,
        total,
    };
    let mut bad_run = 0usize;
    let mut last_problem = String::new();
    for it in 0..total {
        let cand = proposal.sample(&current, &mut rng);
        let u: f64 = rng.random();
        let cand_lp = match log_post.evaluate(&cand) {
            Ok(v) => v,
            Err(e) => {
                last_problem = e.to_string();
                f64::NEG_INFINITY
            }
        };
        let mut accept = false;
        if cand_lp.is_finite() {
            bad_run = 0;
            let correction = if proposal.is_symmetric() {
                0.0
            } else {
                proposal.log_density(&current, &cand) - proposal.log_density(&cand, &current)
            };
            let log_alpha = cand_lp - current_lp + correction;
            accept = log_alpha >= 0.0 || u.ln() < log_alpha;
        } else {
            bad_run += 1;
            if last_problem.is_empty() {
                last_problem = format!("log-posterior {cand_lp} at {cand:?}");
            }
            if bad_run > MAX_NON_FINITE_RUN {
                return Err(Error::Sampler(format!(
                    "{bad_run} consecutive non-finite candidates at iteration {it}, current state {current:?}; last: {last_problem}"
                )));
            }
        }
        if accept {
            current = cand;
            current_lp = cand_lp;
            chain.accepted_total += 1;
        }
        if it >= burn_in {
            chain.draws.push(current.clone());
            chain.log_posts.push(current_lp);
            chain.accepted.push(accept);
        }
    }
    Ok(chain)
}

/// Independent chains with their own seeds, run in parallel.
pub fn run_chains(
    log_post: &LogPosterior,
    proposal: &Proposal,
    init: &[f64],
    total: usize,
    burn_in: usize,
    seeds: &[u64],
) -> Result<Vec<Chain>> {
    seeds
        .par_iter()
        .map(|&s| run_mh(log_post, proposal, init, total, burn_in, s))
        .collect()
}

fn nonempty(chain: &Chain) -> Result<()> {
    if chain.is_empty() {
        Err(Error::Invalid("empty chain".into()))
    } else {
        Ok(())
    }
}

pub fn posterior_mean(chain: &Chain) -> Result<Vec<f64>> {
    nonempty(chain)?;
    let n = chain.len() as f64;
    Ok((0..chain.dim()).map(|k| chain.draws.iter().map(|d| d[k]).sum::<f64>() / n).collect())
}

/// Sample standard deviation (divisor `len - 1`).
pub fn posterior_sd(chain: &Chain) -> Result<Vec<f64>> {
    let mean = posterior_mean(chain)?;
    if chain.len() < 2 {
        return Ok(vec![0.0; chain.dim()]);
    }
    let n = chain.len() as f64;
    Ok(mean
        .iter()
        .enumerate()
        .map(|(k, m)| (chain.draws.iter().map(|d| (d[k] - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
        .collect())
}

/// Linearly interpolated sample quantile.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return Err(Error::Invalid("quantile needs data and q in [0, 1]".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (pos - lo as f64) * (v[hi] - v[lo]))
}

/// Equal-tailed interval for coordinate `k`.
pub fn credible_interval(chain: &Chain, k: usize, level: f64) -> Result<(f64, f64)> {
    nonempty(chain)?;
    let x = chain.coordinate(k);
    let tail = 0.5 * (1.0 - level);
    Ok((quantile(&x, tail)?, quantile(&x, 1.0 - tail)?))
}

/// Effective sample size from Geyer's initial positive sequence.
pub fn effective_sample_size(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 4 {
        return n as f64;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| {
        (0..n - lag).map(|i| (values[i] - mean) * (values[i + lag] - mean)).sum::<f64>() / (n as f64 * var)
    };
    let mut sum = 0.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        lag += 2;
    }
    let tau = (2.0 * sum - 1.0).max(1.0);
    n as f64 / tau
}

fn lexicographic(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > GOLDEN_TOL * (1.0 + a.abs().max(b.abs())) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Best recorded draw refined within one chain sd per coordinate. The
/// refinement only replaces the draw on a strict improvement, so ties keep
/// the smallest θ.
pub fn map_estimate(chain: &Chain, log_post: &LogPosterior) -> Result<Vec<f64>> {
    nonempty(chain)?;
    let mut best = 0;
    for i in 1..chain.len() {
        let (a, b) = (chain.log_posts[i], chain.log_posts[best]);
        if a > b || (a == b && lexicographic(&chain.draws[i], &chain.draws[best]).is_lt()) {
            best = i;
        }
    }
    let mut theta = chain.draws[best].clone();
    let mut value = chain.log_posts[best];
    let sd = posterior_sd(chain)?;
    let eval = |t: &[f64]| log_post.evaluate(t).unwrap_or(f64::NEG_INFINITY);
    for (k, s) in sd.iter().enumerate() {
        if !(*s > 0.0) {
            continue;
        }
        let mut probe = theta.clone();
        let x = golden_section(
            |v| {
                let mut t = theta.clone();
                t[k] = v;
                eval(&t)
            },
            theta[k] - s,
            theta[k] + s,
        );
        probe[k] = x;
        let v = eval(&probe);
        if v > value {
            theta = probe;
            value = v;
        }
    }
    Ok(theta)
}

/// Gaussian kernel density estimate of `draws` on `grid`.
pub fn kernel_density(draws: &[f64], bandwidth: f64, grid: &[f64]) -> Result<GridFn> {
    if !(bandwidth > 0.0) {
        return Err(Error::Invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if draws.is_empty() {
        return Err(Error::Invalid("empty chain".into()));
    }
    let norm = 1.0 / (draws.len() as f64 * bandwidth * (2.0 * std::f64::consts::PI).sqrt());
    Ok(GridFn::from_fn(grid, |x| {
        norm * draws
            .iter()
            .map(|d| {
                let z = (x - d) / bandwidth;
                (-0.5 * z * z).exp()
            })
            .sum::<f64>()
    }))
}
