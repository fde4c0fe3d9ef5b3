//! Exact sums over letter-count types of single-cell mean-field models, and
//! decay-rate fits built on them.

use serde::{Deserialize, Serialize};

use super::state::MicroModel;
use super::{in_shell, run_chain_observed, ChainConfig, ChainEnsemble};
use crate::error::{Error, Result};
use crate::model::{rate_value, repr_value, Macrostate, Model};
use crate::thermo::{SolverOptions, Thermo};

/// Largest number of types enumerated.
pub const TYPE_BUDGET: usize = 2_000_000;

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn type_count(sites: usize, letters: usize) -> f64 {
    binomial(sites + letters - 1, letters - 1)
}

/// Calls `f` with every vector of `m` counts summing to `n`.
fn for_each_type(n: usize, m: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(left: usize, k: usize, counts: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if k + 1 == counts.len() {
            counts[k] = left;
            f(counts);
            return;
        }
        for c in 0..=left {
            counts[k] = c;
            rec(left - c, k + 1, counts, f);
        }
    }
    let mut counts = vec![0; m];
    rec(n, 0, &mut counts, f);
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Enumerable type classes of a model at a given site count.
struct Types {
    mm: MicroModel,
    log_factorial: Vec<f64>,
    log_prior: Vec<f64>,
}

impl Types {
    fn new(model: &Model, sites: usize) -> Result<Self> {
        let mm = MicroModel::new(model, sites)?;
        if !mm.is_single_cell_mean_field() || mm.letters() > 3 {
            return Err(Error::Capacity(
                "type enumeration needs a single-cell mean-field model with at most three letters"
                    .into(),
            ));
        }
        if type_count(sites, mm.letters()) > TYPE_BUDGET as f64 {
            return Err(Error::Capacity(format!(
                "{} types at {sites} sites exceed the budget of {TYPE_BUDGET}",
                type_count(sites, mm.letters())
            )));
        }
        let mut log_factorial = vec![0.0; sites + 1];
        for k in 1..=sites {
            log_factorial[k] = log_factorial[k - 1] + (k as f64).ln();
        }
        let log_prior = mm.prior().iter().map(|p| p.ln()).collect();
        Ok(Self {
            mm,
            log_factorial,
            log_prior,
        })
    }

    /// `log P_n` of the type.
    fn log_mass(&self, counts: &[usize]) -> f64 {
        let n = self.mm.sites();
        let mut v = self.log_factorial[n];
        for (k, &c) in counts.iter().enumerate() {
            if c > 0 {
                v += c as f64 * self.log_prior[k] - self.log_factorial[c];
            }
        }
        v
    }

    fn each(&self, mut f: impl FnMut(&[usize])) {
        for_each_type(self.mm.sites(), self.mm.letters(), &mut f);
    }

    fn fraction(&self, counts: &[usize]) -> Vec<f64> {
        let n = self.mm.sites() as f64;
        counts.iter().map(|&c| c as f64 / n).collect()
    }
}

/// `log P_n{H_n,j ∈ [u − r, u + r]}` by exact enumeration of types.
pub fn shell_log_probability(
    model: &Model,
    component: usize,
    u: f64,
    r: f64,
    sites: usize,
) -> Result<f64> {
    if component >= model.sigma() {
        return Err(Error::Argument(format!("no component {component}")));
    }
    if !(r >= 0.0) || !u.is_finite() {
        return Err(Error::Argument(
            "shell needs a finite centre and r ≥ 0".into(),
        ));
    }
    let types = Types::new(model, sites)?;
    let mut terms = Vec::new();
    types.each(|c| {
        if in_shell(types.mm.type_energy(c)[component], u, r) {
            terms.push(types.log_mass(c));
        }
    });
    Ok(log_sum_exp(&terms))
}

/// `P_n{H_n ∈ [u − r, u + r]}` for the first component.
pub fn exact_shell_probability(model: &Model, u: f64, r: f64, sites: usize) -> Result<f64> {
    Ok(shell_log_probability(model, 0, u, r, sites)?.exp())
}

/// Largest single-site change of the shell components over types inside the
/// shell; `None` when the types cannot be enumerated.
pub(crate) fn max_shell_step(mm: &MicroModel, shell: &[(usize, f64, f64)]) -> Option<f64> {
    let (n, m) = (mm.sites(), mm.letters());
    if type_count(n, m) > TYPE_BUDGET as f64 {
        return None;
    }
    let mut best: f64 = 0.0;
    for_each_type(n, m, &mut |c: &[usize]| {
        let h = mm.type_energy(c);
        if !shell.iter().all(|&(j, u, r)| in_shell(h[j], u, r)) {
            return;
        }
        for a in 0..m {
            for b in 0..m {
                for &(j, _, _) in shell {
                    if let Some(d) = mm.type_step(c, a, b, j) {
                        best = best.max(d.abs());
                    }
                }
            }
        }
    });
    Some(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallMetric {
    /// Max-norm over macrostate entries.
    MaxNorm,
    /// Half the L1 distance (averaged over cells).
    TotalVariation,
    /// Distance of the mean site value.
    Moment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Macrostate,
    pub radius: f64,
    pub metric: BallMetric,
}

impl Ball {
    pub fn contains(&self, model: &Model, x: &Macrostate) -> bool {
        let d = match self.metric {
            BallMetric::MaxNorm => self.center.distance(x),
            BallMetric::TotalVariation => match (self.center.entries(), x.entries()) {
                (Some(a), Some(b)) => {
                    let cells = model.space.cell_count() as f64;
                    0.5 * a.iter().zip(b).map(|(p, q)| (p - q).abs()).sum::<f64>() / cells
                }
                _ => f64::INFINITY,
            },
            BallMetric::Moment => {
                let alphabet = model.space.alphabet().unwrap_or(&[]);
                match (self.center.mean_moment(alphabet), x.mean_moment(alphabet)) {
                    (Some(a), Some(b)) => (a - b).abs(),
                    _ => f64::INFINITY,
                }
            }
        };
        d <= self.radius + 1e-12
    }
}

/// `log P_{n, a_n β}{Y_n ∈ ball}` by exact enumeration of types.
pub fn ball_log_probability(model: &Model, beta: &[f64], ball: &Ball, sites: usize) -> Result<f64> {
    if beta.len() != model.sigma() {
        return Err(Error::shape(
            format!("{} multipliers", model.sigma()),
            format!("{}", beta.len()),
        ));
    }
    let types = Types::new(model, sites)?;
    let n = sites as f64;
    let (mut inside, mut all) = (Vec::new(), Vec::new());
    types.each(|c| {
        let h = types.mm.type_energy(c);
        let w = types.log_mass(c) - n * beta.iter().zip(&h).map(|(b, v)| b * v).sum::<f64>();
        all.push(w);
        if ball.contains(model, &model.space.macrostate(types.fraction(c))) {
            inside.push(w);
        }
    });
    Ok(log_sum_exp(&inside) - log_sum_exp(&all))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    pub beta: Vec<f64>,
    pub ball: Ball,
    /// Site counts, at least three.
    pub sites: Vec<usize>,
    /// Chain length when exact enumeration is unavailable.
    pub sweeps: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub sites: usize,
    #[serde(with = "crate::floats")]
    pub log_probability: f64,
    /// Chain samples inside the ball; absent for exact points.
    pub hits: Option<u64>,
    pub exact: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayEstimate {
    pub points: Vec<DecayPoint>,
    /// Least-squares slope of log-probability against `a_n`.
    pub slope: f64,
    pub slope_stderr: f64,
    /// Normal-approximation 95% interval.
    pub interval: (f64, f64),
    /// `−I_β(centre)`.
    pub predicted: f64,
    /// `−min I_β` over the ball's types at the largest exact site count.
    pub predicted_ball: Option<f64>,
    pub relative_error: f64,
    /// Every point came from exact enumeration.
    pub exact: bool,
}

fn least_squares(x: &[f64], y: &[f64]) -> (f64, f64) {
    let k = x.len() as f64;
    let mx = x.iter().sum::<f64>() / k;
    let my = y.iter().sum::<f64>() / k;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my - slope * (a - mx)).powi(2))
        .sum();
    let se = if x.len() > 2 {
        (ssr / (k - 2.0) / sxx).sqrt()
    } else {
        f64::NAN
    };
    (slope, se)
}

/// `I_β(x) = I(x) + ⟨β, H̃(x)⟩ − φ(β)`.
fn tilted_rate(model: &Model, beta: &[f64], phi: f64, x: &Macrostate) -> Result<f64> {
    let h = repr_value(model, x)?;
    Ok(rate_value(model, x)? + beta.iter().zip(&h).map(|(b, v)| b * v).sum::<f64>() - phi)
}

/// Fits the exponential decay rate of the ball probability under the tilted
/// law across site counts. Exact type sums are used where possible; other
/// site counts fall back to chain occupancy.
pub fn estimate_rate_decay(model: &Model, config: &DecayConfig) -> Result<DecayEstimate> {
    if config.sites.len() < 3 {
        return Err(Error::Argument(
            "rate fits need at least three site counts".into(),
        ));
    }
    let mut sites = config.sites.clone();
    sites.sort_unstable();
    sites.dedup();
    if sites.len() < 3 {
        return Err(Error::Argument(
            "rate fits need three distinct site counts".into(),
        ));
    }
    let mut points = Vec::with_capacity(sites.len());
    for (i, &n) in sites.iter().enumerate() {
        match ball_log_probability(model, &config.beta, &config.ball, n) {
            Ok(lp) => points.push(DecayPoint {
                sites: n,
                log_probability: lp,
                hits: None,
                exact: true,
            }),
            Err(Error::Capacity(_)) => {
                let mut cfg = ChainConfig::new(
                    ChainEnsemble::Canonical {
                        beta: config.beta.clone(),
                    },
                    n,
                    config.sweeps,
                    config.seed.wrapping_add(i as u64),
                );
                cfg.blocks = 1;
                let mut hits = 0u64;
                run_chain_observed(model, &cfg, |mm, st| {
                    if config.ball.contains(model, &mm.macrostate(model, st)) {
                        hits += 1;
                    }
                })?;
                if i == 0 && hits < 50 {
                    return Err(Error::Statistical {
                        hits,
                        message: format!("ball visited too rarely at {n} sites"),
                    });
                }
                points.push(DecayPoint {
                    sites: n,
                    log_probability: (hits as f64 / config.sweeps as f64).ln(),
                    hits: Some(hits),
                    exact: false,
                });
            }
            Err(e) => return Err(e),
        }
    }
    if points.iter().any(|p| !p.log_probability.is_finite()) {
        return Err(Error::Statistical {
            hits: points.iter().filter_map(|p| p.hits).min().unwrap_or(0),
            message: "the ball has zero probability at some site count".into(),
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.sites as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.log_probability).collect();
    let (slope, se) = least_squares(&x, &y);

    let thermo = Thermo::new(model, SolverOptions::default());
    let phi = thermo.free_energy(&config.beta)?;
    let predicted = -tilted_rate(model, &config.beta, phi, &config.ball.center)?;
    let predicted_ball = points.iter().rev().find(|p| p.exact).and_then(|p| {
        let types = Types::new(model, p.sites).ok()?;
        let mut best = f64::INFINITY;
        types.each(|c| {
            let x = model.space.macrostate(types.fraction(c));
            if config.ball.contains(model, &x) {
                if let Ok(v) = tilted_rate(model, &config.beta, phi, &x) {
                    best = best.min(v);
                }
            }
        });
        best.is_finite().then_some(-best)
    });
    Ok(DecayEstimate {
        exact: points.iter().all(|p| p.exact),
        points,
        slope,
        slope_stderr: se,
        interval: (slope - 1.96 * se, slope + 1.96 * se),
        predicted,
        predicted_ball,
        relative_error: ((slope - predicted) / predicted).abs(),
    })
}
