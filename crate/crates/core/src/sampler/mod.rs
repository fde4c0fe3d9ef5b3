//! Metropolis chains on site configurations and exact type-class sums.

mod exact;
mod state;

use std::io::Write;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Macrostate, Model};

pub use exact::{
    ball_log_probability, estimate_rate_decay, exact_shell_probability, shell_log_probability,
    Ball, BallMetric, DecayConfig, DecayEstimate, DecayPoint, TYPE_BUDGET,
};
pub use state::{MicroModel, MicroState};

/// Target law of a chain. Multipliers are per site: the weight is
/// `exp(−a_n ⟨β, H_n⟩)` against the prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "ensemble")]
pub enum ChainEnsemble {
    Canonical {
        beta: Vec<f64>,
    },
    /// `|H_n,j − u_j| ≤ r` for every component.
    Shell {
        u: Vec<f64>,
        r: f64,
    },
    /// Tilt the first component by `β¹`, hold the second in `[u² − r, u² + r]`.
    Mixed {
        beta1: f64,
        u2: f64,
        r: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Proposal {
    /// Pick a site uniformly, draw its new letter from the prior.
    #[default]
    ResampleFromPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    #[serde(flatten)]
    pub ensemble: ChainEnsemble,
    /// `a_n`; falls back to the model's default site count.
    pub sites: Option<usize>,
    /// Recorded sweeps of `a_n` proposals each.
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    #[serde(default)]
    pub proposal: Proposal,
    /// Snapshot blocks for error bars.
    pub blocks: usize,
    /// Sweeps allowed for the annealed search of a shell start.
    pub anneal_sweeps: usize,
}

impl ChainConfig {
    pub fn new(ensemble: ChainEnsemble, sites: usize, sweeps: usize, seed: u64) -> Self {
        Self {
            ensemble,
            sites: Some(sites),
            sweeps,
            burn_in: sweeps / 10,
            seed,
            proposal: Proposal::ResampleFromPrior,
            blocks: 20,
            anneal_sweeps: 2000,
        }
    }
}

/// Means over one block of recorded sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockSnapshot {
    pub index: usize,
    pub energy: Vec<f64>,
    pub macrostate: Macrostate,
    pub site_mean: f64,
    pub abs_site_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    pub config: ChainConfig,
    pub sites: usize,
    pub accepted_fraction: f64,
    /// Time-averaged coarse-grained macrostate.
    pub mean_macrostate: Macrostate,
    pub mean_energy: Vec<f64>,
    /// Time average of the mean site value.
    pub site_mean: f64,
    /// Time average of its absolute value.
    pub abs_site_mean: f64,
    /// Fraction of recorded samples inside the shell; absent for canonical chains.
    pub shell_occupancy: Option<f64>,
    /// Largest single-site `|ΔH|` of the constrained components that the
    /// shell width was checked against.
    pub shell_step: Option<f64>,
    /// Potential scale reduction between the two halves of the energy trace.
    #[serde(with = "crate::floats")]
    pub split_rhat: f64,
    pub blocks: Vec<BlockSnapshot>,
}

impl ChainResult {
    /// Batch-means standard error of a block statistic.
    pub fn standard_error(&self, stat: impl Fn(&BlockSnapshot) -> f64) -> f64 {
        let v: Vec<f64> = self.blocks.iter().map(stat).collect();
        let k = v.len() as f64;
        if v.len() < 2 {
            return f64::NAN;
        }
        let mean = v.iter().sum::<f64>() / k;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    }

    /// Block trace rows `block,H_1..,x_1..`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let Some(first) = self.blocks.first() else {
            w.flush()?;
            return Ok(());
        };
        let mut header = vec!["block".to_string()];
        header.extend((0..first.energy.len()).map(|j| format!("H_{}", j + 1)));
        let dim = first.macrostate.entries().map_or(0, |e| e.len());
        header.extend((0..dim).map(|k| format!("x_{k}")));
        w.write_record(&header)?;
        for b in &self.blocks {
            let mut row = vec![b.index.to_string()];
            row.extend(b.energy.iter().map(f64::to_string));
            row.extend(
                b.macrostate
                    .entries()
                    .unwrap_or(&[])
                    .iter()
                    .map(f64::to_string),
            );
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Closed shell test with a round-off allowance.
fn in_shell(h: f64, u: f64, r: f64) -> bool {
    (h - u).abs() <= r + 1e-12 * (1.0 + u.abs())
}

struct Target {
    tilt: Vec<f64>,
    /// `(component, centre, half-width)`.
    shell: Vec<(usize, f64, f64)>,
}

impl Target {
    fn new(ens: &ChainEnsemble, sigma: usize) -> Result<Self> {
        match ens {
            ChainEnsemble::Canonical { beta } => {
                if beta.len() != sigma {
                    return Err(Error::shape(
                        format!("{sigma} multipliers"),
                        format!("{}", beta.len()),
                    ));
                }
                if beta.iter().any(|b| !b.is_finite()) {
                    return Err(Error::Argument("non-finite multiplier".into()));
                }
                Ok(Self {
                    tilt: beta.clone(),
                    shell: vec![],
                })
            }
            ChainEnsemble::Shell { u, r } => {
                if u.len() != sigma {
                    return Err(Error::shape(
                        format!("{sigma} values"),
                        format!("{}", u.len()),
                    ));
                }
                if !(*r > 0.0) || u.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Argument(
                        "shell needs finite centre and r > 0".into(),
                    ));
                }
                Ok(Self {
                    tilt: vec![0.0; sigma],
                    shell: u.iter().enumerate().map(|(j, &v)| (j, v, *r)).collect(),
                })
            }
            ChainEnsemble::Mixed { beta1, u2, r } => {
                if sigma != 2 {
                    return Err(Error::Argument("mixed chains need σ = 2".into()));
                }
                if !(*r > 0.0) || !beta1.is_finite() || !u2.is_finite() {
                    return Err(Error::Argument(
                        "mixed chain needs finite β¹, u² and r > 0".into(),
                    ));
                }
                Ok(Self {
                    tilt: vec![*beta1, 0.0],
                    shell: vec![(1, *u2, *r)],
                })
            }
        }
    }

    fn inside(&self, h: &[f64]) -> bool {
        self.shell.iter().all(|&(j, u, r)| in_shell(h[j], u, r))
    }

    /// Max-norm excess over the shell (0 inside).
    fn excess(&self, h: &[f64]) -> f64 {
        self.shell
            .iter()
            .map(|&(j, u, r)| ((h[j] - u).abs() - r).max(0.0))
            .fold(0.0, f64::max)
    }
}

/// Site count from the config or the model default.
pub fn resolve_sites(model: &Model, config: &ChainConfig) -> Result<usize> {
    config
        .sites
        .or_else(|| model.micro.as_ref().and_then(|m| m.sites))
        .ok_or_else(|| Error::Config("no site count given and the model has no default".into()))
}

fn draw_config(mm: &MicroModel, rng: &mut ChaCha8Rng, prior: &WeightedIndex<f64>) -> Vec<usize> {
    (0..mm.sites()).map(|_| prior.sample(rng)).collect()
}

/// Annealed descent on the shell excess until the configuration is inside.
fn anneal_into_shell(
    mm: &MicroModel,
    target: &Target,
    st: &mut MicroState,
    rng: &mut ChaCha8Rng,
    prior: &WeightedIndex<f64>,
    sweeps: usize,
) -> Result<()> {
    let n = mm.sites();
    let mut cur = target.excess(&st.energy);
    let t0 = 0.1 * (cur + 1.0 / n as f64);
    let steps = sweeps * n;
    for k in 0..steps {
        if cur == 0.0 {
            return Ok(());
        }
        let temp = t0 * (1e-6f64).powf(k as f64 / steps as f64);
        let s = rng.random_range(0..n);
        let y = prior.sample(rng);
        let dh = mm.delta(st, s, y);
        let h: Vec<f64> = st.energy.iter().zip(&dh).map(|(a, b)| a + b).collect();
        let next = target.excess(&h);
        if next <= cur || rng.random::<f64>() < (-(next - cur) / temp).exp() {
            mm.apply(st, s, y, &dh);
            cur = next;
        }
    }
    mm.refresh(st);
    if target.excess(&st.energy) == 0.0 {
        return Ok(());
    }
    Err(Error::Feasibility {
        residual: target.excess(&st.energy),
        message: format!("no configuration inside the shell after {sweeps} annealing sweeps"),
    })
}

/// Largest single-site step of the shell components over configurations in
/// the shell: exact over letter counts for single-cell mean-field models,
/// otherwise measured at the start configuration.
fn shell_step(mm: &MicroModel, target: &Target, st: &MicroState) -> f64 {
    if mm.is_single_cell_mean_field() {
        if let Some(v) = exact::max_shell_step(mm, &target.shell) {
            return v;
        }
    }
    target
        .shell
        .iter()
        .map(|&(j, _, _)| mm.max_step(st, j))
        .fold(0.0, f64::max)
}

fn split_rhat(trace: &[f64]) -> f64 {
    let h = trace.len() / 2;
    if h < 2 {
        return f64::NAN;
    }
    let halves = [&trace[..h], &trace[h..2 * h]];
    let stats: Vec<(f64, f64)> = halves
        .iter()
        .map(|x| {
            let m = x.iter().sum::<f64>() / h as f64;
            let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (h as f64 - 1.0);
            (m, v)
        })
        .collect();
    let w = 0.5 * (stats[0].1 + stats[1].1);
    let grand = 0.5 * (stats[0].0 + stats[1].0);
    let b = h as f64 * stats.iter().map(|s| (s.0 - grand).powi(2)).sum::<f64>();
    if w == 0.0 {
        return if b == 0.0 { 1.0 } else { f64::INFINITY };
    }
    let var = (h as f64 - 1.0) / h as f64 * w + b / h as f64;
    (var / w).sqrt()
}

/// Runs one chain. Canonical chains start from a prior draw, shell and mixed
/// chains from an annealed configuration inside the shell.
pub fn run_chain(model: &Model, config: &ChainConfig) -> Result<ChainResult> {
    run_chain_observed(model, config, |_, _| {})
}

/// [`run_chain`] calling `observe` on every recorded sweep.
pub fn run_chain_observed<F>(
    model: &Model,
    config: &ChainConfig,
    mut observe: F,
) -> Result<ChainResult>
where
    F: FnMut(&MicroModel, &MicroState),
{
    let sites = resolve_sites(model, config)?;
    let mm = MicroModel::new(model, sites)?;
    let target = Target::new(&config.ensemble, mm.sigma())?;
    if config.sweeps == 0 {
        return Err(Error::Argument("a chain needs at least one sweep".into()));
    }
    let prior = WeightedIndex::new(mm.prior())
        .map_err(|e| Error::Config(format!("prior cannot be sampled: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut st = mm.state(draw_config(&mm, &mut rng, &prior))?;
    if st.energy.iter().any(|e| !e.is_finite()) {
        return Err(Error::Model("microstate energy is not finite".into()));
    }

    let mut step = None;
    if !target.shell.is_empty() {
        anneal_into_shell(
            &mm,
            &target,
            &mut st,
            &mut rng,
            &prior,
            config.anneal_sweeps,
        )?;
        let bound = shell_step(&mm, &target, &st);
        let r = target
            .shell
            .iter()
            .map(|s| s.2)
            .fold(f64::INFINITY, f64::min);
        if 2.0 * r < bound - 1e-12 {
            return Err(Error::Config(format!(
                "shell half-width {r} is below half the largest single-site change {bound:.4e}"
            )));
        }
        step = Some(bound);
    }

    let n = sites as f64;
    let blocks = config.blocks.clamp(1, config.sweeps);
    let per_block = config.sweeps / blocks;
    let dim = st.flat().len();
    let sigma = mm.sigma();
    let mut total_x = vec![0.0; dim];
    let mut total_h = vec![0.0; sigma];
    let (mut total_m, mut total_abs) = (0.0, 0.0);
    let mut block_x = vec![0.0; dim];
    let mut block_h = vec![0.0; sigma];
    let (mut block_m, mut block_abs, mut block_count) = (0.0, 0.0, 0usize);
    let mut snapshots = Vec::with_capacity(blocks);
    let mut trace = Vec::with_capacity(config.sweeps);
    let (mut accepted, mut proposed) = (0u64, 0u64);
    let mut inside = 0usize;

    for sweep in 0..config.burn_in + config.sweeps {
        for _ in 0..sites {
            let s = rng.random_range(0..sites);
            let y = prior.sample(&mut rng);
            let dh = mm.delta(&st, s, y);
            let ok = if target.shell.is_empty() {
                true
            } else {
                let h: Vec<f64> = st.energy.iter().zip(&dh).map(|(a, b)| a + b).collect();
                target.inside(&h)
            };
            let accept = ok && {
                let de: f64 = target.tilt.iter().zip(&dh).map(|(b, d)| b * d).sum();
                de <= 0.0 || rng.random::<f64>() < (-n * de).exp()
            };
            let recording = sweep >= config.burn_in;
            if recording {
                proposed += 1;
            }
            if accept {
                mm.apply(&mut st, s, y, &dh);
                if recording {
                    accepted += 1;
                }
            }
        }
        if sweep % 1000 == 999 {
            mm.refresh(&mut st);
        }
        if sweep < config.burn_in {
            continue;
        }
        let k = sweep - config.burn_in;
        let inside_now = target.inside(&st.energy);
        assert!(
            target.shell.is_empty() || inside_now,
            "shell chain recorded a sample outside the shell"
        );
        inside += inside_now as usize;
        observe(&mm, &st);
        let m = mm.site_mean(&st);
        for (t, v) in block_x.iter_mut().zip(st.flat()) {
            *t += v;
        }
        for (t, v) in block_h.iter_mut().zip(&st.energy) {
            *t += v;
        }
        block_m += m;
        block_abs += m.abs();
        block_count += 1;
        trace.push(st.energy[0]);
        let last_block = snapshots.len() + 1 == blocks;
        if (!last_block && block_count == per_block) || k + 1 == config.sweeps {
            let c = block_count as f64;
            snapshots.push(BlockSnapshot {
                index: snapshots.len(),
                energy: block_h.iter().map(|v| v / c).collect(),
                macrostate: model
                    .space
                    .macrostate(block_x.iter().map(|v| v / c).collect()),
                site_mean: block_m / c,
                abs_site_mean: block_abs / c,
            });
            for (t, v) in total_x.iter_mut().zip(&block_x) {
                *t += v;
            }
            for (t, v) in total_h.iter_mut().zip(&block_h) {
                *t += v;
            }
            total_m += block_m;
            total_abs += block_abs;
            block_x.iter_mut().for_each(|v| *v = 0.0);
            block_h.iter_mut().for_each(|v| *v = 0.0);
            (block_m, block_abs, block_count) = (0.0, 0.0, 0);
        }
    }

    let recorded = config.sweeps as f64;
    Ok(ChainResult {
        config: config.clone(),
        sites,
        accepted_fraction: if proposed == 0 {
            0.0
        } else {
            accepted as f64 / proposed as f64
        },
        mean_macrostate: model
            .space
            .macrostate(total_x.iter().map(|v| v / recorded).collect()),
        mean_energy: total_h.iter().map(|v| v / recorded).collect(),
        site_mean: total_m / recorded,
        abs_site_mean: total_abs / recorded,
        shell_occupancy: (!target.shell.is_empty()).then(|| inside as f64 / recorded),
        shell_step: step,
        split_rhat: split_rhat(&trace),
        blocks: snapshots,
    })
}

/// Independent chains in parallel, results in input order.
pub fn run_chains(model: &Model, configs: &[ChainConfig]) -> Vec<Result<ChainResult>> {
    configs.par_iter().map(|c| run_chain(model, c)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_builtin, BuiltinSpec};

    fn cw() -> Model {
        build_builtin(&BuiltinSpec::curie_weiss()).unwrap()
    }

    fn canonical(beta: f64, sites: usize, sweeps: usize, seed: u64) -> ChainConfig {
        ChainConfig::new(
            ChainEnsemble::Canonical { beta: vec![beta] },
            sites,
            sweeps,
            seed,
        )
    }

    #[test]
    fn zero_tilt_samples_the_prior() {
        let m = build_builtin(&BuiltinSpec::three_state_default()).unwrap();
        let r = run_chain(&m, &canonical(0.0, 30, 4000, 1)).unwrap();
        assert_eq!(r.accepted_fraction, 1.0);
        let x = r.mean_macrostate.entries().unwrap().to_vec();
        for (k, p) in [0.3, 0.45, 0.25].iter().enumerate() {
            let se = r.standard_error(|b| b.macrostate.entries().unwrap()[k]);
            assert!(
                (x[k] - p).abs() <= 3.0 * se + 1e-3,
                "letter {k}: {} vs {p} (se {se})",
                x[k]
            );
        }
    }

    #[test]
    fn curie_weiss_chains() {
        let m = cw();
        let r = run_chain(&m, &canonical(0.5, 64, 4000, 3)).unwrap();
        let se = r.standard_error(|b| b.site_mean);
        assert!(
            r.site_mean.abs() <= 3.0 * se + 0.02,
            "{} (se {se})",
            r.site_mean
        );

        let r = run_chain(&m, &canonical(2.0, 64, 20_000, 7)).unwrap();
        assert!(
            (r.abs_site_mean - 0.9575).abs() < 0.05,
            "{}",
            r.abs_site_mean
        );
        assert!(r.accepted_fraction > 0.0 && r.accepted_fraction < 1.0);
    }

    #[test]
    fn shell_chain() {
        let m = cw();
        let cfg = ChainConfig::new(
            ChainEnsemble::Shell {
                u: vec![-0.125],
                r: 0.01,
            },
            64,
            2000,
            7,
        );
        let r = run_chain(&m, &cfg).unwrap();
        assert_eq!(r.shell_occupancy, Some(1.0));
        assert!((r.abs_site_mean - 0.5).abs() < 0.05);
        assert!(r.shell_step.unwrap() <= 0.02);

        let cfg = ChainConfig::new(
            ChainEnsemble::Shell {
                u: vec![0.2],
                r: 0.01,
            },
            64,
            100,
            7,
        );
        assert!(matches!(
            run_chain(&m, &cfg),
            Err(Error::Feasibility { .. })
        ));

        let cfg = ChainConfig::new(
            ChainEnsemble::Shell {
                u: vec![-0.125],
                r: 0.001,
            },
            64,
            100,
            7,
        );
        assert!(matches!(run_chain(&m, &cfg), Err(Error::Config(_))));
    }

    #[test]
    fn wide_shell_is_unconstrained() {
        let m = cw();
        let wide = ChainConfig::new(
            ChainEnsemble::Shell {
                u: vec![-0.25],
                r: 1.0,
            },
            32,
            4000,
            5,
        );
        let a = run_chain(&m, &wide).unwrap();
        let b = run_chain(&m, &canonical(0.0, 32, 4000, 6)).unwrap();
        let se = a
            .standard_error(|b| b.energy[0])
            .hypot(b.standard_error(|b| b.energy[0]));
        assert!((a.mean_energy[0] - b.mean_energy[0]).abs() <= 4.0 * se + 1e-3);
        assert_eq!(a.accepted_fraction, 1.0);
    }

    #[test]
    fn deterministic_and_parallel_safe() {
        let m = cw();
        let cfgs: Vec<ChainConfig> = (0..4).map(|s| canonical(1.5, 16, 500, s)).collect();
        let par = run_chains(&m, &cfgs);
        for (c, p) in cfgs.iter().zip(par) {
            assert_eq!(run_chain(&m, c).unwrap(), p.unwrap());
        }
    }

    #[test]
    fn stationary_law_on_small_system() {
        // Four spins: state frequencies must match the exact tilted law
        // over all 16 configurations.
        let m = cw();
        let mm = MicroModel::new(&m, 4).unwrap();
        let beta = 1.3;
        let weight = |letters: &[usize]| {
            let h = mm.energy(letters)[0];
            (-(4.0 * beta * h)).exp()
        };
        let configs: Vec<Vec<usize>> = (0..16usize)
            .map(|c| (0..4).map(|s| (c >> s) & 1).collect())
            .collect();
        let z: f64 = configs.iter().map(|c| weight(c)).sum();

        let prior = WeightedIndex::new(mm.prior()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut st = mm.state(vec![0; 4]).unwrap();
        let mut counts = [0u64; 16];
        let steps = 400_000;
        for _ in 0..steps {
            let s = rng.random_range(0..4);
            let y = prior.sample(&mut rng);
            let dh = mm.delta(&st, s, y);
            if dh[0] <= 0.0 || rng.random::<f64>() < (-4.0 * beta * dh[0]).exp() {
                mm.apply(&mut st, s, y, &dh);
            }
            let idx: usize = st.letters.iter().enumerate().map(|(s, &y)| y << s).sum();
            counts[idx] += 1;
        }
        // Autocorrelation inflates the variance; thin the counts accordingly.
        let thin = 10.0;
        let chi2: f64 = configs
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let expect = weight(c) / z * steps as f64;
                (counts[i] as f64 - expect).powi(2) / expect / thin
            })
            .sum();
        assert!(chi2 < 40.0, "chi-square {chi2}");
    }

    #[test]
    fn trace_csv() {
        let r = run_chain(&cw(), &canonical(1.0, 8, 40, 2)).unwrap();
        let mut buf = Vec::new();
        r.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("block,H_1,x_0,x_1\n"));
        assert_eq!(text.lines().count(), 21);
    }
}
