//! Canonical and energy-shell Metropolis chains for Curie–Weiss spins, and
//! the shell-width ladder.
//!
//! ```text
//! cargo run --release --example metropolis_sampling
//! ```

use ensemblekit::models::{build_builtin, BuiltinSpec};
use ensemblekit::sampler::{exact_shell_probability, run_chains, ChainConfig, ChainEnsemble};

fn main() -> ensemblekit::Result<()> {
    let model = build_builtin(&BuiltinSpec::curie_weiss())?;

    let canonical: Vec<ChainConfig> = [0.5, 1.0, 1.5, 2.0]
        .iter()
        .map(|&b| ChainConfig::new(ChainEnsemble::Canonical { beta: vec![b] }, 64, 20_000, 7))
        .collect();
    println!("{:>6} {:>8} {:>10} {:>8}", "beta", "|m|", "stderr", "rhat");
    for (cfg, r) in canonical.iter().zip(run_chains(&model, &canonical)) {
        let r = r?;
        let ChainEnsemble::Canonical { beta } = &cfg.ensemble else {
            unreachable!()
        };
        println!(
            "{:>6.2} {:>8.4} {:>10.2e} {:>8.4}",
            beta[0],
            r.abs_site_mean,
            r.standard_error(|b| b.abs_site_mean),
            r.split_rhat
        );
    }

    // Narrowing the shell around u = -1/8 (|m| = 1/2).
    println!();
    println!(
        "{:>6} {:>8} {:>10} {:>12}",
        "r", "|m|", "accepted", "P(shell)"
    );
    let ladder: Vec<ChainConfig> = [0.08, 0.04, 0.02]
        .iter()
        .map(|&r| ChainConfig::new(ChainEnsemble::Shell { u: vec![-0.125], r }, 64, 20_000, 7))
        .collect();
    for (cfg, res) in ladder.iter().zip(run_chains(&model, &ladder)) {
        let res = res?;
        let ChainEnsemble::Shell { r, .. } = cfg.ensemble else {
            unreachable!()
        };
        println!(
            "{r:>6.2} {:>8.4} {:>10.4} {:>12.4e}",
            res.abs_site_mean,
            res.accepted_fraction,
            exact_shell_probability(&model, -0.125, r, 64)?
        );
    }
    Ok(())
}
