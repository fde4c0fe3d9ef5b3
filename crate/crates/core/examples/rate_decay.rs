//! Exponential decay of ball probabilities with the number of sites,
//! compared with the rate function at the ball's center.
//!
//! ```text
//! cargo run --release --example rate_decay
//! ```

use ensemblekit::models::{build_builtin, BuiltinSpec};
use ensemblekit::sampler::{estimate_rate_decay, Ball, BallMetric, DecayConfig};
use ensemblekit::Macrostate;

fn magnetization_ball(m: f64, radius: f64) -> Ball {
    Ball {
        center: Macrostate::Simplex(vec![(1.0 - m) / 2.0, (1.0 + m) / 2.0]),
        radius,
        metric: BallMetric::Moment,
    }
}

fn main() -> ensemblekit::Result<()> {
    let model = build_builtin(&BuiltinSpec::curie_weiss())?;
    for (beta, m) in [(0.0, 0.8), (0.0, 0.4), (2.0, 0.0), (2.0, 0.9)] {
        let cfg = DecayConfig {
            beta: vec![beta],
            ball: magnetization_ball(m, 0.05),
            sites: vec![32, 64, 128],
            sweeps: 0,
            seed: 0,
        };
        let est = estimate_rate_decay(&model, &cfg)?;
        println!(
            "β = {beta}, m = {m}: slope {:.4} ± {:.4}, rate at center {:.4}, over the ball {:.4}",
            est.slope,
            est.slope_stderr,
            est.predicted,
            est.predicted_ball.unwrap_or(f64::NAN)
        );
        for p in &est.points {
            println!("    n = {:>4}  log P = {:.4}", p.sites, p.log_probability);
        }
    }
    Ok(())
}
