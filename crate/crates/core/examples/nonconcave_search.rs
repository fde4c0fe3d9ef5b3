//! Scan the three-state family for a nonconcave microcanonical entropy.
//!
//! ```text
//! cargo run --example nonconcave_search
//! ```

use ensemblekit::models::search_nonconcave;

fn main() -> ensemblekit::Result<()> {
    let quadratics: Vec<f64> = (0..9).map(|k| 1.7 + 0.1 * k as f64).collect();
    let priors = vec![
        vec![0.3, 0.45, 0.25],
        vec![0.25, 0.5, 0.25],
        vec![0.2, 0.6, 0.2],
        vec![0.35, 0.4, 0.25],
    ];
    match search_nonconcave(&quadratics, &priors, 81, 1e-6)? {
        Some(hit) => {
            println!("largest gap {:.3e} at u = {:.4}", hit.max_gap, hit.u_at_gap);
            println!("{}", serde_json::to_string_pretty(&hit.spec)?);
        }
        None => println!("every sampled entropy is concave"),
    }
    Ok(())
}
