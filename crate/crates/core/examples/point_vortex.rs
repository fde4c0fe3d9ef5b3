//! Point vortices on a coarse torus grid: energy range, entropy and the
//! concentration of the most probable vortex density at high energy.
//!
//! ```text
//! cargo run --release --example point_vortex
//! ```

use ensemblekit::classify::{classify, default_grid, ClassifyOptions};
use ensemblekit::equilibria::microcanonical_set;
use ensemblekit::models::{build_builtin, BuiltinSpec};
use ensemblekit::thermo::{Frame, SolverOptions, Thermo};

fn main() -> ensemblekit::Result<()> {
    let model = build_builtin(&BuiltinSpec::PointVortex {
        cells: 4,
        cutoff: 2,
        sites: None,
    })?;
    let thermo = Thermo::new(&model, SolverOptions::default());
    let (lo, hi) = thermo.component_range(0)?;
    println!("energy range [{lo:.4}, {hi:.4}]");

    let grid = default_grid(&thermo, Frame::Pure, 21)?;
    let opts = ClassifyOptions {
        verify: false,
        ..ClassifyOptions::default()
    };
    let report = classify(&thermo, &grid, &opts)?;
    for r in &report.records {
        println!(
            "u = {:>8.4}  s = {:>9.5}  hull = {:>9.5}  {:?}",
            r.u, r.s, r.s_hull, r.label
        );
    }

    let top = lo + 0.9 * (hi - lo);
    let set = microcanonical_set(&thermo, &[top])?;
    println!();
    println!("most probable densities at u = {top:.4}:");
    for x in &set.members {
        println!("    {:?}", x.entries().unwrap_or(&[]));
    }
    Ok(())
}
