//! Two-component tables: mixed frames, their classification and the
//! equality of mixed and conditioned equilibrium sets.
//!
//! ```text
//! cargo run --example mixed_ensembles
//! ```

use ensemblekit::classify::{classify_mixed, verify_mixed_equality, ClassifyOptions};
use ensemblekit::models::{build_builtin, BuiltinSpec};
use ensemblekit::thermo::{Frame, SolverOptions, Thermo};

fn main() -> ensemblekit::Result<()> {
    let four = build_builtin(&BuiltinSpec::four_point_mixed())?;
    let thermo = Thermo::new(&four, SolverOptions::default());
    for (b1, u2) in [(0.0, 0.0), (0.0, 1.0), (-2.0, 1.0)] {
        let r = verify_mixed_equality(&thermo, b1, u2)?;
        println!(
            "β¹ = {b1:>4}, u² = {u2}: mixed {:?}, conditioned {:?}, equal {}",
            r.direct, r.via_rate, r.equal
        );
    }

    for (name, spec) in [
        ("dented", BuiltinSpec::dented_mixed()),
        ("flat", BuiltinSpec::flat_mixed()),
    ] {
        let model = build_builtin(&spec)?;
        let thermo = Thermo::new(&model, SolverOptions::default());
        let curve = thermo.mixed_entropy_fixed_beta1(0.0, &[0.0, 1.0, 2.0])?;
        let report = classify_mixed(
            &thermo,
            Frame::FixedBeta1(0.0),
            &[0.0, 1.0, 2.0],
            &ClassifyOptions::default(),
        )?;
        println!();
        println!("{name}: slice entropy {:?}", curve.values);
        for r in &report.records {
            println!("    u² = {}  {:?}", r.u, r.label);
        }
    }
    Ok(())
}
