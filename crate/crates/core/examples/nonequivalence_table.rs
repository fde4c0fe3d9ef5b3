//! A three-point table whose middle energy is invisible to every canonical
//! ensemble.
//!
//! ```text
//! cargo run --example nonequivalence_table
//! ```

use ensemblekit::classify::{classify, ClassifyOptions, Label};
use ensemblekit::equilibria::{canonical_set, microcanonical_set};
use ensemblekit::models::{build_builtin, BuiltinSpec};
use ensemblekit::thermo::{SolverOptions, Thermo};

fn main() -> ensemblekit::Result<()> {
    let model = build_builtin(&BuiltinSpec::three_point_table())?;
    let thermo = Thermo::new(&model, SolverOptions::default());

    let report = classify(&thermo, &[0.0, 1.0, 2.0], &ClassifyOptions::default())?;
    for r in &report.records {
        println!(
            "u = {}  s = {:.3}  hull = {:.3}  label = {:?}",
            r.u, r.s, r.s_hull, r.label
        );
        for c in &r.checks {
            println!(
                "    {} {} ({})",
                c.name,
                if c.passed { "ok" } else { "failed" },
                c.evidence
            );
        }
    }
    assert_eq!(
        report.record_at(1.0).map(|r| r.label),
        Some(Label::Nonequivalent)
    );

    println!();
    println!(
        "microcanonical set at u = 1: {:?}",
        microcanonical_set(&thermo, &[1.0])?.members
    );
    for beta in [-1.0, -0.3, -0.1, 0.0, 1.0] {
        println!(
            "canonical set at β = {beta:>4}: {:?}",
            canonical_set(&thermo, &[beta])?.members
        );
    }
    Ok(())
}
