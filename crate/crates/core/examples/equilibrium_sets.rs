//! Canonical and microcanonical macrostate sets, compared with the
//! exhaustive search and decomposed by energy.
//!
//! ```text
//! cargo run --example equilibrium_sets
//! ```

use ensemblekit::classify::decompose_canonical;
use ensemblekit::equilibria::{
    brute_force_set, canonical_set, microcanonical_set, set_distance, Ensemble, BRUTE_FORCE_STEPS,
};
use ensemblekit::models::{build_builtin, BuiltinSpec};
use ensemblekit::thermo::{Frame, SolverOptions, Thermo};

fn main() -> ensemblekit::Result<()> {
    let model = build_builtin(&BuiltinSpec::curie_weiss())?;
    let thermo = Thermo::new(&model, SolverOptions::default());

    for beta in [0.5, 1.5, 2.0] {
        let set = canonical_set(&thermo, &[beta])?;
        let brute = brute_force_set(&model, Ensemble::Canonical { beta: vec![beta] })?;
        let cmp = set_distance(&set, &brute, 2.0 / BRUTE_FORCE_STEPS as f64);
        println!(
            "β = {beta}: {} members, objective {:.6}, vs grid {:?} at {:.1e}",
            set.len(),
            set.objective,
            cmp.relation,
            cmp.hausdorff
        );
    }

    let d = decompose_canonical(&thermo, Frame::Pure, 2.0, None, 1e-6)?;
    println!();
    println!("β = 2 splits into {} energy level(s)", d.parts.len());
    for p in &d.parts {
        println!(
            "    u = {:.6}: microcanonical members {:?}",
            p.u, p.micro.members
        );
    }
    println!("consistent: {}", d.consistent());

    let micro = microcanonical_set(&thermo, &[-0.125])?;
    println!();
    println!(
        "u = -0.125: {:?} (residual {:.1e})",
        micro.members, micro.residual
    );
    Ok(())
}
