//! Entropy and free energy of the Curie–Weiss model against the closed form.
//!
//! ```text
//! cargo run --example curie_weiss_thermo
//! ```

use ensemblekit::lft::legendre_transform;
use ensemblekit::models::{build_builtin, BuiltinSpec};
use ensemblekit::thermo::{curie_weiss_entropy, linspace, SolverOptions, Thermo};

fn main() -> ensemblekit::Result<()> {
    let model = build_builtin(&BuiltinSpec::curie_weiss())?;
    let thermo = Thermo::new(&model, SolverOptions::default());

    let us = linspace(-0.5, 0.0, 11);
    let s = thermo.entropy_curve(&us)?;
    println!("{:>8} {:>12} {:>12}", "u", "s", "closed form");
    for (u, v) in us.iter().zip(&s.values) {
        println!("{u:>8.3} {v:>12.8} {:>12.8}", curie_weiss_entropy(*u));
    }

    let betas = linspace(0.0, 3.0, 7);
    let phi = thermo.free_energy_curve(&betas)?;
    let fine = thermo.entropy_curve(&linspace(-0.5, 0.0, 401))?;
    let conj = legendre_transform(&fine.sampled()?, &betas)?;
    println!();
    println!("{:>6} {:>12} {:>12}", "beta", "phi", "s*");
    for ((b, p), c) in betas.iter().zip(&phi.values).zip(&conj.values) {
        println!("{b:>6.2} {p:>12.8} {c:>12.8}");
    }

    // Above β = 1 the magnetization splits into ±m.
    let (lo, hi) = thermo.component_range(0)?;
    println!();
    println!(
        "energy range [{lo}, {hi}], phi(2) = {:.6}",
        thermo.free_energy(&[2.0])?
    );
    Ok(())
}
