//! Concave hull, superdifferentials and support flags of a sampled curve.
//!
//! ```text
//! cargo run --example concave_hull
//! ```

use ensemblekit::lft::{
    concave_hull, curve_rows, legendre_transform, write_rows, SampledCurve, SupportTolerances,
};
use ensemblekit::thermo::linspace;

fn main() -> ensemblekit::Result<()> {
    // A double well: concave near the ends, convex dip in the middle.
    let grid = linspace(-1.0, 1.0, 21);
    let values: Vec<f64> = grid
        .iter()
        .map(|u| -u * u + 0.6 * (-8.0 * u * u).exp())
        .collect();
    let curve = SampledCurve::new(grid, values)?;
    let hull = concave_hull(&curve);
    println!("hull vertices: {:?}", hull.vertices);

    for i in [0, 5, 10, 15, 20] {
        println!(
            "u = {:>5.2}  superdifferential {:?}",
            curve.grid[i],
            hull.superdifferential(i)
        );
    }

    let rows = curve_rows(&curve, &hull, SupportTolerances::for_curve(&curve));
    let mut out = Vec::new();
    write_rows(&rows, &mut out)?;
    println!();
    print!("{}", String::from_utf8_lossy(&out));

    // The double transform returns the hull.
    let betas = linspace(-4.0, 4.0, 401);
    let star = legendre_transform(&curve, &betas)?;
    let back = legendre_transform(&star, &curve.grid)?;
    let gap = back
        .values
        .iter()
        .zip(&hull.hull)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    println!();
    println!("max |s** - hull| = {gap:.2e}");
    Ok(())
}
