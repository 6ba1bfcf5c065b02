//! Adjoints in a mass-weighted coefficient space.
//!
//! For a forward map `F: R^n_M -> R^d` the weighted adjoint is `M^{-1} F^T`,
//! and `<F u, y> = <u, F^# y>_M` holds to roundoff.
//!
//! ```text
//! cargo run --example weighted_adjoint
//! ```

use nalgebra::DVector;
use wispi::fem::{assemble_mass, observation_matrix, Mesh1D};
use wispi::weighted::{adjoint_forward, forward_norm};

fn main() -> wispi::error::Result<()> {
    let mesh = Mesh1D::with_width(1.0 / 32.0)?;
    let space = assemble_mass(&mesh);
    let f = observation_matrix(&mesh, &[0.25, 0.5, 0.75], 0.05)?;
    let f_sharp = adjoint_forward(&f, &space)?;

    let u = DVector::from_iterator(mesh.n_interior(), mesh.nodes().into_iter().map(|x| (3.0 * x).sin()));
    let y = DVector::from_vec(vec![1.0, -2.0, 0.5]);
    let lhs = (&f * &u).dot(&y);
    let rhs = space.inner_raw(&u, &(&f_sharp * &y));
    println!("<F u, y>         = {lhs:.15}");
    println!("<u, F# y>_M      = {rhs:.15}");
    println!("|difference|     = {:.3e}", (lhs - rhs).abs());
    println!("||F||_(M -> 2)   = {:.6}", forward_norm(&f, &space));
    println!("||F||_(2 -> 2)   = {:.6}  (Euclidean, mesh dependent)", f.norm());
    Ok(())
}
