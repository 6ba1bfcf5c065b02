//! MAP estimation for viscous Burgers with a Fourier-Galerkin discretization.
//!
//! Minimizes the Onsager-Machlup functional at increasing truncation levels
//! and prints the distance between successive minimizers.
//!
//! ```text
//! cargo run --release --example map_burgers
//! ```

use wispi::map::{map_refinement_study, MapModel, MapProblem};

fn main() -> wispi::error::Result<()> {
    let problem = MapProblem::new(MapModel::Burgers, vec![8, 16, 32], 7);
    let rows = map_refinement_study(&problem)?;
    println!("{:>4} {:>16} {:>12} {:>10}", "n", "I_min", "succ_diff", "grad");
    for r in &rows {
        let diff = r.succ_diff.map(|d| format!("{d:.3e}")).unwrap_or_else(|| "-".into());
        println!("{:>4} {:>16.10} {:>12} {:>10.1e}", r.n, r.i_min, diff, r.grad_norm);
    }
    Ok(())
}
