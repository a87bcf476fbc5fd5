//! Trade off the asymptotic error exponents of the public and private
//! hypotheses by randomizing over deterministic quantizers.

use privmap::asymptotic::solve_asymptotic;
use privmap::model::{generate_model, ModelGenConfig};

fn main() -> privmap::Result<()> {
    let model = generate_model(&ModelGenConfig {
        target_corr: 0.6,
        seed: 2,
        ..ModelGenConfig::new(1, 4, 2)
    })?;

    println!("beta       C_H (public)  C_G (private)  support");
    for beta in [0.0, 0.005, 0.02, 0.05, 0.2] {
        let sol = solve_asymptotic(&model, model.obs_alphabet() + 1, beta, 1e-6)?;
        println!(
            "{beta:<9.3}  {:<12.6}  {:<13.6}  {}",
            sol.c_h,
            sol.c_g,
            sol.weights.len()
        );
        assert!(sol.c_g <= beta + 1e-6);
        assert!(sol.weights.len() <= 2);
    }
    println!("(a larger cap beta on the private exponent frees up public accuracy)");
    Ok(())
}
