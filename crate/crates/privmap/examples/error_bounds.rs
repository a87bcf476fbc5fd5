//! Sweep the privacy budget and print the sandwich of lower and upper
//! bounds on the optimal public detection error.

use privmap::bounds::bound_report;
use privmap::model::{generate_model, ModelGenConfig};

fn main() -> privmap::Result<()> {
    let model = generate_model(&ModelGenConfig {
        target_corr: 0.4,
        seed: 5,
        ..ModelGenConfig::new(2, 4, 2)
    })?;
    println!("epsilon      lower        upper");
    for eps in [1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0] {
        let rep = bound_report(&model, eps, 0.2, 100, 0)?;
        println!("{eps:<10.3}  {:<10.6}  {:<10.6}", rep.lower, rep.upper);
        assert!(rep.lower <= rep.upper + 1e-12);
    }
    let rep = bound_report(&model, 0.05, 0.2, 100, 0)?;
    println!(
        "at eps = 0.05: I(X;H|G) = {:.6}, TV of the H-conditionals = {:.6}, \
         {} sampled hypotheses",
        rep.i_xh_given_g, rep.tv_xh, rep.n_samples
    );
    Ok(())
}
