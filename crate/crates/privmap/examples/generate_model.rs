//! Generate a random sensor network model, inspect its marginals, and
//! round-trip it through the TOML file format.

use privmap::model::{
    correlation_hg, generate_model, read_model, write_model, ModelGenConfig,
};

fn main() -> privmap::Result<()> {
    let cfg = ModelGenConfig {
        target_corr: 0.4,
        mi_target: Some(0.02),
        seed: 7,
        ..ModelGenConfig::new(3, 8, 2)
    };
    let model = generate_model(&cfg)?;

    println!(
        "generated model: {} sensors, |X| = {}, |Z| = {}",
        model.num_sensors(),
        model.obs_alphabet(),
        model.quant_alphabet()
    );
    println!("P(H=1) = {:.4}", model.p_h().mass(1));
    println!("P(G=1) = {:.4}", model.p_g().mass(1));
    println!("corr(H, G) = {:.4}", correlation_hg(&model)?);
    println!("I(X; H | G) per observation = {:.6} nats", model.mi_xh_given_g()?);
    println!("alpha (min conditional mass over fused X) = {:.3e}", model.alpha());
    println!("column-sum floor Delta = {:.4}", model.delta_floor());

    let dir = std::env::temp_dir().join("privmap-example-model.toml");
    write_model(&model, &dir)?;
    let back = read_model(&dir)?;
    assert_eq!(back.num_sensors(), model.num_sensors());
    println!("round-tripped through {}", dir.display());
    Ok(())
}
