//! Explore the contamination neighborhood of a quantized channel:
//! sample members, check membership witnesses, and derive the
//! contamination level implied by a noisy private hypothesis.

use privmap::dist::DiscreteDistribution;
use privmap::model::{generate_model, push_forward, ModelGenConfig, StochasticMapping};
use privmap::uncertainty::{
    implied_epsilon, membership_witness, prop1_delta, sample_uncertainty_set, threshold_theta,
    Budget, UncertaintySpec,
};

fn main() -> privmap::Result<()> {
    let model = generate_model(&ModelGenConfig {
        target_corr: 0.4,
        seed: 9,
        ..ModelGenConfig::new(2, 3, 2)
    })?;
    let nominal = push_forward(&model, &StochasticMapping::identity(2, 3))?.p_z_given_g();

    let delta = 0.3;
    let samples = sample_uncertainty_set(&nominal, delta, 50, 0)?;
    let members = samples
        .iter()
        .filter(|h| membership_witness(&nominal, &h.cond, delta).unwrap().is_some())
        .count();
    println!("{members}/50 sampled hypotheses verified as neighborhood members");

    // contamination level implied by observing the private state through
    // a binary symmetric channel with crossover 0.1
    let p_gn = DiscreteDistribution::new(vec![0.55, 0.45])?;
    let d = prop1_delta(&p_gn, 0.45, 0.1)?;
    println!("BSC(0.1) on the private state implies delta = {d:.5}");

    // privacy-threshold bookkeeping for an epsilon budget
    let spec = UncertaintySpec {
        delta,
        alpha: model.alpha(),
        big_delta: model.delta_floor(),
        budget: Budget::Epsilon(0.5),
    };
    let theta = threshold_theta(&spec)?;
    let eps_back = implied_epsilon(theta, delta, spec.alpha, spec.big_delta);
    println!(
        "epsilon budget 0.5 -> theta = {theta:.6} -> implied epsilon = {eps_back:.6}"
    );
    Ok(())
}
