//! Contamination uncertainty sets around a nominal private hypothesis:
//! membership witnesses, the noisy-hypothesis embedding, the most-favorable
//! contaminated distribution (MFD), and the relaxation thresholds that turn
//! a privacy budget into a detection-error floor.

use crate::dist::{
    likelihood_ratio_profile, min_avg_type12_error, ConditionalTable, DiscreteDistribution,
    CMP_TOL,
};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// How the detection-error threshold is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Budget {
    /// Privacy budget epsilon >= 0.
    Epsilon(f64),
    /// Threshold ratio r in (0, 1]: theta = r * theta0.
    Ratio(f64),
}

/// Parameters of the uncertainty set and threshold derivation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySpec {
    /// Contamination level in [0, 1).
    pub delta: f64,
    /// Support floor of the observation law given the private hypothesis.
    pub alpha: f64,
    /// Column floor of the mapping set.
    pub big_delta: f64,
    pub budget: Budget,
}

impl UncertaintySpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.delta) {
            return Err(Error::InvalidParameter(format!(
                "delta {} outside [0, 1)",
                self.delta
            )));
        }
        if self.alpha <= 0.0 || self.big_delta <= 0.0 {
            return Err(Error::InvalidParameter(
                "alpha and column floor must be positive".into(),
            ));
        }
        match self.budget {
            Budget::Epsilon(e) if e < 0.0 => {
                Err(Error::InvalidParameter(format!("epsilon {e} negative")))
            }
            Budget::Ratio(r) if !(0.0 < r && r <= 1.0) => {
                Err(Error::InvalidParameter(format!("ratio {r} outside (0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

/// A member of the contamination neighborhood with its witnesses.
#[derive(Debug, Clone)]
pub struct ContaminatedHypothesis {
    pub cond: ConditionalTable,
    pub f0: DiscreteDistribution,
    pub f1: DiscreteDistribution,
    pub prior: DiscreteDistribution,
}

/// The most-favorable contaminated distribution and its construction
/// witnesses.
#[derive(Debug, Clone)]
pub struct MfdResult {
    pub cond_mf: ConditionalTable,
    pub z_under: usize,
    pub z_over: usize,
    pub a1: f64,
    pub a2: f64,
    pub r_nominal: f64,
    pub r_mf: f64,
    pub tie_seed: u64,
}

/// Returns the contaminants (f0, f1) exhibiting `candidate` as a
/// delta-contamination of `nominal`, or None if it is not a member.
pub fn membership_witness(
    nominal: &ConditionalTable,
    candidate: &ConditionalTable,
    delta: f64,
) -> Result<Option<(DiscreteDistribution, DiscreteDistribution)>> {
    if nominal.alphabet_size() != candidate.alphabet_size() {
        return Err(Error::AlphabetMismatch(
            nominal.alphabet_size(),
            candidate.alphabet_size(),
        ));
    }
    if delta == 0.0 {
        for g in 0..2 {
            for z in 0..nominal.alphabet_size() {
                if (nominal.row(g).mass(z) - candidate.row(g).mass(z)).abs() > 1e-9 {
                    return Ok(None);
                }
            }
        }
        return Ok(Some((nominal.row(0).clone(), nominal.row(1).clone())));
    }
    let mut witnesses = Vec::with_capacity(2);
    for g in 0..2 {
        let f: Vec<f64> = candidate
            .row(g)
            .masses()
            .iter()
            .zip(nominal.row(g).masses())
            .map(|(c, n)| (c - (1.0 - delta) * n) / delta)
            .collect();
        if f.iter().any(|&v| v < -1e-9) {
            return Ok(None);
        }
        match DiscreteDistribution::new(f.iter().map(|&v| v.max(0.0)).collect()) {
            Ok(d) => witnesses.push(d),
            Err(_) => return Ok(None),
        }
    }
    let f1 = witnesses.pop().expect("two witnesses");
    let f0 = witnesses.pop().expect("two witnesses");
    Ok(Some((f0, f1)))
}

/// Contamination level induced by passing the private hypothesis through a
/// noisy channel with error mass at most `pi`: the noisy version lies in
/// the neighborhood of the clean one at this delta.
pub fn prop1_delta(p_gn: &DiscreteDistribution, min_mass: f64, pi: f64) -> Result<f64> {
    if p_gn.len() != 2 {
        return Err(Error::InvalidParameter(
            "binary private hypothesis required".into(),
        ));
    }
    let g_star = p_gn.min_mass();
    if !(pi >= 0.0 && pi < g_star.min(min_mass)) {
        return Err(Error::InvalidParameter(format!(
            "pi {pi} must lie in [0, min({g_star}, {min_mass}))"
        )));
    }
    Ok(1.0 - ((g_star - pi) / ((1.0 - pi) * g_star)) * (1.0 - pi / min_mass))
}

/// Builds the most-favorable contaminated distribution: point-mass
/// contaminants at the extreme likelihood-ratio outcomes, which minimize
/// the average Type I/II error over the whole neighborhood.
pub fn build_mfd(nominal: &ConditionalTable, delta: f64, tie_seed: u64) -> Result<MfdResult> {
    if nominal.num_rows() != 2 {
        return Err(Error::InvalidParameter(
            "binary conditioning alphabet required".into(),
        ));
    }
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "delta {delta} outside [0, 1)"
        )));
    }
    let n = nominal.alphabet_size();
    let profile = likelihood_ratio_profile(nominal, CMP_TOL)?;
    let mut rng = ChaCha8Rng::seed_from_u64(tie_seed);
    let z_under = profile.argmin_set[rng.gen_range(0..profile.argmin_set.len())];
    // the two contamination points must differ, else the construction
    // collapses both rows onto the same distribution
    let over_choices: Vec<usize> = profile
        .argmax_set
        .iter()
        .cloned()
        .filter(|&z| z != z_under)
        .collect();
    let z_over = if over_choices.is_empty() {
        profile.argmax_set[rng.gen_range(0..profile.argmax_set.len())]
    } else {
        over_choices[rng.gen_range(0..over_choices.len())]
    };
    if n > 1 && z_over == z_under {
        return Err(Error::Infeasible(
            "could not separate contamination points".into(),
        ));
    }
    let p0 = nominal.row(0);
    let p1 = nominal.row(1);
    if p1.mass(z_under) == 0.0 || p0.mass(z_over) == 0.0 {
        return Err(Error::InvalidDistribution(
            "zero denominator at a contamination point".into(),
        ));
    }
    let ratio = delta / (1.0 - delta);
    let a1 = (ratio + p0.mass(z_under)) / p1.mass(z_under);
    let a2 = (ratio + p1.mass(z_over)) / p0.mass(z_over);

    let mut row0: Vec<f64> = p0.masses().iter().map(|m| (1.0 - delta) * m).collect();
    let mut row1: Vec<f64> = p1.masses().iter().map(|m| (1.0 - delta) * m).collect();
    row0[z_under] += delta;
    row1[z_over] += delta;
    let cond_mf = ConditionalTable::from_rows(vec![row0, row1])?;

    let r_nominal = min_avg_type12_error(nominal)?;
    let r_mf = min_avg_type12_error(&cond_mf)?;
    if (r_mf - (1.0 - delta) * r_nominal).abs() > 1e-10 {
        return Err(Error::Infeasible(format!(
            "error scaling identity violated: {r_mf} vs {}",
            (1.0 - delta) * r_nominal
        )));
    }
    Ok(MfdResult {
        cond_mf,
        z_under,
        z_over,
        a1,
        a2,
        r_nominal,
        r_mf,
        tie_seed,
    })
}

/// min{ P(Z in argmin ratio | G=0), P(Z in argmax ratio | G=1) }.
pub fn compute_c_g(cond: &ConditionalTable, tie_tol: f64) -> Result<f64> {
    let profile = likelihood_ratio_profile(cond, tie_tol)?;
    let mass_min: f64 = profile.argmin_set.iter().map(|&z| cond.row(0).mass(z)).sum();
    let mass_max: f64 = profile.argmax_set.iter().map(|&z| cond.row(1).mass(z)).sum();
    Ok(mass_min.min(mass_max))
}

/// theta0 = (1 - delta)/2: the error floor attained only by a mapping that
/// makes the report independent of the private hypothesis.
pub fn theta0(delta: f64) -> f64 {
    (1.0 - delta) / 2.0
}

/// Detection-error threshold theta derived from the budget.
pub fn threshold_theta(spec: &UncertaintySpec) -> Result<f64> {
    spec.validate()?;
    Ok(match spec.budget {
        Budget::Epsilon(eps) => {
            0.5 * (1.0
                - (1.0 - (-eps).exp()) * (1.0 - spec.delta) * spec.alpha * spec.big_delta)
        }
        Budget::Ratio(r) => r * theta0(spec.delta),
    })
}

/// Smallest epsilon whose derived threshold equals `theta`; infinite when
/// theta is below the reach of any finite budget.
pub fn implied_epsilon(theta: f64, delta: f64, alpha: f64, big_delta: f64) -> f64 {
    let arg = 1.0 - (1.0 - 2.0 * theta) / ((1.0 - delta) * alpha * big_delta);
    if arg <= 0.0 {
        f64::INFINITY
    } else {
        -arg.ln()
    }
}

/// Smallest budget epsilon such that every posterior-to-prior ratio of the
/// private hypothesis given a report stays within [e^-eps, e^eps].
pub fn info_privacy_budget(
    cond: &ConditionalTable,
    prior: &DiscreteDistribution,
) -> Result<f64> {
    let marg = cond.marginal(prior)?;
    let mut budget: f64 = 0.0;
    for g in 0..cond.num_rows() {
        for z in 0..cond.alphabet_size() {
            let pz = marg.mass(z);
            if pz <= 0.0 {
                return Err(Error::InvalidDistribution(format!(
                    "report outcome {z} has zero marginal mass"
                )));
            }
            let p = cond.row(g).mass(z);
            if p == 0.0 {
                return Ok(f64::INFINITY);
            }
            budget = budget.max((p / pz).ln().abs());
        }
    }
    Ok(budget)
}

/// Draws members of the neighborhood: point-mass (vertex) contaminants
/// first — where the most-favorable construction binds — then
/// simplex-uniform contaminants, until n hypotheses are produced.
pub fn sample_uncertainty_set(
    nominal: &ConditionalTable,
    delta: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<ContaminatedHypothesis>> {
    if !(0.0..1.0).contains(&delta) {
        return Err(Error::InvalidParameter(format!(
            "delta {delta} outside [0, 1)"
        )));
    }
    let k = nominal.alphabet_size();
    let prior = DiscreteDistribution::uniform(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    let make = |f0: DiscreteDistribution, f1: DiscreteDistribution| -> Result<ContaminatedHypothesis> {
        let mut rows = Vec::with_capacity(2);
        for (g, f) in [(0usize, &f0), (1, &f1)] {
            let row: Vec<f64> = nominal
                .row(g)
                .masses()
                .iter()
                .zip(f.masses())
                .map(|(p, fv)| (1.0 - delta) * p + delta * fv)
                .collect();
            rows.push(row);
        }
        Ok(ContaminatedHypothesis {
            cond: ConditionalTable::from_rows(rows)?,
            f0,
            f1,
            prior: prior.clone(),
        })
    };
    // vertex pairs, most-favorable-style first
    let profile = likelihood_ratio_profile(nominal, CMP_TOL)?;
    let mut vertex_pairs: Vec<(usize, usize)> =
        vec![(profile.argmin_set[0], profile.argmax_set[profile.argmax_set.len() - 1])];
    for i in 0..k {
        for j in 0..k {
            vertex_pairs.push((i, j));
        }
    }
    for &(i, j) in vertex_pairs.iter().take(n) {
        out.push(make(
            DiscreteDistribution::point_mass(i, k),
            DiscreteDistribution::point_mass(j, k),
        )?);
    }
    while out.len() < n {
        let f0 = simplex_uniform(k, &mut rng);
        let f1 = simplex_uniform(k, &mut rng);
        out.push(make(f0, f1)?);
    }
    Ok(out)
}

fn simplex_uniform(k: usize, rng: &mut ChaCha8Rng) -> DiscreteDistribution {
    let w: Vec<f64> = (0..k).map(|_| -(rng.gen_range(1e-12..1.0f64)).ln()).collect();
    DiscreteDistribution::from_weights(&w).expect("positive weights")
}
