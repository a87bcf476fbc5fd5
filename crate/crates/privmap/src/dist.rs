//! Finite-alphabet probability primitives: distributions, conditional
//! tables, total variation, mutual information, Bayes errors and
//! likelihood-ratio profiles. Everything here is a pure function on
//! immutable values.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Normalization tolerance for probability vectors.
pub const NORM_TOL: f64 = 1e-12;
/// Default relative tolerance for value comparisons (likelihood-ratio ties).
pub const CMP_TOL: f64 = 1e-9;

/// A probability vector over a finite alphabet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    masses: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidDistribution("empty alphabet".into()));
        }
        for (i, &m) in masses.iter().enumerate() {
            if !(m >= 0.0) {
                return Err(Error::InvalidDistribution(format!(
                    "mass[{i}] = {m} is negative or NaN"
                )));
            }
        }
        let sum: f64 = masses.iter().sum();
        if (sum - 1.0).abs() > NORM_TOL * masses.len() as f64 {
            return Err(Error::InvalidDistribution(format!(
                "masses sum to {sum}, expected 1"
            )));
        }
        Ok(Self { masses })
    }

    /// Builds from non-negative weights, normalizing to sum 1.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(Error::InvalidDistribution("weights sum to zero".into()));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            masses: vec![1.0 / n as f64; n],
        }
    }

    pub fn point_mass(at: usize, n: usize) -> Self {
        let mut masses = vec![0.0; n];
        masses[at] = 1.0;
        Self { masses }
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn min_mass(&self) -> f64 {
        self.masses.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// Convex mixture (1-w)*self + w*other.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        check_alphabet(self.len(), other.len())?;
        Ok(Self {
            masses: self
                .masses
                .iter()
                .zip(&other.masses)
                .map(|(a, b)| (1.0 - w) * a + w * b)
                .collect(),
        })
    }
}

/// One distribution per conditioning value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    rows: Vec<DiscreteDistribution>,
}

impl ConditionalTable {
    pub fn new(rows: Vec<DiscreteDistribution>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidDistribution("no rows".into()));
        }
        let n = rows[0].len();
        for r in &rows[1..] {
            check_alphabet(n, r.len())?;
        }
        Ok(Self { rows })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(
            rows.into_iter()
                .map(DiscreteDistribution::new)
                .collect::<Result<_>>()?,
        )
    }

    pub fn num_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn alphabet_size(&self) -> usize {
        self.rows[0].len()
    }

    pub fn row(&self, i: usize) -> &DiscreteDistribution {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[DiscreteDistribution] {
        &self.rows
    }

    /// Marginal over outcomes under `prior` on the conditioning value.
    pub fn marginal(&self, prior: &DiscreteDistribution) -> Result<DiscreteDistribution> {
        check_alphabet(self.num_rows(), prior.len())?;
        let mut out = vec![0.0; self.alphabet_size()];
        for (r, row) in self.rows.iter().enumerate() {
            let p = prior.mass(r);
            for (z, m) in row.masses().iter().enumerate() {
                out[z] += p * m;
            }
        }
        DiscreteDistribution::new(out)
    }
}

/// Elementwise likelihood ratios p(.|1)/p(.|0) for a binary conditional,
/// with set-valued argmin/argmax under a relative tie tolerance.
#[derive(Debug, Clone)]
pub struct LikelihoodRatioProfile {
    pub ratios: Vec<f64>,
    pub argmin_set: Vec<usize>,
    pub argmax_set: Vec<usize>,
    /// Outcomes with zero mass under both hypotheses; removable, never
    /// silently included in the arg sets.
    pub excluded: Vec<usize>,
}

fn check_alphabet(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::AlphabetMismatch(a, b));
    }
    Ok(())
}

/// Total variation distance (1/2) sum |p - q|.
pub fn total_variation(p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    check_alphabet(p.len(), q.len())?;
    Ok(0.5
        * p.masses()
            .iter()
            .zip(q.masses())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// Mutual information I(A;B) in nats for a conditional p(b|a) and prior p(a).
/// 0 log 0 terms are treated as 0.
pub fn mutual_information(
    cond: &ConditionalTable,
    prior: &DiscreteDistribution,
) -> Result<f64> {
    check_alphabet(cond.num_rows(), prior.len())?;
    let marg = cond.marginal(prior)?;
    let mut info = 0.0;
    for (a, row) in cond.rows().iter().enumerate() {
        let pa = prior.mass(a);
        if pa == 0.0 {
            continue;
        }
        for (b, &pba) in row.masses().iter().enumerate() {
            if pba > 0.0 && marg.mass(b) > 0.0 {
                info += pa * pba * (pba / marg.mass(b)).ln();
            }
        }
    }
    Ok(info.max(0.0))
}

/// Bayes error of the optimal detector for a binary hypothesis with the
/// given prior: sum_z min(p0 * cond(z|0), p1 * cond(z|1)).
pub fn bayes_error(prior: &DiscreteDistribution, cond: &ConditionalTable) -> Result<f64> {
    if prior.len() != 2 || cond.num_rows() != 2 {
        return Err(Error::InvalidParameter(
            "bayes_error requires a binary conditioning alphabet".into(),
        ));
    }
    let (p0, p1) = (prior.mass(0), prior.mass(1));
    Ok(cond
        .row(0)
        .masses()
        .iter()
        .zip(cond.row(1).masses())
        .map(|(a, b)| (p0 * a).min(p1 * b))
        .sum())
}

/// Minimum over fusion rules of the average of Type I and Type II error
/// probabilities: (1/2)(1 - TV). Independent of any prior.
pub fn min_avg_type12_error(cond: &ConditionalTable) -> Result<f64> {
    if cond.num_rows() != 2 {
        return Err(Error::InvalidParameter(
            "min_avg_type12_error requires a binary conditioning alphabet".into(),
        ));
    }
    Ok(0.5 * (1.0 - total_variation(cond.row(0), cond.row(1))?))
}

/// Elementwise likelihood ratios with tie-tolerant argmin/argmax sets.
pub fn likelihood_ratio_profile(
    cond: &ConditionalTable,
    tie_tol: f64,
) -> Result<LikelihoodRatioProfile> {
    if cond.num_rows() != 2 {
        return Err(Error::InvalidParameter(
            "likelihood_ratio_profile requires a binary conditioning alphabet".into(),
        ));
    }
    let p0 = cond.row(0).masses();
    let p1 = cond.row(1).masses();
    let mut ratios = Vec::with_capacity(p0.len());
    let mut excluded = Vec::new();
    for z in 0..p0.len() {
        if p0[z] == 0.0 && p1[z] == 0.0 {
            excluded.push(z);
            ratios.push(f64::NAN);
        } else if p0[z] == 0.0 {
            ratios.push(f64::INFINITY);
        } else {
            ratios.push(p1[z] / p0[z]);
        }
    }
    let live: Vec<usize> = (0..p0.len()).filter(|z| !excluded.contains(z)).collect();
    if live.is_empty() {
        return Err(Error::InvalidDistribution(
            "all outcomes carry zero mass under both hypotheses".into(),
        ));
    }
    let min = live
        .iter()
        .map(|&z| ratios[z])
        .fold(f64::INFINITY, f64::min);
    let max = live
        .iter()
        .map(|&z| ratios[z])
        .fold(f64::NEG_INFINITY, f64::max);
    let argmin_set: Vec<usize> = live
        .iter()
        .cloned()
        .filter(|&z| ratio_close_min(ratios[z], min, tie_tol))
        .collect();
    let argmax_set: Vec<usize> = live
        .iter()
        .cloned()
        .filter(|&z| ratio_close_max(ratios[z], max, tie_tol))
        .collect();
    Ok(LikelihoodRatioProfile {
        ratios,
        argmin_set,
        argmax_set,
        excluded,
    })
}

fn ratio_close_min(r: f64, min: f64, tol: f64) -> bool {
    if min.is_infinite() {
        return r.is_infinite();
    }
    r <= min + tol * min.max(1.0)
}

fn ratio_close_max(r: f64, max: f64, tol: f64) -> bool {
    if max.is_infinite() {
        return r.is_infinite();
    }
    r >= max - tol * max.max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(v: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(v.to_vec()).unwrap()
    }

    fn table(rows: &[&[f64]]) -> ConditionalTable {
        ConditionalTable::from_rows(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    #[test]
    fn tv_identical_is_zero() {
        let u = DiscreteDistribution::uniform(4);
        assert_eq!(total_variation(&u, &u).unwrap(), 0.0);
    }

    #[test]
    fn tv_disjoint_is_one() {
        let p = DiscreteDistribution::point_mass(0, 2);
        let q = DiscreteDistribution::point_mass(1, 2);
        assert_eq!(total_variation(&p, &q).unwrap(), 1.0);
    }

    #[test]
    fn tv_direct_sum() {
        let p = dist(&[0.7, 0.3]);
        let q = dist(&[0.4, 0.6]);
        assert!((total_variation(&p, &q).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn tv_alphabet_mismatch() {
        let p = DiscreteDistribution::uniform(2);
        let q = DiscreteDistribution::uniform(3);
        assert!(matches!(
            total_variation(&p, &q),
            Err(Error::AlphabetMismatch(2, 3))
        ));
    }

    #[test]
    fn mi_identical_rows_is_zero() {
        let cond = table(&[&[0.3, 0.7], &[0.3, 0.7]]);
        let prior = DiscreteDistribution::uniform(2);
        assert!(mutual_information(&cond, &prior).unwrap().abs() < 1e-15);
    }

    #[test]
    fn mi_identity_channel_is_log2() {
        let cond = table(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let prior = DiscreteDistribution::uniform(2);
        let mi = mutual_information(&cond, &prior).unwrap();
        assert!((mi - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mi_bsc_crossover_01() {
        let cond = table(&[&[0.9, 0.1], &[0.1, 0.9]]);
        let prior = DiscreteDistribution::uniform(2);
        // log 2 - H_b(0.1) in nats, evaluated directly
        let hb = -(0.1f64 * 0.1f64.ln() + 0.9 * 0.9f64.ln());
        let expected = 2f64.ln() - hb;
        let mi = mutual_information(&cond, &prior).unwrap();
        assert!((mi - expected).abs() < 1e-12);
        assert!((mi - 0.368).abs() < 1e-3);
    }

    #[test]
    fn bayes_error_uninformative() {
        let cond = table(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let prior = dist(&[0.3, 0.7]);
        assert!((bayes_error(&prior, &cond).unwrap() - 0.3).abs() < 1e-15);
    }

    #[test]
    fn bayes_error_disjoint() {
        let cond = table(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let prior = dist(&[0.3, 0.7]);
        assert_eq!(bayes_error(&prior, &cond).unwrap(), 0.0);
    }

    #[test]
    fn bayes_error_uniform_prior_tv_identity() {
        let cond = table(&[&[0.7, 0.3], &[0.4, 0.6]]);
        let prior = DiscreteDistribution::uniform(2);
        assert!((bayes_error(&prior, &cond).unwrap() - 0.35).abs() < 1e-15);
    }

    #[test]
    fn min_avg_error_examples() {
        let same = table(&[&[0.3, 0.7], &[0.3, 0.7]]);
        assert!((min_avg_type12_error(&same).unwrap() - 0.5).abs() < 1e-15);
        let disjoint = table(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(min_avg_type12_error(&disjoint).unwrap(), 0.0);
        let c = table(&[&[0.7, 0.3], &[0.4, 0.6]]);
        assert!((min_avg_type12_error(&c).unwrap() - 0.35).abs() < 1e-15);
    }

    /// Brute force over all deterministic fusion rules on the outcome
    /// alphabet; oracle for min_avg_type12_error.
    pub fn brute_force_min_avg(cond: &ConditionalTable) -> f64 {
        let n = cond.alphabet_size();
        let mut best = f64::INFINITY;
        for rule in 0u32..(1u32 << n) {
            // rule bit z = 1 means decide G=1 on outcome z
            let mut type1 = 0.0; // P(decide 1 | G=0)
            let mut type2 = 0.0; // P(decide 0 | G=1)
            for z in 0..n {
                if rule >> z & 1 == 1 {
                    type1 += cond.row(0).mass(z);
                } else {
                    type2 += cond.row(1).mass(z);
                }
            }
            best = best.min(0.5 * (type1 + type2));
        }
        best
    }

    #[test]
    fn min_avg_error_matches_rule_enumeration() {
        let c = table(&[&[0.7, 0.3], &[0.4, 0.6]]);
        let brute = brute_force_min_avg(&c);
        assert!((min_avg_type12_error(&c).unwrap() - brute).abs() < 1e-12);
    }

    #[test]
    fn lr_profile_example() {
        let c = table(&[&[0.7, 0.3], &[0.4, 0.6]]);
        let lr = likelihood_ratio_profile(&c, CMP_TOL).unwrap();
        assert!((lr.ratios[0] - 4.0 / 7.0).abs() < 1e-15);
        assert!((lr.ratios[1] - 2.0).abs() < 1e-15);
        assert_eq!(lr.argmin_set, vec![0]);
        assert_eq!(lr.argmax_set, vec![1]);
    }

    #[test]
    fn lr_profile_identical_rows() {
        let c = table(&[&[0.4, 0.6], &[0.4, 0.6]]);
        let lr = likelihood_ratio_profile(&c, CMP_TOL).unwrap();
        assert_eq!(lr.argmin_set, vec![0, 1]);
        assert_eq!(lr.argmax_set, vec![0, 1]);
    }

    #[test]
    fn lr_profile_disjoint_supports() {
        let c = table(&[&[1.0, 0.0], &[0.0, 1.0]]);
        let lr = likelihood_ratio_profile(&c, CMP_TOL).unwrap();
        assert_eq!(lr.ratios[0], 0.0);
        assert!(lr.ratios[1].is_infinite());
        assert_eq!(lr.argmin_set, vec![0]);
        assert_eq!(lr.argmax_set, vec![1]);
    }

    #[test]
    fn lr_profile_flags_dead_outcome() {
        let c = table(&[&[0.5, 0.5, 0.0], &[0.2, 0.8, 0.0]]);
        let lr = likelihood_ratio_profile(&c, CMP_TOL).unwrap();
        assert_eq!(lr.excluded, vec![2]);
        assert!(!lr.argmin_set.contains(&2));
        assert!(!lr.argmax_set.contains(&2));
    }

    #[test]
    fn negative_mass_rejected() {
        assert!(DiscreteDistribution::new(vec![1.1, -0.1]).is_err());
    }
}
