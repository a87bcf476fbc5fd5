//! Error-exponent design for the many-sensor regime: Chernoff information,
//! per-mapping exponent tables, and the randomized-mapping program that
//! maximizes the detection exponent subject to a privacy rate cap.

use crate::dist::{ConditionalTable, DiscreteDistribution};
use crate::error::{Error, Result};
use crate::lp::{solve_weights_simplex, LinearProgram, LpStatus};
use crate::model::{DeterministicMapping, JointModel};
use crate::pbpo::enumerate_phi;
use rayon::prelude::*;
use serde::Serialize;

const GOLDEN_TOL: f64 = 1e-10;
const CUT_TOL: f64 = 1e-8;
const MAX_CUTS: usize = 50;

/// Which hypothesis a table or exponent refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Hyp {
    Public,
    Private,
}

#[derive(Debug, Clone, Serialize)]
pub struct AsymptoticSolution {
    /// Randomization weights over the deterministic-mapping enumeration.
    pub weights: Vec<(usize, f64)>,
    pub c_h: f64,
    pub c_g: f64,
    pub lambda_h: f64,
    pub lambda_g: f64,
    pub quant_alphabet: usize,
}

fn golden_min(mut f: impl FnMut(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while hi - lo > tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    let xm = 0.5 * (lo + hi);
    (xm, f(xm))
}

fn power_term(u1: f64, u0: f64, lambda: f64) -> f64 {
    if u1 == 0.0 && u0 == 0.0 {
        0.0
    } else if u1 == 0.0 {
        if lambda == 0.0 {
            u0
        } else {
            0.0
        }
    } else if u0 == 0.0 {
        if lambda == 1.0 {
            u1
        } else {
            0.0
        }
    } else {
        (lambda * u1.ln() + (1.0 - lambda) * u0.ln()).exp()
    }
}

fn log_power_sum(p0: &[f64], p1: &[f64], lambda: f64) -> f64 {
    let s: f64 = p0
        .iter()
        .zip(p1)
        .map(|(&a, &b)| power_term(b, a, lambda))
        .sum();
    if s <= 0.0 {
        f64::NEG_INFINITY
    } else {
        s.ln()
    }
}

/// Chernoff information between two distributions with its minimizing
/// exponent; infinite when the supports are disjoint.
pub fn chernoff_information(
    p0: &DiscreteDistribution,
    p1: &DiscreteDistribution,
) -> Result<(f64, f64)> {
    if p0.len() != p1.len() {
        return Err(Error::AlphabetMismatch(p0.len(), p1.len()));
    }
    if log_power_sum(p0.masses(), p1.masses(), 0.5).is_infinite() {
        return Ok((f64::INFINITY, 0.5));
    }
    let (lambda, val) = golden_min(
        |l| log_power_sum(p0.masses(), p1.masses(), l),
        0.0,
        1.0,
        GOLDEN_TOL,
    );
    Ok(((-val).max(0.0), lambda))
}

/// Exponent table entry for one deterministic mapping: the log power sum
/// of the induced single-sensor report distributions.
pub fn mu_value(cond: &ConditionalTable, phi: &DeterministicMapping, lambda: f64) -> f64 {
    let z = phi.quant_alphabet;
    let mut u = vec![[0.0f64; 2]; z];
    for (x, &zt) in phi.table.iter().enumerate() {
        u[zt][0] += cond.row(0).mass(x);
        u[zt][1] += cond.row(1).mass(x);
    }
    let s: f64 = u.iter().map(|c| power_term(c[1], c[0], lambda)).sum();
    if s <= 0.0 {
        f64::NEG_INFINITY
    } else {
        s.ln()
    }
}

/// Exponent table over all deterministic mappings for one hypothesis,
/// assuming identical sensors (sensor 0 is the template).
pub fn mu_table(
    model: &JointModel,
    lambda: f64,
    hyp: Hyp,
    phis: &[DeterministicMapping],
) -> Vec<f64> {
    let cond = match hyp {
        Hyp::Public => model.sensor_x_given_h(0),
        Hyp::Private => model.sensor_x_given_g(0),
    };
    phis.par_iter().map(|phi| mu_value(&cond, phi, lambda)).collect()
}

fn weighted_mu(cond: &ConditionalTable, phis: &[DeterministicMapping], w: &[(usize, f64)], lambda: f64) -> f64 {
    w.iter()
        .map(|&(i, wi)| wi * mu_value(cond, &phis[i], lambda))
        .sum()
}

/// Privacy exponent of a randomization: -min over lambda of the weighted
/// exponent table.
fn exponent_of(cond: &ConditionalTable, phis: &[DeterministicMapping], w: &[(usize, f64)]) -> (f64, f64) {
    let (lambda, val) = golden_min(|l| weighted_mu(cond, phis, w, l), 0.0, 1.0, GOLDEN_TOL);
    ((-val).max(0.0), lambda)
}

struct Inner<'a> {
    xg: &'a ConditionalTable,
    phis: &'a [DeterministicMapping],
    mu_g_cache: Vec<(f64, Vec<f64>)>,
    beta: f64,
}

impl Inner<'_> {
    fn mu_g(&mut self, lambda: f64) -> &[f64] {
        if let Some(pos) = self
            .mu_g_cache
            .iter()
            .position(|(l, _)| (l - lambda).abs() < 1e-14)
        {
            return &self.mu_g_cache[pos].1;
        }
        let v: Vec<f64> = self
            .phis
            .par_iter()
            .map(|phi| mu_value(self.xg, phi, lambda))
            .collect();
        self.mu_g_cache.push((lambda, v));
        &self.mu_g_cache.last().unwrap().1
    }

    /// For a fixed detection exponent parameter, minimize the weighted
    /// public exponent table subject to the privacy cut set, growing cuts
    /// until the true inner minimum is feasible.
    fn solve_fixed_lambda1(&mut self, mu_h: &[f64]) -> Result<(f64, Vec<(usize, f64)>)> {
        let n = mu_h.len();
        let mut cuts: Vec<f64> = vec![0.0, 0.5, 1.0];
        for _ in 0..MAX_CUTS {
            let mut a_ge = Vec::with_capacity(cuts.len());
            for &l in &cuts {
                a_ge.push(self.mu_g(l).to_vec());
            }
            let lp = LinearProgram {
                c: mu_h.to_vec(),
                a_eq: vec![vec![1.0; n]],
                b_eq: vec![1.0],
                a_ge,
                b_ge: vec![-self.beta; cuts.len()],
            };
            let sol = lp.solve()?;
            if sol.status != LpStatus::Optimal {
                return Err(Error::Infeasible(format!(
                    "privacy rate cap {} unattainable",
                    self.beta
                )));
            }
            let w: Vec<(usize, f64)> = sol
                .x
                .iter()
                .enumerate()
                .filter(|(_, &v)| v > 1e-12)
                .map(|(i, &v)| (i, v))
                .collect();
            let (lam_star, val) = golden_min(
                |l| weighted_mu(self.xg, self.phis, &w, l),
                0.0,
                1.0,
                CUT_TOL,
            );
            if val >= -self.beta - CUT_TOL {
                return Ok((sol.objective, w));
            }
            cuts.push(lam_star);
        }
        Err(Error::Infeasible("cutting planes did not converge".into()))
    }
}

/// Maximizes the public-hypothesis error exponent of an identical
/// per-sensor randomization subject to the private exponent staying at or
/// below `beta`. The report alphabet is clipped to |X|+1, which loses no
/// optimality.
pub fn solve_asymptotic(
    model: &JointModel,
    quant_alphabet: usize,
    beta: f64,
    lambda_tol: f64,
) -> Result<AsymptoticSolution> {
    if beta < 0.0 {
        return Err(Error::InvalidParameter("beta must be non-negative".into()));
    }
    let x = model.obs_alphabet();
    let z = quant_alphabet.min(x + 1).max(2);
    let phis = enumerate_phi(x, z)?;
    let xh = model.sensor_x_given_h(0);
    let xg = model.sensor_x_given_g(0);

    let mut inner = Inner {
        xg: &xg,
        phis: &phis,
        mu_g_cache: Vec::new(),
        beta,
    };
    let eval = |l1: f64, inner: &mut Inner| -> Result<(f64, Vec<(usize, f64)>)> {
        let mu_h: Vec<f64> = phis.par_iter().map(|p| mu_value(&xh, p, l1)).collect();
        inner.solve_fixed_lambda1(&mu_h)
    };

    // coarse grid, then local refinement of the detection exponent parameter
    let grid_n = 32usize;
    let mut best = (f64::INFINITY, 0.0f64);
    for i in 0..=grid_n {
        let l1 = i as f64 / grid_n as f64;
        let (v, _) = eval(l1, &mut inner)?;
        if v < best.0 {
            best = (v, l1);
        }
    }
    let span = 1.0 / grid_n as f64;
    let lo = (best.1 - span).max(0.0);
    let hi = (best.1 + span).min(1.0);
    let (lambda_h, _) = golden_min(
        |l1| eval(l1, &mut inner).map(|(v, _)| v).unwrap_or(f64::INFINITY),
        lo,
        hi,
        lambda_tol.max(1e-10),
    );
    let (obj, mut weights) = eval(lambda_h, &mut inner)?;

    // restore a two-point support with a single binding cut
    let mu_h: Vec<f64> = phis.par_iter().map(|p| mu_value(&xh, p, lambda_h)).collect();
    if weights.len() > 2 {
        let (mut lam2, _) = golden_min(
            |l| weighted_mu(&xg, &phis, &weights, l),
            0.0,
            1.0,
            CUT_TOL,
        );
        for _ in 0..MAX_CUTS {
            let mu_g: Vec<f64> = phis.par_iter().map(|p| mu_value(&xg, p, lam2)).collect();
            let w2 = solve_weights_simplex(&mu_h, &mu_g, -beta)?;
            let (lam_new, val) = golden_min(
                |l| weighted_mu(&xg, &phis, &w2, l),
                0.0,
                1.0,
                CUT_TOL,
            );
            if val >= -beta - CUT_TOL {
                let obj2: f64 = w2.iter().map(|&(i, wi)| wi * mu_h[i]).sum();
                if obj2 <= obj + 1e-7 {
                    weights = w2;
                }
                break;
            }
            lam2 = lam_new;
        }
    }

    let (c_g, lambda_g) = exponent_of(&xg, &phis, &weights);
    let obj_final: f64 = weights.iter().map(|&(i, wi)| wi * mu_h[i]).sum();
    let c_h = (-obj_final.min(obj)).max(0.0);
    Ok(AsymptoticSolution {
        weights,
        c_h,
        c_g,
        lambda_h,
        lambda_g,
        quant_alphabet: z,
    })
}

/// Exact Bayes error for s conditionally i.i.d. binary reports, computed
/// in log domain over the sufficient count statistic.
pub fn iid_bayes_error_binary(
    prior: &DiscreteDistribution,
    single: &ConditionalTable,
    s: usize,
) -> Result<f64> {
    if single.alphabet_size() != 2 || single.num_rows() != 2 || prior.len() != 2 {
        return Err(Error::InvalidParameter(
            "binary reports and hypotheses required".into(),
        ));
    }
    let ln = |v: f64| if v > 0.0 { v.ln() } else { f64::NEG_INFINITY };
    let (a0, b0) = (single.row(0).mass(0), single.row(0).mass(1));
    let (a1, b1) = (single.row(1).mass(0), single.row(1).mass(1));
    let mut log_binom = vec![0.0f64; s + 1];
    for k in 1..=s {
        log_binom[k] = log_binom[k - 1] + ((s - k + 1) as f64).ln() - (k as f64).ln();
    }
    let mut err = 0.0;
    for k in 0..=s {
        // k reports equal to the second symbol
        let l0 = ln(prior.mass(0)) + log_binom[k] + k as f64 * ln(b0) + (s - k) as f64 * ln(a0);
        let l1 = ln(prior.mass(1)) + log_binom[k] + k as f64 * ln(b1) + (s - k) as f64 * ln(a1);
        let m = l0.min(l1);
        if m.is_finite() {
            err += m.exp();
        }
    }
    Ok(err)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_model, ModelGenConfig};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dist(v: &[f64]) -> DiscreteDistribution {
        DiscreteDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn chernoff_equal_is_zero() {
        let p = dist(&[0.3, 0.7]);
        let (c, _) = chernoff_information(&p, &p).unwrap();
        assert!(c.abs() < 1e-12);
    }

    #[test]
    fn chernoff_disjoint_is_infinite() {
        let p = DiscreteDistribution::point_mass(0, 2);
        let q = DiscreteDistribution::point_mass(1, 2);
        assert!(chernoff_information(&p, &q).unwrap().0.is_infinite());
    }

    #[test]
    fn chernoff_symmetric_example() {
        let p0 = dist(&[0.7, 0.3]);
        let p1 = dist(&[0.3, 0.7]);
        let (c, l) = chernoff_information(&p0, &p1).unwrap();
        assert!((l - 0.5).abs() < 1e-5);
        let want = -(2.0 * 0.21f64.sqrt()).ln();
        assert!((c - want).abs() < 1e-10);
        assert!((c - 0.0872).abs() < 1e-4);
    }

    #[test]
    fn log_power_sum_is_convex_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let w0: Vec<f64> = (0..4).map(|_| rng.gen_range(0.01..1.0)).collect();
            let w1: Vec<f64> = (0..4).map(|_| rng.gen_range(0.01..1.0)).collect();
            let p0 = DiscreteDistribution::from_weights(&w0).unwrap();
            let p1 = DiscreteDistribution::from_weights(&w1).unwrap();
            let f = |l: f64| log_power_sum(p0.masses(), p1.masses(), l);
            for _ in 0..10 {
                let a = rng.gen_range(0.0..1.0);
                let b = rng.gen_range(0.0..1.0);
                assert!(f(0.5 * (a + b)) <= 0.5 * f(a) + 0.5 * f(b) + 1e-12);
            }
        }
    }

    #[test]
    fn mu_constant_and_identity() {
        let m = generate_model(&ModelGenConfig {
            seed: 2,
            ..ModelGenConfig::new(1, 3, 2)
        })
        .unwrap();
        let xh = m.sensor_x_given_h(0);
        let constant = DeterministicMapping {
            table: vec![0, 0, 0],
            quant_alphabet: 2,
        };
        assert!(mu_value(&xh, &constant, 0.3).abs() < 1e-12);
        let identity = DeterministicMapping {
            table: vec![0, 1, 2],
            quant_alphabet: 3,
        };
        let direct = log_power_sum(xh.row(0).masses(), xh.row(1).masses(), 0.3);
        assert!((mu_value(&xh, &identity, 0.3) - direct).abs() < 1e-12);
    }

    #[test]
    fn mu_matches_pushforward() {
        let m = generate_model(&ModelGenConfig {
            seed: 5,
            ..ModelGenConfig::new(1, 3, 2)
        })
        .unwrap();
        let xh = m.sensor_x_given_h(0);
        for phi in enumerate_phi(3, 2).unwrap() {
            let rows = phi.rows();
            let r0: Vec<f64> = (0..2)
                .map(|z| (0..3).map(|x| rows[x][z] * xh.row(0).mass(x)).sum())
                .collect();
            let r1: Vec<f64> = (0..2)
                .map(|z| (0..3).map(|x| rows[x][z] * xh.row(1).mass(x)).sum())
                .collect();
            for l in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let direct = log_power_sum(&r0, &r1, l);
                let got = mu_value(&xh, &phi, l);
                if direct.is_finite() {
                    assert!((got - direct).abs() < 1e-12);
                } else {
                    assert!(got.is_infinite());
                }
            }
        }
    }

    #[test]
    fn slack_beta_returns_unconstrained_optimum() {
        let m = generate_model(&ModelGenConfig {
            seed: 1,
            ..ModelGenConfig::new(1, 3, 2)
        })
        .unwrap();
        let sol = solve_asymptotic(&m, 2, 100.0, 1e-8).unwrap();
        assert_eq!(sol.weights.len(), 1);
        // matches the best single deterministic mapping
        let xh = m.sensor_x_given_h(0);
        let mut best = 0.0f64;
        for phi in enumerate_phi(3, 2).unwrap() {
            let rows = phi.rows();
            let r0: Vec<f64> = (0..2)
                .map(|z| (0..3).map(|x| rows[x][z] * xh.row(0).mass(x)).sum())
                .collect();
            let r1: Vec<f64> = (0..2)
                .map(|z| (0..3).map(|x| rows[x][z] * xh.row(1).mass(x)).sum())
                .collect();
            let (c, _) = chernoff_information(
                &DiscreteDistribution::from_weights(&r0).unwrap(),
                &DiscreteDistribution::from_weights(&r1).unwrap(),
            )
            .unwrap();
            best = best.max(c);
        }
        assert!((sol.c_h - best).abs() < 1e-6, "c_h {} vs best {}", sol.c_h, best);
    }

    #[test]
    fn beta_zero_forces_private_independence() {
        let m = generate_model(&ModelGenConfig {
            seed: 4,
            ..ModelGenConfig::new(1, 3, 2)
        })
        .unwrap();
        let sol = solve_asymptotic(&m, 2, 0.0, 1e-8).unwrap();
        assert!(sol.c_g <= 1e-6, "c_g {}", sol.c_g);
    }

    #[test]
    fn constraint_respected_at_moderate_beta() {
        for seed in 0..3 {
            let m = generate_model(&ModelGenConfig {
                seed,
                ..ModelGenConfig::new(1, 4, 2)
            })
            .unwrap();
            let sol = solve_asymptotic(&m, 2, 0.05, 1e-8).unwrap();
            assert!(sol.c_g <= 0.05 + 1e-6, "c_g {}", sol.c_g);
            assert!(sol.weights.len() <= 2);
            assert!(sol.c_h >= -1e-12);
        }
    }

    #[test]
    fn chernoff_matches_iid_error_slope() {
        let single = ConditionalTable::from_rows(vec![vec![0.7, 0.3], vec![0.35, 0.65]]).unwrap();
        let prior = DiscreteDistribution::uniform(2);
        let (c, _) = chernoff_information(
            &DiscreteDistribution::new(vec![0.7, 0.3]).unwrap(),
            &DiscreteDistribution::new(vec![0.35, 0.65]).unwrap(),
        )
        .unwrap();
        // incremental slope between two block lengths cancels the
        // polynomial prefactor that dominates the plain -ln(e)/s estimate
        let e1 = iid_bayes_error_binary(&prior, &single, 60).unwrap();
        let e2 = iid_bayes_error_binary(&prior, &single, 120).unwrap();
        let slope = -(e2.ln() - e1.ln()) / 60.0;
        assert!((slope - c).abs() / c < 0.1, "slope {slope} vs C {c}");
    }

    #[test]
    fn iid_error_matches_tensor_bruteforce() {
        let single = ConditionalTable::from_rows(vec![vec![0.8, 0.2], vec![0.4, 0.6]]).unwrap();
        let prior = dist(&[0.45, 0.55]);
        for s in [1usize, 2, 5, 8] {
            let fast = iid_bayes_error_binary(&prior, &single, s).unwrap();
            let mut brute = 0.0;
            for mask in 0u32..(1 << s) {
                let k = mask.count_ones() as usize;
                let p0 = prior.mass(0)
                    * single.row(0).mass(1).powi(k as i32)
                    * single.row(0).mass(0).powi((s - k) as i32);
                let p1 = prior.mass(1)
                    * single.row(1).mass(1).powi(k as i32)
                    * single.row(1).mass(0).powi((s - k) as i32);
                brute += p0.min(p1);
            }
            assert!((fast - brute).abs() < 1e-12);
        }
    }
}
