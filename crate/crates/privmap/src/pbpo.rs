//! Person-by-person optimization: alternate between the Bayes fusion rule
//! and, per sensor, a two-point randomization over deterministic mappings
//! chosen by a small linear program with a detection-error privacy floor.

use crate::dist::min_avg_type12_error;
use crate::error::{Error, Result};
use crate::lp::solve_weights_simplex;
use crate::model::{
    advance, hg_index, push_forward, DeterministicMapping, FusionBundle, JointModel,
    StochasticMapping,
};
use crate::uncertainty::{threshold_theta, Budget, UncertaintySpec};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

pub const DEFAULT_PHI_CAP: usize = 1 << 20;

/// Candidate-family size below which the per-sensor step enumerates every
/// pair of deterministic mappings exactly instead of solving the surrogate
/// linear program.
pub const EXACT_PAIR_CAP: usize = 64;

/// Fusion-center decision table over the flat report alphabet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FusionRule {
    pub decisions: Vec<u8>,
}

impl FusionRule {
    pub fn decide(&self, z_flat: usize) -> usize {
        self.decisions[z_flat] as usize
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PbpoConfig {
    pub budget: Budget,
    pub delta: f64,
    /// Relative-improvement stopping tolerance.
    pub xi: f64,
    /// Initialization perturbation magnitude; default 0.05/|Z|.
    pub noise_scale: Option<f64>,
    pub max_iters: usize,
    pub seed: u64,
    pub phi_cap: usize,
    /// Independent perturbed initializations; the best feasible run wins.
    #[serde(default = "default_restarts")]
    pub restarts: usize,
}

fn default_restarts() -> usize {
    4
}

impl PbpoConfig {
    pub fn new(budget: Budget, delta: f64) -> Self {
        Self {
            budget,
            delta,
            xi: 1e-4,
            noise_scale: None,
            max_iters: 200,
            seed: 0,
            phi_cap: DEFAULT_PHI_CAP,
            restarts: default_restarts(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PbpoIteration {
    pub k: usize,
    pub objective: f64,
    pub privacy_slack: f64,
    pub wall_ms: f64,
    pub rule: Vec<u8>,
    pub mappings: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PbpoTrace {
    pub theta: f64,
    pub theta_eff: f64,
    pub iterations: Vec<PbpoIteration>,
}

#[derive(Debug, Clone)]
pub struct PbpoOutcome {
    pub mapping: StochasticMapping,
    pub rule: FusionRule,
    pub objective: f64,
    pub trace: PbpoTrace,
    /// Final per-sensor randomization weights from the last accepted LP
    /// solve (indices into the deterministic-mapping enumeration).
    pub supports: Vec<Vec<(usize, f64)>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrivacyReport {
    pub min_avg_err_nominal: f64,
    pub r_mf: f64,
    pub epsilon_achieved: f64,
    pub theta: f64,
    pub theta_eff: f64,
    pub constraint_met: bool,
}

/// All |Z|^|X| deterministic mappings in lexicographic order of their
/// function tables; the first maps everything to the first report symbol.
pub fn enumerate_phi(obs_alphabet: usize, quant_alphabet: usize) -> Result<Vec<DeterministicMapping>> {
    let mut count = 1usize;
    for _ in 0..obs_alphabet {
        count = count
            .checked_mul(quant_alphabet)
            .filter(|&c| c <= DEFAULT_PHI_CAP)
            .ok_or_else(|| {
                Error::CapExceeded(format!(
                    "|Z|^|X| with |Z|={quant_alphabet}, |X|={obs_alphabet}"
                ))
            })?;
    }
    let mut out = Vec::with_capacity(count);
    let mut table = vec![0usize; obs_alphabet];
    loop {
        out.push(DeterministicMapping {
            table: table.clone(),
            quant_alphabet,
        });
        if !advance(&mut table, quant_alphabet) {
            break;
        }
    }
    Ok(out)
}

/// Bayes-optimal detector for the public hypothesis under the mapped law;
/// posterior ties decided as 0.
pub fn bayes_fusion_rule(model: &JointModel, mapping: &StochasticMapping) -> Result<FusionRule> {
    let fb = push_forward(model, mapping)?;
    Ok(rule_from_bundle(&fb))
}

pub fn rule_from_bundle(fb: &FusionBundle) -> FusionRule {
    let decisions = fb
        .p_z_and_h()
        .iter()
        .map(|zh| u8::from(zh[1] > zh[0]))
        .collect();
    FusionRule { decisions }
}

/// P(rule(Z) != H) under the mapped law.
pub fn error_under_rule(fb: &FusionBundle, rule: &FusionRule) -> f64 {
    fb.p_z_and_h()
        .iter()
        .enumerate()
        .map(|(z, zh)| zh[1 - rule.decide(z)])
        .sum()
}

/// min over fusion rules of the average Type I/II error for the nominal
/// private hypothesis under the mapped law.
pub fn nominal_min_avg_error(fb: &FusionBundle) -> f64 {
    min_avg_type12_error(&fb.p_z_given_g()).expect("binary rows")
}

/// Per-candidate detection cost and privacy value for sensor t with all
/// other sensors and the fusion rule held fixed.
pub struct SensorCoefficients {
    pub cost: Vec<f64>,
    pub priv_value: Vec<f64>,
}

/// Joint factor over the full report vector with sensor t's contribution
/// left out, plus the sensor-t digit of every flat report index.
pub(crate) fn sensor_partials(
    model: &JointModel,
    mapping: &StochasticMapping,
    t: usize,
) -> (Vec<[f64; 4]>, Vec<usize>) {
    let s = model.num_sensors();
    let x = model.obs_alphabet();
    let z = mapping.quant_alphabet();
    let mut per_sensor: Vec<Vec<[f64; 4]>> = Vec::with_capacity(s);
    for j in 0..s {
        let mut tab = vec![[0.0f64; 4]; z];
        for h in 0..2 {
            for g in 0..2 {
                let row = model.sensor(j).row(hg_index(h, g));
                for xi in 0..x {
                    for (zi, cell) in tab.iter_mut().enumerate() {
                        cell[hg_index(h, g)] += row.mass(xi) * mapping.prob(j, xi, zi);
                    }
                }
            }
        }
        per_sensor.push(tab);
    }
    let n = z.pow(s as u32);
    let mut partial = vec![[0.0f64; 4]; n];
    let mut zt_digit = vec![0usize; n];
    let mut idx = vec![0usize; s];
    let mut flat = 0usize;
    loop {
        let mut cell = [
            model.p_hg(0, 0),
            model.p_hg(0, 1),
            model.p_hg(1, 0),
            model.p_hg(1, 1),
        ];
        for (j, &zi) in idx.iter().enumerate() {
            if j == t {
                continue;
            }
            for k in 0..4 {
                cell[k] *= per_sensor[j][zi][k];
            }
        }
        partial[flat] = cell;
        zt_digit[flat] = idx[t];
        flat += 1;
        if !advance(&mut idx, z) {
            break;
        }
    }
    (partial, zt_digit)
}

/// Per-(h,g) report-symbol masses at sensor t induced by one deterministic
/// candidate mapping.
pub(crate) fn phi_symbol_masses(
    model: &JointModel,
    t: usize,
    phi: &DeterministicMapping,
) -> Vec<[f64; 4]> {
    let mut u = vec![[0.0f64; 4]; phi.quant_alphabet];
    for (xi, &zt) in phi.table.iter().enumerate() {
        for k in 0..4 {
            u[zt][k] += model.sensor(t).row(k).mass(xi);
        }
    }
    u
}

pub fn lp_coefficients_for_sensor(
    model: &JointModel,
    mapping: &StochasticMapping,
    rule: &FusionRule,
    t: usize,
    phis: &[DeterministicMapping],
) -> Result<SensorCoefficients> {
    let x = model.obs_alphabet();
    let z = mapping.quant_alphabet();
    let n = rule.decisions.len();
    let (partial, zt_digit) = sensor_partials(model, mapping, t);
    if partial.len() != n {
        return Err(Error::InvalidParameter(
            "fusion rule size does not match the report alphabet".into(),
        ));
    }
    let pg = model.p_g();
    let rows: Vec<&[f64]> = (0..4).map(|r| model.sensor(t).row(r).masses()).collect();

    let results: Vec<(f64, f64)> = phis
        .par_iter()
        .map(|phi| {
            let mut u = vec![[0.0f64; 4]; z];
            for xi in 0..x {
                let zt = phi.table[xi];
                for k in 0..4 {
                    u[zt][k] += rows[k][xi];
                }
            }
            let mut cost = 0.0;
            let mut tv = 0.0;
            for zf in 0..n {
                let ut = &u[zt_digit[zf]];
                let p = [
                    partial[zf][0] * ut[0],
                    partial[zf][1] * ut[1],
                    partial[zf][2] * ut[2],
                    partial[zf][3] * ut[3],
                ];
                cost += if rule.decide(zf) == 0 {
                    p[2] + p[3]
                } else {
                    p[0] + p[1]
                };
                tv += ((p[0] + p[2]) / pg.mass(0) - (p[1] + p[3]) / pg.mass(1)).abs();
            }
            let priv_value = 0.5 * (1.0 - 0.5 * tv);
            (cost, priv_value)
        })
        .collect();
    Ok(SensorCoefficients {
        cost: results.iter().map(|r| r.0).collect(),
        priv_value: results.iter().map(|r| r.1).collect(),
    })
}

/// Mixes deterministic mappings into a stochastic row table.
pub fn mixture_rows(
    phis: &[DeterministicMapping],
    weights: &[(usize, f64)],
    obs_alphabet: usize,
    quant_alphabet: usize,
) -> Vec<Vec<f64>> {
    let mut rows = vec![vec![0.0f64; quant_alphabet]; obs_alphabet];
    for &(idx, w) in weights {
        for (xi, row) in rows.iter_mut().enumerate() {
            row[phis[idx].table[xi]] += w;
        }
    }
    rows
}

/// Smallest uniform mixing that restores the column floor; identity when
/// the floor already holds.
pub fn project_columns(rows: &mut [Vec<f64>], delta_floor: f64) {
    let z = rows[0].len();
    let x = rows.len();
    let mut col = vec![0.0f64; z];
    for row in rows.iter() {
        for (zi, &v) in row.iter().enumerate() {
            col[zi] += v;
        }
    }
    let cmin = col.iter().cloned().fold(f64::INFINITY, f64::min);
    if cmin >= delta_floor {
        return;
    }
    let target = x as f64 / z as f64;
    let w = ((delta_floor - cmin) / (target - cmin)).clamp(0.0, 1.0);
    for row in rows.iter_mut() {
        for v in row.iter_mut() {
            *v = (1.0 - w) * *v + w / z as f64;
        }
    }
}

pub(crate) fn perturbed_uniform(
    obs_alphabet: usize,
    quant_alphabet: usize,
    noise_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let base = 1.0 / quant_alphabet as f64;
    let mut rows = Vec::with_capacity(obs_alphabet);
    for _ in 0..obs_alphabet {
        let noise: Vec<f64> = (0..quant_alphabet)
            .map(|_| rng.gen_range(-noise_scale..noise_scale))
            .collect();
        let mean: f64 = noise.iter().sum::<f64>() / quant_alphabet as f64;
        let mut row: Vec<f64> = noise.iter().map(|v| base + v - mean).collect();
        // keep the perturbed row a valid distribution under any magnitude
        let min = row.iter().cloned().fold(f64::INFINITY, f64::min);
        if min < 0.0 {
            let scale = base / (base - min) * 0.99;
            for v in row.iter_mut() {
                *v = base + (*v - base) * scale;
            }
        }
        rows.push(row);
    }
    rows
}

/// Exact per-sensor best response for small candidate families.  For every
/// pair of deterministic mappings, the nominal detection-error floor is
/// concave in the mixing weight (so the feasible weight set is an interval)
/// and the Bayes error is concave too (so the minimum sits at an interval
/// endpoint); endpoints are located by bisection from a feasible anchor.
/// Returns the best (Bayes error, weights) over all pairs, or None when no
/// pair admits a feasible weight.
fn exact_pair_response(
    model: &JointModel,
    mapping: &StochasticMapping,
    t: usize,
    phis: &[DeterministicMapping],
    theta_eff: f64,
) -> Option<(f64, Vec<(usize, f64)>)> {
    let (partial, zt_digit) = sensor_partials(model, mapping, t);
    let n = partial.len();
    let pg = model.p_g();
    let (pg0, pg1) = (pg.mass(0), pg.mass(1));
    let us: Vec<Vec<[f64; 4]>> = phis
        .iter()
        .map(|p| phi_symbol_masses(model, t, p))
        .collect();
    // Bayes error and nominal min-average error of the w-mixture of
    // candidates a and b at sensor t, with everything else held fixed.
    let eval = |a: usize, b: usize, w: f64| -> (f64, f64) {
        let mut err = 0.0;
        let mut tv = 0.0;
        for zf in 0..n {
            let ua = &us[a][zt_digit[zf]];
            let ub = &us[b][zt_digit[zf]];
            let mut p = [0.0f64; 4];
            for k in 0..4 {
                p[k] = partial[zf][k] * (w * ua[k] + (1.0 - w) * ub[k]);
            }
            err += (p[0] + p[1]).min(p[2] + p[3]);
            tv += ((p[0] + p[2]) / pg0 - (p[1] + p[3]) / pg1).abs();
        }
        (err, 0.5 * (1.0 - 0.5 * tv))
    };
    let best = (0..phis.len())
        .into_par_iter()
        .map(|a| {
            let mut local: Option<(f64, usize, usize, f64)> = None;
            for b in a..phis.len() {
                let feas = |w: f64| eval(a, b, w).1 >= theta_eff - 1e-12;
                let (f0, f1) = (feas(0.0), feas(1.0));
                let anchor = if f0 {
                    Some(0.0)
                } else if f1 {
                    Some(1.0)
                } else {
                    (1..40).map(|k| k as f64 / 40.0).find(|&w| feas(w))
                };
                let Some(wf) = anchor else { continue };
                let mut cands = [0.0f64; 2];
                if f0 {
                    cands[0] = 0.0;
                } else {
                    let (mut lo, mut hi) = (0.0, wf);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if feas(mid) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    cands[0] = hi;
                }
                if f1 {
                    cands[1] = 1.0;
                } else {
                    let (mut lo, mut hi) = (wf, 1.0);
                    for _ in 0..60 {
                        let mid = 0.5 * (lo + hi);
                        if feas(mid) {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    cands[1] = lo;
                }
                for w in cands {
                    let (err, _) = eval(a, b, w);
                    let key = (err, a, b);
                    let better = local.map_or(true, |(e, la, lb, _)| {
                        key.0.total_cmp(&e).then((key.1, key.2).cmp(&(la, lb)))
                            == std::cmp::Ordering::Less
                    });
                    if better {
                        local = Some((err, a, b, w));
                    }
                }
            }
            local
        })
        .reduce(
            || None,
            // lexicographic tie-break keeps the result order-independent
            |x, y| match (x, y) {
                (Some(a), Some(b)) => {
                    if a.0.total_cmp(&b.0).then((a.1, a.2).cmp(&(b.1, b.2)))
                        == std::cmp::Ordering::Greater
                    {
                        Some(b)
                    } else {
                        Some(a)
                    }
                }
                (a, None) => a,
                (None, b) => b,
            },
        );
    best.map(|(err, a, b, w)| {
        let weights = if a == b || w >= 1.0 {
            vec![(a, 1.0)]
        } else if w <= 0.0 {
            vec![(b, 1.0)]
        } else {
            vec![(a, w), (b, 1.0 - w)]
        };
        (err, weights)
    })
}

/// Derives the threshold and its effective value from the config.
pub fn thresholds(model: &JointModel, cfg: &PbpoConfig) -> Result<(f64, f64)> {
    let spec = UncertaintySpec {
        delta: cfg.delta,
        alpha: model.alpha(),
        big_delta: model.delta_floor(),
        budget: cfg.budget,
    };
    let theta = threshold_theta(&spec)?;
    Ok((theta, theta / (1.0 - cfg.delta)))
}

pub fn pbpo_optimize(model: &JointModel, cfg: &PbpoConfig) -> Result<PbpoOutcome> {
    let (_, theta_eff) = thresholds(model, cfg)?;
    let mut best: Option<(bool, PbpoOutcome)> = None;
    for k in 0..cfg.restarts.max(1) {
        let seed = cfg.seed ^ (k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let out = pbpo_optimize_single(model, cfg, seed)?;
        let feasible =
            nominal_min_avg_error(&push_forward(model, &out.mapping)?) >= theta_eff - 1e-9;
        let better = match &best {
            None => true,
            Some((bf, b)) => (feasible, -out.objective) > (*bf, -b.objective),
        };
        if better {
            best = Some((feasible, out));
        }
    }
    Ok(best.expect("at least one restart").1)
}

fn pbpo_optimize_single(model: &JointModel, cfg: &PbpoConfig, seed: u64) -> Result<PbpoOutcome> {
    if cfg.xi <= 0.0 {
        return Err(Error::InvalidParameter("xi must be positive".into()));
    }
    let s = model.num_sensors();
    let x = model.obs_alphabet();
    let z = model.quant_alphabet();
    let noise_scale = cfg.noise_scale.unwrap_or(0.05 / z as f64);
    if noise_scale >= 1.0 / z as f64 {
        return Err(Error::InvalidParameter(format!(
            "noise_scale {noise_scale} must be below 1/|Z|"
        )));
    }
    let (theta, theta_eff) = thresholds(model, cfg)?;
    let phis = enumerate_phi(x, z)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q = StochasticMapping::new(
        (0..s)
            .map(|_| perturbed_uniform(x, z, noise_scale, &mut rng))
            .collect(),
        z,
        model.delta_floor().min(x as f64 / z as f64),
    )?;

    let mut supports: Vec<Vec<(usize, f64)>> = vec![Vec::new(); s];
    let mut iterations = Vec::new();
    let start = Instant::now();

    let mut fb = push_forward(model, &q)?;
    let mut rule = rule_from_bundle(&fb);
    let mut obj = error_under_rule(&fb, &rule);

    for k in 0..cfg.max_iters {
        let prev_obj = obj;
        rule = rule_from_bundle(&fb);
        obj = error_under_rule(&fb, &rule);

        let exact = phis.len() <= EXACT_PAIR_CAP;
        for t in 0..s {
            let weights = if exact {
                match exact_pair_response(model, &q, t, &phis, theta_eff) {
                    Some((err, w)) if err <= obj + 1e-12 => w,
                    _ => continue,
                }
            } else {
                let co = lp_coefficients_for_sensor(model, &q, &rule, t, &phis)?;
                let weights = match solve_weights_simplex(&co.cost, &co.priv_value, theta_eff) {
                    Ok(w) => w,
                    Err(Error::Infeasible(_)) => continue,
                    Err(e) => return Err(e),
                };
                let lp_obj: f64 = weights.iter().map(|&(i, w)| w * co.cost[i]).sum();
                if lp_obj > obj + 1e-12 {
                    continue;
                }
                weights
            };
            let mut rows = mixture_rows(&phis, &weights, x, z);
            project_columns(&mut rows, q.delta_floor());
            let mut candidate = q.clone();
            candidate.set_sensor(t, rows);
            let cand_fb = push_forward(model, &candidate)?;
            let cand_obj = if exact {
                error_under_rule(&cand_fb, &rule_from_bundle(&cand_fb))
            } else {
                error_under_rule(&cand_fb, &rule)
            };
            if cand_obj <= obj + 1e-12 && nominal_min_avg_error(&cand_fb) >= theta_eff - 1e-9 {
                q = candidate;
                fb = cand_fb;
                obj = cand_obj;
                supports[t] = weights;
                if exact {
                    rule = rule_from_bundle(&fb);
                }
            }
        }

        let slack = nominal_min_avg_error(&fb) - theta_eff;
        iterations.push(PbpoIteration {
            k,
            objective: obj,
            privacy_slack: slack,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            rule: rule.decisions.clone(),
            mappings: (0..s).map(|t| q.sensor(t).clone()).collect(),
        });

        if k > 0 && prev_obj > 0.0 && (prev_obj - obj) / prev_obj <= cfg.xi {
            break;
        }
        if obj == 0.0 {
            break;
        }
    }

    rule = rule_from_bundle(&fb);
    let objective = error_under_rule(&fb, &rule);
    Ok(PbpoOutcome {
        mapping: q,
        rule,
        objective,
        trace: PbpoTrace {
            theta,
            theta_eff,
            iterations,
        },
        supports,
    })
}

/// Checks the final mapping against the privacy machinery: the nominal
/// detection-error floor, the most-favorable contaminated pair, and the
/// achieved budget on it.
pub fn validate_privacy(
    model: &JointModel,
    mapping: &StochasticMapping,
    cfg: &PbpoConfig,
) -> Result<PrivacyReport> {
    let (theta, theta_eff) = thresholds(model, cfg)?;
    let fb = push_forward(model, mapping)?;
    let nominal = fb.p_z_given_g();
    let min_avg = min_avg_type12_error(&nominal)?;
    let mfd = crate::uncertainty::build_mfd(&nominal, cfg.delta, cfg.seed)?;
    let epsilon_achieved =
        crate::uncertainty::info_privacy_budget(&mfd.cond_mf, &model.p_g())?;
    Ok(PrivacyReport {
        min_avg_err_nominal: min_avg,
        r_mf: mfd.r_mf,
        epsilon_achieved,
        theta,
        theta_eff,
        constraint_met: min_avg >= theta_eff - 1e-9,
    })
}

/// Writes one JSON object per iteration: k, objective, privacy slack,
/// wall-clock time.
pub fn write_trace_jsonl(trace: &PbpoTrace, mut w: impl std::io::Write) -> std::io::Result<()> {
    for it in &trace.iterations {
        let rec = serde_json::json!({
            "k": it.k,
            "objective": it.objective,
            "privacy_slack": it.privacy_slack,
            "wall_ms": it.wall_ms,
        });
        writeln!(w, "{rec}")?;
    }
    Ok(())
}
