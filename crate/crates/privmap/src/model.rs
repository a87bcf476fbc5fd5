//! Sensor-network joint law p_{X,H,G}, random instance generation with a
//! prescribed H-G correlation, per-sensor privacy mappings, and exact
//! marginalization to the fusion-center laws.

use crate::dist::{mutual_information, ConditionalTable, DiscreteDistribution};
use crate::error::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Default cap on expanded joint alphabets (|Z|^s or |X|^s entries).
pub const DEFAULT_TENSOR_CAP: usize = 1 << 20;

/// Row index into a sensor conditional table for hypothesis pair (h, g).
#[inline]
pub fn hg_index(h: usize, g: usize) -> usize {
    h * 2 + g
}

/// Joint law of (X_1..X_s, H, G) with sensors conditionally independent
/// given (H, G). `hg_prior[hg_index(h, g)]` is p(H=h, G=g); each sensor
/// table has four rows indexed by `hg_index`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointModel {
    hg_prior: DiscreteDistribution,
    sensors: Vec<ConditionalTable>,
    quant_alphabet: usize,
    delta_floor: f64,
}

impl JointModel {
    pub fn new(
        hg_prior: DiscreteDistribution,
        sensors: Vec<ConditionalTable>,
        quant_alphabet: usize,
        delta_floor: f64,
    ) -> Result<Self> {
        if hg_prior.len() != 4 {
            return Err(Error::InvalidModel(
                "hg_prior must be a distribution over {0,1}^2".into(),
            ));
        }
        if sensors.is_empty() {
            return Err(Error::InvalidModel("at least one sensor required".into()));
        }
        let x = sensors[0].alphabet_size();
        for (t, s) in sensors.iter().enumerate() {
            if s.num_rows() != 4 {
                return Err(Error::InvalidModel(format!(
                    "sensor {t} must have 4 conditional rows"
                )));
            }
            if s.alphabet_size() != x {
                return Err(Error::InvalidModel(format!(
                    "sensor {t} alphabet {} differs from {x}",
                    s.alphabet_size()
                )));
            }
        }
        if quant_alphabet < 2 {
            return Err(Error::InvalidModel("quant alphabet must be >= 2".into()));
        }
        if delta_floor <= 0.0 || delta_floor > x as f64 / quant_alphabet as f64 {
            return Err(Error::InvalidModel(format!(
                "delta_floor {delta_floor} outside (0, |X|/|Z|]"
            )));
        }
        let m = Self {
            hg_prior,
            sensors,
            quant_alphabet,
            delta_floor,
        };
        if m.p_h().min_mass() <= 0.0 || m.p_g().min_mass() <= 0.0 {
            return Err(Error::InvalidModel(
                "H and G marginals must be strictly positive".into(),
            ));
        }
        Ok(m)
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.len()
    }

    pub fn obs_alphabet(&self) -> usize {
        self.sensors[0].alphabet_size()
    }

    pub fn quant_alphabet(&self) -> usize {
        self.quant_alphabet
    }

    pub fn delta_floor(&self) -> f64 {
        self.delta_floor
    }

    pub fn hg_prior(&self) -> &DiscreteDistribution {
        &self.hg_prior
    }

    pub fn sensor(&self, t: usize) -> &ConditionalTable {
        &self.sensors[t]
    }

    pub fn p_hg(&self, h: usize, g: usize) -> f64 {
        self.hg_prior.mass(hg_index(h, g))
    }

    pub fn p_h(&self) -> DiscreteDistribution {
        DiscreteDistribution::new(vec![
            self.p_hg(0, 0) + self.p_hg(0, 1),
            self.p_hg(1, 0) + self.p_hg(1, 1),
        ])
        .expect("marginal of valid prior")
    }

    pub fn p_g(&self) -> DiscreteDistribution {
        DiscreteDistribution::new(vec![
            self.p_hg(0, 0) + self.p_hg(1, 0),
            self.p_hg(0, 1) + self.p_hg(1, 1),
        ])
        .expect("marginal of valid prior")
    }

    /// Single-sensor conditional p_{X_t | G}(x | g) = sum_h p(h|g) p(x|h,g).
    pub fn sensor_x_given_g(&self, t: usize) -> ConditionalTable {
        let pg = self.p_g();
        let x = self.obs_alphabet();
        let mut rows = Vec::with_capacity(2);
        for g in 0..2 {
            let mut row = vec![0.0; x];
            for h in 0..2 {
                let ph_given_g = self.p_hg(h, g) / pg.mass(g);
                let cond = self.sensors[t].row(hg_index(h, g));
                for (xi, m) in cond.masses().iter().enumerate() {
                    row[xi] += ph_given_g * m;
                }
            }
            rows.push(DiscreteDistribution::from_weights(&row).expect("valid row"));
        }
        ConditionalTable::new(rows).expect("two rows")
    }

    /// Single-sensor conditional p_{X_t | H}(x | h).
    pub fn sensor_x_given_h(&self, t: usize) -> ConditionalTable {
        let ph = self.p_h();
        let x = self.obs_alphabet();
        let mut rows = Vec::with_capacity(2);
        for h in 0..2 {
            let mut row = vec![0.0; x];
            for g in 0..2 {
                let pg_given_h = self.p_hg(h, g) / ph.mass(h);
                let cond = self.sensors[t].row(hg_index(h, g));
                for (xi, m) in cond.masses().iter().enumerate() {
                    row[xi] += pg_given_h * m;
                }
            }
            rows.push(DiscreteDistribution::from_weights(&row).expect("valid row"));
        }
        ConditionalTable::new(rows).expect("two rows")
    }

    /// Support floor alpha = min over observation vectors x and g of
    /// p_{X|G}(x|g). Exact within the tensor cap; a conservative lower
    /// bound beyond it.
    pub fn alpha(&self) -> f64 {
        let s = self.num_sensors();
        let x = self.obs_alphabet();
        let pg = self.p_g();
        if checked_pow(x, s).map_or(false, |n| n <= DEFAULT_TENSOR_CAP) {
            let mut alpha = f64::INFINITY;
            let mut idx = vec![0usize; s];
            loop {
                for g in 0..2 {
                    let mut v = 0.0;
                    for h in 0..2 {
                        let mut prod = self.p_hg(h, g) / pg.mass(g);
                        for (t, &xi) in idx.iter().enumerate() {
                            prod *= self.sensors[t].row(hg_index(h, g)).mass(xi);
                        }
                        v += prod;
                    }
                    alpha = alpha.min(v);
                }
                if !advance(&mut idx, x) {
                    break;
                }
            }
            alpha
        } else {
            // min_x sum_h >= sum_h min_x, taken per sensor
            let mut alpha = f64::INFINITY;
            for g in 0..2 {
                let mut v = 0.0;
                for h in 0..2 {
                    let mut prod = self.p_hg(h, g) / pg.mass(g);
                    for t in 0..s {
                        prod *= self.sensors[t].row(hg_index(h, g)).min_mass();
                    }
                    v += prod;
                }
                alpha = alpha.min(v);
            }
            alpha
        }
    }

    /// Conditional mutual information I(X; H | G) in nats over the full
    /// observation vector (tensor expansion, capped).
    pub fn mi_xh_given_g(&self) -> Result<f64> {
        let s = self.num_sensors();
        let x = self.obs_alphabet();
        let n = checked_pow(x, s)
            .filter(|&n| n <= DEFAULT_TENSOR_CAP)
            .ok_or_else(|| Error::CapExceeded(format!("|X|^s with |X|={x}, s={s}")))?;
        let pg = self.p_g();
        let ph = self.p_h();
        let mut info = 0.0;
        for g in 0..2 {
            // p(x|h,g) rows for this g, as flat tensors
            let mut cond = vec![vec![0.0; n]; 2];
            let mut idx = vec![0usize; s];
            let mut xi_flat = 0usize;
            loop {
                for h in 0..2 {
                    let mut prod = 1.0;
                    for (t, &xi) in idx.iter().enumerate() {
                        prod *= self.sensors[t].row(hg_index(h, g)).mass(xi);
                    }
                    cond[h][xi_flat] = prod;
                }
                xi_flat += 1;
                if !advance(&mut idx, x) {
                    break;
                }
            }
            let prior_h = DiscreteDistribution::new(vec![
                self.p_hg(0, g) / pg.mass(g),
                self.p_hg(1, g) / pg.mass(g),
            ])?;
            let table = ConditionalTable::from_rows(cond)?;
            info += pg.mass(g) * mutual_information(&table, &prior_h)?;
        }
        let _ = ph;
        Ok(info)
    }
}

fn checked_pow(base: usize, exp: usize) -> Option<usize> {
    let mut acc = 1usize;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

/// Advances a mixed-radix counter (last digit fastest); false on wrap.
pub fn advance(idx: &mut [usize], base: usize) -> bool {
    for d in idx.iter_mut().rev() {
        *d += 1;
        if *d < base {
            return true;
        }
        *d = 0;
    }
    false
}

/// Decodes a flat index into mixed-radix digits (sensor 0 most significant).
pub fn decode_index(mut flat: usize, base: usize, len: usize) -> Vec<usize> {
    let mut out = vec![0usize; len];
    for d in out.iter_mut().rev() {
        *d = flat % base;
        flat /= base;
    }
    out
}

/// Per-sensor stochastic privacy mappings q_t(z|x).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochasticMapping {
    /// q[t][x][z]
    q: Vec<Vec<Vec<f64>>>,
    quant_alphabet: usize,
    delta_floor: f64,
}

impl StochasticMapping {
    pub fn new(q: Vec<Vec<Vec<f64>>>, quant_alphabet: usize, delta_floor: f64) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::InvalidMapping("no sensors".into()));
        }
        let x = q[0].len();
        if delta_floor > x as f64 / quant_alphabet as f64 {
            return Err(Error::InvalidMapping(format!(
                "delta_floor {delta_floor} exceeds |X|/|Z|"
            )));
        }
        for (t, qt) in q.iter().enumerate() {
            if qt.len() != x {
                return Err(Error::InvalidMapping(format!(
                    "sensor {t} has {} rows, expected {x}",
                    qt.len()
                )));
            }
            let mut col = vec![0.0; quant_alphabet];
            for (xi, row) in qt.iter().enumerate() {
                if row.len() != quant_alphabet {
                    return Err(Error::InvalidMapping(format!(
                        "sensor {t} row {xi} has {} entries, expected {quant_alphabet}",
                        row.len()
                    )));
                }
                let mut sum = 0.0;
                for (z, &v) in row.iter().enumerate() {
                    if !(v >= -1e-12) {
                        return Err(Error::InvalidMapping(format!(
                            "q[{t}][{xi}][{z}] = {v} negative"
                        )));
                    }
                    sum += v;
                    col[z] += v;
                }
                if (sum - 1.0).abs() > 1e-9 {
                    return Err(Error::InvalidMapping(format!(
                        "sensor {t} row {xi} sums to {sum}"
                    )));
                }
            }
            for (z, &c) in col.iter().enumerate() {
                if c < delta_floor - 1e-9 {
                    return Err(Error::InvalidMapping(format!(
                        "sensor {t} column {z} sum {c} below floor {delta_floor}"
                    )));
                }
            }
        }
        Ok(Self {
            q,
            quant_alphabet,
            delta_floor,
        })
    }

    pub fn uniform(num_sensors: usize, obs_alphabet: usize, quant_alphabet: usize) -> Self {
        let row = vec![1.0 / quant_alphabet as f64; quant_alphabet];
        Self {
            q: vec![vec![row; obs_alphabet]; num_sensors],
            quant_alphabet,
            delta_floor: obs_alphabet as f64 / quant_alphabet as f64,
        }
    }

    pub fn identity(num_sensors: usize, alphabet: usize) -> Self {
        let mut qt = vec![vec![0.0; alphabet]; alphabet];
        for (x, row) in qt.iter_mut().enumerate() {
            row[x] = 1.0;
        }
        Self {
            q: vec![qt; num_sensors],
            quant_alphabet: alphabet,
            delta_floor: 1.0,
        }
    }

    pub fn num_sensors(&self) -> usize {
        self.q.len()
    }

    pub fn obs_alphabet(&self) -> usize {
        self.q[0].len()
    }

    pub fn quant_alphabet(&self) -> usize {
        self.quant_alphabet
    }

    pub fn delta_floor(&self) -> f64 {
        self.delta_floor
    }

    pub fn sensor(&self, t: usize) -> &Vec<Vec<f64>> {
        &self.q[t]
    }

    pub fn prob(&self, t: usize, x: usize, z: usize) -> f64 {
        self.q[t][x][z]
    }

    pub fn set_sensor(&mut self, t: usize, rows: Vec<Vec<f64>>) {
        self.q[t] = rows;
    }

    /// Smallest column sum over z for sensor t.
    pub fn min_column_sum(&self, t: usize) -> f64 {
        let mut col = vec![0.0; self.quant_alphabet];
        for row in &self.q[t] {
            for (z, &v) in row.iter().enumerate() {
                col[z] += v;
            }
        }
        col.into_iter().fold(f64::INFINITY, f64::min)
    }
}

/// Deterministic per-sensor mapping: a total function X -> Z.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeterministicMapping {
    pub table: Vec<usize>,
    pub quant_alphabet: usize,
}

impl DeterministicMapping {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.table
            .iter()
            .map(|&z| {
                let mut row = vec![0.0; self.quant_alphabet];
                row[z] = 1.0;
                row
            })
            .collect()
    }
}

/// Fusion-center laws induced by a model and mapping.
#[derive(Debug, Clone)]
pub struct FusionBundle {
    /// p(z, h, g) flat over z in Z^s, inner index hg_index(h, g).
    pub joint: Vec<[f64; 4]>,
    pub quant_alphabet: usize,
    pub num_sensors: usize,
}

impl FusionBundle {
    pub fn num_outcomes(&self) -> usize {
        self.joint.len()
    }

    pub fn p_z(&self) -> DiscreteDistribution {
        DiscreteDistribution::from_weights(
            &self
                .joint
                .iter()
                .map(|c| c.iter().sum::<f64>())
                .collect::<Vec<_>>(),
        )
        .expect("valid marginal")
    }

    pub fn p_z_given_h(&self) -> ConditionalTable {
        self.conditional(|c, h| c[hg_index(h, 0)] + c[hg_index(h, 1)])
    }

    pub fn p_z_given_g(&self) -> ConditionalTable {
        self.conditional(|c, g| c[hg_index(0, g)] + c[hg_index(1, g)])
    }

    fn conditional(&self, f: impl Fn(&[f64; 4], usize) -> f64) -> ConditionalTable {
        let mut rows = Vec::with_capacity(2);
        for v in 0..2 {
            let w: Vec<f64> = self.joint.iter().map(|c| f(c, v)).collect();
            rows.push(DiscreteDistribution::from_weights(&w).expect("valid row"));
        }
        ConditionalTable::new(rows).expect("two rows")
    }

    /// Joint p(z, h) as rows over z for h = 0, 1 (unnormalized rows).
    pub fn p_z_and_h(&self) -> Vec<[f64; 2]> {
        self.joint
            .iter()
            .map(|c| [c[0] + c[1], c[2] + c[3]])
            .collect()
    }

    pub fn p_z_and_g(&self) -> Vec<[f64; 2]> {
        self.joint
            .iter()
            .map(|c| [c[0] + c[2], c[1] + c[3]])
            .collect()
    }
}

/// Exact marginalization of the mapped network onto Z^s.
pub fn push_forward(model: &JointModel, mapping: &StochasticMapping) -> Result<FusionBundle> {
    push_forward_capped(model, mapping, DEFAULT_TENSOR_CAP)
}

pub fn push_forward_capped(
    model: &JointModel,
    mapping: &StochasticMapping,
    cap: usize,
) -> Result<FusionBundle> {
    if mapping.num_sensors() != model.num_sensors() {
        return Err(Error::InvalidMapping(format!(
            "mapping has {} sensors, model has {}",
            mapping.num_sensors(),
            model.num_sensors()
        )));
    }
    if mapping.obs_alphabet() != model.obs_alphabet() {
        return Err(Error::AlphabetMismatch(
            mapping.obs_alphabet(),
            model.obs_alphabet(),
        ));
    }
    let s = model.num_sensors();
    let z = mapping.quant_alphabet();
    let n = checked_pow(z, s)
        .filter(|&n| n <= cap)
        .ok_or_else(|| Error::CapExceeded(format!("|Z|^s with |Z|={z}, s={s}")))?;

    // per-sensor p(z_t | h, g)
    let x = model.obs_alphabet();
    let mut pz = vec![[[0.0f64; 2]; 2]; 0];
    let mut per_sensor: Vec<Vec<[f64; 4]>> = Vec::with_capacity(s);
    for t in 0..s {
        let mut tab = vec![[0.0f64; 4]; z];
        for h in 0..2 {
            for g in 0..2 {
                let row = model.sensor(t).row(hg_index(h, g));
                for xi in 0..x {
                    let px = row.mass(xi);
                    for (zi, cell) in tab.iter_mut().enumerate() {
                        cell[hg_index(h, g)] += px * mapping.prob(t, xi, zi);
                    }
                }
            }
        }
        per_sensor.push(tab);
    }
    pz.clear();

    let mut joint = vec![[0.0f64; 4]; n];
    let mut idx = vec![0usize; s];
    let mut flat = 0usize;
    loop {
        let mut cell = [
            model.p_hg(0, 0),
            model.p_hg(0, 1),
            model.p_hg(1, 0),
            model.p_hg(1, 1),
        ];
        for (t, &zi) in idx.iter().enumerate() {
            for k in 0..4 {
                cell[k] *= per_sensor[t][zi][k];
            }
        }
        joint[flat] = cell;
        flat += 1;
        if !advance(&mut idx, z) {
            break;
        }
    }
    Ok(FusionBundle {
        joint,
        quant_alphabet: z,
        num_sensors: s,
    })
}

/// Pearson correlation of the two binary hypotheses under the prior.
pub fn correlation_hg(model: &JointModel) -> Result<f64> {
    let ph1 = model.p_h().mass(1);
    let pg1 = model.p_g().mass(1);
    let var = ph1 * (1.0 - ph1) * pg1 * (1.0 - pg1);
    if var <= 0.0 {
        return Err(Error::InvalidModel("degenerate H or G marginal".into()));
    }
    Ok((model.p_hg(1, 1) - ph1 * pg1) / var.sqrt())
}

/// Configuration for random model generation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelGenConfig {
    pub num_sensors: usize,
    pub obs_alphabet: usize,
    pub quant_alphabet: usize,
    pub target_corr: f64,
    pub mi_target: Option<f64>,
    pub seed: u64,
    #[serde(default = "default_alpha_floor")]
    pub alpha_floor: f64,
    #[serde(default)]
    pub delta_floor: Option<f64>,
}

fn default_alpha_floor() -> f64 {
    1e-3
}

impl ModelGenConfig {
    pub fn new(num_sensors: usize, obs_alphabet: usize, quant_alphabet: usize) -> Self {
        Self {
            num_sensors,
            obs_alphabet,
            quant_alphabet,
            target_corr: 0.2,
            mi_target: None,
            seed: 0,
            alpha_floor: default_alpha_floor(),
            delta_floor: None,
        }
    }
}

/// Generates a factored random model with uniform H and G marginals and
/// the requested H-G correlation. Sensor conditionals are Dirichlet-style
/// random rows floored at `alpha_floor` by mixing with uniform. When
/// `mi_target` is set, rows are mixed toward the H-uninformative channel
/// until I(X;H|G) matches within 5%.
pub fn generate_model(cfg: &ModelGenConfig) -> Result<JointModel> {
    if cfg.obs_alphabet < 2 || cfg.quant_alphabet < 2 {
        return Err(Error::InvalidParameter("alphabet sizes must be >= 2".into()));
    }
    let rho = cfg.target_corr;
    if !(-1.0 < rho && rho < 1.0) {
        return Err(Error::Infeasible(format!(
            "correlation {rho} infeasible for uniform binary marginals"
        )));
    }
    // uniform marginals: p(h, g) = 1/4 (1 + rho) on the diagonal
    let hg_prior = DiscreteDistribution::new(vec![
        0.25 * (1.0 + rho),
        0.25 * (1.0 - rho),
        0.25 * (1.0 - rho),
        0.25 * (1.0 + rho),
    ])?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let x = cfg.obs_alphabet;
    let mix_w = (cfg.alpha_floor * x as f64).min(1.0);
    let mut sensors = Vec::with_capacity(cfg.num_sensors);
    for _ in 0..cfg.num_sensors {
        let mut rows = Vec::with_capacity(4);
        for _ in 0..4 {
            let w: Vec<f64> = (0..x)
                .map(|_| -(rng.gen_range(1e-12..1.0f64)).ln())
                .collect();
            let d = DiscreteDistribution::from_weights(&w)?;
            rows.push(d.mix(&DiscreteDistribution::uniform(x), mix_w)?);
        }
        sensors.push(ConditionalTable::new(rows)?);
    }

    let delta_floor = cfg
        .delta_floor
        .unwrap_or(0.01 * x as f64 / cfg.quant_alphabet as f64);
    let mut model = JointModel::new(hg_prior.clone(), sensors, cfg.quant_alphabet, delta_floor)?;

    let got = correlation_hg(&model)?;
    if (got - rho).abs() > 1e-6 {
        return Err(Error::InvalidModel(format!(
            "achieved correlation {got} differs from target {rho}"
        )));
    }

    if let Some(target) = cfg.mi_target {
        model = match_mi_target(&model, target)?;
    }
    Ok(model)
}

/// Bisection on the mixing weight toward the H-uninformative channel
/// p(x|g) until I(X;H|G) matches `target` within 5% relative.
fn match_mi_target(model: &JointModel, target: f64) -> Result<JointModel> {
    let full = model.mi_xh_given_g()?;
    if target > full {
        return Err(Error::Infeasible(format!(
            "mi_target {target} exceeds unmixed I(X;H|G) = {full}"
        )));
    }
    let build = |lam: f64| -> Result<JointModel> {
        let mut sensors = Vec::with_capacity(model.num_sensors());
        for t in 0..model.num_sensors() {
            let flat = model.sensor_x_given_g(t);
            let mut rows = Vec::with_capacity(4);
            for h in 0..2 {
                for g in 0..2 {
                    let orig = model.sensor(t).row(hg_index(h, g));
                    rows.push(orig.mix(flat.row(g), lam)?);
                }
            }
            // rows pushed in (h,g) order matching hg_index
            let ordered = vec![rows[0].clone(), rows[1].clone(), rows[2].clone(), rows[3].clone()];
            sensors.push(ConditionalTable::new(ordered)?);
        }
        JointModel::new(
            model.hg_prior().clone(),
            sensors,
            model.quant_alphabet(),
            model.delta_floor(),
        )
    };
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = build(0.0)?;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let cand = build(mid)?;
        let mi = cand.mi_xh_given_g()?;
        if (mi - target).abs() <= 0.05 * target {
            return Ok(cand);
        }
        if mi > target {
            lo = mid;
        } else {
            hi = mid;
        }
        best = cand;
    }
    let mi = best.mi_xh_given_g()?;
    if (mi - target).abs() <= 0.05 * target {
        Ok(best)
    } else {
        Err(Error::Infeasible(format!(
            "could not match mi_target {target}; reached {mi}"
        )))
    }
}

/// Full-tensor form of the joint law over X^s x (H, G). Retained for
/// generality at small s; the factored form is the workhorse.
#[derive(Debug, Clone)]
pub struct TensorModel {
    pub num_sensors: usize,
    pub obs_alphabet: usize,
    /// joint[x_flat][hg_index(h,g)] = p(x, h, g)
    pub joint: Vec<[f64; 4]>,
}

impl TensorModel {
    pub fn from_joint_model(model: &JointModel) -> Result<Self> {
        Self::from_joint_model_capped(model, DEFAULT_TENSOR_CAP)
    }

    pub fn from_joint_model_capped(model: &JointModel, cap: usize) -> Result<Self> {
        let s = model.num_sensors();
        let x = model.obs_alphabet();
        let n = checked_pow(x, s)
            .filter(|&n| n <= cap)
            .ok_or_else(|| Error::CapExceeded(format!("|X|^s with |X|={x}, s={s}")))?;
        let mut joint = vec![[0.0f64; 4]; n];
        let mut idx = vec![0usize; s];
        let mut flat = 0usize;
        loop {
            for h in 0..2 {
                for g in 0..2 {
                    let mut p = model.p_hg(h, g);
                    for (t, &xi) in idx.iter().enumerate() {
                        p *= model.sensor(t).row(hg_index(h, g)).mass(xi);
                    }
                    joint[flat][hg_index(h, g)] = p;
                }
            }
            flat += 1;
            if !advance(&mut idx, x) {
                break;
            }
        }
        Ok(Self {
            num_sensors: s,
            obs_alphabet: x,
            joint,
        })
    }

    /// p_{X|H} rows over the flat observation alphabet.
    pub fn x_given_h(&self) -> ConditionalTable {
        let mut rows = Vec::with_capacity(2);
        for h in 0..2 {
            let w: Vec<f64> = self
                .joint
                .iter()
                .map(|c| c[hg_index(h, 0)] + c[hg_index(h, 1)])
                .collect();
            rows.push(DiscreteDistribution::from_weights(&w).expect("valid row"));
        }
        ConditionalTable::new(rows).expect("two rows")
    }

    /// p_{X|G} rows over the flat observation alphabet.
    pub fn x_given_g(&self) -> ConditionalTable {
        let mut rows = Vec::with_capacity(2);
        for g in 0..2 {
            let w: Vec<f64> = self
                .joint
                .iter()
                .map(|c| c[hg_index(0, g)] + c[hg_index(1, g)])
                .collect();
            rows.push(DiscreteDistribution::from_weights(&w).expect("valid row"));
        }
        ConditionalTable::new(rows).expect("two rows")
    }

    /// Exact push-forward from the tensor form; cross-check for the
    /// factored path.
    pub fn push_forward(&self, mapping: &StochasticMapping, cap: usize) -> Result<FusionBundle> {
        let s = self.num_sensors;
        let z = mapping.quant_alphabet();
        let n = checked_pow(z, s)
            .filter(|&n| n <= cap)
            .ok_or_else(|| Error::CapExceeded(format!("|Z|^s with |Z|={z}, s={s}")))?;
        let mut out = vec![[0.0f64; 4]; n];
        let x = self.obs_alphabet;
        let mut xi = vec![0usize; s];
        let mut x_flat = 0usize;
        loop {
            let cell = self.joint[x_flat];
            let mut zi = vec![0usize; s];
            let mut z_flat = 0usize;
            loop {
                let mut q = 1.0;
                for t in 0..s {
                    q *= mapping.prob(t, xi[t], zi[t]);
                }
                for k in 0..4 {
                    out[z_flat][k] += q * cell[k];
                }
                z_flat += 1;
                if !advance(&mut zi, z) {
                    break;
                }
            }
            x_flat += 1;
            if !advance(&mut xi, x) {
                break;
            }
        }
        Ok(FusionBundle {
            joint: out,
            quant_alphabet: z,
            num_sensors: s,
        })
    }
}

// ---------------------------------------------------------------------------
// On-disk formats (TOML): model and mapping files.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    s: usize,
    obs_alphabet: usize,
    quant_alphabet: usize,
    delta_floor: f64,
    hg_prior: Vec<Vec<f64>>,
    /// sensor_conditionals[t][hg_index(h,g)][x]
    sensor_conditionals: Vec<Vec<Vec<f64>>>,
}

pub fn write_model(model: &JointModel, path: &Path) -> Result<()> {
    let file = ModelFile {
        s: model.num_sensors(),
        obs_alphabet: model.obs_alphabet(),
        quant_alphabet: model.quant_alphabet(),
        delta_floor: model.delta_floor(),
        hg_prior: vec![
            vec![model.p_hg(0, 0), model.p_hg(0, 1)],
            vec![model.p_hg(1, 0), model.p_hg(1, 1)],
        ],
        sensor_conditionals: (0..model.num_sensors())
            .map(|t| {
                (0..4)
                    .map(|r| model.sensor(t).row(r).masses().to_vec())
                    .collect()
            })
            .collect(),
    };
    let text = toml::to_string_pretty(&file)
        .map_err(|e| Error::Schema {
            field: "model".into(),
            message: e.to_string(),
        })?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_model(path: &Path) -> Result<JointModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let file: ModelFile = toml::from_str(&text).map_err(|e| Error::Schema {
        field: "model".into(),
        message: e.to_string(),
    })?;
    if file.hg_prior.len() != 2 || file.hg_prior.iter().any(|r| r.len() != 2) {
        return Err(Error::Schema {
            field: "hg_prior".into(),
            message: "expected a 2x2 table".into(),
        });
    }
    let prior = DiscreteDistribution::new(vec![
        file.hg_prior[0][0],
        file.hg_prior[0][1],
        file.hg_prior[1][0],
        file.hg_prior[1][1],
    ])
    .map_err(|e| Error::Schema {
        field: "hg_prior".into(),
        message: e.to_string(),
    })?;
    if file.sensor_conditionals.len() != file.s {
        return Err(Error::Schema {
            field: "sensor_conditionals".into(),
            message: format!(
                "expected {} sensors, found {}",
                file.s,
                file.sensor_conditionals.len()
            ),
        });
    }
    let mut sensors = Vec::with_capacity(file.s);
    for (t, rows) in file.sensor_conditionals.iter().enumerate() {
        if rows.len() != 4 {
            return Err(Error::Schema {
                field: format!("sensor_conditionals[{t}]"),
                message: format!("expected 4 rows, found {}", rows.len()),
            });
        }
        let table = ConditionalTable::from_rows(rows.clone()).map_err(|e| Error::Schema {
            field: format!("sensor_conditionals[{t}]"),
            message: e.to_string(),
        })?;
        if table.alphabet_size() != file.obs_alphabet {
            return Err(Error::Schema {
                field: format!("sensor_conditionals[{t}]"),
                message: format!(
                    "row length {} differs from obs_alphabet {}",
                    table.alphabet_size(),
                    file.obs_alphabet
                ),
            });
        }
        sensors.push(table);
    }
    JointModel::new(prior, sensors, file.quant_alphabet, file.delta_floor)
}

#[derive(Debug, Serialize, Deserialize)]
struct MappingFile {
    s: usize,
    obs_alphabet: usize,
    quant_alphabet: usize,
    delta_floor: f64,
    /// q[t][x][z]
    q: Vec<Vec<Vec<f64>>>,
}

pub fn write_mapping(mapping: &StochasticMapping, path: &Path) -> Result<()> {
    let file = MappingFile {
        s: mapping.num_sensors(),
        obs_alphabet: mapping.obs_alphabet(),
        quant_alphabet: mapping.quant_alphabet(),
        delta_floor: mapping.delta_floor(),
        q: (0..mapping.num_sensors())
            .map(|t| mapping.sensor(t).clone())
            .collect(),
    };
    let text = toml::to_string_pretty(&file).map_err(|e| Error::Schema {
        field: "mapping".into(),
        message: e.to_string(),
    })?;
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn read_mapping(path: &Path) -> Result<StochasticMapping> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let file: MappingFile = toml::from_str(&text).map_err(|e| Error::Schema {
        field: "mapping".into(),
        message: e.to_string(),
    })?;
    StochasticMapping::new(file.q, file.quant_alphabet, file.delta_floor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::total_variation;

    fn desk_model(seed: u64) -> JointModel {
        generate_model(&ModelGenConfig {
            num_sensors: 2,
            obs_alphabet: 3,
            quant_alphabet: 2,
            target_corr: 0.2,
            mi_target: None,
            seed,
            alpha_floor: 1e-3,
            delta_floor: None,
        })
        .unwrap()
    }

    #[test]
    fn zero_corr_gives_product_prior() {
        let cfg = ModelGenConfig {
            target_corr: 0.0,
            ..ModelGenConfig::new(1, 2, 2)
        };
        let m = generate_model(&cfg).unwrap();
        for h in 0..2 {
            for g in 0..2 {
                let prod = m.p_h().mass(h) * m.p_g().mass(g);
                assert!((m.p_hg(h, g) - prod).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn corr_02_matches_handbuilt_prior() {
        let m = desk_model(7);
        assert!((m.p_hg(0, 0) - 0.3).abs() < 1e-15);
        assert!((m.p_hg(0, 1) - 0.2).abs() < 1e-15);
        assert!((correlation_hg(&m).unwrap() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn seeded_generation_is_deterministic() {
        let a = desk_model(42);
        let b = desk_model(42);
        assert_eq!(a, b);
        let c = desk_model(43);
        assert_ne!(a, c);
    }

    #[test]
    fn correlation_examples() {
        let aligned = JointModel::new(
            DiscreteDistribution::new(vec![0.5, 0.0, 0.0, 0.5]).unwrap(),
            vec![ConditionalTable::from_rows(vec![vec![0.5, 0.5]; 4]).unwrap()],
            2,
            0.01,
        );
        // perfectly aligned prior has zero G|H=0 off-diagonal mass, still valid marginals
        let aligned = aligned.unwrap();
        assert!((correlation_hg(&aligned).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_mapping_makes_z_uninformative() {
        let m = desk_model(3);
        let q = StochasticMapping::uniform(2, 3, 2);
        let fb = push_forward(&m, &q).unwrap();
        let cond = fb.p_z_given_g();
        assert!(total_variation(cond.row(0), cond.row(1)).unwrap() < 1e-12);
        let pz = fb.p_z();
        for z in 0..fb.num_outcomes() {
            assert!((pz.mass(z) - 1.0 / fb.num_outcomes() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_mapping_preserves_observation_law() {
        let m = desk_model(5);
        let q = StochasticMapping::identity(2, 3);
        let fb = push_forward(&m, &q).unwrap();
        let tm = TensorModel::from_joint_model(&m).unwrap();
        let want = tm.x_given_g();
        let got = fb.p_z_given_g();
        for g in 0..2 {
            for i in 0..want.alphabet_size() {
                assert!((want.row(g).mass(i) - got.row(g).mass(i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_sensor_pushforward_matches_matrix_product() {
        let m = generate_model(&ModelGenConfig {
            seed: 11,
            ..ModelGenConfig::new(1, 4, 3)
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut rows = Vec::new();
        for _ in 0..4 {
            let w: Vec<f64> = (0..3).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = w.iter().sum();
            rows.push(w.into_iter().map(|v| v / s).collect::<Vec<_>>());
        }
        let q = StochasticMapping::new(vec![rows.clone()], 3, 1e-6).unwrap();
        let fb = push_forward(&m, &q).unwrap();
        let got = fb.p_z_given_g();
        let xg = m.sensor_x_given_g(0);
        for g in 0..2 {
            for z in 0..3 {
                let brute: f64 = (0..4).map(|x| rows[x][z] * xg.row(g).mass(x)).sum();
                assert!((got.row(g).mass(z) - brute).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn factored_and_tensor_modes_agree() {
        for seed in 0..3 {
            let m = generate_model(&ModelGenConfig {
                seed,
                ..ModelGenConfig::new(3, 3, 2)
            })
            .unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let mut q = Vec::new();
            for _ in 0..3 {
                let mut qt = Vec::new();
                for _ in 0..3 {
                    let a: f64 = rng.gen_range(0.1..0.9);
                    qt.push(vec![a, 1.0 - a]);
                }
                q.push(qt);
            }
            let mapping = StochasticMapping::new(q, 2, 1e-6).unwrap();
            let fb = push_forward(&m, &mapping).unwrap();
            let tb = TensorModel::from_joint_model(&m)
                .unwrap()
                .push_forward(&mapping, DEFAULT_TENSOR_CAP)
                .unwrap();
            for i in 0..fb.num_outcomes() {
                for k in 0..4 {
                    assert!((fb.joint[i][k] - tb.joint[i][k]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn pushforward_preserves_mass() {
        let m = desk_model(8);
        let q = StochasticMapping::uniform(2, 3, 2);
        let fb = push_forward(&m, &q).unwrap();
        let total: f64 = fb.joint.iter().flat_map(|c| c.iter()).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn mi_target_is_matched() {
        let base = generate_model(&ModelGenConfig {
            seed: 2,
            ..ModelGenConfig::new(2, 4, 2)
        })
        .unwrap();
        let full = base.mi_xh_given_g().unwrap();
        let target = full / 3.0;
        let cfg = ModelGenConfig {
            seed: 2,
            mi_target: Some(target),
            ..ModelGenConfig::new(2, 4, 2)
        };
        let m = generate_model(&cfg).unwrap();
        let mi = m.mi_xh_given_g().unwrap();
        assert!((mi - target).abs() <= 0.05 * target);
        // mixing toward p(x|g) must not change alpha-relevant law p_{X|G}
        for t in 0..2 {
            let a = base.sensor_x_given_g(t);
            let b = m.sensor_x_given_g(t);
            for g in 0..2 {
                for x in 0..4 {
                    assert!((a.row(g).mass(x) - b.row(g).mass(x)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn model_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.toml");
        let m = desk_model(21);
        write_model(&m, &path).unwrap();
        let back = read_model(&path).unwrap();
        assert_eq!(m, back);

        // negative mass rejected with a field path
        let text = std::fs::read_to_string(&path).unwrap();
        let bad = text.replacen("0.", "-0.", 1);
        let bad_path = dir.path().join("bad.toml");
        std::fs::write(&bad_path, bad).unwrap();
        assert!(read_model(&bad_path).is_err());

        // missing hg_prior rejected
        let missing: String = text
            .lines()
            .filter(|l| !l.contains("hg_prior"))
            .collect::<Vec<_>>()
            .join("\n");
        let miss_path = dir.path().join("missing.toml");
        std::fs::write(&miss_path, missing).unwrap();
        assert!(read_model(&miss_path).is_err());
    }

    #[test]
    fn mapping_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.toml");
        let q = StochasticMapping::uniform(2, 3, 2);
        write_mapping(&q, &path).unwrap();
        assert_eq!(q, read_mapping(&path).unwrap());
    }

    #[test]
    fn column_floor_enforced() {
        // all mass on z=0 leaves column 1 empty
        let qt = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        assert!(StochasticMapping::new(vec![qt], 2, 0.5).is_err());
    }
}
