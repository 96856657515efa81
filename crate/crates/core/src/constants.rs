//! Empirical and formula-derived values of the constants `N, D, L, λ, λ′,
//! C₁, M′, M, C₂, C, μ, δ₁, δ′, δ₂, A, B`.
//!
//! Every empirical constant is the supremum of its probe over a seeded
//! sample, then re-checked on a fresh sample from a disjoint stream. A fresh
//! value above the estimate raises the constant and adds a flag.

use std::collections::BTreeMap;
use std::path::Path;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::MetricContext;
use crate::par;
use crate::probes::{ceil_on_grid, int, Domain, Sample};

pub const RECORD_VERSION: u32 = 1;

/// Names of the recorded constants.
pub mod names {
    pub const N: &str = "N";
    pub const N_PRIME: &str = "N_prime";
    pub const N_DEF: &str = "N_def";
    pub const D: &str = "D";
    pub const L: &str = "L";
    pub const LAMBDA: &str = "lambda";
    pub const LAMBDA_PRIME: &str = "lambda_prime";
    pub const C1: &str = "C1";
    pub const M_PRIME: &str = "M_prime";
    pub const M: &str = "M";
    pub const C2: &str = "C2";
    pub const C: &str = "C";
    pub const MU: &str = "mu";
    pub const DELTA1: &str = "delta1";
    pub const DELTA_PRIME: &str = "delta_prime";
    pub const DELTA2: &str = "delta2";
    pub const A: &str = "A";
    pub const B: &str = "B";
}
use names::*;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstantMode {
    Empirical,
    Formula,
    User,
}

/// How derived constants are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimationMode {
    /// every constant is a sample supremum
    #[default]
    Empirical,
    /// `D, M, C₂, δ₁, δ₂` come from their formulas applied to the empirical ingredients
    Formula,
}

mod rational_string {
    use num_rational::BigRational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(q: &BigRational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&q.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BigRational, D::Error> {
        let text = String::deserialize(d)?;
        text.parse().map_err(|_| serde::de::Error::custom(format!("bad rational {text:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    #[serde(with = "rational_string")]
    pub value: BigRational,
    /// decimal rendering, informational only
    pub approx: f64,
    pub mode: ConstantMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl Constant {
    pub fn new(value: BigRational, mode: ConstantMode) -> Self {
        let approx = value.to_f64().unwrap_or(f64::NAN);
        Self { value, approx, mode, note: None }
    }

    fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Maximum of a probe within one bin of its key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayBin {
    pub lo: u32,
    pub hi: u32,
    #[serde(with = "rational_string")]
    pub max_defect: BigRational,
    pub samples: usize,
}

/// Train/test comparison for one constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub constant: String,
    pub train_samples: usize,
    pub fresh_samples: usize,
    pub fresh_violations: usize,
    pub certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsRecord {
    pub version: u32,
    pub group: String,
    pub delta: u32,
    pub radius: u32,
    pub budget: usize,
    pub seed: u64,
    pub mode: EstimationMode,
    #[serde(with = "rational_string")]
    pub c2_margin: BigRational,
    pub constants: BTreeMap<String, Constant>,
    pub four_point_bins: Vec<DecayBin>,
    pub validation: Vec<Validation>,
    pub flags: Vec<String>,
    /// resolved settings of the run that produced the record
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

impl ConstantsRecord {
    pub fn value(&self, name: &str) -> Result<&BigRational> {
        self.constants
            .get(name)
            .map(|c| &c.value)
            .ok_or_else(|| Error::Configuration(format!("constant {name} is not in the record")))
    }

    pub fn approx(&self, name: &str) -> Result<f64> {
        Ok(self.value(name)?.to_f64().unwrap_or(f64::NAN))
    }

    /// Overrides a constant with a user-supplied value.
    pub fn set_user(&mut self, name: &str, value: BigRational) {
        self.constants.insert(name.to_string(), Constant::new(value, ConstantMode::User));
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    pub fn from_json_str(text: &str, location: &str) -> Result<Self> {
        let rec: Self = serde_json::from_str(text)
            .map_err(|e| Error::format(format!("{location}:{}:{}", e.line(), e.column()), e.to_string()))?;
        if rec.version != RECORD_VERSION {
            return Err(Error::format(location, format!("unsupported record version {}", rec.version)));
        }
        Ok(rec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?, &path.display().to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    /// Installs the record's `C₂` into `ctx`.
    pub fn apply_c2(&self, ctx: &mut MetricContext) -> Result<()> {
        ctx.set_c2(self.value(C2)?.clone())
    }

    /// `C·μ^d` in double precision.
    pub fn decay_bound(&self, d: f64) -> Result<f64> {
        Ok(self.approx(C)? * self.approx(MU)?.powf(d))
    }

    /// `L·λ^g` in double precision.
    pub fn lambda_bound(&self, g: f64) -> Result<f64> {
        Ok(self.approx(L)? * self.approx(LAMBDA)?.powf(g))
    }

    /// The decay bound with `d(a,a′), d(b,b′) ≤ spread` for `d̂`:
    /// `spread²·C·μ^(d − 2·spread)`.
    pub fn dhat_decay_bound(&self, spread: u32, d: f64) -> Result<f64> {
        let s = spread as f64;
        Ok(s * s * self.decay_bound(d - 2.0 * s)?)
    }
}

/// Settings of [`estimate_constants`].
#[derive(Debug, Clone)]
pub struct EstimateConfig {
    pub radius: u32,
    pub budget: usize,
    pub seed: u64,
    pub mode: EstimationMode,
    pub c2_margin: BigRational,
    /// bin width of the four-point decay fit (default `10δ`)
    pub decay_bin: Option<u32>,
    /// largest `d(a,b)` probed by the four-point fit (default `2·radius`)
    pub decay_max_distance: Option<u32>,
}

impl EstimateConfig {
    pub fn new(radius: u32, budget: usize, seed: u64) -> Self {
        Self {
            radius,
            budget,
            seed,
            mode: EstimationMode::Empirical,
            c2_margin: BigRational::one(),
            decay_bin: None,
            decay_max_distance: None,
        }
    }
}

/// Result of a log-linear fit `value ≈ coefficient · rate^key`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayFit {
    pub rate: BigRational,
    pub coefficient: BigRational,
    pub bins: Vec<DecayBin>,
    /// fewer than two non-zero bins; the rate defaults to 1/2
    pub degenerate: bool,
}

/// Groups `(key, value)` pairs into bins `[lo + k·width, lo + (k+1)·width − 1]`
/// of the integer part of the key.
pub fn decay_bins(samples: &[(BigRational, BigRational)], lo: u32, hi: u32, width: u32) -> Vec<DecayBin> {
    let width = width.max(1);
    let mut bins = Vec::new();
    let mut start = lo;
    while start <= hi {
        let end = (start + width - 1).min(hi);
        bins.push(DecayBin { lo: start, hi: end, max_defect: BigRational::zero(), samples: 0 });
        start = end + 1;
    }
    for (k, v) in samples {
        let key = k.floor().to_integer().to_u32().unwrap_or(0);
        if key < lo || key > hi {
            continue;
        }
        let bin = &mut bins[((key - lo) / width) as usize];
        bin.samples += 1;
        if *v > bin.max_defect {
            bin.max_defect = v.clone();
        }
    }
    bins
}

/// Least-squares fit of `ln(bin max)` against the bin start over non-zero
/// bins; the coefficient then covers every sample.
pub fn fit_decay(samples: &[(BigRational, BigRational)], lo: u32, hi: u32, width: u32, what: &str) -> Result<DecayFit> {
    let bins = decay_bins(samples, lo, hi, width);
    let pts: Vec<(f64, f64)> = bins
        .iter()
        .filter(|b| b.max_defect.is_positive())
        .map(|b| (b.lo as f64, b.max_defect.to_f64().unwrap_or(0.0).ln()))
        .collect();
    let degenerate = pts.len() < 2;
    let rate = if degenerate {
        0.5
    } else {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        (sxy / sxx).exp()
    };
    if !rate.is_finite() || rate >= 1.0 {
        return Err(Error::FitFailure(format!("{what}: fitted rate {rate} is not below one")));
    }
    let rate_q = ceil_on_grid(rate, 1_000_000)?;
    let rate_f = rate_q.to_f64().unwrap_or(rate);
    if rate_f >= 1.0 {
        return Err(Error::FitFailure(format!("{what}: fitted rate {rate} rounds to one")));
    }
    let mut coef: f64 = 0.0;
    for (k, v) in samples {
        let need = v.to_f64().unwrap_or(0.0) / rate_f.powf(k.to_f64().unwrap_or(0.0));
        coef = coef.max(need);
    }
    let coefficient = ceil_on_grid(coef * (1.0 + 1e-9), 1_000_000)?;
    Ok(DecayFit { rate: rate_q, coefficient, bins, degenerate })
}

fn sup(samples: &[Sample]) -> BigRational {
    samples.iter().map(|s| s.value.clone()).max().unwrap_or_else(BigRational::zero)
}

fn sup0(samples: &[Sample]) -> BigRational {
    sup(samples).max(BigRational::zero())
}

fn keyed(samples: &[Sample]) -> Vec<(BigRational, BigRational)> {
    samples.iter().map(|s| (s.key.clone(), s.value.clone())).collect()
}

/// The probe draws of one estimation pass.
struct Draws {
    n_bound: Vec<Sample>,
    d_bound: Vec<Sample>,
    l_lambda: Vec<Sample>,
    lambda_prime: Vec<Sample>,
    c1_r: Vec<Sample>,
    c1_s: Vec<Sample>,
    m_prime: Vec<Sample>,
    m_s: Vec<Sample>,
    c2: Vec<Sample>,
    four_point: Vec<Sample>,
}

fn draw(dom: &Domain<'_>, budget: usize, decay_max: u32) -> Result<Draws> {
    let decay_max = decay_max.max(1);
    Ok(Draws {
        n_bound: par::try_map_indices(budget, |i| dom.n_bound(i))?,
        d_bound: par::try_map_indices(budget, |i| dom.d_bound(i))?,
        l_lambda: par::try_map_indices(budget, |i| dom.l_lambda(i))?,
        lambda_prime: par::try_map_indices(budget, |i| dom.lambda_prime(i))?.into_iter().flatten().collect(),
        c1_r: par::try_map_indices(budget, |i| dom.c1_r(i))?,
        c1_s: par::try_map_indices(budget, |i| dom.c1_s(i))?,
        m_prime: par::try_map_indices(budget, |i| dom.m_prime(i))?,
        m_s: par::try_map_indices(budget, |i| dom.m_s(i))?,
        c2: par::try_map_indices(budget, |i| dom.c2(i))?,
        four_point: par::try_map_indices(budget, |i| dom.four_point(i, 1 + (i as u32 % decay_max)))?,
    })
}

/// `d̂`-level draws, taken once `C₂` is installed.
struct MetricDraws {
    weak: Vec<Sample>,
    b2: Vec<Sample>,
    qi: Vec<Sample>,
}

fn draw_metric(dom: &Domain<'_>, budget: usize) -> Result<MetricDraws> {
    Ok(MetricDraws {
        weak: par::try_map_indices(budget, |i| dom.weak_geodesic(i))?,
        b2: par::try_map_indices(budget, |i| Ok(dom.b2(i)?.1))?,
        qi: par::try_map_indices(budget, |i| dom.qi(i))?,
    })
}

/// `(A, B)` with `d̂/A − B ≤ d ≤ A·d̂ + B` on the sample; `A` comes from
/// pairs beyond the near threshold.
fn fit_qi(samples: &[Sample], threshold: u32) -> (BigRational, BigRational) {
    let far: Vec<&Sample> = samples.iter().filter(|s| s.key > int(threshold)).collect();
    let use_set: Vec<&Sample> = if far.is_empty() { samples.iter().collect() } else { far };
    let mut a = BigRational::one();
    for s in use_set {
        if s.key.is_positive() && s.value.is_positive() {
            a = a.max(&s.value / &s.key).max(&s.key / &s.value);
        }
    }
    let b = qi_offset(samples, &a);
    (a, b)
}

fn qi_offset(samples: &[Sample], a: &BigRational) -> BigRational {
    let mut b = BigRational::zero();
    for s in samples {
        b = b.max(&s.value / a - &s.key).max(&s.key - a * &s.value);
    }
    b
}

fn count_above(samples: &[Sample], bound: &BigRational) -> usize {
    samples.iter().filter(|s| &s.value > bound).count()
}

/// Estimates every constant on `B(1, radius)` and installs `C₂` into `ctx`
/// (unless it already carries a user value).
pub fn estimate_constants(ctx: &mut MetricContext, cfg: &EstimateConfig) -> Result<ConstantsRecord> {
    if cfg.radius == 0 {
        return Err(Error::Domain("estimation radius must be positive".into()));
    }
    let delta = ctx.delta();
    let bin = cfg.decay_bin.unwrap_or(10 * delta).max(1);
    let decay_max = cfg.decay_max_distance.unwrap_or(2 * cfg.radius);
    let user_c2 = ctx.c2().cloned();
    let empirical = ConstantMode::Empirical;
    let formula = cfg.mode == EstimationMode::Formula;
    let mut k: BTreeMap<String, Constant> = BTreeMap::new();
    let mut flags = Vec::new();
    let mut validation = Vec::new();

    let (train, fresh) = {
        let shared: &MetricContext = ctx;
        let dom = Domain::new(shared, cfg.radius, cfg.seed);
        (draw(&dom, cfg.budget, decay_max)?, draw(&dom.fresh(), cfg.budget, decay_max)?)
    };

    let mut n_hat = sup0(&train.n_bound);
    let n_prime_limit = int(40 * delta);
    let n_prime = train
        .n_bound
        .iter()
        .filter(|s| s.key <= n_prime_limit)
        .map(|s| s.value.clone())
        .max()
        .unwrap_or_else(BigRational::zero)
        .max(BigRational::zero());
    let mut d_hat = sup0(&train.d_bound);
    let mut lp_hat = sup0(&train.lambda_prime);
    let mut c1_hat = sup0(&train.c1_r).max(sup0(&train.c1_s));
    let mut mp_hat = sup0(&train.m_prime);
    let mut m_hat = sup0(&train.m_s);
    let c2_sup = sup0(&train.c2);

    // train/test split on the sup-type constants
    let mut check = |name: &str, value: &mut BigRational, train_n: usize, fresh_samples: &[&[Sample]]| {
        let violations: usize = fresh_samples.iter().map(|s| count_above(s, value)).sum();
        let fresh_n: usize = fresh_samples.iter().map(|s| s.len()).sum();
        if violations > 0 {
            let new = fresh_samples.iter().map(|s| sup(s)).max().unwrap_or_else(BigRational::zero);
            flags.push(format!("{name}: {violations} fresh samples exceed the estimate {value}; raised to {new}"));
            *value = new;
        }
        validation.push(Validation {
            constant: name.into(),
            train_samples: train_n,
            fresh_samples: fresh_n,
            fresh_violations: violations,
            certified: violations == 0,
        });
    };
    check(N, &mut n_hat, train.n_bound.len(), &[&fresh.n_bound]);
    check(D, &mut d_hat, train.d_bound.len(), &[&fresh.d_bound]);
    check(LAMBDA_PRIME, &mut lp_hat, train.lambda_prime.len(), &[&fresh.lambda_prime]);
    check(C1, &mut c1_hat, train.c1_r.len() + train.c1_s.len(), &[&fresh.c1_r, &fresh.c1_s]);
    check(M_PRIME, &mut mp_hat, train.m_prime.len(), &[&fresh.m_prime]);
    check(M, &mut m_hat, train.m_s.len(), &[&fresh.m_s]);

    k.insert(N.into(), Constant::new(n_hat.clone(), empirical));
    k.insert(
        N_PRIME.into(),
        Constant::new(n_prime.clone(), empirical).with_note("restricted to d(a,b) + d(a,b') <= 40 delta"),
    );
    k.insert(C1.into(), Constant::new(c1_hat.clone(), empirical));
    k.insert(M_PRIME.into(), Constant::new(mp_hat.clone(), empirical));
    k.insert(LAMBDA_PRIME.into(), Constant::new(lp_hat.clone(), empirical));
    if lp_hat < BigRational::one() {
        // smallest N with N' <= N and lambda'(27 delta + N) <= N
        let n_def = n_prime.clone().max(&lp_hat * int(27 * delta) / (BigRational::one() - &lp_hat));
        k.insert(N_DEF.into(), Constant::new(n_def, ConstantMode::Formula));
    } else {
        flags.push(format!("lambda_prime = {lp_hat} is not below one; N_def undefined"));
    }

    if formula {
        d_hat = (BigRational::one() + &n_hat) / int(2);
        m_hat = (BigRational::one() + &n_hat + &mp_hat) / int(2);
        k.insert(D.into(), Constant::new(d_hat, ConstantMode::Formula));
        k.insert(M.into(), Constant::new(m_hat.clone(), ConstantMode::Formula));
    } else {
        k.insert(D.into(), Constant::new(d_hat, empirical));
        k.insert(M.into(), Constant::new(m_hat.clone(), empirical));
    }

    // L and lambda from the f-bar differences against Gromov products
    let ll_train = keyed(&train.l_lambda);
    let ll_hi = ll_train.iter().map(|(k, _)| k.floor().to_integer().to_u32().unwrap_or(0)).max().unwrap_or(0);
    let ll = fit_decay(&ll_train, 0, ll_hi, 1, "lambda")?;
    let (mut l_hat, lambda_hat) = (ll.coefficient.clone(), ll.rate.clone());
    let lam = lambda_hat.to_f64().unwrap_or(0.5);
    let ll_bump = fresh
        .l_lambda
        .iter()
        .map(|s| s.value.to_f64().unwrap_or(0.0) / lam.powf(s.key.to_f64().unwrap_or(0.0)))
        .fold(0.0f64, f64::max);
    let ll_viol = ll_bump > l_hat.to_f64().unwrap_or(0.0);
    if ll_viol {
        l_hat = ceil_on_grid(ll_bump * (1.0 + 1e-9), 1_000_000)?;
        flags.push(format!("L: fresh samples exceed the fitted bound; raised to {l_hat}"));
    }
    validation.push(Validation {
        constant: L.into(),
        train_samples: train.l_lambda.len(),
        fresh_samples: fresh.l_lambda.len(),
        fresh_violations: usize::from(ll_viol),
        certified: !ll_viol,
    });
    let mut lc = Constant::new(l_hat, empirical);
    let mut lr = Constant::new(lambda_hat, empirical);
    if ll.degenerate {
        lc = lc.with_note("fewer than two non-zero bins; rate fixed at 1/2");
        lr = lr.with_note("fewer than two non-zero bins; rate fixed at 1/2");
    }
    k.insert(L.into(), lc);
    k.insert(LAMBDA.into(), lr);

    // C and mu from the four-point quantity
    let fp_train = keyed(&train.four_point);
    let fp = fit_decay(&fp_train, 1, decay_max.max(1), bin, "mu")?;
    let mu = fp.rate.to_f64().unwrap_or(0.5);
    let mut c_hat = fp.coefficient.clone();
    let fp_need = fresh
        .four_point
        .iter()
        .map(|s| s.value.to_f64().unwrap_or(0.0) / mu.powf(s.key.to_f64().unwrap_or(0.0)))
        .fold(0.0f64, f64::max);
    let fp_viol = fp_need > c_hat.to_f64().unwrap_or(0.0);
    if fp_viol {
        c_hat = ceil_on_grid(fp_need * (1.0 + 1e-9), 1_000_000)?;
        flags.push(format!("C: fresh samples exceed the fitted decay bound; raised to {c_hat}"));
    }
    validation.push(Validation {
        constant: C.into(),
        train_samples: train.four_point.len(),
        fresh_samples: fresh.four_point.len(),
        fresh_violations: usize::from(fp_viol),
        certified: !fp_viol,
    });
    let mut cc = Constant::new(c_hat, empirical);
    if fp.degenerate {
        cc = cc.with_note("fewer than two non-zero bins; rate fixed at 1/2");
    }
    k.insert(C.into(), cc);
    k.insert(MU.into(), Constant::new(fp.rate.clone(), empirical));

    // C2
    let c2_formula = int(2 * delta) * &m_hat + int(3) * &c1_hat;
    let c2 = match (&user_c2, formula) {
        (Some(v), _) => Constant::new(v.clone(), ConstantMode::User),
        (None, true) => Constant::new(c2_formula.clone(), ConstantMode::Formula),
        (None, false) => Constant::new(&c2_sup + &cfg.c2_margin, empirical)
            .with_note(format!("sample supremum {c2_sup} plus margin {}", cfg.c2_margin)),
    };
    let c2_fresh_viol = count_above(&fresh.c2, &c2.value);
    validation.push(Validation {
        constant: C2.into(),
        train_samples: train.c2.len(),
        fresh_samples: fresh.c2.len(),
        fresh_violations: c2_fresh_viol,
        certified: c2_fresh_viol == 0 && c2_sup <= c2.value,
    });
    if c2_fresh_viol > 0 || c2_sup > c2.value {
        flags.push(format!("C2 = {} is below observed triangle defects", c2.value));
    }
    ctx.set_c2(c2.value.clone())?;
    let c2_value = c2.value.clone();
    k.insert(C2.into(), c2);

    // d-hat level constants
    let (mtrain, mfresh) = {
        let shared: &MetricContext = ctx;
        let dom = Domain::new(shared, cfg.radius, cfg.seed);
        (draw_metric(&dom, cfg.budget)?, draw_metric(&dom.fresh(), cfg.budget)?)
    };
    let delta_prime = int(2 * delta) + int(3) * &c1_hat + int(2);
    k.insert(DELTA_PRIME.into(), Constant::new(delta_prime.clone(), ConstantMode::Formula));
    let mut d1 = sup0(&mtrain.weak);
    let mut d2 = sup0(&mtrain.b2);
    let mut check2 = |name: &str, value: &mut BigRational, tr: &[Sample], fr: &[Sample], is_formula: bool| {
        let v = count_above(fr, value) + if is_formula { count_above(tr, value) } else { 0 };
        if v > 0 {
            if is_formula {
                flags.push(format!("{name}: formula value {value} is exceeded by {v} samples"));
            } else {
                let new = sup(fr);
                flags.push(format!("{name}: {v} fresh samples exceed the estimate {value}; raised to {new}"));
                *value = new;
            }
        }
        validation.push(Validation {
            constant: name.into(),
            train_samples: tr.len(),
            fresh_samples: fr.len(),
            fresh_violations: v,
            certified: v == 0,
        });
    };
    if formula {
        d1 = &m_hat + &c1_hat + int(2) * &c2_value;
        d2 = (&d1 + &delta_prime) / int(2);
    }
    check2(DELTA1, &mut d1, &mtrain.weak, &mfresh.weak, formula);
    check2(DELTA2, &mut d2, &mtrain.b2, &mfresh.b2, formula);
    let dmode = if formula { ConstantMode::Formula } else { empirical };
    k.insert(DELTA1.into(), Constant::new(d1, dmode));
    k.insert(DELTA2.into(), Constant::new(d2, dmode));

    let (a_hat, mut b_hat) = fit_qi(&mtrain.qi, 10 * delta);
    let fresh_b = qi_offset(&mfresh.qi, &a_hat);
    let qi_viol = fresh_b > b_hat;
    if qi_viol {
        flags.push(format!("B: fresh samples need offset {fresh_b} > {b_hat}"));
        b_hat = fresh_b;
    }
    validation.push(Validation {
        constant: B.into(),
        train_samples: mtrain.qi.len(),
        fresh_samples: mfresh.qi.len(),
        fresh_violations: usize::from(qi_viol),
        certified: !qi_viol,
    });
    k.insert(A.into(), Constant::new(a_hat, empirical));
    k.insert(B.into(), Constant::new(b_hat, empirical));

    Ok(ConstantsRecord {
        version: RECORD_VERSION,
        group: ctx.model().kind().to_string(),
        delta,
        radius: cfg.radius,
        budget: cfg.budget,
        seed: cfg.seed,
        mode: cfg.mode,
        c2_margin: cfg.c2_margin.clone(),
        constants: k,
        four_point_bins: fp.bins,
        validation,
        flags,
        run_config: None,
    })
}

/// Parses `p/q`, an integer or a finite decimal such as `0.25`.
pub fn parse_rational(text: &str) -> Result<BigRational> {
    let t = text.trim();
    if let Ok(q) = t.parse::<BigRational>() {
        return Ok(q);
    }
    let bad = || Error::Domain(format!("not a rational number: {text:?}"));
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (int_part, frac) = body.split_once('.').ok_or_else(bad)?;
    if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) || !int_part.bytes().all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let digits: BigInt = format!("{int_part}{frac}").parse().map_err(|_| bad())?;
    let den = num_traits::pow(BigInt::from(10), frac.len());
    let q = BigRational::new(digits, den);
    Ok(if neg { -q } else { q })
}
