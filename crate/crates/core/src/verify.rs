//! Verification suites.
//!
//! Each suite samples configurations from a seeded domain, evaluates one or
//! more inequalities per property and reports the worst defect with
//! witnesses. Thresholds come from a [`ConstantsRecord`]; the structural
//! suite uses the nominal radii `δ, 7δ, 10δ` so that a context built with
//! other radii is caught.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::bicombing;
use crate::chain::Chain0;
use crate::constants::{names, fit_decay, ConstantsRecord, DecayBin};
use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupModel};
use crate::metric::MetricContext;
use crate::par;
use crate::probes::{int, ratio, Domain, Sample};
use crate::sampling;

pub const REPORT_VERSION: u32 = 1;
pub const DECAY_CSV_HEADER: &str = "# bolic decay bins v1\nd_bin,max_defect,samples";
/// Relative slack for bounds evaluated in double precision.
const FLOAT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Structural,
    RProperties,
    Metric,
    Bolic,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Structural, Suite::RProperties, Suite::Metric, Suite::Bolic];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Structural => "structural",
            Suite::RProperties => "r-properties",
            Suite::Metric => "metric",
            Suite::Bolic => "bolic",
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|s| s.name() == text)
            .ok_or_else(|| Error::Configuration(format!("unknown suite {text:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub points: Vec<(String, String)>,
    pub value: String,
    pub bound: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub id: String,
    /// the inequality being checked
    pub anchor: String,
    pub samples: usize,
    pub exhaustive: bool,
    pub max_defect: String,
    pub max_defect_approx: f64,
    pub threshold: String,
    pub violations: usize,
    pub pass: bool,
    /// no sample qualified, so nothing was tested
    pub insufficient: bool,
    pub witnesses: Vec<Witness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// `R′(δ₂)`: beyond this `d(a,b)` every sampled B1 defect is at most `δ₂`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct B1Row {
    pub spread: u32,
    pub delta2: String,
    pub r_prime: Option<u32>,
    pub tail_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub version: u32,
    pub suite: Suite,
    pub group: String,
    pub delta: u32,
    pub radius: u32,
    pub budget: usize,
    pub seed: u64,
    pub properties: Vec<PropertyResult>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub decay_bins: Vec<DecayBin>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub b1_table: Vec<B1Row>,
    pub pass: bool,
}

impl VerificationReport {
    pub fn property(&self, id: &str) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| p.id == id)
    }

    pub fn failures(&self) -> Vec<&PropertyResult> {
        self.properties.iter().filter(|p| !p.pass).collect()
    }

    pub fn to_json_string(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Io(e.to_string()))
    }

    /// Decay bins as CSV with a versioned header.
    pub fn decay_csv(&self) -> String {
        let mut out = String::from(DECAY_CSV_HEADER);
        out.push('\n');
        for b in &self.decay_bins {
            let _ = writeln!(out, "{}-{},{},{}", b.lo, b.hi, b.max_defect.to_f64().unwrap_or(f64::NAN), b.samples);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub radius: u32,
    pub budget: usize,
    pub seed: u64,
    /// largest `d(a,b)` in the four-point decay scan (default `2·radius`)
    pub decay_max_distance: Option<u32>,
    /// `δ₂` values of the B1 table
    pub b1_deltas: Vec<BigRational>,
}

impl VerifyConfig {
    pub fn new(radius: u32, budget: usize, seed: u64) -> Self {
        Self {
            radius,
            budget,
            seed,
            decay_max_distance: None,
            b1_deltas: vec![ratio(1, 1), ratio(1, 2), ratio(1, 4), ratio(1, 10)],
        }
    }
}

// ---- tallying ----------------------------------------------------------

/// Outcome of checking one configuration.
struct Check {
    value: BigRational,
    ok: bool,
    bound: String,
    points: Vec<(String, String)>,
}

impl Check {
    fn exact(s: Sample, bound: &BigRational) -> Self {
        Check { ok: s.value <= *bound, bound: bound.to_string(), value: s.value, points: s.witness }
    }

    fn float(s: Sample, bound: f64) -> Self {
        let v = s.value.to_f64().unwrap_or(f64::NAN);
        Check {
            ok: v <= bound * (1.0 + FLOAT_SLACK) + f64::MIN_POSITIVE,
            bound: format!("{bound:e}"),
            value: s.value,
            points: s.witness,
        }
    }

    fn flag(ok: bool, value: BigRational, bound: impl Into<String>, points: Vec<(String, String)>) -> Self {
        Check { value, ok, bound: bound.into(), points }
    }
}

struct Tally {
    id: &'static str,
    anchor: &'static str,
    threshold: String,
    exhaustive: bool,
    samples: usize,
    max: Option<BigRational>,
    max_witness: Option<Witness>,
    violations: usize,
    witnesses: Vec<Witness>,
    note: Option<String>,
    skipped: bool,
}

impl Tally {
    fn new(id: &'static str, anchor: &'static str, threshold: impl Into<String>) -> Self {
        Tally {
            id,
            anchor,
            threshold: threshold.into(),
            exhaustive: false,
            samples: 0,
            max: None,
            max_witness: None,
            violations: 0,
            witnesses: Vec::new(),
            note: None,
            skipped: false,
        }
    }

    fn exhaustive(mut self, on: bool) -> Self {
        self.exhaustive = on;
        self
    }

    fn push(&mut self, c: Check) {
        self.samples += 1;
        let w = Witness { points: c.points, value: c.value.to_string(), bound: c.bound };
        if self.max.as_ref().is_none_or(|m| c.value > *m) {
            self.max = Some(c.value.clone());
            self.max_witness = Some(w.clone());
        }
        if !c.ok {
            self.violations += 1;
            if self.witnesses.len() < 3 {
                self.witnesses.push(w);
            }
        }
    }

    /// Records a runtime invariant failure as a violation.
    fn push_failure(&mut self, message: String) {
        self.samples += 1;
        self.violations += 1;
        if self.witnesses.len() < 3 {
            self.witnesses.push(Witness { points: vec![("error".into(), message)], value: "-".into(), bound: "-".into() });
        }
    }

    fn absorb(&mut self, r: Result<Check>) -> Result<()> {
        match r {
            Ok(c) => self.push(c),
            Err(Error::InvariantViolation(m)) => self.push_failure(m),
            Err(e) => return Err(e),
        }
        Ok(())
    }

    fn finish(self) -> PropertyResult {
        let insufficient = self.samples == 0 && !self.skipped;
        let mut witnesses = self.witnesses;
        if witnesses.is_empty() {
            witnesses.extend(self.max_witness);
        }
        let max = self.max.unwrap_or_else(BigRational::zero);
        PropertyResult {
            id: self.id.into(),
            anchor: self.anchor.into(),
            samples: self.samples,
            exhaustive: self.exhaustive,
            max_defect: max.to_string(),
            max_defect_approx: max.to_f64().unwrap_or(f64::NAN),
            threshold: self.threshold,
            violations: self.violations,
            pass: self.violations == 0 && !insufficient,
            insufficient,
            witnesses,
            note: self.note,
        }
    }
}

fn run<F>(n: usize, f: F) -> Vec<Result<Check>>
where
    F: Fn(usize) -> Result<Check> + Sync + Send,
{
    par::map_indices(n, f)
}

fn tally_all(t: &mut Tally, results: Vec<Result<Check>>) -> Result<()> {
    for r in results {
        t.absorb(r)?;
    }
    Ok(())
}

fn report(ctx: &MetricContext, suite: Suite, cfg: &VerifyConfig, properties: Vec<PropertyResult>) -> VerificationReport {
    let pass = properties.iter().all(|p| p.pass);
    VerificationReport {
        version: REPORT_VERSION,
        suite,
        group: ctx.model().kind().to_string(),
        delta: ctx.delta(),
        radius: cfg.radius,
        budget: cfg.budget,
        seed: cfg.seed,
        properties,
        decay_bins: Vec::new(),
        b1_table: Vec::new(),
        pass,
    }
}

fn fmt_pts(model: &GroupModel, items: &[(&str, &GroupElement)]) -> Vec<(String, String)> {
    items.iter().map(|(n, g)| (n.to_string(), model.format(g))).collect()
}

fn flag_value(ok: bool) -> BigRational {
    if ok {
        BigRational::zero()
    } else {
        BigRational::one()
    }
}

// ---- structural --------------------------------------------------------

/// `B(center, radius)` by breadth-first search over generator neighbours,
/// independent of the model's ball enumeration.
fn bfs_ball(model: &GroupModel, center: &GroupElement, radius: u32) -> Result<BTreeSet<GroupElement>> {
    let mut seen = BTreeSet::new();
    seen.insert(center.clone());
    let mut queue = VecDeque::from([(center.clone(), 0u32)]);
    while let Some((x, d)) = queue.pop_front() {
        if d == radius {
            continue;
        }
        for y in model.neighbors(&x)? {
            if seen.insert(y.clone()) {
                queue.push_back((y, d + 1));
            }
        }
    }
    Ok(seen)
}

fn dist_to_path(model: &GroupModel, x: &GroupElement, path: &bicombing::GeodesicPath) -> Result<u32> {
    let mut best = u32::MAX;
    for v in &path.vertices {
        best = best.min(model.distance(x, v)?);
        if best == 0 {
            break;
        }
    }
    Ok(best)
}

/// A sampled pair `(b, a)` with `d(a,b)` uniform in `0..=radius`.
fn structural_pair(dom: &Domain<'_>, stream: &str, i: usize) -> Result<(GroupElement, GroupElement)> {
    let model = dom.ctx.model();
    let mut rng = dom.rng(stream, i);
    let b = sampling::random_in_ball(model, &mut rng, dom.radius)?;
    let k = rand::Rng::gen_range(&mut rng, 0..=dom.radius);
    let a = sampling::random_at_distance(model, &mut rng, &b, k)?;
    Ok((b, a))
}

/// Convexity, support and equivariance of `f` and `f̄`, and the shape of the
/// star operator, at the nominal radii.
pub fn verify_structural(ctx: &MetricContext, cfg: &VerifyConfig) -> Result<VerificationReport> {
    let model = ctx.model();
    let delta = ctx.delta();
    let dom = Domain::new(ctx, cfg.radius, cfg.seed);
    let n = cfg.budget;
    let algebraic = model.supports_equivariant_reduction();

    let mut f_convex = Tally::new("f-convex", "f(b,a) is a convex combination", "exact");
    let mut f_support = Tally::new(
        "f-support",
        "d(a,b) > 10δ implies supp f(b,a) ⊂ S(b,10δ) ∩ B(p[b,a](10δ), δ)",
        "exact",
    );
    let mut f_near = Tally::new("f-near", "d(a,b) ≤ 10δ implies f(b,a) = a", "exact");
    let mut f_eq = Tally::new("f-equivariant", "f(gb, ga) = g·f(b,a)", "exact");
    let mut fb_convex = Tally::new("fbar-convex", "f̄(b,a) is a convex combination", "exact");
    let mut fb_support = Tally::new(
        "fbar-support",
        "d(a,b) > 10δ implies supp f̄(b,a) ⊂ B(p[b,a](10δ), 8δ)",
        "exact",
    );
    let mut fb_near = Tally::new("fbar-near-support", "d(a,b) ≤ 10δ implies supp f̄(b,a) ⊂ B(a,7δ)", "exact");
    let mut fb_eq = Tally::new("fbar-equivariant", "f̄(gb, ga) = g·f̄(b,a)", "exact");
    let mut fb_nbhd = Tally::new(
        "fbar-neighborhood",
        "c ∈ N(p[a,b], 9δ) implies supp f̄(c,a) ⊂ N(p[a,b], 9δ)",
        "exact",
    );
    let mut kernel = Tally::new(
        "star-kernel",
        "f̄(b,a) = Σ_w f(b,a)[w] · (1/|B(w,7δ)|) Σ_{x ∈ B(w,7δ)} x",
        "exact",
    );

    // f, f-bar and the kernel at sampled pairs
    let rows = par::map_indices(n, |i| structural_row(ctx, &dom, i, delta));
    for row in rows {
        match row {
            Ok(row) => {
                f_convex.push(row.f_convex);
                fb_convex.push(row.fbar_convex);
                kernel.push(row.kernel);
                if row.far {
                    f_support.push(row.f_shape);
                    fb_support.push(row.fbar_shape);
                } else {
                    f_near.push(row.f_shape);
                    fb_near.push(row.fbar_shape);
                }
            }
            Err(Error::InvariantViolation(m)) => f_convex.push_failure(m),
            Err(e) => return Err(e),
        }
    }

    // equivariance
    if algebraic {
        let res = run(n, |i| {
            let (b, a) = structural_pair(&dom, "equivariance", i)?;
            let mut rng = dom.rng("equivariance-g", i);
            let g = sampling::random_in_ball(model, &mut rng, cfg.radius)?;
            let f = ctx.f_chain(&b, &a)?;
            let (gb, ga) = (model.multiply(&g, &b)?, model.multiply(&g, &a)?);
            let direct = ctx.f_chain_direct(&gb, &ga)?;
            let diff = direct.sub(&f.translate(model, &g)?).l1();
            Ok(Check::flag(diff.is_zero(), diff, "0", fmt_pts(model, &[("g", &g), ("b", &b), ("a", &a)])))
        });
        tally_all(&mut f_eq, res)?;
        let res = run(n.div_ceil(4), |i| {
            let (b, a) = structural_pair(&dom, "equivariance-bar", i)?;
            let mut rng = dom.rng("equivariance-bar-g", i);
            let g = sampling::random_in_ball(model, &mut rng, cfg.radius)?;
            let fb = ctx.fbar_chain(&b, &a)?;
            let (gb, ga) = (model.multiply(&g, &b)?, model.multiply(&g, &a)?);
            let direct = ctx.star(&ctx.f_chain_direct(&gb, &ga)?)?;
            let diff = direct.sub(&fb.translate(model, &g)?).l1();
            Ok(Check::flag(diff.is_zero(), diff, "0", fmt_pts(model, &[("g", &g), ("b", &b), ("a", &a)])))
        });
        tally_all(&mut fb_eq, res)?;
    } else {
        for t in [&mut f_eq, &mut fb_eq] {
            t.skipped = true;
            t.note = Some("table models carry no group action to translate by".into());
        }
    }

    // neighbourhood of a geodesic
    let res = run(n.div_ceil(4), |i| {
        let mut rng = dom.rng("neighborhood", i);
        let (a, b) = structural_pair(&dom, "neighborhood-pair", i)?;
        let path = bicombing::geodesic(model, &a, &b)?;
        let t = rand::Rng::gen_range(&mut rng, 0..path.vertices.len());
        let c = sampling::random_within(model, &mut rng, path.at(t), 9 * delta)?;
        let fb = ctx.fbar_chain(&c, &a)?;
        let mut worst = 0;
        for x in fb.support() {
            worst = worst.max(dist_to_path(model, x, &path)?);
        }
        Ok(Check::flag(
            worst <= 9 * delta,
            int(worst),
            format!("9δ = {}", 9 * delta),
            fmt_pts(model, &[("a", &a), ("b", &b), ("c", &c)]),
        ))
    });
    tally_all(&mut fb_nbhd, res)?;

    let props = vec![
        f_convex.finish(),
        f_support.finish(),
        f_near.finish(),
        f_eq.finish(),
        fb_convex.finish(),
        fb_support.finish(),
        fb_near.finish(),
        fb_eq.finish(),
        fb_nbhd.finish(),
        kernel.finish(),
    ];
    Ok(report(ctx, Suite::Structural, cfg, props))
}

struct StructuralRow {
    far: bool,
    f_convex: Check,
    f_shape: Check,
    fbar_convex: Check,
    fbar_shape: Check,
    kernel: Check,
}

fn structural_row(ctx: &MetricContext, dom: &Domain<'_>, i: usize, delta: u32) -> Result<StructuralRow> {
    let model = ctx.model();
    let (near, star_r) = (10 * delta, 7 * delta);
    let (b, a) = structural_pair(dom, "structural", i)?;
    let pts = fmt_pts(model, &[("b", &b), ("a", &a)]);
    let f = ctx.f_chain(&b, &a)?;
    let fbar = ctx.star(&f)?;
    let d = model.distance(&a, &b)?;
    let far = d > near;
    let f_convex = Check::flag(f.is_convex(), flag_value(f.is_convex()), "convex", pts.clone());
    let fbar_convex = Check::flag(fbar.is_convex(), flag_value(fbar.is_convex()), "convex", pts.clone());
    let (f_shape, fbar_shape) = if far {
        let anchor = bicombing::point_at(model, &b, &a, near)?;
        let mut worst = 0u32;
        let mut ok = true;
        for w in f.support() {
            let off = model.distance(&anchor, w)?;
            worst = worst.max(off);
            ok &= model.distance(&b, w)? == near && off <= delta;
        }
        let mut spread = 0u32;
        for x in fbar.support() {
            spread = spread.max(model.distance(&anchor, x)?);
        }
        (
            Check::flag(ok, int(worst), format!("δ = {delta}"), pts.clone()),
            Check::flag(spread <= 8 * delta, int(spread), format!("8δ = {}", 8 * delta), pts.clone()),
        )
    } else {
        let ok = f == Chain0::vertex(a.clone());
        let mut spread = 0u32;
        for x in fbar.support() {
            spread = spread.max(model.distance(&a, x)?);
        }
        (
            Check::flag(ok, flag_value(ok), "f = a", pts.clone()),
            Check::flag(spread <= star_r, int(spread), format!("7δ = {star_r}"), pts.clone()),
        )
    };
    // independent star with the nominal radius
    let mut reference = Chain0::zero();
    for (w, q) in f.iter() {
        let ball = bfs_ball(model, w, star_r)?;
        let weight = q / int(ball.len() as u32);
        for x in ball {
            reference.add_term(x, &weight);
        }
    }
    let diff = fbar.sub(&reference).l1();
    let kernel = Check::flag(diff.is_zero(), diff, "0", pts);
    Ok(StructuralRow { far, f_convex, f_shape, fbar_convex, fbar_shape, kernel })
}

// ---- r -----------------------------------------------------------------

fn decay_max(cfg: &VerifyConfig) -> u32 {
    cfg.decay_max_distance.unwrap_or(2 * cfg.radius).max(1)
}

/// Bounds on `r`: the sandwich, Lipschitz-type bounds in each argument, the
/// `f̄` contraction rates and the four-point decay.
pub fn verify_r_properties(ctx: &MetricContext, rec: &ConstantsRecord, cfg: &VerifyConfig) -> Result<VerificationReport> {
    use names::*;
    let dom = Domain::new(ctx, cfg.radius, cfg.seed);
    let n = cfg.budget;
    let delta = ctx.delta();
    let (nn, dd, lp, c1, mp) = (
        rec.value(N)?.clone(),
        rec.value(D)?.clone(),
        rec.value(LAMBDA_PRIME)?.clone(),
        rec.value(C1)?.clone(),
        rec.value(M_PRIME)?.clone(),
    );

    let mut sandwich = Tally::new("r-sandwich", "d(a,b)/10δ ≤ r(a,b) ≤ d(a,b)", "0");
    tally_all(&mut sandwich, run(n, |i| Ok(Check::exact(dom.sandwich(i)?, &BigRational::zero()))))?;

    let mut nb = Tally::new("r-n-bound", "|r(a,b) − r(a,b′)| − d(b,b′) ≤ N", format!("N = {nn}"));
    tally_all(&mut nb, run(n, |i| Ok(Check::exact(dom.n_bound(i)?, &nn))))?;

    let mut db = Tally::new("r-d-bound", "|r(a,z)| ≤ D·|z|₁·diam(supp z) for 0-cycles z", format!("D = {dd}"));
    tally_all(&mut db, run(n, |i| Ok(Check::exact(dom.d_bound(i)?, &dd))))?;

    let mut ll = Tally::new("fbar-l-lambda", "|f̄(b,a) − f̄(b,a′)|₁ ≤ L·λ^((a|a′)_b)", "L·λ^(a|a')_b");
    tally_all(
        &mut ll,
        run(n, |i| {
            let s = dom.l_lambda(i)?;
            let bound = rec.lambda_bound(s.key.to_f64().unwrap_or(0.0))?;
            Ok(Check::float(s, bound))
        }),
    )?;

    let mut lpt = Tally::new(
        "fbar-lambda-prime",
        "(a|b)_b′ ≤ 10δ and (a|b′)_b ≤ 10δ imply ½|f̄(b,a) − f̄(b′,a)|₁ ≤ λ′",
        format!("λ′ = {lp}"),
    );
    for r in par::map_indices(n, |i| dom.lambda_prime(i)) {
        match r {
            Ok(Some(s)) => lpt.push(Check::exact(s, &lp)),
            Ok(None) => {}
            Err(Error::InvariantViolation(m)) => lpt.push_failure(m),
            Err(e) => return Err(e),
        }
    }

    let mut c1t = Tally::new(
        "r-c1",
        "x ∈ p[a,b], c ∈ N(p[x,b], 9δ) imply |r(a,c) − r(a,x) − r(x,c)| ≤ C₁",
        format!("C1 = {c1}"),
    );
    tally_all(&mut c1t, run(n, |i| Ok(Check::exact(dom.c1_r(i)?, &c1))))?;

    let mut mpt = Tally::new("r-m-prime", "|r(a,b) − r(a′,b)| ≤ M′·d(a,a′)", format!("M' = {mp}"));
    tally_all(&mut mpt, run(n, |i| Ok(Check::exact(dom.m_prime(i)?, &mp))))?;

    // four-point decay
    let dmax = decay_max(cfg);
    let width = 10 * delta;
    let mut fp = Tally::new(
        "r-four-point",
        "d(a,a′), d(b,b′) ≤ 1 imply |r(a,b) − r(a′,b) − r(a,b′) + r(a′,b′)| ≤ C·μ^d(a,b)",
        "C·μ^d(a,b)",
    );
    let mut keyed = Vec::new();
    for r in par::map_indices(n, |i| dom.four_point(i, 1 + (i as u32 % dmax))) {
        match r {
            Ok(s) => {
                keyed.push((s.key.clone(), s.value.clone()));
                let bound = rec.decay_bound(s.key.to_f64().unwrap_or(0.0))?;
                fp.push(Check::float(s, bound));
            }
            Err(Error::InvariantViolation(m)) => fp.push_failure(m),
            Err(e) => return Err(e),
        }
    }
    let bins = crate::constants::decay_bins(&keyed, 1, dmax, width);
    let mut shape = Tally::new("r-decay-bins", "bin maxima are non-increasing and the fitted rate is below one", "μ̂ < 1");
    let populated: Vec<&DecayBin> = bins.iter().filter(|b| b.samples > 0).collect();
    for w in populated.windows(2) {
        let ok = w[1].max_defect <= w[0].max_defect;
        shape.push(Check::flag(
            ok,
            w[1].max_defect.clone(),
            format!("previous bin max {}", w[0].max_defect),
            vec![("bin".into(), format!("{}-{}", w[1].lo, w[1].hi))],
        ));
    }
    match fit_decay(&keyed, 1, dmax, width, "mu") {
        Ok(fit) => {
            let rate = fit.rate.clone();
            shape.push(Check::flag(rate < BigRational::one(), rate, "1", vec![("fit".into(), "mu".into())]));
            if fit.degenerate {
                shape.note = Some("fewer than two non-zero bins".into());
            }
        }
        Err(Error::FitFailure(m)) => shape.push_failure(m),
        Err(e) => return Err(e),
    }

    let props = vec![
        sandwich.finish(),
        nb.finish(),
        db.finish(),
        ll.finish(),
        lpt.finish(),
        c1t.finish(),
        mpt.finish(),
        fp.finish(),
        shape.finish(),
    ];
    let mut rep = report(ctx, Suite::RProperties, cfg, props);
    rep.decay_bins = bins;
    Ok(rep)
}

// ---- s and d-hat ---------------------------------------------------------

/// Bounds on `s`, the metric axioms of `d̂`, the `d̂` four-point decay and
/// constancy of `d̂` on near pairs. `ctx` must carry the record's `C₂`.
pub fn verify_metric(ctx: &MetricContext, rec: &ConstantsRecord, cfg: &VerifyConfig) -> Result<VerificationReport> {
    use names::*;
    let model = ctx.model();
    let dom = Domain::new(ctx, cfg.radius, cfg.seed);
    let n = cfg.budget;
    let delta = ctx.delta();
    let (m, c1, c2) = (rec.value(M)?.clone(), rec.value(C1)?.clone(), rec.value(C2)?.clone());
    if ctx.c2() != Some(&c2) {
        return Err(Error::Configuration("context C2 differs from the record".into()));
    }

    let mut sm = Tally::new("s-m-lipschitz", "|s(u,v) − s(u,v′)| ≤ M·d(v,v′)", format!("M = {m}"));
    tally_all(&mut sm, run(n, |i| Ok(Check::exact(dom.m_s(i)?, &m))))?;
    let mut sc1 = Tally::new("s-c1", "w ∈ p[u,v] implies |s(u,v) − s(u,w) − s(w,v)| ≤ C₁", format!("C1 = {c1}"));
    tally_all(&mut sc1, run(n, |i| Ok(Check::exact(dom.c1_s(i)?, &c1))))?;
    let mut sc2 = Tally::new("s-c2", "s(a,b) − s(a,c) − s(c,b) ≤ C₂", format!("C2 = {c2}"));
    tally_all(&mut sc2, run(n, |i| Ok(Check::exact(dom.c2(i)?, &c2))))?;

    // axioms over (1, b, c) with b, c in the ball, exhaustively when it fits
    let ball = model.identity_ball(cfg.radius)?;
    let one = model.identity();
    let exhaustive = ball.len().saturating_mul(ball.len()) <= n.max(1);
    let triples: Vec<(usize, usize)> = if exhaustive {
        (0..ball.len()).flat_map(|i| (0..ball.len()).map(move |j| (i, j))).collect()
    } else {
        (0..n)
            .map(|i| {
                let mut rng = dom.rng("triangle", i);
                (rand::Rng::gen_range(&mut rng, 0..ball.len()), rand::Rng::gen_range(&mut rng, 0..ball.len()))
            })
            .collect()
    };
    let mut tri = Tally::new("dhat-triangle", "d̂(a,b) ≤ d̂(a,c) + d̂(c,b)", "0").exhaustive(exhaustive);
    tally_all(
        &mut tri,
        par::map_slice(&triples, |&(i, j)| {
            let (b, c) = (&ball[i], &ball[j]);
            let excess = ctx.dhat(&one, b)? - ctx.dhat(&one, c)? - ctx.dhat(c, b)?;
            Ok(Check::flag(!excess.is_positive(), excess, "0", fmt_pts(model, &[("a", &one), ("b", b), ("c", c)])))
        }),
    )?;
    let pair_exhaustive = ball.len() <= n.max(1);
    let pairs: Vec<(GroupElement, GroupElement)> = if pair_exhaustive {
        ball.iter().map(|b| (one.clone(), b.clone())).collect()
    } else {
        Vec::new()
    };
    let sampled: Vec<(GroupElement, GroupElement)> = par::map_indices(n, |i| {
        let mut rng = dom.rng("axioms", i);
        let a = sampling::random_in_ball(model, &mut rng, cfg.radius)?;
        let k = rand::Rng::gen_range(&mut rng, 0..=cfg.radius);
        let b = sampling::random_at_distance(model, &mut rng, &a, k)?;
        Ok((a, b))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let all_pairs: Vec<(GroupElement, GroupElement)> = pairs.into_iter().chain(sampled).collect();
    let mut sym = Tally::new("dhat-symmetry", "d̂(a,b) = d̂(b,a)", "0");
    let mut ident = Tally::new("dhat-identity", "d̂(a,b) = 0 exactly when a = b", "0");
    let rows = par::map_slice(&all_pairs, |(a, b)| -> Result<(Check, Check)> {
        let (ab, ba) = (ctx.dhat(a, b)?, ctx.dhat(b, a)?);
        let pts = fmt_pts(model, &[("a", a), ("b", b)]);
        let asym = (&ab - &ba).abs();
        let ok_id = if a == b { ab.is_zero() } else { ab.is_positive() };
        Ok((Check::flag(asym.is_zero(), asym, "0", pts.clone()), Check::flag(ok_id, flag_value(ok_id), "0 iff a = b", pts)))
    });
    for r in rows {
        match r {
            Ok((s, i)) => {
                sym.push(s);
                ident.push(i);
            }
            Err(Error::InvariantViolation(msg)) => sym.push_failure(msg),
            Err(e) => return Err(e),
        }
    }

    let mut fps = Vec::new();
    for spread in 1..=3u32 {
        let id: &'static str = match spread {
            1 => "dhat-four-point-1",
            2 => "dhat-four-point-2",
            _ => "dhat-four-point-3",
        };
        let mut t = Tally::new(
            id,
            "d(a,a′), d(b,b′) ≤ R imply |d̂(a,b) − d̂(a′,b) − d̂(a,b′) + d̂(a′,b′)| ≤ R²·C·μ^(d(a,b) − 2R)",
            format!("R²·C·μ^(d − 2R) with R = {spread}"),
        );
        tally_all(
            &mut t,
            run(n, |i| {
                let s = dom.dhat_four_point(i, spread)?;
                let bound = rec.dhat_decay_bound(spread, s.key.to_f64().unwrap_or(0.0))?;
                Ok(Check::float(s, bound))
            }),
        )?;
        fps.push(t.finish());
    }

    // near pairs: r = 1 both ways, so d-hat = 1 + C2
    let near = 10 * delta;
    let near_ball = model.identity_ball(near)?;
    let near_exhaustive = near_ball.len() <= n.max(1);
    let near_pairs: Vec<(GroupElement, GroupElement)> = if near_exhaustive {
        near_ball.iter().filter(|b| !b.is_identity()).map(|b| (one.clone(), b.clone())).collect()
    } else {
        par::map_indices(n, |i| {
            let mut rng = dom.rng("near", i);
            let a = sampling::random_in_ball(model, &mut rng, cfg.radius)?;
            let k = rand::Rng::gen_range(&mut rng, 1..=near);
            let b = sampling::random_at_distance(model, &mut rng, &a, k)?;
            Ok((a, b))
        })
        .into_iter()
        .collect::<Result<_>>()?
    };
    let target = BigRational::one() + &c2;
    let mut np = Tally::new("dhat-near-constant", "0 < d(a,b) ≤ 10δ implies d̂(a,b) = 1 + C₂", format!("1 + C2 = {target}"))
        .exhaustive(near_exhaustive);
    tally_all(
        &mut np,
        par::map_slice(&near_pairs, |(a, b)| {
            let v = ctx.dhat(a, b)?;
            let ok = a == b || v == target;
            Ok(Check::flag(ok, (&v - &target).abs(), "0", fmt_pts(model, &[("a", a), ("b", b)])))
        }),
    )?;

    let mut props = vec![sm.finish(), sc1.finish(), sc2.finish(), tri.finish(), sym.finish(), ident.finish()];
    props.extend(fps);
    props.push(np.finish());
    Ok(report(ctx, Suite::Metric, cfg, props))
}

// ---- bolicity ------------------------------------------------------------

/// Weak geodesicity, the midpoint inequality B2, the strong form of B1 and
/// the quasi-isometry bounds. `ctx` must carry the record's `C₂`.
pub fn verify_bolic(ctx: &MetricContext, rec: &ConstantsRecord, cfg: &VerifyConfig) -> Result<VerificationReport> {
    use names::*;
    let dom = Domain::new(ctx, cfg.radius, cfg.seed);
    let n = cfg.budget;
    let delta = ctx.delta();
    let (d1, d2, a, b, c2) = (
        rec.value(DELTA1)?.clone(),
        rec.value(DELTA2)?.clone(),
        rec.value(A)?.clone(),
        rec.value(B)?.clone(),
        rec.value(C2)?.clone(),
    );
    if ctx.c2() != Some(&c2) {
        return Err(Error::Configuration("context C2 differs from the record".into()));
    }

    let mut wg = Tally::new(
        "weak-geodesic",
        "for t ∈ [0, d̂(x,y)] some a has d̂(a,x) ≤ t + δ₁ and d̂(a,y) ≤ d̂(x,y) − t + δ₁; midpoint within δ₁",
        format!("delta1 = {d1}"),
    );
    tally_all(&mut wg, run(n, |i| Ok(Check::exact(dom.weak_geodesic(i)?, &d1))))?;

    let mut b2 = Tally::new(
        "b2-midpoint",
        "2d̂(m,z) ≤ √(2d̂(x,z)² + 2d̂(y,z)² − d̂(x,y)²) + 4δ₂",
        format!("delta2 = {d2}"),
    );
    tally_all(
        &mut b2,
        run(n, |i| {
            let (terms, s) = dom.b2(i)?;
            Ok(Check::flag(terms.holds(&d2), s.value, d2.to_string(), s.witness))
        }),
    )?;

    // B1 in its strong form through the d-hat four-point surrogate
    let spread = 1;
    let samples: Vec<Sample> = par::try_map_indices(n, |i| dom.b1(i, spread))?;
    let min_tail = (samples.len() / 20).max(1);
    let mut b1 = Tally::new(
        "b1-strong",
        "for each δ₂ some R′ makes d̂(a,b′) + d̂(a′,b) ≤ d̂(a,b) + d̂(a′,b′) + 2δ₂ once d(a,b) ≥ R′",
        format!("R' reached with at least {min_tail} samples beyond it"),
    );
    let mut table = Vec::new();
    for d2v in &cfg.b1_deltas {
        let worst_key = samples
            .iter()
            .filter(|s| s.value > *d2v)
            .map(|s| s.key.to_integer().to_u32().unwrap_or(u32::MAX))
            .max();
        let r_prime = match worst_key {
            Some(k) => k.saturating_add(1),
            None => samples.iter().map(|s| s.key.to_integer().to_u32().unwrap_or(0)).min().unwrap_or(0),
        };
        let tail = samples.iter().filter(|s| s.key >= int(r_prime)).count();
        let ok = tail >= min_tail;
        let worst = samples.iter().map(|s| s.value.clone()).max().unwrap_or_else(BigRational::zero);
        b1.push(Check::flag(
            ok,
            worst,
            format!("delta2 = {d2v}"),
            vec![("R'".into(), r_prime.to_string()), ("tail".into(), tail.to_string())],
        ));
        table.push(B1Row { spread, delta2: d2v.to_string(), r_prime: ok.then_some(r_prime), tail_samples: tail });
    }

    let mut qi = Tally::new("quasi-isometry", "d̂/A − B ≤ d ≤ A·d̂ + B", format!("A = {a}, B = {b}"));
    let mut env = Tally::new("dhat-envelope", "d/10δ + C₂ ≤ d̂(a,b) ≤ d + C₂ for a ≠ b", format!("C2 = {c2}"));
    for r in par::map_indices(n, |i| dom.qi(i)) {
        match r {
            Ok(s) => {
                let (d, dh) = (s.key.clone(), s.value.clone());
                let excess = (&dh / &a - &b - &d).max(&d - &a * &dh - &b);
                qi.push(Check::flag(!excess.is_positive(), excess, "0", s.witness.clone()));
                let lo = &d / int(10 * delta) + &c2;
                let hi = &d + &c2;
                let out = (&lo - &dh).max(&dh - &hi);
                env.push(Check::flag(!out.is_positive(), out, "0", s.witness));
            }
            Err(Error::InvariantViolation(m)) => qi.push_failure(m),
            Err(e) => return Err(e),
        }
    }

    let props = vec![wg.finish(), b2.finish(), b1.finish(), qi.finish(), env.finish()];
    let mut rep = report(ctx, Suite::Bolic, cfg, props);
    rep.b1_table = table;
    Ok(rep)
}

/// Runs one suite; every suite but the structural one needs a record.
pub fn run_suite(
    ctx: &MetricContext,
    suite: Suite,
    rec: Option<&ConstantsRecord>,
    cfg: &VerifyConfig,
) -> Result<VerificationReport> {
    let need = || Error::Configuration(format!("suite {} needs a constants record", suite.name()));
    match suite {
        Suite::Structural => verify_structural(ctx, cfg),
        Suite::RProperties => verify_r_properties(ctx, rec.ok_or_else(need)?, cfg),
        Suite::Metric => verify_metric(ctx, rec.ok_or_else(need)?, cfg),
        Suite::Bolic => verify_bolic(ctx, rec.ok_or_else(need)?, cfg),
    }
}
