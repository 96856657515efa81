//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Budgets are sized for a single core; every count below is a floor stated
//! by the criterion it serves.

mod common;

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use bolic::bicombing::point_at;
use bolic::chain::Chain0;
use bolic::constants::{decay_bins, estimate_constants, fit_decay, names, ConstantsRecord, EstimateConfig};
use bolic::metric::{Construction, MetricContext};
use bolic::probes::{int, Domain, Sample};
use bolic::sampling::{random_at_distance, random_in_ball, random_of_length, sample_rng};
use bolic::verify::{verify_structural, VerifyConfig};
use bolic::{GroupElement, GroupModel};
use common::oracle::Oracle;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

type Outcome = Result<String, String>;

fn q(n: i64, d: i64) -> BigRational {
    BigRational::new(n.into(), d.into())
}

fn free2() -> GroupModel {
    GroupModel::free(2, 1).unwrap()
}

fn z2z3() -> GroupModel {
    GroupModel::free_product(&[2, 3], 1).unwrap()
}

/// Contexts and records shared between criteria, built on first use.
struct Fixtures {
    f2: MetricContext,
    fp: MetricContext,
    f2_record: Option<ConstantsRecord>,
    fp_record: Option<ConstantsRecord>,
}

/// Radius and budget of the F₂ constants estimate.
const F2_RADIUS: u32 = 10;
const F2_BUDGET: usize = 1500;

impl Fixtures {
    fn new() -> Self {
        Self {
            f2: MetricContext::new(free2()).unwrap(),
            fp: MetricContext::new(z2z3()).unwrap(),
            f2_record: None,
            fp_record: None,
        }
    }

    fn f2_record(&mut self) -> Result<ConstantsRecord, String> {
        if self.f2_record.is_none() {
            let t = Instant::now();
            let rec = estimate_constants(&mut self.f2, &EstimateConfig::new(F2_RADIUS, F2_BUDGET, 1)).map_err(|e| e.to_string())?;
            println!("  (F2 constants estimated at R={F2_RADIUS}, budget {F2_BUDGET} in {:.1?})", t.elapsed());
            self.f2_record = Some(rec);
        }
        Ok(self.f2_record.clone().unwrap())
    }

    fn fp_record(&mut self) -> Result<ConstantsRecord, String> {
        if self.fp_record.is_none() {
            let rec = estimate_constants(&mut self.fp, &EstimateConfig::new(6, 600, 1)).map_err(|e| e.to_string())?;
            self.fp_record = Some(rec);
        }
        Ok(self.fp_record.clone().unwrap())
    }
}

fn fail(msg: impl Into<String>) -> Outcome {
    Err(msg.into())
}

fn e2s<T>(r: bolic::Result<T>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn tree_collapse(fx: &mut Fixtures) -> Outcome {
    let ctx = &fx.f2;
    let m = ctx.model();
    let (mut far, mut near) = (0usize, 0usize);
    for i in 0..10_000u64 {
        let mut rng = sample_rng(101, "tree-collapse", i);
        let b = e2s(random_in_ball(m, &mut rng, 20))?;
        let d = 1 + (i % 40) as u32;
        let a = e2s(random_at_distance(m, &mut rng, &b, d))?;
        let got = e2s(ctx.f_chain(&b, &a))?;
        let want = if d > 10 {
            far += 1;
            let v = e2s(point_at(m, &b, &a, 10))?;
            if e2s(m.distance(&b, &v))? != 10 || e2s(m.distance(&v, &a))? != d - 10 {
                return fail(format!("point_at({}, {}, 10) is off the geodesic", m.format(&b), m.format(&a)));
            }
            v
        } else {
            near += 1;
            a.clone()
        };
        if got != Chain0::vertex(want.clone()) {
            return fail(format!("f({}, {}) = {} instead of {}", m.format(&b), m.format(&a), got.render(m), m.format(&want)));
        }
    }
    Ok(format!("{far} pairs with d > 10 and {near} with d <= 10, all single vertices as predicted"))
}

fn exact_one_step_value(fx: &mut Fixtures) -> Outcome {
    let ctx = &fx.f2;
    let m = ctx.model();
    let expected = q(8745, 4373);
    let ball = e2s(m.identity_ball(12))?;
    let one = m.identity();
    let mut checked = 0usize;
    for g in ball.iter() {
        let d = e2s(m.length(g))?;
        if d < 11 {
            continue;
        }
        let r = e2s(ctx.r_value(&one, g))?;
        if r != expected {
            return fail(format!("r(1, {}) = {r}", m.format(g)));
        }
        checked += 1;
    }
    let model = free2();
    let oracle = Oracle::new(&model);
    let mut oracle_checked = 0;
    for i in 0..100u64 {
        let mut rng = sample_rng(102, "one-step-oracle", i);
        let g = e2s(random_of_length(&model, &mut rng, 11 + (i % 2) as u32))?;
        let r = oracle.r(&one, &g);
        if r != expected {
            return fail(format!("oracle r(1, {}) = {r}", model.format(&g)));
        }
        oracle_checked += 1;
    }
    Ok(format!("all {checked} elements of S(1,11) and S(1,12) give 8745/4373; oracle agrees on {oracle_checked}"))
}

fn sandwich_violation(ctx: &MetricContext, a: &GroupElement, b: &GroupElement) -> Result<Option<String>, String> {
    let m = ctx.model();
    let d = int(e2s(m.distance(a, b))?);
    let r = e2s(ctx.r_value(a, b))?;
    if &r * int(10 * ctx.delta()) < d || r > d {
        return Ok(Some(format!("r({}, {}) = {r} with d = {d}", m.format(a), m.format(b))));
    }
    Ok(None)
}

fn sandwich(fx: &mut Fixtures) -> Outcome {
    let ball = e2s(fx.fp.model().identity_ball(12))?;
    for a in ball.iter() {
        for b in ball.iter() {
            if let Some(w) = sandwich_violation(&fx.fp, a, b)? {
                return fail(format!("Z/2*Z/3: {w}"));
            }
        }
    }
    let exhaustive = ball.len() * ball.len();
    let m = fx.f2.model();
    let per_shell = 1000u64;
    for d in 1..=40u32 {
        for i in 0..per_shell {
            let mut rng = sample_rng(103, &format!("sandwich-shell-{d}"), i);
            let a = e2s(random_in_ball(m, &mut rng, 20))?;
            let b = e2s(random_at_distance(m, &mut rng, &a, d))?;
            if let Some(w) = sandwich_violation(&fx.f2, &a, &b)? {
                return fail(format!("F2: {w}"));
            }
        }
    }
    Ok(format!("{exhaustive} pairs of B(1,12) in Z/2*Z/3 (exhaustive) and {per_shell} F2 pairs per shell d = 1..40"))
}

fn oracle_equivalence(fx: &mut Fixtures) -> Outcome {
    let ctx = &fx.fp;
    let m = ctx.model();
    let ball = e2s(m.identity_ball(10))?;
    // one oracle evaluation per translation class a⁻¹b, at the first pair met
    let mut classes: BTreeMap<GroupElement, (GroupElement, GroupElement)> = BTreeMap::new();
    let mut memo = Vec::with_capacity(ball.len() * ball.len());
    for a in ball.iter() {
        for b in ball.iter() {
            let class = e2s(m.relative(a, b))?;
            classes.entry(class.clone()).or_insert_with(|| (a.clone(), b.clone()));
            memo.push((class, e2s(ctx.r_value(a, b))?, a, b));
        }
    }
    let model = z2z3();
    let oracle = Oracle::new(&model);
    let mut reference = BTreeMap::new();
    for (class, (a, b)) in &classes {
        reference.insert(class.clone(), oracle.r(a, b));
    }
    let off_identity = classes.values().filter(|(a, _)| !a.is_identity()).count();
    for (class, r, a, b) in &memo {
        if &reference[class] != r {
            return fail(format!("r({}, {}): memoized {r}, oracle {}", m.format(a), m.format(b), reference[class]));
        }
    }
    Ok(format!(
        "{} pairs of B(1,10) agree exactly; {} oracle evaluations ({off_identity} at a base point other than 1)",
        memo.len(),
        classes.len()
    ))
}

fn metric_axioms(fx: &mut Fixtures) -> Outcome {
    let rec = fx.fp_record()?;
    let ctx = &fx.fp;
    let m = ctx.model();
    let c2 = e2s(rec.value(names::C2))?.clone();
    if ctx.c2() != Some(&c2) {
        return fail("context does not carry the estimated C2");
    }
    let ball = e2s(m.identity_ball(6))?;
    let one = m.identity();
    let mut dh: BTreeMap<(usize, usize), BigRational> = BTreeMap::new();
    for (i, a) in ball.iter().enumerate() {
        for (j, b) in ball.iter().enumerate() {
            dh.insert((i, j), e2s(ctx.dhat(a, b))?);
        }
    }
    let id = ball.iter().position(|g| *g == one).unwrap();
    let n = ball.len();
    let mut triangles = 0usize;
    for b in 0..n {
        for c in 0..n {
            triangles += 1;
            if dh[&(id, c)] > &dh[&(id, b)] + &dh[&(b, c)] {
                return fail(format!("d̂(1,{c}) > d̂(1,{b}) + d̂({b},{c}) with C2 = {c2}", b = m.format(&ball[b]), c = m.format(&ball[c])));
            }
        }
    }
    for i in 0..n {
        if !dh[&(i, i)].is_zero() {
            return fail(format!("d̂(x,x) = {} at x = {}", dh[&(i, i)], m.format(&ball[i])));
        }
        for j in 0..n {
            if dh[&(i, j)] != dh[&(j, i)] {
                return fail(format!("asymmetric at ({}, {})", m.format(&ball[i]), m.format(&ball[j])));
            }
            if i != j && !dh[&(i, j)].is_positive() {
                return fail(format!("d̂ vanishes off the diagonal at ({}, {})", m.format(&ball[i]), m.format(&ball[j])));
            }
        }
    }
    // symmetry and identity beyond the ball
    let far = Domain::new(ctx, 20, 105);
    for i in 0..300 {
        let mut rng = far.rng("symmetry", i);
        let a = e2s(random_in_ball(m, &mut rng, 20))?;
        let b = e2s(random_in_ball(m, &mut rng, 20))?;
        if e2s(ctx.dhat(&a, &b))? != e2s(ctx.dhat(&b, &a))? || !e2s(ctx.dhat(&a, &a))?.is_zero() {
            return fail(format!("symmetry or identity fails at ({}, {})", m.format(&a), m.format(&b)));
        }
    }
    Ok(format!("C2 = {c2} from an R=6 estimate; {triangles} triangles (1,b,c) exhaustive, {} ordered pairs symmetric, 300 more sampled", n * n))
}

fn near_pairs(ctx: &MetricContext, c2: &BigRational, tag: &str) -> Result<usize, String> {
    let m = ctx.model();
    let want = c2 + int(1);
    let one = m.identity();
    let ball = e2s(m.identity_ball(10 * ctx.delta()))?;
    let mut n = 0;
    for b in ball.iter().filter(|b| !b.is_identity()) {
        let v = e2s(ctx.dhat(&one, b))?;
        if v != want {
            return Err(format!("{tag}: d̂(1, {}) = {v}, expected {want}", m.format(b)));
        }
        n += 1;
    }
    for i in 0..2000u64 {
        let mut rng = sample_rng(106, &format!("near-{tag}"), i);
        let a = e2s(random_in_ball(m, &mut rng, 25))?;
        let k = 1 + (i % 10) as u32;
        let b = e2s(random_at_distance(m, &mut rng, &a, k))?;
        let v = e2s(ctx.dhat(&a, &b))?;
        if v != want {
            return Err(format!("{tag}: d̂({}, {}) = {v}, expected {want}", m.format(&a), m.format(&b)));
        }
        n += 1;
    }
    Ok(n)
}

fn near_pair_constancy(fx: &mut Fixtures) -> Outcome {
    let f2c2 = e2s(fx.f2_record()?.value(names::C2))?.clone();
    let fpc2 = e2s(fx.fp_record()?.value(names::C2))?.clone();
    let a = near_pairs(&fx.f2, &f2c2, "F2")?;
    let b = near_pairs(&fx.fp, &fpc2, "Z/2*Z/3")?;
    Ok(format!("d̂ = 1 + C2 on {a} F2 pairs (C2 = {f2c2}) and {b} Z/2*Z/3 pairs (C2 = {fpc2}), exhaustive around 1"))
}

fn four_point_decay(fx: &mut Fixtures) -> Outcome {
    fx.f2_record()?;
    let ctx = &fx.f2;
    let dom = Domain::new(ctx, 20, 107);
    let n = 2000;
    let samples: Vec<Sample> = (0..n).map(|i| dom.four_point(i, 1 + (i as u32 % 40))).collect::<bolic::Result<_>>().map_err(|e| e.to_string())?;
    let keyed: Vec<(BigRational, BigRational)> = samples.iter().map(|s| (s.key.clone(), s.value.clone())).collect();
    let bins = decay_bins(&keyed, 1, 40, 10);
    if let Some(b) = bins.iter().find(|b| b.samples < 500) {
        return fail(format!("bin {}-{} has only {} quadruples", b.lo, b.hi, b.samples));
    }
    for w in bins.windows(2) {
        if w[1].max_defect > w[0].max_defect {
            return fail(format!("bin maxima increase: {}-{}: {} then {}-{}: {}", w[0].lo, w[0].hi, w[0].max_defect, w[1].lo, w[1].hi, w[1].max_defect));
        }
    }
    let fit = e2s(fit_decay(&keyed, 1, 40, 10, "four-point"))?;
    let mu = fit.rate.to_f64().unwrap();
    let c = fit.coefficient.to_f64().unwrap();
    if mu >= 1.0 {
        return fail(format!("fitted rate {mu} is not below one"));
    }
    let fresh = Domain::new(ctx, 20, 207).fresh();
    let mut variants = Vec::new();
    for spread in [2u32, 3] {
        let mut worst = f64::NEG_INFINITY;
        for i in 0..300 {
            let s = e2s(fresh.dhat_four_point(i, spread))?;
            let d = s.key.to_f64().unwrap();
            let bound = (spread * spread) as f64 * c * mu.powf(d - 2.0 * spread as f64);
            let v = s.value.to_f64().unwrap();
            if v > bound * (1.0 + 1e-12) {
                return fail(format!("R={spread}: defect {v} above {bound} at d = {d}, witness {:?}", s.witness));
            }
            worst = worst.max(v / bound);
        }
        variants.push(format!("R={spread}: 300 fresh, max ratio to bound {worst:.3}"));
    }
    let maxima: Vec<String> = bins.iter().map(|b| format!("{}-{}: {:.4}", b.lo, b.hi, b.max_defect.to_f64().unwrap())).collect();
    Ok(format!(
        "bin maxima [{}] non-increasing; mu = {mu}, C = {c}{}; {}",
        maxima.join(", "),
        if fit.degenerate { " (degenerate fit)" } else { "" },
        variants.join("; ")
    ))
}

fn weak_geodesic_and_b2(fx: &mut Fixtures) -> Outcome {
    let rec = fx.f2_record()?;
    let ctx = &fx.f2;
    let d1 = e2s(rec.value(names::DELTA1))?.clone();
    let d2 = e2s(rec.value(names::DELTA2))?.clone();
    let dom = Domain::new(ctx, F2_RADIUS, 108);
    let n = 10_000;
    for i in 0..n {
        let s = e2s(dom.weak_geodesic(i))?;
        if s.value > d1 {
            return fail(format!("weak geodesic needs {} > delta1 = {d1} at {:?}", s.value, s.witness));
        }
        let (terms, s) = e2s(dom.b2(i))?;
        if !terms.holds(&d2) {
            return fail(format!("B2 fails at delta2 = {d2}: needs {}, witness {:?}", s.value, s.witness));
        }
    }
    Ok(format!("delta1 = {d1}, delta2 = {} (~{:.4}); {n} fresh pairs and {n} fresh triples, zero violations", d2, d2.to_f64().unwrap()))
}

fn equivariance(fx: &mut Fixtures) -> Outcome {
    let mut lines = Vec::new();
    for (tag, radius) in [("F2", 8u32), ("Z/2*Z/3", 10u32)] {
        let rec = if tag == "F2" { fx.f2_record()? } else { fx.fp_record()? };
        let ctx = if tag == "F2" { &fx.f2 } else { &fx.fp };
        let c2 = e2s(rec.value(names::C2))?.clone();
        let plain = e2s(MetricContext::from_arc(ctx.model_arc()))?.with_equivariant_reduction(false);
        let plain = e2s(plain.with_c2(c2))?;
        let m = ctx.model();
        for i in 0..1000u64 {
            let mut rng = sample_rng(109, &format!("equivariance-{tag}"), i);
            let g = e2s(random_in_ball(m, &mut rng, radius))?;
            let x = e2s(random_in_ball(m, &mut rng, radius))?;
            let y = e2s(random_in_ball(m, &mut rng, radius))?;
            let (gx, gy) = (e2s(m.multiply(&g, &x))?, e2s(m.multiply(&g, &y))?);
            let lhs = e2s(plain.dhat(&gx, &gy))?;
            let rhs = e2s(ctx.dhat(&x, &y))?;
            if lhs != rhs || e2s(plain.dhat(&x, &y))? != rhs {
                return fail(format!("{tag}: d̂(gx,gy) = {lhs}, d̂(x,y) = {rhs} for g = {}, x = {}, y = {}", m.format(&g), m.format(&x), m.format(&y)));
            }
        }
        lines.push(format!("{tag}: 1000 triples in B(1,{radius})"));
    }
    Ok(format!("direct evaluation at g·x, g·y matches the reduced value exactly; {}", lines.join(", ")))
}

fn quasi_isometry(fx: &mut Fixtures) -> Outcome {
    let rec = fx.f2_record()?;
    let ctx = &fx.f2;
    let (a, b, c2) = (
        e2s(rec.value(names::A))?.clone(),
        e2s(rec.value(names::B))?.clone(),
        e2s(rec.value(names::C2))?.clone(),
    );
    let dom = Domain::new(ctx, F2_RADIUS, 110).fresh();
    let n = 3000;
    for i in 0..n {
        let s = e2s(dom.qi(i))?;
        let (d, dh) = (&s.key, &s.value);
        if &(dh / &a - &b) > d || d > &(&a * dh + &b) {
            return fail(format!("d = {d}, d̂ = {dh} outside A = {a}, B = {b}: {:?}", s.witness));
        }
        if d.is_positive() && (dh < &(d / int(10) + &c2) || dh > &(d + &c2)) {
            return fail(format!("envelope fails: d = {d}, d̂ = {dh}: {:?}", s.witness));
        }
    }
    // the envelope exhaustively around 1 in the free product
    let fprec = fx.fp_record()?;
    let fpc2 = e2s(fprec.value(names::C2))?.clone();
    let m = fx.fp.model();
    let one = m.identity();
    let ball = e2s(m.identity_ball(16))?;
    for g in ball.iter().filter(|g| !g.is_identity()) {
        let d = int(e2s(m.length(g))?);
        let dh = e2s(fx.fp.dhat(&one, g))?;
        if dh < &d / int(10) + &fpc2 || dh > &d + &fpc2 {
            return fail(format!("Z/2*Z/3 envelope fails at {}: d̂ = {dh}", m.format(g)));
        }
    }
    Ok(format!(
        "A = {a}, B = {b} hold on {n} fresh F2 pairs; envelope d/10 + C2 <= d̂ <= d + C2 exact there and on all {} pairs (1,g) of B(1,16) in Z/2*Z/3",
        ball.len() - 1
    ))
}

fn fault_injection(_: &mut Fixtures) -> Outcome {
    let model = Arc::new(z2z3());
    let cfg = VerifyConfig::new(14, 150, 111);
    let standard = e2s(MetricContext::with_construction(model.clone(), Construction::standard(1)))?;
    let base = e2s(verify_structural(&standard, &cfg))?;
    if !base.pass {
        return fail(format!("the unmodified construction already fails: {:?}", base.failures().iter().map(|p| &p.id).collect::<Vec<_>>()));
    }
    let mut lines = Vec::new();
    for (label, c) in [
        ("star radius 7 -> 6", Construction { star_radius: 6, ..Construction::standard(1) }),
        ("step 10 -> 9", Construction { step: 9, ..Construction::standard(1) }),
    ] {
        let ctx = e2s(MetricContext::with_construction(model.clone(), c))?;
        let rep = e2s(verify_structural(&ctx, &cfg))?;
        let caught: Vec<_> = rep.failures().into_iter().filter(|p| !p.witnesses.is_empty()).collect();
        let Some(first) = caught.first() else {
            return fail(format!("{label}: no structural property failed with a witness"));
        };
        let w = &first.witnesses[0];
        lines.push(format!(
            "{label}: {} caught ({}), e.g. {} at {:?} = {} vs {}",
            caught.len(),
            caught.iter().map(|p| p.id.as_str()).collect::<Vec<_>>().join(", "),
            first.id,
            w.points,
            w.value,
            w.bound
        ));
    }
    Ok(lines.join("; "))
}

fn main() {
    let criteria: [(u32, &str, fn(&mut Fixtures) -> Outcome); 11] = [
        (1, "tree collapse of f in F2", tree_collapse),
        (2, "exact one-step value 8745/4373", exact_one_step_value),
        (3, "sandwich d/10 <= r <= d", sandwich),
        (4, "memoized r equals the memo-free oracle", oracle_equivalence),
        (5, "metric axioms with certified C2", metric_axioms),
        (6, "near-pair constancy of d̂", near_pair_constancy),
        (7, "four-point decay and its R = 2, 3 variants", four_point_decay),
        (8, "weak geodesicity and the midpoint inequality", weak_geodesic_and_b2),
        (9, "equivariance of d̂", equivariance),
        (10, "quasi-isometry and analytic envelope", quasi_isometry),
        (11, "fault injection is caught", fault_injection),
    ];
    let mut fx = Fixtures::new();
    let mut failed = 0;
    for (n, name, run) in criteria {
        let t = Instant::now();
        let outcome = run(&mut fx);
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{secs:.1}s]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why} [{secs:.1}s]");
            }
        }
    }
    println!("acceptance: {} of 11 criteria passed", 11 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
