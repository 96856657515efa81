//! The chains `f`, `f̄`, the recursive function `r`, its symmetrization `s`
//! and the metric `d̂`.
//!
//! `r(a,b) = r(a, f̄(b,a)) + 1` is evaluated through the auxiliary values
//! `R*(a, w) = r(a, star(w))`: by linearity
//!
//! ```text
//! r(a, x)     = 1 + Σ_w f(x,a)[w] · R*(a, w)          (d(a,x) > 10δ)
//! R*(a, v)·ω  = Σ_{x ∈ B(v,7δ)} r(a, x)
//! ```
//!
//! so each `R*` node aggregates its ball into a small kernel over the
//! vertices `w` reached by `f`, and nodes are resolved on an explicit work
//! list ordered by strictly decreasing distance to `a`. For algebraic models
//! everything is translated so that `a` is the identity.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashMap;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rustc_hash::{FxBuildHasher, FxHashMap};

use crate::bicombing;
use crate::chain::{star_with_radius, Chain0};
use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupModel};

/// Default cap on memoized `R*` entries per arithmetic mode.
pub const DEFAULT_MEMO_CAP: usize = 20_000_000;
/// Default cap on memoized `f` chains; beyond it chains are recomputed.
pub const DEFAULT_F_MEMO_CAP: usize = 4_000_000;

/// Radii of the construction, in absolute units.
///
/// The standard values are star radius `7δ`, projection step `10δ` and near
/// threshold `10δ`; other values exist only to check that the verification
/// suites notice a broken construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Construction {
    pub star_radius: u32,
    pub step: u32,
    pub threshold: u32,
}

impl Construction {
    pub fn standard(delta: u32) -> Self {
        Self {
            star_radius: 7 * delta,
            step: 10 * delta,
            threshold: 10 * delta,
        }
    }
}

/// Arithmetic used for `r` and everything built on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arithmetic {
    #[default]
    Exact,
    /// Double precision, for speed scans only; agrees with exact mode to about 1e-9.
    Float,
}

/// A value of `f`: a single vertex, or a genuine convex combination.
#[derive(Debug, Clone, PartialEq, Eq)]
enum FChain {
    Single(GroupElement),
    Mixed(Arc<Vec<(GroupElement, BigRational)>>),
}

impl FChain {
    fn from_map(map: BTreeMap<GroupElement, BigRational>) -> Self {
        if map.len() == 1 {
            let (g, q) = map.into_iter().next().expect("one entry");
            if q.is_one() {
                return FChain::Single(g);
            }
            return FChain::Mixed(Arc::new(vec![(g, q)]));
        }
        FChain::Mixed(Arc::new(map.into_iter().collect()))
    }

    fn to_chain(&self) -> Chain0 {
        match self {
            FChain::Single(g) => Chain0::vertex(g.clone()),
            FChain::Mixed(terms) => Chain0::from_terms(terms.iter().cloned()),
        }
    }
}

/// Arithmetic backends for the `r` recursion.
trait Scalar: Clone + Send + Sync + 'static {
    fn nil() -> Self;
    fn from_count(n: u64) -> Self;
    fn add_assign(&mut self, other: &Self);
    fn add_scaled_count(&mut self, n: u64, v: &Self);
    fn add_scaled_ratio(&mut self, q: &BigRational, v: &Self);
    fn div_count(&self, n: u64) -> Self;
}

impl Scalar for BigRational {
    fn nil() -> Self {
        Zero::zero()
    }
    fn from_count(n: u64) -> Self {
        BigRational::from_integer(BigInt::from(n))
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn add_scaled_count(&mut self, n: u64, v: &Self) {
        *self += v * BigRational::from_integer(BigInt::from(n));
    }
    fn add_scaled_ratio(&mut self, q: &BigRational, v: &Self) {
        *self += v * q;
    }
    fn div_count(&self, n: u64) -> Self {
        self / BigRational::from_integer(BigInt::from(n))
    }
}

impl Scalar for f64 {
    fn nil() -> Self {
        0.0
    }
    fn from_count(n: u64) -> Self {
        n as f64
    }
    fn add_assign(&mut self, other: &Self) {
        *self += other;
    }
    fn add_scaled_count(&mut self, n: u64, v: &Self) {
        *self += n as f64 * v;
    }
    fn add_scaled_ratio(&mut self, q: &BigRational, v: &Self) {
        *self += q.to_f64().unwrap_or(f64::NAN) * v;
    }
    fn div_count(&self, n: u64) -> Self {
        self / n as f64
    }
}

type Key = (GroupElement, GroupElement);

/// The aggregated ball of one `R*` node.
struct Kernel {
    ball_len: u64,
    /// vertices `x` with `0 < d(a,x) ≤ threshold`, and beyond it
    near: u64,
    far: u64,
    /// `(w, integer weight, extra rational weight)`, sorted by `w`
    terms: Vec<(GroupElement, u64, Option<BigRational>)>,
}

#[derive(Default)]
struct KernelAcc {
    map: FxHashMap<GroupElement, (u64, Option<BigRational>)>,
}

impl KernelAcc {
    fn add_one(&mut self, w: GroupElement) {
        self.map.entry(w).or_insert((0, None)).0 += 1;
    }

    fn add_ratio(&mut self, w: GroupElement, q: &BigRational) {
        let e = self.map.entry(w).or_insert((0, None));
        match &mut e.1 {
            Some(acc) => *acc += q,
            None => e.1 = Some(q.clone()),
        }
    }

    fn finish(self) -> Vec<(GroupElement, u64, Option<BigRational>)> {
        let mut v: Vec<_> = self.map.into_iter().map(|(w, (n, q))| (w, n, q)).collect();
        v.sort_by(|a, b| a.0.cmp(&b.0));
        v
    }
}

struct Engine<S> {
    memo: DashMap<Key, S, FxBuildHasher>,
}

impl<S> Engine<S> {
    fn new() -> Self {
        Self {
            memo: DashMap::with_hasher(FxBuildHasher),
        }
    }
}

/// Counters for benchmarking and reports.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct MetricStats {
    pub exact_nodes: u64,
    pub float_nodes: u64,
    pub ball_vertices: u64,
    pub f_memo_entries: u64,
}

/// The vertex chosen by [`MetricContext::midpoint`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Midpoint {
    pub vertex: GroupElement,
    /// position along `p[x,y]`
    pub index: u32,
    /// `|d̂(x,m) − d̂(x,y)/2|`
    pub deviation: BigRational,
}

/// Evaluation context: model, construction radii, `C₂` and the write-once memo tables.
pub struct MetricContext {
    model: Arc<GroupModel>,
    construction: Construction,
    c2: Option<BigRational>,
    runtime_checks: bool,
    reduce: bool,
    memo_cap: usize,
    f_memo_cap: usize,
    ball_len: u64,
    f_memo: DashMap<Key, FChain, FxBuildHasher>,
    f_memo_used: AtomicBool,
    /// `B(1, δ)` and `B(1, star radius)` for algebraic models
    delta_ball: Arc<Vec<GroupElement>>,
    star_ball: Arc<Vec<GroupElement>>,
    exact: Engine<BigRational>,
    float: Engine<f64>,
    exact_nodes: AtomicU64,
    float_nodes: AtomicU64,
    ball_vertices: AtomicU64,
}

impl std::fmt::Debug for MetricContext {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricContext")
            .field("kind", self.model.kind())
            .field("delta", &self.model.delta())
            .field("construction", &self.construction)
            .field("c2", &self.c2.as_ref().map(|c| c.to_string()))
            .finish()
    }
}

impl MetricContext {
    pub fn new(model: GroupModel) -> Result<Self> {
        Self::from_arc(Arc::new(model))
    }

    pub fn from_arc(model: Arc<GroupModel>) -> Result<Self> {
        let construction = Construction::standard(model.delta());
        Self::with_construction(model, construction)
    }

    /// A context with non-standard radii. Runtime invariant checks are off,
    /// since the invariants only hold for the standard construction.
    pub fn with_construction(model: Arc<GroupModel>, construction: Construction) -> Result<Self> {
        if construction.step == 0 || construction.threshold == 0 {
            return Err(Error::Configuration("construction radii must be positive".into()));
        }
        let ball_len = match model.ball_size(construction.star_radius) {
            Some(n) => u64::try_from(n).map_err(|_| Error::BudgetExceeded("star ball too large".into()))?,
            None => model.identity_ball(construction.star_radius)?.len() as u64,
        };
        let standard = construction == Construction::standard(model.delta());
        let (delta_ball, star_ball) = if model.supports_equivariant_reduction() {
            (model.identity_ball(model.delta())?, model.identity_ball(construction.star_radius)?)
        } else {
            (Arc::new(Vec::new()), Arc::new(Vec::new()))
        };
        Ok(Self {
            model,
            construction,
            c2: None,
            runtime_checks: standard,
            reduce: true,
            memo_cap: DEFAULT_MEMO_CAP,
            f_memo_cap: DEFAULT_F_MEMO_CAP,
            ball_len,
            f_memo: DashMap::with_hasher(FxBuildHasher),
            f_memo_used: AtomicBool::new(false),
            delta_ball,
            star_ball,
            exact: Engine::new(),
            float: Engine::new(),
            exact_nodes: AtomicU64::new(0),
            float_nodes: AtomicU64::new(0),
            ball_vertices: AtomicU64::new(0),
        })
    }

    pub fn with_c2(mut self, c2: BigRational) -> Result<Self> {
        self.set_c2(c2)?;
        Ok(self)
    }

    pub fn set_c2(&mut self, c2: BigRational) -> Result<()> {
        if c2.is_negative() {
            return Err(Error::Configuration(format!("C2 must be non-negative, got {c2}")));
        }
        self.c2 = Some(c2);
        Ok(())
    }

    pub fn with_memo_cap(mut self, cap: usize) -> Self {
        self.memo_cap = cap;
        self
    }

    pub fn with_runtime_checks(mut self, on: bool) -> Self {
        self.runtime_checks = on;
        self
    }

    /// With `false`, algebraic models are evaluated at the actual base point
    /// like table models instead of being translated to the identity.
    pub fn with_equivariant_reduction(mut self, on: bool) -> Self {
        self.reduce = on;
        self
    }

    pub fn model(&self) -> &GroupModel {
        &self.model
    }

    pub fn model_arc(&self) -> Arc<GroupModel> {
        self.model.clone()
    }

    pub fn delta(&self) -> u32 {
        self.model.delta()
    }

    pub fn construction(&self) -> Construction {
        self.construction
    }

    pub fn c2(&self) -> Option<&BigRational> {
        self.c2.as_ref()
    }

    /// `ω`, the size of a star ball.
    pub fn omega(&self) -> u64 {
        self.ball_len
    }

    pub fn stats(&self) -> MetricStats {
        MetricStats {
            exact_nodes: self.exact_nodes.load(Ordering::Relaxed),
            float_nodes: self.float_nodes.load(Ordering::Relaxed),
            ball_vertices: self.ball_vertices.load(Ordering::Relaxed),
            f_memo_entries: self.f_memo.len() as u64,
        }
    }

    /// Drops every memoized value.
    pub fn clear_memo(&self) {
        self.f_memo.clear();
        self.f_memo_used.store(false, Ordering::Relaxed);
        self.exact.memo.clear();
        self.float.memo.clear();
    }

    fn algebraic(&self) -> bool {
        self.reduce && self.model.supports_equivariant_reduction()
    }

    // ---- f -------------------------------------------------------------

    /// `f(1, g)` for algebraic models, where the bicombing path from the
    /// identity spells the normal form of `g`.
    fn f_identity(&self, g: &GroupElement) -> Result<FChain> {
        let c = self.construction;
        let mut g = std::borrow::Cow::Borrowed(g);
        loop {
            let n = g.len() as u32;
            if n <= c.threshold {
                return Ok(FChain::Single(g.into_owned()));
            }
            if n % c.step != 0 {
                let m = bicombing::projection_length(n, c.step);
                g = std::borrow::Cow::Owned(g.prefix(m as usize));
                continue;
            }
            if self.f_memo_used.load(Ordering::Relaxed) {
                if let Some(hit) = self.f_memo.get(&(GroupElement::identity(), g.clone().into_owned())) {
                    return Ok(hit.clone());
                }
            }
            // Fl(1, g) from the translated δ-ball
            let mut flower: smallvec::SmallVec<[GroupElement; 4]> = smallvec::SmallVec::new();
            for u in self.delta_ball.iter() {
                if self.model.product_length(&g, u)? == n {
                    flower.push(self.model.multiply(&g, u)?);
                }
            }
            let below = (n - c.step) as usize;
            if flower.len() == 1 {
                g = std::borrow::Cow::Owned(g.prefix(below));
                continue;
            }
            let parts = flower
                .iter()
                .map(|y| self.f_identity(&y.prefix(below)))
                .collect::<Result<Vec<_>>>()?;
            let out = average(parts);
            self.remember_f((GroupElement::identity(), g.into_owned()), &out);
            return Ok(out);
        }
    }

    /// `f(b, a)` computed at base `b` without translating to the identity.
    fn f_based(&self, b: &GroupElement, a: &GroupElement) -> Result<FChain> {
        let c = self.construction;
        let model = &*self.model;
        let d = model.distance(b, a)?;
        if d <= c.threshold {
            return Ok(FChain::Single(a.clone()));
        }
        if d % c.step != 0 {
            let p = bicombing::point_at(model, b, a, bicombing::projection_length(d, c.step))?;
            return self.f_based(b, &p);
        }
        let key = (b.clone(), a.clone());
        if self.f_memo_used.load(Ordering::Relaxed) {
            if let Some(hit) = self.f_memo.get(&key) {
                return Ok(hit.clone());
            }
        }
        let flower = bicombing::flower(model, b, a)?;
        if flower.len() == 1 {
            let p = bicombing::point_at(model, b, &flower[0], d - c.step)?;
            return self.f_based(b, &p);
        }
        let parts = flower
            .iter()
            .map(|y| {
                let p = bicombing::point_at(model, b, y, d - c.step)?;
                self.f_based(b, &p)
            })
            .collect::<Result<Vec<_>>>()?;
        let out = average(parts);
        self.remember_f(key, &out);
        Ok(out)
    }

    /// Only chains from non-trivial flowers are stored; the rest are cheaper
    /// to recompute than to look up.
    fn remember_f(&self, key: Key, value: &FChain) {
        if self.f_memo.len() < self.f_memo_cap {
            self.f_memo.entry(key).or_insert_with(|| value.clone());
            self.f_memo_used.store(true, Ordering::Relaxed);
        }
    }

    /// `f(x, a)` by the fastest legal route.
    fn f_raw(&self, x: &GroupElement, a: &GroupElement) -> Result<FChain> {
        if !self.algebraic() {
            return self.f_based(x, a);
        }
        let model = &*self.model;
        let rel = if a.is_identity() { model.inverse(x)? } else { model.relative(x, a)? };
        Ok(match self.f_identity(&rel)? {
            FChain::Single(w) => FChain::Single(model.multiply(x, &w)?),
            FChain::Mixed(terms) => FChain::Mixed(Arc::new(
                terms
                    .iter()
                    .map(|(w, q)| Ok((model.multiply(x, w)?, q.clone())))
                    .collect::<Result<Vec<_>>>()?,
            )),
        })
    }

    /// The chain `f(b, a)`: a convex combination supported near the point
    /// `10δ` along `p[b,a]`, or the vertex `a` itself when `d(a,b) ≤ 10δ`.
    pub fn f_chain(&self, b: &GroupElement, a: &GroupElement) -> Result<Chain0> {
        let chain = self.f_raw(b, a)?.to_chain();
        if self.runtime_checks {
            self.check_f(b, a, &chain)?;
        }
        Ok(chain)
    }

    /// `f(b, a)` evaluated directly at base `b`, bypassing the translation to
    /// the identity (used to test equivariance).
    pub fn f_chain_direct(&self, b: &GroupElement, a: &GroupElement) -> Result<Chain0> {
        Ok(self.f_based(b, a)?.to_chain())
    }

    /// `f̄(b, a) = star(f(b, a))`.
    pub fn fbar_chain(&self, b: &GroupElement, a: &GroupElement) -> Result<Chain0> {
        let f = self.f_chain(b, a)?;
        star_with_radius(&self.model, &f, self.construction.star_radius)
    }

    /// `star(z)` with this context's star radius.
    pub fn star(&self, z: &Chain0) -> Result<Chain0> {
        star_with_radius(&self.model, z, self.construction.star_radius)
    }

    fn check_f(&self, b: &GroupElement, a: &GroupElement, chain: &Chain0) -> Result<()> {
        let model = &*self.model;
        if !chain.is_convex() {
            return Err(Error::InvariantViolation(format!(
                "f({}, {}) is not a convex combination",
                model.format(b),
                model.format(a)
            )));
        }
        let d = model.distance(a, b)?;
        let t = self.construction.threshold;
        if d <= t {
            if *chain != Chain0::vertex(a.clone()) {
                return Err(Error::InvariantViolation(format!(
                    "f({}, {}) differs from the target vertex",
                    model.format(b),
                    model.format(a)
                )));
            }
            return Ok(());
        }
        let anchor = bicombing::point_at(model, b, a, t)?;
        for w in chain.support() {
            if model.distance(b, w)? != t || model.distance(&anchor, w)? > model.delta() {
                return Err(Error::InvariantViolation(format!(
                    "f({}, {}) has support vertex {} off the flower region",
                    model.format(b),
                    model.format(a),
                    model.format(w)
                )));
            }
        }
        Ok(())
    }

    // ---- r -------------------------------------------------------------

    /// Translates `(a, b)` to the key frame: `(1, a⁻¹b)` for algebraic models.
    fn frame(&self, a: &GroupElement, b: &GroupElement) -> Result<(GroupElement, GroupElement)> {
        if self.algebraic() {
            Ok((GroupElement::identity(), self.model.relative(a, b)?))
        } else {
            Ok((a.clone(), b.clone()))
        }
    }

    /// Fails unless every vertex of `B(w, star radius)` is strictly closer
    /// to `base` than `x` is.
    fn check_decrease(&self, base: &GroupElement, x: &GroupElement, dx: u32, w: &GroupElement) -> Result<()> {
        let model = &*self.model;
        let rs = self.construction.star_radius;
        let dw = if self.algebraic() { w.len() as u32 } else { model.distance(base, w)? };
        if dw + rs < dx {
            return Ok(());
        }
        let mut far = 0;
        for y in model.ball(w, rs)? {
            far = far.max(model.distance(base, &y)?);
        }
        if far < dx {
            return Ok(());
        }
        Err(Error::NonDecreasingRecursion(format!(
            "r({}, {}) depends on r({}, star({})), which reaches distance {far} ≥ {dx}",
            model.format(base),
            model.format(x),
            model.format(base),
            model.format(w)
        )))
    }

    fn kernel(&self, base: &GroupElement, v: &GroupElement) -> Result<Kernel> {
        let model = &*self.model;
        let rs = self.construction.star_radius;
        let t = self.construction.threshold;
        let algebraic = self.algebraic();
        let owned_ball;
        let shared_ball;
        let ball: &[GroupElement] = if algebraic {
            shared_ball = self.star_ball.clone();
            &shared_ball
        } else {
            owned_ball = model.ball(v, rs)?;
            &owned_ball
        };
        let mut acc = KernelAcc::default();
        let (mut near, mut far) = (0u64, 0u64);
        for u in ball {
            let x = if algebraic { model.multiply(v, u)? } else { u.clone() };
            let dx = if algebraic { x.len() as u32 } else { model.distance(base, &x)? };
            if dx == 0 {
                continue;
            }
            if dx <= t {
                near += 1;
                continue;
            }
            far += 1;
            match self.f_raw(&x, base)? {
                FChain::Single(w) => {
                    self.check_decrease(base, &x, dx, &w)?;
                    acc.add_one(w);
                }
                FChain::Mixed(terms) => {
                    for (w, q) in terms.iter() {
                        self.check_decrease(base, &x, dx, w)?;
                        acc.add_ratio(w.clone(), q);
                    }
                }
            }
        }
        self.ball_vertices.fetch_add(ball.len() as u64, Ordering::Relaxed);
        Ok(Kernel {
            ball_len: ball.len() as u64,
            near,
            far,
            terms: acc.finish(),
        })
    }

    /// `R*(base, v) = r(base, star(v))`, resolved on an explicit work list.
    fn rstar<S: Scalar>(&self, engine: &Engine<S>, counter: &AtomicU64, base: &GroupElement, v: &GroupElement) -> Result<S> {
        let root = (base.clone(), v.clone());
        if let Some(hit) = engine.memo.get(&root) {
            return Ok(hit.clone());
        }
        struct Frame {
            key: Key,
            kernel: Option<Kernel>,
        }
        let mut stack = vec![Frame { key: root.clone(), kernel: None }];
        while let Some(top) = stack.last_mut() {
            if engine.memo.contains_key(&top.key) {
                stack.pop();
                continue;
            }
            if top.kernel.is_none() {
                top.kernel = Some(self.kernel(base, &top.key.1)?);
            }
            let kernel = top.kernel.as_ref().expect("kernel just built");
            let missing: Vec<Key> = kernel
                .terms
                .iter()
                .map(|(w, _, _)| (base.clone(), w.clone()))
                .filter(|k| !engine.memo.contains_key(k))
                .collect();
            if !missing.is_empty() {
                stack.extend(missing.into_iter().map(|key| Frame { key, kernel: None }));
                continue;
            }
            let mut total = S::from_count(kernel.near + kernel.far);
            for (w, n, q) in &kernel.terms {
                let rw = engine
                    .memo
                    .get(&(base.clone(), w.clone()))
                    .map(|e| e.clone())
                    .ok_or_else(|| Error::InvariantViolation("dependency vanished from memo".into()))?;
                if *n > 0 {
                    total.add_scaled_count(*n, &rw);
                }
                if let Some(q) = q {
                    total.add_scaled_ratio(q, &rw);
                }
            }
            let value = total.div_count(kernel.ball_len);
            if engine.memo.len() >= self.memo_cap {
                return Err(Error::BudgetExceeded(format!(
                    "memo table holds {} entries, cap is {}",
                    engine.memo.len(),
                    self.memo_cap
                )));
            }
            let key = stack.pop().expect("non-empty").key;
            engine.memo.entry(key).or_insert(value);
            counter.fetch_add(1, Ordering::Relaxed);
        }
        engine
            .memo
            .get(&root)
            .map(|e| e.clone())
            .ok_or_else(|| Error::InvariantViolation("root vanished from memo".into()))
    }

    fn r_generic<S: Scalar>(&self, engine: &Engine<S>, counter: &AtomicU64, a: &GroupElement, b: &GroupElement) -> Result<S> {
        let (base, target) = self.frame(a, b)?;
        if base == target {
            return Ok(S::nil());
        }
        let d = self.model.distance(&base, &target)?;
        if d <= self.construction.threshold {
            return Ok(S::from_count(1));
        }
        let mut total = S::from_count(1);
        match self.f_raw(&target, &base)? {
            FChain::Single(w) => {
                self.check_decrease(&base, &target, d, &w)?;
                total.add_assign(&self.rstar(engine, counter, &base, &w)?);
            }
            FChain::Mixed(terms) => {
                for (w, q) in terms.iter() {
                    self.check_decrease(&base, &target, d, w)?;
                    total.add_scaled_ratio(q, &self.rstar(engine, counter, &base, w)?);
                }
            }
        }
        Ok(total)
    }

    /// `r(a, b)`, exact.
    pub fn r_value(&self, a: &GroupElement, b: &GroupElement) -> Result<BigRational> {
        let r = self.r_generic(&self.exact, &self.exact_nodes, a, b)?;
        if self.runtime_checks {
            let d = BigRational::from_integer(self.model.distance(a, b)?.into());
            let scale = BigRational::from_integer((10 * self.delta()).into());
            if &r * &scale < d || r > d {
                return Err(Error::InvariantViolation(format!(
                    "r({}, {}) = {r} leaves [d/10δ, d] with d = {d}",
                    self.model.format(a),
                    self.model.format(b)
                )));
            }
        }
        Ok(r)
    }

    /// `r(a, b)` in double precision.
    pub fn r_value_f64(&self, a: &GroupElement, b: &GroupElement) -> Result<f64> {
        self.r_generic(&self.float, &self.float_nodes, a, b)
    }

    /// `r(a, z)` by linearity in the second argument.
    pub fn r_of_chain(&self, a: &GroupElement, z: &Chain0) -> Result<BigRational> {
        let mut total = BigRational::zero();
        for (y, q) in z.iter() {
            total += self.r_value(a, y)? * q;
        }
        Ok(total)
    }

    /// `s(a, b) = ½[r(a,b) + r(b,a)]`.
    pub fn s_value(&self, a: &GroupElement, b: &GroupElement) -> Result<BigRational> {
        let sum = self.r_value(a, b)? + self.r_value(b, a)?;
        Ok(sum / BigRational::from_integer(2.into()))
    }

    pub fn s_value_f64(&self, a: &GroupElement, b: &GroupElement) -> Result<f64> {
        Ok(0.5 * (self.r_value_f64(a, b)? + self.r_value_f64(b, a)?))
    }

    fn require_c2(&self) -> Result<&BigRational> {
        self.c2
            .as_ref()
            .ok_or_else(|| Error::Configuration("C2 is not set; estimate constants or supply a value".into()))
    }

    /// `d̂(a, b) = s(a, b) + C₂` for `a ≠ b`, and 0 on the diagonal.
    pub fn dhat(&self, a: &GroupElement, b: &GroupElement) -> Result<BigRational> {
        let c2 = self.require_c2()?;
        if a == b {
            return Ok(BigRational::zero());
        }
        Ok(self.s_value(a, b)? + c2)
    }

    pub fn dhat_f64(&self, a: &GroupElement, b: &GroupElement) -> Result<f64> {
        let c2 = self.require_c2()?.to_f64().unwrap_or(f64::NAN);
        if a == b {
            return Ok(0.0);
        }
        Ok(self.s_value_f64(a, b)? + c2)
    }

    /// The vertex of `p[x,y]` whose `d̂`-distance from `x` is closest to
    /// `d̂(x,y)/2`; ties go to the vertex nearest `x`.
    pub fn midpoint(&self, x: &GroupElement, y: &GroupElement) -> Result<Midpoint> {
        let total = self.dhat(x, y)?;
        let half = total / BigRational::from_integer(2.into());
        let path = bicombing::geodesic(&self.model, x, y)?;
        let mut best: Option<Midpoint> = None;
        for (i, m) in path.vertices.iter().enumerate() {
            let dev = (self.dhat(x, m)? - &half).abs();
            if best.as_ref().is_none_or(|b| dev < b.deviation) {
                best = Some(Midpoint {
                    vertex: m.clone(),
                    index: i as u32,
                    deviation: dev,
                });
            }
        }
        Ok(best.expect("paths have at least one vertex"))
    }

    // ---- memo persistence ---------------------------------------------

    /// Memoized exact `R*` entries in key order.
    pub(crate) fn exact_memo_entries(&self) -> Vec<(GroupElement, GroupElement, BigRational)> {
        let mut v: Vec<_> = self
            .exact
            .memo
            .iter()
            .map(|e| (e.key().0.clone(), e.key().1.clone(), e.value().clone()))
            .collect();
        v.sort_by(|a, b| (&a.0, &a.1).cmp(&(&b.0, &b.1)));
        v
    }

    pub(crate) fn insert_exact_memo(&self, base: GroupElement, w: GroupElement, value: BigRational) {
        self.exact.memo.entry((base, w)).or_insert(value);
    }
}

fn average(parts: Vec<FChain>) -> FChain {
    let n = parts.len();
    if let Some(FChain::Single(first)) = parts.first() {
        if parts.iter().all(|p| matches!(p, FChain::Single(w) if w == first)) {
            return FChain::Single(first.clone());
        }
    }
    let weight = BigRational::new(BigInt::one(), BigInt::from(n));
    let mut map: BTreeMap<GroupElement, BigRational> = BTreeMap::new();
    for p in parts {
        match p {
            FChain::Single(w) => *map.entry(w).or_insert_with(BigRational::zero) += &weight,
            FChain::Mixed(terms) => {
                for (w, q) in terms.iter() {
                    *map.entry(w.clone()).or_insert_with(BigRational::zero) += q * &weight;
                }
            }
        }
    }
    FChain::from_map(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    fn el(model: &GroupModel, text: &str) -> GroupElement {
        model.normalize(&model.parse_word(text).unwrap()).unwrap()
    }

    #[test]
    fn f_on_near_pairs_is_the_target() {
        let ctx = MetricContext::new(GroupModel::free(2, 1).unwrap()).unwrap();
        let m = ctx.model();
        let (b, a) = (el(m, "ab"), el(m, "ab^5a^3"));
        assert_eq!(ctx.f_chain(&b, &a).unwrap(), Chain0::vertex(a.clone()));
    }

    #[test]
    fn f_collapses_in_trees() {
        let ctx = MetricContext::new(GroupModel::free(2, 1).unwrap()).unwrap();
        let m = ctx.model();
        let b = el(m, "b^-1a");
        for w in ["a^11", "ab^20", "a^-1b^-1a^-1b^-1a^-1b^-1a^-1b^-1a^-1b^-1a^-1b^-1"] {
            let a = el(m, w);
            let expect = bicombing::point_at(m, &b, &a, 10).unwrap();
            assert_eq!(ctx.f_chain(&b, &a).unwrap(), Chain0::vertex(expect));
            assert_eq!(ctx.f_chain_direct(&b, &a).unwrap(), ctx.f_chain(&b, &a).unwrap());
        }
    }

    #[test]
    fn r_base_cases() {
        let ctx = MetricContext::new(GroupModel::free(2, 1).unwrap()).unwrap();
        let m = ctx.model();
        let g = el(m, "abab");
        assert_eq!(ctx.r_value(&g, &g).unwrap(), q(0, 1));
        assert_eq!(ctx.r_value(&m.identity(), &el(m, "a^10")).unwrap(), q(1, 1));
    }

    #[test]
    fn one_step_value_in_the_free_group() {
        let ctx = MetricContext::new(GroupModel::free(2, 1).unwrap()).unwrap();
        let m = ctx.model();
        for w in ["a^11", "ab^-1ab^9", "b^12", "a^5b^-7"] {
            assert_eq!(ctx.r_value(&m.identity(), &el(m, w)).unwrap(), q(8745, 4373), "{w}");
        }
    }

    #[test]
    fn float_tracks_exact() {
        let ctx = MetricContext::new(GroupModel::free(2, 1).unwrap()).unwrap();
        let m = ctx.model();
        let g = el(m, "a^9b^9a^-4");
        let exact = ctx.r_value(&m.identity(), &g).unwrap().to_f64().unwrap();
        let float = ctx.r_value_f64(&m.identity(), &g).unwrap();
        assert!((exact - float).abs() < 1e-9);
    }

    #[test]
    fn free_product_sandwich() {
        let ctx = MetricContext::new(GroupModel::free_product(&[2, 3], 1).unwrap()).unwrap();
        let m = ctx.model();
        for x in m.identity_ball(14).unwrap().iter() {
            // the runtime check fails the call on a violation
            ctx.r_value(&m.identity(), x).unwrap();
        }
    }

    #[test]
    fn s_and_dhat() {
        let mut ctx = MetricContext::new(GroupModel::free_product(&[2, 3], 1).unwrap()).unwrap();
        let m = GroupModel::free_product(&[2, 3], 1).unwrap();
        let (a, b) = (el(&m, "st^-1st"), el(&m, "tststst^-1st^-1sts"));
        assert!(matches!(ctx.dhat(&a, &b), Err(Error::Configuration(_))));
        ctx.set_c2(q(3, 1)).unwrap();
        assert_eq!(ctx.s_value(&a, &b).unwrap(), ctx.s_value(&b, &a).unwrap());
        assert_eq!(ctx.dhat(&a, &a).unwrap(), q(0, 1));
        assert_eq!(ctx.dhat(&a, &el(&m, "st")).unwrap(), q(4, 1));
        assert_eq!(ctx.midpoint(&a, &a).unwrap().vertex, a);
    }

    #[test]
    fn memo_cap_is_enforced() {
        let ctx = MetricContext::new(GroupModel::free(2, 1).unwrap()).unwrap().with_memo_cap(2);
        let m = ctx.model();
        let err = ctx.r_value(&m.identity(), &el(m, "a^40")).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded(_)));
    }
}
