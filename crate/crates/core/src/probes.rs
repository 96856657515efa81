//! Randomized probes of the inequalities satisfied by `f̄`, `r`, `s` and `d̂`.
//!
//! Each probe draws one configuration from its own seeded stream and returns
//! the quantity that the corresponding constant has to dominate. The
//! constants estimator takes suprema of these values; the verifier compares
//! them against a constants record.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::bicombing;
use crate::chain::Chain0;
use crate::error::{Error, Result};
use crate::group::GroupElement;
use crate::metric::MetricContext;
use crate::sampling;

/// One probed configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub value: BigRational,
    /// Secondary coordinate: a distance or Gromov product used for binning.
    pub key: BigRational,
    pub witness: Vec<(String, String)>,
}

/// Sampling domain: a context, a radius and a seed.
#[derive(Clone, Copy)]
pub struct Domain<'a> {
    pub ctx: &'a MetricContext,
    pub radius: u32,
    pub seed: u64,
    /// Separates the estimation sample from the fresh validation sample.
    pub fresh: bool,
}

pub fn int(n: u32) -> BigRational {
    BigRational::from_integer(BigInt::from(n))
}

pub fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

impl<'a> Domain<'a> {
    pub fn new(ctx: &'a MetricContext, radius: u32, seed: u64) -> Self {
        Self { ctx, radius, seed, fresh: false }
    }

    pub fn fresh(self) -> Self {
        Self { fresh: true, ..self }
    }

    pub fn rng(&self, stream: &str, index: usize) -> ChaCha8Rng {
        let tag = if self.fresh { format!("{stream}/fresh") } else { stream.to_string() };
        sampling::sample_rng(self.seed, &tag, index as u64)
    }

    fn point(&self, rng: &mut ChaCha8Rng) -> Result<GroupElement> {
        sampling::random_in_ball(self.ctx.model(), rng, self.radius)
    }

    /// `g·u` with `|u| = k`.
    fn offset(&self, rng: &mut ChaCha8Rng, g: &GroupElement, k: u32) -> Result<GroupElement> {
        sampling::random_at_distance(self.ctx.model(), rng, g, k)
    }

    /// A pair at a distance drawn uniformly from `1..=radius`.
    fn pair(&self, rng: &mut ChaCha8Rng) -> Result<(GroupElement, GroupElement)> {
        let a = self.point(rng)?;
        let k = rng.gen_range(1..=self.radius.max(1));
        let b = self.offset(rng, &a, k)?;
        Ok((a, b))
    }

    fn fmt(&self, g: &GroupElement) -> String {
        self.ctx.model().format(g)
    }

    fn witness(&self, items: &[(&str, &GroupElement)]) -> Vec<(String, String)> {
        items.iter().map(|(n, g)| (n.to_string(), self.fmt(g))).collect()
    }

    fn dist(&self, a: &GroupElement, b: &GroupElement) -> Result<u32> {
        self.ctx.model().distance(a, b)
    }

    // ---- probes of r ---------------------------------------------------

    /// `max(d/10δ − r, r − d)`, non-positive when the sandwich holds.
    pub fn sandwich_at(&self, a: &GroupElement, b: &GroupElement) -> Result<Sample> {
        let d = int(self.dist(a, b)?);
        let r = self.ctx.r_value(a, b)?;
        let lower = &d / int(10 * self.ctx.delta());
        let value = (&lower - &r).max(&r - &d);
        Ok(Sample { value, key: d, witness: self.witness(&[("a", a), ("b", b)]) })
    }

    pub fn sandwich(&self, i: usize) -> Result<Sample> {
        let mut rng = self.rng("sandwich", i);
        let (a, b) = self.pair(&mut rng)?;
        self.sandwich_at(&a, &b)
    }

    /// `|r(a,b) − r(a,b′)| − d(b,b′)`; key `d(a,b) + d(a,b′)`.
    pub fn n_bound(&self, i: usize) -> Result<Sample> {
        let mut rng = self.rng("n-bound", i);
        let (a, b) = self.pair(&mut rng)?;
        let k = rng.gen_range(1..=3.min(self.radius.max(1)));
        let b2 = self.offset(&mut rng, &b, k)?;
        let diff = (self.ctx.r_value(&a, &b)? - self.ctx.r_value(&a, &b2)?).abs();
        let value = diff - int(self.dist(&b, &b2)?);
        let key = int(self.dist(&a, &b)? + self.dist(&a, &b2)?);
        Ok(Sample { value, key, witness: self.witness(&[("a", &a), ("b", &b), ("b'", &b2)]) })
    }

    /// `|r(a,z)| / (|z|₁ · diam supp z)` for a random 0-cycle `z`.
    pub fn d_bound(&self, i: usize) -> Result<Sample> {
        let mut rng = self.rng("d-bound", i);
        let (a, b) = self.pair(&mut rng)?;
        let k = rng.gen_range(1..=3.min(self.radius.max(1)));
        let b2 = self.offset(&mut rng, &b, k)?;
        let mut z = Chain0::vertex(b.clone()).sub(&Chain0::vertex(b2.clone()));
        let mut witness = self.witness(&[("a", &a), ("b", &b), ("b'", &b2)]);
        if rng.gen_bool(0.5) {
            let k = rng.gen_range(1..=2);
            let b3 = self.offset(&mut rng, &b, k)?;
            let half = ratio(1, 2);
            z = Chain0::vertex(b.clone())
                .sub(&Chain0::vertex(b2.clone()).scale(&half))
                .sub(&Chain0::vertex(b3.clone()).scale(&half));
            witness.push(("b''".into(), self.fmt(&b3)));
        }
        if z.is_zero() {
            return Ok(Sample { value: BigRational::zero(), key: BigRational::zero(), witness });
        }
        let diam = int(z.diameter(self.ctx.model())?);
        let value = self.ctx.r_of_chain(&a, &z)?.abs() / (z.l1() * &diam);
        Ok(Sample { value, key: diam, witness })
    }

    /// `|f̄(b,a) − f̄(b,a′)|₁`; key `(a|a′)_b`.
    pub fn l_lambda(&self, i: usize) -> Result<Sample> {
        let mut rng = self.rng("l-lambda", i);
        let model = self.ctx.model();
        let (b, a) = self.pair(&mut rng)?;
        let d = self.dist(&b, &a)?;
        let j = rng.gen_range(0..=d);
        let c = bicombing::point_at(model, &b, &a, j)?;
        let k = rng.gen_range(0..=self.radius);
        let a2 = self.offset(&mut rng, &c, k)?;
        let diff = self.ctx.fbar_chain(&b, &a)?.sub(&self.ctx.fbar_chain(&b, &a2)?);
        let key = model.gromov_product(&b, &a, &a2)?;
        Ok(Sample { value: diff.l1(), key, witness: self.witness(&[("b", &b), ("a", &a), ("a'", &a2)]) })
    }

    /// `½|f̄(b,a) − f̄(b′,a)|₁` when `(a|b)_{b′} ≤ 10δ` and `(a|b′)_b ≤ 10δ`.
    pub fn lambda_prime(&self, i: usize) -> Result<Option<Sample>> {
        let mut rng = self.rng("lambda-prime", i);
        let model = self.ctx.model();
        let (b, a) = self.pair(&mut rng)?;
        let d = self.dist(&b, &a)?;
        let lim = 10 * self.ctx.delta();
        // b′ branches off p[b,a] at a random point
        let j = rng.gen_range(0..=d);
        let c = bicombing::point_at(model, &b, &a, j)?;
        let k = rng.gen_range(0..=lim.min(self.radius));
        let b2 = self.offset(&mut rng, &c, k)?;
        if b2 == b
            || model.gromov_product_twice(&b2, &a, &b)? > 2 * lim
            || model.gromov_product_twice(&b, &a, &b2)? > 2 * lim
        {
            return Ok(None);
        }
        let diff = self.ctx.fbar_chain(&b, &a)?.sub(&self.ctx.fbar_chain(&b2, &a)?);
        Ok(Some(Sample {
            value: diff.l1() / int(2),
            key: int(self.dist(&b, &b2)?),
            witness: self.witness(&[("a", &a), ("b", &b), ("b'", &b2)]),
        }))
    }

    /// `|r(a,c) − r(a,x) − r(x,c)|` with `x ∈ p[a,b]` and `c` within `9δ`
    /// of the part of `p[a,b]` beyond `x`.
    pub fn c1_r(&self, i: usize) -> Result<Sample> {
        let mut rng = self.rng("c1-r", i);
        let model = self.ctx.model();
        let (a, b) = self.pair(&mut rng)?;
        let d = self.dist(&a, &b)?;
        let t = rng.gen_range(0..=d);
        let t2 = rng.gen_range(t..=d);
        let x = bicombing::point_at(model, &a, &b, t)?;
        let y = bicombing::point_at(model, &a, &b, t2)?;
        let c = sampling::random_within(model, &mut rng, &y, 9 * self.ctx.delta())?;
        let ctx = self.ctx;
        let value = (ctx.r_value(&a, &c)? - ctx.r_value(&a, &x)? - ctx.r_value(&x, &c)?).abs();
        Ok(Sample {
            value,
            key: int(self.dist(&a, &c)?),
            witness: self.witness(&[("a", &a), ("b", &b), ("x", &x), ("c", &c)]),
        })
    }

    /// `|r(a,b) − r(a′,b)| / d(a,a′)`.
    pub fn m_prime(&self, i: usize) -> Result<Sample> {
        let mut rng = self.rng("m-prime", i);
        let (a, b) = self.pair(&mut rng)?;
        let k = rng.gen_range(1..=2);
        let a2 = self.offset(&mut rng, &a, k)?;
        let dd = self.dist(&a, &a2)?;
        let diff = (self.ctx.r_value(&a, &b)? - self.ctx.r_value(&a2, &b)?).abs();
        let value = if dd == 0 { BigRational::zero() } else { diff / int(dd) };
        Ok(Sample { value, key: int(self.dist(&a, &b)?), witness: self.witness(&[("a", &a), ("a'", &a2), ("b", &b)]) })
    }

    // ---- probes of s and d̂ ---------------------------------------------

    /// `|s(u,v) − s(u,v′)| / d(v,v′)`.
    pub fn m_s(&self, i: usize) -> Result<Sample> {
        let mut rng = self.rng("m-s", i);
        let (u, v) = self.pair(&mut rng)?;
        let k = rng.gen_range(1..=2);
        let v2 = self.offset(&mut rng, &v, k)?;
        let dd = self.dist(&v, &v2)?;
        let diff = (self.ctx.s_value(&u, &v)? - self.ctx.s_value(&u, &v2)?).abs();
        let value = if dd == 0 { BigRational::zero() } else { diff / int(dd) };
        Ok(Sample { value, key: int(self.dist(&u, &v)?), witness: self.witness(&[("u", &u), ("v", &v), ("v'", &v2)]) })
    }

    /// `|s(u,v) − s(u,w) − s(w,v)|` with `w ∈ p[u,v]`.
    pub fn c1_s(&self, i: usize) -> Result<Sample> {
        let mut rng = self.rng("c1-s", i);
        let (u, v) = self.pair(&mut rng)?;
        let d = self.dist(&u, &v)?;
        let w = bicombing::point_at(self.ctx.model(), &u, &v, rng.gen_range(0..=d))?;
        let ctx = self.ctx;
        let value = (ctx.s_value(&u, &v)? - ctx.s_value(&u, &w)? - ctx.s_value(&w, &v)?).abs();
        Ok(Sample { value, key: int(d), witness: self.witness(&[("u", &u), ("v", &v), ("w", &w)]) })
    }

    /// `s(a,b) − s(a,c) − s(c,b)` for distinct `a, b, c`.
    pub fn c2_at(&self, a: &GroupElement, b: &GroupElement, c: &GroupElement) -> Result<Sample> {
        let witness = self.witness(&[("a", a), ("b", b), ("c", c)]);
        if a == b || b == c || a == c {
            return Ok(Sample { value: BigRational::zero(), key: BigRational::zero(), witness });
        }
        let ctx = self.ctx;
        let value = ctx.s_value(a, b)? - ctx.s_value(a, c)? - ctx.s_value(c, b)?;
        Ok(Sample { value, key: int(self.dist(a, b)?), witness })
    }

    pub fn c2(&self, i: usize) -> Result<Sample> {
        let mut rng = self.rng("c2", i);
        let (a, b) = self.pair(&mut rng)?;
        let d = self.dist(&a, &b)?;
        // c near the geodesic makes the defect largest
        let y = bicombing::point_at(self.ctx.model(), &a, &b, rng.gen_range(0..=d))?;
        let k = rng.gen_range(0..=2);
        let c = sampling::random_within(self.ctx.model(), &mut rng, &y, k)?;
        self.c2_at(&a, &b, &c)
    }

    /// `|r(a,b) − r(a′,b) − r(a,b′) + r(a′,b′)|` with `d(a,a′), d(b,b′) ≤ 1`
    /// and `d(a,b) = distance`; key `d(a,b)`.
    pub fn four_point(&self, i: usize, distance: u32) -> Result<Sample> {
        let mut rng = self.rng("four-point", i);
        let model = self.ctx.model();
        let a = self.point(&mut rng)?;
        let b = self.offset(&mut rng, &a, distance)?;
        let a2 = sampling::random_neighbor(model, &mut rng, &a)?;
        let b2 = sampling::random_neighbor(model, &mut rng, &b)?;
        let ctx = self.ctx;
        let value = (ctx.r_value(&a, &b)? - ctx.r_value(&a2, &b)? - ctx.r_value(&a, &b2)? + ctx.r_value(&a2, &b2)?).abs();
        Ok(Sample {
            value,
            key: int(self.dist(&a, &b)?),
            witness: self.witness(&[("a", &a), ("a'", &a2), ("b", &b), ("b'", &b2)]),
        })
    }

    /// `|d̂(a,b) − d̂(a′,b) − d̂(a,b′) + d̂(a′,b′)|` with `d(a,a′), d(b,b′) ≤ spread`.
    pub fn dhat_four_point(&self, i: usize, spread: u32) -> Result<Sample> {
        let mut rng = self.rng(&format!("dhat-four-point-{spread}"), i);
        let model = self.ctx.model();
        let (a, b) = self.pair(&mut rng)?;
        let a2 = sampling::random_within(model, &mut rng, &a, spread)?;
        let b2 = sampling::random_within(model, &mut rng, &b, spread)?;
        let ctx = self.ctx;
        let value = (ctx.dhat(&a, &b)? - ctx.dhat(&a2, &b)? - ctx.dhat(&a, &b2)? + ctx.dhat(&a2, &b2)?).abs();
        Ok(Sample {
            value,
            key: int(self.dist(&a, &b)?),
            witness: self.witness(&[("a", &a), ("a'", &a2), ("b", &b), ("b'", &b2)]),
        })
    }

    /// Signed B1 defect `½[d̂(a,b′) + d̂(a′,b) − d̂(a,b) − d̂(a′,b′)]` with
    /// `d(a,a′), d(b,b′) ≤ spread`; key `d(a,b)`.
    pub fn b1(&self, i: usize, spread: u32) -> Result<Sample> {
        let mut rng = self.rng(&format!("b1-{spread}"), i);
        let model = self.ctx.model();
        let (a, b) = self.pair(&mut rng)?;
        let a2 = sampling::random_within(model, &mut rng, &a, spread)?;
        let b2 = sampling::random_within(model, &mut rng, &b, spread)?;
        let ctx = self.ctx;
        let value = (ctx.dhat(&a, &b2)? + ctx.dhat(&a2, &b)? - ctx.dhat(&a, &b)? - ctx.dhat(&a2, &b2)?) / int(2);
        Ok(Sample {
            value,
            key: int(self.dist(&a, &b)?),
            witness: self.witness(&[("a", &a), ("a'", &a2), ("b", &b), ("b'", &b2)]),
        })
    }

    /// Smallest `δ₁` making `p[x,y]` supply the weak-geodesic witnesses for
    /// `t` at unit steps and at each vertex's balance point, and making the
    /// chosen midpoint deviate by at most `δ₁` from both halves.
    pub fn weak_geodesic_at(&self, x: &GroupElement, y: &GroupElement) -> Result<Sample> {
        let ctx = self.ctx;
        let witness = self.witness(&[("x", x), ("y", y)]);
        let total = ctx.dhat(x, y)?;
        let path = bicombing::geodesic(ctx.model(), x, y)?;
        let mut to_x = Vec::with_capacity(path.len());
        let mut to_y = Vec::with_capacity(path.len());
        for v in &path.vertices {
            to_x.push(ctx.dhat(v, x)?);
            to_y.push(ctx.dhat(v, y)?);
        }
        let mut ts: Vec<BigRational> = Vec::new();
        let top = total.floor().to_integer().to_u32().unwrap_or(0);
        ts.extend((0..=top).map(int));
        ts.push(total.clone());
        for (px, py) in to_x.iter().zip(&to_y) {
            let t = (px - py + &total) / int(2);
            if !t.is_negative() && t <= total {
                ts.push(t);
            }
        }
        let mut need = BigRational::zero();
        for t in &ts {
            let rest = &total - t;
            let best = to_x
                .iter()
                .zip(&to_y)
                .map(|(px, py)| (px - t).max(py - &rest))
                .min()
                .expect("non-empty path");
            need = need.max(best);
        }
        let m = ctx.midpoint(x, y)?;
        let half = &total / int(2);
        let dev_y = (ctx.dhat(&m.vertex, y)? - &half).abs();
        need = need.max(m.deviation).max(dev_y);
        Ok(Sample { value: need, key: total, witness })
    }

    pub fn weak_geodesic(&self, i: usize) -> Result<Sample> {
        let mut rng = self.rng("weak-geodesic", i);
        let (x, y) = self.pair(&mut rng)?;
        self.weak_geodesic_at(&x, &y)
    }

    /// B2 at a triple: the exact ingredients plus a rational upper bound on
    /// the smallest admissible `δ₂`.
    pub fn b2_at(&self, x: &GroupElement, y: &GroupElement, z: &GroupElement) -> Result<(B2Terms, Sample)> {
        let ctx = self.ctx;
        let m = ctx.midpoint(x, y)?.vertex;
        let terms = B2Terms {
            mz: ctx.dhat(&m, z)?,
            xz: ctx.dhat(x, z)?,
            yz: ctx.dhat(y, z)?,
            xy: ctx.dhat(x, y)?,
        };
        let value = terms.required_upper_bound();
        let witness = self.witness(&[("x", x), ("y", y), ("z", z), ("m", &m)]);
        let key = terms.xy.clone();
        Ok((terms, Sample { value, key, witness }))
    }

    /// Even draws take `z` uniformly in the ball; odd draws put `z` beyond
    /// one endpoint, on a geodesic from the other, where B2 is tightest.
    pub fn b2(&self, i: usize) -> Result<(B2Terms, Sample)> {
        let mut rng = self.rng("b2", i);
        let (x, y) = self.pair(&mut rng)?;
        let z = if i % 2 == 0 {
            self.point(&mut rng)?
        } else {
            let (near, far) = if rng.gen_bool(0.5) { (&y, &x) } else { (&x, &y) };
            self.beyond(&mut rng, far, near)?
        };
        self.b2_at(&x, &y, &z)
    }

    /// A point `z` with `d(from, z) = d(from, via) + d(via, z)`, found by a
    /// few random tries (the last try is kept if none aligns).
    fn beyond(&self, rng: &mut ChaCha8Rng, from: &GroupElement, via: &GroupElement) -> Result<GroupElement> {
        let base = self.dist(from, via)?;
        let mut z = via.clone();
        for _ in 0..16 {
            let k = rng.gen_range(1..=self.radius.max(1));
            z = self.offset(rng, via, k)?;
            if self.dist(from, &z)? == base + k {
                break;
            }
        }
        Ok(z)
    }

    /// `(d(a,b), d̂(a,b))` for a random pair with `a ≠ b`.
    pub fn qi(&self, i: usize) -> Result<Sample> {
        let mut rng = self.rng("qi", i);
        let (a, b) = self.pair(&mut rng)?;
        let dhat = self.ctx.dhat(&a, &b)?;
        Ok(Sample { value: dhat, key: int(self.dist(&a, &b)?), witness: self.witness(&[("a", &a), ("b", &b)]) })
    }
}

/// The four `d̂` values entering B2 at a triple `(x, y, z)` with midpoint `m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct B2Terms {
    pub mz: BigRational,
    pub xz: BigRational,
    pub yz: BigRational,
    pub xy: BigRational,
}

impl B2Terms {
    /// `2d̂(x,z)² + 2d̂(y,z)² − d̂(x,y)²`, clamped at zero.
    pub fn radicand(&self) -> BigRational {
        let q = int(2) * &self.xz * &self.xz + int(2) * &self.yz * &self.yz - &self.xy * &self.xy;
        q.max(BigRational::zero())
    }

    /// Exact test of `2d̂(m,z) ≤ √radicand + 4δ₂`.
    pub fn holds(&self, delta2: &BigRational) -> bool {
        let lhs = int(2) * &self.mz - int(4) * delta2;
        !lhs.is_positive() || &lhs * &lhs <= self.radicand()
    }

    /// A rational `δ₂` for which [`Self::holds`] is true and which exceeds the
    /// least such value by at most about 1e-9.
    pub fn required_upper_bound(&self) -> BigRational {
        let q = self.radicand();
        let scale = 1_000_000_000i64;
        let approx = q.to_f64().unwrap_or(0.0).sqrt();
        let mut lo = BigRational::new(BigInt::from((approx * scale as f64).floor() as i64), BigInt::from(scale));
        let step = ratio(1, scale);
        while lo.is_positive() && &lo * &lo > q {
            lo -= &step;
        }
        let lo = lo.max(BigRational::zero());
        ((int(2) * &self.mz - lo) / int(4)).max(BigRational::zero())
    }
}

/// Non-negative ceiling of `x` on a grid of `1/den`.
pub fn ceil_on_grid(x: f64, den: i64) -> Result<BigRational> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("non-finite value {x}")));
    }
    let n = (x * den as f64).ceil().max(0.0);
    Ok(BigRational::new(BigInt::from(n as i64), BigInt::from(den)))
}
