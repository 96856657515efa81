//! Memo-free reference evaluator for `f`, `star` and `r`.
//!
//! Written straight from the definitions using only the group layer
//! (distance, multiplication): geodesics are found greedily, flowers and the
//! ball `B(1,7δ)` by breadth-first search, and no value of `f` or `r` is
//! cached. Balls around other points are translates of `B(1,7δ)`, so the
//! oracle is meant for the algebraic models.

use std::collections::{BTreeMap, VecDeque};

use bolic::{GroupElement, GroupModel, Letter};
use num_rational::BigRational;
use num_traits::{One, Zero};
use rustc_hash::FxHashSet;

pub type Chain = BTreeMap<GroupElement, BigRational>;

pub struct Oracle<'m> {
    pub model: &'m GroupModel,
    step: u32,
    star_ball: Vec<GroupElement>,
}

impl<'m> Oracle<'m> {
    pub fn new(model: &'m GroupModel) -> Self {
        let delta = model.delta();
        let mut o = Self { model, step: 10 * delta, star_ball: Vec::new() };
        o.star_ball = o.ball(&model.identity(), 7 * delta);
        o
    }

    fn star_around(&self, x: &GroupElement) -> impl Iterator<Item = GroupElement> + '_ {
        let x = x.clone();
        self.star_ball.iter().map(move |h| self.model.multiply(&x, h).unwrap())
    }

    fn d(&self, x: &GroupElement, y: &GroupElement) -> u32 {
        self.model.distance(x, y).unwrap()
    }

    fn step_by(&self, x: &GroupElement, g: Letter) -> GroupElement {
        let gen = self.model.generator(g).unwrap();
        self.model.multiply(x, &gen).unwrap()
    }

    /// Vertex at distance `t` from `a` on the ShortLex-least geodesic to `b`:
    /// at every step take the first generator that gets closer to `b`.
    pub fn point_at(&self, a: &GroupElement, b: &GroupElement, t: u32) -> GroupElement {
        let mut cur = a.clone();
        let mut left = self.d(a, b);
        for _ in 0..t {
            let n = self.model.generators().len() as Letter;
            cur = (0..n)
                .map(|g| self.step_by(&cur, g))
                .find(|y| self.d(y, b) + 1 == left)
                .expect("some generator shortens a geodesic");
            left -= 1;
        }
        cur
    }

    pub fn ball(&self, center: &GroupElement, radius: u32) -> Vec<GroupElement> {
        let mut seen = FxHashSet::default();
        let mut out = vec![center.clone()];
        seen.insert(center.clone());
        let mut queue = VecDeque::from([(center.clone(), 0u32)]);
        while let Some((x, k)) = queue.pop_front() {
            if k == radius {
                continue;
            }
            for g in 0..self.model.generators().len() as Letter {
                let y = self.step_by(&x, g);
                if seen.insert(y.clone()) {
                    out.push(y.clone());
                    queue.push_back((y, k + 1));
                }
            }
        }
        out
    }

    pub fn flower(&self, v: &GroupElement, w: &GroupElement) -> Vec<GroupElement> {
        let dw = self.d(v, w);
        self.ball(w, self.model.delta()).into_iter().filter(|x| self.d(v, x) == dw).collect()
    }

    pub fn project(&self, a: &GroupElement, b: &GroupElement) -> GroupElement {
        let d = self.d(a, b);
        if d == 0 {
            return a.clone();
        }
        self.point_at(a, b, (d - 1) / self.step * self.step)
    }

    /// `f(a, b)` with base point `a`.
    pub fn f(&self, a: &GroupElement, b: &GroupElement) -> Chain {
        let d = self.d(a, b);
        if d <= self.step {
            return Chain::from([(b.clone(), BigRational::one())]);
        }
        if d % self.step != 0 {
            return self.f(a, &self.project(a, b));
        }
        let petals = self.flower(a, b);
        let w = BigRational::new(1.into(), (petals.len() as i64).into());
        let mut out = Chain::new();
        for x in &petals {
            for (y, q) in self.f(a, &self.project(a, x)) {
                *out.entry(y).or_insert_with(BigRational::zero) += q * &w;
            }
        }
        out
    }

    pub fn star(&self, z: &Chain) -> Chain {
        let mut out = Chain::new();
        let omega = BigRational::from_integer((self.star_ball.len() as i64).into());
        for (x, q) in z {
            let w = q / &omega;
            for y in self.star_around(x) {
                *out.entry(y).or_insert_with(BigRational::zero) += &w;
            }
        }
        out
    }

    pub fn fbar(&self, b: &GroupElement, a: &GroupElement) -> Chain {
        self.star(&self.f(b, a))
    }

    pub fn r(&self, a: &GroupElement, b: &GroupElement) -> BigRational {
        let d = self.d(a, b);
        if d == 0 {
            return BigRational::zero();
        }
        if d <= self.step {
            return BigRational::one();
        }
        // r(a, b) = 1 + r(a, star f(b, a)); near leaves are counted as integers
        let mut sum = BigRational::zero();
        for (v, q) in self.f(b, a) {
            let mut near = 0i64;
            let mut far = BigRational::zero();
            for y in self.star_around(&v) {
                match self.d(a, &y) {
                    0 => {}
                    k if k <= self.step => near += 1,
                    _ => far += self.r(a, &y),
                }
            }
            sum += (far + BigRational::from_integer(near.into())) * q;
        }
        BigRational::one() + sum / BigRational::from_integer((self.star_ball.len() as i64).into())
    }
}
