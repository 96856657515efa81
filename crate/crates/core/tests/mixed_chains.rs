//! Genuinely mixed values of `f` on a table model of the ℤ² grid.
//!
//! In the free product ℤ/2*ℤ/3 with δ = 1 every flower that occurs collapses
//! onto a single projection point, so `f` is always a vertex there. The grid
//! with δ = 2 has petals that project to different points.

mod common;

use bolic::chain::Chain0;
use bolic::metric::MetricContext;
use bolic::table::{TableElement, TableFile, TableGenerator};
use bolic::GroupModel;
use common::oracle::Oracle;
use num_rational::BigRational;
use num_traits::{One, Signed};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `B(0, radius)` of ℤ² with generators `x, X, y, Y` (`X = x⁻¹`).
fn grid(radius: i64) -> TableFile {
    let mut points = Vec::new();
    for d in 0..=radius {
        for i in -d..=d {
            let j = d - i.abs();
            points.push((i, j));
            if j != 0 {
                points.push((i, -j));
            }
        }
    }
    let id = |p: (i64, i64)| points.iter().position(|&q| q == p).map_or(-1, |k| k as i64);
    // ShortLex-least geodesic word: x before X before y before Y
    let word = |(i, j): (i64, i64)| {
        let mut w = Vec::new();
        w.extend(std::iter::repeat(if i > 0 { 0 } else { 1 }).take(i.unsigned_abs() as usize));
        w.extend(std::iter::repeat(if j > 0 { 2 } else { 3 }).take(j.unsigned_abs() as usize));
        w
    };
    let steps = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    TableFile {
        version: 1,
        generators: ["x", "X", "y", "Y"]
            .iter()
            .enumerate()
            .map(|(k, l)| TableGenerator { label: l.to_string(), inverse_index: (k ^ 1) as i64 })
            .collect(),
        radius: radius as u32,
        elements: points.iter().enumerate().map(|(k, &p)| TableElement { id: k as i64, word: word(p) }).collect(),
        adjacency: points.iter().map(|&(i, j)| steps.iter().map(|&(di, dj)| id((i + di, j + dj))).collect()).collect(),
    }
}

fn model() -> GroupModel {
    grid(50).into_model(2).unwrap()
}

fn el(m: &GroupModel, w: &str) -> bolic::GroupElement {
    m.normalize(&m.parse_word(w).unwrap()).unwrap()
}

#[test]
fn a_flower_splits_across_two_projections() {
    let m = model();
    let ctx = MetricContext::new(model()).unwrap();
    let f = ctx.f_chain(&m.identity(), &el(&m, "x^20y^20")).unwrap();
    let q = |n: i64, d: i64| BigRational::new(n.into(), d.into());
    let want = Chain0::from_terms([
        (el(&m, "x^20"), q(2, 3)),
        (el(&m, "x^19y"), q(1, 3)),
    ]);
    assert_eq!(f, want);
    assert!(f.is_convex());
    assert_eq!(f.augmentation(), BigRational::one());
}

#[test]
fn grid_chains_match_the_oracle() {
    let m = model();
    let ctx = MetricContext::new(model()).unwrap();
    let oracle = Oracle::new(&m);
    let ball = m.identity_ball(4).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut mixed = 0;
    for _ in 0..200 {
        let b = ball[rng.gen_range(0..ball.len())].clone();
        // d = 40 is a multiple of 10δ, so the flower average is taken
        let i: i64 = rng.gen_range(-20..=20);
        let j: i64 = (40 - i.abs()) * if rng.gen_bool(0.5) { 1 } else { -1 };
        let (xs, ys) = (if i >= 0 { "x" } else { "X" }, if j >= 0 { "y" } else { "Y" });
        let a = m.multiply(&b, &el(&m, &format!("{xs}^{}{ys}^{}", i.abs(), j.abs()))).unwrap();
        let got = ctx.f_chain(&b, &a).unwrap();
        let want: common::oracle::Chain = oracle.f(&b, &a);
        assert_eq!(got.iter().map(|(g, q)| (g.clone(), q.clone())).collect::<common::oracle::Chain>(), want);
        assert!(got.iter().all(|(_, q)| q.is_positive()));
        mixed += usize::from(got.len() > 1);
    }
    assert!(mixed > 50, "only {mixed} mixed values");
}
