//! The equivariant geodesic bicombing, flowers, projections and a sampling
//! check of triangle fineness.
//!
//! The bicombing path `p[a,b]` spells the ShortLex-least geodesic word for
//! `a⁻¹b` starting at `a`. For algebraic models that word is the normal form,
//! so equivariance holds by construction; table models find it greedily
//! against breadth-first distances to `b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupModel, Letter};
use crate::par;
use crate::sampling::{random_in_ball, sample_rng};

/// Default number of geodesics enumerated per pair in the fineness check.
pub const DEFAULT_GEODESIC_CAP: usize = 64;

/// An edge path whose consecutive vertices are at distance one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeodesicPath {
    pub vertices: Vec<GroupElement>,
}

impl GeodesicPath {
    /// Number of edges.
    pub fn len(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.len() == 1
    }

    pub fn start(&self) -> &GroupElement {
        &self.vertices[0]
    }

    pub fn end(&self) -> &GroupElement {
        self.vertices.last().expect("paths are non-empty")
    }

    pub fn at(&self, t: usize) -> &GroupElement {
        &self.vertices[t]
    }
}

/// The letters of the canonical geodesic from `a` to `b`.
pub fn geodesic_word(model: &GroupModel, a: &GroupElement, b: &GroupElement) -> Result<Vec<Letter>> {
    if model.supports_equivariant_reduction() {
        return Ok(model.relative(a, b)?.word().to_vec());
    }
    let n = model.distance(a, b)?;
    let mut letters = Vec::with_capacity(n as usize);
    let mut x = a.clone();
    for remaining in (0..n).rev() {
        let mut advanced = false;
        for s in 0..model.generators().len() as Letter {
            let y = match model.right_multiply_letter(&x, s) {
                Ok(y) => y,
                Err(Error::OutOfLoadedBall(_)) => continue,
                Err(e) => return Err(e),
            };
            if model.distance(&y, b)? == remaining {
                letters.push(s);
                x = y;
                advanced = true;
                break;
            }
        }
        if !advanced {
            return Err(Error::OutOfLoadedBall(
                "no geodesic continuation inside the loaded ball".into(),
            ));
        }
    }
    Ok(letters)
}

/// `p[a,b]`.
pub fn geodesic(model: &GroupModel, a: &GroupElement, b: &GroupElement) -> Result<GeodesicPath> {
    let letters = geodesic_word(model, a, b)?;
    let mut vertices = Vec::with_capacity(letters.len() + 1);
    vertices.push(a.clone());
    let mut x = a.clone();
    for s in letters {
        x = model.right_multiply_letter(&x, s)?;
        vertices.push(x.clone());
    }
    Ok(GeodesicPath { vertices })
}

/// `p[a,b](t)`, the vertex of `p[a,b]` at distance `t` from `a`.
pub fn point_at(model: &GroupModel, a: &GroupElement, b: &GroupElement, t: u32) -> Result<GroupElement> {
    let n = model.distance(a, b)?;
    if t > n {
        return Err(Error::Domain(format!("point_at: t = {t} exceeds d(a,b) = {n}")));
    }
    if model.supports_equivariant_reduction() {
        let rel = model.relative(a, b)?;
        return model.multiply(a, &rel.prefix(t as usize));
    }
    let letters = geodesic_word(model, a, b)?;
    let mut x = a.clone();
    for &s in &letters[..t as usize] {
        x = model.right_multiply_letter(&x, s)?;
    }
    Ok(x)
}

/// `Fl(v, w) = S(v, d(v,w)) ∩ B(w, δ)`, found by filtering `B(w, δ)`.
pub fn flower(model: &GroupModel, v: &GroupElement, w: &GroupElement) -> Result<Vec<GroupElement>> {
    let d = model.distance(v, w)?;
    let mut out = Vec::new();
    for x in model.ball(w, model.delta())? {
        if model.distance(v, &x)? == d {
            out.push(x);
        }
    }
    Ok(out)
}

/// Largest multiple of `step` strictly below `d` (requires `d > 0`).
pub fn projection_length(d: u32, step: u32) -> u32 {
    ((d - 1) / step) * step
}

/// `pr_a(b)` with projection step `step` (nominally `10δ`).
pub fn project_with_step(model: &GroupModel, a: &GroupElement, b: &GroupElement, step: u32) -> Result<GroupElement> {
    if a == b {
        return Ok(a.clone());
    }
    let d = model.distance(a, b)?;
    point_at(model, a, b, projection_length(d, step))
}

/// `pr_a(b)`.
pub fn project(model: &GroupModel, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
    project_with_step(model, a, b, 10 * model.delta())
}

/// Up to `cap` geodesics from `a` to `b`, in lexicographic order of their
/// words (the first is `p[a,b]`).
pub fn all_geodesics(model: &GroupModel, a: &GroupElement, b: &GroupElement, cap: usize) -> Result<Vec<GeodesicPath>> {
    let n = model.distance(a, b)?;
    let mut out = Vec::new();
    let mut path = vec![a.clone()];
    enumerate_geodesics(model, b, n, &mut path, cap, &mut out)?;
    Ok(out)
}

fn enumerate_geodesics(
    model: &GroupModel,
    target: &GroupElement,
    remaining: u32,
    path: &mut Vec<GroupElement>,
    cap: usize,
    out: &mut Vec<GeodesicPath>,
) -> Result<()> {
    if out.len() >= cap {
        return Ok(());
    }
    if remaining == 0 {
        out.push(GeodesicPath { vertices: path.clone() });
        return Ok(());
    }
    let here = path.last().expect("non-empty").clone();
    for s in 0..model.generators().len() as Letter {
        let y = match model.right_multiply_letter(&here, s) {
            Ok(y) => y,
            Err(Error::OutOfLoadedBall(_)) => continue,
            Err(e) => return Err(e),
        };
        if model.distance(&y, target)? + 1 == remaining {
            path.push(y);
            enumerate_geodesics(model, target, remaining - 1, path, cap, out)?;
            path.pop();
            if out.len() >= cap {
                break;
            }
        }
    }
    Ok(())
}

/// A triangle realising the largest observed inscribed-point distance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriangleWitness {
    pub a: String,
    pub b: String,
    pub c: String,
    /// corner at which the defect occurs
    pub corner: String,
    pub t: u32,
    pub v: String,
    pub w: String,
    pub defect: u32,
}

/// Outcome of [`check_delta_fineness`].
///
/// Sampling can only falsify a fineness constant: `certified_delta_lower_bound`
/// is a lower bound for the true constant, valid up to the sampled radius and
/// the per-pair geodesic cap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinenessReport {
    pub radius: u32,
    pub geodesic_cap: usize,
    pub exhaustive: bool,
    pub sampled_triangles: usize,
    pub max_defect: u32,
    pub certified_delta_lower_bound: u32,
    pub configured_delta: u32,
    pub witness: Option<TriangleWitness>,
}

impl FinenessReport {
    /// True if no sampled triangle contradicts the configured δ.
    pub fn consistent_with_delta(&self) -> bool {
        self.max_defect <= self.configured_delta
    }
}

/// Largest `d(γ₁(t), γ₂(t))` over `t ≤ limit` and all pairs of sides.
fn corner_defect(model: &GroupModel, sides1: &[GeodesicPath], sides2: &[GeodesicPath], limit: u32) -> Result<(u32, u32, usize, usize)> {
    let mut best = (0u32, 0u32, 0usize, 0usize);
    for (i, g1) in sides1.iter().enumerate() {
        for (j, g2) in sides2.iter().enumerate() {
            for t in 0..=limit as usize {
                let d = model.distance(g1.at(t), g2.at(t))?;
                if d > best.0 {
                    best = (d, t as u32, i, j);
                }
            }
        }
    }
    Ok(best)
}

fn reversed(paths: &[GeodesicPath]) -> Vec<GeodesicPath> {
    paths
        .iter()
        .map(|p| GeodesicPath {
            vertices: p.vertices.iter().rev().cloned().collect(),
        })
        .collect()
}

fn triangle_defect(
    model: &GroupModel,
    a: &GroupElement,
    b: &GroupElement,
    c: &GroupElement,
    cap: usize,
) -> Result<(u32, Option<TriangleWitness>)> {
    let ab = all_geodesics(model, a, b, cap)?;
    let bc = all_geodesics(model, b, c, cap)?;
    let ca = all_geodesics(model, c, a, cap)?;
    let (ba, cb, ac) = (reversed(&ab), reversed(&bc), reversed(&ca));
    // floor of the Gromov product at each corner
    let at_a = model.gromov_product_twice(a, b, c)? / 2;
    let at_b = model.gromov_product_twice(b, a, c)? / 2;
    let at_c = model.gromov_product_twice(c, a, b)? / 2;
    let corners = [
        ("a", &ab, &ac, at_a),
        ("b", &ba, &bc, at_b),
        ("c", &ca, &cb, at_c),
    ];
    let mut best: (u32, Option<TriangleWitness>) = (0, None);
    for (name, s1, s2, limit) in corners {
        let (d, t, i, j) = corner_defect(model, s1, s2, limit)?;
        if d > best.0 {
            best = (
                d,
                Some(TriangleWitness {
                    a: model.format(a),
                    b: model.format(b),
                    c: model.format(c),
                    corner: name.to_string(),
                    t,
                    v: model.format(s1[i].at(t as usize)),
                    w: model.format(s2[j].at(t as usize)),
                    defect: d,
                }),
            );
        }
    }
    Ok(best)
}

/// Samples geodesic triangles with vertices in `B(1, radius)` and records the
/// largest distance between inscribed points at equal distance from a corner.
///
/// Algebraic models fix the first corner at the identity (equivariance);
/// table models sample all three. When every pair `(b, c)` fits in the
/// budget the check is exhaustive.
pub fn check_delta_fineness(
    model: &GroupModel,
    radius: u32,
    budget: usize,
    seed: u64,
    geodesic_cap: usize,
) -> Result<FinenessReport> {
    let mut report = FinenessReport {
        radius,
        geodesic_cap,
        exhaustive: false,
        sampled_triangles: 0,
        max_defect: 0,
        certified_delta_lower_bound: 0,
        configured_delta: model.delta(),
        witness: None,
    };
    if budget == 0 {
        return Ok(report);
    }
    let ball = model.identity_ball(radius)?;
    let equivariant = model.supports_equivariant_reduction();
    let pairs = ball.len() * ball.len();
    let exhaustive = equivariant && pairs <= budget;
    let count = if exhaustive { pairs } else { budget };

    let results = par::try_map_indices(count, |i| {
        let (a, b, c) = if exhaustive {
            (model.identity(), ball[i / ball.len()].clone(), ball[i % ball.len()].clone())
        } else {
            let mut rng = sample_rng(seed, "fineness", i as u64);
            let a = if equivariant {
                model.identity()
            } else {
                random_in_ball(model, &mut rng, radius)?
            };
            let b = random_in_ball(model, &mut rng, radius)?;
            let c = random_in_ball(model, &mut rng, radius)?;
            (a, b, c)
        };
        triangle_defect(model, &a, &b, &c, geodesic_cap)
    })?;

    report.exhaustive = exhaustive;
    report.sampled_triangles = count;
    for (d, w) in results {
        if d > report.max_defect {
            report.max_defect = d;
            report.witness = w;
        }
    }
    report.certified_delta_lower_bound = report.max_defect;
    Ok(report)
}
