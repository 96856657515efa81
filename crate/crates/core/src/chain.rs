//! Finitely supported rational 0-chains with the ℓ¹ norm.

use std::collections::BTreeMap;
use std::fmt;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::group::{GroupElement, GroupModel};

/// A 0-chain: a sparse map from group elements to exact rationals.
///
/// Coefficients are never zero and iteration is in ShortLex order of the
/// support, so equal chains have identical iteration and serialization.
#[derive(Clone, Default, PartialEq, Eq)]
pub struct Chain0 {
    terms: BTreeMap<GroupElement, BigRational>,
}

/// Summary statistics of a chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChainMeasure {
    pub l1: BigRational,
    pub augmentation: BigRational,
    pub support: Vec<GroupElement>,
    pub diameter: u32,
}

impl Chain0 {
    pub fn zero() -> Self {
        Self::default()
    }

    /// The chain `1·g`.
    pub fn vertex(g: GroupElement) -> Self {
        let mut terms = BTreeMap::new();
        terms.insert(g, BigRational::one());
        Self { terms }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (GroupElement, BigRational)>) -> Self {
        let mut c = Self::zero();
        for (g, q) in terms {
            c.add_term(g, &q);
        }
        c
    }

    /// Adds `q·g`, dropping the entry if it cancels.
    pub fn add_term(&mut self, g: GroupElement, q: &BigRational) {
        if q.is_zero() {
            return;
        }
        match self.terms.entry(g) {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(q.clone());
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                *e.get_mut() += q;
                if e.get().is_zero() {
                    e.remove();
                }
            }
        }
    }

    pub fn coefficient(&self, g: &GroupElement) -> BigRational {
        self.terms.get(g).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GroupElement, &BigRational)> {
        self.terms.iter()
    }

    pub fn support(&self) -> impl Iterator<Item = &GroupElement> {
        self.terms.keys()
    }

    pub fn l1(&self) -> BigRational {
        self.terms.values().fold(BigRational::zero(), |acc, q| acc + q.abs())
    }

    /// ε, the sum of the coefficients.
    pub fn augmentation(&self) -> BigRational {
        self.terms.values().fold(BigRational::zero(), |acc, q| acc + q)
    }

    /// True if all coefficients are positive and they sum to one.
    pub fn is_convex(&self) -> bool {
        self.terms.values().all(|q| q.is_positive()) && self.augmentation().is_one()
    }

    pub fn scale(&self, alpha: &BigRational) -> Self {
        if alpha.is_zero() {
            return Self::zero();
        }
        Self {
            terms: self.terms.iter().map(|(g, q)| (g.clone(), q * alpha)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (g, q) in &other.terms {
            out.add_term(g.clone(), q);
        }
        out
    }

    pub fn sub(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (g, q) in &other.terms {
            out.add_term(g.clone(), &-q);
        }
        out
    }

    /// Left translation `g·z`.
    pub fn translate(&self, model: &GroupModel, g: &GroupElement) -> Result<Self> {
        let mut out = Self::zero();
        for (x, q) in &self.terms {
            out.add_term(model.multiply(g, x)?, q);
        }
        Ok(out)
    }

    /// Largest pairwise distance in the support (0 for at most one point).
    pub fn diameter(&self, model: &GroupModel) -> Result<u32> {
        let pts: Vec<&GroupElement> = self.terms.keys().collect();
        let mut best = 0;
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                best = best.max(model.distance(pts[i], pts[j])?);
            }
        }
        Ok(best)
    }

    pub fn measure(&self, model: &GroupModel) -> Result<ChainMeasure> {
        Ok(ChainMeasure {
            l1: self.l1(),
            augmentation: self.augmentation(),
            support: self.terms.keys().cloned().collect(),
            diameter: self.diameter(model)?,
        })
    }

    /// `(z₊, z₋)` with `z = z₊ − z₋`, non-negative coefficients and disjoint supports.
    pub fn jordan_decompose(&self) -> (Self, Self) {
        let mut plus = Self::zero();
        let mut minus = Self::zero();
        for (g, q) in &self.terms {
            if q.is_positive() {
                plus.terms.insert(g.clone(), q.clone());
            } else {
                minus.terms.insert(g.clone(), -q);
            }
        }
        (plus, minus)
    }

    /// Serializes as a JSON array of `[id, numerator, denominator]`.
    pub fn to_json(&self, model: &GroupModel) -> Result<Value> {
        let mut rows = Vec::with_capacity(self.terms.len());
        for (g, q) in &self.terms {
            rows.push(Value::Array(vec![
                id_value(model.element_id(g)?),
                Value::String(q.numer().to_string()),
                Value::String(q.denom().to_string()),
            ]));
        }
        Ok(Value::Array(rows))
    }

    pub fn from_json(model: &GroupModel, value: &Value) -> Result<Self> {
        let rows = value
            .as_array()
            .ok_or_else(|| Error::format("chain", "expected an array of [id, num, den]"))?;
        let mut out = Self::zero();
        for (i, row) in rows.iter().enumerate() {
            let loc = format!("chain[{i}]");
            let cells = row
                .as_array()
                .filter(|c| c.len() == 3)
                .ok_or_else(|| Error::format(&loc, "expected [id, num, den]"))?;
            let id = parse_id(&cells[0]).ok_or_else(|| Error::format(&loc, "bad element id"))?;
            let num = parse_int(&cells[1]).ok_or_else(|| Error::format(&loc, "bad numerator"))?;
            let den = parse_int(&cells[2]).ok_or_else(|| Error::format(&loc, "bad denominator"))?;
            if den.is_zero() {
                return Err(Error::format(&loc, "zero denominator"));
            }
            let g = model.element_from_id(id)?;
            out.add_term(g, &BigRational::new(num, den));
        }
        Ok(out)
    }

    /// Human-readable rendering such as `1/2·ab + 1/2·ba`.
    pub fn render(&self, model: &GroupModel) -> String {
        if self.terms.is_empty() {
            return "0".into();
        }
        self.terms
            .iter()
            .map(|(g, q)| format!("{}·{}", q, model.format(g)))
            .collect::<Vec<_>>()
            .join(" + ")
    }
}

/// Ids beyond `u64` are written as strings.
fn id_value(id: u128) -> Value {
    match u64::try_from(id) {
        Ok(small) => Value::from(small),
        Err(_) => Value::String(id.to_string()),
    }
}

fn parse_id(v: &Value) -> Option<u128> {
    match v {
        Value::Number(n) => n.as_u64().map(u128::from),
        Value::String(s) => s.parse().ok(),
        _ => None,
    }
}

fn parse_int(v: &Value) -> Option<BigInt> {
    match v {
        Value::String(s) => s.parse().ok(),
        Value::Number(n) => n.as_i64().map(BigInt::from),
        _ => None,
    }
}

impl fmt::Debug for Chain0 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_map().entries(self.terms.iter().map(|(g, q)| (g, q.to_string()))).finish()
    }
}

/// `star(z)`: every vertex replaced by the uniform average over its ball of
/// radius `radius` (nominally `7δ`).
pub fn star_with_radius(model: &GroupModel, z: &Chain0, radius: u32) -> Result<Chain0> {
    let mut out = Chain0::zero();
    for (g, q) in z.iter() {
        let ball = model.ball(g, radius)?;
        let w = q / BigRational::from_integer(BigInt::from(ball.len()));
        for x in ball {
            out.add_term(x, &w);
        }
    }
    Ok(out)
}

/// `star(z)` with the standard radius `7δ`.
pub fn star(model: &GroupModel, z: &Chain0) -> Result<Chain0> {
    star_with_radius(model, z, 7 * model.delta())
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
    fn measure_of_simple_chains() {
        let g = GroupModel::free(2, 1).unwrap();
        let x = el(&g, "ab");
        let m = Chain0::vertex(x.clone()).measure(&g).unwrap();
        assert_eq!((m.l1, m.augmentation, m.support.len(), m.diameter), (q(1, 1), q(1, 1), 1, 0));

        let y = el(&g, "aba");
        let z = Chain0::vertex(x.clone()).sub(&Chain0::vertex(y.clone()));
        let m = z.measure(&g).unwrap();
        assert_eq!((m.l1, m.augmentation, m.diameter), (q(2, 1), q(0, 1), 1));

        let w = Chain0::from_terms([(x, q(1, 2)), (y, q(1, 2)), (el(&g, "b^-1"), q(-1, 1))]);
        let m = w.measure(&g).unwrap();
        assert_eq!((m.l1, m.augmentation, m.support.len(), m.diameter), (q(2, 1), q(0, 1), 3, 4));
    }

    #[test]
    fn cancelling_terms_are_dropped() {
        let g = GroupModel::free(2, 1).unwrap();
        let x = el(&g, "a");
        let z = Chain0::vertex(x.clone()).sub(&Chain0::vertex(x));
        assert!(z.is_zero());
    }

    #[test]
    fn star_of_a_vertex() {
        let g = GroupModel::free(2, 1).unwrap();
        let v = el(&g, "ab");
        let s = star(&g, &Chain0::vertex(v.clone())).unwrap();
        assert_eq!(s.len(), 4373);
        assert!(s.iter().all(|(_, c)| *c == q(1, 4373)));
        assert_eq!(s.augmentation(), q(1, 1));
        assert_eq!(s.coefficient(&v), q(1, 4373));
    }

    #[test]
    fn star_is_contracting() {
        let g = GroupModel::free_product(&[2, 3], 1).unwrap();
        let z = Chain0::from_terms([(el(&g, "st"), q(3, 1)), (el(&g, "ts"), q(-2, 1))]);
        let s = star(&g, &z).unwrap();
        assert_eq!(s.augmentation(), z.augmentation());
        assert!(s.l1() <= z.l1());
    }

    #[test]
    fn jordan_parts() {
        let g = GroupModel::free(2, 1).unwrap();
        let (x, y) = (el(&g, "a"), el(&g, "b"));
        let z = Chain0::vertex(x.clone()).sub(&Chain0::vertex(y.clone()));
        let (p, m) = z.jordan_decompose();
        assert_eq!(p, Chain0::vertex(x));
        assert_eq!(m, Chain0::vertex(y));
        let pos = Chain0::from_terms([(el(&g, "ab"), q(2, 3))]);
        assert_eq!(pos.jordan_decompose(), (pos.clone(), Chain0::zero()));
    }

    #[test]
    fn json_round_trip() {
        let g = GroupModel::free_product(&[2, 3], 1).unwrap();
        let z = Chain0::from_terms([(el(&g, "sts"), q(-7, 3)), (g.identity(), q(1, 2))]);
        let v = z.to_json(&g).unwrap();
        assert_eq!(Chain0::from_json(&g, &v).unwrap(), z);
        assert!(Chain0::from_json(&g, &serde_json::json!([[0, "1", "0"]])).is_err());
    }
}
