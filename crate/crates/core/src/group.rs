//! Concrete hyperbolic groups: canonical normal forms, multiplication, the
//! word metric and ball enumeration.
//!
//! Three kinds of model are supported. Free groups and free products of
//! finite cyclic groups are handled algebraically; anything else enters as a
//! table model, an explicit finite Cayley ball loaded from disk
//! (see [`crate::table`]).
//!
//! Elements are identified with their canonical normal-form word, which for
//! the algebraic models is the ShortLex-least geodesic word with respect to
//! the configured generator order. The dense integer id of an element is its
//! ShortLex rank ([`GroupModel::element_id`]); table models use the ids of the
//! loaded file.

use std::cmp::Ordering;
use std::collections::VecDeque;
use std::fmt;
use std::sync::{Arc, RwLock};

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::normal_form::NormalFormAutomaton;
use crate::table::TableBall;

/// Index of a generator in the configured generator order.
pub type Letter = u8;

/// Inline storage for words; long words spill to the heap.
pub type Word = SmallVec<[Letter; 48]>;

/// Default hard cap on enumerated ball sizes.
pub const DEFAULT_BALL_CAP: usize = 5_000_000;

/// A group element, stored as its canonical normal-form word.
///
/// Equality is equality of normal forms, so two handles are equal exactly
/// when they denote the same element of the same model. The ordering is
/// ShortLex on generator indices.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct GroupElement {
    word: Word,
}

impl GroupElement {
    pub fn identity() -> Self {
        Self { word: Word::new() }
    }

    pub(crate) fn from_word(word: Word) -> Self {
        Self { word }
    }

    pub(crate) fn from_slice(word: &[Letter]) -> Self {
        Self {
            word: Word::from_slice(word),
        }
    }

    pub fn word(&self) -> &[Letter] {
        &self.word
    }

    pub fn len(&self) -> usize {
        self.word.len()
    }

    pub fn is_identity(&self) -> bool {
        self.word.is_empty()
    }

    /// The element spelled by the first `t` letters of the normal form.
    pub(crate) fn prefix(&self, t: usize) -> Self {
        Self::from_slice(&self.word[..t])
    }
}

impl Ord for GroupElement {
    fn cmp(&self, other: &Self) -> Ordering {
        self.word
            .len()
            .cmp(&other.word.len())
            .then_with(|| self.word.as_slice().cmp(other.word.as_slice()))
    }
}

impl PartialOrd for GroupElement {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "g{:?}", self.word.as_slice())
    }
}

/// Ordered, inverse-closed generating set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSet {
    symbols: Vec<String>,
    inverse_of: Vec<Letter>,
}

impl GeneratorSet {
    pub fn new(symbols: Vec<String>, inverse_of: Vec<Letter>) -> Result<Self> {
        if symbols.len() != inverse_of.len() {
            return Err(Error::Configuration("generator labels and inverse table differ in length".into()));
        }
        if symbols.len() > Letter::MAX as usize {
            return Err(Error::Configuration("too many generators".into()));
        }
        let mut seen = FxHashSet::default();
        for (i, s) in symbols.iter().enumerate() {
            if s.is_empty() || s == "1" || s.chars().any(char::is_whitespace) {
                return Err(Error::Configuration(format!("invalid generator label {s:?}")));
            }
            if !seen.insert(s.as_str()) {
                return Err(Error::Configuration(format!("duplicate generator label {s:?}")));
            }
            let j = inverse_of[i] as usize;
            if j >= symbols.len() || inverse_of[j] as usize != i {
                return Err(Error::Configuration(format!("inverse table is not an involution at {s:?}")));
            }
        }
        Ok(Self { symbols, inverse_of })
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn label(&self, x: Letter) -> &str {
        &self.symbols[x as usize]
    }

    pub fn inverse(&self, x: Letter) -> Letter {
        self.inverse_of[x as usize]
    }

    pub fn index_of(&self, label: &str) -> Option<Letter> {
        self.symbols.iter().position(|s| s == label).map(|i| i as Letter)
    }
}

/// Which group a model describes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum GroupKind {
    Free { rank: u32 },
    FreeProduct { orders: Vec<u32> },
    Table { radius: u32 },
}

impl fmt::Display for GroupKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupKind::Free { rank } => write!(f, "free:{rank}"),
            GroupKind::FreeProduct { orders } => {
                let parts: Vec<String> = orders.iter().map(u32::to_string).collect();
                write!(f, "fp:{}", parts.join(","))
            }
            GroupKind::Table { radius } => write!(f, "table(radius {radius})"),
        }
    }
}

impl std::str::FromStr for GroupKind {
    type Err = Error;

    /// Parses `free:<rank>` or `fp:<order>,<order>,...`.
    fn from_str(text: &str) -> Result<Self> {
        let bad = || Error::Configuration(format!("unrecognized group {text:?}; expected free:<rank> or fp:<orders>"));
        let (head, rest) = text.trim().split_once(':').ok_or_else(bad)?;
        match head {
            "free" => Ok(GroupKind::Free { rank: rest.trim().parse().map_err(|_| bad())? }),
            "fp" => {
                let orders = rest
                    .split(',')
                    .map(|p| p.trim().parse::<u32>().map_err(|_| bad()))
                    .collect::<Result<Vec<_>>>()?;
                Ok(GroupKind::FreeProduct { orders })
            }
            _ => Err(bad()),
        }
    }
}

#[derive(Debug)]
struct FreeAlgebra {
    inverse_of: Vec<Letter>,
}

impl FreeAlgebra {
    fn reduce_into(&self, out: &mut Word, letters: impl IntoIterator<Item = Letter>) {
        for x in letters {
            if out.last().is_some_and(|&l| self.inverse_of[l as usize] == x) {
                out.pop();
            } else {
                out.push(x);
            }
        }
    }
}

#[derive(Debug)]
struct ProductAlgebra {
    orders: Vec<u32>,
    factor_of: Vec<usize>,
    /// exponent contributed by each letter, in `1..order`
    step: Vec<u32>,
    /// per factor: (positive letter, negative letter, tie winner)
    letters: Vec<(Letter, Letter, Letter)>,
}

impl ProductAlgebra {
    fn run_ok(&self, x: usize, m: usize) -> bool {
        let f = self.factor_of[x];
        let k = self.orders[f] as usize;
        if k == 2 {
            return m == 1;
        }
        2 * m < k || (2 * m == k && x as Letter == self.letters[f].2)
    }

    fn normalize(&self, letters: impl IntoIterator<Item = Letter>) -> Word {
        let mut syllables: SmallVec<[(usize, u32); 32]> = SmallVec::new();
        for x in letters {
            let f = self.factor_of[x as usize];
            let k = self.orders[f];
            let s = self.step[x as usize];
            match syllables.last_mut() {
                Some(top) if top.0 == f => {
                    top.1 = (top.1 + s) % k;
                    if top.1 == 0 {
                        syllables.pop();
                    }
                }
                _ => syllables.push((f, s % k)),
            }
        }
        let mut out = Word::new();
        for (f, e) in syllables {
            let k = self.orders[f];
            let (pos, neg, tie) = self.letters[f];
            if k == 2 {
                out.push(pos);
                continue;
            }
            let (letter, count) = match (2 * e).cmp(&k) {
                Ordering::Less => (pos, e),
                Ordering::Greater => (neg, k - e),
                Ordering::Equal => (tie, e),
            };
            out.extend(std::iter::repeat_n(letter, count as usize));
        }
        out
    }
}

#[derive(Debug)]
enum Algebra {
    Free(FreeAlgebra),
    Product(ProductAlgebra),
    Table(TableBall),
}

/// A concrete finitely generated group with a fixed generator order and a
/// fineness constant δ.
#[derive(Debug)]
pub struct GroupModel {
    kind: GroupKind,
    generators: GeneratorSet,
    delta: u32,
    ball_cap: usize,
    algebra: Algebra,
    automaton: Option<NormalFormAutomaton>,
    ball_cache: RwLock<FxHashMap<u32, Arc<Vec<GroupElement>>>>,
}

const PRODUCT_LABELS: &str = "stuvwxyzabcdefghijklmnopqr";

fn free_labels(rank: u32) -> Vec<String> {
    (0..rank)
        .map(|i| {
            if i < 26 {
                ((b'a' + i as u8) as char).to_string()
            } else {
                format!("x{i}")
            }
        })
        .collect()
}

fn product_label(i: usize) -> String {
    PRODUCT_LABELS
        .chars()
        .nth(i)
        .map(|c| c.to_string())
        .unwrap_or_else(|| format!("g{i}"))
}

/// Permutation of canonical generator positions induced by a requested label order.
fn resolve_order(canonical: &[String], order: Option<&[String]>) -> Result<Vec<usize>> {
    let Some(order) = order else {
        return Ok((0..canonical.len()).collect());
    };
    if order.len() != canonical.len() {
        return Err(Error::Configuration(format!(
            "generator order lists {} labels, the group has {}",
            order.len(),
            canonical.len()
        )));
    }
    let mut perm = Vec::with_capacity(order.len());
    for label in order {
        let pos = canonical
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::Configuration(format!("unknown generator label {label:?} in order")))?;
        if perm.contains(&pos) {
            return Err(Error::Configuration(format!("generator {label:?} repeated in order")));
        }
        perm.push(pos);
    }
    Ok(perm)
}

impl GroupModel {
    /// Free group of the given rank; generators `a, a^-1, b, b^-1, ...`.
    pub fn free(rank: u32, delta: u32) -> Result<Self> {
        Self::algebraic(GroupKind::Free { rank }, delta, None)
    }

    /// Free product of cyclic groups of the given orders (each at least 2).
    /// Order-2 factors contribute one self-inverse generator, larger orders a
    /// generator and its inverse.
    pub fn free_product(orders: &[u32], delta: u32) -> Result<Self> {
        Self::algebraic(GroupKind::FreeProduct { orders: orders.to_vec() }, delta, None)
    }

    /// Algebraic model with an optional explicit generator order (labels, first is smallest).
    pub fn algebraic(kind: GroupKind, delta: u32, order: Option<&[String]>) -> Result<Self> {
        if delta == 0 {
            return Err(Error::Configuration("delta must be a positive integer".into()));
        }
        match kind {
            GroupKind::Free { rank } => {
                if rank == 0 {
                    return Err(Error::Configuration("free group rank must be positive".into()));
                }
                let mut canonical = Vec::new();
                for label in free_labels(rank) {
                    canonical.push(label.clone());
                    canonical.push(format!("{label}^-1"));
                }
                let perm = resolve_order(&canonical, order)?;
                let mut position = vec![0usize; perm.len()];
                for (new, &old) in perm.iter().enumerate() {
                    position[old] = new;
                }
                let symbols: Vec<String> = perm.iter().map(|&old| canonical[old].clone()).collect();
                let inverse_of: Vec<Letter> = perm.iter().map(|&old| position[old ^ 1] as Letter).collect();
                let generators = GeneratorSet::new(symbols, inverse_of.clone())?;
                let automaton = NormalFormAutomaton::free(&inverse_of);
                Ok(Self::assemble(
                    GroupKind::Free { rank },
                    generators,
                    delta,
                    Algebra::Free(FreeAlgebra { inverse_of }),
                    Some(automaton),
                ))
            }
            GroupKind::FreeProduct { orders } => {
                if orders.len() < 2 {
                    return Err(Error::Configuration("a free product needs at least two factors".into()));
                }
                if let Some(k) = orders.iter().find(|&&k| k < 2) {
                    return Err(Error::Configuration(format!("cyclic factor order {k} is below 2")));
                }
                // canonical: (label, factor, step)
                let mut canonical: Vec<(String, usize, u32)> = Vec::new();
                for (f, &k) in orders.iter().enumerate() {
                    let label = product_label(f);
                    canonical.push((label.clone(), f, 1));
                    if k > 2 {
                        canonical.push((format!("{label}^-1"), f, k - 1));
                    }
                }
                let labels: Vec<String> = canonical.iter().map(|c| c.0.clone()).collect();
                let perm = resolve_order(&labels, order)?;
                let ordered: Vec<&(String, usize, u32)> = perm.iter().map(|&i| &canonical[i]).collect();
                let symbols: Vec<String> = ordered.iter().map(|c| c.0.clone()).collect();
                let factor_of: Vec<usize> = ordered.iter().map(|c| c.1).collect();
                let step: Vec<u32> = ordered.iter().map(|c| c.2).collect();
                let mut letters = vec![(0 as Letter, 0 as Letter, 0 as Letter); orders.len()];
                for (x, c) in ordered.iter().enumerate() {
                    let entry = &mut letters[c.1];
                    if c.2 == 1 {
                        entry.0 = x as Letter;
                    }
                    if c.2 == orders[c.1] - 1 {
                        entry.1 = x as Letter;
                    }
                }
                for entry in &mut letters {
                    entry.2 = entry.0.min(entry.1);
                }
                let inverse_of: Vec<Letter> = (0..ordered.len())
                    .map(|x| {
                        let f = factor_of[x];
                        if step[x] == 1 {
                            letters[f].1
                        } else {
                            letters[f].0
                        }
                    })
                    .collect();
                let generators = GeneratorSet::new(symbols, inverse_of)?;
                let algebra = ProductAlgebra {
                    orders: orders.clone(),
                    factor_of: factor_of.clone(),
                    step,
                    letters,
                };
                let automaton = NormalFormAutomaton::free_product(&factor_of, |x, m| algebra.run_ok(x, m));
                Ok(Self::assemble(
                    GroupKind::FreeProduct { orders },
                    generators,
                    delta,
                    Algebra::Product(algebra),
                    Some(automaton),
                ))
            }
            GroupKind::Table { .. } => Err(Error::Configuration(
                "table models are loaded from a file, not constructed algebraically".into(),
            )),
        }
    }

    pub(crate) fn from_table_ball(generators: GeneratorSet, delta: u32, table: TableBall) -> Result<Self> {
        if delta == 0 {
            return Err(Error::Configuration("delta must be a positive integer".into()));
        }
        let kind = GroupKind::Table { radius: table.radius() };
        Ok(Self::assemble(kind, generators, delta, Algebra::Table(table), None))
    }

    fn assemble(
        kind: GroupKind,
        generators: GeneratorSet,
        delta: u32,
        algebra: Algebra,
        automaton: Option<NormalFormAutomaton>,
    ) -> Self {
        Self {
            kind,
            generators,
            delta,
            ball_cap: DEFAULT_BALL_CAP,
            algebra,
            automaton,
            ball_cache: RwLock::new(FxHashMap::default()),
        }
    }

    /// Replaces the hard cap on enumerated ball sizes.
    pub fn with_ball_cap(mut self, cap: usize) -> Self {
        self.ball_cap = cap;
        self
    }

    /// Same group and generator order with a different fineness constant.
    pub fn with_delta(mut self, delta: u32) -> Result<Self> {
        if delta == 0 {
            return Err(Error::Configuration("delta must be a positive integer".into()));
        }
        self.delta = delta;
        Ok(self)
    }

    pub fn kind(&self) -> &GroupKind {
        &self.kind
    }

    pub fn generators(&self) -> &GeneratorSet {
        &self.generators
    }

    pub fn delta(&self) -> u32 {
        self.delta
    }

    pub fn ball_cap(&self) -> usize {
        self.ball_cap
    }

    /// True for the algebraic kinds, where every pair computation may be
    /// translated so that its first point is the identity.
    pub fn supports_equivariant_reduction(&self) -> bool {
        !matches!(self.algebra, Algebra::Table(_))
    }

    pub fn identity(&self) -> GroupElement {
        GroupElement::identity()
    }

    /// The element represented by a single generator.
    pub fn generator(&self, x: Letter) -> Result<GroupElement> {
        self.normalize(&[x])
    }

    fn check_letters(&self, raw: &[Letter]) -> Result<()> {
        match raw.iter().find(|&&x| x as usize >= self.generators.len()) {
            Some(x) => Err(Error::Domain(format!("generator index {x} out of range"))),
            None => Ok(()),
        }
    }

    /// Canonical normal form of an arbitrary word.
    pub fn normalize(&self, raw: &[Letter]) -> Result<GroupElement> {
        self.check_letters(raw)?;
        match &self.algebra {
            Algebra::Free(free) => {
                let mut out = Word::new();
                free.reduce_into(&mut out, raw.iter().copied());
                Ok(GroupElement::from_word(out))
            }
            Algebra::Product(p) => Ok(GroupElement::from_word(p.normalize(raw.iter().copied()))),
            Algebra::Table(t) => t.trace_from(0, raw).map(|id| t.element(id).clone()),
        }
    }

    pub fn multiply(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        match &self.algebra {
            Algebra::Free(free) => {
                let aw = a.word();
                let bw = b.word();
                let mut k = 0;
                while k < aw.len() && k < bw.len() && free.inverse_of[aw[aw.len() - 1 - k] as usize] == bw[k] {
                    k += 1;
                }
                let mut out = Word::with_capacity(aw.len() + bw.len() - 2 * k);
                out.extend_from_slice(&aw[..aw.len() - k]);
                out.extend_from_slice(&bw[k..]);
                Ok(GroupElement::from_word(out))
            }
            Algebra::Product(p) => Ok(GroupElement::from_word(
                p.normalize(a.word().iter().chain(b.word()).copied()),
            )),
            Algebra::Table(t) => {
                let from = t.id_of(a)?;
                t.trace_from(from, b.word()).map(|id| t.element(id).clone())
            }
        }
    }

    /// `|a·b|`, without building the product where the model allows it.
    pub fn product_length(&self, a: &GroupElement, b: &GroupElement) -> Result<u32> {
        match &self.algebra {
            Algebra::Free(free) => {
                let aw = a.word();
                let bw = b.word();
                let mut k = 0;
                while k < aw.len() && k < bw.len() && free.inverse_of[aw[aw.len() - 1 - k] as usize] == bw[k] {
                    k += 1;
                }
                Ok((aw.len() + bw.len() - 2 * k) as u32)
            }
            _ => self.length(&self.multiply(a, b)?),
        }
    }

    pub fn inverse(&self, a: &GroupElement) -> Result<GroupElement> {
        let inv = a.word().iter().rev().map(|&x| self.generators.inverse(x));
        match &self.algebra {
            Algebra::Free(_) => Ok(GroupElement::from_word(inv.collect())),
            Algebra::Product(p) => Ok(GroupElement::from_word(p.normalize(inv))),
            Algebra::Table(t) => {
                let letters: Word = inv.collect();
                t.trace_from(0, &letters).map(|id| t.element(id).clone())
            }
        }
    }

    /// `a⁻¹ b`, the translate of `b` when `a` is moved to the identity.
    pub fn relative(&self, a: &GroupElement, b: &GroupElement) -> Result<GroupElement> {
        match &self.algebra {
            Algebra::Free(_) => {
                let p = common_prefix(a.word(), b.word());
                let mut out: Word = a.word()[p..]
                    .iter()
                    .rev()
                    .map(|&x| self.generators.inverse(x))
                    .collect();
                out.extend_from_slice(&b.word()[p..]);
                Ok(GroupElement::from_word(out))
            }
            _ => {
                let inv = self.inverse(a)?;
                self.multiply(&inv, b)
            }
        }
    }

    /// Word-metric distance to the identity.
    pub fn length(&self, a: &GroupElement) -> Result<u32> {
        match &self.algebra {
            Algebra::Table(t) => t.distance(0, t.id_of(a)?),
            _ => Ok(a.len() as u32),
        }
    }

    /// Word-metric distance `d(a, b)`.
    pub fn distance(&self, a: &GroupElement, b: &GroupElement) -> Result<u32> {
        match &self.algebra {
            Algebra::Free(_) => {
                let p = common_prefix(a.word(), b.word());
                Ok((a.len() + b.len() - 2 * p) as u32)
            }
            Algebra::Product(p) => {
                let inv = a.word().iter().rev().map(|&x| self.generators.inverse(x));
                Ok(p.normalize(inv.chain(b.word().iter().copied())).len() as u32)
            }
            Algebra::Table(t) => t.distance(t.id_of(a)?, t.id_of(b)?),
        }
    }

    /// `(b|c)_a = ½[d(a,b) + d(a,c) − d(b,c)]`.
    pub fn gromov_product(&self, a: &GroupElement, b: &GroupElement, c: &GroupElement) -> Result<BigRational> {
        let twice = self.gromov_product_twice(a, b, c)?;
        Ok(BigRational::new(BigInt::from(twice), BigInt::from(2)))
    }

    /// Twice the Gromov product, an exact non-negative integer.
    pub fn gromov_product_twice(&self, a: &GroupElement, b: &GroupElement, c: &GroupElement) -> Result<u32> {
        let ab = self.distance(a, b)?;
        let ac = self.distance(a, c)?;
        let bc = self.distance(b, c)?;
        Ok(ab + ac - bc)
    }

    /// `a·s` for every generator `s`, in generator order.
    pub fn neighbors(&self, a: &GroupElement) -> Result<Vec<GroupElement>> {
        (0..self.generators.len() as Letter)
            .map(|x| self.right_multiply_letter(a, x))
            .collect()
    }

    pub(crate) fn right_multiply_letter(&self, a: &GroupElement, x: Letter) -> Result<GroupElement> {
        match &self.algebra {
            Algebra::Free(free) => {
                let mut w = a.word.clone();
                free.reduce_into(&mut w, [x]);
                Ok(GroupElement::from_word(w))
            }
            Algebra::Product(p) => Ok(GroupElement::from_word(p.normalize(a.word().iter().copied().chain([x])))),
            Algebra::Table(t) => {
                let id = t.step(t.id_of(a)?, x)?;
                Ok(t.element(id).clone())
            }
        }
    }

    /// Exact number of elements in a ball of radius `radius`, for models
    /// where it is known without enumeration.
    pub fn ball_size(&self, radius: u32) -> Option<u128> {
        self.automaton.as_ref().map(|a| a.ball_size(radius as usize))
    }

    /// Number of elements at distance exactly `radius` from the identity (algebraic models).
    pub fn sphere_size(&self, radius: u32) -> Option<u128> {
        self.automaton.as_ref().map(|a| a.sphere_size(radius as usize))
    }

    /// `B(1, radius)` in ShortLex order (cached for algebraic models).
    pub fn identity_ball(&self, radius: u32) -> Result<Arc<Vec<GroupElement>>> {
        if let Some(ball) = self.ball_cache.read().expect("ball cache poisoned").get(&radius) {
            return Ok(ball.clone());
        }
        let ball = Arc::new(match &self.algebra {
            Algebra::Table(t) => t.ball(0, radius, self.ball_cap)?,
            _ => self.enumerate_identity_ball(radius)?,
        });
        self.ball_cache
            .write()
            .expect("ball cache poisoned")
            .insert(radius, ball.clone());
        Ok(ball)
    }

    fn enumerate_identity_ball(&self, radius: u32) -> Result<Vec<GroupElement>> {
        if let Some(size) = self.ball_size(radius) {
            if size > self.ball_cap as u128 {
                return Err(Error::BudgetExceeded(format!(
                    "ball of radius {radius} has {size} elements, cap is {}",
                    self.ball_cap
                )));
            }
        }
        let mut seen: FxHashSet<GroupElement> = FxHashSet::default();
        let mut queue = VecDeque::new();
        let mut out = Vec::new();
        seen.insert(self.identity());
        queue.push_back((self.identity(), 0u32));
        while let Some((g, depth)) = queue.pop_front() {
            out.push(g.clone());
            if out.len() > self.ball_cap {
                return Err(Error::BudgetExceeded(format!(
                    "ball of radius {radius} exceeds the cap of {}",
                    self.ball_cap
                )));
            }
            if depth == radius {
                continue;
            }
            for n in self.neighbors(&g)? {
                if seen.insert(n.clone()) {
                    queue.push_back((n, depth + 1));
                }
            }
        }
        out.sort();
        Ok(out)
    }

    /// `B(center, radius)`, sorted ShortLex.
    pub fn ball(&self, center: &GroupElement, radius: u32) -> Result<Vec<GroupElement>> {
        match &self.algebra {
            Algebra::Table(t) => t.ball(t.id_of(center)?, radius, self.ball_cap),
            _ => {
                let base = self.identity_ball(radius)?;
                let mut out = base
                    .iter()
                    .map(|x| self.multiply(center, x))
                    .collect::<Result<Vec<_>>>()?;
                out.sort();
                Ok(out)
            }
        }
    }

    /// `S(center, radius) = B(center, radius) \ B(center, radius − 1)`.
    pub fn sphere(&self, center: &GroupElement, radius: u32) -> Result<Vec<GroupElement>> {
        let ball = self.ball(center, radius)?;
        ball.into_iter()
            .filter_map(|x| match self.distance(center, &x) {
                Ok(d) if d == radius => Some(Ok(x)),
                Ok(_) => None,
                Err(e) => Some(Err(e)),
            })
            .collect()
    }

    /// Dense canonical id: ShortLex rank for algebraic models, file id for tables.
    pub fn element_id(&self, a: &GroupElement) -> Result<u128> {
        match (&self.algebra, &self.automaton) {
            (Algebra::Table(t), _) => t.id_of(a).map(u128::from),
            (_, Some(auto)) => auto.rank(a.word()),
            _ => unreachable!("algebraic models carry an automaton"),
        }
    }

    pub fn element_from_id(&self, id: u128) -> Result<GroupElement> {
        match (&self.algebra, &self.automaton) {
            (Algebra::Table(t), _) => {
                let id = u32::try_from(id)
                    .ok()
                    .filter(|&i| (i as usize) < t.len())
                    .ok_or_else(|| Error::OutOfLoadedBall(format!("no element with id {id}")))?;
                Ok(t.element(id).clone())
            }
            (_, Some(auto)) => auto.unrank(id).map(|w| GroupElement::from_slice(&w)),
            _ => unreachable!("algebraic models carry an automaton"),
        }
    }

    /// True if `word` is already a canonical normal form.
    pub fn is_normal_form(&self, word: &[Letter]) -> bool {
        match (&self.algebra, &self.automaton) {
            (Algebra::Table(t), _) => t.id_of(&GroupElement::from_slice(word)).is_ok(),
            (_, Some(auto)) => auto.accepts(word),
            _ => false,
        }
    }

    /// Uniformly random element at distance exactly `n` from the identity,
    /// or `None` if that sphere is empty (or lies outside a table model).
    pub fn random_element_of_length<R: Rng + ?Sized>(&self, rng: &mut R, n: u32) -> Option<GroupElement> {
        match (&self.algebra, &self.automaton) {
            (Algebra::Table(t), _) => t.random_at_distance(rng, n),
            (_, Some(auto)) => auto
                .random_of_length(rng, n as usize)
                .map(|w| GroupElement::from_slice(&w)),
            _ => None,
        }
    }

    /// Human-readable rendering, e.g. `aba^-1`; the identity renders as `1`.
    pub fn format(&self, a: &GroupElement) -> String {
        if a.is_identity() {
            return "1".to_string();
        }
        let single = self
            .generators
            .symbols()
            .iter()
            .all(|s| s.trim_end_matches("^-1").chars().count() == 1);
        let parts: Vec<&str> = a.word().iter().map(|&x| self.generators.label(x)).collect();
        if single {
            parts.concat()
        } else {
            parts.join(" ")
        }
    }

    /// Parses the command-line word grammar: generator labels, each with an
    /// optional suffix `'`, `^-1`, `^{-1}`, `^n` or `^{n}` (n a possibly
    /// negative integer); tokens may be separated by whitespace or
    /// concatenated. `1` denotes the identity.
    pub fn parse_word(&self, text: &str) -> Result<Vec<Letter>> {
        parse_word(&self.generators, text)
    }
}

fn common_prefix(a: &[Letter], b: &[Letter]) -> usize {
    a.iter().zip(b).take_while(|(x, y)| x == y).count()
}

/// Parser behind [`GroupModel::parse_word`].
pub fn parse_word(generators: &GeneratorSet, text: &str) -> Result<Vec<Letter>> {
    let trimmed = text.trim();
    if trimmed == "1" || trimmed.is_empty() {
        return Ok(Vec::new());
    }
    // base labels, longest first for greedy matching
    let mut bases: Vec<(String, Letter)> = generators
        .symbols()
        .iter()
        .enumerate()
        .filter(|(_, s)| !s.ends_with("^-1"))
        .map(|(i, s)| (s.clone(), i as Letter))
        .collect();
    bases.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then(a.0.cmp(&b.0)));

    let chars: Vec<char> = text.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    let err = |pos: usize, msg: &str| Error::Domain(format!("cannot parse word {text:?} at offset {pos}: {msg}"));
    while i < chars.len() {
        if chars[i].is_whitespace() || chars[i] == '*' || chars[i] == '.' {
            i += 1;
            continue;
        }
        let rest: String = chars[i..].iter().collect();
        let (label, letter) = bases
            .iter()
            .find(|(label, _)| rest.starts_with(label.as_str()))
            .ok_or_else(|| err(i, "unknown generator"))?;
        i += label.chars().count();
        let mut power: i64 = 1;
        if i < chars.len() && chars[i] == '\'' {
            power = -1;
            i += 1;
        } else if i < chars.len() && chars[i] == '^' {
            i += 1;
            let braced = i < chars.len() && chars[i] == '{';
            if braced {
                i += 1;
            }
            let start = i;
            if i < chars.len() && chars[i] == '-' {
                i += 1;
            }
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            let digits: String = chars[start..i].iter().collect();
            power = digits.parse().map_err(|_| err(start, "bad exponent"))?;
            if braced {
                if i >= chars.len() || chars[i] != '}' {
                    return Err(err(i, "missing closing brace"));
                }
                i += 1;
            }
        }
        let inverse = generators.inverse(*letter);
        let (x, count) = if power >= 0 {
            (*letter, power as usize)
        } else {
            (inverse, power.unsigned_abs() as usize)
        };
        out.extend(std::iter::repeat_n(x, count));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f2() -> GroupModel {
        GroupModel::free(2, 1).unwrap()
    }

    fn pz() -> GroupModel {
        GroupModel::free_product(&[2, 3], 1).unwrap()
    }

    fn el(model: &GroupModel, text: &str) -> GroupElement {
        model.normalize(&model.parse_word(text).unwrap()).unwrap()
    }

    #[test]
    fn free_reduction() {
        let g = f2();
        assert_eq!(g.format(&el(&g, "a a^-1 b")), "b");
        assert_eq!(g.format(&el(&g, "ab")), "ab");
        let x = el(&g, "ab");
        let y = el(&g, "b^-1 a");
        assert_eq!(g.format(&g.multiply(&x, &y).unwrap()), "aa");
    }

    #[test]
    fn relator_collapse_in_free_product() {
        let g = pz();
        assert!(el(&g, "ttt").is_identity());
        assert!(el(&g, "ss").is_identity());
        assert_eq!(g.format(&el(&g, "tt")), "t^-1");
    }

    #[test]
    fn group_laws() {
        for g in [f2(), pz()] {
            let a = el(&g, if g.generators.len() == 4 { "abba^-1" } else { "stst^-1s" });
            assert!(g.multiply(&a, &g.inverse(&a).unwrap()).unwrap().is_identity());
            assert_eq!(g.multiply(&g.identity(), &a).unwrap(), a);
            assert_eq!(g.distance(&a, &a).unwrap(), 0);
        }
    }

    #[test]
    fn distances() {
        let g = f2();
        assert_eq!(g.distance(&g.identity(), &el(&g, "abab")).unwrap(), 4);
        let p = pz();
        assert_eq!(p.distance(&p.identity(), &el(&p, "st")).unwrap(), 2);
        assert_eq!(p.distance(&el(&p, "st"), &el(&p, "st^-1")).unwrap(), 1);
    }

    #[test]
    fn gromov_products() {
        let g = f2();
        let one = g.identity();
        let a = el(&g, "a");
        let ab = el(&g, "ab");
        let ai = el(&g, "a^-1");
        assert_eq!(g.gromov_product_twice(&one, &a, &ab).unwrap(), 2);
        assert_eq!(g.gromov_product_twice(&one, &ab, &ab).unwrap(), 4);
        assert_eq!(g.gromov_product_twice(&one, &a, &ai).unwrap(), 0);
    }

    #[test]
    fn ball_sizes_match_closed_form() {
        let g = f2();
        assert_eq!(g.identity_ball(2).unwrap().len(), 17);
        assert_eq!(g.identity_ball(0).unwrap().len(), 1);
        assert_eq!(g.identity_ball(7).unwrap().len(), 4373);
        for r in 0..8u32 {
            assert_eq!(g.ball_size(r).unwrap(), 1 + 2 * (3u128.pow(r) - 1));
        }
        let p = pz();
        assert_eq!(p.identity_ball(7).unwrap().len(), 74);
        assert_eq!(p.ball_size(7), Some(74));
    }

    #[test]
    fn ball_cap_is_enforced() {
        let g = f2().with_ball_cap(100);
        assert!(matches!(g.identity_ball(5), Err(Error::BudgetExceeded(_))));
    }

    #[test]
    fn ids_are_shortlex_ranks() {
        let g = f2();
        let ball = g.identity_ball(4).unwrap();
        for (i, x) in ball.iter().enumerate() {
            assert_eq!(g.element_id(x).unwrap(), i as u128);
            assert_eq!(&g.element_from_id(i as u128).unwrap(), x);
        }
        let p = pz();
        let ball = p.identity_ball(9).unwrap();
        for (i, x) in ball.iter().enumerate() {
            assert_eq!(p.element_id(x).unwrap(), i as u128);
        }
    }

    #[test]
    fn custom_generator_order() {
        let order: Vec<String> = ["b", "a", "b^-1", "a^-1"].iter().map(|s| s.to_string()).collect();
        let g = GroupModel::algebraic(GroupKind::Free { rank: 2 }, 1, Some(&order)).unwrap();
        assert_eq!(g.generators().label(0), "b");
        assert_eq!(g.generators().inverse(0), 2);
        let x = el(&g, "ab");
        assert_eq!(g.format(&x), "ab");
        assert_eq!(x.word(), &[1, 0]);
    }

    #[test]
    fn even_order_ties_pick_the_smaller_letter() {
        let g = GroupModel::free_product(&[2, 4], 1).unwrap();
        let x = el(&g, "t^-1 t^-1");
        assert_eq!(g.format(&x), "tt");
        let order: Vec<String> = ["s", "t^-1", "t"].iter().map(|s| s.to_string()).collect();
        let h = GroupModel::algebraic(GroupKind::FreeProduct { orders: vec![2, 4] }, 1, Some(&order)).unwrap();
        assert_eq!(h.format(&el(&h, "tt")), "t^-1t^-1");
    }

    #[test]
    fn parse_variants() {
        let g = f2();
        let expect = el(&g, "a^-1 b");
        for text in ["a'b", "a^{-1}b", "a^-1 b", "A", "b^2 b^-1 a^-1 b^{-1} b"] {
            if text == "A" {
                assert!(g.parse_word(text).is_err());
                continue;
            }
            let w = el(&g, text);
            if text.starts_with("b^2") {
                assert_eq!(g.format(&w), "ba^-1");
            } else {
                assert_eq!(w, expect);
            }
        }
    }

    #[test]
    fn sphere_is_ball_difference() {
        let g = pz();
        let c = el(&g, "st");
        let s = g.sphere(&c, 3).unwrap();
        assert_eq!(s.len() as u128, g.sphere_size(3).unwrap());
        assert!(s.iter().all(|x| g.distance(&c, x).unwrap() == 3));
    }
}
