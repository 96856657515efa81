//! Table models: a group given as an explicit finite Cayley ball.
//!
//! File layout (JSON):
//!
//! ```json
//! {
//!   "version": 1,
//!   "generators": [{"label": "a", "inverse_index": 1}, ...],
//!   "radius": 5,
//!   "elements": [{"id": 0, "word": []}, {"id": 1, "word": [0]}, ...],
//!   "adjacency": [[1, 2, 3, 4], ...]
//! }
//! ```
//!
//! `adjacency[id][s]` is the id of `element·s`, or `-1` when that vertex lies
//! outside the loaded ball. Words are arrays of generator indices. The
//! identity must have id 0 and the empty word.
//!
//! There is no multiplication oracle outside the ball, so every distance is
//! computed by breadth-first search and is only trusted up to the depth where
//! the search first meets the boundary of the ball.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use dashmap::DashMap;
use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{GeneratorSet, GroupElement, GroupModel, Letter};

pub const TABLE_FORMAT_VERSION: u32 = 1;

const NONE: u32 = u32::MAX;
const BFS_CACHE_LIMIT: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableGenerator {
    pub label: String,
    pub inverse_index: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableElement {
    pub id: i64,
    pub word: Vec<i64>,
}

/// On-disk representation of a table model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableFile {
    pub version: u32,
    pub generators: Vec<TableGenerator>,
    pub radius: u32,
    pub elements: Vec<TableElement>,
    pub adjacency: Vec<Vec<i64>>,
}

#[derive(Debug)]
struct Bfs {
    dist: Vec<u32>,
    /// First BFS layer containing a vertex with a neighbour outside the ball.
    first_boundary_layer: u32,
}

impl Bfs {
    /// Distances up to this value are exact.
    fn certified_distance(&self) -> u32 {
        self.first_boundary_layer.saturating_add(1)
    }
}

#[derive(Debug)]
pub(crate) struct TableBall {
    radius: u32,
    n_generators: usize,
    elements: Vec<GroupElement>,
    index: FxHashMap<GroupElement, u32>,
    /// flattened `id * n_generators + s`
    adjacency: Vec<u32>,
    bfs_cache: DashMap<u32, Arc<Bfs>>,
}

impl TableBall {
    pub(crate) fn radius(&self) -> u32 {
        self.radius
    }

    pub(crate) fn len(&self) -> usize {
        self.elements.len()
    }

    pub(crate) fn element(&self, id: u32) -> &GroupElement {
        &self.elements[id as usize]
    }

    pub(crate) fn id_of(&self, g: &GroupElement) -> Result<u32> {
        self.index
            .get(g)
            .copied()
            .ok_or_else(|| Error::OutOfLoadedBall(format!("element {:?} is not in the loaded ball", g.word())))
    }

    pub(crate) fn step(&self, id: u32, x: Letter) -> Result<u32> {
        let next = self.adjacency[id as usize * self.n_generators + x as usize];
        if next == NONE {
            Err(Error::OutOfLoadedBall(format!(
                "generator {x} leads out of the loaded ball from element {id}"
            )))
        } else {
            Ok(next)
        }
    }

    pub(crate) fn trace_from(&self, mut id: u32, word: &[Letter]) -> Result<u32> {
        for &x in word {
            if x as usize >= self.n_generators {
                return Err(Error::Domain(format!("generator index {x} out of range")));
            }
            id = self.step(id, x)?;
        }
        Ok(id)
    }

    fn bfs(&self, source: u32) -> Arc<Bfs> {
        if let Some(b) = self.bfs_cache.get(&source) {
            return b.clone();
        }
        let n = self.elements.len();
        let mut dist = vec![NONE; n];
        let mut first_boundary_layer = NONE;
        let mut queue = VecDeque::new();
        dist[source as usize] = 0;
        queue.push_back(source);
        while let Some(v) = queue.pop_front() {
            let dv = dist[v as usize];
            for s in 0..self.n_generators {
                let w = self.adjacency[v as usize * self.n_generators + s];
                if w == NONE {
                    first_boundary_layer = first_boundary_layer.min(dv);
                    continue;
                }
                if dist[w as usize] == NONE {
                    dist[w as usize] = dv + 1;
                    queue.push_back(w);
                }
            }
        }
        let bfs = Arc::new(Bfs {
            dist,
            first_boundary_layer,
        });
        if self.bfs_cache.len() >= BFS_CACHE_LIMIT {
            self.bfs_cache.clear();
        }
        self.bfs_cache.insert(source, bfs.clone());
        bfs
    }

    /// Exact distance, searching from whichever endpoint certifies it.
    pub(crate) fn distance(&self, a: u32, b: u32) -> Result<u32> {
        for (from, to) in [(a, b), (b, a)] {
            let bfs = self.bfs(from);
            let d = bfs.dist[to as usize];
            if d != NONE && d <= bfs.certified_distance() {
                return Ok(d);
            }
        }
        Err(Error::OutOfLoadedBall(format!(
            "distance between elements {a} and {b} is not certified within the loaded ball"
        )))
    }

    pub(crate) fn ball(&self, center: u32, radius: u32, cap: usize) -> Result<Vec<GroupElement>> {
        let bfs = self.bfs(center);
        if radius > bfs.first_boundary_layer {
            return Err(Error::OutOfLoadedBall(format!(
                "ball of radius {radius} around element {center} leaves the loaded ball"
            )));
        }
        let mut out: Vec<GroupElement> = bfs
            .dist
            .iter()
            .enumerate()
            .filter(|(_, &d)| d <= radius)
            .map(|(i, _)| self.elements[i].clone())
            .collect();
        if out.len() > cap {
            return Err(Error::BudgetExceeded(format!("ball exceeds the cap of {cap}")));
        }
        out.sort();
        Ok(out)
    }

    pub(crate) fn random_at_distance<R: Rng + ?Sized>(&self, rng: &mut R, n: u32) -> Option<GroupElement> {
        let bfs = self.bfs(0);
        if n > bfs.certified_distance() {
            return None;
        }
        let candidates: Vec<usize> = (0..self.elements.len()).filter(|&i| bfs.dist[i] == n).collect();
        if candidates.is_empty() {
            return None;
        }
        Some(self.elements[candidates[rng.gen_range(0..candidates.len())]].clone())
    }
}

impl TableFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format(format!("line {} column {}", e.line(), e.column()), e.to_string()))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| Error::format("table", e.to_string()))
    }

    /// Validates the file and builds a model with the given fineness constant.
    pub fn into_model(self, delta: u32) -> Result<GroupModel> {
        if self.version != TABLE_FORMAT_VERSION {
            return Err(Error::format("version", format!("unsupported version {}", self.version)));
        }
        let ng = self.generators.len();
        if ng > Letter::MAX as usize {
            return Err(Error::format("generators", "too many generators"));
        }
        let mut inverse_of = Vec::with_capacity(ng);
        for (i, g) in self.generators.iter().enumerate() {
            if g.inverse_index < 0 || g.inverse_index as usize >= ng {
                return Err(Error::format(format!("generators[{i}].inverse_index"), "index out of range"));
            }
            inverse_of.push(g.inverse_index as Letter);
        }
        let symbols = self.generators.iter().map(|g| g.label.clone()).collect();
        let generators =
            GeneratorSet::new(symbols, inverse_of.clone()).map_err(|e| Error::format("generators", e.to_string()))?;

        let n = self.elements.len();
        if n == 0 {
            return Err(Error::format("elements", "missing identity"));
        }
        let mut words: Vec<Option<GroupElement>> = vec![None; n];
        for (pos, e) in self.elements.iter().enumerate() {
            let loc = format!("elements[{pos}]");
            if e.id < 0 || e.id as usize >= n {
                return Err(Error::format(loc, format!("id {} outside 0..{n}", e.id)));
            }
            if words[e.id as usize].is_some() {
                return Err(Error::format(loc, format!("duplicate id {}", e.id)));
            }
            let mut letters = Vec::with_capacity(e.word.len());
            for &x in &e.word {
                if x < 0 || x as usize >= ng {
                    return Err(Error::format(loc, format!("generator index {x} out of range")));
                }
                letters.push(x as Letter);
            }
            words[e.id as usize] = Some(GroupElement::from_slice(&letters));
        }
        let elements: Vec<GroupElement> = words.into_iter().map(|w| w.expect("ids are dense")).collect();
        if !elements[0].is_identity() {
            return Err(Error::format("elements", "id 0 must be the identity with the empty word"));
        }
        let mut index = FxHashMap::default();
        for (id, w) in elements.iter().enumerate() {
            if index.insert(w.clone(), id as u32).is_some() {
                return Err(Error::format(format!("elements id {id}"), "word appears twice"));
            }
        }

        if self.adjacency.len() != n {
            return Err(Error::format("adjacency", format!("expected {n} rows, found {}", self.adjacency.len())));
        }
        let mut adjacency = vec![NONE; n * ng];
        for (id, row) in self.adjacency.iter().enumerate() {
            if row.len() != ng {
                return Err(Error::format(format!("adjacency[{id}]"), format!("expected {ng} entries")));
            }
            for (s, &t) in row.iter().enumerate() {
                if t == -1 {
                    continue;
                }
                if t < 0 || t as usize >= n {
                    return Err(Error::format(format!("adjacency[{id}][{s}]"), format!("neighbour {t} out of range")));
                }
                adjacency[id * ng + s] = t as u32;
            }
        }
        for id in 0..n {
            for s in 0..ng {
                let t = adjacency[id * ng + s];
                if t == NONE {
                    continue;
                }
                let back = adjacency[t as usize * ng + inverse_of[s] as usize];
                if back != id as u32 {
                    return Err(Error::format(
                        format!("adjacency[{id}][{s}]"),
                        format!("edge to {t} is not matched by the inverse generator"),
                    ));
                }
            }
        }

        let table = TableBall {
            radius: self.radius,
            n_generators: ng,
            elements,
            index,
            adjacency,
            bfs_cache: DashMap::new(),
        };
        let from_identity = table.bfs(0);
        for id in 0..n {
            let d = from_identity.dist[id];
            if d == NONE {
                return Err(Error::format(format!("elements id {id}"), "not connected to the identity"));
            }
            if d > self.radius {
                return Err(Error::format(
                    format!("elements id {id}"),
                    format!("at distance {d}, beyond the declared radius {}", self.radius),
                ));
            }
            if d < self.radius && (0..ng).any(|s| table.adjacency[id * ng + s] == NONE) {
                return Err(Error::format(
                    format!("adjacency[{id}]"),
                    format!("element at distance {d} < radius has a missing neighbour"),
                ));
            }
            let traced = table.trace_from(0, table.elements[id].word());
            if traced != Ok(id as u32) {
                return Err(Error::format(
                    format!("elements id {id}"),
                    "word does not trace to this element",
                ));
            }
        }
        GroupModel::from_table_ball(generators, delta, table)
    }
}

/// Loads and validates a table model.
pub fn load_table_model(path: &Path, delta: u32) -> Result<GroupModel> {
    let text = std::fs::read_to_string(path)?;
    TableFile::from_json(&text)?.into_model(delta)
}

/// Exports `B(1, radius)` of a model as a table file; ids are ShortLex ranks.
pub fn export_ball(model: &GroupModel, radius: u32) -> Result<TableFile> {
    let ball = model.identity_ball(radius)?;
    let index: FxHashMap<&GroupElement, usize> = ball.iter().enumerate().map(|(i, g)| (g, i)).collect();
    let gens = model.generators();
    let generators = (0..gens.len())
        .map(|i| TableGenerator {
            label: gens.label(i as Letter).to_string(),
            inverse_index: gens.inverse(i as Letter) as i64,
        })
        .collect();
    let elements = ball
        .iter()
        .enumerate()
        .map(|(i, g)| TableElement {
            id: i as i64,
            word: g.word().iter().map(|&x| x as i64).collect(),
        })
        .collect();
    let adjacency = ball
        .iter()
        .map(|g| {
            model.neighbors(g).map(|ns| {
                ns.iter()
                    .map(|n| index.get(n).map_or(-1, |&i| i as i64))
                    .collect::<Vec<i64>>()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TableFile {
        version: TABLE_FORMAT_VERSION,
        generators,
        radius,
        elements,
        adjacency,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_group() {
        let file = TableFile {
            version: 1,
            generators: vec![],
            radius: 0,
            elements: vec![TableElement { id: 0, word: vec![] }],
            adjacency: vec![vec![]],
        };
        let model = file.into_model(1).unwrap();
        assert_eq!(model.identity_ball(3).unwrap().len(), 1);
    }

    #[test]
    fn round_trip_free_group_distances() {
        let f2 = GroupModel::free(2, 1).unwrap();
        let file = export_ball(&f2, 5).unwrap();
        let text = file.to_json().unwrap();
        let table = TableFile::from_json(&text).unwrap().into_model(1).unwrap();
        let abab = table.normalize(&[0, 2, 0, 2]).unwrap();
        assert_eq!(table.distance(&table.identity(), &abab).unwrap(), 4);
        let ball = f2.identity_ball(2).unwrap();
        for x in ball.iter() {
            for y in ball.iter() {
                assert_eq!(table.distance(x, y).unwrap(), f2.distance(x, y).unwrap());
            }
        }
    }

    #[test]
    fn neighbour_past_radius_is_rejected() {
        let f2 = GroupModel::free(2, 1).unwrap();
        let mut file = export_ball(&f2, 2).unwrap();
        file.radius = 1;
        assert!(matches!(file.into_model(1), Err(Error::Format { .. })));
    }

    #[test]
    fn asymmetric_adjacency_is_rejected() {
        let f2 = GroupModel::free(2, 1).unwrap();
        let mut file = export_ball(&f2, 2).unwrap();
        let a = file.adjacency[0][0];
        file.adjacency[a as usize][1] = 3;
        let err = file.into_model(1).unwrap_err();
        assert!(matches!(err, Error::Format { .. }), "{err}");
    }

    #[test]
    fn missing_identity_is_rejected() {
        let f2 = GroupModel::free(2, 1).unwrap();
        let mut file = export_ball(&f2, 1).unwrap();
        file.elements[0].word = vec![0];
        file.elements[1].word = vec![];
        assert!(file.into_model(1).is_err());
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = TableFile::from_json("{\"version\": 1,\n \"generators\": [").unwrap_err();
        match err {
            Error::Format { location, .. } => assert!(location.starts_with("line 2")),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn leaving_the_ball_is_an_error() {
        let f2 = GroupModel::free(2, 1).unwrap();
        let table = export_ball(&f2, 3).unwrap().into_model(1).unwrap();
        assert!(matches!(table.normalize(&[0, 0, 0, 0]), Err(Error::OutOfLoadedBall(_))));
        let a3 = table.normalize(&[0, 0, 0]).unwrap();
        assert!(matches!(table.ball(&a3, 1), Err(Error::OutOfLoadedBall(_))));
        assert_eq!(table.ball(&table.identity(), 3).unwrap().len(), 1 + 4 + 12 + 36);
    }
}
