//! Persistence of the exact memo table.
//!
//! A cache file is tied to the model kind, generator order, δ and
//! construction radii through a SHA-256 key; loading it into a context with
//! a different key is refused.

use std::fs;
use std::path::{Path, PathBuf};

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::metric::MetricContext;

pub const CACHE_FORMAT_VERSION: u32 = 1;
/// Environment variable overriding the cache directory.
pub const CACHE_DIR_ENV: &str = "BOLIC_CACHE_DIR";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CacheFile {
    pub version: u32,
    pub key: String,
    pub kind: String,
    pub generators: Vec<String>,
    pub delta: u32,
    pub star_radius: u32,
    pub step: u32,
    pub threshold: u32,
    /// `[base id, vertex id, numerator, denominator]`
    pub entries: Vec<(String, String, String, String)>,
}

/// Summary of a cache file, for `cache inspect`.
#[derive(Debug, Clone, Serialize)]
pub struct CacheSummary {
    pub path: String,
    pub key: String,
    pub kind: String,
    pub delta: u32,
    pub entries: usize,
}

/// Hex key identifying the memo content of `ctx`.
pub fn cache_key(ctx: &MetricContext) -> String {
    let model = ctx.model();
    let c = ctx.construction();
    let canonical = format!(
        "bolic-memo/{}|{}|{}|{}|{}|{}",
        model.kind(),
        model.generators().symbols().join(","),
        model.delta(),
        c.star_radius,
        c.step,
        c.threshold
    );
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Default location of the cache file for `ctx` inside `dir`.
pub fn cache_path(dir: &Path, ctx: &MetricContext) -> PathBuf {
    dir.join(format!("{}.json", &cache_key(ctx)[..16]))
}

fn require_algebraic(ctx: &MetricContext) -> Result<()> {
    if ctx.model().supports_equivariant_reduction() {
        Ok(())
    } else {
        Err(Error::Configuration("memo caching is only available for free groups and free products".into()))
    }
}

pub fn snapshot(ctx: &MetricContext) -> Result<CacheFile> {
    require_algebraic(ctx)?;
    let model = ctx.model();
    let c = ctx.construction();
    let mut entries = Vec::new();
    for (base, w, value) in ctx.exact_memo_entries() {
        entries.push((
            model.element_id(&base)?.to_string(),
            model.element_id(&w)?.to_string(),
            value.numer().to_string(),
            value.denom().to_string(),
        ));
    }
    Ok(CacheFile {
        version: CACHE_FORMAT_VERSION,
        key: cache_key(ctx),
        kind: model.kind().to_string(),
        generators: model.generators().symbols().to_vec(),
        delta: model.delta(),
        star_radius: c.star_radius,
        step: c.step,
        threshold: c.threshold,
        entries,
    })
}

pub fn save(ctx: &MetricContext, path: &Path) -> Result<usize> {
    let file = snapshot(ctx)?;
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let text = serde_json::to_string(&file).map_err(|e| Error::Io(e.to_string()))?;
    fs::write(path, text)?;
    Ok(file.entries.len())
}

fn read(path: &Path) -> Result<CacheFile> {
    let text = fs::read_to_string(path)?;
    let file: CacheFile = serde_json::from_str(&text).map_err(|e| {
        Error::format(
            format!("{}:{}:{}", path.display(), e.line(), e.column()),
            e.to_string(),
        )
    })?;
    if file.version != CACHE_FORMAT_VERSION {
        return Err(Error::format(
            path.display().to_string(),
            format!("unsupported cache version {}", file.version),
        ));
    }
    Ok(file)
}

/// Loads memo entries into `ctx`; returns how many were read.
pub fn load(ctx: &MetricContext, path: &Path) -> Result<usize> {
    require_algebraic(ctx)?;
    let file = read(path)?;
    let expected = cache_key(ctx);
    if file.key != expected {
        return Err(Error::Configuration(format!(
            "cache {} was written for {} (delta {}), key mismatch",
            path.display(),
            file.kind,
            file.delta
        )));
    }
    let model = ctx.model();
    for (i, (b, w, n, d)) in file.entries.iter().enumerate() {
        let loc = format!("{}: entries[{i}]", path.display());
        let parse_id = |s: &str| s.parse::<u128>().map_err(|_| Error::format(&loc, "bad element id"));
        let base = model.element_from_id(parse_id(b)?)?;
        let vertex = model.element_from_id(parse_id(w)?)?;
        let num: BigInt = n.parse().map_err(|_| Error::format(&loc, "bad numerator"))?;
        let den: BigInt = d.parse().map_err(|_| Error::format(&loc, "bad denominator"))?;
        if den == BigInt::from(0) {
            return Err(Error::format(&loc, "zero denominator"));
        }
        ctx.insert_exact_memo(base, vertex, BigRational::new(num, den));
    }
    Ok(file.entries.len())
}

pub fn inspect(path: &Path) -> Result<CacheSummary> {
    let file = read(path)?;
    Ok(CacheSummary {
        path: path.display().to_string(),
        key: file.key,
        kind: file.kind,
        delta: file.delta,
        entries: file.entries.len(),
    })
}

/// Cache files in `dir`, sorted by name.
pub fn list(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    out.sort();
    Ok(out)
}

/// Removes every cache file in `dir`; returns how many were deleted.
pub fn clear(dir: &Path) -> Result<usize> {
    let files = list(dir)?;
    for f in &files {
        fs::remove_file(f)?;
    }
    Ok(files.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::GroupModel;

    #[test]
    fn round_trip_and_key_check() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = MetricContext::new(GroupModel::free_product(&[2, 3], 1).unwrap()).unwrap();
        let m = ctx.model();
        let g = m.normalize(&m.parse_word("ststststststst").unwrap()).unwrap();
        let r = ctx.r_value(&m.identity(), &g).unwrap();
        let path = cache_path(dir.path(), &ctx);
        let n = save(&ctx, &path).unwrap();
        assert!(n > 0);

        let fresh = MetricContext::new(GroupModel::free_product(&[2, 3], 1).unwrap()).unwrap();
        assert_eq!(load(&fresh, &path).unwrap(), n);
        assert_eq!(fresh.r_value(&m.identity(), &g).unwrap(), r);
        assert_eq!(fresh.stats().exact_nodes, 0);

        let other = MetricContext::new(GroupModel::free_product(&[2, 3], 2).unwrap()).unwrap();
        assert!(matches!(load(&other, &path), Err(Error::Configuration(_))));
        assert_eq!(inspect(&path).unwrap().entries, n);
        assert_eq!(clear(dir.path()).unwrap(), 1);
    }
}
