//! Run configuration: defaults from an optional JSON file, overridden by flags.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use bolic::cache::CACHE_DIR_ENV;
use bolic::constants::{parse_rational, ConstantsRecord};
use bolic::metric::MetricContext;
use bolic::table::load_table_model;
use bolic::{Error, GroupKind, GroupModel, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Arith {
    #[default]
    Exact,
    Float,
}

/// Everything a run depends on. Fields left unset in both the file and the
/// flags fall back to the defaults in [`RunConfig::resolve`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_order: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_ball: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arith: Option<Arith>,
    /// `empirical`, `formula`, or a rational value
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2_margin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
    /// not embedded in outputs: results do not depend on it
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
}

/// The flag values shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct CommonArgs {
    /// Group: `free:<rank>`, `fp:<order>,<order>,...` or `table:<path>`
    #[arg(long)]
    pub group: Option<String>,
    /// Generator order as comma-separated labels, smallest first
    #[arg(long, value_delimiter = ',')]
    pub gen_order: Option<Vec<String>>,
    /// Fineness constant δ (positive integer, default 1)
    #[arg(long)]
    pub delta: Option<u32>,
    /// Hard cap on enumerated ball sizes
    #[arg(long)]
    pub max_ball: Option<usize>,
    #[arg(long, value_enum)]
    pub arith: Option<Arith>,
    /// C2 value (rational such as `3/2`), or `empirical` / `formula` when estimating
    #[arg(long)]
    pub c2: Option<String>,
    /// Constants record JSON written by `estimate`
    #[arg(long)]
    pub constants: Option<PathBuf>,
    /// Memo cache directory (default: $BOLIC_CACHE_DIR, else no caching)
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| {
            Error::format(format!("{}:{}:{}", path.display(), e.line(), e.column()), e.to_string())
        })
    }

    pub fn apply(&mut self, a: &CommonArgs) {
        fn set<T: Clone>(slot: &mut Option<T>, v: &Option<T>) {
            if v.is_some() {
                *slot = v.clone();
            }
        }
        set(&mut self.group, &a.group);
        set(&mut self.generator_order, &a.gen_order);
        set(&mut self.delta, &a.delta);
        set(&mut self.max_ball, &a.max_ball);
        set(&mut self.arith, &a.arith);
        set(&mut self.c2, &a.c2);
        set(&mut self.constants, &a.constants);
        set(&mut self.cache_dir, &a.cache_dir);
    }

    /// Fills defaults and validates; called before any computation.
    pub fn resolve(mut self) -> Result<Self> {
        if self.group.is_none() {
            return Err(Error::Configuration("no group given (use --group)".into()));
        }
        self.delta.get_or_insert(1);
        self.arith.get_or_insert(Arith::Exact);
        if self.delta == Some(0) {
            return Err(Error::Configuration("delta must be a positive integer".into()));
        }
        if self.cache_dir.is_none() {
            if let Some(dir) = std::env::var_os(CACHE_DIR_ENV) {
                self.cache_dir = Some(PathBuf::from(dir));
            }
        }
        if let Some(c2) = &self.c2 {
            if c2 != "empirical" && c2 != "formula" {
                parse_rational(c2)?;
            }
        }
        if let Some(m) = &self.c2_margin {
            parse_rational(m)?;
        }
        Ok(self)
    }

    pub fn delta(&self) -> u32 {
        self.delta.unwrap_or(1)
    }

    pub fn arith(&self) -> Arith {
        self.arith.unwrap_or_default()
    }

    /// A user-supplied C2 value, if any.
    pub fn user_c2(&self) -> Result<Option<num_rational::BigRational>> {
        match self.c2.as_deref() {
            None | Some("empirical") | Some("formula") => Ok(None),
            Some(v) => parse_rational(v).map(Some),
        }
    }

    pub fn model(&self) -> Result<GroupModel> {
        let group = self.group.as_deref().unwrap_or_default();
        let model = if let Some(path) = group.strip_prefix("table:") {
            if self.generator_order.is_some() {
                return Err(Error::Configuration("a table model fixes its own generator order".into()));
            }
            load_table_model(Path::new(path), self.delta())?
        } else {
            let kind: GroupKind = group.parse()?;
            GroupModel::algebraic(kind, self.delta(), self.generator_order.as_deref())?
        };
        Ok(match self.max_ball {
            Some(cap) => model.with_ball_cap(cap),
            None => model,
        })
    }

    /// Context with C2 taken from `--c2` or the constants record, when given.
    pub fn context(&self) -> Result<(MetricContext, Option<ConstantsRecord>)> {
        let mut ctx = MetricContext::from_arc(Arc::new(self.model()?))?;
        let rec = match &self.constants {
            Some(path) => Some(ConstantsRecord::load(path)?),
            None => None,
        };
        if let Some(rec) = &rec {
            if rec.delta != self.delta() {
                return Err(Error::Configuration(format!(
                    "constants record was estimated with delta {}, run uses {}",
                    rec.delta,
                    self.delta()
                )));
            }
            rec.apply_c2(&mut ctx)?;
        }
        if let Some(c2) = self.user_c2()? {
            ctx.set_c2(c2)?;
        }
        Ok((ctx, rec))
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap_or(serde_json::Value::Null)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_the_file() {
        let mut cfg: RunConfig = serde_json::from_str(r#"{"group":"fp:2,3","delta":2,"seed":4}"#).unwrap();
        cfg.apply(&CommonArgs { delta: Some(1), ..Default::default() });
        let cfg = cfg.resolve().unwrap();
        assert_eq!(cfg.group.as_deref(), Some("fp:2,3"));
        assert_eq!(cfg.delta(), 1);
        assert_eq!(cfg.seed, Some(4));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"gropu":"free:2"}"#).is_err());
        let cfg = RunConfig { group: Some("free:2".into()), c2: Some("x/0".into()), ..Default::default() };
        assert!(matches!(cfg.resolve(), Err(Error::Configuration(_)) | Err(Error::Domain(_))));
    }
}
