use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::EvalMode;
use crate::kv::KvMap;
use crate::predictor::ModelKind;

/// Settings of one command: a `key=value` config file overlaid with
/// command-line overrides. Relative paths are resolved against the working
/// directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    kv: KvMap,
    pub out: PathBuf,
}

/// Keys that name an input which must exist when the config is resolved.
const PATH_KEYS: [&str; 3] = ["manifest", "checkpoint", "results"];

impl RunConfig {
    /// Loads `file` (if any) and applies `overrides` on top. `out` falls back
    /// to the `out` key, then to `out/`.
    pub fn resolve(file: Option<&Path>, overrides: &KvMap) -> Result<Self> {
        let mut kv = match file {
            Some(p) => KvMap::load(p)?,
            None => KvMap::new("command line"),
        };
        kv.merge(overrides);
        let out = PathBuf::from(kv.get("out").unwrap_or("out"));
        kv.set("out", out.display());
        for key in PATH_KEYS {
            if let Some(p) = kv.get(key) {
                if !Path::new(p).exists() {
                    return Err(Error::InvalidArgument(format!("{key} path `{p}` does not exist")));
                }
            }
        }
        let cfg = RunConfig { kv, out };
        cfg.seeds()?;
        Ok(cfg)
    }

    pub fn from_kv(kv: KvMap) -> Result<Self> {
        let file: Option<&Path> = None;
        Self::resolve(file, &kv)
    }

    pub fn kv(&self) -> &KvMap {
        &self.kv
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.kv.get(key)
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        self.kv.parse_or(key, default)
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.kv
            .get(key)
            .map(PathBuf::from)
            .ok_or_else(|| Error::InvalidArgument(format!("missing required setting `{key}`")))
    }

    /// `seeds` (a list), else `seed`, else `[0]`. Never empty.
    pub fn seeds(&self) -> Result<Vec<u64>> {
        let seeds = match self.kv.parse_list::<u64>("seeds")? {
            Some(s) => s,
            None => vec![self.kv.parse_or("seed", 0u64)?],
        };
        if seeds.is_empty() {
            return Err(Error::InvalidArgument("seed list is empty".into()));
        }
        Ok(seeds)
    }

    /// Explicit block sizes: `k_in`/`k_out` (each defaulting to `k`), or a
    /// list under `k`. `None` when nothing is configured.
    pub fn blocks(&self) -> Result<Option<Vec<(usize, usize)>>> {
        let k_in: Option<usize> = self.kv.parse_value("k_in")?;
        let k_out: Option<usize> = self.kv.parse_value("k_out")?;
        let ks = self.kv.parse_list::<usize>("k")?;
        let blocks = match (k_in, k_out, ks) {
            (None, None, None) => return Ok(None),
            (None, None, Some(ks)) => ks.into_iter().map(|k| (k, k)).collect(),
            (i, o, ks) => {
                let k = match ks.as_deref() {
                    Some([k]) => Some(*k),
                    Some(_) => {
                        return Err(Error::InvalidArgument(
                            "a list of k cannot be combined with k_in/k_out".into(),
                        ))
                    }
                    None => None,
                };
                let pick = |v: Option<usize>, name: &str| {
                    v.or(k).ok_or_else(|| Error::InvalidArgument(format!("{name} needs a value")))
                };
                vec![(pick(i, "k_in")?, pick(o, "k_out")?)]
            }
        };
        if blocks.is_empty() || blocks.iter().any(|&(i, o)| i == 0 || o == 0) {
            return Err(Error::InvalidArgument("block sizes must be positive".into()));
        }
        Ok(Some(blocks))
    }

    pub fn model(&self) -> Result<Option<ModelKind>> {
        self.kv.get("model").map(str::parse).transpose()
    }

    pub fn modes(&self) -> Result<Vec<EvalMode>> {
        Ok(self
            .kv
            .parse_list::<EvalMode>("mode")?
            .unwrap_or_else(|| vec![EvalMode::Reconstruction]))
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        self.kv.parse_or(key, false)
    }

    /// Writes the resolved settings as `<out>/<command>.config`.
    pub fn write_resolved(&self, command: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))?;
        let path = self.out.join(format!("{command}.config"));
        self.kv.save(&path)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    Periodic,
    Switching,
    /// Motionless poses: every sequence is constant.
    Static,
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorKind::Periodic => "periodic",
            GeneratorKind::Switching => "switching",
            GeneratorKind::Static => "static",
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "periodic" => Ok(GeneratorKind::Periodic),
            "switching" => Ok(GeneratorKind::Switching),
            "static" => Ok(GeneratorKind::Static),
            other => Err(Error::InvalidArgument(format!(
                "unknown dataset kind `{other}` (expected periodic, switching or static)"
            ))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(text: &str) -> Result<RunConfig> {
        RunConfig::from_kv(KvMap::parse(text, "t").unwrap())
    }

    #[test]
    fn overrides_win_over_file() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        std::fs::write(&file, "seed=3\nsteps=10\n").unwrap();
        let mut o = KvMap::new("flags");
        o.set("steps", 20);
        let c = RunConfig::resolve(Some(&file), &o).unwrap();
        assert_eq!(c.get("steps"), Some("20"));
        assert_eq!(c.seeds().unwrap(), [3]);
        assert_eq!(c.out, PathBuf::from("out"));
    }

    #[test]
    fn seed_lists() {
        assert_eq!(cfg("").unwrap().seeds().unwrap(), [0]);
        assert_eq!(cfg("seeds=1,2,3").unwrap().seeds().unwrap(), [1, 2, 3]);
        assert!(cfg("seeds=").is_err());
    }

    #[test]
    fn block_settings() {
        assert_eq!(cfg("").unwrap().blocks().unwrap(), None);
        assert_eq!(cfg("k=5,6").unwrap().blocks().unwrap(), Some(vec![(5, 5), (6, 6)]));
        assert_eq!(cfg("k=4\nk_out=2").unwrap().blocks().unwrap(), Some(vec![(4, 2)]));
        assert!(cfg("k=0").unwrap().blocks().is_err());
        assert!(cfg("k=3,4\nk_in=2").unwrap().blocks().is_err());
    }

    #[test]
    fn missing_input_paths_rejected() {
        assert!(cfg("manifest=/definitely/not/here").is_err());
    }

    #[test]
    fn kinds_parse() {
        assert_eq!(cfg("model=VRNN").unwrap().model().unwrap(), Some(ModelKind::Vrnn));
        assert!(cfg("model=lstm").unwrap().model().is_err());
        assert!("noise".parse::<GeneratorKind>().is_err());
    }
}
