//! Dataset manifests: a `key=value` file naming the sequence files of a
//! dataset, their train/test split, and the training-split normalization.
//!
//! ```text
//! name=periodic
//! generator=periodic
//! seed=7
//! sequences=20
//! sequence.0000.path=seq_0000.kpseq
//! sequence.0000.split=train
//! norm.computed_over=periodic/train
//! norm.mean=<60 floats>
//! norm.std=<60 floats>
//! ```
//!
//! Sequence paths are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::io::{load_sequences, save_sequences};
use super::{KeypointSequence, NormalizationStats, Split, FRAME_DIM};
use crate::error::{Error, Result};
use crate::kv::{join_floats, KvMap};

pub const MANIFEST_FILE: &str = "manifest.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Relative to the manifest directory.
    pub path: PathBuf,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub name: String,
    pub entries: Vec<ManifestEntry>,
    pub stats: NormalizationStats,
    pub generator: Option<String>,
    pub seed: Option<u64>,
    /// Directory the entry paths are resolved against.
    pub root: PathBuf,
}

/// Seeded 80/20 train/test assignment by sequence index.
pub fn split_assignments(count: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..count).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPLIT_STREAM);
    order.shuffle(&mut rng);
    let n_train = if count <= 1 { count } else { (count * 4) / 5 };
    let mut splits = vec![Split::Test; count];
    for &i in &order[..n_train] {
        splits[i] = Split::Train;
    }
    splits
}

// Keeps the split stream distinct from the generator stream for the same seed.
const SPLIT_STREAM: u64 = 0x5eed_0005_0011_7000;

impl DatasetManifest {
    /// Writes one `.kpseq` file per sequence plus the manifest into `dir`,
    /// assigning splits with [`split_assignments`] and fitting normalization on
    /// the training split.
    pub fn write_dataset(
        dir: impl AsRef<Path>,
        name: &str,
        sequences: Vec<KeypointSequence>,
        generator: Option<&str>,
        seed: Option<u64>,
        split_seed: u64,
    ) -> Result<(Self, Vec<KeypointSequence>)> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        if sequences.is_empty() {
            return Err(Error::EmptyDataset(format!("dataset `{name}` has no sequences")));
        }
        let splits = split_assignments(sequences.len(), split_seed);
        let sequences: Vec<KeypointSequence> = sequences
            .into_iter()
            .zip(&splits)
            .map(|(s, &split)| s.with_split(split))
            .collect();
        let stats = NormalizationStats::fit(
            sequences.iter().filter(|s| s.split == Split::Train),
            format!("{name}/train"),
        )?;

        let mut entries = Vec::with_capacity(sequences.len());
        for (i, seq) in sequences.iter().enumerate() {
            let rel = PathBuf::from(format!("seq_{i:04}.kpseq"));
            save_sequences(std::slice::from_ref(seq), dir.join(&rel))?;
            entries.push(ManifestEntry {
                path: rel,
                split: seq.split,
            });
        }
        let manifest = DatasetManifest {
            name: name.to_string(),
            entries,
            stats,
            generator: generator.map(str::to_string),
            seed,
            root: dir.to_path_buf(),
        };
        manifest.save(dir.join(MANIFEST_FILE))?;
        Ok((manifest, sequences))
    }

    pub fn to_kv(&self) -> KvMap {
        let mut kv = KvMap::new("manifest");
        kv.set("name", &self.name);
        if let Some(g) = &self.generator {
            kv.set("generator", g);
        }
        if let Some(s) = self.seed {
            kv.set("seed", s);
        }
        kv.set("sequences", self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            kv.set(format!("sequence.{i:04}.path"), e.path.display());
            kv.set(format!("sequence.{i:04}.split"), e.split);
        }
        kv.set("norm.computed_over", &self.stats.computed_over);
        kv.set("norm.mean", join_floats(&self.stats.mean));
        kv.set("norm.std", join_floats(&self.stats.std));
        kv
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_kv().save(path)
    }

    /// Parses the manifest and validates that every referenced file exists and
    /// holds exactly one valid sequence.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let kv = KvMap::load(path)?;
        let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let count: usize = kv
            .parse_value("sequences")?
            .ok_or_else(|| parse_error(path, "missing key `sequences`"))?;
        let mut entries = Vec::with_capacity(count);
        for i in 0..count {
            let rel = PathBuf::from(kv.require(&format!("sequence.{i:04}.path"))?);
            let split: Split = kv.require(&format!("sequence.{i:04}.split"))?.parse()?;
            entries.push(ManifestEntry { path: rel, split });
        }
        let mean = kv
            .parse_list::<f64>("norm.mean")?
            .ok_or_else(|| parse_error(path, "missing key `norm.mean`"))?;
        let std = kv
            .parse_list::<f64>("norm.std")?
            .ok_or_else(|| parse_error(path, "missing key `norm.std`"))?;
        let to_vec = |v: Vec<f64>, what: &str| -> Result<[f64; FRAME_DIM]> {
            let n = v.len();
            v.try_into()
                .map_err(|_| parse_error(path, &format!("{what} has {n} entries, expected {FRAME_DIM}")))
        };
        let stats = NormalizationStats {
            mean: to_vec(mean, "norm.mean")?,
            std: to_vec(std, "norm.std")?,
            computed_over: kv.get("norm.computed_over").unwrap_or("").to_string(),
        };
        stats.validate()?;
        let manifest = DatasetManifest {
            name: kv.require("name")?.to_string(),
            entries,
            stats,
            generator: kv.get("generator").map(str::to_string),
            seed: kv.parse_value("seed")?,
            root,
        };
        manifest.load_all()?;
        Ok(manifest)
    }

    pub fn resolve(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    /// Every sequence in manifest order, tagged with its split.
    pub fn load_all(&self) -> Result<Vec<KeypointSequence>> {
        self.entries
            .iter()
            .map(|e| {
                let path = self.resolve(e);
                let mut seqs = load_sequences(&path)?;
                if seqs.len() != 1 {
                    return Err(parse_error(
                        &path,
                        &format!("expected exactly one sequence, found {}", seqs.len()),
                    ));
                }
                Ok(seqs.remove(0).with_split(e.split))
            })
            .collect()
    }

    pub fn load_split(&self, split: Split) -> Result<Vec<KeypointSequence>> {
        Ok(self
            .load_all()?
            .into_iter()
            .filter(|s| s.split == split)
            .collect())
    }
}

fn parse_error(path: &Path, message: &str) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: message.to_string(),
    }
}
