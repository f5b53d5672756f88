use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::metrics::{fkd_features, frame_mse, frechet_from_features, FkdFeature};
use crate::error::{Error, Result};
use crate::keypoint::{DatasetManifest, FrameVector, KeypointSequence, NormalizationStats, Split};
use crate::predictor::{ModelCheckpoint, ModelKind, OraclePredictor, PersistencePredictor, Predictor};
use crate::protocol::{simulate_session, SessionOptions, SessionOutcome};

/// What predicted frames are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EvalMode {
    /// The original keypoints.
    Reconstruction,
    /// The stream as received with every frame transmitted, i.e. after
    /// single-precision quantization and without any prediction.
    Transfer,
}

impl EvalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Reconstruction => "reconstruction",
            EvalMode::Transfer => "transfer",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reconstruction" => Ok(EvalMode::Reconstruction),
            "transfer" => Ok(EvalMode::Transfer),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode `{other}` (expected reconstruction or transfer)"
            ))),
        }
    }
}

/// Identifies one trained model in an experiment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RunKey {
    pub dataset: String,
    pub model: ModelKind,
    pub k_in: usize,
    pub k_out: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub datasets: Vec<String>,
    pub models: Vec<ModelKind>,
    /// `(k_in, k_out)` pairs.
    pub blocks: Vec<(usize, usize)>,
    pub seeds: Vec<u64>,
    pub modes: Vec<EvalMode>,
    pub streaming: bool,
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<()> {
        let empty = |axis: &str| Err(Error::InvalidArgument(format!("experiment grid has no {axis}")));
        if self.datasets.is_empty() {
            return empty("datasets");
        }
        if self.models.is_empty() {
            return empty("models");
        }
        if self.blocks.is_empty() {
            return empty("block sizes");
        }
        if self.seeds.is_empty() {
            return empty("seeds");
        }
        if self.modes.is_empty() {
            return empty("modes");
        }
        Ok(())
    }

    /// Every cell in a fixed order: dataset, mode, block, model, seed.
    pub fn cells(&self) -> Vec<(RunKey, EvalMode)> {
        let mut out = Vec::new();
        for d in &self.datasets {
            for &mode in &self.modes {
                for &(k_in, k_out) in &self.blocks {
                    for &model in &self.models {
                        for &seed in &self.seeds {
                            let key = RunKey {
                                dataset: d.clone(),
                                model,
                                k_in,
                                k_out,
                                seed,
                            };
                            out.push((key, mode));
                        }
                    }
                }
            }
        }
        out
    }
}

/// Test sequences of a dataset with the statistics errors are measured in.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalDataset {
    pub name: String,
    pub stats: NormalizationStats,
    pub test: Vec<KeypointSequence>,
}

impl EvalDataset {
    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Self> {
        Ok(EvalDataset {
            name: manifest.name.clone(),
            stats: manifest.stats.clone(),
            test: manifest.load_split(Split::Test)?,
        })
    }
}

/// Error of one predicted frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub sequence: String,
    pub frame: usize,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricResult {
    pub dataset: String,
    pub mode: EvalMode,
    pub k_in: usize,
    pub k_out: usize,
    pub model: ModelKind,
    pub seed: u64,
    /// Mean over every predicted frame of every test sequence.
    pub mse: f64,
    /// Fréchet keypoint distance over the pooled predicted frames.
    pub fkd: f64,
    pub frames: usize,
    /// Total bytes sent over total bytes of sending everything.
    pub bandwidth_ratio: f64,
    /// Total frames over total frames sent.
    pub savings_factor: f64,
    pub trace: Vec<TracePoint>,
}

/// A cell's metrics together with its individual sessions.
#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    /// `None` when no test sequence is long enough to predict anything.
    pub result: Option<MetricResult>,
    pub sessions: Vec<SessionOutcome>,
}

/// Runs every test sequence of `data` through a session with `predictor`
/// (`None` builds a per-sequence oracle or the persistence baseline).
pub fn run_cell(
    data: &EvalDataset,
    key: &RunKey,
    mode: EvalMode,
    predictor: Option<&dyn Predictor>,
    streaming: bool,
    keep_transcripts: bool,
) -> Result<CellOutcome> {
    if data.test.is_empty() {
        return Err(Error::EmptyDataset(format!("dataset `{}` has no test sequences", data.name)));
    }
    let mut trace = Vec::new();
    let mut pred_features: Vec<FkdFeature> = Vec::new();
    let mut ref_features: Vec<FkdFeature> = Vec::new();
    let (mut bytes, mut baseline, mut total, mut sent) = (0usize, 0usize, 0usize, 0usize);
    let mut sessions = Vec::with_capacity(data.test.len());
    for (i, seq) in data.test.iter().enumerate() {
        let opts = SessionOptions {
            k_in: key.k_in,
            k_out: key.k_out,
            session_id: i as u64,
            streaming,
            keep_transcript: keep_transcripts,
        };
        let oracle;
        let p: &dyn Predictor = match (predictor, key.model) {
            (Some(p), _) => p,
            (None, ModelKind::Oracle) => {
                oracle = OraclePredictor::new(seq.vectors());
                &oracle
            }
            (None, ModelKind::Persistence) => &PersistencePredictor,
            (None, m) => {
                return Err(Error::InvalidArgument(format!("no checkpoint given for {m}")));
            }
        };
        let out = simulate_session(seq, p, &opts, &data.stats)?;
        let r = &out.report;
        bytes += r.bytes_sent;
        baseline += r.bytes_baseline;
        total += r.len;
        sent += r.frames_sent;
        if r.frames_predicted > 0 {
            let reference: Vec<FrameVector> = match mode {
                EvalMode::Reconstruction => seq.vectors(),
                EvalMode::Transfer => seq.vectors().iter().map(|v| v.map(|x| x as f32 as f64)).collect(),
            };
            let norm = |vs: &[FrameVector]| -> Result<Vec<FrameVector>> {
                vs.iter().map(|v| data.stats.normalize(v)).collect()
            };
            let rec = norm(&out.reconstruction.vectors())?;
            let refn = norm(&reference)?;
            let (fr, ff) = (fkd_features(&rec), fkd_features(&refn));
            for e in &r.frame_errors {
                let t = e.frame;
                trace.push(TracePoint {
                    sequence: seq.source_id.clone(),
                    frame: t,
                    mse: frame_mse(&rec[t], &refn[t]),
                });
                pred_features.push(fr[t]);
                ref_features.push(ff[t]);
            }
        }
        sessions.push(out);
    }
    let result = if trace.is_empty() {
        None
    } else {
        let mse = trace.iter().map(|p| p.mse).sum::<f64>() / trace.len() as f64;
        let fkd = frechet_from_features(&pred_features, &ref_features)?;
        Some(MetricResult {
            dataset: data.name.clone(),
            mode,
            k_in: key.k_in,
            k_out: key.k_out,
            model: key.model,
            seed: key.seed,
            mse,
            fkd,
            frames: trace.len(),
            bandwidth_ratio: bytes as f64 / baseline as f64,
            savings_factor: total as f64 / sent as f64,
            trace,
        })
    };
    Ok(CellOutcome { result, sessions })
}

/// [`run_cell`] reduced to its metrics; a cell without predicted frames is
/// an [`Error::EmptyEvaluation`].
pub fn evaluate_cell(
    data: &EvalDataset,
    key: &RunKey,
    mode: EvalMode,
    predictor: Option<&dyn Predictor>,
    streaming: bool,
) -> Result<MetricResult> {
    run_cell(data, key, mode, predictor, streaming, false)?
        .result
        .ok_or(Error::EmptyEvaluation)
}

/// Evaluates every grid cell. Trained models are looked up in `checkpoints`;
/// the oracle and persistence baselines need none. Cells run in parallel on
/// the current rayon pool and come back in [`ExperimentGrid::cells`] order.
pub fn run_experiment(
    grid: &ExperimentGrid,
    datasets: &[EvalDataset],
    checkpoints: &BTreeMap<RunKey, ModelCheckpoint>,
) -> Result<Vec<MetricResult>> {
    grid.validate()?;
    let cells = grid.cells();
    let by_name: BTreeMap<&str, &EvalDataset> = datasets.iter().map(|d| (d.name.as_str(), d)).collect();
    for (key, _) in &cells {
        if !by_name.contains_key(key.dataset.as_str()) {
            return Err(Error::InvalidArgument(format!("dataset `{}` not provided", key.dataset)));
        }
        if key.model.is_trained() && !checkpoints.contains_key(key) {
            return Err(Error::InvalidArgument(format!(
                "missing checkpoint for {} on `{}` (k_in {}, k_out {}, seed {})",
                key.model, key.dataset, key.k_in, key.k_out, key.seed
            )));
        }
    }
    cells
        .par_iter()
        .map(|(key, mode)| {
            let predictor = checkpoints.get(key).map(ModelCheckpoint::predictor);
            evaluate_cell(by_name[key.dataset.as_str()], key, *mode, predictor, grid.streaming)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoint::synth::{synth_periodic, SynthParams};
    use crate::keypoint::KeypointFrame;

    // Rounded to single precision so sent frames cross the wire unchanged.
    fn dataset() -> EvalDataset {
        let mut test = synth_periodic(3, 3, 40, 25.0, &SynthParams::default()).unwrap();
        for s in &mut test {
            for f in &mut s.frames {
                *f = KeypointFrame::unflatten(&f.flatten().map(|x| x as f32 as f64));
            }
        }
        let stats = NormalizationStats::fit(&test, "t").unwrap();
        EvalDataset {
            name: "p".into(),
            stats,
            test,
        }
    }

    fn grid(models: Vec<ModelKind>, seeds: Vec<u64>) -> ExperimentGrid {
        ExperimentGrid {
            datasets: vec!["p".into()],
            models,
            blocks: vec![(5, 5)],
            seeds,
            modes: vec![EvalMode::Reconstruction],
            streaming: false,
        }
    }

    #[test]
    fn oracle_cell_is_exact() {
        let rs = run_experiment(&grid(vec![ModelKind::Oracle], vec![0]), &[dataset()], &BTreeMap::new()).unwrap();
        assert_eq!(rs.len(), 1);
        assert_eq!(rs[0].mse, 0.0);
        assert_eq!(rs[0].fkd, 0.0);
        assert_eq!(rs[0].frames, 3 * 20);
    }

    #[test]
    fn one_row_per_seed() {
        let g = grid(vec![ModelKind::Persistence, ModelKind::Oracle], vec![1, 2]);
        let rs = run_experiment(&g, &[dataset()], &BTreeMap::new()).unwrap();
        assert_eq!(rs.len(), 4);
        assert_eq!(rs.iter().map(|r| r.seed).collect::<Vec<_>>(), [1, 2, 1, 2]);
        assert!(rs[0].mse > 0.0);
    }

    #[test]
    fn cell_mse_is_frame_weighted_session_mean() {
        let data = dataset();
        let key = RunKey {
            dataset: "p".into(),
            model: ModelKind::Persistence,
            k_in: 4,
            k_out: 3,
            seed: 0,
        };
        let r = evaluate_cell(&data, &key, EvalMode::Reconstruction, None, false).unwrap();
        let (mut sum, mut n) = (0.0, 0usize);
        for (i, seq) in data.test.iter().enumerate() {
            let opts = SessionOptions {
                session_id: i as u64,
                ..SessionOptions { k_in: 4, k_out: 3, ..SessionOptions::new(1) }
            };
            let rep = simulate_session(seq, &PersistencePredictor, &opts, &data.stats).unwrap().report;
            sum += rep.mean_mse().unwrap() * rep.frames_predicted as f64;
            n += rep.frames_predicted;
        }
        assert_eq!(r.frames, n);
        assert!((r.mse - sum / n as f64).abs() < 1e-12);
    }

    #[test]
    fn missing_checkpoint_is_an_error() {
        let g = grid(vec![ModelKind::Rnn], vec![0]);
        assert!(run_experiment(&g, &[dataset()], &BTreeMap::new()).is_err());
    }

    #[test]
    fn nothing_predicted_is_empty_evaluation() {
        let mut g = grid(vec![ModelKind::Oracle], vec![0]);
        g.blocks = vec![(30, 30)];
        assert!(matches!(
            run_experiment(&g, &[dataset()], &BTreeMap::new()),
            Err(Error::EmptyEvaluation)
        ));
    }

    #[test]
    fn empty_axis_rejected() {
        let g = grid(vec![], vec![0]);
        assert!(g.validate().is_err());
    }
}
