//! Recognition pipeline: feature extraction, network classification,
//! nearest-neighbour cross-check against two galleries, the
//! authenticate-before-recognize gate, model files and evaluation.
//!
//! This layer works in `f64` throughout.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::authenticator::{authenticate, DetectorConfig, Label, Verdict};
use crate::error::{Error, Result};
use crate::features::{dct_compress, pca_fit, pca_project, FeatureVector, PcaModel};
use crate::neural::{argmax, forward, mlp_init, one_hot, train, Mlp, StopReason, TrainConfig, TrainingCurve};
use crate::plot::sig9;
use crate::preprocess::{preprocess, PreprocConfig, Rect};
use crate::raster::{load_image, write_atomic, Raster};
use crate::synth::FaceCorpus;

/// Current model file format version.
pub const MODEL_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"VFMODEL\0";
/// Upper bound on retained principal components.
pub const MAX_COMPONENTS: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct GalleryEntry {
    pub label: String,
    pub feature: FeatureVector<f64>,
    pub source_path: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gallery {
    pub name: String,
    pub entries: Vec<GalleryEntry>,
}

impl Gallery {
    pub fn new(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            entries: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.entries.first().map(|e| e.feature.dim())
    }

    pub fn enroll(
        &mut self,
        label: impl Into<String>,
        feature: FeatureVector<f64>,
        source_path: impl Into<String>,
    ) -> Result<()> {
        let label = label.into();
        if label.is_empty() {
            return Err(Error::InvalidArgument("gallery labels must be nonempty".into()));
        }
        if let Some(d) = self.dim() {
            if d != feature.dim() {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    actual: feature.dim(),
                });
            }
        }
        self.entries.push(GalleryEntry {
            label,
            feature,
            source_path: source_path.into(),
        });
        Ok(())
    }
}

/// Enrollment gallery plus a validation gallery used as a cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct DualDatabase {
    pub primary: Gallery,
    pub secondary: Gallery,
}

/// Closest gallery entry by Euclidean distance; ties go to the lowest index.
pub fn euclidean_match(v: &FeatureVector<f64>, gallery: &Gallery) -> Result<(String, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, e) in gallery.entries.iter().enumerate() {
        if e.feature.dim() != v.dim() {
            return Err(Error::DimensionMismatch {
                expected: e.feature.dim(),
                actual: v.dim(),
            });
        }
        let d = v.distance(&e.feature);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    let (i, d) = best.ok_or(Error::Empty("gallery"))?;
    Ok((gallery.entries[i].label.clone(), d))
}

/// One labelled image with an optional face rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImage {
    pub image: Raster<f64>,
    pub label: String,
    pub region: Option<Rect>,
    pub source: String,
}

/// One manifest row: `path,label,x0,y0,w,h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
    pub region: Option<Rect>,
}

/// Parses manifest text. A leading `path,...` header, blank lines and `#`
/// comments are skipped. The four rectangle fields may be omitted or left
/// empty to use the whole image. Relative paths are joined onto `base`.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || (out.is_empty() && line.starts_with("path,")) {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let err = |msg: &str| Error::Manifest {
            line: line_no,
            msg: msg.to_string(),
        };
        if fields.len() != 2 && fields.len() != 6 {
            return Err(err("expected 2 or 6 comma-separated fields"));
        }
        if fields[0].is_empty() {
            return Err(err("empty path"));
        }
        if fields[1].is_empty() {
            return Err(err("empty label"));
        }
        let region = if fields.len() == 6 && fields[2..].iter().any(|f| !f.is_empty()) {
            let mut n = [0usize; 4];
            for (slot, f) in n.iter_mut().zip(&fields[2..]) {
                *slot = f.parse().map_err(|_| err("rectangle fields must be integers"))?;
            }
            if n[2] == 0 || n[3] == 0 {
                return Err(err("rectangle must have positive size"));
            }
            Some(Rect::new(n[0], n[1], n[2], n[3]))
        } else {
            None
        };
        let path = Path::new(fields[0]);
        out.push(ManifestEntry {
            path: if path.is_absolute() {
                path.to_path_buf()
            } else {
                base.join(path)
            },
            label: fields[1].to_string(),
            region,
        });
    }
    Ok(out)
}

/// Reads a manifest file and every image it lists.
pub fn load_manifest(path: &Path) -> Result<Vec<LabeledImage>> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base)?
        .into_iter()
        .map(|e| {
            Ok(LabeledImage {
                image: load_image(&e.path)?,
                label: e.label,
                region: e.region,
                source: e.path.display().to_string(),
            })
        })
        .collect()
}

/// Manifest text for a list of entries, with header.
pub fn manifest_csv(entries: &[ManifestEntry]) -> String {
    let mut out = String::from("path,label,x0,y0,w,h\n");
    for e in entries {
        match e.region {
            Some(r) => out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.path.display(),
                e.label,
                r.x0,
                r.y0,
                r.width,
                r.height
            )),
            None => out.push_str(&format!("{},{},,,,\n", e.path.display(), e.label)),
        }
    }
    out
}

/// Everything needed to train a pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub preproc: PreprocConfig,
    pub dct_keep: usize,
    /// Retained components; `None` means `min(count - 1, 40)`.
    pub pca_components: Option<usize>,
    pub hidden: usize,
    pub train: TrainConfig,
    pub detector: DetectorConfig<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            preproc: PreprocConfig::default(),
            dct_keep: 8,
            pca_components: None,
            hidden: 20,
            train: TrainConfig::default(),
            detector: DetectorConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.preproc.validate()?;
        self.train.validate()?;
        self.detector.validate()?;
        let (tw, th) = self.preproc.target_size;
        if self.dct_keep == 0 || self.dct_keep > tw.min(th) {
            return Err(Error::InvalidArgument(format!(
                "dct_keep must lie in 1..={}",
                tw.min(th)
            )));
        }
        if self.hidden == 0 {
            return Err(Error::InvalidArgument("hidden size must be positive".into()));
        }
        if self.pca_components == Some(0) {
            return Err(Error::InvalidArgument("pca components must be positive".into()));
        }
        Ok(())
    }
}

/// A trained recognizer.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineModel {
    pub preproc: PreprocConfig,
    pub dct_keep: usize,
    pub pca: PcaModel<f64>,
    /// Multiplies PCA coefficients before they reach the network.
    pub feature_scale: f64,
    pub net: Mlp<f64>,
    /// Class names in network output order.
    pub labels: Vec<String>,
    pub dual: DualDatabase,
    pub detector: DetectorConfig<f64>,
}

/// Preprocessed, DCT-compressed vector ahead of PCA.
pub fn dct_features(
    image: &Raster<f64>,
    region: Option<Rect>,
    preproc: &PreprocConfig,
    keep: usize,
) -> Result<FeatureVector<f64>> {
    dct_compress(&preprocess(image, preproc, region)?, keep)
}

impl PipelineModel {
    pub fn version(&self) -> u32 {
        MODEL_VERSION
    }

    pub fn class_count(&self) -> usize {
        self.labels.len()
    }

    /// Full feature chain: preprocess, DCT, PCA projection, scaling.
    pub fn extract_features(&self, image: &Raster<f64>, region: Option<Rect>) -> Result<FeatureVector<f64>> {
        let v = dct_features(image, region, &self.preproc, self.dct_keep)?;
        Ok(pca_project(&self.pca, &v)?.scaled(self.feature_scale))
    }

    /// Network outputs for a feature vector.
    pub fn classify(&self, feature: &FeatureVector<f64>) -> Result<(usize, f64)> {
        let y = forward(&self.net, feature)?;
        let k = argmax(&y);
        Ok((k, y.values[k]))
    }

    fn check(&self) -> Result<()> {
        if self.net.input_dim() != self.pca.m() {
            return Err(Error::CorruptModel(format!(
                "network input {} does not match {} components",
                self.net.input_dim(),
                self.pca.m()
            )));
        }
        if self.net.output_dim() != self.labels.len() {
            return Err(Error::CorruptModel(format!(
                "network output {} does not match {} labels",
                self.net.output_dim(),
                self.labels.len()
            )));
        }
        for g in [&self.dual.primary, &self.dual.secondary] {
            if g.dim().is_some_and(|d| d != self.pca.m()) {
                return Err(Error::CorruptModel(format!("gallery {} has the wrong dimension", g.name)));
            }
        }
        Ok(())
    }
}

/// Fits PCA, trains the network and enrolls both galleries.
///
/// Without a validation set the secondary gallery holds one centroid per
/// class. Training that exhausts its epoch budget is an error carrying the
/// curve.
pub fn train_pipeline(
    training: &[LabeledImage],
    validation: Option<&[LabeledImage]>,
    config: &PipelineConfig,
) -> Result<(PipelineModel, TrainingCurve)> {
    config.validate()?;
    if training.is_empty() {
        return Err(Error::Empty("training manifest"));
    }
    let labels: Vec<String> = training
        .iter()
        .map(|s| s.label.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if labels.len() < 2 {
        return Err(Error::NotEnoughClasses(labels.len()));
    }
    let raw: Vec<FeatureVector<f64>> = training
        .iter()
        .map(|s| dct_features(&s.image, s.region, &config.preproc, config.dct_keep))
        .collect::<Result<_>>()?;
    let dim = raw[0].dim();
    let max_m = (raw.len() - 1).min(dim).min(MAX_COMPONENTS);
    let m = config.pca_components.unwrap_or(max_m).min(raw.len() - 1).min(dim);
    let pca = pca_fit(&raw, m)?;
    let feature_scale = match pca.eigenvalues.first() {
        Some(&l) if l > 0.0 => 1.0 / l.sqrt(),
        _ => 1.0,
    };
    let feats: Vec<FeatureVector<f64>> = raw
        .iter()
        .map(|v| Ok(pca_project(&pca, v)?.scaled(feature_scale)))
        .collect::<Result<_>>()?;
    let class_of = |l: &str| labels.binary_search_by(|x| x.as_str().cmp(l)).ok();
    let targets: Vec<FeatureVector<f64>> = training
        .iter()
        .map(|s| one_hot(class_of(&s.label).expect("label collected above"), labels.len()))
        .collect();

    let mut net = mlp_init([m, config.hidden, labels.len()], config.train.seed)?;
    let curve = train(&mut net, &feats, &targets, &config.train)?;
    if curve.stop_reason != StopReason::GoalReached {
        return Err(Error::TrainingFailed {
            epochs: curve.epochs(),
            final_mse: curve.final_mse(),
            goal: config.train.error_goal,
            curve: curve.mse,
        });
    }

    let mut primary = Gallery::new("primary");
    for (s, f) in training.iter().zip(&feats) {
        primary.enroll(s.label.clone(), f.clone(), s.source.clone())?;
    }
    let mut model = PipelineModel {
        preproc: config.preproc,
        dct_keep: config.dct_keep,
        pca,
        feature_scale,
        net,
        labels,
        dual: DualDatabase {
            primary,
            secondary: Gallery::new("secondary"),
        },
        detector: config.detector.clone(),
    };
    let mut secondary = Gallery::new("secondary");
    match validation {
        Some(items) if !items.is_empty() => {
            for s in items {
                secondary.enroll(s.label.clone(), model.extract_features(&s.image, s.region)?, s.source.clone())?;
            }
        }
        _ => {
            for label in &model.labels {
                let members: Vec<&FeatureVector<f64>> = model
                    .dual
                    .primary
                    .entries
                    .iter()
                    .filter(|e| &e.label == label)
                    .map(|e| &e.feature)
                    .collect();
                let mut c = FeatureVector::zeros(m);
                for f in &members {
                    for (a, b) in c.values.iter_mut().zip(&f.values) {
                        *a += b;
                    }
                }
                secondary.enroll(label.clone(), c.scaled(1.0 / members.len() as f64), "centroid")?;
            }
        }
    }
    model.dual.secondary = secondary;
    Ok((model, curve))
}

/// Gate outcome attached to a recognition.
#[derive(Debug, Clone, PartialEq)]
pub enum Gate {
    Disabled,
    Checked(Verdict<f64>),
}

impl Gate {
    pub fn as_str(&self) -> &'static str {
        match self {
            Gate::Disabled => "off",
            Gate::Checked(v) => v.label.as_str(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// Network decision.
    pub label: String,
    pub confidence: f64,
    pub nn_label: String,
    pub nn_distance: f64,
    pub agreement: bool,
    /// Secondary-gallery match, reported when it disagrees with `label`.
    pub secondary_mismatch: Option<(String, f64)>,
    pub gate: Gate,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Recognition {
    Matched(MatchResult),
    /// The gate labelled the probe forged; nothing was recognized.
    Blocked(Verdict<f64>),
}

/// Recognizes a probe, optionally refusing forged images first.
pub fn recognize(
    image: &Raster<f64>,
    region: Option<Rect>,
    model: &PipelineModel,
    gate_enabled: bool,
) -> Result<Recognition> {
    let gate = if gate_enabled {
        let verdict = authenticate(image, &model.detector)?;
        if verdict.label == Label::Forged {
            return Ok(Recognition::Blocked(verdict));
        }
        Gate::Checked(verdict)
    } else {
        Gate::Disabled
    };
    let f = model.extract_features(image, region)?;
    let (k, confidence) = model.classify(&f)?;
    let label = model.labels[k].clone();
    let (nn_label, nn_distance) = euclidean_match(&f, &model.dual.primary)?;
    let secondary_mismatch = match euclidean_match(&f, &model.dual.secondary) {
        Ok((l, d)) if l != label => Some((l, d)),
        Ok(_) | Err(Error::Empty(_)) => None,
        Err(e) => return Err(e),
    };
    Ok(Recognition::Matched(MatchResult {
        agreement: label == nn_label,
        label,
        confidence,
        nn_label,
        nn_distance,
        secondary_mismatch,
        gate,
    }))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassStats {
    pub label: String,
    pub total: usize,
    pub correct: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub per_class: Vec<ClassStats>,
    pub total: usize,
    pub correct: usize,
    /// `(truth, predicted) -> count`.
    pub confusion: BTreeMap<(String, String), usize>,
    pub mean_nn_distance: f64,
    /// Probes on which network and nearest neighbour agree.
    pub agreements: usize,
}

impl EvalReport {
    pub fn accuracy(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    /// `label,total,correct,accuracy` rows plus an `ALL` summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("label,total,correct,accuracy\n");
        for c in &self.per_class {
            out.push_str(&format!(
                "{},{},{},{}\n",
                c.label,
                c.total,
                c.correct,
                sig9(c.correct as f64 / c.total as f64)
            ));
        }
        out.push_str(&format!("ALL,{},{},{}\n", self.total, self.correct, sig9(self.accuracy())));
        out
    }

    /// `truth,predicted,count` rows.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("truth,predicted,count\n");
        for ((t, p), n) in &self.confusion {
            out.push_str(&format!("{t},{p},{n}\n"));
        }
        out
    }
}

/// Parses [`EvalReport::to_csv`] output back into `(label, total, correct, accuracy)`.
pub fn parse_eval_csv(text: &str) -> Option<Vec<(String, usize, usize, f64)>> {
    let mut lines = text.lines();
    if lines.next()? != "label,total,correct,accuracy" {
        return None;
    }
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return None;
            }
            Some((f[0].to_string(), f[1].parse().ok()?, f[2].parse().ok()?, f[3].parse().ok()?))
        })
        .collect()
}

/// Recognizes every test image with the gate off and tallies the results.
pub fn evaluate(model: &PipelineModel, test: &[LabeledImage]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::Empty("test manifest"));
    }
    let mut per_class: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    let mut confusion = BTreeMap::new();
    let mut dist_sum = 0.0;
    let mut agreements = 0;
    for s in test {
        let Recognition::Matched(r) = recognize(&s.image, s.region, model, false)? else {
            unreachable!("gate disabled")
        };
        let slot = per_class.entry(s.label.clone()).or_default();
        slot.0 += 1;
        if r.label == s.label {
            slot.1 += 1;
        }
        *confusion.entry((s.label.clone(), r.label.clone())).or_insert(0) += 1;
        dist_sum += r.nn_distance;
        agreements += usize::from(r.agreement);
    }
    let per_class: Vec<ClassStats> = per_class
        .into_iter()
        .map(|(label, (total, correct))| ClassStats { label, total, correct })
        .collect();
    Ok(EvalReport {
        total: test.len(),
        correct: per_class.iter().map(|c| c.correct).sum(),
        per_class,
        confusion,
        mean_nn_distance: dist_sum / test.len() as f64,
        agreements,
    })
}

/// Training and probe sets drawn from a seeded synthetic face corpus.
#[derive(Debug, Clone)]
pub struct SyntheticSplit {
    pub training: Vec<LabeledImage>,
    pub probes: Vec<LabeledImage>,
}

/// `train_per` and `probes_per` noisy samples per subject, noise `sigma`.
pub fn synthetic_split(
    subjects: usize,
    size: usize,
    train_per: usize,
    probes_per: usize,
    sigma: f64,
    seed: u64,
) -> SyntheticSplit {
    let corpus = FaceCorpus::new(subjects, size, seed);
    let make = |s: usize, k: usize, stream: u64, tag: &str| {
        let sample_seed = crate::calibration::derive_seed(seed, stream, (s * 1000 + k) as u64);
        LabeledImage {
            image: corpus.sample(s, sigma, sample_seed),
            label: FaceCorpus::label(s),
            region: None,
            source: format!("synthetic:{}:{tag}{k}", FaceCorpus::label(s)),
        }
    };
    let mut training = Vec::new();
    let mut probes = Vec::new();
    for s in 0..subjects {
        training.extend((0..train_per).map(|k| make(s, k, 10, "train")));
        probes.extend((0..probes_per).map(|k| make(s, k, 11, "probe")));
    }
    SyntheticSplit { training, probes }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiddenBenchRow {
    pub hidden: usize,
    pub epochs: usize,
    pub goal_reached: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectBenchRow {
    pub subjects: usize,
    pub accuracy: f64,
    pub epochs: usize,
    pub goal_reached: bool,
}

/// Epochs to goal and wall time for each hidden-layer width.
pub fn benchmark_hidden(
    split: &SyntheticSplit,
    hidden_sizes: &[usize],
    config: &PipelineConfig,
) -> Result<Vec<HiddenBenchRow>> {
    hidden_sizes
        .iter()
        .map(|&hidden| {
            let cfg = PipelineConfig {
                hidden,
                ..config.clone()
            };
            let start = Instant::now();
            let (epochs, goal_reached) = match train_pipeline(&split.training, None, &cfg) {
                Ok((_, curve)) => (curve.epochs(), true),
                Err(Error::TrainingFailed { epochs, .. }) => (epochs, false),
                Err(e) => return Err(e),
            };
            Ok(HiddenBenchRow {
                hidden,
                epochs,
                goal_reached,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

/// Probe accuracy for each subject count; corpora share `seed`.
#[allow(clippy::too_many_arguments)]
pub fn benchmark_subjects(
    subject_counts: &[usize],
    size: usize,
    train_per: usize,
    probes_per: usize,
    sigma: f64,
    seed: u64,
    config: &PipelineConfig,
) -> Result<Vec<SubjectBenchRow>> {
    subject_counts
        .iter()
        .map(|&subjects| {
            let split = synthetic_split(subjects, size, train_per, probes_per, sigma, seed);
            match train_pipeline(&split.training, None, config) {
                Ok((model, curve)) => Ok(SubjectBenchRow {
                    subjects,
                    accuracy: evaluate(&model, &split.probes)?.accuracy(),
                    epochs: curve.epochs(),
                    goal_reached: true,
                }),
                Err(Error::TrainingFailed { epochs, .. }) => Ok(SubjectBenchRow {
                    subjects,
                    accuracy: f64::NAN,
                    epochs,
                    goal_reached: false,
                }),
                Err(e) => Err(e),
            }
        })
        .collect()
}

pub fn hidden_bench_csv(rows: &[HiddenBenchRow]) -> String {
    let mut out = String::from("hidden,epochs,goal_reached,seconds\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.hidden, r.epochs, r.goal_reached, sig9(r.seconds)));
    }
    out
}

pub fn subject_bench_csv(rows: &[SubjectBenchRow]) -> String {
    let mut out = String::from("subjects,accuracy,epochs,goal_reached\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.subjects, sig9(r.accuracy), r.epochs, r.goal_reached));
    }
    out
}

// ---- model file ----

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u64(v as u64);
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, v: &[f64]) {
        self.usize(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn str(&mut self, s: &str) {
        self.usize(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::CorruptModel("section ends early".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::CorruptModel("length overflow".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn f64s(&mut self) -> Result<Vec<f64>> {
        let n = self.usize()?;
        if n > self.data.len() / 8 {
            return Err(Error::CorruptModel("array length exceeds section".into()));
        }
        (0..n).map(|_| self.f64()).collect()
    }
    fn str(&mut self) -> Result<String> {
        let n = self.usize()?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::CorruptModel("invalid utf-8".into()))
    }
    fn finish(&self, tag: &[u8; 4]) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::CorruptModel(format!(
                "trailing bytes in section {}",
                String::from_utf8_lossy(tag)
            )));
        }
        Ok(())
    }
}

fn write_gallery(w: &mut Writer, g: &Gallery) {
    w.str(&g.name);
    w.usize(g.entries.len());
    for e in &g.entries {
        w.str(&e.label);
        w.str(&e.source_path);
        w.f64s(&e.feature.values);
    }
}

fn read_gallery(r: &mut Reader) -> Result<Gallery> {
    let mut g = Gallery::new(r.str()?);
    let n = r.usize()?;
    for _ in 0..n {
        let label = r.str()?;
        let source = r.str()?;
        let values = r.f64s()?;
        g.enroll(label, FeatureVector::new(values), source)?;
    }
    Ok(g)
}

fn sections(model: &PipelineModel) -> Vec<([u8; 4], Vec<u8>)> {
    let mut prep = Writer(Vec::new());
    let p = &model.preproc;
    prep.usize(p.filter_size);
    prep.f64(p.stretch_low_pct);
    prep.f64(p.stretch_high_pct);
    prep.usize(p.target_size.0);
    prep.usize(p.target_size.1);
    prep.usize(model.dct_keep);
    prep.f64(model.feature_scale);

    let mut pca = Writer(Vec::new());
    pca.f64s(&model.pca.mean.values);
    pca.usize(model.pca.basis.len());
    for b in &model.pca.basis {
        pca.f64s(&b.values);
    }
    pca.f64s(&model.pca.eigenvalues);

    let mut mlp = Writer(Vec::new());
    model.net.sizes().iter().for_each(|&s| mlp.usize(s));
    mlp.f64s(&model.net.to_flat());

    let mut labl = Writer(Vec::new());
    labl.usize(model.labels.len());
    model.labels.iter().for_each(|l| labl.str(l));

    let mut gal1 = Writer(Vec::new());
    write_gallery(&mut gal1, &model.dual.primary);
    let mut gal2 = Writer(Vec::new());
    write_gallery(&mut gal2, &model.dual.secondary);

    let mut detc = Writer(Vec::new());
    let d = &model.detector;
    detc.usize(d.derivative_orders.len());
    d.derivative_orders.iter().for_each(|&n| detc.u32(n));
    detc.f64(d.threshold);
    detc.f64(d.f_lo);
    detc.f64(d.flat_floor);
    detc.u64(d.max_lag.map_or(0, |m| m as u64));

    vec![
        (*b"PREP", prep.0),
        (*b"PCA_", pca.0),
        (*b"MLP_", mlp.0),
        (*b"LABL", labl.0),
        (*b"GAL1", gal1.0),
        (*b"GAL2", gal2.0),
        (*b"DETC", detc.0),
    ]
}

/// Serializes a model: magic, version, section table, sections, CRC-32.
pub fn model_to_bytes(model: &PipelineModel) -> Vec<u8> {
    let secs = sections(model);
    let header_len = MAGIC.len() + 4 + 4 + secs.len() * (4 + 8 + 8);
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(MODEL_VERSION);
    w.u32(secs.len() as u32);
    let mut offset = header_len;
    for (tag, body) in &secs {
        w.0.extend_from_slice(tag);
        w.usize(offset);
        w.usize(body.len());
        offset += body.len();
    }
    for (_, body) in &secs {
        w.0.extend_from_slice(body);
    }
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    w.0
}

/// Parses [`model_to_bytes`] output.
pub fn model_from_bytes(bytes: &[u8]) -> Result<PipelineModel> {
    if bytes.len() < MAGIC.len() + 4 || &bytes[..MAGIC.len()] != MAGIC {
        if bytes.len() < MAGIC.len() && MAGIC.starts_with(bytes) {
            return Err(Error::Checksum);
        }
        return Err(Error::CorruptModel("bad magic".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != MODEL_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes.len() < 20 {
        return Err(Error::Checksum);
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().expect("4 bytes")) {
        return Err(Error::Checksum);
    }
    let mut head = Reader { data: body, pos: 12 };
    let count = head.u32()? as usize;
    let mut table = BTreeMap::new();
    for _ in 0..count {
        let tag: [u8; 4] = head.take(4)?.try_into().expect("4 bytes");
        let off = head.usize()?;
        let len = head.usize()?;
        let data = off
            .checked_add(len)
            .and_then(|end| body.get(off..end))
            .ok_or_else(|| Error::CorruptModel("section out of range".into()))?;
        table.insert(tag, data);
    }
    let mut section = |tag: &[u8; 4]| -> Result<Reader> {
        table
            .remove(tag)
            .map(|data| Reader { data, pos: 0 })
            .ok_or_else(|| Error::CorruptModel(format!("missing section {}", String::from_utf8_lossy(tag))))
    };

    let mut r = section(b"PREP")?;
    let preproc = PreprocConfig {
        filter_size: r.usize()?,
        stretch_low_pct: r.f64()?,
        stretch_high_pct: r.f64()?,
        target_size: (r.usize()?, r.usize()?),
    };
    let dct_keep = r.usize()?;
    let feature_scale = r.f64()?;
    r.finish(b"PREP")?;

    let mut r = section(b"PCA_")?;
    let mean = FeatureVector::new(r.f64s()?);
    let m = r.usize()?;
    if m > mean.dim() {
        return Err(Error::CorruptModel("more components than dimensions".into()));
    }
    let basis = (0..m)
        .map(|_| r.f64s().map(FeatureVector::new))
        .collect::<Result<Vec<_>>>()?;
    let eigenvalues = r.f64s()?;
    r.finish(b"PCA_")?;
    if basis.iter().any(|b| b.dim() != mean.dim()) || eigenvalues.len() != m {
        return Err(Error::CorruptModel("inconsistent PCA shapes".into()));
    }

    let mut r = section(b"MLP_")?;
    let sizes = [r.usize()?, r.usize()?, r.usize()?];
    let net = Mlp::from_flat(sizes, &r.f64s()?).map_err(|e| Error::CorruptModel(e.to_string()))?;
    r.finish(b"MLP_")?;

    let mut r = section(b"LABL")?;
    let n = r.usize()?;
    let labels = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    r.finish(b"LABL")?;

    let mut r = section(b"GAL1")?;
    let primary = read_gallery(&mut r)?;
    r.finish(b"GAL1")?;
    let mut r = section(b"GAL2")?;
    let secondary = read_gallery(&mut r)?;
    r.finish(b"GAL2")?;

    let mut r = section(b"DETC")?;
    let n = r.usize()?;
    if n > 16 {
        return Err(Error::CorruptModel("too many derivative orders".into()));
    }
    let derivative_orders = (0..n).map(|_| r.u32()).collect::<Result<Vec<_>>>()?;
    let detector = DetectorConfig {
        derivative_orders,
        threshold: r.f64()?,
        f_lo: r.f64()?,
        flat_floor: r.f64()?,
        max_lag: match r.u64()? {
            0 => None,
            v => Some(v as usize),
        },
    };
    r.finish(b"DETC")?;

    let model = PipelineModel {
        preproc,
        dct_keep,
        pca: PcaModel {
            mean,
            basis,
            eigenvalues,
        },
        feature_scale,
        net,
        labels,
        dual: DualDatabase { primary, secondary },
        detector,
    };
    model.check()?;
    Ok(model)
}

pub fn save_model(model: &PipelineModel, path: &Path) -> Result<()> {
    write_atomic(path, &model_to_bytes(model))
}

pub fn load_model(path: &Path) -> Result<PipelineModel> {
    let bytes = std::fs::read(path).map_err(|source| Error::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_bytes(&bytes)
}
