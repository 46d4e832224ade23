//! `imgauth` command-line tool.
//!
//! Exit codes: 0 success or original, 1 I/O or data error, 2 usage error,
//! 3 forged (or recognition blocked by the gate), 4 indeterminate.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use imgauth::authenticator::{authenticate, emit_spectrum, Label};
use imgauth::calibration::{calibrate_scores, calibrate_synthetic, roc_csv, score_images, CALIBRATION_SIZE};
use imgauth::neural::TrainingCurve;
use imgauth::preprocess::Rect;
use imgauth::raster::{load_image, save_image, write_atomic, Raster};
use imgauth::recognizer::{
    benchmark_hidden, benchmark_subjects, evaluate, hidden_bench_csv, load_manifest, load_model,
    manifest_csv, recognize, save_model, subject_bench_csv, synthetic_split, train_pipeline,
    ManifestEntry, PipelineConfig, Recognition,
};
use imgauth::resample::{affine_apply, AffineParams, KernelKind, KernelSpec};
use imgauth::{synth, Error};

const EXIT_IO: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_FORGED: u8 = 3;
const EXIT_INDETERMINATE: u8 = 4;

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => EXIT_USAGE,
            Failure::Io(_) => EXIT_IO,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::NonInvertible(_)
            | Error::NotEnoughClasses(_)
            | Error::Empty(_) => Failure::Usage(e.to_string()),
            _ => Failure::Io(e.to_string()),
        }
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<u8, Failure>;

#[derive(Parser)]
#[command(name = "imgauth", version, about = "Resampling-trace authentication and gated face recognition")]
struct Cli {
    /// key=value configuration file; command-line flags take precedence.
    #[arg(long, global = true, env = "IMGAUTH_CONFIG")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct DetectorFlags {
    /// Scores above this are labelled forged.
    #[arg(long)]
    threshold: Option<f64>,
    /// Comma-separated derivative orders, e.g. `2,1`.
    #[arg(long, value_delimiter = ',')]
    orders: Option<Vec<u32>>,
    /// Lower edge of the searched frequency band.
    #[arg(long)]
    f_lo: Option<f64>,
}

impl DetectorFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(t) = self.threshold {
            cfg.detector.threshold = t;
        }
        if let Some(o) = &self.orders {
            cfg.detector.derivative_orders = o.clone();
        }
        if let Some(f) = self.f_lo {
            cfg.detector.f_lo = f;
        }
    }
}

#[derive(Args, Default)]
struct TrainFlags {
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    /// Target mean squared error.
    #[arg(long)]
    error_goal: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dct_keep: Option<usize>,
    #[arg(long)]
    pca_components: Option<usize>,
    #[arg(long)]
    filter_size: Option<usize>,
    #[arg(long)]
    stretch_low: Option<f64>,
    #[arg(long)]
    stretch_high: Option<f64>,
    /// Recognition raster size, `WxH`.
    #[arg(long, value_parser = parse_size_arg)]
    target_size: Option<(usize, usize)>,
}

fn parse_size_arg(s: &str) -> Result<(usize, usize), String> {
    config::parse_size(s).ok_or_else(|| format!("expected WxH, got `{s}`"))
}

impl TrainFlags {
    fn apply(&self, cfg: &mut PipelineConfig) {
        macro_rules! set {
            ($flag:ident => $($dst:tt)+) => {
                if let Some(v) = self.$flag {
                    cfg.$($dst)+ = v;
                }
            };
        }
        set!(hidden => hidden);
        set!(learning_rate => train.learning_rate);
        set!(momentum => train.momentum);
        set!(error_goal => train.error_goal);
        set!(max_epochs => train.max_epochs);
        set!(seed => train.seed);
        set!(dct_keep => dct_keep);
        set!(filter_size => preproc.filter_size);
        set!(stretch_low => preproc.stretch_low_pct);
        set!(stretch_high => preproc.stretch_high_pct);
        set!(target_size => preproc.target_size);
        if self.pca_components.is_some() {
            cfg.pca_components = self.pca_components;
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Decide whether an image carries a resampling trace.
    Authenticate {
        image: PathBuf,
        #[command(flatten)]
        detector: DetectorFlags,
        /// Also write `<BASE>.csv` and `<BASE>.svg` with the peak spectrum.
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Write the peak spectrum of an image as CSV and SVG.
    Spectrum {
        image: PathBuf,
        /// Output base path; `.csv` and `.svg` are appended.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        detector: DetectorFlags,
    },
    /// Apply an affine transform to an image and record it in a `.meta` file.
    Synthesize {
        /// Source image; omit to use seeded uniform noise.
        source: Option<PathBuf>,
        /// Side length of the noise source used when no image is given.
        #[arg(long, default_value_t = 64, conflicts_with = "source")]
        noise: usize,
        #[arg(long)]
        out: PathBuf,
        /// Uniform scale factor.
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long, conflicts_with = "scale")]
        scale_x: Option<f64>,
        #[arg(long, conflicts_with = "scale")]
        scale_y: Option<f64>,
        /// Rotation in degrees.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        rotate: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        skew_x: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        skew_y: f64,
        #[arg(long, default_value = "linear")]
        kernel: KernelKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Derive the detector threshold from pristine and forged scores.
    Calibrate {
        /// Directory holding `pristine/` and `forged/` images; synthesized when omitted.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Synthetic pairs to generate.
        #[arg(long, default_value_t = 200)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// ROC table output.
        #[arg(long)]
        roc: PathBuf,
        /// Config fragment output; defaults to the ROC path with a `.conf` extension.
        #[arg(long)]
        fragment: Option<PathBuf>,
        #[command(flatten)]
        detector: DetectorFlags,
    },
    /// Train a recognition model from a manifest.
    Train {
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Manifest for the secondary (validation) gallery.
        #[arg(long)]
        validation: Option<PathBuf>,
        /// Training-curve CSV; defaults to `<model>.curve.csv`.
        #[arg(long)]
        curve: Option<PathBuf>,
        #[command(flatten)]
        train: TrainFlags,
        #[command(flatten)]
        detector: DetectorFlags,
    },
    /// Recognize one probe image.
    Recognize {
        image: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Skip the authentication gate.
        #[arg(long)]
        no_gate: bool,
        /// Face rectangle `x0,y0,w,h`.
        #[arg(long, value_delimiter = ',', num_args = 4)]
        region: Option<Vec<usize>>,
        /// Overrides the threshold stored in the model.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Accuracy of a model on a labelled manifest.
    Evaluate {
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Accuracy CSV output.
        #[arg(long)]
        out: PathBuf,
        /// Optional `truth,predicted,count` CSV.
        #[arg(long)]
        confusion: Option<PathBuf>,
    },
    /// Write a synthetic face corpus with training and probe manifests.
    Corpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        subjects: usize,
        #[arg(long, default_value_t = 64)]
        size: usize,
        #[arg(long, default_value_t = 3)]
        train_per: usize,
        #[arg(long, default_value_t = 5)]
        probes_per: usize,
        /// Noise standard deviation in intensity levels.
        #[arg(long, default_value_t = 4.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print the effective configuration as a config file.
    Defaults,
    /// Hidden-width and subject-count sweeps on synthetic corpora.
    Benchmark {
        /// Hidden-width sweep CSV output.
        #[arg(long)]
        hidden_out: PathBuf,
        /// Subject-count sweep CSV output.
        #[arg(long)]
        subjects_out: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "5,10,20,40")]
        hidden: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "5,10,15,20")]
        subjects: Vec<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        train: TrainFlags,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Io(format!("cannot read config {}: {e}", path.display())))?;
    Ok(config::parse_config(&text, PipelineConfig::default())?)
}

fn finish_config(cfg: PipelineConfig) -> Result<PipelineConfig, Failure> {
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Outcome {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Authenticate {
            image,
            detector,
            spectrum,
        } => {
            detector.apply(&mut cfg);
            cmd_authenticate(&image, &finish_config(cfg)?, spectrum.as_deref(), true)
        }
        Command::Spectrum { image, out, detector } => {
            detector.apply(&mut cfg);
            cmd_authenticate(&image, &finish_config(cfg)?, Some(&out), false)
        }
        Command::Synthesize {
            source,
            noise,
            out,
            scale,
            scale_x,
            scale_y,
            rotate,
            skew_x,
            skew_y,
            kernel,
            seed,
        } => {
            let (sx, sy) = match scale {
                Some(s) => (s, s),
                None => (scale_x.unwrap_or(1.0), scale_y.unwrap_or(1.0)),
            };
            let src = match &source {
                Some(p) => load_image(p)?,
                None => {
                    println!("seed={seed}");
                    synth::pristine_noise(noise, seed)
                }
            };
            cmd_synthesize(&src, source.as_deref(), &out, (sx, sy), rotate, (skew_x, skew_y), kernel)
        }
        Command::Calibrate {
            corpus,
            trials,
            seed,
            roc,
            fragment,
            detector,
        } => {
            detector.apply(&mut cfg);
            let cfg = finish_config(cfg)?;
            cmd_calibrate(corpus.as_deref(), trials, seed, &roc, fragment, &cfg)
        }
        Command::Train {
            manifest,
            model,
            validation,
            curve,
            train,
            detector,
        } => {
            train.apply(&mut cfg);
            detector.apply(&mut cfg);
            let cfg = finish_config(cfg)?;
            let curve = curve.unwrap_or_else(|| suffixed(&model, ".curve.csv"));
            cmd_train(&manifest, validation.as_deref(), &model, &curve, &cfg)
        }
        Command::Recognize {
            image,
            model,
            no_gate,
            region,
            threshold,
        } => cmd_recognize(&image, &model, !no_gate, region, threshold),
        Command::Evaluate {
            manifest,
            model,
            out,
            confusion,
        } => {
            let model = load_model(&model)?;
            let test = load_manifest(&manifest)?;
            let report = evaluate(&model, &test)?;
            write_atomic(&out, report.to_csv().as_bytes())?;
            if let Some(c) = confusion {
                write_atomic(&c, report.confusion_csv().as_bytes())?;
            }
            println!(
                "accuracy={} correct={} total={} mean_nn_distance={}",
                report.accuracy(),
                report.correct,
                report.total,
                report.mean_nn_distance
            );
            Ok(0)
        }
        Command::Corpus {
            out,
            subjects,
            size,
            train_per,
            probes_per,
            sigma,
            seed,
        } => {
            if subjects == 0 || size < 8 || train_per == 0 {
                return Err(Failure::Usage("need subjects >= 1, size >= 8 and train-per >= 1".into()));
            }
            println!("seed={seed}");
            let split = synthetic_split(subjects, size, train_per, probes_per, sigma, seed);
            write_split(&out, "train", &split.training)?;
            write_split(&out, "probes", &split.probes)?;
            Ok(0)
        }
        Command::Defaults => {
            print!("{}", config::render_config(&cfg));
            Ok(0)
        }
        Command::Benchmark {
            hidden_out,
            subjects_out,
            hidden,
            subjects,
            seed,
            train,
        } => {
            train.apply(&mut cfg);
            let cfg = finish_config(cfg)?;
            if hidden.contains(&0) || subjects.iter().any(|&s| s < 2) {
                return Err(Failure::Usage("hidden widths must be >= 1 and subject counts >= 2".into()));
            }
            println!("seed={seed}");
            let split = synthetic_split(10, 64, 3, 5, 4.0, seed);
            let rows = benchmark_hidden(&split, &hidden, &cfg)?;
            write_atomic(&hidden_out, hidden_bench_csv(&rows).as_bytes())?;
            let rows = benchmark_subjects(&subjects, 64, 3, 5, 4.0, seed, &cfg)?;
            write_atomic(&subjects_out, subject_bench_csv(&rows).as_bytes())?;
            Ok(0)
        }
    }
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_authenticate(image: &Path, cfg: &PipelineConfig, spectrum: Option<&Path>, verdict_exit: bool) -> Outcome {
    let img: Raster<f64> = load_image(image)?;
    let verdict = authenticate(&img, &cfg.detector)?;
    println!(
        "{} score={} threshold={}",
        verdict.label.as_str(),
        verdict.score,
        verdict.threshold
    );
    if let Some(base) = spectrum {
        if verdict.report.is_some() {
            emit_spectrum(&verdict, base)?;
        } else {
            eprintln!("note: flat image, no spectrum written");
        }
    }
    if !verdict_exit {
        return Ok(0);
    }
    Ok(match verdict.label {
        Label::Original => 0,
        Label::Forged => EXIT_FORGED,
        Label::Indeterminate => EXIT_INDETERMINATE,
    })
}

/// Scale, then skew, then rotate; translated so the output grid starts at
/// the transformed image's top-left pixel.
fn synthesis_params(
    width: usize,
    height: usize,
    scale: (f64, f64),
    rotate: f64,
    skew: (f64, f64),
) -> Result<(AffineParams<f64>, (usize, usize)), Failure> {
    if !(scale.0 > 0.0 && scale.1 > 0.0) || ![rotate, skew.0, skew.1].iter().all(|v| v.is_finite()) {
        return Err(Failure::Usage("scale factors must be positive and all parameters finite".into()));
    }
    let linear = AffineParams::rotation_deg(rotate)
        .compose(&AffineParams::skew(skew.0, skew.1))
        .compose(&AffineParams::scale(scale.0, scale.1));
    linear.inverse()?;
    let (w, h) = (width as f64, height as f64);
    let extent = |pts: &[(f64, f64)]| {
        let mapped: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| affine_apply(&linear, x, y)).collect();
        let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| {
            mapped.iter().map(pick).fold(init, f)
        };
        (
            fold(f64::min, f64::INFINITY, |p| p.0),
            fold(f64::max, f64::NEG_INFINITY, |p| p.0),
            fold(f64::min, f64::INFINITY, |p| p.1),
            fold(f64::max, f64::NEG_INFINITY, |p| p.1),
        )
    };
    let (cx0, _, cy0, _) = extent(&[(0.0, 0.0), (w - 1.0, 0.0), (0.0, h - 1.0), (w - 1.0, h - 1.0)]);
    let (ax0, ax1, ay0, ay1) = extent(&[(0.0, 0.0), (w, 0.0), (0.0, h), (w, h)]);
    let ow = ((ax1 - ax0) - 1e-9).ceil().max(1.0) as usize;
    let oh = ((ay1 - ay0) - 1e-9).ceil().max(1.0) as usize;
    let params = AffineParams::new(-cx0 + 0.0, linear.a1, linear.a2, -cy0 + 0.0, linear.b1, linear.b2);
    Ok((params, (ow, oh)))
}

fn cmd_synthesize(
    src: &Raster<f64>,
    source: Option<&Path>,
    out: &Path,
    scale: (f64, f64),
    rotate: f64,
    skew: (f64, f64),
    kernel: KernelKind,
) -> Outcome {
    let (params, size) = synthesis_params(src.width(), src.height(), scale, rotate, skew)?;
    let warped = imgauth::resample::warp(src, &params, &KernelSpec::new(kernel), size)?;
    save_image(&warped, out)?;
    let p = params.as_array();
    let meta = format!(
        "a0={}\na1={}\na2={}\nb0={}\nb1={}\nb2={}\nkernel={}\nsource={}\nwidth={}\nheight={}\n",
        p[0],
        p[1],
        p[2],
        p[3],
        p[4],
        p[5],
        kernel.name(),
        source.map_or("noise".into(), |s| s.display().to_string()),
        size.0,
        size.1
    );
    write_atomic(&meta_path(out), meta.as_bytes())?;
    println!("wrote {} ({}x{})", out.display(), size.0, size.1);
    Ok(0)
}

/// Sidecar path: `<out>.meta`.
fn meta_path(out: &Path) -> PathBuf {
    suffixed(out, ".meta")
}

fn load_dir(dir: &Path) -> Result<Vec<Raster<f64>>, Failure> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Failure::Io(format!("cannot read {}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref(),
                Some("pgm" | "png")
            )
        })
        .collect();
    paths.sort();
    Ok(paths.iter().map(load_image).collect::<Result<_, _>>()?)
}

fn cmd_calibrate(
    corpus: Option<&Path>,
    trials: usize,
    seed: u64,
    roc: &Path,
    fragment: Option<PathBuf>,
    cfg: &PipelineConfig,
) -> Outcome {
    let cal = match corpus {
        Some(dir) => {
            let pristine = load_dir(&dir.join("pristine"))?;
            let forged = load_dir(&dir.join("forged"))?;
            if pristine.is_empty() || forged.is_empty() {
                return Err(Failure::Usage(format!(
                    "corpus {} needs images in pristine/ and forged/",
                    dir.display()
                )));
            }
            calibrate_scores(
                score_images(&pristine, &cfg.detector)?,
                score_images(&forged, &cfg.detector)?,
            )?
        }
        None => {
            if trials == 0 {
                return Err(Failure::Usage("trials must be at least 1".into()));
            }
            println!("seed={seed}");
            eprintln!("synthesizing {trials} pairs of {CALIBRATION_SIZE}x{CALIBRATION_SIZE} images");
            calibrate_synthetic(trials, seed, &cfg.detector)?
        }
    };
    write_atomic(roc, roc_csv(&cal.roc).as_bytes())?;
    let fragment = fragment.unwrap_or_else(|| roc.with_extension("conf"));
    let text = format!(
        "# detector calibration: {} pristine, {} forged\nthreshold = {}\n",
        cal.pristine_scores.len(),
        cal.forged_scores.len(),
        cal.threshold
    );
    write_atomic(&fragment, text.as_bytes())?;
    println!("threshold={} tpr={} fpr={}", cal.threshold, cal.tpr, cal.fpr);
    Ok(0)
}

fn write_curve(curve: &TrainingCurve, path: &Path) -> Result<(), Failure> {
    curve.write(path)?;
    Ok(())
}

fn cmd_train(
    manifest: &Path,
    validation: Option<&Path>,
    model_path: &Path,
    curve_path: &Path,
    cfg: &PipelineConfig,
) -> Outcome {
    println!("seed={}", cfg.train.seed);
    let training = load_manifest(manifest)?;
    let validation = validation.map(load_manifest).transpose()?;
    match train_pipeline(&training, validation.as_deref(), cfg) {
        Ok((model, curve)) => {
            save_model(&model, model_path)?;
            write_curve(&curve, curve_path)?;
            println!(
                "epochs={} mse={} stop=goal_reached classes={} components={}",
                curve.epochs(),
                curve.final_mse(),
                model.class_count(),
                model.pca.m()
            );
            Ok(0)
        }
        Err(Error::TrainingFailed {
            epochs,
            final_mse,
            goal,
            curve,
        }) => {
            let curve = TrainingCurve {
                mse: curve,
                stop_reason: imgauth::neural::StopReason::MaxEpochs,
            };
            write_curve(&curve, curve_path)?;
            Err(Failure::Io(format!(
                "training stopped after {epochs} epochs at mse {final_mse} above goal {goal}; curve written to {}",
                curve_path.display()
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_recognize(
    image: &Path,
    model_path: &Path,
    gate: bool,
    region: Option<Vec<usize>>,
    threshold: Option<f64>,
) -> Outcome {
    let mut model = load_model(model_path)?;
    if let Some(t) = threshold {
        model.detector.threshold = t;
        model.detector.validate()?;
    }
    let img: Raster<f64> = load_image(image)?;
    let region = region.map(|r| Rect::new(r[0], r[1], r[2], r[3]));
    match recognize(&img, region, &model, gate)? {
        Recognition::Blocked(v) => {
            println!("blocked gate={} score={} threshold={}", v.label.as_str(), v.score, v.threshold);
            Ok(EXIT_FORGED)
        }
        Recognition::Matched(r) => {
            println!(
                "label={} confidence={} nn={} dist={} gate={}",
                r.label,
                r.confidence,
                r.nn_label,
                r.nn_distance,
                r.gate.as_str()
            );
            if let Some((l, d)) = r.secondary_mismatch {
                println!("secondary={l} dist={d}");
            }
            Ok(0)
        }
    }
}

fn write_split(dir: &Path, name: &str, items: &[imgauth::recognizer::LabeledImage]) -> Result<(), Failure> {
    let img_dir = dir.join(name);
    std::fs::create_dir_all(&img_dir)
        .map_err(|e| Failure::Io(format!("cannot create {}: {e}", img_dir.display())))?;
    let mut entries = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let file = format!("{}_{i:03}.pgm", item.label);
        save_image(&item.image, img_dir.join(&file))?;
        entries.push(ManifestEntry {
            path: PathBuf::from(name).join(file),
            label: item.label.clone(),
            region: None,
        });
    }
    write_atomic(&dir.join(format!("{name}.csv")), manifest_csv(&entries).as_bytes())?;
    Ok(())
}
