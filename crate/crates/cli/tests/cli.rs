use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use imgauth::plot::parse_two_columns;
use imgauth::raster::{load_image, save_image, Raster};
use imgauth::recognizer::parse_eval_csv;
use imgauth::resample::KernelSpec;
use imgauth::synth;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_imgauth"));
    c.env_remove("IMGAUTH_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn imgauth")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_noise(dir: &Path, name: &str, seed: u64, forged: bool) -> PathBuf {
    let img: Raster<f64> = if forged {
        synth::upscaled_noise(96, 2, &KernelSpec::linear(), seed)
    } else {
        synth::pristine_noise(96, seed)
    };
    let p = dir.join(name);
    save_image(&img, &p).unwrap();
    p
}

#[test]
fn authenticate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let pristine = write_noise(dir.path(), "p.pgm", 1, false);
    let forged = write_noise(dir.path(), "f.pgm", 2, true);

    let o = run(&["authenticate", s(&pristine)]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).starts_with("ORIGINAL score="));
    assert!(stdout(&o).contains(" threshold="));

    let base = dir.path().join("spec");
    let o = run(&["authenticate", s(&forged), "--spectrum", s(&base)]);
    assert_eq!(code(&o), 3);
    assert!(stdout(&o).starts_with("FORGED score="));
    let csv = std::fs::read_to_string(base.with_extension("csv")).unwrap();
    assert!(csv.starts_with("frequency,magnitude\n"));
    assert!(!parse_two_columns(&csv).unwrap().is_empty());
    assert!(std::fs::read_to_string(base.with_extension("svg")).unwrap().contains("viewBox=\"0 0 800 400\""));

    let flat = dir.path().join("flat.pgm");
    save_image(&Raster::filled(40, 40, 128.0f64), &flat).unwrap();
    assert_eq!(code(&run(&["authenticate", s(&flat)])), 4);

    assert_eq!(code(&run(&["authenticate", s(&dir.path().join("missing.pgm"))])), 1);
    assert_eq!(code(&run(&["authenticate"])), 2);
    assert_eq!(code(&run(&["authenticate", s(&pristine), "--f-lo", "0.7"])), 2);
    assert_eq!(code(&run(&["authenticate", s(&pristine), "--threshold", "0"])), 3);
}

#[test]
fn spectrum_command_writes_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let forged = write_noise(dir.path(), "f.pgm", 3, true);
    let base = dir.path().join("out");
    let o = run(&["spectrum", s(&forged), "--out", s(&base)]);
    assert_eq!(code(&o), 0);
    let rows = parse_two_columns(&std::fs::read_to_string(base.with_extension("csv")).unwrap()).unwrap();
    let peak = rows.iter().cloned().fold((0.0, f64::MIN), |a, r| if r.1 > a.1 { r } else { a });
    assert!((peak.0 - 0.5).abs() < 0.01, "peak at {}", peak.0);
}

#[test]
fn config_file_env_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let forged = write_noise(dir.path(), "f.pgm", 4, true);
    let conf = dir.path().join("c.conf");
    std::fs::write(&conf, "# never forged\nthreshold = 1e12\n").unwrap();

    assert_eq!(code(&run(&["authenticate", s(&forged), "--config", s(&conf)])), 0);
    let o = bin()
        .args(["authenticate", s(&forged)])
        .env("IMGAUTH_CONFIG", &conf)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    let o = bin()
        .args(["authenticate", s(&forged), "--threshold", "50"])
        .env("IMGAUTH_CONFIG", &conf)
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);

    std::fs::write(&conf, "threshold = 10\ncolour = blue\n").unwrap();
    let o = run(&["authenticate", s(&forged), "--config", s(&conf)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
    assert_eq!(
        code(&run(&["authenticate", s(&forged), "--config", s(&dir.path().join("none.conf"))])),
        1
    );
}

#[test]
fn synthesize_scale_rotate_copy() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.pgm");
    let img = Raster::from_fn(12, 7, |x, y| (x * 17 + y * 5) as f64);
    save_image(&img, &src).unwrap();

    let up = dir.path().join("up.pgm");
    assert_eq!(code(&run(&["synthesize", s(&src), "--scale", "2", "--kernel", "linear", "--out", s(&up)])), 0);
    let out: Raster<f64> = load_image(&up).unwrap();
    assert_eq!((out.width(), out.height()), (24, 14));
    let meta = std::fs::read_to_string(dir.path().join("up.pgm.meta")).unwrap();
    assert!(meta.starts_with("a0=0\na1=2\na2=0\nb0=0\nb1=0\nb2=2\nkernel=linear\n"), "{meta}");

    let copy = dir.path().join("copy.pgm");
    assert_eq!(code(&run(&["synthesize", s(&src), "--scale", "1", "--kernel", "nearest", "--out", s(&copy)])), 0);
    assert_eq!(load_image::<f64>(&copy).unwrap(), img);

    let rot = dir.path().join("rot.pgm");
    assert_eq!(code(&run(&["synthesize", s(&src), "--rotate", "90", "--out", s(&rot)])), 0);
    let r: Raster<f64> = load_image(&rot).unwrap();
    let exact = img.rotate90_ccw();
    assert_eq!((r.width(), r.height()), (exact.width(), exact.height()));
    let max_err = r.pixels().iter().zip(exact.pixels()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(max_err <= 1.0, "max error {max_err}");

    let noise = dir.path().join("noise.pgm");
    let o = run(&["synthesize", "--noise", "32", "--seed", "5", "--scale", "2", "--out", s(&noise)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("seed=5"));
    assert_eq!(code(&run(&["synthesize", s(&src), "--scale", "0", "--out", s(&noise)])), 2);
    assert_eq!(code(&run(&["synthesize", s(&src), "--skew-x", "1", "--skew-y", "1", "--out", s(&noise)])), 2);
}

#[test]
fn calibrate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert_eq!(code(&run(&["calibrate", "--trials", "0", "--roc", s(&a)])), 2);
    let o = run(&["calibrate", "--trials", "4", "--seed", "3", "--roc", s(&a)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("seed=3"));
    assert_eq!(code(&run(&["calibrate", "--trials", "4", "--seed", "3", "--roc", s(&b)])), 0);
    let ta = std::fs::read_to_string(&a).unwrap();
    assert_eq!(ta, std::fs::read_to_string(&b).unwrap());
    assert!(ta.starts_with("threshold,tpr,fpr\n"));
    let frag = std::fs::read_to_string(dir.path().join("a.conf")).unwrap();
    assert!(frag.lines().any(|l| l.starts_with("threshold = ")));
    // the fragment is itself a valid config file
    let pristine = write_noise(dir.path(), "p.pgm", 9, false);
    let conf = dir.path().join("a.conf");
    assert!(code(&run(&["authenticate", s(&pristine), "--config", s(&conf)])) != 2);

    let corpus = dir.path().join("corpus");
    std::fs::create_dir_all(corpus.join("pristine")).unwrap();
    std::fs::create_dir_all(corpus.join("forged")).unwrap();
    assert_eq!(code(&run(&["calibrate", "--corpus", s(&corpus), "--roc", s(&a)])), 2);
    write_noise(&corpus.join("pristine"), "1.pgm", 1, false);
    write_noise(&corpus.join("forged"), "1.pgm", 1, true);
    assert_eq!(code(&run(&["calibrate", "--corpus", s(&corpus), "--roc", s(&a)])), 0);
}

#[test]
fn train_recognize_evaluate_loop() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(&["corpus", "--out", s(d), "--subjects", "4", "--probes-per", "2", "--seed", "2"]);
    assert_eq!(code(&o), 0);
    let train = d.join("train.csv");
    let model = d.join("m.vfm");
    let o = run(&["train", s(&train), "--model", s(&model), "--seed", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("seed=1"));
    assert!(stdout(&o).contains("stop=goal_reached"));
    let curve = std::fs::read_to_string(d.join("m.vfm.curve.csv")).unwrap();
    assert!(curve.starts_with("epoch,mse\n"));
    assert!(!parse_two_columns(&curve).unwrap().is_empty());

    // rerun gives a byte-identical model
    let model2 = d.join("m2.vfm");
    assert_eq!(code(&run(&["train", s(&train), "--model", s(&model2), "--seed", "1"])), 0);
    assert_eq!(std::fs::read(&model).unwrap(), std::fs::read(&model2).unwrap());

    let probe = d.join("probes/s03_004.pgm");
    let o = run(&["recognize", s(&probe), "--model", s(&model)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o);
    assert!(line.starts_with("label=s03 confidence="), "{line}");
    assert!(line.contains(" nn=s03 dist="));
    assert!(line.contains(" gate=ORIGINAL"));
    let o = run(&["recognize", s(&probe), "--model", s(&model), "--no-gate"]);
    assert!(stdout(&o).contains("gate=off"));

    let forged = d.join("forged.pgm");
    assert_eq!(code(&run(&["synthesize", s(&probe), "--scale", "2", "--out", s(&forged)])), 0);
    let o = run(&["recognize", s(&forged), "--model", s(&model)]);
    assert_eq!(code(&o), 3);
    assert!(!stdout(&o).contains("label="));
    assert_eq!(code(&run(&["recognize", s(&forged), "--model", s(&model), "--no-gate"])), 0);

    let report = d.join("eval.csv");
    let o = run(&["evaluate", s(&train), "--model", s(&model), "--out", s(&report)]);
    assert_eq!(code(&o), 0);
    let rows = parse_eval_csv(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows.last().unwrap(), &("ALL".to_string(), 12, 12, 1.0));

    // corrupt model
    let mut bytes = std::fs::read(&model).unwrap();
    let n = bytes.len();
    bytes[n / 2] ^= 0x40;
    let bad = d.join("bad.vfm");
    std::fs::write(&bad, &bytes).unwrap();
    let o = run(&["recognize", s(&probe), "--model", s(&bad)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("checksum"));

    // single class manifest
    let one = d.join("one.csv");
    std::fs::write(&one, "path,label,x0,y0,w,h\ntrain/s01_000.pgm,s01,,,,\ntrain/s01_001.pgm,s01,,,,\n").unwrap();
    assert_eq!(code(&run(&["train", s(&one), "--model", s(&d.join("x.vfm"))])), 2);
}

#[test]
fn training_budget_exhaustion_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&run(&["corpus", "--out", s(d), "--subjects", "3", "--probes-per", "0"])), 0);
    let model = d.join("m.vfm");
    let o = run(&["train", s(&d.join("train.csv")), "--model", s(&model), "--max-epochs", "3"]);
    assert_eq!(code(&o), 1);
    assert!(!model.exists());
    let curve = std::fs::read_to_string(d.join("m.vfm.curve.csv")).unwrap();
    assert_eq!(parse_two_columns(&curve).unwrap().len(), 3);
}

#[test]
fn defaults_output_is_a_valid_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["defaults"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("hidden = 20\n"));
    let conf = dir.path().join("d.conf");
    std::fs::write(&conf, stdout(&o).replace("hidden = 20", "hidden = 9")).unwrap();
    let o = run(&["defaults", "--config", s(&conf)]);
    assert!(stdout(&o).contains("hidden = 9\n"));
}
