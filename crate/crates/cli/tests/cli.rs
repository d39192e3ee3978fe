use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pidd_core::container::load_complex;
use pidd_core::phantom::{load_external, DataLayout, Split};
use pidd_nn::checkpoint::save_checkpoint;
use pidd_nn::PiddGan;
use pidd_train::TrainConfig;

/// Set to regenerate the golden help texts.
const BLESS_VAR: &str = "PIDD_BLESS";

fn pidd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pidd"))
        .args(args)
        .output()
        .expect("spawn pidd")
}

fn ok(args: &[&str]) -> Output {
    let out = pidd(args);
    assert!(
        out.status.success(),
        "pidd {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn phantoms(dir: &Path, count: usize, ratios: &str) -> PathBuf {
    let ds = dir.join("ds");
    let count = count.to_string();
    ok(&["phantom", "--out", s(&ds), "--count", &count, "--size", "32", "--seed", "5", "--ratios", ratios]);
    ds
}

#[test]
fn help_texts_match_golden_files() {
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let bless = std::env::var_os(BLESS_VAR).is_some();
    for sub in ["", "phantom", "mask", "train", "recon", "eval"] {
        let args: Vec<&str> = if sub.is_empty() { vec!["--help"] } else { vec![sub, "--help"] };
        let text = String::from_utf8(ok(&args).stdout).unwrap();
        let name = if sub.is_empty() { "pidd" } else { sub };
        let path = golden.join(format!("{name}.help.txt"));
        if bless {
            std::fs::write(&path, &text).unwrap();
            continue;
        }
        let want = std::fs::read_to_string(&path)
            .unwrap_or_else(|_| panic!("missing {}; rerun with {BLESS_VAR}=1", path.display()));
        assert_eq!(text, want, "help text of '{name}' changed");
    }
}

#[test]
fn mask_output_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let p = dir.path().join(name);
        ok(&["mask", "--kind", "gaussian1d", "--fraction", "0.2", "--size", "48", "--seed", seed, "--out", s(&p)]);
        (std::fs::read(&p).unwrap(), std::fs::read(p.with_extension("meta")).unwrap())
    };
    let a = run("a.pidt", "9");
    let b = run("b.pidt", "9");
    let c = run("c.pidt", "10");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
}

#[test]
fn mask_settings_come_from_config_file_unless_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mask.conf");
    std::fs::write(&cfg, "# mask\nkind = poisson2d\nfraction = 0.4\nsize = 40\n").unwrap();
    let a = dir.path().join("a.pidt");
    let b = dir.path().join("b.pidt");
    ok(&["mask", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["mask", "--config", s(&cfg), "--fraction", "0.2", "--out", s(&b)]);
    let ma = pidd_core::SamplingMask::load(&a).unwrap();
    let mb = pidd_core::SamplingMask::load(&b).unwrap();
    assert_eq!(ma.kind(), pidd_core::MaskKind::Poisson2d);
    assert_eq!(ma.dims(), (40, 40));
    assert!((ma.fraction() - 0.4).abs() < 0.01);
    assert!((mb.fraction() - 0.2).abs() < 0.01);
}

#[test]
fn untrained_global_residual_model_returns_fully_sampled_input() {
    let dir = tempfile::tempdir().unwrap();
    let ds = phantoms(dir.path(), 10, "0:0:1");
    let ckpt = dir.path().join("ckpt");
    std::fs::create_dir_all(&ckpt).unwrap();
    let cfg = TrainConfig {
        gen_base: 8,
        disc_base: 8,
        ..Default::default()
    };
    std::fs::write(ckpt.join("config.txt"), cfg.to_text()).unwrap();
    let mut model = PiddGan::<f32>::new(cfg.gan_config(32, 32), cfg.seed).unwrap();
    let hash = model.config().hash();
    save_checkpoint(&ckpt.join("best.pidt"), &hash, |f| model.visit_all(f)).unwrap();

    let out = dir.path().join("rec");
    ok(&["recon", "--checkpoint", s(&ckpt), "--data", s(&ds), "--fully-sampled", "--out", s(&out)]);
    let samples = load_external(ds.join("manifest.tsv"), &DataLayout::Manifest { split: Some(Split::Test) }).unwrap();
    assert_eq!(samples.len(), 10);
    for smp in &samples {
        let rec = load_complex::<f64>(out.join(format!("{}_recon.pidt", smp.id))).unwrap();
        let peak = smp.truth.magnitude().into_iter().fold(0.0, f64::max);
        for (r, t) in rec.data().iter().zip(smp.truth.data()) {
            assert!((r - t).norm() <= 1e-5 * peak, "{}: {r} vs {t}", smp.id);
        }
        for kind in ["recon", "zf", "edges", "diff"] {
            assert!(out.join(format!("{}_{kind}.png", smp.id)).is_file());
        }
    }
}

#[test]
fn eval_writes_one_row_per_image_plus_summary() {
    let dir = tempfile::tempdir().unwrap();
    let ds = phantoms(dir.path(), 10, "0:0:1");
    let csv = dir.path().join("zf.csv");
    ok(&["eval", "--data", s(&ds), "--method", "zf", "--out", s(&csv)]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "image_id,nmse,psnr,ssim");
    assert_eq!(lines.len(), 1 + 10 + 2);
    assert!(lines[11].starts_with("mean,"));
    assert!(lines[12].starts_with("std,"));
    let nmse: Vec<f64> = lines[1..11]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    let mean: f64 = lines[11].split(',').nth(1).unwrap().parse().unwrap();
    assert!((nmse.iter().sum::<f64>() / 10.0 - mean).abs() < 1e-12);
}

#[test]
fn unknown_flags_and_keys_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pidd(&["mask", "--bogus", "1"]).status.code(), Some(2));
    assert_eq!(pidd(&["frobnicate"]).status.code(), Some(2));
    let cfg = dir.path().join("c.conf");
    std::fs::write(&cfg, "fraction = 0.3\ncolour = blue\n").unwrap();
    let out = pidd(&["mask", "--config", s(&cfg), "--out", s(&dir.path().join("m.pidt"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("colour"));
    let ds = phantoms(dir.path(), 10, "5:2:3");
    let out = pidd(&["train", "--data", s(&ds), "--out", s(&dir.path().join("r")), "--set", "nope=1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = pidd(&["mask", "--fraction", "1.5", "--out", s(&dir.path().join("m.pidt"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn exit_codes_follow_error_classes() {
    let dir = tempfile::tempdir().unwrap();
    let ds = phantoms(dir.path(), 10, "5:2:3");

    let missing = dir.path().join("nowhere.tsv");
    assert_eq!(pidd(&["eval", "--data", s(&missing)]).status.code(), Some(1));

    let bad = dir.path().join("bad.pidt");
    std::fs::write(&bad, b"not a container").unwrap();
    assert_eq!(pidd(&["eval", "--data", s(&bad)]).status.code(), Some(3));

    let out = pidd(&[
        "train", "--data", s(&ds), "--out", s(&dir.path().join("r")), "--batch", "2", "--max-steps", "3",
        "--set", "gen_base=8", "--set", "disc_base=8", "--set", "lr_init=1e30", "--set", "lr_min=1e29",
    ]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn checkpoint_from_other_dimensions_is_a_layout_error() {
    let dir = tempfile::tempdir().unwrap();
    let ds = phantoms(dir.path(), 10, "0:0:1");
    let ckpt = dir.path().join("ckpt");
    std::fs::create_dir_all(&ckpt).unwrap();
    let cfg = TrainConfig {
        gen_base: 8,
        disc_base: 8,
        ..Default::default()
    };
    std::fs::write(ckpt.join("config.txt"), cfg.to_text()).unwrap();
    let mut model = PiddGan::<f32>::new(cfg.gan_config(64, 64), cfg.seed).unwrap();
    let hash = model.config().hash();
    save_checkpoint(&ckpt.join("best.pidt"), &hash, |f| model.visit_all(f)).unwrap();
    let out = pidd(&["recon", "--checkpoint", s(&ckpt), "--data", s(&ds), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
}
