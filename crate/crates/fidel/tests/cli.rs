use std::path::{Path, PathBuf};
use std::process::Command;

use clap::CommandFactory;
use fidel::checkpoint::Checkpoint;
use fidel::cli::Cli;
use fidel::container::{container_path, read_container};
use fidel::metrics::read_metrics;
use fidel_core::glyph::SplitKind;
use fidel_core::synth::clean_glyph;
use fidel_core::AlphabetGrid;
use tempfile::TempDir;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn fidel_env(args: &[&str], env: &[(&str, &str)]) -> Run {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fidel"));
    cmd.args(args).env_remove("FIDEL_DATA_DIR").env_remove("SOURCE_DATE_EPOCH");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    Run {
        code: out.status.code().unwrap_or(-1),
        stdout: String::from_utf8_lossy(&out.stdout).into_owned(),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn fidel(args: &[&str]) -> Run {
    fidel_env(args, &[])
}

fn ok(args: &[&str]) -> Run {
    let r = fidel(args);
    assert_eq!(r.code, 0, "fidel {args:?} failed:\n{}{}", r.stdout, r.stderr);
    r
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_MODEL: &str = r#"{"conv_stages":[{"filter_size":5,"filters":6},{"filter_size":5,"filters":8}],"hidden":24}"#;

fn small_model(dir: &Path) -> PathBuf {
    let path = dir.join("model.json");
    std::fs::write(&path, SMALL_MODEL).unwrap();
    path
}

fn synth(dir: &Path, rows: &str, cols: &str, per_class: &str) {
    ok(&["synth", "--rows", rows, "--cols", cols, "--per-class", per_class, "--seed", "2", "--out", s(dir)]);
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

#[test]
fn help_matches_golden_files() {
    let mut subcommands = vec![String::new()];
    subcommands.extend(Cli::command().get_subcommands().map(|c| c.get_name().to_string()));
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    for sub in subcommands {
        let args: Vec<&str> = if sub.is_empty() { vec!["--help"] } else { vec![sub.as_str(), "--help"] };
        let r = ok(&args);
        let name = if sub.is_empty() { "fidel".to_string() } else { sub.clone() };
        let path = golden_dir().join(format!("help-{name}.txt"));
        if update {
            std::fs::create_dir_all(golden_dir()).unwrap();
            std::fs::write(&path, &r.stdout).unwrap();
        }
        let expected = std::fs::read_to_string(&path).unwrap_or_else(|_| panic!("missing {}", path.display()));
        assert_eq!(r.stdout, expected, "help of {name:?} changed; rerun with UPDATE_GOLDEN=1 if intended");
    }
}

#[test]
fn help_lists_every_flag() {
    let cli = Cli::command();
    for sub in cli.get_subcommands() {
        let help = ok(&[sub.get_name(), "--help"]).stdout;
        for arg in sub.get_arguments() {
            if let Some(long) = arg.get_long() {
                assert!(help.contains(&format!("--{long}")), "{} --help omits --{long}", sub.get_name());
            }
        }
    }
}

#[test]
fn usage_errors_exit_one() {
    let r = fidel(&["ingest", "--src", "x", "--out", "y"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("--grid") && r.stderr.contains("Usage"), "{}", r.stderr);
    assert_eq!(fidel(&["plot", "--metrics", "a.csv", "--out", "b.svg", "--bogus"]).code, 1);
    assert_eq!(fidel(&["frobnicate"]).code, 1);
    assert_eq!(fidel(&["train", "--data", "d", "--out", "o", "--alphas", "0,1,1"]).code, 1);
    assert_eq!(fidel(&["augment", "--in", "d", "--out", "o", "--counts", "10,10"]).code, 1);
    assert_eq!(fidel(&["--version"]).code, 0);
}

#[test]
fn io_and_format_errors_exit_two() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2", "2", "12");
    let missing = fidel(&["eval", "--checkpoint", s(&tmp.path().join("none.ckpt")), "--data", s(&container_path(&data, SplitKind::Test))]);
    assert_eq!(missing.code, 2, "{}", missing.stderr);
    let bad = tmp.path().join("bad.ckpt");
    std::fs::write(&bad, b"AMCPxx").unwrap();
    let r = fidel(&["eval", "--checkpoint", s(&bad), "--data", s(&container_path(&data, SplitKind::Test))]);
    assert_eq!(r.code, 2);
    assert!(r.stderr.contains("byte"), "{}", r.stderr);
}

fn write_writer(root: &Path, writer: &str, grid: &AlphabetGrid, shift: usize) {
    let dir = root.join(writer);
    std::fs::create_dir_all(&dir).unwrap();
    for e in grid.entries() {
        let glyph = clean_glyph(e.row, e.col, 32);
        let img = image::GrayImage::from_fn(32, 32, |x, y| {
            let v = glyph.get(&[(y as usize + shift) % 32, x as usize, 0]);
            image::Luma([(v * 255.0).round() as u8])
        });
        img.save(dir.join(format!("{}.png", e.label))).unwrap();
    }
}

fn twelve_writer_fixture(root: &Path, grid: &AlphabetGrid) {
    for w in 0..12 {
        write_writer(root, &format!("w{w:02}"), grid, w);
    }
}

#[test]
fn ingest_splits_by_writer_and_survives_corrupt_files() {
    let tmp = TempDir::new().unwrap();
    let grid = AlphabetGrid::dense(2, 2).unwrap();
    let src = tmp.path().join("src");
    twelve_writer_fixture(&src, &grid);
    std::fs::write(src.join("w03/2.png"), b"not an image").unwrap();
    let grid_file = tmp.path().join("grid.csv");
    std::fs::write(&grid_file, grid.to_file_string()).unwrap();
    let out = tmp.path().join("out");
    let r = ok(&["ingest", "--src", s(&src), "--grid", s(&grid_file), "--out", s(&out), "--seed", "4"]);
    assert!(r.stderr.contains("w03") && r.stderr.contains("2.png"), "{}", r.stderr);

    let mut total = 0;
    let mut writers = Vec::new();
    for split in SplitKind::ALL {
        let (manifest, data) = read_container(&container_path(&out, split)).unwrap();
        assert_eq!(manifest.counts.get(split), data.len());
        data.check_targets(&grid).unwrap();
        total += data.len();
        writers.push(data.writer_names.clone());
    }
    assert_eq!(total, 12 * 4 - 1);
    assert_eq!(writers.iter().map(Vec::len).collect::<Vec<_>>(), [9, 2, 1]);
    for w in &writers[0] {
        assert!(!writers[1].contains(w) && !writers[2].contains(w));
    }
    assert!(!writers[1].iter().any(|w| writers[2].contains(w)));

    let again = tmp.path().join("again");
    ok(&["ingest", "--src", s(&src), "--grid", s(&grid_file), "--out", s(&again), "--seed", "4"]);
    for split in SplitKind::ALL {
        assert_eq!(
            std::fs::read(container_path(&out, split)).unwrap(),
            std::fs::read(container_path(&again, split)).unwrap()
        );
    }
}

#[test]
fn ingest_rejects_labels_outside_the_grid() {
    let tmp = TempDir::new().unwrap();
    let grid = AlphabetGrid::default_grid();
    let src = tmp.path().join("src");
    std::fs::create_dir_all(src.join("w1")).unwrap();
    image::GrayImage::from_pixel(20, 20, image::Luma([255])).save(src.join("w1/300.png")).unwrap();
    let grid_file = tmp.path().join("grid.csv");
    std::fs::write(&grid_file, grid.to_file_string()).unwrap();
    let r = fidel(&["ingest", "--src", s(&src), "--grid", s(&grid_file), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("label out of range"), "{}", r.stderr);
}

#[test]
fn ingest_of_an_empty_directory_warns() {
    let tmp = TempDir::new().unwrap();
    let report = fidel::ingest::ingest_directory(tmp.path(), &AlphabetGrid::default_grid(), 32).unwrap();
    assert!(report.samples.is_empty());
    assert_eq!(report.warnings.len(), 1);
}

#[test]
fn synth_counts_and_grid() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("data");
    let r = ok(&["synth", "--rows", "6", "--cols", "4", "--per-class", "60", "--seed", "1", "--out", s(&out)]);
    assert!(r.stdout.contains("classes: 24"), "{}", r.stdout);
    let mut total = 0;
    for split in SplitKind::ALL {
        total += read_container(&container_path(&out, split)).unwrap().1.len();
    }
    assert_eq!(total, 1440);
    let grid_text = std::fs::read_to_string(out.join("grid.csv")).unwrap();
    let spec = fidel_core::grid::GridSpec::parse(&grid_text).unwrap();
    assert!(spec.violations().is_empty());

    let again = tmp.path().join("again");
    ok(&["synth", "--rows", "6", "--cols", "4", "--per-class", "60", "--seed", "1", "--out", s(&again)]);
    for file in ["train.amcr", "val.amcr", "test.amcr", "manifest.json", "grid.csv"] {
        assert_eq!(std::fs::read(out.join(file)).unwrap(), std::fs::read(again.join(file)).unwrap(), "{file}");
    }
}

#[test]
fn synth_out_defaults_to_the_data_dir_variable() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("envdata");
    let r = fidel_env(&["synth", "--rows", "2", "--cols", "2", "--per-class", "12"], &[("FIDEL_DATA_DIR", s(&dir))]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(container_path(&dir, SplitKind::Train).exists());
}

#[test]
fn augment_hits_counts_and_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2", "3", "12");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for out in [&a, &b] {
        ok(&["augment", "--in", s(&data), "--counts", "10,10,10", "--seed", "8", "--out", s(out), "--transform-logs"]);
    }
    for split in SplitKind::ALL {
        let (manifest, d) = read_container(&container_path(&a, split)).unwrap();
        assert_eq!(d.len(), 60);
        assert_eq!(manifest.counts.get(split), 60);
        assert!(manifest.augmentation.is_some() && manifest.augmentation_digest.is_some());
        assert_eq!(std::fs::read(container_path(&a, split)).unwrap(), std::fs::read(container_path(&b, split)).unwrap());
    }
    let log = std::fs::read_to_string(a.join("transforms-train.csv")).unwrap();
    let mut lines = log.lines();
    assert_eq!(lines.next(), Some("class,sourceWriter,transforms,params"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 60);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        if f[2] == "none" {
            continue;
        }
        for (name, value) in f[2].split('+').zip(f[3].split(';')) {
            let v: f64 = value.parse().unwrap();
            match name {
                "rotate" => assert!((-15.0..=15.0).contains(&v)),
                "shrink" => assert!((0.70..=0.87).contains(&v)),
                "noise" => assert_eq!(v, 0.02),
                other => panic!("unknown transform {other}"),
            }
        }
    }

    let r = fidel(&["augment", "--in", s(&data), "--counts", "2,10,10", "--out", s(&tmp.path().join("c"))]);
    assert_eq!(r.code, 1, "fewer targets than originals must be rejected: {}", r.stderr);
}

#[test]
fn train_writes_one_row_per_epoch_and_split() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2", "2", "12");
    let model = small_model(tmp.path());
    let out = tmp.path().join("run");
    ok(&["train", "--data", s(&data), "--model", s(&model), "--max-epochs", "1", "--out", s(&out)]);
    let rows = read_metrics(&out.join("metrics.csv")).unwrap();
    assert_eq!(rows.iter().map(|r| (r.epoch, r.split.as_str())).collect::<Vec<_>>(), [(1, "train"), (1, "val")]);
    assert!(rows.iter().all(|r| r.seconds == 0.0));
    for f in ["best.ckpt", "last.ckpt", "config.json"] {
        assert!(out.join(f).exists(), "{f}");
    }

    let timed = tmp.path().join("timed");
    ok(&["train", "--data", s(&data), "--model", s(&model), "--max-epochs", "1", "--wall-clock", "--out", s(&timed)]);
    assert!(read_metrics(&timed.join("metrics.csv")).unwrap().iter().all(|r| r.seconds > 0.0));
}

#[test]
fn resumed_training_matches_an_uninterrupted_run() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2", "2", "12");
    let model = small_model(tmp.path());
    let straight = tmp.path().join("straight");
    let resumed = tmp.path().join("resumed");
    ok(&["train", "--data", s(&data), "--model", s(&model), "--max-epochs", "5", "--out", s(&straight)]);
    ok(&["train", "--data", s(&data), "--model", s(&model), "--max-epochs", "2", "--out", s(&resumed)]);
    ok(&["train", "--data", s(&data), "--model", s(&model), "--max-epochs", "5", "--out", s(&resumed), "--resume"]);
    for f in ["metrics.csv", "best.ckpt", "last.ckpt", "config.json"] {
        assert_eq!(std::fs::read(straight.join(f)).unwrap(), std::fs::read(resumed.join(f)).unwrap(), "{f}");
    }
    let r = fidel(&["train", "--data", s(&data), "--model", s(&model), "--max-epochs", "6", "--alphas", "1,0,0", "--out", s(&resumed), "--resume"]);
    assert_eq!(r.code, 1, "resuming with other alphas must fail");
}

#[test]
fn train_reads_the_data_dir_variable() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2", "2", "12");
    let model = small_model(tmp.path());
    let out = tmp.path().join("run");
    let r = fidel_env(
        &["train", "--model", s(&model), "--max-epochs", "1", "--out", s(&out)],
        &[("FIDEL_DATA_DIR", s(&data))],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
}

#[test]
fn eval_prints_the_metric_row_and_predict_recovers_a_memorized_triple() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    ok(&["synth", "--rows", "2", "--cols", "2", "--per-class", "4", "--val-per-class", "0", "--test-per-class", "1", "--out", s(&data)]);
    let model = small_model(tmp.path());
    let config = tmp.path().join("train.json");
    std::fs::write(&config, r#"{"learning_rate":0.003,"keep_prob":1.0,"l2_lambda":0.0,"batch_size":4,"max_epochs":150}"#).unwrap();
    let out = tmp.path().join("run");
    ok(&["train", "--data", s(&data), "--model", s(&model), "--config", s(&config), "--out", s(&out)]);
    let ckpt = out.join("last.ckpt");

    let r = ok(&["eval", "--checkpoint", s(&ckpt), "--data", s(&container_path(&data, SplitKind::Train))]);
    let lines: Vec<&str> = r.stdout.lines().collect();
    assert_eq!(lines[0], fidel::cli::EVAL_HEADER);
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(fields.len(), 10);
    assert_eq!(fields[0], "train");
    let values: Vec<f64> = fields[1..].iter().map(|v| v.parse().unwrap()).collect();
    assert_eq!(values[5], 1.0, "memorized set should be fully recognized: {}", lines[1]);

    let (_, train) = read_container(&container_path(&data, SplitKind::Train)).unwrap();
    let i = 5;
    let px = &train.pixels[i * 1024..(i + 1) * 1024];
    let img = image::GrayImage::from_raw(32, 32, px.to_vec()).unwrap();
    let path = tmp.path().join("glyph.png");
    img.save(&path).unwrap();
    let r = ok(&["predict", "--checkpoint", s(&ckpt), "--image", s(&path)]);
    let expected = format!("label={} row={} col={} ", train.labels[i], train.rows[i], train.cols[i]);
    assert!(r.stdout.starts_with(&expected), "{} vs {expected}", r.stdout);
    assert!(r.stdout.contains("consistent=true"));
    assert!(r.stdout.contains("label_conf="));
}

#[test]
fn gradcheck_reports_layers_and_catches_the_injected_fault() {
    let tmp = TempDir::new().unwrap();
    let model = small_model(tmp.path());
    let grid = tmp.path().join("grid.csv");
    std::fs::write(&grid, AlphabetGrid::dense(3, 2).unwrap().to_file_string()).unwrap();
    let r = ok(&["gradcheck", "--config", s(&model), "--grid", s(&grid), "--seed", "1"]);
    for p in ["conv1.weight", "conv2.bias", "hidden.weight", "head_label.bias", "head_row.weight", "head_col.bias"] {
        assert!(r.stdout.contains(p), "{p} missing:\n{}", r.stdout);
    }
    assert!(r.stdout.trim_end().ends_with("PASS"));
    let f = fidel(&["gradcheck", "--config", s(&model), "--grid", s(&grid), "--seed", "1", "--inject-fault"]);
    assert_eq!(f.code, 1);
    assert!(f.stderr.contains("head_label.bias"), "{}", f.stderr);
}

#[test]
fn sweep_and_plot_compare_alpha_triples() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2", "2", "12");
    let model = small_model(tmp.path());
    let out = tmp.path().join("sweep");
    ok(&[
        "sweep", "--data", s(&data), "--model", s(&model), "--max-epochs", "2", "--alphas", "1,0,0", "--alphas",
        "1,0.35,0.65", "--seeds", "1", "--out", s(&out),
    ]);
    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 3);
    assert!(summary.lines().nth(2).unwrap().starts_with("1 0.35 0.65,1,2,"));
    let csvs = [out.join("a1_0_0-s1/metrics.csv"), out.join("a1_0.35_0.65-s1/metrics.csv")];

    let svg = tmp.path().join("curves.svg");
    ok(&["plot", "--metrics", s(&csvs[0]), s(&csvs[1]), "--out", s(&svg), "--deterministic"]);
    let text = std::fs::read_to_string(&svg).unwrap();
    assert!(text.contains("\u{3b1}=(1, 0, 0)") && text.contains("\u{3b1}=(1, 0.35, 0.65)"));
    assert!(text.contains("total loss") && text.contains("label accuracy"));
    assert!(!text.contains("generated at"));
    let svg2 = tmp.path().join("curves2.svg");
    ok(&["plot", "--metrics", s(&csvs[0]), s(&csvs[1]), "--out", s(&svg2), "--deterministic"]);
    assert_eq!(text, std::fs::read_to_string(&svg2).unwrap());

    let stamped = tmp.path().join("stamped.svg");
    ok(&["plot", "--metrics", s(&csvs[0]), "--out", s(&stamped)]);
    assert!(std::fs::read_to_string(&stamped).unwrap().contains("generated at unix time"));
}

#[test]
fn plot_of_an_empty_csv_writes_nothing() {
    let tmp = TempDir::new().unwrap();
    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let header_only = tmp.path().join("header.csv");
    std::fs::write(&header_only, format!("{}\n", fidel::metrics::METRICS_HEADER)).unwrap();
    for csv in [&empty, &header_only] {
        let out = tmp.path().join("x.svg");
        let r = fidel(&["plot", "--metrics", s(csv), "--out", s(&out)]);
        assert_eq!(r.code, 1, "{}", r.stderr);
        assert!(!out.exists());
    }
}

#[test]
fn early_stopping_keeps_the_best_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    synth(&data, "2", "2", "12");
    let model = small_model(tmp.path());
    let config = tmp.path().join("plateau.json");
    std::fs::write(&config, r#"{"learning_rate":1e-12,"early_stop_patience":3}"#).unwrap();
    let out = tmp.path().join("run");
    let r = ok(&["train", "--data", s(&data), "--model", s(&model), "--config", s(&config), "--out", s(&out)]);
    assert!(r.stdout.contains("early stop: yes"), "{}", r.stdout);
    let best = Checkpoint::read(&out.join("best.ckpt")).unwrap();
    let last = Checkpoint::read(&out.join("last.ckpt")).unwrap();
    assert_eq!(best.meta.epoch, 1);
    assert_eq!(last.meta.epoch, 4);
    let rows = read_metrics(&out.join("metrics.csv")).unwrap();
    assert_eq!(rows.len(), 8);
}
