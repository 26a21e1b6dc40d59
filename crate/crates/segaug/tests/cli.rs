//! End-to-end checks of the `segaug` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use segaug::cli::read_manifest;
use segaug::image::{load_image, save_image, Color, RasterImage};

fn segaug(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segaug"))
        .args(args)
        .env_remove("SEGAUG_SEED")
        .output()
        .expect("binary runs")
}

fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

/// White canvas with a black square and a red square.
fn two_square_logo(size: u32) -> RasterImage {
    let mut img = RasterImage::filled(size, size, Color::WHITE);
    for y in 2..6 {
        for x in 2..6 {
            img.set(x, y, Color::BLACK);
        }
    }
    for y in 8..12 {
        for x in 8..12 {
            img.set(x, y, Color::new(200, 16, 16));
        }
    }
    img
}

#[test]
fn augment_writes_one_output_and_manifest_line_per_image() {
    let dir = tempfile::tempdir().unwrap();
    let in_dir = dir.path().join("in");
    let out_dir = dir.path().join("out");
    fs::create_dir_all(in_dir.join("sub")).unwrap();
    save_image(&two_square_logo(16), in_dir.join("a.ppm")).unwrap();
    save_image(&two_square_logo(20), in_dir.join("b.ppm")).unwrap();
    save_image(&two_square_logo(18), in_dir.join("sub/c.ppm")).unwrap();

    let output = segaug(&[
        "augment",
        "--in",
        in_dir.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "7",
    ]);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));

    for name in ["a.ppm", "b.ppm", "sub/c.ppm"] {
        assert!(out_dir.join(name).is_file(), "missing output {name}");
    }
    let manifest = fs::read_to_string(out_dir.join("manifest.jsonl")).unwrap();
    let entries = read_manifest(&manifest).unwrap();
    assert_eq!(entries.len(), 3);
    assert_eq!(entries[0].src, "a.ppm");
    assert_eq!(entries[2].src, "sub/c.ppm");
    assert!(entries.iter().all(|e| e.rng == "chacha8"));
}

#[test]
fn augment_with_zero_probability_copies_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let in_dir = dir.path().join("in");
    let out_dir = dir.path().join("out");
    fs::create_dir_all(&in_dir).unwrap();
    save_image(&two_square_logo(16), in_dir.join("a.ppm")).unwrap();
    save_image(&two_square_logo(16), in_dir.join("b.png")).unwrap();

    let output = segaug(&[
        "augment",
        "--in",
        in_dir.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--p",
        "0",
        "--transforms",
        "color_change,rotation,removal",
    ]);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));

    for name in ["a.ppm", "b.png"] {
        assert_eq!(
            load_image(out_dir.join(name)).unwrap(),
            load_image(in_dir.join(name)).unwrap(),
            "{name} must round-trip unchanged"
        );
    }
    // our canonical encodings are byte-stable, so the copies are byte-equal
    assert_eq!(
        fs::read(out_dir.join("a.ppm")).unwrap(),
        fs::read(in_dir.join("a.ppm")).unwrap()
    );
    let manifest = fs::read_to_string(out_dir.join("manifest.jsonl")).unwrap();
    for entry in read_manifest(&manifest).unwrap() {
        assert!(entry.decisions.iter().all(|d| !d.applied));
    }
}

#[test]
fn augment_tallies_per_file_failures() {
    let dir = tempfile::tempdir().unwrap();
    let in_dir = dir.path().join("in");
    let out_dir = dir.path().join("out");
    fs::create_dir_all(&in_dir).unwrap();
    save_image(&two_square_logo(16), in_dir.join("good.ppm")).unwrap();
    fs::write(in_dir.join("bad.ppm"), b"P6\n9 9\n255\nshort").unwrap();

    let output = segaug(&[
        "augment",
        "--in",
        in_dir.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(!output.status.success(), "a broken file must fail the run");
    assert!(stderr_of(&output).contains("bad.ppm"));
    // the good file is still processed and recorded
    assert!(out_dir.join("good.ppm").is_file());
    let manifest = fs::read_to_string(out_dir.join("manifest.jsonl")).unwrap();
    assert_eq!(read_manifest(&manifest).unwrap().len(), 1);
}

#[test]
fn augment_debug_segments_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let in_dir = dir.path().join("in");
    let out_dir = dir.path().join("out");
    let dbg_dir = dir.path().join("dbg");
    fs::create_dir_all(&in_dir).unwrap();
    save_image(&two_square_logo(16), in_dir.join("a.ppm")).unwrap();

    let output = segaug(&[
        "augment",
        "--in",
        in_dir.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--debug-segments",
        dbg_dir.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    assert!(dbg_dir.join("a.labels.png").is_file());
    let report = fs::read_to_string(dbg_dir.join("a.segments.txt")).unwrap();
    assert_eq!(report.lines().count(), 3); // background + two squares
}

#[test]
fn env_var_supplies_the_master_seed() {
    let dir = tempfile::tempdir().unwrap();
    let in_dir = dir.path().join("in");
    fs::create_dir_all(&in_dir).unwrap();
    save_image(&two_square_logo(16), in_dir.join("a.ppm")).unwrap();

    let run = |out: &Path, env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_segaug"));
        cmd.args(["augment", "--in", in_dir.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        if let Some(seed) = flag {
            cmd.args(["--seed", seed]);
        }
        match env {
            Some(v) => cmd.env("SEGAUG_SEED", v),
            None => cmd.env_remove("SEGAUG_SEED"),
        };
        assert!(cmd.output().unwrap().status.success());
        fs::read(out.join("a.ppm")).unwrap()
    };
    let via_env = run(&dir.path().join("o1"), Some("5"), None);
    let via_flag = run(&dir.path().join("o2"), None, Some("5"));
    let other = run(&dir.path().join("o3"), None, Some("6"));
    assert_eq!(via_env, via_flag);
    assert_ne!(via_env, other);
}

#[test]
fn eval_prints_perfect_and_worst_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let run_path = dir.path().join("run.tsv");
    let rel_path = dir.path().join("rel.tsv");

    fs::write(&run_path, "#N=100\nq1\td1\t1\nq1\tx\t2\n").unwrap();
    fs::write(&rel_path, "q1\td1\n").unwrap();
    let output = segaug(&[
        "eval",
        "--run",
        run_path.to_str().unwrap(),
        "--rel",
        rel_path.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let text = stdout_of(&output);
    assert!(text.contains("query=q1 nar=0.000000 r@1=1.000000 r@8=1.000000"));

    // worst case: N = 10, relevant at ranks 9 and 10 -> NAR 0.8
    fs::write(
        &run_path,
        "#N=10\nq1\td1\t9\nq1\td2\t10\n",
    )
    .unwrap();
    fs::write(&rel_path, "q1\td1\nq1\td2\n").unwrap();
    let output = segaug(&[
        "eval",
        "--run",
        run_path.to_str().unwrap(),
        "--rel",
        rel_path.to_str().unwrap(),
        "--ks",
        "1",
    ]);
    assert!(output.status.success());
    assert!(stdout_of(&output).contains("nar=0.800000"));
}

#[test]
fn eval_names_the_malformed_line() {
    let dir = tempfile::tempdir().unwrap();
    let run_path = dir.path().join("run.tsv");
    let rel_path = dir.path().join("rel.tsv");
    fs::write(&run_path, "#N=10\nq1\td1\t1\nbroken line\n").unwrap();
    fs::write(&rel_path, "q1\td1\n").unwrap();
    let output = segaug(&[
        "eval",
        "--run",
        run_path.to_str().unwrap(),
        "--rel",
        rel_path.to_str().unwrap(),
    ]);
    assert!(!output.status.success());
    assert!(stderr_of(&output).contains("line 3"), "stderr: {}", stderr_of(&output));
}

#[test]
fn loss_check_matches_the_exact_ap_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch.txt");
    fs::write(&batch, "3, 1\n2, 0\n1, 1\n").unwrap();
    let output = segaug(&[
        "loss-check",
        "--batch",
        batch.to_str().unwrap(),
        "--tau",
        "1e-4",
        "--h",
        "1e-6",
    ]);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    let text = stdout_of(&output);
    let loss_line = text.lines().find(|l| l.starts_with("loss=")).unwrap();
    let loss: f64 = loss_line.trim_start_matches("loss=").parse().unwrap();
    assert!((loss - (1.0 - 5.0 / 6.0)).abs() < 1e-3, "loss {loss}");
    assert!(text.contains("status=pass"));
}

#[test]
fn loss_check_single_positive_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch.txt");
    fs::write(&batch, "0.5, 1\n").unwrap();
    let output = segaug(&["loss-check", "--batch", batch.to_str().unwrap()]);
    assert!(output.status.success());
    assert!(stdout_of(&output).contains("loss=0.000000000000"));
}

#[test]
fn loss_check_passes_on_a_random_64_item_batch() {
    let dir = tempfile::tempdir().unwrap();
    let batch = dir.path().join("batch.txt");
    let mut text = String::new();
    for i in 0..64 {
        // distinct, tau-scaled scores; every 5th item is a positive
        text.push_str(&format!("{}, {}\n", i as f64 * 0.003, u8::from(i % 5 == 0)));
    }
    fs::write(&batch, text).unwrap();
    let output = segaug(&[
        "loss-check",
        "--batch",
        batch.to_str().unwrap(),
        "--tau",
        "0.05",
    ]);
    assert!(output.status.success(), "stderr: {}", stderr_of(&output));
    assert!(stdout_of(&output).contains("status=pass"));
}

#[test]
fn sample_batches_zero_count_is_empty_success() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("sim.txt");
    fs::write(&manifest, "[group]\na\nb\nc\nd\n[pool]\np1\np2\np3\np4\n").unwrap();
    let output = segaug(&[
        "sample-batches",
        "--manifest",
        manifest.to_str().unwrap(),
        "--count",
        "0",
    ]);
    assert!(output.status.success());
    assert!(stdout_of(&output).is_empty());
}

#[test]
fn sample_batches_is_deterministic_and_shaped() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("sim.txt");
    let mut text = String::from("[group]\na\nb\nc\nd\ne\n[pool]\n");
    for i in 0..20 {
        text.push_str(&format!("p{i}\n"));
    }
    fs::write(&manifest, text).unwrap();
    let args = [
        "sample-batches",
        "--manifest",
        manifest.to_str().unwrap(),
        "--batch-size",
        "8",
        "--count",
        "5",
        "--seed",
        "3",
    ];
    let first = segaug(&args);
    let second = segaug(&args);
    assert!(first.status.success());
    assert_eq!(stdout_of(&first), stdout_of(&second));
    let text = stdout_of(&first);
    assert_eq!(text.lines().count(), 5);
    for line in text.lines() {
        let (pos, neg) = line.split_once('|').expect("pipe separator");
        assert_eq!(pos.split(',').count(), 4);
        assert_eq!(neg.split(',').count(), 4);
    }
}

#[test]
fn unknown_flags_are_rejected() {
    let output = segaug(&["augment", "--whatever"]);
    assert!(!output.status.success());
}
