use std::path::{Path, PathBuf};
use std::process::Command;

use geocorr::flo::{read_flow, write_flow};
use geocorr::image_io::{read_image, write_png};
use geocorr_core::apps::{exaggerate, transfer};
use geocorr_core::fitting::{
    hough_fit, identify_model_with_cells, refine_flow, FitResult, DEFAULT_CELLS,
};
use geocorr_core::models::{flow_field, DistortionParams, DistortionType, ParamRange};
use geocorr_core::resample::ResampleOptions;
use geocorr_core::{FlowField, ImageBuffer};
use serde_json::Value;

struct Output {
    code: i32,
    stdout: String,
    stderr: String,
}

fn geocorr(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_geocorr"))
        .args(args)
        .output()
        .unwrap();
    Output {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pattern(w: usize, h: usize, phase: f32) -> ImageBuffer {
    ImageBuffer::from_fn(w, h, 3, |x, y| {
        let (xf, yf) = (x as f32, y as f32);
        [
            0.5 + 0.4 * (xf * 0.13 + phase).sin(),
            0.5 + 0.4 * (yf * 0.11 - phase).cos(),
            ((x / 8 + y / 8) % 2) as f32,
            1.0,
        ]
    })
    .unwrap()
}

fn flow_file(dir: &Path, name: &str, params: &DistortionParams, w: usize, h: usize) -> PathBuf {
    let path = dir.join(name);
    write_flow(&path, &flow_field(params, w, h)).unwrap();
    path
}

#[test]
fn epe_of_a_file_with_itself_is_zero() {
    let dir = tempfile::tempdir().unwrap();
    let f = flow_file(
        dir.path(),
        "f.flo",
        &DistortionParams::wave(4.0, 30.0).unwrap(),
        40,
        30,
    );
    let out = geocorr(&["epe", "--a", s(&f), "--b", s(&f)]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(out.stdout.trim(), "0");
}

#[test]
fn fit_recovers_rotation() {
    let dir = tempfile::tempdir().unwrap();
    let f = flow_file(
        dir.path(),
        "rot10.flo",
        &DistortionParams::rotation(10.0).unwrap(),
        256,
        256,
    );
    let refined = dir.path().join("refined.flo");
    let out = geocorr(&[
        "fit",
        "--flow",
        s(&f),
        "--type",
        "rotation",
        "--out",
        s(&refined),
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let json: Value = serde_json::from_str(&out.stdout).unwrap();
    assert_eq!(json["type"], "rotation");
    let theta = json["rho"][0].as_f64().unwrap();
    assert!((theta - 10.0).abs() < 0.3, "{theta}");

    let fit: FitResult = serde_json::from_str(&out.stdout).unwrap();
    let expected = hough_fit(
        &read_flow(&f).unwrap(),
        DistortionType::Rotation,
        &ParamRange::default(),
        DEFAULT_CELLS,
    )
    .unwrap();
    assert_eq!(fit, expected);
    assert_eq!(
        read_flow(&refined).unwrap(),
        refine_flow(&expected, 256, 256)
    );
}

#[test]
fn correct_converges_on_synthesized_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    std::fs::create_dir(&src).unwrap();
    write_png(&src.join("a.png"), &pattern(300, 240, 0.0)).unwrap();
    write_png(&src.join("b.png"), &pattern(240, 300, 1.3)).unwrap();
    let ds = dir.path().join("ds");
    let out = geocorr(&[
        "synth",
        "--src",
        s(&src),
        "--out",
        s(&ds),
        "--count",
        "1",
        "--seed",
        "7",
        "--size",
        "256",
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let manifest_path = PathBuf::from(out.stdout.trim());
    let manifest: Value = serde_json::from_slice(&std::fs::read(&manifest_path).unwrap()).unwrap();
    let records = manifest["records"].as_array().unwrap();
    assert_eq!(records.len(), 6);

    for record in records {
        let image = ds.join(record["image"].as_str().unwrap());
        let flow = ds.join(record["flow"].as_str().unwrap());
        let corrected = dir.path().join("c.png");
        let report_path = dir.path().join("report.json");
        let out = geocorr(&[
            "correct",
            "--image",
            s(&image),
            "--flow",
            s(&flow),
            "--out",
            s(&corrected),
            "--report",
            s(&report_path),
        ]);
        assert_eq!(out.code, 0, "{}", out.stderr);
        let report: Value = serde_json::from_slice(&std::fs::read(&report_path).unwrap()).unwrap();
        assert_eq!(report["trace_threshold"], 0.2);
        let after5 = &report["trace"][4];
        assert_eq!(after5["iteration"], 5);
        let fraction = after5["fraction_below"].as_f64().unwrap();
        assert!(fraction >= 0.95, "{}: {fraction}", record["type"]);
        assert_eq!(read_image(&corrected).unwrap().dims(), (256, 256));
    }
}

#[test]
fn correct_prints_report_to_stderr_and_includes_refit() {
    let dir = tempfile::tempdir().unwrap();
    let image = dir.path().join("d.png");
    write_png(&image, &pattern(96, 80, 0.4)).unwrap();
    let f = flow_file(
        dir.path(),
        "f.flo",
        &DistortionParams::shear(0.2).unwrap(),
        96,
        80,
    );
    let corrected = dir.path().join("c.png");
    let out = geocorr(&[
        "correct",
        "--image",
        s(&image),
        "--flow",
        s(&f),
        "--out",
        s(&corrected),
        "--refine",
        "--type",
        "shear",
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let report: Value = serde_json::from_str(&out.stderr).unwrap();
    assert_eq!(report["fit"]["type"], "shear");
    assert_eq!(report["init"], "derivative");
    assert!(out.stdout.is_empty());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let f = flow_file(
        dir.path(),
        "f.flo",
        &DistortionParams::barrel(-0.1).unwrap(),
        40,
        30,
    );
    let small = flow_file(
        dir.path(),
        "small.flo",
        &DistortionParams::barrel(-0.1).unwrap(),
        30,
        40,
    );
    let tiny = flow_file(
        dir.path(),
        "tiny.flo",
        &DistortionParams::barrel(-0.1).unwrap(),
        5,
        5,
    );
    let bad = dir.path().join("bad.flo");
    let mut bytes = std::fs::read(&f).unwrap();
    bytes[..4].copy_from_slice(&0xDEAD_BEEFu32.to_le_bytes());
    std::fs::write(&bad, bytes).unwrap();
    let missing = dir.path().join("missing.flo");

    assert_eq!(geocorr(&["--help"]).code, 0);
    assert_eq!(geocorr(&[]).code, 2);
    assert_eq!(geocorr(&["frobnicate"]).code, 2);
    assert_eq!(
        geocorr(&["fit", "--flow", s(&f), "--type", "fisheye"]).code,
        2
    );
    assert_eq!(geocorr(&["fit", "--flow", s(&f)]).code, 2);
    assert_eq!(geocorr(&["epe", "--a", s(&f), "--b", s(&small)]).code, 2);
    assert_eq!(geocorr(&["epe", "--a", s(&f), "--b", s(&bad)]).code, 3);
    assert_eq!(geocorr(&["epe", "--a", s(&f), "--b", s(&missing)]).code, 3);
    let out = geocorr(&["fit", "--flow", s(&tiny), "--type", "barrel"]);
    assert_eq!(out.code, 4);
    assert!(out.stderr.starts_with("error:"), "{}", out.stderr);
    assert_eq!(geocorr(&["identify", "--flow", s(&tiny)]).code, 4);
}

#[test]
fn identify_matches_library_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let f = flow_file(
        dir.path(),
        "shear.flo",
        &DistortionParams::shear(0.2).unwrap(),
        64,
        48,
    );
    let out = geocorr(&["identify", "--flow", s(&f)]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let ranked: Vec<FitResult> = serde_json::from_str(&out.stdout).unwrap();
    let expected = identify_model_with_cells(
        &read_flow(&f).unwrap(),
        &ParamRange::default(),
        DEFAULT_CELLS,
    )
    .unwrap();
    assert_eq!(ranked, expected);
    assert_eq!(ranked[0].kind(), DistortionType::Shear);
    assert!(ranked[0].refit_epe < 1e-6);
}

#[test]
fn fit_reads_type_from_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let f = flow_file(
        dir.path(),
        "pred.flo",
        &DistortionParams::pincushion(0.3).unwrap(),
        64,
        64,
    );
    let sidecar = dir.path().join("pred.json");
    std::fs::write(
        &sidecar,
        r#"{"type":"pincushion","scores":[0.1,0.5,0.1,0.1,0.1,0.1],"flow":"pred.flo"}"#,
    )
    .unwrap();
    let via_sidecar = geocorr(&["fit", "--sidecar", s(&sidecar)]);
    assert_eq!(via_sidecar.code, 0, "{}", via_sidecar.stderr);
    let direct = geocorr(&["fit", "--flow", s(&f), "--type", "pincushion"]);
    assert_eq!(via_sidecar.stdout, direct.stdout);

    std::fs::write(
        &sidecar,
        r#"{"type":"pincushion","scores":[0.1,0.5,0.1,0.1,0.1,0.1],"flow":"pred.flo","extra":1}"#,
    )
    .unwrap();
    assert_eq!(geocorr(&["fit", "--sidecar", s(&sidecar)]).code, 3);
}

#[test]
fn transfer_and_exaggerate_match_library() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("t.png");
    write_png(&target, &pattern(80, 60, 0.7)).unwrap();
    let f = flow_file(
        dir.path(),
        "ref.flo",
        &DistortionParams::barrel(-0.2).unwrap(),
        40,
        30,
    );
    let image = read_image(&target).unwrap();
    let flow = read_flow(&f).unwrap();

    let cli_out = dir.path().join("cli.png");
    let lib_out = dir.path().join("lib.png");
    let out = geocorr(&[
        "transfer",
        "--ref-flow",
        s(&f),
        "--target",
        s(&target),
        "--out",
        s(&cli_out),
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    write_png(&lib_out, &transfer(&flow, &image).unwrap()).unwrap();
    assert_eq!(
        std::fs::read(&cli_out).unwrap(),
        std::fs::read(&lib_out).unwrap()
    );

    let same = flow_file(
        dir.path(),
        "same.flo",
        &DistortionParams::barrel(-0.2).unwrap(),
        80,
        60,
    );
    let out = geocorr(&[
        "exaggerate",
        "--image",
        s(&target),
        "--flow",
        s(&same),
        "--gain",
        "-0.5",
        "--out",
        s(&cli_out),
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let (lib, _) = exaggerate(
        &image,
        &read_flow(&same).unwrap(),
        -0.5,
        &ResampleOptions::default(),
    )
    .unwrap();
    write_png(&lib_out, &lib).unwrap();
    assert_eq!(
        std::fs::read(&cli_out).unwrap(),
        std::fs::read(&lib_out).unwrap()
    );
}

#[test]
fn resample_bench_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("affine.flo");
    write_flow(
        &path,
        &FlowField::from_fn(48, 40, |x, y| {
            Some([0.1 * (x as f64 - 23.5), 0.2 * (y as f64 - 19.5)])
        }),
    )
    .unwrap();
    let out = geocorr(&[
        "resample-bench",
        "--flow",
        s(&path),
        "--levels",
        "0,1",
        "--iterations",
        "4",
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let lines: Vec<&str> = out.stdout.lines().collect();
    assert_eq!(
        lines[0],
        "level,init,iteration,mean_residual,fraction_below"
    );
    assert_eq!(lines.len(), 1 + 2 * 2 * 4);
    let rows: Vec<Vec<&str>> = lines[1..].iter().map(|l| l.split(',').collect()).collect();
    for row in &rows {
        assert_eq!(row.len(), 5);
        let residual: f64 = row[3].parse().unwrap();
        if row[0] == "0" || (row[1] == "derivative" && row[2] == "1") {
            assert!(residual < 1e-5, "{row:?}");
        }
    }
    assert!(rows.iter().any(|r| r[0] == "1"
        && r[1] == "plain"
        && r[2] == "1"
        && r[3].parse::<f64>().unwrap() > 0.1));

    let csv = dir.path().join("bench.csv");
    let to_file = geocorr(&[
        "resample-bench",
        "--flow",
        s(&path),
        "--levels",
        "0,1",
        "--iterations",
        "4",
        "--out",
        s(&csv),
    ]);
    assert_eq!(to_file.code, 0);
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), out.stdout);
    assert_eq!(
        geocorr(&["resample-bench", "--flow", s(&path), "--iterations", "0"]).code,
        2
    );
}
