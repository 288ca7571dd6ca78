use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use contour_refine::synth::{manifest_path, read_manifest, ManifestRecord};
use contour_refine::{
    chamfer_3d, external_contour_of_mask, rasterize, BinaryImage, LatentCode, Mesh, SketchStyle,
    TemplateMesh,
};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    run_env(args, &[])
}

fn run_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_contour-refine"));
    cmd.args(args).env_remove("CONTOUR_REFINE_THREADS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn code_of(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Dataset {
    dir: TempDir,
    records: Vec<ManifestRecord>,
}

impl Dataset {
    fn new(shapes: usize, views: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let out = run(&[
            "synth",
            "--shapes",
            &shapes.to_string(),
            "--views",
            &views.to_string(),
            "--resolution",
            "96",
            "--seed",
            "4",
            "--out",
            s(dir.path()),
        ]);
        assert_eq!(code_of(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let records = read_manifest(dir.path().join("manifest.jsonl")).unwrap();
        Dataset { dir, records }
    }

    fn path(&self, rel: &str) -> PathBuf {
        manifest_path(&self.dir.path().join("manifest.jsonl"), rel)
    }

    fn sketch(&self, i: usize) -> PathBuf {
        self.path(self.records[i].sketch(SketchStyle::Sketchfd).unwrap())
    }

    fn camera(&self, i: usize) -> PathBuf {
        self.path(&self.records[i].camera_file)
    }

    fn truth(&self, i: usize) -> Mesh {
        let code = LatentCode::load(self.path(&self.records[i].code)).unwrap();
        TemplateMesh::builtin().decode(&code).unwrap()
    }
}

fn read_obj(path: &Path) -> Mesh {
    Mesh::read_obj(std::io::BufReader::new(fs::File::open(path).unwrap())).unwrap()
}

#[test]
fn synth_writes_a_deterministic_dataset() {
    let (a, b) = (Dataset::new(1, 3), Dataset::new(1, 3));
    assert_eq!(a.records.len(), 3);
    assert_eq!(fs::read_dir(a.dir.path().join("sketches")).unwrap().count(), 6);
    for rel in ["manifest.jsonl", "sketches/00002_occluding.png", "codes/shape_0000.bin"] {
        assert_eq!(fs::read(a.path(rel)).unwrap(), fs::read(b.path(rel)).unwrap(), "{rel}");
    }
}

#[test]
fn malformed_template_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("mesh.obj"), "v 0 0 0\nf 1 2 3\n").unwrap();
    let out = run(&["synth", "--template", s(dir.path()), "--out", s(&dir.path().join("out"))]);
    assert_eq!(code_of(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: template"));
}

#[test]
fn reconstruction_improves_on_its_start() {
    let data = Dataset::new(1, 1);
    let work = tempfile::tempdir().unwrap();
    let reconstruct = |steps: &str, out: &Path| {
        let o = run(&[
            "reconstruct",
            "--sketch",
            s(&data.sketch(0)),
            "--camera",
            s(&data.camera(0)),
            "--steps",
            steps,
            "--out",
            s(out),
        ]);
        assert_eq!(code_of(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let mesh = read_obj(&out.join("mesh.obj"));
        let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
        (chamfer_3d(&mesh, &data.truth(0), 4000, (1, 2)).unwrap(), trace)
    };
    let (cd0, trace0) = reconstruct("0", &work.path().join("start"));
    let (cd, trace) = reconstruct("150", &work.path().join("refined"));
    assert_eq!(trace0.lines().count(), 2);
    assert!(trace.lines().count() > 2);
    assert!(trace.starts_with("step,loss,"));
    assert!(cd < cd0, "refined {cd} vs start {cd0}");
    assert!(work.path().join("refined/code.bin").exists());
}

#[test]
fn silhouette_objective_runs() {
    let data = Dataset::new(1, 1);
    let out = tempfile::tempdir().unwrap();
    let o = run(&[
        "reconstruct",
        "--sketch",
        s(&data.sketch(0)),
        "--camera",
        s(&data.camera(0)),
        "--objective",
        "silhouette",
        "--steps",
        "20",
        "--out",
        s(out.path()),
    ]);
    assert_eq!(code_of(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let header = fs::read_to_string(out.path().join("trace.csv")).unwrap();
    let row: Vec<f64> = header.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(row[0], 0.0);
    assert!(row[3] > 0.0, "silhouette term {}", row[3]);
}

#[test]
fn input_errors_leave_no_output() {
    let data = Dataset::new(1, 1);
    let work = tempfile::tempdir().unwrap();
    let out = work.path().join("out");
    let missing = run(&[
        "reconstruct",
        "--sketch",
        s(&data.sketch(0)),
        "--camera",
        s(&work.path().join("nope.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(code_of(&missing), 2);
    assert!(!out.exists());

    let blank = work.path().join("blank.png");
    BinaryImage::blank(96, 96).save_png(&blank).unwrap();
    let empty = run(&["reconstruct", "--sketch", s(&blank), "--camera", s(&data.camera(0)), "--out", s(&out)]);
    assert_eq!(code_of(&empty), 2);
    assert!(String::from_utf8_lossy(&empty.stderr).contains("no stroke"));

    let small = work.path().join("small.png");
    BinaryImage::blank(32, 32).save_png(&small).unwrap();
    let sized = run(&["reconstruct", "--sketch", s(&small), "--camera", s(&data.camera(0)), "--out", s(&out)]);
    assert_eq!(code_of(&sized), 2);
    assert!(!out.exists());
}

#[test]
fn shape_filling_the_frame_is_a_numerical_failure() {
    let data = Dataset::new(1, 1);
    let work = tempfile::tempdir().unwrap();
    let mut spec = data.records[0].camera.clone();
    spec.focal_px *= 20.0;
    let camera = work.path().join("zoomed.json");
    fs::write(&camera, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = work.path().join("out");
    let o = run(&["reconstruct", "--sketch", s(&data.sketch(0)), "--camera", s(&camera), "--out", s(&out)]);
    assert_eq!(code_of(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn stroke_on_the_contour_keeps_the_code() {
    let data = Dataset::new(1, 1);
    let work = tempfile::tempdir().unwrap();
    let code_path = data.path(&data.records[0].code);
    let code0 = LatentCode::load(&code_path).unwrap();
    let camera = data.records[0].camera.to_camera().unwrap();
    let contour = external_contour_of_mask(&rasterize(&data.truth(0), &camera).mask).unwrap();
    let stroke = work.path().join("stroke.png");
    contour.save_png(&stroke).unwrap();
    let out = work.path().join("edit");
    let o = run(&[
        "edit",
        "--code",
        s(&code_path),
        "--stroke",
        s(&stroke),
        "--camera",
        s(&data.camera(0)),
        "--steps",
        "40",
        "--out",
        s(&out),
    ]);
    assert_eq!(code_of(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let code = LatentCode::load(out.join("code.bin")).unwrap();
    let moved = code.0.iter().zip(&code0.0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(moved < 1e-6, "code moved by {moved}");

    let blank = work.path().join("blank.png");
    BinaryImage::blank(96, 96).save_png(&blank).unwrap();
    let empty = run(&[
        "edit",
        "--code",
        s(&code_path),
        "--stroke",
        s(&blank),
        "--camera",
        s(&data.camera(0)),
        "--out",
        s(&work.path().join("empty")),
    ]);
    assert_eq!(code_of(&empty), 2);
}

fn write_predictions(data: &Dataset, dir: &Path, skip: Option<usize>) {
    fs::create_dir_all(dir).unwrap();
    for r in &data.records {
        if Some(r.sample) != skip {
            fs::write(dir.join(format!("{:05}.obj", r.sample)), data.truth(r.sample).to_obj_string()).unwrap();
        }
    }
}

#[test]
fn eval_scores_ground_truth_as_perfect_and_flags_gaps() {
    let data = Dataset::new(1, 3);
    let work = tempfile::tempdir().unwrap();
    let preds = work.path().join("preds");
    write_predictions(&data, &preds, Some(1));
    let manifest = data.dir.path().join("manifest.jsonl");
    let eval = |out: &Path, threads: &str| {
        let o = run_env(
            &["eval", "--manifest", s(&manifest), "--predictions", s(&preds), "--samples", "2000", "--out", s(out)],
            &[("CONTOUR_REFINE_THREADS", threads)],
        );
        assert_eq!(code_of(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        fs::read_to_string(out).unwrap()
    };
    let csv = eval(&work.path().join("a.csv"), "1");
    assert_eq!(csv, eval(&work.path().join("b.csv"), "3"));

    let mut rows = csv::Reader::from_reader(csv.as_bytes());
    assert_eq!(rows.headers().unwrap(), vec!["sample", "cd_l2_e3", "nc_e2", "status"]);
    let rows: Vec<csv::StringRecord> = rows.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 3);
    let mut self_cd = Vec::new();
    for row in &rows {
        if &row[0] == "1" {
            assert_eq!((&row[1], &row[2], &row[3]), ("", "", "missing prediction"));
        } else {
            assert_eq!(&row[3], "ok");
            assert_eq!(row[2].parse::<f64>().unwrap(), 100.0);
            self_cd.push(row[1].parse::<f64>().unwrap());
        }
    }

    // Independent surface samples leave a floor; a 5% larger prediction must clear it.
    fs::write(preds.join("00002.obj"), data.truth(2).scaled(1.05).to_obj_string()).unwrap();
    let scaled = eval(&work.path().join("c.csv"), "2");
    let row = scaled.lines().nth(3).unwrap();
    let cd: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!(self_cd.iter().all(|&c| c < 0.5 * cd), "self {self_cd:?} vs scaled {cd}");
}

#[test]
fn bad_thread_count_is_an_input_error() {
    for bad in ["0", "many", "-2"] {
        let o = run_env(&["template", "--out", "/nonexistent/never"], &[("CONTOUR_REFINE_THREADS", bad)]);
        assert_eq!(code_of(&o), 2, "{bad}");
        assert!(String::from_utf8_lossy(&o.stderr).contains("CONTOUR_REFINE_THREADS"));
    }
}

#[test]
fn template_round_trips_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["template", "--k", "6", "--library", "16", "--out", s(dir.path())]);
    assert_eq!(code_of(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let t = TemplateMesh::load_dir(dir.path()).unwrap();
    assert_eq!(t.k(), 6);
    let bad = run(&["template", "--k", "16", "--library", "16", "--out", s(dir.path())]);
    assert_eq!(code_of(&bad), 2);
}
