use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn freehand(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freehand"))
        .args(args)
        .env_remove("FREEHAND_OUT")
        .env_remove("FREEHAND_JOBS")
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn write_cube_stl(path: &Path) {
    let quads = [
        [[0, 0, 0], [0, 1, 0], [0, 1, 1], [0, 0, 1]],
        [[1, 0, 0], [1, 0, 1], [1, 1, 1], [1, 1, 0]],
        [[0, 0, 0], [0, 0, 1], [1, 0, 1], [1, 0, 0]],
        [[0, 1, 0], [1, 1, 0], [1, 1, 1], [0, 1, 1]],
        [[0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]],
        [[0, 0, 1], [0, 1, 1], [1, 1, 1], [1, 0, 1]],
    ];
    let mut out = String::from("solid cube\n");
    for q in quads {
        for tri in [[q[0], q[1], q[2]], [q[0], q[2], q[3]]] {
            out.push_str(" facet normal 0 0 0\n  outer loop\n");
            for v in tri {
                out.push_str(&format!("   vertex {} {} {}\n", v[0], v[1], v[2]));
            }
            out.push_str("  endloop\n endfacet\n");
        }
    }
    out.push_str("endsolid cube\n");
    fs::write(path, out).unwrap();
}

fn cube(dir: &Path) -> String {
    let path = dir.join("cube.stl");
    write_cube_stl(&path);
    path.to_str().unwrap().to_string()
}

fn first_view_png(out: &Path) -> PathBuf {
    let mut pngs: Vec<PathBuf> = fs::read_dir(out.join("views"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "png"))
        .collect();
    pngs.sort();
    pngs.remove(0)
}

#[test]
fn missing_input_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = freehand(&["run", "--input", "/nonexistent/part.stl", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("load_mesh"), "{}", text(&o.stderr));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = freehand(&["run", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_stroke_count_is_rejected() {
    let o = freehand(&["run", "--input", "x.stl", "--strokes", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(text(&o.stderr).contains("config"), "{}", text(&o.stderr));
}

#[test]
fn contours_then_sketch_reports_complexity() {
    let dir = tempfile::tempdir().unwrap();
    let input = cube(dir.path());
    let views = dir.path().join("views_run");
    let o = freehand(&["contours", "--input", &input, "--out", views.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("26 views rendered"), "{}", text(&o.stdout));

    let png = first_view_png(&views);
    let sketch = dir.path().join("sketch_run");
    let o = freehand(&[
        "sketch",
        "--contour",
        png.to_str().unwrap(),
        "--strokes",
        "25",
        "--steps",
        "16",
        "--out",
        sketch.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).contains("Moderate"), "{}", text(&o.stdout));
}

#[test]
fn eval_reproduces_the_run_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = cube(dir.path());
    let out = dir.path().join("run");
    let o = freehand(&[
        "run",
        "--input",
        &input,
        "--views",
        "1",
        "--steps",
        "16",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let manifest = out.join("manifest.json");
    assert!(manifest.exists());

    let o = freehand(&["eval", "--run", manifest.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stderr).contains("matches the run's report"), "{}", text(&o.stderr));
    let printed: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(printed, saved);
}

#[test]
fn jobs_do_not_change_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = cube(dir.path());
    let svgs = |jobs: &str| {
        let out = dir.path().join(format!("jobs_{jobs}"));
        let o = freehand(&[
            "run",
            "--input",
            &input,
            "--views",
            "2",
            "--steps",
            "16",
            "--no-intermediates",
            "--jobs",
            jobs,
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", text(&o.stderr));
        let mut files: Vec<(String, Vec<u8>)> = walk(&out)
            .into_iter()
            .filter(|p| p.extension().is_some_and(|e| e == "svg"))
            .map(|p| (p.strip_prefix(&out).unwrap().display().to_string(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        files
    };
    let one = svgs("1");
    assert_eq!(one.len(), 2);
    assert_eq!(one, svgs("4"));
}

fn walk(dir: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}
