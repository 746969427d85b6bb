use std::path::Path;
use std::process::{Command, Output};

fn stabhmm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stabhmm"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn simulate(dir: &Path) {
    std::fs::write(
        dir.join("spec.toml"),
        "seed = 3\nnum_videos = 6\ntest_videos = 2\nframes_per_video = 120\n\
         label_policy = { type = \"labelled-videos\", count = 2 }\n[model]\nphases = 3\ntools = [\"grasper\", \"hook\"]\n",
    )
    .unwrap();
    let out = stabhmm(
        dir,
        &["simulate", "--spec", "spec.toml", "--out-dir", "data"],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = stabhmm(dir.path(), &["fit", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    let out = stabhmm(
        dir.path(),
        &[
            "stabilize",
            "--manifest",
            "m",
            "--params",
            "p",
            "--out",
            "o",
            "--cutoff",
            "2",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stabhmm(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = stabhmm(
        dir.path(),
        &["fit", "--manifest", "nope.toml", "--out", "p.json"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nope.toml"));
}

#[test]
fn fit_then_evaluate_reports_raw_and_stabilized_map() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let fit = stabhmm(
        dir.path(),
        &[
            "fit",
            "--manifest",
            "data/manifest.toml",
            "--out",
            "p.json",
            "--trace",
            "t.csv",
        ],
    );
    assert!(
        fit.status.success(),
        "{}",
        String::from_utf8_lossy(&fit.stderr)
    );
    let ev = stabhmm(
        dir.path(),
        &[
            "evaluate",
            "--manifest",
            "data/manifest.toml",
            "--params",
            "p.json",
            "--out",
            "r.csv",
        ],
    );
    assert!(
        ev.status.success(),
        "{}",
        String::from_utf8_lossy(&ev.stderr)
    );
    let report = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    assert!(report.lines().any(|l| l == "metric,target,raw,stabilized"));
    let map = report
        .lines()
        .find(|l| l.starts_with("map,all,"))
        .expect("map row");
    let cells: Vec<&str> = map.split(',').collect();
    assert!(
        cells[2].parse::<f64>().is_ok() && cells[3].parse::<f64>().is_ok(),
        "{map}"
    );
    let trace = std::fs::read_to_string(dir.path().join("t.csv")).unwrap();
    assert!(trace.lines().nth(2).unwrap().starts_with("0,"));
}

#[test]
fn identity_channel_map_output_equals_predictions() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let data = stabhmm::io::load_videos(&dir.path().join("data/manifest.toml")).unwrap();
    let mut p =
        stabhmm::model::uniform_init::<f64>(&data.space, stabhmm::ModelKind::Coupled).unwrap();
    p.phase_confusion = (0..3)
        .map(|i| (0..3).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    p.tool_confusion = vec![[[1.0, 0.0], [0.0, 1.0]]; 2];
    // Strip truth so clamps cannot contradict the identity channel.
    for (_, v) in &data.videos {
        let path = dir
            .path()
            .join("data/videos")
            .join(format!("{}.csv", v.video_id));
        stabhmm::io::write_video_csv(
            &path,
            &data.space,
            &v.without_truth(),
            &stabhmm::io::RunHeader::new("test", None),
        )
        .unwrap();
    }
    stabhmm::io::save_params(
        &dir.path().join("id.json"),
        &p,
        &stabhmm::io::RunHeader::new("test", None),
    )
    .unwrap();
    let out = stabhmm(
        dir.path(),
        &[
            "stabilize",
            "--manifest",
            "data/manifest.toml",
            "--params",
            "id.json",
            "--mode",
            "map",
            "--out",
            "s.csv",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    let mut rows = text.lines().filter(|l| !l.starts_with('#')).skip(1);
    for (_, v) in &data.videos {
        for f in v.frames() {
            let row: Vec<&str> = rows.next().unwrap().split(',').collect();
            assert_eq!(row[2], data.space.phases()[f.pred_phase.unwrap()]);
            let tools: Vec<bool> = row[3..5].iter().map(|c| *c == "1").collect();
            assert_eq!(&tools, f.pred_tools.as_ref().unwrap());
        }
    }
}

#[test]
fn contradictory_labels_are_a_numeric_failure() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let mut p = stabhmm::io::load_params(&dir.path().join("data/theta_star.json")).unwrap();
    p.phase_confusion = (0..3)
        .map(|i| (0..3).map(|j| f64::from(u8::from(i == j))).collect())
        .collect();
    stabhmm::io::save_params(
        &dir.path().join("id.json"),
        &p,
        &stabhmm::io::RunHeader::new("test", None),
    )
    .unwrap();
    std::fs::write(
        dir.path().join("bad.csv"),
        "frame_idx,pred_phase,pred_tool_grasper,pred_tool_hook,true_phase\n0,P1,0,0,P2\n",
    )
    .unwrap();
    std::fs::write(
        dir.path().join("bad.toml"),
        "phases = [\"P1\", \"P2\", \"P3\"]\ntools = [\"grasper\", \"hook\"]\n\
         [[videos]]\nid = \"bad\"\npath = \"bad.csv\"\nrole = \"train\"\n",
    )
    .unwrap();
    let out = stabhmm(
        dir.path(),
        &[
            "stabilize",
            "--manifest",
            "bad.toml",
            "--params",
            "id.json",
            "--out",
            "s.csv",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("zero evidence"));
}
