use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn brainprop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_brainprop"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Stimuli (all but scene), two synthetic models and a filled reference.
struct Workspace {
    _tmp: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new() -> Self {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path().to_path_buf();
        let stim = root.join("stim");
        let o = brainprop(&[
            "gen-stimuli",
            "--out",
            s(&stim),
            "--seed",
            "9",
            "--canvas",
            "160",
        ]);
        // scene incongruence needs assets, so it is skipped with a warning
        assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
        for (id, seed) in [("a", "1"), ("b", "2")] {
            let o = brainprop(&[
                "synth-extract",
                "--stimuli",
                s(&stim),
                "--model",
                id,
                "--seed",
                seed,
                "--out",
                s(&root.join("models").join(id)),
            ]);
            assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        }
        let template = String::from_utf8(brainprop(&["reference-template"]).stdout).unwrap();
        let mut filled = String::new();
        for (i, line) in template.lines().filter(|l| !l.starts_with('#')).enumerate() {
            let (key, _) = line.split_once('=').unwrap();
            filled.push_str(&format!("{} = {}\n", key.trim(), 0.1 + 0.05 * i as f64));
        }
        fs::write(root.join("ref.txt"), filled).unwrap();
        fs::write(root.join("ref_empty.txt"), template).unwrap();
        Workspace { _tmp: tmp, root }
    }

    fn p(&self, rel: &str) -> String {
        self.root.join(rel).to_str().unwrap().to_string()
    }

    fn run_args(&self, out: &str) -> Vec<String> {
        [
            "--stimuli",
            &self.p("stim"),
            "--model",
            &format!("a={}", self.p("models/a")),
            "--model",
            &format!("b={}", self.p("models/b")),
            "--reference",
            &self.p("ref.txt"),
            "--out",
            &self.p(out),
            "--without-scene",
            "--group",
            "family:a=x",
            "--group",
            "family:b=y",
        ]
        .map(String::from)
        .to_vec()
    }

    fn run(&self, cmd: &str, out: &str, extra: &[&str]) -> Output {
        let mut args = vec![cmd.to_string()];
        args.extend(self.run_args(out));
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        brainprop(&refs)
    }
}

fn read_dir_sorted(dir: &str) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn staged_and_full_runs_agree() {
    let ws = Workspace::new();

    let o = ws.run("validate", "unused", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let o = ws.run("report", "full", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("Rank") && stdout.contains(" a ") && stdout.contains(" b "));
    let ranking = fs::read_to_string(ws.p("full/ranking.csv")).unwrap();
    assert_eq!(ranking.lines().count(), 3);
    assert!(ranking.starts_with("rank,model,bpm,agreement,n_properties,l1_similarity"));
    let embedding = fs::read_to_string(ws.p("full/embedding.csv")).unwrap();
    assert_eq!(
        embedding.lines().count(),
        4,
        "two models, the brain and a header"
    );

    let o = ws.run("report", "again", &[]);
    assert_eq!(code(&o), 0);
    assert_eq!(
        read_dir_sorted(&ws.p("full")),
        read_dir_sorted(&ws.p("again"))
    );

    let o = ws.run("effects", "staged", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        fs::read(ws.p("staged/effects.csv")).unwrap(),
        fs::read(ws.p("full/effects.csv")).unwrap()
    );
    let o = ws.run("score", "staged", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = ws.run("embed", "staged", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "ranking.csv",
        "presence.csv",
        "embedding.csv",
        "clustering.csv",
    ] {
        assert_eq!(
            fs::read(ws.p(&format!("staged/{f}"))).unwrap(),
            fs::read(ws.p(&format!("full/{f}"))).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn soft_and_hard_failures_map_to_exit_codes() {
    let ws = Workspace::new();

    // a missing container only drops that property
    fs::remove_dir_all(ws.root.join("models/b/thatcher")).unwrap();
    let o = ws.run("report", "partial", &[]);
    assert_eq!(code(&o), 2);
    let warnings = fs::read_to_string(ws.p("partial/warnings.txt")).unwrap();
    assert!(warnings.contains("b: thatcher"), "{warnings}");
    assert_eq!(
        fs::read_to_string(ws.p("partial/ranking.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );
    assert_eq!(code(&ws.run("validate", "unused", &[])), 2);

    // unfilled reference refuses to score
    let o = brainprop(&[
        "report",
        "--stimuli",
        &ws.p("stim"),
        "--model",
        &format!("a={}", ws.p("models/a")),
        "--reference",
        &ws.p("ref_empty.txt"),
        "--out",
        &ws.p("refused"),
    ]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("brain reference missing"));
    assert!(!ws.root.join("refused").exists());

    // explicitly requesting an impossible property is fatal
    let o = brainprop(&[
        "gen-stimuli",
        "--property",
        "scene_incongruence",
        "--out",
        &ws.p("scene"),
    ]);
    assert_eq!(code(&o), 1);

    let o = brainprop(&[
        "report",
        "--stimuli",
        &ws.p("nowhere"),
        "--model",
        "a=/nonexistent",
    ]);
    assert_eq!(code(&o), 1);
}

#[test]
fn config_file_with_flag_overrides() {
    let ws = Workspace::new();
    let cfg = ws.root.join("run.toml");
    fs::write(
        &cfg,
        "stimulus_dir = \"stim\"\n\
         brain_reference = \"ref.txt\"\n\
         output_dir = \"from_config\"\n\
         root_seed = 9\n\
         [[models]]\nid = \"a\"\ndir = \"models/a\"\n\
         [[models]]\nid = \"b\"\ndir = \"models/b\"\n\
         [scoring]\nlambda = 2.0\n\
         property_subset = [\"mirror_confusion\", \"thatcher\", \"three_d_1\"]\n",
    )
    .unwrap();
    let o = brainprop(&["--config", s(&cfg), "report"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let ranking = fs::read_to_string(ws.p("from_config/ranking.txt")).unwrap();
    assert!(ranking.starts_with("# root seed: 9;"), "{ranking}");
    assert!(ranking.contains("/3"), "{ranking}");

    let o = brainprop(&[
        "--config",
        s(&cfg),
        "report",
        "--out",
        &ws.p("overridden"),
        "--lambda",
        "1",
        "--properties",
        "mirror_confusion,thatcher",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = fs::read_to_string(ws.p("overridden/summary.json")).unwrap();
    assert!(summary.contains("\"lambda\": 1.0"), "{summary}");
    assert!(fs::read_to_string(ws.p("overridden/ranking.txt"))
        .unwrap()
        .contains("/2"));
}
