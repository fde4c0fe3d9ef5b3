use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ensemblekit::classify::{ClassificationReport, Label};
use ensemblekit::lft::read_rows;

const CW: &str = r#"{"kind": "curie_weiss", "coupling": 1.0}"#;
const TAB3: &str = r#"{"kind": "tabular", "table_I": [0, 0.5, 0.2], "table_H": [0, 1, 2]}"#;
const DENTED: &str = r#"{"kind": "tabular_mixed", "sigma": 2, "table_I": [0, 0.3, 0.5, 0.6, 0.2, 0.4],
    "table_H": [[0, 1, 0, 1, 0, 1], [0, 0, 1, 1, 2, 2]]}"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        ws.write("cw.json", CW);
        ws.write("tab3.json", TAB3);
        ws.write("dented.json", DENTED);
        ws
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) {
        std::fs::write(self.path(name), text).unwrap();
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_ensemblekit"))
            .args(args)
            .current_dir(self.dir.path())
            .env_remove("ENSEMBLEKIT_THREADS")
            .output()
            .unwrap()
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn entropy_csv_schema() {
    let ws = Workspace::new();
    let out = ws.run(&[
        "entropy",
        "--model",
        "cw.json",
        "--u-grid",
        "-0.5:0:101",
        "--out",
        "s.csv",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&ws.path("s.csv"));
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "u,s,s_hull,beta_minus,beta_plus,in_C,in_T"
    );
    assert_eq!(lines.count(), 101);
    let rows = read_rows(text.as_bytes()).unwrap();
    assert_eq!(rows.len(), 101);
    assert!(rows.iter().all(|r| r.in_c && r.in_t));
}

#[test]
fn verify_three_point_table() {
    let ws = Workspace::new();
    let out = ws.run(&["verify", "--model", "tab3.json", "--beta-grid", "-5:5:1001"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    let line = text.lines().find(|l| l.starts_with("1.000000")).unwrap();
    assert!(line.contains("nonequivalent"), "{line}");
    assert!(line.contains("1001/1001 disjoint"), "{line}");
    assert!(!text.contains("FAIL"));
}

#[test]
fn sample_is_byte_identical() {
    let ws = Workspace::new();
    let args = |out: &'static str| {
        vec![
            "sample",
            "--model",
            "cw.json",
            "--ensemble",
            "canonical",
            "--beta",
            "2",
            "--n",
            "64",
            "--sweeps",
            "200000",
            "--seed",
            "7",
            "--out",
            out,
        ]
    };
    assert_eq!(code(&ws.run(&args("a.json"))), 0);
    assert_eq!(code(&ws.run(&args("b.json"))), 0);
    let a = read(&ws.path("a.json"));
    assert_eq!(a, read(&ws.path("b.json")));
    let v: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert_eq!(v["schema_version"], 1);
    assert!((v["result"]["abs_site_mean"].as_f64().unwrap() - 0.9575).abs() < 0.05);
}

#[test]
fn thread_cap_does_not_change_output() {
    let ws = Workspace::new();
    let mut outputs = Vec::new();
    for threads in ["1", "4"] {
        let out = Command::new(env!("CARGO_BIN_EXE_ensemblekit"))
            .args(["classify", "--model", "tab3.json", "--format", "json"])
            .current_dir(ws.dir.path())
            .env("ENSEMBLEKIT_THREADS", threads)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0);
        outputs.push(out.stdout);
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn exit_code_matrix() {
    let ws = Workspace::new();
    ws.write("unknown.json", r#"{"kind": "curie_weiss", "colour": 1}"#);
    ws.write("broken.json", "{not json");
    ws.write(
        "negative_rate.json",
        r#"{"kind": "tabular", "table_I": [-1, 0.5], "table_H": [0, 1]}"#,
    );
    let cases: Vec<(Vec<&str>, i32)> = vec![
        (vec![], 1),
        (vec!["--help"], 0),
        (vec!["--version"], 0),
        (vec!["frobnicate"], 1),
        (vec!["entropy", "--model", "cw.json", "--bogus"], 1),
        (vec!["entropy"], 1),
        (vec!["entropy", "--model", "missing.json"], 1),
        (vec!["entropy", "--model", "unknown.json"], 1),
        (vec!["entropy", "--model", "broken.json"], 1),
        (vec!["entropy", "--model", "negative_rate.json"], 1),
        (
            vec!["entropy", "--model", "cw.json", "--u-grid", "0:-1:5"],
            1,
        ),
        (
            vec!["entropy", "--model", "cw.json", "--u-grid", "-1:0:1"],
            1,
        ),
        (vec!["entropy", "--model", "cw.json", "--u-grid", "-1:0"], 1),
        (vec!["entropy", "--model", "dented.json"], 1),
        (vec!["free-energy", "--model", "cw.json"], 1),
        (
            vec![
                "macrostates",
                "--model",
                "cw.json",
                "--ensemble",
                "canonical",
            ],
            1,
        ),
        (
            vec![
                "macrostates",
                "--model",
                "cw.json",
                "--ensemble",
                "canonical",
                "--beta",
                "x",
            ],
            1,
        ),
        (vec!["mixed", "--model", "dented.json"], 1),
        (vec!["mixed", "--model", "cw.json", "--beta1", "0"], 1),
        (
            vec![
                "sample",
                "--model",
                "cw.json",
                "--ensemble",
                "shell",
                "--u=-0.1",
            ],
            1,
        ),
        (
            vec![
                "sample",
                "--model",
                "cw.json",
                "--ensemble",
                "shell",
                "--u=-0.125",
                "--r",
                "0.0001",
                "--n",
                "64",
            ],
            1,
        ),
        (
            vec![
                "sample",
                "--model",
                "tab3.json",
                "--ensemble",
                "canonical",
                "--beta",
                "1",
            ],
            1,
        ),
        (
            vec![
                "sample",
                "--model",
                "cw.json",
                "--ensemble",
                "shell",
                "--u=0.2",
                "--r",
                "0.01",
                "--n",
                "16",
            ],
            2,
        ),
        (vec!["verify"], 1),
        (vec!["plot", "--input", "missing.csv"], 1),
        (
            vec!["entropy", "--model", "cw.json", "--u-grid", "-0.5:0:5"],
            0,
        ),
        (vec!["entropy", "--model", "tab3.json"], 0),
        (
            vec![
                "macrostates",
                "--model",
                "tab3.json",
                "--ensemble",
                "microcanonical",
                "--u",
                "1",
            ],
            0,
        ),
    ];
    for (args, expected) in cases {
        let out = ws.run(&args);
        assert_eq!(
            code(&out),
            expected,
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        if expected == 1 && !args.is_empty() && !args.contains(&"--help") {
            assert!(!out.stderr.is_empty(), "{args:?} gave no message");
        }
    }

    let out = Command::new(env!("CARGO_BIN_EXE_ensemblekit"))
        .args(["entropy", "--model", "cw.json", "--u-grid", "-0.5:0:3"])
        .current_dir(ws.dir.path())
        .env("ENSEMBLEKIT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn outputs_round_trip_through_plot_and_verify() {
    let ws = Workspace::new();
    let steps: Vec<Vec<String>> = vec![
        vec![
            "entropy",
            "--model",
            "cw.json",
            "--u-grid",
            "-0.5:0:41",
            "--out",
            "s.csv",
        ],
        vec![
            "entropy",
            "--model",
            "cw.json",
            "--u-grid",
            "-0.5:0:41",
            "--out",
            "s.json",
        ],
        vec![
            "free-energy",
            "--model",
            "cw.json",
            "--beta-grid",
            "-1:3:41",
            "--out",
            "phi.csv",
        ],
        vec![
            "free-energy",
            "--model",
            "cw.json",
            "--beta-grid",
            "-1:3:41",
            "--out",
            "phi.json",
        ],
        vec!["classify", "--model", "tab3.json", "--out", "report.json"],
        vec![
            "mixed",
            "--model",
            "dented.json",
            "--beta1",
            "0",
            "--out",
            "slice.csv",
        ],
        vec![
            "sample",
            "--model",
            "cw.json",
            "--ensemble",
            "canonical",
            "--beta",
            "1.5",
            "--n",
            "32",
            "--sweeps",
            "2000",
            "--out",
            "chain.json",
            "--trace",
            "trace.csv",
        ],
    ]
    .into_iter()
    .map(|v| v.into_iter().map(String::from).collect())
    .collect();
    for s in &steps {
        let args: Vec<&str> = s.iter().map(String::as_str).collect();
        assert_eq!(code(&ws.run(&args)), 0, "{args:?}");
    }

    // Curves survive a CSV/JSON round trip with every value intact.
    let csv_rows = read_rows(read(&ws.path("s.csv")).as_bytes()).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&read(&ws.path("s.json"))).unwrap();
    let json_rows: Vec<ensemblekit::lft::CurveRow> =
        serde_json::from_value(doc["rows"].clone()).unwrap();
    assert_eq!(csv_rows.len(), json_rows.len());
    for (a, b) in csv_rows.iter().zip(&json_rows) {
        assert_eq!(a.u, b.u);
        assert_eq!(a.s.to_bits(), b.s.to_bits());
        assert_eq!(a.beta_minus.to_bits(), b.beta_minus.to_bits());
    }
    assert!(json_rows[0].beta_minus.is_infinite());

    let report: ClassificationReport =
        serde_json::from_str(&read(&ws.path("report.json"))).unwrap();
    assert_eq!(report.record_at(1.0).unwrap().label, Label::Nonequivalent);
    let out = ws.run(&["verify", "--report", "report.json"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("nonequivalent"));

    let plots = [
        (vec!["plot", "--input", "s.csv", "--out", "s.svg"], "s_hull"),
        (
            vec!["plot", "--input", "s.json", "--out", "s2.svg"],
            "s_hull",
        ),
        (
            vec!["plot", "--input", "phi.csv", "--out", "phi.svg"],
            "phi",
        ),
        (
            vec![
                "plot", "--input", "phi.json", "--x", "beta", "--y", "phi", "--out", "phi2.svg",
            ],
            "phi",
        ),
        (
            vec!["plot", "--input", "slice.csv", "--out", "slice.svg"],
            "s",
        ),
        (
            vec![
                "plot",
                "--input",
                "trace.csv",
                "--x",
                "block",
                "--y",
                "H_1,x_1",
                "--out",
                "t.svg",
            ],
            "x_1",
        ),
    ];
    for (args, legend) in plots {
        assert_eq!(code(&ws.run(&args)), 0, "{args:?}");
        let svg = read(&ws.path(args[args.len() - 1]));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains(&format!(">{legend}</text>")), "{args:?}");
    }
    assert_eq!(
        code(&ws.run(&["plot", "--input", "s.csv", "--y", "nope"])),
        1
    );
}
