use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ougap_cli::config::{Body, ExperimentConfig};
use ougap_cli::report::read_csv;
use ougap_cli::CliError;

fn ougap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ougap")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

const SMALL_SDE: &str = r#"
kind = "simulate"
seed = 3

[radial]
profile = { preset = "hyperbolic", a = 1.0 }
lambda = [4.0, 16.0]
steps = 200
paths = 400
"#;

const BOUNDS: &str = r#"
kind = "bounds"

[[point]]
alpha = 1.0
beta = 1.0
r0 = 1.0
expected = 8.477105034722222e-7

[[point]]
alpha = 1.0
beta = 1.0
r0 = 1000.0
expected = 4.0e-8
"#;

#[test]
fn missing_lambda_is_a_schema_error_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", "kind = \"semiclassical\"\n[potential]\npreset = \"ou\"\n[numeric]\n");
    let out = dir.path().join("out");
    let o = ougap(&["semiclassical", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));
    assert!(!out.exists());
}

#[test]
fn kind_mismatch_and_unknown_keys_are_schema_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.toml", BOUNDS);
    let out = dir.path().join("out");
    let o = ougap(&["sigma1", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    let typo = BOUNDS.replace("r0 = 1000.0", "r0 = 1000.0\nbeta2 = 1.0");
    let cfg = write_config(dir.path(), "typo.toml", &typo);
    let o = ougap(&["bounds", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn numerical_failure_has_its_own_exit_code() {
    // too few tent levels for the acceptance window: the sampler gives up
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.toml",
        "kind = \"simulate\"\nseed = 4\n[bridge]\nspace = \"flat3\"\nlambda = [20.0]\nm = 8\nchains = 6\nsamples = 10\nthin = 1\nburnin = 100\n",
    );
    let out = dir.path().join("out");
    let o = ougap(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.exists());
}

#[test]
fn failed_rows_are_flagged_and_strict_makes_them_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.toml", BOUNDS);
    let out = dir.path().join("out");
    let o = ougap(&["bounds", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let (_, header, rows) = read_csv(&fs::read(out.join("bounds.csv")).unwrap()).unwrap();
    assert_eq!(header.last().unwrap(), "pass");
    assert_eq!(rows[0].last().unwrap(), "true");
    assert_eq!(rows[1].last().unwrap(), "false");

    let o = ougap(&["bounds", "--config", &cfg, "--out", out.to_str().unwrap(), "--strict"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(out.join("bounds.csv").exists());
}

#[test]
fn csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", SMALL_SDE);
    let out = dir.path().join("out");
    assert!(ougap(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let bytes = fs::read(out.join("simulate.csv")).unwrap();
    let (manifest, header, rows) = read_csv(&bytes).unwrap();
    assert!(manifest.starts_with("# manifest kind=simulate digest="));
    assert!(manifest.ends_with("seed=3"));
    assert_eq!(rows.len(), 2);
    // every numeric cell re-renders to itself
    for row in &rows {
        assert_eq!(row.len(), header.len());
        for cell in &row[1..4] {
            let x: f64 = cell.parse().unwrap();
            if cell.contains('e') {
                assert_eq!(&ougap::fmt12(x), cell);
            }
        }
    }
    // re-serializing the parsed table reproduces the file
    let mut again = format!("{manifest}\n").into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut again);
        w.write_record(&header).unwrap();
        rows.iter().for_each(|r| w.write_record(r).unwrap());
    }
    assert_eq!(again, bytes);
}

#[test]
fn same_seed_gives_identical_bytes_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", SMALL_SDE);
    let mut outputs = Vec::new();
    for (i, threads) in ["1", "4", "4"].iter().enumerate() {
        let out = dir.path().join(format!("o{i}"));
        assert!(ougap(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--threads", threads]).status.success());
        outputs.push((fs::read(out.join("simulate.csv")).unwrap(), fs::read(out.join("tail.csv")).unwrap()));
    }
    assert!(outputs.windows(2).all(|w| w[0] == w[1]));

    let out = dir.path().join("other");
    assert!(ougap(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "99"]).status.success());
    let other = fs::read(out.join("simulate.csv")).unwrap();
    assert_ne!(other, outputs[0].0);
    assert!(String::from_utf8_lossy(&other).lines().next().unwrap().ends_with("seed=99"));
}

#[test]
fn artifacts_stay_inside_the_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "s.toml", &SMALL_SDE.replace("paths = 400", "paths = 400\nraw = true"));
    let out = dir.path().join("nested").join("out");
    assert!(ougap(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let mut names: Vec<String> = fs::read_dir(&out).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["paths_0.bin", "paths_1.bin", "simulate.csv", "tail.csv", "timing.csv"]);
    let mut top: Vec<String> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    top.sort();
    assert_eq!(top, ["nested", "s.toml"]);
    // header of the raw dump: magic, version, steps, paths
    let raw = fs::read(out.join("paths_0.bin")).unwrap();
    assert_eq!(&raw[..4], b"OUGP");
    assert_eq!(u64::from_le_bytes(raw[8..16].try_into().unwrap()), 200);
    assert_eq!(u64::from_le_bytes(raw[16..24].try_into().unwrap()), 400);
    assert_eq!(raw.len(), 32 + 2 * 400 * 201 * 8);
}

#[test]
fn text_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "b.toml", BOUNDS);
    let out = dir.path().join("out");
    assert!(ougap(&["bounds", "--config", &cfg, "--out", out.to_str().unwrap(), "--format", "text"]).status.success());
    let text = fs::read_to_string(out.join("bounds.txt")).unwrap();
    assert!(text.starts_with("# manifest kind=bounds"));
    assert!(text.contains("[bounds 1]\nalpha = 1.00000000000e0\n"));
    assert!(text.contains("pass = false"));
}

#[test]
fn output_dir_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("from_config");
    let text = format!("{BOUNDS}\n[output]\ndir = {:?}\n", target.to_str().unwrap());
    let cfg = write_config(dir.path(), "b.toml", &text);
    assert!(ougap(&["bounds", "--config", &cfg]).status.success());
    assert!(target.join("bounds.csv").exists());
}

// ---- config parsing without the binary ----

#[test]
fn defaults_are_filled_and_digest_ignores_layout() {
    let a = ExperimentConfig::parse("kind = \"kernel_asymptotics\"\nt = [0.1]\nr = [1.0]\n").unwrap();
    let Body::KernelAsymptotics(k) = &a.body else { panic!("wrong body") };
    assert_eq!(k.tolerance.ratio, [1.7, 2.3]);
    let b = ExperimentConfig::parse(
        "# comment\nr = [1.0]\nkind = \"kernel_asymptotics\"\nseed = 5\nt = [0.1]\n[output]\ndir = \"x\"\n[tolerance]\nnormalization = 1e-8\n",
    )
    .unwrap();
    assert_eq!(a.digest(), b.digest());
    let c = ExperimentConfig::parse("kind = \"kernel_asymptotics\"\nt = [0.2]\nr = [1.0]\n").unwrap();
    assert_ne!(a.digest(), c.digest());
    assert_eq!(a.digest().len(), 64);
}

#[test]
fn validation_rejects_bad_values() {
    let bad = [
        "t = [0.1]\nr = [1.0]\n",
        "kind = \"nope\"\n",
        "kind = \"kernel_asymptotics\"\nt = [2.0]\nr = [1.0]\n",
        "kind = \"kernel_asymptotics\"\nt = []\nr = [1.0]\n",
        "kind = \"kernel_asymptotics\"\nseed = -1\nt = [0.1]\nr = [1.0]\n",
        "kind = \"bounds\"\n",
        "kind = \"bounds\"\n[[point]]\nalpha = 0.0\nbeta = 1.0\nr0 = 1.0\n",
        "kind = \"simulate\"\n",
        "kind = \"sigma1\"\n[[geometry]]\ntype = \"constant\"\nn = 2\nd = 1.0\nkappa = 10.0\n[numeric]\nm = [64]\n",
        "kind = \"sigma1\"\n[[geometry]]\ntype = \"radial\"\nn = 2\nd = 1.0\nprofile = { preset = \"hyperbolic\", a = -1.0 }\n[numeric]\nm = [64]\n",
        "kind = \"sigma1\"\n[[geometry]]\ntype = \"constant\"\nn = 2\nd = 1.0\nkappa = 0.0\nextra = 1\n[numeric]\nm = [64]\n",
        "kind = \"semiclassical\"\n[potential]\npreset = \"polynomial\"\ncoeffs = [0.0, 0.0, -1.0]\n[numeric]\nlambda = [1.0]\n",
    ];
    for text in bad {
        assert!(matches!(ExperimentConfig::parse(text), Err(CliError::Schema(_))), "accepted: {text}");
    }
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(root).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 7);
}
