use std::path::Path;
use std::process::{Command, Output};

const PARAMS: &str = r#""params": {"alpha": 1.5, "beta1": 1.0, "beta2": -7.0, "gamma": 0.0, "g": 1.0, "m": 1.0, "h": [0.0, 0.0, 1.0], "d": 0.8, "D": 1.6}"#;

fn ferronema(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ferronema")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn reruns_are_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        (
            "verify-lemmas",
            format!(r#"{{{PARAMS}, "epsilons": [0.25, 0.2], "reference": {{"a": 0.5, "b": 0.25}}, "lemmas": {{"fields": 3}}, "placement": "random", "seed": 11}}"#),
        ),
        ("magnet-scaling", format!(r#"{{{PARAMS}, "epsilons": [0.5, 0.25, 0.125], "reference": {{"a": 0.5, "b": 0.25}}}}"#)),
    ];
    for (kind, body) in cases {
        let cfg = write_config(tmp.path(), &format!("{kind}.json"), &body);
        let outs: Vec<_> = ["a", "b"]
            .iter()
            .map(|run| {
                let dir = tmp.path().join(format!("{kind}-{run}"));
                let o = ferronema(&[kind, "--config", &cfg, "--out", dir.to_str().unwrap(), "--quiet"]);
                assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
                csv_files(&dir)
            })
            .collect();
        assert!(!outs[0].is_empty());
        assert_eq!(outs[0], outs[1], "{kind}");
    }
}

#[test]
fn seed_override_changes_random_ensembles() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(r#"{{{PARAMS}, "epsilons": [0.25, 0.2], "reference": {{"a": 0.5, "b": 0.25}}, "lemmas": {{"fields": 1, "shapes": [{{"a": 1.0, "b": 1.0}}]}}, "placement": "random"}}"#);
    let cfg = write_config(tmp.path(), "c.json", &body);
    let run = |seed: &str| {
        let dir = tmp.path().join(format!("s{seed}"));
        let o = ferronema(&["verify-lemmas", "--config", &cfg, "--out", dir.to_str().unwrap(), "--seed", seed, "--quiet"]);
        assert!(o.status.success());
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(m["seed"].as_u64().unwrap().to_string(), seed);
        std::fs::read(dir.join("lemma2.csv")).unwrap()
    };
    assert_ne!(run("1"), run("2"));
}

#[test]
fn malformed_scalings_exit_with_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let body = format!(r#"{{{}, "epsilons": [0.25]}}"#, PARAMS.replace("\"alpha\": 1.5", "\"alpha\": 3.0"));
    let cfg = write_config(tmp.path(), "bad.json", &body);
    let out = tmp.path().join("out");
    let o = ferronema(&["verify-lemmas", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let record: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(record["error"], "config");
    assert!(record["message"].as_str().unwrap().contains("1<α<2"));
}

#[test]
fn unknown_fields_and_missing_files_are_config_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "x.json", &format!(r#"{{{PARAMS}, "epsilons": [0.25], "colour": "red"}}"#));
    assert_eq!(ferronema(&["micro-min", "--config", &cfg]).status.code(), Some(2));
    let missing = tmp.path().join("nope.json");
    assert_eq!(ferronema(&["micro-min", "--config", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn under_resolved_particles_exit_with_resolution_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "r.json",
        &format!(r#"{{{PARAMS}, "grid": 8, "epsilons": [0.25], "reference": {{"a": 0.5, "b": 0.25}}}}"#),
    );
    let out = tmp.path().join("out");
    let o = ferronema(&["micro-min", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("error.json")).unwrap()).unwrap();
    assert_eq!(record["error"], "resolution");
}

#[test]
fn schema_is_json() {
    let o = ferronema(&["--schema"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["required"], serde_json::json!(["params", "epsilons"]));
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        let cfg = ferronema_core::RunConfig::read(&p).unwrap();
        cfg.validate().unwrap();
        let kind = cfg.kind.expect("shipped configs name their kind");
        assert_eq!(p.file_stem().unwrap().to_str().unwrap(), kind.name());
        n += 1;
    }
    assert_eq!(n, 7);
}
