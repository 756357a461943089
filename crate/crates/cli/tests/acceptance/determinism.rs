use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use crate::learning::fixture;
use crate::Outcome;

/// Deterministic artifacts plus the manifest, by file name.
fn snapshot(dir: &Path) -> Result<(BTreeMap<String, Vec<u8>>, Vec<String>), String> {
    let manifest = std::fs::read(dir.join("manifest.json")).map_err(|e| e.to_string())?;
    let m: serde_json::Value = serde_json::from_slice(&manifest).map_err(|e| e.to_string())?;
    let mut files = BTreeMap::new();
    let mut timing = Vec::new();
    for a in m["artifacts"]
        .as_array()
        .ok_or("manifest lists no artifacts")?
    {
        let name = a["file"]
            .as_str()
            .ok_or("artifact without a name")?
            .to_string();
        if a["deterministic"].as_bool() == Some(true) {
            files.insert(
                name.clone(),
                std::fs::read(dir.join(&name)).map_err(|e| format!("{name}: {e}"))?,
            );
        } else {
            timing.push(name);
        }
    }
    files.insert("manifest.json".into(), manifest);
    Ok((files, timing))
}

pub fn rerun_determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let config = fixture("1v1.json").display().to_string();
    let catalog = fixture("catalog.json").display().to_string();
    let runs: Vec<Vec<&str>> = vec![
        vec!["templates", "--catalog", &catalog],
        vec!["templates", "--catalog", &catalog, "--similar"],
        vec![
            "compose",
            "--catalog",
            &catalog,
            "--from",
            "raise_guard",
            "--target",
            "upper_hit",
        ],
        vec!["simulate", "--config", &config, "--episodes", "5"],
        vec!["train", "--config", &config, "--episodes", "50"],
        vec![
            "evaluate",
            "--config",
            &config,
            "--episodes",
            "2",
            "--pretrain",
            "10",
        ],
        vec!["bench-overhead", "--config", &config, "--episodes", "20"],
    ];
    let mut problems = Vec::new();
    let mut compared = 0;
    let mut excluded = Vec::new();
    for (k, args) in runs.iter().enumerate() {
        let out_dir = format!("run{k}");
        let mut full = args.clone();
        full.extend(["--seed", "11", "--out-dir", &out_dir]);
        let mut shots = Vec::new();
        for _ in 0..2 {
            let out = Command::new(env!("CARGO_BIN_EXE_feint"))
                .args(&full)
                .current_dir(tmp.path())
                .output()
                .expect("binary runs");
            if !out.status.success() {
                problems.push(format!(
                    "{}: {}",
                    args[0],
                    String::from_utf8_lossy(&out.stderr).trim()
                ));
                break;
            }
            match snapshot(&tmp.path().join(&out_dir)) {
                Ok(s) => shots.push(s),
                Err(e) => problems.push(format!("{}: {e}", args[0])),
            }
        }
        if let [(a, timing), (b, _)] = shots.as_slice() {
            if a.keys().ne(b.keys()) {
                problems.push(format!("{}: artifact lists differ", args[0]));
            }
            for (name, bytes) in a {
                compared += 1;
                if b.get(name) != Some(bytes) {
                    problems.push(format!("{}: {name} differs", args[0]));
                }
            }
            for t in timing {
                if !excluded.contains(t) {
                    excluded.push(t.clone());
                }
            }
        }
    }
    Outcome::new(
        problems.is_empty(),
        format!(
            "{} invocations run twice, {compared} files byte-identical; wall-clock files flagged in the manifest and excluded: {}{}",
            runs.len(),
            excluded.join(", "),
            if problems.is_empty() { String::new() } else { format!("; problems: {problems:?}") }
        ),
    )
}
