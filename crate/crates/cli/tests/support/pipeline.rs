//! Drives the built binary over a run directory.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_bias-audit"))
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn run<I, S>(args: I) -> Output
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    Command::new(bin())
        .args(args.into_iter().map(Into::into))
        .env_remove("BIAS_AUDIT_CACHE_DIR")
        .output()
        .expect("spawn bias-audit")
}

/// Runs a command and fails with its stderr unless it exits 0.
pub fn run_ok(args: &[OsString]) -> Result<Output, String> {
    let out = run(args.iter().cloned());
    if out.status.code() == Some(0) {
        Ok(out)
    } else {
        Err(format!(
            "`bias-audit {}` exited {:?}: {}",
            args.iter().map(|a| a.to_string_lossy()).collect::<Vec<_>>().join(" "),
            out.status.code(),
            String::from_utf8_lossy(&out.stderr).lines().last().unwrap_or_default()
        ))
    }
}

fn os(parts: &[&dyn AsRef<std::ffi::OsStr>]) -> Vec<OsString> {
    parts.iter().map(|p| p.as_ref().to_os_string()).collect()
}

pub struct Annotation {
    pub annotators: usize,
    pub noise: f64,
    pub seed: u64,
}

impl Default for Annotation {
    fn default() -> Self {
        Self {
            annotators: 5,
            noise: 0.3,
            seed: 7,
        }
    }
}

/// ingest, detect, debias 1-3, reassess, mock-annotate, evaluate (all
/// three), analyze with charts and report, all with the mock provider.
pub fn full_pipeline(run_dir: &Path, corpus: &Path, concurrency: usize, ann: &Annotation) -> Result<(), String> {
    let c = concurrency.to_string();
    let log = ["--log-level", "warn", "--concurrency", c.as_str()];
    let step = |args: Vec<OsString>| -> Result<(), String> {
        let mut full: Vec<OsString> = log.iter().map(OsString::from).collect();
        full.extend(args);
        run_ok(&full).map(|_| ())
    };
    step(os(&[&"ingest", &"--corpus", &corpus, &"--out", &run_dir]))?;
    step(os(&[&"detect", &"--corpus", &corpus, &"--provider", &"mock", &"--out", &run_dir]))?;
    let assessments = run_dir.join("assessments/mock-detector.jsonl");
    let mut reassessed = Vec::new();
    for level in ["1", "2", "3"] {
        step(os(&[&"debias", &"--assessments", &assessments, &"--level", &level, &"--provider", &"mock", &"--out", &run_dir]))?;
        let debiased = run_dir.join(format!("debias/level{level}.jsonl"));
        step(os(&[&"reassess", &"--in", &debiased, &"--provider", &"mock", &"--out", &run_dir]))?;
        reassessed.push(run_dir.join(format!("debias/level{level}.reassessed.jsonl")));
    }
    let annotations = run_dir.join("annotations.csv");
    let (n, noise, seed) = (ann.annotators.to_string(), ann.noise.to_string(), ann.seed.to_string());
    let mut args = os(&[&"mock-annotate", &"--corpus", &corpus, &"--out", &annotations, &"--annotators", &n, &"--noise", &noise, &"--seed", &seed, &"--debiased"]);
    args.extend(reassessed.iter().map(|p| p.as_os_str().to_os_string()));
    step(args)?;

    step(os(&[&"evaluate", &"detection", &"--annotations", &annotations, &"--assessments", &assessments, &"--out", &run_dir]))?;
    let mut args = os(&[&"evaluate", &"debias", &"--annotations", &annotations, &"--out", &run_dir, &"--debiased"]);
    args.extend(reassessed.iter().map(|p| p.as_os_str().to_os_string()));
    step(args)?;
    let mut args = os(&[&"evaluate", &"similarity", &"--annotations", &annotations, &"--embedding-provider", &"mock", &"--out", &run_dir, &"--debiased"]);
    args.extend(reassessed.iter().map(|p| p.as_os_str().to_os_string()));
    step(args)?;

    step(os(&[&"analyze", &"--assessments", &assessments, &"--corpus", &corpus, &"--out", &run_dir.join("analytics"), &"--charts"]))?;
    step(os(&[&"report", &"--run-dir", &run_dir]))?;
    Ok(())
}

/// Every file below `dir` by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).expect("read dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&path).expect("read file"));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// First differing path between two snapshots, if any.
pub fn first_difference(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) -> Option<String> {
    let keys_a: Vec<&String> = a.keys().collect();
    let keys_b: Vec<&String> = b.keys().collect();
    if keys_a != keys_b {
        let only_a: Vec<_> = a.keys().filter(|k| !b.contains_key(*k)).collect();
        let only_b: Vec<_> = b.keys().filter(|k| !a.contains_key(*k)).collect();
        return Some(format!("file sets differ: only left {only_a:?}, only right {only_b:?}"));
    }
    a.iter().find(|(k, v)| b[*k] != **v).map(|(k, _)| format!("{k} differs"))
}
