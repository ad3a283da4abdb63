//! Runs the preset experiments and groups check results by criterion label.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use cliquehit::harness::{load_preset, run_experiment, CheckResult, HarnessError};

pub const CRITERIA: [(&str, &str); 10] = [
    ("c01", "triangle factor at the cover time, trend in n"),
    ("c02", "3-uniform perfect matching at the cover time"),
    ("c03", "graph perfect matching at the cover time"),
    ("c04", "static coupling marginals, r = 4"),
    ("c05", "conditional probability oracles"),
    ("c06", "avoidable and extra-clique detectors"),
    ("c07", "partition bound and w-function"),
    ("c08", "thinning keeps the cover time"),
    ("c09", "hitting times agree"),
    ("c10", "exceptional set structure"),
];

/// The presets shipped with the core crate.
pub fn preset_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/presets")
}

/// Every check of every `*.toml` preset in `dir`, keyed by label. Checks
/// without a label fall under the preset name.
pub fn run_presets(dir: &Path) -> Result<BTreeMap<String, Vec<CheckResult>>, HarnessError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| HarnessError::Read {
            path: dir.to_path_buf(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    files.sort();
    let mut by_label: BTreeMap<String, Vec<CheckResult>> = BTreeMap::new();
    for file in &files {
        let preset = load_preset(file)?;
        for cfg in &preset.experiments {
            for c in run_experiment(cfg)?.checks {
                let label = c.check.label.clone().unwrap_or_else(|| preset.name.clone());
                by_label.entry(label).or_default().push(c);
            }
        }
    }
    Ok(by_label)
}

/// A criterion passes when it has at least one check and all of them pass.
pub fn criterion_passes(checks: &[CheckResult]) -> bool {
    !checks.is_empty() && checks.iter().all(|c| c.pass)
}
