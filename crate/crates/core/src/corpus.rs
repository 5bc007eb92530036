//! Versioned corpus of DSL specs with expected outcomes, shared across the
//! test suite: worked-example composites, scaled experiment configurations,
//! and one triggering spec per diagnostic code. Plain files under `corpus/`,
//! one spec per `.iotecs` file plus a `.expect.json` sidecar.

use crate::validate::{validate, Severity};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("corpus entry `{name}`: sidecar is not valid JSON: {source}")]
    Json {
        name: String,
        source: serde_json::Error,
    },
    #[error("corpus entry `{name}`: missing sidecar `{sidecar}`")]
    MissingSidecar { name: String, sidecar: String },
    #[error("corpus directory `{0}` contains no entries")]
    Empty(PathBuf),
}

/// Expected resolution outcome for a valid entry at a fixed seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub seed: u64,
    pub nodes: u64,
    pub edges: u64,
    pub devices: u64,
    pub expected_sends: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CorpusExpect {
    #[serde(default)]
    pub parse_error: bool,
    /// Distinct error codes the validator must report, exactly.
    #[serde(default)]
    pub error_codes: Vec<String>,
    /// Distinct warning codes the validator must report, exactly.
    #[serde(default)]
    pub warning_codes: Vec<String>,
    #[serde(default)]
    pub plan: Option<PlanSummary>,
    /// Where each expected value comes from; every entry carries one.
    #[serde(default)]
    pub provenance: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub name: String,
    pub source: String,
    pub expect: CorpusExpect,
}

/// The checked-in corpus directory, relative to this crate.
pub fn default_corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

/// Load every entry under `dir`; corruption (missing sidecars, bad JSON, an
/// empty directory) fails loudly. Entries come back sorted by name.
pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let mut entries = Vec::new();
    for item in std::fs::read_dir(dir)? {
        let path = item?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("iotecs") {
            continue;
        }
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let sidecar = path.with_extension("expect.json");
        if !sidecar.exists() {
            return Err(CorpusError::MissingSidecar {
                name,
                sidecar: sidecar.display().to_string(),
            });
        }
        let source = std::fs::read_to_string(&path)?;
        let expect: CorpusExpect = serde_json::from_str(&std::fs::read_to_string(&sidecar)?)
            .map_err(|source| CorpusError::Json {
                name: name.clone(),
                source,
            })?;
        entries.push(CorpusEntry {
            name,
            source,
            expect,
        });
    }
    if entries.is_empty() {
        return Err(CorpusError::Empty(dir.to_path_buf()));
    }
    entries.sort_by(|a, b| a.name.cmp(&b.name));
    Ok(entries)
}

/// Check one entry against its expectations; the returned message names the
/// first mismatch.
pub fn check_entry(entry: &CorpusEntry) -> Result<(), String> {
    let parsed = crate::dsl::parse(&entry.source);
    if entry.expect.parse_error {
        return match parsed {
            Err(_) => Ok(()),
            Ok(_) => Err(format!("`{}`: expected a parse error, but it parsed", entry.name)),
        };
    }
    let ast = parsed.map_err(|e| format!("`{}`: failed to parse: {e}", entry.name))?;

    let diags = validate(&ast);
    let actual: (BTreeSet<&str>, BTreeSet<&str>) = diags.iter().fold(
        (BTreeSet::new(), BTreeSet::new()),
        |(mut errs, mut warns), d| {
            match d.severity {
                Severity::Error => errs.insert(d.code.as_str()),
                Severity::Warning => warns.insert(d.code.as_str()),
            };
            (errs, warns)
        },
    );
    let want_errs: BTreeSet<&str> = entry.expect.error_codes.iter().map(|s| s.as_str()).collect();
    let want_warns: BTreeSet<&str> = entry
        .expect
        .warning_codes
        .iter()
        .map(|s| s.as_str())
        .collect();
    if actual.0 != want_errs {
        return Err(format!(
            "`{}`: error codes {:?}, expected {:?}",
            entry.name, actual.0, want_errs
        ));
    }
    if actual.1 != want_warns {
        return Err(format!(
            "`{}`: warning codes {:?}, expected {:?}",
            entry.name, actual.1, want_warns
        ));
    }

    if let Some(summary) = &entry.expect.plan {
        let plan = crate::plan::resolve(&ast, summary.seed)
            .map_err(|e| format!("`{}`: resolve failed: {e}", entry.name))?;
        let nodes = plan.nodes.len() as u64;
        let edges: u64 = plan.nodes.iter().map(|n| n.edges.len() as u64).sum();
        let devices: u64 = plan
            .nodes
            .iter()
            .flat_map(|n| &n.edges)
            .map(|e| e.devices.len() as u64)
            .sum();
        let expected_sends: u64 = crate::plan::expected_sends(&plan).values().sum();
        let got = PlanSummary {
            seed: summary.seed,
            nodes,
            edges,
            devices,
            expected_sends,
        };
        if got != *summary {
            return Err(format!(
                "`{}`: plan summary {got:?}, expected {summary:?}",
                entry.name
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checked_in_corpus_loads_and_holds() {
        let entries = load_corpus(&default_corpus_dir()).unwrap();
        assert!(entries.len() >= 15, "only {} entries", entries.len());
        for entry in &entries {
            check_entry(entry).unwrap();
        }
    }

    #[test]
    fn every_diagnostic_code_has_a_triggering_entry() {
        let entries = load_corpus(&default_corpus_dir()).unwrap();
        let covered: BTreeSet<String> = entries
            .iter()
            .flat_map(|e| {
                e.expect
                    .error_codes
                    .iter()
                    .chain(e.expect.warning_codes.iter())
                    .cloned()
            })
            .collect();
        for code in [
            "E-UNDECL", "E-DUP", "E-TYPE", "E-PROTO", "E-STEP", "E-RANGE", "W-UNUSED", "W-TIGHT",
            "W-STYLE",
        ] {
            assert!(covered.contains(code), "no corpus entry triggers {code}");
        }
    }

    #[test]
    fn eight_invalid_entries_and_every_expected_value_tagged() {
        let entries = load_corpus(&default_corpus_dir()).unwrap();
        let invalid = entries
            .iter()
            .filter(|e| !e.expect.error_codes.is_empty())
            .count();
        assert_eq!(invalid, 8, "the invalid set is pinned at 8 specs");
        for e in &entries {
            assert!(
                !e.expect.provenance.is_empty(),
                "`{}` carries no provenance tags",
                e.name
            );
        }
    }

    #[test]
    fn missing_sidecar_fails_loudly() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("orphan.iotecs"), "Simulator: {}").unwrap();
        assert!(matches!(
            load_corpus(dir.path()),
            Err(CorpusError::MissingSidecar { .. })
        ));
    }

    #[test]
    fn empty_corpus_is_corruption() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_corpus(dir.path()),
            Err(CorpusError::Empty(_))
        ));
    }
}
