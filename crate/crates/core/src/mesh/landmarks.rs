use std::collections::HashSet;
use std::path::Path;

use crate::error::MeshError;

/// A landmark correspondence, stored 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LandmarkFilePair {
    pub source_index: usize,
    pub target_index: usize,
}

/// Parses one 1-based `i j` pair per line; `#` starts a comment.
pub fn parse_landmarks(text: &str) -> Result<Vec<LandmarkFilePair>, MeshError> {
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        if tokens.len() != 2 {
            return Err(MeshError::Landmark {
                line,
                message: format!("expected two indices, found {}", tokens.len()),
            });
        }
        let mut idx = [0usize; 2];
        for (slot, t) in idx.iter_mut().zip(&tokens) {
            let v: usize = t.parse().map_err(|_| MeshError::Landmark {
                line,
                message: format!("bad index {t:?}"),
            })?;
            if v == 0 {
                return Err(MeshError::Landmark {
                    line,
                    message: "indices are 1-based".into(),
                });
            }
            *slot = v - 1;
        }
        pairs.push(LandmarkFilePair {
            source_index: idx[0],
            target_index: idx[1],
        });
    }
    Ok(pairs)
}

pub fn load_landmarks(path: &Path) -> Result<Vec<LandmarkFilePair>, MeshError> {
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_landmarks(&text)
}

/// Checks ranges against the two meshes and rejects repeated pairs.
/// The reported line is the 1-based position in `pairs`.
pub fn validate_landmarks(
    pairs: &[LandmarkFilePair],
    n_source: usize,
    n_target: usize,
) -> Result<(), MeshError> {
    let mut seen = HashSet::new();
    for (i, p) in pairs.iter().enumerate() {
        if p.source_index >= n_source || p.target_index >= n_target {
            return Err(MeshError::Landmark {
                line: i + 1,
                message: format!(
                    "pair ({}, {}) out of range for meshes with {n_source} and {n_target} vertices",
                    p.source_index + 1,
                    p.target_index + 1
                ),
            });
        }
        if !seen.insert(*p) {
            return Err(MeshError::Landmark {
                line: i + 1,
                message: "duplicate pair".into(),
            });
        }
    }
    Ok(())
}
