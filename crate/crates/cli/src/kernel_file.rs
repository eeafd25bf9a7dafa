//! JSON kernel files.
//!
//! ```json
//! { "dim": 2, "order": 2,
//!   "entries": [ { "index": [1, 1], "value": 0.5 },
//!                { "index": [2, 2], "value": 0.5 } ] }
//! ```
//!
//! Indices are sorted, 1-based and of length `order`; a multi-index may
//! appear once. Each value is the full-tensor entry shared by every
//! permutation of its index.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wiener_core::{SymKernel, ORDER_CAP, SUPPORT_CAP};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEntry {
    pub index: Vec<u32>,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelFile {
    pub dim: usize,
    pub order: usize,
    pub entries: Vec<KernelEntry>,
}

/// Line of the `k`th `"index"` key, which is where entry `k` sits in any
/// reasonably formatted file.
fn entry_line(text: &str, k: usize) -> usize {
    text.match_indices("\"index\"")
        .nth(k)
        .map(|(pos, _)| text[..pos].matches('\n').count() + 1)
        .unwrap_or(1)
}

impl KernelFile {
    pub fn from_kernel(f: &SymKernel) -> Self {
        Self {
            dim: f.dim(),
            order: f.order(),
            entries: f
                .to_entries()
                .into_iter()
                .map(|(index, value)| KernelEntry { index, value })
                .collect(),
        }
    }

    /// Parses and validates; `source` names the input in error messages.
    pub fn parse(text: &str, source: &str) -> CliResult<SymKernel> {
        let file: KernelFile =
            serde_json::from_str(text).map_err(|e| CliError::parse(source, e.line().max(1), e.to_string()))?;
        file.to_kernel(text, source)
    }

    pub fn load(path: &Path) -> CliResult<SymKernel> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    fn to_kernel(&self, text: &str, source: &str) -> CliResult<SymKernel> {
        if self.dim == 0 {
            return Err(CliError::parse(source, 1, "dim must be at least 1"));
        }
        if self.order > ORDER_CAP {
            return Err(CliError::Cap(format!("order {} exceeds the cap of {ORDER_CAP}", self.order)));
        }
        if self.entries.len() > SUPPORT_CAP {
            return Err(CliError::Cap(format!(
                "{} entries exceed the support cap of {SUPPORT_CAP}",
                self.entries.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for (k, e) in self.entries.iter().enumerate() {
            let fail = |msg: String| CliError::parse(source, entry_line(text, k), msg);
            if e.index.len() != self.order {
                return Err(fail(format!(
                    "index {:?} has {} labels, order is {}",
                    e.index,
                    e.index.len(),
                    self.order
                )));
            }
            if let Some(&bad) = e.index.iter().find(|&&l| l == 0 || l as usize > self.dim) {
                return Err(fail(format!("label {bad} in index {:?} outside 1..={}", e.index, self.dim)));
            }
            if e.index.windows(2).any(|w| w[0] > w[1]) {
                return Err(fail(format!("index {:?} is not sorted", e.index)));
            }
            if !seen.insert(e.index.clone()) {
                return Err(fail(format!("duplicate multi-index {:?}", e.index)));
            }
        }
        Ok(SymKernel::new(
            self.dim,
            self.order,
            self.entries.iter().map(|e| (e.index.clone(), e.value)),
        )?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }
}
