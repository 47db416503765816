//! Stock universe: `stock_id<TAB>sector` per line.

use std::collections::BTreeMap;
use std::io::BufRead;
use std::path::Path;

use crate::{PipelineError, Result};

/// Ordered stock ids with sectors. The position of a stock is its one-hot index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StockUniverse {
    entries: Vec<(String, String)>,
    index: BTreeMap<String, usize>,
}

impl StockUniverse {
    pub fn new(entries: Vec<(String, String)>) -> Result<Self> {
        let mut index = BTreeMap::new();
        for (i, (id, _)) in entries.iter().enumerate() {
            if id.is_empty() {
                return Err(PipelineError::Universe(format!("empty stock id in row {}", i + 1)));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(PipelineError::Universe(format!("duplicate stock id {id}")));
            }
        }
        Ok(StockUniverse { entries, index })
    }

    /// Accepts an optional `stock_id<TAB>sector` header and `#` comments.
    pub fn from_reader<R: BufRead>(reader: R) -> Result<Self> {
        let mut entries = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (n == 0 && line.starts_with("stock_id\t")) {
                continue;
            }
            let mut parts = line.split('\t');
            match (parts.next(), parts.next(), parts.next()) {
                (Some(id), Some(sector), None) => entries.push((id.trim().to_string(), sector.trim().to_string())),
                _ => {
                    return Err(PipelineError::Universe(format!(
                        "line {}: expected stock_id<TAB>sector",
                        n + 1
                    )))
                }
            }
        }
        Self::new(entries)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("stock_id\tsector\n");
        for (id, sector) in &self.entries {
            out.push_str(&format!("{id}\t{sector}\n"));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn index_of(&self, stock_id: &str) -> Option<usize> {
        self.index.get(stock_id).copied()
    }

    pub fn sector(&self, stock_id: &str) -> Option<&str> {
        self.index_of(stock_id).map(|i| self.entries[i].1.as_str())
    }

    pub fn stocks(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(id, _)| id.as_str())
    }
}
