//! CIW config: one `class_name<TAB>weight` line per class. Blank lines and
//! lines starting with `#` are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::ebra::CiwTable;
use crate::error::{Error, Result};

pub fn parse_ciw_config(text: &str, path: &Path) -> Result<CiwTable> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let (name, weight) = line
            .split_once('\t')
            .ok_or_else(|| err("expected `class<TAB>weight`".into()))?;
        let weight: f64 = weight
            .trim()
            .parse()
            .map_err(|_| err(format!("weight for `{name}` is not a number: `{weight}`")))?;
        entries.push((name.to_owned(), weight));
    }
    CiwTable::new(entries)
}

pub fn write_ciw_config(table: &CiwTable) -> String {
    let mut out = String::new();
    for (name, w) in table.entries() {
        let _ = writeln!(out, "{name}\t{w}");
    }
    out
}

pub fn load_ciw_config(path: &Path) -> Result<CiwTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_ciw_config(&text, path)
}

pub fn save_ciw_config(path: &Path, table: &CiwTable) -> Result<()> {
    fs::write(path, write_ciw_config(table)).map_err(|e| Error::io(path, e))
}
