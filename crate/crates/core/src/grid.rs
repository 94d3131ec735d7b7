//! The alphabet grid: a bijection between class labels and `(row, column)`
//! cells. Rows index base consonants and columns index vowel orders, which
//! makes them the two auxiliary prediction targets.
//!
//! Grid files are line-oriented UTF-8:
//!
//! ```text
//! #! labels=265 rows=34 cols=9
//! # comment
//! 13,2,6,lie
//! ```
//!
//! Each entry is `label,row,col[,glyphName]`, all indices 1-based. The `#!`
//! pragma declares the grid dimensions; without it the 265 x 34 x 9 default
//! is assumed.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

pub const DEFAULT_GRID_FILE: &str = include_str!("../data/default_grid.csv");

pub const DEFAULT_LABELS: u16 = 265;
pub const DEFAULT_ROWS: u16 = 34;
pub const DEFAULT_COLS: u16 = 9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridEntry {
    pub label: u16,
    pub row: u16,
    pub col: u16,
    pub glyph: Option<String>,
}

/// Unvalidated contents of a grid file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub num_labels: u16,
    pub num_rows: u16,
    pub num_cols: u16,
    pub entries: Vec<GridEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlphabetGrid {
    num_labels: u16,
    num_rows: u16,
    num_cols: u16,
    entries: Vec<GridEntry>,
    cells: Vec<Option<u16>>,
}

fn parse_field(field: &str, line: usize, what: &str) -> Result<u16> {
    field.trim().parse::<u16>().map_err(|_| Error::Parse {
        line,
        message: format!("{what} {:?} is not an unsigned integer", field.trim()),
    })
}

fn parse_pragma(rest: &str, line: usize, spec: &mut GridSpec) -> Result<()> {
    for token in rest.split_whitespace() {
        let (key, value) = token.split_once('=').ok_or_else(|| Error::Parse {
            line,
            message: format!("malformed pragma token {token:?}"),
        })?;
        let value = parse_field(value, line, key)?;
        match key {
            "labels" => spec.num_labels = value,
            "rows" => spec.num_rows = value,
            "cols" => spec.num_cols = value,
            _ => {
                return Err(Error::Parse {
                    line,
                    message: format!("unknown pragma key {key:?}"),
                })
            }
        }
    }
    Ok(())
}

impl GridSpec {
    /// Parses grid text without checking the bijection invariants.
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = GridSpec {
            num_labels: DEFAULT_LABELS,
            num_rows: DEFAULT_ROWS,
            num_cols: DEFAULT_COLS,
            entries: Vec::new(),
        };
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if let Some(rest) = trimmed.strip_prefix("#!") {
                parse_pragma(rest, line, &mut spec)?;
                continue;
            }
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.splitn(4, ',').collect();
            if fields.len() < 3 {
                return Err(Error::Parse {
                    line,
                    message: format!("expected label,row,col[,glyphName], got {trimmed:?}"),
                });
            }
            let glyph = fields
                .get(3)
                .map(|g| g.trim())
                .filter(|g| !g.is_empty())
                .map(String::from);
            spec.entries.push(GridEntry {
                label: parse_field(fields[0], line, "label")?,
                row: parse_field(fields[1], line, "row")?,
                col: parse_field(fields[2], line, "col")?,
                glyph,
            });
        }
        Ok(spec)
    }

    /// Every invariant violation, in file order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.num_labels == 0 || self.num_rows == 0 || self.num_cols == 0 {
            out.push(format!(
                "grid dimensions must be positive (labels={}, rows={}, cols={})",
                self.num_labels, self.num_rows, self.num_cols
            ));
        }
        if self.num_labels as u32 > self.num_rows as u32 * self.num_cols as u32 {
            out.push(format!(
                "{} labels cannot fit in a {}x{} grid",
                self.num_labels, self.num_rows, self.num_cols
            ));
        }
        let mut seen_labels = BTreeSet::new();
        let mut seen_cells = BTreeSet::new();
        for e in &self.entries {
            if e.label == 0 || e.label > self.num_labels {
                out.push(format!("label out of range: {} (expected 1..={})", e.label, self.num_labels));
            } else if !seen_labels.insert(e.label) {
                out.push(format!("duplicate label {}", e.label));
            }
            let row_ok = (1..=self.num_rows).contains(&e.row);
            let col_ok = (1..=self.num_cols).contains(&e.col);
            if !row_ok {
                out.push(format!("row out of range: {} for label {}", e.row, e.label));
            }
            if !col_ok {
                out.push(format!("col out of range: {} for label {}", e.col, e.label));
            }
            if row_ok && col_ok && !seen_cells.insert((e.row, e.col)) {
                out.push(format!("duplicate cell ({},{})", e.row, e.col));
            }
        }
        for label in 1..=self.num_labels {
            if !seen_labels.contains(&label) {
                out.push(format!("missing label {label}"));
            }
        }
        out
    }
}

/// Parse and validate in one step.
pub fn load_grid(text: &str) -> Result<AlphabetGrid> {
    AlphabetGrid::from_spec(GridSpec::parse(text)?)
}

/// All violations of a parsed grid; empty when the grid is valid.
pub fn validate_grid(spec: &GridSpec) -> Vec<String> {
    spec.violations()
}

impl AlphabetGrid {
    pub fn from_spec(spec: GridSpec) -> Result<Self> {
        let violations = spec.violations();
        if !violations.is_empty() {
            return Err(Error::GridViolations(violations));
        }
        let mut cells = vec![None; spec.num_rows as usize * spec.num_cols as usize];
        let mut entries = spec.entries;
        entries.sort_by_key(|e| e.label);
        for e in &entries {
            cells[(e.row as usize - 1) * spec.num_cols as usize + (e.col as usize - 1)] = Some(e.label);
        }
        Ok(Self {
            num_labels: spec.num_labels,
            num_rows: spec.num_rows,
            num_cols: spec.num_cols,
            entries,
            cells,
        })
    }

    /// The shipped grid: 238 base-block labels filling rows 1..34 x columns
    /// 1..7 row-major, and 27 labialized labels in columns 8 and 9.
    pub fn default_grid() -> Self {
        load_grid(DEFAULT_GRID_FILE).expect("shipped grid is valid")
    }

    /// A fully occupied grid with `label = (row - 1) * cols + col`.
    pub fn dense(num_rows: u16, num_cols: u16) -> Result<Self> {
        let n = num_rows as u32 * num_cols as u32;
        if num_rows == 0 || num_cols == 0 || n > u16::MAX as u32 {
            return Err(Error::Validation(format!("invalid grid size {num_rows}x{num_cols}")));
        }
        let mut entries = Vec::with_capacity(n as usize);
        for r in 1..=num_rows {
            for c in 1..=num_cols {
                entries.push(GridEntry {
                    label: (r - 1) * num_cols + c,
                    row: r,
                    col: c,
                    glyph: None,
                });
            }
        }
        Self::from_spec(GridSpec {
            num_labels: n as u16,
            num_rows,
            num_cols,
            entries,
        })
    }

    pub fn num_labels(&self) -> u16 {
        self.num_labels
    }

    pub fn num_rows(&self) -> u16 {
        self.num_rows
    }

    pub fn num_cols(&self) -> u16 {
        self.num_cols
    }

    /// Entries ordered by label.
    pub fn entries(&self) -> &[GridEntry] {
        &self.entries
    }

    pub fn label_to_grid(&self, label: u16) -> Result<(u16, u16)> {
        if label == 0 || label > self.num_labels {
            return Err(Error::Lookup(format!(
                "label {label} out of range 1..={}",
                self.num_labels
            )));
        }
        let e = &self.entries[label as usize - 1];
        Ok((e.row, e.col))
    }

    pub fn grid_to_label(&self, row: u16, col: u16) -> Result<Option<u16>> {
        if row == 0 || row > self.num_rows || col == 0 || col > self.num_cols {
            return Err(Error::Lookup(format!(
                "cell ({row},{col}) outside {}x{} grid",
                self.num_rows, self.num_cols
            )));
        }
        Ok(self.cells[(row as usize - 1) * self.num_cols as usize + (col as usize - 1)])
    }

    pub fn glyph_name(&self, label: u16) -> Option<&str> {
        self.entries
            .get((label as usize).wrapping_sub(1))
            .and_then(|e| e.glyph.as_deref())
    }

    /// Serializes to the grid file format; `parse` of the result is the
    /// same grid.
    pub fn to_file_string(&self) -> String {
        let mut s = format!(
            "#! labels={} rows={} cols={}\n",
            self.num_labels, self.num_rows, self.num_cols
        );
        for e in &self.entries {
            s.push_str(&e.label.to_string());
            s.push(',');
            s.push_str(&e.row.to_string());
            s.push(',');
            s.push_str(&e.col.to_string());
            if let Some(g) = &e.glyph {
                s.push(',');
                s.push_str(g);
            }
            s.push('\n');
        }
        s
    }
}
