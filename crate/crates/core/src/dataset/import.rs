use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{auto_labels, fresh_id, CellMatrix, Dataset, Group, Role};
use crate::error::ImportError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileFormat {
    #[default]
    Delimited,
    Workbook,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Tab,
    Comma,
    Space,
}

impl Delimiter {
    pub fn as_char(self) -> char {
        match self {
            Delimiter::Tab => '\t',
            Delimiter::Comma => ',',
            Delimiter::Space => ' ',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decimal {
    #[default]
    Period,
    Comma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Encoding {
    #[default]
    Ascii,
    Utf8,
    Latin1,
}

macro_rules! parse_enum {
    ($t:ty, $what:literal, { $($s:literal => $v:expr),* $(,)? }) => {
        impl FromStr for $t {
            type Err = String;
            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.to_ascii_lowercase().as_str() {
                    $($s => Ok($v),)*
                    _ => Err(format!(concat!("unknown ", $what, " '{}'"), s)),
                }
            }
        }
    };
}

parse_enum!(FileFormat, "format", { "delimited" => FileFormat::Delimited, "text" => FileFormat::Delimited,
    "workbook" => FileFormat::Workbook, "excel" => FileFormat::Workbook });
parse_enum!(Delimiter, "delimiter", { "tab" => Delimiter::Tab, "comma" => Delimiter::Comma, "space" => Delimiter::Space });
parse_enum!(Decimal, "decimal mark", { "period" => Decimal::Period, "comma" => Decimal::Comma });
parse_enum!(Encoding, "encoding", { "ascii" => Encoding::Ascii, "utf8" => Encoding::Utf8, "utf-8" => Encoding::Utf8,
    "latin1" => Encoding::Latin1, "latin-1" => Encoding::Latin1 });

impl fmt::Display for Encoding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Encoding::Ascii => "ASCII",
            Encoding::Utf8 => "UTF-8",
            Encoding::Latin1 => "latin-1",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ImportOptions {
    pub format: FileFormat,
    pub delimiter: Delimiter,
    pub decimal_mark: Decimal,
    pub encoding: Encoding,
    pub has_row_names: bool,
    pub has_col_names: bool,
    pub dataset_name: String,
    pub role: Role,
}

impl Default for ImportOptions {
    fn default() -> Self {
        Self {
            format: FileFormat::Delimited,
            delimiter: Delimiter::Tab,
            decimal_mark: Decimal::Period,
            encoding: Encoding::Ascii,
            has_row_names: true,
            has_col_names: true,
            dataset_name: String::new(),
            role: Role::Other,
        }
    }
}

impl ImportOptions {
    pub fn check(&self) -> Result<(), ImportError> {
        if self.format == FileFormat::Delimited
            && self.decimal_mark == Decimal::Comma
            && self.delimiter == Delimiter::Comma
        {
            return Err(ImportError::Options(
                "decimal comma cannot be combined with the comma delimiter".into(),
            ));
        }
        Ok(())
    }
}

/// One cell of a raw table before typing.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum RawCell {
    Empty,
    Text(String),
    Number(f64),
}

/// A raw table row with its 1-based position in the source.
pub(crate) struct RawRow {
    pub line: usize,
    pub cells: Vec<RawCell>,
}

pub fn import_dataset(raw: &[u8], opts: &ImportOptions) -> Result<Dataset, ImportError> {
    opts.check()?;
    match opts.format {
        FileFormat::Delimited => {
            let text = decode(raw, opts.encoding)?;
            let rows = split_delimited(&text, opts.delimiter);
            build_dataset(rows, opts, opts.decimal_mark)
        }
        FileFormat::Workbook => {
            let rows = super::workbook::read_first_sheet(raw)?;
            let decimal = detect_decimal(&rows);
            build_dataset(rows, opts, decimal)
        }
    }
}

fn decode(raw: &[u8], encoding: Encoding) -> Result<String, ImportError> {
    match encoding {
        Encoding::Ascii => match raw.iter().position(|b| !b.is_ascii()) {
            Some(offset) => Err(ImportError::Decode {
                encoding: "ASCII",
                offset,
            }),
            None => Ok(raw.iter().map(|&b| b as char).collect()),
        },
        Encoding::Utf8 => {
            let raw = raw.strip_prefix(b"\xEF\xBB\xBF").unwrap_or(raw);
            std::str::from_utf8(raw)
                .map(str::to_owned)
                .map_err(|e| ImportError::Decode {
                    encoding: "UTF-8",
                    offset: e.valid_up_to(),
                })
        }
        Encoding::Latin1 => Ok(raw.iter().map(|&b| b as char).collect()),
    }
}

fn split_delimited(text: &str, delimiter: Delimiter) -> Vec<RawRow> {
    let lines: Vec<&str> = text.lines().collect();
    let mut rows = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let start = i;
        let (mut fields, mut open) = scan_fields(lines[i], delimiter);
        // A quoted field may continue on following lines.
        let mut record = lines[i].to_owned();
        let mut j = i;
        while open && j + 1 < lines.len() {
            j += 1;
            record.push('\n');
            record.push_str(lines[j]);
            (fields, open) = scan_fields(&record, delimiter);
        }
        if open {
            // never closed: read the first line on its own
            fields = split_fields(lines[start], delimiter);
        } else {
            i = j;
        }
        i += 1;
        if record.trim().is_empty() {
            continue;
        }
        rows.push(RawRow {
            line: start + 1,
            cells: fields
                .into_iter()
                .map(|f| if f.is_empty() { RawCell::Empty } else { RawCell::Text(f) })
                .collect(),
        });
    }
    rows
}

/// Split one line into fields. Double quotes protect delimiters and `""`
/// escapes a quote. With the space delimiter, runs of blanks separate fields.
pub(crate) fn split_fields(line: &str, delimiter: Delimiter) -> Vec<String> {
    scan_fields(line, delimiter).0
}

/// Fields of a record and whether it ends inside a quoted field.
fn scan_fields(line: &str, delimiter: Delimiter) -> (Vec<String>, bool) {
    let sep = delimiter.as_char();
    let collapse = delimiter == Delimiter::Space;
    let line = if collapse { line.trim() } else { line };
    let mut fields = Vec::new();
    let mut cur = String::new();
    let mut quoted = false;
    let mut was_quoted = false;
    let mut chars = line.chars().peekable();
    while let Some(ch) = chars.next() {
        if quoted {
            if ch == '"' {
                if chars.peek() == Some(&'"') {
                    chars.next();
                    cur.push('"');
                } else {
                    quoted = false;
                }
            } else {
                cur.push(ch);
            }
        } else if ch == '"' && cur.trim().is_empty() && !was_quoted {
            cur.clear();
            quoted = true;
            was_quoted = true;
        } else if ch == sep {
            fields.push(finish_field(&mut cur, was_quoted));
            was_quoted = false;
            if collapse {
                while chars.peek() == Some(&' ') {
                    chars.next();
                }
            }
        } else {
            cur.push(ch);
        }
    }
    fields.push(finish_field(&mut cur, was_quoted));
    (fields, quoted)
}

fn finish_field(cur: &mut String, was_quoted: bool) -> String {
    let s = std::mem::take(cur);
    if was_quoted {
        // text after the closing quote is kept verbatim, minus padding
        s.trim_end().to_owned()
    } else {
        s.trim().to_owned()
    }
}

/// Parse a data cell. `Ok(None)` is a missing value.
pub(crate) fn parse_number(text: &str, decimal: Decimal) -> Option<Option<f64>> {
    let t = text.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan") {
        return Some(None);
    }
    let normalized = match decimal {
        Decimal::Period if t.contains(',') => return None,
        Decimal::Period => t.to_owned(),
        Decimal::Comma if t.contains('.') => return None,
        Decimal::Comma => t.replace(',', "."),
    };
    let ok_chars = normalized
        .chars()
        .all(|c| c.is_ascii_digit() || matches!(c, '.' | '-' | '+' | 'e' | 'E'));
    if !ok_chars || !normalized.chars().any(|c| c.is_ascii_digit()) {
        return None;
    }
    normalized.parse::<f64>().ok().filter(|v| v.is_finite()).map(Some)
}

fn is_missing_token(text: &str) -> bool {
    let t = text.trim();
    t.is_empty() || t.eq_ignore_ascii_case("na") || t.eq_ignore_ascii_case("nan")
}

fn cell_text(c: &RawCell) -> String {
    match c {
        RawCell::Empty => String::new(),
        RawCell::Text(s) => s.clone(),
        RawCell::Number(v) => v.to_string(),
    }
}

/// Majority vote between `1,5`-style and `1.5`-style text cells.
fn detect_decimal(rows: &[RawRow]) -> Decimal {
    let (mut comma, mut period) = (0usize, 0usize);
    for c in rows.iter().flat_map(|r| &r.cells) {
        if let RawCell::Text(s) = c {
            let s = s.trim().trim_start_matches(['-', '+']);
            let mut parts = s.splitn(2, [',', '.']);
            let (a, b) = (parts.next().unwrap_or(""), parts.next().unwrap_or(""));
            let digits = |x: &str| !x.is_empty() && x.chars().all(|c| c.is_ascii_digit());
            if digits(a) && digits(b) {
                if s.contains(',') {
                    comma += 1;
                } else {
                    period += 1;
                }
            }
        }
    }
    if comma > period {
        Decimal::Comma
    } else {
        Decimal::Period
    }
}

pub(crate) fn build_dataset(
    mut rows: Vec<RawRow>,
    opts: &ImportOptions,
    decimal: Decimal,
) -> Result<Dataset, ImportError> {
    // header lines written without a corner cell (R style) are one field short
    if opts.has_row_names && opts.has_col_names && rows.len() > 1 {
        if rows[0].cells.len() + 1 == rows[1].cells.len() {
            rows[0].cells.insert(0, RawCell::Empty);
        }
    }
    let width = rows.first().ok_or(ImportError::Empty)?.cells.len();
    for r in &rows {
        if r.cells.len() != width {
            return Err(ImportError::Ragged {
                row: r.line,
                expected: width,
                found: r.cells.len(),
            });
        }
    }
    let first_col = usize::from(opts.has_row_names);
    let (header, body) = if opts.has_col_names {
        let (h, b) = rows.split_first().ok_or(ImportError::Empty)?;
        (Some(h), b)
    } else {
        (None, &rows[..])
    };

    let col_names: Vec<String> = match header {
        Some(h) => h.cells[first_col.min(width)..].iter().map(cell_text).collect(),
        None => Vec::new(),
    };
    let meta_col = |j: usize| col_names.get(j).is_some_and(|n| n.starts_with('_'));
    let row_name = |r: &RawRow| if opts.has_row_names { cell_text(&r.cells[0]) } else { String::new() };
    let meta_row = |r: &RawRow| opts.has_row_names && row_name(r).starts_with('_');

    let n_fields = width.saturating_sub(first_col);
    let data_cols: Vec<usize> = (0..n_fields).filter(|&j| !meta_col(j)).collect();
    let group_cols: Vec<usize> = (0..n_fields).filter(|&j| meta_col(j)).collect();
    let data_rows: Vec<&RawRow> = body.iter().filter(|r| !meta_row(r)).collect();
    let group_rows: Vec<&RawRow> = body.iter().filter(|r| meta_row(r)).collect();
    if data_rows.is_empty() || data_cols.is_empty() {
        return Err(ImportError::Empty);
    }

    let mut cells = Vec::with_capacity(data_rows.len() * data_cols.len());
    for r in &data_rows {
        for &j in &data_cols {
            let value = match &r.cells[first_col + j] {
                RawCell::Empty => None,
                RawCell::Number(v) if v.is_finite() => Some(*v),
                other => {
                    let text = cell_text(other);
                    parse_number(&text, decimal).ok_or(ImportError::Unparseable {
                        row: r.line,
                        col: first_col + j + 1,
                        text,
                    })?
                }
            };
            cells.push(value);
        }
    }
    let values = CellMatrix::new(data_rows.len(), data_cols.len(), cells)
        .map_err(|e| ImportError::Document(e.to_string()))?;

    let row_labels = if opts.has_row_names {
        data_rows.iter().map(|r| row_name(r)).collect()
    } else {
        auto_labels("R", data_rows.len())
    };
    let col_labels = if opts.has_col_names {
        data_cols.iter().map(|&j| col_names[j].clone()).collect()
    } else {
        auto_labels("C", data_cols.len())
    };

    let mut row_groups = Vec::new();
    for &j in &group_cols {
        let name = col_names[j].clone();
        let mut labels = Vec::with_capacity(data_rows.len());
        for (i, r) in data_rows.iter().enumerate() {
            let t = cell_text(&r.cells[first_col + j]);
            if is_missing_token(&t) {
                return Err(ImportError::MissingMetadata { group: name, index: i + 1 });
            }
            labels.push(t);
        }
        row_groups.push(Group { name, labels });
    }
    let mut col_groups = Vec::new();
    for r in &group_rows {
        let name = row_name(r);
        let mut labels = Vec::with_capacity(data_cols.len());
        for (i, &j) in data_cols.iter().enumerate() {
            let t = cell_text(&r.cells[first_col + j]);
            if is_missing_token(&t) {
                return Err(ImportError::MissingMetadata { group: name, index: i + 1 });
            }
            labels.push(t);
        }
        col_groups.push(Group { name, labels });
    }

    Ok(Dataset {
        id: fresh_id(),
        name: opts.dataset_name.clone(),
        role: opts.role,
        values,
        row_labels,
        col_labels,
        row_groups,
        col_groups,
    })
}
