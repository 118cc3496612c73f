//! First-sheet reader for .xls/.xlsx/.xlsb/.ods workbooks.

use std::io::Cursor;

use calamine::{open_workbook_auto_from_rs, Data, Reader};

use super::import::{RawCell, RawRow};
use crate::error::ImportError;

fn raw_cell(d: &Data) -> RawCell {
    match d {
        Data::Empty => RawCell::Empty,
        Data::Int(v) => RawCell::Number(*v as f64),
        Data::Float(v) => RawCell::Number(*v),
        Data::String(s) if s.trim().is_empty() => RawCell::Empty,
        Data::String(s) => RawCell::Text(s.trim().to_owned()),
        Data::Bool(b) => RawCell::Text(if *b { "TRUE" } else { "FALSE" }.to_owned()),
        Data::DateTime(dt) => RawCell::Number(dt.as_f64()),
        Data::DateTimeIso(s) | Data::DurationIso(s) => RawCell::Text(s.clone()),
        Data::Error(e) => RawCell::Text(e.to_string()),
    }
}

/// Cells of the first worksheet. Leading empty columns are kept so that
/// the sheet layout is preserved; leading empty rows are skipped.
pub(crate) fn read_first_sheet(raw: &[u8]) -> Result<Vec<RawRow>, ImportError> {
    let mut book = open_workbook_auto_from_rs(Cursor::new(raw.to_vec()))
        .map_err(|e| ImportError::Workbook(e.to_string()))?;
    let range = book
        .worksheet_range_at(0)
        .ok_or_else(|| ImportError::Workbook("workbook has no sheets".into()))?
        .map_err(|e| ImportError::Workbook(e.to_string()))?;
    let Some((row0, col0)) = range.start() else {
        return Err(ImportError::Empty);
    };
    Ok(range
        .rows()
        .enumerate()
        .map(|(i, cells)| RawRow {
            line: row0 as usize + i + 1,
            cells: std::iter::repeat_n(RawCell::Empty, col0 as usize)
                .chain(cells.iter().map(raw_cell))
                .collect(),
        })
        .collect())
}
