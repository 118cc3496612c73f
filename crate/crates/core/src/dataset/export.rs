use super::{Dataset, Decimal, Delimiter};
use crate::error::ImportError;

/// Serialize a dataset as delimited text with row and column names.
///
/// Row groups are written as trailing `_`-prefixed columns and column groups
/// as trailing `_`-prefixed rows, so [`super::import_dataset`] with both name
/// flags set reads back the same dataset. Numbers use the shortest
/// representation that parses back to the identical `f64`; missing cells are
/// written as `NA`.
pub fn to_delimited(d: &Dataset, delimiter: Delimiter, decimal: Decimal) -> Result<String, ImportError> {
    if delimiter == Delimiter::Comma && decimal == Decimal::Comma {
        return Err(ImportError::Options(
            "decimal comma cannot be combined with the comma delimiter".into(),
        ));
    }
    let sep = delimiter.as_char().to_string();
    let field = |s: &str| quote(s, delimiter);
    let number = |v: Option<f64>| match v {
        None => "NA".to_owned(),
        Some(v) => {
            let s = v.to_string();
            match decimal {
                Decimal::Period => s,
                Decimal::Comma => s.replace('.', ","),
            }
        }
    };

    let mut out = String::new();
    let mut push = |mut fields: Vec<String>| {
        // a blank line would be skipped on import
        if fields.iter().all(|f| f.trim().is_empty()) {
            fields[0] = "\"\"".to_owned();
        }
        out.push_str(&fields.join(&sep));
        out.push('\n');
    };
    let mut header = vec![field("")];
    header.extend(d.col_labels().iter().map(|l| field(l)));
    header.extend(d.row_groups().iter().map(|g| field(&g.name)));
    push(header);

    for r in 0..d.nrows() {
        let mut line = vec![field(&d.row_labels()[r])];
        line.extend(d.values().row(r).iter().map(|&v| number(v)));
        line.extend(d.row_groups().iter().map(|g| field(&g.labels[r])));
        push(line);
    }
    for g in d.col_groups() {
        let mut line = vec![field(&g.name)];
        line.extend(g.labels.iter().map(|l| field(l)));
        line.extend(d.row_groups().iter().map(|_| field("")));
        push(line);
    }
    Ok(out)
}

fn quote(s: &str, delimiter: Delimiter) -> String {
    let needs = s.contains(delimiter.as_char())
        || s.contains(['"', '\n', '\r'])
        || s.trim() != s
        || (s.is_empty() && delimiter == Delimiter::Space);
    if needs {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{import_dataset, CellMatrix, ImportOptions, Role};

    #[test]
    fn round_trip_with_groups() {
        let m = CellMatrix::from_rows(vec![
            vec![Some(1.25), None, Some(-3.0)],
            vec![Some(0.1 + 0.2), Some(1e-7), Some(6.02e23)],
        ])
        .unwrap();
        let d = Dataset::new(
            "x",
            Role::Descriptive,
            m,
            vec!["apple a".into(), "b,c".into()],
            vec!["sweet".into(), "sour".into(), "crisp".into()],
        )
        .unwrap()
        .with_row_group("_variety", vec!["1".into(), "2".into()])
        .unwrap()
        .with_col_group("_kind", vec!["taste".into(), "taste".into(), "texture".into()])
        .unwrap();
        for (delimiter, decimal) in [
            (Delimiter::Tab, Decimal::Period),
            (Delimiter::Tab, Decimal::Comma),
            (Delimiter::Comma, Decimal::Period),
            (Delimiter::Space, Decimal::Period),
            (Delimiter::Space, Decimal::Comma),
        ] {
            let text = to_delimited(&d, delimiter, decimal).unwrap();
            let opts = ImportOptions {
                delimiter,
                decimal_mark: decimal,
                role: Role::Descriptive,
                dataset_name: "x".into(),
                ..ImportOptions::default()
            };
            let back = import_dataset(text.as_bytes(), &opts).unwrap();
            assert_eq!(back.values(), d.values(), "{delimiter:?} {decimal:?}");
            assert_eq!(back.row_labels(), d.row_labels());
            assert_eq!(back.col_labels(), d.col_labels());
            assert_eq!(back.row_groups(), d.row_groups());
            assert_eq!(back.col_groups(), d.col_groups());
        }
    }

    #[test]
    fn labels_with_line_breaks_are_quoted() {
        let m = CellMatrix::from_rows(vec![vec![Some(1.0)]]).unwrap();
        let d = Dataset::new("x", Role::Other, m, vec!["two\nlines".into()], vec!["a\n\nb".into()]).unwrap();
        let text = to_delimited(&d, Delimiter::Tab, Decimal::Period).unwrap();
        let back = import_dataset(text.as_bytes(), &ImportOptions::default()).unwrap();
        assert_eq!((back.nrows(), back.ncols()), (1, 1));
        assert_eq!(back.row_labels(), d.row_labels());
        assert_eq!(back.col_labels(), d.col_labels());
    }

    #[test]
    fn blank_label_lines_survive() {
        let m = CellMatrix::from_rows(vec![vec![None]]).unwrap();
        let d = Dataset::new("x", Role::Other, m, vec!["r".into()], vec!["".into()]).unwrap();
        let text = to_delimited(&d, Delimiter::Tab, Decimal::Period).unwrap();
        assert!(text.starts_with("\"\"\t\n"), "{text:?}");
        let back = import_dataset(text.as_bytes(), &ImportOptions::default()).unwrap();
        assert_eq!(back.col_labels(), d.col_labels());
        assert_eq!(back.row_labels(), d.row_labels());
    }
}
