#![no_main]

use libfuzzer_sys::fuzz_target;
use sensolab_core::dataset::{import_dataset, to_delimited, Decimal, Delimiter, Encoding, ImportOptions};

fuzz_target!(|data: &[u8]| {
    let Some((&flags, text)) = data.split_first() else {
        return;
    };
    let opts = ImportOptions {
        delimiter: [Delimiter::Tab, Delimiter::Comma, Delimiter::Space][(flags % 3) as usize],
        decimal_mark: if flags & 0x04 != 0 { Decimal::Comma } else { Decimal::Period },
        encoding: [Encoding::Ascii, Encoding::Utf8, Encoding::Latin1][((flags >> 3) % 3) as usize],
        has_row_names: flags & 0x20 == 0,
        has_col_names: flags & 0x40 == 0,
        ..ImportOptions::default()
    };
    if opts.check().is_err() {
        return;
    }
    let Ok(d) = import_dataset(text, &opts) else {
        return;
    };
    assert_eq!(d.nrows(), d.row_labels().len());
    assert_eq!(d.ncols(), d.col_labels().len());

    // Whatever was imported exports and reads back to the same shape.
    if let Ok(out) = to_delimited(&d, opts.delimiter, opts.decimal_mark) {
        let again = ImportOptions {
            encoding: Encoding::Utf8,
            has_row_names: true,
            has_col_names: true,
            ..opts.clone()
        };
        if let Ok(e) = import_dataset(out.as_bytes(), &again) {
            assert_eq!((e.nrows(), e.ncols()), (d.nrows(), d.ncols()));
        }
    }
});
