#![no_main]

use libfuzzer_sys::fuzz_target;
use sensolab_core::dataset::{import_dataset, FileFormat, ImportOptions};

fuzz_target!(|data: &[u8]| {
    let opts = ImportOptions {
        format: FileFormat::Workbook,
        ..ImportOptions::default()
    };
    if let Ok(d) = import_dataset(data, &opts) {
        assert_eq!(d.nrows(), d.row_labels().len());
        assert_eq!(d.ncols(), d.col_labels().len());
    }
});
