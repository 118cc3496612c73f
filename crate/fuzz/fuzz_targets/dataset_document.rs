#![no_main]

use libfuzzer_sys::fuzz_target;
use sensolab_core::dataset::Dataset;

fuzz_target!(|data: &[u8]| {
    let Ok(d) = Dataset::from_json(data) else {
        return;
    };
    let again = Dataset::from_json(d.to_json().as_bytes()).expect("a written document reads back");
    assert_eq!(again.row_labels(), d.row_labels());
    assert_eq!(again.col_labels(), d.col_labels());
    assert_eq!((again.nrows(), again.ncols()), (d.nrows(), d.ncols()));
    assert_eq!(again.values().cells(), d.values().cells());
});
