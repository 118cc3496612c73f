#![no_main]

use libfuzzer_sys::fuzz_target;
use sensolab_core::dataset::{import_dataset, Dataset, ImportOptions};
use sensolab_service::FitRequest;

const TABLE: &str = "\tA\tB\tC\n1\t5.1\t2.0\t6.3\n2\t3.2\t4.1\t5.0\n3\t6.8\t1.5\t3.9\n4\t2.4\t5.6\t4.8\n";

fuzz_target!(|data: &[u8]| {
    let Ok(request) = serde_json::from_slice::<FitRequest>(data) else {
        return;
    };
    let table = import_dataset(TABLE.as_bytes(), &ImportOptions::default()).expect("fixed table imports");
    let resolve = |id: &str| -> Option<Dataset> { (id == "t").then(|| table.clone()) };
    if request.check(resolve).is_ok() && !request.is_long() {
        let _ = request.run(resolve);
    }
});
