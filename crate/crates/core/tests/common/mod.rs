#![allow(dead_code)]

pub mod lmm;
pub mod oracle;
pub mod xlsx;
