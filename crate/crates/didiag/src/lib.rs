pub mod cli;
pub mod diagram;
pub mod duplication;
pub mod extractor;
pub mod protocol;
pub mod regcalc;
pub mod rewrite;
