pub mod checks;
pub mod lambda;

pub use checks::*;
pub use lambda::{classify_lambda, classify_t_lambda, LambdaClassification, LambdaSpec, SymbolicVerdict};
