pub mod benchmark;
pub mod connectivity;
pub mod error;
pub mod factor;
pub mod linalg;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod tensorize;

pub use error::{Error, Result};
pub use tensor::{CMatrix, ComplexTensor, Dims, Mode, RMatrix, C64};

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub struct Introduction;
    #[doc = include_str!("../../../book/src/tensors.md")]
    pub struct Tensors;
    #[doc = include_str!("../../../book/src/factorization.md")]
    pub struct Factorization;
    #[doc = include_str!("../../../book/src/connectivity.md")]
    pub struct Connectivity;
    #[doc = include_str!("../../../book/src/simulation.md")]
    pub struct Simulation;
    #[doc = include_str!("../../../book/src/benchmark.md")]
    pub struct Benchmark;
}
