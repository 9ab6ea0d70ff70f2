//! Data ingestion, the naive reference interpreter, random formula
//! generation and the bundled experiments behind the `groundlog` binary.

pub mod citeseer;
pub mod cli;
pub mod data;
pub mod experiments;
pub mod gen;
pub mod naive;

// Gradient tapes churn through large short-lived buffers; the system
// allocator hands those straight back to the kernel.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
