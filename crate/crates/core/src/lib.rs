pub mod ground;
pub mod kb;
pub mod learners;
pub mod logic;
pub mod tensor;
pub mod train;
