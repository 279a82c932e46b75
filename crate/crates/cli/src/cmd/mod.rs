pub mod augment;
pub mod caption;
pub mod eval;
pub mod gradcheck;
pub mod synth;
pub mod train;
