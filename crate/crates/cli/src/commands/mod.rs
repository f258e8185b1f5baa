pub mod detect;
pub mod report;
pub mod synth;
pub mod train;
pub mod tune;
