pub mod electrodogram;
pub mod enhance;
pub mod eval;
pub mod gradcheck;
pub mod mix;
pub mod params;
pub mod synth;
pub mod train;
