pub mod battery;
pub mod fbm;
pub mod moments;
pub mod selfcheck;
