pub mod data;
pub mod harness;
pub mod losses;
pub mod models;
pub mod numeric;
pub mod training;
