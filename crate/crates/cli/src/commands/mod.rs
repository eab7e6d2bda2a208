pub mod clean;
pub mod evaluate;
pub mod simulate;
pub mod train;
