pub mod bench;
pub mod cache;
pub mod checkpoint;
pub mod frostt;
pub mod kernel;
pub mod transport;
pub mod train;
