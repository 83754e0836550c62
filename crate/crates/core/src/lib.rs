pub mod freqs;
pub mod group;
pub mod linalg;
pub mod dynsys;
pub mod reconstruct;
pub mod systems;
pub mod verify;
pub mod cli;
