#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod geometry;
pub mod lp;
pub mod sim;
pub mod synthesis;
pub mod verify;
