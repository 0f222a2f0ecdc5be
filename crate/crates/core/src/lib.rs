#![no_std]
#![doc = include_str!("../README.md")]

extern crate alloc;

pub mod numerics;
pub mod feeder;
pub mod ident;
pub mod loads;
pub mod simulator;
pub mod events;
