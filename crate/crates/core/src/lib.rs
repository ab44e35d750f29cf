//! TD(lambda) and Sarsa(lambda) with sigmoid-weighted linear units on
//! stochastic SZ-Tetris and 10x10 Tetris.
//!
//! The crate is layered bottom-up: [`activations`] and [`network`] provide
//! function approximators with exact gradients, [`env`] and [`features`]
//! the games and their encodings, [`policy`] and [`algorithms`] the
//! learners, and [`harness`] and [`analysis`] the experiment tooling.

pub mod activations;
pub mod algorithms;
pub mod analysis;
pub mod env;
pub mod features;
pub mod harness;
pub mod network;
pub mod policy;
pub mod rng;
