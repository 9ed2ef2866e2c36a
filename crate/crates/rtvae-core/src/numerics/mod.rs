//! Dense matrices, a reverse-mode differentiation tape, and a seeded
//! generator. Everything downstream builds its losses as graphs on the tape.

mod matrix;
mod rng;
mod tape;

pub use matrix::{Matrix, NumericsError, PROB_FLOOR};
pub use rng::{subseed, Rng};
pub use tape::{reparameterize, NodeId, Tape};
