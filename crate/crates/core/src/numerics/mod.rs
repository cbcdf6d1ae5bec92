//! Dense matrices and the reverse-mode tape every network and loss is built on.

mod matrix;
mod tape;

pub use matrix::Matrix;
pub use tape::{Node, Op, Tape, Var};

pub(crate) use tape::{relu, sigmoid};
