//! Minimal reverse-mode differentiation over dense `f64` tensors.
//!
//! A [`Tape`] records each operation as it executes. Calling
//! [`Tape::backward`] on a scalar (or [`Tape::backward_injected`] after
//! [`Tape::inject_gradient`]) walks the record in reverse and adds
//! `d root / d node` into every node that requires a gradient.
//!
//! ```
//! use nft::diffcore::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Tensor::vector(vec![0.0, 0.0, 0.0]).unwrap());
//! let s = tape.sigmoid(w);
//! let root = tape.sum(s);
//! tape.backward(root).unwrap();
//! assert_eq!(tape.grad(w).unwrap().data(), &[0.25, 0.25, 0.25]);
//! ```

mod tape;
mod tensor;

pub use tape::{sigmoid, Tape, Var};
pub use tensor::Tensor;
