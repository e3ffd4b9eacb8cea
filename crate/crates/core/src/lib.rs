//! Gradient-similarity analysis of catastrophic forgetting, and masked
//! "collaborative neuron" updates that keep the first-order change of a
//! mastered-set loss nonpositive.
//!
//! The crate is organized bottom-up:
//!
//! - [`autodiff`]: a reverse-mode tape and the set-mean cross-entropy
//!   [`loss_and_grad`](autodiff::loss_and_grad).
//! - [`models`]: MLP classifiers, initialization and greedy prediction.
//! - [`gradsim`]: global and per-parameter similarity, neuron classification,
//!   sim/dissim grouping and first-order loss-change predictions.
//! - [`optim`]: SGD, Momentum, Adam and AdamW with optional masking.
//! - [`harness`]: synthetic tasks, mastered/injection splits and training arms.
//! - [`checkpoint`]: the on-disk parameter format.
//!
//! ```
//! use cnl::gradsim::{classify_neurons, per_param_similarity};
//!
//! let g_mastered = [1.0, -2.0];
//! let g_injection = [3.0, 4.0];
//! let s = per_param_similarity(&g_mastered, &g_injection).unwrap();
//! assert_eq!(s.s, vec![3.0, -8.0]);
//! assert_eq!(classify_neurons(&s).keep, vec![true, false]);
//! ```

pub mod array;
pub mod autodiff;
pub mod checkpoint;
pub mod data;
pub mod error;
pub mod gradsim;
pub mod harness;
pub mod models;
pub mod optim;
pub mod params;

pub use array::DenseArray;
pub use data::SampleSet;
pub use error::{Error, Result};
pub use models::{Activation, ModelArch};
pub use params::{Manifest, ParamVector};

// The guide's code listings compile and run as doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/gradient-similarity.md")]
    mod gradient_similarity {}
    #[doc = include_str!("../../../book/src/conflicting-neurons.md")]
    mod conflicting_neurons {}
    #[doc = include_str!("../../../book/src/masked-updates.md")]
    mod masked_updates {}
    #[doc = include_str!("../../../book/src/optimizers.md")]
    mod optimizers {}
    #[doc = include_str!("../../../book/src/protocols.md")]
    mod protocols {}
    #[doc = include_str!("../../../book/src/command-line.md")]
    mod command_line {}
}
