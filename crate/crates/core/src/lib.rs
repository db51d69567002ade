//! Turbo codes from the LTE family with classical and trainable decoders.
//!
//! The pipeline is `info bits -> turbo_encode -> rate_match -> modulate ->
//! AWGN -> demap_llr -> depuncture -> decoder`. Decoders are the log-MAP and
//! max-log-MAP turbo decoders in [`siso`] and the unfolded, weighted
//! max-log-MAP network in [`net`], trained with [`training`].

pub mod channel;
pub mod error;
pub mod formats;
pub mod frame;
pub mod harness;
pub mod interleaver;
pub mod net;
pub mod siso;
pub mod training;
pub mod trellis;

pub use error::{Error, Result};

// The guide's code blocks run as doc-tests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/trellis.md")]
    mod trellis {}
    #[doc = include_str!("../../../book/src/channel.md")]
    mod channel {}
    #[doc = include_str!("../../../book/src/decoding.md")]
    mod decoding {}
    #[doc = include_str!("../../../book/src/turbonet.md")]
    mod turbonet {}
    #[doc = include_str!("../../../book/src/training.md")]
    mod training {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/file-formats.md")]
    mod file_formats {}
}
