pub mod barriers;
pub mod diagnostics;
pub mod dynamics;
pub mod error;
pub mod operators;
pub mod special;
pub mod theorems;
pub mod torus;

pub use error::{Error, Result};

// The guide's chapters, compiled so that their snippets run as doctests.
#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/running.md")]
    mod running {}
    #[doc = include_str!("../../../book/src/checks.md")]
    mod checks {}
}
