//! Inpainting-based image compression with a diffusion decoder.
//!
//! The encoder keeps a sparse set of pixels (chosen by edge detection or by
//! dithering the Laplacian magnitude). The decoder evolves the masked heat
//! equation `y' = Ay, y(0) = b` up to a time `t` by an extended Krylov
//! approximation of `e^{tA} b`, whose shifted solves are done by a mask-aware
//! full multigrid method.

pub mod container;
pub mod encoder;
pub mod error;
pub mod field;
pub mod gridcore;
pub mod krylov;
pub mod linalg;
pub mod metrics;
pub mod multigrid;
pub mod pnm;
pub mod reference;

pub use container::CompressedImage;
pub use encoder::{encode_image, EncoderParams, Method};
pub use error::{Error, Result};
pub use field::{InpaintMask, PixelField, Shape, Spacing};
pub use gridcore::MaskedOperator;
pub use krylov::{decode, DecodeParams, DecodeReport};
pub use multigrid::{Multigrid, MultigridConfig};
