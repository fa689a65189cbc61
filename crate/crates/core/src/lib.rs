//! Denoising by inpainting: sparse PDE inpainting averaged over many
//! stochastic masks, together with mask generation, tonal optimisation,
//! classical diffusion baselines and tools for checking the theory.

pub mod baselines;
pub mod error;
pub mod framework;
pub mod grid;
pub mod inpaint;
pub mod masks;
pub mod pnm;
pub mod tonal;

pub use error::{DbiError, Result};
pub use grid::{Mask, NoiseSpec, Raster};
pub use inpaint::{InpaintOperator, MaskSolver, SolveConfig, SolveStats};
