//! Arbitrary-scale image super-resolution with an implicit image function.
//!
//! A small convolutional encoder turns a low-resolution image into a feature
//! map; a residual MLP decodes any continuous query coordinate (plus a
//! periodic encoding of the local offset and the target cell size) into an
//! RGB value. One trained model renders every scale, integer or not.

pub mod imaging;
pub mod implicit;
pub mod model;
pub mod evalbench;
pub mod numerics;
pub mod synth;
pub mod training;
