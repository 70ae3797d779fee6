//! Dense double-precision tensor kernel: FFT, softmax, convolution, pooling,
//! affine maps and a reverse-mode gradient tape.

pub mod fft;
pub mod ops;
pub mod tape;
mod tensor;

pub use fft::{fft, fft1d, ifft1d, ComplexSpectrum};
pub use ops::{avg_pool2d, conv2d, linear, relu, softmax};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
