//! Minimal reverse-mode automatic differentiation over dense `f64` arrays.
//!
//! Values live in [`Tensor`]s. A [`Tape`] records every operation applied to
//! its nodes; [`Tape::backward`] walks the record in reverse and accumulates
//! gradients into leaf nodes. Parameters are owned by a [`ParamStore`] and
//! copied onto a fresh tape for each forward pass.

mod optim;
mod params;
mod tape;
mod tensor;

pub use optim::{Optimizer, OptimizerKind};
pub use params::{ParamId, ParamStore};
pub use tape::{SpikeFn, Tape, Var};
pub use tensor::Tensor;

pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    (rsa, csa): (isize, isize),
    b: &[f64],
    (rsb, csb): (isize, isize),
    beta: f64,
    c: &mut [f64],
    ldc: usize,
) {
    if m == 0 || n == 0 {
        return;
    }
    debug_assert!(c.len() >= (m - 1) * ldc + n);
    // SAFETY: the caller passes slices that cover the strided extents.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}
