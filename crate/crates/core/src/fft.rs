//! Square 2-D complex FFTs on row-major buffers.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::scalar::Scalar;

#[derive(Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Forward,
    Inverse,
}

/// Unnormalized in-place 2-D transform of an `m x m` row-major buffer.
pub(crate) fn fft2<T: Scalar>(buf: &mut [Complex<T>], m: usize, dir: Direction) {
    debug_assert_eq!(buf.len(), m * m);
    let mut planner = FftPlanner::<T>::new();
    let fft = match dir {
        Direction::Forward => planner.plan_fft_forward(m),
        Direction::Inverse => planner.plan_fft_inverse(m),
    };
    let mut scratch = vec![Complex::new(T::zero(), T::zero()); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
    transpose(buf, m);
    fft.process_with_scratch(buf, &mut scratch);
    transpose(buf, m);
}

fn transpose<T: Copy>(buf: &mut [T], m: usize) {
    const TILE: usize = 32;
    for bi in (0..m).step_by(TILE) {
        for bj in (bi..m).step_by(TILE) {
            for i in bi..(bi + TILE).min(m) {
                let start = if bi == bj { i + 1 } else { bj };
                for j in start..(bj + TILE).min(m) {
                    buf.swap(i * m + j, j * m + i);
                }
            }
        }
    }
}
