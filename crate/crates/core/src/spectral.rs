//! FFT helpers for fields sampled on a periodic two-dimensional grid.
//!
//! Fields are `DMatrix` values with rows indexing the first coordinate
//! (position) and columns the second (momentum).

use nalgebra::DMatrix;
use rustfft::FftPlanner;

use crate::scalar::{count, Real, C};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// Unnormalized in-place FFT of a single sequence. The inverse carries no
/// `1/n` factor.
pub fn fft_1d<T: Real>(data: &mut [C<T>], inverse: bool) {
    let mut planner = FftPlanner::<T>::new();
    let fft = if inverse { planner.plan_fft_inverse(data.len()) } else { planner.plan_fft_forward(data.len()) };
    fft.process(data);
}

/// Unnormalized FFT along one axis of every line of `field`.
pub fn fft_axis<T: Real>(field: &mut DMatrix<C<T>>, axis: Axis, inverse: bool) {
    let (nr, nc) = field.shape();
    let mut planner = FftPlanner::<T>::new();
    match axis {
        Axis::Rows => {
            // transform along the row index: each column is contiguous
            let fft = if inverse { planner.plan_fft_inverse(nr) } else { planner.plan_fft_forward(nr) };
            for mut col in field.column_iter_mut() {
                fft.process(col.as_mut_slice());
            }
        }
        Axis::Cols => {
            let fft = if inverse { planner.plan_fft_inverse(nc) } else { planner.plan_fft_forward(nc) };
            let mut line = vec![C::new(T::zero(), T::zero()); nc];
            for r in 0..nr {
                for c in 0..nc {
                    line[c] = field[(r, c)];
                }
                fft.process(&mut line);
                for c in 0..nc {
                    field[(r, c)] = line[c];
                }
            }
        }
    }
}

/// Signed FFT bin index: `0, 1, .., n/2-1, -n/2, .., -1`.
pub fn signed_bin(m: usize, n: usize) -> i64 {
    if m < n / 2 {
        m as i64
    } else {
        m as i64 - n as i64
    }
}

/// Angular wavenumbers `2π m / (n·h)` in FFT order for spacing `h`.
pub fn wavenumbers<T: Real>(n: usize, spacing: T) -> Vec<T> {
    let scale = T::two_pi() / (count::<T>(n) * spacing);
    (0..n).map(|m| scale * T::from_i64(signed_bin(m, n)).unwrap()).collect()
}

/// Spectral multiplier for `∂^order` on a periodic line. The Nyquist mode
/// is dropped for every positive order, so real input stays real and
/// `∂^a ∂^b = ∂^{a+b}` holds exactly (summation by parts is exact).
pub fn derivative_multiplier<T: Real>(n: usize, spacing: T, order: u32) -> Vec<C<T>> {
    let k = wavenumbers::<T>(n, spacing);
    k.iter()
        .enumerate()
        .map(|(m, &q)| {
            if order > 0 && n % 2 == 0 && m == n / 2 {
                return C::new(T::zero(), T::zero());
            }
            // (i q)^order
            let mut z = C::new(T::one(), T::zero());
            for _ in 0..order {
                z *= C::new(T::zero(), q);
            }
            z
        })
        .collect()
}

/// Partial derivative `∂_rows^a ∂_cols^b` of a periodic field with
/// spacings `(h_rows, h_cols)`.
pub fn derivative<T: Real>(field: &DMatrix<C<T>>, spacings: (T, T), orders: (u32, u32)) -> DMatrix<C<T>> {
    let (nr, nc) = field.shape();
    let mut out = field.clone();
    if orders.0 > 0 {
        let mult = derivative_multiplier(nr, spacings.0, orders.0);
        fft_axis(&mut out, Axis::Rows, false);
        let norm = T::one() / count::<T>(nr);
        for c in 0..nc {
            for r in 0..nr {
                out[(r, c)] *= mult[r] * norm;
            }
        }
        fft_axis(&mut out, Axis::Rows, true);
    }
    if orders.1 > 0 {
        let mult = derivative_multiplier(nc, spacings.1, orders.1);
        fft_axis(&mut out, Axis::Cols, false);
        let norm = T::one() / count::<T>(nc);
        for c in 0..nc {
            for r in 0..nr {
                out[(r, c)] *= mult[c] * norm;
            }
        }
        fft_axis(&mut out, Axis::Cols, true);
    }
    out
}
