//! Separable Gaussian filtering with reflect-101 borders.
//!
//! Shared by the image blur corruption and the patch-lattice feature
//! smoothing. Planes are row-major with `channels` interleaved values per
//! cell.

use crate::error::{Error, Result};
use crate::par;

/// Discrete 1-D Gaussian of odd length `size`, normalized to sum 1.
pub fn gaussian_kernel_1d(size: usize, sigma: f64) -> Result<Vec<f64>> {
    if size == 0 || size.is_multiple_of(2) {
        return Err(Error::param(format!(
            "kernel size must be odd and positive, got {size}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::param(format!("sigma must be positive, got {sigma}")));
    }
    let r = (size / 2) as f64;
    let mut k: Vec<f64> = (0..size)
        .map(|i| {
            let x = i as f64 - r;
            (-x * x / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|w| *w /= sum);
    Ok(k)
}

/// Mirror an out-of-range index back into `0..n` without repeating the edge
/// sample (`dcb|abcd|cba`). Handles offsets wider than the axis.
#[inline]
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Convolve a `width x height x channels` plane with `kernel` along both axes.
pub fn convolve_separable(
    data: &[f64],
    width: usize,
    height: usize,
    channels: usize,
    kernel: &[f64],
) -> Vec<f64> {
    debug_assert_eq!(data.len(), width * height * channels);
    let r = (kernel.len() / 2) as isize;
    let row_len = width * channels;

    let mut horizontal = vec![0.0; data.len()];
    par::for_each_row_mut(&mut horizontal, row_len, |y, out| {
        let src = &data[y * row_len..(y + 1) * row_len];
        for x in 0..width {
            for c in 0..channels {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let sx = reflect_index(x as isize + k as isize - r, width);
                    acc += w * src[sx * channels + c];
                }
                out[x * channels + c] = acc;
            }
        }
    });

    let mut out = vec![0.0; data.len()];
    par::for_each_row_mut(&mut out, row_len, |y, out_row| {
        for (k, w) in kernel.iter().enumerate() {
            let sy = reflect_index(y as isize + k as isize - r, height);
            let src = &horizontal[sy * row_len..(sy + 1) * row_len];
            for (o, s) in out_row.iter_mut().zip(src) {
                *o += w * s;
            }
        }
    });
    out
}
