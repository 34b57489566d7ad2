//! Sparse matting Laplacian over `(2r+1)²` local color windows.
//!
//! For every window `w` fully inside the image with color mean `μ` and
//! covariance `Σ`, and every pixel pair `i, j ∈ w`:
//!
//! ```text
//! L_ij += δ_ij − (1 + (I_i − μ)ᵀ (Σ + ε/|w| · I₃)⁻¹ (I_j − μ)) / |w|
//! ```
//!
//! Two pixels interact only if they share a window, so each row has at most
//! `(4r+1)²` nonzeros. Rows are stored densely over that stencil.

use crate::raster::RasterImage;
use crate::scalar::Scalar;

use super::cg::LinearOperator;

#[derive(Debug, Clone)]
pub struct MattingLaplacian<T> {
    width: usize,
    height: usize,
    reach: usize,
    coeffs: Vec<T>,
}

type Mat3<T> = [[T; 3]; 3];

/// Lower Cholesky factor of a symmetric positive definite 3×3 matrix.
#[allow(clippy::needless_range_loop)] // index form mirrors the textbook recurrence
fn cholesky3<T: Scalar>(m: &Mat3<T>) -> Mat3<T> {
    let mut l = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..=i {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                // Regularized covariance is positive definite; guard against rounding anyway.
                l[i][i] = s.max(T::min_positive_value()).sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    l
}

/// `L⁻¹ v` by forward substitution.
fn forward_solve3<T: Scalar>(l: &Mat3<T>, v: [T; 3]) -> [T; 3] {
    let y0 = v[0] / l[0][0];
    let y1 = (v[1] - l[1][0] * y0) / l[1][1];
    let y2 = (v[2] - l[2][0] * y0 - l[2][1] * y1) / l[2][2];
    [y0, y1, y2]
}

impl<T: Scalar> MattingLaplacian<T> {
    /// Assembles the operator. Requires `width, height ≥ 2·radius + 1`.
    #[allow(clippy::needless_range_loop)] // 3×3 covariance accumulation reads best indexed
    pub fn assemble(image: &RasterImage<T>, radius: usize, epsilon: T) -> Self {
        let (w, h) = image.dims();
        let reach = 2 * radius;
        let side = 2 * reach + 1;
        let stencil = side * side;
        let mut coeffs = vec![T::zero(); w * h * stencil];

        let win_side = 2 * radius + 1;
        let n = win_side * win_side;
        let n_t = T::of(n as f64);
        let reg = epsilon / n_t;

        let mut idx = Vec::with_capacity(n);
        let mut centered = Vec::with_capacity(n);
        for cy in radius..h.saturating_sub(radius) {
            for cx in radius..w.saturating_sub(radius) {
                idx.clear();
                centered.clear();
                let mut mean = [T::zero(); 3];
                for y in cy - radius..=cy + radius {
                    for x in cx - radius..=cx + radius {
                        let p = image.get(x, y);
                        idx.push((x, y));
                        for a in 0..3 {
                            mean[a] += p[a];
                        }
                    }
                }
                for m in mean.iter_mut() {
                    *m /= n_t;
                }
                // Two-pass covariance; the one-pass form cancels badly once ε is tiny.
                let mut cov = [[T::zero(); 3]; 3];
                for &(x, y) in &idx {
                    let p = image.get(x, y);
                    let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
                    for a in 0..3 {
                        for b in 0..3 {
                            cov[a][b] += d[a] * d[b];
                        }
                    }
                    centered.push(d);
                }
                for a in 0..3 {
                    for b in 0..3 {
                        cov[a][b] /= n_t;
                    }
                    cov[a][a] += reg;
                }
                // (I_a − μ)ᵀ C⁻¹ (I_b − μ) = y_a · y_b with y = L⁻¹ (I − μ), C = L Lᵀ.
                // The Gram form keeps each window block positive semidefinite in
                // floating point, which an explicit inverse does not at tiny ε.
                let chol = cholesky3(&cov);
                for d in centered.iter_mut() {
                    *d = forward_solve3(&chol, *d);
                }
                for (ia, &(xa, ya)) in idx.iter().enumerate() {
                    let ya_vec = centered[ia];
                    let row = (ya * w + xa) * stencil;
                    for (ib, &(xb, yb)) in idx.iter().enumerate() {
                        let yb_vec = centered[ib];
                        let quad = ya_vec[0] * yb_vec[0] + ya_vec[1] * yb_vec[1] + ya_vec[2] * yb_vec[2];
                        let mut val = -(T::one() + quad) / n_t;
                        if ia == ib {
                            val += T::one();
                        }
                        let slot = (yb + reach - ya) * side + (xb + reach - xa);
                        coeffs[row + slot] += val;
                    }
                }
            }
        }
        Self {
            width: w,
            height: h,
            reach,
            coeffs,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn diagonal(&self) -> Vec<T> {
        let side = 2 * self.reach + 1;
        let stencil = side * side;
        let centre = self.reach * side + self.reach;
        (0..self.len()).map(|i| self.coeffs[i * stencil + centre]).collect()
    }

    /// Entry `L[i, j]` for flat pixel indices; zero outside the stencil.
    pub fn entry(&self, i: usize, j: usize) -> T {
        let (xi, yi) = (i % self.width, i / self.width);
        let (xj, yj) = (j % self.width, j / self.width);
        let (dx, dy) = (xj as isize - xi as isize, yj as isize - yi as isize);
        let r = self.reach as isize;
        if dx.abs() > r || dy.abs() > r {
            return T::zero();
        }
        let side = 2 * self.reach + 1;
        let slot = (dy + r) as usize * side + (dx + r) as usize;
        self.coeffs[i * side * side + slot]
    }

    /// `xᵀ L x`.
    pub fn quadratic_form(&self, x: &[T]) -> T {
        let mut y = vec![T::zero(); x.len()];
        self.apply(x, &mut y);
        x.iter().zip(&y).map(|(&a, &b)| a * b).sum()
    }
}

impl<T: Scalar> LinearOperator<T> for MattingLaplacian<T> {
    fn dim(&self) -> usize {
        self.len()
    }

    fn apply(&self, x: &[T], y: &mut [T]) {
        let (w, h, reach) = (self.width, self.height, self.reach);
        let side = 2 * reach + 1;
        let stencil = side * side;
        for yi in 0..h {
            let y_lo = yi.saturating_sub(reach);
            let y_hi = (yi + reach).min(h - 1);
            for xi in 0..w {
                let x_lo = xi.saturating_sub(reach);
                let x_hi = (xi + reach).min(w - 1);
                let i = yi * w + xi;
                let row = &self.coeffs[i * stencil..(i + 1) * stencil];
                let mut acc = T::zero();
                for yj in y_lo..=y_hi {
                    let base = (yj + reach - yi) * side;
                    for xj in x_lo..=x_hi {
                        acc += row[base + xj + reach - xi] * x[yj * w + xj];
                    }
                }
                y[i] = acc;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let m = [[4.0, 1.0, 0.5], [1.0, 3.0, 0.25], [0.5, 0.25, 2.0f64]];
        let l = cholesky3(&m);
        for r in 0..3 {
            for c in 0..3 {
                let v: f64 = (0..3).map(|k| l[r][k] * l[c][k]).sum();
                assert!((v - m[r][c]).abs() < 1e-12);
            }
        }
        let y = forward_solve3(&l, [1.0, 2.0, 3.0]);
        let back: Vec<f64> = (0..3).map(|r| (0..3).map(|k| l[r][k] * y[k]).sum()).collect();
        assert!((back[0] - 1.0).abs() < 1e-12 && (back[1] - 2.0).abs() < 1e-12 && (back[2] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn symmetric_with_constant_nullspace() {
        let img = RasterImage::<f64>::from_fn(7, 6, |x, y| {
            let t = (x * 7 + y * 3) as f64;
            [
                (t * 0.37).sin() * 0.5 + 0.5,
                (t * 0.11).cos() * 0.5 + 0.5,
                (x as f64) / 7.0,
            ]
        })
        .unwrap();
        let lap = MattingLaplacian::assemble(&img, 1, 1e-7);
        let n = lap.len();
        for i in 0..n {
            for j in 0..n {
                assert!((lap.entry(i, j) - lap.entry(j, i)).abs() < 1e-9);
            }
        }
        let ones = vec![1.0; n];
        let mut out = vec![0.0; n];
        lap.apply(&ones, &mut out);
        assert!(out.iter().all(|v| v.abs() < 1e-9));
    }
}
