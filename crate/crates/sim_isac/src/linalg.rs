//! Small complex linear-algebra helpers shared by the model modules.

use nalgebra::{DMatrix, DVector};
use std::f64::consts::TAU;
use std::fmt::Write as _;

pub type C64 = nalgebra::Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// `e^{jθ}`.
#[inline]
pub fn cis(theta: f64) -> C64 {
    let (s, c) = theta.sin_cos();
    C64::new(c, s)
}

/// Wraps an angle into `[0, 2π)`.
#[inline]
pub fn wrap_phase(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Wraps an angle into `(-π, π]`.
#[inline]
pub fn wrap_signed(theta: f64) -> f64 {
    let w = wrap_phase(theta);
    if w > std::f64::consts::PI {
        w - TAU
    } else {
        w
    }
}

/// `aᴴb`.
#[inline]
pub fn dot_h(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

#[inline]
pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Real inner product `Re{aᴴb}`.
#[inline]
pub fn re_inner(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Orthonormal basis (as columns) of the orthogonal complement of the column
/// span of `h`, i.e. vectors `n` with `hᴴn = 0`.
pub fn null_space_of_columns(h: &CMat) -> CMat {
    let m = h.nrows();
    if h.ncols() == 0 {
        return CMat::identity(m, m);
    }
    // Full unitary factor from the Hermitian Gram matrix hhᴴ (m×m).
    let gram = h * h.adjoint();
    let eig = nalgebra::SymmetricEigen::new(gram);
    let scale = eig.eigenvalues.iter().cloned().fold(0.0_f64, f64::max).max(1e-300);
    let mut cols = Vec::new();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let rank = order.iter().filter(|&&i| eig.eigenvalues[i] > 1e-10 * scale).count();
    for &i in order.iter().take(m - rank) {
        cols.push(eig.eigenvectors.column(i).into_owned());
    }
    if cols.is_empty() {
        return CMat::zeros(m, 0);
    }
    CMat::from_columns(&cols)
}

/// Singular values of a complex matrix, descending.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = a.clone().svd(false, false).singular_values.iter().cloned().collect();
    s.sort_by(|x, y| y.total_cmp(x));
    s
}

/// Smallest singular value counting `min(rows, cols)` values.
pub fn min_singular_value(a: &CMat) -> f64 {
    singular_values(a).last().cloned().unwrap_or(0.0)
}

/// Row-major text dump, one `re im` pair per entry, one row per line,
/// preceded by a `rows cols` header line.
pub fn matrix_to_text(a: &CMat) -> String {
    let mut out = format!("{} {}\n", a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols())
            .map(|j| format!("{:e} {:e}", a[(i, j)].re, a[(i, j)].im))
            .collect();
        let _ = writeln!(out, "{}", row.join("  "));
    }
    out
}

/// Inverse of [`matrix_to_text`].
pub fn matrix_from_text(text: &str) -> Option<CMat> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let mut header = lines.next()?.split_whitespace();
    let rows: usize = header.next()?.parse().ok()?;
    let cols: usize = header.next()?.parse().ok()?;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let nums: Vec<f64> = lines
            .next()?
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .ok()?;
        if nums.len() != 2 * cols {
            return None;
        }
        data.extend(nums.chunks(2).map(|p| C64::new(p[0], p[1])));
    }
    Some(CMat::from_row_slice(rows, cols, &data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let a = CMat::from_fn(3, 2, |i, j| C64::new(i as f64 + 0.25, -(j as f64) * 1e-7));
        let back = matrix_from_text(&matrix_to_text(&a)).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn null_space_is_orthogonal() {
        let h = CMat::from_fn(4, 2, |i, j| C64::new((i * 3 + j) as f64 * 0.3 - 1.0, (i + 2 * j) as f64 * 0.1));
        let n = null_space_of_columns(&h);
        assert_eq!(n.ncols(), 2);
        let prod = h.adjoint() * &n;
        assert!(prod.iter().all(|x| x.norm() < 1e-10));
        let gram = n.adjoint() * &n;
        assert!((gram - CMat::identity(2, 2)).iter().all(|x| x.norm() < 1e-10));
    }

    #[test]
    fn wrap_ranges() {
        assert_eq!(wrap_phase(-0.0), 0.0);
        assert!((wrap_phase(-0.5) - (TAU - 0.5)).abs() < 1e-15);
        assert!((wrap_signed(3.5) - (3.5 - TAU)).abs() < 1e-15);
    }
}
