//! Dense row-major helpers shared by the forward and backward passes.

/// `out = W x (+ b)` for a row-major `W` with `out.len()` rows.
#[inline]
pub(crate) fn affine_into(w: &[f64], b: Option<&[f64]>, x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    debug_assert_eq!(w.len(), out.len() * cols);
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        let mut acc = b.map_or(0.0, |b| b[r]);
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        *o = acc;
    }
}

pub(crate) fn affine(w: &[f64], b: Option<&[f64]>, x: &[f64], rows: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows];
    affine_into(w, b, x, &mut out);
    out
}

/// `dx += W^T dy`.
#[inline]
pub(crate) fn matvec_t_acc(w: &[f64], dy: &[f64], dx: &mut [f64]) {
    let cols = dx.len();
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (d, wv) in dx.iter_mut().zip(row) {
            *d += g * wv;
        }
    }
}

/// `dW += dy x^T`.
#[inline]
pub(crate) fn outer_acc(dw: &mut [f64], dy: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &g) in dy.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        let row = &mut dw[r * cols..(r + 1) * cols];
        for (d, xv) in row.iter_mut().zip(x) {
            *d += g * xv;
        }
    }
}

#[inline]
pub(crate) fn add_acc(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Numerically stable `ln(1 + e^z)`.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 30.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for positive `y`.
#[inline]
pub fn softplus_inv(y: f64) -> f64 {
    y.exp_m1().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_matches_hand_computation() {
        let w = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let out = affine(&w, Some(&[1.0, -1.0]), &[1.0, 0.0, 2.0], 2);
        assert_eq!(out, vec![8.0, 15.0]);
    }

    #[test]
    fn softplus_round_trip() {
        for y in [1e-6, 0.01, 0.5, 3.0, 40.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() <= 1e-12 * y.max(1.0));
        }
        assert_eq!(softplus(0.0), std::f64::consts::LN_2);
    }
}
