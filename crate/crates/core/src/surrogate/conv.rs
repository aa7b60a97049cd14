//! Convolution kernels over single-sample `[C, H, W]` feature maps, lowered
//! to GEMM through im2col.

/// Output side of a strided, zero-padded convolution (ceil(n/stride) for the
/// kernels used here).
pub(crate) fn out_side(n: usize, kernel: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - kernel) / stride + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    /// Square kernel with "same" padding (`kernel / 2`).
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, stride: usize, in_h: usize, in_w: usize) -> Self {
        let pad = kernel / 2;
        ConvGeom {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad,
            in_h,
            in_w,
            out_h: out_side(in_h, kernel, stride, pad),
            out_w: out_side(in_w, kernel, stride, pad),
        }
    }

    pub fn col_rows(&self) -> usize {
        self.in_ch * self.kernel * self.kernel
    }

    pub fn out_cells(&self) -> usize {
        self.out_h * self.out_w
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        vec![self.out_ch, self.in_ch, self.kernel, self.kernel]
    }
}

/// Unfolds `input` into a `[C·k·k, out_h·out_w]` patch matrix.
pub(crate) fn im2col(input: &[f64], g: &ConvGeom) -> Vec<f64> {
    let n = g.out_cells();
    let mut col = vec![0.0; g.col_rows() * n];
    let k = g.kernel;
    for c in 0..g.in_ch {
        let plane = &input[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..k {
            for kj in 0..k {
                let row = &mut col[((c * k + ki) * k + kj) * n..][..n];
                for oi in 0..g.out_h {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.in_h as isize {
                        continue;
                    }
                    let src = &plane[ii as usize * g.in_w..][..g.in_w];
                    let dst = &mut row[oi * g.out_w..][..g.out_w];
                    for (oj, d) in dst.iter_mut().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && jj < g.in_w as isize {
                            *d = src[jj as usize];
                        }
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input map.
pub(crate) fn col2im(col: &[f64], g: &ConvGeom) -> Vec<f64> {
    let n = g.out_cells();
    let mut out = vec![0.0; g.in_ch * g.in_h * g.in_w];
    let k = g.kernel;
    for c in 0..g.in_ch {
        let plane = &mut out[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..k {
            for kj in 0..k {
                let row = &col[((c * k + ki) * k + kj) * n..][..n];
                for oi in 0..g.out_h {
                    let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                    if ii < 0 || ii >= g.in_h as isize {
                        continue;
                    }
                    let dst = &mut plane[ii as usize * g.in_w..][..g.in_w];
                    let src = &row[oi * g.out_w..][..g.out_w];
                    for (oj, &s) in src.iter().enumerate() {
                        let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                        if jj >= 0 && jj < g.in_w as isize {
                            dst[jj as usize] += s;
                        }
                    }
                }
            }
        }
    }
    out
}

/// `C = A·B + beta·C` with `A: [m,k]`, `B: [k,n]`, row-major.
pub(crate) fn gemm(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: slice lengths cover every element addressed by the strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `C += A·Bᵀ` with `A: [m,k]`, `B: [n,k]`.
pub(crate) fn gemm_a_bt_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= n * k && c.len() >= m * n);
    // SAFETY: as above; B is read through transposed strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), 1, k as isize,
            1.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `C = Aᵀ·B` with `A: [k,m]`, `B: [k,n]`.
pub(crate) fn gemm_at_b(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= k * m && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: as above; A is read through transposed strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), 1, m as isize,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// Convolution without bias; returns the output map and the patch matrix.
pub(crate) fn conv_forward(input: &[f64], weight: &[f64], g: &ConvGeom) -> (Vec<f64>, Vec<f64>) {
    let col = im2col(input, g);
    let mut out = vec![0.0; g.out_ch * g.out_cells()];
    gemm(g.out_ch, g.col_rows(), g.out_cells(), weight, &col, 0.0, &mut out);
    (out, col)
}

/// Accumulates the weight gradient into `dweight` and, when requested,
/// returns the input gradient.
pub(crate) fn conv_backward(
    dout: &[f64],
    col: &[f64],
    weight: &[f64],
    g: &ConvGeom,
    dweight: &mut [f64],
    want_dinput: bool,
) -> Option<Vec<f64>> {
    gemm_a_bt_acc(g.out_ch, g.out_cells(), g.col_rows(), dout, col, dweight);
    if !want_dinput {
        return None;
    }
    let mut dcol = vec![0.0; g.col_rows() * g.out_cells()];
    gemm_at_b(g.col_rows(), g.out_ch, g.out_cells(), weight, dout, &mut dcol);
    Some(col2im(&dcol, g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct seven-loop convolution.
    fn naive_conv(input: &[f64], weight: &[f64], g: &ConvGeom) -> Vec<f64> {
        let mut out = vec![0.0; g.out_ch * g.out_cells()];
        for o in 0..g.out_ch {
            for oi in 0..g.out_h {
                for oj in 0..g.out_w {
                    let mut acc = 0.0;
                    for c in 0..g.in_ch {
                        for ki in 0..g.kernel {
                            for kj in 0..g.kernel {
                                let ii = (oi * g.stride + ki) as isize - g.pad as isize;
                                let jj = (oj * g.stride + kj) as isize - g.pad as isize;
                                if ii < 0 || jj < 0 || ii >= g.in_h as isize || jj >= g.in_w as isize {
                                    continue;
                                }
                                let x = input[(c * g.in_h + ii as usize) * g.in_w + jj as usize];
                                let w = weight[((o * g.in_ch + c) * g.kernel + ki) * g.kernel + kj];
                                acc += x * w;
                            }
                        }
                    }
                    out[(o * g.out_h + oi) * g.out_w + oj] = acc;
                }
            }
        }
        out
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn spatial_trace() {
        assert_eq!(out_side(43, 3, 1, 1), 43);
        assert_eq!(out_side(43, 3, 2, 1), 22);
        assert_eq!(out_side(22, 3, 2, 1), 11);
        assert_eq!(out_side(11, 3, 2, 1), 6);
        assert_eq!(out_side(43, 1, 2, 0), 22);
        assert_eq!(out_side(11, 1, 2, 0), 6);
    }

    #[test]
    fn gemm_conv_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(cin, cout, k, s, h) in &[(1, 3, 3, 1, 7), (2, 4, 3, 2, 9), (3, 2, 1, 2, 11), (2, 2, 3, 2, 6)] {
            let g = ConvGeom::new(cin, cout, k, s, h, h);
            let x = random_vec(&mut rng, cin * h * h);
            let w = random_vec(&mut rng, cout * cin * k * k);
            let (y, _) = conv_forward(&x, &w, &g);
            let expect = naive_conv(&x, &w, &g);
            for (a, b) in y.iter().zip(&expect) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = ConvGeom::new(2, 1, 3, 2, 9, 9);
        let x = random_vec(&mut rng, 2 * 81);
        let c = random_vec(&mut rng, g.col_rows() * g.out_cells());
        let lhs: f64 = im2col(&x, &g).iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(&col2im(&c, &g)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
