//! Dense kernels behind the graph ops: matrix products and the
//! im2col / col2im lowering used by every convolution.

/// `c = op(a) · op(b) + beta · c` with `op(a)` of shape `[m, k]` and
/// `op(b)` of shape `[k, n]`, all row-major.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    beta: f64,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for x in c.iter_mut() {
            *x *= beta;
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if trans_b { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: slice lengths are checked above and the strides describe
    // exactly the row-major layouts of `a`, `b` and `c`.
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
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geom1d {
    pub channels: usize,
    pub len_in: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub dilation: usize,
    pub len_out: usize,
}

impl Geom1d {
    pub fn conv_out_len(len_in: usize, kernel: usize, stride: usize, pad: usize, dilation: usize) -> Option<usize> {
        let span = dilation * (kernel - 1) + 1;
        let padded = len_in + 2 * pad;
        if padded < span {
            return None;
        }
        Some((padded - span) / stride + 1)
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kernel
    }
}

pub(crate) fn im2col_1d(x: &[f64], g: &Geom1d) -> Vec<f64> {
    let mut cols = vec![0.0; g.rows() * g.len_out];
    for c in 0..g.channels {
        let xc = &x[c * g.len_in..(c + 1) * g.len_in];
        for k in 0..g.kernel {
            let row = &mut cols[(c * g.kernel + k) * g.len_out..(c * g.kernel + k + 1) * g.len_out];
            let off = (k * g.dilation) as isize - g.pad as isize;
            for (t, r) in row.iter_mut().enumerate() {
                let src = (t * g.stride) as isize + off;
                if src >= 0 && (src as usize) < g.len_in {
                    *r = xc[src as usize];
                }
            }
        }
    }
    cols
}

pub(crate) fn col2im_1d(cols: &[f64], g: &Geom1d, x: &mut [f64]) {
    for c in 0..g.channels {
        for k in 0..g.kernel {
            let row = &cols[(c * g.kernel + k) * g.len_out..(c * g.kernel + k + 1) * g.len_out];
            let off = (k * g.dilation) as isize - g.pad as isize;
            for (t, r) in row.iter().enumerate() {
                let src = (t * g.stride) as isize + off;
                if src >= 0 && (src as usize) < g.len_in {
                    x[c * g.len_in + src as usize] += r;
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct Geom2d {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Geom2d {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn out_len(&self) -> usize {
        self.oh * self.ow
    }
}

pub(crate) fn im2col_2d(x: &[f64], g: &Geom2d) -> Vec<f64> {
    let n = g.out_len();
    let mut cols = vec![0.0; g.rows() * n];
    for c in 0..g.channels {
        let xc = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let r = (c * g.kernel + ky) * g.kernel + kx;
                let row = &mut cols[r * n..(r + 1) * n];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    let xrow = &xc[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            row[oy * g.ow + ox] = xrow[ix as usize];
                        }
                    }
                }
            }
        }
    }
    cols
}

pub(crate) fn col2im_2d(cols: &[f64], g: &Geom2d, x: &mut [f64]) {
    let n = g.out_len();
    for c in 0..g.channels {
        for ky in 0..g.kernel {
            for kx in 0..g.kernel {
                let r = (c * g.kernel + ky) * g.kernel + kx;
                let row = &cols[r * n..(r + 1) * n];
                for oy in 0..g.oh {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    let base = c * g.h * g.w + iy as usize * g.w;
                    for ox in 0..g.ow {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            x[base + ix as usize] += row[oy * g.ow + ox];
                        }
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_matches_naive_for_all_transpositions() {
        let (m, k, n) = (3, 4, 5);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let at: Vec<f64> = (0..m * k).map(|idx| a[(idx % m) * k + idx / m]).collect();
        let bt: Vec<f64> = (0..k * n).map(|idx| b[(idx % k) * n + idx / k]).collect();
        let mut want = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                want[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        for (aa, ta) in [(&a, false), (&at, true)] {
            for (bb, tb) in [(&b, false), (&bt, true)] {
                let mut c = vec![0.0; m * n];
                gemm(m, k, n, aa, ta, bb, tb, &mut c, 0.0);
                for (x, y) in c.iter().zip(&want) {
                    assert!((x - y).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        let g = Geom2d {
            channels: 2,
            h: 5,
            w: 6,
            kernel: 3,
            stride: 2,
            pad: 1,
            oh: 3,
            ow: 3,
        };
        let x: Vec<f64> = (0..60).map(|i| (i as f64 * 0.7).sin()).collect();
        let y: Vec<f64> = (0..g.rows() * g.out_len()).map(|i| (i as f64 * 0.3).cos()).collect();
        let lhs: f64 = im2col_2d(&x, &g).iter().zip(&y).map(|(a, b)| a * b).sum();
        let mut back = vec![0.0; 60];
        col2im_2d(&y, &g, &mut back);
        let rhs: f64 = x.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
