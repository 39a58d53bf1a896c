//! Raw convolution and resampling kernels over flat row-major buffers.
//!
//! Convolutions are lowered to one GEMM per kernel tap: with a zero-padded
//! input `xp` of width `lp`, tap `j` contributes `W[:, :, j] · xp[:, j + s·t]`
//! to output column `t`. The strided views go straight to `matrixmultiply`,
//! so no im2col buffer is materialized.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    pub length: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn padded_length(&self) -> usize {
        self.length + 2 * self.padding
    }

    pub fn output_length(&self) -> usize {
        (self.padded_length() - self.width) / self.stride + 1
    }
}

fn pad_input(x: &[f64], g: &ConvGeometry) -> Vec<f64> {
    if g.padding == 0 {
        return x.to_vec();
    }
    let lp = g.padded_length();
    let mut xp = vec![0.0; g.in_channels * lp];
    for (row, src) in xp.chunks_exact_mut(lp).zip(x.chunks_exact(g.length)) {
        row[g.padding..g.padding + g.length].copy_from_slice(src);
    }
    xp
}

/// `C (m×n) = alpha·A (m×k) · B (k×n) + beta·C` on strided views.
///
/// Callers guarantee every index reached through the strides lies inside the
/// slices and that `c` does not alias `a` or `b`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], usize, isize, isize),
    b: (&[f64], usize, isize, isize),
    beta: f64,
    c: (&mut [f64], usize, isize, isize),
) {
    let reach = |rows: usize, cols: usize, off: usize, rs: isize, cs: isize| {
        off + (rows.saturating_sub(1)) * rs as usize + (cols.saturating_sub(1)) * cs as usize
    };
    assert!(m > 0 && n > 0 && k > 0);
    assert!(reach(m, k, a.1, a.2, a.3) < a.0.len());
    assert!(reach(k, n, b.1, b.2, b.3) < b.0.len());
    assert!(reach(m, n, c.1, c.2, c.3) < c.0.len());
    // SAFETY: the asserts above bound every strided access inside the
    // borrowed slices; `c` is a unique borrow so it cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr().add(a.1),
            a.2,
            a.3,
            b.0.as_ptr().add(b.1),
            b.2,
            b.3,
            beta,
            c.0.as_mut_ptr().add(c.1),
            c.2,
            c.3,
        );
    }
}

/// Output channel count below which stride-1 convolutions skip GEMM and run
/// as plain AXPY loops (GEMM packing dominates for a handful of rows).
const DIRECT_MAX_OUT_CHANNELS: usize = 4;

fn use_direct(g: &ConvGeometry) -> bool {
    g.stride == 1 && g.out_channels <= DIRECT_MAX_OUT_CHANNELS
}

pub fn conv1d_forward(x: &[f64], w: &[f64], bias: &[f64], g: &ConvGeometry) -> Vec<f64> {
    let (cin, cout, k, s) = (g.in_channels, g.out_channels, g.width, g.stride);
    let lp = g.padded_length();
    let lout = g.output_length();
    let xp = pad_input(x, g);
    let mut out = Vec::with_capacity(cout * lout);
    for &b in bias {
        out.extend(std::iter::repeat_n(b, lout));
    }
    if use_direct(g) {
        for (co, orow) in out.chunks_exact_mut(lout).enumerate() {
            for (ci, xrow) in xp.chunks_exact(lp).enumerate() {
                for j in 0..k {
                    let wv = w[(co * cin + ci) * k + j];
                    for (o, xv) in orow.iter_mut().zip(&xrow[j..j + lout]) {
                        *o += wv * xv;
                    }
                }
            }
        }
        return out;
    }
    for j in 0..k {
        gemm(
            cout,
            cin,
            lout,
            (w, j, (cin * k) as isize, k as isize),
            (&xp, j, lp as isize, s as isize),
            1.0,
            (&mut out, 0, lout as isize, 1),
        );
    }
    out
}

/// Gradients of a convolution: `(d_input, d_weight, d_bias)`.
pub fn conv1d_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &ConvGeometry,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (cin, cout, k, s) = (g.in_channels, g.out_channels, g.width, g.stride);
    let lp = g.padded_length();
    let lout = g.output_length();
    let xp = pad_input(x, g);

    let mut dw = vec![0.0; cout * cin * k];
    let mut dxp = vec![0.0; cin * lp];
    if use_direct(g) {
        for (co, dyrow) in dy.chunks_exact(lout).enumerate() {
            for (ci, (xrow, dxrow)) in xp
                .chunks_exact(lp)
                .zip(dxp.chunks_exact_mut(lp))
                .enumerate()
            {
                for j in 0..k {
                    let widx = (co * cin + ci) * k + j;
                    dw[widx] = dyrow
                        .iter()
                        .zip(&xrow[j..j + lout])
                        .map(|(a, b)| a * b)
                        .sum();
                    let wv = w[widx];
                    for (d, g) in dxrow[j..j + lout].iter_mut().zip(dyrow) {
                        *d += wv * g;
                    }
                }
            }
        }
    }
    for j in (0..k).filter(|_| !use_direct(g)) {
        // dW[:, :, j] = dY · xp_jᵀ
        gemm(
            cout,
            lout,
            cin,
            (dy, 0, lout as isize, 1),
            (&xp, j, s as isize, lp as isize),
            0.0,
            (&mut dw, j, (cin * k) as isize, k as isize),
        );
        // dxp_j += W[:, :, j]ᵀ · dY
        gemm(
            cin,
            cout,
            lout,
            (w, j, k as isize, (cin * k) as isize),
            (dy, 0, lout as isize, 1),
            1.0,
            (&mut dxp, j, lp as isize, s as isize),
        );
    }
    let db = dy.chunks_exact(lout).map(|row| row.iter().sum()).collect();

    let dx = if g.padding == 0 {
        dxp
    } else {
        dxp.chunks_exact(lp)
            .flat_map(|row| row[g.padding..g.padding + g.length].iter().copied())
            .collect()
    };
    (dx, dw, db)
}

/// Geometry of a nearest-neighbour upsample by `factor` followed by a
/// stride-1 "same" convolution (odd `width`, padding `width / 2`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UpConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub width: usize,
    /// Input length before upsampling.
    pub length: usize,
    pub factor: usize,
}

/// One polyphase term: output phase `phase` reads the original input at
/// offset `offset`, through the sum of kernel taps `taps`.
#[derive(Clone, Debug)]
struct PhaseTerm {
    phase: usize,
    offset: isize,
    taps: Vec<usize>,
}

impl UpConvGeometry {
    pub fn output_length(&self) -> usize {
        self.length * self.factor
    }

    /// Output sample `f·i + r` sees upsampled position `f·i + r + j - p`,
    /// i.e. original sample `i + floor((r + j - p) / f)`.
    fn terms(&self) -> Vec<PhaseTerm> {
        let f = self.factor as isize;
        let p = (self.width / 2) as isize;
        let mut terms: Vec<PhaseTerm> = Vec::new();
        for r in 0..self.factor {
            for j in 0..self.width {
                let offset = (r as isize + j as isize - p).div_euclid(f);
                match terms
                    .iter_mut()
                    .find(|t| t.phase == r && t.offset == offset)
                {
                    Some(t) => t.taps.push(j),
                    None => terms.push(PhaseTerm {
                        phase: r,
                        offset,
                        taps: vec![j],
                    }),
                }
            }
        }
        terms
    }

    fn margins(terms: &[PhaseTerm]) -> (usize, usize) {
        let lo = terms.iter().map(|t| t.offset).min().unwrap_or(0).min(0);
        let hi = terms.iter().map(|t| t.offset).max().unwrap_or(0).max(0);
        ((-lo) as usize, hi as usize)
    }
}

fn pad_sides(x: &[f64], channels: usize, length: usize, left: usize, right: usize) -> Vec<f64> {
    let width = length + left + right;
    let mut xp = vec![0.0; channels * width];
    for (row, src) in xp.chunks_exact_mut(width).zip(x.chunks_exact(length)) {
        row[left..left + length].copy_from_slice(src);
    }
    xp
}

/// Sums the kernel taps of a phase term into a contiguous `out × in` matrix.
fn merged_kernel(w: &[f64], g: &UpConvGeometry, taps: &[usize]) -> Vec<f64> {
    let k = g.width;
    let mut m = vec![0.0; g.out_channels * g.in_channels];
    for (idx, v) in m.iter_mut().enumerate() {
        *v = taps.iter().map(|&j| w[idx * k + j]).sum();
    }
    m
}

/// `conv(upsample(x))` evaluated as polyphase convolutions on `x`.
pub fn upconv_forward(x: &[f64], w: &[f64], bias: &[f64], g: &UpConvGeometry) -> Vec<f64> {
    let (cin, cout, l, f) = (g.in_channels, g.out_channels, g.length, g.factor);
    let lout = g.output_length();
    let terms = g.terms();
    let (left, right) = UpConvGeometry::margins(&terms);
    let width = l + left + right;
    let xp = pad_sides(x, cin, l, left, right);
    let mut out = Vec::with_capacity(cout * lout);
    for &b in bias {
        out.extend(std::iter::repeat_n(b, lout));
    }
    for term in &terms {
        let wm = merged_kernel(w, g, &term.taps);
        gemm(
            cout,
            cin,
            l,
            (&wm, 0, cin as isize, 1),
            (
                &xp,
                (left as isize + term.offset) as usize,
                width as isize,
                1,
            ),
            1.0,
            (&mut out, term.phase, lout as isize, f as isize),
        );
    }
    out
}

/// Gradients of [`upconv_forward`]: `(d_input, d_weight, d_bias)`.
pub fn upconv_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    g: &UpConvGeometry,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (cin, cout, k, l, f) = (g.in_channels, g.out_channels, g.width, g.length, g.factor);
    let lout = g.output_length();
    let terms = g.terms();
    let (left, right) = UpConvGeometry::margins(&terms);
    let width = l + left + right;
    let xp = pad_sides(x, cin, l, left, right);

    let mut dw = vec![0.0; cout * cin * k];
    let mut dxp = vec![0.0; cin * width];
    let mut dwm = vec![0.0; cout * cin];
    for term in &terms {
        let start = (left as isize + term.offset) as usize;
        // dW_term = dY_phase · x_offsetᵀ, shared by every tap in the term
        gemm(
            cout,
            l,
            cin,
            (dy, term.phase, lout as isize, f as isize),
            (&xp, start, 1, width as isize),
            0.0,
            (&mut dwm, 0, cin as isize, 1),
        );
        for (idx, v) in dwm.iter().enumerate() {
            for &j in &term.taps {
                dw[idx * k + j] += v;
            }
        }
        let wm = merged_kernel(w, g, &term.taps);
        gemm(
            cin,
            cout,
            l,
            (&wm, 0, 1, cin as isize),
            (dy, term.phase, lout as isize, f as isize),
            1.0,
            (&mut dxp, start, width as isize, 1),
        );
    }
    let db = dy.chunks_exact(lout).map(|row| row.iter().sum()).collect();
    let dx = dxp
        .chunks_exact(width)
        .flat_map(|row| row[left..left + l].iter().copied())
        .collect();
    (dx, dw, db)
}

pub fn upsample_forward(x: &[f64], factor: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len() * factor];
    for (group, &v) in out.chunks_exact_mut(factor).zip(x) {
        group.fill(v);
    }
    out
}

pub fn upsample_backward(dy: &[f64], factor: usize) -> Vec<f64> {
    dy.chunks_exact(factor)
        .map(|group| group.iter().sum())
        .collect()
}
