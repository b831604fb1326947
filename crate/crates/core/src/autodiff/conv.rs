//! Convolution kernels shared by `conv2d`, `deconv2d` and their gradients.
//!
//! Both layers relate a "small" map to a "big" map through
//! `big_index = small_index * stride + kernel_offset - pad`, with the kernel
//! stored as `[small_channels, big_channels, k, k]`. A convolution reads big
//! and writes small; a transposed convolution does the reverse. Expressing
//! both through the same three loops makes each the exact adjoint of the
//! other.

#[derive(Debug, Clone, Copy)]
pub(crate) struct Geometry {
    pub batch: usize,
    pub small_c: usize,
    pub big_c: usize,
    pub small_h: usize,
    pub small_w: usize,
    pub big_h: usize,
    pub big_w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

/// Small indices `i` in `[lo, hi)` with `0 <= i*stride + offset - pad < big_len`.
fn valid_range(offset: usize, stride: usize, pad: usize, small_len: usize, big_len: usize) -> (usize, usize) {
    let lo = if offset >= pad {
        0
    } else {
        (pad - offset).div_ceil(stride)
    };
    if big_len + pad < offset + 1 {
        return (0, 0);
    }
    let hi = ((big_len - 1 + pad - offset) / stride + 1).min(small_len);
    (lo.min(hi), hi)
}

impl Geometry {
    fn small_len(&self) -> usize {
        self.small_h * self.small_w
    }

    fn big_len(&self) -> usize {
        self.big_h * self.big_w
    }

    /// Calls `body(small_plane, big_plane, kernel_index, rows, cols, col_offset)`
    /// for every (sample, small channel, big channel, kernel tap).
    #[inline]
    fn for_each_tap(&self, mut body: impl FnMut(usize, usize, usize, (usize, usize), (usize, usize), usize, usize)) {
        let k = self.k;
        for n in 0..self.batch {
            for sc in 0..self.small_c {
                let small_plane = (n * self.small_c + sc) * self.small_len();
                for bc in 0..self.big_c {
                    let big_plane = (n * self.big_c + bc) * self.big_len();
                    for ki in 0..k {
                        let rows = valid_range(ki, self.stride, self.pad, self.small_h, self.big_h);
                        if rows.0 >= rows.1 {
                            continue;
                        }
                        for kj in 0..k {
                            let cols = valid_range(kj, self.stride, self.pad, self.small_w, self.big_w);
                            if cols.0 >= cols.1 {
                                continue;
                            }
                            let kidx = ((sc * self.big_c + bc) * k + ki) * k + kj;
                            body(small_plane, big_plane, kidx, rows, cols, ki, kj);
                        }
                    }
                }
            }
        }
    }

    /// `small += K ⋆ big` (convolution forward, transposed-convolution input gradient).
    pub fn small_from_big(&self, big: &[f64], kernel: &[f64], small: &mut [f64]) {
        let (s, p, sw, bw) = (self.stride, self.pad, self.small_w, self.big_w);
        self.for_each_tap(|sp, bp, kidx, rows, cols, ki, kj| {
            let w = kernel[kidx];
            if w == 0.0 {
                return;
            }
            for i in rows.0..rows.1 {
                let bi = i * s + ki - p;
                let srow = &mut small[sp + i * sw..sp + (i + 1) * sw];
                let brow = &big[bp + bi * bw..bp + (bi + 1) * bw];
                if s == 1 {
                    let off = cols.0 + kj - p;
                    let n = cols.1 - cols.0;
                    for (o, x) in srow[cols.0..cols.1].iter_mut().zip(&brow[off..off + n]) {
                        *o += w * x;
                    }
                } else {
                    for j in cols.0..cols.1 {
                        srow[j] += w * brow[j * s + kj - p];
                    }
                }
            }
        });
    }

    /// `big += Kᵀ ⋆ small` (transposed-convolution forward, convolution input gradient).
    pub fn big_from_small(&self, small: &[f64], kernel: &[f64], big: &mut [f64]) {
        let (s, p, sw, bw) = (self.stride, self.pad, self.small_w, self.big_w);
        self.for_each_tap(|sp, bp, kidx, rows, cols, ki, kj| {
            let w = kernel[kidx];
            if w == 0.0 {
                return;
            }
            for i in rows.0..rows.1 {
                let bi = i * s + ki - p;
                let srow = &small[sp + i * sw..sp + (i + 1) * sw];
                let brow = &mut big[bp + bi * bw..bp + (bi + 1) * bw];
                if s == 1 {
                    let off = cols.0 + kj - p;
                    let n = cols.1 - cols.0;
                    for (o, x) in brow[off..off + n].iter_mut().zip(&srow[cols.0..cols.1]) {
                        *o += w * x;
                    }
                } else {
                    for j in cols.0..cols.1 {
                        brow[j * s + kj - p] += w * srow[j];
                    }
                }
            }
        });
    }

    /// `dK += Σ small · big` over every position a tap touches.
    pub fn kernel_grad(&self, small: &[f64], big: &[f64], dk: &mut [f64]) {
        let (s, p, sw, bw) = (self.stride, self.pad, self.small_w, self.big_w);
        self.for_each_tap(|sp, bp, kidx, rows, cols, ki, kj| {
            let mut acc = 0.0;
            for i in rows.0..rows.1 {
                let bi = i * s + ki - p;
                let srow = &small[sp + i * sw..sp + (i + 1) * sw];
                let brow = &big[bp + bi * bw..bp + (bi + 1) * bw];
                if s == 1 {
                    let off = cols.0 + kj - p;
                    let n = cols.1 - cols.0;
                    acc += srow[cols.0..cols.1]
                        .iter()
                        .zip(&brow[off..off + n])
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                } else {
                    for j in cols.0..cols.1 {
                        acc += srow[j] * brow[j * s + kj - p];
                    }
                }
            }
            dk[kidx] += acc;
        });
    }
}
