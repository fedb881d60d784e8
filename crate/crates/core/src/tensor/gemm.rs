//! Register-blocked `C += A · B` on strided row-major slices.
//!
//! Both operands are packed into zero-padded panels so every tile runs
//! through the same fixed-size kernel; only valid entries are written back.

use std::cell::RefCell;

const MR: usize = 4;
const NR: usize = 16;

/// Row-major matrix view: element `(r, c)` sits at `data[r * stride + c]`.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    pub data: &'a [f64],
    pub stride: usize,
}

/// `C[m × n] += A[m × k] · B[k × n]`, with `C` row stride `ldc`.
pub(crate) fn gemm_acc(m: usize, n: usize, k: usize, a: View, b: View, c: &mut [f64], ldc: usize) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let m_panels = m.div_ceil(MR);
    let n_panels = n.div_ceil(NR);
    SCRATCH.with(|cell| {
        let mut scratch = cell.borrow_mut();
        let (ap, bp) = &mut *scratch;
        ap.resize(m_panels * k * MR, 0.0);
        bp.resize(k * NR, 0.0);

        // A panels: for each block of MR rows, k columns of MR interleaved values.
        for ip in 0..m_panels {
            let panel = &mut ap[ip * k * MR..(ip + 1) * k * MR];
            let rows = MR.min(m - ip * MR);
            for r in 0..rows {
                let row = &a.data[(ip * MR + r) * a.stride..];
                for p in 0..k {
                    panel[p * MR + r] = row[p];
                }
            }
            if rows < MR {
                for p in 0..k {
                    panel[p * MR + rows..(p + 1) * MR].fill(0.0);
                }
            }
        }
        for jp in 0..n_panels {
            let j0 = jp * NR;
            let w = NR.min(n - j0);
            for p in 0..k {
                let src = &b.data[p * b.stride + j0..p * b.stride + j0 + w];
                bp[p * NR..p * NR + w].copy_from_slice(src);
                bp[p * NR + w..(p + 1) * NR].fill(0.0);
            }
            for ip in 0..m_panels {
                let i0 = ip * MR;
                let acc = kernel(&ap[ip * k * MR..(ip + 1) * k * MR], bp, k);
                for (r, accr) in acc.iter().enumerate().take(MR.min(m - i0)) {
                    let crow = &mut c[(i0 + r) * ldc + j0..(i0 + r) * ldc + j0 + w];
                    for (cv, x) in crow.iter_mut().zip(accr) {
                        *cv += x;
                    }
                }
            }
        }
    });
}

thread_local! {
    static SCRATCH: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

#[inline(always)]
fn kernel(ap: &[f64], bp: &[f64], k: usize) -> [[f64; NR]; MR] {
    let mut acc = [[0.0f64; NR]; MR];
    for (a, b) in ap.chunks_exact(MR).zip(bp.chunks_exact(NR)).take(k) {
        let a: &[f64; MR] = a.try_into().expect("MR values");
        let b: &[f64; NR] = b.try_into().expect("NR values");
        for r in 0..MR {
            for j in 0..NR {
                acc[r][j] += a[r] * b[j];
            }
        }
    }
    acc
}

/// Transpose of a row-major `[rows × cols]` matrix.
pub(crate) fn transpose(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}
