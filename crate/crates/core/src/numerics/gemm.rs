//! Register-tiled `C += A·B` for row-major matrices. Every output element is
//! accumulated in increasing `k` order, so results match a naive triple loop
//! bit for bit.

const MR: usize = 4;
const NR: usize = 8;

/// `c[m×n] += a[m×k] · b[k×n]`.
pub(crate) fn gemm_acc(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let mut i = 0;
    while i + MR <= m {
        let mut j = 0;
        while j + NR <= n {
            tile(i, j, k, n, a, b, c);
            j += NR;
        }
        if j < n {
            for r in i..i + MR {
                edge_row(r, j, k, n, a, b, c);
            }
        }
        i += MR;
    }
    for r in i..m {
        edge_row(r, 0, k, n, a, b, c);
    }
}

#[inline(always)]
fn tile(i: usize, j: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    let mut acc = [[0.0f64; NR]; MR];
    for (r, row) in acc.iter_mut().enumerate() {
        row.copy_from_slice(&c[(i + r) * n + j..(i + r) * n + j + NR]);
    }
    let a0 = &a[i * k..(i + 1) * k];
    let a1 = &a[(i + 1) * k..(i + 2) * k];
    let a2 = &a[(i + 2) * k..(i + 3) * k];
    let a3 = &a[(i + 3) * k..(i + 4) * k];
    for p in 0..k {
        let bv: &[f64; NR] = b[p * n + j..p * n + j + NR].try_into().unwrap();
        let av = [a0[p], a1[p], a2[p], a3[p]];
        for r in 0..MR {
            for q in 0..NR {
                acc[r][q] += av[r] * bv[q];
            }
        }
    }
    for (r, row) in acc.iter().enumerate() {
        c[(i + r) * n + j..(i + r) * n + j + NR].copy_from_slice(row);
    }
}

fn edge_row(r: usize, j0: usize, k: usize, n: usize, a: &[f64], b: &[f64], c: &mut [f64]) {
    let ar = &a[r * k..(r + 1) * k];
    let cr = &mut c[r * n + j0..(r + 1) * n];
    for (p, &av) in ar.iter().enumerate() {
        let br = &b[p * n + j0..(p + 1) * n];
        for (cv, bv) in cr.iter_mut().zip(br) {
            *cv += av * bv;
        }
    }
}

/// Row-major transpose of an `rows×cols` matrix.
pub(crate) fn transpose(rows: usize, cols: usize, src: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = src[r * cols + c];
        }
    }
    out
}
