// Raw loops over row-major buffers. Shapes are validated by the graph
// before any of these run.

use super::{numel, Tensor};

pub(crate) fn contiguous_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![0; shape.len()];
    let mut acc = 1;
    for i in (0..shape.len()).rev() {
        strides[i] = acc;
        acc *= shape[i];
    }
    strides
}

/// Numpy-style broadcast of two shapes; `None` when incompatible.
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0; rank];
    for i in 0..rank {
        let da = if i + a.len() >= rank { a[i + a.len() - rank] } else { 1 };
        let db = if i + b.len() >= rank { b[i + b.len() - rank] } else { 1 };
        out[i] = match (da, db) {
            (x, y) if x == y => x,
            (1, y) => y,
            (x, 1) => x,
            _ => return None,
        };
    }
    Some(out)
}

/// Strides of `shape` viewed as broadcast to `out` (zero on broadcast axes).
pub(crate) fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let offset = out.len() - shape.len();
    let base = contiguous_strides(shape);
    (0..out.len())
        .map(|i| {
            if i < offset {
                0
            } else {
                let d = shape[i - offset];
                if d == 1 && out[i] != 1 {
                    0
                } else {
                    base[i - offset]
                }
            }
        })
        .collect()
}

/// Walks every index of `out` in row-major order, calling
/// `f(flat_out, offset_a, offset_b)` with offsets computed from strides.
#[inline]
pub(crate) fn for_each_offset2(
    out: &[usize],
    sa: &[usize],
    sb: &[usize],
    mut f: impl FnMut(usize, usize, usize),
) {
    if numel(out) == 0 {
        return;
    }
    let rank = out.len();
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let inner = out[rank - 1];
    let (ia, ib) = (sa[rank - 1], sb[rank - 1]);
    let mut idx = vec![0usize; rank - 1];
    let (mut a0, mut b0, mut o) = (0usize, 0usize, 0usize);
    loop {
        for j in 0..inner {
            f(o, a0 + j * ia, b0 + j * ib);
            o += 1;
        }
        let mut k = rank - 1;
        loop {
            if k == 0 {
                return;
            }
            k -= 1;
            idx[k] += 1;
            a0 += sa[k];
            b0 += sb[k];
            if idx[k] < out[k] {
                break;
            }
            a0 -= sa[k] * out[k];
            b0 -= sb[k] * out[k];
            idx[k] = 0;
        }
    }
}

pub(crate) fn binary_broadcast(
    a: &Tensor,
    b: &Tensor,
    out_shape: &[usize],
    f: impl Fn(f64, f64) -> f64,
) -> Tensor {
    let (a_full, b_full) = (a.shape() == out_shape, b.shape() == out_shape);
    if a_full && b_full {
        let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
        return Tensor::from_parts(out_shape.to_vec(), data);
    }
    if a_full && b.numel() == 1 {
        let y = b.data()[0];
        return Tensor::from_parts(out_shape.to_vec(), a.data().iter().map(|&x| f(x, y)).collect());
    }
    if b_full && a.numel() == 1 {
        let x = a.data()[0];
        return Tensor::from_parts(out_shape.to_vec(), b.data().iter().map(|&y| f(x, y)).collect());
    }
    let sa = broadcast_strides(a.shape(), out_shape);
    let sb = broadcast_strides(b.shape(), out_shape);
    let mut data = Vec::with_capacity(numel(out_shape));
    let (ad, bd) = (a.data(), b.data());
    // offsets arrive in output order, so pushing keeps the layout
    for_each_offset2(out_shape, &sa, &sb, |_, ia, ib| data.push(f(ad[ia], bd[ib])));
    Tensor::from_parts(out_shape.to_vec(), data)
}

/// `f(g, a, b)` over the broadcast of `a` and `b`, where `g` already has
/// the output shape.
pub(crate) fn ternary_broadcast(
    g: &Tensor,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64, f64) -> f64,
) -> Tensor {
    let out_shape = g.shape();
    let gd = g.data();
    let (ad, bd) = (a.data(), b.data());
    let (a_full, b_full) = (a.shape() == out_shape, b.shape() == out_shape);
    if a_full && b_full {
        let data = gd.iter().zip(ad).zip(bd).map(|((&g, &x), &y)| f(g, x, y)).collect();
        return Tensor::from_parts(out_shape.to_vec(), data);
    }
    if a_full && b.numel() == 1 {
        let y = bd[0];
        let data = gd.iter().zip(ad).map(|(&g, &x)| f(g, x, y)).collect();
        return Tensor::from_parts(out_shape.to_vec(), data);
    }
    if b_full && a.numel() == 1 {
        let x = ad[0];
        let data = gd.iter().zip(bd).map(|(&g, &y)| f(g, x, y)).collect();
        return Tensor::from_parts(out_shape.to_vec(), data);
    }
    let sa = broadcast_strides(a.shape(), out_shape);
    let sb = broadcast_strides(b.shape(), out_shape);
    let mut data = Vec::with_capacity(gd.len());
    for_each_offset2(out_shape, &sa, &sb, |o, ia, ib| data.push(f(gd[o], ad[ia], bd[ib])));
    Tensor::from_parts(out_shape.to_vec(), data)
}

/// Sums `grad` (shaped like a broadcast result) back down to `target`.
pub(crate) fn unbroadcast(grad: Tensor, target: &[usize]) -> Tensor {
    if grad.shape() == target {
        return grad;
    }
    let st = broadcast_strides(target, grad.shape());
    let zero = vec![0; grad.rank()];
    let mut out = vec![0.0; numel(target)];
    let g = grad.data();
    for_each_offset2(grad.shape(), &st, &zero, |o, it, _| out[it] += g[o]);
    Tensor::from_parts(target.to_vec(), out)
}

/// `a · b` for `a: m×k`, `b: k×n`. Zero entries of `a` are skipped, which
/// makes sparse bag-of-words inputs cheap.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &y) in row.iter_mut().zip(brow) {
                *o += x * y;
            }
        }
    }
    out
}

/// `aᵀ · g` for `a: m×k`, `g: m×n`, giving `k×n`.
pub(crate) fn matmul_at_b(a: &[f64], g: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let x = a[i * k + p];
            if x == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &y) in orow.iter_mut().zip(grow) {
                *o += x * y;
            }
        }
    }
    out
}

/// `g · bᵀ` for `g: m×n`, `b: k×n`, giving `m×k`.
pub(crate) fn matmul_a_bt(g: &[f64], b: &[f64], m: usize, n: usize, k: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &b[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// Splits a shape around `axis` into `(outer, len, inner)`.
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    (outer, shape[axis], inner)
}

pub(crate) fn reduced_shape(shape: &[usize], axis: usize, keepdim: bool) -> Vec<usize> {
    let mut out = shape.to_vec();
    if keepdim {
        out[axis] = 1;
    } else {
        out.remove(axis);
    }
    out
}

pub(crate) fn reduce_sum(x: &[f64], (outer, len, inner): (usize, usize, usize)) -> Vec<f64> {
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        for j in 0..len {
            let src = &x[(o * len + j) * inner..(o * len + j + 1) * inner];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    out
}

/// Index along the reduced axis of the first maximum for every output slot.
pub(crate) fn argmax_axis(x: &[f64], (outer, len, inner): (usize, usize, usize)) -> Vec<usize> {
    let mut best = vec![0usize; outer * inner];
    for o in 0..outer {
        for i in 0..inner {
            let mut arg = 0;
            let mut val = x[o * len * inner + i];
            for j in 1..len {
                let v = x[(o * len + j) * inner + i];
                // strict comparison keeps the lowest index on ties
                if v > val {
                    val = v;
                    arg = j;
                }
            }
            best[o * inner + i] = arg;
        }
    }
    best
}

pub(crate) fn softmax_axis(x: &[f64], (outer, len, inner): (usize, usize, usize)) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let max = (0..len).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for j in 0..len {
                let e = (x[at(j)] - max).exp();
                out[at(j)] = e;
                sum += e;
            }
            for j in 0..len {
                out[at(j)] /= sum;
            }
        }
    }
    out
}

pub(crate) fn softmax_backward(
    y: &[f64],
    g: &[f64],
    (outer, len, inner): (usize, usize, usize),
) -> Vec<f64> {
    let mut out = vec![0.0; y.len()];
    for o in 0..outer {
        for i in 0..inner {
            let at = |j: usize| (o * len + j) * inner + i;
            let dot: f64 = (0..len).map(|j| g[at(j)] * y[at(j)]).sum();
            for j in 0..len {
                out[at(j)] = y[at(j)] * (g[at(j)] - dot);
            }
        }
    }
    out
}

pub(crate) fn permute(x: &Tensor, axes: &[usize]) -> Tensor {
    let in_strides = contiguous_strides(x.shape());
    let out_shape: Vec<usize> = axes.iter().map(|&a| x.shape()[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let zero = vec![0; out_shape.len()];
    let mut data = Vec::with_capacity(x.numel());
    let xd = x.data();
    for_each_offset2(&out_shape, &src_strides, &zero, |_, s, _| data.push(xd[s]));
    Tensor::from_parts(out_shape, data)
}

pub(crate) fn inverse_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

/// Copies `part` (split as `(outer, len, inner)`) into `dst` at offset
/// `start` along an axis of total length `total`.
pub(crate) fn place_along_axis(
    dst: &mut [f64],
    part: &[f64],
    (outer, len, inner): (usize, usize, usize),
    start: usize,
    total: usize,
) {
    for o in 0..outer {
        let src = &part[o * len * inner..(o + 1) * len * inner];
        let at = (o * total + start) * inner;
        dst[at..at + len * inner].copy_from_slice(src);
    }
}

/// Extracts `len` entries starting at `start` along an axis of length
/// `total`.
pub(crate) fn take_along_axis(
    src: &[f64],
    (outer, total, inner): (usize, usize, usize),
    start: usize,
    len: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let at = (o * total + start) * inner;
        out.extend_from_slice(&src[at..at + len * inner]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn strided(a: &Tensor, b: &Tensor, out: &[usize]) -> Vec<f64> {
        let (sa, sb) = (broadcast_strides(a.shape(), out), broadcast_strides(b.shape(), out));
        let mut v = vec![];
        for_each_offset2(out, &sa, &sb, |_, i, j| v.push(a.data()[i].min(b.data()[j])));
        v
    }

    proptest! {
        #[test]
        fn flat_paths_agree_with_strided_walk(
            rows in 1usize..5,
            cols in 1usize..5,
            x in proptest::collection::vec(-2.0f64..2.0, 16),
            c in -2.0f64..2.0,
        ) {
            let full = Tensor::new(vec![rows, cols], x[..rows * cols].to_vec()).unwrap();
            let out = [rows, cols];
            for scalar in [Tensor::scalar(c), Tensor::new(vec![1, 1], vec![c]).unwrap()] {
                let lhs = binary_broadcast(&full, &scalar, &out, f64::min);
                prop_assert_eq!(lhs.data().to_vec(), strided(&full, &scalar, &out));
                let rhs = binary_broadcast(&scalar, &full, &out, f64::min);
                prop_assert_eq!(rhs.data().to_vec(), strided(&scalar, &full, &out));
                let g = full.map(|v| v * 3.0);
                let t = ternary_broadcast(&g, &scalar, &full, |g, a, b| g * a.min(b));
                let want: Vec<f64> = g.data().iter().zip(strided(&scalar, &full, &out)).map(|(g, m)| g * m).collect();
                prop_assert_eq!(t.data().to_vec(), want);
            }
        }

        #[test]
        fn unbroadcast_sums_back(rows in 1usize..5, cols in 1usize..5, x in proptest::collection::vec(-2.0f64..2.0, 16)) {
            let g = Tensor::new(vec![rows, cols], x[..rows * cols].to_vec()).unwrap();
            let col = unbroadcast(g.clone(), &[rows, 1]);
            for r in 0..rows {
                let want: f64 = g.data()[r * cols..(r + 1) * cols].iter().sum();
                prop_assert!((col.data()[r] - want).abs() < 1e-12);
            }
            prop_assert_eq!(unbroadcast(g.clone(), &[rows, cols]).data().to_vec(), g.data().to_vec());
        }
    }
}
