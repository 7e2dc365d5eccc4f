//! Forward ops and their backward closures.
//!
//! All tensors are row-major. Matrices are `[rows, cols]`; vectors are `[n]`.
//! Each op validates shapes up front and checks its output for non-finite
//! values before recording the node.

use crate::error::{Error, Result};

use super::graph::Graph;
use super::{Scalar, TensorId};

fn as_matrix(shape: &[usize], op: &'static str) -> Result<(usize, usize)> {
    match shape {
        [r, c] => Ok((*r, *c)),
        _ => Err(Error::Shape {
            op,
            lhs: shape.to_vec(),
            rhs: vec![],
        }),
    }
}

fn matmul_raw<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    out
}

fn transpose_raw<T: Scalar>(a: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); a.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

impl<T: Scalar> Graph<T> {
    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (m, k) = as_matrix(self.shape(a), "matmul")?;
        let (k2, n) = as_matrix(self.shape(b), "matmul")?;
        if k != k2 {
            return Err(Error::Shape {
                op: "matmul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let av = self.values(a).to_vec();
        let bv = self.values(b).to_vec();
        let out = matmul_raw(&av, &bv, m, k, n);
        self.push_op(
            "matmul",
            vec![m, n],
            out,
            vec![a, b],
            Box::new(move |d| {
                let bt = transpose_raw(&bv, k, n);
                let at = transpose_raw(&av, m, k);
                let da = matmul_raw(d, &bt, m, n, k);
                let db = matmul_raw(&at, d, k, m, n);
                vec![da, db]
            }),
        )
    }

    pub fn transpose(&mut self, a: TensorId) -> Result<TensorId> {
        let (r, c) = as_matrix(self.shape(a), "transpose")?;
        let out = transpose_raw(self.values(a), r, c);
        self.push_op(
            "transpose",
            vec![c, r],
            out,
            vec![a],
            Box::new(move |d| vec![transpose_raw(d, c, r)]),
        )
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op: "add",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let out: Vec<T> = self
            .values(a)
            .iter()
            .zip(self.values(b))
            .map(|(x, y)| *x + *y)
            .collect();
        self.push_op(
            "add",
            self.shape(a).to_vec(),
            out,
            vec![a, b],
            Box::new(|d| vec![d.to_vec(), d.to_vec()]),
        )
    }

    /// Adds a length-`n` vector to every row of an `[m,n]` matrix.
    pub fn add_row(&mut self, a: TensorId, bias: TensorId) -> Result<TensorId> {
        let (m, n) = as_matrix(self.shape(a), "add_row")?;
        if self.shape(bias) != [n] {
            return Err(Error::Shape {
                op: "add_row",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(bias).to_vec(),
            });
        }
        let bv = self.values(bias).to_vec();
        let out: Vec<T> = self
            .values(a)
            .iter()
            .enumerate()
            .map(|(i, x)| *x + bv[i % n])
            .collect();
        self.push_op(
            "add_row",
            vec![m, n],
            out,
            vec![a, bias],
            Box::new(move |d| {
                let mut db = vec![T::zero(); n];
                for (i, g) in d.iter().enumerate() {
                    db[i % n] += *g;
                }
                vec![d.to_vec(), db]
            }),
        )
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape {
                op: "mul",
                lhs: self.shape(a).to_vec(),
                rhs: self.shape(b).to_vec(),
            });
        }
        let av = self.values(a).to_vec();
        let bv = self.values(b).to_vec();
        let out: Vec<T> = av.iter().zip(&bv).map(|(x, y)| *x * *y).collect();
        self.push_op(
            "mul",
            self.shape(a).to_vec(),
            out,
            vec![a, b],
            Box::new(move |d| {
                let da = d.iter().zip(&bv).map(|(g, y)| *g * *y).collect();
                let db = d.iter().zip(&av).map(|(g, x)| *g * *x).collect();
                vec![da, db]
            }),
        )
    }

    /// Multiplies by a compile-time constant (no gradient for the constant).
    pub fn scale(&mut self, a: TensorId, c: T) -> Result<TensorId> {
        let out: Vec<T> = self.values(a).iter().map(|x| *x * c).collect();
        self.push_op(
            "scale",
            self.shape(a).to_vec(),
            out,
            vec![a],
            Box::new(move |d| vec![d.iter().map(|g| *g * c).collect()]),
        )
    }

    pub fn tanh(&mut self, a: TensorId) -> Result<TensorId> {
        let y: Vec<T> = self.values(a).iter().map(|x| x.tanh()).collect();
        let y2 = y.clone();
        self.push_op(
            "tanh",
            self.shape(a).to_vec(),
            y,
            vec![a],
            Box::new(move |d| {
                vec![d
                    .iter()
                    .zip(&y2)
                    .map(|(g, t)| *g * (T::one() - *t * *t))
                    .collect()]
            }),
        )
    }

    pub fn relu(&mut self, a: TensorId) -> Result<TensorId> {
        let av = self.values(a).to_vec();
        let y: Vec<T> = av.iter().map(|x| x.max(T::zero())).collect();
        self.push_op(
            "relu",
            self.shape(a).to_vec(),
            y,
            vec![a],
            Box::new(move |d| {
                vec![d
                    .iter()
                    .zip(&av)
                    .map(|(g, x)| if *x > T::zero() { *g } else { T::zero() })
                    .collect()]
            }),
        )
    }

    /// Normalizes each row of `[m,n]` to mean 0 / variance 1 (biased), then
    /// applies the learned per-column scale and shift.
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: T,
    ) -> Result<TensorId> {
        let (m, n) = as_matrix(self.shape(x), "layer_norm")?;
        if self.shape(gamma) != [n] || self.shape(beta) != [n] {
            return Err(Error::Shape {
                op: "layer_norm",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(gamma).to_vec(),
            });
        }
        let nf = T::from_usize(n).unwrap();
        let xv = self.values(x).to_vec();
        let gv = self.values(gamma).to_vec();
        let bv = self.values(beta).to_vec();
        let mut xhat = vec![T::zero(); m * n];
        let mut inv_std = vec![T::zero(); m];
        for i in 0..m {
            let row = &xv[i * n..(i + 1) * n];
            let mean = row.iter().copied().sum::<T>() / nf;
            let var = row
                .iter()
                .map(|v| (*v - mean) * (*v - mean))
                .sum::<T>()
                / nf;
            let is = (var + eps).sqrt().recip();
            inv_std[i] = is;
            for j in 0..n {
                xhat[i * n + j] = (row[j] - mean) * is;
            }
        }
        let out: Vec<T> = xhat
            .iter()
            .enumerate()
            .map(|(i, h)| *h * gv[i % n] + bv[i % n])
            .collect();
        self.push_op(
            "layer_norm",
            vec![m, n],
            out,
            vec![x, gamma, beta],
            Box::new(move |d| {
                let mut dx = vec![T::zero(); m * n];
                let mut dgamma = vec![T::zero(); n];
                let mut dbeta = vec![T::zero(); n];
                for i in 0..m {
                    let drow = &d[i * n..(i + 1) * n];
                    let hrow = &xhat[i * n..(i + 1) * n];
                    let dxhat: Vec<T> =
                        drow.iter().enumerate().map(|(j, g)| *g * gv[j]).collect();
                    let mean_dxhat = dxhat.iter().copied().sum::<T>() / nf;
                    let mean_dxhat_xhat = dxhat
                        .iter()
                        .zip(hrow)
                        .map(|(a, b)| *a * *b)
                        .sum::<T>()
                        / nf;
                    for j in 0..n {
                        dx[i * n + j] =
                            inv_std[i] * (dxhat[j] - mean_dxhat - hrow[j] * mean_dxhat_xhat);
                        dgamma[j] += drow[j] * hrow[j];
                        dbeta[j] += drow[j];
                    }
                }
                vec![dx, dgamma, dbeta]
            }),
        )
    }

    /// Row-wise softmax over `[m,n]`. `mask`, when given, marks allowed
    /// entries; disallowed entries get probability exactly 0 and receive no
    /// gradient. Every row must keep at least one allowed entry.
    pub fn softmax_rows(&mut self, x: TensorId, mask: Option<&[bool]>) -> Result<TensorId> {
        let (m, n) = as_matrix(self.shape(x), "softmax")?;
        if let Some(mk) = mask {
            if mk.len() != m * n {
                return Err(Error::Shape {
                    op: "softmax",
                    lhs: vec![m, n],
                    rhs: vec![mk.len()],
                });
            }
        }
        let xv = self.values(x);
        let mut y = vec![T::zero(); m * n];
        for i in 0..m {
            let allowed = |j: usize| mask.map_or(true, |mk| mk[i * n + j]);
            let mut max = T::neg_infinity();
            for j in 0..n {
                if allowed(j) && xv[i * n + j] > max {
                    max = xv[i * n + j];
                }
            }
            if max == T::neg_infinity() {
                return Err(Error::Invalid(format!(
                    "softmax row {i} has no allowed entries"
                )));
            }
            let mut denom = T::zero();
            for j in 0..n {
                if allowed(j) {
                    let e = (xv[i * n + j] - max).exp();
                    y[i * n + j] = e;
                    denom += e;
                }
            }
            for j in 0..n {
                y[i * n + j] = y[i * n + j] / denom;
            }
        }
        let y2 = y.clone();
        self.push_op(
            "softmax",
            vec![m, n],
            y,
            vec![x],
            Box::new(move |d| {
                let mut dx = vec![T::zero(); m * n];
                for i in 0..m {
                    let yrow = &y2[i * n..(i + 1) * n];
                    let drow = &d[i * n..(i + 1) * n];
                    let s: T = yrow.iter().zip(drow).map(|(a, b)| *a * *b).sum();
                    for j in 0..n {
                        dx[i * n + j] = yrow[j] * (drow[j] - s);
                    }
                }
                vec![dx]
            }),
        )
    }

    /// Gathers rows of a `[V,d]` table: output `[ids.len(), d]`.
    pub fn embedding_lookup(&mut self, table: TensorId, ids: &[usize]) -> Result<TensorId> {
        let (v, d) = as_matrix(self.shape(table), "embedding_lookup")?;
        if let Some(bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::Invalid(format!(
                "embedding id {bad} out of range for table with {v} rows"
            )));
        }
        let tv = self.values(table);
        let mut out = Vec::with_capacity(ids.len() * d);
        for &i in ids {
            out.extend_from_slice(&tv[i * d..(i + 1) * d]);
        }
        let ids = ids.to_vec();
        self.push_op(
            "embedding_lookup",
            vec![ids.len(), d],
            out,
            vec![table],
            Box::new(move |grad| {
                let mut dt = vec![T::zero(); v * d];
                for (row, &i) in ids.iter().enumerate() {
                    for j in 0..d {
                        dt[i * d + j] += grad[row * d + j];
                    }
                }
                vec![dt]
            }),
        )
    }

    /// Rows `start..end` of an `[m,n]` matrix.
    pub fn slice_rows(&mut self, a: TensorId, start: usize, end: usize) -> Result<TensorId> {
        let (m, n) = as_matrix(self.shape(a), "slice_rows")?;
        if start >= end || end > m {
            return Err(Error::Invalid(format!(
                "slice_rows {start}..{end} out of range for {m} rows"
            )));
        }
        let out = self.values(a)[start * n..end * n].to_vec();
        self.push_op(
            "slice_rows",
            vec![end - start, n],
            out,
            vec![a],
            Box::new(move |d| {
                let mut da = vec![T::zero(); m * n];
                da[start * n..end * n].copy_from_slice(d);
                vec![da]
            }),
        )
    }

    /// Columns `start..end` of an `[m,n]` matrix.
    pub fn slice_cols(&mut self, a: TensorId, start: usize, end: usize) -> Result<TensorId> {
        let (m, n) = as_matrix(self.shape(a), "slice_cols")?;
        if start >= end || end > n {
            return Err(Error::Invalid(format!(
                "slice_cols {start}..{end} out of range for {n} cols"
            )));
        }
        let w = end - start;
        let av = self.values(a);
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&av[i * n + start..i * n + end]);
        }
        self.push_op(
            "slice_cols",
            vec![m, w],
            out,
            vec![a],
            Box::new(move |d| {
                let mut da = vec![T::zero(); m * n];
                for i in 0..m {
                    da[i * n + start..i * n + end].copy_from_slice(&d[i * w..(i + 1) * w]);
                }
                vec![da]
            }),
        )
    }

    /// Horizontal concatenation of same-row-count matrices.
    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::Invalid("concat_cols of zero tensors".into()));
        }
        let (m, _) = as_matrix(self.shape(parts[0]), "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = as_matrix(self.shape(p), "concat_cols")?;
            if r != m {
                return Err(Error::Shape {
                    op: "concat_cols",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.values(p)[i * w..(i + 1) * w]);
            }
        }
        let widths2 = widths.clone();
        self.push_op(
            "concat_cols",
            vec![m, total],
            out,
            parts.to_vec(),
            Box::new(move |d| {
                let mut grads: Vec<Vec<T>> =
                    widths2.iter().map(|w| Vec::with_capacity(m * w)).collect();
                for i in 0..m {
                    let mut offset = 0;
                    for (gi, &w) in widths2.iter().enumerate() {
                        grads[gi].extend_from_slice(&d[i * total + offset..i * total + offset + w]);
                        offset += w;
                    }
                }
                grads
            }),
        )
    }

    /// Vertical concatenation of same-column-count matrices.
    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId> {
        if parts.is_empty() {
            return Err(Error::Invalid("concat_rows of zero tensors".into()));
        }
        let (_, n) = as_matrix(self.shape(parts[0]), "concat_rows")?;
        let mut heights = Vec::with_capacity(parts.len());
        let mut out = Vec::new();
        for &p in parts {
            let (r, c) = as_matrix(self.shape(p), "concat_rows")?;
            if c != n {
                return Err(Error::Shape {
                    op: "concat_rows",
                    lhs: self.shape(parts[0]).to_vec(),
                    rhs: self.shape(p).to_vec(),
                });
            }
            heights.push(r);
            out.extend_from_slice(self.values(p));
        }
        let total: usize = heights.iter().sum();
        let heights2 = heights.clone();
        self.push_op(
            "concat_rows",
            vec![total, n],
            out,
            parts.to_vec(),
            Box::new(move |d| {
                let mut grads = Vec::with_capacity(heights2.len());
                let mut offset = 0;
                for &h in &heights2 {
                    grads.push(d[offset * n..(offset + h) * n].to_vec());
                    offset += h;
                }
                grads
            }),
        )
    }

    /// Sum of all entries, as a `[1]` scalar.
    pub fn sum(&mut self, a: TensorId) -> Result<TensorId> {
        let total: T = self.values(a).iter().copied().sum();
        let len = self.values(a).len();
        self.push_op(
            "sum",
            vec![1],
            vec![total],
            vec![a],
            Box::new(move |d| vec![vec![d[0]; len]]),
        )
    }

    /// Mean of all entries, as a `[1]` scalar.
    pub fn mean(&mut self, a: TensorId) -> Result<TensorId> {
        let len = self.values(a).len();
        let lenf = T::from_usize(len).unwrap();
        let total: T = self.values(a).iter().copied().sum::<T>() / lenf;
        self.push_op(
            "mean",
            vec![1],
            vec![total],
            vec![a],
            Box::new(move |d| vec![vec![d[0] / lenf; len]]),
        )
    }

    /// Mean token-level cross-entropy of `[m,V]` logits against per-row
    /// target ids, restricted to rows where `include` is true. Softmax and
    /// log are fused for stability.
    pub fn cross_entropy_rows(
        &mut self,
        logits: TensorId,
        targets: &[usize],
        include: &[bool],
    ) -> Result<TensorId> {
        let (m, v) = as_matrix(self.shape(logits), "cross_entropy")?;
        if targets.len() != m || include.len() != m {
            return Err(Error::Shape {
                op: "cross_entropy",
                lhs: vec![m, v],
                rhs: vec![targets.len(), include.len()],
            });
        }
        if let Some(bad) = targets
            .iter()
            .zip(include)
            .find(|(&t, &inc)| inc && t >= v)
        {
            return Err(Error::Invalid(format!(
                "cross_entropy target {} out of range for {v} classes",
                bad.0
            )));
        }
        let count = include.iter().filter(|&&b| b).count();
        if count == 0 {
            return Err(Error::Invalid("cross_entropy with no included rows".into()));
        }
        let countf = T::from_usize(count).unwrap();
        let xv = self.values(logits);
        let mut probs = vec![T::zero(); m * v];
        let mut loss = T::zero();
        for i in 0..m {
            if !include[i] {
                continue;
            }
            let row = &xv[i * v..(i + 1) * v];
            let max = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut denom = T::zero();
            for j in 0..v {
                let e = (row[j] - max).exp();
                probs[i * v + j] = e;
                denom += e;
            }
            for j in 0..v {
                probs[i * v + j] = probs[i * v + j] / denom;
            }
            // -log softmax[target], computed from the shifted logits
            loss = loss + (denom.ln() - (row[targets[i]] - max));
        }
        loss = loss / countf;
        let targets = targets.to_vec();
        let include = include.to_vec();
        self.push_op(
            "cross_entropy",
            vec![1],
            vec![loss],
            vec![logits],
            Box::new(move |d| {
                let mut dx = vec![T::zero(); m * v];
                for i in 0..m {
                    if !include[i] {
                        continue;
                    }
                    for j in 0..v {
                        let indicator = if j == targets[i] { T::one() } else { T::zero() };
                        dx[i * v + j] = d[0] * (probs[i * v + j] - indicator) / countf;
                    }
                }
                vec![dx]
            }),
        )
    }

    /// Binary cross-entropy over a `[1,2]` (or `[2]`) logit pair.
    pub fn cross_entropy_binary(&mut self, logits: TensorId, label: usize) -> Result<TensorId> {
        let shape = self.shape(logits).to_vec();
        let logits2 = match shape.as_slice() {
            [1, 2] => logits,
            [2] => {
                // reshape via slice-free re-push: treat as [1,2]
                let vals = self.values(logits).to_vec();
                let reshaped = self.push_op(
                    "reshape",
                    vec![1, 2],
                    vals,
                    vec![logits],
                    Box::new(|d| vec![d.to_vec()]),
                )?;
                reshaped
            }
            _ => {
                return Err(Error::Shape {
                    op: "cross_entropy_binary",
                    lhs: shape,
                    rhs: vec![2],
                })
            }
        };
        if label > 1 {
            return Err(Error::Invalid(format!("binary label {label} out of range")));
        }
        self.cross_entropy_rows(logits2, &[label], &[true])
    }
}
