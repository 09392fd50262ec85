//! Differentiable operator set.
//!
//! Forward values are computed eagerly; each op records a closure that maps
//! the output gradient to one contribution per parent. Constants (masks,
//! lookup indices) are captured by the closure instead of becoming parents.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::graph::Var;
use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-8;

fn shape_err(op: &str, lhs: &[usize], rhs: &[usize]) -> Error {
    Error::Shape {
        op: op.into(),
        lhs: lhs.to_vec(),
        rhs: rhs.to_vec(),
    }
}

fn check_same_graph(a: &Var, b: &Var) -> Result<()> {
    if !a.graph().same_graph(b.graph()) {
        return Err(Error::invalid_argument(
            "operands belong to different graphs",
        ));
    }
    Ok(())
}

/// Splits a shape at `axis` into (outer, axis length, inner) block sizes.
fn blocks(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Var {
    fn unary(
        &self,
        out: Tensor,
        backward: impl Fn(&Tensor) -> Tensor + 'static,
    ) -> Var {
        let req = self.requires_grad();
        self.graph().push(
            out,
            vec![self.idx()],
            Some(Box::new(move |g| vec![backward(g)])),
            req,
        )
    }

    fn binary(
        &self,
        rhs: &Var,
        out: Tensor,
        backward: impl Fn(&Tensor) -> (Tensor, Tensor) + 'static,
    ) -> Var {
        let req = self.requires_grad() || rhs.requires_grad();
        self.graph().push(
            out,
            vec![self.idx(), rhs.idx()],
            Some(Box::new(move |g| {
                let (da, db) = backward(g);
                vec![da, db]
            })),
            req,
        )
    }

    /// 2-D matrix product.
    pub fn matmul(&self, rhs: &Var) -> Result<Var> {
        check_same_graph(self, rhs)?;
        let a = self.value();
        let b = rhs.value();
        let out = a.matmul(&b)?;
        Ok(self.binary(rhs, out, move |g| {
            let da = g.matmul(&b.transposed().expect("2d")).expect("shape");
            let db = a.transposed().expect("2d").matmul(g).expect("shape");
            (da, db)
        }))
    }

    /// Batched matrix product over leading axis: [b,m,k] x [b,k,n].
    pub fn batched_matmul(&self, rhs: &Var) -> Result<Var> {
        check_same_graph(self, rhs)?;
        let a = self.value();
        let b = rhs.value();
        let out = a.batched_matmul(&b)?;
        Ok(self.binary(rhs, out, move |g| {
            let da = g
                .batched_matmul(&b.transposed_last2().expect("3d"))
                .expect("shape");
            let db = a
                .transposed_last2()
                .expect("3d")
                .batched_matmul(g)
                .expect("shape");
            (da, db)
        }))
    }

    /// Elementwise sum. The right operand may be a vector matching the last
    /// axis (bias broadcast over all leading rows).
    pub fn add(&self, rhs: &Var) -> Result<Var> {
        check_same_graph(self, rhs)?;
        let a = self.value();
        let b = rhs.value();
        if a.shape() == b.shape() {
            let out = a.zip_map(&b, |x, y| x + y)?;
            return Ok(self.binary(rhs, out, |g| (g.clone(), g.clone())));
        }
        // bias broadcast: [..., n] + [n]
        let n = *b.shape().first().ok_or_else(|| {
            shape_err("add", a.shape(), b.shape())
        })?;
        if b.ndim() != 1 || a.ndim() < 2 || *a.shape().last().unwrap() != n {
            return Err(shape_err("add", a.shape(), b.shape()));
        }
        let mut data = a.data().to_vec();
        for row in data.chunks_mut(n) {
            for (x, y) in row.iter_mut().zip(b.data()) {
                *x += y;
            }
        }
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.binary(rhs, out, move |g| {
            let mut db = vec![0.0; n];
            for row in g.data().chunks(n) {
                for (s, v) in db.iter_mut().zip(row) {
                    *s += v;
                }
            }
            (g.clone(), Tensor::new(vec![n], db).expect("shape"))
        }))
    }

    /// Adds a captured constant tensor of the same shape (no gradient flows
    /// into the constant). Used for attention masks.
    pub fn add_const(&self, constant: &Tensor) -> Result<Var> {
        let a = self.value();
        let out = a.zip_map(constant, |x, y| x + y)?;
        Ok(self.unary(out, |g| g.clone()))
    }

    pub fn add_scalar(&self, c: f64) -> Var {
        let out = self.value().map(|x| x + c);
        self.unary(out, |g| g.clone())
    }

    pub fn sub(&self, rhs: &Var) -> Result<Var> {
        check_same_graph(self, rhs)?;
        let out = self.value().zip_map(&rhs.value(), |x, y| x - y)?;
        Ok(self.binary(rhs, out, |g| (g.clone(), g.scale(-1.0))))
    }

    /// Elementwise product. One operand may have a trailing axis of length 1
    /// (broadcast along the last axis), with identical leading axes.
    pub fn mul(&self, rhs: &Var) -> Result<Var> {
        check_same_graph(self, rhs)?;
        let a = self.value();
        let b = rhs.value();
        if a.shape() == b.shape() {
            let out = a.zip_map(&b, |x, y| x * y)?;
            let (ac, bc) = (a.clone(), b.clone());
            return Ok(self.binary(rhs, out, move |g| {
                (
                    g.zip_map(&bc, |x, y| x * y).expect("shape"),
                    g.zip_map(&ac, |x, y| x * y).expect("shape"),
                )
            }));
        }
        let broadcast_rhs = is_last_axis_broadcast(b.shape(), a.shape());
        let broadcast_lhs = is_last_axis_broadcast(a.shape(), b.shape());
        if !broadcast_rhs && !broadcast_lhs {
            return Err(shape_err("mul", a.shape(), b.shape()));
        }
        let (full, col) = if broadcast_rhs {
            (a.clone(), b.clone())
        } else {
            (b.clone(), a.clone())
        };
        let n = *full.shape().last().unwrap();
        let mut data = full.data().to_vec();
        for (row, &c) in data.chunks_mut(n).zip(col.data()) {
            for x in row.iter_mut() {
                *x *= c;
            }
        }
        let out = Tensor::new(full.shape().to_vec(), data)?;
        let col_shape = col.shape().to_vec();
        let backward = move |g: &Tensor| {
            // grad wrt full side: g * col broadcast; wrt col side: row sums of g*full
            let mut dfull = g.data().to_vec();
            for (row, &c) in dfull.chunks_mut(n).zip(col.data()) {
                for x in row.iter_mut() {
                    *x *= c;
                }
            }
            let dfull = Tensor::new(full.shape().to_vec(), dfull).expect("shape");
            let mut dcol = vec![0.0; col.len()];
            for ((grow, frow), s) in g
                .data()
                .chunks(n)
                .zip(full.data().chunks(n))
                .zip(dcol.iter_mut())
            {
                *s = grow.iter().zip(frow).map(|(x, y)| x * y).sum();
            }
            let dcol = Tensor::new(col_shape.clone(), dcol).expect("shape");
            (dfull, dcol)
        };
        if broadcast_rhs {
            Ok(self.binary(rhs, out, move |g| backward(g)))
        } else {
            Ok(self.binary(rhs, out, move |g| {
                let (dfull, dcol) = backward(g);
                (dcol, dfull)
            }))
        }
    }

    pub fn scale(&self, k: f64) -> Var {
        let out = self.value().scale(k);
        self.unary(out, move |g| g.scale(k))
    }

    pub fn neg(&self) -> Var {
        self.scale(-1.0)
    }

    pub fn sigmoid(&self) -> Var {
        let out = self.value().map(|x| 1.0 / (1.0 + (-x).exp()));
        let y = Rc::new(out.clone());
        self.unary(out, move |g| {
            g.zip_map(&y, |gi, yi| gi * yi * (1.0 - yi)).expect("shape")
        })
    }

    pub fn tanh(&self) -> Var {
        let out = self.value().map(|x| x.tanh());
        let y = Rc::new(out.clone());
        self.unary(out, move |g| {
            g.zip_map(&y, |gi, yi| gi * (1.0 - yi * yi)).expect("shape")
        })
    }

    /// Exponential linear unit with alpha = 1.
    pub fn elu(&self) -> Var {
        let x = self.value();
        let out = x.map(|v| if v > 0.0 { v } else { v.exp() - 1.0 });
        self.unary(out, move |g| {
            g.zip_map(&x, |gi, xi| if xi > 0.0 { gi } else { gi * xi.exp() })
                .expect("shape")
        })
    }

    pub fn relu(&self) -> Var {
        let x = self.value();
        let out = x.map(|v| v.max(0.0));
        self.unary(out, move |g| {
            g.zip_map(&x, |gi, xi| if xi > 0.0 { gi } else { 0.0 })
                .expect("shape")
        })
    }

    /// Softmax along the last axis. Rows with no finite entry are rejected.
    pub fn softmax(&self) -> Result<Var> {
        let x = self.value();
        if x.ndim() == 0 {
            return Err(shape_err("softmax", x.shape(), &[]));
        }
        let n = *x.shape().last().unwrap();
        let mut data = vec![0.0; x.len()];
        for (row_out, row_in) in data.chunks_mut(n).zip(x.data().chunks(n)) {
            let max = row_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(Error::NumericFailure(
                    "softmax row has no finite entries".into(),
                ));
            }
            let mut sum = 0.0;
            for (o, &v) in row_out.iter_mut().zip(row_in) {
                *o = (v - max).exp();
                sum += *o;
            }
            for o in row_out.iter_mut() {
                *o /= sum;
            }
        }
        let out = Tensor::new(x.shape().to_vec(), data)?;
        let y = Rc::new(out.clone());
        Ok(self.unary(out, move |g| {
            let mut dx = vec![0.0; g.len()];
            for ((drow, grow), yrow) in dx
                .chunks_mut(n)
                .zip(g.data().chunks(n))
                .zip(y.data().chunks(n))
            {
                let dot: f64 = grow.iter().zip(yrow).map(|(a, b)| a * b).sum();
                for ((d, &gi), &yi) in drow.iter_mut().zip(grow).zip(yrow) {
                    *d = yi * (gi - dot);
                }
            }
            Tensor::new(y.shape().to_vec(), dx).expect("shape")
        }))
    }

    /// Layer normalization over the last axis with learned scale and shift
    /// vectors of matching length.
    pub fn layer_norm(&self, scale: &Var, shift: &Var) -> Result<Var> {
        check_same_graph(self, scale)?;
        check_same_graph(self, shift)?;
        let x = self.value();
        let gamma = scale.value();
        let beta = shift.value();
        if x.ndim() == 0 {
            return Err(shape_err("layer_norm", x.shape(), gamma.shape()));
        }
        let n = *x.shape().last().unwrap();
        if gamma.shape() != [n] || beta.shape() != [n] {
            return Err(shape_err("layer_norm", x.shape(), gamma.shape()));
        }
        let rows = x.len() / n;
        let mut normalized = vec![0.0; x.len()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; x.len()];
        for r in 0..rows {
            let xin = &x.data()[r * n..(r + 1) * n];
            let mean = xin.iter().sum::<f64>() / n as f64;
            let var = xin.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let inv = 1.0 / (var + LN_EPS).sqrt();
            inv_std[r] = inv;
            for j in 0..n {
                let xh = (xin[j] - mean) * inv;
                normalized[r * n + j] = xh;
                out[r * n + j] = gamma.data()[j] * xh + beta.data()[j];
            }
        }
        let out = Tensor::new(x.shape().to_vec(), out)?;
        let xhat = Rc::new(normalized);
        let inv_std = Rc::new(inv_std);
        let xshape = x.shape().to_vec();
        let req = self.requires_grad() || scale.requires_grad() || shift.requires_grad();
        let gamma_c = gamma.clone();
        let bw = move |g: &Tensor| {
            let mut dx = vec![0.0; g.len()];
            let mut dgamma = vec![0.0; n];
            let mut dbeta = vec![0.0; n];
            for r in 0..rows {
                let grow = &g.data()[r * n..(r + 1) * n];
                let xh = &xhat[r * n..(r + 1) * n];
                let mut mean_gy = 0.0;
                let mut mean_gy_xh = 0.0;
                for j in 0..n {
                    let gy = grow[j] * gamma_c.data()[j];
                    mean_gy += gy;
                    mean_gy_xh += gy * xh[j];
                    dgamma[j] += grow[j] * xh[j];
                    dbeta[j] += grow[j];
                }
                mean_gy /= n as f64;
                mean_gy_xh /= n as f64;
                for j in 0..n {
                    let gy = grow[j] * gamma_c.data()[j];
                    dx[r * n + j] = inv_std[r] * (gy - mean_gy - xh[j] * mean_gy_xh);
                }
            }
            vec![
                Tensor::new(xshape.clone(), dx).expect("shape"),
                Tensor::new(vec![n], dgamma).expect("shape"),
                Tensor::new(vec![n], dbeta).expect("shape"),
            ]
        };
        Ok(self.graph().push(
            out,
            vec![self.idx(), scale.idx(), shift.idx()],
            Some(Box::new(bw)),
            req,
        ))
    }

    /// Inverted dropout: keeps each element with probability `1 - rate` and
    /// rescales by `1/(1 - rate)` so the expected value is unchanged. The
    /// mask is drawn in index order from the supplied RNG. Eval-mode callers
    /// simply skip this op.
    pub fn dropout(&self, rate: f64, rng: &mut ChaCha8Rng) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::invalid_argument(format!(
                "dropout rate must lie in [0, 1), got {rate}"
            )));
        }
        let keep = 1.0 - rate;
        let x = self.value();
        let mask = Tensor::from_fn(x.shape(), |_| {
            if rng.gen::<f64>() < keep {
                1.0 / keep
            } else {
                0.0
            }
        });
        Ok(self.dropout_with_mask(&mask))
    }

    /// Dropout with an explicit pre-scaled mask (test hook).
    pub fn dropout_with_mask(&self, mask: &Tensor) -> Var {
        let x = self.value();
        let out = x.zip_map(mask, |a, m| a * m).expect("mask shape");
        let mask = mask.clone();
        self.unary(out, move |g| {
            g.zip_map(&mask, |a, m| a * m).expect("shape")
        })
    }

    /// Row lookup: gathers `indices` rows of a [v, h] table.
    pub fn embedding_lookup(&self, indices: &[usize]) -> Result<Var> {
        let table = self.value();
        let [v, h] = *table.shape() else {
            return Err(shape_err("embedding_lookup", table.shape(), &[]));
        };
        if let Some(&bad) = indices.iter().find(|&&i| i >= v) {
            return Err(Error::invalid_argument(format!(
                "embedding index {bad} out of range for table with {v} rows"
            )));
        }
        let mut data = Vec::with_capacity(indices.len() * h);
        for &i in indices {
            data.extend_from_slice(&table.data()[i * h..(i + 1) * h]);
        }
        let out = Tensor::new(vec![indices.len(), h], data)?;
        let indices = indices.to_vec();
        Ok(self.unary(out, move |g| {
            let mut dt = Tensor::zeros(&[v, h]);
            for (row, &i) in indices.iter().enumerate() {
                let src = &g.data()[row * h..(row + 1) * h];
                for (d, s) in dt.data_mut()[i * h..(i + 1) * h].iter_mut().zip(src) {
                    *d += s;
                }
            }
            dt
        }))
    }

    pub fn sum_all(&self) -> Result<Var> {
        let x = self.value();
        let shape = x.shape().to_vec();
        let out = Tensor::scalar(x.sum());
        Ok(self.unary(out, move |g| {
            let v = g.item();
            Tensor::from_fn(&shape, |_| v)
        }))
    }

    pub fn mean_all(&self) -> Result<Var> {
        let x = self.value();
        if x.is_empty() {
            return Err(Error::EmptyInput("mean of empty tensor".into()));
        }
        let n = x.len() as f64;
        let shape = x.shape().to_vec();
        let out = Tensor::scalar(x.sum() / n);
        Ok(self.unary(out, move |g| {
            let v = g.item() / n;
            Tensor::from_fn(&shape, |_| v)
        }))
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Var> {
        let x = self.value();
        let out = x.reshaped(shape)?;
        let orig = x.shape().to_vec();
        Ok(self.unary(out, move |g| g.reshaped(&orig).expect("shape")))
    }

    pub fn transpose_last2(&self) -> Result<Var> {
        let out = self.value().transposed_last2()?;
        Ok(self.unary(out, |g| g.transposed_last2().expect("3d")))
    }

    pub fn swap_axes01(&self) -> Result<Var> {
        let out = self.value().swapped_axes01()?;
        Ok(self.unary(out, |g| g.swapped_axes01().expect("3d")))
    }

    /// Repeats the whole tensor `k` times along axis 0.
    pub fn tile_rows(&self, k: usize) -> Result<Var> {
        if k == 0 {
            return Err(Error::invalid_argument("tile count must be >= 1"));
        }
        let x = self.value();
        if x.ndim() == 0 {
            return Err(shape_err("tile_rows", x.shape(), &[]));
        }
        let mut shape = x.shape().to_vec();
        shape[0] *= k;
        let mut data = Vec::with_capacity(x.len() * k);
        for _ in 0..k {
            data.extend_from_slice(x.data());
        }
        let out = Tensor::new(shape, data)?;
        let orig_shape = x.shape().to_vec();
        let chunk = x.len();
        Ok(self.unary(out, move |g| {
            let mut acc = vec![0.0; chunk];
            for part in g.data().chunks(chunk) {
                for (a, b) in acc.iter_mut().zip(part) {
                    *a += b;
                }
            }
            Tensor::new(orig_shape.clone(), acc).expect("shape")
        }))
    }

    /// Takes the half-open range [start, end) along `axis`.
    pub fn slice(&self, axis: usize, start: usize, end: usize) -> Result<Var> {
        let x = self.value();
        if axis >= x.ndim() || start >= end || end > x.shape()[axis] {
            return Err(Error::invalid_argument(format!(
                "slice [{start}, {end}) on axis {axis} invalid for shape {:?}",
                x.shape()
            )));
        }
        let (outer, mid, inner) = blocks(x.shape(), axis);
        let width = end - start;
        let mut shape = x.shape().to_vec();
        shape[axis] = width;
        let mut data = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let from = (o * mid + start) * inner;
            data.extend_from_slice(&x.data()[from..from + width * inner]);
        }
        let out = Tensor::new(shape, data)?;
        let orig_shape = x.shape().to_vec();
        Ok(self.unary(out, move |g| {
            let mut dx = Tensor::zeros(&orig_shape);
            for o in 0..outer {
                let to = (o * mid + start) * inner;
                let from = o * width * inner;
                dx.data_mut()[to..to + width * inner]
                    .copy_from_slice(&g.data()[from..from + width * inner]);
            }
            dx
        }))
    }

    /// Shorthand for slicing one trailing-axis column, keeping its axis.
    pub fn col(&self, index: usize) -> Result<Var> {
        let ndim = self.value().ndim();
        if ndim == 0 {
            return Err(shape_err("col", self.value().shape(), &[]));
        }
        self.slice(ndim - 1, index, index + 1)
    }
}

/// True when `small` equals `full` except for a trailing axis of length 1.
fn is_last_axis_broadcast(small: &[usize], full: &[usize]) -> bool {
    small.len() == full.len()
        && small.last() == Some(&1)
        && small[..small.len() - 1] == full[..full.len() - 1]
}

/// Concatenates along `axis`; all other axes must match.
pub fn concat(vars: &[Var], axis: usize) -> Result<Var> {
    if vars.is_empty() {
        return Err(Error::EmptyInput("concat of zero tensors".into()));
    }
    let graph = vars[0].graph().clone();
    for v in vars {
        check_same_graph(&vars[0], v)?;
    }
    let first = vars[0].value();
    if axis >= first.ndim() {
        return Err(Error::invalid_argument(format!(
            "concat axis {axis} out of range for shape {:?}",
            first.shape()
        )));
    }
    let mut axis_total = 0;
    let mut widths = Vec::with_capacity(vars.len());
    for v in vars {
        let s = v.value();
        if s.ndim() != first.ndim() {
            return Err(shape_err("concat", first.shape(), s.shape()));
        }
        for (d, (a, b)) in first.shape().iter().zip(s.shape()).enumerate() {
            if d != axis && a != b {
                return Err(shape_err("concat", first.shape(), s.shape()));
            }
        }
        widths.push(s.shape()[axis]);
        axis_total += s.shape()[axis];
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = axis_total;
    let (outer, _, inner) = blocks(&shape, axis);
    let mut data = vec![0.0; outer * axis_total * inner];
    let mut offset = 0;
    for (v, &w) in vars.iter().zip(&widths) {
        let val = v.value();
        for o in 0..outer {
            let to = (o * axis_total + offset) * inner;
            let from = o * w * inner;
            data[to..to + w * inner].copy_from_slice(&val.data()[from..from + w * inner]);
        }
        offset += w;
    }
    let out = Tensor::new(shape.clone(), data)?;
    let req = vars.iter().any(Var::requires_grad);
    let parents: Vec<usize> = vars.iter().map(Var::idx).collect();
    let part_shapes: Vec<Vec<usize>> = vars.iter().map(|v| v.value().shape().to_vec()).collect();
    let bw = move |g: &Tensor| {
        let mut grads = Vec::with_capacity(widths.len());
        let mut offset = 0;
        for (w, ps) in widths.iter().zip(&part_shapes) {
            let mut part = vec![0.0; outer * w * inner];
            for o in 0..outer {
                let from = (o * axis_total + offset) * inner;
                let to = o * w * inner;
                part[to..to + w * inner].copy_from_slice(&g.data()[from..from + w * inner]);
            }
            grads.push(Tensor::new(ps.clone(), part).expect("shape"));
            offset += w;
        }
        grads
    };
    Ok(graph.push(out, parents, Some(Box::new(bw)), req))
}
