//! Elementwise, reduction and matrix operations.

use super::{Graph, Var};
use crate::tensor::Tensor;

fn unary<'g>(
    x: Var<'g>,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + 'static,
) -> Var<'g> {
    let value = x.value().map(f);
    x.graph().op(
        value,
        &[x],
        Box::new(move |g, p, out, _| {
            let data = g
                .data()
                .iter()
                .zip(p[0].data())
                .zip(out.data())
                .map(|((&g, &x), &y)| g * df(x, y))
                .collect();
            vec![Some(Tensor::new(g.shape(), data))]
        }),
    )
}

impl<'g> Var<'g> {
    pub fn add(self, other: Var<'g>) -> Var<'g> {
        let value = self.value().zip_map(&other.value(), |a, b| a + b);
        self.graph().op(
            value,
            &[self, other],
            Box::new(|g, _, _, _| vec![Some(g.clone()), Some(g.clone())]),
        )
    }

    pub fn sub(self, other: Var<'g>) -> Var<'g> {
        let value = self.value().zip_map(&other.value(), |a, b| a - b);
        self.graph().op(
            value,
            &[self, other],
            Box::new(|g, _, _, _| vec![Some(g.clone()), Some(g.map(|x| -x))]),
        )
    }

    pub fn mul(self, other: Var<'g>) -> Var<'g> {
        let value = self.value().zip_map(&other.value(), |a, b| a * b);
        self.graph().op(
            value,
            &[self, other],
            Box::new(|g, p, _, need| {
                vec![
                    need[0].then(|| g.zip_map(&p[1], |g, b| g * b)),
                    need[1].then(|| g.zip_map(&p[0], |g, a| g * a)),
                ]
            }),
        )
    }

    pub fn scale(self, c: f64) -> Var<'g> {
        unary(self, move |x| x * c, move |_, _| c)
    }

    pub fn add_scalar(self, c: f64) -> Var<'g> {
        unary(self, move |x| x + c, |_, _| 1.0)
    }

    pub fn relu(self) -> Var<'g> {
        unary(self, |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn exp(self) -> Var<'g> {
        unary(self, f64::exp, |_, y| y)
    }

    pub fn ln(self) -> Var<'g> {
        unary(self, f64::ln, |x, _| 1.0 / x)
    }

    /// Multiplies every element by a scalar variable.
    pub fn mul_scalar(self, s: Var<'g>) -> Var<'g> {
        let sv = s.value().item();
        let value = self.value().map(|x| x * sv);
        self.graph().op(
            value,
            &[self, s],
            Box::new(|g, p, _, need| {
                let sv = p[1].item();
                vec![
                    need[0].then(|| g.map(|x| x * sv)),
                    need[1].then(|| {
                        let dot: f64 = g.data().iter().zip(p[0].data()).map(|(a, b)| a * b).sum();
                        Tensor::new(p[1].shape(), vec![dot])
                    }),
                ]
            }),
        )
    }

    pub fn sum(self) -> Var<'g> {
        let value = Tensor::scalar(self.value().sum());
        self.graph().op(
            value,
            &[self],
            Box::new(|g, p, _, _| vec![Some(Tensor::full(p[0].shape(), g.item()))]),
        )
    }

    pub fn mean(self) -> Var<'g> {
        let n = self.value().len() as f64;
        self.sum().scale(1.0 / n)
    }

    pub fn reshape(self, shape: &[usize]) -> Var<'g> {
        let value = (*self.value()).clone().reshaped(shape);
        self.graph().op(
            value,
            &[self],
            Box::new(|g, p, _, _| vec![Some(g.clone().reshaped(p[0].shape()))]),
        )
    }

    /// Mean over the leading axis.
    pub fn mean_axis0(self) -> Var<'g> {
        let x = self.value();
        let lead = x.shape()[0];
        let rest: Vec<usize> = x.shape()[1..].to_vec();
        let inner: usize = rest.iter().product();
        let mut out = vec![0.0; inner];
        for k in 0..lead {
            for (o, v) in out.iter_mut().zip(&x.data()[k * inner..(k + 1) * inner]) {
                *o += v;
            }
        }
        for o in &mut out {
            *o /= lead as f64;
        }
        self.graph().op(
            Tensor::new(&rest, out),
            &[self],
            Box::new(move |g, p, _, _| {
                let mut d = Vec::with_capacity(lead * inner);
                for _ in 0..lead {
                    d.extend(g.data().iter().map(|v| v / lead as f64));
                }
                vec![Some(Tensor::new(p[0].shape(), d))]
            }),
        )
    }

    /// `(m, k) x (k, n) -> (m, n)`.
    pub fn matmul(self, other: Var<'g>) -> Var<'g> {
        let value = matmul(&self.value(), &other.value());
        self.graph().op(
            value,
            &[self, other],
            Box::new(|g, p, _, need| {
                vec![
                    need[0].then(|| matmul(g, &p[1].transpose2())),
                    need[1].then(|| matmul(&p[0].transpose2(), g)),
                ]
            }),
        )
    }

    pub fn transpose(self) -> Var<'g> {
        let value = self.value().transpose2();
        self.graph().op(
            value,
            &[self],
            Box::new(|g, _, _, _| vec![Some(g.transpose2())]),
        )
    }

    /// Adds a length-`n` vector to every row of an `(m, n)` matrix.
    pub fn add_row_vector(self, v: Var<'g>) -> Var<'g> {
        let x = self.value();
        let b = v.value();
        let (m, n) = x.dims2();
        assert_eq!(b.len(), n, "row vector length");
        let mut out = x.data().to_vec();
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] += b.data()[j];
            }
        }
        self.graph().op(
            Tensor::new(&[m, n], out),
            &[self, v],
            Box::new(move |g, p, _, need| {
                let col_sums = need[1].then(|| {
                    let mut s = vec![0.0; n];
                    for i in 0..m {
                        for j in 0..n {
                            s[j] += g.data()[i * n + j];
                        }
                    }
                    Tensor::new(p[1].shape(), s)
                });
                vec![need[0].then(|| g.clone()), col_sums]
            }),
        )
    }

    /// Adds a length-`m` vector to every column of an `(m, n)` matrix.
    pub fn add_col_vector(self, v: Var<'g>) -> Var<'g> {
        let x = self.value();
        let b = v.value();
        let (m, n) = x.dims2();
        assert_eq!(b.len(), m, "column vector length");
        let mut out = x.data().to_vec();
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] += b.data()[i];
            }
        }
        self.graph().op(
            Tensor::new(&[m, n], out),
            &[self, v],
            Box::new(move |g, p, _, need| {
                let row_sums = need[1].then(|| {
                    let s = (0..m).map(|i| g.row(i).iter().sum()).collect();
                    Tensor::new(p[1].shape(), s)
                });
                vec![need[0].then(|| g.clone()), row_sums]
            }),
        )
    }

    /// Row-wise softmax of an `(m, n)` matrix.
    pub fn softmax_rows(self) -> Var<'g> {
        let x = self.value();
        let (m, n) = x.dims2();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = x.row(i);
            let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for j in 0..n {
                let e = (row[j] - mx).exp();
                out[i * n + j] = e;
                z += e;
            }
            for j in 0..n {
                out[i * n + j] /= z;
            }
        }
        self.graph().op(
            Tensor::new(&[m, n], out),
            &[self],
            Box::new(move |g, _, y, _| {
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        d[i * n + j] = y.data()[i * n + j] * (g.data()[i * n + j] - dot);
                    }
                }
                vec![Some(Tensor::new(&[m, n], d))]
            }),
        )
    }

    /// `log Σ_j exp(x_ij)` for each row.
    pub fn logsumexp_rows(self) -> Var<'g> {
        self.logsumexp_axis(true)
    }

    /// `log Σ_i exp(x_ij)` for each column.
    pub fn logsumexp_cols(self) -> Var<'g> {
        self.logsumexp_axis(false)
    }

    fn logsumexp_axis(self, rows: bool) -> Var<'g> {
        let x = self.value();
        let (m, n) = x.dims2();
        let (outer, inner) = if rows { (m, n) } else { (n, m) };
        let at = move |o: usize, k: usize| if rows { o * n + k } else { k * n + o };
        let mut out = vec![0.0; outer];
        for o in 0..outer {
            let mx = (0..inner)
                .map(|k| x.data()[at(o, k)])
                .fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = (0..inner).map(|k| (x.data()[at(o, k)] - mx).exp()).sum();
            out[o] = mx + s.ln();
        }
        self.graph().op(
            Tensor::new(&[outer], out),
            &[self],
            Box::new(move |g, p, y, _| {
                let mut d = vec![0.0; m * n];
                for o in 0..outer {
                    for k in 0..inner {
                        let idx = at(o, k);
                        d[idx] = g.data()[o] * (p[0].data()[idx] - y.data()[o]).exp();
                    }
                }
                vec![Some(Tensor::new(&[m, n], d))]
            }),
        )
    }

    /// Columns `start..end` of an `(m, n)` matrix.
    pub fn slice_cols(self, start: usize, end: usize) -> Var<'g> {
        let x = self.value();
        let (m, n) = x.dims2();
        assert!(start <= end && end <= n);
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for i in 0..m {
            out.extend_from_slice(&x.row(i)[start..end]);
        }
        self.graph().op(
            Tensor::new(&[m, w], out),
            &[self],
            Box::new(move |g, _, _, _| {
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    d[i * n + start..i * n + end].copy_from_slice(g.row(i));
                }
                vec![Some(Tensor::new(&[m, n], d))]
            }),
        )
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(parts: &[Var<'g>]) -> Var<'g> {
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let m = values[0].dims2().0;
        let widths: Vec<usize> = values.iter().map(|v| v.dims2().1).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for i in 0..m {
            for v in &values {
                assert_eq!(v.dims2().0, m, "concat_cols row mismatch");
                out.extend_from_slice(v.row(i));
            }
        }
        parts[0].graph().op(
            Tensor::new(&[m, total], out),
            parts,
            Box::new(move |g, _, _, need| {
                let mut offset = 0;
                widths
                    .iter()
                    .zip(need)
                    .map(|(&w, &nd)| {
                        let start = offset;
                        offset += w;
                        nd.then(|| {
                            let mut d = Vec::with_capacity(m * w);
                            for i in 0..m {
                                d.extend_from_slice(&g.row(i)[start..start + w]);
                            }
                            Tensor::new(&[m, w], d)
                        })
                    })
                    .collect()
            }),
        )
    }

    /// Normalizes each row of an `(m, n)` matrix to unit L2 norm,
    /// `x / sqrt(|x|² + eps)`.
    pub fn l2_normalize_rows(self, eps: f64) -> Var<'g> {
        let x = self.value();
        let (m, n) = x.dims2();
        let norms: Vec<f64> = (0..m)
            .map(|i| (x.row(i).iter().map(|v| v * v).sum::<f64>() + eps).sqrt())
            .collect();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[i * n + j] = x.data()[i * n + j] / norms[i];
            }
        }
        self.graph().op(
            Tensor::new(&[m, n], out),
            &[self],
            Box::new(move |g, _, y, _| {
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    let dot: f64 = g.row(i).iter().zip(y.row(i)).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        d[i * n + j] = (g.data()[i * n + j] - y.data()[i * n + j] * dot) / norms[i];
                    }
                }
                vec![Some(Tensor::new(&[m, n], d))]
            }),
        )
    }

    /// Appends a dustbin row and column filled with the scalar `alpha`.
    pub fn append_dustbins(self, alpha: Var<'g>) -> Var<'g> {
        let x = self.value();
        let (m, n) = x.dims2();
        let a = alpha.value().item();
        let mut out = vec![a; (m + 1) * (n + 1)];
        for i in 0..m {
            out[i * (n + 1)..i * (n + 1) + n].copy_from_slice(x.row(i));
        }
        self.graph().op(
            Tensor::new(&[m + 1, n + 1], out),
            &[self, alpha],
            Box::new(move |g, p, _, need| {
                let inner = need[0].then(|| {
                    let mut d = Vec::with_capacity(m * n);
                    for i in 0..m {
                        d.extend_from_slice(&g.row(i)[..n]);
                    }
                    Tensor::new(&[m, n], d)
                });
                let border = need[1].then(|| {
                    let total = g.sum();
                    let mut block = 0.0;
                    for i in 0..m {
                        block += g.row(i)[..n].iter().sum::<f64>();
                    }
                    Tensor::new(p[1].shape(), vec![total - block])
                });
                vec![inner, border]
            }),
        )
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (m, k) = a.dims2();
    let (k2, n) = b.dims2();
    assert_eq!(k, k2, "matmul inner dimension mismatch");
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for (p, &av) in a.row(i).iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(b.row(p)) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(&[m, n], out)
}

impl Graph {
    /// Stacks 2-D matrices with equal column counts vertically.
    pub fn concat_rows<'g>(&'g self, parts: &[Var<'g>]) -> Var<'g> {
        let values: Vec<_> = parts.iter().map(|p| p.value()).collect();
        let n = values[0].dims2().1;
        let heights: Vec<usize> = values.iter().map(|v| v.dims2().0).collect();
        let mut out = Vec::new();
        for v in &values {
            assert_eq!(v.dims2().1, n, "concat_rows column mismatch");
            out.extend_from_slice(v.data());
        }
        let total = heights.iter().sum();
        self.op(
            Tensor::new(&[total, n], out),
            parts,
            Box::new(move |g, _, _, need| {
                let mut offset = 0;
                heights
                    .iter()
                    .zip(need)
                    .map(|(&h, &nd)| {
                        let start = offset;
                        offset += h;
                        nd.then(|| Tensor::new(&[h, n], g.data()[start * n..(start + h) * n].to_vec()))
                    })
                    .collect()
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autograd::gradcheck::max_rel_error;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn matrix_ops_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = rand_tensor(&mut rng, &[3, 4]);
        let b = rand_tensor(&mut rng, &[4, 2]);
        let v = rand_tensor(&mut rng, &[2]);
        let err = max_rel_error(&[a, b, v], |_, x| {
            x[0].matmul(x[1]).add_row_vector(x[2]).softmax_rows().ln().sum()
        });
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn logsumexp_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_tensor(&mut rng, &[3, 5]);
        let w = rand_tensor(&mut rng, &[3]);
        let err = max_rel_error(&[a, w], |g, x| {
            let r = x[0].add_col_vector(x[1]).logsumexp_rows();
            let c = x[0].logsumexp_cols();
            let r2 = g.concat_rows(&[r.reshape(&[1, 3]), x[1].reshape(&[1, 3])]);
            r2.mul(r2).sum().add(c.exp().sum())
        });
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn slicing_and_normalization_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = rand_tensor(&mut rng, &[3, 6]);
        let s = Tensor::scalar(0.7);
        let err = max_rel_error(&[a, s], |_, x| {
            let l = x[0].slice_cols(0, 2);
            let r = x[0].slice_cols(2, 6);
            let c = Var::concat_cols(&[r, l]).l2_normalize_rows(1e-9);
            c.append_dustbins(x[1]).mul_scalar(x[1]).exp().sum()
        });
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn mean_axis0_and_relu() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = rand_tensor(&mut rng, &[2, 3, 4]);
        let err = max_rel_error(&[a], |_, x| {
            let m = x[0].mean_axis0().relu();
            m.mul(m).sum()
        });
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn constants_get_no_gradient() {
        let g = Graph::new();
        let c = g.constant(Tensor::scalar(2.0));
        let p = g.param(Tensor::scalar(3.0));
        let out = c.mul(p);
        let grads = g.backward(out);
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(p).unwrap().item(), 2.0);
    }
}
