use super::{AutodiffError, Result};

/// Handle to a tensor stored on a [`Tape`].
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct TensorId(pub(crate) usize);

/// Dense row-major tensor with an optional gradient buffer of the same length.
#[derive(Clone, Debug)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
    pub grad: Option<Vec<f64>>,
    pub requires_grad: bool,
}

impl Tensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Batch normalization statistics source.
#[derive(Clone, Debug)]
pub enum BnMode {
    /// Normalize with statistics computed from the input itself (training).
    Train,
    /// Normalize with externally supplied running statistics (inference).
    Eval { mean: Vec<f64>, var: Vec<f64> },
}

/// Recorded operation: inputs plus whatever the backward pass needs.
#[derive(Clone, Debug)]
enum Op {
    /// Input tensor or an output we do not differentiate through.
    Leaf,
    Add {
        a: TensorId,
        b: TensorId,
    },
    Sub {
        a: TensorId,
        b: TensorId,
    },
    Mul {
        a: TensorId,
        b: TensorId,
    },
    /// y = mul * x + add, elementwise with scalar coefficients.
    AffineScalar {
        x: TensorId,
        mul: f64,
    },
    Relu {
        x: TensorId,
    },
    Abs {
        x: TensorId,
    },
    Tanh {
        x: TensorId,
    },
    Sigmoid {
        x: TensorId,
    },
    Softplus {
        x: TensorId,
    },
    Elu {
        x: TensorId,
        alpha: f64,
    },
    Exp {
        x: TensorId,
    },
    Log {
        x: TensorId,
    },
    Matmul {
        a: TensorId,
        b: TensorId,
        ta: bool,
        tb: bool,
        m: usize,
        k: usize,
        n: usize,
    },
    /// y = W x + b with W: [out, in], x: [in], b: [out].
    Affine {
        w: TensorId,
        x: TensorId,
        b: TensorId,
    },
    Conv1d {
        x: TensorId,
        w: TensorId,
        stride: usize,
        pad: usize,
        c_in: usize,
        l_in: usize,
        c_out: usize,
        ksize: usize,
        l_out: usize,
    },
    /// Per-channel normalization over the length axis of a [C, L] input.
    BatchNorm {
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
        mean: Vec<f64>,
        var: Vec<f64>,
        eval: bool,
    },
    SoftmaxRows {
        x: TensorId,
        rows: usize,
        cols: usize,
    },
    /// Global average pool [C, L] -> [C].
    Gap {
        x: TensorId,
        channels: usize,
        len: usize,
    },
    Sum {
        x: TensorId,
    },
    Mean {
        x: TensorId,
    },
    Reshape {
        x: TensorId,
    },
    SliceCols {
        x: TensorId,
        rows: usize,
        cols: usize,
        from: usize,
        to: usize,
    },
    ConcatCols {
        xs: Vec<TensorId>,
        rows: usize,
        widths: Vec<usize>,
    },
}

struct Node {
    tensor: Tensor,
    op: Op,
}

/// Arena of tensors forming one computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

#[cfg(debug_assertions)]
fn debug_check_finite(op: &'static str, data: &[f64]) {
    for (i, v) in data.iter().enumerate() {
        assert!(
            v.is_finite(),
            "{op}: non-finite value {v} at flat index {i}"
        );
    }
}

#[cfg(not(debug_assertions))]
fn debug_check_finite(_op: &'static str, _data: &[f64]) {}

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn stable_softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Dense matrix multiply with transpose flags: out = op(a) * op(b).
///
/// `a` is stored [m, k] (or [k, m] when `ta`), `b` is [k, n] (or [n, k] when `tb`),
/// `out` is [m, n] and is accumulated into.
fn matmul_into(
    out: &mut [f64],
    a: &[f64],
    b: &[f64],
    m: usize,
    k: usize,
    n: usize,
    ta: bool,
    tb: bool,
) {
    for i in 0..m {
        for p in 0..k {
            let av = if ta { a[p * m + i] } else { a[i * k + p] };
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[i * n..(i + 1) * n];
            if tb {
                for (j, o) in orow.iter_mut().enumerate() {
                    *o += av * b[j * k + p];
                }
            } else {
                let brow = &b[p * n..(p + 1) * n];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of tensors recorded so far.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].tensor.shape
    }

    pub fn data(&self, id: TensorId) -> &[f64] {
        &self.nodes[id.0].tensor.data
    }

    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].tensor.grad.as_deref()
    }

    pub fn requires_grad(&self, id: TensorId) -> bool {
        self.nodes[id.0].tensor.requires_grad
    }

    /// Value of a single-element tensor.
    pub fn value(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.nodes[id.0].tensor.data.len(), 1);
        self.nodes[id.0].tensor.data[0]
    }

    /// Statistics a training-mode [`Tape::batchnorm1d`] node computed from its input,
    /// as `(mean, var)` per channel. Available until `backward` consumes the graph.
    pub fn batchnorm_stats(&self, y: TensorId) -> Option<(&[f64], &[f64])> {
        match &self.nodes[y.0].op {
            Op::BatchNorm {
                mean, var, eval, ..
            } if !eval => Some((mean, var)),
            _ => None,
        }
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, track: bool) -> TensorId {
        // The op is recorded even for untracked outputs: backward skips nodes that
        // never receive a gradient, and training-mode batchnorm statistics must stay
        // readable regardless of gradient tracking.
        self.nodes.push(Node {
            tensor: Tensor {
                shape,
                data,
                grad: None,
                requires_grad: track,
            },
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    /// Create an input tensor. `requires_grad` marks it as a gradient target.
    pub fn leaf(
        &mut self,
        shape: &[usize],
        data: Vec<f64>,
        requires_grad: bool,
    ) -> Result<TensorId> {
        if numel(shape) != data.len() {
            return Err(AutodiffError::LengthMismatch {
                op: "leaf",
                len: data.len(),
                shape: shape.to_vec(),
            });
        }
        debug_check_finite("leaf", &data);
        Ok(self.push(shape.to_vec(), data, Op::Leaf, requires_grad))
    }

    /// Constant input: never receives a gradient.
    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<TensorId> {
        let id = self.leaf(shape, data, false)?;
        Ok(id)
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.leaf(&[1], vec![v], false).expect("scalar leaf")
    }

    fn binary_elementwise(
        &mut self,
        name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<TensorId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa != sb {
            return Err(AutodiffError::ShapeMismatch {
                op: name,
                detail: format!("{sa:?} vs {sb:?}"),
            });
        }
        let data: Vec<f64> = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        debug_check_finite(name, &data);
        let track = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(sa, data, op, track))
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_elementwise("add", a, b, |x, y| x + y, Op::Add { a, b })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_elementwise("sub", a, b, |x, y| x - y, Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        self.binary_elementwise("mul", a, b, |x, y| x * y, Op::Mul { a, b })
    }

    fn unary(
        &mut self,
        name: &'static str,
        x: TensorId,
        f: impl Fn(f64) -> f64,
        op: Op,
    ) -> TensorId {
        let data: Vec<f64> = self.data(x).iter().map(|&v| f(v)).collect();
        debug_check_finite(name, &data);
        let shape = self.shape(x).to_vec();
        let track = self.requires_grad(x);
        self.push(shape, data, op, track)
    }

    /// y = mul * x + add, elementwise.
    pub fn affine_scalar(&mut self, x: TensorId, mul: f64, add: f64) -> TensorId {
        self.unary(
            "affine_scalar",
            x,
            |v| mul * v + add,
            Op::AffineScalar { x, mul },
        )
    }

    pub fn relu(&mut self, x: TensorId) -> TensorId {
        self.unary("relu", x, |v| v.max(0.0), Op::Relu { x })
    }

    pub fn abs(&mut self, x: TensorId) -> TensorId {
        self.unary("abs", x, f64::abs, Op::Abs { x })
    }

    pub fn tanh(&mut self, x: TensorId) -> TensorId {
        self.unary("tanh", x, f64::tanh, Op::Tanh { x })
    }

    pub fn sigmoid(&mut self, x: TensorId) -> TensorId {
        self.unary("sigmoid", x, stable_sigmoid, Op::Sigmoid { x })
    }

    pub fn softplus(&mut self, x: TensorId) -> TensorId {
        self.unary("softplus", x, stable_softplus, Op::Softplus { x })
    }

    /// ELU with the given alpha; `elu(x) + alpha` is positive for all x.
    pub fn elu(&mut self, x: TensorId, alpha: f64) -> TensorId {
        self.unary(
            "elu",
            x,
            |v| if v > 0.0 { v } else { alpha * v.exp_m1() },
            Op::Elu { x, alpha },
        )
    }

    pub fn exp(&mut self, x: TensorId) -> TensorId {
        self.unary("exp", x, f64::exp, Op::Exp { x })
    }

    /// Natural log; inputs must be positive (debug builds panic on the NaN otherwise).
    pub fn log(&mut self, x: TensorId) -> TensorId {
        self.unary("log", x, f64::ln, Op::Log { x })
    }

    /// out = op(a) * op(b) for 2D operands, with per-operand transpose flags.
    pub fn matmul(&mut self, a: TensorId, b: TensorId, ta: bool, tb: bool) -> Result<TensorId> {
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        if sa.len() != 2 || sb.len() != 2 {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                detail: format!("expected 2D operands, got {sa:?} and {sb:?}"),
            });
        }
        let (m, ka) = if ta { (sa[1], sa[0]) } else { (sa[0], sa[1]) };
        let (kb, n) = if tb { (sb[1], sb[0]) } else { (sb[0], sb[1]) };
        if ka != kb {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                detail: format!("inner dims {ka} vs {kb} (shapes {sa:?}, {sb:?}, ta={ta}, tb={tb})"),
            });
        }
        let mut out = vec![0.0; m * n];
        matmul_into(&mut out, self.data(a), self.data(b), m, ka, n, ta, tb);
        debug_check_finite("matmul", &out);
        let track = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(
            vec![m, n],
            out,
            Op::Matmul {
                a,
                b,
                ta,
                tb,
                m,
                k: ka,
                n,
            },
            track,
        ))
    }

    /// y = W x + b for W: [out, in], x: [in], b: [out].
    pub fn affine(&mut self, w: TensorId, x: TensorId, b: TensorId) -> Result<TensorId> {
        let (sw, sx, sb) = (
            self.shape(w).to_vec(),
            self.shape(x).to_vec(),
            self.shape(b).to_vec(),
        );
        let ok = sw.len() == 2 && sx.len() == 1 && sb.len() == 1 && sw[1] == sx[0] && sw[0] == sb[0];
        if !ok {
            return Err(AutodiffError::ShapeMismatch {
                op: "affine",
                detail: format!("W {sw:?}, x {sx:?}, b {sb:?}"),
            });
        }
        let (rows, cols) = (sw[0], sw[1]);
        let wd = self.data(w);
        let xd = self.data(x);
        let bd = self.data(b);
        let mut out = vec![0.0; rows];
        for (r, o) in out.iter_mut().enumerate() {
            let wrow = &wd[r * cols..(r + 1) * cols];
            let mut acc = bd[r];
            for (&wv, &xv) in wrow.iter().zip(xd) {
                acc += wv * xv;
            }
            *o = acc;
        }
        debug_check_finite("affine", &out);
        let track = self.requires_grad(w) || self.requires_grad(x) || self.requires_grad(b);
        Ok(self.push(vec![rows], out, Op::Affine { w, x, b }, track))
    }

    /// 1D convolution: x [C_in, L], w [C_out, C_in, K] -> [C_out, L_out].
    pub fn conv1d(
        &mut self,
        x: TensorId,
        w: TensorId,
        stride: usize,
        pad: usize,
    ) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        let sw = self.shape(w).to_vec();
        if sx.len() != 2 || sw.len() != 3 || sw[1] != sx[0] || stride == 0 {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv1d",
                detail: format!("x {sx:?}, w {sw:?}, stride {stride}"),
            });
        }
        let (c_in, l_in) = (sx[0], sx[1]);
        let (c_out, ksize) = (sw[0], sw[2]);
        if l_in + 2 * pad < ksize {
            return Err(AutodiffError::ShapeMismatch {
                op: "conv1d",
                detail: format!("kernel {ksize} exceeds padded length {}", l_in + 2 * pad),
            });
        }
        let l_out = (l_in + 2 * pad - ksize) / stride + 1;
        let xd = self.data(x);
        let wd = self.data(w);
        let mut out = vec![0.0; c_out * l_out];
        conv1d_forward(
            &mut out, xd, wd, c_in, l_in, c_out, ksize, l_out, stride, pad,
        );
        debug_check_finite("conv1d", &out);
        let track = self.requires_grad(x) || self.requires_grad(w);
        Ok(self.push(
            vec![c_out, l_out],
            out,
            Op::Conv1d {
                x,
                w,
                stride,
                pad,
                c_in,
                l_in,
                c_out,
                ksize,
                l_out,
            },
            track,
        ))
    }

    /// Per-channel batch normalization of a [C, L] input.
    ///
    /// Training mode normalizes with the input's own per-channel statistics
    /// (biased variance over L); eval mode uses the supplied running statistics.
    pub fn batchnorm1d(
        &mut self,
        x: TensorId,
        gamma: TensorId,
        beta: TensorId,
        eps: f64,
        mode: BnMode,
    ) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        let (sg, sb) = (self.shape(gamma).to_vec(), self.shape(beta).to_vec());
        if sx.len() != 2 || sg != [sx[0]] || sb != [sx[0]] {
            return Err(AutodiffError::ShapeMismatch {
                op: "batchnorm1d",
                detail: format!("x {sx:?}, gamma {sg:?}, beta {sb:?}"),
            });
        }
        let (c, l) = (sx[0], sx[1]);
        let (mean, var, eval) = match mode {
            BnMode::Train => {
                let xd = self.data(x);
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let row = &xd[ch * l..(ch + 1) * l];
                    let m = row.iter().sum::<f64>() / l as f64;
                    let v = row.iter().map(|&x| (x - m) * (x - m)).sum::<f64>() / l as f64;
                    mean[ch] = m;
                    var[ch] = v;
                }
                (mean, var, false)
            }
            BnMode::Eval { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(AutodiffError::ShapeMismatch {
                        op: "batchnorm1d",
                        detail: format!(
                            "running stats length {} / {} for {c} channels",
                            mean.len(),
                            var.len()
                        ),
                    });
                }
                (mean, var, true)
            }
        };
        let xd = self.data(x);
        let gd = self.data(gamma);
        let bd = self.data(beta);
        let mut out = vec![0.0; c * l];
        for ch in 0..c {
            let inv = 1.0 / (var[ch] + eps).sqrt();
            let (g, b, m) = (gd[ch], bd[ch], mean[ch]);
            let src = &xd[ch * l..(ch + 1) * l];
            let dst = &mut out[ch * l..(ch + 1) * l];
            for (o, &v) in dst.iter_mut().zip(src) {
                *o = g * (v - m) * inv + b;
            }
        }
        debug_check_finite("batchnorm1d", &out);
        let track =
            self.requires_grad(x) || self.requires_grad(gamma) || self.requires_grad(beta);
        Ok(self.push(
            vec![c, l],
            out,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                eps,
                mean,
                var,
                eval,
            },
            track,
        ))
    }

    /// Softmax over the last axis of a 1D or 2D tensor. Rows sum to one.
    pub fn softmax(&mut self, x: TensorId) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        let (rows, cols) = match sx.len() {
            1 => (1, sx[0]),
            2 => (sx[0], sx[1]),
            _ => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "softmax",
                    detail: format!("expected 1D or 2D, got {sx:?}"),
                })
            }
        };
        if cols == 0 {
            return Err(AutodiffError::ShapeMismatch {
                op: "softmax",
                detail: "empty rows".into(),
            });
        }
        let xd = self.data(x);
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let src = &xd[r * cols..(r + 1) * cols];
            let dst = &mut out[r * cols..(r + 1) * cols];
            let max = src.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut denom = 0.0;
            for (o, &v) in dst.iter_mut().zip(src) {
                *o = (v - max).exp();
                denom += *o;
            }
            for o in dst.iter_mut() {
                *o /= denom;
            }
        }
        debug_check_finite("softmax", &out);
        let track = self.requires_grad(x);
        Ok(self.push(sx, out, Op::SoftmaxRows { x, rows, cols }, track))
    }

    /// Global average pool over the length axis: [C, L] -> [C].
    pub fn gap(&mut self, x: TensorId) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 || sx[1] == 0 {
            return Err(AutodiffError::ShapeMismatch {
                op: "gap",
                detail: format!("expected non-empty [C, L], got {sx:?}"),
            });
        }
        let (c, l) = (sx[0], sx[1]);
        let xd = self.data(x);
        let out: Vec<f64> = (0..c)
            .map(|ch| xd[ch * l..(ch + 1) * l].iter().sum::<f64>() / l as f64)
            .collect();
        debug_check_finite("gap", &out);
        let track = self.requires_grad(x);
        Ok(self.push(
            vec![c],
            out,
            Op::Gap {
                x,
                channels: c,
                len: l,
            },
            track,
        ))
    }

    /// Sum of all elements, as a [1] tensor.
    pub fn sum(&mut self, x: TensorId) -> TensorId {
        let s: f64 = self.data(x).iter().sum();
        debug_check_finite("sum", std::slice::from_ref(&s));
        let track = self.requires_grad(x);
        self.push(vec![1], vec![s], Op::Sum { x }, track)
    }

    /// Mean of all elements, as a [1] tensor.
    pub fn mean(&mut self, x: TensorId) -> TensorId {
        let n = self.data(x).len().max(1);
        let s: f64 = self.data(x).iter().sum::<f64>() / n as f64;
        debug_check_finite("mean", std::slice::from_ref(&s));
        let track = self.requires_grad(x);
        self.push(vec![1], vec![s], Op::Mean { x }, track)
    }

    /// Same data, new shape. Element count must match.
    pub fn reshape(&mut self, x: TensorId, shape: &[usize]) -> Result<TensorId> {
        if numel(shape) != self.data(x).len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "reshape",
                detail: format!("{:?} -> {shape:?}", self.shape(x)),
            });
        }
        let data = self.data(x).to_vec();
        let track = self.requires_grad(x);
        Ok(self.push(shape.to_vec(), data, Op::Reshape { x }, track))
    }

    /// Columns [from, to) of a 2D tensor.
    pub fn slice_cols(&mut self, x: TensorId, from: usize, to: usize) -> Result<TensorId> {
        let sx = self.shape(x).to_vec();
        if sx.len() != 2 || from >= to || to > sx[1] {
            return Err(AutodiffError::ShapeMismatch {
                op: "slice_cols",
                detail: format!("[{from}, {to}) of {sx:?}"),
            });
        }
        let (rows, cols) = (sx[0], sx[1]);
        let width = to - from;
        let xd = self.data(x);
        let mut out = Vec::with_capacity(rows * width);
        for r in 0..rows {
            out.extend_from_slice(&xd[r * cols + from..r * cols + to]);
        }
        let track = self.requires_grad(x);
        Ok(self.push(
            vec![rows, width],
            out,
            Op::SliceCols {
                x,
                rows,
                cols,
                from,
                to,
            },
            track,
        ))
    }

    /// Horizontal concatenation of 2D tensors with equal row counts.
    pub fn concat_cols(&mut self, xs: &[TensorId]) -> Result<TensorId> {
        if xs.is_empty() {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat_cols",
                detail: "no inputs".into(),
            });
        }
        let rows = {
            let s0 = self.shape(xs[0]);
            if s0.len() != 2 {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_cols",
                    detail: format!("expected 2D, got {s0:?}"),
                });
            }
            s0[0]
        };
        let mut widths = Vec::with_capacity(xs.len());
        for &x in xs {
            let s = self.shape(x);
            if s.len() != 2 || s[0] != rows {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_cols",
                    detail: format!("row mismatch: {s:?} vs {rows} rows"),
                });
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for (&x, &w) in xs.iter().zip(&widths) {
                let xd = self.data(x);
                out.extend_from_slice(&xd[r * w..(r + 1) * w]);
            }
        }
        let track = xs.iter().any(|&x| self.requires_grad(x));
        Ok(self.push(
            vec![rows, total],
            out,
            Op::ConcatCols {
                xs: xs.to_vec(),
                rows,
                widths,
            },
            track,
        ))
    }

    fn accum(&mut self, id: TensorId, contribution: &[f64]) {
        let t = &mut self.nodes[id.0].tensor;
        if !t.requires_grad {
            return;
        }
        let g = t.grad.get_or_insert_with(|| vec![0.0; t.data.len()]);
        for (gi, &ci) in g.iter_mut().zip(contribution) {
            *gi += ci;
        }
    }

    /// Reverse sweep from a scalar loss. Accumulates gradients into every tensor
    /// reachable from `loss` that requires one. Consumes the recorded graph, so
    /// call it once per tape; leaf gradients stay readable afterwards.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss.0].tensor.data.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(
                self.nodes[loss.0].tensor.shape.clone(),
            ));
        }
        {
            let t = &mut self.nodes[loss.0].tensor;
            t.grad = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            if matches!(op, Op::Leaf) {
                continue;
            }
            let gy = match self.nodes[i].tensor.grad.take() {
                Some(g) => g,
                None => continue,
            };
            self.backprop_node(i, op, &gy);
        }
        Ok(())
    }

    fn backprop_node(&mut self, node: usize, op: Op, gy: &[f64]) {
        match op {
            Op::Leaf => {}
            Op::Add { a, b } => {
                self.accum(a, gy);
                self.accum(b, gy);
            }
            Op::Sub { a, b } => {
                self.accum(a, gy);
                let neg: Vec<f64> = gy.iter().map(|&g| -g).collect();
                self.accum(b, &neg);
            }
            Op::Mul { a, b } => {
                if self.requires_grad(a) {
                    let ga: Vec<f64> = gy.iter().zip(self.data(b)).map(|(&g, &v)| g * v).collect();
                    self.accum(a, &ga);
                }
                if self.requires_grad(b) {
                    let gb: Vec<f64> = gy.iter().zip(self.data(a)).map(|(&g, &v)| g * v).collect();
                    self.accum(b, &gb);
                }
            }
            Op::AffineScalar { x, mul } => {
                let gx: Vec<f64> = gy.iter().map(|&g| g * mul).collect();
                self.accum(x, &gx);
            }
            Op::Relu { x } => {
                let gx: Vec<f64> = gy
                    .iter()
                    .zip(self.data(x))
                    .map(|(&g, &v)| if v > 0.0 { g } else { 0.0 })
                    .collect();
                self.accum(x, &gx);
            }
            Op::Abs { x } => {
                let gx: Vec<f64> = gy
                    .iter()
                    .zip(self.data(x))
                    .map(|(&g, &v)| g * v.signum() * if v == 0.0 { 0.0 } else { 1.0 })
                    .collect();
                self.accum(x, &gx);
            }
            Op::Tanh { x } => {
                let y = self.data(TensorId(node));
                let gx: Vec<f64> = gy.iter().zip(y).map(|(&g, &t)| g * (1.0 - t * t)).collect();
                self.accum(x, &gx);
            }
            Op::Sigmoid { x } => {
                let y = self.data(TensorId(node));
                let gx: Vec<f64> = gy.iter().zip(y).map(|(&g, &s)| g * s * (1.0 - s)).collect();
                self.accum(x, &gx);
            }
            Op::Softplus { x } => {
                let gx: Vec<f64> = gy
                    .iter()
                    .zip(self.data(x))
                    .map(|(&g, &v)| g * stable_sigmoid(v))
                    .collect();
                self.accum(x, &gx);
            }
            Op::Elu { x, alpha } => {
                let y = self.data(TensorId(node));
                let gx: Vec<f64> = gy
                    .iter()
                    .zip(self.data(x).iter().zip(y))
                    .map(|(&g, (&v, &yv))| if v > 0.0 { g } else { g * (yv + alpha) })
                    .collect();
                self.accum(x, &gx);
            }
            Op::Exp { x } => {
                let y = self.data(TensorId(node));
                let gx: Vec<f64> = gy.iter().zip(y).map(|(&g, &e)| g * e).collect();
                self.accum(x, &gx);
            }
            Op::Log { x } => {
                let gx: Vec<f64> = gy
                    .iter()
                    .zip(self.data(x))
                    .map(|(&g, &v)| g / v)
                    .collect();
                self.accum(x, &gx);
            }
            Op::Matmul {
                a,
                b,
                ta,
                tb,
                m,
                k,
                n,
            } => {
                // Y = op(A) op(B); shapes: dY [m, n], dA matches stored A, dB stored B.
                if self.requires_grad(a) {
                    let mut ga = vec![0.0; self.data(a).len()];
                    if ta {
                        // A stored [k, m]: dA = op(B) dY^T
                        matmul_into(&mut ga, self.data(b), gy, k, n, m, tb, true);
                    } else {
                        // A stored [m, k]: dA = dY op(B)^T
                        matmul_into(&mut ga, gy, self.data(b), m, n, k, false, !tb);
                    }
                    self.accum(a, &ga);
                }
                if self.requires_grad(b) {
                    let mut gb = vec![0.0; self.data(b).len()];
                    if tb {
                        // B stored [n, k]: dB = dY^T op(A)
                        matmul_into(&mut gb, gy, self.data(a), n, m, k, true, ta);
                    } else {
                        // B stored [k, n]: dB = op(A)^T dY
                        matmul_into(&mut gb, self.data(a), gy, k, m, n, !ta, false);
                    }
                    self.accum(b, &gb);
                }
            }
            Op::Affine { w, x, b } => {
                let (rows, cols) = (self.shape(w)[0], self.shape(w)[1]);
                if self.requires_grad(w) {
                    let xd = self.data(x);
                    let mut gw = vec![0.0; rows * cols];
                    for r in 0..rows {
                        let g = gy[r];
                        let dst = &mut gw[r * cols..(r + 1) * cols];
                        for (d, &xv) in dst.iter_mut().zip(xd) {
                            *d = g * xv;
                        }
                    }
                    self.accum(w, &gw);
                }
                if self.requires_grad(x) {
                    let wd = self.data(w);
                    let mut gx = vec![0.0; cols];
                    for r in 0..rows {
                        let g = gy[r];
                        let wrow = &wd[r * cols..(r + 1) * cols];
                        for (gi, &wv) in gx.iter_mut().zip(wrow) {
                            *gi += g * wv;
                        }
                    }
                    self.accum(x, &gx);
                }
                self.accum(b, gy);
            }
            Op::Conv1d {
                x,
                w,
                stride,
                pad,
                c_in,
                l_in,
                c_out,
                ksize,
                l_out,
            } => {
                if self.requires_grad(x) {
                    let wd = self.data(w);
                    let mut gx = vec![0.0; c_in * l_in];
                    conv1d_backward_input(
                        &mut gx, gy, wd, c_in, l_in, c_out, ksize, l_out, stride, pad,
                    );
                    self.accum(x, &gx);
                }
                if self.requires_grad(w) {
                    let xd = self.data(x);
                    let mut gw = vec![0.0; c_out * c_in * ksize];
                    conv1d_backward_kernel(
                        &mut gw, gy, xd, c_in, l_in, c_out, ksize, l_out, stride, pad,
                    );
                    self.accum(w, &gw);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                eps,
                mean,
                var,
                eval,
            } => {
                let (c, l) = (self.shape(x)[0], self.shape(x)[1]);
                let xd = self.data(x);
                let gd = self.data(gamma);
                let mut gx = vec![0.0; c * l];
                let mut ggamma = vec![0.0; c];
                let mut gbeta = vec![0.0; c];
                for ch in 0..c {
                    let inv = 1.0 / (var[ch] + eps).sqrt();
                    let m = mean[ch];
                    let g = gd[ch];
                    let src = &xd[ch * l..(ch + 1) * l];
                    let gyr = &gy[ch * l..(ch + 1) * l];
                    let mut sum_gy = 0.0;
                    let mut sum_gy_xhat = 0.0;
                    for (&gv, &xv) in gyr.iter().zip(src) {
                        sum_gy += gv;
                        sum_gy_xhat += gv * (xv - m) * inv;
                    }
                    ggamma[ch] = sum_gy_xhat;
                    gbeta[ch] = sum_gy;
                    let dst = &mut gx[ch * l..(ch + 1) * l];
                    if eval {
                        for (d, &gv) in dst.iter_mut().zip(gyr) {
                            *d = gv * g * inv;
                        }
                    } else {
                        let nl = l as f64;
                        for ((d, &gv), &xv) in dst.iter_mut().zip(gyr).zip(src) {
                            let xhat = (xv - m) * inv;
                            *d = g * inv * (gv - sum_gy / nl - xhat * sum_gy_xhat / nl);
                        }
                    }
                }
                self.accum(x, &gx);
                self.accum(gamma, &ggamma);
                self.accum(beta, &gbeta);
            }
            Op::SoftmaxRows { x, rows, cols } => {
                let y = self.data(TensorId(node));
                let mut gx = vec![0.0; rows * cols];
                for r in 0..rows {
                    let yr = &y[r * cols..(r + 1) * cols];
                    let gr = &gy[r * cols..(r + 1) * cols];
                    let dot: f64 = yr.iter().zip(gr).map(|(&yv, &gv)| yv * gv).sum();
                    let dst = &mut gx[r * cols..(r + 1) * cols];
                    for ((d, &yv), &gv) in dst.iter_mut().zip(yr).zip(gr) {
                        *d = yv * (gv - dot);
                    }
                }
                self.accum(x, &gx);
            }
            Op::Gap { x, channels, len } => {
                let mut gx = vec![0.0; channels * len];
                for ch in 0..channels {
                    let g = gy[ch] / len as f64;
                    for d in &mut gx[ch * len..(ch + 1) * len] {
                        *d = g;
                    }
                }
                self.accum(x, &gx);
            }
            Op::Sum { x } => {
                let gx = vec![gy[0]; self.data(x).len()];
                self.accum(x, &gx);
            }
            Op::Mean { x } => {
                let n = self.data(x).len().max(1);
                let gx = vec![gy[0] / n as f64; self.data(x).len()];
                self.accum(x, &gx);
            }
            Op::Reshape { x } => {
                self.accum(x, gy);
            }
            Op::SliceCols {
                x,
                rows,
                cols,
                from,
                to,
            } => {
                let width = to - from;
                let mut gx = vec![0.0; rows * cols];
                for r in 0..rows {
                    gx[r * cols + from..r * cols + to]
                        .copy_from_slice(&gy[r * width..(r + 1) * width]);
                }
                self.accum(x, &gx);
            }
            Op::ConcatCols { xs, rows, widths } => {
                let total: usize = widths.iter().sum();
                let mut offset = 0;
                for (&x, &w) in xs.iter().zip(&widths) {
                    if self.requires_grad(x) {
                        let mut gx = vec![0.0; rows * w];
                        for r in 0..rows {
                            gx[r * w..(r + 1) * w]
                                .copy_from_slice(&gy[r * total + offset..r * total + offset + w]);
                        }
                        self.accum(x, &gx);
                    }
                    offset += w;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv_taps(pad: usize, kk: usize, stride: usize, l_in: usize, l_out: usize) -> (usize, usize) {
    // Valid output positions lo where the input index lo*stride + kk - pad lands in [0, l_in).
    let lo_min = if pad > kk {
        (pad - kk).div_ceil(stride)
    } else {
        0
    };
    let hi = (l_in + pad).saturating_sub(kk + 1) / stride; // last valid lo, inclusive
    let lo_end = (hi + 1).min(l_out);
    (lo_min.min(lo_end), lo_end)
}

#[allow(clippy::too_many_arguments)]
fn conv1d_forward(
    out: &mut [f64],
    x: &[f64],
    w: &[f64],
    c_in: usize,
    l_in: usize,
    c_out: usize,
    ksize: usize,
    l_out: usize,
    stride: usize,
    pad: usize,
) {
    for co in 0..c_out {
        let orow = &mut out[co * l_out..(co + 1) * l_out];
        for ci in 0..c_in {
            let xrow = &x[ci * l_in..(ci + 1) * l_in];
            let wrow = &w[(co * c_in + ci) * ksize..(co * c_in + ci + 1) * ksize];
            for (kk, &wv) in wrow.iter().enumerate() {
                if wv == 0.0 {
                    continue;
                }
                let (lo_min, lo_end) = conv_taps(pad, kk, stride, l_in, l_out);
                let mut xi = lo_min * stride + kk - pad;
                for o in &mut orow[lo_min..lo_end] {
                    *o += wv * xrow[xi];
                    xi += stride;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv1d_backward_input(
    gx: &mut [f64],
    gy: &[f64],
    w: &[f64],
    c_in: usize,
    l_in: usize,
    c_out: usize,
    ksize: usize,
    l_out: usize,
    stride: usize,
    pad: usize,
) {
    for co in 0..c_out {
        let gyr = &gy[co * l_out..(co + 1) * l_out];
        for ci in 0..c_in {
            let gxr = &mut gx[ci * l_in..(ci + 1) * l_in];
            let wrow = &w[(co * c_in + ci) * ksize..(co * c_in + ci + 1) * ksize];
            for (kk, &wv) in wrow.iter().enumerate() {
                if wv == 0.0 {
                    continue;
                }
                let (lo_min, lo_end) = conv_taps(pad, kk, stride, l_in, l_out);
                let mut xi = lo_min * stride + kk - pad;
                for &g in &gyr[lo_min..lo_end] {
                    gxr[xi] += wv * g;
                    xi += stride;
                }
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn conv1d_backward_kernel(
    gw: &mut [f64],
    gy: &[f64],
    x: &[f64],
    c_in: usize,
    l_in: usize,
    c_out: usize,
    ksize: usize,
    l_out: usize,
    stride: usize,
    pad: usize,
) {
    for co in 0..c_out {
        let gyr = &gy[co * l_out..(co + 1) * l_out];
        for ci in 0..c_in {
            let xrow = &x[ci * l_in..(ci + 1) * l_in];
            let grow = &mut gw[(co * c_in + ci) * ksize..(co * c_in + ci + 1) * ksize];
            for (kk, gwk) in grow.iter_mut().enumerate() {
                let (lo_min, lo_end) = conv_taps(pad, kk, stride, l_in, l_out);
                let mut xi = lo_min * stride + kk - pad;
                let mut acc = 0.0;
                for &g in &gyr[lo_min..lo_end] {
                    acc += g * xrow[xi];
                    xi += stride;
                }
                *gwk += acc;
            }
        }
    }
}
