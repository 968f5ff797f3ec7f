//! Minimal reverse-mode automatic differentiation on an append-only tape.
//!
//! Every value is a 2-d tensor of 64-bit reals identified by its tape
//! index; appending preserves topological order, so `backward` is a single
//! reverse sweep. The op set is exactly what a small adversarial classifier
//! needs: matmul, bias broadcast, ReLU, inverted dropout, gradient
//! reversal, weighted softmax cross-entropy, and sigmoid binary
//! cross-entropy.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::ChaCha8Rng;

/// Handle to a tensor on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// a (B×I) · b (I×O)
    Matmul { a: TensorId, b: TensorId },
    /// x (B×O) + bias (1×O) broadcast over rows
    AddRowVec { x: TensorId, bias: TensorId },
    Relu { x: TensorId },
    /// Elementwise multiply by a saved mask of {0, 1/(1-p)} entries.
    Dropout { x: TensorId, mask: Vec<f64> },
    /// Identity forward; backward scales the upstream gradient by -lambda.
    GradientReversal { x: TensorId, lambda: f64 },
    Add { a: TensorId, b: TensorId },
    Scale { x: TensorId, factor: f64 },
    /// Per-instance -log softmax(logits)[label].
    SoftmaxCe { logits: TensorId, labels: Vec<usize> },
    /// Per-instance max(z,0) - z*d + ln(1+e^{-|z|}).
    SigmoidBce { logits: TensorId, flags: Vec<u8> },
    /// Σ_i w_i x_i over a column vector.
    WeightedSum { x: TensorId, weights: Vec<f64> },
}

#[derive(Debug, Clone)]
struct Node {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    grad: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Append-only record of a computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, values: Vec<f64>, requires_grad: bool, op: Op) -> TensorId {
        debug_assert_eq!(values.len(), rows * cols);
        let grad = vec![0.0; values.len()];
        self.nodes.push(Node {
            rows,
            cols,
            values,
            grad,
            requires_grad,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn node(&self, id: TensorId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn shape(&self, id: TensorId) -> (usize, usize) {
        let n = self.node(id);
        (n.rows, n.cols)
    }

    pub fn values(&self, id: TensorId) -> &[f64] {
        &self.node(id).values
    }

    pub fn grad(&self, id: TensorId) -> &[f64] {
        &self.node(id).grad
    }

    /// Scalar value of a 1×1 tensor.
    pub fn scalar(&self, id: TensorId) -> f64 {
        debug_assert_eq!(self.node(id).values.len(), 1);
        self.node(id).values[0]
    }

    /// New differentiable input.
    pub fn leaf(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<TensorId> {
        self.input(rows, cols, values, true)
    }

    /// New non-differentiable input; receives no gradient.
    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<TensorId> {
        self.input(rows, cols, values, false)
    }

    fn input(&mut self, rows: usize, cols: usize, values: Vec<f64>, requires_grad: bool) -> Result<TensorId> {
        if values.len() != rows * cols {
            return Err(Error::TensorShape(format!(
                "{} values for a {rows}x{cols} tensor",
                values.len()
            )));
        }
        Ok(self.push(rows, cols, values, requires_grad, Op::Leaf))
    }

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        let (ar, ac) = self.shape(a);
        let (br, bc) = self.shape(b);
        if ac != br {
            return Err(Error::TensorShape(format!(
                "matmul {ar}x{ac} . {br}x{bc}"
            )));
        }
        let mut out = vec![0.0; ar * bc];
        {
            let av = &self.node(a).values;
            let bv = &self.node(b).values;
            for i in 0..ar {
                for k in 0..ac {
                    let aik = av[i * ac + k];
                    if aik == 0.0 {
                        continue;
                    }
                    let brow = &bv[k * bc..(k + 1) * bc];
                    let orow = &mut out[i * bc..(i + 1) * bc];
                    for (o, &bkj) in orow.iter_mut().zip(brow) {
                        *o += aik * bkj;
                    }
                }
            }
        }
        Ok(self.push(ar, bc, out, true, Op::Matmul { a, b }))
    }

    pub fn add_row_vec(&mut self, x: TensorId, bias: TensorId) -> Result<TensorId> {
        let (xr, xc) = self.shape(x);
        let (br, bc) = self.shape(bias);
        if br != 1 || bc != xc {
            return Err(Error::TensorShape(format!(
                "row-vector add {xr}x{xc} + {br}x{bc}"
            )));
        }
        let bv = self.node(bias).values.clone();
        let out: Vec<f64> = self
            .node(x)
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| v + bv[i % xc])
            .collect();
        Ok(self.push(xr, xc, out, true, Op::AddRowVec { x, bias }))
    }

    /// Affine map: x (B×I) · w (I×O) + bias (1×O).
    pub fn linear(&mut self, x: TensorId, w: TensorId, bias: TensorId) -> Result<TensorId> {
        let product = self.matmul(x, w)?;
        self.add_row_vec(product, bias)
    }

    pub fn relu(&mut self, x: TensorId) -> TensorId {
        let (r, c) = self.shape(x);
        let out: Vec<f64> = self.node(x).values.iter().map(|&v| v.max(0.0)).collect();
        self.push(r, c, out, true, Op::Relu { x })
    }

    /// Inverted dropout: in training mode each unit is kept with
    /// probability 1-p and scaled by 1/(1-p); in eval mode the identity.
    pub fn dropout(
        &mut self,
        x: TensorId,
        p: f64,
        rng: &mut ChaCha8Rng,
        training: bool,
    ) -> Result<TensorId> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::InvalidSpec(format!("dropout probability {p}")));
        }
        let (r, c) = self.shape(x);
        if !training || p == 0.0 {
            let out = self.node(x).values.clone();
            let mask = vec![1.0; r * c];
            return Ok(self.push(r, c, out, true, Op::Dropout { x, mask }));
        }
        let keep_scale = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..r * c)
            .map(|_| {
                if rng.gen_range(0.0..1.0) < p {
                    0.0
                } else {
                    keep_scale
                }
            })
            .collect();
        let out: Vec<f64> = self
            .node(x)
            .values
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        Ok(self.push(r, c, out, true, Op::Dropout { x, mask }))
    }

    /// Identity forward; multiplies the backward gradient by -lambda.
    pub fn gradient_reversal(&mut self, x: TensorId, lambda: f64) -> TensorId {
        let (r, c) = self.shape(x);
        let out = self.node(x).values.clone();
        self.push(r, c, out, true, Op::GradientReversal { x, lambda })
    }

    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::TensorShape(format!(
                "add {:?} + {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let (r, c) = self.shape(a);
        let out: Vec<f64> = self
            .node(a)
            .values
            .iter()
            .zip(&self.node(b).values)
            .map(|(&x, &y)| x + y)
            .collect();
        Ok(self.push(r, c, out, true, Op::Add { a, b }))
    }

    pub fn scale(&mut self, x: TensorId, factor: f64) -> TensorId {
        let (r, c) = self.shape(x);
        let out: Vec<f64> = self.node(x).values.iter().map(|&v| v * factor).collect();
        self.push(r, c, out, true, Op::Scale { x, factor })
    }

    /// Per-instance cross-entropy -log softmax(logits_i)[labels_i],
    /// stabilized by max-subtraction. Returns a B×1 column.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: TensorId,
        labels: &[usize],
    ) -> Result<TensorId> {
        let (b, c) = self.shape(logits);
        if labels.len() != b {
            return Err(Error::TensorShape(format!(
                "{} labels for {b} logit rows",
                labels.len()
            )));
        }
        for (i, &l) in labels.iter().enumerate() {
            if l >= c {
                return Err(Error::InvalidLabel {
                    index: i,
                    label: l,
                    classes: c,
                });
            }
        }
        let mut out = Vec::with_capacity(b);
        for (i, &label) in labels.iter().enumerate() {
            let row = &self.node(logits).values[i * c..(i + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum: f64 = row.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
            out.push(log_sum - (row[label] - max));
        }
        Ok(self.push(
            b,
            1,
            out,
            true,
            Op::SoftmaxCe {
                logits,
                labels: labels.to_vec(),
            },
        ))
    }

    /// Per-instance binary cross-entropy of a logit column against
    /// domain flags, in the stable log-sum-exp form
    /// `max(z,0) - z*d + ln(1+e^{-|z|})`. Returns a B×1 column.
    pub fn sigmoid_bce(&mut self, logits: TensorId, flags: &[u8]) -> Result<TensorId> {
        let (b, c) = self.shape(logits);
        if c != 1 || flags.len() != b {
            return Err(Error::TensorShape(format!(
                "{} flags for {b}x{c} logits (need a column)",
                flags.len()
            )));
        }
        let out: Vec<f64> = self
            .node(logits)
            .values
            .iter()
            .zip(flags)
            .map(|(&z, &d)| z.max(0.0) - z * f64::from(d) + (-z.abs()).exp().ln_1p())
            .collect();
        Ok(self.push(
            b,
            1,
            out,
            true,
            Op::SigmoidBce {
                logits,
                flags: flags.to_vec(),
            },
        ))
    }

    /// Σ_i w_i x_i over a column vector; returns a scalar.
    pub fn weighted_sum(&mut self, x: TensorId, weights: &[f64]) -> Result<TensorId> {
        let (b, c) = self.shape(x);
        if c != 1 || weights.len() != b {
            return Err(Error::TensorShape(format!(
                "{} weights for {b}x{c} column",
                weights.len()
            )));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidSpec("negative loss weight".into()));
        }
        let total: f64 = self
            .node(x)
            .values
            .iter()
            .zip(weights)
            .map(|(&v, &w)| v * w)
            .sum();
        Ok(self.push(
            1,
            1,
            vec![total],
            true,
            Op::WeightedSum {
                x,
                weights: weights.to_vec(),
            },
        ))
    }

    /// Unweighted sum of a column vector.
    pub fn sum(&mut self, x: TensorId) -> Result<TensorId> {
        let (b, _) = self.shape(x);
        self.weighted_sum(x, &vec![1.0; b])
    }

    /// Reverse sweep from a scalar loss. All gradient accumulators are
    /// zeroed first, so repeated calls recompute rather than accumulate.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        let n = self.node(loss);
        if n.rows * n.cols != 1 {
            return Err(Error::NonScalarLoss {
                rows: n.rows,
                cols: n.cols,
            });
        }
        for node in &mut self.nodes {
            node.grad.iter_mut().for_each(|g| *g = 0.0);
        }
        self.nodes[loss.0].grad[0] = 1.0;

        for i in (0..=loss.0).rev() {
            // Take the node's gradient out to appease the borrow checker;
            // a node never feeds itself, so this is safe.
            let grad = std::mem::take(&mut self.nodes[i].grad);
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (ar, ac) = self.shape(a);
                    let (_, bc) = self.shape(b);
                    let av = self.nodes[a.0].values.clone();
                    let bv = self.nodes[b.0].values.clone();
                    if self.wants_grad(a) {
                        let ga = &mut self.nodes[a.0].grad;
                        for r in 0..ar {
                            for k in 0..ac {
                                let mut acc = 0.0;
                                for j in 0..bc {
                                    acc += grad[r * bc + j] * bv[k * bc + j];
                                }
                                ga[r * ac + k] += acc;
                            }
                        }
                    }
                    if self.wants_grad(b) {
                        let gb = &mut self.nodes[b.0].grad;
                        for k in 0..ac {
                            for j in 0..bc {
                                let mut acc = 0.0;
                                for r in 0..ar {
                                    acc += av[r * ac + k] * grad[r * bc + j];
                                }
                                gb[k * bc + j] += acc;
                            }
                        }
                    }
                }
                Op::AddRowVec { x, bias } => {
                    let (_, c) = self.shape(x);
                    if self.wants_grad(x) {
                        for (g, &up) in self.nodes[x.0].grad.iter_mut().zip(&grad) {
                            *g += up;
                        }
                    }
                    if self.wants_grad(bias) {
                        let gb = &mut self.nodes[bias.0].grad;
                        for (j, &up) in grad.iter().enumerate() {
                            gb[j % c] += up;
                        }
                    }
                }
                Op::Relu { x } => {
                    if self.wants_grad(x) {
                        let xv = self.nodes[x.0].values.clone();
                        for ((g, &up), &v) in
                            self.nodes[x.0].grad.iter_mut().zip(&grad).zip(&xv)
                        {
                            if v > 0.0 {
                                *g += up;
                            }
                        }
                    }
                }
                Op::Dropout { x, mask } => {
                    if self.wants_grad(x) {
                        for ((g, &up), &m) in
                            self.nodes[x.0].grad.iter_mut().zip(&grad).zip(&mask)
                        {
                            *g += up * m;
                        }
                    }
                }
                Op::GradientReversal { x, lambda } => {
                    if self.wants_grad(x) {
                        for (g, &up) in self.nodes[x.0].grad.iter_mut().zip(&grad) {
                            *g += -lambda * up;
                        }
                    }
                }
                Op::Add { a, b } => {
                    for t in [a, b] {
                        if self.wants_grad(t) {
                            for (g, &up) in self.nodes[t.0].grad.iter_mut().zip(&grad) {
                                *g += up;
                            }
                        }
                    }
                }
                Op::Scale { x, factor } => {
                    if self.wants_grad(x) {
                        for (g, &up) in self.nodes[x.0].grad.iter_mut().zip(&grad) {
                            *g += factor * up;
                        }
                    }
                }
                Op::SoftmaxCe { logits, labels } => {
                    if self.wants_grad(logits) {
                        let (b, c) = self.shape(logits);
                        let lv = self.nodes[logits.0].values.clone();
                        let gl = &mut self.nodes[logits.0].grad;
                        for i in 0..b {
                            let up = grad[i];
                            if up == 0.0 {
                                continue;
                            }
                            let row = &lv[i * c..(i + 1) * c];
                            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            let denom: f64 = row.iter().map(|&z| (z - max).exp()).sum();
                            for j in 0..c {
                                let p = (row[j] - max).exp() / denom;
                                let indicator = if j == labels[i] { 1.0 } else { 0.0 };
                                gl[i * c + j] += up * (p - indicator);
                            }
                        }
                    }
                }
                Op::SigmoidBce { logits, flags } => {
                    if self.wants_grad(logits) {
                        let lv = self.nodes[logits.0].values.clone();
                        let gl = &mut self.nodes[logits.0].grad;
                        for (i, (&z, &d)) in lv.iter().zip(&flags).enumerate() {
                            gl[i] += grad[i] * (sigmoid(z) - f64::from(d));
                        }
                    }
                }
                Op::WeightedSum { x, weights } => {
                    if self.wants_grad(x) {
                        let up = grad[0];
                        for (g, &w) in self.nodes[x.0].grad.iter_mut().zip(&weights) {
                            *g += up * w;
                        }
                    }
                }
            }
            self.nodes[i].grad = grad;
        }
        Ok(())
    }

    /// Whether backward should deposit gradient into `id`: leaves opt out
    /// via `requires_grad`; interior nodes always carry gradient through.
    fn wants_grad(&self, id: TensorId) -> bool {
        let n = self.node(id);
        !matches!(n.op, Op::Leaf) || n.requires_grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    const LN_2: f64 = std::f64::consts::LN_2;

    #[test]
    fn linear_with_identity_weights_is_identity() {
        let mut tape = Tape::new();
        let x = tape.leaf(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap();
        let w = tape.leaf(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = tape.leaf(1, 2, vec![0.0, 0.0]).unwrap();
        let y = tape.linear(x, w, b).unwrap();
        assert_eq!(tape.values(y), tape.values(x));
    }

    #[test]
    fn relu_values_and_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(2, 1, vec![-1.0, 2.0]).unwrap();
        let y = tape.relu(x);
        assert_eq!(tape.values(y), &[0.0, 2.0]);
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x), &[0.0, 1.0]);
    }

    #[test]
    fn matmul_rejects_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.leaf(2, 3, vec![0.0; 6]).unwrap();
        let b = tape.leaf(2, 2, vec![0.0; 4]).unwrap();
        assert!(matches!(tape.matmul(a, b), Err(Error::TensorShape(_))));
    }

    #[test]
    fn dropout_p_zero_is_identity_in_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for training in [false, true] {
            let mut tape = Tape::new();
            let x = tape.leaf(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
            let y = tape.dropout(x, 0.0, &mut rng, training).unwrap();
            assert_eq!(tape.values(y), tape.values(x));
        }
    }

    #[test]
    fn dropout_eval_mode_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut tape = Tape::new();
        let x = tape.leaf(1, 4, vec![0.5, -0.5, 2.0, -2.0]).unwrap();
        let y = tape.dropout(x, 0.5, &mut rng, false).unwrap();
        assert_eq!(tape.values(y), tape.values(x));
    }

    #[test]
    fn dropout_preserves_expectation() {
        // Mean over 10^5 draws of dropout(1) must be within 1 +/- 0.01.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut tape = Tape::new();
        let x = tape.leaf(n, 1, vec![1.0; n]).unwrap();
        let y = tape.dropout(x, 0.5, &mut rng, true).unwrap();
        let mean: f64 = tape.values(y).iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn dropout_gradient_uses_the_same_mask() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut tape = Tape::new();
        let x = tape.leaf(1, 8, vec![1.0; 8]).unwrap();
        let y = tape.dropout(x, 0.5, &mut rng, true).unwrap();
        let forward = tape.values(y).to_vec();
        let s = tape.sum_of_row(y);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x), forward.as_slice());
    }

    impl Tape {
        /// Test helper: sum all entries of a row vector as a scalar.
        fn sum_of_row(&mut self, x: TensorId) -> TensorId {
            let (r, c) = self.shape(x);
            let ones = self.constant(c, 1, vec![1.0; c]).unwrap();
            let col = self.matmul(x, ones).unwrap();
            if r == 1 {
                col
            } else {
                self.sum(col).unwrap()
            }
        }
    }

    #[test]
    fn gradient_reversal_forward_is_bit_identical() {
        let mut tape = Tape::new();
        let x = tape.leaf(1, 3, vec![0.1, -0.2, 123.456]).unwrap();
        for lambda in [0.0, 0.5, 1.0, 7.25] {
            let y = tape.gradient_reversal(x, lambda);
            assert_eq!(tape.values(y), tape.values(x));
        }
    }

    #[test]
    fn gradient_reversal_scales_backward_by_minus_lambda() {
        let mut tape = Tape::new();
        let x = tape.leaf(2, 1, vec![3.0, 5.0]).unwrap();
        let y = tape.gradient_reversal(x, 0.5);
        // Upstream gradient [1, -2] via weights.
        let s = tape.weighted_sum(y, &[1.0, 2.0]).unwrap();
        let neg = tape.scale(y, -1.0);
        let s2 = tape.weighted_sum(neg, &[0.0, 2.0]).unwrap();
        let loss = tape.add(s, s2).unwrap();
        tape.backward(loss).unwrap();
        // Upstream into the GRL is [1, 2-2] = [1, 0]... compute directly:
        // d loss/dy = [1, 2] + [-0, -2] = [1, 0]; backward flips to [-0.5, 0].
        assert_eq!(tape.grad(x), &[-0.5, 0.0]);
    }

    #[test]
    fn gradient_reversal_lambda_zero_blocks_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(2, 1, vec![3.0, 5.0]).unwrap();
        let y = tape.gradient_reversal(x, 0.0);
        let s = tape.sum(y).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(x), &[0.0, 0.0]);
    }

    #[test]
    fn softmax_ce_uniform_logits() {
        let mut tape = Tape::new();
        let logits = tape.leaf(1, 2, vec![0.7, 0.7]).unwrap();
        let ce = tape.softmax_cross_entropy(logits, &[0]).unwrap();
        assert!((tape.values(ce)[0] - LN_2).abs() < 1e-15);
    }

    #[test]
    fn softmax_ce_hand_value() {
        // Logits (ln 0.8, ln 0.2) give probabilities (0.8, 0.2); the loss
        // on label 0 is -ln 0.8.
        let mut tape = Tape::new();
        let logits = tape.leaf(1, 2, vec![0.8f64.ln(), 0.2f64.ln()]).unwrap();
        let ce = tape.softmax_cross_entropy(logits, &[0]).unwrap();
        assert!((tape.values(ce)[0] - 0.223143551314_2097).abs() < 1e-12);
    }

    #[test]
    fn softmax_ce_rejects_bad_label() {
        let mut tape = Tape::new();
        let logits = tape.leaf(2, 3, vec![0.0; 6]).unwrap();
        assert!(matches!(
            tape.softmax_cross_entropy(logits, &[0, 3]),
            Err(Error::InvalidLabel { index: 1, label: 3, classes: 3 })
        ));
    }

    #[test]
    fn softmax_ce_is_stable_for_huge_logits() {
        let mut tape = Tape::new();
        let logits = tape.leaf(1, 3, vec![1e4, 1e4 - 5.0, 0.0]).unwrap();
        let ce = tape.softmax_cross_entropy(logits, &[0]).unwrap();
        let v = tape.values(ce)[0];
        assert!(v.is_finite());
        assert!((v - (1.0 + (-5.0f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn zero_weight_instance_contributes_nothing() {
        // Weighted reduction with w_1 = 0 must equal the reduction with
        // instance 1 removed, in value and in every parameter gradient.
        let logits_data = vec![0.3, -0.4, 1.2, 0.9, 0.1, -0.2];
        let run = |rows: &[usize], weights: &[f64]| -> (f64, Vec<f64>) {
            let mut tape = Tape::new();
            let b = rows.len();
            let data: Vec<f64> = rows
                .iter()
                .flat_map(|&r| logits_data[r * 3..(r + 1) * 3].to_vec())
                .collect();
            let w = tape.leaf(b, 3, data).unwrap();
            let ident = tape.constant(b, b, {
                let mut m = vec![0.0; b * b];
                for i in 0..b {
                    m[i * b + i] = 1.0;
                }
                m
            }).unwrap();
            let logits = tape.matmul(ident, w).unwrap();
            let labels: Vec<usize> = rows.iter().map(|&r| r % 3).collect();
            let ce = tape.softmax_cross_entropy(logits, &labels).unwrap();
            let loss = tape.weighted_sum(ce, weights).unwrap();
            tape.backward(loss).unwrap();
            (tape.scalar(loss), tape.grad(w).to_vec())
        };
        let (full_loss, full_grad) = run(&[0, 1], &[1.0, 0.0]);
        let (cut_loss, cut_grad) = run(&[0], &[1.0]);
        assert!((full_loss - cut_loss).abs() <= 1e-12);
        for (g_full, g_cut) in full_grad[..3].iter().zip(&cut_grad) {
            assert!((g_full - g_cut).abs() <= 1e-12);
        }
        assert!(full_grad[3..].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn bce_hand_values() {
        let mut tape = Tape::new();
        let z0 = tape.leaf(1, 1, vec![0.0]).unwrap();
        let b0 = tape.sigmoid_bce(z0, &[0]).unwrap();
        assert!((tape.values(b0)[0] - LN_2).abs() < 1e-15);

        // sigmoid(z) = 0.7  =>  z = ln(0.7/0.3); BCE against d=0 is -ln 0.3.
        let z = (0.7f64 / 0.3).ln();
        let z1 = tape.leaf(1, 1, vec![z]).unwrap();
        let b1 = tape.sigmoid_bce(z1, &[0]).unwrap();
        assert!((tape.values(b1)[0] - (-(0.3f64.ln()))).abs() < 1e-12);
    }

    #[test]
    fn bce_is_stable_for_huge_logits() {
        let mut tape = Tape::new();
        let z = tape.leaf(2, 1, vec![800.0, -800.0]).unwrap();
        let b = tape.sigmoid_bce(z, &[1, 0]).unwrap();
        assert!(tape.values(b).iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!(tape.values(b)[0] < 1e-300);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        let h = 1e-6;
        for (z0, d) in [(0.3, 0u8), (-1.2, 1u8), (2.5, 0u8)] {
            let eval = |z: f64| -> f64 {
                let mut tape = Tape::new();
                let zt = tape.leaf(1, 1, vec![z]).unwrap();
                let b = tape.sigmoid_bce(zt, &[d]).unwrap();
                tape.values(b)[0]
            };
            let numeric = (eval(z0 + h) - eval(z0 - h)) / (2.0 * h);
            let mut tape = Tape::new();
            let zt = tape.leaf(1, 1, vec![z0]).unwrap();
            let b = tape.sigmoid_bce(zt, &[d]).unwrap();
            let s = tape.sum(b).unwrap();
            tape.backward(s).unwrap();
            let analytic = tape.grad(zt)[0];
            assert!(
                (numeric - analytic).abs() < 1e-6,
                "z={z0} d={d}: {numeric} vs {analytic}"
            );
            assert!((analytic - (sigmoid(z0) - f64::from(d))).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_rejects_non_scalar_loss() {
        let mut tape = Tape::new();
        let x = tape.leaf(2, 2, vec![1.0; 4]).unwrap();
        assert!(matches!(
            tape.backward(x),
            Err(Error::NonScalarLoss { rows: 2, cols: 2 })
        ));
    }

    #[test]
    fn backward_twice_recomputes_instead_of_accumulating() {
        let mut tape = Tape::new();
        let x = tape.leaf(1, 1, vec![3.0]).unwrap();
        let y = tape.scale(x, 2.0);
        tape.backward(y).unwrap();
        let first = tape.grad(x).to_vec();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x), first.as_slice());
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.leaf(1, 2, vec![1.0, 2.0]).unwrap();
        let c = tape.constant(2, 1, vec![3.0, 4.0]).unwrap();
        let y = tape.matmul(x, c).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(c), &[0.0, 0.0]);
        assert_eq!(tape.grad(x), &[3.0, 4.0]);
    }

    #[test]
    fn gradient_of_sum_equals_sum_of_gradients() {
        let build = |which: u8| -> (f64, Vec<f64>) {
            let mut tape = Tape::new();
            let x = tape.leaf(1, 2, vec![0.4, -0.7]).unwrap();
            let w = tape.leaf(2, 1, vec![1.5, -0.5]).unwrap();
            let a = tape.matmul(x, w).unwrap();
            let r = tape.relu(x);
            let ones = tape.constant(2, 1, vec![1.0, 1.0]).unwrap();
            let b = tape.matmul(r, ones).unwrap();
            let loss = match which {
                0 => a,
                1 => b,
                _ => tape.add(a, b).unwrap(),
            };
            tape.backward(loss).unwrap();
            (tape.scalar(loss), tape.grad(x).to_vec())
        };
        let (la, ga) = build(0);
        let (lb, gb) = build(1);
        let (lsum, gsum) = build(2);
        assert!((lsum - (la + lb)).abs() < 1e-15);
        for i in 0..2 {
            assert!((gsum[i] - (ga[i] + gb[i])).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_plus_ce_matches_finite_differences() {
        // 2x2 network checked against central differences: max relative
        // error below 1e-6.
        let x_data = vec![0.5, -1.0, 0.25, 0.75];
        let labels = [1usize, 0];
        let weights = [1.0, 1.0];
        let w0 = vec![0.3, -0.2, 0.1, 0.4];
        let b0 = vec![0.05, -0.05];

        let eval = |w: &[f64], b: &[f64]| -> f64 {
            let mut tape = Tape::new();
            let x = tape.constant(2, 2, x_data.clone()).unwrap();
            let wt = tape.leaf(2, 2, w.to_vec()).unwrap();
            let bt = tape.leaf(1, 2, b.to_vec()).unwrap();
            let logits = tape.linear(x, wt, bt).unwrap();
            let ce = tape.softmax_cross_entropy(logits, &labels).unwrap();
            let loss = tape.weighted_sum(ce, &weights).unwrap();
            tape.scalar(loss)
        };

        let mut tape = Tape::new();
        let x = tape.constant(2, 2, x_data.clone()).unwrap();
        let wt = tape.leaf(2, 2, w0.clone()).unwrap();
        let bt = tape.leaf(1, 2, b0.clone()).unwrap();
        let logits = tape.linear(x, wt, bt).unwrap();
        let ce = tape.softmax_cross_entropy(logits, &labels).unwrap();
        let loss = tape.weighted_sum(ce, &weights).unwrap();
        tape.backward(loss).unwrap();

        let h = 1e-6;
        for i in 0..4 {
            let mut wp = w0.clone();
            let mut wm = w0.clone();
            wp[i] += h;
            wm[i] -= h;
            let numeric = (eval(&wp, &b0) - eval(&wm, &b0)) / (2.0 * h);
            let analytic = tape.grad(wt)[i];
            let rel = (numeric - analytic).abs() / analytic.abs().max(1e-8);
            assert!(rel < 1e-6, "w[{i}]: {numeric} vs {analytic}");
        }
        for i in 0..2 {
            let mut bp = b0.clone();
            let mut bm = b0.clone();
            bp[i] += h;
            bm[i] -= h;
            let numeric = (eval(&w0, &bp) - eval(&w0, &bm)) / (2.0 * h);
            let analytic = tape.grad(bt)[i];
            let rel = (numeric - analytic).abs() / analytic.abs().max(1e-8);
            assert!(rel < 1e-6, "b[{i}]: {numeric} vs {analytic}");
        }
    }
}
