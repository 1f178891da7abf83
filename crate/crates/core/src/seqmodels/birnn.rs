use rand::seq::SliceRandom;
use rand::Rng;

use super::SegmentLabel;
use crate::archive::Archive;
use crate::error::{Error, Result};
use crate::numerics::{argmax, clip_grad_norm, seeded_rng, softmax, Matrix, OptimizerState};

pub const DEFAULT_HIDDEN: usize = 256;
pub const DEFAULT_STRIDE: usize = 64;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// One LSTM direction. Gate blocks are stacked in the order input, forget,
/// candidate, output.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCell {
    pub wx: Matrix,
    pub wh: Matrix,
    pub b: Vec<f64>,
}

impl LstmCell {
    fn xavier(input: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut init = |rows: usize, cols: usize| {
            let limit = (6.0 / (rows / 4 + cols) as f64).sqrt();
            let data = (0..rows * cols).map(|_| rng.random_range(-limit..=limit)).collect();
            Matrix::from_vec(rows, cols, data).expect("finite init")
        };
        let wx = init(4 * hidden, input);
        let wh = init(4 * hidden, hidden);
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].fill(1.0);
        LstmCell { wx, wh, b }
    }

    fn zeros(input: usize, hidden: usize) -> Self {
        LstmCell {
            wx: Matrix::zeros(4 * hidden, input),
            wh: Matrix::zeros(4 * hidden, hidden),
            b: vec![0.0; 4 * hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.wh.cols()
    }

    fn slices(&self) -> [&[f64]; 3] {
        [self.wx.data(), self.wh.data(), &self.b]
    }

    fn slices_mut(&mut self) -> [&mut [f64]; 3] {
        [self.wx.data_mut(), self.wh.data_mut(), &mut self.b]
    }
}

/// Per-step activations kept for backpropagation.
struct StepCache {
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

fn run_cell<R: AsRef<[f64]>>(cell: &LstmCell, xs: &[R], order: impl Iterator<Item = usize>) -> Vec<(usize, StepCache)> {
    let h_dim = cell.hidden();
    let mut h = vec![0.0; h_dim];
    let mut c = vec![0.0; h_dim];
    let mut z = vec![0.0; 4 * h_dim];
    let mut zh = vec![0.0; 4 * h_dim];
    let mut out = Vec::with_capacity(xs.len());
    for t in order {
        cell.wx.matvec_into(xs[t].as_ref(), &mut z);
        cell.wh.matvec_into(&h, &mut zh);
        for k in 0..4 * h_dim {
            z[k] += zh[k] + cell.b[k];
        }
        let i: Vec<f64> = z[..h_dim].iter().map(|&v| sigmoid(v)).collect();
        let f: Vec<f64> = z[h_dim..2 * h_dim].iter().map(|&v| sigmoid(v)).collect();
        let g: Vec<f64> = z[2 * h_dim..3 * h_dim].iter().map(|v| v.tanh()).collect();
        let o: Vec<f64> = z[3 * h_dim..].iter().map(|&v| sigmoid(v)).collect();
        for k in 0..h_dim {
            c[k] = f[k] * c[k] + i[k] * g[k];
        }
        let tanh_c: Vec<f64> = c.iter().map(|v| v.tanh()).collect();
        h = o.iter().zip(&tanh_c).map(|(o, tc)| o * tc).collect();
        out.push((
            t,
            StepCache {
                i,
                f,
                g,
                o,
                c: c.clone(),
                tanh_c,
                h: h.clone(),
            },
        ));
    }
    out
}

/// Backpropagates `dh[t]` (loss gradient at each output position) through one
/// direction, accumulating into `grad`.
fn backprop_cell<R: AsRef<[f64]>>(
    cell: &LstmCell,
    xs: &[R],
    steps: &[(usize, StepCache)],
    dh_out: &[Vec<f64>],
    grad: &mut LstmCell,
) {
    let h_dim = cell.hidden();
    let mut dh_next = vec![0.0; h_dim];
    let mut dc_next = vec![0.0; h_dim];
    let mut dz = vec![0.0; 4 * h_dim];
    let zeros = vec![0.0; h_dim];
    for n in (0..steps.len()).rev() {
        let (t, s) = &steps[n];
        let (h_prev, c_prev) = if n > 0 {
            (&steps[n - 1].1.h, &steps[n - 1].1.c)
        } else {
            (&zeros, &zeros)
        };
        for k in 0..h_dim {
            let dh = dh_out[*t][k] + dh_next[k];
            let d_o = dh * s.tanh_c[k];
            let dc = dc_next[k] + dh * s.o[k] * (1.0 - s.tanh_c[k] * s.tanh_c[k]);
            dz[k] = dc * s.g[k] * s.i[k] * (1.0 - s.i[k]);
            dz[h_dim + k] = dc * c_prev[k] * s.f[k] * (1.0 - s.f[k]);
            dz[2 * h_dim + k] = dc * s.i[k] * (1.0 - s.g[k] * s.g[k]);
            dz[3 * h_dim + k] = d_o * s.o[k] * (1.0 - s.o[k]);
            dc_next[k] = dc * s.f[k];
        }
        grad.wx.add_outer(1.0, &dz, xs[*t].as_ref());
        grad.wh.add_outer(1.0, &dz, h_prev);
        for (gb, d) in grad.b.iter_mut().zip(&dz) {
            *gb += d;
        }
        dh_next.fill(0.0);
        cell.wh.matvec_t_acc(&dz, &mut dh_next);
    }
}

/// Bidirectional single-layer LSTM with a softmax read-out over the
/// concatenated hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct BiRnn {
    pub forward: LstmCell,
    pub backward: LstmCell,
    /// `C × 2H`; columns `0..H` read the forward state.
    pub out_w: Matrix,
    pub out_b: Vec<f64>,
    pub stride: usize,
}

impl BiRnn {
    pub fn new(input: usize, hidden: usize, classes: usize, stride: usize, seed: u64) -> Result<Self> {
        if input == 0 || hidden == 0 || classes == 0 || stride == 0 {
            return Err(Error::InvalidArgument("rnn dimensions and stride must be positive".into()));
        }
        let mut rng = seeded_rng(seed);
        let forward = LstmCell::xavier(input, hidden, &mut rng);
        let backward = LstmCell::xavier(input, hidden, &mut rng);
        let limit = (6.0 / (classes + 2 * hidden) as f64).sqrt();
        let data = (0..classes * 2 * hidden).map(|_| rng.random_range(-limit..=limit)).collect();
        Ok(BiRnn {
            forward,
            backward,
            out_w: Matrix::from_vec(classes, 2 * hidden, data)?,
            out_b: vec![0.0; classes],
            stride,
        })
    }

    fn zeros_like(&self) -> BiRnn {
        let (d, h) = (self.input_dim(), self.hidden());
        BiRnn {
            forward: LstmCell::zeros(d, h),
            backward: LstmCell::zeros(d, h),
            out_w: Matrix::zeros(self.classes(), 2 * h),
            out_b: vec![0.0; self.classes()],
            stride: self.stride,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.forward.wx.cols()
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden()
    }

    pub fn classes(&self) -> usize {
        self.out_b.len()
    }

    fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = self.forward.slices().into();
        v.extend(self.backward.slices());
        v.push(self.out_w.data());
        v.push(&self.out_b);
        v
    }

    fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = self.forward.slices_mut().into();
        v.extend(self.backward.slices_mut());
        v.push(self.out_w.data_mut());
        v.push(&mut self.out_b);
        v
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape("flat rnn parameter length"));
        }
        let mut rest = flat;
        for s in self.slices_mut() {
            let (head, tail) = rest.split_at(s.len());
            s.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    fn check_window<R: AsRef<[f64]>>(&self, xs: &[R]) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::Empty("rnn window"));
        }
        if let Some(x) = xs.iter().find(|x| x.as_ref().len() != self.input_dim()) {
            return Err(Error::shape(format!(
                "frame width {} differs from rnn input {}",
                x.as_ref().len(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn run<R: AsRef<[f64]>>(&self, xs: &[R]) -> (Vec<(usize, StepCache)>, Vec<(usize, StepCache)>, Vec<Vec<f64>>) {
        let t_len = xs.len();
        let fw = run_cell(&self.forward, xs, 0..t_len);
        let bw = run_cell(&self.backward, xs, (0..t_len).rev());
        let h = self.hidden();
        let mut probs = Vec::with_capacity(t_len);
        let mut joint = vec![0.0; 2 * h];
        let mut logits = vec![0.0; self.classes()];
        for t in 0..t_len {
            joint[..h].copy_from_slice(&fw[t].1.h);
            joint[h..].copy_from_slice(&bw[t_len - 1 - t].1.h);
            self.out_w.matvec_into(&joint, &mut logits);
            for (l, b) in logits.iter_mut().zip(&self.out_b) {
                *l += b;
            }
            probs.push(softmax(&logits));
        }
        (fw, bw, probs)
    }

    /// Per-frame class probabilities of one window.
    pub fn probabilities<R: AsRef<[f64]>>(&self, xs: &[R]) -> Result<Vec<Vec<f64>>> {
        self.check_window(xs)?;
        Ok(self.run(xs).2)
    }

    pub fn to_archive(&self) -> Archive {
        let mut a = Archive::new("birnn");
        a.set_meta("hidden", self.hidden());
        a.set_meta("classes", self.classes());
        a.set_meta("stride", self.stride);
        for (name, cell) in [("fwd", &self.forward), ("bwd", &self.backward)] {
            a.put(&format!("{name}.wx"), cell.wx.clone());
            a.put(&format!("{name}.wh"), cell.wh.clone());
            a.put_vec(&format!("{name}.b"), &cell.b);
        }
        a.put("out.w", self.out_w.clone());
        a.put_vec("out.b", &self.out_b);
        a
    }

    pub fn from_archive(a: &Archive) -> Result<Self> {
        a.expect_kind("birnn")?;
        let cell = |name: &str| -> Result<LstmCell> {
            Ok(LstmCell {
                wx: a.tensor(&format!("{name}.wx"))?.clone(),
                wh: a.tensor(&format!("{name}.wh"))?.clone(),
                b: a.vector(&format!("{name}.b"))?,
            })
        };
        let rnn = BiRnn {
            forward: cell("fwd")?,
            backward: cell("bwd")?,
            out_w: a.tensor("out.w")?.clone(),
            out_b: a.vector("out.b")?,
            stride: a.meta_parse("stride")?,
        };
        let (d, h, c) = (rnn.input_dim(), rnn.hidden(), rnn.classes());
        let cell_ok = |x: &LstmCell| {
            x.wx.rows() == 4 * h && x.wx.cols() == d && x.wh.rows() == 4 * h && x.wh.cols() == h && x.b.len() == 4 * h
        };
        if !cell_ok(&rnn.forward) || !cell_ok(&rnn.backward) || rnn.out_w.rows() != c || rnn.out_w.cols() != 2 * h {
            return Err(Error::ModelInvalid("rnn tensors have inconsistent shapes".into()));
        }
        Ok(rnn)
    }
}

/// Labels and max-probability confidences of one window.
pub fn rnn_predict<R: AsRef<[f64]>>(rnn: &BiRnn, window: &[R]) -> Result<(Vec<SegmentLabel>, Vec<f64>)> {
    let probs = rnn.probabilities(window)?;
    Ok(probs
        .iter()
        .map(|p| {
            let k = argmax(p);
            (SegmentLabel::from_index(k), p[k])
        })
        .unzip())
}

/// Predicts a whole sequence window by window (non-overlapping, `stride` frames each).
pub fn rnn_predict_sequence<R: AsRef<[f64]>>(rnn: &BiRnn, seq: &[R]) -> Result<(Vec<SegmentLabel>, Vec<f64>)> {
    let mut labels = Vec::with_capacity(seq.len());
    let mut conf = Vec::with_capacity(seq.len());
    for w in seq.chunks(rnn.stride) {
        let (l, c) = rnn_predict(rnn, w)?;
        labels.extend(l);
        conf.extend(c);
    }
    Ok((labels, conf))
}

/// Summed cross-entropy over the labeled frames of a window; gradients are
/// scaled by `weight` and accumulated into `grad`.
fn window_loss<R: AsRef<[f64]>>(
    rnn: &BiRnn,
    xs: &[R],
    labels: &[Option<SegmentLabel>],
    weight: f64,
    grad: &mut BiRnn,
) -> f64 {
    let (fw, bw, probs) = rnn.run(xs);
    let (t_len, h) = (xs.len(), rnn.hidden());
    let mut dh_f = vec![vec![0.0; h]; t_len];
    let mut dh_b = vec![vec![0.0; h]; t_len];
    let mut loss = 0.0;
    let mut joint = vec![0.0; 2 * h];
    let mut dj = vec![0.0; 2 * h];
    for t in 0..t_len {
        let Some(y) = labels[t] else { continue };
        let y = y.index();
        loss -= probs[t][y].max(f64::MIN_POSITIVE).ln();
        let mut dlogit = probs[t].clone();
        dlogit[y] -= 1.0;
        dlogit.iter_mut().for_each(|d| *d *= weight);
        joint[..h].copy_from_slice(&fw[t].1.h);
        joint[h..].copy_from_slice(&bw[t_len - 1 - t].1.h);
        grad.out_w.add_outer(1.0, &dlogit, &joint);
        for (g, d) in grad.out_b.iter_mut().zip(&dlogit) {
            *g += d;
        }
        dj.fill(0.0);
        rnn.out_w.matvec_t_acc(&dlogit, &mut dj);
        dh_f[t].copy_from_slice(&dj[..h]);
        dh_b[t].copy_from_slice(&dj[h..]);
    }
    backprop_cell(&rnn.forward, xs, &fw, &dh_f, &mut grad.forward);
    backprop_cell(&rnn.backward, xs, &bw, &dh_b, &mut grad.backward);
    loss
}

/// Mean cross-entropy over all labeled frames of `windows`, with gradient
/// with respect to the flat parameters.
pub fn rnn_loss<R: AsRef<[f64]>>(rnn: &BiRnn, windows: &[(&[R], &[Option<SegmentLabel>])]) -> Result<(f64, Vec<f64>)> {
    let n: usize = windows.iter().map(|(_, l)| l.iter().flatten().count()).sum();
    if n == 0 {
        return Err(Error::DegenerateBatch("no labeled frames in rnn batch".into()));
    }
    let mut grad = rnn.zeros_like();
    let mut loss = 0.0;
    for (xs, labels) in windows {
        rnn.check_window(xs)?;
        if labels.len() != xs.len() {
            return Err(Error::shape("one label slot per frame required"));
        }
        if let Some(l) = labels.iter().flatten().find(|l| l.index() >= rnn.classes()) {
            return Err(Error::InvalidArgument(format!("label {} exceeds {} classes", l.get(), rnn.classes())));
        }
        loss += window_loss(rnn, xs, labels, 1.0 / n as f64, &mut grad);
    }
    Ok((loss / n as f64, grad.flatten()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RnnConfig {
    pub hidden: usize,
    pub stride: usize,
    pub learning_rate: f64,
    /// Windows per optimizer step.
    pub batch_windows: usize,
    pub max_grad_norm: f64,
}

impl Default for RnnConfig {
    fn default() -> Self {
        RnnConfig {
            hidden: DEFAULT_HIDDEN,
            stride: DEFAULT_STRIDE,
            learning_rate: 1e-3,
            batch_windows: 8,
            max_grad_norm: 5.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RnnTraining {
    pub model: BiRnn,
    /// Mean batch loss per optimizer step.
    pub loss_trace: Vec<f64>,
}

/// Cross-entropy training with Adam over non-overlapping `stride`-frame
/// windows of each sequence. Unlabeled frames contribute no loss.
pub fn rnn_train<R: AsRef<[f64]>>(
    data: &[(Vec<R>, Vec<Option<SegmentLabel>>)],
    classes: usize,
    config: &RnnConfig,
    epochs: usize,
    seed: u64,
) -> Result<RnnTraining> {
    let dim = data
        .iter()
        .flat_map(|(s, _)| s.first())
        .next()
        .ok_or(Error::Empty("rnn training set"))?
        .as_ref()
        .len();
    let mut windows: Vec<(&[R], &[Option<SegmentLabel>])> = Vec::new();
    for (seq, labels) in data {
        if seq.len() != labels.len() {
            return Err(Error::shape("one label slot per frame required"));
        }
        for (xs, ls) in seq.chunks(config.stride.max(1)).zip(labels.chunks(config.stride.max(1))) {
            if ls.iter().any(Option::is_some) {
                windows.push((xs, ls));
            }
        }
    }
    if windows.is_empty() {
        return Err(Error::DegenerateDataset("no labeled frames for rnn training".into()));
    }
    let mut model = BiRnn::new(dim, config.hidden, classes, config.stride, seed)?;
    let mut theta = model.flatten();
    let mut opt = OptimizerState::adam(theta.len(), config.learning_rate);
    let mut rng = seeded_rng(seed ^ 0x5851_f42d_4c95_7f2d);
    let mut order: Vec<usize> = (0..windows.len()).collect();
    let mut trace = Vec::new();
    for _ in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(config.batch_windows.max(1)) {
            let sel: Vec<_> = batch.iter().map(|&i| windows[i]).collect();
            let (loss, mut grad) = rnn_loss(&model, &sel)?;
            clip_grad_norm(&mut grad, config.max_grad_norm);
            opt.update(&mut theta, &grad)?;
            model.assign_flat(&theta)?;
            trace.push(loss);
        }
    }
    Ok(RnnTraining { model, loss_trace: trace })
}
