//! Small MLP classifier and bootstrap ensemble used to score unlabeled items
//! by predictive uncertainty.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Network shape: one sigmoid hidden layer, softmax output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct MlpSpec {
    pub inputs: usize,
    pub hidden: usize,
    pub classes: usize,
}

impl MlpSpec {
    pub fn new(inputs: usize, hidden: usize, classes: usize) -> Result<Self> {
        if inputs == 0 || hidden == 0 || classes < 2 {
            return Err(Error::InvalidParameter(
                "need inputs >= 1, hidden >= 1, classes >= 2".into(),
            ));
        }
        Ok(Self {
            inputs,
            hidden,
            classes,
        })
    }
}

/// Full-batch gradient-descent training configuration.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Resample the training set with replacement per ensemble member.
    pub bootstrap: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.5,
            epochs: 500,
            bootstrap: true,
        }
    }
}

/// One-hidden-layer MLP: sigmoid hidden activations, softmax output,
/// trained on mean cross-entropy by full-batch gradient descent.
#[derive(Debug, Clone)]
pub struct Mlp<S: Scalar> {
    spec: MlpSpec,
    w1: Array2<S>,
    b1: Array1<S>,
    w2: Array2<S>,
    b2: Array1<S>,
}

fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn xavier_uniform<S: Scalar>(
    rows: usize,
    cols: usize,
    rng: &mut ChaCha8Rng,
) -> Array2<S> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| {
        S::of(rng.random_range(-limit..limit))
    })
}

impl<S: Scalar> Mlp<S> {
    /// Xavier-uniform initialization, zero biases.
    pub fn init(spec: MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            spec,
            w1: xavier_uniform(spec.inputs, spec.hidden, &mut rng),
            b1: Array1::zeros(spec.hidden),
            w2: xavier_uniform(spec.hidden, spec.classes, &mut rng),
            b2: Array1::zeros(spec.classes),
        }
    }

    pub fn spec(&self) -> MlpSpec {
        self.spec
    }

    /// Class probabilities for each row of `x`.
    pub fn predict_proba(&self, x: &ArrayView2<S>) -> Result<Array2<S>> {
        if x.ncols() != self.spec.inputs {
            return Err(Error::InvalidInput(format!(
                "expected {} features, got {}",
                self.spec.inputs,
                x.ncols()
            )));
        }
        let hidden = (x.dot(&self.w1) + &self.b1).mapv(sigmoid);
        let mut logits = hidden.dot(&self.w2) + &self.b2;
        for mut row in logits.rows_mut() {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut z = S::zero();
            for t in row.iter_mut() {
                *t = (*t - max).exp();
                z += *t;
            }
            for t in row.iter_mut() {
                *t /= z;
            }
        }
        Ok(logits)
    }

    /// Mean cross-entropy of integer labels `y` under the current weights.
    pub fn loss(&self, x: &ArrayView2<S>, y: &[usize]) -> Result<S> {
        let p = self.predict_proba(x)?;
        let mut acc = S::zero();
        for (r, &label) in y.iter().enumerate() {
            if label >= self.spec.classes {
                return Err(Error::InvalidInput(format!(
                    "label {label} out of range for {} classes",
                    self.spec.classes
                )));
            }
            acc -= p[[r, label]].max(S::of(1e-300)).ln();
        }
        Ok(acc / S::of(y.len().max(1) as f64))
    }

    /// One full-batch gradient-descent step; returns the pre-step loss.
    pub fn train_epoch(&mut self, x: &ArrayView2<S>, y: &[usize], lr: f64) -> Result<S> {
        let mut ws = TrainWorkspace::new(x.nrows(), self.spec);
        self.train_epoch_with(x, y, lr, &mut ws, true)
    }

    /// `train_epoch` against a caller-held scratch buffer; the tight loops are
    /// written out by hand because the layers are tiny (a handful of hidden
    /// units) and matrix-library dispatch dominates the arithmetic.
    fn train_epoch_with(
        &mut self,
        x: &ArrayView2<S>,
        y: &[usize],
        lr: f64,
        ws: &mut TrainWorkspace<S>,
        want_loss: bool,
    ) -> Result<S> {
        let n = x.nrows();
        if n == 0 || y.len() != n {
            return Err(Error::InvalidInput(
                "labels must match a non-empty feature matrix".into(),
            ));
        }
        let (d, h, c) = (self.spec.inputs, self.spec.hidden, self.spec.classes);
        if let Some(&bad) = y.iter().find(|&&l| l >= c) {
            return Err(Error::InvalidInput(format!(
                "label {bad} out of range for {c} classes"
            )));
        }
        debug_assert_eq!(ws.hidden.len(), n * h);
        let w1 = self.w1.as_slice_mut().expect("w1 contiguous");
        let b1 = self.b1.as_slice_mut().expect("b1 contiguous");
        let w2 = self.w2.as_slice_mut().expect("w2 contiguous");
        let b2 = self.b2.as_slice_mut().expect("b2 contiguous");

        let mut loss = S::zero();
        let inv_n = S::of(1.0 / n as f64);
        ws.gw1.iter_mut().for_each(|g| *g = S::zero());
        ws.gb1.iter_mut().for_each(|g| *g = S::zero());
        ws.gw2.iter_mut().for_each(|g| *g = S::zero());
        ws.gb2.iter_mut().for_each(|g| *g = S::zero());

        for r in 0..n {
            let row = x.row(r);
            let hid = &mut ws.hidden[r * h..(r + 1) * h];
            for (j, hj) in hid.iter_mut().enumerate() {
                let mut acc = b1[j];
                for i in 0..d {
                    acc += row[i] * w1[i * h + j];
                }
                *hj = sigmoid(acc);
            }
            // softmax over the logits, then delta = (p - onehot) / n
            let delta = &mut ws.delta[..c];
            for (t, dt) in delta.iter_mut().enumerate() {
                let mut acc = b2[t];
                for (j, &hj) in hid.iter().enumerate() {
                    acc += hj * w2[j * c + t];
                }
                *dt = acc;
            }
            if c == 2 {
                // two-class softmax is a single sigmoid of the logit gap
                let p1 = sigmoid(delta[1] - delta[0]);
                delta[0] = S::one() - p1;
                delta[1] = p1;
            } else {
                let max = delta.iter().copied().fold(S::neg_infinity(), S::max);
                let mut z = S::zero();
                for dt in delta.iter_mut() {
                    *dt = (*dt - max).exp();
                    z += *dt;
                }
                for dt in delta.iter_mut() {
                    *dt /= z;
                }
            }
            if want_loss {
                loss -= delta[y[r]].max(S::of(1e-300)).ln();
            }
            delta[y[r]] -= S::one();
            for dt in delta.iter_mut() {
                *dt *= inv_n;
            }
            for (j, &hj) in hid.iter().enumerate() {
                let mut back = S::zero();
                for t in 0..c {
                    ws.gw2[j * c + t] += hj * delta[t];
                    back += delta[t] * w2[j * c + t];
                }
                back *= hj * (S::one() - hj);
                for i in 0..d {
                    ws.gw1[i * h + j] += row[i] * back;
                }
                ws.gb1[j] += back;
            }
            for t in 0..c {
                ws.gb2[t] += delta[t];
            }
        }

        let lr_s = S::of(lr);
        for (w, &g) in w1.iter_mut().zip(ws.gw1.iter()) {
            *w -= lr_s * g;
        }
        for (w, &g) in b1.iter_mut().zip(ws.gb1.iter()) {
            *w -= lr_s * g;
        }
        for (w, &g) in w2.iter_mut().zip(ws.gw2.iter()) {
            *w -= lr_s * g;
        }
        for (w, &g) in b2.iter_mut().zip(ws.gb2.iter()) {
            *w -= lr_s * g;
        }
        Ok(loss * inv_n)
    }

    pub fn fit(&mut self, x: &ArrayView2<S>, y: &[usize], cfg: &TrainConfig) -> Result<()> {
        let mut ws = TrainWorkspace::new(x.nrows(), self.spec);
        for _ in 0..cfg.epochs {
            self.train_epoch_with(x, y, cfg.learning_rate, &mut ws, false)?;
        }
        Ok(())
    }
}

/// Scratch buffers reused across training epochs.
struct TrainWorkspace<S> {
    hidden: Vec<S>,
    delta: Vec<S>,
    gw1: Vec<S>,
    gb1: Vec<S>,
    gw2: Vec<S>,
    gb2: Vec<S>,
}

impl<S: Scalar> TrainWorkspace<S> {
    fn new(n: usize, spec: MlpSpec) -> Self {
        Self {
            hidden: vec![S::zero(); n * spec.hidden],
            delta: vec![S::zero(); spec.classes],
            gw1: vec![S::zero(); spec.inputs * spec.hidden],
            gb1: vec![S::zero(); spec.hidden],
            gw2: vec![S::zero(); spec.hidden * spec.classes],
            gb2: vec![S::zero(); spec.classes],
        }
    }
}

/// Bootstrap ensemble of identically shaped MLPs.
#[derive(Debug, Clone)]
pub struct Ensemble<S: Scalar> {
    members: Vec<Mlp<S>>,
    /// All training labels were a single class; predictions are near-constant
    /// and uncertainties uninformative.
    degenerate_labels: bool,
}

impl<S: Scalar> Ensemble<S> {
    pub fn members(&self) -> &[Mlp<S>] {
        &self.members
    }

    pub fn degenerate_labels(&self) -> bool {
        self.degenerate_labels
    }

    /// Row-stochastic mean of member class probabilities.
    pub fn predict_proba(&self, x: &ArrayView2<S>) -> Result<Array2<S>> {
        let mut acc = self.members[0].predict_proba(x)?;
        for m in &self.members[1..] {
            acc += &m.predict_proba(x)?;
        }
        let inv = S::of(1.0 / self.members.len() as f64);
        acc.mapv_inplace(|t| t * inv);
        Ok(acc)
    }

    /// Entropy of the ensemble-mean class distribution per row of `x`,
    /// with `0 ln 0 = 0`.
    pub fn uncertainty(&self, x: &ArrayView2<S>) -> Result<Array1<S>> {
        let p = self.predict_proba(x)?;
        Ok(entropy_rows(&p.view()))
    }

    /// Hard class predictions (argmax of the mean distribution).
    pub fn predict(&self, x: &ArrayView2<S>) -> Result<Vec<usize>> {
        let p = self.predict_proba(x)?;
        Ok(p.rows()
            .into_iter()
            .map(|row| argmax_row(&row))
            .collect())
    }
}

fn argmax_row<S: Scalar>(row: &ArrayView1<S>) -> usize {
    let mut best = 0;
    for i in 1..row.len() {
        if row[i] > row[best] {
            best = i;
        }
    }
    best
}

/// Shannon entropy of each row of a row-stochastic matrix, `0 ln 0 = 0`.
pub fn entropy_rows<S: Scalar>(p: &ArrayView2<S>) -> Array1<S> {
    Array1::from_iter(p.rows().into_iter().map(|row| {
        let mut h = S::zero();
        for &x in row.iter() {
            if x > S::zero() {
                h -= x * x.ln();
            }
        }
        h
    }))
}

/// Train `n_members` MLPs, each from its own seed-derived initialization and
/// (optionally) its own bootstrap resample of `(x, y)`.
pub fn train_ensemble<S: Scalar>(
    spec: MlpSpec,
    x: &ArrayView2<S>,
    y: &[usize],
    n_members: usize,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Ensemble<S>> {
    let n = x.nrows();
    if n == 0 || y.len() != n {
        return Err(Error::InvalidInput(
            "labels must match a non-empty feature matrix".into(),
        ));
    }
    if n_members == 0 {
        return Err(Error::InvalidParameter("need at least one member".into()));
    }
    let degenerate_labels = y.windows(2).all(|w| w[0] == w[1]);
    if degenerate_labels {
        log::warn!("training labels contain a single class; uncertainty will be uninformative");
    }
    let mut members = Vec::with_capacity(n_members);
    for m in 0..n_members {
        let member_seed = seed
            .wrapping_mul(0x9e37_79b9_7f4a_7c15)
            .wrapping_add(m as u64);
        let mut net = Mlp::init(spec, member_seed);
        if cfg.bootstrap {
            let mut rng = ChaCha8Rng::seed_from_u64(member_seed ^ 0x5bd1_e995);
            let mut bx = Array2::<S>::zeros((n, x.ncols()));
            let mut by = vec![0usize; n];
            for r in 0..n {
                let src = rng.random_range(0..n);
                bx.row_mut(r).assign(&x.row(src));
                by[r] = y[src];
            }
            net.fit(&bx.view(), &by, cfg)?;
        } else {
            net.fit(x, y, cfg)?;
        }
        members.push(net);
    }
    Ok(Ensemble {
        members,
        degenerate_labels,
    })
}
