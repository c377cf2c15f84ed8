use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;

use super::sparse::{mean_aggregator, normalize_adjacency, SparseOperator};
use super::{Activation, Backbone, NodeClassifier, PreparedClassifier};
use crate::error::{Error, Result};
use crate::graph::{AttributeMatrix, Graph};
use crate::prediction::Predictions;
use crate::smoothing::AttributeNoise;

/// Graph operator of one backbone together with its transpose.
#[derive(Clone, Debug)]
pub struct Propagation {
    pub backbone: Backbone,
    op: SparseOperator,
    op_t: SparseOperator,
}

impl Propagation {
    pub fn new(backbone: Backbone, g: &Graph) -> Self {
        match backbone {
            Backbone::Gcn => {
                let op = normalize_adjacency(g);
                Propagation {
                    backbone,
                    op_t: op.clone(),
                    op,
                }
            }
            Backbone::Sage => {
                let op = mean_aggregator(g);
                Propagation {
                    backbone,
                    op_t: op.transpose(),
                    op,
                }
            }
        }
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.op
    }

    pub fn num_nodes(&self) -> usize {
        self.op.dim()
    }
}

/// Two-layer model. Each layer computes `P·(H·W) + H·W_self + b`, where `P`
/// is the backbone operator and `W_self` exists only for the mean-aggregator
/// backbone.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnModel {
    pub backbone: Backbone,
    pub activation: Activation,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w1_self: Option<Array2<f64>>,
    pub w2_self: Option<Array2<f64>>,
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    pub z1: Array2<f64>,
    /// Hidden activations after dropout.
    pub h: Array2<f64>,
    /// Inverted-dropout multipliers, `None` at inference.
    pub dropout_mask: Option<Array2<f64>>,
    pub logits: Array2<f64>,
}

/// Gradients laid out like [`GcnModel`], plus the input gradient.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
    pub w1_self: Option<Array2<f64>>,
    pub w2_self: Option<Array2<f64>>,
    pub x: Array2<f64>,
}

impl Gradients {
    /// Euclidean norm over the parameter gradients (input gradient excluded).
    pub fn parameter_norm(&self) -> f64 {
        let mut sq = self.w1.mapv(|v| v * v).sum()
            + self.b1.mapv(|v| v * v).sum()
            + self.w2.mapv(|v| v * v).sum()
            + self.b2.mapv(|v| v * v).sum();
        for w in [&self.w1_self, &self.w2_self].into_iter().flatten() {
            sq += w.mapv(|v| v * v).sum();
        }
        sq.sqrt()
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-limit..limit))
}

fn all_finite<'a>(mut it: impl Iterator<Item = &'a f64>) -> bool {
    it.all(|v| v.is_finite())
}

impl GcnModel {
    /// Glorot-uniform weights and zero biases.
    pub fn init(
        backbone: Backbone,
        activation: Activation,
        d: usize,
        hidden: usize,
        classes: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w1 = glorot(d, hidden, rng);
        let w2 = glorot(hidden, classes, rng);
        let (w1_self, w2_self) = match backbone {
            Backbone::Gcn => (None, None),
            Backbone::Sage => (
                Some(glorot(d, hidden, rng)),
                Some(glorot(hidden, classes, rng)),
            ),
        };
        GcnModel {
            backbone,
            activation,
            w1,
            b1: Array1::zeros(hidden),
            w2,
            b2: Array1::zeros(classes),
            w1_self,
            w2_self,
        }
    }

    /// All-zero parameters of the given shape.
    pub fn zeros(backbone: Backbone, d: usize, hidden: usize, classes: usize) -> Self {
        let sage = backbone == Backbone::Sage;
        GcnModel {
            backbone,
            activation: Activation::Relu,
            w1: Array2::zeros((d, hidden)),
            b1: Array1::zeros(hidden),
            w2: Array2::zeros((hidden, classes)),
            b2: Array1::zeros(classes),
            w1_self: sage.then(|| Array2::zeros((d, hidden))),
            w2_self: sage.then(|| Array2::zeros((hidden, classes))),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.ncols()
    }

    pub fn classes(&self) -> usize {
        self.w2.ncols()
    }

    /// Checks internal shape consistency and finiteness.
    pub fn validate(&self) -> Result<()> {
        let (d, h, c) = (self.input_dim(), self.hidden(), self.classes());
        let sage = self.backbone == Backbone::Sage;
        let ok = self.b1.len() == h
            && self.w2.nrows() == h
            && self.b2.len() == c
            && self.w1_self.as_ref().map(|w| w.dim()) == sage.then_some((d, h))
            && self.w2_self.as_ref().map(|w| w.dim()) == sage.then_some((h, c));
        if !ok {
            return Err(Error::Shape(format!(
                "inconsistent {} parameter shapes",
                self.backbone
            )));
        }
        let finite = all_finite(self.w1.iter())
            && all_finite(self.b1.iter())
            && all_finite(self.w2.iter())
            && all_finite(self.b2.iter())
            && [&self.w1_self, &self.w2_self]
                .into_iter()
                .flatten()
                .all(|w| all_finite(w.iter()));
        if !finite {
            return Err(Error::Data("model has non-finite parameters".into()));
        }
        Ok(())
    }

    fn check_inputs(&self, prop: &Propagation, x: &ArrayView2<'_, f64>) -> Result<()> {
        if prop.backbone != self.backbone {
            return Err(Error::Shape(format!(
                "{} model given a {} operator",
                self.backbone, prop.backbone
            )));
        }
        if x.nrows() != prop.num_nodes() {
            return Err(Error::Shape(format!(
                "{} attribute rows for {} nodes",
                x.nrows(),
                prop.num_nodes()
            )));
        }
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "attribute width {} but model expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    /// Pre-activations and logits; `dropout_mask` multiplies the hidden layer.
    pub fn forward_cached(
        &self,
        prop: &Propagation,
        x: &ArrayView2<'_, f64>,
        dropout_mask: Option<Array2<f64>>,
    ) -> Result<ForwardCache> {
        self.check_inputs(prop, x)?;
        let mut z1 = prop.op.matmul(&x.dot(&self.w1).view());
        if let Some(ws) = &self.w1_self {
            z1 += &x.dot(ws);
        }
        z1 += &self.b1;
        let mut h = z1.mapv(|v| self.activation.apply(v));
        if let Some(mask) = &dropout_mask {
            h *= mask;
        }
        let mut logits = prop.op.matmul(&h.dot(&self.w2).view());
        if let Some(ws) = &self.w2_self {
            logits += &h.dot(ws);
        }
        logits += &self.b2;
        Ok(ForwardCache {
            z1,
            h,
            dropout_mask,
            logits,
        })
    }

    /// Inference logits, `n × C`.
    pub fn forward(&self, prop: &Propagation, x: &AttributeMatrix) -> Result<Array2<f64>> {
        Ok(self.forward_cached(prop, &x.0.view(), None)?.logits)
    }

    /// Backpropagates an arbitrary upstream gradient `∂L/∂logits`.
    pub fn backward(
        &self,
        prop: &Propagation,
        x: &ArrayView2<'_, f64>,
        cache: &ForwardCache,
        dlogits: &Array2<f64>,
    ) -> Gradients {
        let b2 = dlogits.sum_axis(Axis(0));
        let g2 = prop.op_t.matmul(&dlogits.view());
        let w2 = cache.h.t().dot(&g2);
        let mut dh = g2.dot(&self.w2.t());
        let w2_self = self.w2_self.as_ref().map(|ws| {
            dh += &dlogits.dot(&ws.t());
            cache.h.t().dot(dlogits)
        });
        if let Some(mask) = &cache.dropout_mask {
            dh *= mask;
        }
        let act = self.activation;
        let dz1 = ndarray::Zip::from(&dh)
            .and(&cache.z1)
            .map_collect(|&g, &z| g * act.derivative(z));
        let b1 = dz1.sum_axis(Axis(0));
        let g1 = prop.op_t.matmul(&dz1.view());
        let w1 = x.t().dot(&g1);
        let mut dx = g1.dot(&self.w1.t());
        let w1_self = self.w1_self.as_ref().map(|ws| {
            dx += &dz1.dot(&ws.t());
            x.t().dot(&dz1)
        });
        Gradients {
            w1,
            b1,
            w2,
            b2,
            w1_self,
            w2_self,
            x: dx,
        }
    }

    /// Mean softmax cross-entropy over `nodes` and its gradients.
    pub fn gradients(
        &self,
        prop: &Propagation,
        x: &AttributeMatrix,
        y: &[u8],
        nodes: &[usize],
    ) -> Result<(f64, Gradients)> {
        let cache = self.forward_cached(prop, &x.0.view(), None)?;
        let (loss, dlogits) = super::train::cross_entropy(&cache.logits, y, nodes)?;
        Ok((loss, self.backward(prop, &x.0.view(), &cache, &dlogits)))
    }

    /// Hard predictions on `(g, x)`, or a shape error.
    pub fn try_predict(&self, g: &Graph, x: &AttributeMatrix) -> Result<Predictions> {
        let prop = Propagation::new(self.backbone, g);
        Ok(Predictions::from_logits(&self.forward(&prop, x)?))
    }

    /// Prepares fast inference under attribute noise on a fixed structure.
    pub fn noisy_predictor(&self, g: &Graph, x: &AttributeMatrix) -> Result<NoisyPredictor<'_>> {
        let prop = Propagation::new(self.backbone, g);
        let cache = self.forward_cached(&prop, &x.0.view(), None)?;
        Ok(NoisyPredictor {
            model: self,
            prop,
            z1: cache.z1,
            h: cache.h,
            logits: cache.logits,
        })
    }
}

impl NodeClassifier for GcnModel {
    /// Panics on shape mismatch; use [`GcnModel::try_predict`] to handle it.
    fn predict(&self, g: &Graph, x: &AttributeMatrix) -> Predictions {
        self.try_predict(g, x)
            .expect("model and inputs disagree in shape")
    }

    fn prepare<'a>(
        &'a self,
        g: &Graph,
        x: &'a AttributeMatrix,
    ) -> Result<Box<dyn PreparedClassifier + 'a>> {
        Ok(Box::new(self.noisy_predictor(g, x)?))
    }
}

impl PreparedClassifier for NoisyPredictor<'_> {
    fn predict_clean(&self) -> Result<Predictions> {
        Ok(NoisyPredictor::predict_clean(self))
    }

    fn predict_noisy(&self, noise: &AttributeNoise) -> Result<Predictions> {
        NoisyPredictor::predict_noisy(self, noise)
    }

    fn predict_noisy_at(&self, noise: &AttributeNoise, nodes: &[usize]) -> Result<Vec<u8>> {
        Ok(Predictions::from_logits(&self.noisy_logits_at(noise, nodes)?).0)
    }

    fn predict_noisy_batch(&self, noises: &[AttributeNoise], nodes: &[usize]) -> Result<Vec<u8>> {
        self.noisy_classes_batch(noises, nodes)
    }
}

/// First index of the largest entry, as in [`Predictions::from_logits`].
fn argmax(row: &ndarray::ArrayView1<'_, f64>) -> u8 {
    let mut best = 0usize;
    for (c, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = c;
        }
    }
    best as u8
}

/// `out = v · w` without allocating.
fn vec_mat(v: &ndarray::ArrayView1<'_, f64>, w: &Array2<f64>, out: &mut [f64]) {
    out.fill(0.0);
    for (&x, w_row) in v.iter().zip(w.rows()) {
        for (o, &c) in out.iter_mut().zip(w_row) {
            *o += x * c;
        }
    }
}

/// Clean forward pass cached on one structure. Noise confined to a few rows
/// only touches their two-hop neighborhood, so noisy logits are computed as
/// a sparse correction of the clean ones.
pub struct NoisyPredictor<'m> {
    model: &'m GcnModel,
    prop: Propagation,
    z1: Array2<f64>,
    h: Array2<f64>,
    logits: Array2<f64>,
}

impl NoisyPredictor<'_> {
    pub fn clean_logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn predict_clean(&self) -> Predictions {
        Predictions::from_logits(&self.logits)
    }

    /// Logits of `X + noise` on the cached structure.
    pub fn noisy_logits(&self, noise: &AttributeNoise) -> Result<Array2<f64>> {
        let all: Vec<usize> = (0..self.prop.num_nodes()).collect();
        self.noisy_logits_at(noise, &all)
    }

    /// Rows `nodes` of the logits of `X + noise`, in the given order.
    pub fn noisy_logits_at(&self, noise: &AttributeNoise, nodes: &[usize]) -> Result<Array2<f64>> {
        let m = self.model;
        let n = self.prop.num_nodes();
        if noise.block.ncols() != m.input_dim() || noise.block.nrows() != noise.vulnerable.len() {
            return Err(Error::Shape(
                "noise block does not match model input".into(),
            ));
        }
        if let Some(&v) = noise.vulnerable.iter().chain(nodes).find(|&&v| v >= n) {
            return Err(Error::Shape(format!("node {v} out of range")));
        }
        let sage = m.w1_self.is_some();
        // hidden rows feeding the requested logits
        let mut needed = vec![false; n];
        for &w in nodes {
            for (u, _) in self.prop.op.row(w) {
                needed[u] = true;
            }
            if sage {
                needed[w] = true;
            }
        }
        let hidden = m.hidden();
        let classes = m.classes();
        let mut slot = vec![usize::MAX; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut dz1: Vec<f64> = Vec::new();
        let mut through = vec![0.0; hidden];
        let mut through_self = vec![0.0; hidden];
        let mut add = |u: usize, a: f64, delta: &[f64]| {
            if slot[u] == usize::MAX {
                slot[u] = touched.len();
                touched.push(u);
                dz1.resize(dz1.len() + hidden, 0.0);
            }
            let base = slot[u] * hidden;
            for (t, d) in dz1[base..base + hidden].iter_mut().zip(delta) {
                *t += a * d;
            }
        };
        for (r, &v) in noise.vulnerable.iter().enumerate() {
            let row = noise.block.row(r);
            vec_mat(&row, &m.w1, &mut through);
            for (u, a) in self.prop.op_t.row(v) {
                if needed[u] {
                    add(u, a, &through);
                }
            }
            if let Some(ws) = &m.w1_self {
                if needed[v] {
                    vec_mat(&row, ws, &mut through_self);
                    add(v, 1.0, &through_self);
                }
            }
        }
        // per touched hidden row: change of (h·W2) and of (h·W2_self)
        let mut d_neigh = vec![0.0; touched.len() * classes];
        let mut d_self = vec![0.0; if sage { touched.len() * classes } else { 0 }];
        let mut dh = vec![0.0; hidden];
        for (k, &u) in touched.iter().enumerate() {
            let delta = &dz1[k * hidden..(k + 1) * hidden];
            for (((o, &z), &d), &h) in dh
                .iter_mut()
                .zip(self.z1.row(u))
                .zip(delta)
                .zip(self.h.row(u))
            {
                *o = m.activation.apply(z + d) - h;
            }
            let dh_view = ndarray::ArrayView1::from(&dh[..]);
            vec_mat(
                &dh_view,
                &m.w2,
                &mut d_neigh[k * classes..(k + 1) * classes],
            );
            if let Some(ws) = &m.w2_self {
                vec_mat(&dh_view, ws, &mut d_self[k * classes..(k + 1) * classes]);
            }
        }
        let mut out = Array2::<f64>::zeros((nodes.len(), classes));
        for (i, &w) in nodes.iter().enumerate() {
            let mut row = out.row_mut(i);
            row.assign(&self.logits.row(w));
            for (u, a) in self.prop.op.row(w) {
                if slot[u] != usize::MAX {
                    let src = &d_neigh[slot[u] * classes..(slot[u] + 1) * classes];
                    for (o, d) in row.iter_mut().zip(src) {
                        *o += a * d;
                    }
                }
            }
            if sage && slot[w] != usize::MAX {
                let src = &d_self[slot[w] * classes..(slot[w] + 1) * classes];
                for (o, d) in row.iter_mut().zip(src) {
                    *o += d;
                }
            }
        }
        Ok(out)
    }

    pub fn predict_noisy(&self, noise: &AttributeNoise) -> Result<Predictions> {
        Ok(Predictions::from_logits(&self.noisy_logits(noise)?))
    }

    /// Classes of `nodes` under each noise draw, draw-major: entry
    /// `b · nodes.len() + i` is node `nodes[i]` under `noises[b]`.
    ///
    /// Same arithmetic as [`noisy_logits_at`](Self::noisy_logits_at), batched
    /// over draws so every step is a dense block operation. All draws must
    /// perturb the same vulnerable rows.
    pub fn noisy_classes_batch(
        &self,
        noises: &[AttributeNoise],
        nodes: &[usize],
    ) -> Result<Vec<u8>> {
        let Some(first) = noises.first() else {
            return Ok(Vec::new());
        };
        let m = self.model;
        let n = self.prop.num_nodes();
        let vulnerable = &first.vulnerable;
        for noise in noises {
            if noise.vulnerable != *vulnerable {
                return Err(Error::Shape(
                    "batched noise draws perturb different rows".into(),
                ));
            }
            if noise.block.ncols() != m.input_dim() || noise.block.nrows() != vulnerable.len() {
                return Err(Error::Shape(
                    "noise block does not match model input".into(),
                ));
            }
        }
        if let Some(&v) = vulnerable.iter().chain(nodes).find(|&&v| v >= n) {
            return Err(Error::Shape(format!("node {v} out of range")));
        }
        let batch = noises.len();
        let (hidden, classes) = (m.hidden(), m.classes());
        let sage = m.w1_self.is_some();
        let mut needed = vec![false; n];
        for &w in nodes {
            for (u, _) in self.prop.op.row(w) {
                needed[u] = true;
            }
            if sage {
                needed[w] = true;
            }
        }
        // per vulnerable row: the noise of every draw pushed through W1 (and W1_self)
        let mut through = Vec::with_capacity(vulnerable.len());
        let mut through_self = Vec::with_capacity(vulnerable.len());
        for r in 0..vulnerable.len() {
            let rows =
                Array2::from_shape_fn((batch, m.input_dim()), |(b, j)| noises[b].block[[r, j]]);
            through.push(rows.dot(&m.w1));
            if let Some(ws) = &m.w1_self {
                through_self.push(rows.dot(ws));
            }
        }
        // hidden rows reached by the noise, with their incoming (row, weight) terms
        let mut slot = vec![usize::MAX; n];
        let mut touched: Vec<(usize, Vec<(usize, f64)>, Option<usize>)> = Vec::new();
        let mut touch = |u: usize, touched: &mut Vec<(usize, Vec<(usize, f64)>, Option<usize>)>| {
            if slot[u] == usize::MAX {
                slot[u] = touched.len();
                touched.push((u, Vec::new(), None));
            }
            slot[u]
        };
        for (r, &v) in vulnerable.iter().enumerate() {
            for (u, a) in self.prop.op_t.row(v) {
                if needed[u] {
                    let k = touch(u, &mut touched);
                    touched[k].1.push((r, a));
                }
            }
            if sage && needed[v] {
                let k = touch(v, &mut touched);
                touched[k].2 = Some(r);
            }
        }
        let mut d_neigh = Vec::with_capacity(touched.len());
        let mut d_self = Vec::with_capacity(if sage { touched.len() } else { 0 });
        let mut dz = Array2::<f64>::zeros((batch, hidden));
        for (u, terms, own) in &touched {
            dz.fill(0.0);
            for &(r, a) in terms {
                dz.scaled_add(a, &through[r]);
            }
            if let Some(r) = own {
                dz += &through_self[*r];
            }
            let (z1, h) = (self.z1.row(*u), self.h.row(*u));
            for mut row in dz.rows_mut() {
                for ((o, &z), &hv) in row.iter_mut().zip(z1).zip(h) {
                    *o = m.activation.apply(z + *o) - hv;
                }
            }
            d_neigh.push(dz.dot(&m.w2));
            if let Some(ws) = &m.w2_self {
                d_self.push(dz.dot(ws));
            }
        }
        let mut out = vec![0u8; batch * nodes.len()];
        let mut acc = Array2::<f64>::zeros((batch, classes));
        for (i, &w) in nodes.iter().enumerate() {
            acc.assign(&self.logits.row(w));
            for (u, a) in self.prop.op.row(w) {
                if slot[u] != usize::MAX {
                    acc.scaled_add(a, &d_neigh[slot[u]]);
                }
            }
            if sage && slot[w] != usize::MAX {
                acc += &d_self[slot[w]];
            }
            for (b, row) in acc.rows().into_iter().enumerate() {
                out[b * nodes.len() + i] = argmax(&row);
            }
        }
        Ok(out)
    }
}
