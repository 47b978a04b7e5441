//! Next-direction predictor: a small tanh network over world-state features
//! concatenated with a per-user and a per-task embedding.
//!
//! The trunk is trained offline by minibatch SGD and then frozen. While a
//! session runs only the two embedding rows it touches are updated.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng::{self, Stream};
use crate::world::{CarState, CityTask, Direction, Heading};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const FEATURE_LEN: usize = 11;
pub const DEFAULT_EMBED_DIM: usize = 8;
pub const DEFAULT_HIDDEN: usize = 32;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictorError {
    #[error("expected {expected} features, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("online adaptation needs a trained, frozen model")]
    NotFrozen,
    #[error("trunk is frozen")]
    Frozen,
    #[error("bad hyperparameter: {0}")]
    Hyperparameter(String),
    #[error("model file: {0}")]
    Format(String),
}

/// `[row, col, N, E, S, W, goal_row, goal_col, block_row, block_col, 1]`,
/// positions scaled to [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFeatures(pub Vec<f64>);

/// Midpoint of the roadblock closest to the car, in grid (row, col)
/// coordinates. Ties go to the first segment in canonical order. With no
/// roadblocks the goal stands in.
pub fn nearest_roadblock(task: &CityTask, car: &CarState) -> (f64, f64) {
    let (r, c) = (car.pos.row as f64, car.pos.col as f64);
    let mut best: Option<(f64, (f64, f64))> = None;
    for seg in &task.roadblocks {
        let m = seg.midpoint();
        let d = (m.0 - r).abs() + (m.1 - c).abs();
        if best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, m));
        }
    }
    best.map(|(_, m)| m).unwrap_or((task.goal.row as f64, task.goal.col as f64))
}

pub fn state_features(task: &CityTask, car: &CarState) -> StateFeatures {
    let hr = (task.grid_height.max(2) - 1) as f64;
    let wc = (task.grid_width.max(2) - 1) as f64;
    let block = nearest_roadblock(task, car);
    let mut f = Vec::with_capacity(FEATURE_LEN);
    f.push(car.pos.row as f64 / hr);
    f.push(car.pos.col as f64 / wc);
    for h in Heading::ALL {
        f.push(if car.heading == h { 1.0 } else { 0.0 });
    }
    f.push(task.goal.row as f64 / hr);
    f.push(task.goal.col as f64 / wc);
    f.push(block.0 / hr);
    f.push(block.1 / wc);
    f.push(1.0);
    StateFeatures(f)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub features: StateFeatures,
    pub user_id: String,
    pub task_id: String,
    pub label: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub hidden: usize,
    pub embed_dim: usize,
    pub adapt_lr: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 40,
            batch_size: 16,
            hidden: DEFAULT_HIDDEN,
            embed_dim: DEFAULT_EMBED_DIM,
            adapt_lr: 0.05,
        }
    }
}

impl Hyperparams {
    fn validate(&self) -> Result<(), PredictorError> {
        let bad = |m: &str| Err(PredictorError::Hyperparameter(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(self.adapt_lr >= 0.0 && self.adapt_lr.is_finite()) {
            return bad("adapt_lr must be non-negative");
        }
        if self.batch_size == 0 || self.hidden == 0 {
            return bad("batch_size and hidden must be positive");
        }
        Ok(())
    }
}

/// Fully connected layer, `weights` row-major with shape `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn xavier<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.random_range(-limit..limit)).collect();
        Self { inputs, outputs, weights, bias: vec![0.0; outputs] }
    }

    fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.outputs)
            .map(|o| {
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// `W^T g`
    fn back(&self, g: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.inputs];
        for (o, &go) in g.iter().enumerate() {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            for (acc, w) in out.iter_mut().zip(row) {
                *acc += w * go;
            }
        }
        out
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn is_valid(&self) -> bool {
        self.weights.len() == self.inputs * self.outputs && self.bias.len() == self.outputs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorModel {
    pub version: u32,
    pub embed_dim: usize,
    /// Input, two hidden layers, output.
    pub layers: [Layer; 3],
    pub user_embeddings: BTreeMap<String, Vec<f64>>,
    pub task_embeddings: BTreeMap<String, Vec<f64>>,
    pub trained: bool,
    pub frozen: bool,
    #[serde(default = "default_adapt_lr")]
    pub adapt_lr: f64,
}

fn default_adapt_lr() -> f64 {
    Hyperparams::default().adapt_lr
}

/// Gradients laid out like the model: trunk flattened in
/// [`PredictorModel::trunk_params`] order, embeddings by id.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub trunk: Vec<f64>,
    pub user: BTreeMap<String, Vec<f64>>,
    pub task: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub final_loss: f64,
    pub accuracy: f64,
    pub epochs: usize,
    pub examples: usize,
}

struct Activations {
    x: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    p: [f64; 3],
}

fn softmax3(z: &[f64]) -> [f64; 3] {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: [f64; 3] = std::array::from_fn(|i| (z[i] - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

impl PredictorModel {
    pub fn input_len(&self) -> usize {
        FEATURE_LEN + 2 * self.embed_dim
    }

    /// All-zero model; predicts exactly uniform.
    pub fn zeros(hidden: usize, embed_dim: usize) -> Self {
        let inputs = FEATURE_LEN + 2 * embed_dim;
        Self {
            version: MODEL_FORMAT_VERSION,
            embed_dim,
            layers: [Layer::zeros(inputs, hidden), Layer::zeros(hidden, hidden), Layer::zeros(hidden, 3)],
            user_embeddings: BTreeMap::new(),
            task_embeddings: BTreeMap::new(),
            trained: false,
            frozen: false,
            adapt_lr: default_adapt_lr(),
        }
    }

    /// Xavier-uniform trunk, zero biases and embeddings.
    pub fn init(hp: &Hyperparams, seed: u64) -> Self {
        let mut r = rng::stream(seed, Stream::Init);
        let inputs = FEATURE_LEN + 2 * hp.embed_dim;
        Self {
            layers: [
                Layer::xavier(inputs, hp.hidden, &mut r),
                Layer::xavier(hp.hidden, hp.hidden, &mut r),
                Layer::xavier(hp.hidden, 3, &mut r),
            ],
            adapt_lr: hp.adapt_lr,
            ..Self::zeros(hp.hidden, hp.embed_dim)
        }
    }

    fn embedding<'a>(&'a self, table: &'a BTreeMap<String, Vec<f64>>, id: &str) -> Option<&'a [f64]> {
        table.get(id).map(Vec::as_slice)
    }

    fn activations(&self, features: &[f64], user_id: &str, task_id: &str) -> Result<Activations, PredictorError> {
        if features.len() != FEATURE_LEN {
            return Err(PredictorError::Shape { expected: FEATURE_LEN, got: features.len() });
        }
        let zero = vec![0.0; self.embed_dim];
        let mut x = features.to_vec();
        x.extend_from_slice(self.embedding(&self.user_embeddings, user_id).unwrap_or(&zero));
        x.extend_from_slice(self.embedding(&self.task_embeddings, task_id).unwrap_or(&zero));
        let h1: Vec<f64> = self.layers[0].apply(&x).into_iter().map(f64::tanh).collect();
        let h2: Vec<f64> = self.layers[1].apply(&h1).into_iter().map(f64::tanh).collect();
        let p = softmax3(&self.layers[2].apply(&h2));
        Ok(Activations { x, h1, h2, p })
    }

    /// Probabilities over (Left, Straight, Right). Unknown ids read as zero
    /// embeddings.
    pub fn forward(&self, features: &StateFeatures, user_id: &str, task_id: &str) -> Result<[f64; 3], PredictorError> {
        Ok(self.activations(&features.0, user_id, task_id)?.p)
    }

    /// Mean cross-entropy over `examples`.
    pub fn loss(&self, examples: &[TrainingExample]) -> Result<f64, PredictorError> {
        if examples.is_empty() {
            return Err(PredictorError::EmptyDataset);
        }
        let mut total = 0.0;
        for ex in examples {
            let p = self.forward(&ex.features, &ex.user_id, &ex.task_id)?;
            total -= p[ex.label.index()].max(f64::MIN_POSITIVE).ln();
        }
        Ok(total / examples.len() as f64)
    }

    /// Gradient of [`Self::loss`] by backpropagation.
    pub fn gradient(&self, examples: &[TrainingExample]) -> Result<Gradient, PredictorError> {
        if examples.is_empty() {
            return Err(PredictorError::EmptyDataset);
        }
        let scale = 1.0 / examples.len() as f64;
        let mut trunk = vec![0.0; self.trunk_len()];
        let mut user: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut task: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let offsets = self.layer_offsets();
        for ex in examples {
            let a = self.activations(&ex.features.0, &ex.user_id, &ex.task_id)?;
            let mut dz3 = a.p.to_vec();
            dz3[ex.label.index()] -= 1.0;
            let dh2 = self.layers[2].back(&dz3);
            let dz2: Vec<f64> = dh2.iter().zip(&a.h2).map(|(g, h)| g * (1.0 - h * h)).collect();
            let dh1 = self.layers[1].back(&dz2);
            let dz1: Vec<f64> = dh1.iter().zip(&a.h1).map(|(g, h)| g * (1.0 - h * h)).collect();
            let dx = self.layers[0].back(&dz1);
            for (li, (dz, input)) in [(&dz1, &a.x), (&dz2, &a.h1), (&dz3, &a.h2)].into_iter().enumerate() {
                let layer = &self.layers[li];
                let base = offsets[li];
                for (o, &g) in dz.iter().enumerate() {
                    for (i, &v) in input.iter().enumerate() {
                        trunk[base + o * layer.inputs + i] += scale * g * v;
                    }
                    trunk[base + layer.weights.len() + o] += scale * g;
                }
            }
            let d = self.embed_dim;
            let acc = |table: &mut BTreeMap<String, Vec<f64>>, id: &str, slice: &[f64]| {
                let row = table.entry(id.to_string()).or_insert_with(|| vec![0.0; d]);
                for (r, g) in row.iter_mut().zip(slice) {
                    *r += scale * g;
                }
            };
            acc(&mut user, &ex.user_id, &dx[FEATURE_LEN..FEATURE_LEN + d]);
            acc(&mut task, &ex.task_id, &dx[FEATURE_LEN + d..]);
        }
        Ok(Gradient { trunk, user, task })
    }

    fn layer_offsets(&self) -> [usize; 3] {
        let a = self.layers[0].param_count();
        let b = a + self.layers[1].param_count();
        [0, a, b]
    }

    pub fn trunk_len(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Each layer's weights then its bias, input layer first.
    pub fn trunk_params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.weights.iter().chain(l.bias.iter()).copied()).collect()
    }

    pub fn set_trunk_params(&mut self, params: &[f64]) -> Result<(), PredictorError> {
        if self.frozen {
            return Err(PredictorError::Frozen);
        }
        if params.len() != self.trunk_len() {
            return Err(PredictorError::Shape { expected: self.trunk_len(), got: params.len() });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                *w = it.next().expect("length checked");
            }
        }
        Ok(())
    }

    /// Hex SHA-256 over the trunk parameters' little-endian bytes.
    pub fn trunk_checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in self.trunk_params() {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn user_embedding_mut(&mut self, id: &str) -> &mut Vec<f64> {
        let d = self.embed_dim;
        self.user_embeddings.entry(id.to_string()).or_insert_with(|| vec![0.0; d])
    }

    pub fn task_embedding_mut(&mut self, id: &str) -> &mut Vec<f64> {
        let d = self.embed_dim;
        self.task_embeddings.entry(id.to_string()).or_insert_with(|| vec![0.0; d])
    }

    fn apply_step(&mut self, g: &Gradient, lr: f64, trunk: bool) {
        if trunk {
            let mut it = g.trunk.iter();
            for l in &mut self.layers {
                for w in l.weights.iter_mut().chain(l.bias.iter_mut()) {
                    *w -= lr * it.next().expect("gradient matches trunk");
                }
            }
        }
        for (id, grad) in &g.user {
            for (w, d) in self.user_embedding_mut(id).iter_mut().zip(grad) {
                *w -= lr * d;
            }
        }
        for (id, grad) in &g.task {
            for (w, d) in self.task_embedding_mut(id).iter_mut().zip(grad) {
                *w -= lr * d;
            }
        }
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    /// One SGD step on the example's user and task embeddings. The trunk is
    /// not touched. Returns the loss before the step.
    pub fn adapt_online(&mut self, example: &TrainingExample) -> Result<f64, PredictorError> {
        if !(self.trained && self.frozen) {
            return Err(PredictorError::NotFrozen);
        }
        let ex = std::slice::from_ref(example);
        let loss = self.loss(ex)?;
        let g = self.gradient(ex)?;
        self.user_embedding_mut(&example.user_id);
        self.task_embedding_mut(&example.task_id);
        self.apply_step(&g, self.adapt_lr, false);
        Ok(loss)
    }

    pub fn accuracy(&self, examples: &[TrainingExample]) -> Result<f64, PredictorError> {
        if examples.is_empty() {
            return Err(PredictorError::EmptyDataset);
        }
        let mut hits = 0usize;
        for ex in examples {
            let p = self.forward(&ex.features, &ex.user_id, &ex.task_id)?;
            let best = (0..3).fold(0, |b, i| if p[i] > p[b] { i } else { b });
            hits += usize::from(best == ex.label.index());
        }
        Ok(hits as f64 / examples.len() as f64)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, PredictorError> {
        let m: PredictorModel = serde_json::from_str(s).map_err(|e| PredictorError::Format(e.to_string()))?;
        if m.version != MODEL_FORMAT_VERSION {
            return Err(PredictorError::Format(format!("unsupported model version {}", m.version)));
        }
        let inputs = m.input_len();
        let [l0, l1, l2] = &m.layers;
        let shapes_ok = l0.inputs == inputs
            && l1.inputs == l0.outputs
            && l2.inputs == l1.outputs
            && l2.outputs == 3
            && m.layers.iter().all(Layer::is_valid);
        let embeds_ok = m.user_embeddings.values().chain(m.task_embeddings.values()).all(|e| e.len() == m.embed_dim);
        if !shapes_ok || !embeds_ok {
            return Err(PredictorError::Format("layer or embedding shapes are inconsistent".into()));
        }
        Ok(m)
    }
}

fn canonical_order(a: &TrainingExample, b: &TrainingExample) -> Ordering {
    a.user_id
        .cmp(&b.user_id)
        .then_with(|| a.task_id.cmp(&b.task_id))
        .then_with(|| a.label.cmp(&b.label))
        .then_with(|| {
            a.features.0.iter().zip(&b.features.0).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(Ordering::Equal)
        })
        .then_with(|| a.features.0.len().cmp(&b.features.0.len()))
}

/// Minibatch SGD on mean cross-entropy. Examples are put in a canonical
/// order before the seeded shuffle, so input order does not matter. The
/// returned model is frozen.
pub fn train_offline(
    examples: &[TrainingExample],
    hp: &Hyperparams,
    seed: u64,
) -> Result<(PredictorModel, TrainingReport), PredictorError> {
    hp.validate()?;
    if examples.is_empty() {
        return Err(PredictorError::EmptyDataset);
    }
    if let Some(bad) = examples.iter().find(|e| e.features.0.len() != FEATURE_LEN) {
        return Err(PredictorError::Shape { expected: FEATURE_LEN, got: bad.features.0.len() });
    }
    let mut data = examples.to_vec();
    data.sort_by(canonical_order);
    let mut model = PredictorModel::init(hp, seed);
    let mut shuffle = rng::stream(seed, Stream::Shuffle);
    for _ in 0..hp.epochs {
        data.shuffle(&mut shuffle);
        for batch in data.chunks(hp.batch_size) {
            let g = model.gradient(batch)?;
            model.apply_step(&g, hp.learning_rate, true);
        }
    }
    model.trained = true;
    model.freeze();
    let report = TrainingReport {
        final_loss: model.loss(&data)?,
        accuracy: model.accuracy(&data)?,
        epochs: hp.epochs,
        examples: data.len(),
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{generate_task, GridPos, RoadSegment, WorldConfig};

    fn example(label: Direction, user: &str) -> TrainingExample {
        let task = generate_task(3, &WorldConfig::default()).unwrap();
        TrainingExample {
            features: state_features(&task, &CarState::at_start(&task)),
            user_id: user.into(),
            task_id: task.task_id.clone(),
            label,
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = PredictorModel::zeros(32, 8);
        let p = m.forward(&StateFeatures(vec![0.5; FEATURE_LEN]), "u", "t").unwrap();
        assert_eq!(p, [1.0 / 3.0; 3]);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let m = PredictorModel::zeros(4, 2);
        let err = m.forward(&StateFeatures(vec![0.0; 10]), "u", "t").unwrap_err();
        assert_eq!(err, PredictorError::Shape { expected: 11, got: 10 });
    }

    #[test]
    fn features_are_in_unit_range() {
        for seed in 0..20 {
            let task = generate_task(seed, &WorldConfig::default()).unwrap();
            let f = state_features(&task, &CarState::at_start(&task));
            assert_eq!(f.0.len(), FEATURE_LEN);
            assert!(f.0.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn nearest_roadblock_tie_uses_canonical_order() {
        let mut task = generate_task(5, &WorldConfig::default()).unwrap();
        let car = CarState { pos: GridPos::new(3, 3), ..CarState::at_start(&task) };
        task.roadblocks.clear();
        assert_eq!(nearest_roadblock(&task, &car), (task.goal.row as f64, task.goal.col as f64));
        let north = RoadSegment::new(GridPos::new(2, 3), GridPos::new(3, 3)).unwrap();
        let south = RoadSegment::new(GridPos::new(3, 3), GridPos::new(4, 3)).unwrap();
        task.roadblocks.insert(south);
        task.roadblocks.insert(north);
        assert_eq!(nearest_roadblock(&task, &car), north.midpoint());
    }

    #[test]
    fn memorizes_a_single_example() {
        let ex = vec![example(Direction::Right, "u1"); 8];
        let hp = Hyperparams { epochs: 200, batch_size: 8, learning_rate: 0.1, ..Hyperparams::default() };
        let (m, report) = train_offline(&ex, &hp, 1).unwrap();
        assert_eq!(report.accuracy, 1.0);
        assert!(report.final_loss < 0.01, "{}", report.final_loss);
        assert!(m.frozen && m.trained);
    }

    #[test]
    fn empty_dataset_is_an_error() {
        assert_eq!(train_offline(&[], &Hyperparams::default(), 0).unwrap_err(), PredictorError::EmptyDataset);
    }

    #[test]
    fn adaptation_needs_frozen_model_and_keeps_trunk() {
        let ex = example(Direction::Left, "new-user");
        let mut m = PredictorModel::init(&Hyperparams::default(), 2);
        assert_eq!(m.adapt_online(&ex), Err(PredictorError::NotFrozen));
        m.trained = true;
        m.freeze();
        let before = m.trunk_checksum();
        m.adapt_online(&ex).unwrap();
        assert_eq!(m.trunk_checksum(), before);
        assert!(m.user_embeddings.contains_key("new-user"));
        assert!(m.set_trunk_params(&vec![0.0; m.trunk_len()]).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (m, _) = train_offline(&[example(Direction::Straight, "a")], &Hyperparams { epochs: 3, ..Default::default() }, 9)
            .unwrap();
        let back = PredictorModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.trunk_checksum(), m.trunk_checksum());
    }
}
