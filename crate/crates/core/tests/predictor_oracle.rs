use navxai::predictor::{
    nearest_roadblock, state_features, train_offline, Hyperparams, PredictorModel, StateFeatures, TrainingExample,
    FEATURE_LEN,
};
use navxai::rng::{stream, Stream};
use navxai::world::{all_segments, CarState, CityTask, Direction, GridPos, Heading, RoadSegment, TaskBank, WorldConfig};
use proptest::prelude::*;
use rand::Rng;

fn random_examples(n: usize, seed: u64) -> Vec<TrainingExample> {
    let mut r = stream(seed, Stream::Population);
    (0..n)
        .map(|i| TrainingExample {
            features: StateFeatures((0..FEATURE_LEN).map(|_| r.random_range(-1.0..1.0)).collect()),
            user_id: format!("u{}", i % 3),
            task_id: format!("t{}", i % 4),
            label: Direction::ALL[r.random_range(0..3)],
        })
        .collect()
}

fn seeded_model(seed: u64, examples: &[TrainingExample]) -> PredictorModel {
    let mut m = PredictorModel::init(&Hyperparams { hidden: 12, embed_dim: 4, ..Hyperparams::default() }, seed);
    let mut r = stream(seed, Stream::Init);
    for ex in examples {
        for v in m.user_embedding_mut(&ex.user_id).iter_mut() {
            *v = r.random_range(-0.5..0.5);
        }
        for v in m.task_embedding_mut(&ex.task_id).iter_mut() {
            *v = r.random_range(-0.5..0.5);
        }
    }
    // Nonzero biases so their gradients are exercised too.
    let mut params = m.trunk_params();
    for p in params.iter_mut() {
        *p += r.random_range(-0.1..0.1);
    }
    m.set_trunk_params(&params).unwrap();
    m
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let batch = random_examples(10, 1);
    let model = seeded_model(2, &batch);
    let g = model.gradient(&batch).unwrap();
    let eps = 1e-5;
    let base = model.trunk_params();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let mut plus = model.clone();
        let mut minus = model.clone();
        let mut p = base.clone();
        p[i] += eps;
        plus.set_trunk_params(&p).unwrap();
        p[i] -= 2.0 * eps;
        minus.set_trunk_params(&p).unwrap();
        let num = (plus.loss(&batch).unwrap() - minus.loss(&batch).unwrap()) / (2.0 * eps);
        worst = worst.max(rel_err(g.trunk[i], num));
    }
    for (id, grad) in &g.user {
        for (k, &a) in grad.iter().enumerate() {
            let mut plus = model.clone();
            plus.user_embedding_mut(id)[k] += eps;
            let mut minus = model.clone();
            minus.user_embedding_mut(id)[k] -= eps;
            let num = (plus.loss(&batch).unwrap() - minus.loss(&batch).unwrap()) / (2.0 * eps);
            worst = worst.max(rel_err(a, num));
        }
    }
    for (id, grad) in &g.task {
        for (k, &a) in grad.iter().enumerate() {
            let mut plus = model.clone();
            plus.task_embedding_mut(id)[k] += eps;
            let mut minus = model.clone();
            minus.task_embedding_mut(id)[k] -= eps;
            let num = (plus.loss(&batch).unwrap() - minus.loss(&batch).unwrap()) / (2.0 * eps);
            worst = worst.max(rel_err(a, num));
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

/// Left when the goal lies in a lower column than the car, else Right.
fn side_rule_dataset(n: usize, seed: u64) -> Vec<TrainingExample> {
    let mut r = stream(seed, Stream::Population);
    let task = TaskBank::generate(1, seed, &WorldConfig::default()).unwrap().tasks.remove(0);
    let mut out = Vec::new();
    while out.len() < n {
        let mut t: CityTask = task.clone();
        t.goal = GridPos::new(r.random_range(0..7), r.random_range(0..7));
        let car = CarState {
            pos: GridPos::new(r.random_range(0..7), r.random_range(0..7)),
            heading: Heading::from_index(r.random_range(0..4)),
            ..CarState::at_start(&t)
        };
        if car.pos.col == t.goal.col {
            continue;
        }
        let label = if t.goal.col < car.pos.col { Direction::Left } else { Direction::Right };
        out.push(TrainingExample {
            features: state_features(&t, &car),
            user_id: format!("u{}", out.len() % 5),
            task_id: t.task_id.clone(),
            label,
        });
    }
    out
}

#[test]
fn a_known_rule_is_learned() {
    let data = side_rule_dataset(2000, 8);
    let (train, held) = data.split_at(1600);
    let hp = Hyperparams { epochs: 60, ..Hyperparams::default() };
    let (model, report) = train_offline(train, &hp, 3).unwrap();
    assert!(report.accuracy >= 0.95, "train accuracy {}", report.accuracy);
    let acc = model.accuracy(held).unwrap();
    assert!(acc >= 0.95, "held-out accuracy {acc}");
}

#[test]
fn training_is_reproducible_and_round_trips() {
    let data = random_examples(120, 4);
    let hp = Hyperparams { epochs: 5, ..Hyperparams::default() };
    let (a, _) = train_offline(&data, &hp, 9).unwrap();
    let (b, _) = train_offline(&data, &hp, 9).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let back = PredictorModel::from_json(&a.to_json()).unwrap();
    assert_eq!(back, a);
    assert!(train_offline(&[], &hp, 9).is_err());
}

#[test]
fn online_adaptation_moves_only_embeddings() {
    let data = random_examples(200, 5);
    let hp = Hyperparams { epochs: 5, ..Hyperparams::default() };
    let (mut model, _) = train_offline(&data, &hp, 1).unwrap();
    let trunk = model.trunk_params();
    let sum = model.trunk_checksum();
    let task = TaskBank::generate(1, 2, &WorldConfig::default()).unwrap().tasks.remove(0);
    let car = CarState::at_start(&task);
    let ex = TrainingExample {
        features: state_features(&task, &car),
        user_id: "new-user".into(),
        task_id: task.task_id.clone(),
        label: Direction::Left,
    };
    let mut last = model.forward(&ex.features, &ex.user_id, &ex.task_id).unwrap()[0];
    for _ in 0..20 {
        model.adapt_online(&ex).unwrap();
        let p = model.forward(&ex.features, &ex.user_id, &ex.task_id).unwrap()[0];
        assert!(p > last, "left probability did not rise: {last} -> {p}");
        last = p;
    }
    assert_eq!(model.trunk_checksum(), sum);
    assert!(model.trunk_params().iter().zip(&trunk).all(|(a, b)| a.to_bits() == b.to_bits()));
    assert!(model.set_trunk_params(&trunk).is_err());
}

#[test]
fn untrained_models_refuse_adaptation() {
    let mut m = PredictorModel::zeros(4, 2);
    let ex = random_examples(1, 1).remove(0);
    assert!(m.adapt_online(&ex).is_err());
    let p = m.forward(&ex.features, "u", "t").unwrap();
    assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
}

proptest! {
    #[test]
    fn nearest_roadblock_matches_a_full_scan(
        mask in proptest::collection::vec(any::<bool>(), 84),
        r in 0usize..7, c in 0usize..7,
    ) {
        let mut task = TaskBank::generate(1, 3, &WorldConfig::default()).unwrap().tasks.remove(0);
        let segs: Vec<RoadSegment> = all_segments(7, 7);
        task.roadblocks = segs.iter().zip(&mask).filter(|(_, &m)| m).map(|(s, _)| *s).collect();
        let car = CarState { pos: GridPos::new(r, c), ..CarState::at_start(&task) };
        let got = nearest_roadblock(&task, &car);
        let mut best: Option<(f64, RoadSegment)> = None;
        for s in segs.iter().filter(|s| task.roadblocks.contains(s)) {
            let (mr, mc) = ((s.a().row + s.b().row) as f64 / 2.0, (s.a().col + s.b().col) as f64 / 2.0);
            let d = (mr - r as f64).abs() + (mc - c as f64).abs();
            let better = match best {
                None => true,
                Some((bd, bs)) => d < bd || (d == bd && *s < bs),
            };
            if better {
                best = Some((d, *s));
            }
        }
        let want = best.map(|(_, s)| ((s.a().row + s.b().row) as f64 / 2.0, (s.a().col + s.b().col) as f64 / 2.0))
            .unwrap_or((task.goal.row as f64, task.goal.col as f64));
        prop_assert_eq!(got, want);
    }
}
