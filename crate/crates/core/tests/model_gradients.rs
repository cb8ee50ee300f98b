use plottal::numerics::Rng;
use plottal::representation::{FeatureSequence, GroundTruthSegment};
use plottal::trainer::{AlignmentStrategy, Couplings, ModelState, TrainConfig};
use plottal::Matrix;

fn sequence(rng: &mut Rng) -> FeatureSequence {
    FeatureSequence {
        video_id: "fd".into(),
        features: Matrix::from_fn(24, 6, |_, _| rng.gaussian(0.0, 1.0)),
        clip_stride_seconds: 1.0,
        annotations: vec![
            GroundTruthSegment { start: 2.0, end: 9.0, class_id: 0 },
            GroundTruthSegment { start: 12.0, end: 21.0, class_id: 1 },
        ],
    }
}

fn model(strategy: AlignmentStrategy, prompts: usize) -> ModelState {
    let cfg = TrainConfig {
        alignment_strategy: strategy,
        num_prompts: prompts,
        n_ctx: 2,
        d_ctx: 3,
        fpn_levels: 3,
        lambda_reg: 0.7,
        seed: 5,
        ..TrainConfig::default()
    };
    ModelState::init(cfg, 2, 6).unwrap()
}

fn loss_at(m: &ModelState, seq: &FeatureSequence, frozen: &Couplings) -> f64 {
    let prompts = m.encode_all().unwrap();
    m.video_loss(seq, &prompts, Some(frozen)).unwrap().0.total
}

fn check(strategy: AlignmentStrategy, prompts: usize) {
    let mut rng = Rng::new(17);
    let seq = sequence(&mut rng);
    let mut m = model(strategy, prompts);
    // Move the head off its all-positive init so both ReLU branches occur.
    for v in m.head.bias.value.as_mut_slice() {
        *v = 0.3;
    }
    let enc = m.encode_all().unwrap();
    let (loss, grads, fwd) = m.video_loss(&seq, &enc, None).unwrap();
    assert!(loss.n_pos > 0);
    let frozen = fwd.couplings();
    let mut d_prompts: Vec<Matrix> = enc.iter().map(|p| Matrix::zeros(p.embeddings().rows(), 6)).collect();
    m.zero_grad();
    m.backward(&fwd, &enc, &grads, &mut d_prompts).unwrap();
    m.backward_prompts(&enc, &d_prompts).unwrap();
    let analytic: Vec<Matrix> = m.slots().map(|s| s.grad.clone()).collect();

    let h = 1e-6;
    let mut checked = 0;
    let n_slots = analytic.len();
    for (si, grad) in analytic.iter().enumerate().take(n_slots) {
        let len = grad.as_slice().len();
        for k in [0, len / 3, len / 2, len - 1] {
            let mut plus = m.clone();
            plus.slots_mut().nth(si).unwrap().value.as_mut_slice()[k] += h;
            let mut minus = m.clone();
            minus.slots_mut().nth(si).unwrap().value.as_mut_slice()[k] -= h;
            let fd = (loss_at(&plus, &seq, &frozen) - loss_at(&minus, &seq, &frozen)) / (2.0 * h);
            let an = grad.as_slice()[k];
            let tol = 1e-5 + 1e-4 * fd.abs().max(an.abs());
            assert!((fd - an).abs() < tol, "{strategy} slot {si} entry {k}: fd {fd} vs analytic {an}");
            checked += 1;
        }
    }
    assert!(checked > 0);
}

#[test]
fn ot_gradients_match_finite_differences() {
    check(AlignmentStrategy::Ot, 3);
}

#[test]
fn hungarian_gradients_match_finite_differences() {
    check(AlignmentStrategy::Hungarian, 3);
}

#[test]
fn euclidean_gradients_match_finite_differences() {
    check(AlignmentStrategy::Euclidean, 3);
}

#[test]
fn mean_gradients_match_finite_differences() {
    check(AlignmentStrategy::Mean, 3);
    check(AlignmentStrategy::Mean, 1);
}

#[test]
fn single_prompt_ot_matches_mean_exactly() {
    let mut rng = Rng::new(3);
    let seq = sequence(&mut rng);
    let ot = model(AlignmentStrategy::Ot, 1);
    let mean = model(AlignmentStrategy::Mean, 1);
    let a = ot.forward(&seq.features, &ot.encode_all().unwrap(), None).unwrap();
    let b = mean.forward(&seq.features, &mean.encode_all().unwrap(), None).unwrap();
    assert_eq!(a.outputs, b.outputs);
}
