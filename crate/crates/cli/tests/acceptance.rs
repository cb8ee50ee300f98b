//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line to
//! stderr; the test fails if any criterion does.

use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use plottal::datagen::{generate_corpus, read_corpus, write_corpus, GenSpec};
use plottal::evalkit::{average_precision, evaluate, GtSegment, Interval, ScoredSegment, DEFAULT_THRESHOLDS};
use plottal::localizer::{diou_loss, focal_loss, ActionInstance};
use plottal::numerics::Rng;
use plottal::otalign::{ot_distance, sinkhorn, CostMatrix, CostMetric, Marginals, SinkhornConfig};
use plottal::representation::{FeatureSequence, GroundTruthSegment};
use plottal::trainer::{load_model, save_model, train, AlignmentStrategy, ModelState, TrainConfig};
use plottal::Matrix;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, o: &Outcome) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n} [{verdict}] {name}: {}", o.detail);
}

fn marginal_error(p: &Matrix, m: &Marginals<f64>) -> f64 {
    let rows = p.row_sums().iter().zip(&m.u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let cols = p.col_sums().iter().zip(&m.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    rows.max(cols)
}

fn sinkhorn_feasibility() -> Outcome {
    let mut rng = Rng::new(1);
    let start = Instant::now();
    let mut worst = [0.0f64; 2];
    let mut converged = [0usize; 2];
    let mut ok = true;
    let strict = SinkhornConfig {
        delta: 1e-6,
        max_iters: 1000,
        ..SinkhornConfig::default()
    };
    for _ in 0..200 {
        let (r, c) = (rng.range_inclusive(1, 64), rng.range_inclusive(1, 8));
        let cost = CostMatrix::new(Matrix::from_fn(r, c, |_, _| 2.0 * rng.uniform()), CostMetric::Cosine);
        let m = Marginals::uniform(r, c);
        for (k, (cfg, tol)) in [(SinkhornConfig::default(), 0.01), (strict, 1e-6)].into_iter().enumerate() {
            let plan = sinkhorn(&cost, &m, &cfg).expect("sinkhorn runs");
            if plan.converged {
                converged[k] += 1;
                let err = marginal_error(&plan.coupling, &m);
                worst[k] = worst[k].max(err);
                ok &= err <= tol;
            }
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(5) && converged.iter().all(|&n| n > 0);
    Outcome {
        pass: ok,
        detail: format!(
            "defaults: {}/200 converged, worst marginal error {:.2e}; delta=1e-6: {}/200 converged, worst {:.2e}; {:.2}s",
            converged[0],
            worst[0],
            converged[1],
            worst[1],
            elapsed.as_secs_f64()
        ),
    }
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn exact_ot_agreement() -> Outcome {
    let mut rng = Rng::new(2);
    let perms = permutations(4);
    let cfg = SinkhornConfig {
        lambda: 0.001,
        delta: 1e-6,
        max_iters: 200_000,
        log_domain: true,
    };
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let values = Matrix::from_fn(4, 4, |_, _| 2.0 * rng.uniform());
        let exact = perms
            .iter()
            .map(|p| (0..4).map(|i| values[(i, p[i])]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            / 4.0;
        let cost = CostMatrix::new(values, CostMetric::Cosine);
        let plan = sinkhorn(&cost, &Marginals::uniform(4, 4), &cfg).expect("sinkhorn runs");
        let got = ot_distance(&plan, &cost).expect("shapes agree");
        worst = worst.max((got - exact).abs());
    }
    Outcome {
        pass: worst <= 1e-2,
        detail: format!("worst |sinkhorn - exact| over 50 problems = {worst:.2e}"),
    }
}

fn gradient_correctness() -> Outcome {
    let cfg = TrainConfig {
        num_prompts: 2,
        fpn_levels: 2,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut model = ModelState::init(cfg, 2, 8).expect("model");
    // Move the head off its all-positive init so both rectifier branches occur.
    model.head.bias.value.fill(0.3);
    let mut rng = Rng::new(4);
    let seq = FeatureSequence {
        video_id: "fixture".into(),
        features: Matrix::from_fn(8, 8, |_, _| rng.gaussian(0.0, 1.0)),
        clip_stride_seconds: 1.0,
        annotations: vec![
            GroundTruthSegment { start: 0.0, end: 3.0, class_id: 0 },
            GroundTruthSegment { start: 3.0, end: 8.0, class_id: 1 },
        ],
    };
    let prompts = model.encode_all().expect("encode");
    let (_, grads, fwd) = model.video_loss(&seq, &prompts, None).expect("loss");
    let frozen = fwd.couplings();
    let mut d_prompts: Vec<Matrix> = prompts.iter().map(|p| Matrix::zeros(p.embeddings().rows(), 8)).collect();
    model.zero_grad();
    model.backward(&fwd, &prompts, &grads, &mut d_prompts).expect("backward");
    model.backward_prompts(&prompts, &d_prompts).expect("backward prompts");
    let analytic: Vec<Matrix> = model.slots().map(|s| s.grad.clone()).collect();

    let loss_at = |m: &ModelState| {
        let p = m.encode_all().expect("encode");
        m.video_loss(&seq, &p, Some(&frozen)).expect("loss").0.total
    };
    let h = 1e-6;
    let (mut worst, mut checked) = (0.0f64, 0usize);
    for (si, grad) in analytic.iter().enumerate() {
        for k in 0..grad.as_slice().len() {
            let mut probe = model.clone();
            probe.slots_mut().nth(si).expect("slot").value.as_mut_slice()[k] += h;
            let up = loss_at(&probe);
            probe.slots_mut().nth(si).expect("slot").value.as_mut_slice()[k] -= 2.0 * h;
            let down = loss_at(&probe);
            let fd = (up - down) / (2.0 * h);
            let an = grad.as_slice()[k];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-6);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    Outcome {
        pass: worst <= 1e-4,
        detail: format!("{checked} parameters (contexts, conv, head), worst relative error {worst:.2e}"),
    }
}

fn loss_suite() -> Outcome {
    let mut worst_bce = 0.0f64;
    for i in 1..=99 {
        let p = i as f64 / 100.0;
        for y in [true, false] {
            let bce = if y { -p.ln() } else { -(1.0 - p).ln() };
            worst_bce = worst_bce.max((focal_loss(p, y, None, 0.0) - bce).abs());
        }
    }
    let iv = |a: f64, b: f64| Interval::new(a, b);
    let fixtures = [
        (diou_loss(iv(0.0, 2.0), iv(0.0, 2.0)), 0.0),
        (diou_loss(iv(0.0, 2.0), iv(1.0, 3.0)), 1.0 - 1.0 / 3.0 + 1.0 / 9.0),
        (diou_loss(iv(0.0, 1.0), iv(3.0, 4.0)), 1.5625),
    ];
    let worst_diou = fixtures.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let got: Vec<String> = fixtures.iter().map(|(a, _)| format!("{a:.5}")).collect();
    Outcome {
        pass: worst_bce <= 1e-9 && worst_diou <= 1e-6,
        detail: format!(
            "focal(gamma=0) vs BCE worst {worst_bce:.1e}; diou fixtures [{}] worst {worst_diou:.1e}",
            got.join(", ")
        ),
    }
}

fn evaluation_oracle() -> Outcome {
    let gts = [
        GtSegment { video: 0, interval: Interval::new(0.0, 10.0) },
        GtSegment { video: 0, interval: Interval::new(20.0, 30.0) },
    ];
    let preds = [
        ScoredSegment { video: 0, interval: Interval::new(0.0, 10.0), score: 0.9 },
        ScoredSegment { video: 0, interval: Interval::new(40.0, 50.0), score: 0.8 },
        ScoredSegment { video: 0, interval: Interval::new(20.0, 30.0), score: 0.7 },
    ];
    let ap: f64 = average_precision(&preds, &gts, 0.5);
    let fixture_ok = (ap - 5.0 / 6.0).abs() <= 1e-9;

    let mut rng = Rng::new(5);
    let spec = GenSpec {
        num_classes: 4,
        num_test_videos: 6,
        num_train_videos: 4,
        seed: 9,
        ..GenSpec::default()
    };
    let corpus = generate_corpus(&spec).expect("corpus");
    let thresholds: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let mut monotone = true;
    for _ in 0..20 {
        let preds: Vec<Vec<ActionInstance>> = corpus
            .test
            .iter()
            .map(|v| {
                let mut out = Vec::new();
                for g in &v.annotations {
                    if rng.uniform() < 0.8 {
                        let jitter = |x: f64, r: &mut Rng| x + r.gaussian(0.0, 3.0);
                        let (a, b) = (jitter(g.start, &mut rng), jitter(g.end, &mut rng));
                        out.push(ActionInstance {
                            start: a.min(b),
                            end: a.max(b) + 0.5,
                            class_id: g.class_id,
                            score: rng.uniform(),
                        });
                    }
                }
                for _ in 0..rng.range_inclusive(0, 4) {
                    let s = rng.uniform() * 200.0;
                    out.push(ActionInstance {
                        start: s,
                        end: s + 5.0 + rng.uniform() * 30.0,
                        class_id: rng.range_inclusive(0, 3),
                        score: rng.uniform(),
                    });
                }
                out
            })
            .collect();
        let r = evaluate(&preds, &corpus.test, 4, &thresholds).expect("evaluate");
        monotone &= r.per_threshold.windows(2).all(|w| w[1].map <= w[0].map);
    }
    Outcome {
        pass: fixture_ok && monotone,
        detail: format!("fixture AP = {ap:.10} (5/6); mAP non-increasing in threshold on 20 sets: {monotone}"),
    }
}

struct Cell {
    label: &'static str,
    strategy: AlignmentStrategy,
    prompts: usize,
}

struct CellResult {
    per_threshold: Vec<f64>,
    average: f64,
    slowest: Duration,
}

const SEEDS: [u64; 3] = [0, 1, 2];

/// Synthetic protocol: 8 classes, 32-d features, shared sub-events, 40 test
/// videos; every cell is trained with the same settings for each seed.
fn protocol_config(strategy: AlignmentStrategy, prompts: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        alignment_strategy: strategy,
        num_prompts: prompts,
        seed,
        learning_rate: 3e-3,
        ..TrainConfig::default()
    }
}

fn run_protocol(cells: &[Cell]) -> Vec<CellResult> {
    let spec = GenSpec { seed: 7, ..GenSpec::default() };
    assert!(spec.num_classes == 8 && spec.feature_dim == 32 && spec.prototype_sharing && spec.num_test_videos == 40);
    let corpus = generate_corpus(&spec).expect("corpus");
    cells
        .iter()
        .map(|cell| {
            let mut per = vec![0.0; DEFAULT_THRESHOLDS.len()];
            let mut average = 0.0;
            let mut slowest = Duration::ZERO;
            let mut seeds = Vec::new();
            for seed in SEEDS {
                let start = Instant::now();
                let cfg = protocol_config(cell.strategy, cell.prompts, seed);
                let mut model = ModelState::init(cfg, spec.num_classes, spec.feature_dim).expect("model");
                train(&mut model, &corpus.train, |_| {}).expect("training");
                let prompts = model.encode_all().expect("encode");
                let preds: Vec<_> = corpus
                    .test
                    .iter()
                    .map(|v| model.predict_with(v, &prompts).expect("predict"))
                    .collect();
                let r = evaluate(&preds, &corpus.test, spec.num_classes, &DEFAULT_THRESHOLDS).expect("evaluate");
                slowest = slowest.max(start.elapsed());
                for (acc, t) in per.iter_mut().zip(&r.per_threshold) {
                    *acc += t.map / SEEDS.len() as f64;
                }
                average += r.average_map / SEEDS.len() as f64;
                seeds.push(format!("{:.4}", r.average_map));
            }
            let _ = writeln!(
                std::io::stderr(),
                "  {:<12} avg mAP {:.4}  @0.3 {:.4}  @0.7 {:.4}  per seed [{}]  slowest run {:.1}s",
                cell.label,
                average,
                per[0],
                per[per.len() - 1],
                seeds.join(" "),
                slowest.as_secs_f64()
            );
            CellResult { per_threshold: per, average, slowest }
        })
        .collect()
}

fn directional_and_ablation() -> (Outcome, Outcome) {
    let cells = [
        Cell { label: "ot N=6", strategy: AlignmentStrategy::Ot, prompts: 6 },
        Cell { label: "mean N=6", strategy: AlignmentStrategy::Mean, prompts: 6 },
        Cell { label: "ot N=1", strategy: AlignmentStrategy::Ot, prompts: 1 },
        Cell { label: "hungarian", strategy: AlignmentStrategy::Hungarian, prompts: 6 },
        Cell { label: "euclidean", strategy: AlignmentStrategy::Euclidean, prompts: 6 },
    ];
    let r = run_protocol(&cells);
    let limit = Duration::from_secs(300);
    let within = r.iter().all(|c| c.slowest <= limit);
    let (ot6, mean6, ot1, hung, euc) = (&r[0], &r[1], &r[2], &r[3], &r[4]);
    let last = DEFAULT_THRESHOLDS.len() - 1;
    let margin_hi = ot6.per_threshold[last] - ot1.per_threshold[last];
    let margin_lo = ot6.per_threshold[0] - ot1.per_threshold[0];
    let c6 = Outcome {
        pass: ot6.average > mean6.average && ot6.average > ot1.average && margin_hi > margin_lo && within,
        detail: format!(
            "ot6 {:.4} vs mean6 {:.4} ({}), vs ot1 {:.4} ({}); margin@0.7 {:+.4} vs margin@0.3 {:+.4} ({}); runs <= 5 min: {within}",
            ot6.average,
            mean6.average,
            ot6.average > mean6.average,
            ot1.average,
            ot6.average > ot1.average,
            margin_hi,
            margin_lo,
            margin_hi > margin_lo
        ),
    };
    let c7 = Outcome {
        pass: ot6.average >= hung.average && hung.average >= euc.average,
        detail: format!(
            "ot {:.4} >= hungarian {:.4} ({}) >= euclidean {:.4} ({})",
            ot6.average,
            hung.average,
            ot6.average >= hung.average,
            euc.average,
            hung.average >= euc.average
        ),
    };
    (c6, c7)
}

fn cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_plottal"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn determinism(tmp: &Path) -> Outcome {
    let data = tmp.join("det-data");
    let d = data.to_str().expect("utf-8 path");
    cli(&["gen-data", "--classes", "4", "--clips", "128", "--train-videos", "12", "--test-videos", "4", "--seed", "3", "--out", d]);
    let runs: Vec<_> = ["a", "b"].iter().map(|n| tmp.join(format!("det-{n}"))).collect();
    for r in &runs {
        let o = r.to_str().expect("utf-8 path");
        cli(&["train", "--data", d, "--out", o, "--epochs", "4", "--seed", "5", "--shots", "3"]);
    }
    let same = |f: &str| std::fs::read(runs[0].join(f)).ok() == std::fs::read(runs[1].join(f)).ok();
    let (model, loss) = (same("model.json"), same("loss.csv"));
    Outcome {
        pass: model && loss,
        detail: format!("model.json identical: {model}; loss.csv identical: {loss}"),
    }
}

fn round_trips(tmp: &Path) -> Outcome {
    let spec = GenSpec {
        num_classes: 4,
        num_train_videos: 10,
        num_test_videos: 4,
        seed: 21,
        ..GenSpec::default()
    };
    let corpus = generate_corpus(&spec).expect("corpus");
    let dir = tmp.join("rt-corpus");
    write_corpus(&corpus, &dir).expect("write");
    let back = read_corpus(&dir).expect("read");
    let corpus_ok = back.train == corpus.train
        && back.test == corpus.test
        && back.manifest == corpus.manifest
        && back.prototypes == corpus.prototypes;

    let cfg = TrainConfig { epochs: 2, shots: 3, ..TrainConfig::default() };
    let mut model = ModelState::init(cfg, 4, 32).expect("model");
    train(&mut model, &corpus.train, |_| {}).expect("train");
    let path = tmp.join("rt-model.json");
    save_model(&model, &path).expect("save");
    let loaded = load_model(&path).expect("load");
    let (p, q) = (model.encode_all().expect("encode"), loaded.encode_all().expect("encode"));
    let model_ok = corpus.test.iter().all(|v| {
        let a = model.forward(&v.features, &p, None).expect("forward");
        let b = loaded.forward(&v.features, &q, None).expect("forward");
        a.outputs == b.outputs
    });
    Outcome {
        pass: corpus_ok && model_ok,
        detail: format!("corpus write->read equal: {corpus_ok}; model save->load forward bit-exact: {model_ok}"),
    }
}

#[test]
fn acceptance() {
    let tmp = tempfile::tempdir().expect("tempdir");
    let mut results = Vec::new();
    let mut record = |n: usize, name: &str, o: Outcome| {
        report(n, name, &o);
        results.push((n, o.pass));
    };
    record(1, "sinkhorn feasibility", sinkhorn_feasibility());
    record(2, "exact OT agreement", exact_ot_agreement());
    record(3, "gradient correctness", gradient_correctness());
    record(4, "loss functions", loss_suite());
    record(5, "evaluation oracle", evaluation_oracle());
    let (c6, c7) = directional_and_ablation();
    record(6, "ot6 > mean6, ot6 > ot1, high-IoU margin", c6);
    record(7, "ot >= hungarian >= euclidean", c7);
    record(8, "determinism", determinism(tmp.path()));
    record(9, "round trips", round_trips(tmp.path()));
    let failed: Vec<usize> = results.iter().filter(|(_, p)| !p).map(|(n, _)| *n).collect();
    assert!(failed.is_empty(), "failed acceptance criteria: {failed:?}");
}
