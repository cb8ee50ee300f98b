use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::info;
use plottal::datagen::{generate_corpus, read_corpus, write_corpus, Corpus};
use plottal::evalkit::{evaluate, EvalReport};
use plottal::representation::FeatureSequence;
use plottal::trainer::{load_model, save_model, train as fit, AlignmentStrategy, ModelState, TrainConfig};

use crate::config::RunConfig;
use crate::{AblateArgs, CliError, DumpPlanArgs, EvalArgs, GenDataArgs, TrainArgs};

pub fn gen_data(a: GenDataArgs) -> Result<(), CliError> {
    let mut rc = RunConfig::load(a.config.as_deref())?;
    if a.out.is_some() {
        rc.out = a.out;
    }
    let g = &mut rc.gen;
    macro_rules! set {
        ($($flag:expr => $field:ident),*) => { $(if let Some(v) = $flag { g.$field = v; })* };
    }
    set!(a.classes => num_classes, a.seed => seed, a.feature_dim => feature_dim, a.clips => clips_per_video,
        a.train_videos => num_train_videos, a.test_videos => num_test_videos, a.noise => noise_sigma,
        a.background_shift => background_shift);
    if a.no_sharing {
        g.prototype_sharing = false;
    }
    rc.gen.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let out = rc.out_dir()?;
    let corpus = generate_corpus(&rc.gen)?;
    write_corpus(&corpus, out)?;
    info!(
        "wrote {} train and {} test videos to {}",
        corpus.train.len(),
        corpus.test.len(),
        out.display()
    );
    Ok(())
}

fn check_model_fits(model: &ModelState, corpus: &Corpus) -> Result<(), CliError> {
    model.check_compatible(corpus.manifest.feature_dim, corpus.manifest.num_classes())?;
    Ok(())
}

fn loss_csv(history: &[plottal::trainer::EpochLog]) -> String {
    let mut s = String::from("epoch,cls,reg,total\n");
    for h in history {
        let _ = writeln!(s, "{},{},{},{}", h.epoch, h.cls, h.reg, h.total);
    }
    s
}

pub fn train(a: TrainArgs) -> Result<(), CliError> {
    let mut rc = RunConfig::load(a.config.as_deref())?;
    if a.data.is_some() {
        rc.data = a.data;
    }
    if a.out.is_some() {
        rc.out = a.out;
    }
    a.flags.apply(&mut rc.train);
    rc.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let (data, out) = (rc.data_dir()?.to_path_buf(), rc.out_dir()?.to_path_buf());
    let corpus = read_corpus(&data)?;
    let mut model = ModelState::init(rc.train.clone(), corpus.manifest.num_classes(), corpus.manifest.feature_dim)?;
    info!(
        "training {} with {} prompts, {} shots, {} epochs",
        rc.train.alignment_strategy, rc.train.num_prompts, rc.train.shots, rc.train.epochs
    );
    let outcome = fit(&mut model, &corpus.train, |e| {
        info!("epoch {:>4}  cls {:.5}  reg {:.5}  total {:.5}", e.epoch, e.cls, e.reg, e.total)
    })?;
    info!("support videos: {}", outcome.support.join(" "));
    rc.gen = corpus.manifest.spec.clone();
    rc.write_resolved(&out)?;
    save_model(&model, &out.join("model.json"))?;
    fs::write(out.join("loss.csv"), loss_csv(&outcome.history)).map_err(plottal::Error::from)?;
    info!("wrote model.json and loss.csv to {}", out.display());
    Ok(())
}

fn predict_all(model: &ModelState, videos: &[FeatureSequence]) -> Result<Vec<Vec<plottal::localizer::ActionInstance>>, CliError> {
    let prompts = model.encode_all()?;
    Ok(videos
        .iter()
        .map(|v| model.predict_with(v, &prompts))
        .collect::<plottal::Result<_>>()?)
}

pub fn eval(a: EvalArgs) -> Result<(), CliError> {
    let mut rc = RunConfig::load(a.config.as_deref())?;
    if a.data.is_some() {
        rc.data = a.data;
    }
    if let Some(t) = a.thresholds {
        rc.thresholds = t.0;
    }
    let data = rc.data_dir()?.to_path_buf();
    let out = match a.out.or(rc.out.clone()) {
        Some(o) => o,
        None => a.model.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
    };
    let model = load_model(&a.model)?;
    let corpus = read_corpus(&data)?;
    check_model_fits(&model, &corpus)?;
    let split = if a.on_train { &corpus.train } else { &corpus.test };
    if split.is_empty() {
        return Err(CliError::Data(format!(
            "the {} split of {} is empty",
            if a.on_train { "train" } else { "test" },
            data.display()
        )));
    }
    let preds = predict_all(&model, split)?;
    let report = evaluate(&preds, split, model.num_classes, &rc.thresholds)?;
    report.write(&out)?;
    println!("{}", report.summary_table());
    if !report.excluded_classes.is_empty() {
        info!("classes without ground truth: {:?}", report.excluded_classes);
    }
    Ok(())
}

#[derive(Clone, Debug)]
struct Cell {
    strategy: AlignmentStrategy,
    prompts: usize,
    n_ctx: usize,
    fpn_levels: usize,
    seed: u64,
}

fn run_cell(base: &TrainConfig, cell: &Cell, corpus: &Corpus, thresholds: &[f64]) -> Result<EvalReport, CliError> {
    let cfg = TrainConfig {
        alignment_strategy: cell.strategy,
        num_prompts: cell.prompts,
        n_ctx: cell.n_ctx,
        fpn_levels: cell.fpn_levels,
        seed: cell.seed,
        ..base.clone()
    };
    let mut model = ModelState::init(cfg, corpus.manifest.num_classes(), corpus.manifest.feature_dim)?;
    fit(&mut model, &corpus.train, |_| {})?;
    let preds = predict_all(&model, &corpus.test)?;
    Ok(evaluate(&preds, &corpus.test, model.num_classes, thresholds)?)
}

pub fn ablate(a: AblateArgs) -> Result<(), CliError> {
    let mut rc = RunConfig::load(a.config.as_deref())?;
    if a.data.is_some() {
        rc.data = a.data;
    }
    if a.out.is_some() {
        rc.out = a.out;
    }
    if let Some(t) = a.thresholds {
        rc.thresholds = t.0;
    }
    a.flags.apply(&mut rc.train);
    rc.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if a.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let (data, out) = (rc.data_dir()?.to_path_buf(), rc.out_dir()?.to_path_buf());
    let corpus = read_corpus(&data)?;
    if corpus.test.is_empty() {
        return Err(CliError::Data(format!("the test split of {} is empty", data.display())));
    }
    let or_base = |grid: &[usize], base: usize| if grid.is_empty() { vec![base] } else { grid.to_vec() };
    let mut cells = Vec::new();
    for &strategy in &a.strategies {
        for &prompts in &or_base(&a.prompt_grid, rc.train.num_prompts) {
            for &n_ctx in &or_base(&a.n_ctx_grid, rc.train.n_ctx) {
                for &fpn_levels in &or_base(&a.fpn_grid, rc.train.fpn_levels) {
                    for &seed in &a.seeds {
                        cells.push(Cell { strategy, prompts, n_ctx, fpn_levels, seed });
                    }
                }
            }
        }
    }
    info!("{} cells on {} worker(s)", cells.len(), a.jobs.min(cells.len()));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<EvalReport, CliError>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..a.jobs.min(cells.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(cell) = cells.get(i) else { break };
                let r = run_cell(&rc.train, cell, &corpus, &rc.thresholds);
                if let Ok(rep) = &r {
                    info!("{cell:?}: avg mAP {:.4}", rep.average_map);
                }
                results.lock().expect("result lock")[i] = Some(r);
            });
        }
    });
    let results = results.into_inner().expect("result lock");

    let mut csv = String::from("strategy,prompts,n_ctx,fpn_levels,seed");
    for t in &rc.thresholds {
        let _ = write!(csv, ",map@{t}");
    }
    csv.push_str(",avg\n");
    for (cell, r) in cells.iter().zip(results) {
        let rep = r.expect("every cell ran")?;
        let _ = write!(
            csv,
            "{},{},{},{},{}",
            cell.strategy, cell.prompts, cell.n_ctx, cell.fpn_levels, cell.seed
        );
        for t in &rep.per_threshold {
            let _ = write!(csv, ",{}", t.map);
        }
        let _ = writeln!(csv, ",{}", rep.average_map);
    }
    rc.write_resolved(&out)?;
    fs::write(out.join("ablation.csv"), &csv).map_err(plottal::Error::from)?;
    print!("{csv}");
    Ok(())
}

pub fn dump_plan(a: DumpPlanArgs) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let corpus = read_corpus(&a.data)?;
    check_model_fits(&model, &corpus)?;
    let video = corpus
        .test
        .iter()
        .chain(&corpus.train)
        .find(|v| v.video_id == a.video)
        .ok_or_else(|| CliError::Data(format!("no video '{}' in {}", a.video, a.data.display())))?;
    let table = model.transport_table(video, a.class)?;
    let mut csv = String::from("clip");
    for j in 0..table.cols() {
        let _ = write!(csv, ",prompt_{j}");
    }
    csv.push('\n');
    for t in 0..table.rows() {
        let _ = write!(csv, "{t}");
        for v in table.row(t) {
            let _ = write!(csv, ",{v}");
        }
        csv.push('\n');
    }
    match a.out {
        Some(p) => fs::write(p, csv).map_err(plottal::Error::from)?,
        None => print!("{csv}"),
    }
    Ok(())
}
