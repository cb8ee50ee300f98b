//! Seeded synthetic corpora of compositional actions.
//!
//! Every class is an ordered sequence of sub-events drawn from a shared pool
//! of prototype directions. An action instance spans 8 to 32 clips split into
//! equal parts, one per sub-event; each in-action clip is its sub-event's
//! prototype plus Gaussian noise. Everything else is background noise whose
//! mean differs between the train and test splits.

mod io;

use serde::{Deserialize, Serialize};

use crate::codec::EncodedMatrix;
use crate::error::{Error, Result};
use crate::numerics::{l2_normalize_rows, Rng};
use crate::representation::{FeatureSequence, GroundTruthSegment};
use crate::Matrix;

pub use io::{read_corpus, read_split, write_corpus, MANIFEST_FILE};

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSpec {
    pub num_classes: usize,
    pub sub_events_per_class: usize,
    pub prototype_pool_size: usize,
    pub feature_dim: usize,
    pub clips_per_video: usize,
    pub min_instances_per_video: usize,
    pub max_instances_per_video: usize,
    pub min_instance_clips: usize,
    pub max_instance_clips: usize,
    pub num_train_videos: usize,
    pub num_test_videos: usize,
    pub noise_sigma: f64,
    pub background_sigma: f64,
    /// Norm of the test split's background mean (train background is centered).
    pub background_shift: f64,
    pub prototype_sharing: bool,
    pub clip_stride_seconds: f64,
    pub seed: u64,
}

impl Default for GenSpec {
    fn default() -> Self {
        Self {
            num_classes: 8,
            sub_events_per_class: 3,
            prototype_pool_size: 12,
            feature_dim: 32,
            clips_per_video: 256,
            min_instances_per_video: 1,
            max_instances_per_video: 3,
            min_instance_clips: 8,
            max_instance_clips: 32,
            num_train_videos: 40,
            num_test_videos: 40,
            noise_sigma: 0.3,
            background_sigma: 1.0,
            background_shift: 1.0,
            prototype_sharing: true,
            clip_stride_seconds: 1.0,
            seed: 0,
        }
    }
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.num_classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.sub_events_per_class == 0 || self.prototype_pool_size < self.sub_events_per_class {
            return bad(format!(
                "prototype pool of {} cannot supply {} sub-events per class",
                self.prototype_pool_size, self.sub_events_per_class
            ));
        }
        if !self.prototype_sharing && self.prototype_pool_size < self.num_classes * self.sub_events_per_class {
            return bad(format!(
                "without sharing, {} classes x {} sub-events need a pool of at least {}",
                self.num_classes,
                self.sub_events_per_class,
                self.num_classes * self.sub_events_per_class
            ));
        }
        let orderings = (0..self.sub_events_per_class)
            .fold(1usize, |acc, i| acc.saturating_mul(self.prototype_pool_size - i));
        if orderings < self.num_classes {
            return bad(format!(
                "only {orderings} distinct sub-event sequences for {} classes",
                self.num_classes
            ));
        }
        if self.feature_dim == 0 {
            return bad("feature_dim must be at least 1".into());
        }
        if self.min_instances_per_video == 0 || self.min_instances_per_video > self.max_instances_per_video {
            return bad("instances per video must satisfy 1 <= min <= max".into());
        }
        if self.min_instance_clips < self.sub_events_per_class || self.min_instance_clips > self.max_instance_clips {
            return bad(format!(
                "instance length must satisfy {} <= min <= max",
                self.sub_events_per_class
            ));
        }
        if self.max_instances_per_video * self.max_instance_clips > self.clips_per_video {
            return bad(format!(
                "{} instances of up to {} clips do not fit in {} clips",
                self.max_instances_per_video, self.max_instance_clips, self.clips_per_video
            ));
        }
        if !(self.noise_sigma >= 0.0 && self.background_sigma >= 0.0 && self.background_shift >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        if !(self.clip_stride_seconds > 0.0) {
            return bad("clip stride must be positive".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFiles {
    pub train: String,
    pub test: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub class_names: Vec<String>,
    pub sub_events: Vec<Vec<usize>>,
    pub files: SplitFiles,
    pub feature_dim: usize,
    pub prototypes: EncodedMatrix,
    pub spec: GenSpec,
}

impl CorpusManifest {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    /// Classes that share at least one sub-event with another class.
    pub fn shared_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for a in 0..self.sub_events.len() {
            for b in a + 1..self.sub_events.len() {
                if self.sub_events[a].iter().any(|e| self.sub_events[b].contains(e)) {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    pub manifest: CorpusManifest,
    pub prototypes: Matrix,
    pub train: Vec<FeatureSequence>,
    pub test: Vec<FeatureSequence>,
}

/// `pool` unit prototypes in `dim` dimensions; orthonormal when `pool <= dim`.
fn sample_prototypes(pool: usize, dim: usize, rng: &mut Rng) -> Matrix {
    let raw = Matrix::from_fn(pool, dim, |_, _| rng.gaussian(0.0, 1.0));
    if pool > dim {
        log::warn!("prototype pool {pool} exceeds feature dim {dim}; using raw unit vectors");
        return l2_normalize_rows(&raw, 1e-12).matrix;
    }
    let mut basis = Matrix::zeros(pool, dim);
    for i in 0..pool {
        let mut v = raw.row(i).to_vec();
        for j in 0..i {
            let b = basis.row(j);
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (dst, x) in basis.row_mut(i).iter_mut().zip(&v) {
            *dst = x / norm;
        }
    }
    basis
}

const MAX_DEALS: usize = 10_000;

fn shared(a: &[usize], b: &[usize]) -> usize {
    a.iter().filter(|e| b.contains(e)).count()
}

/// Deals the pool out in shuffled rounds so prototypes are used evenly.
/// Returns `None` if a class repeats a sub-event or two classes coincide.
fn deal(spec: &GenSpec, rng: &mut Rng) -> Option<Vec<Vec<usize>>> {
    let s = spec.sub_events_per_class;
    let mut slots = Vec::with_capacity(spec.num_classes * s + spec.prototype_pool_size);
    while slots.len() < spec.num_classes * s {
        let mut pool: Vec<usize> = (0..spec.prototype_pool_size).collect();
        rng.shuffle(&mut pool);
        slots.extend(pool);
    }
    let classes: Vec<Vec<usize>> = slots.chunks(s).take(spec.num_classes).map(|c| c.to_vec()).collect();
    let repeats = classes.iter().any(|c| (1..c.len()).any(|i| c[..i].contains(&c[i])));
    let duplicate = (0..classes.len()).any(|a| classes[a + 1..].contains(&classes[a]));
    (!repeats && !duplicate).then_some(classes)
}

fn compose_classes(spec: &GenSpec, rng: &mut Rng) -> Vec<Vec<usize>> {
    let s = spec.sub_events_per_class;
    if !spec.prototype_sharing {
        let mut pool: Vec<usize> = (0..spec.prototype_pool_size).collect();
        rng.shuffle(&mut pool);
        return pool.chunks(s).take(spec.num_classes).map(|c| c.to_vec()).collect();
    }
    // Prefer even deals where no two classes share more than s - 2 sub-events.
    let mut fallback = None;
    let mut classes = None;
    for _ in 0..MAX_DEALS {
        let Some(cand) = deal(spec, rng) else { continue };
        let close = s > 1
            && (0..cand.len()).any(|a| (a + 1..cand.len()).any(|b| shared(&cand[a], &cand[b]) + 1 >= s));
        if !close {
            classes = Some(cand);
            break;
        }
        fallback.get_or_insert(cand);
    }
    let mut classes = classes.or(fallback).unwrap_or_else(|| {
        let mut out: Vec<Vec<usize>> = Vec::with_capacity(spec.num_classes);
        while out.len() < spec.num_classes {
            let mut pool: Vec<usize> = (0..spec.prototype_pool_size).collect();
            rng.shuffle(&mut pool);
            let cand = pool[..s].to_vec();
            if !out.contains(&cand) {
                out.push(cand);
            }
        }
        out
    });
    // A large pool may leave every class disjoint; force one overlap.
    let shares = (0..classes.len()).any(|a| (a + 1..classes.len()).any(|b| shared(&classes[a], &classes[b]) > 0));
    if !shares {
        let e = classes[0][0];
        classes[1][0] = e;
    }
    classes
}

struct SplitParams<'a> {
    prefix: &'a str,
    count: usize,
    background_mean: Vec<f64>,
}

fn generate_split(
    spec: &GenSpec,
    prototypes: &Matrix,
    sub_events: &[Vec<usize>],
    params: SplitParams<'_>,
    rng: &mut Rng,
) -> Vec<FeatureSequence> {
    let (t_len, d) = (spec.clips_per_video, spec.feature_dim);
    let counts: Vec<usize> = (0..params.count)
        .map(|_| rng.range_inclusive(spec.min_instances_per_video, spec.max_instances_per_video))
        .collect();
    // Classes cycle so every class gets a near-equal share of the instances.
    let total: usize = counts.iter().sum();
    let mut labels: Vec<usize> = (0..total).map(|i| i % spec.num_classes).collect();
    rng.shuffle(&mut labels);
    let mut labels = labels.into_iter();

    let mut videos = Vec::with_capacity(params.count);
    for (v, &k) in counts.iter().enumerate() {
        let durations: Vec<usize> = (0..k)
            .map(|_| rng.range_inclusive(spec.min_instance_clips, spec.max_instance_clips))
            .collect();
        let free = t_len - durations.iter().sum::<usize>();
        let mut cuts: Vec<usize> = (0..k).map(|_| rng.range_inclusive(0, free)).collect();
        cuts.sort_unstable();

        let mut features = Matrix::from_fn(t_len, d, |_, j| {
            params.background_mean[j] + rng.gaussian(0.0, spec.background_sigma)
        });
        let mut annotations = Vec::with_capacity(k);
        let mut cursor = 0;
        let mut prev_cut = 0;
        for (i, &dur) in durations.iter().enumerate() {
            cursor += cuts[i] - prev_cut;
            prev_cut = cuts[i];
            let class_id = labels.next().expect("one label per instance");
            let events = &sub_events[class_id];
            let parts = events.len();
            for p in 0..parts {
                let lo = cursor + p * dur / parts;
                let hi = cursor + (p + 1) * dur / parts;
                let proto = prototypes.row(events[p]);
                for t in lo..hi {
                    for (dst, &x) in features.row_mut(t).iter_mut().zip(proto) {
                        *dst = x + rng.gaussian(0.0, spec.noise_sigma);
                    }
                }
            }
            annotations.push(GroundTruthSegment {
                start: cursor as f64 * spec.clip_stride_seconds,
                end: (cursor + dur) as f64 * spec.clip_stride_seconds,
                class_id,
            });
            cursor += dur;
        }
        videos.push(FeatureSequence {
            video_id: format!("{}_{v:04}", params.prefix),
            features,
            clip_stride_seconds: spec.clip_stride_seconds,
            annotations,
        });
    }
    videos
}

/// Builds both splits in memory. The same spec always yields the same corpus.
pub fn generate_corpus(spec: &GenSpec) -> Result<Corpus> {
    spec.validate()?;
    let root = Rng::new(spec.seed);
    let prototypes = sample_prototypes(spec.prototype_pool_size, spec.feature_dim, &mut root.fork(1));
    let sub_events = compose_classes(spec, &mut root.fork(2));

    let mut shift_rng = root.fork(5);
    let dir: Vec<f64> = (0..spec.feature_dim).map(|_| shift_rng.gaussian(0.0, 1.0)).collect();
    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    let test_mean = dir.iter().map(|x| x / norm * spec.background_shift).collect();

    let train = generate_split(
        spec,
        &prototypes,
        &sub_events,
        SplitParams {
            prefix: "train",
            count: spec.num_train_videos,
            background_mean: vec![0.0; spec.feature_dim],
        },
        &mut root.fork(3),
    );
    let test = generate_split(
        spec,
        &prototypes,
        &sub_events,
        SplitParams {
            prefix: "test",
            count: spec.num_test_videos,
            background_mean: test_mean,
        },
        &mut root.fork(4),
    );
    let manifest = CorpusManifest {
        schema_version: CORPUS_SCHEMA_VERSION,
        class_names: (0..spec.num_classes).map(|c| format!("action_{c:02}")).collect(),
        sub_events,
        files: SplitFiles {
            train: "train.jsonl".into(),
            test: "test.jsonl".into(),
        },
        feature_dim: spec.feature_dim,
        prototypes: EncodedMatrix::encode(&prototypes),
        spec: spec.clone(),
    };
    Ok(Corpus {
        manifest,
        prototypes,
        train,
        test,
    })
}
