use crate::error::{Error, Result};
use crate::localizer::{
    assign_targets, decode, nms, score_locations_backward, score_with_coupling, total_loss_with_grad, ActionInstance,
    HeadForward, LevelLogits, LossBreakdown, LossGrads, RegressionHead, RegressionRanges,
};
use crate::numerics::{l2_normalize_rows, normalize_rows_backward, GradSlot, Rng, RowNormalized};
use crate::otalign::{
    balanced_assignment, cosine_cost, cosine_cost_backward, mean_prompt, mean_prompt_backward, sinkhorn,
    sq_euclidean_cost, sq_euclidean_cost_backward, CostMetric, Marginals,
};
use crate::representation::{
    build_pyramid, encode_prompts, init_context_bank, ConvForward, FeatureSequence, PromptEncoding,
};
use crate::trainer::{AlignmentStrategy, TrainConfig};
use crate::{Contexts, ConvStack, Cost, Encoder, Matrix, Pyramid};

const NORM_EPS: f64 = 1e-12;
/// Squared-Euclidean costs are halved before scoring. Between unit rows this
/// equals the cosine cost, so every strategy shares one logit scale and they
/// differ only in the coupling.
const SQ_EUCLIDEAN_SCALE: f64 = 0.5;

fn half_sq_euclidean(feats: &Matrix, prompts: &Matrix) -> Result<Cost> {
    let mut cost = sq_euclidean_cost(feats, prompts)?;
    cost.values = cost.values.scale(SQ_EUCLIDEAN_SCALE);
    Ok(cost)
}

/// Everything trainable plus what is needed to rebuild the frozen parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelState {
    pub config: TrainConfig,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub encoder: Encoder,
    pub contexts: Contexts,
    pub conv: ConvStack,
    pub head: RegressionHead<f64>,
    pub epoch: usize,
}

/// Couplings used for scoring, indexed `[level][class]`. Passing them back
/// into [`ModelState::forward`] freezes the inner alignment.
#[derive(Clone, Debug, PartialEq)]
pub struct Couplings {
    pub levels: Vec<Vec<Matrix>>,
}

#[derive(Clone, Debug)]
struct Alignment {
    coupling: Matrix,
    cost: Cost,
    mean: Option<RowNormalized<f64>>,
}

/// Intermediate values of one video's forward pass.
#[derive(Clone, Debug)]
pub struct ForwardPass {
    conv: ConvForward<f64>,
    pyramid: Pyramid,
    normalized: Vec<RowNormalized<f64>>,
    heads: Vec<HeadForward<f64>>,
    alignments: Vec<Vec<Alignment>>,
    pub outputs: LevelLogits,
}

impl ForwardPass {
    pub fn pyramid(&self) -> &Pyramid {
        &self.pyramid
    }

    pub fn couplings(&self) -> Couplings {
        Couplings {
            levels: self
                .alignments
                .iter()
                .map(|lvl| lvl.iter().map(|a| a.coupling.clone()).collect())
                .collect(),
        }
    }

    /// `(coupling, cost)` for one level and class.
    pub fn alignment(&self, level: usize, class_id: usize) -> (&Matrix, &Cost) {
        let a = &self.alignments[level][class_id];
        (&a.coupling, &a.cost)
    }
}

fn one_hot(assignment: &[usize], cols: usize) -> Matrix {
    let mut m = Matrix::zeros(assignment.len(), cols);
    for (t, &j) in assignment.iter().enumerate() {
        m[(t, j)] = 1.0;
    }
    m
}

impl ModelState {
    /// Fresh model. Contexts, convolutions and the regression head draw from
    /// separate streams of `config.seed`; the encoder uses `config.encoder_seed`.
    pub fn init(config: TrainConfig, num_classes: usize, feature_dim: usize) -> Result<Self> {
        config.validate()?;
        if num_classes == 0 || feature_dim == 0 {
            return Err(Error::InvalidArgument("model needs at least one class and one feature".into()));
        }
        let root = Rng::new(config.seed);
        let contexts = init_context_bank(
            num_classes,
            config.num_prompts,
            config.n_ctx,
            config.d_ctx,
            &mut root.fork(11),
        )?;
        let conv = ConvStack::init(config.conv_depth, feature_dim, &mut root.fork(12));
        let head = RegressionHead::init(feature_dim, &mut root.fork(13));
        let encoder = Encoder::new(config.encoder_seed, num_classes, config.n_ctx, config.d_ctx, feature_dim);
        Ok(Self {
            config,
            num_classes,
            feature_dim,
            encoder,
            contexts,
            conv,
            head,
            epoch: 0,
        })
    }

    pub fn check_compatible(&self, feature_dim: usize, num_classes: usize) -> Result<()> {
        if feature_dim != self.feature_dim || num_classes != self.num_classes {
            return Err(Error::Incompatible(format!(
                "model expects {} classes of {}-d features, data has {num_classes} classes of {feature_dim}-d features",
                self.num_classes, self.feature_dim
            )));
        }
        Ok(())
    }

    pub fn slots(&self) -> impl Iterator<Item = &GradSlot<f64>> {
        self.contexts.slots().chain(self.conv.slots()).chain(self.head.slots())
    }

    pub fn slots_mut(&mut self) -> impl Iterator<Item = &mut GradSlot<f64>> {
        self.contexts
            .slots_mut()
            .chain(self.conv.slots_mut())
            .chain(self.head.slots_mut())
    }

    pub fn zero_grad(&mut self) {
        self.slots_mut().for_each(|s| s.zero_grad());
    }

    pub fn encode_all(&self) -> Result<Vec<PromptEncoding<f64>>> {
        (0..self.num_classes)
            .map(|c| encode_prompts(&self.contexts, &self.encoder, c))
            .collect()
    }

    fn align(&self, feats: &Matrix, prompts: &Matrix, frozen: Option<&Matrix>) -> Result<Alignment> {
        let (t_len, n) = (feats.rows(), prompts.rows());
        let pick = |fallback: &dyn Fn() -> Result<Matrix>| -> Result<Matrix> {
            match frozen {
                Some(m) => Ok(m.clone()),
                None => fallback(),
            }
        };
        Ok(match self.config.alignment_strategy {
            AlignmentStrategy::Ot => {
                let cost = cosine_cost(feats, prompts)?;
                let coupling = pick(&|| {
                    Ok(sinkhorn(&cost, &Marginals::uniform(t_len, n), &self.config.sinkhorn)?.coupling)
                })?;
                Alignment { coupling, cost, mean: None }
            }
            AlignmentStrategy::Hungarian => {
                let cost = half_sq_euclidean(feats, prompts)?;
                let coupling = pick(&|| Ok(one_hot(&balanced_assignment(&cost.values), n)))?;
                Alignment { coupling, cost, mean: None }
            }
            AlignmentStrategy::Euclidean => {
                let cost = half_sq_euclidean(feats, prompts)?;
                let coupling = pick(&|| Ok(Matrix::filled(t_len, n, 1.0)))?;
                Alignment { coupling, cost, mean: None }
            }
            AlignmentStrategy::Mean => {
                let mean = mean_prompt(prompts)?;
                let cost = cosine_cost(feats, &mean.matrix)?;
                let coupling = pick(&|| Ok(Matrix::filled(t_len, 1, 1.0)))?;
                Alignment {
                    coupling,
                    cost,
                    mean: Some(mean),
                }
            }
        })
    }

    /// Conv stack, pyramid, per-(level, class) alignment and both heads.
    pub fn forward(
        &self,
        features: &Matrix,
        prompts: &[PromptEncoding<f64>],
        frozen: Option<&Couplings>,
    ) -> Result<ForwardPass> {
        if features.cols() != self.feature_dim {
            return Err(Error::Incompatible(format!(
                "features are {}-d, model expects {}-d",
                features.cols(),
                self.feature_dim
            )));
        }
        let conv = self.conv.forward(features)?;
        let pyramid = build_pyramid(&conv.output, self.config.fpn_levels)?;
        let tau = self.config.tau;
        let mut normalized = Vec::with_capacity(pyramid.num_levels());
        let mut heads = Vec::with_capacity(pyramid.num_levels());
        let mut alignments = Vec::with_capacity(pyramid.num_levels());
        let mut logits = Vec::with_capacity(pyramid.num_levels());
        let mut offsets = Vec::with_capacity(pyramid.num_levels());
        for (l, level) in pyramid.levels.iter().enumerate() {
            let norm = l2_normalize_rows(level, NORM_EPS);
            let mut lg = Matrix::zeros(level.rows(), self.num_classes);
            let mut per_class = Vec::with_capacity(self.num_classes);
            for (c, enc) in prompts.iter().enumerate() {
                let fixed = frozen.map(|f| &f.levels[l][c]);
                let a = self.align(&norm.matrix, enc.embeddings(), fixed)?;
                let col = score_with_coupling(&a.coupling, &a.cost, tau)?;
                for (t, v) in col.into_iter().enumerate() {
                    lg[(t, c)] = v;
                }
                per_class.push(a);
            }
            let head = self.head.forward(level)?;
            offsets.push(head.offsets.clone());
            logits.push(lg);
            heads.push(head);
            normalized.push(norm);
            alignments.push(per_class);
        }
        Ok(ForwardPass {
            conv,
            pyramid,
            normalized,
            heads,
            alignments,
            outputs: LevelLogits { logits, offsets },
        })
    }

    /// Accumulates gradients into the conv stack and head, and adds the
    /// prompt-embedding gradients into `d_prompts[c]` (`N x D` each). Plans
    /// are constants.
    pub fn backward(&mut self, fwd: &ForwardPass, prompts: &[PromptEncoding<f64>], grads: &LossGrads, d_prompts: &mut [Matrix]) -> Result<()> {
        let tau = self.config.tau;
        let mut level_grads = Vec::with_capacity(fwd.pyramid.num_levels());
        for (l, level) in fwd.pyramid.levels.iter().enumerate() {
            let fn_l = &fwd.normalized[l].matrix;
            let mut d_norm = Matrix::zeros(level.rows(), level.cols());
            for (c, a) in fwd.alignments[l].iter().enumerate() {
                let col = grads.logits[l].column(c);
                let d_cost = score_locations_backward(&a.coupling, &col, tau)?;
                let g = prompts[c].embeddings();
                let (d_f, d_g) = match (a.cost.metric, &a.mean) {
                    (CostMetric::Cosine, Some(mean)) => {
                        let (d_f, d_m) = cosine_cost_backward(fn_l, &mean.matrix, &d_cost)?;
                        (d_f, mean_prompt_backward(g.rows(), mean, &d_m))
                    }
                    (CostMetric::Cosine, None) => cosine_cost_backward(fn_l, g, &d_cost)?,
                    (CostMetric::SquaredEuclidean, _) => {
                        sq_euclidean_cost_backward(fn_l, g, &d_cost.scale(SQ_EUCLIDEAN_SCALE))?
                    }
                };
                d_norm.add_assign(&d_f)?;
                d_prompts[c].add_assign(&d_g)?;
            }
            let mut d_level = normalize_rows_backward(&fwd.normalized[l], &d_norm);
            let d_head = self.head.backward(level, &fwd.heads[l], &grads.offsets[l])?;
            d_level.add_assign(&d_head)?;
            level_grads.push(d_level);
        }
        let d_refined = fwd.pyramid.backward(level_grads)?;
        self.conv.backward(&fwd.conv, &d_refined)?;
        Ok(())
    }

    /// Pushes accumulated `dL/dG_c` through the frozen encoder into the contexts.
    pub fn backward_prompts(&mut self, prompts: &[PromptEncoding<f64>], d_prompts: &[Matrix]) -> Result<()> {
        for (enc, d) in prompts.iter().zip(d_prompts) {
            enc.backward(&mut self.contexts, &self.encoder, d)?;
        }
        Ok(())
    }

    pub fn regression_ranges(&self, levels: usize) -> RegressionRanges {
        RegressionRanges::default_for(levels)
    }

    /// Loss of one video and the gradients of that loss with respect to the
    /// head outputs.
    pub fn video_loss(
        &self,
        seq: &FeatureSequence,
        prompts: &[PromptEncoding<f64>],
        frozen: Option<&Couplings>,
    ) -> Result<(LossBreakdown, LossGrads, ForwardPass)> {
        if let Some(a) = seq.annotations.iter().find(|a| a.class_id >= self.num_classes) {
            return Err(Error::UnknownClass {
                class_id: a.class_id,
                num_classes: self.num_classes,
            });
        }
        let fwd = self.forward(&seq.features, prompts, frozen)?;
        let ranges = self.regression_ranges(fwd.pyramid.num_levels());
        let targets = assign_targets(&fwd.pyramid, &seq.annotations, &ranges, seq.clip_stride_seconds)?;
        let (loss, grads) = total_loss_with_grad(&fwd.outputs, &targets, self.config.lambda_reg)?;
        Ok((loss, grads, fwd))
    }

    /// Decoded, suppressed detections for one video.
    pub fn predict(&self, seq: &FeatureSequence) -> Result<Vec<ActionInstance>> {
        let prompts = self.encode_all()?;
        self.predict_with(seq, &prompts)
    }

    pub fn predict_with(&self, seq: &FeatureSequence, prompts: &[PromptEncoding<f64>]) -> Result<Vec<ActionInstance>> {
        let fwd = self.forward(&seq.features, prompts, None)?;
        let d = &self.config.decode;
        let raw = decode(&fwd.outputs, d.score_threshold, &fwd.pyramid.strides, seq.clip_stride_seconds);
        Ok(nms(&raw, d.nms_iou, d.top_k))
    }

    /// Level-0 table of `P_tj C_tj` for one class, each column rescaled to
    /// `[0, 1]` (constant columns become 0).
    pub fn transport_table(&self, seq: &FeatureSequence, class_id: usize) -> Result<Matrix> {
        if class_id >= self.num_classes {
            return Err(Error::UnknownClass {
                class_id,
                num_classes: self.num_classes,
            });
        }
        let prompts = self.encode_all()?;
        let fwd = self.forward(&seq.features, &prompts, None)?;
        let (coupling, cost) = fwd.alignment(0, class_id);
        let mut table = Matrix::from_fn(coupling.rows(), coupling.cols(), |t, j| coupling[(t, j)] * cost.values[(t, j)]);
        for j in 0..table.cols() {
            let col = table.column(j);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let span = hi - lo;
            for t in 0..table.rows() {
                table[(t, j)] = if span > 0.0 { (table[(t, j)] - lo) / span } else { 0.0 };
            }
        }
        Ok(table)
    }
}
