//! Prompt ensembles: per class, `N` blocks of `n_ctx` learnable context
//! vectors, each followed by the class token and pushed through a frozen
//! encoder into a unit-length `D`-dimensional embedding.

use crate::error::{Error, Result};
use crate::numerics::{l2_normalize_rows, normalize_rows_backward, GradSlot, Mat, Rng, RowNormalized, Scalar};

/// Standard deviation of freshly initialized context entries.
pub const CONTEXT_INIT_STD: f64 = 0.02;

/// Learnable contexts. Block `(c, i)` is an `n_ctx x d_ctx` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextBank<T> {
    pub num_classes: usize,
    pub num_prompts: usize,
    pub n_ctx: usize,
    pub d_ctx: usize,
    blocks: Vec<GradSlot<T>>,
}

impl<T: Scalar> ContextBank<T> {
    pub fn block(&self, class_id: usize, prompt: usize) -> &GradSlot<T> {
        &self.blocks[class_id * self.num_prompts + prompt]
    }

    pub fn block_mut(&mut self, class_id: usize, prompt: usize) -> &mut GradSlot<T> {
        &mut self.blocks[class_id * self.num_prompts + prompt]
    }

    pub fn slots(&self) -> impl Iterator<Item = &GradSlot<T>> {
        self.blocks.iter()
    }

    pub fn slots_mut(&mut self) -> impl Iterator<Item = &mut GradSlot<T>> {
        self.blocks.iter_mut()
    }

    /// Rebuilds a bank from stored blocks (class-major order).
    pub fn from_blocks(
        num_classes: usize,
        num_prompts: usize,
        n_ctx: usize,
        d_ctx: usize,
        values: Vec<Mat<T>>,
    ) -> Result<Self> {
        if values.len() != num_classes * num_prompts
            || values.iter().any(|m| m.shape() != (n_ctx, d_ctx))
        {
            return Err(Error::Incompatible(format!(
                "context bank expects {} blocks of {n_ctx}x{d_ctx}",
                num_classes * num_prompts
            )));
        }
        Ok(Self {
            num_classes,
            num_prompts,
            n_ctx,
            d_ctx,
            blocks: values.into_iter().map(GradSlot::new).collect(),
        })
    }
}

/// Draws every context entry i.i.d. from `N(0, 0.02^2)`; gradients start at zero.
pub fn init_context_bank<T: Scalar>(
    num_classes: usize,
    num_prompts: usize,
    n_ctx: usize,
    d_ctx: usize,
    rng: &mut Rng,
) -> Result<ContextBank<T>> {
    if num_classes == 0 || num_prompts == 0 || n_ctx == 0 || d_ctx == 0 {
        return Err(Error::InvalidArgument(
            "context bank dimensions must all be at least 1".into(),
        ));
    }
    let blocks = (0..num_classes * num_prompts)
        .map(|_| {
            GradSlot::new(Mat::from_fn(n_ctx, d_ctx, |_, _| {
                T::lit(rng.gaussian(0.0, CONTEXT_INIT_STD))
            }))
        })
        .collect();
    Ok(ContextBank {
        num_classes,
        num_prompts,
        n_ctx,
        d_ctx,
        blocks,
    })
}

/// Frozen stand-in for a text encoder: a class-token table and a linear map
/// from the flattened `[ctx_1 .. ctx_n, class_token]` sequence to `D`.
/// Everything is a deterministic function of the seed and the dimensions.
#[derive(Clone, Debug, PartialEq)]
pub struct PseudoEncoder<T> {
    pub seed: u64,
    pub n_ctx: usize,
    pub d_ctx: usize,
    pub class_tokens: Mat<T>,
    pub projection: Mat<T>,
}

impl<T: Scalar> PseudoEncoder<T> {
    pub fn new(seed: u64, num_classes: usize, n_ctx: usize, d_ctx: usize, embed_dim: usize) -> Self {
        let root = Rng::new(seed);
        let mut tok_rng = root.fork(0x70c);
        let mut proj_rng = root.fork(0x960);
        let in_dim = (n_ctx + 1) * d_ctx;
        // Token-embedding scale, so the class token and the contexts start comparable.
        let class_tokens = Mat::from_fn(num_classes, d_ctx, |_, _| {
            T::lit(tok_rng.gaussian(0.0, CONTEXT_INIT_STD))
        });
        let proj_std = 1.0 / (in_dim as f64).sqrt();
        let projection = Mat::from_fn(in_dim, embed_dim, |_, _| T::lit(proj_rng.gaussian(0.0, proj_std)));
        Self {
            seed,
            n_ctx,
            d_ctx,
            class_tokens,
            projection,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.class_tokens.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.projection.cols()
    }

    /// Contribution of the class token to the pre-normalization embedding.
    fn class_term(&self, class_id: usize) -> Vec<T> {
        let offset = self.n_ctx * self.d_ctx;
        let mut z = vec![T::zero(); self.embed_dim()];
        for (k, &tok) in self.class_tokens.row(class_id).iter().enumerate() {
            for (acc, &p) in z.iter_mut().zip(self.projection.row(offset + k)) {
                *acc += tok * p;
            }
        }
        z
    }
}

/// Encoded ensemble `G_c` (unit rows) with what the backward pass needs.
#[derive(Clone, Debug)]
pub struct PromptEncoding<T> {
    pub class_id: usize,
    pub normalized: RowNormalized<T>,
}

impl<T: Scalar> PromptEncoding<T> {
    pub fn embeddings(&self) -> &Mat<T> {
        &self.normalized.matrix
    }

    /// Maps `dL/dG_c` back onto the class's context blocks.
    pub fn backward(&self, bank: &mut ContextBank<T>, enc: &PseudoEncoder<T>, grad: &Mat<T>) -> Result<()> {
        let dz = normalize_rows_backward(&self.normalized, grad);
        let ctx_len = bank.n_ctx * bank.d_ctx;
        for i in 0..bank.num_prompts {
            let dzi = dz.row(i);
            let mut d_ctx = Mat::zeros(bank.n_ctx, bank.d_ctx);
            for (r, dst) in d_ctx.as_mut_slice().iter_mut().enumerate().take(ctx_len) {
                *dst = enc
                    .projection
                    .row(r)
                    .iter()
                    .zip(dzi)
                    .fold(T::zero(), |acc, (&p, &g)| acc + p * g);
            }
            bank.block_mut(self.class_id, i).accumulate(&d_ctx)?;
        }
        Ok(())
    }
}

pub fn encode_prompts<T: Scalar>(
    bank: &ContextBank<T>,
    enc: &PseudoEncoder<T>,
    class_id: usize,
) -> Result<PromptEncoding<T>> {
    if class_id >= bank.num_classes || class_id >= enc.num_classes() {
        return Err(Error::UnknownClass {
            class_id,
            num_classes: bank.num_classes.min(enc.num_classes()),
        });
    }
    if enc.n_ctx != bank.n_ctx || enc.d_ctx != bank.d_ctx {
        return Err(Error::Incompatible(format!(
            "encoder expects {}x{} contexts, bank holds {}x{}",
            enc.n_ctx, enc.d_ctx, bank.n_ctx, bank.d_ctx
        )));
    }
    let d = enc.embed_dim();
    let class_term = enc.class_term(class_id);
    let mut raw = Mat::zeros(bank.num_prompts, d);
    for i in 0..bank.num_prompts {
        let ctx = bank.block(class_id, i).value.as_slice();
        let row = raw.row_mut(i);
        row.copy_from_slice(&class_term);
        for (r, &x) in ctx.iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (acc, &p) in row.iter_mut().zip(enc.projection.row(r)) {
                *acc += x * p;
            }
        }
    }
    let normalized = l2_normalize_rows(&raw, T::lit(1e-12));
    if let Some(i) = normalized.degenerate.iter().position(|&x| x) {
        return Err(Error::Degenerate {
            context: "prompt embedding",
            norm: normalized.norms[i].to_f64_lossy(),
        });
    }
    Ok(PromptEncoding {
        class_id,
        normalized,
    })
}
