//! The end-to-end rating model: schema-driven field encoding, per-field
//! embeddings, multi-head attention across the field tokens, layer
//! normalization, flatten, a ReLU dense layer and a linear prediction head.
//! Also the experiment scenarios (which fields are active) and a ridge
//! regression baseline.

mod baseline;
mod checkpoint;

pub use baseline::LinearBaseline;

use crate::error::{Error, Result};
use crate::layers::{
    dense_backward, dense_forward, layernorm_backward, layernorm_forward, mha_backward,
    mha_forward, Activation, AttnScale, DenseCache, DenseParams, EmbeddingTable, LayerNormCache,
    MhaCache, MhaParams, Parameterized,
};
use crate::tensor::{Matrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Group,
    Item,
    Context,
    Criterion,
}

impl FieldKind {
    pub fn label(self) -> &'static str {
        match self {
            FieldKind::Group => "group",
            FieldKind::Item => "item",
            FieldKind::Context => "context",
            FieldKind::Criterion => "criterion",
        }
    }
}

/// One input variable. `vocab_size` counts the embedding rows including the
/// reserved unknown-token row at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldDef {
    pub name: String,
    pub kind: FieldKind,
    pub vocab_size: usize,
}

/// Ordered list of active fields. Field order is fixed: the flattened
/// attention output depends on it, as does the checkpoint layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldSchema {
    fields: Vec<FieldDef>,
}

impl FieldSchema {
    pub fn new(fields: Vec<FieldDef>) -> Result<Self> {
        let groups = fields.iter().filter(|f| f.kind == FieldKind::Group).count();
        let items = fields.iter().filter(|f| f.kind == FieldKind::Item).count();
        if groups != 1 || items != 1 {
            return Err(Error::Config(format!(
                "schema needs exactly one group and one item field (found {} and {})",
                groups, items
            )));
        }
        for f in &fields {
            if f.vocab_size == 0 {
                return Err(Error::Config(format!("field `{}` has empty vocabulary", f.name)));
            }
        }
        let mut names: Vec<&str> = fields.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != fields.len() {
            return Err(Error::Config("duplicate field names in schema".into()));
        }
        Ok(FieldSchema { fields })
    }

    pub fn fields(&self) -> &[FieldDef] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn context_names(&self) -> Vec<&str> {
        self.fields
            .iter()
            .filter(|f| f.kind == FieldKind::Context)
            .map(|f| f.name.as_str())
            .collect()
    }

    pub fn criteria_names(&self) -> Vec<&str> {
        self.fields
            .iter()
            .filter(|f| f.kind == FieldKind::Criterion)
            .map(|f| f.name.as_str())
            .collect()
    }
}

/// Experiment scenario: which of the full schema's fields feed the model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Scenario {
    /// Group and item only.
    Grs,
    /// Group, item and criteria.
    Mcgrs,
    /// Group, item, all contexts and criteria.
    McgrsMc,
    /// Group, item, one named context and criteria.
    McgrsSc { context: String },
}

impl Scenario {
    pub fn tag(&self) -> String {
        match self {
            Scenario::Grs => "grs".into(),
            Scenario::Mcgrs => "mcgrs".into(),
            Scenario::McgrsMc => "mcgrs_mc".into(),
            Scenario::McgrsSc { context } => format!("mcgrs_sc({})", context),
        }
    }

    /// Parse a scenario tag; `mcgrs_sc` needs the context name supplied.
    pub fn parse(tag: &str, context: Option<&str>) -> Result<Scenario> {
        match tag {
            "grs" => Ok(Scenario::Grs),
            "mcgrs" => Ok(Scenario::Mcgrs),
            "mcgrs_mc" => Ok(Scenario::McgrsMc),
            "mcgrs_sc" => match context {
                Some(c) => Ok(Scenario::McgrsSc { context: c.to_string() }),
                None => Err(Error::Config("mcgrs_sc requires a context name".into())),
            },
            other => Err(Error::Config(format!("unknown scenario `{}`", other))),
        }
    }
}

/// Restrict the full schema to the fields a scenario activates, preserving
/// field order.
pub fn scenario_schema(full: &FieldSchema, scenario: &Scenario) -> Result<FieldSchema> {
    if let Scenario::McgrsSc { context } = scenario {
        if !full.context_names().contains(&context.as_str()) {
            return Err(Error::Config(format!(
                "unknown context `{}`; available: {}",
                context,
                full.context_names().join(", ")
            )));
        }
    }
    let keep = |f: &FieldDef| match (scenario, f.kind) {
        (_, FieldKind::Group) | (_, FieldKind::Item) => true,
        (Scenario::Grs, _) => false,
        (Scenario::Mcgrs, FieldKind::Criterion) => true,
        (Scenario::Mcgrs, _) => false,
        (Scenario::McgrsMc, _) => true,
        (Scenario::McgrsSc { context }, FieldKind::Context) => f.name == *context,
        (Scenario::McgrsSc { .. }, FieldKind::Criterion) => true,
    };
    FieldSchema::new(full.fields.iter().filter(|f| keep(f)).cloned().collect())
}

/// How criterion levels enter the model. Categorical treats each level as
/// its own token; Ordinal scales a single learned direction row by
/// level/num_levels, so adjacent levels stay close by construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriteriaEncoding {
    Categorical,
    Ordinal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hyperparams {
    /// Shared embedding dimension.
    pub d: usize,
    pub heads: usize,
    /// Per-head dimension; heads * d_h must equal d.
    pub d_h: usize,
    pub dense_width: usize,
    pub layernorm_eps: f64,
    /// Parameter init seed.
    pub seed: u64,
    pub attn_scale: AttnScale,
    pub criteria_encoding: CriteriaEncoding,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            d: 16,
            heads: 4,
            d_h: 4,
            dense_width: 64,
            layernorm_eps: 1e-5,
            seed: 0,
            attn_scale: AttnScale::PerHead,
            criteria_encoding: CriteriaEncoding::Categorical,
        }
    }
}

/// One training/evaluation example: a categorical index per active field (in
/// schema order) and the overall rating target.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedExample {
    pub indices: Vec<usize>,
    pub target: f64,
}

/// All trainable state plus the schema and hyperparameters it was built for.
#[derive(Debug, Clone)]
pub struct Model {
    pub schema: FieldSchema,
    pub hp: Hyperparams,
    pub embeddings: Vec<EmbeddingTable>,
    pub mha: MhaParams,
    pub hidden: DenseParams,
    pub output: DenseParams,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Debug, Clone)]
pub struct ModelCaches {
    pub indices: Vec<usize>,
    pub mha: MhaCache,
    pub ln: LayerNormCache,
    pub hidden: DenseCache,
    pub output: DenseCache,
}

impl Model {
    /// Initialize all parameters deterministically from (schema, hp).
    pub fn build(schema: FieldSchema, hp: Hyperparams) -> Result<Model> {
        if hp.heads * hp.d_h != hp.d {
            return Err(Error::Config(format!(
                "heads ({}) * d_h ({}) must equal d ({})",
                hp.heads, hp.d_h, hp.d
            )));
        }
        if hp.dense_width == 0 || hp.d == 0 {
            return Err(Error::Config("model dims must be positive".into()));
        }
        let mut rng = SeededRng::new(hp.seed);
        let mut embeddings = Vec::with_capacity(schema.len());
        for f in schema.fields() {
            embeddings.push(EmbeddingTable::new(&f.name, f.vocab_size, hp.d, &mut rng)?);
        }
        let mha = MhaParams::new(hp.heads, hp.d, hp.d_h, hp.attn_scale, &mut rng)?;
        let flat_width = schema.len() * hp.d;
        let hidden = DenseParams::new(hp.dense_width, flat_width, &mut rng)?;
        let output = DenseParams::new(1, hp.dense_width, &mut rng)?;
        Ok(Model {
            schema,
            hp,
            embeddings,
            mha,
            hidden,
            output,
        })
    }

    /// Number of field tokens the attention runs over.
    pub fn field_count(&self) -> usize {
        self.schema.len()
    }

    fn field_vector(&self, field: usize, index: usize) -> Result<Vec<f64>> {
        let table = &self.embeddings[field];
        if self.ordinal_field(field) {
            if index >= table.vocab_size() {
                return Err(Error::Lookup {
                    field: table.field().to_string(),
                    index,
                    vocab: table.vocab_size(),
                });
            }
            let levels = (table.vocab_size() - 1) as f64;
            let factor = index as f64 / levels;
            Ok(table.lookup(1)?.iter().map(|v| v * factor).collect())
        } else {
            table.lookup(index)
        }
    }

    fn field_backward(&mut self, field: usize, index: usize, upstream: &[f64]) -> Result<()> {
        if self.ordinal_field(field) {
            let levels = (self.embeddings[field].vocab_size() - 1) as f64;
            let factor = index as f64 / levels;
            let scaled: Vec<f64> = upstream.iter().map(|v| v * factor).collect();
            self.embeddings[field].backward(1, &scaled)
        } else {
            self.embeddings[field].backward(index, upstream)
        }
    }

    fn ordinal_field(&self, field: usize) -> bool {
        self.hp.criteria_encoding == CriteriaEncoding::Ordinal
            && self.schema.fields()[field].kind == FieldKind::Criterion
    }

    /// Full pipeline: lookups -> token stack -> attention -> layer norm ->
    /// flatten -> dense ReLU -> linear scalar.
    pub fn forward(&self, ex: &EncodedExample) -> Result<(f64, ModelCaches)> {
        if ex.indices.len() != self.schema.len() {
            return Err(Error::Encode(format!(
                "example has {} indices, schema expects {}",
                ex.indices.len(),
                self.schema.len()
            )));
        }
        let f = self.schema.len();
        let mut x = Matrix::zeros(f, self.hp.d);
        for (i, &idx) in ex.indices.iter().enumerate() {
            let v = self.field_vector(i, idx)?;
            x.row_mut(i).copy_from_slice(&v);
        }
        let (z, mha_cache) = mha_forward(&self.mha, &x)?;
        let (z_ln, ln_cache) = layernorm_forward(&z, self.hp.layernorm_eps)?;
        let flat = z_ln.as_slice().to_vec();
        let (h, hidden_cache) = dense_forward(&self.hidden, &flat, Activation::Relu)?;
        let (out, output_cache) = dense_forward(&self.output, &h, Activation::Linear)?;
        Ok((
            out[0],
            ModelCaches {
                indices: ex.indices.clone(),
                mha: mha_cache,
                ln: ln_cache,
                hidden: hidden_cache,
                output: output_cache,
            },
        ))
    }

    /// Prediction only, caches discarded.
    pub fn predict(&self, ex: &EncodedExample) -> Result<f64> {
        Ok(self.forward(ex)?.0)
    }

    /// Accumulate gradients for one example given d(loss)/d(prediction).
    pub fn backward(&mut self, caches: &ModelCaches, dpred: f64) -> Result<()> {
        if dpred == 0.0 {
            return Ok(());
        }
        let dh = dense_backward(&mut self.output, &caches.output, &[dpred])?;
        let dflat = dense_backward(&mut self.hidden, &caches.hidden, &dh)?;
        let dz_ln = Matrix::from_vec(self.schema.len(), self.hp.d, dflat)?;
        let dz = layernorm_backward(&caches.ln, &dz_ln)?;
        let dx = mha_backward(&mut self.mha, &caches.mha, &dz)?;
        for (i, &idx) in caches.indices.clone().iter().enumerate() {
            let row = dx.row(i).to_vec();
            self.field_backward(i, idx, &row)?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for t in &mut self.embeddings {
            t.grads.fill(0.0);
        }
        self.mha.zero_grads();
        self.hidden.zero_grads();
        self.output.zero_grads();
    }
}

// Block layout: embeddings (schema order), then per-head W_Q, W_K, W_V,
// then W_O, dense W/b, output W/b. The checkpoint writes blocks in this
// same order.
enum BlockRef {
    Embed(usize),
    Q(usize),
    K(usize),
    V(usize),
    O,
    HiddenW,
    HiddenB,
    OutW,
    OutB,
}

impl Model {
    fn resolve_block(&self, block: usize) -> BlockRef {
        let f = self.schema.len();
        let h = self.mha.heads;
        if block < f {
            return BlockRef::Embed(block);
        }
        let b = block - f;
        if b < h {
            return BlockRef::Q(b);
        }
        if b < 2 * h {
            return BlockRef::K(b - h);
        }
        if b < 3 * h {
            return BlockRef::V(b - 2 * h);
        }
        match b - 3 * h {
            0 => BlockRef::O,
            1 => BlockRef::HiddenW,
            2 => BlockRef::HiddenB,
            3 => BlockRef::OutW,
            4 => BlockRef::OutB,
            _ => unreachable!("block index {} out of range", block),
        }
    }
}

impl Parameterized for Model {
    fn block_count(&self) -> usize {
        self.schema.len() + 3 * self.mha.heads + 5
    }

    fn block_name(&self, block: usize) -> String {
        match self.resolve_block(block) {
            BlockRef::Embed(i) => format!("embed:{}", self.schema.fields()[i].name),
            BlockRef::Q(h) => format!("attn.w_q[{}]", h),
            BlockRef::K(h) => format!("attn.w_k[{}]", h),
            BlockRef::V(h) => format!("attn.w_v[{}]", h),
            BlockRef::O => "attn.w_o".into(),
            BlockRef::HiddenW => "dense.w".into(),
            BlockRef::HiddenB => "dense.b".into(),
            BlockRef::OutW => "out.w".into(),
            BlockRef::OutB => "out.b".into(),
        }
    }

    fn block_len(&self, block: usize) -> usize {
        match self.resolve_block(block) {
            BlockRef::Embed(i) => self.embeddings[i].weights.as_slice().len(),
            BlockRef::Q(_) | BlockRef::K(_) | BlockRef::V(_) => self.mha.d * self.mha.d_h,
            BlockRef::O => self.mha.w_o.as_slice().len(),
            BlockRef::HiddenW => self.hidden.w.as_slice().len(),
            BlockRef::HiddenB => self.hidden.b.len(),
            BlockRef::OutW => self.output.w.as_slice().len(),
            BlockRef::OutB => self.output.b.len(),
        }
    }

    fn param(&self, block: usize, idx: usize) -> f64 {
        match self.resolve_block(block) {
            BlockRef::Embed(i) => self.embeddings[i].weights.as_slice()[idx],
            BlockRef::Q(h) => self.mha.w_q[h].as_slice()[idx],
            BlockRef::K(h) => self.mha.w_k[h].as_slice()[idx],
            BlockRef::V(h) => self.mha.w_v[h].as_slice()[idx],
            BlockRef::O => self.mha.w_o.as_slice()[idx],
            BlockRef::HiddenW => self.hidden.w.as_slice()[idx],
            BlockRef::HiddenB => self.hidden.b[idx],
            BlockRef::OutW => self.output.w.as_slice()[idx],
            BlockRef::OutB => self.output.b[idx],
        }
    }

    fn set_param(&mut self, block: usize, idx: usize, value: f64) {
        match self.resolve_block(block) {
            BlockRef::Embed(i) => self.embeddings[i].weights.as_mut_slice()[idx] = value,
            BlockRef::Q(h) => self.mha.w_q[h].as_mut_slice()[idx] = value,
            BlockRef::K(h) => self.mha.w_k[h].as_mut_slice()[idx] = value,
            BlockRef::V(h) => self.mha.w_v[h].as_mut_slice()[idx] = value,
            BlockRef::O => self.mha.w_o.as_mut_slice()[idx] = value,
            BlockRef::HiddenW => self.hidden.w.as_mut_slice()[idx] = value,
            BlockRef::HiddenB => self.hidden.b[idx] = value,
            BlockRef::OutW => self.output.w.as_mut_slice()[idx] = value,
            BlockRef::OutB => self.output.b[idx] = value,
        }
    }

    fn grad(&self, block: usize, idx: usize) -> f64 {
        match self.resolve_block(block) {
            BlockRef::Embed(i) => self.embeddings[i].grads.as_slice()[idx],
            BlockRef::Q(h) => self.mha.g_q[h].as_slice()[idx],
            BlockRef::K(h) => self.mha.g_k[h].as_slice()[idx],
            BlockRef::V(h) => self.mha.g_v[h].as_slice()[idx],
            BlockRef::O => self.mha.g_o.as_slice()[idx],
            BlockRef::HiddenW => self.hidden.gw.as_slice()[idx],
            BlockRef::HiddenB => self.hidden.gb[idx],
            BlockRef::OutW => self.output.gw.as_slice()[idx],
            BlockRef::OutB => self.output.gb[idx],
        }
    }

    fn add_grad(&mut self, block: usize, idx: usize, delta: f64) {
        match self.resolve_block(block) {
            BlockRef::Embed(i) => self.embeddings[i].grads.as_mut_slice()[idx] += delta,
            BlockRef::Q(h) => self.mha.g_q[h].as_mut_slice()[idx] += delta,
            BlockRef::K(h) => self.mha.g_k[h].as_mut_slice()[idx] += delta,
            BlockRef::V(h) => self.mha.g_v[h].as_mut_slice()[idx] += delta,
            BlockRef::O => self.mha.g_o.as_mut_slice()[idx] += delta,
            BlockRef::HiddenW => self.hidden.gw.as_mut_slice()[idx] += delta,
            BlockRef::HiddenB => self.hidden.gb[idx] += delta,
            BlockRef::OutW => self.output.gw.as_mut_slice()[idx] += delta,
            BlockRef::OutB => self.output.gb[idx] += delta,
        }
    }

    fn zero_grads(&mut self) {
        Model::zero_grads(self);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn test_schema() -> FieldSchema {
        FieldSchema::new(vec![
            FieldDef { name: "group".into(), kind: FieldKind::Group, vocab_size: 7 },
            FieldDef { name: "item".into(), kind: FieldKind::Item, vocab_size: 9 },
            FieldDef { name: "Class".into(), kind: FieldKind::Context, vocab_size: 4 },
            FieldDef { name: "Semester".into(), kind: FieldKind::Context, vocab_size: 3 },
            FieldDef { name: "App".into(), kind: FieldKind::Criterion, vocab_size: 6 },
            FieldDef { name: "Data".into(), kind: FieldKind::Criterion, vocab_size: 6 },
        ])
        .unwrap()
    }

    fn small_hp() -> Hyperparams {
        Hyperparams {
            d: 8,
            heads: 2,
            d_h: 4,
            dense_width: 10,
            ..Hyperparams::default()
        }
    }

    fn example() -> EncodedExample {
        EncodedExample {
            indices: vec![3, 1, 2, 0, 5, 4],
            target: 4.0,
        }
    }

    #[test]
    fn build_is_deterministic_in_seed() {
        let a = Model::build(test_schema(), small_hp()).unwrap();
        let b = Model::build(test_schema(), small_hp()).unwrap();
        assert_eq!(a.snapshot(), b.snapshot());
        let c = Model::build(
            test_schema(),
            Hyperparams { seed: 1, ..small_hp() },
        )
        .unwrap();
        assert_ne!(a.snapshot(), c.snapshot());
    }

    #[test]
    fn dense_input_width_is_fields_times_d() {
        let hp = Hyperparams::default(); // d=16
        let schema = FieldSchema::new(vec![
            FieldDef { name: "g".into(), kind: FieldKind::Group, vocab_size: 3 },
            FieldDef { name: "i".into(), kind: FieldKind::Item, vocab_size: 3 },
            FieldDef { name: "c1".into(), kind: FieldKind::Context, vocab_size: 3 },
            FieldDef { name: "cr1".into(), kind: FieldKind::Criterion, vocab_size: 6 },
            FieldDef { name: "cr2".into(), kind: FieldKind::Criterion, vocab_size: 6 },
        ])
        .unwrap();
        let m = Model::build(schema, hp).unwrap();
        assert_eq!(m.hidden.in_dim(), 80);
    }

    #[test]
    fn head_divisibility_enforced() {
        let ok = Hyperparams { d: 16, heads: 4, d_h: 4, ..Hyperparams::default() };
        assert!(Model::build(test_schema(), ok).is_ok());
        let bad = Hyperparams { d: 16, heads: 3, d_h: 4, ..Hyperparams::default() };
        assert!(matches!(Model::build(test_schema(), bad), Err(Error::Config(_))));
    }

    #[test]
    fn forward_yields_finite_scalar_and_is_deterministic() {
        let m = Model::build(test_schema(), small_hp()).unwrap();
        let (p1, _) = m.forward(&example()).unwrap();
        let (p2, _) = m.forward(&example()).unwrap();
        assert!(p1.is_finite());
        assert_eq!(p1.to_bits(), p2.to_bits());
    }

    #[test]
    fn constant_head_predicts_its_bias() {
        let mut m = Model::build(test_schema(), small_hp()).unwrap();
        m.output.w.fill(0.0);
        m.output.b[0] = 3.0;
        for idx in [vec![0, 0, 0, 0, 0, 0], vec![6, 8, 3, 2, 5, 5]] {
            let ex = EncodedExample { indices: idx, target: 0.0 };
            assert_eq!(m.predict(&ex).unwrap(), 3.0);
        }
    }

    #[test]
    fn prediction_head_is_affine_in_hidden_activations() {
        let m = Model::build(test_schema(), small_hp()).unwrap();
        let mut doubled = m.clone();
        for v in doubled.output.w.as_mut_slice() {
            *v *= 2.0;
        }
        doubled.output.b[0] *= 2.0;
        let ex = example();
        let p = m.predict(&ex).unwrap();
        let p2 = doubled.predict(&ex).unwrap();
        assert!((p2 - 2.0 * p).abs() < 1e-12);
    }

    #[test]
    fn out_of_range_index_is_lookup_error() {
        let m = Model::build(test_schema(), small_hp()).unwrap();
        let ex = EncodedExample { indices: vec![7, 0, 0, 0, 0, 0], target: 0.0 };
        assert!(matches!(m.predict(&ex), Err(Error::Lookup { .. })));
    }

    #[test]
    fn zero_dpred_leaves_grads_untouched() {
        let mut m = Model::build(test_schema(), small_hp()).unwrap();
        let (_, caches) = m.forward(&example()).unwrap();
        m.backward(&caches, 0.0).unwrap();
        for b in 0..m.block_count() {
            for i in 0..m.block_len(b) {
                assert_eq!(m.grad(b, i), 0.0);
            }
        }
    }

    #[test]
    fn backward_accumulates_additively_across_examples() {
        let ex1 = example();
        let ex2 = EncodedExample { indices: vec![1, 2, 3, 1, 2, 3], target: 2.0 };
        let base = Model::build(test_schema(), small_hp()).unwrap();

        let mut separate = base.clone();
        let (_, c1) = separate.forward(&ex1).unwrap();
        separate.backward(&c1, 0.7).unwrap();
        let g1: Vec<Vec<f64>> = (0..separate.block_count())
            .map(|b| (0..separate.block_len(b)).map(|i| separate.grad(b, i)).collect())
            .collect();
        separate.zero_grads();
        let (_, c2) = separate.forward(&ex2).unwrap();
        separate.backward(&c2, -0.4).unwrap();

        let mut combined = base.clone();
        let (_, c1) = combined.forward(&ex1).unwrap();
        combined.backward(&c1, 0.7).unwrap();
        let (_, c2) = combined.forward(&ex2).unwrap();
        combined.backward(&c2, -0.4).unwrap();

        for b in 0..base.block_count() {
            for i in 0..base.block_len(b) {
                let expect = g1[b][i] + separate.grad(b, i);
                assert!(
                    (combined.grad(b, i) - expect).abs() < 1e-12,
                    "block {} idx {}",
                    b,
                    i
                );
            }
        }
    }

    #[test]
    fn zero_grads_is_idempotent_and_preserves_params() {
        let mut m = Model::build(test_schema(), small_hp()).unwrap();
        let params = m.snapshot();
        let (_, caches) = m.forward(&example()).unwrap();
        m.backward(&caches, 1.0).unwrap();
        Model::zero_grads(&mut m);
        Model::zero_grads(&mut m);
        assert_eq!(m.snapshot(), params);
        for b in 0..m.block_count() {
            for i in 0..m.block_len(b) {
                assert_eq!(m.grad(b, i), 0.0);
            }
        }
    }

    #[test]
    fn end_to_end_gradients_match_finite_differences() {
        use crate::layers::grad_check;
        let mut m = Model::build(test_schema(), small_hp()).unwrap();
        let examples = [example(), EncodedExample { indices: vec![1, 4, 1, 2, 3, 2], target: 2.5 }];
        let loss = |m: &Model| -> f64 {
            examples
                .iter()
                .map(|ex| {
                    let p = m.predict(ex).unwrap();
                    (p - ex.target) * (p - ex.target)
                })
                .sum::<f64>()
                / examples.len() as f64
        };
        let accumulate = |m: &mut Model| {
            Model::zero_grads(m);
            let n = examples.len() as f64;
            for ex in &examples {
                let (p, caches) = m.forward(ex).unwrap();
                m.backward(&caches, 2.0 * (p - ex.target) / n).unwrap();
            }
        };
        let report = grad_check(&mut m, loss, accumulate, 1e-5, 1e-3).unwrap();
        assert!(
            report.passed(),
            "worst block {:?}",
            report.worst().map(|b| (b.name.clone(), b.max_rel_err))
        );
    }

    #[test]
    fn ordinal_criteria_mode_scales_a_shared_direction() {
        let hp = Hyperparams {
            criteria_encoding: CriteriaEncoding::Ordinal,
            ..small_hp()
        };
        let m = Model::build(test_schema(), hp).unwrap();
        // criterion fields are positions 4 and 5; level index scales row 1
        let v1 = m.field_vector(4, 1).unwrap();
        let v5 = m.field_vector(4, 5).unwrap();
        for (a, b) in v1.iter().zip(&v5) {
            assert!((b - 5.0 * a).abs() < 1e-12);
        }
        assert!(m.field_vector(4, 0).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ordinal_criteria_gradients_match_finite_differences() {
        use crate::layers::grad_check;
        let hp = Hyperparams {
            criteria_encoding: CriteriaEncoding::Ordinal,
            ..small_hp()
        };
        let mut m = Model::build(test_schema(), hp).unwrap();
        let ex = example();
        let loss = |m: &Model| {
            let p = m.predict(&ex).unwrap();
            (p - ex.target) * (p - ex.target)
        };
        let accumulate = |m: &mut Model| {
            Model::zero_grads(m);
            let (p, caches) = m.forward(&ex).unwrap();
            m.backward(&caches, 2.0 * (p - ex.target)).unwrap();
        };
        let report = grad_check(&mut m, loss, accumulate, 1e-5, 1e-3).unwrap();
        assert!(report.passed());
    }

    #[test]
    fn scenario_restriction_keeps_order() {
        let full = test_schema();
        let grs = scenario_schema(&full, &Scenario::Grs).unwrap();
        assert_eq!(
            grs.fields().iter().map(|f| f.name.as_str()).collect::<Vec<_>>(),
            vec!["group", "item"]
        );
        let mcgrs = scenario_schema(&full, &Scenario::Mcgrs).unwrap();
        assert_eq!(
            mcgrs.fields().iter().map(|f| f.name.as_str()).collect::<Vec<_>>(),
            vec!["group", "item", "App", "Data"]
        );
        let sc = scenario_schema(
            &full,
            &Scenario::McgrsSc { context: "Class".into() },
        )
        .unwrap();
        assert_eq!(
            sc.fields().iter().map(|f| f.name.as_str()).collect::<Vec<_>>(),
            vec!["group", "item", "Class", "App", "Data"]
        );
        let mc = scenario_schema(&full, &Scenario::McgrsMc).unwrap();
        assert_eq!(mc.context_names(), vec!["Class", "Semester"]);
        assert!(scenario_schema(
            &full,
            &Scenario::McgrsSc { context: "Nope".into() }
        )
        .is_err());
    }

    #[test]
    fn grs_model_has_no_context_or_criteria_tables() {
        let full = test_schema();
        let grs = scenario_schema(&full, &Scenario::Grs).unwrap();
        let m = Model::build(grs, small_hp()).unwrap();
        assert_eq!(m.embeddings.len(), 2);
        assert_eq!(m.hidden.in_dim(), 2 * m.hp.d);
    }
}
