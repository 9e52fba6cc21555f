use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{GateSimilarity, HeadIds, ModelBundle, ModelKind};
use crate::corpus::{chunk_ranges, EntityId, FlatMention, Scene, Vocabulary};
use crate::error::{Error, Result};
use crate::lstm::lstm_sequence;
use crate::tape::{Tape, Var};

/// Token and speaker indices for one scene plus the positions at which a
/// distribution is wanted (ascending, repeats allowed).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SceneInput {
    pub tokens: Vec<usize>,
    pub speakers: Vec<Speakers>,
    pub targets: Vec<usize>,
}

/// Speaker ids of a token; an empty list embeds as the zero vector.
pub type Speakers = Vec<EntityId>;

impl SceneInput {
    /// The scene's token stream with one target per mention, in
    /// [`Scene::flatten`] order.
    pub fn from_scene(scene: &Scene, vocab: &Vocabulary) -> (SceneInput, Vec<FlatMention>) {
        let flat = scene.flatten();
        let input = SceneInput {
            tokens: flat.tokens.iter().map(|t| vocab.id(t)).collect(),
            speakers: flat.speakers.iter().map(|s| s.to_vec()).collect(),
            targets: flat.mentions.iter().map(|m| m.position).collect(),
        };
        (input, flat.mentions)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// Tape nodes produced by one scene, aligned with `SceneInput::targets`.
#[derive(Debug, Clone, Default)]
pub struct SceneTrace {
    pub outputs: Vec<Var>,
    pub hidden: Vec<Var>,
    pub queries: Vec<Option<Var>>,
    /// EntNet value matrices: `values[0]` is the scene-start state and
    /// `values[i + 1]` the state after token `i`. Empty unless requested.
    pub values: Vec<Var>,
}

/// EntNet memory for one scene.
#[derive(Debug, Clone, Copy)]
pub struct MemoryState {
    scene: usize,
    pub values: Var,
}

/// EntNet head parameters bound to a tape, with the scene-invariant key
/// projection `W_e Qᵀ` precomputed.
#[derive(Debug, Clone, Copy)]
pub struct EntNetHead {
    keys: Var,
    wq: Var,
    bq: Var,
    r: Var,
    s: Var,
    prelu: Var,
    key_proj: Var,
    similarity: GateSimilarity,
    updates: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MentionOutput {
    pub mention: FlatMention,
    pub distribution: Vec<f64>,
    pub predicted: EntityId,
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn dropout(tape: &mut Tape, x: Var, p: f64, rng: Option<&mut ChaCha8Rng>) -> Result<Var> {
    match rng {
        Some(rng) if p > 0.0 => {
            let n = tape.value(x).len();
            let keep = 1.0 / (1.0 - p);
            let mask = (0..n).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect();
            let m = tape.input_vec(mask);
            tape.mul(x, m)
        }
        _ => Ok(x),
    }
}

impl EntNetHead {
    pub fn new(tape: &mut Tape, model: &ModelBundle) -> Result<Self> {
        let HeadIds::QueryDynamic { w, b, q, r, s, prelu } = model.ids.head else {
            return Err(Error::Unsupported(format!("{} has no dynamic memory", model.kind())));
        };
        let p = &model.params;
        let keys = tape.param(p, model.ids.entity_emb);
        let qm = tape.param(p, q);
        let key_proj = tape.matmul_bt(keys, qm)?;
        Ok(EntNetHead {
            keys,
            wq: tape.param(p, w),
            bq: tape.param(p, b),
            r: tape.param(p, r),
            s: tape.param(p, s),
            prelu: tape.param(p, prelu),
            key_proj,
            similarity: model.config.flags.gate_similarity,
            updates: model.config.flags.updates_enabled,
        })
    }

    /// `V_0 = W_e`.
    pub fn start_scene(&self, scene: usize) -> MemoryState {
        MemoryState {
            scene,
            values: self.keys,
        }
    }

    pub fn query(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let q = tape.matvec(self.wq, h)?;
        tape.add(q, self.bq)
    }

    /// Gate and value update for one token given its query. Returns the
    /// ReLU gate; the state advances to the next token.
    pub fn step(&self, tape: &mut Tape, q: Var, state: &mut MemoryState, scene: usize) -> Result<Var> {
        if state.scene != scene {
            return Err(Error::Invalid(format!(
                "memory state belongs to scene {} but step is for scene {scene}",
                state.scene
            )));
        }
        let (a, b) = match self.similarity {
            GateSimilarity::Cosine => (tape.row_cosine(self.keys, q)?, tape.row_cosine(state.values, q)?),
            GateSimilarity::Dot => (tape.matvec(self.keys, q)?, tape.matvec(state.values, q)?),
        };
        let g = tape.add(a, b)?;
        let g = tape.relu(g);
        if self.updates {
            let rv = tape.matmul_bt(state.values, self.r)?;
            let sq = tape.matvec(self.s, q)?;
            let pre = tape.add(self.key_proj, rv)?;
            let pre = tape.add_row_vec(pre, sq)?;
            let cand = tape.prelu(pre, self.prelu)?;
            let write = tape.scale_rows(cand, g)?;
            let v = tape.add(state.values, write)?;
            state.values = tape.normalize_rows(v);
        }
        Ok(g)
    }
}

impl ModelBundle {
    fn check_entities(&self, speakers: &[Speakers]) -> Result<()> {
        let n = self.num_entities();
        for s in speakers.iter().flatten() {
            if *s >= n {
                return Err(Error::Invalid(format!("unknown entity id {s} (model has {n} entities)")));
            }
        }
        Ok(())
    }

    /// Hidden states `h_i` (length 2H) for one chunk. Dropout is applied
    /// only when `rng` is given.
    pub fn encode(&self, tape: &mut Tape, tokens: &[usize], speakers: &[Speakers], mut rng: Option<&mut ChaCha8Rng>) -> Result<Vec<Var>> {
        if tokens.len() != speakers.len() {
            return Err(Error::Invalid(format!("{} tokens but {} speaker sets", tokens.len(), speakers.len())));
        }
        self.check_entities(speakers)?;
        let p = &self.params;
        let wt = tape.param(p, self.ids.token_emb);
        let ws = tape.param(p, self.ids.speaker_emb);
        let mut xs = Vec::with_capacity(tokens.len());
        for (&t, s) in tokens.iter().zip(speakers) {
            if t >= self.config.dims.vocab {
                return Err(Error::Invalid(format!("token index {t} outside vocabulary")));
            }
            let e = tape.gather_sum(wt, &[t])?;
            let sp = tape.gather_sum(ws, s)?;
            let x = tape.concat(&[e, sp])?;
            let x = tape.tanh(x);
            xs.push(dropout(tape, x, self.config.dropout_pre, rng.as_deref_mut())?);
        }
        let f = lstm_sequence(tape, p, &self.ids.fwd, &xs, false)?;
        let b = lstm_sequence(tape, p, &self.ids.bwd, &xs, true)?;
        let mut hs = Vec::with_capacity(xs.len());
        for (hf, hb) in f.into_iter().zip(b) {
            let h = tape.concat(&[hf, hb])?;
            hs.push(dropout(tape, h, self.config.dropout_post, rng.as_deref_mut())?);
        }
        Ok(hs)
    }

    /// Linear head: `softmax(W_o h + b_o)`.
    pub fn bilstm_scores(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let HeadIds::Linear { w, b } = self.ids.head else {
            return Err(Error::Unsupported(format!("{} has no linear head", self.kind())));
        };
        let w = tape.param(&self.params, w);
        let b = tape.param(&self.params, b);
        let g = tape.matvec(w, h)?;
        let g = tape.add(g, b)?;
        Ok(tape.softmax(g))
    }

    /// Query vector `W_q h + b_q`.
    pub fn query(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        let (HeadIds::Query { w, b } | HeadIds::QueryDynamic { w, b, .. }) = self.ids.head else {
            return Err(Error::Unsupported(format!("{} has no query head", self.kind())));
        };
        let w = tape.param(&self.params, w);
        let b = tape.param(&self.params, b);
        let q = tape.matvec(w, h)?;
        tape.add(q, b)
    }

    /// Entity-library gate `ReLU(sim(W_e, q))` for a given query.
    pub fn library_gate(&self, tape: &mut Tape, q: Var) -> Result<Var> {
        let keys = tape.param(&self.params, self.ids.entity_emb);
        let s = match self.config.flags.gate_similarity {
            GateSimilarity::Cosine => tape.row_cosine(keys, q)?,
            GateSimilarity::Dot => tape.matvec(keys, q)?,
        };
        Ok(tape.relu(s))
    }

    /// Entity-library head: `softmax(ReLU(sim(W_e, W_q h + b_q)))`.
    pub fn entlib_scores(&self, tape: &mut Tape, h: Var) -> Result<Var> {
        if self.kind() != ModelKind::EntLib {
            return Err(Error::Unsupported(format!("{} is not an entity-library model", self.kind())));
        }
        let q = self.query(tape, h)?;
        let g = self.library_gate(tape, q)?;
        Ok(tape.softmax(g))
    }

    /// Runs a whole scene chunk by chunk. LSTM state restarts at each chunk;
    /// EntNet memory carries across chunks and starts from `W_e`.
    pub fn forward_scene(
        &self,
        tape: &mut Tape,
        input: &SceneInput,
        chunk_len: usize,
        scene: usize,
        mut rng: Option<&mut ChaCha8Rng>,
        record_values: bool,
    ) -> Result<SceneTrace> {
        if input.speakers.len() != input.tokens.len() {
            return Err(Error::Invalid("speaker list and token list differ in length".into()));
        }
        if let Some(&t) = input.targets.iter().find(|&&t| t >= input.len()) {
            return Err(Error::Invalid(format!("target position {t} beyond scene of {} tokens", input.len())));
        }
        let mut trace = SceneTrace::default();
        let head = match self.kind() {
            ModelKind::EntNet => Some(EntNetHead::new(tape, self)?),
            _ => None,
        };
        let mut state = head.map(|h| h.start_scene(scene));
        if let Some(s) = &state {
            if record_values {
                trace.values.push(s.values);
            }
        }
        let mut next_target = 0;
        for range in chunk_ranges(input.len(), chunk_len.max(1)) {
            let hs = self.encode(
                tape,
                &input.tokens[range.clone()],
                &input.speakers[range.clone()],
                rng.as_deref_mut(),
            )?;
            for (offset, h) in hs.into_iter().enumerate() {
                let pos = range.start + offset;
                let wanted = input.targets[next_target..].iter().take_while(|&&t| t == pos).count();
                match (&head, &mut state) {
                    (Some(head), Some(st)) => {
                        let q = head.query(tape, h)?;
                        let g = head.step(tape, q, st, scene)?;
                        if record_values {
                            trace.values.push(st.values);
                        }
                        if wanted > 0 {
                            let o = tape.softmax(g);
                            for _ in 0..wanted {
                                trace.outputs.push(o);
                                trace.hidden.push(h);
                                trace.queries.push(Some(q));
                            }
                        }
                    }
                    _ if wanted > 0 => {
                        let (o, q) = match self.kind() {
                            ModelKind::BiLstm => (self.bilstm_scores(tape, h)?, None),
                            _ => {
                                let q = self.query(tape, h)?;
                                let g = self.library_gate(tape, q)?;
                                (tape.softmax(g), Some(q))
                            }
                        };
                        for _ in 0..wanted {
                            trace.outputs.push(o);
                            trace.hidden.push(h);
                            trace.queries.push(q);
                        }
                    }
                    _ => {}
                }
                next_target += wanted;
            }
        }
        Ok(trace)
    }

    /// One distribution over entities per mention, at its final token.
    pub fn resolve_mentions(&self, scene: &Scene, scene_index: usize, chunk_len: usize) -> Result<Vec<MentionOutput>> {
        let (input, mentions) = SceneInput::from_scene(scene, &self.vocab);
        if mentions.is_empty() {
            return Ok(Vec::new());
        }
        let mut tape = Tape::new();
        let trace = self.forward_scene(&mut tape, &input, chunk_len, scene_index, None, false)?;
        Ok(mentions
            .into_iter()
            .zip(&trace.outputs)
            .map(|(mention, &o)| {
                let distribution = tape.value(o).to_vec();
                let predicted = argmax(&distribution);
                MentionOutput {
                    mention,
                    distribution,
                    predicted,
                }
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{names, Dims, ModelConfig, ModelMeta, VariantFlags};
    use super::*;
    use crate::corpus::{Mention, Utterance};
    use crate::gradcheck::{finite_diff_check, GradCheckConfig};
    use crate::tensor::{ParamStore, Tensor};
    use rand::SeedableRng;

    fn vocab(n: usize) -> Vocabulary {
        Vocabulary::from_tokens((0..n - 2).map(|i| format!("w{i}"))).unwrap()
    }

    fn model(kind: ModelKind, n: usize, k: usize, hidden: usize, seed: u64) -> ModelBundle {
        let config = ModelConfig {
            kind,
            dims: Dims {
                vocab: 8,
                d_tok: 3,
                hidden,
                k,
                entities: n,
            },
            flags: VariantFlags::default(),
            dropout_pre: 0.0,
            dropout_post: 0.0,
        };
        ModelBundle::init(config, vocab(8), ModelMeta::default(), seed, None).unwrap()
    }

    fn set(m: &mut ModelBundle, name: &str, data: Vec<f64>) {
        let p = m.params.by_name_mut(name).unwrap();
        let shape = p.value.shape().to_vec();
        p.value = Tensor::new(shape, data).unwrap();
    }

    fn zero_all(m: &mut ModelBundle, prefix: &str) {
        for p in m.params.iter_mut().filter(|p| p.name.starts_with(prefix)) {
            p.value.data_mut().iter_mut().for_each(|x| *x = 0.0);
        }
    }

    fn input(tokens: &[usize], speakers: &[&[usize]], targets: &[usize]) -> SceneInput {
        SceneInput {
            tokens: tokens.to_vec(),
            speakers: speakers.iter().map(|s| s.to_vec()).collect(),
            targets: targets.to_vec(),
        }
    }

    #[test]
    fn speaker_listed_twice_adds_one_row() {
        let m = model(ModelKind::BiLstm, 4, 2, 3, 1);
        let mut tape = Tape::new();
        let wt = tape.param(&m.params, m.ids.token_emb);
        let ws = tape.param(&m.params, m.ids.speaker_emb);
        let e = tape.gather_sum(wt, &[3]).unwrap();
        let once = tape.gather_sum(ws, &[2]).unwrap();
        let twice = tape.gather_sum(ws, &[2, 2]).unwrap();
        let a = tape.concat(&[e, once]).unwrap();
        let b = tape.concat(&[e, twice]).unwrap();
        let row = m.entity_embeddings().row(2);
        let (va, vb) = (tape.value(a), tape.value(b));
        assert_eq!(&va[..3], &vb[..3]);
        for i in 0..2 {
            assert!((vb[3 + i] - va[3 + i] - row[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_lstm_gives_zero_hidden() {
        let mut m = model(ModelKind::BiLstm, 4, 2, 3, 1);
        zero_all(&mut m, "lstm_");
        let mut tape = Tape::new();
        let hs = m.encode(&mut tape, &[2, 3, 4], &[vec![0], vec![1], vec![0, 1]], None).unwrap();
        for h in hs {
            assert!(tape.value(h).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn unknown_speaker_rejected() {
        let m = model(ModelKind::BiLstm, 4, 2, 3, 1);
        let mut tape = Tape::new();
        assert!(m.encode(&mut tape, &[2], &[vec![4]], None).is_err());
    }

    #[test]
    fn reversal_mirrors_directions() {
        let mut m = model(ModelKind::BiLstm, 4, 2, 3, 7);
        let fw = m.params.by_name(&format!("{}.w", names::FWD)).unwrap().value.clone();
        let fb = m.params.by_name(&format!("{}.b", names::FWD)).unwrap().value.clone();
        set(&mut m, &format!("{}.w", names::BWD), fw.into_data());
        set(&mut m, &format!("{}.b", names::BWD), fb.into_data());
        let toks = [2, 5, 3];
        let spk = vec![vec![0], vec![1], vec![2]];
        let mut tape = Tape::new();
        let h = m.encode(&mut tape, &toks, &spk, None).unwrap();
        let rt: Vec<usize> = toks.iter().rev().copied().collect();
        let rs: Vec<Vec<usize>> = spk.iter().rev().cloned().collect();
        let hr = m.encode(&mut tape, &rt, &rs, None).unwrap();
        for i in 0..3 {
            let fwd_rev = &tape.value(hr[i])[..3];
            let bwd_orig = &tape.value(h[2 - i])[3..];
            assert_eq!(fwd_rev, bwd_orig);
        }
    }

    #[test]
    fn zero_linear_head_is_uniform() {
        let mut m = model(ModelKind::BiLstm, 4, 2, 3, 1);
        zero_all(&mut m, "out.");
        let mut tape = Tape::new();
        let h = tape.input_vec(vec![0.3, -1.0, 2.0, 0.1, 0.0, 1.0]);
        let o = m.bilstm_scores(&mut tape, h).unwrap();
        assert!(tape.value(o).iter().all(|&p| (p - 0.25).abs() < 1e-15));
        set(&mut m, names::OUT_B, vec![0.0, 0.0, 50.0, 0.0]);
        let mut tape = Tape::new();
        let h = tape.input_vec(vec![0.0; 6]);
        let o = m.bilstm_scores(&mut tape, h).unwrap();
        assert_eq!(argmax(tape.value(o)), 2);
    }

    fn gate_for_query(m: &ModelBundle, q: Vec<f64>) -> Vec<f64> {
        let mut tape = Tape::new();
        let q = tape.input_vec(q);
        let g = m.library_gate(&mut tape, q).unwrap();
        let o = tape.softmax(g);
        tape.value(o).to_vec()
    }

    #[test]
    fn entlib_gate_cases() {
        let mut m = model(ModelKind::EntLib, 3, 3, 2, 1);
        set(&mut m, names::ENTITY_EMB, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0]);
        let o = gate_for_query(&m, vec![0.0, 0.0, 0.0]);
        assert!(o.iter().all(|&p| (p - 1.0 / 3.0).abs() < 1e-15));
        assert_eq!(argmax(&gate_for_query(&m, vec![0.0, 1.0, 0.0])), 1);
        let m = model(ModelKind::EntLib, 5, 3, 2, 9);
        let q = vec![0.3, -0.7, 1.1];
        let base = gate_for_query(&m, q.clone());
        let times5 = gate_for_query(&m, q.iter().map(|x| x * 5.0).collect());
        assert_eq!(argmax(&base), argmax(&times5));
        for (a, b) in base.iter().zip(&times5) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(base, gate_for_query(&m, q.iter().map(|x| x * 4.0).collect()));
    }

    #[test]
    fn orthogonal_query_gives_uniform() {
        let mut m = model(ModelKind::EntLib, 2, 3, 2, 1);
        set(&mut m, names::ENTITY_EMB, vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let o = gate_for_query(&m, vec![0.0, 0.0, 2.0]);
        assert_eq!(o, vec![0.5, 0.5]);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.2, 0.5, 0.5]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn entnet_first_step_matches_library_argmax() {
        let m = model(ModelKind::EntNet, 6, 4, 3, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let qv: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut tape = Tape::new();
            let head = EntNetHead::new(&mut tape, &m).unwrap();
            let mut st = head.start_scene(0);
            let q = tape.input_vec(qv.clone());
            let g = head.step(&mut tape, q, &mut st, 0).unwrap();
            let lib = m.library_gate(&mut tape, q).unwrap();
            let (gv, lv) = (tape.value(g), tape.value(lib));
            for j in 0..6 {
                assert!((gv[j] - 2.0 * lv[j]).abs() < 1e-12);
            }
            assert_eq!(argmax(gv), argmax(lv));
        }
    }

    #[test]
    fn memory_rows_unit_norm_and_frozen_without_updates() {
        let m = model(ModelKind::EntNet, 5, 4, 3, 2);
        let inp = input(&[2, 3, 4, 5, 6, 7], &[&[0], &[1], &[0, 1], &[2], &[3], &[4]], &[2, 5]);
        let mut tape = Tape::new();
        let tr = m.forward_scene(&mut tape, &inp, 4, 0, None, true).unwrap();
        assert_eq!(tr.values.len(), 7);
        for &v in &tr.values[1..] {
            let vals = tape.value(v);
            for row in vals.chunks(4) {
                let n: f64 = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!((n - 1.0).abs() < 1e-9);
            }
        }
        let mut f = m.config.flags;
        f.updates_enabled = false;
        let (frozen, changed) = m.with_flags(f).unwrap();
        assert!(changed);
        let mut tape = Tape::new();
        let tr = frozen.forward_scene(&mut tape, &inp, 4, 0, None, true).unwrap();
        for &v in &tr.values {
            assert_eq!(tape.value(v), m.entity_embeddings().data());
        }
    }

    #[test]
    fn frozen_memory_argmax_equals_keys_only_gate() {
        let m = model(ModelKind::EntNet, 5, 4, 3, 8);
        let mut f = m.config.flags;
        f.updates_enabled = false;
        let (m, _) = m.with_flags(f).unwrap();
        let inp = input(&[2, 3, 4, 5], &[&[0], &[1], &[2], &[3]], &[0, 1, 2, 3]);
        let mut tape = Tape::new();
        let tr = m.forward_scene(&mut tape, &inp, 750, 0, None, false).unwrap();
        for (o, q) in tr.outputs.iter().zip(&tr.queries) {
            let lib = m.library_gate(&mut tape, q.unwrap()).unwrap();
            assert_eq!(argmax(tape.value(*o)), argmax(tape.value(lib)));
        }
    }

    #[test]
    fn memory_scene_mismatch() {
        let m = model(ModelKind::EntNet, 3, 4, 2, 1);
        let mut tape = Tape::new();
        let head = EntNetHead::new(&mut tape, &m).unwrap();
        let mut st = head.start_scene(0);
        let q = tape.input_vec(vec![1.0; 4]);
        assert!(head.step(&mut tape, q, &mut st, 1).is_err());
    }

    fn pipeline_check(kind: ModelKind, n: usize, k: usize, inp: SceneInput, chunk: usize) {
        let mut m = model(kind, n, k, 2, 5);
        if kind == ModelKind::EntNet {
            set(&mut m, names::MEM_PRELU, vec![0.3]);
        }
        let targets: Vec<usize> = (0..inp.targets.len()).map(|i| i % n).collect();
        let store = m.params.clone();
        let report = finite_diff_check(
            &store,
            |s: &ParamStore, tape: &mut Tape| {
                let mut mm = m.clone();
                mm.params = s.clone();
                let tr = mm.forward_scene(tape, &inp, chunk, 0, None, false)?;
                let terms: Vec<Var> = tr
                    .outputs
                    .iter()
                    .zip(&targets)
                    .map(|(&o, &t)| tape.neg_log_pick(o, t, 1.0))
                    .collect::<Result<_>>()?;
                Ok(tape.sum_scalars(&terms))
            },
            GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed(), "{kind}: {report:?}");
    }

    #[test]
    fn gradient_check_bilstm_pipeline() {
        pipeline_check(ModelKind::BiLstm, 4, 2, input(&[2, 3, 4], &[&[0], &[1], &[2, 3]], &[0, 2]), 750);
    }

    #[test]
    fn gradient_check_entlib_pipeline() {
        pipeline_check(ModelKind::EntLib, 4, 3, input(&[2, 3, 4], &[&[0], &[1], &[3]], &[1, 2]), 750);
    }

    #[test]
    fn gradient_check_two_entnet_steps() {
        pipeline_check(ModelKind::EntNet, 3, 4, input(&[2, 3], &[&[0], &[2]], &[0, 1]), 750);
    }

    #[test]
    fn gradient_check_entnet_across_chunks() {
        pipeline_check(ModelKind::EntNet, 3, 2, input(&[2, 3, 4], &[&[0], &[1], &[2]], &[1, 2]), 2);
    }

    fn scene(mentions: Vec<Mention>) -> Scene {
        Scene {
            id: "s".into(),
            utterances: vec![Utterance {
                speakers: vec![1],
                tokens: ["w0", "w1", "w2", "w3", "w4", "w5"].iter().map(|s| s.to_string()).collect(),
                mentions,
            }],
        }
    }

    #[test]
    fn resolve_mentions_contract() {
        for kind in ModelKind::ALL {
            let m = model(kind, 4, 3, 2, 3);
            assert!(m.resolve_mentions(&scene(vec![]), 0, 750).unwrap().is_empty());
            let sc = scene(vec![Mention { start: 2, end: 4, entity: 0 }]);
            let out = m.resolve_mentions(&sc, 0, 750).unwrap();
            assert_eq!(out.len(), 1);
            assert_eq!(out[0].mention.position, 4);
            let sum: f64 = out[0].distribution.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12);
            assert_eq!(out, m.resolve_mentions(&sc, 0, 750).unwrap());
        }
    }

    #[test]
    fn dropout_only_in_training() {
        let mut m = model(ModelKind::EntLib, 4, 3, 2, 3);
        m.config.dropout_pre = 0.5;
        m.config.dropout_post = 0.5;
        let inp = input(&[2, 3, 4], &[&[0], &[1], &[3]], &[2]);
        let run = |rng: Option<&mut ChaCha8Rng>| {
            let mut tape = Tape::new();
            let tr = m.forward_scene(&mut tape, &inp, 750, 0, rng, false).unwrap();
            tape.value(tr.outputs[0]).to_vec()
        };
        assert_eq!(run(None), run(None));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_ne!(run(None), run(Some(&mut rng)));
    }
}
