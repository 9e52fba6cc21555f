//! The three architectures: a shared speaker-aware biLSTM encoder with a
//! linear head ([`ModelKind::BiLstm`]), an entity-library query head
//! ([`ModelKind::EntLib`]) or a dynamic entity-memory head
//! ([`ModelKind::EntNet`]).

mod forward;
mod io;
mod pretrained;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{EntityId, FrequencyTable, Vocabulary};
use crate::error::{Error, Result};
use crate::lstm::LstmParams;
use crate::tensor::{ParamId, ParamStore, Tensor};

pub use forward::{argmax, EntNetHead, MemoryState, MentionOutput, SceneInput, SceneTrace, Speakers};
pub use io::{decode_model, encode_model, load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use pretrained::{load_word_vectors, parse_word_vectors, WordVectors};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ModelKind {
    BiLstm,
    EntLib,
    EntNet,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::BiLstm, ModelKind::EntLib, ModelKind::EntNet];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BiLstm => "bilstm",
            ModelKind::EntLib => "entlib",
            ModelKind::EntNet => "entnet",
        }
    }

    pub fn has_query(self) -> bool {
        self != ModelKind::BiLstm
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bilstm" => Ok(ModelKind::BiLstm),
            "entlib" => Ok(ModelKind::EntLib),
            "entnet" => Ok(ModelKind::EntNet),
            _ => Err(Error::Config(format!("unknown model kind {s:?} (bilstm, entlib, entnet)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GateSimilarity {
    Cosine,
    Dot,
}

impl FromStr for GateSimilarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(GateSimilarity::Cosine),
            "dot" => Ok(GateSimilarity::Dot),
            _ => Err(Error::Config(format!("unknown gate similarity {s:?} (cosine, dot)"))),
        }
    }
}

impl fmt::Display for GateSimilarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GateSimilarity::Cosine => "cosine",
            GateSimilarity::Dot => "dot",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VariantFlags {
    /// One matrix for speaker embeddings and entity keys.
    pub tie_speaker_referent: bool,
    pub gate_similarity: GateSimilarity,
    /// Dynamic value updates (EntNet only).
    pub updates_enabled: bool,
}

impl Default for VariantFlags {
    fn default() -> Self {
        VariantFlags {
            tie_speaker_referent: true,
            gate_similarity: GateSimilarity::Cosine,
            updates_enabled: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub vocab: usize,
    pub d_tok: usize,
    pub hidden: usize,
    pub k: usize,
    pub entities: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub dims: Dims,
    pub flags: VariantFlags,
    pub dropout_pre: f64,
    pub dropout_post: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        if d.vocab < 2 || d.d_tok == 0 || d.hidden == 0 || d.k == 0 || d.entities == 0 {
            return Err(Error::Config(format!("all model dimensions must be positive: {d:?}")));
        }
        for p in [self.dropout_pre, self.dropout_post] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::Config(format!("dropout rate {p} outside [0, 1)")));
            }
        }
        Ok(())
    }

    fn separate_speaker_matrix(&self) -> bool {
        self.kind.has_query() && !self.flags.tie_speaker_referent
    }

    /// Every parameter tensor with its shape, in storage order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let Dims {
            vocab,
            d_tok,
            hidden,
            k,
            entities,
        } = self.dims;
        let mut out = vec![
            (names::TOKEN_EMB.to_string(), vec![vocab, d_tok]),
            (names::ENTITY_EMB.to_string(), vec![entities, k]),
        ];
        if self.separate_speaker_matrix() {
            out.push((names::SPEAKER_EMB.to_string(), vec![entities, k]));
        }
        for dir in [names::FWD, names::BWD] {
            let [w, b] = LstmParams::shapes(d_tok + k, hidden);
            out.push((format!("{dir}.w"), w));
            out.push((format!("{dir}.b"), b));
        }
        out.extend(self.head_shapes());
        out
    }

    pub fn head_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let Dims { hidden, k, entities, .. } = self.dims;
        match self.kind {
            ModelKind::BiLstm => vec![
                (names::OUT_W.to_string(), vec![entities, 2 * hidden]),
                (names::OUT_B.to_string(), vec![entities]),
            ],
            ModelKind::EntLib | ModelKind::EntNet => {
                let mut v = vec![
                    (names::QUERY_W.to_string(), vec![k, 2 * hidden]),
                    (names::QUERY_B.to_string(), vec![k]),
                ];
                if self.kind == ModelKind::EntNet {
                    v.push((names::MEM_Q.to_string(), vec![k, k]));
                    v.push((names::MEM_R.to_string(), vec![k, k]));
                    v.push((names::MEM_S.to_string(), vec![k, k]));
                    v.push((names::MEM_PRELU.to_string(), vec![1]));
                }
                v
            }
        }
    }

    pub fn param_counts(&self) -> ParamCountReport {
        let count = |v: &[(String, Vec<usize>)]| -> Vec<(String, usize)> {
            v.iter().map(|(n, s)| (n.clone(), s.iter().product())).collect()
        };
        let all = count(&self.param_shapes());
        let head = count(&self.head_shapes());
        let head_total = head.iter().map(|x| x.1).sum();
        let total = all.iter().map(|x| x.1).sum();
        ParamCountReport {
            kind: self.kind,
            per_tensor: all,
            head: head_total,
            total,
        }
    }
}

/// Parameter counts, computed from shapes without allocating.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamCountReport {
    pub kind: ModelKind,
    pub per_tensor: Vec<(String, usize)>,
    pub head: usize,
    pub total: usize,
}

impl fmt::Display for ParamCountReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "model\t{}", self.kind)?;
        for (n, c) in &self.per_tensor {
            writeln!(f, "param\t{n}\t{c}")?;
        }
        writeln!(f, "head\t{}", self.head)?;
        writeln!(f, "total\t{}", self.total)
    }
}

pub mod names {
    pub const TOKEN_EMB: &str = "token_emb";
    pub const ENTITY_EMB: &str = "entity_emb";
    pub const SPEAKER_EMB: &str = "speaker_emb";
    pub const FWD: &str = "lstm_fwd";
    pub const BWD: &str = "lstm_bwd";
    pub const OUT_W: &str = "out.w";
    pub const OUT_B: &str = "out.b";
    pub const QUERY_W: &str = "query.w";
    pub const QUERY_B: &str = "query.b";
    pub const MEM_Q: &str = "mem.q";
    pub const MEM_R: &str = "mem.r";
    pub const MEM_S: &str = "mem.s";
    pub const MEM_PRELU: &str = "mem.prelu";
}

/// Training-side facts a model needs at evaluation time.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ModelMeta {
    pub train_freq: FrequencyTable,
    pub mains: Vec<EntityId>,
    pub unknown: Option<EntityId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ParamIds {
    pub token_emb: ParamId,
    pub entity_emb: ParamId,
    pub speaker_emb: ParamId,
    pub fwd: LstmParams,
    pub bwd: LstmParams,
    pub head: HeadIds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum HeadIds {
    Linear { w: ParamId, b: ParamId },
    Query { w: ParamId, b: ParamId },
    QueryDynamic { w: ParamId, b: ParamId, q: ParamId, r: ParamId, s: ParamId, prelu: ParamId },
}

/// A model: configuration, parameters, vocabulary and training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelBundle {
    pub config: ModelConfig,
    pub params: ParamStore,
    pub vocab: Vocabulary,
    pub meta: ModelMeta,
    pub(crate) ids: ParamIds,
}

pub const PRELU_INIT: f64 = 0.25;
pub const DEFAULT_CHUNK_LEN: usize = 750;

impl ModelBundle {
    /// Glorot-uniform matrices, zero biases, PReLU slope 0.25. Token
    /// embeddings are overwritten with `pretrained` rows where available.
    pub fn init(config: ModelConfig, vocab: Vocabulary, meta: ModelMeta, seed: u64, pretrained: Option<&WordVectors>) -> Result<Self> {
        config.validate()?;
        if config.dims.vocab != vocab.len() {
            return Err(Error::Config(format!(
                "config vocab size {} but vocabulary has {} entries",
                config.dims.vocab,
                vocab.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        for (name, shape) in config.param_shapes() {
            let t = if name == names::MEM_PRELU {
                Tensor::from_vec(vec![PRELU_INIT])
            } else if shape.len() == 1 {
                Tensor::zeros(&shape)
            } else {
                Tensor::glorot(shape[0], shape[1], &mut rng)
            };
            params.insert(name, t);
        }
        if let Some(wv) = pretrained {
            if wv.dim != config.dims.d_tok {
                return Err(Error::Config(format!(
                    "pretrained vectors have dimension {} but d_tok is {}",
                    wv.dim, config.dims.d_tok
                )));
            }
            let emb = &mut params.by_name_mut(names::TOKEN_EMB).expect("token embedding").value;
            for (i, tok) in vocab.regular_tokens().iter().enumerate() {
                if let Some(v) = wv.get(tok) {
                    emb.row_mut(i + 2).copy_from_slice(v);
                }
            }
        }
        Self::from_parts(config, params, vocab, meta)
    }

    /// Assembles a bundle from existing parameters, checking names and
    /// shapes against the configuration.
    pub fn from_parts(config: ModelConfig, params: ParamStore, vocab: Vocabulary, meta: ModelMeta) -> Result<Self> {
        config.validate()?;
        let expected = config.param_shapes();
        if expected.len() != params.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors for {}, found {}",
                expected.len(),
                config.kind,
                params.len()
            )));
        }
        for (name, shape) in &expected {
            let p = params
                .by_name(name)
                .ok_or_else(|| Error::Format(format!("missing parameter {name}")))?;
            if p.value.shape() != shape.as_slice() {
                return Err(Error::Shape {
                    op: "parameter",
                    left: shape.clone(),
                    right: p.value.shape().to_vec(),
                });
            }
        }
        let id = |n: &str| params.id(n).expect("checked above");
        let entity_emb = id(names::ENTITY_EMB);
        let speaker_emb = params.id(names::SPEAKER_EMB).unwrap_or(entity_emb);
        let input = config.dims.d_tok + config.dims.k;
        let lstm = |dir: &str| LstmParams {
            weight: id(&format!("{dir}.w")),
            bias: id(&format!("{dir}.b")),
            input,
            hidden: config.dims.hidden,
        };
        let head = match config.kind {
            ModelKind::BiLstm => HeadIds::Linear {
                w: id(names::OUT_W),
                b: id(names::OUT_B),
            },
            ModelKind::EntLib => HeadIds::Query {
                w: id(names::QUERY_W),
                b: id(names::QUERY_B),
            },
            ModelKind::EntNet => HeadIds::QueryDynamic {
                w: id(names::QUERY_W),
                b: id(names::QUERY_B),
                q: id(names::MEM_Q),
                r: id(names::MEM_R),
                s: id(names::MEM_S),
                prelu: id(names::MEM_PRELU),
            },
        };
        let ids = ParamIds {
            token_emb: id(names::TOKEN_EMB),
            entity_emb,
            speaker_emb,
            fwd: lstm(names::FWD),
            bwd: lstm(names::BWD),
            head,
        };
        Ok(ModelBundle {
            config,
            params,
            vocab,
            meta,
            ids,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn num_entities(&self) -> usize {
        self.config.dims.entities
    }

    /// Entity embedding rows (the library / keys; the speaker embedding when
    /// tied).
    pub fn entity_embeddings(&self) -> &Tensor {
        &self.params.get(self.ids.entity_emb).value
    }

    pub fn token_embeddings(&self) -> &Tensor {
        &self.params.get(self.ids.token_emb).value
    }

    /// The same weights evaluated under different variant flags. Fails when
    /// the override needs parameters the model was not trained with. The
    /// boolean is true when any flag differs from the trained ones.
    pub fn with_flags(&self, flags: VariantFlags) -> Result<(ModelBundle, bool)> {
        let trained = self.config.flags;
        let kind = self.kind();
        if flags.updates_enabled != trained.updates_enabled && kind != ModelKind::EntNet {
            return Err(Error::Unsupported(format!("{kind} has no dynamic updates to toggle")));
        }
        if flags.gate_similarity != trained.gate_similarity && !kind.has_query() {
            return Err(Error::Unsupported(format!("{kind} has no similarity gate")));
        }
        if flags.tie_speaker_referent != trained.tie_speaker_referent {
            if !kind.has_query() {
                return Err(Error::Unsupported(format!("{kind} has no entity keys to tie or untie")));
            }
            if !flags.tie_speaker_referent {
                return Err(Error::Unsupported(
                    "untied evaluation needs a separate speaker matrix, which a tied model does not have".into(),
                ));
            }
        }
        let mut m = self.clone();
        m.config.flags = flags;
        if flags.tie_speaker_referent && !trained.tie_speaker_referent {
            m.ids.speaker_emb = m.ids.entity_emb;
        }
        Ok((m, flags != trained))
    }
}
