//! Binary model container. All integers are little-endian; see
//! `docs/model-format.md` for the field-by-field layout.

use std::fs;
use std::path::Path;

use super::{Dims, GateSimilarity, ModelBundle, ModelConfig, ModelKind, ModelMeta, VariantFlags};
use crate::corpus::{FrequencyTable, Vocabulary};
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

pub const MODEL_MAGIC: &[u8; 8] = b"ENTLINK\0";
pub const MODEL_VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, x: u8) {
        self.0.push(x);
    }
    fn u32(&mut self, x: u32) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn u64(&mut self, x: u64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn f64(&mut self, x: f64) {
        self.0.extend_from_slice(&x.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format(format!("truncated model file at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Format("count does not fit in memory".into()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("string is not UTF-8".into()))
    }
    fn bool(&mut self) -> Result<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            b => Err(Error::Format(format!("bad boolean byte {b}"))),
        }
    }
}

fn kind_code(k: ModelKind) -> u8 {
    match k {
        ModelKind::BiLstm => 0,
        ModelKind::EntLib => 1,
        ModelKind::EntNet => 2,
    }
}

pub fn encode_model(m: &ModelBundle) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    let c = &m.config;
    w.u8(kind_code(c.kind));
    w.u8(c.flags.tie_speaker_referent as u8);
    w.u8(match c.flags.gate_similarity {
        GateSimilarity::Cosine => 0,
        GateSimilarity::Dot => 1,
    });
    w.u8(c.flags.updates_enabled as u8);
    w.f64(c.dropout_pre);
    w.f64(c.dropout_post);
    for d in [c.dims.vocab, c.dims.d_tok, c.dims.hidden, c.dims.k, c.dims.entities] {
        w.u64(d as u64);
    }
    let toks = m.vocab.regular_tokens();
    w.u64(toks.len() as u64);
    for t in toks {
        w.str(t);
    }
    let counts = m.meta.train_freq.counts();
    w.u64(counts.len() as u64);
    for &x in counts {
        w.u64(x);
    }
    w.u64(m.meta.mains.len() as u64);
    for &x in &m.meta.mains {
        w.u64(x as u64);
    }
    match m.meta.unknown {
        Some(u) => {
            w.u8(1);
            w.u64(u as u64);
        }
        None => {
            w.u8(0);
            w.u64(0);
        }
    }
    w.u64(m.params.len() as u64);
    for p in m.params.iter() {
        w.str(&p.name);
        w.u32(p.value.shape().len() as u32);
        for &d in p.value.shape() {
            w.u64(d as u64);
        }
        for &x in p.value.data() {
            w.f64(x);
        }
    }
    w.0
}

pub fn decode_model(buf: &[u8]) -> Result<ModelBundle> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(8)? != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic bytes)".into()));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {version}")));
    }
    let kind = match r.u8()? {
        0 => ModelKind::BiLstm,
        1 => ModelKind::EntLib,
        2 => ModelKind::EntNet,
        b => return Err(Error::Format(format!("bad model kind {b}"))),
    };
    let tie_speaker_referent = r.bool()?;
    let gate_similarity = match r.u8()? {
        0 => GateSimilarity::Cosine,
        1 => GateSimilarity::Dot,
        b => return Err(Error::Format(format!("bad gate similarity {b}"))),
    };
    let updates_enabled = r.bool()?;
    let dropout_pre = r.f64()?;
    let dropout_post = r.f64()?;
    let dims = Dims {
        vocab: r.usize()?,
        d_tok: r.usize()?,
        hidden: r.usize()?,
        k: r.usize()?,
        entities: r.usize()?,
    };
    let n = r.usize()?;
    let toks = (0..n).map(|_| r.str()).collect::<Result<Vec<_>>>()?;
    let vocab = Vocabulary::from_tokens(toks)?;
    let n = r.usize()?;
    let counts = (0..n).map(|_| r.u64()).collect::<Result<Vec<_>>>()?;
    let n = r.usize()?;
    let mains = (0..n).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let has_unknown = r.bool()?;
    let u = r.usize()?;
    let meta = ModelMeta {
        train_freq: FrequencyTable::from_counts(counts),
        mains,
        unknown: has_unknown.then_some(u),
    };
    let mut params = ParamStore::new();
    let n = r.usize()?;
    for _ in 0..n {
        let name = r.str()?;
        let nd = r.u32()? as usize;
        let shape = (0..nd).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let len: usize = shape.iter().product();
        let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        if params.id(&name).is_some() {
            return Err(Error::Format(format!("parameter {name} stored twice")));
        }
        params.insert(name, Tensor::new(shape, data)?);
    }
    if r.pos != buf.len() {
        return Err(Error::Format(format!("{} trailing bytes after parameters", buf.len() - r.pos)));
    }
    let config = ModelConfig {
        kind,
        dims,
        flags: VariantFlags {
            tie_speaker_referent,
            gate_similarity,
            updates_enabled,
        },
        dropout_pre,
        dropout_post,
    };
    ModelBundle::from_parts(config, params, vocab, meta)
}

pub fn save_model(m: &ModelBundle, path: &Path) -> Result<()> {
    fs::write(path, encode_model(m)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let buf = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&buf).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bundle(kind: ModelKind, tie: bool) -> ModelBundle {
        let vocab = Vocabulary::from_tokens(["a", "b", "Ross"].map(String::from)).unwrap();
        let config = ModelConfig {
            kind,
            dims: Dims {
                vocab: 5,
                d_tok: 3,
                hidden: 2,
                k: 2,
                entities: 4,
            },
            flags: VariantFlags {
                tie_speaker_referent: tie,
                ..VariantFlags::default()
            },
            dropout_pre: 0.1,
            dropout_post: 0.0,
        };
        let meta = ModelMeta {
            train_freq: FrequencyTable::from_counts(vec![3, 0, 1500, 7]),
            mains: vec![0, 2],
            unknown: Some(3),
        };
        ModelBundle::init(config, vocab, meta, 9, None).unwrap()
    }

    #[test]
    fn round_trip_byte_identical() {
        for kind in ModelKind::ALL {
            for tie in [true, false] {
                let m = bundle(kind, tie);
                let bytes = encode_model(&m);
                let back = decode_model(&bytes).unwrap();
                assert_eq!(back, m);
                assert_eq!(encode_model(&back), bytes);
            }
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let bytes = encode_model(&bundle(ModelKind::EntNet, true));
        assert!(decode_model(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_model(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode_model(&extra).is_err());
    }
}
