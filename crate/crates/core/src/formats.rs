//! Binary containers. All integers are little-endian `u32`, all reals
//! little-endian IEEE-754 `f64`.
//!
//! ```text
//! PTOK v1  "PTOK" | 0x01 | rows | cols | K | rows*cols token ids
//! PCBK v1  "PCBK" | 0x01 | K | d | q | K*d embedding components
//! PMDL v1  "PMDL" | 0x01 | kind
//!          kind 0 (tiny model): L | K | m | ff | parameters in ParamLayout order:
//!              token embedding (K x m), position embedding (L x m),
//!              query, key, value, attention output (m x m each),
//!              ff in (ff x m), ff in bias (ff), ff out (m x ff), ff out bias (m),
//!              output projection (m x K), output bias (K)
//!          kind 1 (markov chain): K | order | capacity |
//!              start distribution (K), lag weights (order), lag tables (order x K x K)
//! ```

use crate::error::{Error, Result};
use crate::generators::{MarkovChain, TinyCausalModel, TinyConfig};
use crate::grid::{TokenGrid, TokenId};
use crate::scalar::Scalar;
use crate::tokenizer::Codebook;

pub const PTOK_MAGIC: [u8; 4] = *b"PTOK";
pub const PCBK_MAGIC: [u8; 4] = *b"PCBK";
pub const PMDL_MAGIC: [u8; 4] = *b"PMDL";
pub const VERSION: u8 = 1;

pub const KIND_TINY: u8 = 0;
pub const KIND_MARKOV: u8 = 1;

/// Decoded content of a PMDL container.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Tiny(TinyCausalModel<f64>),
    Markov(MarkovChain),
}

struct Writer(Vec<u8>);

impl Writer {
    fn header(magic: [u8; 4]) -> Self {
        let mut v = Vec::new();
        v.extend_from_slice(&magic);
        v.push(VERSION);
        Writer(v)
    }

    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }

    fn u32(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
        self.0.extend_from_slice(&v.to_le_bytes());
        Ok(())
    }

    fn f64s(&mut self, vs: impl IntoIterator<Item = f64>) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn open(bytes: &'a [u8], magic: [u8; 4], what: &str) -> Result<Self> {
        if bytes.len() < 5 || bytes[..4] != magic {
            return Err(Error::Format(format!("not a {what} file (bad magic)")));
        }
        if bytes[4] != VERSION {
            return Err(Error::Format(format!("unsupported {what} version {}", bytes[4])));
        }
        Ok(Reader { bytes, at: 5 })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.at < n {
            return Err(Error::Format("truncated file".into()));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::Format("length overflow".into()))?;
        Ok(self.take(len)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn finish(self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", self.bytes.len() - self.at)));
        }
        Ok(())
    }
}

pub fn encode_ptok(grid: &TokenGrid, codebook_size: usize) -> Result<Vec<u8>> {
    if let Some(t) = grid.max_token() {
        if t.index() >= codebook_size {
            return Err(Error::Codebook(format!("token {t} outside codebook of {codebook_size}")));
        }
    }
    let mut w = Writer::header(PTOK_MAGIC);
    w.u32(grid.rows())?;
    w.u32(grid.cols())?;
    w.u32(codebook_size)?;
    for t in grid.tokens() {
        w.0.extend_from_slice(&t.0.to_le_bytes());
    }
    Ok(w.0)
}

/// Returns the grid and the codebook size recorded with it.
pub fn decode_ptok(bytes: &[u8]) -> Result<(TokenGrid, usize)> {
    let mut r = Reader::open(bytes, PTOK_MAGIC, "PTOK")?;
    let rows = r.u32()?;
    let cols = r.u32()?;
    let k = r.u32()?;
    let n = rows.checked_mul(cols).ok_or_else(|| Error::Format("grid size overflow".into()))?;
    let raw = r.take(n.checked_mul(4).ok_or_else(|| Error::Format("grid size overflow".into()))?)?;
    let tokens: Vec<TokenId> =
        raw.chunks_exact(4).map(|c| TokenId(u32::from_le_bytes(c.try_into().unwrap()))).collect();
    r.finish()?;
    if let Some(t) = tokens.iter().find(|t| t.index() >= k) {
        return Err(Error::Format(format!("token {t} outside recorded codebook size {k}")));
    }
    let grid = if n == 0 { TokenGrid::empty(rows, cols)? } else { TokenGrid::new(rows, cols, tokens)? };
    Ok((grid, k))
}

pub fn encode_pcbk<T: Scalar>(codebook: &Codebook<T>) -> Result<Vec<u8>> {
    let mut w = Writer::header(PCBK_MAGIC);
    w.u32(codebook.size())?;
    w.u32(codebook.dim())?;
    w.u32(codebook.patch_size())?;
    w.f64s(codebook.embeddings().iter().map(|v| v.as_f64()));
    Ok(w.0)
}

pub fn decode_pcbk<T: Scalar>(bytes: &[u8]) -> Result<Codebook<T>> {
    let mut r = Reader::open(bytes, PCBK_MAGIC, "PCBK")?;
    let k = r.u32()?;
    let d = r.u32()?;
    let q = r.u32()?;
    let n = k.checked_mul(d).ok_or_else(|| Error::Format("codebook size overflow".into()))?;
    let emb = r.f64s(n)?;
    r.finish()?;
    Codebook::new(k, d, q, emb.into_iter().map(T::of).collect())
}

pub fn encode_tiny<T: Scalar>(model: &TinyCausalModel<T>) -> Result<Vec<u8>> {
    let c = model.config();
    let mut w = Writer::header(PMDL_MAGIC);
    w.u8(KIND_TINY);
    w.u32(c.context)?;
    w.u32(c.vocab)?;
    w.u32(c.model_dim)?;
    w.u32(c.ff_dim)?;
    w.f64s(model.params().iter().map(|v| v.as_f64()));
    Ok(w.0)
}

pub fn encode_markov(chain: &MarkovChain) -> Result<Vec<u8>> {
    use crate::generators::TokenGenerator;
    let mut w = Writer::header(PMDL_MAGIC);
    w.u8(KIND_MARKOV);
    w.u32(chain.vocab_size())?;
    w.u32(chain.order())?;
    w.u32(chain.capacity())?;
    w.f64s(chain.start_distribution().iter().copied());
    w.f64s(chain.lag_weights().iter().copied());
    w.f64s(chain.tables().iter().copied());
    Ok(w.0)
}

pub fn decode_pmdl(bytes: &[u8]) -> Result<ModelFile> {
    let mut r = Reader::open(bytes, PMDL_MAGIC, "PMDL")?;
    match r.u8()? {
        KIND_TINY => {
            let config = TinyConfig { context: r.u32()?, vocab: r.u32()?, model_dim: r.u32()?, ff_dim: r.u32()? };
            config.validate().map_err(|e| Error::Format(e.to_string()))?;
            let total = crate::generators::tiny_param_count(&config);
            let params = r.f64s(total)?;
            r.finish()?;
            Ok(ModelFile::Tiny(TinyCausalModel::from_params(config, params)?))
        }
        KIND_MARKOV => {
            let vocab = r.u32()?;
            let order = r.u32()?;
            let capacity = r.u32()?;
            let start = r.f64s(vocab)?;
            let lags = r.f64s(order)?;
            let tables = r.f64s(order.saturating_mul(vocab).saturating_mul(vocab))?;
            r.finish()?;
            Ok(ModelFile::Markov(MarkovChain::from_parts(vocab, order, capacity, start, lags, tables)?))
        }
        other => Err(Error::Format(format!("unknown PMDL kind byte {other}"))),
    }
}
