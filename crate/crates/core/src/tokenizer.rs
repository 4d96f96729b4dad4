//! Codebook, flat-patch decoder/encoder pair and boundary-token blending.
//!
//! Each token renders as a `q x q` patch of one uniform color taken from the
//! first three embedding components. Encoding inverts that by nearest-color
//! search, so `encode_image(decode_tokens(g))` recovers `g` whenever the
//! codebook's rendered colors are pairwise distinct and lie on the 8-bit
//! lattice, which [`build_codebook`] guarantees.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grid::{TokenGrid, TokenId};
use crate::image::PixelImage;
use crate::scalar::Scalar;

pub const DEFAULT_PATCH_SIZE: usize = 16;
pub const DEFAULT_CODEBOOK_SIZE: usize = 256;
pub const MAX_CODEBOOK_SIZE: usize = 16384;

/// Ordered set of `k` embeddings of dimension `d`, plus the pixel patch side
/// each token decodes to.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T: Scalar> {
    k: usize,
    d: usize,
    patch_size: usize,
    embeddings: Vec<T>,
}

impl<T: Scalar> Codebook<T> {
    pub fn new(k: usize, d: usize, patch_size: usize, embeddings: Vec<T>) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("codebook needs at least 2 entries, got {k}")));
        }
        if d < 3 {
            return Err(Error::Config(format!("embedding dimension must be >= 3, got {d}")));
        }
        if patch_size == 0 {
            return Err(Error::Config("patch size must be positive".into()));
        }
        if embeddings.len() != k * d {
            return Err(Error::Config(format!(
                "codebook {k}x{d} needs {} components, got {}",
                k * d,
                embeddings.len()
            )));
        }
        if let Some(i) = embeddings.iter().position(|v| !v.is_finite()) {
            return Err(Error::Config(format!("embedding component {i} is not finite")));
        }
        Ok(Codebook { k, d, patch_size, embeddings })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn embeddings(&self) -> &[T] {
        &self.embeddings
    }

    pub fn embedding(&self, token: TokenId) -> Result<&[T]> {
        let i = token.index();
        if i >= self.k {
            return Err(Error::Codebook(format!("token {i} outside codebook of {}", self.k)));
        }
        Ok(&self.embeddings[i * self.d..(i + 1) * self.d])
    }

    /// 8-bit color a token renders to: first three components scaled to
    /// 0..=255 with round-half-up.
    pub fn color(&self, token: TokenId) -> Result<[u8; 3]> {
        let e = self.embedding(token)?;
        Ok([to_u8(e[0]), to_u8(e[1]), to_u8(e[2])])
    }

    pub fn has_distinct_colors(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.k);
        (0..self.k).all(|i| seen.insert(self.color(TokenId(i as u32)).unwrap()))
    }

    pub fn check_tokens(&self, grid: &TokenGrid) -> Result<()> {
        match grid.max_token() {
            Some(t) if t.index() >= self.k => Err(Error::Codebook(format!("token {t} outside codebook of {}", self.k))),
            _ => Ok(()),
        }
    }

    /// Index of the entry nearest to `target` over the first `target.len()`
    /// components. Ties resolve to the lowest index.
    fn nearest_prefix(&self, target: &[T]) -> TokenId {
        let mut best = 0usize;
        let mut best_dist = T::infinity();
        for i in 0..self.k {
            let e = &self.embeddings[i * self.d..i * self.d + target.len()];
            let dist = e.iter().zip(target).fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
            if dist < best_dist {
                best_dist = dist;
                best = i;
            }
        }
        TokenId(best as u32)
    }

    /// Nearest entry over the full embedding.
    pub fn nearest(&self, target: &[T]) -> Result<TokenId> {
        if target.len() != self.d {
            return Err(Error::Shape(format!("embedding has dimension {}, codebook uses {}", target.len(), self.d)));
        }
        Ok(self.nearest_prefix(target))
    }

    pub fn convert<U: Scalar>(&self) -> Codebook<U> {
        Codebook {
            k: self.k,
            d: self.d,
            patch_size: self.patch_size,
            embeddings: self.embeddings.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

fn to_u8<T: Scalar>(v: T) -> u8 {
    let scaled = (v * T::of(255.0) + T::of(0.5)).floor();
    scaled.max(T::zero()).min(T::of(255.0)).to_u8().unwrap_or(0)
}

/// Deterministic stand-in codebook.
///
/// Every component follows a Gaussian random walk over the entry index and is
/// then min-max mapped into `[0, 1]`, so neighbouring ids carry similar
/// embeddings. The three color components are snapped to the 8-bit lattice
/// and de-duplicated, which makes every entry's rendered color unique.
pub fn build_codebook<T: Scalar>(k: usize, d: usize, patch_size: usize, seed: u64) -> Result<Codebook<T>> {
    if k < 2 {
        return Err(Error::Config(format!("codebook needs at least 2 entries, got {k}")));
    }
    if k > MAX_CODEBOOK_SIZE {
        return Err(Error::Config(format!("codebook size {k} exceeds {MAX_CODEBOOK_SIZE}")));
    }
    if d < 3 {
        return Err(Error::Config(format!("embedding dimension must be >= 3, got {d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut walk = vec![0.0f64; k * d];
    for i in 1..k {
        for j in 0..d {
            let step: f64 = StandardNormal.sample(&mut rng);
            walk[i * d + j] = walk[(i - 1) * d + j] + step;
        }
    }
    for j in 0..d {
        let (lo, hi) = (0..k).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), i| {
            let v = walk[i * d + j];
            (lo.min(v), hi.max(v))
        });
        for i in 0..k {
            let v = &mut walk[i * d + j];
            *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.5 };
        }
    }

    let mut used: HashSet<[u8; 3]> = HashSet::with_capacity(k);
    for i in 0..k {
        let e = &mut walk[i * d..i * d + 3];
        let rgb = [to_u8(e[0]), to_u8(e[1]), to_u8(e[2])];
        let rgb = free_color_near(rgb, &used);
        used.insert(rgb);
        for c in 0..3 {
            e[c] = f64::from(rgb[c]) / 255.0;
        }
    }
    Codebook::new(k, d, patch_size, walk.into_iter().map(T::of).collect())
}

/// First unused lattice color scanning shells of growing Chebyshev radius.
fn free_color_near(rgb: [u8; 3], used: &HashSet<[u8; 3]>) -> [u8; 3] {
    if !used.contains(&rgb) {
        return rgb;
    }
    for radius in 1i32..=255 {
        for dr in -radius..=radius {
            for dg in -radius..=radius {
                for db in -radius..=radius {
                    if dr.abs().max(dg.abs()).max(db.abs()) != radius {
                        continue;
                    }
                    let cand = [rgb[0] as i32 + dr, rgb[1] as i32 + dg, rgb[2] as i32 + db];
                    if cand.iter().any(|&c| !(0..=255).contains(&c)) {
                        continue;
                    }
                    let cand = [cand[0] as u8, cand[1] as u8, cand[2] as u8];
                    if !used.contains(&cand) {
                        return cand;
                    }
                }
            }
        }
    }
    unreachable!("codebook size is bounded far below the color lattice")
}

/// Renders every token as a flat `q x q` patch.
pub fn decode_tokens<T: Scalar>(grid: &TokenGrid, codebook: &Codebook<T>) -> Result<PixelImage> {
    codebook.check_tokens(grid)?;
    let q = codebook.patch_size();
    let (h, w) = (grid.rows() * q, grid.cols() * q);
    let palette: Vec<[u8; 3]> = (0..codebook.size()).map(|i| codebook.color(TokenId(i as u32)).unwrap()).collect();
    let mut samples = Vec::with_capacity(h * w * 3);
    for r in 0..grid.rows() {
        let row = grid.row(r).unwrap();
        let mut line = Vec::with_capacity(w * 3);
        for t in row {
            let rgb = palette[t.index()];
            for _ in 0..q {
                line.extend_from_slice(&rgb);
            }
        }
        for _ in 0..q {
            samples.extend_from_slice(&line);
        }
    }
    PixelImage::new(h, w, samples)
}

/// Quantizes each `q x q` patch to the codebook entry whose color (first three
/// components) is nearest to the patch's mean color in `[0, 1]`.
pub fn encode_image<T: Scalar>(image: &PixelImage, codebook: &Codebook<T>) -> Result<TokenGrid> {
    let q = codebook.patch_size();
    if !image.height().is_multiple_of(q) || !image.width().is_multiple_of(q) {
        return Err(Error::Shape(format!(
            "image {}x{} is not divisible by patch size {q}",
            image.height(),
            image.width()
        )));
    }
    let (rows, cols) = (image.height() / q, image.width() / q);
    let norm = T::of((q * q) as f64 * 255.0);
    let mut tokens = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let mut sum = [0u64; 3];
            for y in r * q..(r + 1) * q {
                for x in c * q..(c + 1) * q {
                    let px = image.pixel(y, x);
                    for ch in 0..3 {
                        sum[ch] += u64::from(px[ch]);
                    }
                }
            }
            let mean = sum.map(|s| T::of(s as f64) / norm);
            tokens.push(codebook.nearest_prefix(&mean));
        }
    }
    if rows == 0 || cols == 0 {
        return TokenGrid::empty(rows, cols);
    }
    TokenGrid::new(rows, cols, tokens)
}

/// Re-quantizes the blend `lambda * e_cur + (1 - lambda) * e_prev` to the
/// nearest codebook entry (lowest index on ties).
pub fn blend_boundary<T: Scalar>(e_prev: &[T], e_cur: &[T], lambda: T, codebook: &Codebook<T>) -> Result<TokenId> {
    if e_prev.len() != codebook.dim() || e_cur.len() != codebook.dim() {
        return Err(Error::Shape(format!(
            "blend inputs have dimensions {} and {}, codebook uses {}",
            e_prev.len(),
            e_cur.len(),
            codebook.dim()
        )));
    }
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(Error::Config(format!("blend factor {lambda} outside [0, 1]")));
    }
    let mixed: Vec<T> = e_prev.iter().zip(e_cur).map(|(&p, &c)| lambda * c + (T::one() - lambda) * p).collect();
    codebook.nearest(&mixed)
}

/// [`blend_boundary`] on the embeddings of two tokens.
pub fn blend_tokens<T: Scalar>(prev: TokenId, cur: TokenId, lambda: T, codebook: &Codebook<T>) -> Result<TokenId> {
    blend_boundary(codebook.embedding(prev)?, codebook.embedding(cur)?, lambda, codebook)
}
