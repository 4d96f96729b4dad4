//! Token grids in raster-scan order and the two concatenation operators that
//! assemble panoramas out of blocks.
//!
//! All indices are 0-based. A grid with zero rows or zero columns holds no
//! tokens and acts as the identity for both [`vconcat`] and [`hconcat`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<u32> for TokenId {
    fn from(v: u32) -> Self {
        TokenId(v)
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Flat index of `(row, col)` in a row-major grid with `cols` columns.
pub fn raster_index(row: usize, col: usize, cols: usize) -> Result<usize> {
    if col >= cols {
        return Err(Error::Index(format!("column {col} outside grid of {cols} columns")));
    }
    row.checked_mul(cols)
        .and_then(|base| base.checked_add(col))
        .ok_or_else(|| Error::Index(format!("({row}, {col}) overflows with {cols} columns")))
}

/// Immutable 2D grid of tokens stored in raster-scan order.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TokenGrid {
    rows: usize,
    cols: usize,
    tokens: Vec<TokenId>,
}

impl TokenGrid {
    pub fn new(rows: usize, cols: usize, tokens: Vec<TokenId>) -> Result<Self> {
        let expected =
            rows.checked_mul(cols).ok_or_else(|| Error::Dimension(format!("{rows}x{cols} grid overflows")))?;
        if tokens.len() != expected {
            return Err(Error::Dimension(format!("{rows}x{cols} grid needs {expected} tokens, got {}", tokens.len())));
        }
        Ok(TokenGrid { rows, cols, tokens })
    }

    pub fn from_ids(rows: usize, cols: usize, ids: &[u32]) -> Result<Self> {
        Self::new(rows, cols, ids.iter().copied().map(TokenId).collect())
    }

    /// A grid with no tokens; `rows` or `cols` (or both) must be zero.
    pub fn empty(rows: usize, cols: usize) -> Result<Self> {
        if rows != 0 && cols != 0 {
            return Err(Error::Dimension(format!("{rows}x{cols} is not an empty shape")));
        }
        Ok(TokenGrid { rows, cols, tokens: Vec::new() })
    }

    /// Square block of side `side` from exactly `side * side` tokens.
    pub fn block(side: usize, tokens: Vec<TokenId>) -> Result<Self> {
        Self::new(side, side, tokens)
    }

    pub fn filled(rows: usize, cols: usize, token: TokenId) -> Self {
        TokenGrid { rows, cols, tokens: vec![token; rows * cols] }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    #[inline]
    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn into_tokens(self) -> Vec<TokenId> {
        self.tokens
    }

    pub fn get(&self, row: usize, col: usize) -> Option<TokenId> {
        if row >= self.rows || col >= self.cols {
            return None;
        }
        Some(self.tokens[row * self.cols + col])
    }

    pub fn row(&self, row: usize) -> Option<&[TokenId]> {
        if row >= self.rows {
            return None;
        }
        Some(&self.tokens[row * self.cols..(row + 1) * self.cols])
    }

    pub fn max_token(&self) -> Option<TokenId> {
        self.tokens.iter().copied().max()
    }

    /// Copy of the rectangle `[row0, row0 + rows) x [col0, col0 + cols)`.
    pub fn sub_grid(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<Self> {
        if row0 + rows > self.rows || col0 + cols > self.cols {
            return Err(Error::Range(format!(
                "sub-grid {rows}x{cols} at ({row0}, {col0}) exceeds {}x{} grid",
                self.rows, self.cols
            )));
        }
        let mut tokens = Vec::with_capacity(rows * cols);
        for r in row0..row0 + rows {
            let base = r * self.cols + col0;
            tokens.extend_from_slice(&self.tokens[base..base + cols]);
        }
        if rows == 0 || cols == 0 {
            return Ok(TokenGrid { rows, cols, tokens });
        }
        Self::new(rows, cols, tokens)
    }

    /// Copy of this grid with a different token at `(row, col)`.
    pub fn with_token(&self, row: usize, col: usize, token: TokenId) -> Result<Self> {
        let idx = raster_index(row, col, self.cols)?;
        if row >= self.rows {
            return Err(Error::Index(format!("row {row} outside grid of {} rows", self.rows)));
        }
        let mut tokens = self.tokens.clone();
        tokens[idx] = token;
        Ok(TokenGrid { rows: self.rows, cols: self.cols, tokens })
    }
}

impl fmt::Debug for TokenGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TokenGrid({}x{})", self.rows, self.cols)?;
        if self.tokens.len() <= 64 {
            for r in 0..self.rows {
                write!(f, "\n  {:?}", self.row(r).unwrap().iter().map(|t| t.0).collect::<Vec<_>>())?;
            }
        }
        Ok(())
    }
}

/// Stacks `bottom` under `top`.
pub fn vconcat(top: &TokenGrid, bottom: &TokenGrid) -> Result<TokenGrid> {
    if bottom.is_empty() {
        return Ok(top.clone());
    }
    if top.is_empty() {
        return Ok(bottom.clone());
    }
    if top.cols != bottom.cols {
        return Err(Error::Dimension(format!(
            "vertical concatenation needs equal widths, got {} and {}",
            top.cols, bottom.cols
        )));
    }
    let mut tokens = Vec::with_capacity(top.len() + bottom.len());
    tokens.extend_from_slice(&top.tokens);
    tokens.extend_from_slice(&bottom.tokens);
    Ok(TokenGrid { rows: top.rows + bottom.rows, cols: top.cols, tokens })
}

/// Places `right` to the right of `left`, row by row.
pub fn hconcat(left: &TokenGrid, right: &TokenGrid) -> Result<TokenGrid> {
    if right.is_empty() {
        return Ok(left.clone());
    }
    if left.is_empty() {
        return Ok(right.clone());
    }
    if left.rows != right.rows {
        return Err(Error::Dimension(format!(
            "horizontal concatenation needs equal heights, got {} and {}",
            left.rows, right.rows
        )));
    }
    let cols = left.cols + right.cols;
    let mut tokens = Vec::with_capacity(left.rows * cols);
    for r in 0..left.rows {
        tokens.extend_from_slice(left.row(r).unwrap());
        tokens.extend_from_slice(right.row(r).unwrap());
    }
    Ok(TokenGrid { rows: left.rows, cols, tokens })
}

/// The final `count` tokens of the grid in raster order.
pub fn tail_tokens(grid: &TokenGrid, count: usize) -> Result<&[TokenId]> {
    if count > grid.len() {
        return Err(Error::Range(format!("requested {count} tail tokens from a grid of {}", grid.len())));
    }
    Ok(&grid.tokens[grid.len() - count..])
}

/// The final `count` tokens of row `row`.
pub fn row_tail(grid: &TokenGrid, row: usize, count: usize) -> Result<&[TokenId]> {
    if row >= grid.rows {
        return Err(Error::Range(format!("row {row} outside grid of {} rows", grid.rows)));
    }
    if count > grid.cols {
        return Err(Error::Range(format!("requested {count} tokens from a row of {}", grid.cols)));
    }
    let end = (row + 1) * grid.cols;
    Ok(&grid.tokens[end - count..end])
}
