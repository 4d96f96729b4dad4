use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Expansion stride `u = step / block_side`, kept exact.
pub type Stride = Ratio<u32>;

/// Parses `"3/4"`, `"1"` or `"0.5"` style strides.
pub fn parse_stride(text: &str) -> Result<Stride> {
    let t = text.trim();
    if let Some((n, d)) = t.split_once('/') {
        let n: u32 = n.trim().parse().map_err(|_| Error::Plan(format!("bad stride numerator in {t:?}")))?;
        let d: u32 = d.trim().parse().map_err(|_| Error::Plan(format!("bad stride denominator in {t:?}")))?;
        if d == 0 {
            return Err(Error::Plan(format!("stride {t:?} has zero denominator")));
        }
        return Ok(Ratio::new(n, d));
    }
    if let Ok(n) = t.parse::<u32>() {
        return Ok(Ratio::from_integer(n));
    }
    let v: f64 = t.parse().map_err(|_| Error::Plan(format!("cannot parse stride {t:?}")))?;
    Ratio::<i64>::approximate_float(v)
        .filter(|r| (*r.numer() as f64 / *r.denom() as f64 - v).abs() < 1e-9)
        .and_then(|r| Some(Ratio::new(u32::try_from(*r.numer()).ok()?, u32::try_from(*r.denom()).ok()?)))
        .ok_or_else(|| Error::Plan(format!("stride {t:?} has no exact non-negative rational form")))
}

pub fn format_stride(u: &Stride) -> String {
    if *u.denom() == 1 {
        u.numer().to_string()
    } else {
        format!("{}/{}", u.numer(), u.denom())
    }
}

/// Tokens added per iteration for stride `u` on a block of side `side`.
pub fn stride_to_step(side: usize, u: Stride) -> Result<usize> {
    if *u.numer() == 0 || u > Ratio::from_integer(1) {
        return Err(Error::Plan(format!("stride {} must lie in (0, 1]", format_stride(&u))));
    }
    let scaled = u * Ratio::from_integer(side as u32);
    if !scaled.is_integer() {
        return Err(Error::Plan(format!(
            "stride {} on block side {side} gives non-integral step {}",
            format_stride(&u),
            format_stride(&scaled)
        )));
    }
    Ok(scaled.to_integer() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Vertical,
    Horizontal,
    Both,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vertical" => Ok(Direction::Vertical),
            "horizontal" => Ok(Direction::Horizontal),
            "both" => Ok(Direction::Both),
            other => Err(Error::Config(format!("unknown direction {other:?}"))),
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Vertical => "vertical",
            Direction::Horizontal => "horizontal",
            Direction::Both => "both",
        })
    }
}

/// Iteration count (first block included) and tokens added per iteration
/// along one axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxisPlan {
    pub iterations: usize,
    pub step: usize,
}

impl AxisPlan {
    /// Extent along the axis after all iterations.
    pub fn extent(&self, side: usize) -> usize {
        side + (self.iterations - 1) * self.step
    }
}

/// Validated expansion schedule.
///
/// Vertical steps must satisfy `1 <= r < s`; horizontal steps `1 <= c <= s`,
/// where `c == s` is the no-overlap stride `u = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionPlan {
    block_side: usize,
    direction: Direction,
    vertical: Option<AxisPlan>,
    horizontal: Option<AxisPlan>,
}

impl ExpansionPlan {
    pub fn vertical(side: usize, iterations: usize, rows: usize) -> Result<Self> {
        check_side(side)?;
        let axis = vertical_axis(side, iterations, rows)?;
        Ok(ExpansionPlan { block_side: side, direction: Direction::Vertical, vertical: Some(axis), horizontal: None })
    }

    pub fn horizontal(side: usize, iterations: usize, cols: usize) -> Result<Self> {
        check_side(side)?;
        let axis = horizontal_axis(side, iterations, cols)?;
        Ok(ExpansionPlan { block_side: side, direction: Direction::Horizontal, vertical: None, horizontal: Some(axis) })
    }

    /// Vertical pass to `s + (n_v - 1) r` rows, then each `s`-row band is
    /// extended horizontally. The vertical extent must be a multiple of `s`.
    pub fn both(side: usize, v_iterations: usize, rows: usize, h_iterations: usize, cols: usize) -> Result<Self> {
        check_side(side)?;
        let v = vertical_axis(side, v_iterations, rows)?;
        let h = horizontal_axis(side, h_iterations, cols)?;
        if v.extent(side) % side != 0 {
            return Err(Error::Plan(format!(
                "vertical extent {} is not a whole number of {side}-row bands",
                v.extent(side)
            )));
        }
        Ok(ExpansionPlan { block_side: side, direction: Direction::Both, vertical: Some(v), horizontal: Some(h) })
    }

    /// Single-direction plan reaching exactly `extent` tokens with `step`.
    pub fn reaching(direction: Direction, side: usize, step: usize, extent: usize) -> Result<Self> {
        let iterations = iterations_for(side, step, extent)?;
        match direction {
            Direction::Vertical => Self::vertical(side, iterations, step),
            Direction::Horizontal => Self::horizontal(side, iterations, step),
            Direction::Both => Err(Error::Plan("use ExpansionPlan::both for two-axis plans".into())),
        }
    }

    pub fn block_side(&self) -> usize {
        self.block_side
    }

    pub fn block_tokens(&self) -> usize {
        self.block_side * self.block_side
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn vertical_axis(&self) -> Option<AxisPlan> {
        self.vertical
    }

    pub fn horizontal_axis(&self) -> Option<AxisPlan> {
        self.horizontal
    }

    /// Iterations of the single active axis (first block included). For
    /// two-axis plans this is the vertical count.
    pub fn iterations(&self) -> usize {
        self.vertical.or(self.horizontal).map_or(1, |a| a.iterations)
    }

    /// `(rows, cols)` of the finished token grid.
    pub fn final_shape(&self) -> (usize, usize) {
        let s = self.block_side;
        (self.vertical.map_or(s, |a| a.extent(s)), self.horizontal.map_or(s, |a| a.extent(s)))
    }

    /// Number of `s`-row bands the horizontal pass runs over.
    pub fn bands(&self) -> usize {
        self.final_shape().0 / self.block_side
    }

    /// Expansion iterations the scheduler will record, first block excluded.
    pub fn expansion_count(&self) -> usize {
        match self.direction {
            Direction::Vertical | Direction::Horizontal => self.iterations() - 1,
            Direction::Both => {
                let v = self.vertical.unwrap();
                let h = self.horizontal.unwrap();
                (v.iterations - 1) + self.bands() * (h.iterations - 1)
            }
        }
    }
}

fn check_side(side: usize) -> Result<()> {
    if side < 1 {
        return Err(Error::Plan("block side must be positive".into()));
    }
    Ok(())
}

fn vertical_axis(side: usize, iterations: usize, rows: usize) -> Result<AxisPlan> {
    if iterations < 1 {
        return Err(Error::Plan("iteration count must be at least 1".into()));
    }
    if rows < 1 || rows >= side {
        return Err(Error::Plan(format!("vertical step {rows} must satisfy 1 <= r < {side}")));
    }
    Ok(AxisPlan { iterations, step: rows })
}

fn horizontal_axis(side: usize, iterations: usize, cols: usize) -> Result<AxisPlan> {
    if iterations < 1 {
        return Err(Error::Plan("iteration count must be at least 1".into()));
    }
    if cols < 1 || cols > side {
        return Err(Error::Plan(format!("horizontal step {cols} must satisfy 1 <= c <= {side}")));
    }
    Ok(AxisPlan { iterations, step: cols })
}

/// Iterations (first block included) so that `side + (n - 1) * step == extent`.
pub fn iterations_for(side: usize, step: usize, extent: usize) -> Result<usize> {
    if step == 0 {
        return Err(Error::Plan("step must be positive".into()));
    }
    if extent < side || !(extent - side).is_multiple_of(step) {
        let below = if extent < side { side } else { side + (extent - side) / step * step };
        let above = if extent < side { side } else { below + step };
        return Err(Error::Plan(format!(
            "extent {extent} unreachable from block {side} with step {step}; nearest reachable are {below} and {above}"
        )));
    }
    Ok((extent - side) / step + 1)
}
