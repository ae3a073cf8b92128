//! Token geometry: alternating two-frame scan orders, raster orders,
//! register-token layouts, and rotary spatial / additive temporal position
//! codes.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Var};
use std::f64::consts::PI;

/// Traversal direction of a scan order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    /// Row-major, top-left first.
    RowForward,
    /// Row-major, bottom-right first.
    RowBackward,
    /// Column-major, top-left first.
    ColForward,
    /// Column-major, bottom-right first.
    ColBackward,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::RowForward,
        Direction::RowBackward,
        Direction::ColForward,
        Direction::ColBackward,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Direction::RowForward => "row+",
            Direction::RowBackward => "row-",
            Direction::ColForward => "col+",
            Direction::ColBackward => "col-",
        }
    }

    /// Spatial positions `y * w + x` in visiting order.
    fn positions(self, h: usize, w: usize) -> Vec<usize> {
        let row: Vec<usize> = (0..h * w).collect();
        let col: Vec<usize> = (0..w).flat_map(|x| (0..h).map(move |y| y * w + x)).collect();
        match self {
            Direction::RowForward => row,
            Direction::RowBackward => row.into_iter().rev().collect(),
            Direction::ColForward => col,
            Direction::ColBackward => col.into_iter().rev().collect(),
        }
    }
}

/// A permutation of token indices together with its inverse.
///
/// `forward[k]` is the token placed at slot `k` of the scanned sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanOrder {
    forward: Vec<usize>,
    inverse: Vec<usize>,
    direction: Direction,
}

impl ScanOrder {
    pub fn new(forward: Vec<usize>, direction: Direction) -> Result<Self> {
        crate::tensor::check_permutation(&forward, forward.len())?;
        let mut inverse = vec![0; forward.len()];
        for (k, &i) in forward.iter().enumerate() {
            inverse[i] = k;
        }
        Ok(Self {
            forward,
            inverse,
            direction,
        })
    }

    pub fn forward(&self) -> &[usize] {
        &self.forward
    }

    pub fn inverse(&self) -> &[usize] {
        &self.inverse
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    /// Reorders `x: [L, C]` into scan order.
    pub fn gather<'t, T: Scalar>(&self, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        x.gather_permute(&self.forward)
    }

    /// Returns scanned tokens `x: [L, C]` to their original positions.
    pub fn scatter<'t, T: Scalar>(&self, x: &Var<'t, T>) -> Result<Var<'t, T>> {
        x.gather_permute(&self.inverse)
    }
}

/// The four alternating scan orders over two `h x w` frames.
///
/// Tokens are laid out as all of frame A (row-major) followed by all of
/// frame B. Each order visits spatial positions in its direction and emits
/// the frame-A token before the frame-B token at every position, so even
/// slots hold frame A and odd slots frame B.
pub fn masm_orders(h: usize, w: usize) -> Result<[ScanOrder; 4]> {
    if h == 0 || w == 0 {
        return Err(Error::invalid("masm_orders", format!("empty grid {h}x{w}")));
    }
    let hw = h * w;
    let build = |dir: Direction| {
        let forward = dir
            .positions(h, w)
            .into_iter()
            .flat_map(|p| [p, hw + p])
            .collect();
        ScanOrder::new(forward, dir)
    };
    Ok([
        build(Direction::RowForward)?,
        build(Direction::RowBackward)?,
        build(Direction::ColForward)?,
        build(Direction::ColBackward)?,
    ])
}

/// Row-major raster order of a single `h x w` frame.
pub fn vim_order(h: usize, w: usize) -> Result<ScanOrder> {
    if h == 0 || w == 0 {
        return Err(Error::invalid("vim_order", format!("empty grid {h}x{w}")));
    }
    ScanOrder::new(Direction::RowForward.positions(h, w), Direction::RowForward)
}

/// Where register tokens sit in a content sequence of length `L`.
///
/// Register `k` (1-based) follows content token `min(k * ceil(L / n), L)`,
/// giving the pattern `x_1..x_i, r_1, x_{i+1}..x_{2i}, r_2, ...`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RegisterLayout {
    content_len: usize,
    positions: Vec<usize>,
}

/// Origin of one slot of an augmented sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    Content(usize),
    Register(usize),
}

impl RegisterLayout {
    pub fn new(content_len: usize, register_count: usize) -> Self {
        let n = register_count;
        let positions = if n == 0 {
            Vec::new()
        } else {
            let step = content_len.div_ceil(n);
            (1..=n).map(|k| (k * step).min(content_len) + (k - 1)).collect()
        };
        Self {
            content_len,
            positions,
        }
    }

    pub fn content_len(&self) -> usize {
        self.content_len
    }

    pub fn register_count(&self) -> usize {
        self.positions.len()
    }

    pub fn total_len(&self) -> usize {
        self.content_len + self.positions.len()
    }

    /// Indices of the register slots in the augmented sequence.
    pub fn positions(&self) -> &[usize] {
        &self.positions
    }

    /// Origin of every slot of the augmented sequence, in order.
    pub fn slots(&self) -> Vec<Slot> {
        let mut out = Vec::with_capacity(self.total_len());
        let mut next_reg = 0;
        let mut content = 0;
        for i in 0..self.total_len() {
            if next_reg < self.positions.len() && self.positions[next_reg] == i {
                out.push(Slot::Register(next_reg));
                next_reg += 1;
            } else {
                out.push(Slot::Content(content));
                content += 1;
            }
        }
        out
    }

    /// Augmented-sequence indices of the content tokens.
    pub fn content_positions(&self) -> Vec<usize> {
        self.slots()
            .iter()
            .enumerate()
            .filter_map(|(i, s)| matches!(s, Slot::Content(_)).then_some(i))
            .collect()
    }
}

/// Interleaves register vectors `r: [n, C]` into `x: [L, C]`.
pub fn insert_registers<'t, T: Scalar>(
    x: &Var<'t, T>,
    layout: &RegisterLayout,
    registers: &Var<'t, T>,
) -> Result<Var<'t, T>> {
    let xs = x.shape();
    if xs.len() != 2 || xs[0] != layout.content_len() {
        return Err(Error::invalid(
            "insert_registers",
            format!("layout expects {} tokens, got shape {xs:?}", layout.content_len()),
        ));
    }
    if layout.register_count() == 0 {
        return Ok(*x);
    }
    let rs = registers.shape();
    if rs != [layout.register_count(), xs[1]] {
        return Err(Error::ShapeMismatch {
            op: "insert_registers",
            expected: vec![layout.register_count(), xs[1]],
            got: rs,
        });
    }
    let l = layout.content_len();
    let idx: Vec<usize> = layout
        .slots()
        .into_iter()
        .map(|s| match s {
            Slot::Content(i) => i,
            Slot::Register(k) => l + k,
        })
        .collect();
    Var::concat(&[*x, *registers], 0)?.index_rows(&idx)
}

/// Drops the register slots of an augmented sequence.
pub fn remove_registers<'t, T: Scalar>(x: &Var<'t, T>, layout: &RegisterLayout) -> Result<Var<'t, T>> {
    let xs = x.shape();
    if xs.is_empty() || xs[0] != layout.total_len() {
        return Err(Error::invalid(
            "remove_registers",
            format!("layout expects {} tokens, got shape {xs:?}", layout.total_len()),
        ));
    }
    if layout.register_count() == 0 {
        return Ok(*x);
    }
    x.index_rows(&layout.content_positions())
}

/// How the rotary base frequencies are derived from their index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FrequencyRule {
    /// `omega_i = pi * i / 2`
    #[default]
    Scaled,
    /// `omega_i = floor(pi * i / 2)`
    Floor,
}

/// Rotary spatial position table for an `h x w` grid and `d` channels.
///
/// Channels form `d / 2` rotation pairs; the first `d / 4` pairs turn by
/// `u * omega_i` (row coordinate) and the rest by `v * omega_i` (column
/// coordinate), `i = 1..=d/4`. The table stores one angle per channel, with
/// both members of a pair sharing it.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialPositionEncoding {
    h: usize,
    w: usize,
    d: usize,
    omega: Vec<f64>,
    table: Vec<f64>,
}

/// Spatial role of one token in a sequence given to [`apply_spe`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TokenPos {
    /// Content token at row `u`, column `v`.
    At(usize, usize),
    /// Register token, left unrotated.
    Register,
    /// Content token whose coordinates are unknown; rejected.
    Unplaced,
}

pub fn build_spe(h: usize, w: usize, d: usize) -> Result<SpatialPositionEncoding> {
    build_spe_with(h, w, d, FrequencyRule::Scaled)
}

pub fn build_spe_with(h: usize, w: usize, d: usize, rule: FrequencyRule) -> Result<SpatialPositionEncoding> {
    if d == 0 || !d.is_multiple_of(4) {
        return Err(Error::invalid("build_spe", format!("channel count {d} not divisible by 4")));
    }
    let omega: Vec<f64> = (1..=d / 4)
        .map(|i| {
            let v = PI * i as f64 / 2.0;
            match rule {
                FrequencyRule::Scaled => v,
                FrequencyRule::Floor => v.floor(),
            }
        })
        .collect();
    let mut table = Vec::with_capacity(h * w * d);
    for u in 0..h {
        for v in 0..w {
            for coord in [u, v] {
                for &om in &omega {
                    let a = coord as f64 * om;
                    table.extend([a, a]);
                }
            }
        }
    }
    Ok(SpatialPositionEncoding { h, w, d, omega, table })
}

impl SpatialPositionEncoding {
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.h, self.w, self.d)
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Per-channel angles at `(u, v)`, length `d`.
    pub fn angles(&self, u: usize, v: usize) -> &[f64] {
        let base = (u * self.w + v) * self.d;
        &self.table[base..base + self.d]
    }

    /// One angle per rotation pair at `(u, v)`, length `d / 2`.
    pub fn pair_angles(&self, u: usize, v: usize) -> Vec<f64> {
        self.angles(u, v).iter().step_by(2).copied().collect()
    }
}

/// Rotates each content token of `x: [L, d]` by its position's angles.
pub fn apply_spe<'t, T: Scalar>(
    x: &Var<'t, T>,
    positions: &[TokenPos],
    spe: &SpatialPositionEncoding,
) -> Result<Var<'t, T>> {
    let xs = x.shape();
    if xs.len() != 2 || xs[0] != positions.len() || xs[1] != spe.d {
        return Err(Error::invalid(
            "apply_spe",
            format!("expected [{}, {}], got {xs:?}", positions.len(), spe.d),
        ));
    }
    let mut angles = Vec::with_capacity(xs[0] * spe.d / 2);
    for (i, p) in positions.iter().enumerate() {
        match *p {
            TokenPos::At(u, v) if u < spe.h && v < spe.w => angles.extend(spe.pair_angles(u, v)),
            TokenPos::At(u, v) => {
                return Err(Error::invalid(
                    "apply_spe",
                    format!("token {i} at ({u},{v}) outside {}x{} table", spe.h, spe.w),
                ))
            }
            TokenPos::Register => angles.extend(std::iter::repeat_n(0.0, spe.d / 2)),
            TokenPos::Unplaced => {
                return Err(Error::invalid("apply_spe", format!("token {i} lacks coordinates")))
            }
        }
    }
    x.rotate_pairs(&angles)
}

/// Adds rows of a learned `[T_max, C]` table to `x: [L, C]`; token `l`
/// receives row `frames[l]`.
pub fn add_temporal_embedding<'t, T: Scalar>(
    x: &Var<'t, T>,
    table: &Var<'t, T>,
    frames: &[usize],
) -> Result<Var<'t, T>> {
    let xs = x.shape();
    let ts = table.shape();
    if xs.len() != 2 || ts.len() != 2 || xs[1] != ts[1] || xs[0] != frames.len() {
        return Err(Error::invalid(
            "temporal_embedding",
            format!("x {xs:?}, table {ts:?}, {} frame indices", frames.len()),
        ));
    }
    if let Some(&f) = frames.iter().find(|&&f| f >= ts[0]) {
        return Err(Error::invalid(
            "temporal_embedding",
            format!("frame {f} beyond table length {}", ts[0]),
        ));
    }
    x.add(&table.index_rows(frames)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn masm_single_position() {
        let o = masm_orders(1, 1).unwrap();
        assert_eq!(o[0].forward(), &[0, 1]);
    }

    #[test]
    fn masm_one_by_two_row_forward() {
        let o = masm_orders(1, 2).unwrap();
        assert_eq!(o[0].forward(), &[0, 2, 1, 3]);
        assert_eq!(o[0].direction().tag(), "row+");
        assert_eq!(o[1].forward(), &[1, 3, 0, 2]);
    }

    #[test]
    fn masm_column_orders() {
        let o = masm_orders(2, 2).unwrap();
        // positions 0,2,1,3 column-major
        assert_eq!(o[2].forward(), &[0, 4, 2, 6, 1, 5, 3, 7]);
        assert_eq!(o[3].forward(), &[3, 7, 1, 5, 2, 6, 0, 4]);
    }

    #[test]
    fn vim_orders() {
        assert_eq!(vim_order(1, 1).unwrap().forward(), &[0]);
        assert_eq!(vim_order(2, 2).unwrap().forward(), &[0, 1, 2, 3]);
        assert!(vim_order(0, 3).is_err());
    }

    #[test]
    fn register_positions() {
        assert_eq!(RegisterLayout::new(9, 3).positions(), &[3, 7, 11]);
        assert_eq!(RegisterLayout::new(4, 2).positions(), &[2, 5]);
        assert_eq!(RegisterLayout::new(10, 3).positions(), &[4, 9, 12]);
        assert!(RegisterLayout::new(5, 0).positions().is_empty());
    }

    #[test]
    fn register_round_trip_and_errors() {
        let tape = Tape::<f32>::new();
        let x = tape.leaf(Tensor::from_fn(&[4, 2], |i| i as f32));
        let r = tape.leaf(Tensor::full(&[2, 2], -1.0));
        let layout = RegisterLayout::new(4, 2);
        let aug = insert_registers(&x, &layout, &r).unwrap();
        assert_eq!(aug.shape(), vec![6, 2]);
        assert_eq!(aug.value().row(2), &[-1.0, -1.0]);
        let back = remove_registers(&aug, &layout).unwrap();
        assert_eq!(*back.value(), *x.value());
        assert!(insert_registers(&x, &RegisterLayout::new(5, 2), &r).is_err());
        assert!(remove_registers(&x, &layout).is_err());
        let none = RegisterLayout::new(4, 0);
        let same = insert_registers(&x, &none, &r).unwrap();
        assert_eq!(*same.value(), *x.value());
    }

    #[test]
    fn spe_frequencies() {
        let spe = build_spe(4, 4, 8).unwrap();
        assert!((spe.omega()[0] - PI / 2.0).abs() < 1e-15);
        assert!((spe.omega()[1] - PI).abs() < 1e-15);
        assert!(spe.angles(0, 0).iter().all(|&a| a == 0.0));
        assert_eq!(spe.angles(3, 1), &[1.5 * PI, 1.5 * PI, 3.0 * PI, 3.0 * PI, 0.5 * PI, 0.5 * PI, PI, PI]);
        assert!(build_spe(2, 2, 6).is_err());
        let floor = build_spe_with(1, 1, 8, FrequencyRule::Floor).unwrap();
        assert_eq!(floor.omega(), &[1.0, 3.0]);
    }

    #[test]
    fn spe_rejects_unplaced_tokens() {
        let tape = Tape::<f64>::new();
        let spe = build_spe(2, 2, 4).unwrap();
        let x = tape.leaf(Tensor::ones(&[2, 4]));
        assert!(apply_spe(&x, &[TokenPos::At(0, 0), TokenPos::Unplaced], &spe).is_err());
        assert!(apply_spe(&x, &[TokenPos::At(0, 0), TokenPos::At(2, 0)], &spe).is_err());
        let y = apply_spe(&x, &[TokenPos::At(0, 0), TokenPos::Register], &spe).unwrap();
        assert_eq!(*y.value(), *x.value());
    }

    #[test]
    fn temporal_embedding_indexes_rows() {
        let tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::zeros(&[3, 2]));
        let table = tape.leaf(Tensor::from_fn(&[2, 2], |i| i as f64));
        let y = add_temporal_embedding(&x, &table, &[1, 0, 1]).unwrap();
        assert_eq!(y.value().data(), &[2.0, 3.0, 0.0, 1.0, 2.0, 3.0]);
        assert!(add_temporal_embedding(&x, &table, &[0, 0, 2]).is_err());
    }
}
