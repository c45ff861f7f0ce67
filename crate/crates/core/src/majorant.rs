//! Closed-form solutions of the minimum-norm dominating-function problem for
//! the one-parameter models: least concave majorants in four flavors, plus
//! the monotone rearrangement used to study derivative profiles.
//!
//! All majorants of piecewise-linear data are computed exactly as upper
//! convex hulls of the node point set (monotone scan in grid order).
//! Derivative convention: left derivatives at interior and right nodes, the
//! right derivative at the left endpoint.

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, GridMeasure};
use std::sync::Arc;

/// Majorant of a sampled drift together with its derivative profile, the
/// representing measure (downward jumps of the derivative) and the contact
/// set where the majorant touches the drift.
#[derive(Debug, Clone)]
pub struct MajorantResult {
    /// The majorant, sampled on the same grid as the input.
    pub majorant: GridFunction,
    /// Per-node derivative: entry 0 is the right derivative at the left
    /// endpoint, entry i >= 1 the left derivative at node i. For the
    /// linearly-extended flavor, entry 0 is the slope of the extension cell.
    pub left_derivative: Vec<f64>,
    /// Atoms of the representing measure: the downward jumps of the
    /// derivative, plus (Wiener flavor) the terminal slope at the right end.
    pub induced_measure: GridMeasure,
    /// Nodes where the majorant equals the drift.
    pub contact: Vec<bool>,
    /// Squared L2 norm of the derivative; for the extended flavor this is
    /// taken over the full extended interval.
    pub norm_sq: f64,
}

/// Indices of the upper concave hull vertices of `(x[i], y[i])`, in order.
/// Collinear points are kept; they do not change the hull function.
fn upper_hull_vertices(x: &[f64], y: &[f64]) -> Vec<usize> {
    let mut stack: Vec<usize> = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        while stack.len() >= 2 {
            let a = stack[stack.len() - 2];
            let b = stack[stack.len() - 1];
            let slope_ab = (y[b] - y[a]) / (x[b] - x[a]);
            let slope_bi = (y[i] - y[b]) / (x[i] - x[b]);
            if slope_ab < slope_bi {
                stack.pop();
            } else {
                break;
            }
        }
        stack.push(i);
    }
    stack
}

/// Hull values at every node, interpolating linearly between vertices.
fn hull_values(x: &[f64], y: &[f64], vertices: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for pair in vertices.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        let slope = (y[b] - y[a]) / (x[b] - x[a]);
        out[a] = y[a];
        for i in a + 1..b {
            out[i] = y[a] + slope * (x[i] - x[a]);
        }
    }
    let last = *vertices.last().unwrap();
    out[last] = y[last];
    out
}

/// Interval slopes of a sampled function.
fn slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (ys[1] - ys[0]) / (xs[1] - xs[0]))
        .collect()
}

fn norm_sq_of_slopes(x: &[f64], s: &[f64]) -> f64 {
    x.windows(2)
        .zip(s)
        .map(|(xs, &si)| si * si * (xs[1] - xs[0]))
        .sum()
}

/// Per-node derivative from interval slopes: right derivative at node 0,
/// left derivatives elsewhere.
fn node_derivatives(s: &[f64]) -> Vec<f64> {
    let mut d = Vec::with_capacity(s.len() + 1);
    d.push(s[0]);
    d.extend_from_slice(s);
    d
}

fn contact_flags(f: &[f64], maj: &[f64]) -> Vec<bool> {
    let scale = 1.0 + f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    f.iter()
        .zip(maj)
        .map(|(&fi, &mi)| (mi - fi).abs() <= 1e-9 * scale)
        .collect()
}

/// Raw 1-D majorant computation on plain coordinate/value slices.
/// `monotone` selects the non-decreasing flavor: the data is anchored to its
/// maximum at the right end, which both forces monotonicity and makes the
/// hull flat after the earliest maximum. `terminal_atom` adds the terminal
/// slope as an atom at the right endpoint so that the measure reproduces
/// the derivative through the running-mass map.
struct RawMajorant {
    values: Vec<f64>,
    interval_slopes: Vec<f64>,
    atoms: Vec<f64>,
    norm_sq: f64,
}

fn raw_majorant(x: &[f64], y: &[f64], monotone: bool, terminal_atom: bool) -> RawMajorant {
    let n = x.len();
    let mut data = y.to_vec();
    if monotone {
        let max = y.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        data[n - 1] = data[n - 1].max(max);
    }
    let vertices = upper_hull_vertices(x, &data);
    let values = hull_values(x, &data, &vertices);
    let interval_slopes = slopes(x, &values);
    let mut atoms = vec![0.0; n];
    for i in 1..n - 1 {
        // Downward jump of the derivative across node i; exact zero between
        // hull vertices up to roundoff, which we clamp away.
        let drop = interval_slopes[i - 1] - interval_slopes[i];
        atoms[i] = if drop > 0.0 { drop } else { 0.0 };
    }
    if terminal_atom && interval_slopes[n - 2] > 0.0 {
        atoms[n - 1] = interval_slopes[n - 2];
    }
    let norm_sq = norm_sq_of_slopes(x, &interval_slopes);
    RawMajorant {
        values,
        interval_slopes,
        atoms,
        norm_sq,
    }
}

/// Least non-decreasing concave majorant (Wiener flavor).
///
/// The result is flat after the earliest maximum of `f`, and the induced
/// measure satisfies `gamma([t, b]) = derivative(t)` at every node.
pub fn lncm(f: &GridFunction) -> Result<MajorantResult> {
    let grid = f.grid().clone();
    if !grid.is_1d() {
        return Err(Error::Unsupported("lncm needs a 1-D grid".into()));
    }
    let x = grid.nodes();
    let raw = raw_majorant(x, f.values(), true, true);
    assemble(f, grid.clone(), raw)
}

/// Least concave majorant (Brownian bridge flavor).
///
/// Requires the drift to vanish at both endpoints; the induced measure has
/// atoms at interior nodes only and its running-mass map, centered to zero
/// mean, reproduces the derivative.
pub fn lcm(f: &GridFunction) -> Result<MajorantResult> {
    let grid = f.grid().clone();
    if !grid.is_1d() {
        return Err(Error::Unsupported("lcm needs a 1-D grid".into()));
    }
    let n = grid.len();
    if f.value(0).abs() > 1e-12 || f.value(n - 1).abs() > 1e-12 {
        return Err(Error::invalid(
            "least concave majorant flavor requires zero endpoint values",
        ));
    }
    let x = grid.nodes();
    let raw = raw_majorant(x, f.values(), false, false);
    assemble(f, grid.clone(), raw)
}

/// Majorant for the two-sided Wiener process on `[a, b]` with `a < 0 < b`:
/// the least non-increasing concave majorant on `[a, 0]` glued at the
/// origin with the least non-decreasing concave majorant on `[0, b]`.
/// Squared norms of the two arms add.
pub fn glued_majorant(f: &GridFunction) -> Result<MajorantResult> {
    let grid = f.grid().clone();
    if !grid.is_1d() {
        return Err(Error::Unsupported("glued majorant needs a 1-D grid".into()));
    }
    let x = grid.nodes();
    let i0 = grid
        .find_node(0.0)
        .ok_or_else(|| Error::invalid("0 must be a grid node for the glued majorant"))?;
    if i0 == 0 || i0 == grid.len() - 1 {
        return Err(Error::invalid("glued majorant needs a < 0 < b"));
    }
    if f.value(i0).abs() > 1e-12 {
        return Err(Error::invalid("glued majorant requires f(0) = 0"));
    }

    // Right arm on [0, b].
    let right = raw_majorant(&x[i0..], &f.values()[i0..], true, true);

    // Left arm mirrored onto [0, -a]: s_j = -x[i0 - j], g_j = f(x[i0 - j]).
    let mx: Vec<f64> = (0..=i0).map(|j| -x[i0 - j]).collect();
    let my: Vec<f64> = (0..=i0).map(|j| f.value(i0 - j)).collect();
    let left = raw_majorant(&mx, &my, true, true);

    let n = grid.len();
    let mut values = vec![0.0; n];
    let mut atoms = vec![0.0; n];
    let mut interval_slopes = vec![0.0; n - 1];
    for j in 0..=i0 {
        values[i0 - j] = left.values[j];
        atoms[i0 - j] += left.atoms[j];
    }
    for j in 0..left.interval_slopes.len() {
        // Mirrored interval j covers [x[i0-j-1], x[i0-j]].
        interval_slopes[i0 - j - 1] = -left.interval_slopes[j];
    }
    for (j, &v) in right.values.iter().enumerate() {
        values[i0 + j] = v;
        atoms[i0 + j] += right.atoms[j];
    }
    interval_slopes[i0..].copy_from_slice(&right.interval_slopes);

    let raw = RawMajorant {
        values,
        interval_slopes,
        atoms,
        norm_sq: left.norm_sq + right.norm_sq,
    };
    assemble(f, grid.clone(), raw)
}

/// Majorant for the Wiener process on `[a, b]` with `a > 0`: the drift is
/// extended linearly to the origin by `t * f(a) / a`, the non-decreasing
/// majorant is taken on `[0, b]`, and the result is restricted back to
/// `[a, b]`. `norm_sq` is the squared norm over the full `[0, b]`.
pub fn extend_and_majorize(f: &GridFunction) -> Result<MajorantResult> {
    let grid = f.grid().clone();
    if !grid.is_1d() {
        return Err(Error::Unsupported("extension needs a 1-D grid".into()));
    }
    let x = grid.nodes();
    let a = x[0];
    if a <= 0.0 {
        return Err(Error::invalid("linear extension requires a > 0"));
    }
    // The extension is linear on [0, a], so the single node at 0 represents
    // it exactly as piecewise-linear data.
    let mut ex = Vec::with_capacity(x.len() + 1);
    ex.push(0.0);
    ex.extend_from_slice(x);
    let mut ey = Vec::with_capacity(x.len() + 1);
    ey.push(0.0);
    ey.extend_from_slice(f.values());

    let raw = raw_majorant(&ex, &ey, true, true);
    let restricted = RawMajorant {
        values: raw.values[1..].to_vec(),
        // Entry 0 of node_derivatives would duplicate the first interval on
        // [a, b]; we instead want the extension-cell slope at the left
        // endpoint, so build the derivative vector from full slopes below.
        interval_slopes: raw.interval_slopes[1..].to_vec(),
        atoms: raw.atoms[1..].to_vec(),
        norm_sq: raw.norm_sq,
    };
    let mut result = assemble(f, grid.clone(), restricted)?;
    // Left derivative at a is the extension slope, which equals the total
    // mass of the induced measure on [a, b].
    result.left_derivative[0] = raw.interval_slopes[0];
    Ok(result)
}

fn assemble(f: &GridFunction, grid: Arc<Grid>, raw: RawMajorant) -> Result<MajorantResult> {
    let majorant = GridFunction::new(grid.clone(), raw.values.clone())?;
    let contact = contact_flags(f.values(), &raw.values);
    let induced_measure = GridMeasure::new(grid, raw.atoms)?;
    Ok(MajorantResult {
        majorant,
        left_derivative: node_derivatives(&raw.interval_slopes),
        induced_measure,
        contact,
        norm_sq: raw.norm_sq,
    })
}

impl MajorantResult {
    /// Interval slopes recovered from the per-node derivative vector.
    pub fn interval_slopes(&self) -> &[f64] {
        &self.left_derivative[1..]
    }
}

/// Non-increasing rearrangement of a step function given by `(value, width)`
/// cells. Preserves the multiset of cells (hence every L^p norm); the
/// running integral of the output dominates that of the input.
pub fn monotone_rearrangement(values: &[f64], widths: &[f64]) -> Vec<(f64, f64)> {
    assert_eq!(values.len(), widths.len());
    let mut cells: Vec<(f64, f64)> = values.iter().copied().zip(widths.iter().copied()).collect();
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    cells
}

/// Running integral of a step function at `t`, for cells laid out from 0.
pub fn step_running_integral(cells: &[(f64, f64)], t: f64) -> f64 {
    let mut acc = 0.0;
    let mut pos = 0.0;
    for &(v, w) in cells {
        if t <= pos + w {
            return acc + v * (t - pos);
        }
        acc += v * w;
        pos += w;
    }
    acc
}

/// Independent cubic-time oracle: the least concave majorant at node `k`
/// equals the largest chord value over all node pairs straddling `k`.
#[doc(hidden)]
pub fn chord_majorant(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|k| {
            let mut best = y[k];
            for i in 0..=k {
                for j in k..n {
                    if i == j {
                        continue;
                    }
                    let w = (x[k] - x[i]) / (x[j] - x[i]);
                    best = best.max(y[i] + w * (y[j] - y[i]));
                }
            }
            best
        })
        .collect()
}
