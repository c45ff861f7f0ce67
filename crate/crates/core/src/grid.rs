//! Grids, sampled functions and atomic measures.
//!
//! Everything downstream works on a finite discretization: a [`Grid`] holds
//! the node coordinates together with a zero-set mask (nodes where the
//! process is almost surely zero, so drifts vanish and measures carry no
//! mass), a [`GridFunction`] holds one value per node and is read as the
//! piecewise-linear interpolant, and a [`GridMeasure`] is a purely atomic
//! signed measure with one atom per unmasked node.

use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::sync::Arc;

/// Node coordinates: a single increasing axis, or a tensor grid on a
/// rectangle (row-major over the two axes).
#[derive(Debug, Clone, PartialEq)]
pub enum Axes {
    One(Vec<f64>),
    Two(Vec<f64>, Vec<f64>),
}

/// An ordered discretization of an interval or rectangle.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    axes: Axes,
    /// True at nodes belonging to the zero set of the attached model,
    /// i.e. where the kernel diagonal vanishes.
    mask: Vec<bool>,
}

fn check_axis(nodes: &[f64]) -> Result<()> {
    if nodes.len() < 2 {
        return Err(Error::invalid("grid needs at least 2 nodes per axis"));
    }
    if nodes.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("grid nodes must be finite"));
    }
    if nodes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::invalid("grid nodes must be strictly increasing"));
    }
    Ok(())
}

impl Grid {
    /// 1-D grid from explicit nodes; `in_zero_set` marks the mask.
    pub fn from_nodes(nodes: Vec<f64>, in_zero_set: impl Fn(f64) -> bool) -> Result<Arc<Grid>> {
        check_axis(&nodes)?;
        let mask = nodes.iter().map(|&t| in_zero_set(t)).collect();
        Ok(Arc::new(Grid {
            axes: Axes::One(nodes),
            mask,
        }))
    }

    /// Uniform 1-D grid with `n` nodes including both endpoints.
    pub fn uniform(lo: f64, hi: f64, n: usize, in_zero_set: impl Fn(f64) -> bool) -> Result<Arc<Grid>> {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::invalid(format!("degenerate interval [{lo}, {hi}]")));
        }
        if n < 2 {
            return Err(Error::invalid("node count must be at least 2"));
        }
        let step = (hi - lo) / (n - 1) as f64;
        let mut nodes: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
        nodes[n - 1] = hi;
        Grid::from_nodes(nodes, in_zero_set)
    }

    /// Tensor grid on a rectangle; the mask is evaluated per node pair.
    pub fn tensor(
        axis1: Vec<f64>,
        axis2: Vec<f64>,
        in_zero_set: impl Fn(f64, f64) -> bool,
    ) -> Result<Arc<Grid>> {
        check_axis(&axis1)?;
        check_axis(&axis2)?;
        let mut mask = Vec::with_capacity(axis1.len() * axis2.len());
        for &t1 in &axis1 {
            for &t2 in &axis2 {
                mask.push(in_zero_set(t1, t2));
            }
        }
        Ok(Arc::new(Grid {
            axes: Axes::Two(axis1, axis2),
            mask,
        }))
    }

    pub fn is_1d(&self) -> bool {
        matches!(self.axes, Axes::One(_))
    }

    /// Total node count (product over axes for the tensor case).
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// 1-D node slice; panics on tensor grids.
    pub fn nodes(&self) -> &[f64] {
        match &self.axes {
            Axes::One(nodes) => nodes,
            Axes::Two(..) => panic!("nodes() called on a tensor grid"),
        }
    }

    pub fn axes(&self) -> &Axes {
        &self.axes
    }

    /// Coordinates of node `idx` (second component only on tensor grids).
    pub fn coord(&self, idx: usize) -> (f64, Option<f64>) {
        match &self.axes {
            Axes::One(nodes) => (nodes[idx], None),
            Axes::Two(a1, a2) => {
                let n2 = a2.len();
                (a1[idx / n2], Some(a2[idx % n2]))
            }
        }
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_masked(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    /// Indices of nodes outside the zero set, in grid order.
    pub fn free_nodes(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| !self.mask[i]).collect()
    }

    /// Interval bounds of the (first) axis.
    pub fn bounds(&self) -> (f64, f64) {
        match &self.axes {
            Axes::One(nodes) => (nodes[0], *nodes.last().unwrap()),
            Axes::Two(a1, _) => (a1[0], *a1.last().unwrap()),
        }
    }

    /// Index of the node equal to `t` (1-D), within `1e-12` absolute.
    pub fn find_node(&self, t: f64) -> Option<usize> {
        self.nodes().iter().position(|&x| (x - t).abs() <= 1e-12)
    }
}

fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// A real function sampled at the grid nodes, read piecewise-linearly.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<GridFunction> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("function values must be finite"));
        }
        Ok(GridFunction { grid, values })
    }

    /// Samples a closed-form function on a 1-D grid.
    pub fn sample(grid: &Arc<Grid>, f: impl Fn(f64) -> f64) -> Result<GridFunction> {
        let values = grid.nodes().iter().map(|&t| f(t)).collect();
        GridFunction::new(grid.clone(), values)
    }

    /// Samples a closed-form function of two variables on a tensor grid.
    pub fn sample2(grid: &Arc<Grid>, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        let values = (0..grid.len())
            .map(|i| {
                let (t1, t2) = grid.coord(i);
                f(t1, t2.expect("sample2 needs a tensor grid"))
            })
            .collect();
        GridFunction::new(grid.clone(), values)
    }

    pub fn zero(grid: &Arc<Grid>) -> GridFunction {
        GridFunction {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    /// True when the function vanishes on every masked node, the sampled
    /// analogue of Cameron–Martin membership at the zero set.
    pub fn vanishes_on_zero_set(&self, tol: f64) -> bool {
        self.values
            .iter()
            .zip(self.grid.mask())
            .all(|(&v, &m)| !m || v.abs() <= tol)
    }

    /// Piecewise-linear evaluation at `t` (1-D grids only); exact at nodes.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let nodes = match self.grid.axes() {
            Axes::One(nodes) => nodes,
            Axes::Two(..) => return Err(Error::Unsupported("eval on a tensor grid".into())),
        };
        let (lo, hi) = (nodes[0], *nodes.last().unwrap());
        if t < lo || t > hi {
            return Err(Error::OutOfBounds { point: t, lo, hi });
        }
        match nodes.binary_search_by(|x| x.total_cmp(&t)) {
            Ok(j) => Ok(self.values[j]),
            Err(j) => {
                // lo < t < hi and t is not a node, so 0 < j < n.
                let (x0, x1) = (nodes[j - 1], nodes[j]);
                let w = (t - x0) / (x1 - x0);
                Ok(self.values[j - 1] + w * (self.values[j] - self.values[j - 1]))
            }
        }
    }

    /// Pointwise combination on a shared grid.
    pub fn zip_with(&self, other: &GridFunction, op: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        if !same_grid(&self.grid, &other.grid) {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| op(a, b))
            .collect();
        GridFunction::new(self.grid.clone(), values)
    }

    pub fn scale(&self, c: f64) -> GridFunction {
        GridFunction {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| c * v).collect(),
        }
    }
}

/// A finite signed measure given by one atom per node; atoms on masked
/// nodes are required to be exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: Arc<Grid>,
    atoms: Vec<f64>,
}

impl GridMeasure {
    pub fn new(grid: Arc<Grid>, atoms: Vec<f64>) -> Result<GridMeasure> {
        if atoms.len() != grid.len() {
            return Err(Error::invalid(format!(
                "expected {} atoms, got {}",
                grid.len(),
                atoms.len()
            )));
        }
        if atoms.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("atoms must be finite"));
        }
        for (i, &a) in atoms.iter().enumerate() {
            if grid.is_masked(i) && a != 0.0 {
                return Err(Error::invalid(format!(
                    "atom {a} on zero-set node {i}; measures live on the free nodes"
                )));
            }
        }
        Ok(GridMeasure { grid, atoms })
    }

    pub fn zero(grid: &Arc<Grid>) -> GridMeasure {
        GridMeasure {
            grid: grid.clone(),
            atoms: vec![0.0; grid.len()],
        }
    }

    /// Unit mass at the node with 1-D coordinate `t`.
    pub fn dirac(grid: &Arc<Grid>, t: f64, mass: f64) -> Result<GridMeasure> {
        let idx = grid
            .find_node(t)
            .ok_or_else(|| Error::invalid(format!("{t} is not a grid node")))?;
        let mut atoms = vec![0.0; grid.len()];
        atoms[idx] = mass;
        GridMeasure::new(grid.clone(), atoms)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.abs()).sum()
    }

    pub fn min_atom(&self) -> f64 {
        self.atoms.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// The pairing `∫ g dμ = Σ atoms · values`, exact for atomic measures.
    pub fn integrate(&self, g: &GridFunction) -> Result<f64> {
        if !same_grid(&self.grid, &g.grid) {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .atoms
            .iter()
            .zip(&g.values)
            .map(|(&a, &v)| a * v)
            .sum())
    }

    pub fn scale(&self, c: f64) -> GridMeasure {
        GridMeasure {
            grid: self.grid.clone(),
            atoms: self.atoms.iter().map(|&a| c * a).collect(),
        }
    }
}

/// Formats a float with 17 significant digits, enough to round-trip f64.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// Serializes node coordinates and values as CSV: `t,value` for 1-D grids,
/// `t1,t2,value` for tensor grids. LF line endings, 17 significant digits.
pub fn values_to_csv(grid: &Grid, values: &[f64], value_header: &str) -> String {
    let mut out = String::new();
    match grid.axes() {
        Axes::One(_) => {
            let _ = writeln!(out, "t,{value_header}");
            for i in 0..grid.len() {
                let (t, _) = grid.coord(i);
                let _ = writeln!(out, "{},{}", fmt_full(t), fmt_full(values[i]));
            }
        }
        Axes::Two(..) => {
            let _ = writeln!(out, "t1,t2,{value_header}");
            for i in 0..grid.len() {
                let (t1, t2) = grid.coord(i);
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    fmt_full(t1),
                    fmt_full(t2.unwrap()),
                    fmt_full(values[i])
                );
            }
        }
    }
    out
}

/// Parses the CSV format produced by [`values_to_csv`]; returns the node
/// coordinates and values. The header row is required.
pub fn values_from_csv(text: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid("empty CSV"))?
        .split(',')
        .count();
    if header < 2 {
        return Err(Error::invalid("CSV needs at least two columns"));
    }
    let mut coords = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != header {
            return Err(Error::invalid(format!(
                "CSV line {}: expected {} fields, got {}",
                lineno + 2,
                header,
                fields.len()
            )));
        }
        let mut row: Vec<f64> = Vec::with_capacity(header);
        for f in &fields {
            row.push(
                f.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::invalid(format!("CSV line {}: {e}", lineno + 2)))?,
            );
        }
        values.push(row.pop().unwrap());
        coords.push(row);
    }
    Ok((coords, values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> Arc<Grid> {
        Grid::uniform(0.0, 1.0, n, |t| t == 0.0).unwrap()
    }

    #[test]
    fn uniform_grid_has_exact_endpoints_and_mask() {
        let g = unit_grid(5);
        assert_eq!(g.nodes(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(g.mask(), &[true, false, false, false, false]);
    }

    #[test]
    fn bridge_style_mask_marks_both_endpoints() {
        let g = Grid::uniform(0.0, 1.0, 3, |t| t == 0.0 || t == 1.0).unwrap();
        assert_eq!(g.mask(), &[true, false, true]);
    }

    #[test]
    fn sheet_mask_marks_both_axes() {
        let axis = vec![0.0, 0.5, 1.0];
        let g = Grid::tensor(axis.clone(), axis, |t1, t2| t1 == 0.0 || t2 == 0.0).unwrap();
        assert_eq!(g.len(), 9);
        let masked: Vec<usize> = (0..9).filter(|&i| g.is_masked(i)).collect();
        // Row-major: first row (t1 = 0) plus first column (t2 = 0).
        assert_eq!(masked, vec![0, 1, 2, 3, 6]);
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(Grid::uniform(0.0, 1.0, 1, |_| false).is_err());
        assert!(Grid::uniform(1.0, 1.0, 5, |_| false).is_err());
        assert!(Grid::uniform(1.0, 0.0, 5, |_| false).is_err());
        assert!(Grid::from_nodes(vec![0.0, 0.0, 1.0], |_| false).is_err());
    }

    #[test]
    fn integrate_unit_mass() {
        let g = unit_grid(3);
        let mu = GridMeasure::dirac(&g, 0.5, 1.0).unwrap();
        let one = GridFunction::sample(&g, |_| 1.0).unwrap();
        assert_eq!(mu.integrate(&one).unwrap(), 1.0);
    }

    #[test]
    fn integrate_tent_drift_atom() {
        // Atom of mass 2 at t = 0.5 against a boundary with u(0.5) = 1.
        let g = unit_grid(3);
        let mu = GridMeasure::dirac(&g, 0.5, 2.0).unwrap();
        let u = GridFunction::sample(&g, |_| 1.0).unwrap();
        assert_eq!(mu.integrate(&u).unwrap(), 2.0);
    }

    #[test]
    fn integrate_zero_measure() {
        let g = unit_grid(5);
        let mu = GridMeasure::zero(&g);
        let f = GridFunction::sample(&g, |t| t * t).unwrap();
        assert_eq!(mu.integrate(&f).unwrap(), 0.0);
    }

    #[test]
    fn integrate_is_bilinear_under_sign_flip() {
        let g = unit_grid(5);
        let mu = GridMeasure::new(g.clone(), vec![0.0, 1.0, -2.0, 0.5, 3.0]).unwrap();
        let f = GridFunction::sample(&g, |t| 1.0 + t).unwrap();
        let flipped = mu.scale(-1.0);
        assert_eq!(flipped.integrate(&f).unwrap(), -mu.integrate(&f).unwrap());
    }

    #[test]
    fn atoms_on_masked_nodes_are_rejected() {
        let g = unit_grid(3);
        assert!(GridMeasure::new(g, vec![1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn grid_mismatch_is_reported() {
        let g1 = unit_grid(3);
        let g2 = unit_grid(5);
        let mu = GridMeasure::zero(&g1);
        let f = GridFunction::zero(&g2);
        assert!(matches!(mu.integrate(&f), Err(Error::GridMismatch)));
    }

    #[test]
    fn interp_midpoint_and_nodes() {
        let g = Grid::uniform(0.0, 1.0, 2, |_| false).unwrap();
        let f = GridFunction::new(g, vec![0.0, 1.0]).unwrap();
        assert_eq!(f.eval(0.5).unwrap(), 0.5);
        assert_eq!(f.eval(0.0).unwrap(), 0.0);
        assert_eq!(f.eval(1.0).unwrap(), 1.0);
    }

    #[test]
    fn interp_tent_quarter_point() {
        let g = unit_grid(3);
        let tent = GridFunction::new(g, vec![0.0, 1.0, 0.0]).unwrap();
        // Hand linear algebra: halfway up the rising edge.
        assert_eq!(tent.eval(0.25).unwrap(), 0.5);
        assert!(tent.eval(1.5).is_err());
        assert!(tent.eval(-0.1).is_err());
    }

    #[test]
    fn refinement_shares_coarse_nodes() {
        let coarse = unit_grid(5);
        let fine = unit_grid(9);
        let fc = GridFunction::sample(&coarse, |t| t * t - t).unwrap();
        let ff = GridFunction::sample(&fine, |t| t * t - t).unwrap();
        for (i, &t) in coarse.nodes().iter().enumerate() {
            let j = fine.find_node(t).expect("coarse node missing from fine grid");
            assert_eq!(fc.value(i), ff.value(j));
        }
    }

    #[test]
    fn csv_round_trip_1d() {
        let g = unit_grid(4);
        let f = GridFunction::sample(&g, |t| (1.0 + t).ln()).unwrap();
        let csv = values_to_csv(&g, f.values(), "value");
        assert!(csv.starts_with("t,value\n"));
        let (coords, values) = values_from_csv(&csv).unwrap();
        for (i, c) in coords.iter().enumerate() {
            assert_eq!(c[0], g.nodes()[i]);
            assert_eq!(values[i], f.value(i));
        }
    }

    #[test]
    fn csv_round_trip_2d() {
        let axis = vec![0.0, 0.5, 1.0];
        let g = Grid::tensor(axis.clone(), axis, |a, b| a == 0.0 || b == 0.0).unwrap();
        let f = GridFunction::sample2(&g, |a, b| a * b).unwrap();
        let csv = values_to_csv(&g, f.values(), "value");
        let (coords, values) = values_from_csv(&csv).unwrap();
        assert_eq!(coords.len(), 9);
        for (i, c) in coords.iter().enumerate() {
            let (t1, t2) = g.coord(i);
            assert_eq!((c[0], c[1]), (t1, t2.unwrap()));
            assert_eq!(values[i], f.value(i));
        }
    }

    #[test]
    fn interp_is_monotone_for_monotone_values() {
        let g = unit_grid(6);
        let f = GridFunction::sample(&g, |t| t.sqrt()).unwrap();
        let mut prev = f.eval(0.0).unwrap();
        for k in 1..=100 {
            let t = k as f64 / 100.0;
            let v = f.eval(t).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }
}
