//! Concrete covariance structures: kernels, the covariance operator, the
//! derivative-side RKHS representations and norms, Cameron–Martin
//! membership checks, and the closed-form cone projections per model.

use crate::error::{Error, Result};
use crate::grid::{Axes, Grid, GridFunction, GridMeasure};
use crate::majorant::{self, MajorantResult};
use nalgebra::DMatrix;
use std::sync::Arc;

/// Dense Volterra kernel table `K(t, s)` on a fixed time grid, zero above
/// the diagonal (`s > t`). Covariance values are obtained by trapezoid
/// quadrature of `K(t, .) K(s, .)` over the full interval, so the
/// factorization through the adjoint pair is exact at the discretization.
#[derive(Debug, Clone, PartialEq)]
pub struct VolterraKernel {
    times: Vec<f64>,
    /// Row-major `K(times[i], times[j])`.
    table: Vec<f64>,
}

impl VolterraKernel {
    pub fn new(times: Vec<f64>, mut table: Vec<f64>) -> Result<VolterraKernel> {
        if times.len() < 2 || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("kernel times must be strictly increasing"));
        }
        if times[0] != 0.0 {
            return Err(Error::invalid("kernel times must start at 0"));
        }
        let n = times.len();
        if table.len() != n * n {
            return Err(Error::invalid(format!(
                "kernel table must be {n} x {n}, got {} entries",
                table.len()
            )));
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("kernel table entries must be finite"));
        }
        // Zero-extend above the diagonal.
        for i in 0..n {
            for j in i + 1..n {
                table[i * n + j] = 0.0;
            }
        }
        Ok(VolterraKernel { times, table })
    }

    /// Builds the table by sampling a closed-form kernel.
    pub fn from_fn(times: Vec<f64>, k: impl Fn(f64, f64) -> f64) -> Result<VolterraKernel> {
        let n = times.len();
        let mut table = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                table[i * n + j] = k(times[i], times[j]);
            }
        }
        VolterraKernel::new(times, table)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn k(&self, i: usize, j: usize) -> f64 {
        self.table[i * self.times.len() + j]
    }

    /// Covariance entry by trapezoid quadrature of the row product over
    /// `[0, min(t_i, t_j)]`, the support of the integrand.
    fn covariance(&self, i: usize, j: usize) -> f64 {
        let m = i.min(j);
        if m == 0 {
            return 0.0;
        }
        let w = trapezoid_weights(&self.times[..=m]);
        (0..=m).map(|u| w[u] * self.k(i, u) * self.k(j, u)).sum()
    }

    fn index_of(&self, t: f64) -> Result<usize> {
        self.times
            .iter()
            .position(|&x| (x - t).abs() <= 1e-12)
            .ok_or_else(|| Error::invalid(format!("{t} is not a kernel table node")))
    }
}

pub fn trapezoid_weights(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut w = vec![0.0; n];
    for i in 0..n - 1 {
        let h = (x[i + 1] - x[i]) / 2.0;
        w[i] += h;
        w[i + 1] += h;
    }
    w
}

/// Direction of a Volterra operator application.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolterraDirection {
    /// `K f (t) = integral of K(t, s) f(s) ds over [0, t]`.
    Forward,
    /// `K* mu (s) = integral of K(t, s) mu(dt) over [s, T]`.
    Adjoint,
}

/// A named covariance structure: kernel, zero set, derivative-side
/// representation rule and the matching closed-form majorant flavor.
#[derive(Debug, Clone, PartialEq)]
pub enum ProcessModel {
    /// Wiener process on `[0, b]`.
    Wiener { b: f64 },
    /// Wiener process restricted to `[a, b]` with `0 < a < b`.
    WienerShifted { a: f64, b: f64 },
    /// Wiener process on `[a, b]` with `a < 0 < b`; the two arms are
    /// independent and the kernel vanishes across the origin.
    WienerTwoSided { a: f64, b: f64 },
    /// Brownian bridge on `[0, 1]`.
    Bridge,
    /// Brownian sheet on `[0, t_max]^2`.
    Sheet { t_max: f64 },
    /// Volterra process with a tabulated kernel.
    Volterra(Arc<VolterraKernel>),
}

impl ProcessModel {
    pub fn wiener(b: f64) -> Result<ProcessModel> {
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::invalid("wiener horizon must satisfy b > 0"));
        }
        Ok(ProcessModel::Wiener { b })
    }

    pub fn wiener_shifted(a: f64, b: f64) -> Result<ProcessModel> {
        if !(a.is_finite() && b.is_finite() && 0.0 < a && a < b) {
            return Err(Error::invalid("shifted interval needs 0 < a < b"));
        }
        Ok(ProcessModel::WienerShifted { a, b })
    }

    pub fn wiener_two_sided(a: f64, b: f64) -> Result<ProcessModel> {
        if !(a.is_finite() && b.is_finite() && a < 0.0 && 0.0 < b) {
            return Err(Error::invalid("two-sided interval needs a < 0 < b"));
        }
        Ok(ProcessModel::WienerTwoSided { a, b })
    }

    pub fn bridge() -> ProcessModel {
        ProcessModel::Bridge
    }

    pub fn sheet(t_max: f64) -> Result<ProcessModel> {
        if !(t_max.is_finite() && t_max > 0.0) {
            return Err(Error::invalid("sheet horizon must be positive"));
        }
        Ok(ProcessModel::Sheet { t_max })
    }

    pub fn volterra(kernel: VolterraKernel) -> ProcessModel {
        ProcessModel::Volterra(Arc::new(kernel))
    }

    pub fn is_sheet(&self) -> bool {
        matches!(self, ProcessModel::Sheet { .. })
    }

    /// Domain of the (first) axis.
    pub fn domain(&self) -> (f64, f64) {
        match self {
            ProcessModel::Wiener { b } => (0.0, *b),
            ProcessModel::WienerShifted { a, b } => (*a, *b),
            ProcessModel::WienerTwoSided { a, b } => (*a, *b),
            ProcessModel::Bridge => (0.0, 1.0),
            ProcessModel::Sheet { t_max } => (0.0, *t_max),
            ProcessModel::Volterra(k) => (k.times[0], *k.times.last().unwrap()),
        }
    }

    /// True when the kernel diagonal vanishes at the 1-D coordinate `t`.
    fn in_zero_set_1d(&self, t: f64) -> bool {
        match self {
            ProcessModel::Wiener { .. } => t == 0.0,
            ProcessModel::WienerShifted { .. } => false,
            ProcessModel::WienerTwoSided { .. } => t == 0.0,
            ProcessModel::Bridge => t == 0.0 || t == 1.0,
            _ => unreachable!("1-D zero set queried on a non 1-D closed-form model"),
        }
    }

    /// Uniform analysis grid with `n` nodes per axis, masked by the
    /// model's zero set.
    pub fn make_grid(&self, n: usize) -> Result<Arc<Grid>> {
        let (lo, hi) = self.domain();
        match self {
            ProcessModel::Sheet { .. } => {
                let axis: Vec<f64> = Grid::uniform(lo, hi, n, |_| false)?.nodes().to_vec();
                Grid::tensor(axis.clone(), axis, |t1, t2| t1 == 0.0 || t2 == 0.0)
            }
            ProcessModel::Volterra(k) => {
                if n != k.times.len() {
                    return Err(Error::invalid(format!(
                        "volterra grids are pinned to the kernel table ({} nodes)",
                        k.times.len()
                    )));
                }
                let diag: Vec<f64> = (0..n).map(|i| k.covariance(i, i)).collect();
                let times = k.times.clone();
                let kc = k.clone();
                Grid::from_nodes(times, move |t| {
                    let i = kc.times.iter().position(|&x| x == t).unwrap();
                    diag[i] == 0.0
                })
            }
            ProcessModel::WienerTwoSided { .. } => {
                let grid = Grid::uniform(lo, hi, n, |t| t == 0.0)?;
                if grid.find_node(0.0).is_none() {
                    return Err(Error::invalid(
                        "two-sided grids must contain 0 as a node; adjust the node count",
                    ));
                }
                Ok(grid)
            }
            _ => Grid::uniform(lo, hi, n, |t| self.in_zero_set_1d(t)),
        }
    }

    /// Closed-form kernel at two 1-D points.
    pub fn kernel1(&self, s: f64, t: f64) -> Result<f64> {
        let (lo, hi) = self.domain();
        for &p in &[s, t] {
            if p < lo || p > hi {
                return Err(Error::OutOfBounds { point: p, lo, hi });
            }
        }
        match self {
            ProcessModel::Wiener { .. } | ProcessModel::WienerShifted { .. } => Ok(s.min(t)),
            ProcessModel::WienerTwoSided { .. } => {
                if s * t <= 0.0 {
                    Ok(0.0)
                } else if s > 0.0 {
                    Ok(s.min(t))
                } else {
                    Ok(-(s.max(t)))
                }
            }
            ProcessModel::Bridge => Ok(s.min(t) - s * t),
            ProcessModel::Sheet { .. } => Err(Error::Unsupported(
                "sheet kernel takes two coordinates per point".into(),
            )),
            ProcessModel::Volterra(k) => {
                let i = k.index_of(t)?;
                let j = k.index_of(s)?;
                Ok(k.covariance(i, j))
            }
        }
    }

    /// Sheet kernel at two planar points.
    pub fn kernel2(&self, s: (f64, f64), t: (f64, f64)) -> Result<f64> {
        match self {
            ProcessModel::Sheet { t_max } => {
                for &p in &[s.0, s.1, t.0, t.1] {
                    if p < 0.0 || p > *t_max {
                        return Err(Error::OutOfBounds {
                            point: p,
                            lo: 0.0,
                            hi: *t_max,
                        });
                    }
                }
                Ok(s.0.min(t.0) * s.1.min(t.1))
            }
            _ => Err(Error::Unsupported("kernel2 is sheet-only".into())),
        }
    }

    /// Kernel entry between two grid nodes.
    pub fn kernel_idx(&self, grid: &Grid, i: usize, j: usize) -> f64 {
        match grid.axes() {
            Axes::One(nodes) => self.kernel1(nodes[i], nodes[j]).expect("nodes in domain"),
            Axes::Two(..) => {
                let (a1, a2) = grid.coord(i);
                let (b1, b2) = grid.coord(j);
                self.kernel2((a1, a2.unwrap()), (b1, b2.unwrap()))
                    .expect("nodes in domain")
            }
        }
    }

    /// Kernel matrix restricted to the given node indices.
    pub fn kernel_matrix(&self, grid: &Grid, idx: &[usize]) -> DMatrix<f64> {
        let m = idx.len();
        DMatrix::from_fn(m, m, |r, c| self.kernel_idx(grid, idx[r], idx[c]))
    }

    /// The covariance operator: `(R mu)(t) = sum_j R(t, s_j) atom_j`.
    /// Vanishes on zero-set nodes by construction.
    pub fn apply_r(&self, mu: &GridMeasure) -> Result<GridFunction> {
        let grid = mu.grid();
        let n = grid.len();
        let mut values = vec![0.0; n];
        for (j, &a) in mu.atoms().iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (i, v) in values.iter_mut().enumerate() {
                *v += self.kernel_idx(grid, i, j) * a;
            }
        }
        GridFunction::new(grid.clone(), values)
    }

    /// The quadratic form `<R mu, mu> = sum_ij atom_i R_ij atom_j`.
    pub fn energy(&self, mu: &GridMeasure) -> f64 {
        let grid = mu.grid();
        let atoms = mu.atoms();
        let mut acc = 0.0;
        for (i, &ai) in atoms.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            for (j, &aj) in atoms.iter().enumerate() {
                if aj != 0.0 {
                    acc += ai * self.kernel_idx(grid, i, j) * aj;
                }
            }
        }
        acc
    }

    /// Derivative-side representation of a Cameron–Martin element: values
    /// per cell with quadrature weights, whose weighted square sum is the
    /// squared RKHS norm.
    pub fn rkhs_element(&self, f: &GridFunction) -> Result<RkhsElement> {
        if !f.vanishes_on_zero_set(1e-12) {
            return Err(Error::invalid(
                "Cameron-Martin elements must vanish on the zero set",
            ));
        }
        let grid = f.grid();
        let (rep, weights) = match self {
            ProcessModel::Wiener { .. }
            | ProcessModel::WienerTwoSided { .. }
            | ProcessModel::Bridge => {
                let x = grid.nodes();
                (cell_slopes(x, f.values()), cell_widths(x))
            }
            ProcessModel::WienerShifted { a, .. } => {
                // Constant segment of height f(a)/a over the hidden cell
                // [0, a], then the ordinary slopes.
                let x = grid.nodes();
                let mut rep = vec![f.value(0) / a];
                rep.extend(cell_slopes(x, f.values()));
                let mut weights = vec![*a];
                weights.extend(cell_widths(x));
                (rep, weights)
            }
            ProcessModel::Sheet { .. } => {
                let (a1, a2) = match grid.axes() {
                    Axes::Two(a1, a2) => (a1, a2),
                    Axes::One(_) => return Err(Error::invalid("sheet needs a tensor grid")),
                };
                let (n1, n2) = (a1.len(), a2.len());
                let mut rep = Vec::with_capacity((n1 - 1) * (n2 - 1));
                let mut weights = Vec::with_capacity((n1 - 1) * (n2 - 1));
                for i in 0..n1 - 1 {
                    for j in 0..n2 - 1 {
                        let d1 = a1[i + 1] - a1[i];
                        let d2 = a2[j + 1] - a2[j];
                        let mixed = f.value((i + 1) * n2 + j + 1) - f.value((i + 1) * n2 + j)
                            - f.value(i * n2 + j + 1)
                            + f.value(i * n2 + j);
                        rep.push(mixed / (d1 * d2));
                        weights.push(d1 * d2);
                    }
                }
                (rep, weights)
            }
            ProcessModel::Volterra(_) => {
                return Err(Error::Unsupported(
                    "volterra norms go through the measure side".into(),
                ))
            }
        };
        let norm_sq = rep.iter().zip(&weights).map(|(&h, &w)| h * h * w).sum();
        Ok(RkhsElement {
            function: f.clone(),
            representation: rep,
            weights,
            norm_sq,
        })
    }

    /// RKHS inner product through the derivative-side representations.
    pub fn rkhs_inner(&self, f: &GridFunction, g: &GridFunction) -> Result<f64> {
        if f.grid() != g.grid() {
            return Err(Error::GridMismatch);
        }
        let ef = self.rkhs_element(f)?;
        let eg = self.rkhs_element(g)?;
        Ok(ef
            .representation
            .iter()
            .zip(&eg.representation)
            .zip(&ef.weights)
            .map(|((&a, &b), &w)| a * b * w)
            .sum())
    }

    /// Squared RKHS norm through the derivative-side representation.
    pub fn rkhs_norm_sq(&self, f: &GridFunction) -> Result<f64> {
        Ok(self.rkhs_element(f)?.norm_sq)
    }

    /// Closed-form solution of the minimum-norm dominating problem, when
    /// one exists for this model.
    pub fn closed_form_majorant(&self, f: &GridFunction) -> Result<MajorantResult> {
        match self {
            ProcessModel::Wiener { .. } => majorant::lncm(f),
            ProcessModel::Bridge => majorant::lcm(f),
            ProcessModel::WienerTwoSided { .. } => majorant::glued_majorant(f),
            ProcessModel::WienerShifted { .. } => majorant::extend_and_majorize(f),
            ProcessModel::Sheet { .. } => Err(Error::Unsupported(
                "sheet majorants exist only for product drifts".into(),
            )),
            ProcessModel::Volterra(_) => Err(Error::Unsupported(
                "no closed-form majorant for tabulated Volterra kernels".into(),
            )),
        }
    }

    /// Volterra operator application in either direction.
    pub fn volterra_apply(
        &self,
        direction: VolterraDirection,
        function: Option<&GridFunction>,
        measure: Option<&GridMeasure>,
    ) -> Result<GridFunction> {
        let kernel = match self {
            ProcessModel::Volterra(k) => k,
            _ => {
                return Err(Error::Unsupported(
                    "volterra_apply needs a Volterra model".into(),
                ))
            }
        };
        let n = kernel.times.len();
        match direction {
            VolterraDirection::Forward => {
                let f =
                    function.ok_or_else(|| Error::invalid("forward direction needs a function"))?;
                if f.grid().nodes() != kernel.times.as_slice() {
                    return Err(Error::GridMismatch);
                }
                // Trapezoid over [0, t_i] row by row.
                let values: Vec<f64> = (0..n)
                    .map(|i| {
                        if i == 0 {
                            return 0.0;
                        }
                        let wi = trapezoid_weights(&kernel.times[..=i]);
                        (0..=i).map(|u| wi[u] * kernel.k(i, u) * f.value(u)).sum()
                    })
                    .collect();
                GridFunction::new(f.grid().clone(), values)
            }
            VolterraDirection::Adjoint => {
                let mu =
                    measure.ok_or_else(|| Error::invalid("adjoint direction needs a measure"))?;
                if mu.grid().nodes() != kernel.times.as_slice() {
                    return Err(Error::GridMismatch);
                }
                // Atomic measure: the integral is an exact sum over atoms
                // at or after s.
                let values: Vec<f64> = (0..n)
                    .map(|j| (j..n).map(|i| kernel.k(i, j) * mu.atoms()[i]).sum())
                    .collect();
                GridFunction::new(mu.grid().clone(), values)
            }
        }
    }
}

/// A Cameron–Martin element with its derivative-side representation.
#[derive(Debug, Clone)]
pub struct RkhsElement {
    pub function: GridFunction,
    /// One value per quadrature cell.
    pub representation: Vec<f64>,
    /// Matching cell weights.
    pub weights: Vec<f64>,
    pub norm_sq: f64,
}

fn cell_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| (ys[1] - ys[0]) / (xs[1] - xs[0]))
        .collect()
}

fn cell_widths(x: &[f64]) -> Vec<f64> {
    x.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Sheet solution for a product drift `f(t1, t2) = f1(t1) f2(t2)` with
/// non-negative factors vanishing at 0: the product of the two 1-D
/// non-decreasing concave majorants, with product measure and factored
/// squared norm.
pub fn product_drift_solution(
    f1: &GridFunction,
    f2: &GridFunction,
    model: &ProcessModel,
) -> Result<MajorantResult> {
    let t_max = match model {
        ProcessModel::Sheet { t_max } => *t_max,
        _ => return Err(Error::Unsupported("product drifts are sheet-only".into())),
    };
    for (name, f) in [("f1", f1), ("f2", f2)] {
        let (lo, hi) = f.grid().bounds();
        if lo != 0.0 || (hi - t_max).abs() > 1e-12 {
            return Err(Error::invalid(format!("{name} must live on [0, {t_max}]")));
        }
        if f.values().iter().any(|&v| v < 0.0) {
            return Err(Error::invalid(format!("{name} must be non-negative")));
        }
        if f.value(0).abs() > 1e-12 {
            return Err(Error::invalid(format!("{name} must vanish at 0")));
        }
    }
    let m1 = majorant::lncm(f1)?;
    let m2 = majorant::lncm(f2)?;

    let axis1 = f1.grid().nodes().to_vec();
    let axis2 = f2.grid().nodes().to_vec();
    let grid = Grid::tensor(axis1.clone(), axis2.clone(), |a, b| a == 0.0 || b == 0.0)?;
    let (n1, n2) = (axis1.len(), axis2.len());

    let mut values = vec![0.0; n1 * n2];
    let mut atoms = vec![0.0; n1 * n2];
    let mut contact = vec![false; n1 * n2];
    for i in 0..n1 {
        for j in 0..n2 {
            let idx = i * n2 + j;
            values[idx] = m1.majorant.value(i) * m2.majorant.value(j);
            atoms[idx] = m1.induced_measure.atoms()[i] * m2.induced_measure.atoms()[j];
            let data = f1.value(i) * f2.value(j);
            contact[idx] = (values[idx] - data).abs() <= 1e-9 * (1.0 + data.abs());
        }
    }
    // Per-cell mixed representation: product of the axis slope profiles.
    let s1 = m1.interval_slopes();
    let s2 = m2.interval_slopes();
    let mut rep = Vec::with_capacity((n1 - 1) * (n2 - 1));
    for &a in s1 {
        for &b in s2 {
            rep.push(a * b);
        }
    }

    Ok(MajorantResult {
        majorant: GridFunction::new(grid.clone(), values)?,
        left_derivative: rep,
        induced_measure: GridMeasure::new(grid, atoms)?,
        contact,
        norm_sq: m1.norm_sq * m2.norm_sq,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn wiener() -> ProcessModel {
        ProcessModel::wiener(1.0).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert_eq!(wiener().kernel1(0.3, 0.7).unwrap(), 0.3);
        assert_eq!(ProcessModel::bridge().kernel1(0.5, 0.5).unwrap(), 0.25);
        let two = ProcessModel::wiener_two_sided(-1.0, 1.0).unwrap();
        assert_eq!(two.kernel1(-0.4, 0.3).unwrap(), 0.0);
        assert_eq!(two.kernel1(-0.4, -0.3).unwrap(), 0.3);
        let shifted = ProcessModel::wiener_shifted(1.0, 2.0).unwrap();
        assert_eq!(shifted.kernel1(1.5, 1.2).unwrap(), 1.2);
        assert!(wiener().kernel1(0.3, 1.7).is_err());
    }

    #[test]
    fn apply_r_dirac_on_wiener_gives_identity_drift() {
        let model = wiener();
        let grid = model.make_grid(5).unwrap();
        let mu = GridMeasure::dirac(&grid, 1.0, 1.0).unwrap();
        let f = model.apply_r(&mu).unwrap();
        for (i, &t) in grid.nodes().iter().enumerate() {
            assert_eq!(f.value(i), t);
        }
    }

    #[test]
    fn apply_r_zero_measure() {
        let model = ProcessModel::bridge();
        let grid = model.make_grid(9).unwrap();
        let f = model.apply_r(&GridMeasure::zero(&grid)).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn apply_r_dirac_on_bridge() {
        let model = ProcessModel::bridge();
        let grid = model.make_grid(5).unwrap();
        let mu = GridMeasure::dirac(&grid, 0.5, 1.0).unwrap();
        let f = model.apply_r(&mu).unwrap();
        assert_eq!(f.value(grid.find_node(0.5).unwrap()), 0.25);
        assert_eq!(f.value(grid.find_node(1.0).unwrap()), 0.0);
    }

    #[test]
    fn rkhs_norms_match_hand_values() {
        let model = wiener();
        let grid = model.make_grid(17).unwrap();
        let f = GridFunction::sample(&grid, |t| t).unwrap();
        assert_abs_diff_eq!(model.rkhs_norm_sq(&f).unwrap(), 1.0, epsilon = 1e-14);

        let bridge = ProcessModel::bridge();
        let bgrid = bridge.make_grid(3).unwrap();
        let tent = GridFunction::new(bgrid, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(bridge.rkhs_norm_sq(&tent).unwrap(), 4.0);

        let sheet = ProcessModel::sheet(1.0).unwrap();
        let sgrid = sheet.make_grid(5).unwrap();
        let prod = GridFunction::sample2(&sgrid, |a, b| a * b).unwrap();
        assert_abs_diff_eq!(sheet.rkhs_norm_sq(&prod).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn rkhs_norm_rejects_nonvanishing_drift() {
        let model = wiener();
        let grid = model.make_grid(5).unwrap();
        let f = GridFunction::sample(&grid, |t| 1.0 + t).unwrap();
        assert!(model.rkhs_norm_sq(&f).is_err());
    }

    #[test]
    fn reproducing_property_on_nodes() {
        // <R(t,.), R(s,.)> = R(t, s) exactly for grid nodes, every closed
        // form kind.
        let models = [
            wiener(),
            ProcessModel::bridge(),
            ProcessModel::wiener_two_sided(-1.0, 1.0).unwrap(),
            ProcessModel::wiener_shifted(0.5, 2.0).unwrap(),
        ];
        for model in models {
            let grid = model.make_grid(9).unwrap();
            for &ti in [2usize, 5, 7].iter() {
                for &tj in [1usize, 4, 8].iter() {
                    let di = GridMeasure::dirac(&grid, grid.nodes()[ti], 1.0);
                    let dj = GridMeasure::dirac(&grid, grid.nodes()[tj], 1.0);
                    let (di, dj) = match (di, dj) {
                        (Ok(a), Ok(b)) => (a, b),
                        _ => continue, // masked node, no representer there
                    };
                    let fi = model.apply_r(&di).unwrap();
                    let fj = model.apply_r(&dj).unwrap();
                    let inner = model.rkhs_inner(&fi, &fj).unwrap();
                    let r = model.kernel1(grid.nodes()[ti], grid.nodes()[tj]).unwrap();
                    assert_abs_diff_eq!(inner, r, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn isometry_between_measure_energy_and_function_norm() {
        let models = [
            wiener(),
            ProcessModel::bridge(),
            ProcessModel::wiener_two_sided(-1.0, 1.0).unwrap(),
            ProcessModel::wiener_shifted(0.5, 2.0).unwrap(),
        ];
        for model in models {
            let grid = model.make_grid(17).unwrap();
            let mut atoms = vec![0.0; grid.len()];
            for (i, a) in atoms.iter_mut().enumerate() {
                if !grid.is_masked(i) {
                    // Deterministic wiggly atom pattern with both signs.
                    *a = ((i * 7 % 5) as f64 - 2.0) * 0.3;
                }
            }
            let mu = GridMeasure::new(grid.clone(), atoms).unwrap();
            let f = model.apply_r(&mu).unwrap();
            let energy = model.energy(&mu);
            let norm = model.rkhs_norm_sq(&f).unwrap();
            assert_abs_diff_eq!(energy, norm, epsilon = 1e-9);
        }
    }

    #[test]
    fn sheet_isometry() {
        let model = ProcessModel::sheet(1.0).unwrap();
        let grid = model.make_grid(6).unwrap();
        let mut atoms = vec![0.0; grid.len()];
        for (i, a) in atoms.iter_mut().enumerate() {
            if !grid.is_masked(i) {
                *a = ((i % 3) as f64 - 1.0) * 0.5;
            }
        }
        let mu = GridMeasure::new(grid.clone(), atoms).unwrap();
        let f = model.apply_r(&mu).unwrap();
        assert_abs_diff_eq!(
            model.energy(&mu),
            model.rkhs_norm_sq(&f).unwrap(),
            epsilon = 1e-9
        );
    }

    #[test]
    fn positive_measures_map_to_concave_nondecreasing_on_wiener() {
        let model = wiener();
        let grid = model.make_grid(21).unwrap();
        let mut atoms = vec![0.0; grid.len()];
        for (i, a) in atoms.iter_mut().enumerate() {
            if !grid.is_masked(i) {
                *a = 0.1 + ((i * 13) % 7) as f64 * 0.05;
            }
        }
        let mu = GridMeasure::new(grid.clone(), atoms).unwrap();
        let f = model.apply_r(&mu).unwrap();
        let s = cell_slopes(grid.nodes(), f.values());
        for w in s.windows(2) {
            assert!(w[0] >= w[1] - 1e-12);
        }
        assert!(s.iter().all(|&v| v >= -1e-12));
    }

    #[test]
    fn bridge_representations_are_mean_zero() {
        let model = ProcessModel::bridge();
        let grid = model.make_grid(15).unwrap();
        let mut atoms = vec![0.0; grid.len()];
        for (i, a) in atoms.iter_mut().enumerate() {
            if !grid.is_masked(i) {
                *a = (i as f64 * 0.77).sin();
            }
        }
        let mu = GridMeasure::new(grid.clone(), atoms).unwrap();
        let f = model.apply_r(&mu).unwrap();
        let e = model.rkhs_element(&f).unwrap();
        let mean: f64 = e
            .representation
            .iter()
            .zip(&e.weights)
            .map(|(&h, &w)| h * w)
            .sum();
        assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn volterra_indicator_kernel_recovers_wiener_structure() {
        let n = 65;
        let times: Vec<f64> = (0..n).map(|i| i as f64 / (n - 1) as f64).collect();
        let kernel = VolterraKernel::from_fn(times, |_, _| 1.0).unwrap();
        let model = ProcessModel::volterra(kernel);
        let grid = model.make_grid(n).unwrap();
        assert!(grid.is_masked(0));

        // Forward direction is the running integral.
        let one = GridFunction::sample(&grid, |_| 1.0).unwrap();
        let kf = model
            .volterra_apply(VolterraDirection::Forward, Some(&one), None)
            .unwrap();
        for (i, &t) in grid.nodes().iter().enumerate() {
            assert_abs_diff_eq!(kf.value(i), t, epsilon = 1e-12);
        }

        // Adjoint of the endpoint Dirac is the constant 1.
        let mu = GridMeasure::dirac(&grid, 1.0, 1.0).unwrap();
        let kstar = model
            .volterra_apply(VolterraDirection::Adjoint, None, Some(&mu))
            .unwrap();
        assert!(kstar.values().iter().all(|&v| v == 1.0));

        // Zero input, zero output.
        let zero = model
            .volterra_apply(
                VolterraDirection::Forward,
                Some(&GridFunction::zero(&grid)),
                None,
            )
            .unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));

        // Tabulated covariance approximates min(s, t) to quadrature order.
        let h = 1.0 / (n - 1) as f64;
        let r = model.kernel1(0.25, 0.5).unwrap();
        assert!((r - 0.25).abs() <= h);
    }

    #[test]
    fn volterra_factorization_matches_gram_of_adjoint_columns() {
        // Two independent evaluations of R(t, s): tabulated covariance
        // against the quadrature inner product of the adjoint images.
        // They agree to quadrature order; the tabulated covariance matches
        // the closed-form integral to second order for this smooth kernel.
        let n = 65;
        let h = 1.0 / (n - 1) as f64;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let kernel = VolterraKernel::from_fn(times, |t, s| 1.0 + t * s).unwrap();
        let model = ProcessModel::volterra(kernel);
        let grid = model.make_grid(n).unwrap();
        let w = trapezoid_weights(grid.nodes());
        for (ti, si) in [(5usize, 9usize), (20, 13), (40, 64)] {
            let (t, s) = (grid.nodes()[ti], grid.nodes()[si]);
            let dt = GridMeasure::dirac(&grid, t, 1.0).unwrap();
            let ds = GridMeasure::dirac(&grid, s, 1.0).unwrap();
            let kt = model
                .volterra_apply(VolterraDirection::Adjoint, None, Some(&dt))
                .unwrap();
            let ks = model
                .volterra_apply(VolterraDirection::Adjoint, None, Some(&ds))
                .unwrap();
            let gram: f64 = (0..n).map(|u| w[u] * kt.value(u) * ks.value(u)).sum();
            let r = model.kernel1(s, t).unwrap();
            assert!((gram - r).abs() <= 4.0 * h, "gram {gram} vs kernel {r}");

            // integral of (1+tu)(1+su) du over [0, m], m = min(s, t).
            let m = s.min(t);
            let exact = m + (t + s) * m * m / 2.0 + t * s * m * m * m / 3.0;
            assert!((r - exact).abs() <= 4.0 * h * h, "kernel {r} vs exact {exact}");
        }
    }

    #[test]
    fn product_drift_tent_factorization() {
        let model = ProcessModel::sheet(1.0).unwrap();
        let axis = Grid::uniform(0.0, 1.0, 5, |t| t == 0.0).unwrap();
        let tent = GridFunction::sample(&axis, |t| 1.0 - 2.0 * (t - 0.5).abs()).unwrap();
        let r = product_drift_solution(&tent, &tent, &model).unwrap();
        assert_eq!(r.norm_sq, 4.0);
        let atoms = r.induced_measure.atoms();
        let nonzero: Vec<(usize, f64)> = atoms
            .iter()
            .copied()
            .enumerate()
            .filter(|&(_, a)| a != 0.0)
            .collect();
        assert_eq!(nonzero.len(), 1);
        let (idx, mass) = nonzero[0];
        assert_eq!(mass, 4.0);
        let (t1, t2) = r.majorant.grid().coord(idx);
        assert_eq!((t1, t2.unwrap()), (0.5, 0.5));
    }

    #[test]
    fn product_drift_linear_factors() {
        let model = ProcessModel::sheet(1.0).unwrap();
        let axis = Grid::uniform(0.0, 1.0, 9, |t| t == 0.0).unwrap();
        let lin = GridFunction::sample(&axis, |t| t).unwrap();
        let r = product_drift_solution(&lin, &lin, &model).unwrap();
        assert_abs_diff_eq!(r.norm_sq, 1.0, epsilon = 1e-14);
        for i in 0..r.majorant.grid().len() {
            let (t1, t2) = r.majorant.grid().coord(i);
            assert_abs_diff_eq!(r.majorant.value(i), t1 * t2.unwrap(), epsilon = 1e-14);
        }
    }

    #[test]
    fn product_drift_mixed_factors() {
        let model = ProcessModel::sheet(1.0).unwrap();
        let axis = Grid::uniform(0.0, 1.0, 513, |t| t == 0.0).unwrap();
        let quad = GridFunction::sample(&axis, |t| t - t * t).unwrap();
        let lin = GridFunction::sample(&axis, |t| t).unwrap();
        let r = product_drift_solution(&quad, &lin, &model).unwrap();
        assert!((r.norm_sq - 1.0 / 6.0).abs() < 1e-5);
        let neg = GridFunction::sample(&axis, |t| -t).unwrap();
        assert!(product_drift_solution(&neg, &lin, &model).is_err());
    }

    #[test]
    fn two_sided_grid_requires_origin_node() {
        let model = ProcessModel::wiener_two_sided(-1.0, 1.0).unwrap();
        assert!(model.make_grid(9).is_ok());
        assert!(model.make_grid(10).is_err());
    }
}
