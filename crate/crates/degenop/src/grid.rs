//! Graded cell-centred meshes in `y`, periodic boxes in `x`, fields on the
//! tensor grid, weighted norms and finite-difference Sobolev terms.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{OperatorSpec, SpaceSpec};

/// Periodic box `[0, length)^dim` with `nx` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XBox {
    pub length: f64,
    pub nx: usize,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    /// Cell centres, strictly increasing in `(0, y_max)`.
    pub y_nodes: Vec<f64>,
    /// Cell lengths; they sum to `y_max`.
    pub y_weights: Vec<f64>,
    pub grading: f64,
    pub y_max: f64,
    pub x_box: Option<XBox>,
    edges: Vec<f64>,
}

/// Nodes `y_j = Y ((j + 1/2) / J)^g`, cells between `Y (j/J)^g` and `Y ((j+1)/J)^g`.
/// Grading `max(1, 2 / (2 - alpha))`, which makes the first cell resolve the
/// scale on which `y^alpha D_yy` balances a unit spectral parameter.
pub fn default_grading(alpha: f64) -> f64 {
    (2.0 / (2.0 - alpha)).max(1.0)
}

pub fn make_grid(j: usize, y_max: f64, grading: f64, x_box: Option<XBox>) -> Result<Grid> {
    if j < 8 {
        return Err(Error::Grid(format!("need J >= 8, got {j}")));
    }
    if !(y_max > 0.0 && y_max.is_finite()) {
        return Err(Error::Grid(format!("y_max must be positive, got {y_max}")));
    }
    if !(grading >= 1.0 && grading.is_finite()) {
        return Err(Error::Grid(format!("grading must be >= 1, got {grading}")));
    }
    if let Some(b) = x_box {
        if !(b.length > 0.0) || b.nx < 2 || b.nx % 2 != 0 || b.dim == 0 {
            return Err(Error::Grid(format!(
                "x box needs L > 0, even Nx >= 2 and dim >= 1, got {b:?}"
            )));
        }
    }
    Ok(Grid::graded(j, y_max, grading, x_box))
}

impl Grid {
    /// Unchecked constructor; any positive grading is accepted.
    fn graded(j: usize, y_max: f64, grading: f64, x_box: Option<XBox>) -> Grid {
        let jf = j as f64;
        let edges: Vec<f64> = (0..=j).map(|i| y_max * (i as f64 / jf).powf(grading)).collect();
        let y_nodes = (0..j).map(|i| y_max * ((i as f64 + 0.5) / jf).powf(grading)).collect();
        Grid::from_parts(y_nodes, edges, grading, y_max, x_box)
    }

    fn from_parts(y_nodes: Vec<f64>, mut edges: Vec<f64>, grading: f64, y_max: f64, x_box: Option<XBox>) -> Grid {
        edges[0] = 0.0;
        *edges.last_mut().unwrap() = y_max;
        let y_weights = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Grid { y_nodes, y_weights, grading, y_max, x_box, edges }
    }

    /// The grid whose nodes are `y_j^k`: the preimage mesh for `T_beta`
    /// with `k = beta + 1 > 0`. Substitution between the pair is exact.
    pub fn power_image(&self, k: f64) -> Result<Grid> {
        if !(k > 0.0) {
            return Err(Error::Grid(format!("power image needs k > 0, got {k}")));
        }
        let nodes = self.y_nodes.iter().map(|y| y.powf(k)).collect();
        let edges = self.edges.iter().map(|e| e.powf(k)).collect();
        Ok(Grid::from_parts(nodes, edges, self.grading * k, self.y_max.powf(k), self.x_box))
    }

    pub fn with_x_box(&self, x_box: Option<XBox>) -> Grid {
        Grid { x_box, ..self.clone() }
    }

    pub fn j(&self) -> usize {
        self.y_nodes.len()
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn dim(&self) -> usize {
        self.x_box.map_or(0, |b| b.dim)
    }

    /// Number of x points (1 without a box).
    pub fn nx_total(&self) -> usize {
        self.x_box.map_or(1, |b| b.nx.pow(b.dim as u32))
    }

    pub fn len(&self) -> usize {
        self.nx_total() * self.j()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Volume element of one x cell.
    pub fn x_cell(&self) -> f64 {
        self.x_box.map_or(1.0, |b| (b.length / b.nx as f64).powi(b.dim as i32))
    }

    /// Lengths of the dual cells `[m_{j-1/2}, m_{j+1/2}]`, with midpoints
    /// between nodes and the outer ends at `0` and `y_max`. These are the
    /// lumped masses of the form discretisation.
    pub fn dual_weights(&self) -> Vec<f64> {
        let y = &self.y_nodes;
        let j = y.len();
        (0..j)
            .map(|i| {
                let lo = if i == 0 { 0.0 } else { 0.5 * (y[i - 1] + y[i]) };
                let hi = if i + 1 == j { self.y_max } else { 0.5 * (y[i] + y[i + 1]) };
                hi - lo
            })
            .collect()
    }

    /// Nodal masses `y_j^s * dual_weight_j`.
    pub fn mass(&self, s: f64) -> Vec<f64> {
        self.y_nodes
            .iter()
            .zip(self.dual_weights())
            .map(|(y, w)| y.powf(s) * w)
            .collect()
    }

    /// Cell-length quadrature of `y^s` over `(0, y_max)`.
    pub fn integrate_power(&self, s: f64) -> f64 {
        self.y_nodes.iter().zip(&self.y_weights).map(|(y, w)| y.powf(s) * w).sum()
    }

    /// Per-axis frequencies in `fft` order; the Nyquist mode is `-pi Nx / L`.
    pub fn axis_frequencies(&self) -> Vec<f64> {
        match self.x_box {
            None => vec![],
            Some(b) => (0..b.nx)
                .map(|k| {
                    let kk = if k < b.nx / 2 { k as f64 } else { k as f64 - b.nx as f64 };
                    2.0 * std::f64::consts::PI * kk / b.length
                })
                .collect(),
        }
    }

    /// Frequency vector of flat mode index `m` (row-major over axes).
    pub fn mode(&self, m: usize) -> Vec<f64> {
        let freqs = self.axis_frequencies();
        self.x_multi_index(m).into_iter().map(|k| freqs[k]).collect()
    }

    pub fn x_multi_index(&self, flat: usize) -> Vec<usize> {
        match self.x_box {
            None => vec![],
            Some(b) => {
                let mut out = vec![0; b.dim];
                let mut r = flat;
                for a in (0..b.dim).rev() {
                    out[a] = r % b.nx;
                    r /= b.nx;
                }
                out
            }
        }
    }

    pub fn x_point(&self, flat: usize) -> Vec<f64> {
        match self.x_box {
            None => vec![],
            Some(b) => self
                .x_multi_index(flat)
                .into_iter()
                .map(|i| i as f64 * b.length / b.nx as f64)
                .collect(),
        }
    }
}

/// Complex grid function; `values[ix * J + j]` with `ix` the flat x index.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    pub values: Vec<Complex64>,
    pub grid: Arc<Grid>,
}

impl Field {
    pub fn zeros(grid: Arc<Grid>) -> Self {
        Self { values: vec![Complex64::new(0.0, 0.0); grid.len()], grid }
    }

    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Grid(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(Self { values, grid })
    }

    /// Sample `f(x, y)` at every node.
    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(&[f64], f64) -> Complex64) -> Self {
        let j = grid.j();
        let mut values = Vec::with_capacity(grid.len());
        for ix in 0..grid.nx_total() {
            let x = grid.x_point(ix);
            for jj in 0..j {
                values.push(f(&x, grid.y_nodes[jj]));
            }
        }
        Self { values, grid }
    }

    pub fn j(&self) -> usize {
        self.grid.j()
    }

    /// The y-slice at flat x index `ix`.
    pub fn slice(&self, ix: usize) -> &[Complex64] {
        let j = self.j();
        &self.values[ix * j..(ix + 1) * j]
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Field {
        Field { values: self.values.iter().map(|&v| f(v)).collect(), grid: self.grid.clone() }
    }

    /// Multiply node `(ix, j)` by `w(y_j)`.
    pub fn scale_y(&self, w: impl Fn(f64) -> f64) -> Field {
        let j = self.j();
        let ws: Vec<f64> = self.grid.y_nodes.iter().map(|&y| w(y)).collect();
        Field {
            values: self.values.iter().enumerate().map(|(i, &v)| v * ws[i % j]).collect(),
            grid: self.grid.clone(),
        }
    }

    pub fn sub(&self, o: &Field) -> Field {
        Field {
            values: self.values.iter().zip(&o.values).map(|(a, b)| a - b).collect(),
            grid: self.grid.clone(),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Norm in the lumped operator inner product with nodal masses `y^s`.
    pub fn mass_norm(&self, s: f64) -> f64 {
        let w = self.grid.mass(s);
        let j = self.j();
        let sum: f64 = self.values.iter().enumerate().map(|(i, v)| v.norm_sqr() * w[i % j]).sum();
        (sum * self.grid.x_cell()).sqrt()
    }

    /// Forward DFT along every x axis (unnormalised).
    pub fn to_modes(&self) -> Field {
        let mut f = self.clone();
        fft_x(&mut f.values, &self.grid, false);
        f
    }

    /// Inverse of [`Field::to_modes`].
    pub fn from_modes(&self) -> Field {
        let mut f = self.clone();
        fft_x(&mut f.values, &self.grid, true);
        f
    }

    /// Spectral `D_{x_axis}`.
    pub fn dx(&self, axis: usize) -> Field {
        self.spectral(|xi| Complex64::new(0.0, xi[axis]))
    }

    /// Apply the Fourier multiplier `symbol(xi)` in x.
    pub fn spectral(&self, symbol: impl Fn(&[f64]) -> Complex64) -> Field {
        let mut m = self.to_modes();
        let j = self.j();
        for ix in 0..self.grid.nx_total() {
            let s = symbol(&self.grid.mode(ix));
            m.values[ix * j..(ix + 1) * j].iter_mut().for_each(|v| *v *= s);
        }
        m.from_modes()
    }

    /// Three-point nonuniform first and second y-derivatives, one-sided at the ends.
    pub fn dy(&self) -> (Field, Field) {
        let j = self.j();
        let y = &self.grid.y_nodes;
        let stencils: Vec<(usize, [f64; 3], [f64; 3])> = (0..j)
            .map(|i| {
                let s = i.clamp(1, j - 2) - 1;
                let (d1, d2) = lagrange3(y[i], [y[s], y[s + 1], y[s + 2]]);
                (s, d1, d2)
            })
            .collect();
        let mut d1 = Field::zeros(self.grid.clone());
        let mut d2 = Field::zeros(self.grid.clone());
        for ix in 0..self.grid.nx_total() {
            let u = self.slice(ix);
            for (i, (s, w1, w2)) in stencils.iter().enumerate() {
                let (a, b, c) = (u[*s], u[s + 1], u[s + 2]);
                d1.values[ix * j + i] = a * w1[0] + b * w1[1] + c * w1[2];
                d2.values[ix * j + i] = a * w2[0] + b * w2[1] + c * w2[2];
            }
        }
        (d1, d2)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let dim = self.grid.dim();
        let mut header: Vec<String> = (0..dim).map(|a| format!("ix{a}")).collect();
        header.extend(["y", "re", "im"].map(String::from));
        w.write_record(&header)?;
        let j = self.j();
        for ix in 0..self.grid.nx_total() {
            let idx = self.grid.x_multi_index(ix);
            for jj in 0..j {
                let v = self.values[ix * j + jj];
                let mut rec: Vec<String> = idx.iter().map(|k| k.to_string()).collect();
                rec.push(format!("{:.17e}", self.grid.y_nodes[jj]));
                rec.push(format!("{:.17e}", v.re));
                rec.push(format!("{:.17e}", v.im));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Little-endian blob: magic, dims, J, Nx, L, Y_max, grading, then (re, im) pairs.
    pub fn write_blob(&self, out: &mut impl Write) -> Result<()> {
        let g = &self.grid;
        let (dim, nx, len) = g.x_box.map_or((0, 0, 0.0), |b| (b.dim, b.nx, b.length));
        out.write_all(BLOB_MAGIC)?;
        for v in [dim as u64, g.j() as u64, nx as u64] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in [len, g.y_max, g.grading] {
            out.write_all(&v.to_le_bytes())?;
        }
        for v in &self.values {
            out.write_all(&v.re.to_le_bytes())?;
            out.write_all(&v.im.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_blob(input: &mut impl Read) -> Result<Field> {
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic)?;
        if &magic != BLOB_MAGIC {
            return Err(Error::Grid("not a field blob".into()));
        }
        let mut u = [0u64; 3];
        for v in u.iter_mut() {
            *v = read_u64(input)?;
        }
        let mut f = [0f64; 3];
        for v in f.iter_mut() {
            *v = f64::from_bits(read_u64(input)?);
        }
        let [dim, j, nx] = u.map(|v| v as usize);
        let [len, y_max, grading] = f;
        let x_box = (dim > 0).then_some(XBox { length: len, nx, dim });
        if j < 8 || !(y_max > 0.0) || !(grading > 0.0) {
            return Err(Error::Grid("corrupt blob header".into()));
        }
        let grid = Arc::new(Grid::graded(j, y_max, grading, x_box));
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            let re = f64::from_bits(read_u64(input)?);
            let im = f64::from_bits(read_u64(input)?);
            values.push(Complex64::new(re, im));
        }
        Field::new(grid, values)
    }
}

const BLOB_MAGIC: &[u8; 8] = b"DGOFLD01";

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Weights of the first and second derivative at `x` of the quadratic
/// interpolant through `nodes`.
pub fn lagrange3(x: f64, nodes: [f64; 3]) -> ([f64; 3], [f64; 3]) {
    let mut d1 = [0.0; 3];
    let mut d2 = [0.0; 3];
    for i in 0..3 {
        let (a, b) = ((i + 1) % 3, (i + 2) % 3);
        let den = (nodes[i] - nodes[a]) * (nodes[i] - nodes[b]);
        d1[i] = ((x - nodes[a]) + (x - nodes[b])) / den;
        d2[i] = 2.0 / den;
    }
    (d1, d2)
}

/// In-place DFT along every x axis of a `[nx^dim][J]` array.
pub(crate) fn fft_x(values: &mut [Complex64], grid: &Grid, inverse: bool) {
    let Some(b) = grid.x_box else { return };
    let j = grid.j();
    let nx = b.nx;
    let mut planner = FftPlanner::new();
    let fft = if inverse { planner.plan_fft_inverse(nx) } else { planner.plan_fft_forward(nx) };
    let total = grid.nx_total();
    let mut line = vec![Complex64::new(0.0, 0.0); nx];
    for axis in 0..b.dim {
        // Stride of this axis in units of x points.
        let stride = nx.pow((b.dim - 1 - axis) as u32);
        for base in 0..total {
            if (base / stride) % nx != 0 {
                continue;
            }
            for jj in 0..j {
                for (k, l) in line.iter_mut().enumerate() {
                    *l = values[(base + k * stride) * j + jj];
                }
                fft.process(&mut line);
                for (k, l) in line.iter().enumerate() {
                    values[(base + k * stride) * j + jj] = *l;
                }
            }
        }
    }
    if inverse {
        let s = 1.0 / total as f64;
        values.iter_mut().for_each(|v| *v *= s);
    }
}

/// `(sum |u|^p y^m dy dx)^(1/p)` with cell-length weights in y and the
/// uniform rule on the torus in x.
pub fn lp_norm(u: &Field, p: f64, m: f64) -> f64 {
    let g = &u.grid;
    let j = g.j();
    let w: Vec<f64> = g.y_nodes.iter().zip(&g.y_weights).map(|(y, h)| y.powf(m) * h).collect();
    let sum: f64 = u.values.iter().enumerate().map(|(i, v)| v.norm().powf(p) * w[i % j]).sum();
    (sum * g.x_cell()).powf(1.0 / p)
}

/// Weighted norms of every term of the anisotropic Sobolev norm, plus the
/// Neumann term `y^(a2-1) D_y u`. Sums over index pairs are taken inside.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SobolevNormReport {
    pub u: f64,
    pub dxx: f64,
    pub dx: f64,
    pub dyy: f64,
    pub dy: f64,
    pub dxy: f64,
    pub neumann: f64,
}

impl SobolevNormReport {
    pub fn total(&self) -> f64 {
        self.u + self.dxx + self.dx + self.dyy + self.dy + self.dxy + self.neumann
    }

    pub fn is_finite(&self) -> bool {
        self.total().is_finite()
    }
}

pub fn sobolev_report(u: &Field, spec: &OperatorSpec, space: &SpaceSpec) -> Result<SobolevNormReport> {
    if u.j() < 8 {
        return Err(Error::Grid("sobolev_report needs J >= 8".into()));
    }
    let (a1, a2) = (spec.alpha1, spec.alpha2);
    let (p, m) = (space.p, space.m);
    let norm = |f: &Field, s: f64| lp_norm(&f.scale_y(|y| y.powf(s)), p, m);
    let (d1, d2) = u.dy();
    let mut r = SobolevNormReport {
        u: lp_norm(u, p, m),
        dyy: norm(&d2, a2),
        dy: norm(&d1, a2 / 2.0),
        neumann: norm(&d1, a2 - 1.0),
        ..Default::default()
    };
    let dim = u.grid.dim();
    for i in 0..dim {
        let ui = u.dx(i);
        r.dx += norm(&ui, a1 / 2.0);
        r.dxy += norm(&d1.dx(i), (a1 + a2) / 2.0);
        for k in 0..dim {
            r.dxx += norm(&ui.dx(k), a1);
        }
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_example() {
        let g = make_grid(8, 1.0, 1.0, None).unwrap();
        assert_eq!(g.y_nodes[0], 1.0 / 16.0);
        assert!(g.y_weights.iter().all(|&w| (w - 0.125).abs() < 1e-15));
        let g = make_grid(256, 3.0, 2.5, None).unwrap();
        assert!((g.y_weights.iter().sum::<f64>() - 3.0).abs() < 1e-13);
        assert!((g.dual_weights().iter().sum::<f64>() - 3.0).abs() < 1e-13);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(make_grid(4, 1.0, 1.0, None).is_err());
        assert!(make_grid(16, 0.0, 1.0, None).is_err());
        assert!(make_grid(16, 1.0, 0.5, None).is_err());
        let b = XBox { length: 1.0, nx: 7, dim: 1 };
        assert!(make_grid(16, 1.0, 1.0, Some(b)).is_err());
    }

    #[test]
    fn lagrange_is_exact_on_quadratics() {
        let nodes = [0.1, 0.35, 0.9];
        for &x in &[0.1, 0.2, 0.9] {
            let (d1, d2) = lagrange3(x, nodes);
            let f = |t: f64| 3.0 * t * t - t + 2.0;
            let a: f64 = (0..3).map(|i| d1[i] * f(nodes[i])).sum();
            let b: f64 = (0..3).map(|i| d2[i] * f(nodes[i])).sum();
            assert!((a - (6.0 * x - 1.0)).abs() < 1e-12);
            assert!((b - 6.0).abs() < 1e-11);
        }
    }

    #[test]
    fn fft_round_trip_and_derivative() {
        let b = XBox { length: 2.0 * std::f64::consts::PI, nx: 16, dim: 2 };
        let g = Arc::new(make_grid(8, 1.0, 1.0, Some(b)).unwrap());
        let u = Field::from_fn(g.clone(), |x, y| Complex64::new((x[0] + 2.0 * x[1]).sin() * y, 0.0));
        let back = u.to_modes().from_modes();
        assert!(back.sub(&u).max_abs() < 1e-13);
        let d = u.dx(1);
        let exact = Field::from_fn(g, |x, y| Complex64::new(2.0 * (x[0] + 2.0 * x[1]).cos() * y, 0.0));
        assert!(d.sub(&exact).max_abs() < 1e-12);
    }
}
