//! Finite-difference discretization of the crossed-fields operators on a
//! Dirichlet box.
//!
//! Node `(j, k)` (0-based, `j` along x, `k` along y) has flat index
//! `j * ny + k`, so y runs fastest and the operators have bandwidth `ny`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::potentials::{Extents, PotentialSpec};
use crate::sparse::CsrMatrix;

/// Tensor grid of interior nodes in `[-lx, lx] x [-ly, ly]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub lx: f64,
    pub ly: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid2D {
    pub fn new(lx: f64, ly: f64, nx: usize, ny: usize) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::GridTooSmall { nx, ny });
        }
        for (name, v) in [("lx", lx), ("ly", ly)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(name, format!("half-extent must be positive, got {v}")));
            }
        }
        Ok(Self { lx, ly, nx, ny })
    }

    pub fn square(l: f64, n: usize) -> Result<Self> {
        Self::new(l, l, n, n)
    }

    /// Square box whose spacing is the closest achievable to `spacing`.
    pub fn square_with_spacing(l: f64, spacing: f64) -> Result<Self> {
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(invalid("spacing", format!("must be positive, got {spacing}")));
        }
        let n = ((2.0 * l / spacing).round() as i64 - 1).max(0) as usize;
        Self::square(l, n)
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.lx / (self.nx + 1) as f64
    }

    pub fn dy(&self) -> f64 {
        2.0 * self.ly / (self.ny + 1) as f64
    }

    pub fn dim(&self) -> usize {
        self.nx * self.ny
    }

    /// `x_j = -lx + (j + 1) dx`, written about the center so that mirror nodes
    /// are exact negatives of each other.
    pub fn x(&self, j: usize) -> f64 {
        (j as f64 + 1.0 - 0.5 * (self.nx + 1) as f64) * self.dx()
    }

    pub fn y(&self, k: usize) -> f64 {
        (k as f64 + 1.0 - 0.5 * (self.ny + 1) as f64) * self.dy()
    }

    pub fn index(&self, j: usize, k: usize) -> usize {
        j * self.ny + k
    }

    pub fn node(&self, i: usize) -> (usize, usize) {
        (i / self.ny, i % self.ny)
    }

    pub fn coords(&self, i: usize) -> (f64, f64) {
        let (j, k) = self.node(i);
        (self.x(j), self.y(k))
    }

    pub fn extents(&self) -> Extents {
        Extents::new((-self.lx, self.lx), (-self.ly, self.ly))
    }

    /// Distance of node `j` to the nearest x-wall, in cells (`>= 1`).
    pub fn x_wall_distance(&self, j: usize) -> usize {
        (j + 1).min(self.nx - j)
    }

    /// Distance of node `i` to the nearest wall, in cells (`>= 1`).
    pub fn wall_distance(&self, i: usize) -> usize {
        let (j, k) = self.node(i);
        self.x_wall_distance(j).min((k + 1).min(self.ny - k))
    }

    /// `f` sampled at every node in index order.
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        (0..self.dim())
            .map(|i| {
                let (x, y) = self.coords(i);
                f(x, y)
            })
            .collect()
    }
}

/// Field strengths and semiclassical scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    pub b: f64,
    pub eps: f64,
    pub h: f64,
}

impl OperatorParams {
    /// `b` and `eps` may be zero (pure Landau or pure Laplacian references).
    pub fn new(b: f64, eps: f64, h: f64) -> Result<Self> {
        if !(b.is_finite() && b >= 0.0) {
            return Err(invalid("B", format!("must be nonnegative, got {b}")));
        }
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(invalid("epsilon", format!("must be nonnegative, got {eps}")));
        }
        if !(h > 0.0 && h <= 1.0) {
            return Err(invalid("h", format!("must lie in (0, 1], got {h}")));
        }
        Ok(Self { b, eps, h })
    }

    pub fn unit() -> Self {
        Self { b: 1.0, eps: 1.0, h: 1.0 }
    }

    pub fn with_h(self, h: f64) -> Result<Self> {
        Self::new(self.b, self.eps, h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OperatorTag {
    H0,
    H,
    Shift,
    Multiplication,
    Commutator,
    Function,
}

impl OperatorTag {
    pub fn is_hamiltonian(self) -> bool {
        matches!(self, OperatorTag::H0 | OperatorTag::H)
    }
}

impl std::fmt::Display for OperatorTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            OperatorTag::H0 => "H0",
            OperatorTag::H => "H",
            OperatorTag::Shift => "shift",
            OperatorTag::Multiplication => "multiplication",
            OperatorTag::Commutator => "commutator",
            OperatorTag::Function => "function",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteOperator {
    pub grid: Grid2D,
    pub params: Option<OperatorParams>,
    pub tag: OperatorTag,
    pub matrix: CsrMatrix,
}

impl DiscreteOperator {
    pub fn new(grid: Grid2D, params: Option<OperatorParams>, tag: OperatorTag, matrix: CsrMatrix) -> Result<Self> {
        if matrix.dim() != grid.dim() {
            return Err(Error::DimensionMismatch { left: matrix.dim(), right: grid.dim() });
        }
        Ok(Self { grid, params, tag, matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn hermitian_defect(&self) -> f64 {
        self.matrix.hermitian_defect()
    }

    /// Real diagonal of a multiplication operator.
    pub fn real_diagonal(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    /// `self + t * other`, keeping this operator's tag and params.
    pub fn perturbed(&self, other: &DiscreteOperator, t: f64) -> Result<Self> {
        let matrix = self.matrix.add_scaled(&other.matrix, Complex64::new(t, 0.0))?;
        Ok(Self { matrix, ..self.clone() })
    }

    /// Hermitian upper band storage with `kd = bandwidth`.
    pub fn hermitian_band(&self) -> (Vec<Complex64>, usize) {
        let n = self.dim();
        let kd = self.matrix.bandwidth();
        let mut ab = vec![Complex64::default(); n * (kd + 1)];
        for (i, j, v) in self.matrix.entries() {
            if i <= j {
                ab[kd + i - j + j * (kd + 1)] = v;
            }
        }
        (ab, kd)
    }
}

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

/// `(h Dx - B y)^2 + h^2 Dy^2 + eps x` with `Dx = -i d/dx` discretized by
/// centered differences and the squares by 3-point stencils.
pub fn build_h0(grid: &Grid2D, params: &OperatorParams) -> Result<DiscreteOperator> {
    assemble(grid, params, None)
}

/// `build_h0` plus the potential on the diagonal.
pub fn build_h(grid: &Grid2D, params: &OperatorParams, spec: &PotentialSpec) -> Result<DiscreteOperator> {
    spec.validate()?;
    assemble(grid, params, Some(spec))
}

fn assemble(grid: &Grid2D, params: &OperatorParams, spec: Option<&PotentialSpec>) -> Result<DiscreteOperator> {
    let grid = Grid2D::new(grid.lx, grid.ly, grid.nx, grid.ny)?;
    let OperatorParams { b, eps, h } = *params;
    let (dx, dy) = (grid.dx(), grid.dy());
    let (cx, cy) = (h * h / (dx * dx), h * h / (dy * dy));
    let n = grid.dim();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let (j, k) = grid.node(i);
        let (x, y) = (grid.x(j), grid.y(k));
        let mut diag = 2.0 * cx + 2.0 * cy + b * b * y * y + eps * x;
        if let Some(s) = spec {
            diag += s.value(x, y);
        }
        // -2 B y h Dx u = i B y h (u_{j+1} - u_{j-1}) / dx
        let cross = Complex64::new(0.0, b * y * h / dx);
        let mut row = Vec::with_capacity(5);
        if j > 0 {
            row.push((i - grid.ny, c(-cx) - cross));
        }
        if k > 0 {
            row.push((i - 1, c(-cy)));
        }
        row.push((i, c(diag)));
        if k + 1 < grid.ny {
            row.push((i + 1, c(-cy)));
        }
        if j + 1 < grid.nx {
            row.push((i + grid.ny, c(-cx) + cross));
        }
        rows.push(row);
    }
    let tag = if spec.is_some() { OperatorTag::H } else { OperatorTag::H0 };
    DiscreteOperator::new(grid, Some(*params), tag, CsrMatrix::from_rows(n, rows))
}

/// Diagonal operator of a scalar field sampled at the nodes.
pub fn build_multiplication(grid: &Grid2D, field: impl Fn(f64, f64) -> f64) -> Result<DiscreteOperator> {
    let values = grid.sample(field);
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        let (x, y) = grid.coords(i);
        return Err(invalid("field", format!("not finite at node ({x}, {y})")));
    }
    DiscreteOperator::new(*grid, None, OperatorTag::Multiplication, CsrMatrix::from_real_diagonal(&values))
}

/// Truncated translation `(U u)(j, k) = u(j + steps, k)`; rows whose source
/// falls outside the grid are zero. The shift distance is `steps * dx`.
pub fn build_shift(grid: &Grid2D, steps: i64) -> Result<DiscreteOperator> {
    if steps.unsigned_abs() as usize >= grid.nx {
        return Err(Error::ShiftOutOfRange { steps, nx: grid.nx });
    }
    let n = grid.dim();
    let rows = (0..n)
        .map(|i| {
            let (j, k) = grid.node(i);
            let src = j as i64 + steps;
            if (0..grid.nx as i64).contains(&src) {
                vec![(grid.index(src as usize, k), c(1.0))]
            } else {
                Vec::new()
            }
        })
        .collect();
    DiscreteOperator::new(*grid, None, OperatorTag::Shift, CsrMatrix::from_rows(n, rows))
}

/// `[A, B] = AB - BA`.
pub fn commutator(a: &DiscreteOperator, b: &DiscreteOperator) -> Result<DiscreteOperator> {
    let m = a.matrix.matmul(&b.matrix)?.sub(&b.matrix.matmul(&a.matrix)?)?;
    DiscreteOperator::new(a.grid, a.params, OperatorTag::Commutator, m)
}

/// True for rows farther than `|steps|` cells from both x-walls, where the
/// shift identities hold exactly.
pub fn is_shift_interior(grid: &Grid2D, i: usize, steps: i64) -> bool {
    grid.x_wall_distance(grid.node(i).0) > steps.unsigned_abs() as usize
}

/// Orthonormal basis adapted to the reflection `y -> -y`.
///
/// When `conj(M) = P M P` for the reflection permutation `P`, the matrix
/// `Q^H M Q` is real symmetric. Within each x-column the basis interleaves
/// `(e_k + e_k') / sqrt 2` and `i (e_k - e_k') / sqrt 2` for mirror pairs
/// `k < k'`, followed by the middle node when `ny` is odd, which keeps the
/// bandwidth at `ny + 1`.
#[derive(Clone, Debug)]
pub struct ReflectionBasis {
    grid: Grid2D,
    q: CsrMatrix,
    qh: CsrMatrix,
}

impl ReflectionBasis {
    pub fn new(grid: &Grid2D) -> Self {
        let (n, ny) = (grid.dim(), grid.ny);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        // build Q by rows: row = node, column = basis index
        let mut rows = vec![Vec::with_capacity(2); n];
        for j in 0..grid.nx {
            let base = j * ny;
            let mut col = base;
            for k in 0..ny / 2 {
                let (a, b) = (base + k, base + ny - 1 - k);
                rows[a].push((col, c(s)));
                rows[b].push((col, c(s)));
                rows[a].push((col + 1, Complex64::new(0.0, s)));
                rows[b].push((col + 1, Complex64::new(0.0, -s)));
                col += 2;
            }
            if ny % 2 == 1 {
                rows[base + ny / 2].push((col, c(1.0)));
            }
        }
        let q = CsrMatrix::from_rows(n, rows);
        let qh = q.conj_transpose();
        Self { grid: *grid, q, qh }
    }

    fn mirror(&self, i: usize) -> usize {
        let (j, k) = self.grid.node(i);
        self.grid.index(j, self.grid.ny - 1 - k)
    }

    /// Checks `conj(M) = P M P` entry-wise and exactly.
    pub fn admits(&self, m: &CsrMatrix) -> bool {
        m.dim() == self.grid.dim() && m.entries().all(|(i, j, v)| m.get(self.mirror(i), self.mirror(j)) == v.conj())
    }

    /// Real symmetric `Q^H M Q` as `(row, col, value)` triples, or `None` when
    /// the reflection symmetry fails.
    pub fn real_form(&self, m: &CsrMatrix) -> Option<RealSymmetric> {
        if !self.admits(m) {
            return None;
        }
        let r = self.qh.matmul(&m.matmul(&self.q).ok()?).ok()?;
        let scale = r.max_abs().max(f64::MIN_POSITIVE);
        let entries: Vec<(usize, usize, f64)> = r.entries().map(|(i, j, v)| (i, j, v.re)).collect();
        let imag = r.entries().map(|(_, _, v)| v.im.abs()).fold(0.0, f64::max);
        debug_assert!(imag <= 1e-13 * scale, "reflection form not real: {imag}");
        Some(RealSymmetric { dim: m.dim(), entries })
    }

    /// Maps real coordinates in the adapted basis back to node values.
    pub fn lift(&self, coeffs: &[f64]) -> Vec<Complex64> {
        let z: Vec<Complex64> = coeffs.iter().map(|&v| c(v)).collect();
        self.q.matvec(&z)
    }
}

/// Sparse real symmetric matrix given by its stored entries.
#[derive(Clone, Debug)]
pub struct RealSymmetric {
    pub dim: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl RealSymmetric {
    pub fn bandwidth(&self) -> usize {
        self.entries.iter().map(|&(i, j, _)| i.abs_diff(j)).max().unwrap_or(0)
    }

    /// Upper band storage and its `kd`.
    pub fn band(&self) -> (Vec<f64>, usize) {
        let kd = self.bandwidth();
        let mut ab = vec![0.0; self.dim * (kd + 1)];
        for &(i, j, v) in &self.entries {
            if i <= j {
                ab[kd + i - j + j * (kd + 1)] = v;
            }
        }
        (ab, kd)
    }

    /// Column-major dense copy.
    pub fn dense(&self) -> Vec<f64> {
        let n = self.dim;
        let mut a = vec![0.0; n * n];
        for &(i, j, v) in &self.entries {
            a[i + j * n] = v;
        }
        a
    }
}
