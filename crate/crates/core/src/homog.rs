//! Finite-difference homogenization toolkit.
//!
//! The periodic cell problem is discretized with a cell-centered finite
//! volume scheme on an `n × n` grid. Cells whose centers fall inside the
//! perforation get zero conductivity, and face conductivities are harmonic
//! means of the two neighbours, so every face touching the perforation is
//! no-flux. The homogenized Dirichlet problem uses a 9-point stencil on the
//! node lattice of the rectangle, endpoints included.

use crate::geometry::{PerforatedDomain, Perforation, Rect, Region, Vec2};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

/// Relative residual at which the conjugate-gradient solves stop.
pub const CG_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum HomogError {
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("invalid cell geometry: {0}")]
    InvalidCell(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("grid mismatch: {0}")]
    Mismatch(String),
    #[error("reference field has zero norm")]
    ZeroNorm,
    #[error("malformed grid file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Jacobi-preconditioned conjugate gradients for a symmetric positive
/// semi-definite operator. Zero entries of `diag` pin the matching unknowns.
fn conjugate_gradient(
    apply: impl Fn(&[f64], &mut [f64]),
    b: &[f64],
    x: &mut [f64],
    diag: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<CgReport, HomogError> {
    let n = b.len();
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        x.fill(0.0);
        return Ok(CgReport {
            iterations: 0,
            relative_residual: 0.0,
        });
    }
    let mut r = vec![0.0; n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = if inv[i] > 0.0 { b[i] - r[i] } else { 0.0 };
    }
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(a, b)| a * b).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut ap = vec![0.0; n];
    let mut res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / b_norm;
    for it in 0..max_iter {
        if res <= tol {
            return Ok(CgReport {
                iterations: it,
                relative_residual: res,
            });
        }
        apply(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_next: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        res = r.iter().map(|v| v * v).sum::<f64>().sqrt() / b_norm;
    }
    if res <= tol {
        return Ok(CgReport {
            iterations: max_iter,
            relative_residual: res,
        });
    }
    Err(HomogError::NotConverged {
        iterations: max_iter,
        residual: res,
    })
}

/// Scalar field on a tensor grid. `values[j * nx + i]` sits at
/// `(x1[i], x2[j])`; `mask` is false where the field is undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

/// Sidecar metadata written next to a grid CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridMeta {
    pub nx: usize,
    pub ny: usize,
    pub lo: Vec2,
    pub hi: Vec2,
    pub masked_out: usize,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        })
        .collect()
}

impl GridField {
    /// `n × n` node lattice over `rect`, endpoints included.
    pub fn lattice(rect: &Rect, n: usize, f: impl Fn(Vec2) -> f64) -> Self {
        let x1 = linspace(rect.lo[0], rect.hi[0], n);
        let x2 = linspace(rect.lo[1], rect.hi[1], n);
        let mut values = Vec::with_capacity(n * n);
        for &y in &x2 {
            for &x in &x1 {
                values.push(f([x, y]));
            }
        }
        Self {
            x1,
            x2,
            values,
            mask: vec![true; n * n],
        }
    }

    pub fn nx(&self) -> usize {
        self.x1.len()
    }

    pub fn ny(&self) -> usize {
        self.x2.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.nx() + i]
    }

    pub fn point(&self, i: usize, j: usize) -> Vec2 {
        [self.x1[i], self.x2[j]]
    }

    /// Marks nodes strictly inside a perforation as undefined.
    pub fn apply_mask(&mut self, domain: &PerforatedDomain) {
        let nx = self.nx();
        for j in 0..self.ny() {
            for i in 0..nx {
                if matches!(domain.classify_point(self.point(i, j)), Region::InPerforation(_)) {
                    self.mask[j * nx + i] = false;
                }
            }
        }
    }

    pub fn masked_out(&self) -> usize {
        self.mask.iter().filter(|m| !**m).count()
    }

    pub fn meta(&self) -> GridMeta {
        GridMeta {
            nx: self.nx(),
            ny: self.ny(),
            lo: [self.x1[0], self.x2[0]],
            hi: [*self.x1.last().unwrap_or(&0.0), *self.x2.last().unwrap_or(&0.0)],
            masked_out: self.masked_out(),
        }
    }

    /// CSV with header `x1,x2,value,mask`, rows ordered by `x2` then `x1`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "x1,x2,value,mask")?;
        for j in 0..self.ny() {
            for i in 0..self.nx() {
                let k = j * self.nx() + i;
                writeln!(
                    out,
                    "{},{},{},{}",
                    self.x1[i],
                    self.x2[j],
                    self.values[k],
                    u8::from(self.mask[k])
                )?;
            }
        }
        out.flush()
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self, HomogError> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| HomogError::Format("empty file".into()))??;
        if header.trim() != "x1,x2,value,mask" {
            return Err(HomogError::Format(format!("unexpected header '{header}'")));
        }
        let mut rows: Vec<(f64, f64, f64, bool)> = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parts: Vec<&str> = line.split(',').collect();
            let bad = || HomogError::Format(format!("line {}: '{line}'", lineno + 2));
            if parts.len() != 4 {
                return Err(bad());
            }
            let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
            let mask = match parts[3].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad()),
            };
            rows.push((num(parts[0])?, num(parts[1])?, num(parts[2])?, mask));
        }
        if rows.is_empty() {
            return Err(HomogError::Format("no data rows".into()));
        }
        let nx = rows.iter().take_while(|r| r.1 == rows[0].1).count();
        if rows.len() % nx != 0 {
            return Err(HomogError::Format(format!(
                "{} rows do not form a grid with {nx} columns",
                rows.len()
            )));
        }
        let ny = rows.len() / nx;
        let x1: Vec<f64> = rows[..nx].iter().map(|r| r.0).collect();
        let x2: Vec<f64> = (0..ny).map(|j| rows[j * nx].1).collect();
        for (k, r) in rows.iter().enumerate() {
            if r.0 != x1[k % nx] || r.1 != x2[k / nx] {
                return Err(HomogError::Format(format!("row {} is off the grid", k + 2)));
            }
        }
        Ok(Self {
            x1,
            x2,
            values: rows.iter().map(|r| r.2).collect(),
            mask: rows.iter().map(|r| r.3).collect(),
        })
    }

    /// Writes `path` as CSV and `path.meta.json` as its sidecar.
    pub fn save(&self, path: &Path) -> Result<(), HomogError> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let meta = serde_json::to_string_pretty(&self.meta())
            .map_err(|e| HomogError::Format(e.to_string()))?;
        std::fs::write(sidecar_path(path), meta)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HomogError> {
        let file = std::fs::File::open(path)?;
        Self::read_csv(std::io::BufReader::new(file))
    }
}

pub fn sidecar_path(csv: &Path) -> std::path::PathBuf {
    let mut name = csv.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    csv.with_file_name(name)
}

/// `√Σ(u−v)² / √Σu²` over nodes where both fields are defined; `u` is the
/// reference.
pub fn relative_l2(u: &GridField, v: &GridField) -> Result<f64, HomogError> {
    if u.nx() != v.nx() || u.ny() != v.ny() {
        return Err(HomogError::Mismatch(format!(
            "{}x{} vs {}x{}",
            u.nx(),
            u.ny(),
            v.nx(),
            v.ny()
        )));
    }
    if u.mask != v.mask {
        return Err(HomogError::Mismatch("masks differ".into()));
    }
    let (mut diff, mut norm) = (0.0, 0.0);
    for k in 0..u.values.len() {
        if u.mask[k] {
            diff += (u.values[k] - v.values[k]).powi(2);
            norm += u.values[k].powi(2);
        }
    }
    if norm == 0.0 {
        return Err(HomogError::ZeroNorm);
    }
    Ok(diff.sqrt() / norm.sqrt())
}

/// A single perforation inside the unit cell `[-1/2, 1/2]²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellGeometry {
    pub perforation: Perforation,
}

impl CellGeometry {
    pub fn new(perforation: Perforation) -> Result<Self, HomogError> {
        let p = perforation;
        let inside = p.radius >= 0.0
            && (0..2).all(|k| p.center[k] - p.radius > -0.5 && p.center[k] + p.radius < 0.5);
        if !inside {
            return Err(HomogError::InvalidCell(format!(
                "disk at ({}, {}) with radius {} does not fit strictly inside the cell",
                p.center[0], p.center[1], p.radius
            )));
        }
        Ok(Self { perforation })
    }

    /// Centered disk.
    pub fn centered(radius: f64) -> Result<Self, HomogError> {
        Self::new(Perforation::new([0.0, 0.0], radius))
    }

    /// Cell of a periodic lattice with spacing `period` and disk radius `radius`.
    pub fn from_lattice(period: f64, radius: f64) -> Result<Self, HomogError> {
        Self::centered(radius / period)
    }

    /// Material indicator on the `n × n` cell-centered grid.
    fn indicator(&self, n: usize) -> Vec<f64> {
        let h = 1.0 / n as f64;
        let mut chi = vec![1.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let c = [-0.5 + (i as f64 + 0.5) * h, -0.5 + (j as f64 + 0.5) * h];
                if self.perforation.radius > 0.0 && self.perforation.contains_closed(c) {
                    chi[j * n + i] = 0.0;
                }
            }
        }
        chi
    }
}

/// Periodic finite-volume operator for `-∇·(χ∇N)`, scaled by `h²`.
struct CellOperator {
    n: usize,
    /// Conductivity of the east face of each cell.
    k_east: Vec<f64>,
    /// Conductivity of the north face of each cell.
    k_north: Vec<f64>,
}

impl CellOperator {
    fn new(chi: &[f64], n: usize) -> Self {
        let mut k_east = vec![0.0; n * n];
        let mut k_north = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let p = j * n + i;
                let e = j * n + (i + 1) % n;
                let nn = ((j + 1) % n) * n + i;
                k_east[p] = harmonic_mean(chi[p], chi[e]);
                k_north[p] = harmonic_mean(chi[p], chi[nn]);
            }
        }
        Self { n, k_east, k_north }
    }

    #[inline]
    fn west(&self, i: usize, j: usize) -> usize {
        j * self.n + (i + self.n - 1) % self.n
    }

    #[inline]
    fn south(&self, i: usize, j: usize) -> usize {
        ((j + self.n - 1) % self.n) * self.n + i
    }

    fn diag(&self) -> Vec<f64> {
        let n = self.n;
        let mut d = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let p = j * n + i;
                d[p] = self.k_east[p]
                    + self.k_north[p]
                    + self.k_east[self.west(i, j)]
                    + self.k_north[self.south(i, j)];
            }
        }
        d
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.n;
        for j in 0..n {
            let jn = ((j + 1) % n) * n;
            let js = ((j + n - 1) % n) * n;
            for i in 0..n {
                let p = j * n + i;
                let ie = j * n + (i + 1) % n;
                let iw = j * n + (i + n - 1) % n;
                let inn = jn + i;
                let is = js + i;
                let ke = self.k_east[p];
                let kw = self.k_east[iw];
                let kn = self.k_north[p];
                let ks = self.k_north[is];
                y[p] = ke * (x[p] - x[ie])
                    + kw * (x[p] - x[iw])
                    + kn * (x[p] - x[inn])
                    + ks * (x[p] - x[is]);
            }
        }
    }

    /// Right-hand side `h·[(k_e − k_w)ξ₁ + (k_n − k_s)ξ₂]`.
    fn rhs(&self, xi: Vec2) -> Vec<f64> {
        let n = self.n;
        let h = 1.0 / n as f64;
        let mut b = vec![0.0; n * n];
        for j in 0..n {
            for i in 0..n {
                let p = j * n + i;
                b[p] = h
                    * ((self.k_east[p] - self.k_east[self.west(i, j)]) * xi[0]
                        + (self.k_north[p] - self.k_north[self.south(i, j)]) * xi[1]);
            }
        }
        b
    }

    /// Cell averages over the whole cell of `χ(ξ + ∇N)`, from face fluxes.
    fn mean_flux(&self, xi: Vec2, corrector: &[f64]) -> Vec2 {
        let n = self.n;
        let h = 1.0 / n as f64;
        let (mut f1, mut f2) = (0.0, 0.0);
        for j in 0..n {
            for i in 0..n {
                let p = j * n + i;
                let e = j * n + (i + 1) % n;
                let nn = ((j + 1) % n) * n + i;
                f1 += self.k_east[p] * (xi[0] + (corrector[e] - corrector[p]) / h);
                f2 += self.k_north[p] * (xi[1] + (corrector[nn] - corrector[p]) / h);
            }
        }
        let cells = (n * n) as f64;
        [f1 / cells, f2 / cells]
    }
}

#[inline]
fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

fn cell_axis(n: usize) -> Vec<f64> {
    let h = 1.0 / n as f64;
    (0..n).map(|i| -0.5 + (i as f64 + 0.5) * h).collect()
}

/// Corrector `N` for the direction `xi`, mean zero over the material cells.
pub fn solve_cell_problem(cell: &CellGeometry, xi: Vec2, n: usize) -> Result<GridField, HomogError> {
    Ok(solve_cell_with_report(cell, xi, n)?.0)
}

fn solve_cell_with_report(
    cell: &CellGeometry,
    xi: Vec2,
    n: usize,
) -> Result<(GridField, CellOperator, CgReport), HomogError> {
    if n < 32 {
        return Err(HomogError::Invalid(format!("cell resolution {n} below 32")));
    }
    let chi = cell.indicator(n);
    let op = CellOperator::new(&chi, n);
    let mut b = op.rhs(xi);
    let material = chi.iter().filter(|&&c| c > 0.0).count() as f64;
    // keep the right-hand side in the range of the singular operator
    let mean_b = b.iter().zip(&chi).filter(|(_, &c)| c > 0.0).map(|(v, _)| v).sum::<f64>() / material;
    for (v, &c) in b.iter_mut().zip(&chi) {
        if c > 0.0 {
            *v -= mean_b;
        }
    }
    let mut x = vec![0.0; n * n];
    let report = conjugate_gradient(
        |v, out| op.apply(v, out),
        &b,
        &mut x,
        &op.diag(),
        CG_TOLERANCE,
        50 * n,
    )?;
    let mean = x.iter().zip(&chi).filter(|(_, &c)| c > 0.0).map(|(v, _)| v).sum::<f64>() / material;
    for (v, &c) in x.iter_mut().zip(&chi) {
        *v = if c > 0.0 { *v - mean } else { 0.0 };
    }
    let axis = cell_axis(n);
    let field = GridField {
        x1: axis.clone(),
        x2: axis,
        values: x,
        mask: chi.iter().map(|&c| c > 0.0).collect(),
    };
    Ok((field, op, report))
}

/// Residual `‖b − A·N‖ / ‖b‖` of a returned corrector.
pub fn cell_residual(cell: &CellGeometry, xi: Vec2, corrector: &GridField) -> f64 {
    let n = corrector.nx();
    let chi = cell.indicator(n);
    let op = CellOperator::new(&chi, n);
    let b = op.rhs(xi);
    let mut ax = vec![0.0; n * n];
    op.apply(&corrector.values, &mut ax);
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r = b.iter().zip(&ax).map(|(a, c)| (a - c).powi(2)).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        r
    } else {
        r / b_norm
    }
}

/// Homogenized tensor of a periodically perforated medium.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveTensor {
    pub a: [[f64; 2]; 2],
    /// Material fraction of the discretized cell.
    pub porosity: f64,
}

impl EffectiveTensor {
    pub fn identity() -> Self {
        Self {
            a: [[1.0, 0.0], [0.0, 1.0]],
            porosity: 1.0,
        }
    }

    pub fn scaled_identity(c: f64) -> Self {
        Self {
            a: [[c, 0.0], [0.0, c]],
            porosity: 1.0,
        }
    }

    pub fn eigenvalues(&self) -> [f64; 2] {
        let [[a, b], [c, d]] = self.a;
        let tr = a + d;
        let det = a * d - b * c;
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        [0.5 * tr - disc, 0.5 * tr + disc]
    }

    pub fn asymmetry(&self) -> f64 {
        (self.a[0][1] - self.a[1][0]).abs()
    }

    pub fn is_spd(&self) -> bool {
        self.asymmetry() < 1e-8 && self.eigenvalues()[0] > 0.0
    }
}

/// Effective tensor from the correctors for `e₁` and `e₂`.
///
/// Column `j` is the average of `χ(e_j + ∇N_j)` over the material part of
/// the cell; the homogenized equation then keeps the unscaled source term.
pub fn effective_tensor(cell: &CellGeometry, n: usize) -> Result<EffectiveTensor, HomogError> {
    let mut a = [[0.0; 2]; 2];
    let mut porosity = 1.0;
    for (col, xi) in [[1.0, 0.0], [0.0, 1.0]].into_iter().enumerate() {
        let (field, op, _) = solve_cell_with_report(cell, xi, n)?;
        porosity = field.mask.iter().filter(|m| **m).count() as f64 / (n * n) as f64;
        let flux = op.mean_flux(xi, &field.values);
        a[0][col] = flux[0] / porosity;
        a[1][col] = flux[1] / porosity;
    }
    Ok(EffectiveTensor { a, porosity })
}

/// Solves `∇·(A⁰∇u) = G` on `rect` with `u = g` on the boundary, on the
/// `n × n` node lattice.
pub fn solve_homogenized(
    a0: &EffectiveTensor,
    source: &dyn Fn(Vec2) -> f64,
    boundary: &dyn Fn(Vec2) -> f64,
    rect: &Rect,
    n: usize,
) -> Result<GridField, HomogError> {
    if n < 3 {
        return Err(HomogError::Invalid(format!("lattice size {n} below 3")));
    }
    let [[a11, a12], [a21, a22]] = a0.a;
    if !a0.is_spd() {
        return Err(HomogError::Invalid("tensor is not symmetric positive definite".into()));
    }
    let a12 = 0.5 * (a12 + a21);
    let mut field = GridField::lattice(rect, n, |_| 0.0);
    let hx = rect.width(0) / (n - 1) as f64;
    let hy = rect.width(1) / (n - 1) as f64;
    let m = n - 2;
    let idx = |i: usize, j: usize| (j - 1) * m + (i - 1);
    let is_boundary = |i: usize, j: usize| i == 0 || j == 0 || i == n - 1 || j == n - 1;
    let cx = a11 / (hx * hx);
    let cy = a22 / (hy * hy);
    let cxy = a12 / (2.0 * hx * hy);
    let centre = 2.0 * cx + 2.0 * cy;
    // (offset, coefficient) pairs of the stencil for −∇·(A⁰∇u)
    let stencil: [((isize, isize), f64); 8] = [
        ((1, 0), -cx),
        ((-1, 0), -cx),
        ((0, 1), -cy),
        ((0, -1), -cy),
        ((1, 1), -cxy),
        ((-1, -1), -cxy),
        ((1, -1), cxy),
        ((-1, 1), cxy),
    ];

    for j in 0..n {
        for i in 0..n {
            if is_boundary(i, j) {
                field.values[j * n + i] = boundary(field.point(i, j));
            }
        }
    }

    let mut b = vec![0.0; m * m];
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let mut v = -source(field.point(i, j));
            for ((di, dj), c) in stencil {
                let (ii, jj) = ((i as isize + di) as usize, (j as isize + dj) as usize);
                if is_boundary(ii, jj) {
                    v -= c * field.values[jj * n + ii];
                }
            }
            b[idx(i, j)] = v;
        }
    }

    let apply = |x: &[f64], y: &mut [f64]| {
        for j in 1..n - 1 {
            for i in 1..n - 1 {
                let mut v = centre * x[idx(i, j)];
                for ((di, dj), c) in stencil {
                    let (ii, jj) = ((i as isize + di) as usize, (j as isize + dj) as usize);
                    if !is_boundary(ii, jj) {
                        v += c * x[idx(ii, jj)];
                    }
                }
                y[idx(i, j)] = v;
            }
        }
    };
    let mut x = vec![0.0; m * m];
    conjugate_gradient(apply, &b, &mut x, &vec![centre; m * m], CG_TOLERANCE, 50 * n.max(20))?;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            field.values[j * n + i] = x[idx(i, j)];
        }
    }
    Ok(field)
}
