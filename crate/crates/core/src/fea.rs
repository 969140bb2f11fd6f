//! Plane-stress linear elasticity on the design grid.
//!
//! Each cell is a bilinear square (Q4) element of unit thickness. Void cells
//! keep an ersatz stiffness `ersatz * E` so the system stays positive
//! definite while the topology changes. The assembled matrix is banded (nodes
//! are numbered along the shorter grid side first) and is factorised by a
//! banded Cholesky decomposition.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::field::{Grid, IndicatorField, ScalarField};

pub const DEFAULT_ERSATZ: f64 = 1e-6;
const RESIDUAL_TOL: f64 = 1e-8;
const MAX_REFINE: usize = 4;
const ROUNDING_FLOOR: f64 = 16.0;
const PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub young: f64,
    pub poisson: f64,
    pub ersatz: f64,
}

impl Material {
    pub fn new(young: f64, poisson: f64) -> Result<Self> {
        Self::with_ersatz(young, poisson, DEFAULT_ERSATZ)
    }

    pub fn with_ersatz(young: f64, poisson: f64, ersatz: f64) -> Result<Self> {
        if !(young > 0.0 && young.is_finite()) {
            return Err(Error::invalid("Young's modulus must be positive"));
        }
        if !(0.0..0.5).contains(&poisson) {
            return Err(Error::invalid("Poisson ratio must lie in [0, 0.5)"));
        }
        if !(ersatz > 0.0 && ersatz < 1e-2) {
            return Err(Error::invalid("ersatz factor must lie in (0, 0.01)"));
        }
        Ok(Material {
            young,
            poisson,
            ersatz,
        })
    }
}

/// Mesh node at grid corner `(i, j)`, `0 <= i <= nx`, `0 <= j <= ny`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Node {
    pub i: usize,
    pub j: usize,
}

impl Node {
    pub const fn new(i: usize, j: usize) -> Self {
        Node { i, j }
    }
}

impl Grid {
    /// World position of mesh node `(i, j)` (cell corners).
    pub fn node_position(&self, node: Node) -> [f64; 2] {
        let o = self.origin();
        let h = self.h();
        [
            o[0] - 0.5 * h + h * node.i as f64,
            o[1] - 0.5 * h + h * node.j as f64,
        ]
    }

    pub fn nearest_node(&self, p: [f64; 2]) -> Option<Node> {
        let o = self.origin();
        let h = self.h();
        let fi = libm::round((p[0] - (o[0] - 0.5 * h)) / h);
        let fj = libm::round((p[1] - (o[1] - 0.5 * h)) / h);
        if fi < 0.0 || fj < 0.0 || fi > self.nx() as f64 || fj > self.ny() as f64 {
            return None;
        }
        Some(Node::new(fi as usize, fj as usize))
    }

    /// Every mesh node, `j`-major.
    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        (0..=self.ny()).flat_map(move |j| (0..=self.nx()).map(move |i| Node::new(i, j)))
    }

    /// Cells sharing the corner `node`.
    pub fn cells_around(&self, node: Node) -> impl Iterator<Item = (usize, usize)> + '_ {
        [(0isize, 0isize), (-1, 0), (0, -1), (-1, -1)]
            .into_iter()
            .filter_map(move |(di, dj)| {
                let i = node.i as isize + di;
                let j = node.j as isize + dj;
                self.checked(i, j).map(|_| (i as usize, j as usize))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Restraint {
    pub node: Node,
    pub fix_x: bool,
    pub fix_y: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Load {
    pub node: Node,
    pub force: [f64; 2],
}

/// Homogeneous Dirichlet restraints and nodal forces.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundaryConditions {
    pub restraints: Vec<Restraint>,
    pub loads: Vec<Load>,
}

impl BoundaryConditions {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fix(&mut self, node: Node, fix_x: bool, fix_y: bool) -> &mut Self {
        self.restraints.push(Restraint { node, fix_x, fix_y });
        self
    }

    pub fn load(&mut self, node: Node, force: [f64; 2]) -> &mut Self {
        self.loads.push(Load { node, force });
        self
    }

    /// Restrains every node whose world position satisfies `pred`.
    pub fn fix_where(
        &mut self,
        grid: &Grid,
        fix_x: bool,
        fix_y: bool,
        pred: impl Fn([f64; 2]) -> bool,
    ) -> &mut Self {
        for n in grid.nodes() {
            if pred(grid.node_position(n)) {
                self.fix(n, fix_x, fix_y);
            }
        }
        self
    }

    /// Splits `total` evenly over `nodes` (nodal lumping of a surface load).
    pub fn distribute(&mut self, nodes: &[Node], total: [f64; 2]) -> &mut Self {
        if nodes.is_empty() {
            return self;
        }
        let s = 1.0 / nodes.len() as f64;
        for &n in nodes {
            self.load(n, [total[0] * s, total[1] * s]);
        }
        self
    }

    pub fn has_restraint(&self) -> bool {
        self.restraints.iter().any(|r| r.fix_x || r.fix_y)
    }

    pub fn total_load(&self) -> [f64; 2] {
        self.loads
            .iter()
            .fold([0.0, 0.0], |a, l| [a[0] + l.force[0], a[1] + l.force[1]])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeaResult {
    grid: Grid,
    /// Per node, `j`-major like [`Grid::nodes`].
    displacement: Vec<[f64; 2]>,
    compliance: f64,
    strain_energy: f64,
    energy_density: ScalarField,
    solid_energy_density: ScalarField,
    max_deflection: f64,
    void_energy_fraction: f64,
}

impl FeaResult {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn displacement(&self, node: Node) -> [f64; 2] {
        self.displacement[node.j * (self.grid.nx() + 1) + node.i]
    }

    pub fn displacements(&self) -> &[[f64; 2]] {
        &self.displacement
    }

    /// `f . u`.
    pub fn compliance(&self) -> f64 {
        self.compliance
    }

    /// Total strain energy including the ersatz cells; `compliance / 2`.
    pub fn strain_energy(&self) -> f64 {
        self.strain_energy
    }

    /// Strain energy per unit area on material cells, zero on void cells.
    pub fn energy_density(&self) -> &ScalarField {
        &self.energy_density
    }

    /// Energy density each cell would carry if it were solid, evaluated on
    /// the computed displacement field. Equals [`FeaResult::energy_density`]
    /// on material cells.
    pub fn solid_energy_density(&self) -> &ScalarField {
        &self.solid_energy_density
    }

    /// Largest nodal displacement magnitude over nodes touching material.
    pub fn max_deflection(&self) -> f64 {
        self.max_deflection
    }

    /// Share of the strain energy stored in void cells. Close to one when
    /// the load is not connected to the restraints through material.
    pub fn void_energy_fraction(&self) -> f64 {
        self.void_energy_fraction
    }

    pub fn load_path_broken(&self) -> bool {
        self.void_energy_fraction > 0.5
    }
}

/// Free-function forms matching the other solver entry points.
pub fn compliance_of(result: &FeaResult) -> f64 {
    result.compliance()
}

pub fn max_displacement(result: &FeaResult) -> f64 {
    result.max_deflection()
}

/// Unit-modulus Q4 plane-stress stiffness of a square cell (independent of
/// its size), local node order counter-clockwise from the lower-left corner.
pub fn element_stiffness(poisson: f64) -> [[f64; 8]; 8] {
    let nu = poisson;
    let c = 1.0 / (1.0 - nu * nu);
    let d = [
        [c, c * nu, 0.0],
        [c * nu, c, 0.0],
        [0.0, 0.0, c * 0.5 * (1.0 - nu)],
    ];
    let corners = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];
    let g = 1.0 / libm::sqrt(3.0);
    let mut ke = [[0.0; 8]; 8];
    for &(xi, eta) in &[(-g, -g), (g, -g), (g, g), (-g, g)] {
        // derivatives in natural coordinates; for a square the Jacobian
        // factors cancel (dN/dx = 2/h dN/dxi, det J = h^2/4)
        let mut b = [[0.0; 8]; 3];
        for (a, &(xa, ya)) in corners.iter().enumerate() {
            let dx = 0.25 * xa * (1.0 + ya * eta);
            let dy = 0.25 * ya * (1.0 + xa * xi);
            b[0][2 * a] = dx;
            b[1][2 * a + 1] = dy;
            b[2][2 * a] = dy;
            b[2][2 * a + 1] = dx;
        }
        for p in 0..8 {
            for q in 0..8 {
                let mut s = 0.0;
                for r in 0..3 {
                    for t in 0..3 {
                        s += b[r][p] * d[r][t] * b[t][q];
                    }
                }
                ke[p][q] += s;
            }
        }
    }
    ke
}

/// Node and degree-of-freedom numbering for one grid.
#[derive(Debug, Clone, Copy)]
struct Numbering {
    nx: usize,
    ny: usize,
    /// Number along `j` first when the grid is wider than tall.
    column_major: bool,
}

impl Numbering {
    fn new(g: &Grid) -> Self {
        Numbering {
            nx: g.nx(),
            ny: g.ny(),
            column_major: g.nx() >= g.ny(),
        }
    }

    fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    fn node_id(&self, n: Node) -> usize {
        if self.column_major {
            n.i * (self.ny + 1) + n.j
        } else {
            n.j * (self.nx + 1) + n.i
        }
    }

    fn element_dofs(&self, i: usize, j: usize) -> [usize; 8] {
        let ns = [
            Node::new(i, j),
            Node::new(i + 1, j),
            Node::new(i + 1, j + 1),
            Node::new(i, j + 1),
        ];
        let mut d = [0; 8];
        for (a, n) in ns.iter().enumerate() {
            let id = self.node_id(*n);
            d[2 * a] = 2 * id;
            d[2 * a + 1] = 2 * id + 1;
        }
        d
    }

    fn bandwidth(&self) -> usize {
        let short = if self.column_major { self.ny } else { self.nx };
        // nodes (i, j) and (i + 1, j + 1) are short + 2 ids apart
        2 * (short + 2) + 1
    }
}

/// Symmetric banded matrix storing the lower band row by row.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    /// Entry `(r, c)`; zero outside the band.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (r, c) = if r >= c { (r, c) } else { (c, r) };
        if r - c > self.bw {
            0.0
        } else {
            self.data[r * (self.bw + 1) + (r - c)]
        }
    }

    #[inline]
    fn slot(&mut self, r: usize, c: usize) -> &mut f64 {
        debug_assert!(r >= c && r - c <= self.bw);
        &mut self.data[r * (self.bw + 1) + (r - c)]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            let lo = r.saturating_sub(self.bw);
            for c in lo..r {
                let a = self.data[r * (self.bw + 1) + (r - c)];
                y[r] += a * x[c];
                y[c] += a * x[r];
            }
            y[r] += self.data[r * (self.bw + 1)] * x[r];
        }
        y
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        (0..n)
            .map(|r| {
                let lower: f64 = (r.saturating_sub(bw)..=r)
                    .map(|c| self.data[r * w + (r - c)].abs())
                    .sum();
                let upper: f64 = (r + 1..=(r + bw).min(n - 1))
                    .map(|c| self.data[c * w + (c - r)].abs())
                    .sum();
                lower + upper
            })
            .fold(0.0, f64::max)
    }

    /// `A x - b` with compensated dot products, accurate to about twice
    /// the working precision.
    fn residual_compensated(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        (0..n)
            .map(|r| {
                let (mut s, mut comp) = two_sum(0.0, -b[r]);
                let mut add = |a: f64, v: f64| {
                    let p = a * v;
                    let q = libm::fma(a, v, -p);
                    let (hi, lo) = two_sum(s, p);
                    s = hi;
                    comp += lo + q;
                };
                for c in r.saturating_sub(bw)..=r {
                    add(self.data[r * w + (r - c)], x[c]);
                }
                for c in r + 1..=(r + bw).min(n - 1) {
                    add(self.data[c * w + (c - r)], x[c]);
                }
                s + comp
            })
            .collect()
    }

    /// In-place `L L^T` factorisation; the band then holds `L`.
    fn cholesky(&mut self) -> Result<()> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for j in 0..n {
            let lo = j.saturating_sub(bw);
            let diag0 = self.data[j * w];
            let mut s = diag0;
            for k in lo..j {
                let l = self.data[j * w + (j - k)];
                s -= l * l;
            }
            if !(s > PIVOT_TOL * diag0.abs()) || !(s > 0.0) {
                return Err(Error::Singular { dof: j });
            }
            let ljj = libm::sqrt(s);
            self.data[j * w] = ljj;
            let hi = (j + bw).min(n - 1);
            for i in j + 1..=hi {
                let lo_i = i.saturating_sub(bw);
                let mut s = self.data[i * w + (i - j)];
                for k in lo_i.max(lo)..j {
                    s -= self.data[i * w + (i - k)] * self.data[j * w + (j - k)];
                }
                self.data[i * w + (i - j)] = s / ljj;
            }
        }
        Ok(())
    }

    fn cholesky_solve(&self, b: &mut [f64]) {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        for i in 0..n {
            let mut s = b[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.data[i * w + (i - k)] * b[k];
            }
            b[i] = s / self.data[i * w];
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for r in i + 1..=(i + bw).min(n - 1) {
                s -= self.data[r * w + (r - i)] * b[r];
            }
            b[i] = s / self.data[i * w];
        }
    }
}

/// The assembled system `K u = f` with restraints applied (restrained rows
/// and columns replaced by the identity).
#[derive(Debug, Clone)]
pub struct StiffnessSystem {
    grid: Grid,
    numbering_column_major: bool,
    matrix: BandMatrix,
    rhs: Vec<f64>,
    fixed: Vec<bool>,
}

impl StiffnessSystem {
    pub fn matrix(&self) -> &BandMatrix {
        &self.matrix
    }

    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    pub fn n_dofs(&self) -> usize {
        self.matrix.dim()
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed[dof]
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Global dof of `node` along `axis` (0 = x, 1 = y).
    pub fn dof(&self, node: Node, axis: usize) -> usize {
        let num = Numbering {
            nx: self.grid.nx(),
            ny: self.grid.ny(),
            column_major: self.numbering_column_major,
        };
        2 * num.node_id(node) + axis
    }
}

fn cell_scale(design: &IndicatorField, mat: &Material, k: usize) -> f64 {
    if design.at(k) {
        mat.young
    } else {
        mat.young * mat.ersatz
    }
}

/// Assembles the restrained system for `design`.
pub fn assemble(
    design: &IndicatorField,
    mat: &Material,
    bc: &BoundaryConditions,
) -> Result<StiffnessSystem> {
    let g = *design.grid();
    let num = Numbering::new(&g);
    let ndof = 2 * num.n_nodes();
    let bw = num.bandwidth().min(ndof.saturating_sub(1));
    let ke = element_stiffness(mat.poisson);
    let mut k = BandMatrix::zeros(ndof, bw);
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let s = cell_scale(design, mat, g.index(i, j));
            let dofs = num.element_dofs(i, j);
            for p in 0..8 {
                for q in 0..8 {
                    let (r, c) = (dofs[p], dofs[q]);
                    if r >= c {
                        *k.slot(r, c) += s * ke[p][q];
                    }
                }
            }
        }
    }
    let mut f = vec![0.0; ndof];
    for l in &bc.loads {
        check_node(&g, l.node)?;
        let id = num.node_id(l.node);
        f[2 * id] += l.force[0];
        f[2 * id + 1] += l.force[1];
    }
    let mut fixed = vec![false; ndof];
    for r in &bc.restraints {
        check_node(&g, r.node)?;
        let id = num.node_id(r.node);
        if r.fix_x {
            fixed[2 * id] = true;
        }
        if r.fix_y {
            fixed[2 * id + 1] = true;
        }
    }
    for d in 0..ndof {
        if !fixed[d] {
            continue;
        }
        let lo = d.saturating_sub(bw);
        for c in lo..d {
            *k.slot(d, c) = 0.0;
        }
        for r in d + 1..=(d + bw).min(ndof - 1) {
            *k.slot(r, d) = 0.0;
        }
        *k.slot(d, d) = 1.0;
        f[d] = 0.0;
    }
    Ok(StiffnessSystem {
        grid: g,
        numbering_column_major: num.column_major,
        matrix: k,
        rhs: f,
        fixed,
    })
}

fn check_node(g: &Grid, n: Node) -> Result<()> {
    if n.i > g.nx() || n.j > g.ny() {
        return Err(Error::invalid(
            "boundary-condition node lies outside the mesh",
        ));
    }
    Ok(())
}

/// Element-by-element product `K v` with the unrestrained stiffness, using
/// the full (unsymmetrised) element matrices.
pub fn apply_stiffness(design: &IndicatorField, mat: &Material, v: &[f64]) -> Vec<f64> {
    let g = *design.grid();
    let num = Numbering::new(&g);
    assert_eq!(v.len(), 2 * num.n_nodes());
    let ke = element_stiffness(mat.poisson);
    let mut out = vec![0.0; v.len()];
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let s = cell_scale(design, mat, g.index(i, j));
            let dofs = num.element_dofs(i, j);
            for p in 0..8 {
                let mut acc = 0.0;
                for q in 0..8 {
                    acc += ke[p][q] * v[dofs[q]];
                }
                out[dofs[p]] += s * acc;
            }
        }
    }
    out
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

/// Solves the plane-stress problem for `design`.
pub fn solve_elasticity(
    design: &IndicatorField,
    mat: &Material,
    bc: &BoundaryConditions,
) -> Result<FeaResult> {
    if design.is_empty() {
        return Err(Error::degenerate("design has no material"));
    }
    if !bc.has_restraint() {
        return Err(Error::Singular { dof: 0 });
    }
    let g = *design.grid();
    let system = assemble(design, mat, bc)?;
    let f = system.rhs.clone();
    let mut factor = system.matrix.clone();
    factor.cholesky()?;
    let mut u = f.clone();
    factor.cholesky_solve(&mut u);

    let fnorm = norm(&f);
    if fnorm > 0.0 {
        let mut r = residual(&system, &u);
        let mut rel = norm(&r) / fnorm;
        // iterative refinement on a compensated residual, kept only while
        // it helps
        for _ in 0..MAX_REFINE {
            if rel <= RESIDUAL_TOL {
                break;
            }
            let mut d = r.clone();
            factor.cholesky_solve(&mut d);
            let trial: Vec<f64> = u.iter().zip(&d).map(|(x, d)| x - d).collect();
            let trial_r = residual(&system, &trial);
            let trial_rel = norm(&trial_r) / fnorm;
            if !(trial_rel < rel) {
                break;
            }
            u = trial;
            r = trial_r;
            rel = trial_rel;
        }
        // even the correctly rounded solution leaves eps |K| |u|, which can
        // exceed the relative target when void regions move a lot
        let floor = ROUNDING_FLOOR * f64::EPSILON * system.matrix.norm_inf() * norm_inf(&u);
        if !(rel <= RESIDUAL_TOL || norm_inf(&r) <= floor) {
            return Err(Error::SolverTolerance { residual: rel });
        }
    }

    let num = Numbering::new(&g);
    let compliance: f64 = f.iter().zip(&u).map(|(a, b)| a * b).sum();
    let ke = element_stiffness(mat.poisson);
    let area = g.cell_area();
    let mut density = vec![0.0; g.len()];
    let mut solid_density = vec![0.0; g.len()];
    let mut total = 0.0;
    let mut void = 0.0;
    for j in 0..g.ny() {
        for i in 0..g.nx() {
            let k = g.index(i, j);
            let dofs = num.element_dofs(i, j);
            let mut quad = 0.0;
            for p in 0..8 {
                let mut acc = 0.0;
                for q in 0..8 {
                    acc += ke[p][q] * u[dofs[q]];
                }
                quad += u[dofs[p]] * acc;
            }
            let quad = quad.max(0.0);
            let solid = 0.5 * mat.young * quad;
            solid_density[k] = solid / area;
            if design.at(k) {
                density[k] = solid / area;
                total += solid;
            } else {
                let e = solid * mat.ersatz;
                total += e;
                void += e;
            }
        }
    }

    let mut displacement = Vec::with_capacity(num.n_nodes());
    let mut max_deflection: f64 = 0.0;
    for n in g.nodes() {
        let id = num.node_id(n);
        let d = [u[2 * id], u[2 * id + 1]];
        if g.cells_around(n).any(|(i, j)| design.get(i, j)) {
            max_deflection = max_deflection.max(libm::sqrt(d[0] * d[0] + d[1] * d[1]));
        }
        displacement.push(d);
    }

    let result = FeaResult {
        grid: g,
        displacement,
        compliance,
        strain_energy: total,
        energy_density: ScalarField::new(g, density)?,
        solid_energy_density: ScalarField::new(g, solid_density)?,
        max_deflection,
        void_energy_fraction: if total > 0.0 { void / total } else { 0.0 },
    };
    if !result.compliance.is_finite() {
        return Err(Error::degenerate("non-finite compliance"));
    }
    Ok(result)
}

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn residual(system: &StiffnessSystem, u: &[f64]) -> Vec<f64> {
    system.matrix.residual_compensated(u, &system.rhs)
}
