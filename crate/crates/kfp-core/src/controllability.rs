//! Control-theoretic layer: Kalman/hypoellipticity checks for Kolmogorov
//! operators in block form, admissible curves with square-integrable
//! controls, minimal-energy steering, and attainable-set membership.
//!
//! An admissible curve solves `dv/ds = omega(s)`, `dx/ds = v(s)`,
//! `dt/ds = -1` on `[0, T]`, so curves descend in time from their start
//! point; steering `z0` to `z1` requires `t1 < t0` and fixes `T = t0 - t1`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::group::{BoxKind, BoxSpec, GroupPoint};

/// Constant-coefficient Kolmogorov operator data: the diffusion matrix
/// `A_tilde` (symmetric non-negative, strictly positive top-left block) and
/// the drift matrix `B` of size N x N, with the optional block partition
/// (m_0, ..., m_kappa) of the staircase form.
#[derive(Debug, Clone)]
pub struct KolmogorovStructure {
    pub a_tilde: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub blocks: Option<Vec<usize>>,
}

impl KolmogorovStructure {
    pub fn new(a_tilde: DMatrix<f64>, b: DMatrix<f64>, blocks: Option<Vec<usize>>) -> Result<Self> {
        let n = a_tilde.nrows();
        if a_tilde.ncols() != n || b.nrows() != n || b.ncols() != n {
            return Err(CoreError::Validation(
                "A_tilde and B must be square matrices of equal size".into(),
            ));
        }
        check_symmetric(&a_tilde)?;
        let m0 = match &blocks {
            Some(bs) => {
                if bs.is_empty() || bs.iter().sum::<usize>() != n {
                    return Err(CoreError::Validation(format!(
                        "block sizes must sum to N = {n}"
                    )));
                }
                if bs.windows(2).any(|w| w[1] > w[0]) || *bs.last().unwrap() < 1 {
                    return Err(CoreError::Validation(
                        "block sizes must satisfy m_0 >= m_1 >= ... >= m_kappa >= 1".into(),
                    ));
                }
                bs[0]
            }
            None => infer_positive_block(&a_tilde)?,
        };
        let top = a_tilde.view((0, 0), (m0, m0)).into_owned();
        let eig = top.symmetric_eigenvalues();
        if eig.iter().any(|&l| l <= 0.0) {
            return Err(CoreError::Validation(format!(
                "top-left {m0}x{m0} block of A_tilde must be strictly positive"
            )));
        }
        Ok(Self { a_tilde, b, blocks })
    }

    /// The prototype kinetic structure in R^{2n}: A_tilde = diag(I_n, 0),
    /// B = [[0, 0], [I_n, 0]].
    pub fn galilean(n: usize) -> Self {
        let big_n = 2 * n;
        let mut a = DMatrix::zeros(big_n, big_n);
        let mut b = DMatrix::zeros(big_n, big_n);
        for j in 0..n {
            a[(j, j)] = 1.0;
            b[(n + j, j)] = 1.0;
        }
        Self {
            a_tilde: a,
            b,
            blocks: Some(vec![n, n]),
        }
    }

    pub fn dim(&self) -> usize {
        self.a_tilde.nrows()
    }

    /// exp(t B); exact termination for nilpotent B.
    pub fn exp_tb(&self, t: f64) -> DMatrix<f64> {
        matrix_exp(&(&self.b * t))
    }
}

impl Serialize for KolmogorovStructure {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("KolmogorovStructure", 4)?;
        st.serialize_field("N", &self.dim())?;
        st.serialize_field("A_tilde", &matrix_rows(&self.a_tilde))?;
        st.serialize_field("B", &matrix_rows(&self.b))?;
        st.serialize_field("blocks", &self.blocks)?;
        st.end()
    }
}

impl<'de> Deserialize<'de> for KolmogorovStructure {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        struct Wire {
            #[serde(rename = "N")]
            n: usize,
            #[serde(rename = "A_tilde")]
            a_tilde: Vec<Vec<f64>>,
            #[serde(rename = "B")]
            b: Vec<Vec<f64>>,
            #[serde(default)]
            blocks: Option<Vec<usize>>,
        }
        let w = Wire::deserialize(d)?;
        let a = rows_to_matrix(w.n, &w.a_tilde).map_err(serde::de::Error::custom)?;
        let b = rows_to_matrix(w.n, &w.b).map_err(serde::de::Error::custom)?;
        KolmogorovStructure::new(a, b, w.blocks).map_err(serde::de::Error::custom)
    }
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn rows_to_matrix(n: usize, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CoreError::Validation(format!("expected {n}x{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
}

fn check_symmetric(m: &DMatrix<f64>) -> Result<()> {
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-12 * scale {
                return Err(CoreError::Validation(
                    "matrix is not symmetric within 1e-12".into(),
                ));
            }
        }
    }
    Ok(())
}

fn infer_positive_block(a: &DMatrix<f64>) -> Result<usize> {
    let n = a.nrows();
    for m0 in (1..=n).rev() {
        let outside_zero = (0..n).all(|i| {
            (0..n).all(|j| (i < m0 && j < m0) || a[(i, j)].abs() <= 1e-12)
        });
        if !outside_zero {
            continue;
        }
        let top = a.view((0, 0), (m0, m0)).into_owned();
        if top.symmetric_eigenvalues().iter().all(|&l| l > 1e-12) {
            return Ok(m0);
        }
    }
    Err(CoreError::Validation(
        "A_tilde has no strictly positive leading block".into(),
    ))
}

/// The unique positive symmetric square root C with C^2 = A_tilde.
pub fn matrix_sqrt(a_tilde: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_symmetric(a_tilde)?;
    let sym = nalgebra::SymmetricEigen::new(a_tilde.clone());
    let mut roots = sym.eigenvalues.clone();
    for l in roots.iter_mut() {
        if *l < -1e-12 {
            return Err(CoreError::Validation(format!(
                "matrix is indefinite (eigenvalue {l})"
            )));
        }
        *l = l.max(0.0).sqrt();
    }
    let q = &sym.eigenvectors;
    Ok(q * DMatrix::from_diagonal(&roots) * q.transpose())
}

/// Numerical rank of the controllability matrix (C, BC, ..., B^{N-1} C).
///
/// The operator is hypoelliptic iff the result equals N. Singular values are
/// counted above `N * eps * sigma_max`.
pub fn kalman_rank(c: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<usize> {
    let n = c.nrows();
    if c.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(CoreError::Validation(
            "kalman_rank expects square matrices of equal size".into(),
        ));
    }
    let mut block = c.clone();
    let mut ctrl = DMatrix::zeros(n, n * n);
    for k in 0..n {
        ctrl.view_mut((0, k * n), (n, n)).copy_from(&block);
        block = b * &block;
    }
    let svals = ctrl.singular_values();
    let smax = svals.iter().cloned().fold(0.0, f64::max);
    let tol = n as f64 * f64::EPSILON * smax;
    Ok(svals.iter().filter(|&&s| s > tol).count())
}

/// Result of a staircase-structure scan of a drift matrix B.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum BlockStructure {
    Found {
        blocks: Vec<usize>,
        /// True iff B is exactly the staircase (all starred blocks vanish),
        /// i.e. the operator is homogeneous under the anisotropic dilations.
        homogeneous: bool,
    },
    NotFound,
}

/// Detects the basis-aligned staircase form of B: subdiagonal blocks B_j of
/// full row rank m_j, everything below them vanishing (<= 1e-12). Returns the
/// partition with the smallest admissible m_0 (maximal degeneracy), or
/// `NotFound`. Partitions with kappa = 0 (no subdiagonal block) never count.
pub fn detect_block_structure(b: &DMatrix<f64>) -> BlockStructure {
    let n = b.nrows();
    if b.ncols() != n || n == 0 {
        return BlockStructure::NotFound;
    }
    let tol = 1e-12;
    'outer: for m0 in 1..n {
        let mut blocks = vec![m0];
        let mut row = m0;
        let mut col = 0usize;
        let mut prev = m0;
        while row < n {
            let avail = n - row;
            let sub = b.view((row, col), (avail, prev));
            // m_j = index of the last non-vanishing row within the column block.
            let mut last_nonzero = None;
            for i in 0..avail {
                if (0..prev).any(|j| sub[(i, j)].abs() > tol) {
                    last_nonzero = Some(i);
                }
            }
            let m_j = match last_nonzero {
                None => continue 'outer,
                Some(i) => i + 1,
            };
            if m_j > prev {
                continue 'outer;
            }
            let blk = b.view((row, col), (m_j, prev)).into_owned();
            let svals = blk.singular_values();
            let smax = svals.iter().cloned().fold(0.0, f64::max);
            let rank = svals
                .iter()
                .filter(|&&s| s > prev.max(m_j) as f64 * f64::EPSILON * smax)
                .count();
            if rank != m_j {
                continue 'outer;
            }
            col += prev;
            row += m_j;
            prev = m_j;
            blocks.push(m_j);
        }
        // Homogeneity: nothing outside the subdiagonal blocks survives.
        let mut staircase = DMatrix::zeros(n, n);
        let mut r = blocks[0];
        let mut c0 = 0usize;
        for w in blocks.windows(2) {
            let (mp, mj) = (w[0], w[1]);
            staircase
                .view_mut((r, c0), (mj, mp))
                .copy_from(&b.view((r, c0), (mj, mp)));
            c0 += mp;
            r += mj;
        }
        let homogeneous = (&staircase - b).amax() <= tol;
        return BlockStructure::Found { blocks, homogeneous };
    }
    BlockStructure::NotFound
}

/// Matrix exponential by scaling-and-squaring with a Taylor series; the
/// series terminates exactly for nilpotent inputs.
pub fn matrix_exp(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let norm = m.amax() * n as f64;
    let squarings = if norm > 0.25 {
        (norm / 0.25).log2().ceil() as u32
    } else {
        0
    };
    let scaled = m / 2f64.powi(squarings as i32);
    let mut term = DMatrix::identity(n, n);
    let mut sum = DMatrix::identity(n, n);
    for k in 1..=40 {
        term = &term * &scaled / k as f64;
        let t_amax = term.amax();
        sum += &term;
        if t_amax == 0.0 || t_amax < 1e-300 {
            break;
        }
        if t_amax < 1e-18 * sum.amax() {
            break;
        }
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

/// Sign convention of the position equation along a curve.
///
/// `Forward` is the steering convention dx/ds = +v. `Backward` is dx/ds = -v:
/// as s increases the curve descends in time, so its position then tracks the
/// transport characteristic x = x0 + (t - t0) v of the kinetic operator —
/// the orientation in which invariant boxes stack into Harnack chains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum Orientation {
    #[default]
    Forward,
    Backward,
}

impl Orientation {
    fn sign(self) -> f64 {
        match self {
            Orientation::Forward => 1.0,
            Orientation::Backward => -1.0,
        }
    }
}

/// An admissible curve sampled on a uniform grid: start point, horizon T,
/// parameters s_k, controls omega(s_k) in R^n and integrated states.
///
/// States are produced by trapezoidal integration of v = v0 + int omega,
/// x = x0 +- int v (per the orientation), and carry t(s_k) = t0 - s_k
/// exactly.
#[derive(Debug, Clone, Serialize)]
pub struct ControlCurve {
    pub start: GroupPoint,
    pub horizon: f64,
    pub s: Vec<f64>,
    pub controls: Vec<Vec<f64>>,
    pub states: Vec<GroupPoint>,
    pub orientation: Orientation,
}

impl ControlCurve {
    pub fn n(&self) -> usize {
        self.start.n()
    }

    pub fn samples(&self) -> usize {
        self.s.len()
    }

    pub fn endpoint(&self) -> &GroupPoint {
        self.states.last().expect("curve has at least two samples")
    }

    pub fn step(&self) -> f64 {
        self.s[1] - self.s[0]
    }
}

/// Trapezoidal integration of the admissible system from `start` under the
/// sampled controls (K+1 uniform samples over [0, T]).
pub fn integrate_curve(start: &GroupPoint, controls: &[Vec<f64>], horizon: f64) -> Result<ControlCurve> {
    integrate_curve_oriented(start, controls, horizon, Orientation::Forward)
}

/// [`integrate_curve`] with an explicit position-equation orientation.
pub fn integrate_curve_oriented(
    start: &GroupPoint,
    controls: &[Vec<f64>],
    horizon: f64,
    orientation: Orientation,
) -> Result<ControlCurve> {
    if controls.len() < 2 {
        return Err(CoreError::Validation(
            "need at least 2 control samples".into(),
        ));
    }
    let k = controls.len() - 1;
    let s: Vec<f64> = (0..=k).map(|i| horizon * i as f64 / k as f64).collect();
    integrate_curve_on_grid_oriented(start, &s, controls, orientation)
}

/// Same as [`integrate_curve`] but with an explicit grid, which must be
/// uniform and start at 0.
pub fn integrate_curve_on_grid(
    start: &GroupPoint,
    s: &[f64],
    controls: &[Vec<f64>],
) -> Result<ControlCurve> {
    integrate_curve_on_grid_oriented(start, s, controls, Orientation::Forward)
}

fn integrate_curve_on_grid_oriented(
    start: &GroupPoint,
    s: &[f64],
    controls: &[Vec<f64>],
    orientation: Orientation,
) -> Result<ControlCurve> {
    if s.len() != controls.len() || s.len() < 2 {
        return Err(CoreError::Validation(
            "grid and control sample counts must match and be >= 2".into(),
        ));
    }
    let horizon = *s.last().unwrap();
    if !(horizon > 0.0) || s[0] != 0.0 {
        return Err(CoreError::Validation(
            "grid must start at 0 with positive horizon".into(),
        ));
    }
    let h = s[1] - s[0];
    if s.windows(2)
        .any(|w| (w[1] - w[0] - h).abs() > 1e-12 * horizon.max(1.0))
    {
        return Err(CoreError::Validation("grid must be uniform".into()));
    }
    let n = start.n();
    if controls.iter().any(|w| w.len() != n) {
        return Err(CoreError::DimensionMismatch {
            left: n,
            right: controls.iter().map(|w| w.len()).find(|&l| l != n).unwrap_or(n),
        });
    }

    let mut states = Vec::with_capacity(s.len());
    let mut v = start.v().to_vec();
    let mut x = start.x().to_vec();
    states.push(start.clone());
    let mut prev_v = v.clone();
    for k in 1..s.len() {
        let dt = s[k] - s[k - 1];
        for j in 0..n {
            v[j] += 0.5 * dt * (controls[k - 1][j] + controls[k][j]);
            x[j] += 0.5 * dt * (prev_v[j] + v[j]);
        }
        prev_v.copy_from_slice(&v);
        states.push(GroupPoint::new(v.clone(), x.clone(), start.t() - s[k])?);
    }
    Ok(ControlCurve {
        start: start.clone(),
        horizon,
        s: s.to_vec(),
        controls: controls.to_vec(),
        states,
    })
}

/// Trapezoidal value of the control energy `int_a^b |omega|^2` with linear
/// interpolation at the window ends.
pub fn control_energy(curve: &ControlCurve, a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return Err(CoreError::IntervalOrder { a, b });
    }
    if a < -1e-12 || b > curve.horizon * (1.0 + 1e-12) + 1e-12 {
        return Err(CoreError::Validation(format!(
            "window [{a}, {b}] exceeds the curve horizon {}",
            curve.horizon
        )));
    }
    let sq = |w: &[f64]| -> f64 { w.iter().map(|c| c * c).sum() };
    let h = curve.step();
    let value_at = |s: f64| -> f64 {
        let pos = (s / h).clamp(0.0, (curve.samples() - 1) as f64);
        let i = (pos.floor() as usize).min(curve.samples() - 2);
        let frac = pos - i as f64;
        let w: Vec<f64> = (0..curve.n())
            .map(|j| curve.controls[i][j] * (1.0 - frac) + curve.controls[i + 1][j] * frac)
            .collect();
        sq(&w)
    };
    let i0 = (a / h).ceil() as usize;
    let i1 = (b / h).floor() as usize;
    let mut total = 0.0;
    if i0 > i1 || i1 >= curve.samples() {
        // Window inside a single cell.
        return Ok(0.5 * (value_at(a) + value_at(b)) * (b - a));
    }
    let s0 = i0 as f64 * h;
    let s1 = i1 as f64 * h;
    if a < s0 {
        total += 0.5 * (value_at(a) + sq(&curve.controls[i0])) * (s0 - a);
    }
    for i in i0..i1 {
        total += 0.5 * h * (sq(&curve.controls[i]) + sq(&curve.controls[i + 1]));
    }
    if b > s1 {
        total += 0.5 * (sq(&curve.controls[i1]) + value_at(b)) * (b - s1);
    }
    Ok(total)
}

/// The control of least energy steering z0 to z1, affine in s per coordinate.
///
/// Two moment constraints per coordinate (int omega = dv and
/// int (T - s) omega = dx - drift) force omega_j(s) = alpha_j + beta_j (T - s);
/// the closed form is validated against a discretized quadratic program in
/// the test suite.
#[derive(Debug, Clone, Serialize)]
pub struct MinimalEnergyControl {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub horizon: f64,
}

impl MinimalEnergyControl {
    pub fn omega(&self, s: f64) -> Vec<f64> {
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| a + b * (self.horizon - s))
            .collect()
    }

    pub fn energy(&self) -> f64 {
        let t = self.horizon;
        self.alpha
            .iter()
            .zip(&self.beta)
            .map(|(a, b)| a * a * t + a * b * t * t + b * b * t * t * t / 3.0)
            .sum()
    }

    /// Sample the control on a uniform grid of K+1 points.
    pub fn sample(&self, k: usize) -> Vec<Vec<f64>> {
        (0..=k)
            .map(|i| self.omega(self.horizon * i as f64 / k as f64))
            .collect()
    }

    /// Integrated curve from `z0`, with the endpoint polished onto the
    /// target of the discrete dynamics (see [`polish_endpoint`]).
    pub fn curve(&self, z0: &GroupPoint, z1: &GroupPoint, k: usize) -> Result<ControlCurve> {
        let curve = integrate_curve(z0, &self.sample(k), self.horizon)?;
        polish_endpoint(&curve, z1)
    }
}

/// Minimal-energy steering from z0 to z1; requires t1 < t0.
pub fn minimal_energy_control(
    z0: &GroupPoint,
    z1: &GroupPoint,
) -> Result<(MinimalEnergyControl, f64)> {
    if z0.n() != z1.n() {
        return Err(CoreError::DimensionMismatch {
            left: z0.n(),
            right: z1.n(),
        });
    }
    let t = z0.t() - z1.t();
    if !(t > 0.0) {
        return Err(CoreError::TimeDirection {
            t0: z0.t(),
            t1: z1.t(),
        });
    }
    let n = z0.n();
    let mut alpha = vec![0.0; n];
    let mut beta = vec![0.0; n];
    for j in 0..n {
        let dv = z1.v()[j] - z0.v()[j];
        let dx = z1.x()[j] - z0.x()[j] - z0.v()[j] * t;
        alpha[j] = 4.0 * dv / t - 6.0 * dx / (t * t);
        beta[j] = -6.0 * dv / (t * t) + 12.0 * dx / (t * t * t);
    }
    let ctrl = MinimalEnergyControl {
        alpha,
        beta,
        horizon: t,
    };
    let e = ctrl.energy();
    Ok((ctrl, e))
}

/// Adds the affine correction `a + b (T - s)` to the sampled controls so that
/// the *discrete* trapezoidal dynamics hit `target` exactly (the discrete
/// endpoint map is linear in the controls, so one 2x2 solve per coordinate
/// suffices).
pub fn polish_endpoint(curve: &ControlCurve, target: &GroupPoint) -> Result<ControlCurve> {
    let n = curve.n();
    let k = curve.samples() - 1;
    let t = curve.horizon;
    let h = curve.step();
    // Discrete moments of the basis controls 1 and (T - s) under cumulative
    // trapezoidal integration: m1* feed v(T), m2* feed x(T).
    let ones = vec![vec![1.0]; k + 1];
    let ramp: Vec<Vec<f64>> = (0..=k).map(|i| vec![t - i as f64 * h]).collect();
    let origin = GroupPoint::new(vec![0.0], vec![0.0], 0.0)?;
    let c1 = integrate_curve(&origin, &ones, t)?;
    let c2 = integrate_curve(&origin, &ramp, t)?;
    let g = nalgebra::Matrix2::new(
        c1.endpoint().v()[0],
        c2.endpoint().v()[0],
        c1.endpoint().x()[0],
        c2.endpoint().x()[0],
    );
    let inv = g
        .try_inverse()
        .ok_or_else(|| CoreError::Validation("degenerate endpoint correction".into()))?;

    let mut controls = curve.controls.clone();
    let end = curve.endpoint();
    for j in 0..n {
        let rv = target.v()[j] - end.v()[j];
        let rx = target.x()[j] - end.x()[j];
        let corr = inv * nalgebra::Vector2::new(rv, rx);
        for (i, w) in controls.iter_mut().enumerate() {
            w[j] += corr[0] + corr[1] * (t - i as f64 * h);
        }
    }
    integrate_curve(&curve.start, &controls, t)
}

/// Closed-form attainable-set membership for the unit box from the origin:
/// true iff |x_j| <= |t| for every j. The point must lie in the closure of
/// the unit box.
pub fn attainable_unit_box(z: &GroupPoint) -> Result<bool> {
    let inside_closure = z.v().iter().all(|c| c.abs() <= 1.0)
        && z.x().iter().all(|c| c.abs() <= 1.0)
        && (-1.0..=0.0).contains(&z.t());
    if !inside_closure {
        return Err(CoreError::OutOfDomain {
            what: format!("point {:?} outside the closure of the unit box", z.coords()),
        });
    }
    Ok(z.x().iter().all(|&xj| xj.abs() <= z.t().abs()))
}

/// Outcome of an attainability query.
#[derive(Debug, Clone, Serialize)]
pub enum Attainability {
    Reachable { witness: ControlCurve, energy: f64 },
    Unreachable,
    Undecided,
}

impl Attainability {
    pub fn label(&self) -> &'static str {
        match self {
            Attainability::Reachable { .. } => "REACHABLE",
            Attainability::Unreachable => "UNREACHABLE",
            Attainability::Undecided => "UNDECIDED",
        }
    }
}

/// Search parameters for [`attainable_membership`]. The seed drives the
/// deterministic low-discrepancy waypoint sampling and is echoed in outputs.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SearchBudget {
    pub curve_samples: usize,
    pub max_waypoints: usize,
    pub candidates_per_level: usize,
    pub seed: u64,
    pub boundary_tol: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self {
            curve_samples: 4096,
            max_waypoints: 2,
            candidates_per_level: 24,
            seed: 42,
            boundary_tol: 1e-6,
        }
    }
}

fn is_origin(z: &GroupPoint) -> bool {
    z.coords().iter().all(|&c| c == 0.0)
}

fn is_unit_box(domain: &BoxSpec) -> bool {
    domain.kind == BoxKind::UnitQ && domain.radius == 1.0 && is_origin(&domain.base)
}

/// Checks that every sampled state lies in the domain; the start state may
/// sit on the closure (attainability bases are allowed on the boundary).
fn curve_inside(domain: &BoxSpec, curve: &ControlCurve, margin: f64) -> Result<bool> {
    for (i, state) in curve.states.iter().enumerate() {
        let eps = if i == 0 { 1e-12 } else { -margin };
        if !domain.contains_with_tolerance(state, eps)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Semi-decision procedure for attainability of `z` from `z0` inside an open
/// box domain.
///
/// REACHABLE answers always carry a verified witness curve (endpoint on the
/// target to machine accuracy, all sampled states inside the domain).
/// UNREACHABLE is certified only where the closed-form characterization
/// applies (unit box, origin base); everything else falls back to UNDECIDED.
pub fn attainable_membership(
    domain: &BoxSpec,
    z0: &GroupPoint,
    z: &GroupPoint,
    budget: &SearchBudget,
) -> Result<Attainability> {
    if z.t() >= z0.t() {
        return Err(CoreError::TimeDirection {
            t0: z0.t(),
            t1: z.t(),
        });
    }
    if !domain.contains_with_tolerance(z0, 1e-12)? {
        return Err(CoreError::OutOfDomain {
            what: "base point outside the domain closure".into(),
        });
    }
    if !domain.contains(z)? {
        return Err(CoreError::OutOfDomain {
            what: "target point outside the open domain".into(),
        });
    }

    if is_unit_box(domain) && is_origin(z0) {
        // Closed-form certificate: the attainable set is {|x_j| <= |t|}.
        let sigma = z.t().abs();
        let worst = z
            .x()
            .iter()
            .map(|&xj| xj.abs() - sigma)
            .fold(f64::NEG_INFINITY, f64::max);
        if worst > budget.boundary_tol {
            return Ok(Attainability::Unreachable);
        }
        if worst > -budget.boundary_tol {
            return Ok(Attainability::Undecided);
        }
        if let Some(curve) = plateau_witness(z, budget.curve_samples)? {
            if curve_inside(domain, &curve, 0.0)?
                && curve.endpoint().max_abs_diff(z) <= 1e-6
            {
                let energy = control_energy(&curve, 0.0, curve.horizon)?;
                return Ok(Attainability::Reachable {
                    witness: curve,
                    energy,
                });
            }
        }
        return Ok(Attainability::Undecided);
    }

    // General case: minimal-energy curve plus piecewise-affine detours
    // through up to `max_waypoints` interior waypoints, all verified by
    // sampled membership.
    let mut candidates: Vec<Vec<GroupPoint>> = vec![vec![]];
    let halton_dims = 2 * z0.n() + 1;
    let mut halton_index = budget.seed % 1024 + 1;
    for level in 1..=budget.max_waypoints {
        for _ in 0..budget.candidates_per_level {
            let mut points = Vec::with_capacity(level);
            for w in 0..level {
                let u = halton_point(halton_index, halton_dims);
                halton_index += 1;
                let frac = (w + 1) as f64 / (level + 1) as f64;
                if let Some(p) = waypoint_between(domain, z0, z, &u, frac) {
                    points.push(p);
                }
            }
            if points.len() == level {
                candidates.push(points);
            }
        }
    }

    let verified: Vec<(usize, ControlCurve, f64)> = candidates
        .par_iter()
        .enumerate()
        .filter_map(|(idx, ways)| {
            let curve = steer_through(z0, ways, z, budget.curve_samples).ok()?;
            let inside = curve_inside(domain, &curve, 0.0).ok()?;
            if inside && curve.endpoint().max_abs_diff(z) <= 1e-6 {
                let energy = control_energy(&curve, 0.0, curve.horizon).ok()?;
                Some((idx, curve, energy))
            } else {
                None
            }
        })
        .collect();

    // Deterministic merge: lowest energy wins, ties broken by generation order.
    let best = verified.into_iter().min_by(|a, b| {
        a.2.partial_cmp(&b.2)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    Ok(match best {
        Some((_, witness, energy)) => Attainability::Reachable { witness, energy },
        None => Attainability::Undecided,
    })
}

/// Witness construction for interior points of the attainable cone of the
/// unit box: per coordinate, ramp the velocity to a plateau w chosen so the
/// integrated displacement lands on x, then ramp to the target velocity.
fn plateau_witness(z: &GroupPoint, samples: usize) -> Result<Option<ControlCurve>> {
    let n = z.n();
    let sigma = z.t().abs();
    let margin = z
        .x()
        .iter()
        .map(|&xj| 1.0 - xj.abs() / sigma)
        .fold(f64::INFINITY, f64::min);
    if margin <= 0.0 {
        return Ok(None);
    }
    let tau = sigma * (margin / 4.0).min(0.25);
    let mut plateaus = vec![0.0; n];
    for j in 0..n {
        let w = (z.x()[j] - tau * z.v()[j] / 2.0) / (sigma - tau);
        if w.abs() >= 1.0 {
            return Ok(None);
        }
        plateaus[j] = w;
    }
    // Sample the piecewise-constant ramp controls; the endpoint polish
    // afterwards absorbs the sampling error exactly.
    let k = samples;
    let h = sigma / k as f64;
    let mut controls = Vec::with_capacity(k + 1);
    for i in 0..=k {
        let s = i as f64 * h;
        let mut w = vec![0.0; n];
        for j in 0..n {
            w[j] = if s < tau {
                plateaus[j] / tau
            } else if s < sigma - tau {
                0.0
            } else {
                (z.v()[j] - plateaus[j]) / tau
            };
        }
        controls.push(w);
    }
    let origin = GroupPoint::identity(n);
    let curve = integrate_curve(&origin, &controls, sigma)?;
    Ok(Some(polish_endpoint(&curve, z)?))
}

/// Deterministic Halton point in [0,1]^d.
fn halton_point(index: u64, d: usize) -> Vec<f64> {
    const PRIMES: [u64; 9] = [2, 3, 5, 7, 11, 13, 17, 19, 23];
    (0..d)
        .map(|j| {
            let base = PRIMES[j % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

/// Maps a unit-cube sample to an interior waypoint at the time fraction
/// `frac` between z0 and z, shrunk toward the domain's drift center.
fn waypoint_between(
    domain: &BoxSpec,
    z0: &GroupPoint,
    z: &GroupPoint,
    u: &[f64],
    frac: f64,
) -> Option<GroupPoint> {
    let n = z0.n();
    let t = z0.t() + (z.t() - z0.t()) * frac;
    let mut v = vec![0.0; n];
    let mut x = vec![0.0; n];
    for j in 0..n {
        // Blend between the chord and a scattered offset, then verify.
        let chord_v = z0.v()[j] + (z.v()[j] - z0.v()[j]) * frac;
        let chord_x = z0.x()[j] + (z.x()[j] - z0.x()[j]) * frac;
        v[j] = chord_v + (u[j] - 0.5) * 0.5;
        x[j] = chord_x + (u[n + j] - 0.5) * 0.25;
    }
    let p = GroupPoint::new(v, x, t).ok()?;
    match domain.contains_with_tolerance(&p, -1e-9) {
        Ok(true) => Some(p),
        _ => None,
    }
}

/// Concatenates minimal-energy segments through the waypoints onto one
/// uniform control grid, then polishes the endpoint.
fn steer_through(
    z0: &GroupPoint,
    waypoints: &[GroupPoint],
    z1: &GroupPoint,
    samples: usize,
) -> Result<ControlCurve> {
    let mut legs = Vec::with_capacity(waypoints.len() + 1);
    let mut from = z0.clone();
    for w in waypoints.iter().chain(std::iter::once(z1)) {
        let (ctrl, _) = minimal_energy_control(&from, w)?;
        legs.push((from.t(), ctrl));
        from = w.clone();
    }
    let total = z0.t() - z1.t();
    let k = samples;
    let h = total / k as f64;
    let n = z0.n();
    let mut controls = Vec::with_capacity(k + 1);
    for i in 0..=k {
        let s = i as f64 * h;
        let t_here = z0.t() - s;
        // Find the active leg (legs are ordered by decreasing start time).
        let mut w = vec![0.0; n];
        for (start_t, ctrl) in legs.iter().rev() {
            if t_here <= *start_t {
                let local_s = (start_t - t_here).min(ctrl.horizon);
                w = ctrl.omega(local_s);
                break;
            }
        }
        controls.push(w);
    }
    let curve = integrate_curve(z0, &controls, total)?;
    polish_endpoint(&curve, z1)
}
