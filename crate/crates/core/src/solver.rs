//! Direct solution of the coupled system, with an optional local elimination of the curvature.

use std::cell::RefCell;
use std::time::Instant;

use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::cholesky::ldlt::factor::LdltRegularization;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::cholesky::{
    factorize_symbolic_cholesky, CholeskySymbolicParams, SymbolicCholesky, SymmetricOrdering,
};
use faer::sparse::{SparseColMat, SparseColMatRef, SymbolicSparseColMatRef, Triplet};
use faer::{Conj, Mat, Par, Side};

use crate::assembly::{apply_dirichlet, CoupledSystem, GlobalSystem, Scheme, SparseBlock};
use crate::error::{Error, Result};
use crate::geometry::{rotate_cw, Point};

pub const DEFAULT_TOL: f64 = 1e-10;

/// Maximum number of iterative refinement sweeps after the factorization.
const MAX_REFINE: usize = 3;

#[derive(Clone, Debug)]
pub struct Solution {
    /// Every velocity dof, boundary values included.
    pub velocity: Vec<f64>,
    /// Full pressure numbering, normalized to zero mean.
    pub pressure: Vec<f64>,
    /// Scalar curvature per vertex (main scheme) or interleaved curvature vectors.
    pub curvature: Vec<f64>,
    /// `X^{m+1} - X^m` per interface vertex.
    pub displacement: Vec<Point>,
}

#[derive(Clone, Debug, Default)]
pub struct SolveReport {
    pub residual_momentum: f64,
    pub residual_divergence: f64,
    pub residual_position: f64,
    pub residual_curvature: f64,
    pub relative_residual: f64,
    pub refinement_steps: usize,
    /// Pressure constant fixed by pinning and removed by mean-zero normalization.
    pub null_space_projection: bool,
    pub eliminated: bool,
    /// Elimination was requested but the monolithic path was used.
    pub fallback: bool,
    pub wall_time: f64,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn matrix_inf_norm(m: &SparseBlock) -> f64 {
    let mut rows = vec![0.0; m.nrows];
    for &(r, _, v) in &m.entries {
        rows[r] += v.abs();
    }
    inf_norm(&rows)
}

fn residual(m: &SparseBlock, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = b.to_vec();
    for &(i, j, v) in &m.entries {
        r[i] -= v * x[j];
    }
    r
}

/// Sparse LU solve with iterative refinement; returns the solution and refinement count.
pub fn sparse_solve(m: &SparseBlock, b: &[f64], tol: f64) -> Result<(Vec<f64>, usize, f64)> {
    let n = m.nrows;
    if n != m.ncols || b.len() != n {
        return Err(Error::Contract("sparse_solve needs a square system".into()));
    }
    if n == 0 {
        return Ok((Vec::new(), 0, 0.0));
    }
    let trip: Vec<Triplet<usize, usize, f64>> = m
        .entries
        .iter()
        .map(|&(r, c, v)| Triplet::new(r, c, v))
        .collect();
    let a = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
        .map_err(|e| Error::Solver(format!("matrix construction failed: {e:?}")))?;
    let lu = a
        .sp_lu()
        .map_err(|e| Error::Solver(format!("sparse LU failed: {e:?}")))?;
    let mut solve = |r: &[f64]| {
        let mut d = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
        lu.solve_in_place(d.as_mut());
        (0..n).map(|i| d[(i, 0)]).collect::<Vec<f64>>()
    };
    refine(m, b, tol, &mut solve)
}

/// Compressed lower triangle with duplicates summed and rows sorted per column.
struct LowerCsc {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    val: Vec<f64>,
}

fn lower_csc(m: &SparseBlock) -> LowerCsc {
    let n = m.ncols;
    let mut count = vec![0usize; n + 1];
    for &(r, c, _) in &m.entries {
        if r >= c {
            count[c + 1] += 1;
        }
    }
    for j in 0..n {
        count[j + 1] += count[j];
    }
    let mut next = count.clone();
    let mut pairs = vec![(0usize, 0.0f64); count[n]];
    for &(r, c, v) in &m.entries {
        if r >= c {
            pairs[next[c]] = (r, v);
            next[c] += 1;
        }
    }
    let mut col_ptr = Vec::with_capacity(n + 1);
    let mut row_idx = Vec::with_capacity(pairs.len());
    let mut val = Vec::with_capacity(pairs.len());
    col_ptr.push(0);
    for j in 0..n {
        let col = &mut pairs[count[j]..count[j + 1]];
        col.sort_unstable_by_key(|p| p.0);
        for &(r, v) in col.iter() {
            if row_idx.len() > col_ptr[j] && *row_idx.last().unwrap() == r {
                *val.last_mut().unwrap() += v;
            } else {
                row_idx.push(r);
                val.push(v);
            }
        }
        col_ptr.push(row_idx.len());
    }
    LowerCsc {
        col_ptr,
        row_idx,
        val,
    }
}

struct CachedAnalysis {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    symbolic: SymbolicCholesky<usize>,
}

thread_local! {
    // successive time steps usually share the sparsity pattern
    static ANALYSIS: RefCell<Option<CachedAnalysis>> = const { RefCell::new(None) };
}

/// Symmetric indefinite solve using only the lower triangle of `m`.
///
/// With `signs` (the expected inertia, `+1`/`-1` per unknown) the factorization is an
/// `LDL^T` whose pivots of the wrong sign or tiny magnitude are replaced by a small
/// regularization; otherwise Bunch-Kaufman `LBL^T` with pivoting inside supernodes is used.
/// Either way the result is refined against the unmodified matrix.
pub fn symmetric_solve(
    m: &SparseBlock,
    b: &[f64],
    signs: Option<&[i8]>,
    tol: f64,
) -> Result<(Vec<f64>, usize, f64)> {
    let n = m.nrows;
    if n != m.ncols || b.len() != n || signs.is_some_and(|s| s.len() != n) {
        return Err(Error::Contract(
            "symmetric_solve needs a square system".into(),
        ));
    }
    if n == 0 {
        return Ok((Vec::new(), 0, 0.0));
    }
    let csc = lower_csc(m);
    ANALYSIS.with(|cell| {
        let mut cache = cell.borrow_mut();
        let reuse =
            matches!(&*cache, Some(c) if c.col_ptr == csc.col_ptr && c.row_idx == csc.row_idx);
        let pattern = SymbolicSparseColMatRef::new_checked(n, n, &csc.col_ptr, None, &csc.row_idx);
        if !reuse {
            let symbolic = factorize_symbolic_cholesky(
                pattern,
                Side::Lower,
                SymmetricOrdering::Amd,
                CholeskySymbolicParams::default(),
            )
            .map_err(|e| Error::Solver(format!("symbolic factorization failed: {e:?}")))?;
            *cache = Some(CachedAnalysis {
                col_ptr: csc.col_ptr.clone(),
                row_idx: csc.row_idx.clone(),
                symbolic,
            });
        }
        let sym = &cache.as_ref().unwrap().symbolic;
        let a = SparseColMatRef::new(pattern, &csc.val);
        let mut l = vec![0.0; sym.len_val()];
        if let Some(signs) = signs {
            let delta = f64::EPSILON.sqrt() * matrix_inf_norm(m);
            let mut mem = MemBuffer::new(StackReq::any_of(&[
                sym.factorize_numeric_ldlt_scratch::<f64>(Par::Seq, Default::default()),
                sym.solve_in_place_scratch::<f64>(1, Par::Seq),
            ]));
            let stack = MemStack::new(&mut mem);
            let reg = LdltRegularization {
                dynamic_regularization_signs: Some(signs),
                dynamic_regularization_delta: delta,
                dynamic_regularization_epsilon: delta,
            };
            let ldlt = sym
                .factorize_numeric_ldlt(
                    &mut l,
                    a,
                    Side::Lower,
                    reg,
                    Par::Seq,
                    stack,
                    Default::default(),
                )
                .map_err(|e| Error::Solver(format!("LDL^T failed: {e:?}")))?;
            let mut solve = |r: &[f64]| {
                let mut d = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
                ldlt.solve_in_place_with_conj(Conj::No, d.as_mut(), Par::Seq, &mut *stack);
                (0..n).map(|i| d[(i, 0)]).collect::<Vec<f64>>()
            };
            return refine(m, b, tol, &mut solve);
        }
        let mut sub = vec![0.0; n];
        let mut fwd = vec![0usize; n];
        let mut inv = vec![0usize; n];
        let mut mem = MemBuffer::new(StackReq::any_of(&[
            sym.factorize_numeric_intranode_lblt_scratch::<f64>(Par::Seq, Default::default()),
            sym.solve_in_place_scratch::<f64>(1, Par::Seq),
        ]));
        let stack = MemStack::new(&mut mem);
        let lblt = sym.factorize_numeric_intranode_lblt(
            &mut l,
            &mut sub,
            &mut fwd,
            &mut inv,
            a,
            Side::Lower,
            Par::Seq,
            stack,
            Default::default(),
        );
        let mut solve = |r: &[f64]| {
            let mut d = Mat::<f64>::from_fn(n, 1, |i, _| r[i]);
            lblt.solve_in_place_with_conj(Conj::No, d.as_mut(), Par::Seq, &mut *stack);
            (0..n).map(|i| d[(i, 0)]).collect::<Vec<f64>>()
        };
        refine(m, b, tol, &mut solve)
    })
}

fn refine(
    m: &SparseBlock,
    b: &[f64],
    tol: f64,
    solve: &mut dyn FnMut(&[f64]) -> Vec<f64>,
) -> Result<(Vec<f64>, usize, f64)> {
    let mut x = solve(b);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("singular system: non-finite solution".into()));
    }
    let anorm = matrix_inf_norm(m);
    let bnorm = inf_norm(b);
    let rel = |x: &[f64], r: &[f64]| {
        inf_norm(r) / (anorm * inf_norm(x)).max(bnorm).max(f64::MIN_POSITIVE)
    };
    let target = 1e-3 * tol;
    let mut r = residual(m, &x, b);
    let mut steps = 0;
    let mut best = rel(&x, &r);
    while best > target && steps < MAX_REFINE {
        let d = solve(&r);
        let cand: Vec<f64> = x.iter().zip(&d).map(|(v, dv)| v + dv).collect();
        let rc = residual(m, &cand, b);
        let rr = rel(&cand, &rc);
        steps += 1;
        if !(rr < best) {
            break;
        }
        x = cand;
        r = rc;
        best = rr;
    }
    // refinement stalls when a few modes are badly factorized; a Krylov method removes them
    let mut restarts = 0;
    while best > target && restarts < MAX_RESTARTS {
        let scale = (anorm * inf_norm(&x)).max(bnorm);
        let (cand, its) = gmres(m, &x, &r, target * scale, solve);
        steps += its;
        restarts += 1;
        if cand.iter().any(|v| !v.is_finite()) {
            break;
        }
        let rc = residual(m, &cand, b);
        let rr = rel(&cand, &rc);
        if !(rr < best) {
            break;
        }
        x = cand;
        r = rc;
        best = rr;
    }
    // a small backward error can still hide a forward error of cond(A) times its size,
    // so keep correcting while the corrections shrink
    let mut last = f64::INFINITY;
    for _ in 0..MAX_POLISH {
        let d = solve(&r);
        let dn = inf_norm(&d);
        if !(dn < 0.5 * last) {
            break;
        }
        let cand: Vec<f64> = x.iter().zip(&d).map(|(v, dv)| v + dv).collect();
        let rc = residual(m, &cand, b);
        let rr = rel(&cand, &rc);
        steps += 1;
        if !(rr <= 2.0 * best.max(f64::EPSILON)) {
            break;
        }
        x = cand;
        r = rc;
        best = best.min(rr);
        last = dn;
        if dn <= f64::EPSILON * inf_norm(&x) {
            break;
        }
    }
    Ok((x, steps, best))
}

const MAX_POLISH: usize = 6;

const MAX_RESTARTS: usize = 4;
const KRYLOV_DIM: usize = 30;

/// One cycle of right-preconditioned GMRES from `x` with residual `r`; returns the update and
/// the number of iterations.
fn gmres(
    m: &SparseBlock,
    x: &[f64],
    r: &[f64],
    abs_tol: f64,
    precond: &mut dyn FnMut(&[f64]) -> Vec<f64>,
) -> (Vec<f64>, usize) {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
    let beta = dot(r, r).sqrt();
    if beta == 0.0 {
        return (x.to_vec(), 0);
    }
    let mut v: Vec<Vec<f64>> = vec![r.iter().map(|e| e / beta).collect()];
    let mut z: Vec<Vec<f64>> = Vec::new();
    let mut h = vec![vec![0.0; KRYLOV_DIM]; KRYLOV_DIM + 1];
    let (mut cs, mut sn) = (vec![0.0; KRYLOV_DIM], vec![0.0; KRYLOV_DIM]);
    let mut g = vec![0.0; KRYLOV_DIM + 1];
    g[0] = beta;
    let mut k = 0;
    while k < KRYLOV_DIM {
        let zk = precond(&v[k]);
        let mut w = m.mul_vec(&zk);
        z.push(zk);
        for (i, vi) in v.iter().enumerate() {
            h[i][k] = dot(&w, vi);
            for (a, b) in w.iter_mut().zip(vi) {
                *a -= h[i][k] * b;
            }
        }
        h[k + 1][k] = dot(&w, &w).sqrt();
        for i in 0..k {
            let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
            h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
            h[i][k] = t;
        }
        let d = h[k][k].hypot(h[k + 1][k]);
        if d == 0.0 {
            break;
        }
        cs[k] = h[k][k] / d;
        sn[k] = h[k + 1][k] / d;
        h[k][k] = d;
        h[k + 1][k] = 0.0;
        g[k + 1] = -sn[k] * g[k];
        g[k] *= cs[k];
        let breakdown = w.iter().all(|e| *e == 0.0);
        if !breakdown {
            let nrm = dot(&w, &w).sqrt();
            v.push(w.into_iter().map(|e| e / nrm).collect());
        }
        k += 1;
        if g[k].abs() <= abs_tol || breakdown {
            break;
        }
    }
    let mut y = vec![0.0; k];
    for i in (0..k).rev() {
        let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
        y[i] = (g[i] - s) / h[i][i];
    }
    let mut out = x.to_vec();
    for (yi, zi) in y.iter().zip(&z) {
        for (o, e) in out.iter_mut().zip(zi) {
            *o += yi * e;
        }
    }
    (out, k)
}

fn unpack(sys: &CoupledSystem, gs: &GlobalSystem, x: &[f64]) -> Solution {
    let nvel = sys.stokes.f.len();
    let mut velocity = sys.dirichlet.values.clone();
    for a in 0..nvel {
        if let Some(i) = gs.velocity_map[a] {
            velocity[a] = x[i];
        }
    }
    let mut pressure = vec![0.0; sys.pressure.len];
    for (c, slot) in gs.pressure_map.iter().enumerate() {
        if let Some(i) = slot {
            pressure[c] = x[*i];
        }
    }
    normalize_pressure(sys, &mut pressure);
    let curvature = x[gs.curvature_offset..gs.position_offset].to_vec();
    let tau = sys.params.tau;
    let displacement = x[gs.position_offset..]
        .chunks(2)
        .map(|v| Point::new(tau * v[0], tau * v[1]))
        .collect();
    Solution {
        velocity,
        pressure,
        curvature,
        displacement,
    }
}

/// Shifts the standard pressure part so that the full pressure has zero mean.
pub fn normalize_pressure(sys: &CoupledSystem, p: &mut [f64]) {
    let mean = p
        .iter()
        .zip(&sys.pressure_integrals)
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / sys.domain_area;
    let (start, len) = match (sys.pressure.p1_offset, sys.pressure.p0_offset) {
        (Some(o), Some(q)) => (o, q - o),
        (Some(o), None) => (o, sys.pressure.xfem_index.unwrap_or(p.len()) - o),
        (None, Some(q)) => (q, sys.pressure.xfem_index.unwrap_or(p.len()) - q),
        (None, None) => return,
    };
    for v in &mut p[start..start + len] {
        *v -= mean;
    }
}

fn block_residuals(gs: &GlobalSystem, x: &[f64], report: &mut SolveReport) {
    let r = residual(&gs.matrix, x, &gs.rhs);
    let p0 = gs
        .pressure_map
        .iter()
        .flatten()
        .min()
        .copied()
        .unwrap_or(gs.curvature_offset);
    report.residual_momentum = inf_norm(&r[..p0]);
    report.residual_divergence = inf_norm(&r[p0..gs.curvature_offset]);
    report.residual_position = inf_norm(&r[gs.curvature_offset..gs.position_offset]);
    report.residual_curvature = inf_norm(&r[gs.position_offset..]);
    let anorm = matrix_inf_norm(&gs.matrix);
    report.relative_residual = inf_norm(&r)
        / (anorm * inf_norm(x))
            .max(inf_norm(&gs.rhs))
            .max(f64::MIN_POSITIVE);
}

fn check(report: &SolveReport, tol: f64) -> Result<()> {
    if report.relative_residual <= tol {
        Ok(())
    } else {
        Err(Error::Solver(format!(
            "relative residual {:.3e} exceeds {:.1e} (momentum {:.3e}, divergence {:.3e}, position {:.3e}, curvature {:.3e})",
            report.relative_residual,
            tol,
            report.residual_momentum,
            report.residual_divergence,
            report.residual_position,
            report.residual_curvature
        )))
    }
}

/// Row scaling that makes the constrained system symmetric, if one exists.
fn symmetrizing_scale(sys: &CoupledSystem, gs: &GlobalSystem) -> Option<Vec<f64>> {
    let gamma = sys.params.gamma;
    if !(gamma > 0.0) {
        return None;
    }
    let p0 = gs
        .pressure_map
        .iter()
        .flatten()
        .min()
        .copied()
        .unwrap_or(gs.curvature_offset);
    Some(
        (0..gs.n)
            .map(|r| {
                if r < p0 {
                    1.0
                } else if r < gs.curvature_offset {
                    -1.0
                } else {
                    gamma
                }
            })
            .collect(),
    )
}

/// Symmetric LBL^T on the row-scaled system, sparse LU if that is unavailable or inaccurate.
fn solve_global(
    sys: &CoupledSystem,
    gs: &GlobalSystem,
    tol: f64,
) -> Result<(Vec<f64>, usize, bool)> {
    if let Some(scale) = symmetrizing_scale(sys, gs) {
        let mut m = SparseBlock::new(gs.n, gs.n);
        m.entries = gs
            .matrix
            .entries
            .iter()
            .map(|&(r, c, v)| (r, c, v * scale[r]))
            .collect();
        let rhs: Vec<f64> = gs.rhs.iter().zip(&scale).map(|(v, s)| v * s).collect();
        // expected inertia: velocity positive, pressure and curvature negative, positions positive
        let signs: Vec<i8> = (0..gs.n)
            .map(|r| match scale[r] {
                s if s == 1.0 && r < gs.curvature_offset => 1,
                _ if r < gs.position_offset => -1,
                _ => 1,
            })
            .collect();
        match symmetric_solve(&m, &rhs, Some(&signs), tol) {
            Ok((x, steps, rel)) if rel <= 1e-2 * tol => return Ok((x, steps, false)),
            Ok((_, _, rel)) => log::debug!("LDL^T residual {rel:.3e}; retrying with LU"),
            Err(e) => log::debug!("LDL^T failed ({e}); retrying with LU"),
        }
    }
    let (x, steps, _) = sparse_solve(&gs.matrix, &gs.rhs, tol)?;
    Ok((x, steps, symmetrizing_scale(sys, gs).is_some()))
}

/// Solves the full constrained system by a sparse direct method.
pub fn solve_coupled(sys: &CoupledSystem, tol: f64) -> Result<(Solution, SolveReport)> {
    let start = Instant::now();
    let gs = apply_dirichlet(sys);
    let (x, steps, fallback) = solve_global(sys, &gs, tol)?;
    let mut report = SolveReport {
        refinement_steps: steps,
        fallback,
        null_space_projection: true,
        ..Default::default()
    };
    block_residuals(&gs, &x, &mut report);
    check(&report, tol)?;
    let sol = unpack(sys, &gs, &x);
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((sol, report))
}

/// Solves after eliminating the scalar curvature vertex by vertex.
///
/// The curvature rows determine `kappa_k` from the normal component of
/// `K(X^m + dX)` at each vertex; only the tangential component remains as an equation.
/// Falls back to [`solve_coupled`] for the vector-curvature scheme or near-zero vertex normals.
pub fn solve_eliminated(sys: &CoupledSystem, tol: f64) -> Result<(Solution, SolveReport)> {
    let start = Instant::now();
    let w = &sys.lumped_normals;
    let scale = w.iter().map(|v| v.norm()).sum::<f64>() / w.len().max(1) as f64;
    let degenerate = w.iter().any(|v| v.norm() <= 1e-8 * scale);
    if sys.params.scheme == Scheme::Dziuk || degenerate || w.is_empty() {
        if degenerate {
            log::warn!("near-zero vertex normal; using the monolithic solve");
        }
        let (sol, mut rep) = solve_coupled(sys, tol)?;
        rep.fallback = true;
        return Ok((sol, rep));
    }
    let gs = apply_dirichlet(sys);
    let kk = w.len();
    let (co, po) = (gs.curvature_offset, gs.position_offset);
    let nr = co + 2 * kk;
    // reduced unknowns: [velocity, pressure | V (2K)], V shifted down by K
    let vcol = |c: usize| c - kk;
    let tau = sys.params.tau;
    let kx = sys.interface.stiffness.mul_vec(&sys.x_old);
    // rows of tau*K per vertex coordinate
    let mut krows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); 2 * kk];
    for &(i, j, v) in &sys.interface.stiffness.entries {
        krows[i].push((j, tau * v));
    }
    // kappa_k = c0_k + sum_j ck[j] V_j
    let mut c0 = vec![0.0; kk];
    let mut ck: Vec<Vec<(usize, f64)>> = vec![Vec::new(); kk];
    for k in 0..kk {
        let s = -1.0 / w[k].norm_squared();
        c0[k] = s * (w[k].x * kx[2 * k] + w[k].y * kx[2 * k + 1]);
        for (al, wa) in [(0, w[k].x), (1, w[k].y)] {
            for &(j, v) in &krows[2 * k + al] {
                ck[k].push((j, s * wa * v));
            }
        }
    }
    let mut m = SparseBlock::new(nr, nr);
    let mut rhs = gs.rhs[..co].to_vec();
    rhs.resize(nr, 0.0);
    for &(r, c, v) in &gs.matrix.entries {
        if r < co {
            if c < co {
                m.push(r, c, v);
            } else if c < po {
                // -gamma N^T kappa column: substitute kappa
                let k = c - co;
                rhs[r] -= v * c0[k];
                for &(j, cv) in &ck[k] {
                    m.push(r, vcol(po + j), v * cv);
                }
            } else {
                m.push(r, vcol(c), v);
            }
        } else if r < po {
            // position rows (W . V - N U)
            let cc = if c < co { c } else { vcol(c) };
            m.push(r, cc, v);
        }
    }
    for k in 0..kk {
        rhs[co + k] = gs.rhs[co + k];
        let t = rotate_cw(&w[k]);
        let row = po + k;
        for (al, ta) in [(0, t.x), (1, t.y)] {
            for &(j, v) in &krows[2 * k + al] {
                m.push(row, vcol(po + j), ta * v);
            }
        }
        rhs[row] = -(t.x * kx[2 * k] + t.y * kx[2 * k + 1]);
    }
    let (y, steps, _) = sparse_solve(&m, &rhs, tol)?;
    let mut x = vec![0.0; gs.n];
    x[..co].copy_from_slice(&y[..co]);
    x[po..].copy_from_slice(&y[co..]);
    for k in 0..kk {
        x[co + k] = c0[k] + ck[k].iter().map(|&(j, v)| v * y[co + j]).sum::<f64>();
    }
    let mut report = SolveReport {
        refinement_steps: steps,
        null_space_projection: true,
        eliminated: true,
        ..Default::default()
    };
    block_residuals(&gs, &x, &mut report);
    check(&report, tol)?;
    let sol = unpack(sys, &gs, &x);
    report.wall_time = start.elapsed().as_secs_f64();
    Ok((sol, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn krylov_recovers_from_a_poor_preconditioner() {
        // tridiagonal, nonsymmetric; the "factorization" is only the diagonal
        let n = 40;
        let mut m = SparseBlock::new(n, n);
        for i in 0..n {
            m.push(i, i, 4.0 + (i % 3) as f64);
            if i + 1 < n {
                m.push(i, i + 1, -1.5);
                m.push(i + 1, i, -0.7);
            }
        }
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = m.mul_vec(&exact);
        let diag: Vec<f64> = (0..n).map(|i| 4.0 + (i % 3) as f64).collect();
        let mut jacobi = |r: &[f64]| {
            r.iter()
                .zip(&diag)
                .map(|(a, d)| a / d)
                .collect::<Vec<f64>>()
        };
        let (x, steps, rel) = refine(&m, &b, 1e-10, &mut jacobi).unwrap();
        assert!(rel <= 1e-13, "rel {rel:e} after {steps} steps");
        for (a, e) in x.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-11);
        }
    }

    #[test]
    fn small_sparse_system_with_duplicates() {
        let mut m = SparseBlock::new(3, 3);
        m.push(0, 0, 1.0);
        m.push(0, 0, 1.0);
        m.push(0, 1, 1.0);
        m.push(1, 1, 3.0);
        m.push(2, 0, 1.0);
        m.push(2, 2, 4.0);
        let (x, _, rel) = sparse_solve(&m, &[3.0, 3.0, 5.0], 1e-12).unwrap();
        assert!(
            (x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14 && (x[2] - 1.0).abs() < 1e-14
        );
        assert!(rel < 1e-15);
    }

    #[test]
    fn symmetric_indefinite_matches_lu() {
        let mut m = SparseBlock::new(3, 3);
        for &(r, c, v) in &[
            (0, 0, 2.0),
            (0, 1, 1.0),
            (1, 0, 1.0),
            (1, 1, 3.0),
            (0, 2, 1.0),
            (2, 0, 1.0),
            (2, 2, -1.0),
        ] {
            m.push(r, c, v);
        }
        let b = [1.0, -2.0, 0.5];
        let (x, _, _) = symmetric_solve(&m, &b, None, 1e-12).unwrap();
        let (y, _, _) = sparse_solve(&m, &b, 1e-12).unwrap();
        for (a, c) in x.iter().zip(&y) {
            assert!((a - c).abs() < 1e-13);
        }
    }

    #[test]
    fn zero_pivot_is_not_silent() {
        // a zero diagonal may be met before its partner, the caller then falls back to LU
        let mut m = SparseBlock::new(2, 2);
        for &(r, c, v) in &[(0, 1, 1.0), (1, 0, 1.0)] {
            m.push(r, c, v);
        }
        match symmetric_solve(&m, &[1.0, 2.0], None, 1e-12) {
            Ok((x, _, rel)) => assert!(rel < 1e-12 && (x[0] - 2.0).abs() < 1e-12),
            Err(e) => assert_eq!(e.category(), "solver"),
        }
    }

    #[test]
    fn singular_system_is_reported() {
        let mut m = SparseBlock::new(2, 2);
        m.push(0, 0, 1.0);
        m.push(1, 0, 1.0);
        assert!(sparse_solve(&m, &[1.0, 2.0], 1e-10).is_err());
    }
}
