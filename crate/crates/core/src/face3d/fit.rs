//! Levenberg–Marquardt fit of shared identity, per-keyframe pose and
//! per-keyframe expression to detected 2D landmarks.
//!
//! Unknowns are `X = (s, {pose_k, e_k})`. The normal matrix has an arrow
//! structure (a dense `s` block coupled to independent keyframe blocks),
//! so each step eliminates the keyframe blocks and solves a 60×60 Schur
//! complement for `s`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::camera::{project, rotation_matrix, CameraPose, Intrinsics};
use super::model::{FaceModel, Vec3, EXPR_DIM, N_LANDMARKS, SHAPE_DIM};
use crate::dataset::substream;
use crate::error::{Error, Result};
use crate::nn::{Graph, Tensor, Var};

const POSE_DIM: usize = 6;
const BLOCK: usize = POSE_DIM + EXPR_DIM;
const ROWS: usize = N_LANDMARKS * 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitProblem {
    /// Detected landmarks, 68 per keyframe.
    pub keyframes: Vec<Vec<[f64; 2]>>,
    pub lambda_e: f64,
    pub lambda_s: f64,
    pub intrinsics: Intrinsics,
}

impl FitProblem {
    pub fn new(keyframes: Vec<Vec<[f64; 2]>>, intrinsics: Intrinsics) -> Self {
        Self {
            keyframes,
            lambda_e: 1e-4,
            lambda_s: 1e-4,
            intrinsics,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.keyframes.is_empty() {
            return Err(Error::InvalidArgument("fit problem has no keyframes".into()));
        }
        for (k, f) in self.keyframes.iter().enumerate() {
            if f.len() != N_LANDMARKS {
                return Err(Error::LengthMismatch(format!(
                    "keyframe {k} has {} landmarks, expected {N_LANDMARKS}",
                    f.len()
                )));
            }
            if !f.iter().flatten().all(|x| x.is_finite()) {
                return Err(Error::NonFinite(format!("landmarks of keyframe {k}")));
            }
        }
        if !(self.lambda_e >= 0.0 && self.lambda_s >= 0.0) {
            return Err(Error::InvalidArgument("regularizer weights must be non-negative".into()));
        }
        Ok(())
    }
}

/// A point `X` of the fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub shape: Vec<f64>,
    pub poses: Vec<CameraPose>,
    pub expressions: Vec<Vec<f64>>,
}

impl FitParams {
    fn check(&self, n_keyframes: usize) -> Result<()> {
        if self.shape.len() != SHAPE_DIM
            || self.poses.len() != n_keyframes
            || self.expressions.len() != n_keyframes
            || self.expressions.iter().any(|e| e.len() != EXPR_DIM)
        {
            return Err(Error::LengthMismatch(format!(
                "fit parameters do not match {n_keyframes} keyframes"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub step_tol: f64,
    pub damping: f64,
    /// Keep `s` at its initial value (per-frame expression tracking).
    pub fix_shape: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            damping: 1e-3,
            fix_shape: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Termination {
    Gradient,
    Step,
    MaxIterations,
    /// Damping grew without finding a decrease.
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub params: FitParams,
    /// `F` at the start and after every accepted step.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub termination: Termination,
    pub gradient_norm: f64,
}

fn landmark_points(model: &FaceModel, s: &[f64], e: &[f64]) -> Result<Vec<Vec3>> {
    model.eval_landmarks(s, e)
}

/// Reprojection residuals of one keyframe, `u - p_u, v - p_v` per landmark.
fn keyframe_residuals(
    model: &FaceModel,
    s: &[f64],
    pose: &CameraPose,
    e: &[f64],
    obs: &[[f64; 2]],
    k: &Intrinsics,
) -> Result<Vec<f64>> {
    let proj = project(&landmark_points(model, s, e)?, pose, k)?;
    Ok(proj
        .iter()
        .zip(obs)
        .flat_map(|(p, o)| [p[0] - o[0], p[1] - o[1]])
        .collect())
}

/// `F(X)`.
pub fn energy(model: &FaceModel, problem: &FitProblem, x: &FitParams) -> Result<f64> {
    problem.validate()?;
    x.check(problem.keyframes.len())?;
    let mut f = problem.lambda_s * sq_norm(&x.shape);
    for (kf, obs) in problem.keyframes.iter().enumerate() {
        let r = keyframe_residuals(model, &x.shape, &x.poses[kf], &x.expressions[kf], obs, &problem.intrinsics)?;
        f += sq_norm(&r) + problem.lambda_e * sq_norm(&x.expressions[kf]);
    }
    if !f.is_finite() {
        return Err(Error::NonFinite("fit residual".into()));
    }
    Ok(f)
}

/// Mean Euclidean distance in pixels between projected and detected landmarks.
pub fn mean_reprojection_error(model: &FaceModel, problem: &FitProblem, x: &FitParams) -> Result<f64> {
    x.check(problem.keyframes.len())?;
    let mut total = 0.0;
    for (kf, obs) in problem.keyframes.iter().enumerate() {
        let r = keyframe_residuals(model, &x.shape, &x.poses[kf], &x.expressions[kf], obs, &problem.intrinsics)?;
        total += r.chunks(2).map(|c| c[0].hypot(c[1])).sum::<f64>();
    }
    Ok(total / (problem.keyframes.len() * N_LANDMARKS) as f64)
}

fn sq_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

struct LandmarkBlocks {
    mean: Tensor,
    shape: Tensor,
    expr: Tensor,
}

/// Residual graph of one keyframe; returns (graph, residual, s, pose, e).
fn keyframe_graph(
    b: &LandmarkBlocks,
    s: &[f64],
    pose: &CameraPose,
    e: &[f64],
    obs: &[[f64; 2]],
    k: &Intrinsics,
) -> (Graph, Var, Var, Var, Var) {
    let mut g = Graph::new();
    let vs = g.input(Tensor::from_parts(vec![SHAPE_DIM, 1], s.to_vec()));
    let vp = g.input(Tensor::from_parts(vec![POSE_DIM], pose.to_vec().to_vec()));
    let ve = g.input(Tensor::from_parts(vec![EXPR_DIM, 1], e.to_vec()));
    let mean = g.constant(b.mean.clone());
    let sb = g.constant(b.shape.clone());
    let eb = g.constant(b.expr.clone());
    let ds = g.matmul(sb, vs);
    let de = g.matmul(eb, ve);
    let d = g.add(ds, de);
    let d = g.reshape(d, &[N_LANDMARKS * 3]);
    let v = g.add(mean, d);
    let v = g.reshape(v, &[N_LANDMARKS, 3]);

    let angle = |g: &mut Graph, i: usize| {
        let a = g.slice(vp, 0, i, 1);
        (g.sin(a), g.cos(a))
    };
    let (sx, cx) = angle(&mut g, 0);
    let (sy, cy) = angle(&mut g, 1);
    let (sz, cz) = angle(&mut g, 2);
    let mut entries = Vec::with_capacity(9);
    {
        let g = &mut g;
        let czcy = g.mul(cz, cy);
        let szcy = g.mul(sz, cy);
        let czsy = g.mul(cz, sy);
        let szsy = g.mul(sz, sy);
        let czsysx = g.mul(czsy, sx);
        let szcx = g.mul(sz, cx);
        let r01 = g.sub(czsysx, szcx);
        let czsycx = g.mul(czsy, cx);
        let szsx = g.mul(sz, sx);
        let r02 = g.add(czsycx, szsx);
        let szsysx = g.mul(szsy, sx);
        let czcx = g.mul(cz, cx);
        let r11 = g.add(szsysx, czcx);
        let szsycx = g.mul(szsy, cx);
        let czsx = g.mul(cz, sx);
        let r12 = g.sub(szsycx, czsx);
        let r20 = g.neg(sy);
        let r21 = g.mul(cy, sx);
        let r22 = g.mul(cy, cx);
        entries.extend([czcy, r01, r02, szcy, r11, r12, r20, r21, r22]);
    }
    let r = g.concat(&entries, 0);
    let r = g.reshape(r, &[3, 3]);
    let rt = g.transpose(r);
    let p = g.matmul(v, rt);
    let t = g.slice(vp, 0, 3, 3);
    let p = g.row_bias(p, t);
    let x = g.slice(p, 1, 0, 1);
    let y = g.slice(p, 1, 1, 1);
    let z = g.slice(p, 1, 2, 1);
    let u = g.div(x, z);
    let u = g.scale(u, k.focal);
    let u = g.offset(u, k.cx);
    let w = g.div(y, z);
    let w = g.scale(w, k.focal);
    let w = g.offset(w, k.cy);
    let uv = g.concat(&[u, w], 1);
    let uv = g.reshape(uv, &[ROWS]);
    let o = g.constant(Tensor::from_parts(vec![ROWS], obs.iter().flatten().copied().collect()));
    let res = g.sub(uv, o);
    (g, res, vs, vp, ve)
}

/// Residuals and Jacobians of one keyframe: `J_s` is `[136, 60]`,
/// `J_k` is `[136, 57]` over (pose, expression).
fn keyframe_jacobian(
    b: &LandmarkBlocks,
    s: &[f64],
    pose: &CameraPose,
    e: &[f64],
    obs: &[[f64; 2]],
    k: &Intrinsics,
    with_shape: bool,
) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
    let (g, res, vs, vp, ve) = keyframe_graph(b, s, pose, e, obs, k);
    let r = DVector::from_column_slice(g.value(res).data());
    let mut js = DMatrix::zeros(ROWS, if with_shape { SHAPE_DIM } else { 0 });
    let mut jk = DMatrix::zeros(ROWS, BLOCK);
    let mut seed = vec![0.0; ROWS];
    for row in 0..ROWS {
        seed[row] = 1.0;
        let grads = g.backward_with(res, Tensor::from_parts(vec![ROWS], seed.clone()));
        seed[row] = 0.0;
        if with_shape {
            if let Some(d) = grads.get(vs) {
                for (j, v) in d.data().iter().enumerate() {
                    js[(row, j)] = *v;
                }
            }
        }
        if let Some(d) = grads.get(vp) {
            for (j, v) in d.data().iter().enumerate() {
                jk[(row, j)] = *v;
            }
        }
        if let Some(d) = grads.get(ve) {
            for (j, v) in d.data().iter().enumerate() {
                jk[(row, POSE_DIM + j)] = *v;
            }
        }
    }
    (r, js, jk)
}

fn apply_marquardt(h: &DMatrix<f64>, mu: f64) -> DMatrix<f64> {
    let mut out = h.clone();
    for i in 0..h.nrows() {
        out[(i, i)] += mu * h[(i, i)].max(1e-12);
    }
    out
}

struct NormalEqs {
    hss: DMatrix<f64>,
    gs: DVector<f64>,
    hsk: Vec<DMatrix<f64>>,
    hkk: Vec<DMatrix<f64>>,
    gk: Vec<DVector<f64>>,
}

impl NormalEqs {
    /// `‖∇F‖ = 2‖Jᵀr‖`.
    fn gradient_norm(&self) -> f64 {
        let mut sq = self.gs.norm_squared();
        for g in &self.gk {
            sq += g.norm_squared();
        }
        2.0 * sq.sqrt()
    }

    /// Damped Gauss–Newton step by Schur complement on the `s` block.
    fn solve(&self, mu: f64, with_shape: bool) -> Option<(DVector<f64>, Vec<DVector<f64>>)> {
        let n = self.hkk.len();
        let mut inv_gk = Vec::with_capacity(n);
        let mut chol_k = Vec::with_capacity(n);
        for k in 0..n {
            let c = apply_marquardt(&self.hkk[k], mu).cholesky()?;
            inv_gk.push(c.solve(&self.gk[k]));
            chol_k.push(c);
        }
        let ds = if with_shape {
            let mut schur = apply_marquardt(&self.hss, mu);
            let mut rhs = -self.gs.clone();
            for k in 0..n {
                // H_sk H_kk^-1 H_skᵀ and H_sk H_kk^-1 g_k
                let x = chol_k[k].solve(&self.hsk[k].transpose());
                schur -= &self.hsk[k] * x;
                rhs += &self.hsk[k] * &inv_gk[k];
            }
            schur.cholesky()?.solve(&rhs)
        } else {
            DVector::zeros(0)
        };
        let dk = (0..n)
            .map(|k| {
                let mut b = -self.gk[k].clone();
                if with_shape {
                    b -= self.hsk[k].transpose() * &ds;
                }
                chol_k[k].solve(&b)
            })
            .collect();
        Some((ds, dk))
    }
}

fn normal_equations(
    b: &LandmarkBlocks,
    problem: &FitProblem,
    x: &FitParams,
    with_shape: bool,
) -> NormalEqs {
    let ns = if with_shape { SHAPE_DIM } else { 0 };
    let mut hss = DMatrix::zeros(ns, ns);
    let mut gs = DVector::zeros(ns);
    if with_shape {
        for i in 0..ns {
            hss[(i, i)] = problem.lambda_s;
            gs[i] = problem.lambda_s * x.shape[i];
        }
    }
    let mut hsk = Vec::new();
    let mut hkk = Vec::new();
    let mut gk = Vec::new();
    for (kf, obs) in problem.keyframes.iter().enumerate() {
        let e = &x.expressions[kf];
        let (r, js, jk) = keyframe_jacobian(b, &x.shape, &x.poses[kf], e, obs, &problem.intrinsics, with_shape);
        let mut h = jk.transpose() * &jk;
        let mut g = jk.transpose() * &r;
        for j in 0..EXPR_DIM {
            h[(POSE_DIM + j, POSE_DIM + j)] += problem.lambda_e;
            g[POSE_DIM + j] += problem.lambda_e * e[j];
        }
        if with_shape {
            hss += js.transpose() * &js;
            gs += js.transpose() * &r;
            hsk.push(js.transpose() * &jk);
        }
        hkk.push(h);
        gk.push(g);
    }
    NormalEqs { hss, gs, hsk, hkk, gk }
}

fn step(x: &FitParams, ds: &DVector<f64>, dk: &[DVector<f64>]) -> Result<FitParams> {
    let mut out = x.clone();
    for (s, d) in out.shape.iter_mut().zip(ds.iter()) {
        *s += d;
    }
    for (k, d) in dk.iter().enumerate() {
        let p = &mut out.poses[k];
        for i in 0..3 {
            p.rotation[i] += d[i];
            p.translation[i] += d[3 + i];
        }
        for (e, v) in out.expressions[k].iter_mut().zip(d.iter().skip(POSE_DIM)) {
            *e += v;
        }
    }
    for p in &out.poses {
        p.validate()?;
    }
    Ok(out)
}

/// Minimizes `F` from `init`. Steps that raise `F`, produce a
/// non-positive depth or a non-finite residual are rejected and the
/// damping raised.
pub fn fit(model: &FaceModel, problem: &FitProblem, init: &FitParams, cfg: &FitConfig) -> Result<FitReport> {
    model.validate()?;
    problem.validate()?;
    init.check(problem.keyframes.len())?;
    let (mean, shape, expr) = model.landmark_blocks();
    let blocks = LandmarkBlocks { mean, shape, expr };
    let with_shape = !cfg.fix_shape;

    let mut x = init.clone();
    let mut f = energy(model, problem, &x)?;
    let mut history = vec![f];
    let mut mu = cfg.damping;
    let mut termination = Termination::MaxIterations;
    let mut gradient_norm = f64::INFINITY;
    let mut iterations = 0;
    'outer: while iterations < cfg.max_iters {
        let normal = normal_equations(&blocks, problem, &x, with_shape);
        gradient_norm = normal.gradient_norm();
        if !gradient_norm.is_finite() {
            return Err(Error::NonFinite("fit gradient".into()));
        }
        if gradient_norm < cfg.grad_tol {
            termination = Termination::Gradient;
            break;
        }
        iterations += 1;
        loop {
            if mu > 1e20 {
                termination = Termination::Stalled;
                break 'outer;
            }
            let Some((ds, dk)) = normal.solve(mu, with_shape) else {
                mu *= 10.0;
                continue;
            };
            let step_norm = (ds.norm_squared() + dk.iter().map(|d| d.norm_squared()).sum::<f64>()).sqrt();
            if step_norm < cfg.step_tol {
                termination = Termination::Step;
                break 'outer;
            }
            let candidate = step(&x, &ds, &dk).and_then(|c| energy(model, problem, &c).map(|fc| (c, fc)));
            match candidate {
                Ok((c, fc)) if fc < f => {
                    x = c;
                    f = fc;
                    history.push(f);
                    mu = (mu / 10.0).max(1e-15);
                    break;
                }
                _ => mu *= 10.0,
            }
        }
    }
    Ok(FitReport {
        params: x,
        history,
        iterations,
        termination,
        gradient_norm,
    })
}

/// `X₀`: zero identity and expression; per keyframe the best of a
/// yaw/pitch grid over {−30°, 0°, 30°} with a scale/centroid-matched
/// translation.
pub fn initial_guess(model: &FaceModel, problem: &FitProblem) -> Result<FitParams> {
    problem.validate()?;
    let zero_s = vec![0.0; SHAPE_DIM];
    let zero_e = vec![0.0; EXPR_DIM];
    let base = landmark_points(model, &zero_s, &zero_e)?;
    let k = &problem.intrinsics;
    let grid = [-30f64, 0.0, 30.0].map(f64::to_radians);
    let mut poses = Vec::with_capacity(problem.keyframes.len());
    for obs in &problem.keyframes {
        let n = obs.len() as f64;
        let ou = obs.iter().map(|p| p[0]).sum::<f64>() / n;
        let ov = obs.iter().map(|p| p[1]).sum::<f64>() / n;
        let ospread = (obs.iter().map(|p| (p[0] - ou).powi(2) + (p[1] - ov).powi(2)).sum::<f64>() / n).sqrt();
        let mut best: Option<(f64, CameraPose)> = None;
        for &pitch in &grid {
            for &yaw in &grid {
                let rot = [pitch, yaw, 0.0];
                let r = rotation_matrix(rot);
                let pts: Vec<Vec3> = base
                    .iter()
                    .map(|p| [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2]))
                    .collect();
                let mx = pts.iter().map(|p| p[0]).sum::<f64>() / n;
                let my = pts.iter().map(|p| p[1]).sum::<f64>() / n;
                let mz = pts.iter().map(|p| p[2]).sum::<f64>() / n;
                let mspread = (pts.iter().map(|p| (p[0] - mx).powi(2) + (p[1] - my).powi(2)).sum::<f64>() / n).sqrt();
                if ospread <= 0.0 {
                    continue;
                }
                let depth = k.focal * mspread / ospread;
                let tz = depth - mz;
                let tx = (ou - k.cx) * depth / k.focal - mx;
                let ty = (ov - k.cy) * depth / k.focal - my;
                let Ok(pose) = CameraPose::new(rot, [tx, ty, tz]) else { continue };
                let Ok(r) = keyframe_residuals(model, &zero_s, &pose, &zero_e, obs, k) else { continue };
                let err = sq_norm(&r);
                if best.as_ref().is_none_or(|(b, _)| err < *b) {
                    best = Some((err, pose));
                }
            }
        }
        let (_, pose) = best.ok_or_else(|| Error::InvalidArgument("no initial pose with positive depth".into()))?;
        poses.push(pose);
    }
    Ok(FitParams {
        shape: zero_s,
        expressions: vec![zero_e; problem.keyframes.len()],
        poses,
    })
}

/// Noise-free problem: landmarks rendered from a random ground truth.
pub fn synthetic_problem(model: &FaceModel, seed: u64, n_keyframes: usize, k: Intrinsics) -> Result<(FitProblem, FitParams)> {
    let mut rng = substream(seed, 21);
    let unit = Normal::new(0.0, 1.0).expect("valid normal");
    let shape: Vec<f64> = (0..SHAPE_DIM).map(|_| 0.5 * unit.sample(&mut rng)).collect();
    let mut poses = Vec::with_capacity(n_keyframes);
    let mut expressions = Vec::with_capacity(n_keyframes);
    let mut keyframes = Vec::with_capacity(n_keyframes);
    for _ in 0..n_keyframes {
        let rot = [
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.4..0.4),
            rng.random_range(-0.15..0.15),
        ];
        let t = [
            rng.random_range(-0.3..0.3),
            rng.random_range(-0.3..0.3),
            rng.random_range(4.0..5.0),
        ];
        let e: Vec<f64> = (0..EXPR_DIM)
            .map(|_| if rng.random_bool(0.3) { rng.random_range(0.0..0.8) } else { 0.0 })
            .collect();
        let pose = CameraPose::new(rot, t)?;
        keyframes.push(project(&landmark_points(model, &shape, &e)?, &pose, &k)?);
        poses.push(pose);
        expressions.push(e);
    }
    Ok((
        FitProblem::new(keyframes, k),
        FitParams {
            shape,
            poses,
            expressions,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobian_matches_finite_differences() {
        let model = FaceModel::procedural(3);
        let k = Intrinsics::for_image(256, 256);
        let (problem, truth) = synthetic_problem(&model, 5, 1, k).unwrap();
        let (mean, shape, expr) = model.landmark_blocks();
        let b = LandmarkBlocks { mean, shape, expr };
        let mut x = truth.clone();
        x.shape[0] += 0.1;
        x.poses[0].rotation[1] += 0.05;
        x.expressions[0][30] += 0.2;
        let obs = &problem.keyframes[0];
        let (_, js, jk) = keyframe_jacobian(&b, &x.shape, &x.poses[0], &x.expressions[0], obs, &k, true);
        let res = |x: &FitParams| keyframe_residuals(&model, &x.shape, &x.poses[0], &x.expressions[0], obs, &k).unwrap();
        let h = 1e-6;
        let check = |col: &dyn Fn(&mut FitParams, f64), analytic: Vec<f64>| {
            let mut p = x.clone();
            col(&mut p, h);
            let rp = res(&p);
            let mut m = x.clone();
            col(&mut m, -h);
            let rm = res(&m);
            for (i, a) in analytic.iter().enumerate() {
                let n = (rp[i] - rm[i]) / (2.0 * h);
                assert!((a - n).abs() <= 1e-5 * (1.0 + n.abs()), "row {i}: {a} vs {n}");
            }
        };
        check(&|p, d| p.shape[7] += d, js.column(7).iter().copied().collect());
        check(&|p, d| p.poses[0].rotation[0] += d, jk.column(0).iter().copied().collect());
        check(&|p, d| p.poses[0].rotation[2] += d, jk.column(2).iter().copied().collect());
        check(&|p, d| p.poses[0].translation[2] += d, jk.column(5).iter().copied().collect());
        check(&|p, d| p.expressions[0][40] += d, jk.column(POSE_DIM + 40).iter().copied().collect());
    }

    #[test]
    fn energy_is_zero_at_truth_without_regularizers() {
        let model = FaceModel::procedural(3);
        let (mut problem, truth) = synthetic_problem(&model, 1, 3, Intrinsics::for_image(128, 128)).unwrap();
        problem.lambda_e = 0.0;
        problem.lambda_s = 0.0;
        assert!(energy(&model, &problem, &truth).unwrap() < 1e-20);
    }

    #[test]
    fn rejects_wrong_landmark_count() {
        let model = FaceModel::procedural(3);
        let problem = FitProblem::new(vec![vec![[0.0; 2]; 67]], Intrinsics::for_image(64, 64));
        assert!(initial_guess(&model, &problem).is_err());
    }
}
