//! Time integration of the damped shell system, energy traces, decay fits
//! and numerical checks of the energy and multiplier identities.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::eigen::dense_generalized;
use crate::error::{Error, Result};
use crate::escape::{check_escape, EscapeField};
use crate::forms::{b_local, energy, AssembledSystem, DofMap, MaterialParams};
use crate::geometry::{g_map_local, sym2, FaceScalar, Geometry, Mat2, ScalarField, TangentField, Vec2};
use crate::kinematics::{face_strains, ShellState};
use crate::sparse::{pcg, CsrMatrix, EnvelopeCholesky, SolveStats};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    pub newmark_beta: f64,
    pub newmark_gamma: f64,
    /// Steps between energy samples.
    pub sample_stride: usize,
    pub solver_tol: f64,
    /// Keep `(u, v)` at every sample.
    pub store_states: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1e-3,
            t_end: 1.0,
            newmark_beta: 0.25,
            newmark_gamma: 0.5,
            sample_stride: 1,
            solver_tol: 1e-10,
            store_states: false,
        }
    }
}

impl SimConfig {
    pub fn new(dt: f64, t_end: f64) -> Self {
        SimConfig { dt, t_end, ..Default::default() }
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) || !(self.t_end >= self.dt) {
            return Err(Error::InvalidParameter(format!("need dt > 0 and t_end >= dt, got dt = {}, t_end = {}", self.dt, self.t_end)));
        }
        let (b, g) = (self.newmark_beta, self.newmark_gamma);
        if !(g >= 0.5 && 2.0 * b >= g) {
            return Err(Error::InvalidParameter(format!("Newmark parameters beta = {b}, gamma = {g} are not unconditionally stable")));
        }
        if self.sample_stride == 0 || !(self.solver_tol > 0.0) {
            return Err(Error::InvalidParameter("sample_stride and solver_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Displacement, velocity and acceleration on the free degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct DynState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl DynState {
    pub fn zeros(n: usize) -> Self {
        DynState { u: vec![0.0; n], v: vec![0.0; n], a: vec![0.0; n] }
    }
}

/// Newmark stepper with the factored effective matrix
/// `M + gamma dt C + beta dt^2 K`.
pub struct Integrator<'a> {
    pub sys: &'a AssembledSystem,
    pub dt: f64,
    beta: f64,
    gamma: f64,
    tol: f64,
    lhs: CsrMatrix,
    lhs_chol: EnvelopeCholesky,
    mass_chol: EnvelopeCholesky,
    pub last_solve: SolveStats,
}

impl<'a> Integrator<'a> {
    pub fn new(sys: &'a AssembledSystem, cfg: &SimConfig) -> Result<Self> {
        cfg.validate()?;
        let dt = cfg.dt;
        let lhs = CsrMatrix::linear_combination(&[
            (1.0, &sys.mass),
            (cfg.newmark_gamma * dt, &sys.damping),
            (cfg.newmark_beta * dt * dt, &sys.stiffness),
        ]);
        Ok(Integrator {
            sys,
            dt,
            beta: cfg.newmark_beta,
            gamma: cfg.newmark_gamma,
            tol: cfg.solver_tol,
            lhs_chol: EnvelopeCholesky::factor(&lhs)?,
            lhs,
            mass_chol: EnvelopeCholesky::factor(&sys.mass)?,
            last_solve: SolveStats { iterations: 0, relative_residual: 0.0 },
        })
    }

    /// State with the acceleration consistent with `M a = f - K u - C v`.
    pub fn initial_state(&self, u: Vec<f64>, v: Vec<f64>, f: Option<&[f64]>) -> DynState {
        let mut rhs = f.map_or_else(|| vec![0.0; u.len()], <[f64]>::to_vec);
        let (ku, cv) = (self.sys.stiffness.mul(&u), self.sys.damping.mul(&v));
        for i in 0..rhs.len() {
            rhs[i] -= ku[i] + cv[i];
        }
        let a = self.mass_chol.solve(&rhs);
        DynState { u, v, a }
    }

    /// One step; `f_next` is the load at the new time level.
    pub fn step(&mut self, s: &DynState, f_next: Option<&[f64]>) -> Result<DynState> {
        let (dt, b, g) = (self.dt, self.beta, self.gamma);
        let n = s.u.len();
        let mut up = vec![0.0; n];
        let mut vp = vec![0.0; n];
        for i in 0..n {
            up[i] = s.u[i] + dt * s.v[i] + (0.5 - b) * dt * dt * s.a[i];
            vp[i] = s.v[i] + (1.0 - g) * dt * s.a[i];
        }
        let (ku, cv) = (self.sys.stiffness.mul(&up), self.sys.damping.mul(&vp));
        let mut rhs: Vec<f64> = f_next.map_or_else(|| vec![0.0; n], <[f64]>::to_vec);
        for i in 0..n {
            rhs[i] -= ku[i] + cv[i];
        }
        let mut a = self.lhs_chol.solve(&rhs);
        let chol = &self.lhs_chol;
        self.last_solve = pcg(&self.lhs, &rhs, &mut a, |r| chol.solve(r), self.tol, 200)?;
        let u = (0..n).map(|i| up[i] + b * dt * dt * a[i]).collect();
        let v = (0..n).map(|i| vp[i] + g * dt * a[i]).collect();
        Ok(DynState { u, v, a })
    }
}

/// Energies and cumulative dissipation `int_0^t v^T C v` (trapezoid per
/// step) at the sample times.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyTrace {
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub dissipation_cum: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<(Vec<f64>, Vec<f64>)>,
    pub fit: Option<DecayFit>,
}

impl EnergyTrace {
    pub fn e0(&self) -> f64 {
        self.energies.first().copied().unwrap_or(0.0)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,E,dissipation_cum\n");
        for i in 0..self.times.len() {
            s.push_str(&format!("{:.12e},{:.16e},{:.16e}\n", self.times[i], self.energies[i], self.dissipation_cum[i]));
        }
        s
    }
}

/// Load at step `n` (time `t0 + n dt`), written into the buffer.
pub type Forcing<'f> = &'f dyn Fn(usize, &mut [f64]);

/// Integrate from `init` over `cfg.t_end`, optionally forced.
pub fn simulate_forced(
    sys: &AssembledSystem,
    init: &DynState,
    cfg: &SimConfig,
    forcing: Option<Forcing>,
) -> Result<(EnergyTrace, DynState)> {
    let mut integ = Integrator::new(sys, cfg)?;
    let n = sys.n();
    let mut fbuf = vec![0.0; n];
    let mut state = init.clone();
    let mut trace = EnergyTrace::default();
    let mut cum = 0.0;
    let record = |trace: &mut EnergyTrace, k: usize, s: &DynState, cum: f64| {
        trace.times.push(k as f64 * cfg.dt);
        trace.energies.push(energy(sys, &s.u, &s.v));
        trace.dissipation_cum.push(cum);
        if cfg.store_states {
            trace.states.push((s.u.clone(), s.v.clone()));
        }
    };
    record(&mut trace, 0, &state, cum);
    let steps = cfg.n_steps();
    let mut pow_prev = sys.damping.quad_form(&state.v);
    for k in 1..=steps {
        let f = forcing.map(|f| {
            fbuf.iter_mut().for_each(|x| *x = 0.0);
            f(k, &mut fbuf);
            fbuf.as_slice()
        });
        state = integ.step(&state, f)?;
        let pow = sys.damping.quad_form(&state.v);
        cum += 0.5 * cfg.dt * (pow_prev + pow);
        pow_prev = pow;
        if k % cfg.sample_stride == 0 || k == steps {
            record(&mut trace, k, &state, cum);
        }
    }
    Ok((trace, state))
}

/// Free (unforced) evolution from `(u0, v0)`.
pub fn simulate(sys: &AssembledSystem, u0: &[f64], v0: &[f64], cfg: &SimConfig) -> Result<(EnergyTrace, DynState)> {
    let integ = Integrator::new(sys, cfg)?;
    let init = integ.initial_state(u0.to_vec(), v0.to_vec(), None);
    simulate_forced(sys, &init, cfg, None)
}

/// `max_n |E_{n+1} - E_n + d_n| / E(0)` over consecutive samples.
pub fn energy_balance_check(trace: &EnergyTrace) -> f64 {
    let e0 = trace.e0();
    let scale = if e0 > 0.0 { e0 } else { 1.0 };
    trace
        .energies
        .windows(2)
        .zip(trace.dissipation_cum.windows(2))
        .map(|(e, d)| (e[1] - e[0] + (d[1] - d[0])).abs() / scale)
        .fold(0.0, f64::max)
}

/// Largest relative energy deviation from `E(0)`.
pub fn energy_drift(trace: &EnergyTrace) -> f64 {
    let e0 = trace.e0();
    trace.energies.iter().map(|e| (e - e0).abs() / e0).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub c1: f64,
    pub c2: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares fit `log E = log(c1 E(0)) - c2 t` on the samples in
/// `window`, using local maxima of `E` when there are at least three.
pub fn decay_fit(trace: &EnergyTrace, window: (f64, f64)) -> Result<DecayFit> {
    let e0 = trace.e0();
    if !(e0 > 0.0) {
        return Err(Error::InvalidParameter("decay fit needs E(0) > 0".into()));
    }
    let floor = 1e2 * f64::EPSILON * e0;
    let idx: Vec<usize> = (0..trace.times.len())
        .filter(|&i| trace.times[i] >= window.0 - 1e-12 && trace.times[i] <= window.1 + 1e-12)
        .take_while(|&i| trace.energies[i] > floor)
        .collect();
    let e = &trace.energies;
    let maxima: Vec<usize> = idx
        .iter()
        .copied()
        .filter(|&i| i > 0 && i + 1 < e.len() && e[i] >= e[i - 1] && e[i] >= e[i + 1] && e[i] > e[i + 1].min(e[i - 1]))
        .collect();
    let pts = if maxima.len() >= 3 { maxima } else { idx };
    if pts.len() < 2 {
        return Err(Error::InvalidParameter(format!("decay fit window {window:?} has {} usable samples", pts.len())));
    }
    let xs: Vec<f64> = pts.iter().map(|&i| trace.times[i]).collect();
    let ys: Vec<f64> = pts.iter().map(|&i| e[i].ln()).collect();
    let m = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / m, ys.iter().sum::<f64>() / m);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let ss_res: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if ss_tot <= 1e-24 * my.abs().max(1.0).powi(2) * m { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(DecayFit { c1: intercept.exp() / e0, c2: (-slope).max(0.0), r_squared, points: pts.len() })
}

/// `max_m E((m+1) T*) / E(m T*)` over the trace.
pub fn staircase_factor(trace: &EnergyTrace, t_star: f64) -> f64 {
    let at = |t: f64| {
        let i = trace.times.partition_point(|&s| s < t - 1e-12);
        trace.energies.get(i).copied()
    };
    let mut m = 0;
    let mut worst: f64 = 0.0;
    while let (Some(a), Some(b)) = (at(m as f64 * t_star), at((m + 1) as f64 * t_star)) {
        if (m + 1) as f64 * t_star > *trace.times.last().unwrap() + 1e-12 || a <= 0.0 {
            break;
        }
        worst = worst.max(b / a);
        m += 1;
    }
    worst
}

/// Smallest sampled `T*` whose staircase factor is below one.
pub fn observability_time(trace: &EnergyTrace) -> Option<f64> {
    trace.times.iter().skip(1).copied().find(|&t| {
        let g = staircase_factor(trace, t);
        g > 0.0 && g < 1.0 - 1e-12
    })
}

/// Terms of the integrated virial identity
/// `[<v, p u>_M]_0^T = int <p v, v>_M - J_p(u, u) - <C v, p u>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VirialReport {
    pub lhs: f64,
    pub kinetic: f64,
    pub potential: f64,
    pub damping: f64,
    pub residual: f64,
    /// `residual` divided by the largest term.
    pub relative: f64,
}

/// Time-integrated virial identity over stored states (trapezoid rule in
/// time). `p` multiplies nodal values, so `J_p(u, u) = u^T K (p u)`.
pub fn virial_identity_check(sys: &AssembledSystem, trace: &EnergyTrace, p: &ScalarField) -> Result<VirialReport> {
    if trace.states.len() != trace.times.len() || trace.states.len() < 2 {
        return Err(Error::InvalidParameter("virial check needs stored states at every sample".into()));
    }
    let map = &sys.dof_map;
    let pn: Vec<f64> = map.free_dofs().iter().map(|&g| p.0[g / map.per_vertex()]).collect();
    let scale = |x: &[f64]| -> Vec<f64> { x.iter().zip(&pn).map(|(a, b)| a * b).collect() };
    let terms: Vec<[f64; 4]> = trace
        .states
        .iter()
        .map(|(u, v)| {
            let (pu, pv) = (scale(u), scale(v));
            [
                sys.mass.bilinear(v, &pu),
                sys.mass.bilinear(&pv, v),
                sys.stiffness.bilinear(u, &pu),
                sys.damping.bilinear(v, &pu),
            ]
        })
        .collect();
    let mut int = [0.0; 3];
    for k in 1..terms.len() {
        let h = trace.times[k] - trace.times[k - 1];
        for j in 0..3 {
            int[j] += 0.5 * h * (terms[k][j + 1] + terms[k - 1][j + 1]);
        }
    }
    let lhs = terms.last().unwrap()[0] - terms[0][0];
    let residual = (lhs - (int[0] - int[1] - int[2])).abs();
    let big = [lhs.abs(), int[0].abs(), int[1].abs(), int[2].abs()].into_iter().fold(0.0, f64::max);
    Ok(VirialReport {
        lhs,
        kinetic: int[0],
        potential: int[1],
        damping: int[2],
        residual,
        relative: if big > 0.0 { residual / big } else { 0.0 },
    })
}

/// Per-face density
/// `2 b(S(W1), G(V, DW1)) + 2 b(S(W2), G(V, DW2)) + 4 v |phi|^2 + v |Dw2|^2`.
pub fn e_density(geom: &Geometry, xi: &ShellState, v_field: &TangentField, beta: f64) -> Result<FaceScalar> {
    let dv = geom.covariant_differential(v_field);
    let dw1 = geom.covariant_differential(&xi.w1_vec);
    let dw2 = geom.covariant_differential(&xi.w2_vec);
    let st = face_strains(geom, xi)?;
    Ok(FaceScalar(
        (0..geom.n_faces())
            .map(|f| {
                let v = 0.5 * dv.0[f].trace();
                let (s1, s2) = (sym2(&dw1.0[f]), sym2(&dw2.0[f]));
                2.0 * b_local(&s1, &g_map_local(&dv.0[f], &dw1.0[f]), beta)
                    + 2.0 * b_local(&s2, &g_map_local(&dv.0[f], &dw2.0[f]), beta)
                    + 4.0 * v * st[f].phi0.norm_squared()
                    + v * st[f].dw2.norm_squared()
            })
            .collect(),
    ))
}

/// Discrete lower-order bound for a certified escape field: the smallest
/// `C_lo >= 0` with `int b(S, G(V, DW)) - sigma1 int b(S, S) + C_lo |W|^2 >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesBCertificate {
    pub sigma1: f64,
    pub c_lo: f64,
    pub min_eig: f64,
}

/// Matrices over clamped tangent fields of `int b(S(W), G(V, DW))`
/// (symmetrized), `int b(S(W), S(W))` and `int |W|^2`.
pub fn des_b_forms(geom: &Geometry, v_field: &TangentField, beta: f64) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DofMap)> {
    let map = DofMap::new(geom.n_vertices(), 2, geom.mesh().boundary_mask())?;
    let n = map.n_free();
    let dv = geom.covariant_differential(v_field);
    let (mut bg, mut bs) = (DMatrix::zeros(n, n), DMatrix::zeros(n, n));
    for (f, tri) in geom.mesh().triangles().iter().enumerate() {
        let area = geom.mesh().face_area(f);
        let d: Vec<Mat2> = (0..6)
            .map(|k| {
                let mut w = [Vec2::zeros(); 3];
                w[k / 2][k % 2] = 1.0;
                geom.face_differential_local(f, w)
            })
            .collect();
        for i in 0..6 {
            let Some(gi) = map.index(2 * tri[i / 2] + i % 2) else { continue };
            for j in 0..6 {
                let Some(gj) = map.index(2 * tri[j / 2] + j % 2) else { continue };
                let si = sym2(&d[i]);
                bg[(gi, gj)] += 0.5 * area * (b_local(&si, &g_map_local(&dv.0[f], &d[j]), beta) + b_local(&sym2(&d[j]), &g_map_local(&dv.0[f], &d[i]), beta));
                bs[(gi, gj)] += area * b_local(&si, &sym2(&d[j]), beta);
            }
        }
    }
    let m = crate::forms::tangent_forms(geom, beta)?.mass.to_dense();
    Ok((bg, bs, m, map))
}

pub fn des_b_certificate(geom: &Geometry, escape: &EscapeField, params: &MaterialParams) -> Result<DesBCertificate> {
    if !escape.certificate.pass {
        return Err(Error::Uncertified(format!("escape margin {:.3e}", escape.certificate.margin)));
    }
    let beta = params.beta();
    let sigma1 = escape.certificate.v_min - (1.0 + 2.0 * beta) * escape.certificate.l_max / 2.0;
    let (bg, bs, m, _) = des_b_forms(geom, &escape.field, beta)?;
    let q = &bg - &bs * sigma1;
    let (vals, _) = dense_generalized(&q, &m)?;
    let scale = bg.amax().max(bs.amax() * sigma1.abs()) / m.amax().max(f64::MIN_POSITIVE);
    let min_eig = vals[0];
    let c_lo = if min_eig >= -1e-10 * scale { 0.0 } else { -min_eig };
    Ok(DesBCertificate { sigma1, c_lo, min_eig })
}

/// Certify `V` on all faces and compute its lower-order constant.
pub fn des_b_for_field(geom: &Geometry, v_field: &TangentField, lambda0: f64, params: &MaterialParams) -> Result<DesBCertificate> {
    let esc = check_escape(geom, v_field, None, lambda0, params.beta())?;
    des_b_certificate(geom, &esc, params)
}

/// `int e dx` of a state: integrated density.
pub fn e_integral(geom: &Geometry, xi: &ShellState, v_field: &TangentField, beta: f64) -> Result<f64> {
    Ok(geom.integrate(&e_density(geom, xi, v_field, beta)?))
}

/// Dense Newmark oracle with LU solves; returns `(u, v)` after `steps`.
pub fn dense_newmark(
    m: &DMatrix<f64>,
    c: &DMatrix<f64>,
    k: &DMatrix<f64>,
    u0: &[f64],
    v0: &[f64],
    dt: f64,
    steps: usize,
) -> (Vec<f64>, Vec<f64>) {
    use nalgebra::DVector;
    let (b, g) = (0.25, 0.5);
    let mut u = DVector::from_column_slice(u0);
    let mut v = DVector::from_column_slice(v0);
    let mut a = m.clone().lu().solve(&(-(k * &u) - c * &v)).expect("mass");
    let lu = (m + c * (g * dt) + k * (b * dt * dt)).lu();
    for _ in 0..steps {
        let up = &u + &v * dt + &a * ((0.5 - b) * dt * dt);
        let vp = &v + &a * ((1.0 - g) * dt);
        let an = lu.solve(&(-(k * &up) - c * &vp)).expect("lhs");
        u = up + &an * (b * dt * dt);
        v = vp + &an * (g * dt);
        a = an;
    }
    (u.iter().copied().collect(), v.iter().copied().collect())
}

/// Smooth compactly supported initial displacement: the bump
/// `exp(1 - 1 / (1 - r^2))` of the given radius in `W1`, `W2` and `w1`
/// (`w2 = 0`), clamped on the boundary.
pub fn bump_state(geom: &Geometry, center: &crate::mesh::Vec3, radius: f64, amplitude: f64) -> ShellState {
    let mut s = ShellState::zeros(geom.n_vertices());
    for (i, p) in geom.mesh().vertices().iter().enumerate() {
        let r = (p - center).norm() / radius;
        if r < 1.0 {
            let b = amplitude * (1.0 - 1.0 / (1.0 - r * r)).exp();
            s.w1.0[i] = b;
            s.w1_vec.0[i] = Vec2::new(0.5, 0.3) * b;
            s.w2_vec.0[i] = Vec2::new(-0.2, 0.4) * b;
        }
    }
    s.clamp(geom.mesh().boundary_mask());
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigen::smallest_generalized;
    use crate::escape::field_from_ambient;
    use crate::forms::assemble;
    use crate::mesh::{unit_square_plate, Vec3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plate(n: usize) -> Geometry {
        Geometry::new(unit_square_plate(n).unwrap()).unwrap()
    }

    fn params() -> MaterialParams {
        MaterialParams::new(1.0, 0.3, 0.1).unwrap()
    }

    fn system(g: &Geometry, a: f64) -> AssembledSystem {
        assemble(g, &params(), &ScalarField::constant(g.n_vertices(), a)).unwrap()
    }

    fn bump(g: &Geometry, sys: &AssembledSystem) -> Vec<f64> {
        sys.dof_map.state_to_free(&bump_state(g, &Vec3::new(0.5, 0.5, 0.0), 0.45, 1.0))
    }

    #[test]
    fn zero_state_stays_zero() {
        let g = plate(4);
        let sys = system(&g, 1.0);
        let z = vec![0.0; sys.n()];
        let (tr, s) = simulate(&sys, &z, &z, &SimConfig::new(0.01, 0.1)).unwrap();
        assert!(s.u.iter().chain(&s.v).all(|&x| x == 0.0));
        assert!(tr.energies.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn eigenmode_phase_matches_newmark_closed_form() {
        let g = plate(4);
        let sys = system(&g, 0.0);
        let e = smallest_generalized(&sys.stiffness, &sys.mass, 1, 1e-13, 1000).unwrap();
        let (lam, phi) = (e.values[0], e.vectors[0].clone());
        let dt = 0.05;
        let cfg = SimConfig { store_states: true, ..SimConfig::new(dt, 200.0 * dt) };
        let (tr, _) = simulate(&sys, &phi, &vec![0.0; sys.n()], &cfg).unwrap();
        // amplification of the trapezoidal rule: tan(theta / 2) = omega dt / 2
        let theta = 2.0 * (lam.sqrt() * dt / 2.0).atan();
        let scale = phi.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (n, (u, _)) in tr.states.iter().enumerate() {
            let c = (n as f64 * theta).cos();
            let err = u.iter().zip(&phi).map(|(a, b)| (a - c * b).abs()).fold(0.0, f64::max);
            assert!(err < 1e-8 * scale, "step {n}: {err}");
        }
    }

    #[test]
    fn six_dof_system_matches_dense_oracle() {
        let g = plate(2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = ScalarField((0..g.n_vertices()).map(|_| rng.gen_range(0.2..2.0)).collect());
        let sys = assemble(&g, &params(), &a).unwrap();
        assert_eq!(sys.n(), 6);
        let u0: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v0: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let (dt, steps) = (0.01, 80);
        let (_, s) = simulate(&sys, &u0, &v0, &SimConfig::new(dt, steps as f64 * dt)).unwrap();
        let (u, v) = dense_newmark(&sys.mass.to_dense(), &sys.damping.to_dense(), &sys.stiffness.to_dense(), &u0, &v0, dt, steps);
        for i in 0..6 {
            assert!((s.u[i] - u[i]).abs() < 1e-10 * (1.0 + u[i].abs()));
            assert!((s.v[i] - v[i]).abs() < 1e-10 * (1.0 + v[i].abs()));
        }
    }

    #[test]
    fn undamped_energy_is_conserved() {
        let g = plate(6);
        let sys = system(&g, 0.0);
        let u0 = bump(&g, &sys);
        let (tr, _) = simulate(&sys, &u0, &u0, &SimConfig::new(0.01, 3.0)).unwrap();
        assert!(energy_drift(&tr) < 1e-9);
        assert!(energy_balance_check(&tr) < 1e-9);
        let fit = decay_fit(&tr, (0.3, 3.0)).unwrap();
        assert!(fit.c2 < 1e-6);
    }

    #[test]
    fn uniform_damping_decreases_energy() {
        let g = plate(6);
        let sys = system(&g, 0.5);
        let v0 = bump(&g, &sys);
        let (tr, _) = simulate(&sys, &vec![0.0; sys.n()], &v0, &SimConfig::new(0.01, 2.0)).unwrap();
        for w in tr.energies.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn balance_residual_is_second_order() {
        let g = plate(6);
        let sys = system(&g, 1.0);
        let u0 = bump(&g, &sys);
        let run = |dt: f64| {
            let cfg = SimConfig { sample_stride: (0.05 / dt).round() as usize, ..SimConfig::new(dt, 1.0) };
            energy_balance_check(&simulate(&sys, &u0, &vec![0.0; sys.n()], &cfg).unwrap().0)
        };
        let (r1, r2) = (run(0.01), run(0.005));
        let ratio = r1 / r2;
        assert!((3.5..4.5).contains(&ratio), "{r1} {r2} {ratio}");
    }

    #[test]
    fn one_step_from_rest_balances() {
        let g = plate(5);
        let sys = system(&g, 1.0);
        let u0 = bump(&g, &sys);
        let dt = 1e-3;
        let (tr, s) = simulate(&sys, &u0, &vec![0.0; sys.n()], &SimConfig::new(dt, dt)).unwrap();
        assert_eq!(tr.energies.len(), 2);
        // the scheme dissipates exactly dt/4 (v0 + v1)^T C (v0 + v1); the
        // trapezoid differs from it by dt/4 v1^T C v1 when v0 = 0
        let gap = dt / 4.0 * sys.damping.quad_form(&s.v) / tr.e0();
        assert!((energy_balance_check(&tr) - gap).abs() < 1e-14, "{} vs {gap}", energy_balance_check(&tr));
    }

    #[test]
    fn chained_runs_are_bitwise_equal() {
        let g = plate(5);
        let sys = system(&g, 0.3);
        let u0 = bump(&g, &sys);
        let cfg1 = SimConfig::new(0.01, 0.5);
        let cfg2 = SimConfig::new(0.01, 1.0);
        let integ = Integrator::new(&sys, &cfg1).unwrap();
        let init = integ.initial_state(u0.clone(), vec![0.0; sys.n()], None);
        let (_, mid) = simulate_forced(&sys, &init, &cfg1, None).unwrap();
        let (_, end_a) = simulate_forced(&sys, &mid, &cfg1, None).unwrap();
        let (_, end_b) = simulate_forced(&sys, &init, &cfg2, None).unwrap();
        assert_eq!(end_a, end_b);
    }

    fn synthetic(f: impl Fn(f64) -> f64, times: &[f64]) -> EnergyTrace {
        EnergyTrace {
            times: times.to_vec(),
            energies: times.iter().map(|&t| f(t)).collect(),
            dissipation_cum: vec![0.0; times.len()],
            ..Default::default()
        }
    }

    #[test]
    fn decay_fit_on_exact_data() {
        let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
        let tr = synthetic(|t| 5.0 * (-0.3 * t).exp(), &times);
        let fit = decay_fit(&tr, (1.0, 10.0)).unwrap();
        assert!((fit.c1 * tr.e0() - 5.0).abs() < 1e-10);
        assert!((fit.c2 - 0.3).abs() < 1e-10 && (fit.r_squared - 1.0).abs() < 1e-10);
        // staircase E(m T) = gamma^m
        let (gamma, t) = (0.6f64, 2.0);
        let stair: Vec<f64> = (0..=8).map(|m| m as f64 * t).collect();
        let tr = synthetic(|s| gamma.powf(s / t), &stair);
        let fit = decay_fit(&tr, (0.0, 16.0)).unwrap();
        assert!((fit.c2 - (1.0 / gamma).ln() / t).abs() < 1e-12);
        assert!((staircase_factor(&tr, t) - gamma).abs() < 1e-12);
        assert_eq!(observability_time(&tr), Some(t));
    }

    #[test]
    fn decay_fit_truncates_underflow() {
        let times: Vec<f64> = (0..=100).map(|i| i as f64).collect();
        let tr = synthetic(|t| (-2.0 * t).exp(), &times);
        let fit = decay_fit(&tr, (0.0, 100.0)).unwrap();
        assert!((fit.c2 - 2.0).abs() < 1e-9);
        assert!(fit.points < 20);
    }

    #[test]
    fn virial_identity_cases() {
        let g = plate(4);
        let sys = system(&g, 0.0);
        let e = smallest_generalized(&sys.stiffness, &sys.mass, 1, 1e-13, 1000).unwrap();
        let cfg = SimConfig { store_states: true, ..SimConfig::new(0.002, 2.0) };
        let (tr, _) = simulate(&sys, &e.vectors[0], &vec![0.0; sys.n()], &cfg).unwrap();
        let zero = virial_identity_check(&sys, &tr, &ScalarField::zeros(g.n_vertices())).unwrap();
        assert_eq!(zero.residual, 0.0);
        let one = virial_identity_check(&sys, &tr, &ScalarField::constant(g.n_vertices(), 1.0)).unwrap();
        assert!(one.relative < 1e-6, "{one:?}");
    }

    #[test]
    fn des_b_radial_is_exactly_zero() {
        let g = plate(5);
        let v = field_from_ambient(&g, |p| p - Vec3::new(0.4, 0.55, 0.0));
        let cert = des_b_for_field(&g, &v, 2.0, &params()).unwrap();
        assert_eq!(cert.c_lo, 0.0);
        assert!((cert.sigma1 - 1.0).abs() < 1e-12);
        let xi = bump_state(&g, &Vec3::new(0.5, 0.5, 0.0), 0.4, 1.0);
        let zero = TangentField(vec![Vec2::zeros(); g.n_vertices()]);
        assert!(e_density(&g, &xi, &zero, 0.75).unwrap().0.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn des_b_conformal_field_bounded() {
        // V = z + c z^2 is conformal: v = 1 + 2c Re z, l = 2c Im z
        let c = 0.1;
        let field = |g: &Geometry| {
            field_from_ambient(g, |p| {
                let (x, y) = (p.x - 0.5, p.y - 0.5);
                Vec3::new(x + c * (x * x - y * y), y + c * 2.0 * x * y, 0.0)
            })
        };
        let mut prev = None;
        for n in [6, 12] {
            let g = plate(n);
            let cert = des_b_for_field(&g, &field(&g), 1.5, &params()).unwrap();
            assert!(cert.c_lo.is_finite() && cert.sigma1 > 0.0);
            if let Some(p) = prev {
                assert!(cert.c_lo <= 2.0 * p + 1.0, "{} vs {p}", cert.c_lo);
            }
            prev = Some(cert.c_lo);
        }
    }
}
