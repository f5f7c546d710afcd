//! Exact controllability by Russell's principle: two damped solves define
//! the map `K`, and `L = I - K` is inverted by Neumann iteration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{decay_fit, simulate, simulate_forced, DynState, Integrator, SimConfig};
use crate::error::{Error, Result};
use crate::forms::{energy, AssembledSystem};

/// Estimates within this distance of one count as non-contractive.
pub const NON_CONTRACTIVE_SLACK: f64 = 1e-9;

/// A `(displacement, velocity)` pair on the free degrees of freedom.
pub type Pair = (Vec<f64>, Vec<f64>);

/// `sqrt(u^T K u + v^T M v)`, i.e. `sqrt(2E)`.
pub fn energy_norm(sys: &AssembledSystem, p: &Pair) -> f64 {
    (2.0 * energy(sys, &p.0, &p.1)).max(0.0).sqrt()
}

pub fn energy_inner(sys: &AssembledSystem, a: &Pair, b: &Pair) -> f64 {
    sys.stiffness.bilinear(&a.0, &b.0) + sys.mass.bilinear(&a.1, &b.1)
}

fn lincomb(alpha: f64, a: &Pair, beta: f64, b: &Pair) -> Pair {
    (
        a.0.iter().zip(&b.0).map(|(x, y)| alpha * x + beta * y).collect(),
        a.1.iter().zip(&b.1).map(|(x, y)| alpha * x + beta * y).collect(),
    )
}

fn scaled(s: f64, a: &Pair) -> Pair {
    (a.0.iter().map(|x| s * x).collect(), a.1.iter().map(|x| s * x).collect())
}

/// Worker count: `NAGHDI_THREADS` if set, otherwise available parallelism.
pub fn worker_count() -> usize {
    std::env::var("NAGHDI_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Damped propagation over a fixed horizon with one factorization.
pub struct Propagator<'a> {
    integ: Integrator<'a>,
    steps: usize,
}

impl<'a> Propagator<'a> {
    pub fn new(sys: &'a AssembledSystem, horizon: f64, dt: f64) -> Result<Self> {
        let cfg = SimConfig::new(dt, horizon);
        let steps = (horizon / dt).round() as usize;
        if steps == 0 || ((steps as f64) * dt - horizon).abs() > 1e-9 * horizon {
            return Err(Error::InvalidParameter(format!("horizon {horizon} is not a multiple of dt = {dt}")));
        }
        Ok(Propagator { integ: Integrator::new(sys, &cfg)?, steps })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Final state; with `record`, the velocity at every step `0..=N`.
    pub fn run(&mut self, init: &Pair, record: bool) -> Result<(Pair, Vec<Vec<f64>>)> {
        let mut s: DynState = self.integ.initial_state(init.0.clone(), init.1.clone(), None);
        let mut hist = Vec::new();
        if record {
            hist.reserve(self.steps + 1);
            hist.push(s.v.clone());
        }
        for _ in 0..self.steps {
            s = self.integ.step(&s, None)?;
            if record {
                hist.push(s.v.clone());
            }
        }
        Ok(((s.u, s.v), hist))
    }

    /// `K(eta) = (-theta(T), theta_t(T))` where `theta` starts from
    /// `(-eta(T), eta_t(T))`.
    pub fn k_map(&mut self, eta: &Pair) -> Result<Pair> {
        Ok(self.k_map_recorded(eta, false)?.0)
    }

    fn k_map_recorded(&mut self, eta: &Pair, record: bool) -> Result<(Pair, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let ((ut, vt), eta_v) = self.run(eta, record)?;
        let theta0 = (ut.iter().map(|x| -x).collect(), vt);
        let ((th, tht), theta_v) = self.run(&theta0, record)?;
        Ok(((th.iter().map(|x| -x).collect(), tht), eta_v, theta_v))
    }
}

pub fn k_map(sys: &AssembledSystem, eta: &Pair, horizon: f64, dt: f64) -> Result<Pair> {
    Propagator::new(sys, horizon, dt)?.k_map(eta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KNormEstimate {
    /// Largest power-iteration value of `|K x| / |x|` over the probes.
    pub estimate: f64,
    pub per_probe: Vec<f64>,
    /// `c1 exp(-c2 T)` from a decay fit of a calibration run, if available.
    pub decay_bound: Option<f64>,
}

fn random_pair(n: usize, rng: &mut ChaCha8Rng) -> Pair {
    ((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
}

fn power_iteration(sys: &AssembledSystem, horizon: f64, dt: f64, start: Pair, iters: usize) -> Result<f64> {
    let mut prop = Propagator::new(sys, horizon, dt)?;
    let n0 = energy_norm(sys, &start);
    if n0 == 0.0 {
        return Ok(0.0);
    }
    let mut x = scaled(1.0 / n0, &start);
    let mut est = 0.0;
    for _ in 0..iters {
        let y = prop.k_map(&x)?;
        let ny = energy_norm(sys, &y);
        if ny == 0.0 {
            return Ok(0.0);
        }
        let done = (ny - est).abs() <= 1e-7 * ny;
        est = ny;
        x = scaled(1.0 / ny, &y);
        if done {
            break;
        }
    }
    Ok(est)
}

/// Energy-norm estimate of `|K|` by power iteration from `n_probes`
/// random starts, run concurrently.
pub fn estimate_k_norm(sys: &AssembledSystem, horizon: f64, dt: f64, n_probes: usize, seed: u64) -> Result<KNormEstimate> {
    if n_probes == 0 {
        return Err(Error::InvalidParameter("n_probes must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let starts: Vec<Pair> = (0..n_probes).map(|_| random_pair(sys.n(), &mut rng)).collect();
    let workers = worker_count().min(n_probes).max(1);
    let mut per_probe = vec![0.0; n_probes];
    let chunks: Vec<Vec<usize>> = (0..workers).map(|w| (w..n_probes).step_by(workers).collect()).collect();
    let results: Vec<Result<Vec<(usize, f64)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = chunks
            .iter()
            .map(|ids| {
                let starts = &starts;
                scope.spawn(move || {
                    ids.iter().map(|&i| Ok((i, power_iteration(sys, horizon, dt, starts[i].clone(), 60)?))).collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("probe worker panicked")).collect()
    });
    for r in results {
        for (i, v) in r? {
            per_probe[i] = v;
        }
    }
    let estimate = per_probe.iter().copied().fold(0.0, f64::max);
    let decay_bound = {
        let cfg = SimConfig { sample_stride: 1, ..SimConfig::new(dt, horizon) };
        let (tr, _) = simulate(sys, &starts[0].0, &starts[0].1, &cfg)?;
        decay_fit(&tr, (0.1 * horizon, horizon)).ok().map(|f| f.c1 * (-f.c2 * horizon).exp())
    };
    Ok(KNormEstimate { estimate, per_probe, decay_bound })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlProblem {
    /// Initial data to be steered to rest.
    pub initial: Pair,
    pub horizon: f64,
    pub dt: f64,
    /// Relative tolerance on `|L(eta) - xi| / |xi|`.
    pub tol: f64,
    pub max_iters: usize,
    pub n_probes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlResult {
    /// `F_n` at steps `0..=N`, free-dof vectors (zero off the support of `a`).
    #[serde(skip)]
    pub control: Vec<Vec<f64>>,
    /// Neumann residuals `|L(eta_k) - xi|`, relative to `|xi|`.
    pub iterates: Vec<f64>,
    pub k_norm_estimate: f64,
    pub decay_bound: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub initial_energy: f64,
    /// Energy of the replayed undamped forced solution at `T`.
    pub final_state_energy: f64,
    /// `|L(eta) - xi| / |xi|` for the returned `eta`.
    pub data_mismatch: f64,
    #[serde(skip)]
    pub eta: Pair,
}

impl ControlResult {
    /// Successive residual ratios.
    pub fn ratios(&self) -> Vec<f64> {
        self.iterates.windows(2).map(|w| w[1] / w[0]).collect()
    }
}

/// The forcing `F_n = -C (eta_t(t_n) + theta_t(T - t_n))`.
pub fn synthesize_control(sys: &AssembledSystem, eta_v: &[Vec<f64>], theta_v: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = eta_v.len() - 1;
    (0..=n)
        .map(|k| {
            let s: Vec<f64> = eta_v[k].iter().zip(&theta_v[n - k]).map(|(a, b)| a + b).collect();
            sys.damping.mul(&s).into_iter().map(|x| -x).collect()
        })
        .collect()
}

/// Undamped forced replay from `xi` with `F`; returns the state at `T`.
pub fn replay(sys: &AssembledSystem, xi: &Pair, control: &[Vec<f64>], dt: f64) -> Result<DynState> {
    let undamped = AssembledSystem { damping: crate::sparse::CsrMatrix::zeros(sys.n()), ..sys.clone() };
    let steps = control.len() - 1;
    let cfg = SimConfig::new(dt, steps as f64 * dt);
    let init = Integrator::new(&undamped, &cfg)?.initial_state(xi.0.clone(), xi.1.clone(), Some(&control[0]));
    let f = |k: usize, buf: &mut [f64]| buf.copy_from_slice(&control[k]);
    Ok(simulate_forced(&undamped, &init, &cfg, Some(&f))?.1)
}

pub fn russell_solve(sys: &AssembledSystem, problem: &ControlProblem) -> Result<ControlResult> {
    let xi = &problem.initial;
    let xi_norm = energy_norm(sys, xi);
    let n = sys.n();
    let mut prop = Propagator::new(sys, problem.horizon, problem.dt)?;
    if xi_norm == 0.0 {
        return Ok(ControlResult {
            control: vec![vec![0.0; n]; prop.steps() + 1],
            iterates: vec![],
            k_norm_estimate: 0.0,
            decay_bound: None,
            iterations: 0,
            converged: true,
            initial_energy: 0.0,
            final_state_energy: 0.0,
            data_mismatch: 0.0,
            eta: (vec![0.0; n], vec![0.0; n]),
        });
    }
    let est = estimate_k_norm(sys, problem.horizon, problem.dt, problem.n_probes, problem.seed)?;
    if est.estimate >= 1.0 - NON_CONTRACTIVE_SLACK {
        return Err(Error::HorizonTooShort { k_norm: est.estimate });
    }
    let mut eta = xi.clone();
    let mut iterates = Vec::new();
    let mut converged = false;
    for _ in 0..problem.max_iters {
        let k = prop.k_map(&eta)?;
        let next = lincomb(1.0, xi, 1.0, &k);
        // L(eta) - xi = eta - K eta - xi = eta - next
        let res = energy_norm(sys, &lincomb(1.0, &eta, -1.0, &next)) / xi_norm;
        iterates.push(res);
        eta = next;
        if res < problem.tol {
            converged = true;
            break;
        }
    }
    let (k_eta, eta_v, theta_v) = prop.k_map_recorded(&eta, true)?;
    let l_eta = lincomb(1.0, &eta, -1.0, &k_eta);
    let data_mismatch = energy_norm(sys, &lincomb(1.0, &l_eta, -1.0, xi)) / xi_norm;
    let control = synthesize_control(sys, &eta_v, &theta_v);
    let end = replay(sys, &l_eta, &control, problem.dt)?;
    let result = ControlResult {
        control,
        iterations: iterates.len(),
        iterates,
        k_norm_estimate: est.estimate,
        decay_bound: est.decay_bound,
        converged,
        initial_energy: 0.5 * xi_norm * xi_norm,
        final_state_energy: energy(sys, &end.u, &end.v),
        data_mismatch,
        eta,
    };
    if !converged {
        return Err(Error::NeumannNotConverged { iterations: result.iterations, residual: *result.iterates.last().unwrap() });
    }
    Ok(result)
}
