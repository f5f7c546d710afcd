//! `naghdi`: mesh generation, escape certification, damped simulation,
//! identity checks and control synthesis.

mod config;
mod output;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use naghdi_core::control::{russell_solve, ControlProblem, ControlResult};
use naghdi_core::dynamics::{
    bump_state, decay_fit, energy_balance_check, energy_drift, observability_time, simulate, virial_identity_check, DecayFit,
    EnergyTrace, SimConfig, VirialReport,
};
use naghdi_core::escape::{
    build_escape_region, check_escape, collar_region, damping_from_region, field_from_ambient, radial_field, CertifyWith,
    EscapeCertificate, EscapeRegion,
};
use naghdi_core::forms::{assemble, korn_constants, AssembledSystem, KornConstants, MaterialParams};
use naghdi_core::geometry::{FrameRule, ScalarField};
use naghdi_core::mesh::{read_off, MeshKind};
use naghdi_core::{Error, Geometry, SurfaceMesh, Vec3};

use config::{FieldSpec, RegionSpec, RunConfig, UsageError};
use output::{off_text, OutDir, Provenance};

#[derive(Parser, Debug)]
#[command(name = "naghdi", version, about = "Damped Naghdi shells on triangulated surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a mesh and write it as OFF.
    Mesh(Common),
    /// Certify an escape vector field.
    EscapeCheck(Common),
    /// Damped simulation: energy trace and summary.
    Simulate(Common),
    /// Exponential decay fit of a damped run.
    Decay(Common),
    /// Energy balance and multiplier identity residuals.
    Identity(Common),
    /// Exact control to rest by the stabilization-to-control iteration.
    Control(Common),
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// `plate:N`, `annulus:N`, `cylinder:N`, `cap:N` or a path to an OFF file.
    #[arg(long, default_value = "plate:10")]
    mesh: String,
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "naghdi-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    #[arg(long)]
    a0: Option<f64>,
    /// `all`, `none`, `field:x,y,z` or `balls:N`.
    #[arg(long)]
    region: Option<String>,
    /// Control horizon.
    #[arg(long = "T")]
    horizon: Option<f64>,
}

/// Outcome of a command that ran to completion.
enum Verdict {
    Pass,
    Fail(String),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Verdict::Pass) => ExitCode::SUCCESS,
        Ok(Verdict::Fail(msg)) => {
            eprintln!("naghdi: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("naghdi: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    match e.downcast_ref::<Error>() {
        Some(
            Error::SolverNotConverged { .. }
            | Error::EigenNotConverged { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::NotEscapeCandidate { .. }
            | Error::Uncertified(_)
            | Error::OverlappingBalls(_)
            | Error::HorizonTooShort { .. }
            | Error::NeumannNotConverged { .. },
        ) => 2,
        _ => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<Verdict> {
    let (name, common) = match &cli.command {
        Command::Mesh(c) => ("mesh", c),
        Command::EscapeCheck(c) => ("escape-check", c),
        Command::Simulate(c) => ("simulate", c),
        Command::Decay(c) => ("decay", c),
        Command::Identity(c) => ("identity", c),
        Command::Control(c) => ("control", c),
    };
    let cfg = resolve_config(common)?;
    let mesh = load_mesh(&common.mesh)?;
    let prov = Provenance::new(name, &cfg.canonical(), &mesh)?;
    let mut out = OutDir::create(&common.out)?;
    let verdict = match cli.command {
        Command::Mesh(_) => cmd_mesh(&mesh, &prov, &mut out)?,
        Command::EscapeCheck(_) => cmd_escape_check(mesh, &cfg, &prov, &mut out)?,
        Command::Simulate(_) => cmd_simulate(mesh, &cfg, &prov, &mut out)?,
        Command::Decay(_) => cmd_decay(mesh, &cfg, &prov, &mut out)?,
        Command::Identity(_) => cmd_identity(mesh, &cfg, &prov, &mut out)?,
        Command::Control(_) => cmd_control(mesh, &cfg, &prov, &mut out)?,
    };
    for p in &out.written {
        println!("{}", p.display());
    }
    Ok(verdict)
}

fn resolve_config(c: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            RunConfig::parse(&text)?
        }
        None => RunConfig::default(),
    };
    let flags = [
        ("seed", c.seed.map(|s| s.to_string())),
        ("dt", c.dt.map(|x| x.to_string())),
        ("t_end", c.t_end.map(|x| x.to_string())),
        ("a0", c.a0.map(|x| x.to_string())),
        ("region", c.region.clone()),
        ("T", c.horizon.map(|x| x.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            cfg.set(k, &v)?;
        }
    }
    Ok(cfg)
}

fn load_mesh(spec: &str) -> anyhow::Result<SurfaceMesh> {
    if let Some((kind, res)) = spec.split_once(':') {
        if let Ok(kind) = kind.parse::<MeshKind>() {
            let n: usize = res.parse().map_err(|_| UsageError(format!("bad mesh resolution `{res}`")))?;
            if n < 4 {
                return Err(UsageError(format!("mesh resolution must be at least 4, got {n}")).into());
            }
            return Ok(kind.generate(n)?);
        }
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(UsageError(format!("`{spec}` is neither a generator (plate:N, annulus:N, cylinder:N, cap:N) nor a file")).into());
    }
    let file = fs::File::open(path).with_context(|| format!("opening {spec}"))?;
    Ok(read_off(BufReader::new(file))?)
}

fn geometry(mesh: SurfaceMesh, cfg: &RunConfig) -> anyhow::Result<Geometry> {
    let rule = match cfg.raw("frame") {
        "default" => FrameRule::default(),
        "axis-z" => FrameRule::AroundAxis(Vec3::z()),
        other => return Err(UsageError(format!("unknown frame rule `{other}` (default, axis-z)")).into()),
    };
    Ok(Geometry::with_rule(mesh, rule)?)
}

fn centroid(g: &Geometry) -> Vec3 {
    let v = g.mesh().vertices();
    v.iter().fold(Vec3::zeros(), |a, p| a + p) / v.len() as f64
}

fn lambda0(g: &Geometry, cfg: &RunConfig, p: &MaterialParams) -> anyhow::Result<(f64, Option<KornConstants>)> {
    match cfg.auto_f64("lambda0")? {
        Some(l) if l >= 1.0 => Ok((l, None)),
        Some(l) => Err(UsageError(format!("`lambda0` must be at least 1, got {l}")).into()),
        None => {
            let k = korn_constants(g, p.beta())?;
            Ok((k.lambda0, Some(k)))
        }
    }
}

fn cmd_mesh(mesh: &SurfaceMesh, prov: &Provenance, out: &mut OutDir) -> anyhow::Result<Verdict> {
    out.with_header("mesh.off", prov, &off_text(mesh)?)?;
    #[derive(Serialize)]
    struct MeshSummary {
        vertices: usize,
        faces: usize,
        boundary_vertices: usize,
        area: f64,
    }
    let summary = MeshSummary {
        vertices: mesh.n_vertices(),
        faces: mesh.n_faces(),
        boundary_vertices: mesh.boundary_vertices().len(),
        area: mesh.total_area(),
    };
    out.json("mesh.json", prov, &summary)?;
    Ok(Verdict::Pass)
}

#[derive(Serialize)]
struct EscapeReport {
    field: String,
    lambda0: f64,
    korn: Option<KornConstants>,
    certificate: Option<EscapeCertificate>,
    rejected: Option<String>,
    pass: bool,
}

fn cmd_escape_check(mesh: SurfaceMesh, cfg: &RunConfig, prov: &Provenance, out: &mut OutDir) -> anyhow::Result<Verdict> {
    let p = cfg.material()?;
    let g = geometry(mesh, cfg)?;
    let spec = FieldSpec::parse(cfg.raw("field"))?;
    let c0 = centroid(&g);
    let field = match spec {
        FieldSpec::Radial(at) => {
            let c = g.mesh().nearest_vertex(&at.unwrap_or(c0));
            let (f, defined) = radial_field(&g, c, f64::INFINITY);
            if defined.iter().any(|d| !d) {
                return Err(Error::InvalidMesh("radial field does not reach every vertex".into()).into());
            }
            f
        }
        FieldSpec::Rotation(at) => {
            let c = at.unwrap_or(c0);
            field_from_ambient(&g, |x| {
                let q = x - c;
                Vec3::new(-q.y, q.x, 0.0)
            })
        }
        FieldSpec::Shear(at) => {
            let c = at.unwrap_or(c0);
            field_from_ambient(&g, |x| {
                let q = x - c;
                Vec3::new(q.x, -q.y, 0.0)
            })
        }
    };
    let (l0, korn) = lambda0(&g, cfg, &p)?;
    let (certificate, rejected) = match check_escape(&g, &field, None, l0, p.beta()) {
        Ok(e) => (Some(e.certificate), None),
        Err(e @ Error::NotEscapeCandidate { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let pass = certificate.as_ref().is_some_and(|c| c.pass);
    let report = EscapeReport { field: cfg.raw("field").to_string(), lambda0: l0, korn, certificate, rejected, pass };
    out.json("certificate.json", prov, &report)?;
    Ok(if pass {
        Verdict::Pass
    } else {
        Verdict::Fail(report.rejected.unwrap_or_else(|| "field is not a certified escape field".into()))
    })
}

/// Balls of equal radius on a grid over the x-y bounding box.
fn grid_balls(g: &Geometry, n: usize) -> Vec<(Vec3, f64)> {
    let v = g.mesh().vertices();
    let (lo, hi) = v.iter().fold((v[0], v[0]), |(lo, hi), p| (lo.inf(p), hi.sup(p)));
    let k = (n as f64).sqrt().ceil() as usize;
    let (w, h) = ((hi.x - lo.x) / k as f64, (hi.y - lo.y) / k as f64);
    let z = 0.5 * (lo.z + hi.z);
    let r = 0.45 * w.min(h);
    (0..n)
        .map(|i| (Vec3::new(lo.x + w * ((i % k) as f64 + 0.5), lo.y + h * ((i / k) as f64 + 0.5), z), r))
        .collect()
}

#[derive(Serialize)]
struct RegionSummary {
    spec: String,
    subregions: usize,
    fraction: f64,
}

fn damping(g: &Geometry, cfg: &RunConfig, p: &MaterialParams) -> anyhow::Result<(ScalarField, RegionSummary)> {
    let spec = RegionSpec::parse(cfg.raw("region"))?;
    let eps = cfg.positive("eps")?;
    let a0 = cfg.positive("a0")?;
    let taper = cfg.f64("taper")?;
    if taper < 0.0 {
        return Err(UsageError(format!("`taper` must be non-negative, got {taper}")).into());
    }
    let summary = |r: &EscapeRegion| RegionSummary {
        spec: cfg.raw("region").to_string(),
        subregions: r.subregions.len(),
        fraction: r.fraction(),
    };
    let region = match spec {
        RegionSpec::None => {
            return Ok((
                ScalarField::zeros(g.n_vertices()),
                RegionSummary { spec: "none".into(), subregions: 0, fraction: 0.0 },
            ))
        }
        RegionSpec::All => build_escape_region(g, &[], eps, CertifyWith { lambda0: 1.0, beta: p.beta() })?,
        RegionSpec::Field(c) => {
            let (l0, _) = lambda0(g, cfg, p)?;
            collar_region(g, &c, eps, CertifyWith { lambda0: l0, beta: p.beta() })?
        }
        RegionSpec::Balls(n) => {
            let (l0, _) = lambda0(g, cfg, p)?;
            build_escape_region(g, &grid_balls(g, n), eps, CertifyWith { lambda0: l0, beta: p.beta() })?
        }
    };
    Ok((damping_from_region(g, &region, a0, taper)?, summary(&region)))
}

struct Run {
    sys: AssembledSystem,
    trace: EnergyTrace,
    region: RegionSummary,
    cfg: SimConfig,
}

fn initial_data(g: &Geometry, cfg: &RunConfig, sys: &AssembledSystem) -> anyhow::Result<Vec<f64>> {
    let center = cfg.auto_point("bump_center")?.unwrap_or_else(|| centroid(g));
    let radius = cfg.positive("bump_radius")?;
    Ok(sys.dof_map.state_to_free(&bump_state(g, &center, radius, 1.0)))
}

fn run_sim(mesh: SurfaceMesh, cfg: &RunConfig, store_states: bool) -> anyhow::Result<Run> {
    let p = cfg.material()?;
    let g = geometry(mesh, cfg)?;
    let sim = SimConfig {
        sample_stride: cfg.usize("sample_stride")?,
        store_states,
        ..SimConfig::new(cfg.positive("dt")?, cfg.positive("t_end")?)
    };
    sim.validate().map_err(|e| UsageError(e.to_string()))?;
    let (a, region) = damping(&g, cfg, &p)?;
    let sys = assemble(&g, &p, &a)?;
    let u0 = initial_data(&g, cfg, &sys)?;
    let (trace, _) = simulate(&sys, &u0, &vec![0.0; sys.n()], &sim)?;
    Ok(Run { sys, trace, region, cfg: sim })
}

fn fit_of(run: &Run, cfg: &RunConfig) -> anyhow::Result<Result<DecayFit, String>> {
    let t1 = run.cfg.t_end;
    let t0 = cfg.auto_f64("fit_start")?.unwrap_or(0.1 * t1);
    Ok(decay_fit(&run.trace, (t0, t1)).map_err(|e| e.to_string()))
}

#[derive(Serialize)]
struct SimSummary {
    region: RegionSummary,
    dofs: usize,
    steps: usize,
    e0: f64,
    e_end: f64,
    drift: f64,
    balance_residual: f64,
    fit: Option<DecayFit>,
}

fn cmd_simulate(mesh: SurfaceMesh, cfg: &RunConfig, prov: &Provenance, out: &mut OutDir) -> anyhow::Result<Verdict> {
    let run = run_sim(mesh, cfg, false)?;
    let fit = fit_of(&run, cfg)?.ok();
    out.with_header("trace.csv", prov, &run.trace.to_csv())?;
    let tr = &run.trace;
    let summary = SimSummary {
        dofs: run.sys.n(),
        steps: run.cfg.n_steps(),
        e0: tr.e0(),
        e_end: *tr.energies.last().unwrap(),
        drift: energy_drift(tr),
        balance_residual: energy_balance_check(tr),
        fit,
        region: run.region,
    };
    out.json("summary.json", prov, &summary)?;
    Ok(Verdict::Pass)
}

#[derive(Serialize)]
struct DecayReport {
    region: RegionSummary,
    fit: Option<DecayFit>,
    error: Option<String>,
    observability_time: Option<f64>,
}

fn cmd_decay(mesh: SurfaceMesh, cfg: &RunConfig, prov: &Provenance, out: &mut OutDir) -> anyhow::Result<Verdict> {
    let run = run_sim(mesh, cfg, false)?;
    let fit = fit_of(&run, cfg)?;
    let report = DecayReport {
        observability_time: observability_time(&run.trace),
        fit: fit.as_ref().ok().copied(),
        error: fit.as_ref().err().cloned(),
        region: run.region,
    };
    out.json("fit.json", prov, &report)?;
    Ok(match fit {
        Ok(f) if f.c2 > 0.0 => Verdict::Pass,
        Ok(f) => Verdict::Fail(format!("no exponential decay: fitted c2 = {:e}", f.c2)),
        Err(e) => Verdict::Fail(e),
    })
}

#[derive(Serialize)]
struct IdentityReport {
    p: f64,
    balance_residual: f64,
    virial: VirialReport,
}

fn cmd_identity(mesh: SurfaceMesh, cfg: &RunConfig, prov: &Provenance, out: &mut OutDir) -> anyhow::Result<Verdict> {
    let pval = cfg.f64("p")?;
    let run = run_sim(mesh, cfg, true)?;
    let nv = run.sys.dof_map.n_full() / run.sys.dof_map.per_vertex();
    let virial = virial_identity_check(&run.sys, &run.trace, &ScalarField::constant(nv, pval))?;
    let report = IdentityReport { p: pval, balance_residual: energy_balance_check(&run.trace), virial };
    out.json("identity.json", prov, &report)?;
    Ok(Verdict::Pass)
}

#[derive(Serialize)]
struct ControlReport<'a> {
    horizon: f64,
    dt: f64,
    region: RegionSummary,
    ratios: Vec<f64>,
    result: &'a ControlResult,
}

fn cmd_control(mesh: SurfaceMesh, cfg: &RunConfig, prov: &Provenance, out: &mut OutDir) -> anyhow::Result<Verdict> {
    let p = cfg.material()?;
    let g = geometry(mesh, cfg)?;
    let (a, region) = damping(&g, cfg, &p)?;
    let sys = assemble(&g, &p, &a)?;
    let u0 = initial_data(&g, cfg, &sys)?;
    let problem = ControlProblem {
        initial: (u0, vec![0.0; sys.n()]),
        horizon: cfg.positive("T")?,
        dt: cfg.positive("dt")?,
        tol: cfg.positive("tol")?,
        max_iters: cfg.usize("max_iters")?,
        n_probes: cfg.usize("probes")?.max(1),
        seed: cfg.u64("seed")?,
    };
    let r = russell_solve(&sys, &problem)?;
    let mut csv = String::from("step,t,control_norm\n");
    for (k, f) in r.control.iter().enumerate() {
        let norm = f.iter().map(|x| x * x).sum::<f64>().sqrt();
        csv.push_str(&format!("{k},{:.12e},{norm:.16e}\n", k as f64 * problem.dt));
    }
    out.with_header("control.csv", prov, &csv)?;
    let report = ControlReport { horizon: problem.horizon, dt: problem.dt, region, ratios: r.ratios(), result: &r };
    out.json("control.json", prov, &report)?;
    Ok(Verdict::Pass)
}
