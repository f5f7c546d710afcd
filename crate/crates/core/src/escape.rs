//! Escape vector fields, their certification and escape regions carrying
//! the localized damping coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dijkstra, eps, eps_neighborhood, geodesic_ball, log_map, Geometry, Mat2, MeshSet, ScalarField, TangentField, Vec2};
use crate::mesh::Vec3;

/// Mean edge length at which the residual tolerance is `0.1 min(1, |v|)`.
pub const BASELINE_H: f64 = 0.1;

/// Per-face split `DV = v g + l eps + S0` with `S0` symmetric traceless.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub faces: Vec<usize>,
    pub v: Vec<f64>,
    pub l: Vec<f64>,
    /// Spectral norm of `S0` per face.
    pub deviation: Vec<f64>,
}

impl Decomposition {
    /// Largest deviation and the face where it occurs.
    pub fn residual(&self) -> (f64, usize) {
        self.deviation
            .iter()
            .zip(&self.faces)
            .fold((0.0, self.faces.first().copied().unwrap_or(0)), |acc, (&d, &f)| if d > acc.0 { (d, f) } else { acc })
    }
}

pub fn split_local(dv: &Mat2) -> (f64, f64, f64) {
    let v = 0.5 * dv.trace();
    let l = 0.5 * (dv[(0, 1)] - dv[(1, 0)]);
    let s0 = dv - Mat2::identity() * v - eps() * l;
    let dev = (s0[(0, 0)].powi(2) + (0.5 * (s0[(0, 1)] + s0[(1, 0)])).powi(2)).sqrt();
    (v, l, dev)
}

/// Decompose `DV` on the given faces (all faces if `None`).
pub fn decompose_dv(geom: &Geometry, field: &TangentField, faces: Option<&[usize]>) -> Result<Decomposition> {
    if field.len() != geom.n_vertices() {
        return Err(Error::FrameMismatch(format!("field has {} vertices, mesh {}", field.len(), geom.n_vertices())));
    }
    let faces: Vec<usize> = faces.map_or_else(|| (0..geom.n_faces()).collect(), <[usize]>::to_vec);
    let mut out = Decomposition { faces: faces.clone(), v: Vec::new(), l: Vec::new(), deviation: Vec::new() };
    for &f in &faces {
        let tri = geom.mesh().triangles()[f];
        let dv = geom.face_differential_local(f, tri.map(|k| field.0[k]));
        let (v, l, d) = split_local(&dv);
        out.v.push(v);
        out.l.push(l);
        out.deviation.push(d);
    }
    Ok(out)
}

/// Certificate emitted by [`check_escape`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EscapeCertificate {
    pub v_min: f64,
    pub l_max: f64,
    pub lambda0: f64,
    pub beta: f64,
    /// `2 min v - lambda0 (1 + 2 beta) max |l|`.
    pub margin: f64,
    /// Same with `max |l| / 2`.
    pub margin_half: f64,
    pub residual: f64,
    pub residual_tol: f64,
    pub pass: bool,
}

/// Residual tolerance `0.1 min(1, mean |v|) h / BASELINE_H`, never below
/// a roundoff floor relative to `DV`.
pub fn residual_tolerance(mean_abs_v: f64, scale: f64, h: f64) -> f64 {
    (0.1 * mean_abs_v.min(1.0) * h / BASELINE_H).max(1e-10 * scale)
}

/// A tangent field with its certified decomposition on a face set.
#[derive(Debug, Clone)]
pub struct EscapeField {
    pub field: TangentField,
    pub decomposition: Decomposition,
    pub certificate: EscapeCertificate,
}

impl EscapeField {
    pub fn margin(&self) -> f64 {
        self.certificate.margin
    }
}

pub fn check_escape(
    geom: &Geometry,
    field: &TangentField,
    faces: Option<&[usize]>,
    lambda0: f64,
    beta: f64,
) -> Result<EscapeField> {
    let dec = decompose_dv(geom, field, faces)?;
    if dec.faces.is_empty() {
        return Err(Error::EmptySystem);
    }
    let n = dec.v.len() as f64;
    let mean_abs_v = dec.v.iter().map(|x| x.abs()).sum::<f64>() / n;
    let scale = dec.v.iter().zip(&dec.l).map(|(v, l)| v.abs().max(l.abs())).fold(0.0, f64::max);
    let tol = residual_tolerance(mean_abs_v, scale, geom.mesh().mean_edge_length());
    let (residual, worst) = dec.residual();
    if residual > tol {
        return Err(Error::NotEscapeCandidate { face: worst, residual, tol });
    }
    let v_min = dec.v.iter().copied().fold(f64::INFINITY, f64::min);
    let l_max = dec.l.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let margin = 2.0 * v_min - lambda0 * (1.0 + 2.0 * beta) * l_max;
    let margin_half = 2.0 * v_min - lambda0 * (1.0 + 2.0 * beta) * l_max / 2.0;
    if (margin > 0.0) != (margin_half > 0.0) {
        log::warn!("escape margins disagree: full {margin:.3e}, with |l|/2 {margin_half:.3e}; using the stricter");
    }
    Ok(EscapeField {
        field: field.clone(),
        certificate: EscapeCertificate {
            v_min,
            l_max,
            lambda0,
            beta,
            margin,
            margin_half,
            residual,
            residual_tol: tol,
            pass: margin > 0.0 && margin_half > 0.0,
        },
        decomposition: dec,
    })
}

/// Project an ambient vector field into the vertex frames.
pub fn field_from_ambient(geom: &Geometry, f: impl Fn(&Vec3) -> Vec3) -> TangentField {
    TangentField(
        geom.mesh()
            .vertices()
            .iter()
            .enumerate()
            .map(|(i, p)| Vec2::from(geom.vertex_frame(i).components(&f(p))))
            .collect(),
    )
}

/// Radial field `grad(d^2 / 2)` from `center` on vertices within `radius`
/// (zero elsewhere), with the mask of vertices where it is defined.
pub fn radial_field(geom: &Geometry, center: usize, radius: f64) -> (TangentField, Vec<bool>) {
    let lm = log_map(geom, center, radius);
    let defined = lm.iter().map(Option::is_some).collect();
    (TangentField(lm.into_iter().map(|x| x.unwrap_or_else(Vec2::zeros)).collect()), defined)
}

/// One sub-region `Omega_i`: a geodesic ball with its radial field.
#[derive(Debug, Clone)]
pub struct Subregion {
    pub center: usize,
    pub radius: f64,
    pub set: MeshSet,
    pub escape: EscapeField,
    /// Vertices of the outflow boundary `Gamma_i0 = {<V, nu> > 0}`.
    pub outflow: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct EscapeRegion {
    pub subregions: Vec<Subregion>,
    pub eps: f64,
    pub g: MeshSet,
    pub measure: f64,
    pub total_measure: f64,
}

impl EscapeRegion {
    pub fn fraction(&self) -> f64 {
        self.measure / self.total_measure
    }

    /// Faces outside every sub-region.
    pub fn complement_faces(&self, n_faces: usize) -> Vec<usize> {
        let mut covered = vec![false; n_faces];
        for s in &self.subregions {
            for &f in &s.set.faces {
                covered[f] = true;
            }
        }
        (0..n_faces).filter(|&f| !covered[f]).collect()
    }
}

/// Boundary edges of a face set with the outward in-face normal at their
/// midpoint: `(a, b, nu)`.
fn outward_edges(geom: &Geometry, faces: &[usize]) -> Vec<(usize, usize, Vec3)> {
    let mesh = geom.mesh();
    let mut inside = vec![false; mesh.n_faces()];
    for &f in faces {
        inside[f] = true;
    }
    let mut out = Vec::new();
    for &f in faces {
        let tri = mesh.triangles()[f];
        for k in 0..3 {
            let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            let across = mesh.vertex_faces(a).iter().find(|&&g| g != f && mesh.vertex_faces(b).contains(&g));
            if across.is_some_and(|&g| inside[g]) {
                continue;
            }
            let p = mesh.vertices();
            let e = p[b] - p[a];
            let mut nu = e.cross(&mesh.face_normal(f)).normalize();
            if nu.dot(&(p[c] - p[a])) > 0.0 {
                nu = -nu;
            }
            out.push((a, b, nu));
        }
    }
    out
}

/// Parameters used to certify the fields of each ball.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyWith {
    pub lambda0: f64,
    pub beta: f64,
}

/// Escape region from geodesic balls `(center, radius)` carrying radial
/// fields; `G` is the `eps`-neighborhood of the outflow boundaries and of
/// the uncovered part of the surface.
pub fn build_escape_region(geom: &Geometry, balls: &[(Vec3, f64)], eps: f64, cert: CertifyWith) -> Result<EscapeRegion> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!("eps must be positive, got {eps}")));
    }
    let mesh = geom.mesh();
    let centers: Vec<usize> = balls.iter().map(|(c, _)| mesh.nearest_vertex(c)).collect();
    let mut radii: Vec<f64> = balls.iter().map(|b| b.1).collect();
    if radii.iter().any(|&r| !(r > 0.0)) {
        return Err(Error::InvalidParameter("ball radii must be positive".into()));
    }
    for i in 0..centers.len() {
        let d = dijkstra(mesh, &[centers[i]], f64::INFINITY);
        for j in i + 1..centers.len() {
            let dij = d.dist[centers[j]];
            if radii[i] + radii[j] > dij {
                let s = 0.95 * dij / (radii[i] + radii[j]);
                log::warn!("balls {i} and {j} overlap (distance {dij:.4}, radii {:.4} + {:.4}); shrinking by {s:.3}", radii[i], radii[j]);
                radii[i] *= s;
                radii[j] *= s;
            }
        }
    }
    let sets: Vec<MeshSet> = centers.iter().zip(&radii).map(|(&c, &r)| geodesic_ball(mesh, c, r)).collect();
    let mut owner = vec![None; mesh.n_faces()];
    for (i, s) in sets.iter().enumerate() {
        for &f in &s.faces {
            if let Some(j) = owner[f] {
                return Err(Error::OverlappingBalls(format!("balls {j} and {i} share face {f} after shrinking")));
            }
            owner[f] = Some(i);
        }
    }
    let mut subregions = Vec::new();
    let mut seeds = Vec::new();
    for ((&center, &radius), set) in centers.iter().zip(&radii).zip(sets) {
        let (field, defined) = radial_field(geom, center, 2.0 * radius + mesh.max_edge_length());
        if let Some(&f) = set.faces.iter().find(|&&f| mesh.triangles()[f].iter().any(|&v| !defined[v])) {
            return Err(Error::InvalidMesh(format!("radial field undefined on face {f} of ball at vertex {center}")));
        }
        let escape = check_escape(geom, &field, Some(&set.faces), cert.lambda0, cert.beta)?;
        if !escape.certificate.pass {
            return Err(Error::Uncertified(format!("radial field at vertex {center}: margin {:.3e}", escape.certificate.margin)));
        }
        let mut outflow = Vec::new();
        for (a, b, nu) in outward_edges(geom, &set.faces) {
            let va = geom.vertex_frame(a).to_ambient([field.0[a].x, field.0[a].y]);
            let vb = geom.vertex_frame(b).to_ambient([field.0[b].x, field.0[b].y]);
            if (va + vb).dot(&nu) > 0.0 {
                outflow.extend([a, b]);
            }
        }
        outflow.sort_unstable();
        outflow.dedup();
        seeds.extend_from_slice(&outflow);
        subregions.push(Subregion { center, radius, set, escape, outflow });
    }
    for (f, o) in owner.iter().enumerate() {
        if o.is_none() {
            seeds.extend_from_slice(&mesh.triangles()[f]);
        }
    }
    seeds.sort_unstable();
    seeds.dedup();
    let g = eps_neighborhood(mesh, &seeds, eps);
    let measure = g.area(mesh);
    Ok(EscapeRegion { subregions, eps, measure, total_measure: mesh.total_area(), g })
}

/// A collar region: the whole surface carries the radial field from
/// `center`, so `G` is the `eps`-neighborhood of the outflow boundary.
pub fn collar_region(geom: &Geometry, center: &Vec3, eps: f64, cert: CertifyWith) -> Result<EscapeRegion> {
    let c = geom.mesh().nearest_vertex(center);
    let d = dijkstra(geom.mesh(), &[c], f64::INFINITY);
    let r = d.dist.iter().copied().fold(0.0, f64::max) * 2.0 + 1.0;
    build_escape_region(geom, &[(*center, r)], eps, cert)
}

/// `a = a0` on the vertices of `G`, decaying smoothly to zero over
/// distance `taper` outside.
pub fn damping_from_region(geom: &Geometry, region: &EscapeRegion, a0: f64, taper: f64) -> Result<ScalarField> {
    if !(a0 > 0.0) || taper < 0.0 {
        return Err(Error::InvalidParameter(format!("need a0 > 0 and taper >= 0, got {a0}, {taper}")));
    }
    let mesh = geom.mesh();
    let src: Vec<usize> = region.g.vertices.clone();
    if src.is_empty() {
        return Ok(ScalarField::zeros(mesh.n_vertices()));
    }
    let d = dijkstra(mesh, &src, taper);
    Ok(ScalarField(
        d.dist
            .iter()
            .map(|&x| {
                if x <= 0.0 {
                    a0
                } else if x < taper {
                    let s = 1.0 - x / taper;
                    a0 * s * s * (3.0 - 2.0 * s)
                } else {
                    0.0
                }
            })
            .collect(),
    ))
}

/// Faces on which `a` is not identically zero.
pub fn support_faces(geom: &Geometry, a: &ScalarField) -> Vec<usize> {
    (0..geom.n_faces()).filter(|&f| geom.mesh().triangles()[f].iter().any(|&v| a.0[v] != 0.0)).collect()
}
