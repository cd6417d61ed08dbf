//! Brute-force reference implementations.
//!
//! Nothing here uses cells, lists or ghosts, and the interaction formulas are
//! written out again rather than calling the production kernels.

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::geometry::{minimum_image, BoxSpec, Vec3};
use crate::neighbor::SortedNeighborList;
use crate::potentials::{AngleParams, FENEParams, LJParams};
use crate::soa::{Particle, SoAStore};
use crate::ParticleId;

/// Decomposition-free snapshot of a system.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatConfig {
    pub box_spec: BoxSpec,
    pub ids: Vec<ParticleId>,
    pub kinds: Vec<u8>,
    pub masses: Vec<f64>,
    pub positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub bonds: Vec<[ParticleId; 2]>,
    pub angles: Vec<[ParticleId; 3]>,
}

impl FlatConfig {
    pub fn new(box_spec: BoxSpec) -> Self {
        FlatConfig {
            box_spec,
            ids: Vec::new(),
            kinds: Vec::new(),
            masses: Vec::new(),
            positions: Vec::new(),
            velocities: Vec::new(),
            bonds: Vec::new(),
            angles: Vec::new(),
        }
    }

    pub fn from_particles(box_spec: BoxSpec, particles: &[Particle]) -> Self {
        let mut f = FlatConfig::new(box_spec);
        for p in particles {
            f.push(p.id, p.position, p.velocity);
            *f.kinds.last_mut().unwrap() = p.kind;
            *f.masses.last_mut().unwrap() = p.mass;
        }
        f
    }

    /// Adds a unit-mass particle of type 0.
    pub fn push(&mut self, id: ParticleId, position: Vec3, velocity: Vec3) {
        self.ids.push(id);
        self.kinds.push(0);
        self.masses.push(1.0);
        self.positions.push(position);
        self.velocities.push(velocity);
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn particles(&self) -> Vec<Particle> {
        (0..self.len())
            .map(|n| Particle {
                id: self.ids[n],
                kind: self.kinds[n],
                mass: self.masses[n],
                position: self.positions[n],
                velocity: self.velocities[n],
                force: [0.0; 3],
            })
            .collect()
    }

    pub fn index_of(&self) -> HashMap<ParticleId, usize> {
        self.ids.iter().enumerate().map(|(n, &id)| (id, n)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if [self.kinds.len(), self.masses.len(), self.positions.len(), self.velocities.len()]
            .iter()
            .any(|&l| l != n)
        {
            return Err(Error::InvalidParameter("attribute arrays differ in length".into()));
        }
        let index = self.index_of();
        if index.len() != n {
            return Err(Error::InvalidParameter("duplicate particle ids".into()));
        }
        if index.contains_key(&crate::soa::SENTINEL_ID) {
            return Err(Error::InvalidParameter("particle id reserved for padding".into()));
        }
        if let Some(m) = self.masses.iter().find(|&&m| !(m > 0.0)) {
            return Err(Error::InvalidParameter(format!("non-positive mass {m}")));
        }
        let known = |id: &ParticleId| index.contains_key(id);
        if !self.bonds.iter().flatten().all(known) || !self.angles.iter().flatten().all(known) {
            return Err(Error::InvalidParameter("bonded term references an unknown id".into()));
        }
        Ok(())
    }
}

/// Every unordered id pair closer than `r` under the minimum image, by O(N²) scan.
pub fn brute_force_pairs(config: &FlatConfig, box_spec: &BoxSpec, r: f64) -> BTreeSet<(ParticleId, ParticleId)> {
    let mut out = BTreeSet::new();
    let n = config.len();
    for a in 0..n {
        for b in a + 1..n {
            let d = min_image_between(config.positions[a], config.positions[b], box_spec);
            if (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt() <= r {
                let (i, j) = (config.ids[a], config.ids[b]);
                out.insert((i.min(j), i.max(j)));
            }
        }
    }
    out
}

fn min_image_between(a: Vec3, b: Vec3, box_spec: &BoxSpec) -> Vec3 {
    minimum_image([a[0] - b[0], a[1] - b[1], a[2] - b[2]], box_spec)
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BondedParams {
    pub fene: Option<FENEParams>,
    pub angle: Option<AngleParams>,
}

/// Forces (in config order) and total potential energy by direct summation.
pub fn brute_force_forces_energy(
    config: &FlatConfig,
    box_spec: &BoxSpec,
    lj: &LJParams,
    bonded: &BondedParams,
) -> Result<(Vec<Vec3>, f64)> {
    let n = config.len();
    let mut forces = vec![[0.0; 3]; n];
    let mut energy = 0.0;

    let (eps, sigma, rc) = (lj.epsilon(), lj.sigma(), lj.r_cut());
    let v = |r: f64| 4.0 * eps * ((sigma / r).powi(12) - (sigma / r).powi(6));
    let v_cut = if lj.energy_shifted() { v(rc) } else { 0.0 };
    for a in 0..n {
        for b in a + 1..n {
            let d = min_image_between(config.positions[a], config.positions[b], box_spec);
            let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if r == 0.0 {
                return Err(Error::Overlap(config.ids[a], config.ids[b]));
            }
            if r >= rc {
                continue;
            }
            energy += v(r) - v_cut;
            // -dV/dr
            let mag = 24.0 * eps / r * (2.0 * (sigma / r).powi(12) - (sigma / r).powi(6));
            for k in 0..3 {
                forces[a][k] += mag * d[k] / r;
                forces[b][k] -= mag * d[k] / r;
            }
        }
    }

    let index = config.index_of();
    if let Some(fene) = bonded.fene {
        for &[ia, ib] in &config.bonds {
            let (a, b) = (index[&ia], index[&ib]);
            let d = min_image_between(config.positions[a], config.positions[b], box_spec);
            let x = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]) / (fene.r_max * fene.r_max);
            if x >= 1.0 {
                return Err(Error::BondOverstretch(ia, ib, x.sqrt() * fene.r_max, fene.r_max));
            }
            energy += -0.5 * fene.k * fene.r_max * fene.r_max * (1.0 - x).ln();
            for k in 0..3 {
                let f = -fene.k * d[k] / (1.0 - x);
                forces[a][k] += f;
                forces[b][k] -= f;
            }
        }
    }

    if let Some(angle) = bonded.angle {
        for &[ii, ij, ik] in &config.angles {
            let (i, j, k) = (index[&ii], index[&ij], index[&ik]);
            let a = min_image_between(config.positions[i], config.positions[j], box_spec);
            let b = min_image_between(config.positions[k], config.positions[j], box_spec);
            let (e, fi, fk) = angle_by_perpendiculars(a, b, &angle)?;
            energy += e;
            for d in 0..3 {
                forces[i][d] += fi[d];
                forces[k][d] += fk[d];
                forces[j][d] -= fi[d] + fk[d];
            }
        }
    }
    Ok((forces, energy))
}

// θ = atan2(|a×b|, a·b); moving an end particle perpendicular to its bond, in
// the plane and toward the other bond, closes the angle at rate 1/|bond|.
fn angle_by_perpendiculars(a: Vec3, b: Vec3, p: &AngleParams) -> Result<(f64, Vec3, Vec3)> {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return Err(Error::DegenerateAngle);
    }
    let c = cross(a, b);
    let theta = norm(c).atan2(dot(a, b));
    let energy = p.k * (1.0 - (theta - p.theta0).cos());
    let du_dtheta = p.k * (theta - p.theta0).sin();
    // component of the other bond perpendicular to this one
    let perp = |u: Vec3, w: Vec3, nu: f64| -> Vec3 {
        let s = dot(w, u) / (nu * nu);
        let v = [w[0] - s * u[0], w[1] - s * u[1], w[2] - s * u[2]];
        let nv = norm(v);
        if nv < 1e-300 {
            [0.0; 3]
        } else {
            v.map(|x| x / nv)
        }
    };
    let pa = perp(a, b, na);
    let pb = perp(b, a, nb);
    let fi = pa.map(|x| du_dtheta * x / na);
    let fk = pb.map(|x| du_dtheta * x / nb);
    Ok((energy, fi, fk))
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// The list-of-pairs Verlet layout: one `(i, j)` entry per interacting pair.
/// Kept as a reference path and for benchmarking against the sorted layout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairList {
    pub pairs: Vec<(u32, u32)>,
}

impl PairList {
    pub fn from_sorted(list: &SortedNeighborList) -> Self {
        PairList {
            pairs: list.pairs().map(|(i, j)| (i as u32, j as u32)).collect(),
        }
    }

    /// Lennard-Jones forces pair by pair; returns the pair energy.
    pub fn compute_forces(&self, store: &mut SoAStore, lj: &LJParams) -> Result<f64> {
        let rc2 = lj.r_cut() * lj.r_cut();
        let mut energy = 0.0;
        for &(i, j) in &self.pairs {
            let (i, j) = (i as usize, j as usize);
            let pi = store.position(i);
            let pj = store.position(j);
            let d = [pi[0] - pj[0], pi[1] - pj[1], pi[2] - pj[2]];
            let r2 = dot(d, d);
            if r2 == 0.0 {
                return Err(Error::Overlap(store.id(i), store.id(j)));
            }
            if r2 >= rc2 {
                continue;
            }
            let sr6 = (lj.sigma() * lj.sigma() / r2).powi(3);
            energy += 4.0 * lj.epsilon() * (sr6 * sr6 - sr6) - lj.shift();
            let f = 24.0 * lj.epsilon() * (2.0 * sr6 * sr6 - sr6) / r2;
            store.add_force(i, d.map(|x| f * x));
            store.add_force(j, d.map(|x| -f * x));
        }
        Ok(energy)
    }
}
