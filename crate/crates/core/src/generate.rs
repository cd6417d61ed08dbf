//! Initial configurations: simple cubic lattice, spherical inhomogeneous load,
//! ring-polymer melt, and random packings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::geometry::{minimum_image, norm2, wrap_position, BoxSpec, Vec3};
use crate::oracle::FlatConfig;

/// Default edge length of generated polymer rings.
pub const RING_BOND_LENGTH: f64 = 0.97;

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive, got {x}")))
    }
}

/// Draws Maxwell-Boltzmann velocities at temperature `t`, removes the net
/// momentum and rescales to exactly `t`.
pub fn assign_velocities(flat: &mut FlatConfig, t: f64, rng: &mut impl Rng) {
    let n = flat.len();
    if n == 0 {
        return;
    }
    for (v, &m) in flat.velocities.iter_mut().zip(&flat.masses) {
        let s = (t / m).sqrt();
        *v = std::array::from_fn(|_| s * rng.sample::<f64, _>(StandardNormal));
    }
    let total_mass: f64 = flat.masses.iter().sum();
    let mut p = [0.0; 3];
    for (v, &m) in flat.velocities.iter().zip(&flat.masses) {
        for k in 0..3 {
            p[k] += m * v[k];
        }
    }
    for v in flat.velocities.iter_mut() {
        for k in 0..3 {
            v[k] -= p[k] / total_mass;
        }
    }
    let kinetic: f64 = flat
        .velocities
        .iter()
        .zip(&flat.masses)
        .map(|(v, &m)| 0.5 * m * norm2(*v))
        .sum();
    if kinetic > 0.0 {
        let scale = (1.5 * n as f64 * t / kinetic).sqrt();
        for v in flat.velocities.iter_mut() {
            *v = v.map(|x| x * scale);
        }
    }
}

/// `n` particles on a simple cubic lattice in a cube of side `(n/rho)^(1/3)`.
/// The lattice has `ceil(n^(1/3))` sites per side; trailing sites stay empty.
pub fn gen_lattice(n: usize, rho: f64, t: f64, seed: u64) -> Result<FlatConfig> {
    if n == 0 {
        return Err(Error::InvalidParameter("lattice needs at least one particle".into()));
    }
    positive("density", rho)?;
    let l = (n as f64 / rho).cbrt();
    let mut side = (n as f64).cbrt().round() as usize;
    while side.pow(3) < n {
        side += 1;
    }
    let a = l / side as f64;
    let mut flat = FlatConfig::new(BoxSpec::cubic(l)?);
    'fill: for z in 0..side {
        for y in 0..side {
            for x in 0..side {
                if flat.len() == n {
                    break 'fill;
                }
                let p = [x, y, z].map(|i| (i as f64 + 0.5) * a);
                flat.push(flat.len() as u64, p, [0.0; 3]);
            }
        }
    }
    assign_velocities(&mut flat, t, &mut ChaCha8Rng::seed_from_u64(seed));
    Ok(flat)
}

/// Sphere of diameter `diameter_fraction * l` at the box center filled at density
/// `rho_in`; the rest of the box at `alpha * rho_in`. A lattice at `rho_in` is laid
/// over the box and sites outside the sphere are kept with probability `alpha`.
pub fn gen_spherical(
    l: f64,
    diameter_fraction: f64,
    rho_in: f64,
    alpha: f64,
    t: f64,
    seed: u64,
) -> Result<FlatConfig> {
    positive("box length", l)?;
    positive("density", rho_in)?;
    if !(diameter_fraction > 0.0 && diameter_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "diameter fraction must be in (0, 1], got {diameter_fraction}"
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha must be in [0, 1], got {alpha}")));
    }
    let side = ((l * rho_in.cbrt()).round() as usize).max(1);
    let a = l / side as f64;
    let radius = 0.5 * diameter_fraction * l;
    let center = 0.5 * l;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = FlatConfig::new(BoxSpec::cubic(l)?);
    for z in 0..side {
        for y in 0..side {
            for x in 0..side {
                let p = [x, y, z].map(|i| (i as f64 + 0.5) * a);
                let inside = norm2(p.map(|c| c - center)) <= radius * radius;
                // always draw so the thinning pattern does not depend on alpha's branch
                let u: f64 = rng.random();
                if inside || u < alpha {
                    flat.push(flat.len() as u64, p, [0.0; 3]);
                }
            }
        }
    }
    assign_velocities(&mut flat, t, &mut rng);
    Ok(flat)
}

/// Ring polymers: each ring is a regular polygon with edge `bond_length`, placed at
/// a random center with a random orientation and wrapped into the box. Bonds join
/// consecutive beads (closing the ring); angles cover every consecutive triple.
pub fn gen_polymer_melt(
    chains: usize,
    chain_length: usize,
    rho: f64,
    bond_length: f64,
    t: f64,
    seed: u64,
) -> Result<FlatConfig> {
    if chain_length < 3 {
        return Err(Error::InvalidParameter(format!(
            "ring chain length must be at least 3, got {chain_length}"
        )));
    }
    if chains == 0 {
        return Err(Error::InvalidParameter("melt needs at least one chain".into()));
    }
    positive("density", rho)?;
    positive("bond length", bond_length)?;
    let n = chains * chain_length;
    let box_spec = BoxSpec::cubic((n as f64 / rho).cbrt())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = FlatConfig::new(box_spec);
    let radius = bond_length / (2.0 * (std::f64::consts::PI / chain_length as f64).sin());
    let l = box_spec.lengths();
    for c in 0..chains {
        let center: Vec3 = std::array::from_fn(|k| rng.random::<f64>() * l[k]);
        let (u, w) = random_plane(&mut rng);
        let phase = rng.random::<f64>() * std::f64::consts::TAU;
        let first = (c * chain_length) as u64;
        for m in 0..chain_length {
            let phi = phase + std::f64::consts::TAU * m as f64 / chain_length as f64;
            let (s, co) = phi.sin_cos();
            let p: Vec3 = std::array::from_fn(|k| center[k] + radius * (co * u[k] + s * w[k]));
            flat.push(first + m as u64, wrap_position(p, &box_spec), [0.0; 3]);
        }
        let id = |m: usize| first + (m % chain_length) as u64;
        for m in 0..chain_length {
            flat.bonds.push([id(m), id(m + 1)]);
            flat.angles.push([id(m + chain_length - 1), id(m), id(m + 1)]);
        }
    }
    assign_velocities(&mut flat, t, &mut rng);
    Ok(flat)
}

// orthonormal pair spanning a uniformly random plane
fn random_plane(rng: &mut impl Rng) -> (Vec3, Vec3) {
    let normal = loop {
        let v: Vec3 = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = norm2(v).sqrt();
        if n > 1e-6 {
            break v.map(|x| x / n);
        }
    };
    let helper = if normal[0].abs() < 0.9 { [1.0, 0.0, 0.0] } else { [0.0, 1.0, 0.0] };
    let u = normalize(cross(normal, helper));
    let w = cross(normal, u);
    (u, w)
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn normalize(v: Vec3) -> Vec3 {
    let n = norm2(v).sqrt();
    v.map(|x| x / n)
}

/// Uniformly random positions in a cube of side `(n/rho)^(1/3)`, no overlap control.
pub fn gen_uniform(n: usize, rho: f64, seed: u64) -> Result<FlatConfig> {
    positive("density", rho)?;
    let box_spec = BoxSpec::cubic((n as f64 / rho).cbrt())?;
    let l = box_spec.lengths();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = FlatConfig::new(box_spec);
    for id in 0..n {
        let p: Vec3 = std::array::from_fn(|k| rng.random::<f64>() * l[k]);
        flat.push(id as u64, p, [0.0; 3]);
    }
    Ok(flat)
}

/// Random sequential placement: uniform trial positions, rejected if closer
/// than `min_separation` (minimum image) to an accepted particle.
pub fn gen_random(n: usize, rho: f64, min_separation: f64, t: f64, seed: u64) -> Result<FlatConfig> {
    positive("density", rho)?;
    let box_spec = BoxSpec::cubic((n as f64 / rho).cbrt())?;
    let l = box_spec.lengths();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut flat = FlatConfig::new(box_spec);
    let min2 = min_separation * min_separation;
    let max_trials = 1000 * n.max(1);
    let mut trials = 0;
    while flat.len() < n {
        trials += 1;
        if trials > max_trials {
            return Err(Error::InvalidParameter(format!(
                "could not place {n} particles {min_separation} apart at density {rho}"
            )));
        }
        let p: Vec3 = std::array::from_fn(|k| rng.random::<f64>() * l[k]);
        let clear = flat.positions.iter().all(|q| {
            norm2(minimum_image([p[0] - q[0], p[1] - q[1], p[2] - q[2]], &box_spec)) >= min2
        });
        if clear {
            flat.push(flat.len() as u64, p, [0.0; 3]);
        }
    }
    assign_velocities(&mut flat, t, &mut rng);
    Ok(flat)
}
