//! Interaction kernels: Lennard-Jones pair, FENE bond, cosine angle, and the
//! Langevin thermostat force.
//!
//! Pair and bond kernels return `(energy, force_factor)` where the force on `i`
//! from `j` is `force_factor * (r_i - r_j)`.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::ParticleId;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LJParams {
    epsilon: f64,
    sigma: f64,
    r_cut: f64,
    energy_shifted: bool,
    shift: f64,
}

impl LJParams {
    pub fn new(epsilon: f64, sigma: f64, r_cut: f64, energy_shifted: bool) -> Result<Self> {
        if !(epsilon > 0.0 && sigma > 0.0 && r_cut > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "LJ needs epsilon, sigma, r_cut > 0 (got {epsilon}, {sigma}, {r_cut})"
            )));
        }
        let shift = if energy_shifted {
            let s6 = (sigma * sigma / (r_cut * r_cut)).powi(3);
            4.0 * epsilon * (s6 * s6 - s6)
        } else {
            0.0
        };
        Ok(LJParams {
            epsilon,
            sigma,
            r_cut,
            energy_shifted,
            shift,
        })
    }

    /// The usual reduced-unit fluid: ε = σ = 1, r_cut = 2.5, energy shifted.
    pub fn fluid() -> Self {
        Self::new(1.0, 1.0, 2.5, true).expect("valid defaults")
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn r_cut(&self) -> f64 {
        self.r_cut
    }

    pub fn energy_shifted(&self) -> bool {
        self.energy_shifted
    }

    /// Unshifted energy at the cutoff when shifting is on, else 0.
    pub fn shift(&self) -> f64 {
        self.shift
    }
}

/// Lennard-Jones energy and force factor; exactly zero at and beyond the cutoff.
pub fn lj_eval(r2: f64, params: &LJParams) -> Result<(f64, f64)> {
    if r2 == 0.0 {
        return Err(Error::Overlap(0, 0));
    }
    Ok(lj_unchecked(r2, params))
}

#[inline(always)]
pub(crate) fn lj_unchecked(r2: f64, p: &LJParams) -> (f64, f64) {
    if r2 >= p.r_cut * p.r_cut {
        return (0.0, 0.0);
    }
    let s2 = p.sigma * p.sigma / r2;
    let s6 = s2 * s2 * s2;
    let energy = 4.0 * p.epsilon * (s6 * s6 - s6) - p.shift;
    let ff = 24.0 * p.epsilon * (2.0 * s6 * s6 - s6) / r2;
    (energy, ff)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FENEParams {
    pub k: f64,
    pub r_max: f64,
}

impl FENEParams {
    pub fn new(k: f64, r_max: f64) -> Result<Self> {
        if !(k > 0.0 && r_max > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "FENE needs k, r_max > 0 (got {k}, {r_max})"
            )));
        }
        Ok(FENEParams { k, r_max })
    }
}

impl Default for FENEParams {
    fn default() -> Self {
        FENEParams { k: 30.0, r_max: 1.5 }
    }
}

/// FENE bond: `-½ k R² ln(1 - r²/R²)`. Fails when `r >= R`.
pub fn fene_eval(r2: f64, params: &FENEParams) -> Result<(f64, f64)> {
    let rmax2 = params.r_max * params.r_max;
    let x = r2 / rmax2;
    if !(x < 1.0) {
        return Err(Error::BondOverstretch(0, 0, r2.sqrt(), params.r_max));
    }
    let energy = -0.5 * params.k * rmax2 * (1.0 - x).ln();
    Ok((energy, -params.k / (1.0 - x)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleParams {
    pub k: f64,
    pub theta0: f64,
}

impl AngleParams {
    pub fn new(k: f64, theta0: f64) -> Result<Self> {
        if !(k >= 0.0) || !(0.0..=std::f64::consts::PI).contains(&theta0) {
            return Err(Error::InvalidParameter(format!(
                "angle needs k >= 0 and theta0 in [0, pi] (got {k}, {theta0})"
            )));
        }
        Ok(AngleParams { k, theta0 })
    }
}

impl Default for AngleParams {
    fn default() -> Self {
        AngleParams { k: 1.5, theta0: 0.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleTerm {
    pub energy: f64,
    pub force_i: Vec3,
    pub force_j: Vec3,
    pub force_k: Vec3,
}

/// Cosine angle potential `k (1 - cos(θ - θ0))` for the angle at `j`, with
/// `r_ij = r_i - r_j` and `r_kj = r_k - r_j`.
pub fn angle_eval(r_ij: Vec3, r_kj: Vec3, params: &AngleParams) -> Result<AngleTerm> {
    let la2 = dot(r_ij, r_ij);
    let lb2 = dot(r_kj, r_kj);
    if la2 == 0.0 || lb2 == 0.0 {
        return Err(Error::DegenerateAngle);
    }
    let inv_ab = 1.0 / (la2 * lb2).sqrt();
    let cos_t = (dot(r_ij, r_kj) * inv_ab).clamp(-1.0, 1.0);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let (sin0, cos0) = params.theta0.sin_cos();
    let energy = params.k * (1.0 - (cos_t * cos0 + sin_t * sin0));

    // dU/dcosθ = -k sin(θ-θ0)/sinθ = -k (cos θ0 - sin θ0 cot θ)
    let ratio = if sin0 == 0.0 {
        cos0
    } else {
        cos0 - sin0 * cos_t / sin_t.max(1e-12)
    };
    let g = params.k * ratio;
    let mut force_i = [0.0; 3];
    let mut force_k = [0.0; 3];
    let mut force_j = [0.0; 3];
    for d in 0..3 {
        force_i[d] = g * (r_kj[d] * inv_ab - cos_t * r_ij[d] / la2);
        force_k[d] = g * (r_ij[d] * inv_ab - cos_t * r_kj[d] / lb2);
        force_j[d] = -force_i[d] - force_k[d];
    }
    Ok(AngleTerm {
        energy,
        force_i,
        force_j,
        force_k,
    })
}

#[inline]
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinParams {
    pub gamma: f64,
    pub temperature: f64,
    pub seed: u64,
}

impl LangevinParams {
    pub fn new(gamma: f64, temperature: f64, seed: u64) -> Result<Self> {
        if !(gamma >= 0.0 && temperature >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Langevin needs gamma, T >= 0 (got {gamma}, {temperature})"
            )));
        }
        Ok(LangevinParams {
            gamma,
            temperature,
            seed,
        })
    }
}

/// Standard-normal triple that depends only on `(seed, step, id)`.
///
/// The ChaCha key comes from the seed, the stream number is the particle id and
/// the block position is the step, so draws never depend on evaluation order.
pub fn thermal_noise(seed: u64, step: u64, id: ParticleId) -> Vec3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    // 16 words per ChaCha block; one block per step
    rng.set_word_pos(step as u128 * 16);
    let mut unit = || {
        // (0, 1]
        ((rng.next_u64() >> 11) as f64 + 1.0) * (1.0 / (1u64 << 53) as f64)
    };
    let (u1, u2, u3, u4) = (unit(), unit(), unit(), unit());
    let r1 = (-2.0 * u1.ln()).sqrt();
    let r2 = (-2.0 * u3.ln()).sqrt();
    let tau = std::f64::consts::TAU;
    [r1 * (tau * u2).cos(), r1 * (tau * u2).sin(), r2 * (tau * u4).cos()]
}

/// Friction plus random force: `-γ m v + sqrt(2 m γ T / dt) ξ`.
pub fn langevin_force(
    velocity: Vec3,
    mass: f64,
    params: &LangevinParams,
    dt: f64,
    step: u64,
    id: ParticleId,
) -> Vec3 {
    if params.gamma == 0.0 {
        return [0.0; 3];
    }
    let friction = -params.gamma * mass;
    if params.temperature == 0.0 {
        return velocity.map(|v| friction * v);
    }
    let amp = (2.0 * mass * params.gamma * params.temperature / dt).sqrt();
    let xi = thermal_noise(params.seed, step, id);
    [
        friction * velocity[0] + amp * xi[0],
        friction * velocity[1] + amp * xi[1],
        friction * velocity[2] + amp * xi[2],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn unshifted() -> LJParams {
        LJParams::new(1.0, 1.0, 2.5, false).unwrap()
    }

    #[test]
    fn lj_examples() {
        let rmin2 = 2f64.powf(1.0 / 3.0);
        let (e, f) = lj_eval(rmin2, &unshifted()).unwrap();
        assert!((e + 1.0).abs() < 1e-14);
        assert!(f.abs() < 1e-13);

        let (e, _) = lj_eval(1.0, &unshifted()).unwrap();
        assert_eq!(e, 0.0);

        // 4 (2.5^-12 - 2.5^-6)
        let r = 2.5 - 1e-12;
        let (e, _) = lj_eval(r * r, &unshifted()).unwrap();
        assert!((e - -0.016316891).abs() < 1e-9, "{e}");

        assert_eq!(lj_eval(9.0, &unshifted()).unwrap(), (0.0, 0.0));
        assert_eq!(lj_eval(6.25, &unshifted()).unwrap(), (0.0, 0.0));
        assert!(matches!(lj_eval(0.0, &unshifted()), Err(Error::Overlap(..))));
    }

    #[test]
    fn shifted_energy_vanishes_at_cutoff() {
        let p = LJParams::fluid();
        assert!((p.shift() - -0.016316891136).abs() < 1e-10);
        let r = 2.5 * (1.0 - 1e-12);
        let (e, _) = lj_eval(r * r, &p).unwrap();
        assert!(e.abs() < 1e-10);
        // forces are not shifted
        let (_, f_s) = lj_eval(4.0, &p).unwrap();
        let (_, f_u) = lj_eval(4.0, &unshifted()).unwrap();
        assert_eq!(f_s, f_u);
    }

    #[test]
    fn lj_force_is_energy_gradient() {
        let p = unshifted();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let r: f64 = rng.random_range(0.8..2.5 - 1e-3);
            let h = 1e-4 * r;
            let e = |x: f64| lj_eval(x * x, &p).unwrap().0;
            // five-point stencil keeps truncation error well below the tolerance
            let dvdr = (e(r - 2.0 * h) - 8.0 * e(r - h) + 8.0 * e(r + h) - e(r + 2.0 * h)) / (12.0 * h);
            let want = -dvdr / r;
            let (_, f) = lj_eval(r * r, &p).unwrap();
            let scale = want.abs().max(1e-3);
            assert!((f - want).abs() / scale < 1e-8, "r={r}: {f} vs {want}");
        }
    }

    #[test]
    fn fene_examples() {
        let p = FENEParams::default();
        let (e, f) = fene_eval(1e-12, &p).unwrap();
        assert!(e.abs() < 1e-9);
        // |F| = |f| r -> k r -> 0
        assert!((f.abs() * 1e-6 - 30.0 * 1e-6).abs() < 1e-9);
        assert!(matches!(fene_eval(1.5 * 1.5, &p), Err(Error::BondOverstretch(..))));
        assert!(fene_eval(2.5 * 2.5, &p).is_err());

        let r = 0.97;
        let h = 1e-6;
        let e = |x: f64| fene_eval(x * x, &p).unwrap().0;
        let dudr = (e(r + h) - e(r - h)) / (2.0 * h);
        let (_, f) = fene_eval(r * r, &p).unwrap();
        let want = -dudr / r;
        assert!(((f - want) / want).abs() < 1e-6);
    }

    fn finite_diff_angle(pos: [Vec3; 3], p: &AngleParams) -> [Vec3; 3] {
        let energy = |q: [Vec3; 3]| {
            let a = [q[0][0] - q[1][0], q[0][1] - q[1][1], q[0][2] - q[1][2]];
            let b = [q[2][0] - q[1][0], q[2][1] - q[1][1], q[2][2] - q[1][2]];
            angle_eval(a, b, p).unwrap().energy
        };
        let h = 1e-6;
        let mut out = [[0.0; 3]; 3];
        for n in 0..3 {
            for d in 0..3 {
                let mut plus = pos;
                let mut minus = pos;
                plus[n][d] += h;
                minus[n][d] -= h;
                out[n][d] = -(energy(plus) - energy(minus)) / (2.0 * h);
            }
        }
        out
    }

    #[test]
    fn angle_minimum_and_collinear() {
        let p = AngleParams::new(2.0, std::f64::consts::FRAC_PI_2).unwrap();
        let t = angle_eval([1.0, 0.0, 0.0], [0.0, 1.5, 0.0], &p).unwrap();
        assert!(t.energy.abs() < 1e-15);
        for f in [t.force_i, t.force_j, t.force_k] {
            assert!(f.iter().all(|x| x.abs() < 1e-15), "{t:?}");
        }

        let p = AngleParams::new(1.0, std::f64::consts::PI).unwrap();
        let t = angle_eval([1.0, 0.0, 0.0], [-2.0, 0.0, 0.0], &p).unwrap();
        assert!(t.energy.abs() < 1e-15);

        assert_eq!(
            angle_eval([0.0; 3], [1.0, 0.0, 0.0], &p),
            Err(Error::DegenerateAngle)
        );
    }

    #[test]
    fn angle_forces_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for theta0 in [0.0, 1.9] {
            let p = AngleParams::new(1.0, theta0).unwrap();
            for _ in 0..50 {
                let pos: [Vec3; 3] = std::array::from_fn(|_| std::array::from_fn(|_| rng.random_range(-1.0..1.0)));
                let a = crate::geometry::sub(pos[0], pos[1]);
                let b = crate::geometry::sub(pos[2], pos[1]);
                let t = angle_eval(a, b, &p).unwrap();
                let fd = finite_diff_angle(pos, &p);
                for (got, want) in [t.force_i, t.force_j, t.force_k].iter().zip(fd.iter()) {
                    for d in 0..3 {
                        let scale = want[d].abs().max(1e-2);
                        assert!((got[d] - want[d]).abs() / scale < 1e-6, "{got:?} vs {want:?}");
                    }
                }
                // momentum and torque about j
                let mut torque = [0.0; 3];
                for (r, f) in [(a, t.force_i), (b, t.force_k)] {
                    torque[0] += r[1] * f[2] - r[2] * f[1];
                    torque[1] += r[2] * f[0] - r[0] * f[2];
                    torque[2] += r[0] * f[1] - r[1] * f[0];
                }
                for d in 0..3 {
                    assert!((t.force_i[d] + t.force_j[d] + t.force_k[d]).abs() < 1e-12);
                    assert!(torque[d].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn langevin_examples() {
        let off = LangevinParams::new(0.0, 0.6, 1).unwrap();
        assert_eq!(langevin_force([3.0, 1.0, 2.0], 1.0, &off, 0.005, 0, 0), [0.0; 3]);

        let cold = LangevinParams::new(1.0, 0.0, 1).unwrap();
        assert_eq!(langevin_force([1.0, 0.0, 0.0], 1.0, &cold, 0.005, 0, 0), [-1.0, -0.0, -0.0]);
    }

    #[test]
    fn noise_is_keyed_and_normal() {
        assert_eq!(thermal_noise(5, 10, 3), thermal_noise(5, 10, 3));
        assert_ne!(thermal_noise(5, 10, 3), thermal_noise(5, 11, 3));
        assert_ne!(thermal_noise(5, 10, 3), thermal_noise(5, 10, 4));
        assert_ne!(thermal_noise(5, 10, 3), thermal_noise(6, 10, 3));
        let n = 20_000;
        let (mut m, mut v) = (0.0, 0.0);
        for id in 0..n {
            for x in thermal_noise(99, 7, id) {
                m += x;
                v += x * x;
            }
        }
        let cnt = 3.0 * n as f64;
        assert!((m / cnt).abs() < 0.02);
        assert!((v / cnt - 1.0).abs() < 0.03);
    }
}
