//! Periodic box geometry.

use crate::error::{Error, Result};
use crate::soa::SENTINEL_COORD;

pub type Vec3 = [f64; 3];

/// Fully periodic orthorhombic simulation box, in reduced units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxSpec {
    lengths: Vec3,
}

impl BoxSpec {
    pub fn new(lengths: Vec3) -> Result<Self> {
        if lengths.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "box lengths must be positive and finite, got {lengths:?}"
            )));
        }
        let b = BoxSpec { lengths };
        // padding sentinels must stay more than 10 box lengths away from the box
        if SENTINEL_COORD - b.max_length() <= 10.0 * b.max_length() {
            return Err(Error::InvalidParameter(format!(
                "box of length {} is too large for the padding sentinel at {SENTINEL_COORD}",
                b.max_length()
            )));
        }
        Ok(b)
    }

    pub fn cubic(length: f64) -> Result<Self> {
        Self::new([length; 3])
    }

    pub fn lengths(&self) -> Vec3 {
        self.lengths
    }

    pub fn max_length(&self) -> f64 {
        self.lengths.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_length(&self) -> f64 {
        self.lengths.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn volume(&self) -> f64 {
        self.lengths.iter().product()
    }
}

/// Shortest periodic image of a displacement; each component ends up in `[-L/2, L/2)`.
pub fn minimum_image(d: Vec3, b: &BoxSpec) -> Vec3 {
    let mut out = d;
    for k in 0..3 {
        out[k] = image_component(d[k], b.lengths[k]);
    }
    out
}

#[inline]
fn image_component(d: f64, l: f64) -> f64 {
    let half = 0.5 * l;
    if (-half..half).contains(&d) {
        return d;
    }
    let mut r = d - l * (d / l + 0.5).floor();
    if r >= half {
        r -= l;
    } else if r < -half {
        r += l;
    }
    r
}

/// Maps a position into the primary box `[0, L)` per component.
pub fn wrap_position(p: Vec3, b: &BoxSpec) -> Vec3 {
    let mut out = p;
    for k in 0..3 {
        out[k] = wrap_component(p[k], b.lengths[k]);
    }
    out
}

#[inline]
fn wrap_component(p: f64, l: f64) -> f64 {
    if (0.0..l).contains(&p) {
        return p;
    }
    let mut r = p - l * (p / l).floor();
    if r < 0.0 {
        r += l;
    }
    if r >= l {
        // p sat a rounding error below a multiple of L
        r = 0.0;
    }
    r
}

#[inline]
pub fn norm2(v: Vec3) -> f64 {
    v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn box10() -> BoxSpec {
        BoxSpec::cubic(10.0).unwrap()
    }

    #[test]
    fn minimum_image_examples() {
        assert_eq!(minimum_image([0.0; 3], &box10()), [0.0; 3]);
        assert_eq!(minimum_image([6.0, 0.0, 0.0], &box10()), [-4.0, 0.0, 0.0]);
        let r = minimum_image([-5.1, 4.9, 12.0], &box10());
        let want = [4.9, 4.9, 2.0];
        for k in 0..3 {
            assert!((r[k] - want[k]).abs() < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn minimum_image_matches_image_scan() {
        // brute force: pick the shortest of the images d + n L for |n| <= 6
        let b = BoxSpec::new([10.0, 7.0, 13.0]).unwrap();
        let mut rng_state = 12345u64;
        for _ in 0..1000 {
            let mut d = [0.0; 3];
            for x in d.iter_mut() {
                rng_state = rng_state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *x = ((rng_state >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 60.0;
            }
            let r = minimum_image(d, &b);
            for k in 0..3 {
                let l = b.lengths()[k];
                let best = (-6..=6)
                    .map(|n| d[k] + n as f64 * l)
                    .min_by(|a, b| a.abs().partial_cmp(&b.abs()).unwrap())
                    .unwrap();
                assert!((r[k].abs() - best.abs()).abs() < 1e-9);
                assert!(r[k] >= -l / 2.0 && r[k] < l / 2.0);
            }
        }
    }

    #[test]
    fn half_box_boundary() {
        let r = minimum_image([5.0, -5.0, 0.0], &box10());
        assert_eq!(r, [-5.0, -5.0, 0.0]);
    }

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_position([0.0; 3], &box10()), [0.0; 3]);
        assert_eq!(wrap_position([10.0, 0.0, 0.0], &box10()), [0.0; 3]);
        let r = wrap_position([-0.5, 23.2, 5.0], &box10());
        let want = [9.5, 3.2, 5.0];
        for k in 0..3 {
            assert!((r[k] - want[k]).abs() < 1e-12, "{r:?}");
        }
        // tiny negative values must not land on L
        let r = wrap_position([-1e-300, 0.0, 0.0], &box10());
        assert!(r[0] >= 0.0 && r[0] < 10.0);
    }

    #[test]
    fn box_validation() {
        assert!(BoxSpec::new([1.0, 0.0, 1.0]).is_err());
        assert!(BoxSpec::new([1.0, f64::NAN, 1.0]).is_err());
        assert!(BoxSpec::cubic(1e8).is_err());
        assert!(BoxSpec::cubic(271.0).is_ok());
    }

    proptest! {
        #[test]
        fn minimum_image_idempotent(d in prop::array::uniform3(-1e3f64..1e3)) {
            let b = BoxSpec::new([10.0, 3.3, 17.5]).unwrap();
            let once = minimum_image(d, &b);
            prop_assert_eq!(minimum_image(once, &b), once);
            for k in 0..3 {
                let l = b.lengths()[k];
                prop_assert!(once[k] >= -l / 2.0 && once[k] < l / 2.0);
            }
        }

        #[test]
        fn wrap_shift_is_lattice_vector(p in prop::array::uniform3(-1e3f64..1e3)) {
            let b = BoxSpec::new([10.0, 3.3, 17.5]).unwrap();
            let w = wrap_position(p, &b);
            let back = minimum_image(sub(w, p), &b);
            for k in 0..3 {
                let l = b.lengths()[k];
                prop_assert!(w[k] >= 0.0 && w[k] < l);
                prop_assert!(back[k].abs() < 1e-9, "{:?}", back);
            }
        }
    }
}
