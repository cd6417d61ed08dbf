//! Cell binning, sorted Verlet lists and the pair-force traversal.

use std::ops::Range;

use crate::error::{Error, Result};
use crate::geometry::{wrap_position, BoxSpec, Vec3};
use crate::potentials::LJParams;
use crate::soa::{Particle, SoAStore, PAD_CHUNK};

/// Rectangular grid of real cells covering the box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellGrid {
    dims: [usize; 3],
    cell_lengths: Vec3,
    box_spec: BoxSpec,
}

/// Cells per dimension are `floor(L / (r_cut + r_skin))`, so every cell is at
/// least one Verlet radius wide.
pub fn build_cell_grid(box_spec: &BoxSpec, r_cut: f64, r_skin: f64) -> Result<CellGrid> {
    let min_cell = r_cut + r_skin;
    if !(r_cut > 0.0 && r_skin >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need r_cut > 0 and r_skin >= 0 (got {r_cut}, {r_skin})"
        )));
    }
    let lengths = box_spec.lengths();
    let mut dims = [0; 3];
    let mut cell_lengths = [0.0; 3];
    for k in 0..3 {
        if lengths[k] < min_cell {
            return Err(Error::Geometry {
                length: lengths[k],
                min_cell,
            });
        }
        dims[k] = ((lengths[k] / min_cell).floor() as usize).max(1);
        cell_lengths[k] = lengths[k] / dims[k] as f64;
    }
    Ok(CellGrid {
        dims,
        cell_lengths,
        box_spec: *box_spec,
    })
}

impl CellGrid {
    pub fn new(box_spec: &BoxSpec, r_cut: f64, r_skin: f64) -> Result<Self> {
        build_cell_grid(box_spec, r_cut, r_skin)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn cell_lengths(&self) -> Vec3 {
        self.cell_lengths
    }

    pub fn box_spec(&self) -> &BoxSpec {
        &self.box_spec
    }

    pub fn n_cells(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn flat(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    pub fn unflat(&self, i: usize) -> [usize; 3] {
        [
            i % self.dims[0],
            (i / self.dims[0]) % self.dims[1],
            i / (self.dims[0] * self.dims[1]),
        ]
    }

    /// Cell holding a (wrapped) position, clamped into the grid.
    pub fn cell_of(&self, p: Vec3) -> [usize; 3] {
        let mut c = [0; 3];
        for k in 0..3 {
            let x = (p[k] / self.cell_lengths[k]).floor();
            c[k] = if x <= 0.0 {
                0
            } else {
                (x as usize).min(self.dims[k] - 1)
            };
        }
        c
    }

    /// Folds an unwrapped cell coordinate back into the grid; also returns the
    /// periodic image index per dimension.
    pub fn wrap_cell(&self, g: [isize; 3]) -> ([usize; 3], [isize; 3]) {
        let mut c = [0; 3];
        let mut image = [0; 3];
        for k in 0..3 {
            let d = self.dims[k] as isize;
            image[k] = g[k].div_euclid(d);
            c[k] = g[k].rem_euclid(d) as usize;
        }
        (c, image)
    }

    /// The whole grid as one block with a one-cell ghost shell.
    pub fn full_block(&self) -> CellBlock {
        CellBlock::new([0; 3], self.dims)
    }
}

/// A box-shaped range of real cells plus a one-cell ghost shell, indexed locally.
///
/// Local coordinates run from -1 to `real_dims[k]` inclusive; -1 and
/// `real_dims[k]` are ghost layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellBlock {
    pub origin: [usize; 3],
    pub real_dims: [usize; 3],
}

impl CellBlock {
    pub fn new(origin: [usize; 3], real_dims: [usize; 3]) -> Self {
        CellBlock { origin, real_dims }
    }

    pub fn ext_dims(&self) -> [usize; 3] {
        self.real_dims.map(|d| d + 2)
    }

    pub fn n_cells(&self) -> usize {
        self.ext_dims().iter().product()
    }

    pub fn n_real_cells(&self) -> usize {
        self.real_dims.iter().product()
    }

    pub fn local_index(&self, l: [isize; 3]) -> usize {
        let e = self.ext_dims();
        let u = l.map(|x| (x + 1) as usize);
        debug_assert!(u[0] < e[0] && u[1] < e[1] && u[2] < e[2], "{l:?} outside block");
        u[0] + e[0] * (u[1] + e[1] * u[2])
    }

    pub fn local_coords(&self, idx: usize) -> [isize; 3] {
        let e = self.ext_dims();
        [
            (idx % e[0]) as isize - 1,
            ((idx / e[0]) % e[1]) as isize - 1,
            (idx / (e[0] * e[1])) as isize - 1,
        ]
    }

    pub fn is_ghost(&self, idx: usize) -> bool {
        let l = self.local_coords(idx);
        (0..3).any(|k| l[k] < 0 || l[k] >= self.real_dims[k] as isize)
    }

    pub fn ghost_flags(&self) -> Vec<bool> {
        (0..self.n_cells()).map(|i| self.is_ghost(i)).collect()
    }

    /// Unwrapped global cell coordinate of a local cell.
    pub fn global_of(&self, idx: usize) -> [isize; 3] {
        let l = self.local_coords(idx);
        [
            self.origin[0] as isize + l[0],
            self.origin[1] as isize + l[1],
            self.origin[2] as isize + l[2],
        ]
    }

    /// Local index of a global cell known to be one of this block's real cells.
    pub fn local_of_global(&self, g: [usize; 3]) -> usize {
        self.local_index([
            g[0] as isize - self.origin[0] as isize,
            g[1] as isize - self.origin[1] as isize,
            g[2] as isize - self.origin[2] as isize,
        ])
    }

    pub fn contains_global(&self, g: [usize; 3]) -> bool {
        (0..3).all(|k| g[k] >= self.origin[k] && g[k] < self.origin[k] + self.real_dims[k])
    }

    /// Local indices of the real cells, x fastest.
    pub fn real_cells(&self) -> impl Iterator<Item = usize> + '_ {
        let [nx, ny, nz] = self.real_dims.map(|d| d as isize);
        (0..nz).flat_map(move |z| {
            (0..ny).flat_map(move |y| (0..nx).map(move |x| self.local_index([x, y, z])))
        })
    }
}

/// The 13 neighbor offsets of the half stencil: every offset that is
/// lexicographically positive in (z, y, x), so exactly one of `o` and `-o` is present.
pub const HALF_STENCIL: [[isize; 3]; 13] = [
    [1, 0, 0],
    [-1, 1, 0],
    [0, 1, 0],
    [1, 1, 0],
    [-1, -1, 1],
    [0, -1, 1],
    [1, -1, 1],
    [-1, 0, 1],
    [0, 0, 1],
    [1, 0, 1],
    [-1, 1, 1],
    [0, 1, 1],
    [1, 1, 1],
];

/// Re-bins every particle of a ghost-free, whole-grid store into the cell that
/// contains its wrapped position.
pub fn bin_particles(store: &SoAStore, grid: &CellGrid, box_spec: &BoxSpec) -> Result<SoAStore> {
    let mut cells: Vec<Vec<Particle>> = vec![Vec::new(); grid.n_cells()];
    for s in store.real_slots() {
        let mut p = store.particle(s);
        if p.position.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinitePosition(p.id));
        }
        p.position = wrap_position(p.position, box_spec);
        cells[grid.flat(grid.cell_of(p.position))].push(p);
    }
    Ok(SoAStore::from_cells(&cells))
}

/// Verlet list in sorted form: the partners of `ilist[n]` are
/// `jlist[irange[n].0 .. irange[n].1]`.
///
/// Each run is padded to a multiple of [`PAD_CHUNK`] with indices at or beyond
/// `sentinel_start`, which refer to far-away sentinel entries of the store.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SortedNeighborList {
    pub ilist: Vec<u32>,
    pub irange: Vec<(u32, u32)>,
    pub jlist: Vec<u32>,
    sentinel_start: u32,
}

impl SortedNeighborList {
    pub fn is_sentinel(&self, j: u32) -> bool {
        j >= self.sentinel_start
    }

    /// All listed `(i, j)` slot pairs, padding excluded.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.ilist.iter().zip(&self.irange).flat_map(move |(&i, &(b, e))| {
            self.jlist[b as usize..e as usize]
                .iter()
                .filter(move |&&j| !self.is_sentinel(j))
                .map(move |&j| (i as usize, j as usize))
        })
    }

    pub fn n_pairs(&self) -> usize {
        self.jlist.iter().filter(|&&j| !self.is_sentinel(j)).count()
    }

    pub fn is_empty(&self) -> bool {
        self.ilist.is_empty()
    }
}

/// Positions of the real particles (in store slot order) when the list was built.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RebuildSnapshot {
    positions: Vec<Vec3>,
}

impl RebuildSnapshot {
    pub fn capture(store: &SoAStore) -> Self {
        RebuildSnapshot {
            positions: store.real_slots().map(|s| store.position(s)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Builds the half Verlet list of one block: pairs inside each real cell plus
/// pairs with the 13 half-stencil neighbors (which may be ghost cells).
pub fn build_sorted_list(
    store: &SoAStore,
    block: &CellBlock,
    r_verlet: f64,
) -> (SortedNeighborList, RebuildSnapshot) {
    let rv2 = r_verlet * r_verlet;
    let sentinel = store.sentinel_tail().start as u32;
    let [px, py, pz] = store.positions();
    let ids = store.ids();
    let mut list = SortedNeighborList {
        sentinel_start: sentinel,
        ..Default::default()
    };
    list.jlist.reserve(store.n_real() * 48);
    let mut neighbor_ranges: Vec<Range<usize>> = Vec::with_capacity(HALF_STENCIL.len());

    for c in block.real_cells() {
        let lc = block.local_coords(c);
        neighbor_ranges.clear();
        for o in HALF_STENCIL {
            let n = block.local_index([lc[0] + o[0], lc[1] + o[1], lc[2] + o[2]]);
            neighbor_ranges.push(store.cell(n).real_range());
        }
        let own = store.cell(c).real_range();
        for i in own.clone() {
            let (xi, yi, zi) = (px[i], py[i], pz[i]);
            let begin = list.jlist.len();
            let candidates = (i + 1..own.end).chain(neighbor_ranges.iter().cloned().flatten());
            for j in candidates {
                let (dx, dy, dz) = (xi - px[j], yi - py[j], zi - pz[j]);
                if dx * dx + dy * dy + dz * dz <= rv2 && ids[j] != ids[i] {
                    list.jlist.push(j as u32);
                }
            }
            let n = list.jlist.len() - begin;
            if n == 0 {
                continue;
            }
            let pad = n.div_ceil(PAD_CHUNK) * PAD_CHUNK - n;
            list.jlist.extend((0..pad as u32).map(|k| sentinel + k));
            list.ilist.push(i as u32);
            list.irange.push((begin as u32, list.jlist.len() as u32));
        }
    }
    (list, RebuildSnapshot::capture(store))
}

/// Largest squared displacement of any real particle since the snapshot.
pub fn max_displacement2(store: &SoAStore, snapshot: &RebuildSnapshot) -> Result<f64> {
    let n = store.n_real();
    if n != snapshot.len() {
        return Err(Error::StaleSnapshot {
            snapshot: snapshot.len(),
            store: n,
        });
    }
    let [px, py, pz] = store.positions();
    let mut max = 0.0f64;
    for (s, p0) in store.real_slots().zip(&snapshot.positions) {
        let d2 = (px[s] - p0[0]).powi(2) + (py[s] - p0[1]).powi(2) + (pz[s] - p0[2]).powi(2);
        max = max.max(d2);
    }
    Ok(max)
}

/// True once some particle has moved more than half the skin since the list was built.
pub fn needs_rebuild(store: &SoAStore, snapshot: &RebuildSnapshot, r_skin: f64) -> Result<bool> {
    let half = 0.5 * r_skin;
    Ok(max_displacement2(store, snapshot)? > half * half)
}

/// Traverses the sorted list and accumulates Lennard-Jones forces on both partners.
/// Returns the pair energy, each pair counted once.
pub fn compute_pair_forces(
    list: &SortedNeighborList,
    store: &mut SoAStore,
    params: &LJParams,
) -> Result<f64> {
    pair_kernel::<false>(list, store, params, 0.0)
}

/// As [`compute_pair_forces`], but every pair force magnitude is limited to `cap`.
/// Meant for pushing apart overlapping starting configurations; the returned
/// energy is the uncapped one.
pub fn compute_pair_forces_capped(
    list: &SortedNeighborList,
    store: &mut SoAStore,
    params: &LJParams,
    cap: f64,
) -> Result<f64> {
    pair_kernel::<true>(list, store, params, cap)
}

#[inline(always)]
fn pair_kernel<const CAPPED: bool>(
    list: &SortedNeighborList,
    store: &mut SoAStore,
    params: &LJParams,
    cap: f64,
) -> Result<f64> {
    let rc2 = params.r_cut() * params.r_cut();
    let sig2 = params.sigma() * params.sigma();
    let eps4 = 4.0 * params.epsilon();
    let eps24 = 24.0 * params.epsilon();
    let shift = params.shift();

    let [px, py, pz] = &store.pos;
    let [fx, fy, fz] = &mut store.force;
    let (px, py, pz): (&[f64], &[f64], &[f64]) = (px, py, pz);
    let (fx, fy, fz): (&mut [f64], &mut [f64], &mut [f64]) = (fx, fy, fz);

    let mut energy = 0.0;
    let mut min_r2 = f64::INFINITY;
    let mut closest = (0, 0);
    for (&i, &(b, e)) in list.ilist.iter().zip(&list.irange) {
        let i = i as usize;
        let (xi, yi, zi) = (px[i], py[i], pz[i]);
        let (mut fxi, mut fyi, mut fzi) = (0.0, 0.0, 0.0);
        let mut ei = 0.0;
        let mut min_i = f64::INFINITY;
        for &j in &list.jlist[b as usize..e as usize] {
            let j = j as usize;
            let dx = xi - px[j];
            let dy = yi - py[j];
            let dz = zi - pz[j];
            let r2 = dx * dx + dy * dy + dz * dz;
            min_i = min_i.min(r2);
            if r2 >= rc2 {
                continue;
            }
            let s2 = sig2 / r2;
            let s6 = s2 * s2 * s2;
            let mut ff = eps24 * (2.0 * s6 * s6 - s6) / r2;
            if CAPPED {
                ff = ff.min(cap / r2.sqrt());
            }
            ei += eps4 * (s6 * s6 - s6) - shift;
            fxi += ff * dx;
            fyi += ff * dy;
            fzi += ff * dz;
            fx[j] -= ff * dx;
            fy[j] -= ff * dy;
            fz[j] -= ff * dz;
        }
        fx[i] += fxi;
        fy[i] += fyi;
        fz[i] += fzi;
        energy += ei;
        if min_i < min_r2 {
            min_r2 = min_i;
            closest = (i, b as usize);
        }
    }
    if min_r2 == 0.0 {
        let (i, b) = closest;
        let j = list.jlist[b..]
            .iter()
            .map(|&j| j as usize)
            .find(|&j| px[j] == px[i] && py[j] == py[i] && pz[j] == pz[i])
            .unwrap_or(i);
        return Err(Error::Overlap(store.id[i], store.id[j]));
    }
    Ok(energy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn grid_examples() {
        let g = build_cell_grid(&BoxSpec::cubic(10.0).unwrap(), 2.5, 0.3).unwrap();
        assert_eq!(g.dims(), [3, 3, 3]);
        assert!((g.cell_lengths()[0] - 10.0 / 3.0).abs() < 1e-15);

        let l = (262144.0f64 / 0.8442).cbrt();
        let g = build_cell_grid(&BoxSpec::cubic(l).unwrap(), 2.5, 0.3).unwrap();
        assert_eq!(g.dims(), [24, 24, 24]);

        let g = build_cell_grid(&BoxSpec::cubic(2.8).unwrap(), 2.5, 0.3).unwrap();
        assert_eq!(g.dims(), [1, 1, 1]);

        let err = build_cell_grid(&BoxSpec::cubic(2.7).unwrap(), 2.5, 0.3);
        assert!(matches!(err, Err(Error::Geometry { .. })));
    }

    #[test]
    fn half_stencil_is_a_half() {
        let all: BTreeSet<[isize; 3]> = HALF_STENCIL.iter().copied().collect();
        assert_eq!(all.len(), 13);
        for o in HALF_STENCIL {
            assert!(!all.contains(&o.map(|x| -x)));
            assert_ne!(o, [0, 0, 0]);
        }
    }

    #[test]
    fn cell_of_clamps() {
        let b = BoxSpec::cubic(10.0).unwrap();
        let g = build_cell_grid(&b, 2.5, 0.3).unwrap();
        assert_eq!(g.cell_of([0.0; 3]), [0, 0, 0]);
        let last = 10.0f64.next_down();
        assert_eq!(g.cell_of([last; 3]), [2, 2, 2]);
        assert_eq!(g.cell_of([10.0; 3]), [2, 2, 2]);
        assert_eq!(g.cell_of([-0.0; 3]), [0, 0, 0]);
    }

    #[test]
    fn bin_particles_places_each_in_its_cell() {
        use rand::{Rng, SeedableRng};
        let b = BoxSpec::new([10.0, 12.0, 8.5]).unwrap();
        let g = build_cell_grid(&b, 2.5, 0.3).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let ps: Vec<_> = (0..1000)
            .map(|i| Particle::new(i, [rng.random_range(-5.0..15.0), rng.random_range(0.0..12.0), rng.random_range(0.0..8.5)]))
            .collect();
        let raw = SoAStore::from_cells(&[ps]);
        let binned = bin_particles(&raw, &g, &b).unwrap();
        assert_eq!(binned.n_real(), 1000);
        binned.check_invariants(1e3).unwrap();
        let cl = g.cell_lengths();
        for (c, cell) in binned.cells().iter().enumerate() {
            let cc = g.unflat(c);
            for s in cell.real_range() {
                let p = binned.position(s);
                for k in 0..3 {
                    let lo = cc[k] as f64 * cl[k];
                    assert!(p[k] >= lo - 1e-12 && p[k] < lo + cl[k] + 1e-12, "{p:?} not in {cc:?}");
                }
            }
        }

        let bad = SoAStore::from_cells(&[vec![Particle::new(7, [f64::NAN, 0.0, 0.0])]]);
        assert_eq!(bin_particles(&bad, &g, &b).unwrap_err(), Error::NonFinitePosition(7));
    }

    #[test]
    fn block_indexing_round_trips() {
        let b = CellBlock::new([2, 0, 5], [3, 1, 2]);
        assert_eq!(b.n_cells(), 5 * 3 * 4);
        for i in 0..b.n_cells() {
            assert_eq!(b.local_index(b.local_coords(i)), i);
        }
        assert_eq!(b.real_cells().count(), 6);
        assert!(b.real_cells().all(|c| !b.is_ghost(c)));
        assert_eq!(b.ghost_flags().iter().filter(|&&g| g).count(), 60 - 6);
        assert_eq!(b.global_of(b.local_index([0, 0, 0])), [2, 0, 5]);
        assert_eq!(b.global_of(b.local_index([-1, 1, 2])), [1, 1, 7]);
    }

    #[test]
    fn rebuild_trigger() {
        let ps = vec![Particle::new(0, [1.0; 3]), Particle::new(1, [2.0; 3])];
        let mut s = SoAStore::from_cells(&[ps]);
        let snap = RebuildSnapshot::capture(&s);
        assert!(!needs_rebuild(&s, &snap, 0.3).unwrap());

        s.set_position(0, [1.16, 1.0, 1.0]);
        assert!(needs_rebuild(&s, &snap, 0.3).unwrap());

        // exactly half a skin is not enough
        let half = 0.25;
        let mut t = SoAStore::from_cells(&[vec![Particle::new(0, [1.0; 3]), Particle::new(1, [2.0; 3])]]);
        let snap = RebuildSnapshot::capture(&t);
        t.set_position(0, [1.0 + half, 1.0, 1.0]);
        t.set_position(1, [2.0, 2.0 - half, 2.0]);
        assert!(!needs_rebuild(&t, &snap, 0.5).unwrap());

        let other = SoAStore::from_cells(&[vec![Particle::new(0, [1.0; 3])]]);
        assert!(matches!(
            needs_rebuild(&other, &snap, 0.3),
            Err(Error::StaleSnapshot { snapshot: 2, store: 1 })
        ));
    }

    #[test]
    fn empty_list_leaves_forces() {
        let mut s = SoAStore::from_cells(&[vec![Particle::new(0, [1.0; 3])]]);
        s.add_force(0, [1.0, 2.0, 3.0]);
        let list = SortedNeighborList::default();
        assert_eq!(compute_pair_forces(&list, &mut s, &LJParams::fluid()).unwrap(), 0.0);
        assert_eq!(s.force(0), [1.0, 2.0, 3.0]);
    }
}
