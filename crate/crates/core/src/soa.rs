//! Structure-of-arrays particle storage, segmented by cell.
//!
//! Every attribute lives in its own contiguous array. The arrays are split into
//! per-cell segments whose lengths are rounded up to [`PAD_CHUNK`] entries; the
//! float columns are 64-byte aligned, so each cell segment starts on a cache-line
//! boundary. Unused entries at the end of a segment hold sentinel particles placed
//! at [`SENTINEL_COORD`], far outside any box, so a kernel may sweep a whole padded
//! segment without a scalar tail loop.
//!
//! Non-ghost ("real") cells are stored first, then ghost cells, then one extra
//! chunk of sentinels that neighbor lists use as padding targets.

use std::ops::{Deref, DerefMut, Range};

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::ParticleId;

/// Cells are padded to a multiple of this many entries (8 doubles = one 64-byte line).
pub const PAD_CHUNK: usize = 8;
/// Coordinate used for every component of a padding entry.
pub const SENTINEL_COORD: f64 = 1e9;
pub const SENTINEL_ID: ParticleId = ParticleId::MAX;

#[derive(Clone, Copy)]
#[repr(C, align(64))]
struct Lanes([f64; PAD_CHUNK]);

/// A float column allocated in 64-byte aligned chunks of [`PAD_CHUNK`] values.
#[derive(Clone)]
pub struct AlignedColumn {
    chunks: Vec<Lanes>,
}

impl AlignedColumn {
    fn filled(n_chunks: usize, value: f64) -> Self {
        AlignedColumn {
            chunks: vec![Lanes([value; PAD_CHUNK]); n_chunks],
        }
    }

    fn insert_chunk(&mut self, at: usize, value: f64) {
        self.chunks.insert(at, Lanes([value; PAD_CHUNK]));
    }

    fn remove_chunk(&mut self, at: usize) {
        self.chunks.remove(at);
    }
}

impl Deref for AlignedColumn {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        // SAFETY: Lanes is repr(C) over [f64; PAD_CHUNK] with no padding, so the
        // chunk buffer is exactly chunks.len() * PAD_CHUNK contiguous f64 values.
        unsafe {
            std::slice::from_raw_parts(
                self.chunks.as_ptr() as *const f64,
                self.chunks.len() * PAD_CHUNK,
            )
        }
    }
}

impl DerefMut for AlignedColumn {
    fn deref_mut(&mut self) -> &mut [f64] {
        // SAFETY: see Deref; the exclusive borrow of self covers the whole buffer.
        unsafe {
            std::slice::from_raw_parts_mut(
                self.chunks.as_mut_ptr() as *mut f64,
                self.chunks.len() * PAD_CHUNK,
            )
        }
    }
}

impl std::fmt::Debug for AlignedColumn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.iter()).finish()
    }
}

/// Location of one cell's segment inside the attribute arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CellSlot {
    pub start: usize,
    pub real: usize,
    pub padded: usize,
    pub ghost: bool,
}

impl CellSlot {
    pub fn real_range(&self) -> Range<usize> {
        self.start..self.start + self.real
    }

    pub fn padded_range(&self) -> Range<usize> {
        self.start..self.start + self.padded
    }
}

/// One particle's attributes, used when moving particles in or out of a store.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub id: ParticleId,
    pub kind: u8,
    pub mass: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub force: Vec3,
}

impl Particle {
    pub fn new(id: ParticleId, position: Vec3) -> Self {
        Particle {
            id,
            kind: 0,
            mass: 1.0,
            position,
            velocity: [0.0; 3],
            force: [0.0; 3],
        }
    }

    pub(crate) fn sentinel() -> Self {
        Particle {
            id: SENTINEL_ID,
            kind: 0,
            mass: 1.0,
            position: [SENTINEL_COORD; 3],
            velocity: [0.0; 3],
            force: [0.0; 3],
        }
    }
}

pub fn padded_len(real: usize) -> usize {
    real.div_ceil(PAD_CHUNK) * PAD_CHUNK
}

#[derive(Debug, Clone)]
pub struct SoAStore {
    cells: Vec<CellSlot>,
    pub(crate) id: Vec<ParticleId>,
    pub(crate) kind: Vec<u8>,
    pub(crate) mass: AlignedColumn,
    pub(crate) pos: [AlignedColumn; 3],
    pub(crate) vel: [AlignedColumn; 3],
    pub(crate) force: [AlignedColumn; 3],
    // cell indices in storage order
    order: Vec<usize>,
    ghost_start: usize,
    tail: usize,
}

impl SoAStore {
    /// Allocates a store whose cell `c` has room for `counts[c]` particles, all
    /// entries initialized to sentinels. `ghost[c]` marks ghost cells.
    pub fn with_layout(counts: &[usize], ghost: &[bool]) -> Self {
        assert_eq!(counts.len(), ghost.len());
        let mut cells = vec![
            CellSlot {
                start: 0,
                real: 0,
                padded: 0,
                ghost: false
            };
            counts.len()
        ];
        let mut offset = 0;
        let mut ghost_start = 0;
        let mut order = Vec::with_capacity(counts.len());
        for pass_ghost in [false, true] {
            if pass_ghost {
                ghost_start = offset;
            }
            for (c, (&n, &g)) in counts.iter().zip(ghost).enumerate() {
                if g != pass_ghost {
                    continue;
                }
                order.push(c);
                let padded = padded_len(n);
                cells[c] = CellSlot {
                    start: offset,
                    real: n,
                    padded,
                    ghost: g,
                };
                offset += padded;
            }
        }
        let tail = offset;
        let n_chunks = tail / PAD_CHUNK + 1;
        let col = |v| AlignedColumn::filled(n_chunks, v);
        let len = n_chunks * PAD_CHUNK;
        SoAStore {
            cells,
            id: vec![SENTINEL_ID; len],
            kind: vec![0; len],
            mass: col(1.0),
            pos: [col(SENTINEL_COORD), col(SENTINEL_COORD), col(SENTINEL_COORD)],
            vel: [col(0.0), col(0.0), col(0.0)],
            force: [col(0.0), col(0.0), col(0.0)],
            order,
            ghost_start,
            tail,
        }
    }

    /// Builds a store of non-ghost cells from per-cell particle lists.
    pub fn from_cells(cells: &[Vec<Particle>]) -> Self {
        let counts: Vec<usize> = cells.iter().map(Vec::len).collect();
        let mut store = Self::with_layout(&counts, &vec![false; cells.len()]);
        for (c, ps) in cells.iter().enumerate() {
            let start = store.cells[c].start;
            for (k, p) in ps.iter().enumerate() {
                store.set_particle(start + k, p);
            }
        }
        store
    }

    pub fn cells(&self) -> &[CellSlot] {
        &self.cells
    }

    pub fn cell(&self, c: usize) -> &CellSlot {
        &self.cells[c]
    }

    /// Total entries per attribute array, padding and the sentinel tail included.
    pub fn len(&self) -> usize {
        self.id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_real() == 0
    }

    /// Entries before this offset belong to non-ghost cells.
    pub fn ghost_start(&self) -> usize {
        self.ghost_start
    }

    /// Sentinel entries reserved after the last cell.
    pub fn sentinel_tail(&self) -> Range<usize> {
        self.tail..self.tail + PAD_CHUNK
    }

    /// Number of particles in non-ghost cells.
    pub fn n_real(&self) -> usize {
        self.cells.iter().filter(|c| !c.ghost).map(|c| c.real).sum()
    }

    /// Slots of all particles in non-ghost cells, cell by cell.
    pub fn real_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.cells
            .iter()
            .filter(|c| !c.ghost)
            .flat_map(CellSlot::real_range)
    }

    pub fn id(&self, slot: usize) -> ParticleId {
        self.id[slot]
    }

    pub fn ids(&self) -> &[ParticleId] {
        &self.id
    }

    pub fn kinds(&self) -> &[u8] {
        &self.kind
    }

    pub fn masses(&self) -> &[f64] {
        &self.mass
    }

    pub fn position(&self, slot: usize) -> Vec3 {
        [self.pos[0][slot], self.pos[1][slot], self.pos[2][slot]]
    }

    pub fn velocity(&self, slot: usize) -> Vec3 {
        [self.vel[0][slot], self.vel[1][slot], self.vel[2][slot]]
    }

    pub fn force(&self, slot: usize) -> Vec3 {
        [self.force[0][slot], self.force[1][slot], self.force[2][slot]]
    }

    pub fn positions(&self) -> [&[f64]; 3] {
        [&self.pos[0], &self.pos[1], &self.pos[2]]
    }

    pub fn forces(&self) -> [&[f64]; 3] {
        [&self.force[0], &self.force[1], &self.force[2]]
    }

    pub fn set_velocity(&mut self, slot: usize, v: Vec3) {
        for k in 0..3 {
            self.vel[k][slot] = v[k];
        }
    }

    pub fn set_position(&mut self, slot: usize, p: Vec3) {
        for k in 0..3 {
            self.pos[k][slot] = p[k];
        }
    }

    pub fn add_force(&mut self, slot: usize, f: Vec3) {
        for k in 0..3 {
            self.force[k][slot] += f[k];
        }
    }

    pub fn particle(&self, slot: usize) -> Particle {
        Particle {
            id: self.id[slot],
            kind: self.kind[slot],
            mass: self.mass[slot],
            position: self.position(slot),
            velocity: self.velocity(slot),
            force: self.force(slot),
        }
    }

    pub fn set_particle(&mut self, slot: usize, p: &Particle) {
        self.id[slot] = p.id;
        self.kind[slot] = p.kind;
        self.mass[slot] = p.mass;
        for k in 0..3 {
            self.pos[k][slot] = p.position[k];
            self.vel[k][slot] = p.velocity[k];
            self.force[k][slot] = p.force[k];
        }
    }

    pub fn zero_forces(&mut self) {
        for col in &mut self.force {
            col.fill(0.0);
        }
    }

    pub(crate) fn zero_forces_from(&mut self, start: usize) {
        for col in &mut self.force {
            col[start..].fill(0.0);
        }
    }

    /// Appends a particle to cell `c`, growing the cell by one chunk if it is full.
    pub fn insert(&mut self, c: usize, p: &Particle) -> usize {
        let slot = self.cells[c];
        if slot.real == slot.padded {
            let at = slot.start + slot.padded;
            self.insert_chunk(at);
            self.cells[c].padded += PAD_CHUNK;
            self.relayout();
        }
        let s = self.cells[c].start + self.cells[c].real;
        self.set_particle(s, p);
        self.cells[c].real += 1;
        s
    }

    /// Removes the `k`-th particle of cell `c` by moving the cell's last particle
    /// into its place, then re-pads the cell.
    pub fn remove(&mut self, c: usize, k: usize) -> Particle {
        let slot = self.cells[c];
        assert!(k < slot.real, "remove index {k} out of range for cell {c}");
        let victim = slot.start + k;
        let last = slot.start + slot.real - 1;
        let out = self.particle(victim);
        if victim != last {
            let moved = self.particle(last);
            self.set_particle(victim, &moved);
        }
        self.set_particle(last, &Particle::sentinel());
        self.cells[c].real -= 1;
        if padded_len(self.cells[c].real) < slot.padded {
            self.remove_chunk(slot.start + slot.padded - PAD_CHUNK);
            self.cells[c].padded -= PAD_CHUNK;
            self.relayout();
        }
        out
    }

    fn insert_chunk(&mut self, at: usize) {
        debug_assert_eq!(at % PAD_CHUNK, 0);
        let ci = at / PAD_CHUNK;
        let s = Particle::sentinel();
        self.id.splice(at..at, [s.id; PAD_CHUNK]);
        self.kind.splice(at..at, [s.kind; PAD_CHUNK]);
        self.mass.insert_chunk(ci, s.mass);
        for k in 0..3 {
            self.pos[k].insert_chunk(ci, SENTINEL_COORD);
            self.vel[k].insert_chunk(ci, 0.0);
            self.force[k].insert_chunk(ci, 0.0);
        }
    }

    fn remove_chunk(&mut self, at: usize) {
        debug_assert_eq!(at % PAD_CHUNK, 0);
        let ci = at / PAD_CHUNK;
        self.id.drain(at..at + PAD_CHUNK);
        self.kind.drain(at..at + PAD_CHUNK);
        self.mass.remove_chunk(ci);
        for k in 0..3 {
            self.pos[k].remove_chunk(ci);
            self.vel[k].remove_chunk(ci);
            self.force[k].remove_chunk(ci);
        }
    }

    // recomputes segment offsets from the padded counts in storage order
    fn relayout(&mut self) {
        let mut offset = 0;
        self.ghost_start = usize::MAX;
        for &c in &self.order {
            let cell = &mut self.cells[c];
            if cell.ghost && self.ghost_start == usize::MAX {
                self.ghost_start = offset;
            }
            cell.start = offset;
            offset += cell.padded;
        }
        if self.ghost_start == usize::MAX {
            self.ghost_start = offset;
        }
        self.tail = offset;
    }

    /// Verifies the layout invariants; returns a description of the first violation.
    pub fn check_invariants(&self, sentinel_clearance: f64) -> std::result::Result<(), String> {
        let n = self.id.len();
        let lens = [
            self.kind.len(),
            self.mass.len(),
            self.pos[0].len(),
            self.pos[1].len(),
            self.pos[2].len(),
            self.vel[0].len(),
            self.force[2].len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(format!("attribute lengths differ: {n} vs {lens:?}"));
        }
        for (c, cell) in self.cells.iter().enumerate() {
            if cell.padded != padded_len(cell.real) {
                return Err(format!("cell {c}: padded {} for {} real", cell.padded, cell.real));
            }
            if cell.start % PAD_CHUNK != 0 {
                return Err(format!("cell {c} starts unaligned at {}", cell.start));
            }
            for s in cell.start + cell.real..cell.start + cell.padded {
                if self.id[s] != SENTINEL_ID
                    || self.position(s).iter().any(|&x| x < sentinel_clearance)
                {
                    return Err(format!("cell {c}: padding slot {s} is not a sentinel"));
                }
            }
            for s in cell.real_range() {
                if self.id[s] == SENTINEL_ID {
                    return Err(format!("cell {c}: real slot {s} holds a sentinel"));
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for s in self.real_slots() {
            if !seen.insert(self.id[s]) {
                return Err(format!("id {} appears twice", self.id[s]));
            }
        }
        if !(self.mass.as_ptr() as usize).is_multiple_of(64) {
            return Err("mass column not 64-byte aligned".into());
        }
        Ok(())
    }
}

/// Shared view of a store's real region.
pub(crate) struct RealView<'a> {
    pub cells: &'a [CellSlot],
    pub id: &'a [ParticleId],
    pub kind: &'a [u8],
    pub mass: &'a [f64],
    pub pos: [&'a [f64]; 3],
}

/// Exclusive view of a store's ghost region; slot `s` lives at `s - offset`.
pub(crate) struct GhostViewMut<'a> {
    pub cells: &'a [CellSlot],
    pub offset: usize,
    pub id: &'a mut [ParticleId],
    pub kind: &'a mut [u8],
    pub mass: &'a mut [f64],
    pub pos: [&'a mut [f64]; 3],
    pub vel: [&'a mut [f64]; 3],
    pub force: [&'a mut [f64]; 3],
}

pub(crate) struct RealForceMut<'a> {
    pub cells: &'a [CellSlot],
    pub force: [&'a mut [f64]; 3],
}

pub(crate) struct GhostForce<'a> {
    pub cells: &'a [CellSlot],
    pub offset: usize,
    pub force: [&'a [f64]; 3],
}

fn split3(cols: &mut [AlignedColumn; 3], at: usize) -> ([&mut [f64]; 3], [&mut [f64]; 3]) {
    let [a, b, c] = cols;
    let (a0, a1) = a.split_at_mut(at);
    let (b0, b1) = b.split_at_mut(at);
    let (c0, c1) = c.split_at_mut(at);
    ([a0, b0, c0], [a1, b1, c1])
}

impl SoAStore {
    pub(crate) fn split_ghost_mut(&mut self) -> (RealView<'_>, GhostViewMut<'_>) {
        let gs = self.ghost_start;
        let SoAStore {
            cells,
            id,
            kind,
            mass,
            pos,
            vel,
            force,
            ..
        } = self;
        let cells: &[CellSlot] = cells;
        let (id0, id1) = id.split_at_mut(gs);
        let (k0, k1) = kind.split_at_mut(gs);
        let (m0, m1) = mass.split_at_mut(gs);
        let (p0, p1) = split3(pos, gs);
        let (_, v1) = split3(vel, gs);
        let (_, f1) = split3(force, gs);
        (
            RealView {
                cells,
                id: id0,
                kind: k0,
                mass: m0,
                pos: p0.map(|x| &*x),
            },
            GhostViewMut {
                cells,
                offset: gs,
                id: id1,
                kind: k1,
                mass: m1,
                pos: p1,
                vel: v1,
                force: f1,
            },
        )
    }

    pub(crate) fn split_force_mut(&mut self) -> (RealForceMut<'_>, GhostForce<'_>) {
        let gs = self.ghost_start;
        let SoAStore { cells, force, .. } = self;
        let cells: &[CellSlot] = cells;
        let (f0, f1) = split3(force, gs);
        (
            RealForceMut { cells, force: f0 },
            GhostForce {
                cells,
                offset: gs,
                force: f1.map(|x| &*x),
            },
        )
    }
}

/// Sum of `½ m v²` and particle count over the store's non-ghost cells.
pub(crate) fn kinetic_sum(store: &SoAStore) -> (f64, usize) {
    let mut e = 0.0;
    let mut n = 0;
    for s in store.real_slots() {
        let v2 = store.vel[0][s].powi(2) + store.vel[1][s].powi(2) + store.vel[2][s].powi(2);
        e += 0.5 * store.mass[s] * v2;
        n += 1;
    }
    (e, n)
}

/// Kinetic energy and instantaneous temperature `2E / 3N` (k_B = 1).
pub fn kinetic_energy_and_temperature(store: &SoAStore) -> Result<(f64, f64)> {
    let (e, n) = kinetic_sum(store);
    temperature_of(e, n)
}

pub(crate) fn temperature_of(energy: f64, n: usize) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::EmptySystem);
    }
    Ok((energy, 2.0 * energy / (3.0 * n as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn p(id: u64, x: f64) -> Particle {
        Particle::new(id, [x, 0.0, 0.0])
    }

    #[test]
    fn layout_is_padded_and_aligned() {
        let cells = vec![
            (0..3).map(|i| p(i, 0.1)).collect::<Vec<_>>(),
            vec![],
            (3..12).map(|i| p(i, 0.2)).collect(),
        ];
        let s = SoAStore::from_cells(&cells);
        assert_eq!(s.cell(0).padded, 8);
        assert_eq!(s.cell(1).padded, 0);
        assert_eq!(s.cell(2).padded, 16);
        assert_eq!(s.len(), 8 + 16 + PAD_CHUNK);
        assert_eq!(s.n_real(), 12);
        s.check_invariants(1e3).unwrap();
        assert_eq!(s.positions()[0].as_ptr() as usize % 64, 0);
    }

    #[test]
    fn real_iteration_visits_each_id_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut cells: Vec<Vec<Particle>> = vec![vec![]; 17];
        for id in 0..500 {
            let c = rng.random_range(0..17);
            cells[c].push(p(id, rng.random::<f64>() * 10.0));
        }
        let s = SoAStore::from_cells(&cells);
        let mut ids: Vec<_> = s.real_slots().map(|k| s.id(k)).collect();
        ids.sort();
        assert_eq!(ids, (0..500).collect::<Vec<_>>());
        // every padding entry is far from every real particle
        let cutoff = 100.0;
        for cell in s.cells() {
            for k in cell.start + cell.real..cell.start + cell.padded {
                for r in s.real_slots() {
                    let d2: f64 = (0..3).map(|a| (s.position(k)[a] - s.position(r)[a]).powi(2)).sum();
                    assert!(d2 > cutoff * cutoff);
                }
            }
        }
    }

    #[test]
    fn insert_and_remove_keep_invariants() {
        let cells = vec![(0..8).map(|i| p(i, 1.0)).collect::<Vec<_>>(), vec![p(8, 2.0)]];
        let mut s = SoAStore::from_cells(&cells);
        let slot = s.insert(0, &p(9, 1.5));
        assert_eq!(s.id(slot), 9);
        assert_eq!(s.cell(0).padded, 16);
        assert_eq!(s.cell(1).start, 16);
        assert_eq!(s.id(16), 8);
        s.check_invariants(1e3).unwrap();

        let gone = s.remove(0, 2);
        assert_eq!(gone.id, 2);
        // the last real particle took its place
        assert_eq!(s.id(2), 9);
        assert_eq!(s.cell(0).padded, 8);
        assert_eq!(s.cell(1).start, 8);
        assert_eq!(s.id(8), 8);
        s.check_invariants(1e3).unwrap();
        assert_eq!(s.n_real(), 9);
    }

    #[test]
    fn remove_from_last_cell_shrinks_tail() {
        let cells = vec![vec![p(0, 1.0)], (1..10).map(|i| p(i, 1.0)).collect()];
        let mut s = SoAStore::from_cells(&cells);
        assert_eq!(s.sentinel_tail(), 24..32);
        s.remove(1, 0);
        assert_eq!(s.sentinel_tail(), 16..24);
        s.check_invariants(1e3).unwrap();
    }

    #[test]
    fn kinetic_examples() {
        let s = SoAStore::from_cells(&[vec![p(0, 0.0), p(1, 1.0)]]);
        assert_eq!(kinetic_energy_and_temperature(&s).unwrap(), (0.0, 0.0));

        let mut one = p(0, 0.0);
        one.velocity = [1.0, 0.0, 0.0];
        let s = SoAStore::from_cells(&[vec![one]]);
        let (e, t) = kinetic_energy_and_temperature(&s).unwrap();
        assert_eq!(e, 0.5);
        assert!((t - 1.0 / 3.0).abs() < 1e-15);

        let s = SoAStore::from_cells(&[vec![]]);
        assert_eq!(kinetic_energy_and_temperature(&s), Err(Error::EmptySystem));
    }

    #[test]
    fn maxwell_boltzmann_temperature() {
        let target = 0.6;
        let normal = Normal::new(0.0, f64::sqrt(target)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ps: Vec<_> = (0..1000)
            .map(|i| {
                let mut q = p(i, 0.0);
                q.velocity = [normal.sample(&mut rng), normal.sample(&mut rng), normal.sample(&mut rng)];
                q
            })
            .collect();
        let s = SoAStore::from_cells(&[ps]);
        let (_, t) = kinetic_energy_and_temperature(&s).unwrap();
        assert!((t - target).abs() < 0.05 * target, "T = {t}");
    }
}
