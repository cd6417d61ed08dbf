//! Subnode decomposition of the cell grid, ghost exchange and resorting.
//!
//! The domain's real cells are split into a `sub_dims` grid of subnodes. Every
//! subnode owns a [`SoAStore`] holding its real cells plus a one-cell ghost shell.
//! A [`GhostCommPlan`] maps each ghost cell to the real cell it mirrors (possibly
//! in the same subnode, across a periodic boundary) together with the shift that
//! turns source positions into ghost positions. Positions flow along the plan
//! each step; ghost forces flow back along it.

use std::collections::HashMap;
use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{wrap_position, BoxSpec, Vec3};
use crate::neighbor::{
    build_sorted_list, max_displacement2, CellBlock, CellGrid, RebuildSnapshot,
    SortedNeighborList,
};
use crate::oracle::FlatConfig;
use crate::potentials::{AngleParams, FENEParams, LJParams};
use crate::soa::{GhostForce, GhostViewMut, Particle, RealForceMut, RealView, SoAStore};
use crate::ParticleId;

#[derive(Debug, Clone, PartialEq)]
pub struct SubnodeGrid {
    dims: [usize; 3],
    sub_dims: [usize; 3],
    // per axis: sub_dims[k] + 1 ascending cell boundaries
    bounds: [Vec<usize>; 3],
}

impl SubnodeGrid {
    pub fn n_sub(&self) -> usize {
        self.sub_dims.iter().product()
    }

    pub fn sub_dims(&self) -> [usize; 3] {
        self.sub_dims
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    /// Cell ranges of the subnodes along axis `k`.
    pub fn ranges(&self, k: usize) -> Vec<Range<usize>> {
        self.bounds[k].windows(2).map(|w| w[0]..w[1]).collect()
    }

    pub fn block(&self, s: usize) -> CellBlock {
        let sd = self.sub_dims;
        let c = [s % sd[0], (s / sd[0]) % sd[1], s / (sd[0] * sd[1])];
        let origin = [0, 1, 2].map(|k| self.bounds[k][c[k]]);
        let real_dims = [0, 1, 2].map(|k| self.bounds[k][c[k] + 1] - self.bounds[k][c[k]]);
        CellBlock::new(origin, real_dims)
    }

    pub fn blocks(&self) -> Vec<CellBlock> {
        (0..self.n_sub()).map(|s| self.block(s)).collect()
    }

    /// Subnode owning a global cell.
    pub fn owner_of(&self, g: [usize; 3]) -> usize {
        let c = [0, 1, 2].map(|k| self.bounds[k].partition_point(|&b| b <= g[k]) - 1);
        c[0] + self.sub_dims[0] * (c[1] + self.sub_dims[1] * c[2])
    }

    /// Ghost cells summed over all subnodes.
    pub fn ghost_cell_count(&self) -> usize {
        ghost_cells_for(self.dims, self.sub_dims)
    }
}

fn ghost_cells_for(dims: [usize; 3], sub: [usize; 3]) -> usize {
    // sum over subnodes of prod(r + 2) - prod(r); the first term factorizes per axis
    let outer: usize = (0..3).map(|k| dims[k] + 2 * sub[k]).product();
    outer - dims.iter().product::<usize>()
}

fn even_bounds(n: usize, parts: usize) -> Vec<usize> {
    let (q, r) = (n / parts, n % parts);
    let mut b = Vec::with_capacity(parts + 1);
    let mut at = 0;
    b.push(0);
    for i in 0..parts {
        at += q + usize::from(i < r);
        b.push(at);
    }
    b
}

/// Splits the cell grid into `n_sub` subnodes, choosing the three-factor split of
/// `n_sub` with the fewest ghost cells.
pub fn make_subnode_decomposition(grid: &CellGrid, n_sub: usize) -> Result<SubnodeGrid> {
    let dims = grid.dims();
    if n_sub == 0 {
        return Err(Error::Granularity { dims, n_sub });
    }
    // axes by decreasing length; ties keep x, y, z order
    let mut axes = [0, 1, 2];
    axes.sort_by_key(|&k| std::cmp::Reverse(dims[k]));

    let mut best: Option<([usize; 3], usize)> = None;
    for a in (1..=n_sub).filter(|a| n_sub.is_multiple_of(*a)) {
        let rest = n_sub / a;
        for b in (1..=rest).filter(|b| rest.is_multiple_of(*b)) {
            let sub = [a, b, rest / b];
            if (0..3).any(|k| sub[k] > dims[k]) {
                continue;
            }
            let cost = ghost_cells_for(dims, sub);
            let better = match best {
                None => true,
                Some((cur, cur_cost)) => {
                    cost < cur_cost
                        || (cost == cur_cost && axes.map(|k| sub[k]) > axes.map(|k| cur[k]))
                }
            };
            if better {
                best = Some((sub, cost));
            }
        }
    }
    let (sub_dims, _) = best.ok_or(Error::Granularity { dims, n_sub })?;
    Ok(SubnodeGrid {
        dims,
        sub_dims,
        bounds: [0, 1, 2].map(|k| even_bounds(dims[k], sub_dims[k])),
    })
}

/// One ghost-cell copy: the real particles of `src_cell` in subnode `src_sub`,
/// displaced by `shift`, appear in ghost cell `dst_cell` of subnode `dst_sub`.
/// Cell indices are local to their subnode's block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GhostRecord {
    pub src_sub: usize,
    pub src_cell: usize,
    pub dst_sub: usize,
    pub dst_cell: usize,
    pub shift: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GhostCommPlan {
    records: Vec<GhostRecord>,
    by_dst: Vec<Range<usize>>,
    by_src: Vec<Vec<usize>>,
}

impl GhostCommPlan {
    pub fn records(&self) -> &[GhostRecord] {
        &self.records
    }

    pub fn for_destination(&self, dst: usize) -> &[GhostRecord] {
        &self.records[self.by_dst[dst].clone()]
    }

    /// Indices into [`records`](Self::records) whose source is `src`, in plan order.
    pub fn for_source(&self, src: usize) -> &[usize] {
        &self.by_src[src]
    }
}

pub fn build_ghost_plan(sub_grid: &SubnodeGrid, grid: &CellGrid, box_spec: &BoxSpec) -> GhostCommPlan {
    let lengths = box_spec.lengths();
    let blocks = sub_grid.blocks();
    let mut records = Vec::new();
    let mut by_dst = Vec::with_capacity(blocks.len());
    for (d, block) in blocks.iter().enumerate() {
        let begin = records.len();
        for cell in (0..block.n_cells()).filter(|&c| block.is_ghost(c)) {
            let (g, image) = grid.wrap_cell(block.global_of(cell));
            let src_sub = sub_grid.owner_of(g);
            records.push(GhostRecord {
                src_sub,
                src_cell: blocks[src_sub].local_of_global(g),
                dst_sub: d,
                dst_cell: cell,
                shift: [0, 1, 2].map(|k| image[k] as f64 * lengths[k]),
            });
        }
        by_dst.push(begin..records.len());
    }
    let mut by_src = vec![Vec::new(); blocks.len()];
    for (r, rec) in records.iter().enumerate() {
        by_src[rec.src_sub].push(r);
    }
    GhostCommPlan {
        records,
        by_dst,
        by_src,
    }
}

/// Interaction parameters for the whole system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interactions {
    pub lj: LJParams,
    pub fene: Option<FENEParams>,
    pub angle: Option<AngleParams>,
}

impl Interactions {
    pub fn pair_only(lj: LJParams) -> Self {
        Interactions {
            lj,
            fene: None,
            angle: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Topology {
    pub bonds: Vec<[ParticleId; 2]>,
    pub angles: Vec<[ParticleId; 3]>,
}

#[derive(Debug, Clone)]
pub struct Subnode {
    pub(crate) block: CellBlock,
    pub(crate) store: SoAStore,
    pub(crate) list: SortedNeighborList,
    pub(crate) snapshot: RebuildSnapshot,
    // local slots; the first entry of a bond and the middle of an angle are real
    pub(crate) bonds: Vec<[u32; 2]>,
    pub(crate) angles: Vec<[u32; 3]>,
}

impl Subnode {
    fn empty(block: CellBlock) -> Self {
        let counts = vec![0; block.n_cells()];
        Subnode {
            block,
            store: SoAStore::with_layout(&counts, &block.ghost_flags()),
            list: SortedNeighborList::default(),
            snapshot: RebuildSnapshot::default(),
            bonds: Vec::new(),
            angles: Vec::new(),
        }
    }

    pub fn block(&self) -> &CellBlock {
        &self.block
    }

    pub fn store(&self) -> &SoAStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut SoAStore {
        &mut self.store
    }

    pub fn list(&self) -> &SortedNeighborList {
        &self.list
    }

    pub fn snapshot(&self) -> &RebuildSnapshot {
        &self.snapshot
    }

    pub fn n_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }
}

/// The full simulation state: geometry, decomposition, per-subnode stores and
/// lists, bonded topology and interaction parameters.
#[derive(Debug, Clone)]
pub struct Domain {
    pub(crate) box_spec: BoxSpec,
    pub(crate) grid: CellGrid,
    pub(crate) sub_grid: SubnodeGrid,
    pub(crate) plan: GhostCommPlan,
    pub(crate) subnodes: Vec<Subnode>,
    pub(crate) topology: Topology,
    pub(crate) interactions: Interactions,
    pub(crate) r_skin: f64,
}

impl Domain {
    /// Decomposes a flat configuration into `n_sub` subnodes, fills the ghost
    /// shells and builds the neighbor lists. Forces are not computed.
    pub fn new(flat: &FlatConfig, interactions: Interactions, r_skin: f64, n_sub: usize) -> Result<Self> {
        flat.validate()?;
        let box_spec = flat.box_spec;
        let grid = CellGrid::new(&box_spec, interactions.lj.r_cut(), r_skin)?;
        let min_cell = grid.cell_lengths().iter().copied().fold(f64::INFINITY, f64::min);
        if let Some(f) = interactions.fene {
            if f.r_max > min_cell {
                return Err(Error::InvalidParameter(format!(
                    "FENE r_max {} exceeds the cell length {min_cell}; bonded partners could leave the ghost shell",
                    f.r_max
                )));
            }
        }
        let sub_grid = make_subnode_decomposition(&grid, n_sub)?;
        let plan = build_ghost_plan(&sub_grid, &grid, &box_spec);
        let subnodes = sub_grid.blocks().into_iter().map(Subnode::empty).collect();
        let mut d = Domain {
            box_spec,
            grid,
            sub_grid,
            plan,
            subnodes,
            topology: Topology {
                bonds: flat.bonds.clone(),
                angles: flat.angles.clone(),
            },
            interactions,
            r_skin,
        };
        d.distribute(flat.particles())?;
        d.update_ghost_positions()?;
        d.assign_bonded()?;
        d.rebuild_lists();
        Ok(d)
    }

    /// Re-decomposes the current state into a different number of subnodes.
    pub fn with_subnodes(&self, n_sub: usize) -> Result<Self> {
        Domain::new(&self.to_flat(), self.interactions, self.r_skin, n_sub)
    }

    pub fn box_spec(&self) -> &BoxSpec {
        &self.box_spec
    }

    pub fn grid(&self) -> &CellGrid {
        &self.grid
    }

    pub fn sub_grid(&self) -> &SubnodeGrid {
        &self.sub_grid
    }

    pub fn plan(&self) -> &GhostCommPlan {
        &self.plan
    }

    pub fn subnodes(&self) -> &[Subnode] {
        &self.subnodes
    }

    pub fn subnodes_mut(&mut self) -> &mut [Subnode] {
        &mut self.subnodes
    }

    pub fn n_sub(&self) -> usize {
        self.subnodes.len()
    }

    pub fn interactions(&self) -> &Interactions {
        &self.interactions
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn r_skin(&self) -> f64 {
        self.r_skin
    }

    pub fn r_verlet(&self) -> f64 {
        self.interactions.lj.r_cut() + self.r_skin
    }

    pub fn n_particles(&self) -> usize {
        self.subnodes.iter().map(|s| s.store.n_real()).sum()
    }

    /// All real particles, sorted by id.
    pub fn particles(&self) -> Vec<Particle> {
        let mut out: Vec<Particle> = self
            .subnodes
            .iter()
            .flat_map(|s| s.store.real_slots().map(move |k| s.store.particle(k)))
            .collect();
        out.sort_by_key(|p| p.id);
        out
    }

    /// Every listed pair as `(smaller id, larger id)`, across all subnodes, sorted.
    /// A pair appearing twice would mean double-counted forces.
    pub fn neighbor_pairs(&self) -> Vec<(ParticleId, ParticleId)> {
        let mut out: Vec<(ParticleId, ParticleId)> = self
            .subnodes
            .iter()
            .flat_map(|s| {
                s.list.pairs().map(move |(i, j)| {
                    let (a, b) = (s.store.id(i), s.store.id(j));
                    (a.min(b), a.max(b))
                })
            })
            .collect();
        out.sort_unstable();
        out
    }

    pub fn to_flat(&self) -> FlatConfig {
        let mut flat = FlatConfig::from_particles(self.box_spec, &self.particles());
        flat.bonds = self.topology.bonds.clone();
        flat.angles = self.topology.angles.clone();
        flat
    }

    /// Places the given particles into the cells and subnodes containing their
    /// wrapped positions and re-creates every store layout, ghost cells included.
    fn distribute(&mut self, mut particles: Vec<Particle>) -> Result<()> {
        let n_sub = self.sub_grid.n_sub();
        let blocks: Vec<CellBlock> = self.subnodes.iter().map(|s| s.block).collect();
        let mut buckets: Vec<Vec<Vec<Particle>>> =
            blocks.iter().map(|b| vec![Vec::new(); b.n_cells()]).collect();
        // canonical in-cell order, independent of history and of n_sub
        particles.sort_by_key(|p| p.id);
        for mut p in particles {
            if p.position.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinitePosition(p.id));
            }
            p.position = wrap_position(p.position, &self.box_spec);
            let g = self.grid.cell_of(p.position);
            let s = self.sub_grid.owner_of(g);
            buckets[s][blocks[s].local_of_global(g)].push(p);
        }

        let mut counts: Vec<Vec<usize>> = buckets
            .iter()
            .map(|cells| cells.iter().map(Vec::len).collect())
            .collect();
        for rec in self.plan.records() {
            counts[rec.dst_sub][rec.dst_cell] = counts[rec.src_sub][rec.src_cell];
        }
        for s in 0..n_sub {
            let mut store = SoAStore::with_layout(&counts[s], &blocks[s].ghost_flags());
            for (c, ps) in buckets[s].iter().enumerate() {
                let start = store.cell(c).start;
                for (k, p) in ps.iter().enumerate() {
                    store.set_particle(start + k, p);
                }
            }
            self.subnodes[s].store = store;
        }
        Ok(())
    }

    /// Moves every real particle back into the correct cell of the correct
    /// subnode. Ghost shells are re-created empty and must be refreshed with
    /// [`update_ghost_positions`](Self::update_ghost_positions).
    pub fn resort(&mut self) -> Result<()> {
        let all: Vec<Particle> = self
            .subnodes
            .iter()
            .flat_map(|s| s.store.real_slots().map(move |k| s.store.particle(k)))
            .collect();
        self.distribute(all)
    }

    pub fn update_ghost_positions(&mut self) -> Result<()> {
        update_ghost_positions(&self.plan, &mut self.subnodes)
    }

    pub fn collect_ghost_forces(&mut self) -> Result<()> {
        collect_ghost_forces(&self.plan, &mut self.subnodes)
    }

    /// Builds every subnode's Verlet list at `r_cut + r_skin`.
    pub fn rebuild_lists(&mut self) {
        let rv = self.r_verlet();
        self.subnodes.par_iter_mut().with_max_len(1).for_each(|s| {
            let (list, snap) = build_sorted_list(&s.store, &s.block, rv);
            s.list = list;
            s.snapshot = snap;
        });
    }

    /// Largest squared displacement since the last list build, over all subnodes.
    pub fn max_displacement2(&self) -> Result<f64> {
        let parts: Vec<Result<f64>> = self
            .subnodes
            .par_iter()
            .with_max_len(1)
            .map(|s| max_displacement2(&s.store, &s.snapshot))
            .collect();
        parts.into_iter().try_fold(0.0, |m, r| Ok(f64::max(m, r?)))
    }

    pub fn needs_rebuild(&self) -> Result<bool> {
        let half = 0.5 * self.r_skin;
        Ok(self.max_displacement2()? > half * half)
    }

    /// Resolves bonded terms to local slots in the subnode that owns them: bonds
    /// by their first particle, angles by their middle particle. Requires fresh
    /// ghost shells.
    pub fn assign_bonded(&mut self) -> Result<()> {
        if self.topology.bonds.is_empty() && self.topology.angles.is_empty() {
            for s in &mut self.subnodes {
                s.bonds.clear();
                s.angles.clear();
            }
            return Ok(());
        }
        let mut owner: HashMap<ParticleId, usize> = HashMap::new();
        for (si, s) in self.subnodes.iter().enumerate() {
            for k in s.store.real_slots() {
                owner.insert(s.store.id(k), si);
            }
        }
        let n_sub = self.subnodes.len();
        let mut bonds_of: Vec<Vec<[ParticleId; 2]>> = vec![Vec::new(); n_sub];
        let mut angles_of: Vec<Vec<[ParticleId; 3]>> = vec![Vec::new(); n_sub];
        for b in &self.topology.bonds {
            bonds_of[owner[&b[0]]].push(*b);
        }
        for a in &self.topology.angles {
            angles_of[owner[&a[1]]].push(*a);
        }
        let results: Vec<Result<()>> = self
            .subnodes
            .par_iter_mut()
            .zip(bonds_of.into_par_iter().zip(angles_of))
            .with_max_len(1)
            .map(|(s, (bonds, angles))| s.resolve_bonded(&bonds, &angles))
            .collect();
        results.into_iter().collect()
    }
}

impl Subnode {
    fn resolve_bonded(&mut self, bonds: &[[ParticleId; 2]], angles: &[[ParticleId; 3]]) -> Result<()> {
        let store = &self.store;
        let mut slots: HashMap<ParticleId, Vec<u32>> = HashMap::new();
        for cell in store.cells() {
            for k in cell.real_range() {
                slots.entry(store.id(k)).or_default().push(k as u32);
            }
        }
        let gs = store.ghost_start();
        let real_slot = |id: ParticleId| -> u32 {
            *slots[&id]
                .iter()
                .find(|&&k| (k as usize) < gs)
                .expect("owner holds the particle as real")
        };
        let nearest = |anchor: u32, id: ParticleId| -> Result<u32> {
            let a = store.position(anchor as usize);
            slots
                .get(&id)
                .and_then(|cands| {
                    cands.iter().copied().min_by(|&x, &y| {
                        let dx = crate::geometry::norm2(crate::geometry::sub(store.position(x as usize), a));
                        let dy = crate::geometry::norm2(crate::geometry::sub(store.position(y as usize), a));
                        dx.total_cmp(&dy)
                    })
                })
                .ok_or(Error::MissingPartner {
                    owner: store.id(anchor as usize),
                    partner: id,
                })
        };
        self.bonds.clear();
        for &[a, b] in bonds {
            let sa = real_slot(a);
            self.bonds.push([sa, nearest(sa, b)?]);
        }
        self.angles.clear();
        for &[i, j, k] in angles {
            let sj = real_slot(j);
            self.angles.push([nearest(sj, i)?, sj, nearest(sj, k)?]);
        }
        Ok(())
    }
}

/// Copies every source cell's real particles into the ghost cells that mirror
/// it. Runs one task per destination subnode; ghost velocities and forces are zeroed.
pub fn update_ghost_positions(plan: &GhostCommPlan, subnodes: &mut [Subnode]) -> Result<()> {
    let (reals, ghosts): (Vec<RealView<'_>>, Vec<GhostViewMut<'_>>) =
        subnodes.iter_mut().map(|s| s.store.split_ghost_mut()).unzip();
    ghosts
        .into_par_iter()
        .with_max_len(1)
        .enumerate()
        .try_for_each(|(d, dst)| {
            for rec in plan.for_destination(d) {
                let src = &reals[rec.src_sub];
                let from = src.cells[rec.src_cell].real_range();
                let to = dst.cells[rec.dst_cell];
                if to.real != from.len() {
                    return Err(Error::StalePlan(format!(
                        "ghost cell {} of subnode {d} holds {} slots for {} source particles",
                        rec.dst_cell,
                        to.real,
                        from.len()
                    )));
                }
                let at = to.start - dst.offset;
                let n = from.len();
                dst.id[at..at + n].copy_from_slice(&src.id[from.clone()]);
                dst.kind[at..at + n].copy_from_slice(&src.kind[from.clone()]);
                dst.mass[at..at + n].copy_from_slice(&src.mass[from.clone()]);
                for k in 0..3 {
                    let shift = rec.shift[k];
                    for (g, &x) in dst.pos[k][at..at + n].iter_mut().zip(&src.pos[k][from.clone()]) {
                        *g = x + shift;
                    }
                    dst.vel[k][at..at + n].fill(0.0);
                    dst.force[k][at..at + n].fill(0.0);
                }
            }
            Ok(())
        })
}

/// Adds every ghost particle's force to the real particle it mirrors, then
/// zeroes ghost forces. Runs one task per source subnode.
pub fn collect_ghost_forces(plan: &GhostCommPlan, subnodes: &mut [Subnode]) -> Result<()> {
    {
        let (reals, ghosts): (Vec<RealForceMut<'_>>, Vec<GhostForce<'_>>) =
            subnodes.iter_mut().map(|s| s.store.split_force_mut()).unzip();
        let records = plan.records();
        reals
            .into_par_iter()
            .with_max_len(1)
            .enumerate()
            .try_for_each(|(s, own)| {
                for &r in plan.for_source(s) {
                    let rec = &records[r];
                    let from = ghosts[rec.dst_sub].cells[rec.dst_cell];
                    let to = own.cells[rec.src_cell].real_range();
                    if from.real != to.len() {
                        return Err(Error::StalePlan(format!(
                            "source cell {} of subnode {s} has {} particles but its ghost copy has {}",
                            rec.src_cell,
                            to.len(),
                            from.real
                        )));
                    }
                    let g = &ghosts[rec.dst_sub];
                    let at = from.start - g.offset;
                    for k in 0..3 {
                        for (f, &gf) in own.force[k][to.clone()].iter_mut().zip(&g.force[k][at..at + from.real]) {
                            *f += gf;
                        }
                    }
                }
                Ok(())
            })?;
    }
    subnodes.par_iter_mut().with_max_len(1).for_each(|s| {
        let gs = s.store.ghost_start();
        s.store.zero_forces_from(gs);
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(l: f64) -> CellGrid {
        CellGrid::new(&BoxSpec::cubic(l).unwrap(), 2.5, 0.3).unwrap()
    }

    #[test]
    fn decomposition_examples() {
        let g24 = grid(67.718);
        assert_eq!(g24.dims(), [24, 24, 24]);
        assert_eq!(make_subnode_decomposition(&g24, 1).unwrap().sub_dims(), [1, 1, 1]);
        assert_eq!(make_subnode_decomposition(&g24, 64).unwrap().sub_dims(), [4, 4, 4]);
        assert_eq!(make_subnode_decomposition(&g24, 32).unwrap().sub_dims(), [4, 4, 2]);
        assert_eq!(make_subnode_decomposition(&g24, 8).unwrap().sub_dims(), [2, 2, 2]);
        // a prime count must stay on one axis
        assert_eq!(make_subnode_decomposition(&g24, 7).unwrap().sub_dims(), [7, 1, 1]);

        let g3 = grid(10.0);
        assert!(matches!(
            make_subnode_decomposition(&g3, 16),
            Err(Error::Granularity { n_sub: 16, .. })
        ));
        assert!(make_subnode_decomposition(&g3, 0).is_err());
    }

    #[test]
    fn ranges_are_even_and_cover_the_grid() {
        let g = grid(67.718);
        let sg = make_subnode_decomposition(&g, 7).unwrap();
        let r = sg.ranges(0);
        assert_eq!(r.first().unwrap().start, 0);
        assert_eq!(r.last().unwrap().end, 24);
        let lens: Vec<usize> = r.iter().map(|x| x.len()).collect();
        assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
        assert_eq!(lens.iter().sum::<usize>(), 24);
    }

    #[test]
    fn every_cell_has_exactly_one_owner() {
        let g = grid(30.0);
        let sg = make_subnode_decomposition(&g, 12).unwrap();
        let mut count = vec![0; sg.n_sub()];
        for i in 0..g.n_cells() {
            let c = g.unflat(i);
            let s = sg.owner_of(c);
            assert!(sg.block(s).contains_global(c));
            count[s] += 1;
        }
        let blocks = sg.blocks();
        for (s, b) in blocks.iter().enumerate() {
            assert_eq!(count[s], b.n_real_cells());
        }
    }

    #[test]
    fn ghost_count_matches_blocks() {
        let g = grid(67.718);
        for n in [1, 2, 8, 32, 64] {
            let sg = make_subnode_decomposition(&g, n).unwrap();
            let from_blocks: usize = sg.blocks().iter().map(|b| b.n_cells() - b.n_real_cells()).sum();
            assert_eq!(sg.ghost_cell_count(), from_blocks);
        }
        // 64 cubes of 6^3 real cells with an 8^3 shell each
        assert_eq!(make_subnode_decomposition(&g, 64).unwrap().ghost_cell_count(), 64 * (512 - 216));
    }

    #[test]
    fn periodic_ghosts_carry_box_shifts() {
        let g = grid(10.0);
        let sg = make_subnode_decomposition(&g, 1).unwrap();
        let plan = build_ghost_plan(&sg, &g, g.box_spec());
        assert_eq!(plan.records().len(), 125 - 27);
        for rec in plan.records() {
            assert_eq!(rec.src_sub, 0);
            assert!(rec.shift.iter().all(|&s| s == 0.0 || (s.abs() - 10.0).abs() < 1e-12));
            assert!(rec.shift.iter().any(|&s| s != 0.0));
        }
        assert_eq!(plan.for_source(0).len(), plan.records().len());
    }
}
