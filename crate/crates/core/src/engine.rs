//! Velocity Verlet loop, phase scheduling, section timers and the subnode autotuner.
//!
//! Every phase of a step is a batch of one task per subnode, submitted to a
//! work-stealing pool; phases are separated by full barriers. Per-subnode partial
//! results (energies, displacements) are combined in subnode order, and thermostat
//! noise is keyed by `(seed, step, id)`, so the trajectory does not depend on the
//! number of workers or on which worker ran which subnode.

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::decomp::{Domain, Subnode};
use crate::error::{Error, Result};
use crate::neighbor::{compute_pair_forces, compute_pair_forces_capped};
use crate::potentials::{angle_eval, fene_eval, langevin_force, LangevinParams};
use crate::soa::{kinetic_sum, temperature_of, SoAStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Section {
    Forces,
    Comm,
    Integrate,
    Neigh,
    Resort,
}

impl Section {
    pub const ALL: [Section; 5] = [
        Section::Forces,
        Section::Comm,
        Section::Integrate,
        Section::Neigh,
        Section::Resort,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Section::Forces => "Forces",
            Section::Comm => "Comm",
            Section::Integrate => "Integrate",
            Section::Neigh => "Neigh",
            Section::Resort => "Resort",
        }
    }
}

impl std::fmt::Display for Section {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Accumulated wall time per section plus the total loop time.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SectionTimers {
    sections: [Duration; 5],
    total: Duration,
}

impl SectionTimers {
    pub fn add(&mut self, section: Section, d: Duration) {
        self.sections[section as usize] += d;
    }

    pub fn add_total(&mut self, d: Duration) {
        self.total += d;
    }

    pub fn get(&self, section: Section) -> Duration {
        self.sections[section as usize]
    }

    pub fn total(&self) -> Duration {
        self.total
    }

    pub fn sections_sum(&self) -> Duration {
        self.sections.iter().sum()
    }

    /// Time spent between two snapshots of the same timers.
    pub fn since(&self, earlier: &SectionTimers) -> SectionTimers {
        let mut out = SectionTimers::default();
        for s in Section::ALL {
            out.sections[s as usize] = self.get(s).saturating_sub(earlier.get(s));
        }
        out.total = self.total.saturating_sub(earlier.total);
        out
    }

    fn time<T>(&mut self, section: Section, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.add(section, t.elapsed());
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConfig {
    pub dt: f64,
    pub steps: u64,
    pub thermostat: Option<LangevinParams>,
    pub n_sub: usize,
    pub worker_threads: usize,
    /// Observables are sampled every this many steps (and at step 0); 0 disables.
    pub observable_stride: u64,
    /// Limit on each Lennard-Jones pair force magnitude, for pushing apart
    /// overlapping starts. Bonded forces are never capped.
    pub force_cap: Option<f64>,
}

impl EngineConfig {
    pub fn nve(dt: f64, steps: u64, n_sub: usize, worker_threads: usize) -> Self {
        EngineConfig {
            dt,
            steps,
            thermostat: None,
            n_sub,
            worker_threads,
            observable_stride: 100,
            force_cap: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_sub == 0 || self.worker_threads == 0 {
            return Err(Error::InvalidParameter("n_sub and worker_threads must be >= 1".into()));
        }
        if let Some(c) = self.force_cap {
            if !(c > 0.0) {
                return Err(Error::InvalidParameter(format!("force cap must be positive, got {c}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub step: u64,
    pub kinetic: f64,
    pub potential: f64,
    pub total: f64,
    pub temperature: f64,
}

/// `v += F/m · dt/2`, then `x += v · dt`, over the store's real region.
///
/// Padding entries carry zero force and velocity, so the loops run over the
/// whole region without checking cell boundaries.
pub fn integrate_half_kick_drift(store: &mut SoAStore, dt: f64) {
    let n = store.ghost_start();
    let half = 0.5 * dt;
    let mass = &store.mass[..n];
    for k in 0..3 {
        let f = &store.force[k][..n];
        let v = &mut store.vel[k][..n];
        let x = &mut store.pos[k][..n];
        for s in 0..n {
            v[s] += f[s] / mass[s] * half;
            x[s] += v[s] * dt;
        }
    }
}

/// `v += F/m · dt/2` over the store's real region.
pub fn integrate_half_kick(store: &mut SoAStore, dt: f64) {
    let n = store.ghost_start();
    let half = 0.5 * dt;
    let mass = &store.mass[..n];
    for k in 0..3 {
        let f = &store.force[k][..n];
        let v = &mut store.vel[k][..n];
        for s in 0..n {
            v[s] += f[s] / mass[s] * half;
        }
    }
}

fn add_thermostat(store: &mut SoAStore, params: &LangevinParams, dt: f64, step: u64) {
    let slots: Vec<usize> = store.real_slots().collect();
    for s in slots {
        let f = langevin_force(store.velocity(s), store.mass[s], params, dt, step, store.id[s]);
        store.add_force(s, f);
    }
}

fn bonded_forces(sub: &mut Subnode, domain_fene: Option<crate::FENEParams>, angle: Option<crate::AngleParams>) -> Result<f64> {
    let mut energy = 0.0;
    let store = &mut sub.store;
    if let Some(fene) = domain_fene {
        for &[a, b] in &sub.bonds {
            let (a, b) = (a as usize, b as usize);
            let d = crate::geometry::sub(store.position(a), store.position(b));
            let (e, ff) = fene_eval(crate::geometry::norm2(d), &fene).map_err(|e| match e {
                Error::BondOverstretch(_, _, r, rm) => Error::BondOverstretch(store.id(a), store.id(b), r, rm),
                e => e,
            })?;
            energy += e;
            store.add_force(a, d.map(|x| ff * x));
            store.add_force(b, d.map(|x| -ff * x));
        }
    }
    if let Some(angle) = angle {
        for &[i, j, k] in &sub.angles {
            let (i, j, k) = (i as usize, j as usize, k as usize);
            let pj = store.position(j);
            let t = angle_eval(
                crate::geometry::sub(store.position(i), pj),
                crate::geometry::sub(store.position(k), pj),
                &angle,
            )?;
            energy += t.energy;
            store.add_force(i, t.force_i);
            store.add_force(j, t.force_j);
            store.add_force(k, t.force_k);
        }
    }
    Ok(energy)
}

/// Zeroes all forces, then accumulates pair and bonded forces in every subnode.
/// Ghost contributions stay on the ghosts until [`Domain::collect_ghost_forces`].
/// Returns the total potential energy.
pub fn compute_forces(domain: &mut Domain) -> Result<f64> {
    compute_forces_capped(domain, None)
}

/// [`compute_forces`] with an optional limit on each pair force magnitude.
pub fn compute_forces_capped(domain: &mut Domain, pair_cap: Option<f64>) -> Result<f64> {
    let ia = domain.interactions;
    let parts: Vec<Result<f64>> = domain
        .subnodes
        .par_iter_mut()
        .with_max_len(1)
        .map(|sub| {
            sub.store.zero_forces();
            let pair = match pair_cap {
                Some(c) => compute_pair_forces_capped(&sub.list, &mut sub.store, &ia.lj, c)?,
                None => compute_pair_forces(&sub.list, &mut sub.store, &ia.lj)?,
            };
            let bonded = bonded_forces(sub, ia.fene, ia.angle)?;
            Ok(pair + bonded)
        })
        .collect();
    parts.into_iter().try_fold(0.0, |acc, e| Ok(acc + e?))
}

fn kinetic_partials(domain: &Domain) -> (f64, usize) {
    let parts: Vec<(f64, usize)> = domain.subnodes.par_iter().map(|s| kinetic_sum(&s.store)).collect();
    parts.into_iter().fold((0.0, 0), |(e, n), (pe, pn)| (e + pe, n + pn))
}

/// Kinetic energy and temperature of the whole domain.
pub fn domain_kinetic(domain: &Domain) -> Result<(f64, f64)> {
    let (e, n) = kinetic_partials(domain);
    temperature_of(e, n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Stale,
    Drifted,
    ForcesComputed,
    ForcesCollected,
}

/// A domain bound to an engine configuration and a worker pool.
pub struct Simulation {
    domain: Domain,
    config: EngineConfig,
    pool: rayon::ThreadPool,
    step: u64,
    potential: f64,
    timers: SectionTimers,
    phase: Phase,
    rebuilds: u64,
}

impl Simulation {
    /// Re-decomposes the domain if its subnode count differs from `config.n_sub`.
    pub fn new(config: EngineConfig, domain: Domain) -> Result<Self> {
        config.validate()?;
        let domain = if domain.n_sub() == config.n_sub {
            domain
        } else {
            domain.with_subnodes(config.n_sub)?
        };
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.worker_threads)
            .build()
            .map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))?;
        Ok(Simulation {
            domain,
            config,
            pool,
            step: 0,
            potential: 0.0,
            timers: SectionTimers::default(),
            phase: Phase::Stale,
            rebuilds: 0,
        })
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn into_domain(self) -> Domain {
        self.domain
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn timers(&self) -> &SectionTimers {
        &self.timers
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    pub fn potential_energy(&self) -> f64 {
        self.potential
    }

    /// Number of resort + list rebuild events so far.
    pub fn rebuilds(&self) -> u64 {
        self.rebuilds
    }

    /// Forces at the current positions, required once before the first step.
    /// Not attributed to any timer section.
    pub fn compute_initial_forces(&mut self) -> Result<()> {
        let cap = self.config.force_cap;
        let Simulation { domain, pool, .. } = self;
        let pe = pool.install(|| -> Result<f64> {
            domain.update_ghost_positions()?;
            let pe = compute_forces_capped(domain, cap)?;
            domain.collect_ghost_forces()?;
            Ok(pe)
        })?;
        self.potential = pe;
        self.phase = Phase::ForcesCollected;
        Ok(())
    }

    pub fn observables(&self) -> Result<Observables> {
        let (kinetic, temperature) = domain_kinetic(&self.domain)?;
        Ok(Observables {
            step: self.step,
            kinetic,
            potential: self.potential,
            total: kinetic + self.potential,
            temperature,
        })
    }

    /// Advances one velocity Verlet step.
    pub fn step(&mut self) -> Result<()> {
        if self.phase == Phase::Stale {
            self.compute_initial_forces()?;
        }
        let next = self.step + 1;
        let start = Instant::now();
        let result = self.step_inner(next);
        self.timers.add_total(start.elapsed());
        result.map_err(|e| e.at_step(next))?;
        self.step = next;
        Ok(())
    }

    fn step_inner(&mut self, step: u64) -> Result<()> {
        let Simulation {
            domain,
            config,
            pool,
            timers,
            phase,
            potential,
            rebuilds,
            ..
        } = self;
        let dt = config.dt;
        pool.install(|| -> Result<()> {
            debug_assert_eq!(*phase, Phase::ForcesCollected);
            timers.time(Section::Integrate, || {
                domain
                    .subnodes
                    .par_iter_mut()
                    .with_max_len(1)
                    .for_each(|s| integrate_half_kick_drift(&mut s.store, dt))
            });
            *phase = Phase::Drifted;

            let rebuild = timers.time(Section::Neigh, || domain.needs_rebuild())?;
            if rebuild {
                timers.time(Section::Resort, || domain.resort())?;
                timers.time(Section::Comm, || domain.update_ghost_positions())?;
                timers.time(Section::Resort, || domain.assign_bonded())?;
                timers.time(Section::Neigh, || domain.rebuild_lists());
                *rebuilds += 1;
            } else {
                timers.time(Section::Comm, || domain.update_ghost_positions())?;
            }

            let cap = config.force_cap;
            *potential = timers.time(Section::Forces, || compute_forces_capped(domain, cap))?;
            *phase = Phase::ForcesComputed;
            timers.time(Section::Comm, || domain.collect_ghost_forces())?;
            *phase = Phase::ForcesCollected;

            let thermostat = config.thermostat;
            timers.time(Section::Integrate, || {
                debug_assert_eq!(*phase, Phase::ForcesCollected);
                domain.subnodes.par_iter_mut().with_max_len(1).for_each(|s| {
                    if let Some(t) = &thermostat {
                        add_thermostat(&mut s.store, t, dt, step);
                    }
                    integrate_half_kick(&mut s.store, dt);
                })
            });
            Ok(())
        })
    }

    /// Runs `n` steps, calling `on_step` after each one.
    pub fn run_steps(&mut self, n: u64, mut on_step: impl FnMut(&Simulation) -> Result<()>) -> Result<()> {
        for _ in 0..n {
            self.step()?;
            on_step(self)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub domain: Domain,
    pub timers: SectionTimers,
    pub observables: Vec<Observables>,
    pub rebuilds: u64,
}

/// Computes initial forces, then runs `config.steps` steps, sampling observables
/// every `config.observable_stride` steps.
pub fn run(config: &EngineConfig, domain: Domain) -> Result<RunOutput> {
    let mut sim = Simulation::new(*config, domain)?;
    sim.compute_initial_forces()?;
    let stride = config.observable_stride;
    let mut observables = Vec::new();
    if stride > 0 {
        observables.push(sim.observables()?);
    }
    sim.run_steps(config.steps, |s| {
        if stride > 0 && s.current_step() % stride == 0 {
            observables.push(s.observables()?);
        }
        Ok(())
    })?;
    Ok(RunOutput {
        timers: sim.timers,
        rebuilds: sim.rebuilds,
        domain: sim.domain,
        observables,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Stop once this many consecutive probes fail to beat the best time.
    Lookahead(usize),
    /// Probe every candidate.
    Exhaustive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutotuneReport {
    pub worker_threads: usize,
    /// Every candidate that could be decomposed, in probe order.
    pub candidates: Vec<usize>,
    /// `(n_sub, seconds)` for the probes actually run.
    pub measurements: Vec<(usize, f64)>,
    pub selected: usize,
    pub stop_rule: StopRule,
}

impl AutotuneReport {
    pub fn time_of(&self, n_sub: usize) -> Option<f64> {
        self.measurements.iter().find(|m| m.0 == n_sub).map(|m| m.1)
    }
}

/// `worker_threads · 2^k` for k = 0, 1, … while the grid can still be split.
pub fn subnode_candidates(grid: &crate::CellGrid, worker_threads: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut n = worker_threads.max(1);
    while n <= grid.n_cells() && crate::decomp::make_subnode_decomposition(grid, n).is_ok() {
        out.push(n);
        n *= 2;
    }
    out
}

/// Probes candidates in order and keeps the fastest; ties go to the smaller
/// subnode count. With [`StopRule::Lookahead`], probing ends after the given
/// number of consecutive probes slower than the best so far.
pub fn autotune_with(
    worker_threads: usize,
    candidates: &[usize],
    rule: StopRule,
    mut probe: impl FnMut(usize) -> Result<f64>,
) -> Result<AutotuneReport> {
    let mut measurements = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut misses = 0;
    for &c in candidates {
        let t = probe(c)?;
        measurements.push((c, t));
        match best {
            Some((_, bt)) if t >= bt => {
                misses += 1;
                if let StopRule::Lookahead(k) = rule {
                    if misses > k {
                        break;
                    }
                }
            }
            _ => {
                best = Some((c, t));
                misses = 0;
            }
        }
    }
    let selected = best
        .map(|b| b.0)
        .ok_or_else(|| Error::InvalidParameter("no subnode candidate could be probed".into()))?;
    Ok(AutotuneReport {
        worker_threads,
        candidates: candidates.to_vec(),
        measurements,
        selected,
        stop_rule: rule,
    })
}

/// Wall time of `probe_steps` steps at `n_sub` subnodes, initialization excluded.
pub fn probe_time(domain: &Domain, config: &EngineConfig, n_sub: usize, probe_steps: u64) -> Result<f64> {
    let mut cfg = *config;
    cfg.n_sub = n_sub;
    let mut sim = Simulation::new(cfg, domain.clone())?;
    sim.compute_initial_forces()?;
    sim.run_steps(probe_steps, |_| Ok(()))?;
    Ok(sim.timers().total().as_secs_f64())
}

/// Times short runs at `worker_threads · 2^k` subnodes and selects the fastest.
pub fn autotune_subnodes(
    domain: &Domain,
    config: &EngineConfig,
    probe_steps: u64,
    rule: StopRule,
) -> Result<AutotuneReport> {
    if probe_steps < 10 {
        return Err(Error::InvalidParameter(format!(
            "autotune needs at least 10 probe steps, got {probe_steps}"
        )));
    }
    let candidates = subnode_candidates(domain.grid(), config.worker_threads);
    autotune_with(config.worker_threads, &candidates, rule, |n| {
        probe_time(domain, config, n, probe_steps)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::soa::Particle;

    fn fake(times: &[(usize, f64)], rule: StopRule) -> AutotuneReport {
        let cands: Vec<usize> = times.iter().map(|t| t.0).collect();
        autotune_with(16, &cands, rule, |n| Ok(times.iter().find(|t| t.0 == n).unwrap().1)).unwrap()
    }

    #[test]
    fn autotune_selection() {
        let r = fake(&[(16, 10.0), (32, 8.0), (64, 9.5)], StopRule::Lookahead(1));
        assert_eq!(r.selected, 32);

        let r = fake(&[(16, 1.0), (32, 2.0), (64, 3.0), (128, 4.0)], StopRule::Lookahead(1));
        assert_eq!(r.selected, 16);
        // one slower probe is tolerated, the second ends the search
        assert_eq!(r.measurements.len(), 3);

        let r = fake(&[(16, 5.0), (32, 6.0), (64, 4.0), (128, 7.0), (256, 8.0)], StopRule::Lookahead(1));
        assert_eq!(r.selected, 64);

        let r = fake(&[(16, 5.0), (32, 5.0)], StopRule::Exhaustive);
        assert_eq!(r.selected, 16);

        let r = fake(&[(16, 1.0), (32, 2.0), (64, 3.0), (128, 0.5)], StopRule::Exhaustive);
        assert_eq!(r.selected, 128);
        assert_eq!(r.measurements.len(), 4);
    }

    #[test]
    fn free_streaming() {
        let mut p = Particle::new(0, [1.0, 1.0, 1.0]);
        p.velocity = [1.0, 0.0, 0.0];
        let mut s = SoAStore::from_cells(&[vec![p]]);
        integrate_half_kick_drift(&mut s, 0.005);
        assert_eq!(s.position(0), [1.005, 1.0, 1.0]);
        assert_eq!(s.velocity(0), [1.0, 0.0, 0.0]);
        integrate_half_kick(&mut s, 0.005);
        assert_eq!(s.velocity(0), [1.0, 0.0, 0.0]);
        // padding did not move
        assert_eq!(s.position(1), [crate::soa::SENTINEL_COORD; 3]);
    }

    #[test]
    fn constant_force_matches_analytic() {
        let mut p = Particle::new(0, [0.5, -0.25, 2.0]);
        p.velocity = [0.3, -1.0, 0.0];
        let mut s = SoAStore::from_cells(&[vec![p]]);
        let dt = 0.01;
        let steps = 100;
        for _ in 0..steps {
            s.zero_forces();
            s.add_force(0, [1.0, 0.0, 0.0]);
            integrate_half_kick_drift(&mut s, dt);
            s.zero_forces();
            s.add_force(0, [1.0, 0.0, 0.0]);
            integrate_half_kick(&mut s, dt);
        }
        let t = dt * steps as f64;
        let want = [0.5 + 0.3 * t + 0.5 * t * t, -0.25 - t, 2.0];
        for k in 0..3 {
            assert!((s.position(0)[k] - want[k]).abs() < 1e-14, "{:?}", s.position(0));
        }
        assert!((s.velocity(0)[0] - (0.3 + t)).abs() < 1e-14);
    }

    #[test]
    fn timers_accumulate() {
        let mut t = SectionTimers::default();
        t.add(Section::Comm, Duration::from_millis(3));
        t.add(Section::Comm, Duration::from_millis(2));
        t.add(Section::Forces, Duration::from_millis(1));
        t.add_total(Duration::from_millis(7));
        assert_eq!(t.get(Section::Comm), Duration::from_millis(5));
        assert_eq!(t.sections_sum(), Duration::from_millis(6));
        let later = {
            let mut u = t;
            u.add(Section::Neigh, Duration::from_millis(4));
            u
        };
        assert_eq!(later.since(&t).get(Section::Neigh), Duration::from_millis(4));
        assert_eq!(later.since(&t).get(Section::Comm), Duration::ZERO);
    }

    #[test]
    fn config_validation() {
        assert!(EngineConfig::nve(0.0, 1, 1, 1).validate().is_err());
        assert!(EngineConfig::nve(0.005, 1, 0, 1).validate().is_err());
        assert!(EngineConfig::nve(0.005, 1, 1, 0).validate().is_err());
        EngineConfig::nve(0.005, 0, 1, 1).validate().unwrap();
    }
}
