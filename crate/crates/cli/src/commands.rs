use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::json;
use shortmd_core::engine::{self, AutotuneReport, Simulation, StopRule};
use shortmd_core::oracle::{brute_force_forces_energy, brute_force_pairs, BondedParams};
use shortmd_core::{Domain, ParticleId, Section, SectionTimers};

use crate::config::{NSub, RunConfig, SearchRule};
use crate::output::{write_observables, TimingWriter, XyzWriter};
use crate::CliError;

/// Tolerance on the largest force component difference in `verify`.
pub const VERIFY_TOLERANCE: f64 = 1e-10;

pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        let p = Path::new(name);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    fn build_domain(&self, n_sub: usize) -> Result<Domain, CliError> {
        let flat = self.config.generate()?;
        let ia = self.config.interactions()?;
        Ok(Domain::new(&flat, ia, self.config.interaction.r_skin, n_sub)?)
    }

    fn initial_n_sub(&self) -> usize {
        match self.config.engine.n_sub {
            NSub::Fixed(n) => n,
            NSub::Auto => self.config.engine.worker_threads,
        }
    }

    fn rule(&self) -> StopRule {
        match self.config.engine.search {
            SearchRule::Lookahead => StopRule::Lookahead(1),
            SearchRule::Exhaustive => StopRule::Exhaustive,
        }
    }
}

fn autotune(ctx: &Context, domain: &Domain) -> Result<AutotuneReport, CliError> {
    let cfg = ctx.config.engine_config(domain.n_sub())?;
    Ok(engine::autotune_subnodes(domain, &cfg, ctx.config.engine.probe_steps, ctx.rule())?)
}

fn print_report(out: &mut dyn Write, report: &AutotuneReport) -> std::io::Result<()> {
    writeln!(out, "autotune: {} workers, candidates {:?}", report.worker_threads, report.candidates)?;
    for (n, t) in &report.measurements {
        let mark = if *n == report.selected { "  <- selected" } else { "" };
        writeln!(out, "  n_sub {n:>6}  {t:.4} s{mark}")?;
    }
    Ok(())
}

fn report_json(report: &AutotuneReport) -> serde_json::Value {
    json!({
        "worker_threads": report.worker_threads,
        "candidates": report.candidates,
        "measurements": report
            .measurements
            .iter()
            .map(|(n, t)| json!({"n_sub": n, "seconds": t}))
            .collect::<Vec<_>>(),
        "selected": report.selected,
    })
}

/// Generates the system, optionally autotunes and warms up, then runs the timed
/// steps while writing timing records, trajectory frames and observables.
pub fn run(ctx: &Context, out: &mut dyn Write) -> Result<(), CliError> {
    let c = &ctx.config;
    let mut domain = ctx.build_domain(ctx.initial_n_sub())?;
    // warm up first so autotune probes see the relaxed system
    if c.engine.warmup > 0 {
        let mut cfg = c.engine_config(domain.n_sub())?;
        cfg.force_cap = c.engine.force_cap;
        let mut sim = Simulation::new(cfg, domain)?;
        sim.compute_initial_forces()?;
        sim.run_steps(c.engine.warmup, |_| Ok(()))?;
        writeln!(out, "warmup: {} steps", c.engine.warmup)?;
        domain = sim.into_domain();
    }
    if c.engine.n_sub == NSub::Auto {
        let report = autotune(ctx, &domain)?;
        print_report(out, &report)?;
        domain = domain.with_subnodes(report.selected)?;
    }
    let n_sub = domain.n_sub();

    let cfg = c.engine_config(n_sub)?;
    let mut sim = Simulation::new(cfg, domain)?;
    sim.compute_initial_forces()?;

    let mut timing = c.output.timing.as_ref().map(|p| TimingWriter::create(&ctx.path(p))).transpose()?;
    let mut traj = c.output.trajectory.as_ref().map(|p| XyzWriter::create(&ctx.path(p))).transpose()?;
    let obs_stride = c.output.observable_stride;
    let mut observables = Vec::new();
    if obs_stride > 0 {
        observables.push(sim.observables()?);
    }
    if let Some(t) = traj.as_mut() {
        t.frame(0, sim.domain())?;
    }

    let steps = c.engine.steps;
    let every = c.output.timing_every;
    let traj_stride = c.output.trajectory_stride;
    let mut mark = SectionTimers::default();
    let mut block_start = 1;
    for step in 1..=steps {
        sim.step()?;
        if let Some(t) = timing.as_mut() {
            if every > 0 && (step % every == 0 || step == steps) {
                let now = *sim.timers();
                t.block(block_start, step, &now.since(&mark))?;
                mark = now;
                block_start = step + 1;
            }
        }
        if let Some(t) = traj.as_mut() {
            if step % traj_stride == 0 {
                t.frame(step, sim.domain())?;
            }
        }
        if obs_stride > 0 && step % obs_stride == 0 {
            observables.push(sim.observables()?);
        }
    }

    let totals = *sim.timers();
    if let Some(t) = timing {
        t.finish(steps, &totals)?;
    }
    if let Some(t) = traj {
        t.finish()?;
    }
    if let Some(p) = &c.output.observables {
        write_observables(&ctx.path(p), &observables)?;
    }

    writeln!(
        out,
        "run: {} particles, {steps} steps, n_sub {n_sub}, {} workers, {} list rebuilds",
        sim.domain().n_particles(),
        c.engine.worker_threads,
        sim.rebuilds()
    )?;
    for s in Section::ALL {
        writeln!(out, "  {:<10} {:.4} s", s.name(), totals.get(s).as_secs_f64())?;
    }
    writeln!(out, "  {:<10} {:.4} s", "total", totals.total().as_secs_f64())?;
    if let Some(last) = observables.last() {
        writeln!(
            out,
            "final: step {} T = {:.4} E = {:.6}",
            last.step, last.temperature, last.total
        )?;
    }
    Ok(())
}

/// Times the candidate subnode counts, writes `autotune.json`, and optionally
/// runs at the selected count.
pub fn autotune_cmd(ctx: &Context, then_run: bool, out: &mut dyn Write) -> Result<AutotuneReport, CliError> {
    let domain = ctx.build_domain(ctx.initial_n_sub())?;
    let report = autotune(ctx, &domain)?;
    print_report(out, &report)?;
    let text = serde_json::to_string_pretty(&report_json(&report)).expect("plain JSON value");
    std::fs::write(ctx.path("autotune.json"), text + "\n")?;
    if then_run {
        let mut config = ctx.config.clone();
        config.engine.n_sub = NSub::Fixed(report.selected);
        run(&Context { config, out_dir: ctx.out_dir.clone() }, out)?;
    }
    Ok(report)
}

/// Writes the generated system as a single XYZ frame.
pub fn generate(ctx: &Context, name: &str, out: &mut dyn Write) -> Result<(), CliError> {
    let domain = ctx.build_domain(1)?;
    let path = ctx.path(name);
    let mut w = XyzWriter::create(&path)?;
    w.frame(0, &domain)?;
    w.finish()?;
    let topo = domain.topology();
    let l = domain.box_spec().lengths();
    writeln!(
        out,
        "generated {} particles, {} bonds, {} angles, box {} {} {} -> {}",
        domain.n_particles(),
        topo.bonds.len(),
        topo.angles.len(),
        l[0],
        l[1],
        l[2],
        path.display()
    )?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyResult {
    pub max_force_diff: f64,
    pub energy_diff: f64,
    pub missing_pairs: usize,
    pub extra_pairs: usize,
    pub duplicate_pairs: usize,
}

impl VerifyResult {
    pub fn ok(&self) -> bool {
        self.max_force_diff <= VERIFY_TOLERANCE
            && self.missing_pairs == 0
            && self.extra_pairs == 0
            && self.duplicate_pairs == 0
    }
}

/// One engine force evaluation against the brute-force oracle.
pub fn verify(ctx: &Context, out: &mut dyn Write) -> Result<VerifyResult, CliError> {
    let c = &ctx.config;
    let flat = c.generate()?;
    if flat.len() > c.verify_max_particles {
        return Err(CliError::Config(format!(
            "verify: {} particles exceed verify.max_particles = {}",
            flat.len(),
            c.verify_max_particles
        )));
    }
    let ia = c.interactions()?;
    let mut domain = Domain::new(&flat, ia, c.interaction.r_skin, ctx.initial_n_sub())?;
    domain.update_ghost_positions()?;
    let pe = engine::compute_forces(&mut domain)?;
    domain.collect_ghost_forces()?;

    let bonded = BondedParams { fene: ia.fene, angle: ia.angle };
    let (want, want_pe) = brute_force_forces_energy(&flat, &flat.box_spec, &ia.lj, &bonded)?;
    let got = domain.particles();
    let index = flat.index_of();
    let mut max_force_diff = 0.0f64;
    for p in &got {
        let w = want[index[&p.id]];
        for k in 0..3 {
            max_force_diff = max_force_diff.max((p.force[k] - w[k]).abs());
        }
    }

    let listed = domain.neighbor_pairs();
    let set: BTreeSet<(ParticleId, ParticleId)> = listed.iter().copied().collect();
    let truth = brute_force_pairs(&flat, &flat.box_spec, domain.r_verlet());
    let result = VerifyResult {
        max_force_diff,
        energy_diff: (pe - want_pe).abs(),
        missing_pairs: truth.difference(&set).count(),
        extra_pairs: set.difference(&truth).count(),
        duplicate_pairs: listed.len() - set.len(),
    };

    writeln!(
        out,
        "verify: {} particles, n_sub {}, {} pairs within {}",
        flat.len(),
        domain.n_sub(),
        truth.len(),
        domain.r_verlet()
    )?;
    if result.ok() {
        writeln!(out, "max |ΔF| ≤ 1e-10, pair sets equal")?;
    } else {
        writeln!(
            out,
            "MISMATCH: missing {}, extra {}, duplicate {} pairs",
            result.missing_pairs, result.extra_pairs, result.duplicate_pairs
        )?;
    }
    writeln!(
        out,
        "max |ΔF| = {:.3e}, |ΔE| = {:.3e}",
        result.max_force_diff, result.energy_diff
    )?;
    if result.ok() {
        Ok(result)
    } else {
        Err(CliError::Mismatch(format!(
            "max |ΔF| = {:.3e} (tolerance {VERIFY_TOLERANCE:e}), {} missing / {} extra / {} duplicate pairs",
            result.max_force_diff, result.missing_pairs, result.extra_pairs, result.duplicate_pairs
        )))
    }
}
