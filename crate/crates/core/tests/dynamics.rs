use shortmd_core::engine::{self, EngineConfig, Simulation};
use shortmd_core::generate::{gen_lattice, gen_random};
use shortmd_core::{
    minimum_image, BoxSpec, Domain, Error, FENEParams, FlatConfig, Interactions, LJParams,
    LangevinParams, Section,
};

fn lj_domain(flat: &FlatConfig, n_sub: usize) -> Domain {
    Domain::new(flat, Interactions::pair_only(LJParams::fluid()), 0.3, n_sub).unwrap()
}

#[test]
fn zero_steps_leaves_state_unchanged() {
    let flat = gen_lattice(500, 0.8442, 1.0, 2).unwrap();
    let cfg = EngineConfig::nve(0.005, 0, 1, 1);
    let out = engine::run(&cfg, lj_domain(&flat, 1)).unwrap();
    let ps = out.domain.particles();
    for (p, (x, v)) in ps.iter().zip(flat.positions.iter().zip(&flat.velocities)) {
        assert_eq!(p.position, *x);
        assert_eq!(p.velocity, *v);
    }
    assert_eq!(out.observables.len(), 1);
    assert_eq!(out.observables[0].step, 0);
}

#[test]
fn nve_small_system_conserves_energy() {
    let flat = gen_lattice(864, 0.8442, 0.72, 3).unwrap();
    // the simple cubic start melts violently; measure only after it has
    let mut cfg = EngineConfig::nve(0.005, 300, 8, 2);
    cfg.observable_stride = 0;
    let melted = engine::run(&cfg, lj_domain(&flat, 8)).unwrap().domain;
    cfg.steps = 1000;
    cfg.observable_stride = 10;
    let out = engine::run(&cfg, melted).unwrap();
    let e0 = out.observables[0].total;
    let drift = out
        .observables
        .iter()
        .map(|o| ((o.total - e0) / e0).abs())
        .fold(0.0, f64::max);
    assert!(drift < 1e-3, "drift {drift}");
    assert!(out.rebuilds > 0);
}

#[test]
fn velocity_reversal_retraces_trajectory() {
    let flat = gen_random(256, 0.7, 0.9, 0.5, 8).unwrap();
    let d = lj_domain(&flat, 1);
    let mut cfg = EngineConfig::nve(0.002, 200, 1, 1);
    cfg.observable_stride = 0;
    let fwd = engine::run(&cfg, d).unwrap();
    let mut back = fwd.domain.to_flat();
    for v in back.velocities.iter_mut() {
        *v = v.map(|x| -x);
    }
    let rev = engine::run(&cfg, lj_domain(&back, 1)).unwrap();
    let mut worst: f64 = 0.0;
    for (p, x0) in rev.domain.particles().iter().zip(&flat.positions) {
        let d = minimum_image(
            [p.position[0] - x0[0], p.position[1] - x0[1], p.position[2] - x0[2]],
            &flat.box_spec,
        );
        worst = d.iter().fold(worst, |m, x| m.max(x.abs()));
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn thermostatted_run_is_identical_across_thread_counts() {
    let flat = gen_lattice(1372, 0.8442, 0.6, 4).unwrap();
    let mut finals = Vec::new();
    for threads in [1, 4, 8] {
        let mut cfg = EngineConfig::nve(0.005, 60, 8, threads);
        cfg.thermostat = Some(LangevinParams::new(1.0, 0.6, 99).unwrap());
        cfg.observable_stride = 0;
        let out = engine::run(&cfg, lj_domain(&flat, 8)).unwrap();
        let pos: Vec<[u64; 3]> = out
            .domain
            .particles()
            .iter()
            .map(|p| p.position.map(f64::to_bits))
            .collect();
        finals.push(pos);
    }
    assert_eq!(finals[0], finals[1]);
    assert_eq!(finals[0], finals[2]);
}

// U(r) = FENE + LJ for a bonded pair, derivatives written out by hand.
fn dimer_curvature(fene: &FENEParams) -> (f64, f64) {
    let (k, rr) = (fene.k, fene.r_max);
    let du = |r: f64| k * r / (1.0 - r * r / (rr * rr)) + 4.0 * (-12.0 * r.powi(-13) + 6.0 * r.powi(-7));
    let (mut lo, mut hi) = (0.8, 1.2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if du(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let r0 = 0.5 * (lo + hi);
    let x = r0 * r0 / (rr * rr);
    let d2u = k * (1.0 + x) / ((1.0 - x) * (1.0 - x)) + 4.0 * (156.0 * r0.powi(-14) - 42.0 * r0.powi(-8));
    (r0, d2u)
}

#[test]
fn fene_dimer_oscillates_at_harmonic_period() {
    let fene = FENEParams::default();
    let (r0, curvature) = dimer_curvature(&fene);
    let period = 2.0 * std::f64::consts::PI * (0.5 / curvature).sqrt();

    let mut flat = FlatConfig::new(BoxSpec::cubic(10.0).unwrap());
    let amp = 0.005;
    flat.push(0, [5.0, 5.0, 5.0], [0.0; 3]);
    flat.push(1, [5.0 + r0 + amp, 5.0, 5.0], [0.0; 3]);
    flat.bonds.push([0, 1]);
    let ia = Interactions { lj: LJParams::fluid(), fene: Some(fene), angle: None };
    let d = Domain::new(&flat, ia, 0.3, 1).unwrap();

    let dt = 0.0005;
    let mut cfg = EngineConfig::nve(dt, 0, 1, 1);
    cfg.observable_stride = 0;
    let mut sim = Simulation::new(cfg, d).unwrap();
    sim.compute_initial_forces().unwrap();
    let bond = |s: &Simulation| {
        let ps = s.domain().particles();
        let d = minimum_image(
            [0, 1, 2].map(|k| ps[1].position[k] - ps[0].position[k]),
            s.domain().box_spec(),
        );
        d[0] - r0
    };
    // upward zero crossings of the extension, linearly interpolated
    let mut crossings = Vec::new();
    let mut prev = bond(&sim);
    while crossings.len() < 6 {
        sim.step().unwrap();
        let now = bond(&sim);
        if prev < 0.0 && now >= 0.0 {
            let t = sim.current_step() as f64 * dt - dt * now / (now - prev);
            crossings.push(t);
        }
        prev = now;
    }
    let measured = (crossings[5] - crossings[0]) / 5.0;
    assert!(((measured - period) / period).abs() < 0.01, "{measured} vs {period}");
}

#[test]
fn overstretched_bond_reports_step_and_ids() {
    let mut flat = FlatConfig::new(BoxSpec::cubic(10.0).unwrap());
    flat.push(3, [5.0, 5.0, 5.0], [-40.0, 0.0, 0.0]);
    flat.push(8, [6.0, 5.0, 5.0], [40.0, 0.0, 0.0]);
    flat.bonds.push([3, 8]);
    let ia = Interactions { lj: LJParams::fluid(), fene: Some(FENEParams::default()), angle: None };
    let d = Domain::new(&flat, ia, 0.3, 1).unwrap();
    let err = engine::run(&EngineConfig::nve(0.005, 100, 1, 1), d).unwrap_err();
    match err {
        Error::AtStep { step, ref source } => {
            assert!(step >= 1);
            assert!(matches!(**source, Error::BondOverstretch(3, 8, ..)), "{source:?}");
        }
        e => panic!("unexpected {e:?}"),
    }
    assert!(err.is_physics());
}

#[test]
fn section_timers_cover_the_loop() {
    let flat = gen_lattice(4000, 0.8442, 0.6, 5).unwrap();
    let mut cfg = EngineConfig::nve(0.005, 100, 8, 2);
    cfg.observable_stride = 0;
    let out = engine::run(&cfg, lj_domain(&flat, 8)).unwrap();
    let t = out.timers;
    for s in Section::ALL {
        if s != Section::Resort {
            assert!(t.get(s) > std::time::Duration::ZERO, "{s} never timed");
        }
    }
    assert!(t.sections_sum().as_secs_f64() >= 0.9 * t.total().as_secs_f64());
    assert!(t.sections_sum() <= t.total());
}

#[test]
fn autotune_probes_powers_of_two() {
    let flat = gen_lattice(4000, 0.8442, 0.6, 6).unwrap();
    let d = lj_domain(&flat, 1);
    let cfg = EngineConfig::nve(0.005, 0, 1, 2);
    let report = engine::autotune_subnodes(&d, &cfg, 10, engine::StopRule::Exhaustive).unwrap();
    assert_eq!(report.candidates, vec![2, 4, 8, 16, 32, 64]);
    assert_eq!(report.measurements.len(), report.candidates.len());
    assert!(report.candidates.contains(&report.selected));
    assert!(engine::autotune_subnodes(&d, &cfg, 5, engine::StopRule::Exhaustive).is_err());
}
