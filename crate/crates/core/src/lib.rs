//! Short-range molecular dynamics engine.
//!
//! Particles live in a cell-segmented structure-of-arrays store; pair
//! interactions are found with sorted Verlet lists (`ilist`/`irange`/`jlist`);
//! the cell grid is split into subnodes, each with its own ghost shell, and every
//! simulation phase runs as one task per subnode on a work-stealing pool. The
//! number of subnodes is the task granularity knob and can be autotuned.
//!
//! ```no_run
//! use shortmd_core::{engine, generate, Domain, Interactions, LJParams};
//!
//! let flat = generate::gen_lattice(4000, 0.8442, 0.6, 1).unwrap();
//! let interactions = Interactions::pair_only(LJParams::fluid());
//! let domain = Domain::new(&flat, interactions, 0.3, 8).unwrap();
//! let config = engine::EngineConfig::nve(0.005, 1000, 8, 4);
//! let out = engine::run(&config, domain).unwrap();
//! println!("{:?}", out.timers);
//! ```

pub mod decomp;
pub mod engine;
pub mod error;
pub mod generate;
pub mod geometry;
pub mod neighbor;
pub mod oracle;
pub mod potentials;
pub mod soa;

pub type ParticleId = u64;

pub use decomp::{Domain, GhostCommPlan, Interactions, Subnode, SubnodeGrid};
pub use engine::{AutotuneReport, EngineConfig, Section, SectionTimers};
pub use error::{Error, Result};
pub use geometry::{minimum_image, wrap_position, BoxSpec, Vec3};
pub use neighbor::{CellBlock, CellGrid, RebuildSnapshot, SortedNeighborList};
pub use oracle::FlatConfig;
pub use potentials::{AngleParams, FENEParams, LJParams, LangevinParams};
pub use soa::{kinetic_energy_and_temperature, Particle, SoAStore};
