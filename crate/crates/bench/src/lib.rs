//! Fixtures shared by the benchmarks.

use enclab_core::heatsolver::SolverConfig;
use enclab_core::indicator::{Estimator, PathSpec, ProbeConfig, SolverMode};
use enclab_core::{AxisBox, BallShape, BodySpec, InclusionSpec, Point, ShellSource};

/// Unit ball with a concentric inclusion, solved radially.
pub fn concentric_probe(n_cells: usize) -> ProbeConfig {
    ProbeConfig {
        body: BodySpec::Ball(BallShape::new(Point::ORIGIN, 1.0).unwrap()),
        inclusion: InclusionSpec::ball(BallShape::new(Point::ORIGIN, 0.6).unwrap(), 1.0).unwrap(),
        shell: ShellSource::new(Point::ORIGIN, 1.05, 1.55).unwrap(),
        mode: SolverMode::Radial { n_cells },
        path: PathSpec::Elliptic,
        estimator: Estimator::Contrast,
    }
}

/// The cube `[-1, 1]^3` with an off-center inclusion on an `n^3` grid.
pub fn box_probe(n: usize) -> ProbeConfig {
    ProbeConfig {
        body: BodySpec::Box(AxisBox::new(Point::new(-1.0, -1.0, -1.0), Point::new(1.0, 1.0, 1.0)).unwrap()),
        inclusion: InclusionSpec::ball(BallShape::new(Point::new(0.3, 0.1, 0.0), 0.35).unwrap(), 1.0).unwrap(),
        shell: ShellSource::new(Point::ORIGIN, 2.0, 2.5).unwrap(),
        mode: SolverMode::Grid { n, config: SolverConfig::default() },
        path: PathSpec::Elliptic,
        estimator: Estimator::Contrast,
    }
}
