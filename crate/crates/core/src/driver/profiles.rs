//! Builds fields, controls and the control problem from a [`RunConfig`].

use super::config::{BoundSpec, ConfigError, Profile, RunConfig, TargetMode};
use crate::control::{Bound, CostSpec, ReducedProblem};
use crate::fields::{read_field, Grid2D, ScalarField};
use crate::state::{solve_state, Control, Scheme, SourceSpec, TimeProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    InitialDatum = 1,
    Source = 2,
    Control = 3,
    TargetControl = 4,
    Direction = 5,
}

pub fn rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// `Σ_{k,l < modes} a_kl cos(kπx/lx) cos(lπy/ly)` with `a_kl` uniform in
/// `[-1, 1]/(1 + k² + l²)`, scaled to unit maximum.
pub fn smooth_random(grid: Grid2D, modes: u32, rng: &mut impl Rng) -> ScalarField {
    let mut field = ScalarField::zeros(grid);
    for k in 0..modes {
        for l in 0..modes {
            let a = rng.gen_range(-1.0..=1.0) / f64::from(1 + k * k + l * l);
            let (kx, ly) = (f64::from(k) * PI / grid.lx(), f64::from(l) * PI / grid.ly());
            field.axpy(a, &ScalarField::from_fn(grid, |x, y| (kx * x).cos() * (ly * y).cos()));
        }
    }
    let m = field.max_abs();
    if m > 0.0 {
        field = field.scaled(1.0 / m);
    }
    field
}

pub fn read_field_file(path: &Path, grid: &Grid2D) -> Result<ScalarField, ConfigError> {
    let input = |message: String| ConfigError::Input {
        path: path.to_path_buf(),
        message,
    };
    let file = File::open(path).map_err(|e| input(e.to_string()))?;
    let field = read_field(BufReader::new(file)).map_err(|e| input(e.to_string()))?;
    let g = field.grid();
    if (g.nx(), g.ny()) != (grid.nx(), grid.ny()) || g.lx() != grid.lx() || g.ly() != grid.ly() {
        return Err(input(format!(
            "field is {}x{} on {}x{}, config grid is {}x{} on {}x{}",
            g.nx(),
            g.ny(),
            g.lx(),
            g.ly(),
            grid.nx(),
            grid.ny(),
            grid.lx(),
            grid.ly()
        )));
    }
    Ok(field)
}

/// The unscaled spatial shape of a profile.
pub fn profile_field(
    profile: &Profile,
    grid: Grid2D,
    rng: &mut impl Rng,
) -> Result<ScalarField, ConfigError> {
    Ok(match profile {
        Profile::Zero => ScalarField::zeros(grid),
        Profile::Constant => ScalarField::constant(grid, 1.0),
        Profile::Cosine(kx, ky) => {
            let (kx, ky) = (f64::from(*kx) * PI / grid.lx(), f64::from(*ky) * PI / grid.ly());
            ScalarField::from_fn(grid, |x, y| (kx * x).cos() * (ky * y).cos())
        }
        Profile::Random(modes) => smooth_random(grid, *modes, rng),
        Profile::File(path) => read_field_file(path, &grid)?,
    })
}

/// `offset + amplitude·shape(x)·cos(2π f t)` sampled on each control interval.
fn space_time(
    shape: &ScalarField,
    nt: usize,
    dt: f64,
    amplitude: f64,
    offset: f64,
    frequency: f64,
) -> Control {
    let grid = *shape.grid();
    let values = (0..nt)
        .map(|k| {
            let w = amplitude * (2.0 * PI * frequency * k as f64 * dt).cos();
            shape.map(|v| offset + w * v)
        })
        .collect();
    Control::new(grid, dt, values).expect("shapes share the grid")
}

pub fn grid(cfg: &RunConfig) -> Result<Grid2D, ConfigError> {
    Grid2D::new(cfg.nx, cfg.ny, cfg.lx, cfg.ly).map_err(|e| ConfigError::Validation(e.to_string()))
}

pub fn initial_datum(cfg: &RunConfig, grid: Grid2D) -> Result<ScalarField, ConfigError> {
    let shape = profile_field(&cfg.phi0, grid, &mut rng(cfg.seed, Stream::InitialDatum))?;
    Ok(shape.map(|v| cfg.phi0_offset + cfg.phi0_amplitude * v))
}

/// The source with its spatial mean removed, so it is admissible exactly.
pub fn source(cfg: &RunConfig, grid: Grid2D) -> Result<SourceSpec, ConfigError> {
    let mut shape = profile_field(&cfg.source, grid, &mut rng(cfg.seed, Stream::Source))?;
    let mean = shape.mean();
    if let Profile::File(path) = &cfg.source {
        let tol = 1e-8 * (1.0 + shape.max_abs());
        if mean.abs() > tol {
            return Err(ConfigError::Validation(format!(
                "source must have zero mean; {} has mean {mean:e}",
                path.display()
            )));
        }
    }
    shape.remove_mean();
    let shape = shape.scaled(cfg.source_amplitude);
    let description = format!(
        "{} amplitude {} frequency {}",
        cfg.source, cfg.source_amplitude, cfg.source_frequency
    );
    let profile = if cfg.source_frequency == 0.0 {
        TimeProfile::Steady(shape)
    } else {
        let f = cfg.source_frequency;
        TimeProfile::from_fn(grid, move |t| shape.scaled((2.0 * PI * f * t).cos()))
    };
    Ok(SourceSpec::new(profile, description))
}

pub fn control(cfg: &RunConfig, grid: Grid2D) -> Result<Control, ConfigError> {
    let shape = profile_field(&cfg.control, grid, &mut rng(cfg.seed, Stream::Control))?;
    Ok(space_time(
        &shape,
        cfg.nt,
        cfg.dt(),
        cfg.control_amplitude,
        cfg.control_offset,
        cfg.control_frequency,
    ))
}

/// The control whose trajectory defines a manufactured target.
pub fn target_control(cfg: &RunConfig, grid: Grid2D) -> Result<Control, ConfigError> {
    let shape = profile_field(&cfg.target_control, grid, &mut rng(cfg.seed, Stream::TargetControl))?;
    Ok(space_time(
        &shape,
        cfg.nt,
        cfg.dt(),
        cfg.target_control_amplitude,
        cfg.target_control_offset,
        cfg.target_control_frequency,
    ))
}

/// Seeded smooth space-time direction with `‖h‖_{L²(Q)} = norm`.
pub fn random_direction(grid: Grid2D, nt: usize, dt: f64, seed: u64, norm: f64) -> Control {
    let mut rng = rng(seed, Stream::Direction);
    let shapes: Vec<ScalarField> = (0..3).map(|_| smooth_random(grid, 4, &mut rng)).collect();
    let horizon = nt as f64 * dt;
    let values = (0..nt)
        .map(|k| {
            let t = k as f64 * dt;
            let mut v = ScalarField::zeros(grid);
            for (m, shape) in shapes.iter().enumerate() {
                v.axpy((m as f64 * PI * t / horizon).cos(), shape);
            }
            v
        })
        .collect();
    let h = Control::new(grid, dt, values).expect("shapes share the grid");
    let scale = norm / h.norm();
    h.scaled(scale)
}

fn bound(spec: &BoundSpec, grid: &Grid2D) -> Result<Bound, ConfigError> {
    Ok(match spec {
        BoundSpec::Constant(c) => Bound::Constant(*c),
        BoundSpec::File(path) => Bound::Field(read_field_file(path, grid)?),
    })
}

/// Everything a run needs, assembled from the config.
#[derive(Debug, Clone)]
pub struct Setup {
    pub grid: Grid2D,
    pub problem: ReducedProblem,
    /// `R` for `simulate` and `grad-check`, the start point for `optimize`.
    pub control: Control,
    /// The generating control of a manufactured target.
    pub truth: Option<Control>,
}

/// Errors while building a setup: bad inputs, or a failed forward solve for
/// a manufactured target.
#[derive(Debug, thiserror::Error)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("generating manufactured target: {0}")]
    Solver(#[from] crate::Error),
}

pub fn build(cfg: &RunConfig, scheme: Scheme) -> Result<Setup, SetupError> {
    cfg.validate()?;
    let grid = grid(cfg)?;
    let phi0 = initial_datum(cfg, grid)?;
    let source = source(cfg, grid)?;
    let control = control(cfg, grid)?;
    let (phi_omega, phi_q, truth) = match cfg.target {
        TargetMode::Zero => (ScalarField::zeros(grid), TimeProfile::zero(grid), None),
        TargetMode::File => {
            let omega = cfg.target_omega.as_deref().expect("validated");
            let q = cfg.target_q.as_deref().expect("validated");
            (
                read_field_file(omega, &grid)?,
                TimeProfile::Steady(read_field_file(q, &grid)?),
                None,
            )
        }
        TargetMode::Manufactured => {
            let truth = target_control(cfg, grid)?;
            let traj = solve_state(&phi0, &source, &truth, &scheme)?;
            let fields: Vec<ScalarField> = traj.snapshots().iter().map(|s| s.phi.clone()).collect();
            (
                traj.final_phi().clone(),
                TimeProfile::Sampled {
                    dt: cfg.dt(),
                    fields,
                },
                Some(truth),
            )
        }
    };
    let spec = CostSpec::new(
        [cfg.beta1, cfg.beta2, cfg.beta3],
        phi_omega,
        phi_q,
        bound(&cfg.r_min, &grid)?,
        bound(&cfg.r_max, &grid)?,
    )
    .map_err(|e| ConfigError::Validation(e.to_string()))?;
    Ok(Setup {
        grid,
        problem: ReducedProblem {
            phi0,
            source,
            spec,
            scheme,
        },
        control,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::write_field;

    #[test]
    fn random_fields_are_seeded_and_bounded() {
        let g = Grid2D::new(12, 9, 1.0, 0.7).unwrap();
        let a = smooth_random(g, 4, &mut rng(3, Stream::Source));
        let b = smooth_random(g, 4, &mut rng(3, Stream::Source));
        let c = smooth_random(g, 4, &mut rng(3, Stream::Control));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.max_abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn source_is_mean_free() {
        let cfg = crate::driver::parse_config("nx=8\nny=8\nsource = random(3)\nseed = 11").unwrap();
        let s = source(&cfg, grid(&cfg).unwrap()).unwrap();
        assert!(s.at(0.3).mean().abs() < 1e-15);
    }

    #[test]
    fn direction_has_requested_norm() {
        let g = Grid2D::unit_square(8).unwrap();
        let h = random_direction(g, 10, 0.05, 4, 0.1);
        assert!((h.norm() - 0.1).abs() < 1e-15);
        assert_eq!(h, random_direction(g, 10, 0.05, 4, 0.1));
    }

    #[test]
    fn control_profile_in_time() {
        let cfg = crate::driver::parse_config(
            "nx=6\nny=6\nnt=4\nfinal_time=1\ncontrol=constant\ncontrol_amplitude=2\n\
             control_offset=0.5\ncontrol_frequency=0.5",
        )
        .unwrap();
        let r = control(&cfg, grid(&cfg).unwrap()).unwrap();
        let first: Vec<f64> = r.values().iter().map(|f| f.values()[0]).collect();
        let expect = [2.5, 0.5 + 2.0 * (PI / 4.0).cos(), 0.5, 0.5 + 2.0 * (3.0 * PI / 4.0).cos()];
        for (a, b) in first.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn file_inputs_are_checked() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2D::unit_square(6).unwrap();
        let path = dir.path().join("s.csv");
        write_field(File::create(&path).unwrap(), &ScalarField::constant(g, 1.0)).unwrap();
        let mut cfg = crate::driver::parse_config("nx=6\nny=6").unwrap();
        cfg.source = Profile::File(path.clone());
        assert!(matches!(source(&cfg, g), Err(ConfigError::Validation(_))));
        cfg.nx = 7;
        let g7 = grid(&cfg).unwrap();
        assert!(matches!(read_field_file(&path, &g7), Err(ConfigError::Input { .. })));
        let missing = dir.path().join("none.csv");
        assert!(matches!(read_field_file(&missing, &g), Err(ConfigError::Input { .. })));
    }
}
