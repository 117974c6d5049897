//! Option blocks shared by the command line and the TOML config file.
//!
//! Every field is optional in both places. Resolution order is flag, then
//! file, then the built-in default; values still missing after that are
//! reported as missing required flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

macro_rules! options {
    ($(#[$smeta:meta])* $name:ident { $( $(#[$fmeta:meta])* $field:ident : $ty:ty ),* $(,)? }) => {
        $(#[$smeta])*
        #[derive(Debug, Clone, Default, PartialEq, clap::Args, Serialize, Deserialize)]
        #[serde(deny_unknown_fields, rename_all = "kebab-case")]
        #[command(allow_negative_numbers = true)]
        pub struct $name {
            $( $(#[$fmeta])* #[arg(long)] pub $field: Option<$ty>, )*
        }

        impl $name {
            /// Fields set in `self` win over those in `base`.
            pub fn overlay(self, base: Self) -> Self {
                $name { $( $field: self.$field.or(base.$field), )* }
            }
        }
    };
}

options! {
    RadialOpts {
        /// Space dimension N
        n: usize,
        /// Core conductivity
        sigma_c: f64,
        /// Shell conductivity
        sigma_s: f64,
        /// Core radius R
        r: f64,
        /// Highest Fourier mode in the invertibility table
        kmax: usize,
        beta: f64,
        gamma: f64,
        /// Dirichlet value on the unit sphere
        c_bdry: f64,
        /// Uniform cells on [0, 1]
        cells: usize,
        /// Flag threshold for |s_k'(1)|
        threshold: f64,
    }
}

options! {
    CounterexampleOpts {
        /// Outer perturbation, e.g. "0.01*cos(2θ)"
        g: String,
        r: f64,
        sigma_c: f64,
        sigma_s: f64,
        beta: f64,
        gamma: f64,
        /// Fourier modes controlled by the Newton iteration
        kmax: usize,
        /// Mesh resolution (boundary nodes per 30-degree sector)
        resolution: usize,
        /// Relative residual tolerance
        tol: f64,
        max_iter: usize,
        anderson_depth: usize,
    }
}

options! {
    HeatsimOpts {
        /// radial-dirichlet, radial-cauchy, flat-cauchy or planar-dirichlet
        problem: String,
        n: usize,
        r: f64,
        sigma_c: f64,
        sigma_s: f64,
        sigma_m: f64,
        /// Mode-2 amplitude of the core boundary (planar-dirichlet only)
        eps: f64,
        /// Mesh resolution (planar-dirichlet only)
        resolution: usize,
        /// Sample times, comma separated; overrides t0/t1/nt
        #[arg(value_delimiter = ',')]
        times: Vec<f64>,
        /// First geometric sample time
        t0: f64,
        /// Last geometric sample time
        t1: f64,
        /// Number of geometric sample times
        nt: usize,
        /// Relative change per time step
        rel_step: f64,
        /// Ball radius for balance moments
        ball: f64,
    }
}

options! {
    AsymptoticsOpts {
        /// Radius of the smaller tangent ball
        r_small: f64,
        /// Radius of the larger tangent ball
        r_large: f64,
        /// Core radius
        r_core: f64,
        sigma_c: f64,
        sigma_s: f64,
        t0: f64,
        /// Ratio between sample times
        ratio: f64,
        nt: usize,
        /// Smallest radial cell
        h_min: f64,
    }
}

options! {
    LaplaceOpts {
        n: usize,
        r: f64,
        sigma_c: f64,
        sigma_s: f64,
        /// Increasing Laplace parameters, comma separated (at least 4)
        #[arg(value_delimiter = ',')]
        lambdas: Vec<f64>,
        /// direct (elliptic solves) or transform (heat flow, then transform)
        method: String,
        /// Search lambda_0 and check the barrier sandwich
        barrier: bool,
    }
}

options! {
    GeometryOpts {
        /// circle or ellipse
        shape: String,
        /// Ellipse semi-axis along x
        a: f64,
        /// Ellipse semi-axis along y
        b: f64,
        /// Circle radius
        rho: f64,
        /// Boundary samples for the curvature table and the fits
        samples: usize,
        /// Ball radius for the curvature table
        ball: f64,
        /// Decreasing ball radii for the moment fit, comma separated
        #[arg(value_delimiter = ',')]
        radii: Vec<f64>,
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub output_dir: Option<PathBuf>,
    pub radial: Option<RadialOpts>,
    pub counterexample: Option<CounterexampleOpts>,
    pub heatsim: Option<HeatsimOpts>,
    pub asymptotics: Option<AsymptoticsOpts>,
    pub laplace: Option<LaplaceOpts>,
    pub geometry: Option<GeometryOpts>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }
}

pub fn need<T: Clone>(v: &Option<T>, flag: &'static str) -> Result<T, CliError> {
    v.clone().ok_or(CliError::MissingFlag(flag))
}
