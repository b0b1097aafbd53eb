//! Grain size measurement from instance-labeled micrograph masks.
//!
//! The core measurement is the Jeffries planimetric count: a test circle is
//! grown from the image center until it fully contains a target number of
//! grains, grains are classified as inside or intercepted, and the counts are
//! converted to grains per mm² at 1× and to a grain size number `G` using the
//! circle's physical area.
//!
//! ```
//! use grainsize::{jeffries, LabelMask, Calibration};
//!
//! // 4×4 grid of 16×16 grains on a 64×64 canvas.
//! let mask = LabelMask::from_fn(64, 64, |x, y| (1 + (y / 16) * 4 + x / 16) as u16);
//! let r = jeffries::analyze(&mask, Calibration::default(), 4, None).unwrap();
//! assert!(r.n_inside >= 4);
//! assert!(r.g.unwrap().is_finite());
//! ```
//!
//! Supporting modules cover mask I/O ([`io`]), conversion of edge-style
//! annotations into label masks ([`prep`]), patch reassembly ([`stitch`]),
//! segmentation metrics ([`eval`]) and synthetic Voronoi fields with known
//! density ([`synth`]).

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod jeffries;
pub mod mask;
pub mod overlay;
pub mod prep;
pub mod stitch;
pub mod synth;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use eval::CircleMode;
pub use jeffries::{JeffriesResult, Point, TestCircle};
pub use mask::{Calibration, LabelMask};
