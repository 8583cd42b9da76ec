//! Relative pose between two images of the same object under extreme
//! viewpoint change.
//!
//! Both images are warped to object-centric virtual cameras. A view
//! generator synthesizes posed views of the object from the first image, the
//! second image is matched against them, and the selected object pose is
//! composed back into a camera-to-camera transform.

pub mod eval;
pub mod geom;
pub mod graph;
pub mod imgproc;
pub mod matching;
pub mod orient;
pub mod synth;
pub mod viewgen;
pub mod viewsphere;

pub use geom::{CameraIntrinsics, GeomError, Homography, RigidTransform, SphericalViewpoint, SquareRoi, VirtualView};
pub use matching::{estimate_pair, PairEstimate, PipelineConfig};
pub use orient::{OrientationHypothesis, SearchSchedule};
pub use viewgen::{GeneratedViewSet, GeneratorFailure, ViewDelta, ViewGenerator, ViewRequest};
pub use viewsphere::ViewpointSet;
