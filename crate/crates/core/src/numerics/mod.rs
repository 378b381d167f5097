pub mod dopri;
pub mod fit;
pub mod gauss;
pub mod interp;
pub mod mesh;

pub use dopri::Dopri;
pub use gauss::GaussRule;
pub use interp::MonotoneCubic;
pub use mesh::{Cell, CellMap, Mesh, MeshValue};
