//! Surface triangulations of open books and periodic tetrahedral meshes of
//! their fattenings.

pub mod cross_section;
pub mod delaunay;
pub mod extrude;
pub mod surface;
pub mod vtk;

pub use cross_section::{build_cross_section, exact_cross_section_area, CrossSectionMesh, Region};
pub use delaunay::{mesh_polygon, PlanarMesh};
pub use extrude::{extrude_closed, extrude_periodic, rectangle_cross_section, TetMesh};
pub use surface::{mesh_rectangle, mesh_surface, SurfaceMesh};
pub use vtk::{write_surface_vtk, write_tet_vtk};
