pub mod geom3;
pub mod imageproc;
pub mod labels;
pub mod losses;
