//! File formats and report documents: JSON specs for densities and
//! surfaces, the grid-values exchange format, watertight OBJ export,
//! and the report schema shared by every command.

pub mod formats;
pub mod obj;
pub mod report;
