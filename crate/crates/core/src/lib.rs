pub mod cell;
pub mod homology;
pub mod system;
pub mod cascade;
pub mod oracle;
pub mod circle;
pub mod error;
pub mod io;
pub mod report;

pub use error::Error;
pub type Result<T> = std::result::Result<T, Error>;
