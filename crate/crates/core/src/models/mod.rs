//! Models expressed as local and global conditional updates.

pub mod blasso;
pub mod dpmm;
pub mod lda;
pub mod scripted;
