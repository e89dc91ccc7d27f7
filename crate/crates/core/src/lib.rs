pub mod classify;
pub mod conformal;
pub mod conventions;
pub mod expr;
pub mod geometry;
pub mod hypersurface;
pub mod selftest;
pub mod tensor;
pub mod yamabe;
