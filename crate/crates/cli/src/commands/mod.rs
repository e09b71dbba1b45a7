pub mod classify;
pub mod convert;
pub mod eval;
pub mod fewshot;
pub mod project;
pub mod reproduce;
pub mod synth;
pub mod zeroshot;
