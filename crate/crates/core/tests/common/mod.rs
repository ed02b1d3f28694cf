#![allow(dead_code)]
pub mod shooting;
