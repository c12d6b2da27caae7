#![allow(dead_code)]

pub mod jwt_reference;
pub mod registry_oracle;
