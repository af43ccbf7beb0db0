pub mod cli;
pub mod ctcr_map;
pub mod dde_sim;
pub mod factorization;
pub mod linalg;
pub mod poly;
pub mod qpr_roots;
pub mod scheduler;
pub mod sds_curves;
pub mod svg;
pub mod topology;
