//! Network statistics: structural summary, communities and power-law fits.

pub mod louvain;
pub mod powerlaw;
pub mod structural;

pub use louvain::{louvain_communities, modularity, CommunityPartition};
pub use powerlaw::{fit_power_law, hurwitz_zeta, PowerLawFit, PowerLawOptions, ScanPoint};
pub use structural::{
    degree_assortativity, is_acyclic, reciprocity, structural_summary, structural_summary_with,
    AssortativityFlavor, PathMode, StatsOptions, StructuralStats,
};
