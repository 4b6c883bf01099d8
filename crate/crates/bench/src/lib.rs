//! Benchmark fixtures shared by the criterion targets.

use cocyclo::{builtin, CatalogueEntry};

/// Catalogue entry by name; panics on unknown names.
pub fn entry(name: &str) -> CatalogueEntry {
    builtin(name).expect("known catalogue entry")
}
