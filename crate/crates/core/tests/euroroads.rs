//! Published Euroroads statistics. The dataset is not bundled; set
//! `CFCM_EUROROADS` to its edge list to run these checks.

mod common;

use cfcm::graph::{diameter, largest_connected_component, load_edge_list, DiameterMode, LoadOptions};
use cfcm::schur::select_root_set;

fn euroroads() -> Option<cfcm::Graph> {
    let Some(path) = common::euroroads_path() else {
        eprintln!("CFCM_EUROROADS not set; skipping");
        return None;
    };
    let g = load_edge_list(path, LoadOptions::default()).unwrap();
    Some(largest_connected_component(&g))
}

#[test]
fn size_after_lcc() {
    if let Some(g) = euroroads() {
        assert_eq!((g.n(), g.m()), (1039, 1305));
    }
}

#[test]
fn diameter_is_62() {
    if let Some(g) = euroroads() {
        assert_eq!(diameter(&g, DiameterMode::Exact).unwrap(), 62);
        assert_eq!(diameter(&g, DiameterMode::default()).unwrap(), 62);
    }
}

#[test]
fn schur_root_set_has_seven_nodes() {
    if let Some(g) = euroroads() {
        assert_eq!(select_root_set(&g).len(), 7);
    }
}
