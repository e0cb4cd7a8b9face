use mpcforest_core::audit::{audit_ledger, audit_memory, audit_property24, verify_coloring, verify_solution};
use mpcforest_core::graph::{gen_forest_union, gen_hub_union, gen_random_tree};
use mpcforest_core::pipeline::{run_pipelined, run_unpipelined, RunOptions};
use mpcforest_core::treecolor::{four_color_tree, ColorOptions, TreeColorError};
use mpcforest_core::{Graph, Mode, SimConfig};
use proptest::prelude::*;

fn sim(g: &Graph, delta: f64, seed: u64) -> SimConfig {
    SimConfig::new(g.n() as u64, g.m() as u64, delta, seed).unwrap()
}

#[test]
fn same_config_same_ledger_and_trace() {
    let g = gen_hub_union(2048, 2, 5);
    let c = sim(&g, 0.8, 5).with_low_degree_threshold(Some(4)).with_s_param(20).unwrap();
    let opts = RunOptions { record_snapshots: true };
    let a = run_pipelined(&g, Mode::Mis, &c, opts).unwrap();
    let b = run_pipelined(&g, Mode::Mis, &c, opts).unwrap();
    assert_eq!(a.ledger, b.ledger);
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.solution, b.solution);
    let other = run_pipelined(&g, Mode::Mis, &SimConfig { seed: 6, ..c.clone() }, opts).unwrap();
    assert_ne!(a.solution, other.solution);
}

#[test]
fn audits_pass_on_a_phased_run() {
    let g = gen_hub_union(4096, 2, 1);
    let c = sim(&g, 0.8, 1).with_low_degree_threshold(Some(4)).with_s_param(20).unwrap();
    let out = run_pipelined(&g, Mode::Matching, &c, RunOptions { record_snapshots: true }).unwrap();
    assert!(out.schedule.big_l >= 1);
    assert!(verify_solution(&g, &out.solution).passed());
    assert!(audit_property24(&g, &out).unwrap().passed());
    assert!(audit_memory(&g, &out, &c).unwrap().passed());
    assert!(audit_ledger(&out.ledger, &c, g.n(), g.m()).passed());
    // Without snapshots the trace audits refuse to run.
    let bare = run_pipelined(&g, Mode::Matching, &c, RunOptions::default()).unwrap();
    assert!(audit_property24(&g, &bare).is_err());
}

#[test]
fn color4_rejects_cycles_and_colors_forests() {
    let tri = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
    let c = sim(&tri, 0.9, 0);
    assert!(matches!(four_color_tree(&tri, &c, ColorOptions::default()), Err(TreeColorError::NotAForest { .. })));
    let forest = gen_forest_union(3000, 1, 0.7, 2);
    let out = four_color_tree(&forest, &sim(&forest, 0.5, 2), ColorOptions::default()).unwrap();
    assert!(verify_coloring(&forest, &out.colors, 4).passed());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn drivers_agree_and_verify(n in 20usize..400, alpha in 1u32..4, delta in 0.5f64..0.95, seed: u64, mis: bool) {
        let g = gen_forest_union(n, alpha, 1.0, seed);
        let c = sim(&g, delta, seed);
        prop_assume!((g.max_degree() as u64) < c.capacity);
        let mode = if mis { Mode::Mis } else { Mode::Matching };
        let a = run_unpipelined(&g, mode, &c, RunOptions::default()).unwrap();
        let b = run_pipelined(&g, mode, &c, RunOptions::default()).unwrap();
        prop_assert_eq!(&a.solution, &b.solution);
        prop_assert!(verify_solution(&g, &b.solution).passed());
        prop_assert!(b.ledger.within_budget(c.capacity));
    }

    #[test]
    fn trees_get_four_colors(n in 2usize..3000, seed: u64) {
        let g = gen_random_tree(n, seed);
        let c = sim(&g, 0.6, seed);
        prop_assume!((g.max_degree() as u64) < c.capacity);
        let out = four_color_tree(&g, &c, ColorOptions::default()).unwrap();
        prop_assert!(verify_coloring(&g, &out.colors, 4).passed());
        prop_assert!(audit_ledger(&out.ledger, &c, g.n(), g.m()).passed());
    }
}
