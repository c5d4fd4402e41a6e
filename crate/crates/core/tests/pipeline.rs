use std::collections::BTreeSet;

use graft_core::evalkit::{baseline_dt, baseline_nt, baseline_rw_dcm, score};
use graft_core::hetgraph::{parse_graph, read_graph, write_graph};
use graft_core::synthbench::{generate, write_instance, SynthSpec, PARTIAL_FILE, SOURCE_FILE, TRUTH_FILE};
use graft_core::transfer::{acret_transfer, TransferConfig};

fn small() -> SynthSpec {
    SynthSpec {
        n_source: 160,
        n_target: 90,
        dynamic_factor: 0.05,
        maturity: 0.6,
        seed: 21,
        ..SynthSpec::default()
    }
}

#[test]
fn instance_files_round_trip() {
    let inst = generate(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_instance(&inst, dir.path()).unwrap();
    assert_eq!(read_graph(dir.path().join(SOURCE_FILE)).unwrap(), inst.source);
    assert_eq!(read_graph(dir.path().join(TRUTH_FILE)).unwrap(), inst.truth);
    let partial = read_graph(dir.path().join(PARTIAL_FILE)).unwrap();
    assert_eq!(parse_graph(&partial.to_text()).unwrap(), inst.partial);
}

#[test]
fn transfer_output_extends_the_observed_target() {
    let inst = generate(&small()).unwrap();
    let cfg = TransferConfig { d1: 8, d2: 8, seed: 3, ..TransferConfig::default() };
    let (g, report) = acret_transfer(&inst.source, &inst.partial, &cfg).unwrap();

    let ids: BTreeSet<String> = g.ids().iter().map(|i| i.to_string()).collect();
    let mut expected: BTreeSet<String> = inst.partial.ids().iter().map(|i| i.to_string()).collect();
    expected.extend(report.selected.iter().map(|s| s.id.clone()));
    assert_eq!(ids, expected);
    assert!(inst.partial.edge_id_pairs().is_subset(&g.edge_id_pairs()));
    assert!((0.0..1.0).contains(&report.mu_used));
    assert_eq!(report.counts.output_edges, g.edge_count());

    let dir = tempfile::tempdir().unwrap();
    write_graph(&g, dir.path().join("g.graph")).unwrap();
    assert_eq!(read_graph(dir.path().join("g.graph")).unwrap(), g);
}

#[test]
fn every_method_scores_within_bounds() {
    let inst = generate(&small()).unwrap();
    let cfg = TransferConfig { d1: 8, d2: 8, ..TransferConfig::default() };
    let estimates = [
        baseline_nt(&inst.partial),
        baseline_dt(&inst.source, &inst.partial).unwrap(),
        baseline_rw_dcm(&inst.source, &inst.partial, &cfg).unwrap(),
        acret_transfer(&inst.source, &inst.partial, &cfg).unwrap().0,
    ];
    for g in &estimates {
        let r = score(g, &inst.truth);
        for v in [r.entity_f1, r.edge_f1, r.combined_f1] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!(r.entity_precision, {
            let truth: BTreeSet<_> = inst.truth.ids().iter().collect();
            g.ids().iter().filter(|i| truth.contains(i)).count() as f64 / g.len() as f64
        });
    }
    assert_eq!(score(&estimates[1], &inst.truth).entity_recall, 1.0);
}
