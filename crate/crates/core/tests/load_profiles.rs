use gridsleuth_core::feeder::fixtures::ieee13_like;
use gridsleuth_core::loads::{
    peak_to_average, ieee13_allocation, HouseholdModel, NodeDemand,
};

/// Median node-level peak-to-average ratio of the shipped defaults over a
/// 20000-slot horizon.
#[test]
fn node_par_of_defaults_is_in_band() {
    let f = ieee13_like();
    let alloc = ieee13_allocation();
    for master in [1u64, 2, 3] {
        let m = HouseholdModel::residential(master);
        let mut pars: Vec<f64> = alloc
            .node_counts(&f)
            .unwrap()
            .into_iter()
            .map(|(j, n)| peak_to_average(NodeDemand::new(&m, j, 0, n).unwrap().take(20_000)))
            .collect();
        pars.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = 0.5 * (pars[12] + pars[13]);
        assert!((1.1..=1.6).contains(&median), "master {master}: median PAR {median}");
    }
}
