//! Low-rank pipeline on the 13-bus fixture, noiseless, K=500.

use gridsleuth_core::feeder::assemble_ybus;
use gridsleuth_core::feeder::fixtures::ieee13_like;
use gridsleuth_core::ident::{compute_c, estimate_yx, identify, IdentSettings};
use gridsleuth_core::loads::{ieee13_allocation, DemandStream, HouseholdModel};
use gridsleuth_core::numerics::norm1;
use gridsleuth_core::simulator::{
    balanced_slack, FixedSlack, NoiseModel, PhasorWindow, PowerFlowSettings, ScenarioRunner,
};

#[test]
fn pipeline_stages_are_consistent_on_fixture() {
    let f = ieee13_like();
    let demand =
        DemandStream::new(&f, &ieee13_allocation(), &HouseholdModel::residential(1), 0.95).unwrap();
    let runner = ScenarioRunner::new(
        f.clone(),
        demand,
        FixedSlack(balanced_slack(f.base_voltage)),
        NoiseModel::noiseless(),
        vec![],
        500,
        PowerFlowSettings::default(),
    )
    .unwrap();
    let y_true = assemble_ybus(&f).unwrap();
    let snaps: Vec<_> = runner.map(Result::unwrap).collect();
    let w = PhasorWindow::from_snapshots(&snaps).unwrap();
    let m = identify(&w.v, &w.i, &IdentSettings::default()).unwrap();
    let p = &m.partition;

    assert!(p.rank < f.node_count());
    // dependent rows: unloaded nodes plus the two slack phases fixed relative to phase a
    let mut expected: Vec<usize> = Vec::new();
    for bus in ["rg60", "670", "692"] {
        expected.extend(y_true.bus_indices(bus).unwrap());
    }
    let slack = y_true.bus_indices(&f.slack_bus).unwrap();
    expected.extend(&slack[1..]);
    expected.sort_unstable();
    assert_eq!(p.dep_rows, expected);

    assert!(m.residuals.basis < 1e-8, "{:?}", m.residuals);
    assert!(m.residuals.y_x < 1e-8, "{:?}", m.residuals);
    assert!(m.residuals.sparse_constraint < 1e-6, "{:?}", m.residuals);

    // oracle for C: the true blocks pushed through the estimated basis
    let y11t = y_true.y.submatrix(&p.dep_rows, &p.dep_rows);
    let y22t = y_true.y.submatrix(&p.ind_rows, &p.ind_rows);
    let c_truth = &y22t - &(&m.x.transpose() * &(&y11t * &m.x));
    let y_x = estimate_yx(&w.v, &w.i, p).unwrap();
    let c = compute_c(&y_x, p, &m.x).unwrap();
    assert!(c.max_abs_diff(&c_truth) <= 1e-6 * c_truth.max_abs());

    // the truth is feasible, so the ℓ1 minimizer can be no larger
    let l1_truth = norm1(y11t.as_slice()) + norm1(y22t.as_slice());
    let l1_rec = norm1(m.y11.as_slice()) + norm1(m.y22.as_slice());
    assert!(l1_rec <= l1_truth * (1.0 + 1e-6), "{l1_rec} > {l1_truth}");
}
