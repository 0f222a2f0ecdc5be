//! A 13-bus-style unbalanced test feeder with 38 node/phase pairs.
//!
//! Topology and phasing follow the public IEEE 13 node test feeder. Line
//! configurations 601–607 use its published phase impedance and shunt
//! susceptance tables. The regulator is a small series impedance, the
//! in-line transformer is its series impedance referred to 4.16 kV, the
//! 671–692 switch is a jumper, and the distributed load on 632–671 is not
//! modeled. The 632–671 span is split at bus 670 (1/3 and 2/3 of 2000 ft).

use alloc::vec;
use alloc::vec::Vec;

use super::{symmetric_from_upper, Bus, FeederModel, LineSegment, PhaseSet, Shunt, SWITCH_IMPEDANCE};
use crate::numerics::{ComplexMatrix, C64};

/// Identifier of the single-phase lateral used in the trip experiment.
pub const TRIP_LINE: &str = "684-611";

/// Line-to-neutral base voltage, volts (4.16 kV line-to-line).
pub const BASE_VOLTAGE: f64 = 2401.78;

/// Per-phase power base, volt-amperes.
pub const BASE_POWER: f64 = 1e6;

const FEET_PER_MILE: f64 = 5280.0;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Phase impedance (ohm/mile) and shunt susceptance (μS/mile) of a config.
fn config(name: u32) -> (ComplexMatrix, ComplexMatrix) {
    let (n, z, b): (usize, Vec<C64>, Vec<f64>) = match name {
        601 => (
            3,
            vec![
                c(0.3465, 1.0179), c(0.1560, 0.5017), c(0.1580, 0.4236),
                c(0.3375, 1.0478), c(0.1535, 0.3849),
                c(0.3414, 1.0348),
            ],
            vec![6.2998, -1.9958, -1.2595, 5.9597, -0.7417, 5.6386],
        ),
        602 => (
            3,
            vec![
                c(0.7526, 1.1814), c(0.1580, 0.4236), c(0.1560, 0.5017),
                c(0.7475, 1.1983), c(0.1535, 0.3849),
                c(0.7436, 1.2112),
            ],
            vec![5.6990, -1.0817, -1.6905, 5.1795, -0.6588, 5.4246],
        ),
        603 => (
            2,
            vec![c(1.3294, 1.3471), c(0.2066, 0.4591), c(1.3238, 1.3569)],
            vec![4.7097, -0.8999, 4.6658],
        ),
        604 => (
            2,
            vec![c(1.3238, 1.3569), c(0.2066, 0.4591), c(1.3294, 1.3471)],
            vec![4.6658, -0.8999, 4.7097],
        ),
        605 => (1, vec![c(1.3292, 1.3475)], vec![4.5193]),
        606 => (
            3,
            vec![
                c(0.7982, 0.4463), c(0.3192, 0.0328), c(0.2849, -0.0143),
                c(0.7891, 0.4041), c(0.3192, 0.0328),
                c(0.7982, 0.4463),
            ],
            vec![96.8897, 0.0, 0.0, 96.8897, 0.0, 96.8897],
        ),
        607 => (1, vec![c(1.3425, 0.5124)], vec![88.9912]),
        _ => unreachable!("unknown line configuration"),
    };
    let bs: Vec<C64> = b.iter().map(|&x| c(0.0, x * 1e-6)).collect();
    (symmetric_from_upper(n, &z), symmetric_from_upper(n, &bs))
}

fn overhead(from: &str, to: &str, phases: &str, cfg: u32, feet: f64) -> LineSegment {
    let (z, b) = config(cfg);
    let miles = c(feet / FEET_PER_MILE, 0.0);
    LineSegment::new(from, to, PhaseSet::parse(phases).unwrap(), z.scale(miles), b.scale(miles))
}

fn series(from: &str, to: &str, z: C64) -> LineSegment {
    LineSegment::new(
        from,
        to,
        PhaseSet::ABC,
        ComplexMatrix::identity(3).scale(z),
        ComplexMatrix::zeros(3, 3),
    )
}

/// Capacitor bank of `kvar` per phase at the base voltage.
fn capacitor(bus: &str, phases: &str, kvar: f64) -> Shunt {
    let p = PhaseSet::parse(phases).unwrap();
    let b = kvar * 1e3 / (BASE_VOLTAGE * BASE_VOLTAGE);
    Shunt {
        bus: bus.into(),
        phases: p,
        y: ComplexMatrix::identity(p.len()).scale(c(0.0, b)),
    }
}

/// The shipped 13-bus-style fixture.
pub fn ieee13_like() -> FeederModel {
    let bus = |id: &str, ph: &str| Bus {
        id: id.into(),
        phases: PhaseSet::parse(ph).unwrap(),
    };
    let buses = vec![
        bus("650", "abc"),
        bus("rg60", "abc"),
        bus("632", "abc"),
        bus("670", "abc"),
        bus("671", "abc"),
        bus("680", "abc"),
        bus("633", "abc"),
        bus("634", "abc"),
        bus("645", "bc"),
        bus("646", "bc"),
        bus("692", "abc"),
        bus("675", "abc"),
        bus("684", "ac"),
        bus("611", "c"),
        bus("652", "a"),
    ];
    // XFM-1: 500 kVA, 4.16/0.48 kV, 1.1% + j2% on its own base
    let z_xfm = c(0.011, 0.02) * (4160.0 * 4160.0 / 500e3);
    let lines = vec![
        series("650", "rg60", c(0.01, 0.05)),
        overhead("rg60", "632", "abc", 601, 2000.0),
        overhead("632", "670", "abc", 601, 667.0),
        overhead("670", "671", "abc", 601, 1333.0),
        overhead("671", "680", "abc", 601, 1000.0),
        overhead("632", "633", "abc", 602, 500.0),
        series("633", "634", z_xfm),
        overhead("632", "645", "bc", 603, 500.0),
        overhead("645", "646", "bc", 603, 300.0),
        series("671", "692", SWITCH_IMPEDANCE),
        overhead("692", "675", "abc", 606, 500.0),
        overhead("671", "684", "ac", 604, 300.0),
        overhead("684", "611", "c", 605, 300.0),
        overhead("684", "652", "a", 607, 800.0),
    ];
    let shunts = vec![capacitor("675", "abc", 200.0), capacitor("611", "c", 100.0)];
    FeederModel {
        buses,
        lines,
        shunts,
        slack_bus: "650".into(),
        base_voltage: BASE_VOLTAGE,
        base_power: BASE_POWER,
    }
}
