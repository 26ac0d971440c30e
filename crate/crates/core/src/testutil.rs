//! Hand-built scenarios shared by unit tests.

use crate::radio::{psd_from_power, Group, Point, Scenario, Station, StationClass};

/// Two co-located 46 dBm stations (both macros) serving one group through the given gains.
pub(crate) fn two_station(noise_dbm: f64, gain: [[f64; 1]; 2]) -> Scenario {
    let psd = psd_from_power(46.0, 10e6);
    let stations = (0..2)
        .map(|id| Station {
            id,
            class: StationClass::Macro,
            position: Point::new(0.0, 0.0),
            tx_psd_dbm_per_hz: psd,
        })
        .collect();
    let groups = vec![Group {
        id: 0,
        position: Point::new(100.0, 0.0),
        noise_psd_dbm_per_hz: noise_dbm,
    }];
    Scenario::new(
        100.0,
        100.0,
        stations,
        groups,
        10e6,
        0.5e6,
        Some(30.0),
        Some(gain.iter().map(|r| r.to_vec()).collect()),
    )
    .unwrap()
}

/// One macro and one pico serving `k` groups, gains in linear units `[station][group]`.
pub(crate) fn macro_pico(gains: Vec<Vec<f64>>) -> Scenario {
    let k = gains[0].len();
    let stations = vec![
        Station {
            id: 0,
            class: StationClass::Macro,
            position: Point::new(0.0, 0.0),
            tx_psd_dbm_per_hz: psd_from_power(46.0, 10e6),
        },
        Station {
            id: 1,
            class: StationClass::Pico,
            position: Point::new(50.0, 0.0),
            tx_psd_dbm_per_hz: psd_from_power(30.0, 10e6),
        },
    ];
    let groups = (0..k)
        .map(|id| Group {
            id,
            position: Point::new(25.0 * id as f64, 10.0),
            noise_psd_dbm_per_hz: -174.0,
        })
        .collect();
    Scenario::new(200.0, 200.0, stations, groups, 10e6, 0.5e6, Some(30.0), Some(gains)).unwrap()
}

/// A single macro serving one group through `gain`.
pub(crate) fn one_macro(gain: f64) -> Scenario {
    let stations = vec![Station {
        id: 0,
        class: StationClass::Macro,
        position: Point::new(0.0, 0.0),
        tx_psd_dbm_per_hz: psd_from_power(46.0, 10e6),
    }];
    let groups = vec![Group {
        id: 0,
        position: Point::new(100.0, 0.0),
        noise_psd_dbm_per_hz: -174.0,
    }];
    Scenario::new(100.0, 100.0, stations, groups, 10e6, 0.5e6, Some(30.0), Some(vec![vec![gain]])).unwrap()
}
