//! Fixtures shared by the benchmarks.

use dcgrid::{apply_strategy, presets, Microgrid, TuningStrategy};

/// Table-I microgrid, optionally tuned with a catalogue strategy.
pub fn table1(strategy: Option<usize>) -> Microgrid {
    let mg = Microgrid::from_config(&presets::table1()).expect("preset is valid");
    match strategy {
        Some(id) => apply_strategy(&mg, &TuningStrategy::catalog(id).expect("known id")).expect("preset is valid"),
        None => mg,
    }
}
