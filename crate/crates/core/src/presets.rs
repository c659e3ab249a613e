//! Checked-in case-study presets, embedded at compile time.

use crate::config::{merge_toml, RunConfig};

pub const TABLE1: &str = include_str!("../../../presets/table1.toml");
pub const TIMELINE: &str = include_str!("../../../presets/timeline.toml");
pub const STRATEGIES: [&str; 6] = [
    include_str!("../../../presets/strategies/strategy-1.toml"),
    include_str!("../../../presets/strategies/strategy-2.toml"),
    include_str!("../../../presets/strategies/strategy-3.toml"),
    include_str!("../../../presets/strategies/strategy-4.toml"),
    include_str!("../../../presets/strategies/strategy-5.toml"),
    include_str!("../../../presets/strategies/strategy-6.toml"),
];

fn layered(texts: &[&str]) -> RunConfig {
    let mut merged = toml::Value::Table(Default::default());
    for t in texts {
        merge_toml(&mut merged, toml::from_str(t).expect("preset is valid TOML"));
    }
    merged.try_into().expect("preset matches the schema")
}

/// Four-DG case-study network with the base-case controller.
pub fn table1() -> RunConfig {
    layered(&[TABLE1])
}

/// Case study plus the full event timeline.
pub fn table1_timeline() -> RunConfig {
    layered(&[TABLE1, TIMELINE])
}

/// Case study plus the overlay for catalogue strategy `id` (1..=6).
pub fn table1_strategy(id: usize) -> RunConfig {
    layered(&[TABLE1, STRATEGIES[id - 1]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse() {
        let t = table1_timeline();
        assert_eq!(t.events.len(), 15);
        assert_eq!(t.simulation.t_end, 180.0);
        for id in 1..=6 {
            let c = table1_strategy(id);
            assert_eq!(c.strategy.unwrap().id, Some(id));
        }
    }
}
