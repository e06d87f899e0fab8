//! Relevance propagation, activation patterns and feature export.

pub mod features;
pub mod lrp;
pub mod patterns;

pub use features::{export_features, FeatureMatrix, FeatureStage};
pub use lrp::{epsilon_rule, lrp, relevance_spectrum, RelevanceMap, DEFAULT_EPSILON};
pub use patterns::{activation_patterns, haufe_patterns, normalize_unit_range, ActivationPattern, PatternMode};

/// Relevance map as CSV: one row per channel, one column per sample.
pub fn relevance_csv(map: &RelevanceMap, channel_names: &[String]) -> String {
    let [c, t, _] = map.relevance.shape();
    let mut out = String::from("channel");
    for ti in 0..t {
        out.push_str(&format!(",t{ti}"));
    }
    out.push('\n');
    for ci in 0..c {
        out.push_str(channel_names.get(ci).map_or(&ci.to_string(), |s| s));
        for ti in 0..t {
            out.push(',');
            out.push_str(&map.relevance.get(ci, ti, 0).to_string());
        }
        out.push('\n');
    }
    out
}

/// Patterns of one branch as CSV: one row per channel, a normalised and a
/// raw column per filter.
pub fn patterns_csv(patterns: &[ActivationPattern], channel_names: &[String]) -> String {
    let n_c = patterns.first().map_or(channel_names.len(), |p| p.raw.len());
    let mut out = String::from("channel");
    for p in patterns {
        out.push_str(&format!(",in{}_out{},in{}_out{}_raw", p.in_map, p.out_map, p.in_map, p.out_map));
    }
    out.push('\n');
    for c in 0..n_c {
        out.push_str(channel_names.get(c).map_or(&c.to_string(), |s| s));
        for p in patterns {
            out.push_str(&format!(",{},{}", p.normalized[c], p.raw[c]));
        }
        out.push('\n');
    }
    out
}

/// Two-column `freq_hz,<value_name>` CSV.
pub fn spectrum_csv(freqs: &[f64], values: &[f64], value_name: &str) -> String {
    let mut out = format!("freq_hz,{value_name}\n");
    for (f, v) in freqs.iter().zip(values) {
        out.push_str(&format!("{f},{v}\n"));
    }
    out
}
