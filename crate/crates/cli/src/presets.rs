pub const NAMES: [&str; 7] = ["fig2a", "fig2b", "fig2b_mirror", "fig3", "fig4a", "fig4b", "fig5"];

pub fn get(name: &str) -> Option<&'static str> {
    Some(match name {
        "fig2a" => include_str!("../presets/fig2a.json"),
        "fig2b" => include_str!("../presets/fig2b.json"),
        "fig2b_mirror" => include_str!("../presets/fig2b_mirror.json"),
        "fig3" => include_str!("../presets/fig3.json"),
        "fig4a" => include_str!("../presets/fig4a.json"),
        "fig4b" => include_str!("../presets/fig4b.json"),
        "fig5" => include_str!("../presets/fig5.json"),
        _ => return None,
    })
}
