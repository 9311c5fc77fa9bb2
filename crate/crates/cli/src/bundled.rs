//! System files shipped with the binary.

pub const EXAMPLE_5_9: &str = include_str!("../systems/example_5_9.toml");
pub const EXAMPLE_7_12: &str = include_str!("../systems/example_7_12.toml");
pub const EXAMPLE_7_13: &str = include_str!("../systems/example_7_13.toml");
pub const EXAMPLE_7_14: &str = include_str!("../systems/example_7_14.toml");
pub const LINEAR_CENTER: &str = include_str!("../systems/linear_center.toml");

/// Bundled file for an example id such as `"7.12"`.
pub fn example(id: &str) -> Option<&'static str> {
    match id {
        "5.9" => Some(EXAMPLE_5_9),
        "7.12" => Some(EXAMPLE_7_12),
        "7.13" => Some(EXAMPLE_7_13),
        "7.14" => Some(EXAMPLE_7_14),
        "linear" => Some(LINEAR_CENTER),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system_file::SystemFile;
    use affctl_core::catalog;

    #[test]
    fn bundled_files_match_the_catalog() {
        let pairs = [
            (EXAMPLE_5_9, catalog::example_5_9()),
            (EXAMPLE_7_12, catalog::example_7_12()),
            (EXAMPLE_7_13, catalog::example_7_13(0.05)),
            (EXAMPLE_7_14, catalog::example_7_14(1.1, 0.5)),
            (LINEAR_CENTER, catalog::linear_center()),
        ];
        for (text, sys) in pairs {
            let parsed = SystemFile::parse(text).unwrap().to_system();
            assert_eq!(parsed, sys);
        }
    }

    #[test]
    fn bundled_files_round_trip() {
        for id in ["5.9", "7.12", "7.13", "7.14", "linear"] {
            let f = SystemFile::parse(example(id).unwrap()).unwrap();
            assert_eq!(SystemFile::parse(&f.to_toml()).unwrap(), f);
        }
    }
}
