//! Networks shipped with the library.

use super::format::{parse_network, FormatError, NetworkFile};

pub const SYSTEM1: &str = include_str!("../../data/system1.toml");
pub const SYSTEM2: &str = include_str!("../../data/system2.toml");

/// Names accepted wherever a network file path is expected.
pub const BUNDLED: [(&str, &str); 2] = [("system1", SYSTEM1), ("system2", SYSTEM2)];

pub fn bundled_text(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}

pub fn load_bundled(name: &str) -> Option<Result<NetworkFile, FormatError>> {
    bundled_text(name).map(parse_network)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_files_parse() {
        for (name, _) in BUNDLED {
            let f = load_bundled(name).unwrap().unwrap();
            assert_eq!(f.name.as_deref(), Some(name));
            assert_eq!(f.sir.variable_nodes.len(), 3);
        }
        assert!(load_bundled("system3").is_none());
    }
}
