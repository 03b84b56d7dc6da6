//! Resolution of the `<INPUT>` argument.

use std::path::Path;

use wds_sir::io::{self, FormatError, InpOptions, NetworkFile, SirSettings};
use wds_sir::scheduler::CostParams;

use crate::Failure;

pub struct Loaded {
    /// Display name: the bundled name or the path as given.
    pub label: String,
    pub text: String,
    pub inp: bool,
    pub file: NetworkFile,
}

pub enum LoadError {
    Failure(Failure),
    /// Located parse or validation errors of a network file.
    Format(String, FormatError),
}

impl From<LoadError> for Failure {
    fn from(e: LoadError) -> Self {
        match e {
            LoadError::Failure(f) => f,
            LoadError::Format(label, err) => Failure::Error(format!("{label}: {err}")),
        }
    }
}

pub fn load(input: &str) -> Result<Loaded, LoadError> {
    let path = Path::new(input);
    if !path.exists() {
        if let Some(text) = io::bundled_text(input) {
            let file = io::parse_network(text).map_err(|e| LoadError::Format(input.into(), e))?;
            return Ok(Loaded { label: input.into(), text: text.into(), inp: false, file });
        }
        let names: Vec<&str> = io::BUNDLED.iter().map(|(n, _)| *n).collect();
        return Err(LoadError::Failure(Failure::Usage(format!(
            "'{input}' is neither a file nor a bundled network ({})",
            names.join(", ")
        ))));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| LoadError::Failure(Failure::Usage(format!("cannot read '{input}': {e}"))))?;
    let inp = path.extension().is_some_and(|x| x.eq_ignore_ascii_case("inp"));
    if inp {
        let import = io::parse_inp(&text, &InpOptions::default())
            .map_err(|e| LoadError::Failure(Failure::Error(format!("{input}: {e}"))))?;
        for w in &import.warnings {
            eprintln!("warning: {input}: {w}");
        }
        let name = import.title.clone().or_else(|| path.file_stem().map(|s| s.to_string_lossy().into_owned()));
        let file = NetworkFile {
            name,
            description: None,
            network: import.network,
            cost: CostParams::default(),
            sir: SirSettings::default(),
        };
        return Ok(Loaded { label: input.into(), text, inp, file });
    }
    let file = io::parse_network(&text).map_err(|e| LoadError::Format(input.into(), e))?;
    Ok(Loaded { label: input.into(), text, inp, file })
}
