//! The JSON instance format and its 17-digit writer.

use std::path::Path;

use nalgebra::DMatrix;
use rdo_core::{validate_instance, RawInstance, RdoInstance};
use serde::Deserialize;

use crate::error::{CliError, CliResult, Location};

type Rows = Vec<Vec<f64>>;

/// One instance per document: `c`, `A`, `b` and exactly one of `G`/`Gs`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(default)]
    pub name: Option<String>,
    pub c: Vec<f64>,
    #[serde(rename = "A")]
    pub a: Rows,
    pub b: Vec<f64>,
    #[serde(rename = "G", default)]
    pub g: Option<Rows>,
    #[serde(rename = "Gs", default)]
    pub gs: Option<Vec<Rows>>,
    #[serde(default)]
    pub rho_star: Option<f64>,
}

impl InstanceFile {
    pub fn parse_str(text: &str, origin: &str) -> CliResult<Self> {
        let file: InstanceFile = serde_json::from_str(text).map_err(|e| CliError::Parse {
            origin: origin.to_string(),
            location: Location::At { line: e.line(), column: e.column() },
            message: e.to_string(),
        })?;
        match (&file.g, &file.gs) {
            (Some(_), Some(_)) => Err(key_error(origin, "Gs", "\"G\" and \"Gs\" are mutually exclusive")),
            (None, None) => Err(key_error(origin, "G", "one of \"G\" or \"Gs\" is required")),
            (None, Some(gs)) if gs.is_empty() => Err(key_error(origin, "Gs", "needs at least one matrix")),
            _ => Ok(file),
        }
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })?;
        Self::parse_str(&text, &path.display().to_string())
    }

    pub fn raw(&self) -> RawInstance {
        let gs = match (&self.g, &self.gs) {
            (Some(g), _) => vec![g.clone()],
            (None, Some(gs)) => gs.clone(),
            (None, None) => Vec::new(),
        };
        RawInstance { c: self.c.clone(), a: self.a.clone(), b: self.b.clone(), gs }
    }

    pub fn instance(&self) -> CliResult<RdoInstance> {
        Ok(validate_instance(&self.raw())?)
    }

    /// Uses `G` for a single generator and `Gs` otherwise.
    pub fn from_instance(inst: &RdoInstance, name: Option<String>) -> Self {
        let mats: Vec<Rows> = inst.dynamics.matrices().iter().map(rows_of).collect();
        let (g, gs) = if mats.len() == 1 { (mats.into_iter().next(), None) } else { (None, Some(mats)) };
        InstanceFile {
            name,
            c: inst.c.iter().copied().collect(),
            a: rows_of(inst.polytope.a()),
            b: inst.polytope.b().iter().copied().collect(),
            g,
            gs,
            rho_star: None,
        }
    }

    /// Pretty JSON with every number written as `%.17g`.
    pub fn emit(&self) -> String {
        let mut out = String::from("{\n");
        let mut fields = Vec::new();
        if let Some(name) = &self.name {
            fields.push(format!("  \"name\": {}", serde_json::to_string(name).expect("string")));
        }
        fields.push(format!("  \"c\": {}", vector(&self.c)));
        fields.push(format!("  \"A\": {}", matrix(&self.a, "  ")));
        fields.push(format!("  \"b\": {}", vector(&self.b)));
        if let Some(g) = &self.g {
            fields.push(format!("  \"G\": {}", matrix(g, "  ")));
        }
        if let Some(gs) = &self.gs {
            let ms: Vec<String> = gs.iter().map(|g| format!("    {}", matrix(g, "    "))).collect();
            fields.push(format!("  \"Gs\": [\n{}\n  ]", ms.join(",\n")));
        }
        if let Some(r) = self.rho_star {
            fields.push(format!("  \"rho_star\": {}", fmt_g17(r)));
        }
        out.push_str(&fields.join(",\n"));
        out.push_str("\n}\n");
        out
    }
}

fn key_error(origin: &str, key: &str, message: &str) -> CliError {
    CliError::Parse { origin: origin.to_string(), location: Location::Key(key.to_string()), message: message.to_string() }
}

fn rows_of(m: &DMatrix<f64>) -> Rows {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn vector(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| fmt_g17(x)).collect();
    format!("[{}]", items.join(", "))
}

fn matrix(rows: &Rows, indent: &str) -> String {
    if rows.is_empty() {
        return "[]".into();
    }
    let lines: Vec<String> = rows.iter().map(|r| format!("{indent}  {}", vector(r))).collect();
    format!("[\n{}\n{indent}]", lines.join(",\n"))
}

/// Reads and validates an instance file.
pub fn parse_instance(path: &Path) -> CliResult<RdoInstance> {
    InstanceFile::read(path)?.instance()
}

/// C's `%.17g`: 17 significant digits, trailing zeros removed, exponent
/// form outside `[1e-4, 1e17)`. Finite input round-trips exactly.
pub fn fmt_g17(x: f64) -> String {
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let sci = format!("{x:.16e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("exponent digits");
    if (-4..17).contains(&exp) {
        trim_zeros(&format!("{:.*}", (16 - exp) as usize, x))
    } else {
        format!("{}e{}{:02}", trim_zeros(mant), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEXAGON: &str = r#"{
        "name": "hexagon",
        "c": [-1, 0],
        "A": [[-1, 0], [0, -1], [0, 1], [1, 1]],
        "b": [1, 1, 1, 3],
        "G": [[0.6, -0.4], [0.8, 0.5]]
    }"#;

    #[test]
    fn g17_matches_printf() {
        // expected strings from printf("%.17g")
        let cases = [
            (0.1, "0.10000000000000001"),
            (1.0, "1"),
            (-2.5, "-2.5"),
            (1e-5, "1.0000000000000001e-05"),
            (123456789.0, "123456789"),
            (1e17, "1e+17"),
            (0.8 * (std::f64::consts::PI / 6.0).cos(), "0.69282032302755103"),
            (1e-4, "0.0001"),
            (-0.0, "-0"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_g17(x), want, "{x:e}");
        }
    }

    #[test]
    fn parses_single_matrix_file() {
        let f = InstanceFile::parse_str(HEXAGON, "mem").unwrap();
        let inst = f.instance().unwrap();
        assert_eq!((inst.polytope.rows(), inst.n(), inst.s()), (4, 2, 1));
        assert_eq!(f.name.as_deref(), Some("hexagon"));
    }

    #[test]
    fn rejects_both_generators() {
        let text = HEXAGON.replace("\"G\":", "\"Gs\": [[[1, 0], [0, 1]]], \"G\":");
        let err = InstanceFile::parse_str(&text, "mem").unwrap_err();
        assert!(matches!(err, CliError::Parse { location: Location::Key(ref k), .. } if k == "Gs"));
    }

    #[test]
    fn rejects_unknown_keys_with_position() {
        let text = HEXAGON.replace("\"name\"", "\"title\"");
        match InstanceFile::parse_str(&text, "mem").unwrap_err() {
            CliError::Parse { location: Location::At { line, .. }, message, .. } => {
                assert_eq!(line, 2);
                assert!(message.contains("title"));
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn ragged_matrix_is_a_validation_error() {
        let text = HEXAGON.replace("[0.8, 0.5]", "[0.8]");
        let f = InstanceFile::parse_str(&text, "mem").unwrap();
        assert!(matches!(f.instance(), Err(CliError::Core(rdo_core::RdoError::Validation(_)))));
    }

    #[test]
    fn emit_round_trips() {
        let f = InstanceFile::parse_str(HEXAGON, "mem").unwrap();
        let again = InstanceFile::parse_str(&f.emit(), "emitted").unwrap();
        assert_eq!(f, again);
    }
}
