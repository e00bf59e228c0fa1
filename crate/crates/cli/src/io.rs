//! CSV ingestion and export in the `R,A,Y,V,W` schema.
//!
//! `R` is 1 for target (clinic) rows and 2 for trial rows; `A` and `Y` are
//! left empty for target rows. When populations come from separate files
//! the `R` column may be omitted and is inferred.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;
use transport_core::{Observation, Population, StudyDataset};

use crate::error::CliError;

#[derive(Debug, Deserialize)]
struct RawRow {
    #[serde(rename = "R", default)]
    r: Option<String>,
    #[serde(rename = "A", default)]
    a: Option<String>,
    #[serde(rename = "Y", default)]
    y: Option<String>,
    #[serde(rename = "V")]
    v: String,
    #[serde(rename = "W")]
    w: String,
}

fn field<'a>(raw: &'a Option<String>) -> Option<&'a str> {
    raw.as_deref().map(str::trim).filter(|s| !s.is_empty())
}

fn binary(name: &str, value: &str) -> Result<bool, String> {
    match value.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("{name} must be 0 or 1, got `{other}`")),
    }
}

fn parse_row(raw: &RawRow, expected: Option<Population>) -> Result<Observation, String> {
    let population = match (field(&raw.r), expected) {
        (Some(code), expected) => {
            let p = code
                .parse::<u8>()
                .ok()
                .and_then(Population::from_code)
                .ok_or_else(|| format!("R must be 1 (target) or 2 (trial), got `{code}`"))?;
            if let Some(e) = expected {
                if e != p {
                    return Err(format!("R = {code} in a file of {} rows", population_name(e)));
                }
            }
            p
        }
        (None, Some(e)) => e,
        (None, None) => return Err("missing R".into()),
    };
    let age: f64 = raw
        .v
        .trim()
        .parse()
        .map_err(|_| format!("V must be numeric, got `{}`", raw.v.trim()))?;
    if !age.is_finite() {
        return Err(format!("V must be finite, got `{}`", raw.v.trim()));
    }
    let female = binary("W", &raw.w)?;
    let a = field(&raw.a).map(|s| binary("A", s)).transpose()?;
    let y = field(&raw.y).map(|s| binary("Y", s)).transpose()?;
    Ok(Observation {
        population,
        treatment: a,
        outcome: y,
        age,
        female,
    })
}

fn population_name(p: Population) -> &'static str {
    match p {
        Population::Target => "target",
        Population::Trial => "trial",
    }
}

/// Reads rows from any CSV source; `source` names it in error messages.
pub fn read_rows<R: Read>(
    reader: R,
    source: &str,
    expected: Option<Population>,
) -> Result<Vec<Observation>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut rows = Vec::new();
    for result in rdr.deserialize::<RawRow>() {
        let raw = result.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::Data(format!("{source}: line {line}: {}", csv_message(&e)))
        })?;
        let line = rows.len() + 2;
        let obs = parse_row(&raw, expected)
            .map_err(|msg| CliError::Data(format!("{source}: line {line}: {msg}")))?;
        rows.push(obs);
    }
    Ok(rows)
}

fn csv_message(e: &csv::Error) -> String {
    match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    }
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Loads a combined file, or separate trial and target files.
pub fn load_dataset(
    data: Option<&Path>,
    trial: Option<&Path>,
    target: Option<&Path>,
) -> Result<StudyDataset, CliError> {
    let rows = match (data, trial, target) {
        (Some(d), None, None) => read_rows(open(d)?, &d.display().to_string(), None)?,
        (None, Some(tr), Some(tg)) => {
            let mut rows = read_rows(open(tg)?, &tg.display().to_string(), Some(Population::Target))?;
            rows.extend(read_rows(open(tr)?, &tr.display().to_string(), Some(Population::Trial))?);
            rows
        }
        _ => {
            return Err(CliError::Usage(
                "provide either --data, or both --trial and --target".into(),
            ))
        }
    };
    StudyDataset::new(rows).map_err(|e| CliError::Data(e.to_string()))
}

/// Writes rows in the input schema.
pub fn write_rows<W: Write>(writer: W, rows: &[Observation]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| CliError::Io(e.to_string());
    w.write_record(["R", "A", "Y", "V", "W"]).map_err(io)?;
    let bit = |b: Option<bool>| b.map_or(String::new(), |b| u8::from(b).to_string());
    for r in rows {
        w.write_record([
            r.population.code().to_string(),
            bit(r.treatment),
            bit(r.outcome),
            r.age.to_string(),
            u8::from(r.female).to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_combined_file() {
        let text = "R,A,Y,V,W\n1,,,22,1\n2,1,0,27,0\n";
        let rows = read_rows(text.as_bytes(), "x", None).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].is_target() && rows[0].female && rows[0].treatment.is_none());
        assert_eq!(rows[1].treatment, Some(true));
        assert_eq!(rows[1].outcome, Some(false));
    }

    #[test]
    fn infers_population_without_r() {
        let rows = read_rows("A,Y,V,W\n1,1,20,0\n".as_bytes(), "t", Some(Population::Trial)).unwrap();
        assert!(rows[0].is_trial());
    }

    #[test]
    fn reports_line_numbers() {
        let text = "R,A,Y,V,W\n1,,,22,1\n2,1,0,abc,0\n";
        let e = read_rows(text.as_bytes(), "f.csv", None).unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
        let text = "R,A,Y,V,W\n1,,,22,1\n1,,,23,1\n3,1,0,20,0\n";
        let e = read_rows(text.as_bytes(), "f.csv", None).unwrap_err();
        assert!(e.to_string().contains("line 4"), "{e}");
        let text = "R,A,Y,V,W\n2,1,0,20,2\n";
        assert!(read_rows(text.as_bytes(), "f", None).is_err());
        let text = "R,A,Y,V,W\n2,1,0\n";
        let e = read_rows(text.as_bytes(), "f", None).unwrap_err();
        assert!(e.to_string().contains("line 2"), "{e}");
    }

    #[test]
    fn round_trips() {
        let rows = vec![Observation::target(22.0, true), Observation::trial(false, true, 19.0, false)];
        let mut buf = Vec::new();
        write_rows(&mut buf, &rows).unwrap();
        assert_eq!(read_rows(buf.as_slice(), "b", None).unwrap(), rows);
    }
}
