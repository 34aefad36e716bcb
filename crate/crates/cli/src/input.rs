//! Study files: a `study_id,y,s` header, one study per row, `#` comments.

use std::collections::HashSet;
use std::path::Path;

use copas_core::{Dataset, Study};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct StudyRecord {
    pub study_id: String,
    pub y: f64,
    pub s: f64,
}

pub struct Input {
    pub records: Vec<StudyRecord>,
    pub data: Dataset,
}

const HEADER: [&str; 3] = ["study_id", "y", "s"];

pub fn read_studies(path: &Path) -> CliResult<Input> {
    let text = std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    parse_studies(&text)
}

pub fn parse_studies(bytes: &[u8]) -> CliResult<Input> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| CliError::Data(format!("unreadable header: {e}")))?
        .clone();
    if header.iter().ne(HEADER) {
        return Err(CliError::Data(format!(
            "header must be `study_id,y,s`, got `{}`",
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::Data(format!("line {line}: {e}"))
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != 3 {
            return Err(CliError::Data(format!(
                "line {line}: expected 3 fields, found {}",
                row.len()
            )));
        }
        let study_id = row[0].to_string();
        if study_id.is_empty() {
            return Err(CliError::Data(format!("line {line}: empty study_id")));
        }
        let number = |k: usize, name: &str| -> CliResult<f64> {
            row[k].parse::<f64>().map_err(|_| {
                CliError::Data(format!(
                    "line {line} (study {study_id}): {name} is not a number: `{}`",
                    &row[k]
                ))
            })
        };
        let (y, s) = (number(1, "y")?, number(2, "s")?);
        Study::new(y, s)
            .map_err(|e| CliError::Data(format!("line {line} (study {study_id}): {e}")))?;
        if !seen.insert(study_id.clone()) {
            return Err(CliError::Data(format!(
                "line {line}: duplicate study_id `{study_id}`"
            )));
        }
        records.push(StudyRecord { study_id, y, s });
    }
    let data = Dataset::new(records.iter().map(|r| Study { y: r.y, s: r.s }).collect())?;
    Ok(Input { records, data })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(text: &str) -> String {
        match parse_studies(text.as_bytes()) {
            Err(e) => e.to_string(),
            Ok(_) => panic!("accepted {text:?}"),
        }
    }

    #[test]
    fn reads_rows_and_skips_comments() {
        let text = "# effects on the log odds scale\nstudy_id,y,s\na,0.1,0.2\n# dropped\nb , -0.3 , 0.4\nc,1e-1,1\n";
        let input = parse_studies(text.as_bytes()).unwrap();
        assert_eq!(input.records.len(), 3);
        assert_eq!(input.records[1].study_id, "b");
        assert_eq!(input.records[1].y, -0.3);
        assert_eq!(input.data.n(), 3);
    }

    #[test]
    fn rejects_with_line_numbers() {
        assert!(err("study_id,y,s\na,0.1,0.2\nb,0.2,0\nc,0.3,0.1\n")
            .starts_with("error[data]: line 3 (study b)"));
        assert!(err("study_id,y,s\na,0.1,0.2\nb,x,0.1\n").contains("line 3"));
        assert!(err("study_id,y,s\na,0.1,0.2\nb,0.1\n").contains("line 3"));
        assert!(err("study_id,y,s\na,0.1,0.2\na,0.1,0.3\nc,1,1\n").contains("duplicate"));
        assert!(err("id,y,se\na,0.1,0.2\n").contains("header"));
        assert!(err("study_id,y,s\na,0.1,0.2\n").contains("at least 3"));
    }
}
