//! `x,y[,label]` point files.

use std::path::Path;

use mccvc::PointSet;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct PointFile {
    pub points: PointSet,
    /// Per-point `true` = inner, when the file has a `label` column.
    pub inner_labels: Option<Vec<bool>>,
}

pub fn read(path: &Path) -> Result<PointFile, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse(file, path)
}

pub fn parse<R: std::io::Read>(input: R, path: &Path) -> Result<PointFile, CliError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers().map_err(|e| CliError::parse(path, 1, e.to_string()))?.clone();
    let column = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(xi), Some(yi)) = (column("x"), column("y")) else {
        return Err(CliError::parse(path, 1, "header must contain `x` and `y` columns".into()));
    };
    let li = column("label");

    let mut points = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CliError::parse(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let number = |i: usize, name: &str| -> Result<f64, CliError> {
            let field = record.get(i).unwrap_or("");
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::parse(path, line, format!("`{name}` is not a finite number: {field:?}"))),
            }
        };
        points.push([number(xi, "x")?, number(yi, "y")?]);
        if let Some(li) = li {
            labels.push(match record.get(li).unwrap_or("").to_ascii_lowercase().as_str() {
                "outer" | "0" => false,
                "inner" | "1" => true,
                other => {
                    return Err(CliError::parse(path, line, format!("label must be outer or inner, got {other:?}")))
                }
            });
        }
    }
    let points = PointSet::new(points).map_err(|e| CliError::parse(path, 0, e.to_string()))?;
    Ok(PointFile { points, inner_labels: li.map(|_| labels) })
}

pub fn write(path: &Path, points: &[[f64; 2]], inner_labels: Option<&[bool]>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::io(path, e.into()))?;
    let result = (|| -> csv::Result<()> {
        match inner_labels {
            Some(labels) => {
                w.write_record(["x", "y", "label"])?;
                for (p, &inner) in points.iter().zip(labels) {
                    w.write_record([
                        p[0].to_string(),
                        p[1].to_string(),
                        (if inner { "inner" } else { "outer" }).into(),
                    ])?;
                }
            }
            None => {
                w.write_record(["x", "y"])?;
                for p in points {
                    w.write_record([p[0].to_string(), p[1].to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    })();
    result.map_err(|e| CliError::io(path, e.into()))
}
