use std::fs;
use std::path::Path;

use crate::solver::ChargeSet;
use crate::{Error, Point, Result};

/// Reads `ATOM`/`HETATM` records of a PQR file.
///
/// Fields are whitespace separated: record, serial, name, resname, optional
/// chain, resid, x, y, z, charge, radius. Lines with 10 fields have no chain
/// column, lines with 11 do. Other records are ignored.
pub fn load_pqr(path: impl AsRef<Path>) -> Result<ChargeSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut positions = Vec::new();
    let mut charges = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first() {
            Some(&"ATOM") | Some(&"HETATM") => {}
            _ => continue,
        }
        let offset = match fields.len() {
            10 => 5,
            n if n >= 11 => 6,
            n => return Err(Error::parse(path, lineno, format!("expected 10 or 11 fields, found {n}"))),
        };
        let num = |k: usize| -> Result<f64> {
            let f = fields[offset + k];
            f.parse().map_err(|_| Error::parse(path, lineno, format!("bad number {f:?}")))
        };
        positions.push(Point::new(num(0)?, num(1)?, num(2)?));
        charges.push(num(3)?);
        num(4)?;
    }
    if charges.is_empty() {
        return Err(Error::parse(path, 0, "no charges"));
    }
    ChargeSet::new(positions, charges)
}
