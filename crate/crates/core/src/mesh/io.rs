use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::SurfaceMesh;
use crate::{Error, Point, Result};

const MSMS_HEADER_LINES: usize = 3;

/// Reads an MSMS `.vert`/`.face` pair.
///
/// The first three lines of each file are skipped, as are later lines
/// starting with `#`. Vertex lines hold `x y z nx ny nz ...`, face lines hold
/// 1-based `i j k ...`; extra columns are ignored. A globally inverted
/// surface is flipped so its normals point outward.
pub fn load_msms(vert_path: impl AsRef<Path>, face_path: impl AsRef<Path>) -> Result<SurfaceMesh> {
    let vert_path = vert_path.as_ref();
    let face_path = face_path.as_ref();
    let vert_text = fs::read_to_string(vert_path).map_err(|e| Error::io(vert_path, e))?;
    let face_text = fs::read_to_string(face_path).map_err(|e| Error::io(face_path, e))?;

    let mut vertices = Vec::new();
    for (lineno, fields) in data_lines(&vert_text) {
        if fields.len() < 3 {
            return Err(Error::parse(vert_path, lineno, "expected at least 3 coordinates"));
        }
        let mut xyz = [0.0; 3];
        for (k, f) in fields[..3].iter().enumerate() {
            xyz[k] = f
                .parse()
                .map_err(|_| Error::parse(vert_path, lineno, format!("bad coordinate {f:?}")))?;
        }
        vertices.push(Point::new(xyz[0], xyz[1], xyz[2]));
    }

    let mut triangles = Vec::new();
    for (lineno, fields) in data_lines(&face_text) {
        if fields.len() < 3 {
            return Err(Error::parse(face_path, lineno, "expected 3 vertex indices"));
        }
        let mut tri = [0usize; 3];
        for (k, f) in fields[..3].iter().enumerate() {
            let idx: usize = f
                .parse()
                .map_err(|_| Error::parse(face_path, lineno, format!("bad vertex index {f:?}")))?;
            if idx == 0 || idx > vertices.len() {
                return Err(Error::parse(
                    face_path,
                    lineno,
                    format!("vertex index {idx} outside 1..={}", vertices.len()),
                ));
            }
            tri[k] = idx - 1;
        }
        triangles.push(tri);
    }

    let mesh = SurfaceMesh::new(vertices, triangles)?;
    mesh.check_manifold()?;
    if mesh.signed_volume() < 0.0 {
        log::info!("{}: inward orientation, flipping all faces", face_path.display());
        Ok(mesh.flipped())
    } else {
        Ok(mesh)
    }
}

/// Non-header, non-comment, non-blank lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .skip(MSMS_HEADER_LINES)
        .filter(|(_, l)| !l.trim_start().starts_with('#'))
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, f)| !f.is_empty())
}

/// Writes the mesh in OFF format.
pub fn write_off(mesh: &SurfaceMesh, path: impl AsRef<Path>) -> Result<()> {
    let mut out = String::new();
    out.push_str("OFF\n");
    let _ = writeln!(out, "{} {} 0", mesh.num_vertices(), mesh.num_panels());
    for v in mesh.vertices() {
        let _ = writeln!(out, "{:.16e} {:.16e} {:.16e}", v.x, v.y, v.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(out, "3 {} {} {}", t[0], t[1], t[2]);
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Writes one row per panel: `panel_index,cx,cy,cz,area,value`.
pub fn write_panel_csv(mesh: &SurfaceMesh, values: &[f64], path: impl AsRef<Path>) -> Result<()> {
    if values.len() != mesh.num_panels() {
        return Err(Error::InvalidArgument(format!(
            "{} values for {} panels",
            values.len(),
            mesh.num_panels()
        )));
    }
    let mut out = String::from("panel_index,cx,cy,cz,area,value\n");
    for (i, value) in values.iter().enumerate() {
        let p = mesh.panel(i);
        let _ = writeln!(
            out,
            "{i},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            p.centroid.x, p.centroid.y, p.centroid.z, p.area, value
        );
    }
    let path = path.as_ref();
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    const VERT: &str = "# MSMS solvent excluded surface vertices\n\
                        #vertex #sphere density probe_r\n\
                        4 1 1.00 1.40\n\
                        0.0 0.0 0.0  0 0 -1 0 1 1\n\
                        1.0 0.0 0.0  1 0 0 0 1 1\n\
                        0.0 1.0 0.0  0 1 0 0 1 1\n\
                        0.0 0.0 1.0  0 0 1 0 1 1\n";
    const FACE_OUT: &str = "# MSMS solvent excluded surface faces\n\
                            #faces #sphere density probe_r\n\
                            4 1 1.00 1.40\n\
                            1 3 2 1 1\n\
                            1 2 4 1 1\n\
                            1 4 3 1 1\n\
                            2 3 4 1 1\n";

    fn write_tmp(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn reads_tetrahedron() {
        let dir = tempfile::tempdir().unwrap();
        let v = write_tmp(&dir, "t.vert", VERT);
        let f = write_tmp(&dir, "t.face", FACE_OUT);
        let m = load_msms(&v, &f).unwrap();
        assert_eq!(m.num_panels(), 4);
        assert_eq!(m.triangles()[0], [0, 2, 1]);
        m.validate().unwrap();
    }

    #[test]
    fn zero_index_is_a_parse_error() {
        let dir = tempfile::tempdir().unwrap();
        let v = write_tmp(&dir, "t.vert", VERT);
        let f = write_tmp(&dir, "t.face", &FACE_OUT.replace("1 3 2 1 1", "0 3 2 1 1"));
        match load_msms(&v, &f) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn bad_float_reports_line() {
        let dir = tempfile::tempdir().unwrap();
        let v = write_tmp(&dir, "t.vert", &VERT.replace("1.0 0.0 0.0  1 0 0", "1.0 x 0.0  1 0 0"));
        let f = write_tmp(&dir, "t.face", FACE_OUT);
        match load_msms(&v, &f) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 5),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn inward_orientation_is_repaired() {
        let inward = FACE_OUT
            .replace("1 3 2 1 1", "1 2 3 1 1")
            .replace("1 2 4 1 1", "1 4 2 1 1")
            .replace("1 4 3 1 1", "1 3 4 1 1")
            .replace("2 3 4 1 1", "2 4 3 1 1");
        let dir = tempfile::tempdir().unwrap();
        let v = write_tmp(&dir, "t.vert", VERT);
        let f = write_tmp(&dir, "t.face", &inward);
        let m = load_msms(&v, &f).unwrap();
        // independent signed-volume oracle: sum of det[a b c] / 6
        let vol: f64 = m
            .triangles()
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| m.vertices()[i]);
                nalgebra::Matrix3::from_columns(&[a, b, c]).determinant() / 6.0
            })
            .sum();
        assert!(vol > 0.0);
    }

    #[test]
    fn open_surface_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let v = write_tmp(&dir, "t.vert", VERT);
        let f = write_tmp(&dir, "t.face", &FACE_OUT.replace("2 3 4 1 1\n", ""));
        assert!(matches!(load_msms(&v, &f), Err(Error::Manifold(_))));
    }

    #[test]
    fn panel_csv_has_one_row_per_panel() {
        let dir = tempfile::tempdir().unwrap();
        let m = crate::mesh::icosphere(1.0, 1);
        let p = dir.path().join("e.csv");
        write_panel_csv(&m, &vec![0.5; m.num_panels()], &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert_eq!(text.lines().count(), m.num_panels() + 1);
        assert!(write_panel_csv(&m, &[1.0], &p).is_err());
    }
}
