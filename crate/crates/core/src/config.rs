//! INI run configuration.
//!
//! ```ini
//! [mesh]
//! source = icosphere        ; or msms
//! radius = 1.0
//! level = 2
//! ; vert = protein.vert     ; msms only
//! ; face = protein.face
//! background_level = 7      ; conforming refinement target (icosphere)
//! ; background_vert = fine.vert
//! ; background_face = fine.face
//!
//! [charges]
//! charge = 0.0 0.0 0.5 1.0  ; x y z q, repeatable
//! ; pqr = molecule.pqr
//!
//! [physics]
//! eps_m = 4
//! eps_w = 80
//! kappa = 0.125
//!
//! [solver]
//! gmres_tol = 1e-8
//! max_iterations = 1000
//!
//! [adapt]
//! estimator = Eu
//! fraction = 0.1
//! adjoint_levels = 1
//! mode = conforming
//! iterations = 20
//!
//! [oracle]
//! reference = kirkwood      ; kirkwood | richardson | none
//! terms = 50
//! ; values = -50.1 -51.9 -52.3
//! ```
//!
//! Relative paths are resolved against the directory of the config file.
//! Unknown sections or keys are rejected.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use ini::{Ini, Properties};

use crate::driver::RefinementMode;
use crate::estimator::EstimatorTag;
use crate::mesh::{icosphere, load_msms, SurfaceMesh};
use crate::physics::load_pqr;
use crate::solver::{BiePhysics, ChargeSet, SolverOptions};
use crate::{Error, Point, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum MeshSource {
    Icosphere { radius: f64, level: u32 },
    Msms { vert: PathBuf, face: PathBuf },
}

impl MeshSource {
    pub fn load(&self) -> Result<SurfaceMesh> {
        match self {
            MeshSource::Icosphere { radius, level } => Ok(icosphere(*radius, *level)),
            MeshSource::Msms { vert, face } => load_msms(vert, face),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ChargeSource {
    Inline(Vec<[f64; 4]>),
    Pqr(PathBuf),
}

impl ChargeSource {
    pub fn load(&self) -> Result<ChargeSet> {
        match self {
            ChargeSource::Inline(rows) => ChargeSet::new(
                rows.iter().map(|r| Point::new(r[0], r[1], r[2])).collect(),
                rows.iter().map(|r| r[3]).collect(),
            ),
            ChargeSource::Pqr(path) => load_pqr(path),
        }
    }
}

/// Exact energy used for effectivity ratios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reference {
    /// Kirkwood series; icosphere meshes only.
    Kirkwood,
    /// Extrapolation of three uniform levels.
    Richardson,
    None,
}

impl FromStr for Reference {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kirkwood" => Ok(Reference::Kirkwood),
            "richardson" => Ok(Reference::Richardson),
            "none" => Ok(Reference::None),
            other => Err(Error::Config(format!("unknown reference {other:?} (kirkwood | richardson | none)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdaptSettings {
    pub estimator: EstimatorTag,
    pub fraction: f64,
    pub adjoint_levels: u32,
    pub mode: RefinementMode,
    pub iterations: usize,
}

impl Default for AdaptSettings {
    fn default() -> Self {
        AdaptSettings {
            estimator: EstimatorTag::Eu,
            fraction: 0.10,
            adjoint_levels: 1,
            mode: RefinementMode::Flat,
            iterations: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSettings {
    pub reference: Reference,
    pub terms: usize,
    /// Three energies to extrapolate.
    pub values: Option<[f64; 3]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub background: Option<MeshSource>,
    pub charges: ChargeSource,
    pub physics: BiePhysics,
    pub solver: SolverOptions,
    pub adapt: AdaptSettings,
    pub oracle: OracleSettings,
}

const KNOWN: &[(&str, &[&str])] = &[
    ("mesh", &["source", "radius", "level", "vert", "face", "background_level", "background_vert", "background_face"]),
    ("charges", &["charge", "pqr"]),
    ("physics", &["eps_m", "eps_w", "kappa"]),
    ("solver", &["gmres_tol", "max_iterations"]),
    ("adapt", &["estimator", "fraction", "adjoint_levels", "mode", "iterations"]),
    ("oracle", &["reference", "terms", "values"]),
];

struct Reader<'a> {
    ini: &'a Ini,
    base: &'a Path,
}

impl Reader<'_> {
    fn section(&self, name: &str) -> Option<&Properties> {
        self.ini.section(Some(name))
    }

    fn raw(&self, section: &str, key: &str) -> Option<&str> {
        self.section(section).and_then(|p| p.get(key)).map(str::trim)
    }

    fn parse<T: FromStr>(&self, section: &str, key: &str) -> Result<Option<T>> {
        match self.raw(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("[{section}] {key} = {v:?} is not a valid value"))),
        }
    }

    fn path(&self, section: &str, key: &str) -> Option<PathBuf> {
        self.raw(section, key).map(|v| self.base.join(v))
    }

    fn numbers(&self, section: &str, key: &str, text: &str) -> Result<Vec<f64>> {
        text.split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse().map_err(|_| Error::Config(format!("[{section}] {key}: bad number {t:?}"))))
            .collect()
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_str_in(&text, base)
    }

    /// Parses config text, resolving relative paths against `base`.
    pub fn from_str_in(text: &str, base: &Path) -> Result<Self> {
        let ini = Ini::load_from_str_noescape(text).map_err(|e| Error::Config(e.to_string()))?;
        for (name, props) in ini.iter() {
            let Some(name) = name else {
                if let Some((k, _)) = props.iter().next() {
                    return Err(Error::Config(format!("key {k:?} outside any section")));
                }
                continue;
            };
            let Some((_, keys)) = KNOWN.iter().find(|(s, _)| *s == name) else {
                return Err(Error::Config(format!("unknown section [{name}]")));
            };
            if let Some((k, _)) = props.iter().find(|(k, _)| !keys.contains(k)) {
                return Err(Error::Config(format!("unknown key {k:?} in [{name}]")));
            }
        }
        let r = Reader { ini: &ini, base };

        let source = r.raw("mesh", "source").unwrap_or("icosphere").to_ascii_lowercase();
        let mesh = match source.as_str() {
            "icosphere" => MeshSource::Icosphere {
                radius: r.parse("mesh", "radius")?.unwrap_or(1.0),
                level: r.parse("mesh", "level")?.unwrap_or(2),
            },
            "msms" => MeshSource::Msms {
                vert: r.path("mesh", "vert").ok_or_else(|| Error::Config("[mesh] msms source needs vert".into()))?,
                face: r.path("mesh", "face").ok_or_else(|| Error::Config("[mesh] msms source needs face".into()))?,
            },
            other => return Err(Error::Config(format!("[mesh] unknown source {other:?} (icosphere | msms)"))),
        };
        let background = match (r.parse::<u32>("mesh", "background_level")?, r.path("mesh", "background_vert")) {
            (Some(_), Some(_)) => {
                return Err(Error::Config("[mesh] give background_level or background_vert/face, not both".into()))
            }
            (Some(level), None) => match &mesh {
                MeshSource::Icosphere { radius, .. } => Some(MeshSource::Icosphere { radius: *radius, level }),
                MeshSource::Msms { .. } => {
                    return Err(Error::Config("[mesh] background_level needs an icosphere source".into()))
                }
            },
            (None, Some(vert)) => Some(MeshSource::Msms {
                vert,
                face: r
                    .path("mesh", "background_face")
                    .ok_or_else(|| Error::Config("[mesh] background_vert needs background_face".into()))?,
            }),
            (None, None) => None,
        };

        let charges = match (r.path("charges", "pqr"), r.section("charges")) {
            (Some(_), Some(p)) if p.get("charge").is_some() => {
                return Err(Error::Config("[charges] give pqr or charge lines, not both".into()))
            }
            (Some(pqr), _) => ChargeSource::Pqr(pqr),
            (None, Some(p)) if p.get("charge").is_some() => {
                let mut rows = Vec::new();
                for line in p.get_all("charge") {
                    let v = r.numbers("charges", "charge", line)?;
                    let row: [f64; 4] = v
                        .try_into()
                        .map_err(|_| Error::Config(format!("[charges] charge = {line:?} needs x y z q")))?;
                    rows.push(row);
                }
                ChargeSource::Inline(rows)
            }
            _ => return Err(Error::Config("[charges] needs pqr or at least one charge line".into())),
        };

        let d = BiePhysics::default();
        let physics = BiePhysics {
            eps_m: r.parse("physics", "eps_m")?.unwrap_or(d.eps_m),
            eps_w: r.parse("physics", "eps_w")?.unwrap_or(d.eps_w),
            kappa: r.parse("physics", "kappa")?.unwrap_or(d.kappa),
            ..d
        };

        let d = SolverOptions::default();
        let solver = SolverOptions {
            gmres_tol: r.parse("solver", "gmres_tol")?.unwrap_or(d.gmres_tol),
            max_iterations: r.parse("solver", "max_iterations")?.unwrap_or(d.max_iterations),
            ..d
        };

        let d = AdaptSettings::default();
        let adapt = AdaptSettings {
            estimator: r.parse("adapt", "estimator")?.unwrap_or(d.estimator),
            fraction: r.parse("adapt", "fraction")?.unwrap_or(d.fraction),
            adjoint_levels: r.parse("adapt", "adjoint_levels")?.unwrap_or(d.adjoint_levels),
            mode: r.parse("adapt", "mode")?.unwrap_or(d.mode),
            iterations: r.parse("adapt", "iterations")?.unwrap_or(d.iterations),
        };

        let default_reference = match mesh {
            MeshSource::Icosphere { .. } => Reference::Kirkwood,
            MeshSource::Msms { .. } => Reference::None,
        };
        let values = match r.raw("oracle", "values") {
            None => None,
            Some(text) => Some(
                r.numbers("oracle", "values", text)?
                    .try_into()
                    .map_err(|_| Error::Config("[oracle] values needs exactly three energies".into()))?,
            ),
        };
        let oracle = OracleSettings {
            reference: r.parse("oracle", "reference")?.unwrap_or(default_reference),
            terms: r.parse("oracle", "terms")?.unwrap_or(crate::oracle::DEFAULT_TERMS),
            values,
        };

        let config = RunConfig { mesh, background, charges, physics, solver, adapt, oracle };
        config.validate()?;
        Ok(config)
    }

    /// Range checks, reported as configuration errors.
    pub fn validate(&self) -> Result<()> {
        let bad = |e: Error| Error::Config(e.to_string());
        self.physics.validate().map_err(bad)?;
        if let MeshSource::Icosphere { radius, .. } = self.mesh {
            if !(radius > 0.0 && radius.is_finite()) {
                return Err(Error::Config(format!("[mesh] radius {radius} must be positive")));
            }
        }
        if !(self.solver.gmres_tol > 0.0 && self.solver.gmres_tol < 1.0) {
            return Err(Error::Config(format!("gmres_tol {} outside (0, 1)", self.solver.gmres_tol)));
        }
        if self.solver.max_iterations == 0 {
            return Err(Error::Config("[solver] max_iterations must be at least 1".into()));
        }
        if !(self.adapt.fraction > 0.0 && self.adapt.fraction <= 1.0) {
            return Err(Error::Config(format!("marking fraction {} outside (0, 1]", self.adapt.fraction)));
        }
        if self.adapt.iterations == 0 {
            return Err(Error::Config("[adapt] iterations must be at least 1".into()));
        }
        if self.adapt.mode == RefinementMode::Conforming && self.background.is_none() {
            return Err(Error::Config("conforming refinement needs a background mesh in [mesh]".into()));
        }
        if self.oracle.reference == Reference::Kirkwood && !matches!(self.mesh, MeshSource::Icosphere { .. }) {
            return Err(Error::Config("[oracle] kirkwood reference needs an icosphere mesh".into()));
        }
        if self.oracle.terms == 0 || self.oracle.terms > crate::oracle::MAX_TERMS {
            return Err(Error::Config(format!("[oracle] terms {} outside 1..={}", self.oracle.terms, crate::oracle::MAX_TERMS)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig> {
        RunConfig::from_str_in(text, Path::new("/data"))
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let c = parse("[charges]\ncharge = 0 0 0 1\n").unwrap();
        assert_eq!(c.mesh, MeshSource::Icosphere { radius: 1.0, level: 2 });
        assert_eq!(c.physics, BiePhysics::default());
        assert_eq!(c.solver, SolverOptions::default());
        assert_eq!(c.adapt, AdaptSettings::default());
        assert_eq!(c.oracle.reference, Reference::Kirkwood);
        assert_eq!(c.background, None);
    }

    #[test]
    fn full_file() {
        let c = parse(
            "[mesh]\nsource = icosphere\nradius = 2\nlevel = 3\nbackground_level = 6\n\
             [charges]\ncharge = 0 0 0.5 1\ncharge = 0.1, 0, 0, -1\n\
             [physics]\neps_m = 1\neps_w = 80\nkappa = 0\n\
             [solver]\ngmres_tol = 1e-10\n\
             [adapt]\nestimator = Ephi\nfraction = 0.2\nadjoint_levels = 0\nmode = conforming\niterations = 5\n\
             [oracle]\nreference = none\nvalues = 1 2 3\n",
        )
        .unwrap();
        assert_eq!(c.background, Some(MeshSource::Icosphere { radius: 2.0, level: 6 }));
        assert_eq!(c.charges, ChargeSource::Inline(vec![[0.0, 0.0, 0.5, 1.0], [0.1, 0.0, 0.0, -1.0]]));
        assert_eq!(c.physics.eps_m, 1.0);
        assert_eq!(c.physics.kappa, 0.0);
        assert_eq!(c.solver.gmres_tol, 1e-10);
        assert_eq!(c.adapt.estimator, EstimatorTag::Ephi);
        assert_eq!(c.adapt.mode, RefinementMode::Conforming);
        assert_eq!(c.adapt.iterations, 5);
        assert_eq!(c.oracle.values, Some([1.0, 2.0, 3.0]));
    }

    #[test]
    fn paths_are_relative_to_the_config() {
        let c = parse("[mesh]\nsource = msms\nvert = a.vert\nface = /abs/a.face\n[charges]\npqr = m.pqr\n").unwrap();
        assert_eq!(
            c.mesh,
            MeshSource::Msms { vert: PathBuf::from("/data/a.vert"), face: PathBuf::from("/abs/a.face") }
        );
        assert_eq!(c.charges, ChargeSource::Pqr(PathBuf::from("/data/m.pqr")));
        assert_eq!(c.oracle.reference, Reference::None);
    }

    #[test]
    fn rejects_bad_input() {
        let cases = [
            "[charges]\n",
            "[charges]\ncharge = 0 0 1\n",
            "[charges]\ncharge = 0 0 0 1\n[physics]\neps_m = four\n",
            "[charges]\ncharge = 0 0 0 1\n[physics]\neps_m = -1\n",
            "[charges]\ncharge = 0 0 0 1\n[adapt]\nfraction = 0\n",
            "[charges]\ncharge = 0 0 0 1\n[adapt]\nmode = conforming\n",
            "[charges]\ncharge = 0 0 0 1\n[adapt]\nestimator = E_x\n",
            "[charges]\ncharge = 0 0 0 1\n[mesh]\nlevels = 2\n",
            "[charges]\ncharge = 0 0 0 1\n[meshes]\n",
            "[charges]\ncharge = 0 0 0 1\npqr = a.pqr\n",
            "[charges]\ncharge = 0 0 0 1\n[oracle]\nvalues = 1 2\n",
            "[charges]\ncharge = 0 0 0 1\n[mesh]\nsource = msms\nvert = a\nface = b\n[oracle]\nreference = kirkwood\n",
        ];
        for text in cases {
            assert!(matches!(parse(text), Err(Error::Config(_))), "{text:?}");
        }
    }

    #[test]
    fn missing_file_is_a_config_error() {
        assert!(matches!(RunConfig::load("/nonexistent/run.ini"), Err(Error::Config(_))));
    }
}
