//! Plain-text `GRD1` field files.
//!
//! ```text
//! GRD1 dim=2 nx=51,51 nt=80 hx=0.02,0.02 tau=0.0126
//! <values of time level 0>
//! <values of time level 1>
//! ...
//! ```
//!
//! `nt=0` marks a spatial field. Boundary traces reuse the header of their grid
//! and add a `kind=` token; each line then holds one time level of boundary
//! values in [`BoundaryLayout`](super::BoundaryLayout) order.

use std::fmt::Write as _;
use std::path::Path;

use super::{make_grid, GridSpec, ScalarField, SpaceTimeField};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grd1Header {
    pub dim: usize,
    pub nx: Vec<usize>,
    pub nt: usize,
    pub hx: Vec<f64>,
    pub tau: f64,
    pub kind: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grd1 {
    pub header: Grd1Header,
    pub values: Vec<f64>,
}

fn join<T: std::fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl Grd1Header {
    pub fn for_grid(grid: &GridSpec, nt: usize, kind: Option<&str>) -> Self {
        Grd1Header {
            dim: grid.dim,
            nx: grid.nx[..grid.dim].to_vec(),
            nt,
            hx: grid.h[..grid.dim].to_vec(),
            tau: grid.tau,
            kind: kind.map(str::to_owned),
        }
    }

    fn render(&self) -> String {
        let mut s = format!(
            "GRD1 dim={} nx={} nt={} hx={} tau={}",
            self.dim,
            join(&self.nx),
            self.nt,
            join(&self.hx),
            self.tau
        );
        if let Some(k) = &self.kind {
            let _ = write!(s, " kind={k}");
        }
        s
    }

    fn parse(line: &str) -> Result<Self> {
        let mut tokens = line.split_whitespace();
        if tokens.next() != Some("GRD1") {
            return Err(LabError::Parse("missing GRD1 magic".into()));
        }
        let (mut dim, mut nx, mut nt, mut hx, mut tau, mut kind) = (None, None, None, None, None, None);
        let bad = |k: &str, v: &str| LabError::Parse(format!("bad value for {k}: {v}"));
        for tok in tokens {
            let (k, v) = tok
                .split_once('=')
                .ok_or_else(|| LabError::Parse(format!("malformed header token {tok}")))?;
            match k {
                "dim" => dim = Some(v.parse::<usize>().map_err(|_| bad(k, v))?),
                "nx" => {
                    nx = Some(
                        v.split(',')
                            .map(|s| s.parse::<usize>().map_err(|_| bad(k, v)))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "nt" => nt = Some(v.parse::<usize>().map_err(|_| bad(k, v))?),
                "hx" => {
                    hx = Some(
                        v.split(',')
                            .map(|s| s.parse::<f64>().map_err(|_| bad(k, v)))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                "tau" => tau = Some(v.parse::<f64>().map_err(|_| bad(k, v))?),
                "kind" => kind = Some(v.to_owned()),
                other => return Err(LabError::Parse(format!("unknown header key {other}"))),
            }
        }
        let missing = |k: &str| LabError::Parse(format!("header lacks {k}"));
        let h = Grd1Header {
            dim: dim.ok_or_else(|| missing("dim"))?,
            nx: nx.ok_or_else(|| missing("nx"))?,
            nt: nt.ok_or_else(|| missing("nt"))?,
            hx: hx.ok_or_else(|| missing("hx"))?,
            tau: tau.ok_or_else(|| missing("tau"))?,
            kind,
        };
        if h.nx.len() != h.dim || h.hx.len() != h.dim {
            return Err(LabError::Parse("nx/hx entries do not match dim".into()));
        }
        Ok(h)
    }

    /// Grid described by a space-time header, with origin at zero.
    pub fn grid(&self) -> Result<GridSpec> {
        if self.nt == 0 {
            return Err(LabError::Parse("spatial field carries no time axis".into()));
        }
        let extent: Vec<f64> = self.nx.iter().zip(&self.hx).map(|(&n, &h)| h * (n - 1) as f64).collect();
        make_grid(
            self.dim,
            &vec![0.0; self.dim],
            &extent,
            &self.nx,
            self.tau * (self.nt - 1) as f64,
            self.nt,
        )
    }

    fn check_space(&self, grid: &GridSpec) -> Result<()> {
        let ok = self.dim == grid.dim
            && self.nx == grid.nx[..grid.dim]
            && self.hx.iter().zip(&grid.h).all(|(a, b)| (a - b).abs() <= 1e-9 * b);
        if ok {
            Ok(())
        } else {
            Err(LabError::FieldMismatch("file grid does not match the requested grid".into()))
        }
    }
}

impl Grd1 {
    pub fn render(&self, per_line: usize) -> String {
        let mut s = self.header.render();
        s.push('\n');
        let per_line = per_line.max(1);
        for chunk in self.values.chunks(per_line) {
            let line: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = Grd1Header::parse(lines.next().ok_or_else(|| LabError::Parse("empty file".into()))?)?;
        let mut values = Vec::new();
        for tok in lines.flat_map(str::split_whitespace) {
            let v: f64 = tok.parse().map_err(|_| LabError::Parse(format!("bad float {tok}")))?;
            values.push(v);
        }
        Ok(Grd1 { header, values })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path, per_line: usize) -> Result<()> {
        std::fs::write(path, self.render(per_line))?;
        Ok(())
    }

    pub fn into_scalar(self, grid: &GridSpec) -> Result<ScalarField> {
        self.header.check_space(grid)?;
        if self.header.nt != 0 {
            return Err(LabError::FieldMismatch("expected a spatial field (nt=0)".into()));
        }
        ScalarField::new(*grid, self.values)
    }

    pub fn into_spacetime(self, grid: &GridSpec) -> Result<SpaceTimeField> {
        self.header.check_space(grid)?;
        if self.header.nt != grid.nt {
            return Err(LabError::FieldMismatch(format!("file has nt={}, grid has {}", self.header.nt, grid.nt)));
        }
        SpaceTimeField::new(*grid, self.values)
    }
}

pub fn scalar_to_grd1(f: &ScalarField) -> Grd1 {
    Grd1 { header: Grd1Header::for_grid(f.grid(), 0, None), values: f.values().to_vec() }
}

pub fn spacetime_to_grd1(u: &SpaceTimeField) -> Grd1 {
    let g = u.grid();
    Grd1 { header: Grd1Header::for_grid(g, g.nt, None), values: u.values().to_vec() }
}

pub fn write_scalar(path: &Path, f: &ScalarField) -> Result<()> {
    scalar_to_grd1(f).write(path, f.grid().n_space())
}

pub fn write_spacetime(path: &Path, u: &SpaceTimeField) -> Result<()> {
    spacetime_to_grd1(u).write(path, u.grid().n_space())
}

pub fn read_scalar(path: &Path, grid: &GridSpec) -> Result<ScalarField> {
    Grd1::read(path)?.into_scalar(grid)
}

pub fn read_spacetime(path: &Path, grid: &GridSpec) -> Result<SpaceTimeField> {
    Grd1::read(path)?.into_spacetime(grid)
}
