//! TOML system definitions: parsing with located diagnostics, validation and
//! conversion into library types.

use std::fmt;
use std::ops::Range;

use affctl_core::floquet::FloquetTolerances;
use affctl_core::projective::{default_cluster_tol, DEFAULT_LEVEL_TOL};
use affctl_core::reach::{BoxGrid, SamplingParams};
use affctl_core::system::{AffineSystem, ControlRange, DEFAULT_RANK_TOL};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use toml::Spanned;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemSpec {
    pub n: usize,
    pub m: usize,
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<f64>,
    pub d: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OmegaSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSpec {
    pub window: Vec<[f64; 2]>,
    pub subdivisions: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingSpec {
    /// Explicit control values; when absent a uniform grid of `levels` per axis.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<Vec<f64>>>,
    pub levels: usize,
    pub dt: f64,
    pub pts_per_box: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToleranceSpec {
    pub unit_tol: f64,
    pub res_tol: f64,
    pub rank_tol: f64,
    pub level_tol: f64,
    pub cluster_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SystemFile {
    pub system: SystemSpec,
    pub omega: OmegaSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    pub sampling: SamplingSpec,
    pub tolerances: ToleranceSpec,
}

type S<T> = Option<Spanned<T>>;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    system: S<RawSystem>,
    omega: S<RawOmega>,
    grid: S<RawGrid>,
    sampling: S<RawSampling>,
    tolerances: S<RawTolerances>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    n: S<usize>,
    m: S<usize>,
    #[serde(rename = "A")]
    a: S<Vec<f64>>,
    #[serde(rename = "B")]
    b: S<Vec<Vec<f64>>>,
    #[serde(rename = "C")]
    c: S<Vec<f64>>,
    d: S<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOmega {
    lo: S<Vec<f64>>,
    hi: S<Vec<f64>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    window: S<Vec<[f64; 2]>>,
    subdivisions: S<Vec<usize>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSampling {
    controls: S<Vec<Vec<f64>>>,
    levels: S<usize>,
    dt: S<f64>,
    pts_per_box: S<usize>,
    seed: S<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerances {
    unit_tol: S<f64>,
    res_tol: S<f64>,
    rank_tol: S<f64>,
    level_tol: S<f64>,
    cluster_tol: S<f64>,
}

struct Diagnostics<'a> {
    text: &'a str,
    out: Vec<Diagnostic>,
}

impl Diagnostics<'_> {
    fn push(&mut self, span: Range<usize>, message: impl Into<String>) {
        let (line, column) = line_column(self.text, span.start);
        self.out.push(Diagnostic {
            line,
            column,
            message: message.into(),
        });
    }

    fn require<T: Clone>(&mut self, field: &S<T>, name: &str, section: Range<usize>) -> Option<(T, Range<usize>)> {
        match field {
            Some(s) => Some((s.get_ref().clone(), s.span())),
            None => {
                self.push(section, format!("missing {name}"));
                None
            }
        }
    }

    fn positive(&mut self, field: &S<f64>, name: &str, default: f64) -> f64 {
        match field {
            Some(s) if !(*s.get_ref() > 0.0 && s.get_ref().is_finite()) => {
                self.push(s.span(), format!("{name} must be positive and finite"));
                default
            }
            Some(s) => *s.get_ref(),
            None => default,
        }
    }

    fn length<T>(&mut self, field: &(Vec<T>, Range<usize>), name: &str, expected: usize) -> bool {
        if field.0.len() == expected {
            true
        } else {
            self.push(
                field.1.clone(),
                format!("dimension mismatch in {name}: expected {expected} entries, got {}", field.0.len()),
            );
            false
        }
    }

    fn finite(&mut self, field: &(Vec<f64>, Range<usize>), name: &str) {
        if field.0.iter().any(|v| !v.is_finite()) {
            self.push(field.1.clone(), format!("{name} has a non-finite entry"));
        }
    }
}

/// 1-based line and column (in characters) of a byte offset.
pub fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(text.len());
    let before = &text[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl SystemFile {
    pub fn parse(text: &str) -> Result<Self, Vec<Diagnostic>> {
        let raw: RawFile = toml::from_str(text).map_err(|e| {
            let (line, column) = line_column(text, e.span().map_or(0, |s| s.start));
            vec![Diagnostic {
                line,
                column,
                message: e.message().trim().to_string(),
            }]
        })?;
        let mut diag = Diagnostics { text, out: Vec::new() };
        let parsed = validate(&raw, &mut diag);
        match parsed {
            Some(file) if diag.out.is_empty() => Ok(file),
            _ => Err(diag.out),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("system files serialize")
    }

    pub fn to_system(&self) -> AffineSystem {
        let s = &self.system;
        let square = |v: &[f64]| DMatrix::from_row_slice(s.n, s.n, v);
        AffineSystem::new(
            square(&s.a),
            s.b.iter().map(|b| square(b)).collect(),
            DMatrix::from_row_slice(s.n, s.m, &s.c),
            DVector::from_column_slice(&s.d),
            self.omega(),
        )
        .expect("validated system file")
    }

    pub fn omega(&self) -> ControlRange {
        ControlRange::new(self.omega.lo.clone(), self.omega.hi.clone()).expect("validated control range")
    }

    pub fn box_grid(&self) -> Option<BoxGrid> {
        self.grid.as_ref().map(|g| {
            BoxGrid::new(
                g.window.iter().map(|w| w[0]).collect(),
                g.window.iter().map(|w| w[1]).collect(),
                g.subdivisions.clone(),
            )
            .expect("validated grid")
        })
    }

    pub fn controls(&self) -> Vec<DVector<f64>> {
        match &self.sampling.controls {
            Some(list) => list.iter().map(|u| DVector::from_column_slice(u)).collect(),
            None => self.omega().grid(self.sampling.levels),
        }
    }

    pub fn sampling_params(&self) -> SamplingParams {
        SamplingParams {
            controls: self.controls(),
            dt: self.sampling.dt,
            pts_per_box: self.sampling.pts_per_box,
            seed: self.sampling.seed,
        }
    }

    pub fn floquet_tolerances(&self) -> FloquetTolerances {
        FloquetTolerances {
            unit_tol: self.tolerances.unit_tol,
            res_tol: self.tolerances.res_tol,
            ..FloquetTolerances::default()
        }
    }
}

fn validate(raw: &RawFile, diag: &mut Diagnostics) -> Option<SystemFile> {
    let Some(system) = &raw.system else {
        diag.push(0..0, "missing [system] section");
        return None;
    };
    let section = system.span();
    let sys = system.get_ref();
    let n = diag.require(&sys.n, "n", section.clone());
    let m = diag.require(&sys.m, "m", section.clone());
    let a = diag.require(&sys.a, "A", section.clone());
    let (n, n_span) = n?;
    let (m, m_span) = m?;
    if n == 0 {
        diag.push(n_span, "n must be at least 1");
    }
    if m == 0 {
        diag.push(m_span, "m must be at least 1");
    }
    let a = a?;
    diag.length(&a, "A", n * n);
    diag.finite(&a, "A");
    let b = match &sys.b {
        Some(s) => {
            let b = (s.get_ref().clone(), s.span());
            if diag.length(&b, "B", m) {
                for (i, bi) in b.0.iter().enumerate() {
                    let entry = (bi.clone(), b.1.clone());
                    diag.length(&entry, &format!("B[{i}]"), n * n);
                    diag.finite(&entry, &format!("B[{i}]"));
                }
            }
            b.0
        }
        None => vec![vec![0.0; n * n]; m],
    };
    let c = match &sys.c {
        Some(s) => {
            let c = (s.get_ref().clone(), s.span());
            diag.length(&c, "C", n * m);
            diag.finite(&c, "C");
            c.0
        }
        None => vec![0.0; n * m],
    };
    let d = match &sys.d {
        Some(s) => {
            let d = (s.get_ref().clone(), s.span());
            diag.length(&d, "d", n);
            diag.finite(&d, "d");
            d.0
        }
        None => vec![0.0; n],
    };

    let omega = match &raw.omega {
        Some(o) => {
            let span = o.span();
            let lo = diag.require(&o.get_ref().lo, "lo", span.clone());
            let hi = diag.require(&o.get_ref().hi, "hi", span);
            let (lo, hi) = (lo?, hi?);
            if diag.length(&lo, "omega lo", m) && diag.length(&hi, "omega hi", m) {
                diag.finite(&lo, "omega lo");
                diag.finite(&hi, "omega hi");
                if lo.0.iter().zip(&hi.0).any(|(l, h)| l > h) {
                    diag.push(lo.1.clone(), "omega lo exceeds hi");
                } else if lo.0.iter().zip(&hi.0).any(|(l, h)| *l > 0.0 || *h < 0.0) {
                    let span = if lo.0.iter().any(|l| *l > 0.0) { lo.1.clone() } else { hi.1.clone() };
                    diag.push(span, "0 \u{2209} omega");
                }
            }
            OmegaSpec { lo: lo.0, hi: hi.0 }
        }
        None => {
            diag.push(0..0, "missing [omega] section");
            return None;
        }
    };

    let grid = match &raw.grid {
        Some(g) => {
            let span = g.span();
            let window = diag.require(&g.get_ref().window, "window", span.clone());
            let subdivisions = diag.require(&g.get_ref().subdivisions, "subdivisions", span);
            let (window, subdivisions) = (window?, subdivisions?);
            if diag.length(&window, "window", n)
                && window.0.iter().any(|w| !(w[0] < w[1] && w[0].is_finite() && w[1].is_finite()))
            {
                diag.push(window.1.clone(), "window intervals need finite lo < hi");
            }
            if diag.length(&subdivisions, "subdivisions", n) && subdivisions.0.contains(&0) {
                diag.push(subdivisions.1.clone(), "subdivisions must be positive");
            }
            Some(GridSpec {
                window: window.0,
                subdivisions: subdivisions.0,
            })
        }
        None => None,
    };

    let sampling = {
        let empty = RawSampling {
            controls: None,
            levels: None,
            dt: None,
            pts_per_box: None,
            seed: None,
        };
        let s = raw.sampling.as_ref().map_or(&empty, |s| s.get_ref());
        let controls = s.controls.as_ref().map(|c| {
            let list = c.get_ref().clone();
            if list.is_empty() {
                diag.push(c.span(), "controls must not be empty");
            }
            for u in &list {
                if u.len() != m {
                    diag.push(c.span(), format!("dimension mismatch in controls: expected {m} entries, got {}", u.len()));
                } else if u.iter().zip(omega.lo.iter().zip(&omega.hi)).any(|(v, (l, h))| v < l || v > h) {
                    diag.push(c.span(), format!("control {u:?} is outside omega"));
                }
            }
            list
        });
        let mut count = |field: &S<usize>, name: &str, default: usize| match field {
            Some(v) if *v.get_ref() == 0 => {
                diag.push(v.span(), format!("{name} must be positive"));
                default
            }
            Some(v) => *v.get_ref(),
            None => default,
        };
        let levels = count(&s.levels, "levels", 5);
        let pts_per_box = count(&s.pts_per_box, "pts_per_box", 4);
        SamplingSpec {
            controls,
            levels,
            dt: diag.positive(&s.dt, "dt", 0.25),
            pts_per_box,
            seed: s.seed.as_ref().map_or(0, |v| *v.get_ref()),
        }
    };

    let tolerances = {
        let empty = RawTolerances {
            unit_tol: None,
            res_tol: None,
            rank_tol: None,
            level_tol: None,
            cluster_tol: None,
        };
        let t = raw.tolerances.as_ref().map_or(&empty, |t| t.get_ref());
        let defaults = FloquetTolerances::default();
        ToleranceSpec {
            unit_tol: diag.positive(&t.unit_tol, "unit_tol", defaults.unit_tol),
            res_tol: diag.positive(&t.res_tol, "res_tol", defaults.res_tol),
            rank_tol: diag.positive(&t.rank_tol, "rank_tol", DEFAULT_RANK_TOL),
            level_tol: diag.positive(&t.level_tol, "level_tol", DEFAULT_LEVEL_TOL),
            cluster_tol: diag.positive(&t.cluster_tol, "cluster_tol", default_cluster_tol(n + 1)),
        }
    };

    Some(SystemFile {
        system: SystemSpec { n, m, a: a.0, b, c, d },
        omega,
        grid,
        sampling,
        tolerances,
    })
}
