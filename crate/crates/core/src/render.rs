//! Stick-figure geometry for inspecting sequences: one sphere per marker,
//! inferred pelvis and head-center nodes, and cylinders along the bones.
//!
//! JSONL export writes one object per frame:
//! `{"frame":0,"spheres":[{"c":[x,y,z],"r":r,"tag":"c7"}],"cylinders":[{"c":[..],"axis":[..],"len":l,"r":r}]}`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Marker, MotionSequence, SEQ_LEN};

pub type Vec3 = [f64; 3];

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("bone endpoints coincide")]
    DegenerateBone,
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("sequence is z-scored; denormalize before rendering")]
    Normalized,
    #[error("nothing to export")]
    Empty,
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RenderError + '_ {
    move |source| RenderError::Io { path: path.display().to_string(), source }
}

/// A bone endpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Joint {
    /// Body marker by index, 0..15 (the bowl is not a joint).
    Marker(usize),
    /// Centroid of the four waist markers.
    Pelvis,
    /// Centroid of the four head markers.
    HeadCenter,
}

impl Joint {
    fn position(self, seq: &MotionSequence, t: usize) -> Vec3 {
        match self {
            Joint::Marker(i) => seq.marker(t, Marker::ALL[i]),
            Joint::Pelvis => centroid(seq, t, &Marker::WAIST),
            Joint::HeadCenter => centroid(seq, t, &Marker::HEAD),
        }
    }
}

fn centroid(seq: &MotionSequence, t: usize, ms: &[Marker]) -> Vec3 {
    let mut c = [0.0; 3];
    for &m in ms {
        let p = seq.marker(t, m);
        for k in 0..3 {
            c[k] += p[k];
        }
    }
    c.map(|v| v / ms.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonTopology {
    pub bones: Vec<(Joint, Joint)>,
}

impl Default for SkeletonTopology {
    fn default() -> Self {
        use Joint::{Marker as M, Pelvis};
        let pairs = [
            // head loop
            (M(0), M(1)),
            (M(1), M(3)),
            (M(3), M(2)),
            (M(2), M(0)),
            // shoulders to C7, C7 down to the pelvis
            (M(4), M(6)),
            (M(5), M(6)),
            (M(6), Pelvis),
            // waist loop
            (M(7), M(8)),
            (M(8), M(10)),
            (M(10), M(9)),
            (M(9), M(7)),
            // hands to shoulders, feet to the front waist markers
            (M(11), M(4)),
            (M(12), M(5)),
            (M(13), M(7)),
            (M(14), M(8)),
        ];
        Self { bones: pairs.to_vec() }
    }
}

impl SkeletonTopology {
    pub fn validate(&self) -> Result<(), RenderError> {
        let body = Marker::Bowl.index();
        for (i, &(a, b)) in self.bones.iter().enumerate() {
            for j in [a, b] {
                if let Joint::Marker(m) = j {
                    if m >= body {
                        return Err(RenderError::Topology(format!("bone {i} uses marker {m}; body markers are 0..{body}")));
                    }
                }
            }
            if a == b {
                return Err(RenderError::Topology(format!("bone {i} joins {a:?} to itself")));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, RenderError> {
        let t: Self = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }
}

/// Radii and SVG page settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderStyle {
    pub sphere_radius: f64,
    pub cylinder_radius: f64,
    pub bowl_radius: f64,
    /// SVG pixels per metre; the same for every frame.
    pub svg_scale: f64,
    /// SVG margin in pixels around the sequence's bounding box.
    pub svg_margin: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        Self { sphere_radius: 0.03, cylinder_radius: 0.015, bowl_radius: 0.05, svg_scale: 200.0, svg_margin: 20.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub c: Vec3,
    pub r: f64,
    pub tag: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cylinder {
    pub c: Vec3,
    pub axis: Vec3,
    pub len: f64,
    pub r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometryFrame {
    pub frame: usize,
    pub spheres: Vec<Sphere>,
    pub cylinders: Vec<Cylinder>,
}

/// A bone that could not be drawn in one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderWarning {
    pub frame: usize,
    pub bone: usize,
}

/// `(center, unit axis, length)` of the segment from `p1` to `p2`.
pub fn cylinder_between(p1: Vec3, p2: Vec3) -> Result<(Vec3, Vec3, f64), RenderError> {
    let d = [p2[0] - p1[0], p2[1] - p1[1], p2[2] - p1[2]];
    // Scale by the largest component so tiny separations neither underflow nor lose the unit norm.
    let m = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if m == 0.0 || !m.is_finite() {
        return Err(RenderError::DegenerateBone);
    }
    let u = d.map(|v| v / m);
    let n = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
    let center = [0, 1, 2].map(|k| 0.5 * (p1[k] + p2[k]));
    Ok((center, u.map(|v| v / n), m * n))
}

/// Geometry for every time step of a world-space sequence. Bones with coincident
/// endpoints are dropped from that frame and reported, never fatal.
pub fn build_geometry(
    seq: &MotionSequence,
    topo: &SkeletonTopology,
    style: &RenderStyle,
) -> Result<(Vec<GeometryFrame>, Vec<RenderWarning>), RenderError> {
    if seq.normalized {
        return Err(RenderError::Normalized);
    }
    topo.validate()?;
    let mut warnings = Vec::new();
    let frames = (0..SEQ_LEN)
        .map(|t| {
            let mut spheres: Vec<Sphere> = Marker::ALL[..Marker::Bowl.index()]
                .iter()
                .map(|&m| Sphere { c: seq.marker(t, m), r: style.sphere_radius, tag: m.name().to_string() })
                .collect();
            for (j, tag) in [(Joint::Pelvis, "pelvis"), (Joint::HeadCenter, "head_center")] {
                spheres.push(Sphere { c: j.position(seq, t), r: style.sphere_radius, tag: tag.into() });
            }
            spheres.push(Sphere { c: seq.marker(t, Marker::Bowl), r: style.bowl_radius, tag: "bowl".into() });
            let mut cylinders = Vec::with_capacity(topo.bones.len());
            for (bone, &(a, b)) in topo.bones.iter().enumerate() {
                match cylinder_between(a.position(seq, t), b.position(seq, t)) {
                    Ok((c, axis, len)) => cylinders.push(Cylinder { c, axis, len, r: style.cylinder_radius }),
                    Err(_) => {
                        log::warn!("frame {t}: bone {bone} ({a:?}-{b:?}) has coincident endpoints, skipped");
                        warnings.push(RenderWarning { frame: t, bone });
                    }
                }
            }
            GeometryFrame { frame: t, spheres, cylinders }
        })
        .collect();
    Ok((frames, warnings))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    Jsonl,
    SvgOrtho,
}

impl std::str::FromStr for ExportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "jsonl" => Ok(Self::Jsonl),
            "svg" | "svg_ortho" | "svg-ortho" => Ok(Self::SvgOrtho),
            other => Err(format!("unknown format {other:?} (jsonl or svg)")),
        }
    }
}

pub fn to_jsonl(frames: &[GeometryFrame]) -> Result<String, RenderError> {
    let mut out = String::new();
    for f in frames {
        out.push_str(&serde_json::to_string(f)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn from_jsonl(text: &str) -> Result<Vec<GeometryFrame>, RenderError> {
    text.lines().filter(|l| !l.trim().is_empty()).map(|l| Ok(serde_json::from_str(l)?)).collect()
}

/// Page window shared by all frames: `(min x, max z, width px, height px)`.
fn page_window(frames: &[GeometryFrame], style: &RenderStyle) -> (f64, f64, f64, f64) {
    let (mut x0, mut x1, mut z0, mut z1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for s in frames.iter().flat_map(|f| &f.spheres) {
        x0 = x0.min(s.c[0] - s.r);
        x1 = x1.max(s.c[0] + s.r);
        z0 = z0.min(s.c[2] - s.r);
        z1 = z1.max(s.c[2] + s.r);
    }
    let w = (x1 - x0) * style.svg_scale + 2.0 * style.svg_margin;
    let h = (z1 - z0) * style.svg_scale + 2.0 * style.svg_margin;
    (x0, z1, w.ceil(), h.ceil())
}

/// Orthographic side view: world X to the right, world Z up. Y is dropped.
fn frame_svg(frame: &GeometryFrame, window: (f64, f64, f64, f64), style: &RenderStyle) -> String {
    let (x0, ztop, w, h) = window;
    let px = |p: &Vec3| ((p[0] - x0) * style.svg_scale + style.svg_margin, (ztop - p[2]) * style.svg_scale + style.svg_margin);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(
        s,
        r#"<metadata>{{"frame":{},"projection":"xz","scale_px_per_m":{},"origin_m":[{:.6},{:.6}]}}</metadata>"#,
        frame.frame, style.svg_scale, x0, ztop
    );
    for c in &frame.cylinders {
        let a = [0, 1, 2].map(|k| c.c[k] - 0.5 * c.len * c.axis[k]);
        let b = [0, 1, 2].map(|k| c.c[k] + 0.5 * c.len * c.axis[k]);
        let (ax, az) = px(&a);
        let (bx, bz) = px(&b);
        let _ = writeln!(
            s,
            r#"<line class="bone" x1="{ax:.3}" y1="{az:.3}" x2="{bx:.3}" y2="{bz:.3}" stroke="black" stroke-width="{:.3}"/>"#,
            2.0 * c.r * style.svg_scale
        );
    }
    for sp in &frame.spheres {
        let (cx, cz) = px(&sp.c);
        let _ = writeln!(s, r#"<circle class="{}" cx="{cx:.3}" cy="{cz:.3}" r="{:.3}"/>"#, sp.tag, sp.r * style.svg_scale);
    }
    s.push_str("</svg>\n");
    s
}

/// SVG documents, one per frame, sharing a page window.
pub fn to_svg(frames: &[GeometryFrame], style: &RenderStyle) -> Vec<String> {
    let window = page_window(frames, style);
    frames.iter().map(|f| frame_svg(f, window, style)).collect()
}

/// Writes `geometry.jsonl` or `frame_000.svg`, `frame_001.svg`, ... into `dir`.
pub fn export_geometry(
    frames: &[GeometryFrame],
    format: ExportFormat,
    dir: &Path,
    style: &RenderStyle,
) -> Result<Vec<PathBuf>, RenderError> {
    if frames.is_empty() {
        return Err(RenderError::Empty);
    }
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files: Vec<(PathBuf, String)> = match format {
        ExportFormat::Jsonl => vec![(dir.join("geometry.jsonl"), to_jsonl(frames)?)],
        ExportFormat::SvgOrtho => to_svg(frames, style)
            .into_iter()
            .zip(frames)
            .map(|(svg, f)| (dir.join(format!("frame_{:03}.svg", f.frame)), svg))
            .collect(),
    };
    for (path, text) in &files {
        std::fs::write(path, text).map_err(io_err(path))?;
    }
    Ok(files.into_iter().map(|(p, _)| p).collect())
}
