//! Conforming triangular meshes with face connectivity and boundary tags.
//!
//! Local conventions used throughout the crate:
//! - triangle vertices are stored counterclockwise;
//! - local face `k` of a triangle joins its local vertices `k` and `(k + 1) % 3`;
//! - every face stores a unit normal pointing from its plus element to its
//!   minus element (outward on the boundary), where the plus element is the
//!   lower triangle index.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{Real, Vec2};

/// Boundary condition class for the pressure equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PressureBc {
    Dirichlet,
    Neumann,
}

/// Boundary condition class for the saturation equation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SaturationBc {
    Dirichlet,
    Outflow,
    Neumann,
}

/// The five boundary sets of the model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BoundaryClass {
    DirichletPressure,
    NeumannPressure,
    DirichletSaturation,
    Outflow,
    NeumannSaturation,
}

impl From<PressureBc> for BoundaryClass {
    fn from(bc: PressureBc) -> Self {
        match bc {
            PressureBc::Dirichlet => BoundaryClass::DirichletPressure,
            PressureBc::Neumann => BoundaryClass::NeumannPressure,
        }
    }
}

impl From<SaturationBc> for BoundaryClass {
    fn from(bc: SaturationBc) -> Self {
        match bc {
            SaturationBc::Dirichlet => BoundaryClass::DirichletSaturation,
            SaturationBc::Outflow => BoundaryClass::Outflow,
            SaturationBc::Neumann => BoundaryClass::NeumannSaturation,
        }
    }
}

/// Tag carried by a classified boundary face.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundaryTag {
    pub pressure: PressureBc,
    pub saturation: SaturationBc,
    /// Index of the rule that claimed the face; boundary data is looked up by it.
    pub rule: usize,
}

impl BoundaryTag {
    pub fn classes(&self) -> [BoundaryClass; 2] {
        [self.pressure.into(), self.saturation.into()]
    }
}

/// Which boundary faces a rule applies to, tested at the face midpoint.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySelector {
    Left,
    Right,
    Bottom,
    Top,
    All,
    /// Faces whose midpoint lies in `[x0, x1] x [y0, y1]`.
    Box {
        x0: f64,
        x1: f64,
        y0: f64,
        y1: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryRule {
    pub selector: BoundarySelector,
    pub pressure: PressureBc,
    pub saturation: SaturationBc,
}

impl BoundaryRule {
    pub fn new(selector: BoundarySelector, pressure: PressureBc, saturation: SaturationBc) -> Self {
        Self {
            selector,
            pressure,
            saturation,
        }
    }
}

#[derive(Clone, Debug)]
pub struct FaceRecord<T> {
    /// End points, ordered counterclockwise with respect to the plus element.
    pub vertices: [usize; 2],
    pub plus_elem: usize,
    pub plus_local: usize,
    /// Minus element and its local face index; `None` on the boundary.
    pub minus: Option<(usize, usize)>,
    pub normal: Vec2<T>,
    pub length: T,
    pub midpoint: Vec2<T>,
    pub boundary: Option<BoundaryTag>,
}

impl<T> FaceRecord<T> {
    #[inline]
    pub fn is_interior(&self) -> bool {
        self.minus.is_some()
    }

    #[inline]
    pub fn minus_elem(&self) -> Option<usize> {
        self.minus.map(|(e, _)| e)
    }
}

#[derive(Clone, Debug)]
pub struct TriMesh<T> {
    vertices: Vec<Vec2<T>>,
    triangles: Vec<[usize; 3]>,
    faces: Vec<FaceRecord<T>>,
    elem_faces: Vec<[usize; 3]>,
    areas: Vec<T>,
    h: T,
    classified: bool,
}

impl<T: Real> TriMesh<T> {
    /// Builds the connectivity of an arbitrary conforming triangulation.
    ///
    /// Clockwise triangles are reoriented; degenerate ones are rejected.
    pub fn from_parts(vertices: Vec<Vec2<T>>, mut triangles: Vec<[usize; 3]>) -> Result<Self> {
        if triangles.is_empty() {
            return Err(Error::Mesh("no triangles".into()));
        }
        let nv = vertices.len();
        let mut areas = Vec::with_capacity(triangles.len());
        for (e, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= nv) {
                return Err(Error::Mesh(format!("triangle {e} references a missing vertex")));
            }
            let mut a = signed_area(&vertices, tri);
            if a < T::zero() {
                tri.swap(1, 2);
                a = -a;
            }
            if !(a > T::zero()) {
                return Err(Error::Mesh(format!("triangle {e} is degenerate")));
            }
            areas.push(a);
        }

        let mut faces: Vec<FaceRecord<T>> = Vec::with_capacity(triangles.len() * 2);
        let mut elem_faces = vec![[usize::MAX; 3]; triangles.len()];
        let mut lookup: HashMap<(usize, usize), usize> = HashMap::with_capacity(triangles.len() * 2);
        for (e, tri) in triangles.iter().enumerate() {
            for k in 0..3 {
                let a = tri[k];
                let b = tri[(k + 1) % 3];
                let key = (a.min(b), a.max(b));
                match lookup.get(&key) {
                    Some(&f) => {
                        let face = &mut faces[f];
                        if face.minus.is_some() {
                            return Err(Error::Mesh(format!(
                                "edge ({a}, {b}) is shared by more than two triangles"
                            )));
                        }
                        if face.vertices != [b, a] {
                            return Err(Error::Mesh(format!("edge ({a}, {b}) has inconsistent orientation")));
                        }
                        face.minus = Some((e, k));
                        elem_faces[e][k] = f;
                    }
                    None => {
                        let pa = vertices[a];
                        let pb = vertices[b];
                        let d = [pb[0] - pa[0], pb[1] - pa[1]];
                        let length = d[0].hypot(d[1]);
                        let half = T::lit(0.5);
                        faces.push(FaceRecord {
                            vertices: [a, b],
                            plus_elem: e,
                            plus_local: k,
                            minus: None,
                            normal: [d[1] / length, -d[0] / length],
                            length,
                            midpoint: [half * (pa[0] + pb[0]), half * (pa[1] + pb[1])],
                            boundary: None,
                        });
                        let f = faces.len() - 1;
                        lookup.insert(key, f);
                        elem_faces[e][k] = f;
                    }
                }
            }
        }

        let h = faces.iter().map(|f| f.length).fold(T::zero(), |acc, l| acc.max(l));
        Ok(Self {
            vertices,
            triangles,
            faces,
            elem_faces,
            areas,
            h,
            classified: false,
        })
    }

    /// Structured "crossed" mesh of `[0, lx] x [0, ly]`: every rectangular
    /// cell is split into four triangles through its centroid.
    pub fn generate_crossed(nx: usize, ny: usize, lx: T, ly: T) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::param("mesh.nx/ny", "cell counts must be at least 1"));
        }
        if !(lx > T::zero()) || !(ly > T::zero()) {
            return Err(Error::param("mesh.lx/ly", "domain lengths must be positive"));
        }
        let dx = lx / T::of(nx);
        let dy = ly / T::of(ny);
        let corner = |i: usize, j: usize| j * (nx + 1) + i;
        let ncorner = (nx + 1) * (ny + 1);
        let mut vertices = Vec::with_capacity(ncorner + nx * ny);
        for j in 0..=ny {
            for i in 0..=nx {
                vertices.push([T::of(i) * dx, T::of(j) * dy]);
            }
        }
        let half = T::lit(0.5);
        for j in 0..ny {
            for i in 0..nx {
                vertices.push([(T::of(i) + half) * dx, (T::of(j) + half) * dy]);
            }
        }
        let mut triangles = Vec::with_capacity(4 * nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let c = ncorner + j * nx + i;
                let v00 = corner(i, j);
                let v10 = corner(i + 1, j);
                let v11 = corner(i + 1, j + 1);
                let v01 = corner(i, j + 1);
                triangles.push([v00, v10, c]);
                triangles.push([v10, v11, c]);
                triangles.push([v11, v01, c]);
                triangles.push([v01, v00, c]);
            }
        }
        let mut mesh = Self::from_parts(vertices, triangles)?;
        mesh.h = dx;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vec2<T>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn faces(&self) -> &[FaceRecord<T>] {
        &self.faces
    }

    pub fn elem_faces(&self) -> &[[usize; 3]] {
        &self.elem_faces
    }

    pub fn num_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn area(&self, elem: usize) -> T {
        self.areas[elem]
    }

    pub fn areas(&self) -> &[T] {
        &self.areas
    }

    /// Mesh size used in the penalty terms: the cell edge for crossed meshes,
    /// the longest edge otherwise.
    pub fn h(&self) -> T {
        self.h
    }

    pub fn set_h(&mut self, h: T) {
        self.h = h;
    }

    pub fn element_vertices(&self, elem: usize) -> [Vec2<T>; 3] {
        let t = self.triangles[elem];
        [self.vertices[t[0]], self.vertices[t[1]], self.vertices[t[2]]]
    }

    pub fn centroid(&self, elem: usize) -> Vec2<T> {
        let [a, b, c] = self.element_vertices(elem);
        let third = T::one() / T::lit(3.0);
        [(a[0] + b[0] + c[0]) * third, (a[1] + b[1] + c[1]) * third]
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = (usize, &FaceRecord<T>)> {
        self.faces.iter().enumerate().filter(|(_, f)| !f.is_interior())
    }

    pub fn interior_faces(&self) -> impl Iterator<Item = (usize, &FaceRecord<T>)> {
        self.faces.iter().enumerate().filter(|(_, f)| f.is_interior())
    }

    pub fn is_classified(&self) -> bool {
        self.classified
    }

    /// Outward unit normal of `elem` on face `face`.
    pub fn outward_normal(&self, elem: usize, face: usize) -> Vec2<T> {
        let f = &self.faces[face];
        if f.plus_elem == elem {
            f.normal
        } else {
            [-f.normal[0], -f.normal[1]]
        }
    }

    /// Neighbor across local face `k` of `elem`, if any.
    pub fn neighbor(&self, elem: usize, k: usize) -> Option<usize> {
        let f = &self.faces[self.elem_faces[elem][k]];
        match f.minus {
            Some((m, _)) if f.plus_elem == elem => Some(m),
            Some(_) => Some(f.plus_elem),
            None => None,
        }
    }

    pub fn bounding_box(&self) -> [Vec2<T>; 2] {
        let mut lo = [T::infinity(); 2];
        let mut hi = [T::neg_infinity(); 2];
        for v in &self.vertices {
            for d in 0..2 {
                lo[d] = lo[d].min(v[d]);
                hi[d] = hi[d].max(v[d]);
            }
        }
        [lo, hi]
    }

    /// Tags every boundary face with the first matching rule.
    ///
    /// Fails if a face is not covered or if a rule violates the partition
    /// constraints (Dirichlet saturation needs Dirichlet pressure, outflow is
    /// exactly Dirichlet pressure without Dirichlet saturation).
    pub fn classify_boundary(mut self, rules: &[BoundaryRule]) -> Result<Self> {
        for (i, rule) in rules.iter().enumerate() {
            let ok = matches!(
                (rule.pressure, rule.saturation),
                (PressureBc::Dirichlet, SaturationBc::Dirichlet)
                    | (PressureBc::Dirichlet, SaturationBc::Outflow)
                    | (PressureBc::Neumann, SaturationBc::Neumann)
            );
            if !ok {
                return Err(Error::Boundary(format!(
                    "rule {i} pairs {:?} pressure with {:?} saturation; saturation Dirichlet and \
                     outflow faces must be Dirichlet pressure faces and Neumann pressure faces \
                     must be Neumann saturation faces",
                    rule.pressure, rule.saturation
                )));
            }
        }
        let [lo, hi] = self.bounding_box();
        let diam = (hi[0] - lo[0]).hypot(hi[1] - lo[1]);
        let tol = T::lit(1e-9) * diam;
        for f in 0..self.faces.len() {
            if self.faces[f].is_interior() {
                continue;
            }
            let m = self.faces[f].midpoint;
            let hit = rules.iter().position(|r| selects(&r.selector, m, lo, hi, tol));
            let Some(rule) = hit else {
                return Err(Error::Boundary(format!(
                    "boundary face {f} at ({}, {}) is not covered by any rule",
                    m[0], m[1]
                )));
            };
            self.faces[f].boundary = Some(BoundaryTag {
                pressure: rules[rule].pressure,
                saturation: rules[rule].saturation,
                rule,
            });
        }
        self.classified = true;
        Ok(self)
    }

    /// Triangles incident to each vertex, in increasing element order.
    pub fn vertex_patches(&self) -> Vec<Vec<usize>> {
        let mut patches = vec![Vec::new(); self.vertices.len()];
        for (e, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                patches[v].push(e);
            }
        }
        patches
    }

    /// Reads the plain-text `node/ele` format: vertex count, coordinates,
    /// triangle count, 0-based index triples.
    pub fn read_node_ele(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_node_ele(&text)
    }

    pub fn parse_node_ele(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace();
        let mut next = |what: &str| {
            tokens
                .next()
                .ok_or_else(|| Error::Mesh(format!("unexpected end of file reading {what}")))
        };
        let parse_usize = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::Mesh(format!("expected an integer, found `{s}`")))
        };
        let parse_real = |s: &str| {
            s.parse::<f64>()
                .map(T::lit)
                .map_err(|_| Error::Mesh(format!("expected a number, found `{s}`")))
        };
        let nv = parse_usize(next("vertex count")?)?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let x = parse_real(next("x")?)?;
            let y = parse_real(next("y")?)?;
            vertices.push([x, y]);
        }
        let nt = parse_usize(next("triangle count")?)?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let a = parse_usize(next("index")?)?;
            let b = parse_usize(next("index")?)?;
            let c = parse_usize(next("index")?)?;
            triangles.push([a, b, c]);
        }
        Self::from_parts(vertices, triangles)
    }

    pub fn to_node_ele(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{}", self.vertices.len());
        for v in &self.vertices {
            let _ = writeln!(out, "{:e} {:e}", v[0], v[1]);
        }
        let _ = writeln!(out, "{}", self.triangles.len());
        for t in &self.triangles {
            let _ = writeln!(out, "{} {} {}", t[0], t[1], t[2]);
        }
        out
    }

    pub fn write_node_ele(&self, path: &Path) -> Result<()> {
        crate::vtk::write_atomic(path, self.to_node_ele().as_bytes())
    }
}

fn signed_area<T: Real>(vertices: &[Vec2<T>], tri: &[usize; 3]) -> T {
    let a = vertices[tri[0]];
    let b = vertices[tri[1]];
    let c = vertices[tri[2]];
    T::lit(0.5) * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn selects<T: Real>(sel: &BoundarySelector, m: Vec2<T>, lo: Vec2<T>, hi: Vec2<T>, tol: T) -> bool {
    match *sel {
        BoundarySelector::Left => (m[0] - lo[0]).abs() <= tol,
        BoundarySelector::Right => (m[0] - hi[0]).abs() <= tol,
        BoundarySelector::Bottom => (m[1] - lo[1]).abs() <= tol,
        BoundarySelector::Top => (m[1] - hi[1]).abs() <= tol,
        BoundarySelector::All => true,
        BoundarySelector::Box { x0, x1, y0, y1 } => {
            let (x, y) = (m[0].as_f64(), m[1].as_f64());
            let t = tol.as_f64();
            x >= x0 - t && x <= x1 + t && y >= y0 - t && y <= y1 + t
        }
    }
}

/// Rules of the pressure-driven experiments: injection on the left, outflow
/// on the right, no-flow top and bottom.
pub fn pressure_driven_rules() -> Vec<BoundaryRule> {
    vec![
        BoundaryRule::new(BoundarySelector::Left, PressureBc::Dirichlet, SaturationBc::Dirichlet),
        BoundaryRule::new(BoundarySelector::Right, PressureBc::Dirichlet, SaturationBc::Outflow),
        BoundaryRule::new(BoundarySelector::All, PressureBc::Neumann, SaturationBc::Neumann),
    ]
}

pub fn no_flow_rules() -> Vec<BoundaryRule> {
    vec![BoundaryRule::new(
        BoundarySelector::All,
        PressureBc::Neumann,
        SaturationBc::Neumann,
    )]
}

pub fn all_dirichlet_rules() -> Vec<BoundaryRule> {
    vec![BoundaryRule::new(
        BoundarySelector::All,
        PressureBc::Dirichlet,
        SaturationBc::Dirichlet,
    )]
}
