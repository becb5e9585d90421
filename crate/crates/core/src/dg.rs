//! Piecewise-linear discontinuous finite element space on a triangle mesh.
//!
//! Fields use the nodal basis: the three coefficients of an element are the
//! values at its vertices, so each basis function is a barycentric coordinate
//! and the cell mean is the arithmetic mean of the coefficients.

use crate::error::{Error, Result};
use crate::mesh::TriMesh;
use crate::scalar::{Real, Vec2};

/// Quadrature on the reference triangle in barycentric coordinates. Weights
/// are normalized to sum to one, so `|E| * sum(w_q f(x_q))` integrates over `E`.
#[derive(Clone, Debug)]
pub struct TriangleRule<T> {
    pub points: Vec<[T; 3]>,
    pub weights: Vec<T>,
    pub degree: usize,
}

/// Quadrature on `[0, 1]` with weights summing to one.
#[derive(Clone, Debug)]
pub struct LineRule<T> {
    pub points: Vec<T>,
    pub weights: Vec<T>,
    pub degree: usize,
}

impl<T: Real> TriangleRule<T> {
    fn from_orbits(orbits: &[(f64, f64, f64)], degree: usize) -> Self {
        // each orbit: (weight, a, b) expands to the permutations of (a, b, 1 - a - b)
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for &(w, a, b) in orbits {
            let c = 1.0 - a - b;
            let mut perms: Vec<[f64; 3]> = vec![[a, b, c], [a, c, b], [b, a, c], [b, c, a], [c, a, b], [c, b, a]];
            perms.sort_by(|x, y| x.partial_cmp(y).unwrap());
            perms.dedup_by(|x, y| x.iter().zip(y.iter()).all(|(p, q)| (p - q).abs() < 1e-15));
            for p in perms {
                points.push([T::lit(p[0]), T::lit(p[1]), T::lit(p[2])]);
                weights.push(T::lit(w));
            }
        }
        Self {
            points,
            weights,
            degree,
        }
    }

    /// 6-point rule exact for degree 4.
    pub fn degree4() -> Self {
        Self::from_orbits(
            &[
                (0.223_381_589_678_011_5, 0.445_948_490_915_965, 0.445_948_490_915_965),
                (0.109_951_743_655_321_9, 0.091_576_213_509_771, 0.091_576_213_509_771),
            ],
            4,
        )
    }

    /// 12-point rule exact for degree 6, used for errors and projections.
    pub fn degree6() -> Self {
        Self::from_orbits(
            &[
                (0.116_786_275_726_379, 0.249_286_745_170_910, 0.249_286_745_170_910),
                (0.050_844_906_370_207, 0.063_089_014_491_502, 0.063_089_014_491_502),
                (0.082_851_075_618_374, 0.053_145_049_844_817, 0.310_352_451_033_784),
            ],
            6,
        )
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

impl<T: Real> LineRule<T> {
    /// 3-point Gauss-Legendre, exact for degree 5.
    pub fn gauss3() -> Self {
        let d = 0.5 * (0.6f64).sqrt();
        Self {
            points: vec![T::lit(0.5 - d), T::lit(0.5), T::lit(0.5 + d)],
            weights: vec![T::lit(5.0 / 18.0), T::lit(8.0 / 18.0), T::lit(5.0 / 18.0)],
            degree: 5,
        }
    }
}

/// Face quadrature data for one side of a face.
#[derive(Clone, Debug)]
pub struct FaceSide<T> {
    pub elem: usize,
    /// Barycentric coordinates in `elem` of each face quadrature point.
    pub bary: Vec<[T; 3]>,
}

/// Precomputed geometry of a face: quadrature points with weights already
/// multiplied by the face length, and the trace maps of both sides.
#[derive(Clone, Debug)]
pub struct FaceQuadrature<T> {
    pub points: Vec<Vec2<T>>,
    pub weights: Vec<T>,
    pub plus: FaceSide<T>,
    pub minus: Option<FaceSide<T>>,
}

/// The P1 discontinuous space with cached quadrature and basis data.
#[derive(Clone, Debug)]
pub struct DgSpace<T> {
    mesh: TriMesh<T>,
    elem_rule: TriangleRule<T>,
    fine_rule: TriangleRule<T>,
    line_rule: LineRule<T>,
    grads: Vec<[Vec2<T>; 3]>,
    face_quad: Vec<FaceQuadrature<T>>,
}

impl<T: Real> DgSpace<T> {
    pub fn new(mesh: TriMesh<T>) -> Self {
        let elem_rule = TriangleRule::degree4();
        let fine_rule = TriangleRule::degree6();
        let line_rule = LineRule::gauss3();
        let grads = (0..mesh.num_elements())
            .map(|e| basis_gradients(&mesh.element_vertices(e)))
            .collect();
        let face_quad = mesh
            .faces()
            .iter()
            .map(|f| {
                let pa = mesh.vertices()[f.vertices[0]];
                let pb = mesh.vertices()[f.vertices[1]];
                let points: Vec<Vec2<T>> = line_rule
                    .points
                    .iter()
                    .map(|&t| [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])])
                    .collect();
                let weights = line_rule.weights.iter().map(|&w| w * f.length).collect();
                let side = |elem: usize| FaceSide {
                    elem,
                    bary: line_rule
                        .points
                        .iter()
                        .map(|&t| {
                            let tri = mesh.triangles()[elem];
                            let mut b = [T::zero(); 3];
                            for (i, &v) in tri.iter().enumerate() {
                                if v == f.vertices[0] {
                                    b[i] = T::one() - t;
                                } else if v == f.vertices[1] {
                                    b[i] = t;
                                }
                            }
                            b
                        })
                        .collect(),
                };
                FaceQuadrature {
                    points,
                    weights,
                    plus: side(f.plus_elem),
                    minus: f.minus_elem().map(side),
                }
            })
            .collect();
        Self {
            mesh,
            elem_rule,
            fine_rule,
            line_rule,
            grads,
            face_quad,
        }
    }

    pub fn mesh(&self) -> &TriMesh<T> {
        &self.mesh
    }

    pub fn num_elements(&self) -> usize {
        self.mesh.num_elements()
    }

    pub fn num_dofs(&self) -> usize {
        3 * self.mesh.num_elements()
    }

    pub fn elem_rule(&self) -> &TriangleRule<T> {
        &self.elem_rule
    }

    pub fn fine_rule(&self) -> &TriangleRule<T> {
        &self.fine_rule
    }

    pub fn line_rule(&self) -> &LineRule<T> {
        &self.line_rule
    }

    /// Gradients of the three nodal basis functions of `elem`.
    pub fn grads(&self, elem: usize) -> &[Vec2<T>; 3] {
        &self.grads[elem]
    }

    pub fn face_quadrature(&self, face: usize) -> &FaceQuadrature<T> {
        &self.face_quad[face]
    }

    /// Physical location of barycentric point `b` in `elem`.
    pub fn map_point(&self, elem: usize, b: &[T; 3]) -> Vec2<T> {
        let v = self.mesh.element_vertices(elem);
        [
            b[0] * v[0][0] + b[1] * v[1][0] + b[2] * v[2][0],
            b[0] * v[0][1] + b[1] * v[1][1] + b[2] * v[2][1],
        ]
    }

    pub fn barycentric(&self, elem: usize, p: Vec2<T>) -> [T; 3] {
        let [a, b, c] = self.mesh.element_vertices(elem);
        let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        let l1 = ((p[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (p[1] - a[1])) / det;
        let l2 = ((b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1])) / det;
        [T::one() - l1 - l2, l1, l2]
    }

    /// Value of `f` at `p`, which must lie in `elem` up to 1e-10 in barycentric
    /// coordinates.
    pub fn evaluate(&self, f: &DgField<T>, elem: usize, p: Vec2<T>) -> Result<T> {
        let b = self.barycentric(elem, p);
        let tol = T::lit(-1e-10);
        if b.iter().any(|&l| l < tol) {
            return Err(Error::OutsideElement {
                elem,
                x: p[0].as_f64(),
                y: p[1].as_f64(),
            });
        }
        Ok(f.value_at(elem, &b))
    }

    /// L2 projection of `g` onto the space, element by element.
    pub fn l2_project<G: Fn(Vec2<T>) -> T>(&self, g: G) -> DgField<T> {
        let mut coeffs = Vec::with_capacity(self.num_dofs());
        for e in 0..self.num_elements() {
            coeffs.extend_from_slice(&self.l2_project_element(e, |b| g(self.map_point(e, b))));
        }
        DgField { coeffs }
    }

    /// Local projection on `elem` of a function given in barycentric coordinates.
    pub fn l2_project_element<G: Fn(&[T; 3]) -> T>(&self, _elem: usize, g: G) -> [T; 3] {
        // rhs_i = (1/|E|) int g phi_i; the scaled local mass inverse is 3 [[3,-1,-1],..]
        let mut rhs = [T::zero(); 3];
        for (b, &w) in self.fine_rule.points.iter().zip(&self.fine_rule.weights) {
            let gv = g(b);
            for i in 0..3 {
                rhs[i] += w * gv * b[i];
            }
        }
        let s = rhs[0] + rhs[1] + rhs[2];
        let three = T::lit(3.0);
        let four = T::lit(4.0);
        rhs.map(|r| three * (four * r - s))
    }

    /// Jump and average of `f` at the quadrature points of `face`.
    /// On boundary faces both equal the trace.
    pub fn jump_average(&self, f: &DgField<T>, face: usize) -> (Vec<T>, Vec<T>) {
        let q = &self.face_quad[face];
        let plus = self.trace(f, &q.plus);
        match &q.minus {
            Some(m) => {
                let minus = self.trace(f, m);
                let half = T::lit(0.5);
                let jump = plus.iter().zip(&minus).map(|(&a, &b)| a - b).collect();
                let avg = plus.iter().zip(&minus).map(|(&a, &b)| half * (a + b)).collect();
                (jump, avg)
            }
            None => (plus.clone(), plus),
        }
    }

    pub fn trace(&self, f: &DgField<T>, side: &FaceSide<T>) -> Vec<T> {
        side.bary.iter().map(|b| f.value_at(side.elem, b)).collect()
    }

    pub fn cell_means(&self, f: &DgField<T>) -> Vec<T> {
        f.cell_means()
    }

    /// Integral of `g(x, value of f)` over every element with the degree-6 rule.
    pub fn integrate_elementwise<G: Fn(Vec2<T>, T) -> T>(&self, f: &DgField<T>, g: G) -> Vec<T> {
        (0..self.num_elements())
            .map(|e| {
                let area = self.mesh.area(e);
                self.fine_rule
                    .points
                    .iter()
                    .zip(&self.fine_rule.weights)
                    .map(|(b, &w)| w * g(self.map_point(e, b), f.value_at(e, b)))
                    .sum::<T>()
                    * area
            })
            .collect()
    }
}

/// Gradients of the barycentric coordinates of a triangle.
pub fn basis_gradients<T: Real>(v: &[Vec2<T>; 3]) -> [Vec2<T>; 3] {
    let two_a = (v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]);
    [
        [(v[1][1] - v[2][1]) / two_a, (v[2][0] - v[1][0]) / two_a],
        [(v[2][1] - v[0][1]) / two_a, (v[0][0] - v[2][0]) / two_a],
        [(v[0][1] - v[1][1]) / two_a, (v[1][0] - v[0][0]) / two_a],
    ]
}

/// A scalar P1 DG field: three nodal coefficients per element.
#[derive(Clone, Debug, PartialEq)]
pub struct DgField<T> {
    coeffs: Vec<T>,
}

impl<T: Real> DgField<T> {
    pub fn constant(num_elements: usize, c: T) -> Self {
        Self {
            coeffs: vec![c; 3 * num_elements],
        }
    }

    pub fn from_coeffs(coeffs: Vec<T>) -> Self {
        assert!(
            coeffs.len().is_multiple_of(3),
            "coefficient count must be a multiple of 3"
        );
        Self { coeffs }
    }

    /// Nodal interpolation of `g` at the element vertices.
    pub fn interpolate<G: Fn(Vec2<T>) -> T>(mesh: &TriMesh<T>, g: G) -> Self {
        let mut coeffs = Vec::with_capacity(3 * mesh.num_elements());
        for e in 0..mesh.num_elements() {
            for v in mesh.element_vertices(e) {
                coeffs.push(g(v));
            }
        }
        Self { coeffs }
    }

    pub fn num_elements(&self) -> usize {
        self.coeffs.len() / 3
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [T] {
        &mut self.coeffs
    }

    #[inline]
    pub fn elem(&self, e: usize) -> [T; 3] {
        [self.coeffs[3 * e], self.coeffs[3 * e + 1], self.coeffs[3 * e + 2]]
    }

    #[inline]
    pub fn set_elem(&mut self, e: usize, v: [T; 3]) {
        self.coeffs[3 * e..3 * e + 3].copy_from_slice(&v);
    }

    #[inline]
    pub fn value_at(&self, e: usize, b: &[T; 3]) -> T {
        let c = self.elem(e);
        c[0] * b[0] + c[1] * b[1] + c[2] * b[2]
    }

    #[inline]
    pub fn gradient(&self, e: usize, grads: &[Vec2<T>; 3]) -> Vec2<T> {
        let c = self.elem(e);
        [
            c[0] * grads[0][0] + c[1] * grads[1][0] + c[2] * grads[2][0],
            c[0] * grads[0][1] + c[1] * grads[1][1] + c[2] * grads[2][1],
        ]
    }

    pub fn cell_means(&self) -> Vec<T> {
        let third = T::one() / T::lit(3.0);
        self.coeffs
            .chunks_exact(3)
            .map(|c| (c[0] + c[1] + c[2]) * third)
            .collect()
    }

    pub fn min(&self) -> T {
        self.coeffs.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.coeffs.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn space(n: usize) -> DgSpace<f64> {
        DgSpace::new(TriMesh::generate_crossed(n, n, 1.0, 1.0).unwrap())
    }

    fn monomial_integral_ref(p: u32, q: u32) -> f64 {
        // int over (0,0),(1,0),(0,1) of x^p y^q = p! q! / (p+q+2)!
        let f = |n: u32| (1..=n).map(f64::from).product::<f64>();
        f(p) * f(q) / f(p + q + 2)
    }

    #[test]
    fn rules_integrate_monomials_exactly() {
        for (rule, deg) in [(TriangleRule::<f64>::degree4(), 4), (TriangleRule::degree6(), 6)] {
            assert!((rule.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
            for p in 0..=deg {
                for q in 0..=(deg - p) {
                    // barycentric (l0, l1, l2) maps to (x, y) = (l1, l2); area 1/2
                    let approx: f64 = rule
                        .points
                        .iter()
                        .zip(&rule.weights)
                        .map(|(b, w)| w * b[1].powi(p as i32) * b[2].powi(q as i32))
                        .sum::<f64>()
                        * 0.5;
                    let exact = monomial_integral_ref(p, q);
                    assert!(
                        (approx - exact).abs() < 1e-14,
                        "deg {deg}: x^{p} y^{q}: {approx} vs {exact}"
                    );
                }
            }
        }
        let line = LineRule::<f64>::gauss3();
        for p in 0..=5 {
            let approx: f64 = line.points.iter().zip(&line.weights).map(|(t, w)| w * t.powi(p)).sum();
            assert!((approx - 1.0 / (p as f64 + 1.0)).abs() < 1e-15);
        }
    }

    #[test]
    fn evaluate_examples() {
        let s = DgSpace::new(
            TriMesh::<f64>::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap(),
        );
        let ones = DgField::from_coeffs(vec![1.0, 1.0, 1.0]);
        assert!((s.evaluate(&ones, 0, [0.2, 0.3]).unwrap() - 1.0).abs() < 1e-15);
        let f = DgField::from_coeffs(vec![0.0, 1.0, 0.0]);
        assert!((s.evaluate(&f, 0, [1.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        let f = DgField::from_coeffs(vec![0.0, 0.0, 3.0]);
        assert!((s.evaluate(&f, 0, [1.0 / 3.0, 1.0 / 3.0]).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            s.evaluate(&f, 0, [0.8, 0.8]),
            Err(Error::OutsideElement { elem: 0, .. })
        ));
    }

    #[test]
    fn projection_reproduces_p1() {
        let s = space(3);
        let f = s.l2_project(|_| 0.15);
        assert!(f.coeffs().iter().all(|&c| (c - 0.15).abs() < 1e-14));
        let f = s.l2_project(|p| p[0] + 2.0 * p[1]);
        for e in 0..s.num_elements() {
            for (i, v) in s.mesh().element_vertices(e).iter().enumerate() {
                assert!((f.elem(e)[i] - (v[0] + 2.0 * v[1])).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn projection_is_idempotent_elementwise() {
        let s = space(2);
        let f = DgField::from_coeffs((0..s.num_dofs()).map(|i| (i as f64 * 0.37).sin()).collect());
        // project f elementwise: every quadrature point of element e evaluates f on e
        let mut out = Vec::new();
        for e in 0..s.num_elements() {
            let single = s.l2_project_element(e, |b| f.value_at(e, b));
            out.extend_from_slice(&single);
        }
        for (a, b) in out.iter().zip(f.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn jump_average_identities() {
        let s = space(2);
        let a = DgField::from_coeffs((0..s.num_dofs()).map(|i| (i as f64 * 0.71).cos()).collect());
        let b = DgField::from_coeffs((0..s.num_dofs()).map(|i| (i as f64 * 1.3).sin()).collect());
        for f in 0..s.mesh().faces().len() {
            let q = s.face_quadrature(f);
            let (ja, aa) = s.jump_average(&a, f);
            let (jb, ab_) = s.jump_average(&b, f);
            let ta = s.trace(&a, &q.plus);
            let tb = s.trace(&b, &q.plus);
            for k in 0..ja.len() {
                let jab = match &q.minus {
                    Some(m) => ta[k] * tb[k] - s.trace(&a, m)[k] * s.trace(&b, m)[k],
                    None => ta[k] * tb[k],
                };
                if q.minus.is_some() {
                    assert!((aa[k] * jb[k] + ja[k] * ab_[k] - jab).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn jump_average_examples() {
        let s = space(1);
        // face between elements 0 and 1
        let f = (0..s.mesh().faces().len())
            .find(|&f| s.mesh().faces()[f].is_interior())
            .unwrap();
        let face = &s.mesh().faces()[f];
        let mut field = DgField::constant(4, 0.0);
        field.set_elem(face.plus_elem, [2.0; 3]);
        field.set_elem(face.minus_elem().unwrap(), [1.0; 3]);
        let (j, a) = s.jump_average(&field, f);
        assert!(j.iter().all(|&x| (x - 1.0).abs() < 1e-15));
        assert!(a.iter().all(|&x| (x - 1.5).abs() < 1e-15));
        let cont = s.l2_project(|p| 3.0 * p[0] - p[1]);
        for f in 0..s.mesh().faces().len() {
            if s.mesh().faces()[f].is_interior() {
                assert!(s.jump_average(&cont, f).0.iter().all(|x| x.abs() < 1e-12));
            }
        }
        let b = (0..s.mesh().faces().len())
            .find(|&f| !s.mesh().faces()[f].is_interior())
            .unwrap();
        let seven = DgField::constant(4, 7.0);
        let (j, a) = s.jump_average(&seven, b);
        assert!(j.iter().chain(&a).all(|&x| (x - 7.0).abs() < 1e-14));
    }

    #[test]
    fn cell_mean_examples() {
        let f = DgField::from_coeffs(vec![0.3f64, 0.6, 0.9]);
        assert!((f.cell_means()[0] - 0.6).abs() < 1e-15);
        let s = DgSpace::new(
            TriMesh::<f64>::from_parts(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], vec![[0, 1, 2]]).unwrap(),
        );
        let x = DgField::interpolate(s.mesh(), |p| p[0]);
        assert!((s.cell_means(&x)[0] - 1.0 / 3.0).abs() < 1e-15);
        // mean equals (1/|E|) int f computed by quadrature
        let int = s.integrate_elementwise(&x, |_, v| v)[0] / s.mesh().area(0);
        assert!((int - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn projection_error_is_second_order() {
        let exact = |p: Vec2<f64>| 0.4 + 0.4 * p[0] * p[1] + p[0].cos();
        let err = |n: usize| {
            let s = space(n);
            let f = s.l2_project(exact);
            crate::diagnostics::l2_error(&s, &f, exact)
        };
        let ratio = err(4) / err(8);
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio}");
    }
}
