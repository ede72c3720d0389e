//! Lattice discretisation of balls, nodal fields, finite differences and
//! discrete norms.
//!
//! A [`BallGrid`] is the tensor lattice `center + h·ℤⁿ` restricted to the open
//! ball. Lattice points outside the ball that are reached by an interior
//! node's stencil form the boundary layer; Dirichlet data lives there,
//! sampled at each point's radial projection onto the sphere.

use std::collections::HashMap;
use std::sync::Arc;

use smallvec::smallvec;

use crate::error::{invalid, Error, Result};
use crate::linalg::SymMatrix;
use crate::scalar::{dist, norm2, Real, Vector};

/// Stencil directions, in neighbour-table order. Only the first two are
/// used in 1D.
pub const DIRECTIONS: [[i64; 2]; 8] = [
    [1, 0],
    [-1, 0],
    [0, 1],
    [0, -1],
    [1, 1],
    [-1, -1],
    [1, -1],
    [-1, 1],
];

/// Lattice points closer than this fraction of the radius to the sphere are
/// treated as lying on it (hence exterior).
const ON_SPHERE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Node<T> {
    pub lattice: [i64; 2],
    pub coords: Vector<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryNode<T> {
    pub lattice: [i64; 2],
    pub coords: Vector<T>,
    /// Radial projection of `coords` onto the sphere.
    pub projection: Vector<T>,
}

/// A closed ball `{ |x - center| ≤ radius }` used to restrict norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball<T> {
    pub center: Vector<T>,
    pub radius: T,
}

impl<T: Real> Ball<T> {
    pub fn new(center: &[T], radius: T) -> Self {
        Self {
            center: center.iter().copied().collect(),
            radius,
        }
    }

    pub fn centered(dim: usize, radius: T) -> Self {
        Self {
            center: smallvec![T::zero(); dim],
            radius,
        }
    }

    pub fn contains(&self, x: &[T]) -> bool {
        dist(x, &self.center) <= self.radius * (T::one() + T::lit(ON_SPHERE_RTOL))
    }
}

#[derive(Debug, Clone)]
pub struct BallGrid<T> {
    dim: usize,
    center: Vector<T>,
    radius: T,
    h: T,
    interior: Vec<Node<T>>,
    boundary: Vec<BoundaryNode<T>>,
    /// Global value indices of the stencil neighbours of each interior node.
    stencil: Vec<[usize; 8]>,
    lookup: HashMap<[i64; 2], usize>,
}

/// Builds the lattice discretisation of `B_radius(center)`.
pub fn build_ball_grid<T: Real>(center: &[T], radius: T, h: T, dim: usize) -> Result<BallGrid<T>> {
    BallGrid::new(center, radius, h, dim)
}

impl<T: Real> BallGrid<T> {
    pub fn new(center: &[T], radius: T, h: T, dim: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if center.len() != dim {
            return Err(invalid("center", format!("expected {dim} coordinates")));
        }
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(invalid("radius", "must be positive and finite"));
        }
        if !(h > T::zero()) || !h.is_finite() {
            return Err(invalid("h", "must be positive and finite"));
        }
        if h > radius * T::lit(0.5) {
            return Err(Error::GridTooCoarse {
                h: h.as_f64(),
                limit: (radius * T::lit(0.5)).as_f64(),
            });
        }

        let extent = (radius / h).ceil().to_i64().unwrap_or(0) + 1;
        let jrange = if dim == 2 { -extent..=extent } else { 0..=0 };
        let point = |i: i64, j: i64| -> Vector<T> {
            let mut x: Vector<T> = smallvec![center[0] + T::lit(i as f64) * h];
            if dim == 2 {
                x.push(center[1] + T::lit(j as f64) * h);
            }
            x
        };
        let inside = |x: &[T]| dist(x, center) < radius * (T::one() - T::lit(ON_SPHERE_RTOL));

        // Lexicographic order in (i, j).
        let mut interior = Vec::new();
        for i in -extent..=extent {
            for j in jrange.clone() {
                let x = point(i, j);
                if inside(&x) {
                    interior.push(Node {
                        lattice: [i, j],
                        coords: x,
                    });
                }
            }
        }

        let mut lookup: HashMap<[i64; 2], usize> = interior
            .iter()
            .enumerate()
            .map(|(k, node)| (node.lattice, k))
            .collect();

        let ndirs = if dim == 1 { 2 } else { 8 };
        let mut exterior: Vec<[i64; 2]> = Vec::new();
        for node in &interior {
            for d in &DIRECTIONS[..ndirs] {
                let key = [node.lattice[0] + d[0], node.lattice[1] + d[1]];
                if !lookup.contains_key(&key) {
                    exterior.push(key);
                }
            }
        }
        exterior.sort_unstable();
        exterior.dedup();

        let n_int = interior.len();
        let mut boundary = Vec::with_capacity(exterior.len());
        for (k, key) in exterior.into_iter().enumerate() {
            let coords = point(key[0], key[1]);
            let offset: Vector<T> = coords.iter().zip(center).map(|(&x, &c)| x - c).collect();
            let r = norm2(&offset);
            let projection = offset
                .iter()
                .zip(center)
                .map(|(&o, &c)| c + o * (radius / r))
                .collect();
            lookup.insert(key, n_int + k);
            boundary.push(BoundaryNode {
                lattice: key,
                coords,
                projection,
            });
        }

        let stencil = interior
            .iter()
            .map(|node| {
                let mut nb = [usize::MAX; 8];
                for (slot, d) in nb.iter_mut().zip(&DIRECTIONS[..ndirs]) {
                    *slot = lookup[&[node.lattice[0] + d[0], node.lattice[1] + d[1]]];
                }
                nb
            })
            .collect();

        Ok(Self {
            dim,
            center: center.iter().copied().collect(),
            radius,
            h,
            interior,
            boundary,
            stencil,
            lookup,
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self) -> &[T] {
        &self.center
    }

    #[inline]
    pub fn radius(&self) -> T {
        self.radius
    }

    #[inline]
    pub fn h(&self) -> T {
        self.h
    }

    pub fn interior(&self) -> &[Node<T>] {
        &self.interior
    }

    pub fn boundary(&self) -> &[BoundaryNode<T>] {
        &self.boundary
    }

    #[inline]
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    /// Interior plus boundary node count, i.e. the length of a field.
    #[inline]
    pub fn n_total(&self) -> usize {
        self.interior.len() + self.boundary.len()
    }

    #[inline]
    pub fn is_interior(&self, index: usize) -> bool {
        index < self.interior.len()
    }

    /// Neighbour indices of interior node `k`, in [`DIRECTIONS`] order.
    #[inline]
    pub fn neighbors(&self, k: usize) -> &[usize] {
        let ndirs = if self.dim == 1 { 2 } else { 8 };
        &self.stencil[k][..ndirs]
    }

    pub fn index_of(&self, lattice: [i64; 2]) -> Option<usize> {
        self.lookup.get(&lattice).copied()
    }

    pub fn lattice_of(&self, index: usize) -> [i64; 2] {
        if index < self.interior.len() {
            self.interior[index].lattice
        } else {
            self.boundary[index - self.interior.len()].lattice
        }
    }

    /// Position at which a node's value is meant: the lattice point for
    /// interior nodes, the sphere projection for boundary nodes.
    pub fn position(&self, index: usize) -> &[T] {
        if index < self.interior.len() {
            &self.interior[index].coords
        } else {
            &self.boundary[index - self.interior.len()].projection
        }
    }

    /// Largest `|x - center|` among interior nodes.
    pub fn max_interior_radius(&self) -> T {
        self.interior
            .iter()
            .map(|n| dist(&n.coords, &self.center))
            .fold(T::zero(), T::max)
    }

    /// Interior node indices lying in `ball`.
    pub fn nodes_in(&self, ball: &Ball<T>) -> Vec<usize> {
        self.interior
            .iter()
            .enumerate()
            .filter(|(_, n)| ball.contains(&n.coords))
            .map(|(k, _)| k)
            .collect()
    }

    /// Whether `ball` lies inside the grid ball.
    pub fn covers(&self, ball: &Ball<T>) -> bool {
        dist(&ball.center, &self.center) + ball.radius
            <= self.radius * (T::one() + T::lit(ON_SPHERE_RTOL))
    }
}

/// Nodal values on a [`BallGrid`] (interior nodes first, then boundary nodes).
#[derive(Debug, Clone)]
pub struct ScalarField<T> {
    grid: Arc<BallGrid<T>>,
    values: Vec<T>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(grid: Arc<BallGrid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.n_total() {
            return Err(invalid(
                "values",
                format!("expected {} values, got {}", grid.n_total(), values.len()),
            ));
        }
        check_finite(&values)?;
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<BallGrid<T>>, c: T) -> Self {
        let values = vec![c; grid.n_total()];
        Self { grid, values }
    }

    /// Samples `f` at interior lattice points and at boundary projections.
    pub fn from_fn(grid: Arc<BallGrid<T>>, f: impl Fn(&[T]) -> T) -> Result<Self> {
        let values = (0..grid.n_total()).map(|k| f(grid.position(k))).collect();
        Self::new(grid, values)
    }

    /// Samples `f` at the lattice coordinates of every node, boundary nodes
    /// included (no projection).
    pub fn from_fn_lattice(grid: Arc<BallGrid<T>>, f: impl Fn(&[T]) -> T) -> Result<Self> {
        let values = grid
            .interior()
            .iter()
            .map(|n| f(&n.coords))
            .chain(grid.boundary().iter().map(|b| f(&b.coords)))
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &BallGrid<T> {
        &self.grid
    }

    pub fn grid_arc(&self) -> &Arc<BallGrid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn interior_values(&self) -> &[T] {
        &self.values[..self.grid.n_interior()]
    }

    #[inline]
    pub fn value(&self, index: usize) -> T {
        self.values[index]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Value at a lattice point, if the point belongs to this grid.
    pub fn at_lattice(&self, lattice: [i64; 2]) -> Option<T> {
        self.grid.index_of(lattice).map(|k| self.values[k])
    }
}

pub(crate) fn check_finite<T: Real>(values: &[T]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(node) => Err(Error::NonFinite {
            node,
            value: values[node].as_f64(),
        }),
        None => Ok(()),
    }
}

/// Finite-difference gradient and Hessian at an interior node.
///
/// Central differences on the lattice; the cross derivative uses the four
/// diagonal neighbours. Where a neighbour belongs to the boundary layer its
/// value is taken to live at the sphere projection, and the axis differences
/// become the non-uniform three-point formulas with that distance.
pub fn fd_derivatives<T: Real>(field: &ScalarField<T>, node: usize) -> Result<(Vector<T>, SymMatrix<T>)> {
    let grid = field.grid();
    if !grid.is_interior(node) {
        return Err(invalid("node", "must be an interior node"));
    }
    let n = grid.dim();
    let h = grid.h();
    let two = T::lit(2.0);
    let x = &grid.interior()[node].coords;
    let nb = grid.neighbors(node);
    let u0 = field.value(node);

    let spacing = |idx: usize| -> T {
        if grid.is_interior(idx) {
            h
        } else {
            dist(grid.position(idx), x)
        }
    };

    let mut grad: Vector<T> = smallvec![T::zero(); n];
    let mut hess = SymMatrix::zeros(n);
    for axis in 0..n {
        let (ip, im) = (nb[2 * axis], nb[2 * axis + 1]);
        let (hp, hm) = (spacing(ip), spacing(im));
        let (up, um) = (field.value(ip), field.value(im));
        // Non-uniform three-point formulas; reduce to the central ones when hp = hm.
        grad[axis] = (hm * hm * (up - u0) + hp * hp * (u0 - um)) / (hp * hm * (hp + hm));
        hess.set(axis, axis, two * (hm * (up - u0) - hp * (u0 - um)) / (hp * hm * (hp + hm)));
    }
    if n == 2 {
        let upp = field.value(nb[4]);
        let umm = field.value(nb[5]);
        let upm = field.value(nb[6]);
        let ump = field.value(nb[7]);
        hess.set(0, 1, (upp - upm - ump + umm) / (T::lit(4.0) * h * h));
    }
    Ok((grad, hess))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NormKind<T> {
    Sup,
    Lp(T),
}

/// Discrete sup or `Lᵖ` norm over the interior nodes in `subdomain`.
///
/// The `Lᵖ` norm uses the Riemann weight `hⁿ` per node.
pub fn norm<T: Real>(field: &ScalarField<T>, kind: NormKind<T>, subdomain: &Ball<T>) -> Result<T> {
    let grid = field.grid();
    if subdomain.center.len() != grid.dim() || !grid.covers(subdomain) {
        return Err(Error::EmptySubdomain);
    }
    let nodes = grid.nodes_in(subdomain);
    if nodes.is_empty() {
        return Err(Error::EmptySubdomain);
    }
    match kind {
        NormKind::Sup => Ok(nodes
            .iter()
            .map(|&k| field.value(k).abs())
            .fold(T::zero(), T::max)),
        NormKind::Lp(p) => {
            if !(p >= T::one()) {
                return Err(invalid("p", "must be at least 1"));
            }
            let weight = grid.h().powi(grid.dim() as i32);
            let sum: T = nodes.iter().map(|&k| field.value(k).abs().powf(p)).sum();
            Ok((sum * weight).powf(T::one() / p))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(r: f64, h: f64, n: usize) -> Arc<BallGrid<f64>> {
        Arc::new(BallGrid::new(&vec![0.0; n], r, h, n).unwrap())
    }

    #[test]
    fn one_dimensional_half_spacing() {
        let g = grid(1.0, 0.5, 1);
        let xs: Vec<f64> = g.interior().iter().map(|n| n.coords[0]).collect();
        assert_eq!(xs, vec![-0.5, 0.0, 0.5]);
        let bs: Vec<f64> = g.boundary().iter().map(|b| b.projection[0]).collect();
        assert_eq!(bs, vec![-1.0, 1.0]);
    }

    #[test]
    fn two_dimensional_node_count() {
        // brute-force count of (i, j) with i² + j² < 16
        let mut expected = 0;
        for i in -10i64..=10 {
            for j in -10i64..=10 {
                if i * i + j * j < 16 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 45);
        assert_eq!(grid(1.0, 0.25, 2).n_interior(), expected);
    }

    #[test]
    fn awkward_spacing_count() {
        let g = grid(1.0, 0.3, 1);
        assert_eq!(g.n_interior(), 7);
        assert_relative_eq!(g.interior()[0].coords[0], -0.9, epsilon = 1e-15);
        assert_relative_eq!(g.interior()[6].coords[0], 0.9, epsilon = 1e-15);
    }

    #[test]
    fn rejects_coarse_spacing_and_bad_dimension() {
        assert!(matches!(
            BallGrid::new(&[0.0], 1.0, 0.6, 1),
            Err(Error::GridTooCoarse { .. })
        ));
        assert!(matches!(
            BallGrid::new(&[0.0, 0.0, 0.0], 1.0, 0.1, 3),
            Err(Error::UnsupportedDimension(3))
        ));
    }

    #[test]
    fn projections_lie_on_sphere() {
        let g = BallGrid::<f64>::new(&[0.3, -0.2], 1.7, 0.07, 2).unwrap();
        for b in g.boundary() {
            let r = dist(&b.projection, g.center());
            assert!((r - 1.7).abs() <= 1e-12 * 1.7);
        }
        for k in 0..g.n_interior() {
            assert_eq!(g.neighbors(k).len(), 8);
        }
    }

    #[test]
    fn construction_is_deterministic() {
        let a = BallGrid::new(&[0.0, 0.0], 2.0, 0.1, 2).unwrap();
        let b = BallGrid::new(&[0.0, 0.0], 2.0, 0.1, 2).unwrap();
        assert_eq!(a.interior(), b.interior());
        assert_eq!(a.boundary(), b.boundary());
        assert!(a.interior().windows(2).all(|w| w[0].lattice < w[1].lattice));
    }

    #[test]
    fn derivatives_of_constant_and_quadratic() {
        let g = grid(1.0, 0.1, 1);
        let c = ScalarField::constant(g.clone(), 5.0);
        let mid = g.index_of([0, 0]).unwrap();
        let (gr, he) = fd_derivatives(&c, mid).unwrap();
        assert_eq!(gr[0], 0.0);
        assert_eq!(he.get(0, 0), 0.0);

        let q = ScalarField::from_fn(g.clone(), |x| x[0] * x[0]).unwrap();
        let (gr, he) = fd_derivatives(&q, mid).unwrap();
        assert_eq!(gr[0], 0.0);
        assert_relative_eq!(he.get(0, 0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn central_difference_is_second_order() {
        let err = |h: f64| {
            let g = grid(1.0, h, 1);
            let f = ScalarField::from_fn(g.clone(), |x| x[0].cos()).unwrap();
            let (_, he) = fd_derivatives(&f, g.index_of([0, 0]).unwrap()).unwrap();
            (he.get(0, 0) + 1.0).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 4.0).abs() < 0.01, "ratio {ratio}");
    }

    #[test]
    fn boundary_adjacent_nodes_use_projected_spacing() {
        // h = 0.3: the exterior node 1.2 projects onto 1.0, at distance 0.1 from 0.9.
        let g = grid(1.0, 0.3, 1);
        let f = ScalarField::from_fn(g.clone(), |x| x[0] * x[0] + x[0]).unwrap();
        let last = g.index_of([3, 0]).unwrap();
        let (gr, he) = fd_derivatives(&f, last).unwrap();
        assert_relative_eq!(gr[0], 2.0 * 0.9 + 1.0, epsilon = 1e-12);
        assert_relative_eq!(he.get(0, 0), 2.0, epsilon = 1e-12);
    }

    #[test]
    fn norms_on_simple_fields() {
        let g = grid(1.0, 0.1, 1);
        let whole = Ball::centered(1, 1.0);
        let z = ScalarField::constant(g.clone(), 0.0);
        assert_eq!(norm(&z, NormKind::Sup, &whole).unwrap(), 0.0);
        assert_eq!(norm(&z, NormKind::Lp(1.0), &whole).unwrap(), 0.0);

        let id = ScalarField::from_fn(g.clone(), |x| x[0]).unwrap();
        assert_relative_eq!(norm(&id, NormKind::Sup, &whole).unwrap(), 0.9, epsilon = 1e-15);

        let one = ScalarField::constant(g.clone(), 1.0);
        let g2 = grid(1.0, 0.25, 1);
        let one2 = ScalarField::constant(g2.clone(), 1.0);
        // {-0.25, 0, 0.25}: volume 0.75
        assert_relative_eq!(
            norm(&one2, NormKind::Lp(1.0), &Ball::centered(1, 0.3)).unwrap(),
            0.75,
            epsilon = 1e-15
        );
        // {-0.4, ..., 0.5}: ten nodes of weight 0.1
        assert_relative_eq!(
            norm(&one, NormKind::Lp(1.0), &Ball::new(&[0.05], 0.5)).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(norm(&one, NormKind::Sup, &Ball::centered(1, 2.0)).is_err());
    }

    #[test]
    fn empty_subdomain_is_an_error() {
        let g = grid(1.0, 0.25, 1);
        let f = ScalarField::constant(g, 1.0);
        assert_eq!(
            norm(&f, NormKind::Sup, &Ball::new(&[0.1], 0.05)),
            Err(Error::EmptySubdomain)
        );
    }
}
