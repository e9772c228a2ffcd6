//! Bodies, inclusions, probe shells and boundary quadrature.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("box must have min < max on every axis")]
    DegenerateBox,
    #[error("shape has no components")]
    EmptyShape,
    #[error("shell must enclose body: R_Omega(p) = {enclosing} but r1 = {r1} (margin {margin}, required > {required})")]
    ShellContainment {
        enclosing: f64,
        r1: f64,
        margin: f64,
        required: f64,
    },
    #[error("shell radii out of order: r2 = {r2} must exceed r1 = {r1} > 0")]
    RadiusOrder { r1: f64, r2: f64 },
    #[error("inclusion ball {index} is not inside the body with margin {margin}")]
    InclusionOutside { index: usize, margin: f64 },
    #[error("jump amplitude h = {0} must be nonzero with 1 + h > 0")]
    BadJump(f64),
    #[error("mesh resolution must be at least 2, got {0}")]
    Resolution(usize),
}

/// Point (or vector) in R^3.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Point {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Point) -> Point {
        Point::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    /// Unit vector in the same direction; the zero vector maps to itself.
    pub fn normalized(self) -> Point {
        let n = self.norm();
        if n == 0.0 {
            self
        } else {
            self * (1.0 / n)
        }
    }

    pub fn component(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, k: f64) -> Point {
        Point::new(self.x * k, self.y * k, self.z * k)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y, -self.z)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Open ball `B_r(c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallShape {
    pub center: Point,
    pub radius: f64,
}

impl BallShape {
    pub fn new(center: Point, radius: f64) -> Result<Self, GeometryError> {
        if !center.is_finite() {
            return Err(GeometryError::NonFinite("ball center"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(GeometryError::NonPositiveRadius(radius));
        }
        Ok(Self { center, radius })
    }

    pub fn contains(&self, x: Point) -> bool {
        (x - self.center).norm_sq() < self.radius * self.radius
    }

    pub fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius.powi(3)
    }
}

/// Axis-aligned box `[min, max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisBox {
    pub min: Point,
    pub max: Point,
}

impl AxisBox {
    pub fn new(min: Point, max: Point) -> Result<Self, GeometryError> {
        if !(min.is_finite() && max.is_finite()) {
            return Err(GeometryError::NonFinite("box corner"));
        }
        if !(min.x < max.x && min.y < max.y && min.z < max.z) {
            return Err(GeometryError::DegenerateBox);
        }
        Ok(Self { min, max })
    }

    pub fn extent(&self) -> Point {
        self.max - self.min
    }

    pub fn corners(&self) -> [Point; 8] {
        let (a, b) = (self.min, self.max);
        [
            Point::new(a.x, a.y, a.z),
            Point::new(b.x, a.y, a.z),
            Point::new(a.x, b.y, a.z),
            Point::new(b.x, b.y, a.z),
            Point::new(a.x, a.y, b.z),
            Point::new(b.x, a.y, b.z),
            Point::new(a.x, b.y, b.z),
            Point::new(b.x, b.y, b.z),
        ]
    }

    pub fn contains(&self, x: Point) -> bool {
        (0..3).all(|k| x.component(k) > self.min.component(k) && x.component(k) < self.max.component(k))
    }

    /// Distance from an interior point to the nearest face.
    pub fn interior_distance(&self, x: Point) -> f64 {
        (0..3)
            .map(|k| (x.component(k) - self.min.component(k)).min(self.max.component(k) - x.component(k)))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn surface_area(&self) -> f64 {
        let e = self.extent();
        2.0 * (e.x * e.y + e.y * e.z + e.z * e.x)
    }
}

/// Shapes for which an enclosing radius can be computed.
#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Ball(BallShape),
    Box(AxisBox),
    Union(Vec<BallShape>),
}

/// `sup_{x in shape} |x - p|`.
pub fn enclosing_radius(shape: &Shape, p: Point) -> Result<f64, GeometryError> {
    if !p.is_finite() {
        return Err(GeometryError::NonFinite("probe point"));
    }
    match shape {
        Shape::Ball(b) => Ok(b.center.dist(p) + b.radius),
        Shape::Box(b) => Ok(b
            .corners()
            .iter()
            .map(|c| c.dist(p))
            .fold(0.0, f64::max)),
        Shape::Union(balls) => {
            if balls.is_empty() {
                return Err(GeometryError::EmptyShape);
            }
            Ok(balls
                .iter()
                .map(|b| b.center.dist(p) + b.radius)
                .fold(0.0, f64::max))
        }
    }
}

/// The background body Omega.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BodySpec {
    Ball(BallShape),
    Box(AxisBox),
}

impl BodySpec {
    pub fn shape(&self) -> Shape {
        match *self {
            BodySpec::Ball(b) => Shape::Ball(b),
            BodySpec::Box(b) => Shape::Box(b),
        }
    }

    pub fn enclosing_radius(&self, p: Point) -> Result<f64, GeometryError> {
        enclosing_radius(&self.shape(), p)
    }

    pub fn translated(&self, v: Point) -> BodySpec {
        match *self {
            BodySpec::Ball(b) => BodySpec::Ball(BallShape { center: b.center + v, ..b }),
            BodySpec::Box(b) => BodySpec::Box(AxisBox { min: b.min + v, max: b.max + v }),
        }
    }

    /// Signed clearance of a ball from the body boundary (positive when inside).
    pub fn ball_clearance(&self, ball: &BallShape) -> f64 {
        match self {
            BodySpec::Ball(b) => b.radius - b.center.dist(ball.center) - ball.radius,
            BodySpec::Box(b) => {
                if b.contains(ball.center) {
                    b.interior_distance(ball.center) - ball.radius
                } else {
                    -ball.radius
                }
            }
        }
    }
}

/// Inclusion D (a union of balls) with a uniform conductivity jump `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionSpec {
    pub balls: Vec<BallShape>,
    pub h: f64,
}

impl InclusionSpec {
    pub fn new(balls: Vec<BallShape>, h: f64) -> Result<Self, GeometryError> {
        if !(h.is_finite() && h != 0.0 && 1.0 + h > 0.0) {
            return Err(GeometryError::BadJump(h));
        }
        Ok(Self { balls, h })
    }

    pub fn ball(ball: BallShape, h: f64) -> Result<Self, GeometryError> {
        Self::new(vec![ball], h)
    }

    /// Inclusion with no components; the conductivity is uniform.
    pub fn empty() -> Self {
        Self { balls: Vec::new(), h: 0.0 }
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn contains(&self, x: Point) -> bool {
        self.balls.iter().any(|b| b.contains(x))
    }

    pub fn shape(&self) -> Shape {
        Shape::Union(self.balls.clone())
    }

    pub fn enclosing_radius(&self, p: Point) -> Result<f64, GeometryError> {
        enclosing_radius(&self.shape(), p)
    }

    pub fn translated(&self, v: Point) -> InclusionSpec {
        InclusionSpec {
            balls: self
                .balls
                .iter()
                .map(|b| BallShape { center: b.center + v, ..*b })
                .collect(),
            h: self.h,
        }
    }

    /// Checks closure(D) inside Omega with at least `margin` clearance.
    pub fn validate_inside(&self, body: &BodySpec, margin: f64) -> Result<(), GeometryError> {
        for (index, b) in self.balls.iter().enumerate() {
            if body.ball_clearance(b) <= margin {
                return Err(GeometryError::InclusionOutside { index, margin });
            }
        }
        Ok(())
    }
}

/// Probe point and the radii of the shell carrying the initial datum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShellSource {
    pub p: Point,
    pub r1: f64,
    pub r2: f64,
}

impl ShellSource {
    pub fn new(p: Point, r1: f64, r2: f64) -> Result<Self, GeometryError> {
        if !p.is_finite() {
            return Err(GeometryError::NonFinite("probe point"));
        }
        if !(r1 > 0.0 && r2 > r1 && r2.is_finite()) {
            return Err(GeometryError::RadiusOrder { r1, r2 });
        }
        Ok(Self { p, r1, r2 })
    }

    pub fn translated(&self, v: Point) -> ShellSource {
        ShellSource { p: self.p + v, ..*self }
    }

    pub fn default_margin(&self) -> f64 {
        DEFAULT_SHELL_MARGIN * self.r1
    }
}

/// Default relative strict-containment margin `eps_shell / R1`.
pub const DEFAULT_SHELL_MARGIN: f64 = 1e-3;

/// Returns `R1 - R_Omega(p)` when the body sits strictly inside `B_{R1}(p)`.
pub fn validate_shell(body: &BodySpec, shell: &ShellSource) -> Result<f64, GeometryError> {
    validate_shell_with(body, shell, shell.default_margin())
}

pub fn validate_shell_with(
    body: &BodySpec,
    shell: &ShellSource,
    required: f64,
) -> Result<f64, GeometryError> {
    if !(shell.r1 > 0.0 && shell.r2 > shell.r1) {
        return Err(GeometryError::RadiusOrder { r1: shell.r1, r2: shell.r2 });
    }
    let enclosing = body.enclosing_radius(shell.p)?;
    let margin = shell.r1 - enclosing;
    if margin <= required {
        return Err(GeometryError::ShellContainment {
            enclosing,
            r1: shell.r1,
            margin,
            required,
        });
    }
    Ok(margin)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryNode {
    pub position: Point,
    pub normal: Point,
    pub weight: f64,
}

/// How the nodes of a [`BoundaryMesh`] are laid out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeshLayout {
    /// Latitude-longitude cells: `bands` in polar angle times `2 * bands` in azimuth.
    Sphere { bands: usize },
    /// Face centers of an `n x n x n` cell partition, faces ordered
    /// -x, +x, -y, +y, -z, +z, each row-major in the remaining two axes.
    Box { n: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryMesh {
    pub nodes: Vec<BoundaryNode>,
    pub layout: MeshLayout,
}

impl BoundaryMesh {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_area(&self) -> f64 {
        self.nodes.iter().map(|n| n.weight).sum()
    }

    /// Surface quadrature of `f(x, nu)`.
    pub fn integrate<F: Fn(Point, Point) -> f64>(&self, f: F) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(n.position, n.normal)).sum()
    }
}

pub fn boundary_mesh(body: &BodySpec, resolution: usize) -> Result<BoundaryMesh, GeometryError> {
    if resolution < 2 {
        return Err(GeometryError::Resolution(resolution));
    }
    match body {
        BodySpec::Ball(b) => Ok(sphere_mesh(b, resolution)),
        BodySpec::Box(b) => Ok(box_mesh(b, resolution)),
    }
}

fn sphere_mesh(ball: &BallShape, bands: usize) -> BoundaryMesh {
    let n_phi = 2 * bands;
    let d_theta = PI / bands as f64;
    let d_phi = 2.0 * PI / n_phi as f64;
    let r2 = ball.radius * ball.radius;
    let mut nodes = Vec::with_capacity(bands * n_phi);
    for i in 0..bands {
        let (t0, t1) = (i as f64 * d_theta, (i + 1) as f64 * d_theta);
        // exact band area over one azimuthal cell
        let weight = r2 * (t0.cos() - t1.cos()) * d_phi;
        let theta = 0.5 * (t0 + t1);
        for k in 0..n_phi {
            let phi = (k as f64 + 0.5) * d_phi;
            let normal = Point::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
            nodes.push(BoundaryNode {
                position: ball.center + normal * ball.radius,
                normal,
                weight,
            });
        }
    }
    BoundaryMesh { nodes, layout: MeshLayout::Sphere { bands } }
}

fn box_mesh(b: &AxisBox, n: usize) -> BoundaryMesh {
    let e = b.extent();
    let mut nodes = Vec::with_capacity(6 * n * n);
    for axis in 0..3 {
        let (a1, a2) = tangential_axes(axis);
        let h1 = e.component(a1) / n as f64;
        let h2 = e.component(a2) / n as f64;
        for side in 0..2 {
            let sign = if side == 0 { -1.0 } else { 1.0 };
            let fixed = if side == 0 { b.min.component(axis) } else { b.max.component(axis) };
            let mut normal = [0.0; 3];
            normal[axis] = sign;
            for i in 0..n {
                for j in 0..n {
                    let mut pos = [0.0; 3];
                    pos[axis] = fixed;
                    pos[a1] = b.min.component(a1) + (i as f64 + 0.5) * h1;
                    pos[a2] = b.min.component(a2) + (j as f64 + 0.5) * h2;
                    nodes.push(BoundaryNode {
                        position: Point::from_array(pos),
                        normal: Point::from_array(normal),
                        weight: h1 * h2,
                    });
                }
            }
        }
    }
    BoundaryMesh { nodes, layout: MeshLayout::Box { n } }
}

/// The two axes spanning a face normal to `axis`, in increasing order.
pub fn tangential_axes(axis: usize) -> (usize, usize) {
    match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    }
}
