//! Geometry of the cracked square lattice.
//!
//! Sites are indexed by integer pairs `l` and sit at `p(l) = l - (1/2, 1/2)`, so
//! the crack tip is the continuum origin and no site lies on the crack cut
//! `{x1 <= 0, x2 = 0}`. Bonds crossing the cut are removed: sites in the row
//! directly above the cut lose their `-e2` bond, sites directly below lose `+e2`.

use std::sync::Arc;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LatticeError {
    #[error("domain radius must be finite and at least 1, got {0}")]
    InvalidRadius(f64),
    #[error("field length {got} does not match domain size {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Lattice site, indexed by `l = (l1, l2)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Site {
    pub l1: i64,
    pub l2: i64,
}

/// The site `x̂` at `p = (1/2, 1/2)` where energy-space functions are pinned.
pub const PINNING_SITE: Site = Site::new(1, 1);

/// Position of a site relative to the crack surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SiteKind {
    Bulk,
    /// Row directly above the crack cut (`p1 < 0`, `p2 = 1/2`).
    UpperFace,
    /// Row directly below the crack cut (`p1 < 0`, `p2 = -1/2`).
    LowerFace,
}

impl Site {
    pub const fn new(l1: i64, l2: i64) -> Self {
        Self { l1, l2 }
    }

    /// Physical position `p(l) = (l1 - 1/2, l2 - 1/2)`.
    pub fn position(self) -> [f64; 2] {
        [self.l1 as f64 - 0.5, self.l2 as f64 - 0.5]
    }

    /// Distance of the site from the crack tip.
    pub fn radius(self) -> f64 {
        let [x1, x2] = self.position();
        x1.hypot(x2)
    }

    pub fn kind(self) -> SiteKind {
        match (self.l1 <= 0, self.l2) {
            (true, 1) => SiteKind::UpperFace,
            (true, 0) => SiteKind::LowerFace,
            _ => SiteKind::Bulk,
        }
    }

    pub fn stencil(self) -> Stencil {
        stencil(self)
    }

    pub fn shift(self, dir: Direction) -> Site {
        let (d1, d2) = dir.offset();
        Site::new(self.l1 + d1, self.l2 + d2)
    }

    /// Reflection across the crack plane, `p2 -> -p2`.
    pub fn mirror(self) -> Site {
        Site::new(self.l1, 1 - self.l2)
    }
}

/// Nearest-neighbour lattice direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    E1,
    E2,
    MinusE1,
    MinusE2,
}

impl Direction {
    /// All directions in the fixed order `e1, e2, -e1, -e2` used for gradient components.
    pub const ALL: [Direction; 4] = [Direction::E1, Direction::E2, Direction::MinusE1, Direction::MinusE2];

    pub fn index(self) -> usize {
        match self {
            Direction::E1 => 0,
            Direction::E2 => 1,
            Direction::MinusE1 => 2,
            Direction::MinusE2 => 3,
        }
    }

    pub fn offset(self) -> (i64, i64) {
        match self {
            Direction::E1 => (1, 0),
            Direction::E2 => (0, 1),
            Direction::MinusE1 => (-1, 0),
            Direction::MinusE2 => (0, -1),
        }
    }

    pub fn vector(self) -> [f64; 2] {
        let (d1, d2) = self.offset();
        [d1 as f64, d2 as f64]
    }

    pub fn negate(self) -> Direction {
        match self {
            Direction::E1 => Direction::MinusE1,
            Direction::E2 => Direction::MinusE2,
            Direction::MinusE1 => Direction::E1,
            Direction::MinusE2 => Direction::E2,
        }
    }
}

/// Subset of [`Direction::ALL`], one bit per direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stencil(u8);

impl Stencil {
    pub const FULL: Stencil = Stencil(0b1111);

    pub fn contains(self, dir: Direction) -> bool {
        self.0 & (1 << dir.index()) != 0
    }

    pub fn without(self, dir: Direction) -> Stencil {
        Stencil(self.0 & !(1 << dir.index()))
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn iter(self) -> impl Iterator<Item = Direction> {
        Direction::ALL.into_iter().filter(move |&d| self.contains(d))
    }
}

/// Crack-adapted interaction stencil `ℛ(m)`.
pub fn stencil(m: Site) -> Stencil {
    match m.kind() {
        SiteKind::Bulk => Stencil::FULL,
        SiteKind::UpperFace => Stencil::FULL.without(Direction::MinusE2),
        SiteKind::LowerFace => Stencil::FULL.without(Direction::E2),
    }
}

/// Crack-adapted discrete gradient of an arbitrary lattice function at `m`.
///
/// Components follow [`Direction::ALL`]; erased directions are exactly zero.
pub fn gradient_of(f: impl Fn(Site) -> f64, m: Site) -> [f64; 4] {
    let st = stencil(m);
    let fm = f(m);
    let mut g = [0.0; 4];
    for dir in st.iter() {
        g[dir.index()] = f(m.shift(dir)) - fm;
    }
    g
}

/// Pointwise lattice Hessian `Hu(m) = Σ_{ρ∈ℛ(m)} 2 (u(m) - u(m+ρ))`.
///
/// This is the operator with `⟨Hu, v⟩ = Σ_m Du(m)·Dv(m)`; every bond is met
/// once from each end, hence the factor 2.
pub fn hessian_at(f: impl Fn(Site) -> f64, m: Site) -> f64 {
    let fm = f(m);
    stencil(m).iter().map(|dir| 2.0 * (fm - f(m.shift(dir)))).sum()
}

/// A nearest-neighbour bond between two sites of the extended domain
/// (domain plus halo), oriented along `+e1` or `+e2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub dir: Direction,
}

const NO_SITE: u32 = u32::MAX;

/// Finite computational region `Ω_R = B_R ∩ Λ` plus a one-site halo.
///
/// Domain sites carry unknowns and are numbered `0..len()`. Halo sites are the
/// neighbours of domain sites that lie outside the ball; they are numbered
/// `len()..len() + halo().len()` in the extended indexing. Fields vanish on the
/// halo but predictor values are still evaluated there.
#[derive(Debug)]
pub struct LatticeDomain {
    radius: f64,
    n_domain: usize,
    extended: Vec<Site>,
    kinds: Vec<SiteKind>,
    grid: Vec<u32>,
    grid_min: (i64, i64),
    grid_width: usize,
    grid_height: usize,
    bonds: Vec<Bond>,
}

impl LatticeDomain {
    /// Lattice ball of the given radius about the crack tip.
    pub fn ball(radius: f64) -> Result<Self, LatticeError> {
        if !radius.is_finite() || radius < 1.0 {
            return Err(LatticeError::InvalidRadius(radius));
        }
        let lo = (0.5 - radius).ceil() as i64;
        let hi = (radius + 0.5).floor() as i64;
        // one extra ring for the halo
        let grid_min = (lo - 1, lo - 1);
        let width = (hi - lo + 3) as usize;
        let mut grid = vec![NO_SITE; width * width];

        let in_ball = |s: Site| s.radius() <= radius;
        let mut extended = Vec::new();
        for l2 in lo..=hi {
            for l1 in lo..=hi {
                let s = Site::new(l1, l2);
                if in_ball(s) {
                    extended.push(s);
                }
            }
        }
        let n_domain = extended.len();
        for l2 in (lo - 1)..=(hi + 1) {
            for l1 in (lo - 1)..=(hi + 1) {
                let s = Site::new(l1, l2);
                if !in_ball(s) && Direction::ALL.iter().any(|&d| in_ball(s.shift(d))) {
                    extended.push(s);
                }
            }
        }

        let mut domain = LatticeDomain {
            radius,
            n_domain,
            kinds: extended.iter().map(|s| s.kind()).collect(),
            extended,
            grid: Vec::new(),
            grid_min,
            grid_width: width,
            grid_height: width,
            bonds: Vec::new(),
        };
        for (i, &s) in domain.extended.iter().enumerate() {
            let slot = domain.grid_slot(s).expect("site inside bounding grid");
            grid[slot] = i as u32;
        }
        domain.grid = grid;
        domain.bonds = domain.collect_bonds();
        Ok(domain)
    }

    fn grid_slot(&self, s: Site) -> Option<usize> {
        let i = s.l1 - self.grid_min.0;
        let j = s.l2 - self.grid_min.1;
        if i < 0 || j < 0 || i as usize >= self.grid_width || j as usize >= self.grid_height {
            return None;
        }
        Some(j as usize * self.grid_width + i as usize)
    }

    fn collect_bonds(&self) -> Vec<Bond> {
        let mut bonds = Vec::new();
        for (a, &s) in self.extended.iter().enumerate() {
            let st = stencil(s);
            for dir in [Direction::E1, Direction::E2] {
                if !st.contains(dir) {
                    continue;
                }
                if let Some(b) = self.extended_index(s.shift(dir)) {
                    if a < self.n_domain || b < self.n_domain {
                        bonds.push(Bond { a, b, dir });
                    }
                }
            }
        }
        bonds
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Number of domain sites (unknowns).
    pub fn len(&self) -> usize {
        self.n_domain
    }

    pub fn is_empty(&self) -> bool {
        self.n_domain == 0
    }

    pub fn sites(&self) -> &[Site] {
        &self.extended[..self.n_domain]
    }

    pub fn halo(&self) -> &[Site] {
        &self.extended[self.n_domain..]
    }

    /// Domain sites followed by halo sites.
    pub fn extended_sites(&self) -> &[Site] {
        &self.extended
    }

    pub fn kind(&self, index: usize) -> SiteKind {
        self.kinds[index]
    }

    /// Every bond with at least one endpoint in the domain, each listed once.
    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    /// Dense index of a domain site.
    pub fn index_of(&self, s: Site) -> Option<usize> {
        self.extended_index(s).filter(|&i| i < self.n_domain)
    }

    /// Index of a domain or halo site in the extended numbering.
    pub fn extended_index(&self, s: Site) -> Option<usize> {
        let slot = self.grid_slot(s)?;
        match self.grid[slot] {
            NO_SITE => None,
            i => Some(i as usize),
        }
    }

    pub fn contains(&self, s: Site) -> bool {
        self.index_of(s).is_some()
    }

    /// Distance from `s` to the bounding circle (negative outside).
    pub fn distance_to_boundary(&self, s: Site) -> f64 {
        self.radius - s.radius()
    }
}

/// Scalar field on a domain, implicitly zero outside it.
#[derive(Debug, Clone)]
pub struct ScalarField {
    domain: Arc<LatticeDomain>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(domain: Arc<LatticeDomain>) -> Self {
        let values = vec![0.0; domain.len()];
        Self { domain, values }
    }

    pub fn from_values(domain: Arc<LatticeDomain>, values: Vec<f64>) -> Result<Self, LatticeError> {
        if values.len() != domain.len() {
            return Err(LatticeError::LengthMismatch {
                expected: domain.len(),
                got: values.len(),
            });
        }
        Ok(Self { domain, values })
    }

    pub fn from_fn(domain: Arc<LatticeDomain>, mut f: impl FnMut(Site) -> f64) -> Self {
        let values = domain.sites().iter().map(|&s| f(s)).collect();
        Self { domain, values }
    }

    /// Indicator of a single site (zero field if `s` lies outside the domain).
    pub fn indicator(domain: Arc<LatticeDomain>, s: Site) -> Self {
        let mut field = Self::zeros(domain);
        if let Some(i) = field.domain.index_of(s) {
            field.values[i] = 1.0;
        }
        field
    }

    pub fn domain(&self) -> &Arc<LatticeDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Value at any lattice site; exactly 0 outside the domain.
    pub fn value(&self, s: Site) -> f64 {
        self.domain.index_of(s).map_or(0.0, |i| self.values[i])
    }

    /// Value by extended index (halo entries are 0).
    pub fn extended_value(&self, index: usize) -> f64 {
        self.values.get(index).copied().unwrap_or(0.0)
    }

    pub fn gradient(&self, m: Site) -> [f64; 4] {
        gradient(self, m)
    }

    pub fn h1_norm(&self) -> f64 {
        h1_norm(self)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    /// Euclidean pairing `Σ_m u(m) v(m)` over the domain.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum()
    }
}

/// Crack-adapted gradient `Du(m)` of a zero-extended field.
pub fn gradient(u: &ScalarField, m: Site) -> [f64; 4] {
    gradient_of(|s| u.value(s), m)
}

/// Energy norm `‖Du‖_ℓ²` summed over the whole lattice.
pub fn h1_norm(u: &ScalarField) -> f64 {
    // Each bond appears in Du at both of its endpoints.
    let sum: f64 = u
        .domain
        .bonds()
        .iter()
        .map(|bond| {
            let d = u.extended_value(bond.b) - u.extended_value(bond.a);
            2.0 * d * d
        })
        .sum();
    sum.sqrt()
}

/// `Hu` restricted to the domain sites of `u`.
pub fn hessian_apply(u: &ScalarField) -> ScalarField {
    let domain = u.domain.clone();
    let n = domain.len();
    let mut out = vec![0.0; n];
    for bond in domain.bonds() {
        let d = 2.0 * (u.extended_value(bond.a) - u.extended_value(bond.b));
        if bond.a < n {
            out[bond.a] += d;
        }
        if bond.b < n {
            out[bond.b] -= d;
        }
    }
    ScalarField { domain, values: out }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn site_at(x1: f64, x2: f64) -> Site {
        Site::new((x1 + 0.5) as i64, (x2 + 0.5).round() as i64)
    }

    #[test]
    fn stencils_on_crack_faces() {
        let upper = Site::new(-1, 1);
        assert_eq!(upper.position(), [-1.5, 0.5]);
        let dirs: Vec<_> = stencil(upper).iter().collect();
        assert_eq!(dirs, vec![Direction::E1, Direction::E2, Direction::MinusE1]);

        let lower = Site::new(-1, 0);
        assert_eq!(lower.position(), [-1.5, -0.5]);
        let dirs: Vec<_> = stencil(lower).iter().collect();
        assert_eq!(dirs, vec![Direction::E1, Direction::MinusE1, Direction::MinusE2]);

        assert_eq!(stencil(PINNING_SITE), Stencil::FULL);
        assert_eq!(PINNING_SITE.position(), [0.5, 0.5]);
        // p1 = -0.5 is still on the crack face, p1 = 0.5 is not
        assert_eq!(Site::new(0, 1).kind(), SiteKind::UpperFace);
        assert_eq!(Site::new(1, 0).kind(), SiteKind::Bulk);
    }

    #[test]
    fn stencil_reciprocity_and_no_site_on_cut() {
        let domain = LatticeDomain::ball(64.0).unwrap();
        for &m in domain.extended_sites() {
            assert_ne!(m.position()[1], 0.0);
            for rho in stencil(m).iter() {
                assert!(stencil(m.shift(rho)).contains(rho.negate()), "{m:?} {rho:?}");
            }
        }
    }

    #[test]
    fn direction_negation_is_an_involution() {
        for d in Direction::ALL {
            assert_ne!(d.negate(), d);
            assert_eq!(d.negate().negate(), d);
            let (a, b) = d.offset();
            assert_eq!(d.negate().offset(), (-a, -b));
        }
    }

    #[test]
    fn domain_indexing_is_a_bijection() {
        let domain = LatticeDomain::ball(10.3).unwrap();
        for (i, &s) in domain.sites().iter().enumerate() {
            assert_eq!(domain.index_of(s), Some(i));
            assert!(s.radius() <= 10.3);
        }
        for (k, &s) in domain.halo().iter().enumerate() {
            assert_eq!(domain.index_of(s), None);
            assert_eq!(domain.extended_index(s), Some(domain.len() + k));
            assert!(s.radius() > 10.3);
        }
        let mut sorted = domain.sites().to_vec();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), domain.len());
        // every neighbour of a domain site is in the extended set
        for &s in domain.sites() {
            for d in Direction::ALL {
                assert!(domain.extended_index(s.shift(d)).is_some());
            }
        }
        assert!(LatticeDomain::ball(0.5).is_err());
        assert!(LatticeDomain::ball(f64::NAN).is_err());
    }

    #[test]
    fn crack_face_classification_in_domain() {
        let domain = LatticeDomain::ball(12.0).unwrap();
        for (i, &s) in domain.sites().iter().enumerate() {
            let [x1, x2] = s.position();
            let expected = if x1 < 0.0 && x2 == 0.5 {
                SiteKind::UpperFace
            } else if x1 < 0.0 && x2 == -0.5 {
                SiteKind::LowerFace
            } else {
                SiteKind::Bulk
            };
            assert_eq!(domain.kind(i), expected);
        }
    }

    #[test]
    fn gradient_examples() {
        let domain = Arc::new(LatticeDomain::ball(8.0).unwrap());
        let zero = ScalarField::zeros(domain.clone());
        assert_eq!(zero.gradient(Site::new(2, 3)), [0.0; 4]);

        let m = Site::new(3, -2);
        let delta = ScalarField::indicator(domain.clone(), m);
        assert_eq!(delta.gradient(m), [-1.0; 4]);

        let face = site_at(-2.5, 0.5);
        let u = ScalarField::from_fn(domain, |s| (s.l1 * 7 + s.l2 * 3) as f64);
        assert_eq!(u.gradient(face)[Direction::MinusE2.index()], 0.0);
        assert_eq!(u.gradient(face)[Direction::E2.index()], 3.0);
    }

    #[test]
    fn constant_field_has_zero_gradient_away_from_boundary() {
        let domain = Arc::new(LatticeDomain::ball(16.0).unwrap());
        let u = ScalarField::from_fn(domain.clone(), |_| 2.5);
        for &s in domain.sites() {
            if domain.distance_to_boundary(s) > 1.5 {
                assert_eq!(u.gradient(s), [0.0; 4]);
            }
        }
    }

    // Direct summation over the sites whose gradient is affected by u.
    fn h1_norm_sq_oracle(u: &ScalarField) -> f64 {
        u.domain()
            .extended_sites()
            .iter()
            .map(|&m| u.gradient(m).iter().map(|g| g * g).sum::<f64>())
            .sum()
    }

    #[test]
    fn h1_norm_of_indicators() {
        let domain = Arc::new(LatticeDomain::ball(8.0).unwrap());
        let bulk = ScalarField::indicator(domain.clone(), Site::new(2, 2));
        assert_eq!(h1_norm_sq_oracle(&bulk), 8.0);
        assert!((bulk.h1_norm() - 8f64.sqrt()).abs() < 1e-15);

        let face = ScalarField::indicator(domain.clone(), Site::new(-2, 1));
        assert_eq!(h1_norm_sq_oracle(&face), 6.0);
        assert!((face.h1_norm() - 6f64.sqrt()).abs() < 1e-15);

        assert_eq!(ScalarField::zeros(domain).h1_norm(), 0.0);
    }

    #[test]
    fn hessian_of_indicators() {
        let domain = Arc::new(LatticeDomain::ball(8.0).unwrap());
        let m = Site::new(2, -1);
        let h = hessian_apply(&ScalarField::indicator(domain.clone(), m));
        assert_eq!(h.value(m), 8.0);
        for d in Direction::ALL {
            assert_eq!(h.value(m.shift(d)), -2.0);
        }
        let face = Site::new(-3, 0);
        let h = hessian_apply(&ScalarField::indicator(domain.clone(), face));
        assert_eq!(h.value(face), 6.0);
        // the bond across the cut is absent
        assert_eq!(h.value(face.shift(Direction::E2)), 0.0);
        let zero = hessian_apply(&ScalarField::zeros(domain));
        assert!(zero.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pointwise_and_assembled_hessian_agree() {
        let domain = Arc::new(LatticeDomain::ball(9.0).unwrap());
        let u = ScalarField::from_fn(domain.clone(), |s| ((s.l1 * 13 + s.l2 * 5) % 7) as f64 - 3.0);
        let h = hessian_apply(&u);
        for &m in domain.sites() {
            assert!((h.value(m) - hessian_at(|s| u.value(s), m)).abs() < 1e-12);
        }
    }
}
