//! Lattice sites of Z^d and axis-aligned boxes of sites.

use core::fmt;
use core::ops::{Add, Neg, Sub};

/// Largest supported lattice dimension.
pub const MAX_DIM: usize = 3;

/// A site of Z^d, d <= [`MAX_DIM`]. Coordinates beyond the model dimension
/// are always zero, so sites of the same model compare and hash consistently.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Site([i32; MAX_DIM]);

impl Site {
    pub const ORIGIN: Site = Site([0; MAX_DIM]);

    /// # Panics
    /// If more than [`MAX_DIM`] coordinates are given.
    pub fn new(coords: &[i32]) -> Self {
        assert!(coords.len() <= MAX_DIM, "at most {MAX_DIM} coordinates");
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Site(c)
    }

    /// Site of Z^1.
    pub const fn line(x: i32) -> Self {
        let mut c = [0; MAX_DIM];
        c[0] = x;
        Site(c)
    }

    pub const fn coords(&self) -> [i32; MAX_DIM] {
        self.0
    }

    pub const fn coord(&self, q: usize) -> i32 {
        self.0[q]
    }

    /// True if every coordinate at position `>= dim` is zero.
    pub fn fits_dim(&self, dim: usize) -> bool {
        self.0[dim.min(MAX_DIM)..].iter().all(|&c| c == 0)
    }

    /// Sup norm |x|_inf.
    pub fn sup_norm(&self) -> i32 {
        self.0.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    /// Formats the first `dim` coordinates separated by commas.
    pub fn display(&self, dim: usize) -> SiteDisplay<'_> {
        SiteDisplay { site: self, dim }
    }
}

impl Add for Site {
    type Output = Site;
    fn add(self, rhs: Site) -> Site {
        Site(core::array::from_fn(|q| self.0[q] + rhs.0[q]))
    }
}

impl Sub for Site {
    type Output = Site;
    fn sub(self, rhs: Site) -> Site {
        Site(core::array::from_fn(|q| self.0[q] - rhs.0[q]))
    }
}

impl Neg for Site {
    type Output = Site;
    fn neg(self) -> Site {
        Site(self.0.map(|c| -c))
    }
}

impl fmt::Debug for Site {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

pub struct SiteDisplay<'a> {
    site: &'a Site,
    dim: usize,
}

impl fmt::Display for SiteDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for q in 0..self.dim.clamp(1, MAX_DIM) {
            if q > 0 {
                f.write_str(",")?;
            }
            write!(f, "{}", self.site.0[q])?;
        }
        Ok(())
    }
}

/// Inclusive box `lo..=hi` in the first `dim` coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SiteBox {
    lo: Site,
    hi: Site,
    dim: usize,
}

impl SiteBox {
    pub fn new(lo: Site, hi: Site, dim: usize) -> Self {
        debug_assert!((1..=MAX_DIM).contains(&dim));
        SiteBox { lo, hi, dim }
    }

    /// `center + {-radius..=radius}^dim`. A negative radius yields an empty box.
    pub fn centered(center: Site, radius: i32, dim: usize) -> Self {
        let mut lo = center;
        let mut hi = center;
        for q in 0..dim {
            lo.0[q] -= radius;
            hi.0[q] += radius;
        }
        SiteBox::new(lo, hi, dim)
    }

    pub fn empty(dim: usize) -> Self {
        SiteBox::centered(Site::ORIGIN, -1, dim)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lo(&self) -> Site {
        self.lo
    }

    pub fn hi(&self) -> Site {
        self.hi
    }

    pub fn is_empty(&self) -> bool {
        (0..self.dim).any(|q| self.lo.0[q] > self.hi.0[q])
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            return 0;
        }
        (0..self.dim)
            .map(|q| (self.hi.0[q] - self.lo.0[q] + 1) as usize)
            .product()
    }

    pub fn contains(&self, site: Site) -> bool {
        site.fits_dim(self.dim)
            && (0..self.dim).all(|q| (self.lo.0[q]..=self.hi.0[q]).contains(&site.0[q]))
    }

    /// Row-major position of `site` inside the box.
    pub fn index_of(&self, site: Site) -> Option<usize> {
        if !self.contains(site) {
            return None;
        }
        let mut idx = 0usize;
        for q in 0..self.dim {
            let width = (self.hi.0[q] - self.lo.0[q] + 1) as usize;
            idx = idx * width + (site.0[q] - self.lo.0[q]) as usize;
        }
        Some(idx)
    }

    /// Sites in row-major order (last coordinate fastest).
    pub fn iter(&self) -> SiteBoxIter {
        SiteBoxIter {
            region: *self,
            next: if self.is_empty() { None } else { Some(self.lo) },
        }
    }
}

impl IntoIterator for &SiteBox {
    type Item = Site;
    type IntoIter = SiteBoxIter;
    fn into_iter(self) -> SiteBoxIter {
        self.iter()
    }
}

pub struct SiteBoxIter {
    region: SiteBox,
    next: Option<Site>,
}

impl Iterator for SiteBoxIter {
    type Item = Site;

    fn next(&mut self) -> Option<Site> {
        let current = self.next?;
        let mut succ = current;
        let mut q = self.region.dim;
        self.next = loop {
            if q == 0 {
                break None;
            }
            q -= 1;
            if succ.0[q] < self.region.hi.0[q] {
                succ.0[q] += 1;
                break Some(succ);
            }
            succ.0[q] = self.region.lo.0[q];
        };
        Some(current)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn box_iteration_matches_len_and_index() {
        let b = SiteBox::centered(Site::new(&[1, -1]), 1, 2);
        let sites: Vec<Site> = b.iter().collect();
        assert_eq!(sites.len(), 9);
        assert_eq!(b.len(), 9);
        for (i, s) in sites.iter().enumerate() {
            assert_eq!(b.index_of(*s), Some(i));
        }
        assert!(!b.contains(Site::new(&[3, 0])));
    }

    #[test]
    fn empty_box() {
        let b = SiteBox::empty(1);
        assert!(b.is_empty());
        assert_eq!(b.len(), 0);
        assert_eq!(b.iter().count(), 0);
    }

    #[test]
    fn arithmetic() {
        let a = Site::line(3);
        let b = Site::line(-5);
        assert_eq!(a + b, Site::line(-2));
        assert_eq!(a - b, Site::line(8));
        assert_eq!((-b).sup_norm(), 5);
        assert!(Site::new(&[1, 0]).fits_dim(1));
        assert!(!Site::new(&[1, 2]).fits_dim(1));
    }
}
