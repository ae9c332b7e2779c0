//! Discrete torus geometry and bit-packed particle configurations.
//!
//! Sites are linearized row-major with axis 0 fastest: the site with
//! coordinates `(c0, c1, c2)` has linear index `c0 + n*c1 + n^2*c2`. The same
//! encoding is used by [`crate::exact`] to index states, so a configuration on
//! at most 64 sites is literally its own state index.
//!
//! The edge set has exactly `d * n^d` elements: edge `axis * n^d + x` joins `x`
//! and `x + e_axis`. For `n >= 3` these are the unordered nearest-neighbour
//! pairs. For `n = 2` the two orientations of an axis wrap onto the same
//! neighbour and are kept as parallel edges, so every site still has `2d`
//! neighbour slots.

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Geometry of `T_n^d = Z^d / nZ^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Torus {
    n: usize,
    d: usize,
    sites: usize,
    strides: [usize; MAX_DIM],
}

/// A site of the torus, carrying both its coordinates and linear index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TorusIndex {
    coords: [usize; MAX_DIM],
    dim: usize,
    linear: usize,
}

impl TorusIndex {
    pub fn coords(&self) -> &[usize] {
        &self.coords[..self.dim]
    }

    pub fn linear(&self) -> usize {
        self.linear
    }
}

impl Torus {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::Params(format!("dimension must be 1, 2 or 3, got {d}")));
        }
        if n < 2 {
            return Err(Error::Params(format!("side length must be >= 2, got {n}")));
        }
        let sites = n
            .checked_pow(d as u32)
            .filter(|&s| s <= u32::MAX as usize / 4)
            .ok_or_else(|| Error::Size(format!("torus {n}^{d} is too large")))?;
        let mut strides = [0; MAX_DIM];
        let mut s = 1;
        for st in strides.iter_mut().take(d) {
            *st = s;
            s *= n;
        }
        Ok(Self { n, d, sites, strides })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn edge_count(&self) -> usize {
        self.d * self.sites
    }

    pub fn stride(&self, axis: usize) -> usize {
        self.strides[axis]
    }

    /// Index from coordinates, reduced mod n on every axis.
    pub fn index(&self, coords: &[i64]) -> TorusIndex {
        assert_eq!(coords.len(), self.d, "coordinate arity must equal the dimension");
        let mut c = [0usize; MAX_DIM];
        let mut linear = 0;
        for axis in 0..self.d {
            c[axis] = coords[axis].rem_euclid(self.n as i64) as usize;
            linear += c[axis] * self.strides[axis];
        }
        TorusIndex { coords: c, dim: self.d, linear }
    }

    pub fn from_linear(&self, linear: usize) -> TorusIndex {
        assert!(linear < self.sites, "site {linear} out of range");
        let mut c = [0usize; MAX_DIM];
        let mut rest = linear;
        for ci in c.iter_mut().take(self.d) {
            *ci = rest % self.n;
            rest /= self.n;
        }
        TorusIndex { coords: c, dim: self.d, linear }
    }

    pub fn coord(&self, site: usize, axis: usize) -> usize {
        (site / self.strides[axis]) % self.n
    }

    /// `site + dir * e_axis` with periodic wrap; `dir` is +1 or -1.
    pub fn step(&self, site: usize, axis: usize, dir: i32) -> usize {
        let c = self.coord(site, axis);
        let s = self.strides[axis];
        if dir > 0 {
            if c + 1 == self.n {
                site - c * s
            } else {
                site + s
            }
        } else if c == 0 {
            site + (self.n - 1) * s
        } else {
            site - s
        }
    }

    /// The `2d` nearest neighbours, ordered `+e0, -e0, +e1, -e1, ...`.
    pub fn neighbors(&self, x: &TorusIndex) -> Vec<TorusIndex> {
        let mut out = Vec::with_capacity(2 * self.d);
        for axis in 0..self.d {
            for dir in [1, -1] {
                out.push(self.from_linear(self.step(x.linear, axis, dir)));
            }
        }
        out
    }

    /// Endpoints `(x, x + e_axis)` of edge `e = axis * n^d + x`.
    pub fn edge(&self, e: usize) -> (usize, usize) {
        let axis = e / self.sites;
        let x = e % self.sites;
        (x, self.step(x, axis, 1))
    }

    /// Componentwise sum `x + y` on the torus.
    pub fn add(&self, x: usize, y: usize) -> usize {
        let mut out = 0;
        for axis in 0..self.d {
            let c = (self.coord(x, axis) + self.coord(y, axis)) % self.n;
            out += c * self.strides[axis];
        }
        out
    }

    /// Site `center + offset` where `offset` is an integer vector in `Z^d`.
    pub fn offset(&self, center: usize, offset: &[i64]) -> usize {
        let mut out = 0;
        for axis in 0..self.d {
            let c = (self.coord(center, axis) as i64 + offset[axis]).rem_euclid(self.n as i64);
            out += c as usize * self.strides[axis];
        }
        out
    }

    /// Precomputed `[x, x + e_axis]` for every edge; the simulator's hot table.
    pub fn edge_table(&self) -> Vec<[u32; 2]> {
        (0..self.edge_count())
            .map(|e| {
                let (x, y) = self.edge(e);
                [x as u32, y as u32]
            })
            .collect()
    }

    /// Precomputed neighbour slots, `2d` per site in [`Torus::neighbors`] order.
    pub fn neighbor_table(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(2 * self.d * self.sites);
        for x in 0..self.sites {
            for axis in 0..self.d {
                for dir in [1, -1] {
                    out.push(self.step(x, axis, dir) as u32);
                }
            }
        }
        out
    }
}

/// Occupancy `eta in {0,1}^{T_n^d}` packed into 64-bit words.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ParticleConfig {
    torus: Torus,
    words: Vec<u64>,
}

impl ParticleConfig {
    pub fn empty(torus: Torus) -> Self {
        Self { torus, words: vec![0; torus.sites().div_ceil(64)] }
    }

    pub fn full(torus: Torus) -> Self {
        let mut c = Self::empty(torus);
        for x in 0..torus.sites() {
            c.set(x, true);
        }
        c
    }

    pub fn from_fn(torus: Torus, mut occupied: impl FnMut(usize) -> bool) -> Self {
        let mut c = Self::empty(torus);
        for x in 0..torus.sites() {
            if occupied(x) {
                c.set(x, true);
            }
        }
        c
    }

    /// Builds from 0/1 values in linear site order.
    pub fn from_bits(torus: Torus, bits: &[u8]) -> Result<Self> {
        if bits.len() != torus.sites() {
            return Err(Error::Domain(format!(
                "expected {} occupation values, got {}",
                torus.sites(),
                bits.len()
            )));
        }
        Ok(Self::from_fn(torus, |x| bits[x] != 0))
    }

    /// The configuration whose state index (bit `x` = site `x`) is `state`.
    pub fn from_state_index(torus: Torus, state: u64) -> Self {
        assert!(torus.sites() <= 64, "state indices need at most 64 sites");
        Self::from_fn(torus, |x| (state >> x) & 1 == 1)
    }

    pub fn state_index(&self) -> u64 {
        assert!(self.torus.sites() <= 64, "state indices need at most 64 sites");
        self.words[0]
    }

    /// Independent Bernoulli occupations with site-dependent density.
    pub fn bernoulli_profile<R: Rng + ?Sized>(
        torus: Torus,
        rng: &mut R,
        mut density: impl FnMut(usize) -> f64,
    ) -> Self {
        Self::from_fn(torus, |x| rng.random::<f64>() < density(x))
    }

    pub fn bernoulli<R: Rng + ?Sized>(torus: Torus, rho: f64, rng: &mut R) -> Self {
        Self::bernoulli_profile(torus, rng, |_| rho)
    }

    pub fn torus(&self) -> &Torus {
        &self.torus
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, x: usize) -> bool {
        (self.words[x >> 6] >> (x & 63)) & 1 == 1
    }

    #[inline]
    pub fn bit(&self, x: usize) -> u64 {
        (self.words[x >> 6] >> (x & 63)) & 1
    }

    pub fn set(&mut self, x: usize, value: bool) {
        let mask = 1u64 << (x & 63);
        if value {
            self.words[x >> 6] |= mask;
        } else {
            self.words[x >> 6] &= !mask;
        }
    }

    /// `eta -> eta^x`.
    #[inline]
    pub fn flip(&mut self, x: usize) {
        self.words[x >> 6] ^= 1u64 << (x & 63);
    }

    /// `eta -> eta^{x,y}`; branch-free, equal occupations leave `eta` unchanged.
    #[inline]
    pub fn exchange(&mut self, x: usize, y: usize) {
        let (wx, bx) = (x >> 6, x & 63);
        let (wy, by) = (y >> 6, y & 63);
        let diff = ((self.words[wx] >> bx) ^ (self.words[wy] >> by)) & 1;
        self.words[wx] ^= diff << bx;
        self.words[wy] ^= diff << by;
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn density(&self) -> f64 {
        self.count() as f64 / self.torus.sites() as f64
    }

    pub fn occupied(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(i, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(i * 64 + b)
                }
            })
        })
    }

    pub fn to_bits(&self) -> Vec<u8> {
        (0..self.torus.sites()).map(|x| self.bit(x) as u8).collect()
    }

    /// `tau_x eta`, defined by `(tau_x eta)_z = eta_{z + x}`.
    pub fn translate(&self, x: &TorusIndex) -> Self {
        let t = self.torus;
        Self::from_fn(t, |z| self.get(t.add(z, x.linear())))
    }
}

/// The cube `B_R = {y in Z^d : |y_i| <= R}` with offsets enumerated axis 0 fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BoxRegion {
    radius: usize,
    dim: usize,
    offsets: Vec<[i64; MAX_DIM]>,
}

impl BoxRegion {
    pub fn new(radius: usize, dim: usize) -> Self {
        let side = 2 * radius + 1;
        let count = side.pow(dim as u32);
        let r = radius as i64;
        let offsets = (0..count)
            .map(|mut i| {
                let mut o = [0i64; MAX_DIM];
                for oi in o.iter_mut().take(dim) {
                    *oi = (i % side) as i64 - r;
                    i /= side;
                }
                o
            })
            .collect();
        Self { radius, dim, offsets }
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    pub fn offsets(&self) -> &[[i64; MAX_DIM]] {
        &self.offsets
    }

    fn check(&self, torus: &Torus) -> Result<()> {
        if torus.n() <= 2 * self.radius + 1 {
            return Err(Error::BoxTooLarge { radius: self.radius, n: torus.n() });
        }
        if torus.dim() != self.dim {
            return Err(Error::Domain("box and torus dimensions differ".into()));
        }
        Ok(())
    }

    /// Linear sites covered by the box centred at `center`.
    pub fn sites(&self, torus: &Torus, center: usize) -> Result<Vec<usize>> {
        self.check(torus)?;
        Ok(self.offsets.iter().map(|o| torus.offset(center, &o[..self.dim])).collect())
    }
}

/// A bit pattern on `B_R`, bit `i` belonging to the `i`-th box offset.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BoxPattern {
    bits: Vec<u8>,
}

impl BoxPattern {
    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// Pattern index `sum_i bit_i 2^i`, available for boxes of at most 63 sites.
    pub fn index(&self) -> Option<usize> {
        (self.bits.len() < 64).then(|| {
            self.bits.iter().enumerate().fold(0usize, |acc, (i, &b)| acc | ((b as usize) << i))
        })
    }
}

/// `Pi_R^center eta`: `pattern[y] = eta_{center + y}` for `y` in `B_R`.
pub fn project_box(eta: &ParticleConfig, radius: usize, center: &TorusIndex) -> Result<BoxPattern> {
    let region = BoxRegion::new(radius, eta.torus().dim());
    let sites = region.sites(eta.torus(), center.linear())?;
    Ok(BoxPattern { bits: sites.into_iter().map(|s| eta.bit(s) as u8).collect() })
}

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"RDXS";
pub const SNAPSHOT_VERSION: u16 = 1;
pub const SNAPSHOT_HEADER_LEN: usize = 24;

/// Writes the binary snapshot: a 24-byte little-endian header
/// (`magic[4] | version u16 | d u16 | n u32 | word_count u32 | time f64`)
/// followed by `word_count` occupancy words, each a little-endian `u64`.
pub fn write_snapshot<W: Write>(mut w: W, eta: &ParticleConfig, time: f64) -> Result<()> {
    let t = eta.torus();
    w.write_all(&SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(t.dim() as u16).to_le_bytes())?;
    w.write_all(&(t.n() as u32).to_le_bytes())?;
    w.write_all(&(eta.words.len() as u32).to_le_bytes())?;
    w.write_all(&time.to_le_bytes())?;
    for word in &eta.words {
        w.write_all(&word.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(ParticleConfig, f64)> {
    let mut header = [0u8; SNAPSHOT_HEADER_LEN];
    r.read_exact(&mut header)?;
    if header[0..4] != SNAPSHOT_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let version = u16::from_le_bytes([header[4], header[5]]);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = u16::from_le_bytes([header[6], header[7]]) as usize;
    let n = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let words = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let time = f64::from_le_bytes(header[16..24].try_into().unwrap());
    let torus = Torus::new(n, d)?;
    let mut eta = ParticleConfig::empty(torus);
    if words != eta.words.len() {
        return Err(Error::Format(format!(
            "word count {words} does not match {n}^{d} sites"
        )));
    }
    let mut buf = [0u8; 8];
    for word in eta.words.iter_mut() {
        r.read_exact(&mut buf)?;
        *word = u64::from_le_bytes(buf);
    }
    let tail = torus.sites() % 64;
    if tail != 0 && eta.words.last().unwrap() >> tail != 0 {
        return Err(Error::Format("padding bits beyond the last site are set".into()));
    }
    Ok((eta, time))
}
