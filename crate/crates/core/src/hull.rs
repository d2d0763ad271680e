//! Compact hulls with explicit mapping-out functions, and numerical
//! mapping-out of their images under a Loewner flow.
//!
//! The catalogue holds vertical slits and half-disks. A composed hull is
//! described through its map `g = g_n ∘ … ∘ g_1`, where part `j` is given in
//! the coordinates left after mapping out parts `1..j`. All maps are
//! hydrodynamically normalized, `g(z) = z + hcap/z + O(1/z²)`.

use serde::{Deserialize, Serialize};

use crate::error::{LoewnerError, Result};
use crate::exec::Execution;
use crate::flow::C;
use crate::zipper::{self, Jet, ZipOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BasicHull {
    VerticalSlit { base: f64, height: f64 },
    HalfDisk { center: f64, radius: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SlitHull {
    VerticalSlit { base: f64, height: f64 },
    HalfDisk { center: f64, radius: f64 },
    /// An empty list is the empty hull, whose map is the identity.
    Composed { parts: Vec<BasicHull> },
}

/// A boundary arc of a hull, starting on the real line. Closed arcs also
/// end on the real line and enclose the region between.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Boundary {
    pub points: Vec<C>,
    pub closed: bool,
}

/// `√w` with the cut along the negative imaginary axis.
fn sqrt_down(w: C) -> C {
    C::from_polar(1.0, std::f64::consts::FRAC_PI_4) * (C::new(0.0, -1.0) * w).sqrt()
}

/// Principal `√w`, with real negative inputs read from above the cut.
fn sqrt_above(w: C) -> C {
    if w.im == 0.0 {
        C::new(w.re, 0.0).sqrt()
    } else {
        w.sqrt()
    }
}

impl BasicHull {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            BasicHull::VerticalSlit { base, height } => base.is_finite() && height.is_finite() && height > 0.0,
            BasicHull::HalfDisk { center, radius } => center.is_finite() && radius.is_finite() && radius > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(LoewnerError::malformed(format!("invalid hull parameters {self:?}")))
        }
    }

    pub fn hcap(&self) -> f64 {
        match *self {
            BasicHull::VerticalSlit { height, .. } => 0.5 * height * height,
            BasicHull::HalfDisk { radius, .. } => radius * radius,
        }
    }

    /// Real footprint `[lo, hi]`.
    pub fn footprint(&self) -> (f64, f64) {
        match *self {
            BasicHull::VerticalSlit { base, .. } => (base, base),
            BasicHull::HalfDisk { center, radius } => (center - radius, center + radius),
        }
    }

    /// `g(z)` and its first three derivatives.
    pub fn map(&self, z: C) -> [C; 4] {
        match *self {
            BasicHull::VerticalSlit { base, height } => {
                let x = z - base;
                let ih = C::new(0.0, height);
                let q = sqrt_down(x - ih) * sqrt_down(x + ih);
                let h2 = height * height;
                [base + q, x / q, h2 / (q * q * q), -3.0 * h2 * x / q.powi(5)]
            }
            BasicHull::HalfDisk { center, radius } => {
                let x = z - center;
                let r2 = radius * radius;
                [z + r2 / x, 1.0 - r2 / (x * x), 2.0 * r2 / x.powi(3), -6.0 * r2 / x.powi(4)]
            }
        }
    }

    /// `g⁻¹(w)` for `w` in the closed upper half-plane.
    pub fn inverse(&self, w: C) -> C {
        match *self {
            BasicHull::VerticalSlit { base, height } => {
                let x = w - base;
                base + sqrt_above(x - height) * sqrt_above(x + height)
            }
            BasicHull::HalfDisk { center, radius } => {
                let x = w - center;
                center + 0.5 * (x + sqrt_above(x - 2.0 * radius) * sqrt_above(x + 2.0 * radius))
            }
        }
    }

    /// `n + 1` boundary samples, evenly spaced along the arc.
    pub fn boundary(&self, n: usize) -> Boundary {
        let n = n.max(2);
        match *self {
            BasicHull::VerticalSlit { base, height } => Boundary {
                points: (0..=n).map(|k| C::new(base, height * k as f64 / n as f64)).collect(),
                closed: false,
            },
            BasicHull::HalfDisk { center, radius } => {
                let mut points: Vec<C> = (0..=n)
                    .map(|k| {
                        // clustering at the ends pushes samples into the closing gap
                        let theta = std::f64::consts::PI * (1.0 - k as f64 / n as f64);
                        center + C::from_polar(radius, theta)
                    })
                    .collect();
                points[0] = C::new(center - radius, 0.0);
                points[n] = C::new(center + radius, 0.0);
                Boundary { points, closed: true }
            }
        }
    }
}

impl SlitHull {
    pub fn parts(&self) -> Vec<BasicHull> {
        match self {
            SlitHull::VerticalSlit { base, height } => vec![BasicHull::VerticalSlit { base: *base, height: *height }],
            SlitHull::HalfDisk { center, radius } => vec![BasicHull::HalfDisk { center: *center, radius: *radius }],
            SlitHull::Composed { parts } => parts.clone(),
        }
    }

    /// The empty hull.
    pub fn empty() -> Self {
        SlitHull::Composed { parts: Vec::new() }
    }

    pub fn validate(&self) -> Result<()> {
        self.parts().iter().try_for_each(BasicHull::validate)
    }

    /// Checks the parameters and that the hull stays at positive distance
    /// from the base point 0.
    pub fn check_clear_of_origin(&self) -> Result<()> {
        let mut zero = C::new(0.0, 0.0);
        for part in self.parts() {
            part.validate()?;
            let (lo, hi) = part.footprint();
            let margin = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
            if zero.re >= lo - margin && zero.re <= hi + margin {
                return Err(LoewnerError::geometry(format!("hull part {part:?} touches the base point")));
            }
            zero = C::new(part.map(zero)[0].re, 0.0);
        }
        Ok(())
    }

    pub fn hcap(&self) -> f64 {
        self.parts().iter().map(BasicHull::hcap).sum()
    }

    /// The explicit map-out `g_K` applied to a jet.
    pub fn map_jet(&self, jet: Jet) -> Jet {
        self.parts().iter().fold(jet, |j, part| j.then(part.map(j.z)))
    }

    pub fn map_out(&self, z: C) -> C {
        self.map_jet(Jet::value(z)).z
    }

    /// `ψ = g_K − g_K(0)` and its derivatives at 0.
    pub fn psi_jet(&self) -> Jet {
        let j = self.map_jet(Jet::point(C::new(0.0, 0.0)));
        Jet { z: C::new(0.0, 0.0), ..j }
    }

    /// Boundary arcs in the original coordinates, `n + 1` samples each.
    pub fn boundaries(&self, n: usize) -> Vec<Boundary> {
        let parts = self.parts();
        parts
            .iter()
            .enumerate()
            .map(|(j, part)| {
                let mut b = part.boundary(n);
                for earlier in parts[..j].iter().rev() {
                    for z in b.points.iter_mut() {
                        let real = z.im == 0.0;
                        *z = earlier.inverse(*z);
                        if real {
                            z.im = 0.0;
                        }
                    }
                }
                b
            })
            .collect()
    }

    /// Smallest distance from the samples `points` to the hull boundary.
    pub fn distance_to(&self, points: &[C], n: usize) -> f64 {
        let bnd = self.boundaries(n);
        points
            .iter()
            .flat_map(|p| bnd.iter().flat_map(move |b| b.points.iter().map(move |q| (p - q).norm())))
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HullZip {
    pub hcap: f64,
    pub passengers: Vec<Jet>,
}

/// Maps out the hull bounded by `boundaries` with the zipper, carrying
/// `passengers`. Closed arcs are finished by the half-disk over the real
/// gap between the last sample's image and the image of the arc's end.
pub fn zip_hull(boundaries: &[Boundary], passengers: &[Jet], opts: &ZipOptions, exec: Execution) -> Result<HullZip> {
    let mut carried = passengers.to_vec();
    let mut pieces: Vec<Vec<C>> = boundaries.iter().map(|b| b.points.clone()).collect();
    let mut hcap = 0.0;
    for j in 0..pieces.len() {
        let pts = pieces[j].clone();
        let closed = boundaries[j].closed;
        if pts.len() < 2 || (closed && pts.len() < 3) {
            return Err(LoewnerError::malformed("hull boundary has too few samples"));
        }
        // zip at unit size: the swallowing test is not scale-invariant, and
        // flowed hulls can be tiny compared with their distance from 0
        let base = pts[0].re;
        let size = pts.iter().fold(0.0f64, |m, z| m.max((z - base).norm()));
        if !(size > 0.0) {
            return Err(LoewnerError::malformed("hull boundary is degenerate"));
        }
        let to_unit = |z: C| (z - base) / size;
        let interior_end = if closed { pts.len() - 1 } else { pts.len() };
        let interior: Vec<C> = pts[1..interior_end].iter().map(|&z| to_unit(z)).collect();

        // everything that rides along: caller's jets, the arc end, later arcs
        let mut riders: Vec<Jet> = carried
            .iter()
            .map(|jt| jt.shift(C::new(-base, 0.0)).scale(1.0 / size))
            .collect();
        if closed {
            riders.push(Jet::value(C::new(to_unit(pts[pts.len() - 1]).re, 0.0)));
        }
        for later in &pieces[j + 1..] {
            riders.extend(later.iter().map(|&z| Jet::value(to_unit(z))));
        }
        let zipped = zipper::zip(&interior, &riders, opts, exec)?;
        hcap += size * size * zipped.hcap();
        let zipped_passengers: Vec<Jet> = zipped.passengers.into_iter().map(|jt| jt.scale(size)).collect();
        let mut out = zipped_passengers.into_iter();
        carried = out.by_ref().take(carried.len()).collect();
        let mut closing = None;
        if closed {
            let end = out.next().expect("arc end rides along").z.re;
            let (c, r) = (0.5 * end, 0.5 * end.abs());
            closing = Some(BasicHull::HalfDisk { center: c, radius: r });
            hcap += r * r;
        }
        for later in pieces[j + 1..].iter_mut() {
            for z in later.iter_mut() {
                let real = z.im == 0.0;
                *z = out.next().expect("later arcs ride along").z;
                if real {
                    z.im = 0.0;
                }
            }
        }
        if let Some(h) = closing {
            carried = carried.into_iter().map(|jt| jt.then(h.map(jt.z))).collect();
            for later in pieces[j + 1..].iter_mut() {
                for z in later.iter_mut() {
                    *z = h.map(*z)[0];
                }
            }
        }
    }
    Ok(HullZip { hcap, passengers: carried })
}

/// `hcap` of a catalogue hull computed by zipping its boundary.
pub fn zipped_hcap(hull: &SlitHull, samples: usize, opts: &ZipOptions, exec: Execution) -> Result<f64> {
    hull.validate()?;
    Ok(zip_hull(&hull.boundaries(samples), &[], opts, exec)?.hcap)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slit() -> BasicHull {
        BasicHull::VerticalSlit { base: 5.0, height: 1.0 }
    }

    #[test]
    fn slit_map_is_normalized() {
        let g = slit().map(C::new(0.0, 0.0));
        assert!((g[0].re - (5.0 - 26f64.sqrt())).abs() < 1e-14 && g[0].im.abs() < 1e-14);
        assert!((g[1].re - 5.0 / 26f64.sqrt()).abs() < 1e-14);
        let big = C::new(3e4, 2e4);
        let v = slit().map(big)[0];
        assert!(((v - big) * (big - 5.0) - 0.5).norm() < 1e-6);
        // the slit itself goes to the real line
        assert!(slit().map(C::new(5.0, 0.5))[0].im.abs() < 1e-12);
    }

    #[test]
    fn inverses_invert() {
        let disk = BasicHull::HalfDisk { center: -3.0, radius: 2.0 };
        for part in [slit(), disk] {
            for w in [C::new(0.3, 0.7), C::new(-4.0, 2.0), C::new(9.0, 0.01)] {
                assert!((part.map(part.inverse(w))[0] - w).norm() < 1e-12, "{part:?} {w}");
            }
        }
        // a real point beside the slit maps back to the real line
        assert!(slit().inverse(C::new(2.0, 0.0)).im.abs() < 1e-15);
    }

    #[test]
    fn derivatives_match_differences() {
        let z = C::new(0.2, 0.3);
        for part in [slit(), BasicHull::HalfDisk { center: 4.0, radius: 1.5 }] {
            let g = part.map(z);
            let h = 1e-5;
            let (up, down) = (part.map(z + h), part.map(z - h));
            for (k, exact) in g.iter().enumerate().skip(1) {
                let fd = (up[k - 1] - down[k - 1]) / (2.0 * h);
                assert!((fd - exact).norm() < 1e-7 * (1.0 + exact.norm()), "{part:?} order {k}");
            }
        }
    }

    #[test]
    fn composed_hcap_adds() {
        let k = SlitHull::Composed { parts: vec![slit(), BasicHull::HalfDisk { center: -4.0, radius: 1.0 }] };
        k.check_clear_of_origin().unwrap();
        assert!((k.hcap() - 1.5).abs() < 1e-15);
        let far = C::new(1e5, 1e5);
        assert!(((k.map_out(far) - far) * far - 1.5).norm() < 1e-4);
        assert!(SlitHull::HalfDisk { center: 0.5, radius: 1.0 }.check_clear_of_origin().is_err());
        assert!(SlitHull::HalfDisk { center: 0.5, radius: 1.0 }.validate().is_ok());
    }
}
