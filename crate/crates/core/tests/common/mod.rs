//! Independent brute-force oracle for integration tests.
//!
//! Works on plain `Vec<bool>` templates and recomputes every distance,
//! threshold and probability from the population description alone, with
//! none of the library's enumeration, packing or calibration code.

#![allow(dead_code)]

use wolfbench::matcher::PolicyKind;
use wolfbench::population::{generate_population, NoiseFamily, NoiseModel, Population, PopulationConfig, Space};
use wolfbench::template::{BitTemplate, DistanceFn, MaskedTemplate, Template};

#[derive(Clone, Debug, PartialEq)]
pub struct Pt {
    pub bits: Vec<bool>,
    pub mask: Vec<bool>,
}

pub fn to_pt(t: &Template) -> Pt {
    let read = |b: &BitTemplate| (0..b.len()).map(|i| b.get(i)).collect::<Vec<bool>>();
    match t {
        Template::Bits(b) => Pt { bits: read(b), mask: vec![true; b.len()] },
        Template::Masked(m) => Pt { bits: read(m.bits()), mask: read(m.mask()) },
        Template::Score(_) => panic!("oracle handles bit templates only"),
    }
}

pub fn to_template(p: &Pt, masked: bool) -> Template {
    let b = BitTemplate::from_fn(p.bits.len(), |i| p.bits[i]);
    if masked {
        Template::Masked(MaskedTemplate::new(b, BitTemplate::from_fn(p.mask.len(), |i| p.mask[i])).unwrap())
    } else {
        Template::Bits(b)
    }
}

/// `None` when no position is available in both.
pub fn distance(d: DistanceFn, a: &Pt, b: &Pt) -> Option<(f64, u32)> {
    let mut k = 0u32;
    let mut h = 0u32;
    for i in 0..a.bits.len() {
        if a.mask[i] && b.mask[i] {
            k += 1;
            if a.bits[i] != b.bits[i] {
                h += 1;
            }
        }
    }
    if k == 0 {
        return None;
    }
    Some(match d {
        DistanceFn::Hamming => (h as f64, k),
        DistanceFn::FractionalHamming => (h as f64 / k as f64, k),
        DistanceFn::AbsoluteScoreDifference => unreachable!(),
    })
}

pub struct Oracle {
    pub n: usize,
    pub len: usize,
    pub masked: bool,
    pub d: DistanceFn,
    pub dists: Vec<Vec<(Pt, f64)>>,
    pub kind: PolicyKind,
}

impl Oracle {
    pub fn new(pop: &Population, kind: PolicyKind) -> Self {
        let Space::Bits { len, masked } = *pop.space() else { panic!("bit worlds only") };
        let dists = pop
            .users()
            .iter()
            .map(|u| match &u.noise {
                NoiseModel::IidBitFlip { p } => {
                    let r = to_pt(&u.reference);
                    let mut out = Vec::new();
                    for x in 0..1u64 << len {
                        let bits: Vec<bool> = (0..len).map(|i| x >> i & 1 == 1).collect();
                        let flips = (0..len).filter(|i| bits[*i] != r.bits[*i]).count() as i32;
                        let prob = p.powi(flips) * (1.0 - p).powi(len as i32 - flips);
                        out.push((Pt { bits, mask: r.mask.clone() }, prob));
                    }
                    out
                }
                NoiseModel::ExplicitTable(t) => t.iter().map(|(x, p)| (to_pt(x), *p)).collect(),
                NoiseModel::GaussianScore(_) => panic!("bit worlds only"),
            })
            .collect();
        Oracle { n: pop.n(), len, masked, d: pop.distance(), dists, kind }
    }

    /// Every template of the space, in no particular order.
    pub fn all_templates(&self) -> Vec<Pt> {
        let mut out = Vec::new();
        self.for_each_template(|p| out.push(p.clone()));
        out
    }

    pub fn for_each_template(&self, mut f: impl FnMut(&Pt)) {
        let l = self.len;
        let masks = if self.masked { 1u64 << l } else { 1 };
        for m in 0..masks {
            let mask: Vec<bool> = (0..l).map(|i| !self.masked || m >> i & 1 == 1).collect();
            for x in 0..1u64 << l {
                f(&Pt { bits: (0..l).map(|i| x >> i & 1 == 1).collect(), mask: mask.clone() });
            }
        }
    }

    /// `(distance or +inf, mass)` pairs of the pooled impostor distribution.
    fn p_s(&self, s: &Pt) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for dist in &self.dists {
            for (t, p) in dist {
                let x = distance(self.d, s, t).map(|c| c.0).unwrap_or(f64::INFINITY);
                out.push((x, p / self.n as f64));
            }
        }
        out
    }

    /// Threshold for probe `s`, or `None` for the per-comparison rule.
    pub fn threshold(&self, s: &Pt) -> Option<f64> {
        match self.kind {
            PolicyKind::Fixed { tau } => Some(tau),
            PolicyKind::Daugman { .. } => None,
            PolicyKind::GeneralAdaptive { delta } => {
                let mut ps = self.p_s(s);
                ps.sort_by(|a, b| a.0.total_cmp(&b.0));
                // mass strictly below each distinct distance, scanned upwards
                let mut best = 0.0f64;
                let mut below = 0.0;
                let mut i = 0;
                while i < ps.len() {
                    let x = ps[i].0;
                    // ties with delta up to summation rounding do not count as below
                    if below < delta - 1e-12 {
                        best = x;
                    }
                    while i < ps.len() && ps[i].0 == x {
                        below += ps[i].1;
                        i += 1;
                    }
                }
                Some(if best.is_infinite() { f64::MAX } else { best })
            }
            PolicyKind::GaussianAdaptive { alpha } => {
                let ps = self.p_s(s);
                let total: f64 = ps.iter().map(|e| e.1).sum();
                let m: f64 = ps.iter().map(|(x, w)| x * w).sum::<f64>() / total;
                let var: f64 = ps.iter().map(|(x, w)| (x - m) * (x - m) * w).sum::<f64>() / total;
                Some(alpha * var.sqrt() + m)
            }
        }
    }

    pub fn accept(&self, s: &Pt, t: &Pt, tau_s: Option<f64>) -> bool {
        let Some((x, k)) = distance(self.d, s, t) else { return false };
        match (tau_s, self.kind) {
            (Some(tau), _) => x < tau,
            (None, PolicyKind::Daugman { alpha_prime }) => x < alpha_prime / (k as f64).sqrt() + 0.5,
            _ => unreachable!(),
        }
    }

    pub fn frr_u(&self, u: usize) -> f64 {
        let mut r = 0.0;
        for (s, ps) in &self.dists[u] {
            let tau = self.threshold(s);
            for (t, pt) in &self.dists[u] {
                if !self.accept(s, t, tau) {
                    r += ps * pt;
                }
            }
        }
        r
    }

    fn cross(&self, w: usize, v: usize) -> f64 {
        let mut a = 0.0;
        for (s, ps) in &self.dists[w] {
            let tau = self.threshold(s);
            for (t, pt) in &self.dists[v] {
                if self.accept(s, t, tau) {
                    a += ps * pt;
                }
            }
        }
        a
    }

    pub fn far_u(&self, w: usize) -> f64 {
        (0..self.n).filter(|v| *v != w).map(|v| self.cross(w, v)).sum::<f64>() / (self.n - 1) as f64
    }

    pub fn ar_u(&self, w: usize) -> f64 {
        (0..self.n).map(|v| self.cross(w, v)).sum::<f64>() / self.n as f64
    }

    pub fn ar_point(&self, s: &Pt) -> f64 {
        let tau = self.threshold(s);
        let mut a = 0.0;
        for dist in &self.dists {
            for (t, p) in dist {
                if self.accept(s, t, tau) {
                    a += p;
                }
            }
        }
        a / self.n as f64
    }

    /// Naive triple loop over probes, users and user templates.
    pub fn wap(&self) -> (f64, Pt) {
        let mut best: Option<(f64, Pt)> = None;
        self.for_each_template(|s| {
            let v = self.ar_point(s);
            if best.as_ref().is_none_or(|b| v > b.0) {
                best = Some((v, s.clone()));
            }
        });
        best.unwrap()
    }
}

/// Random unmasked world with users mixing iid and explicit noise.
pub fn random_world(seed: u64, n: usize, len: usize, distance: DistanceFn) -> Population {
    let config = PopulationConfig {
        n,
        len,
        masked: false,
        mask_density: 1.0,
        noise: NoiseFamily::Mixed { p_min: 0.0, p_max: 0.3, support: 3.min(1 << len) },
        distance,
    };
    generate_population(&config, seed).unwrap()
}

/// Random masked world with explicit noise.
pub fn random_masked_world(seed: u64, n: usize, len: usize) -> Population {
    let config = PopulationConfig {
        n,
        len,
        masked: true,
        mask_density: 0.8,
        noise: NoiseFamily::Mixed { p_min: 0.0, p_max: 0.3, support: 3 },
        distance: DistanceFn::FractionalHamming,
    };
    generate_population(&config, seed).unwrap()
}
