//! Exact modular arithmetic and number-theoretic transforms.
//!
//! Everything here is exact integer arithmetic over single-word prime moduli.
//! The negacyclic transform doubles as the slot encoder of the encryption
//! scheme, so its output ordering is fixed to the slot order described on
//! [`NttTables::slot_perm`]: pointwise products in that order correspond to
//! negacyclic convolution of the coefficient vectors.

use crate::error::{Error, Result};

/// Default ciphertext modulus: 60-bit prime, ≡ 1 (mod 2^14).
pub const DEFAULT_Q: u64 = 1_152_921_471_676_858_369;
/// Default plaintext modulus: 20-bit prime, 786433 = 3·2^18 + 1.
pub const DEFAULT_P: u64 = 786_433;
/// Default polynomial degree / slot count.
pub const DEFAULT_N: usize = 2048;

pub fn add_mod(a: u64, b: u64, m: u64) -> u64 {
    let s = a + b;
    if s >= m {
        s - m
    } else {
        s
    }
}

pub fn sub_mod(a: u64, b: u64, m: u64) -> u64 {
    if a >= b {
        a - b
    } else {
        a + m - b
    }
}

pub fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    ((a as u128 * b as u128) % m as u128) as u64
}

pub fn pow_mod(mut base: u64, mut exp: u64, m: u64) -> u64 {
    let mut acc = 1u64;
    base %= m;
    while exp > 0 {
        if exp & 1 == 1 {
            acc = mul_mod(acc, base, m);
        }
        base = mul_mod(base, base, m);
        exp >>= 1;
    }
    acc
}

pub fn inv_mod(a: u64, m: u64) -> u64 {
    // m prime
    pow_mod(a, m - 2, m)
}

/// Shoup precomputation for a fixed multiplicand.
fn shoup(w: u64, m: u64) -> u64 {
    (((w as u128) << 64) / m as u128) as u64
}

/// a · w mod m with precomputed w_shoup; requires m < 2^63.
#[inline]
fn mul_shoup(a: u64, w: u64, w_shoup: u64, m: u64) -> u64 {
    let q = ((a as u128 * w_shoup as u128) >> 64) as u64;
    let r = a.wrapping_mul(w).wrapping_sub(q.wrapping_mul(m));
    if r >= m {
        r - m
    } else {
        r
    }
}

/// Deterministic Miller-Rabin for u64.
pub fn is_prime(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n == p {
            return true;
        }
        if n % p == 0 {
            return false;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d & 1 == 0 {
        d >>= 1;
        s += 1;
    }
    'witness: for a in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 0..s - 1 {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut d = 2u64;
    while d as u128 * d as u128 <= n as u128 {
        if n % d == 0 {
            out.push(d);
            while n % d == 0 {
                n /= d;
            }
        }
        d += if d == 2 { 1 } else { 2 };
    }
    if n > 1 {
        out.push(n);
    }
    out
}

/// Smallest generator of (Z/m)*, found by deterministic search from 2.
pub fn find_generator(m: u64) -> u64 {
    let factors = prime_factors(m - 1);
    'g: for g in 2.. {
        for &f in &factors {
            if pow_mod(g, (m - 1) / f, m) == 1 {
                continue 'g;
            }
        }
        return g;
    }
    unreachable!()
}

/// Which of the two ring moduli a polynomial lives in.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ModulusId {
    /// Ciphertext modulus q.
    Q,
    /// Plaintext modulus p.
    P,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Domain {
    Coefficient,
    Evaluation,
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum NttStyle {
    /// Roots of x^n - 1; pointwise products give cyclic convolution.
    Cyclic,
    /// Roots of x^n + 1; pointwise products give negacyclic convolution.
    Negacyclic,
}

/// A length-n residue vector tagged with its transform state.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ModPoly {
    pub coeffs: Vec<u64>,
    pub domain: Domain,
    pub modulus: ModulusId,
}

impl ModPoly {
    pub fn coeff_form(coeffs: Vec<u64>, modulus: ModulusId) -> Self {
        ModPoly {
            coeffs,
            domain: Domain::Coefficient,
            modulus,
        }
    }
}

/// Precomputed transform tables for one modulus at one degree n.
pub struct NttTables {
    pub modulus: u64,
    pub n: usize,
    /// Primitive 2n-th root of unity (psi^n = -1).
    pub psi: u64,
    bitrev: Vec<u32>,
    // stage twiddles, indexed tw[half + j] = omega^{j * n/(2*half)}
    tw: Vec<u64>,
    tw_shoup: Vec<u64>,
    itw: Vec<u64>,
    itw_shoup: Vec<u64>,
    psi_pow: Vec<u64>,
    psi_pow_shoup: Vec<u64>,
    ipsi_pow: Vec<u64>,
    ipsi_pow_shoup: Vec<u64>,
    n_inv: u64,
    /// slot_perm[s] = index in natural cyclic-NTT order holding the
    /// evaluation at psi^{e(s)}, where the slot exponents run through
    /// 3^0..3^{n/2-1} and then their negations. This is the row-major
    /// 2×(n/2) hypercube order used by the encryption scheme's batching.
    pub slot_perm: Vec<u32>,
}

impl NttTables {
    pub fn new(modulus: u64, n: usize) -> Result<Self> {
        if !n.is_power_of_two() || n < 4 {
            return Err(Error::Params(format!("n={n} must be a power of two >= 4")));
        }
        if !is_prime(modulus) {
            return Err(Error::Params(format!("{modulus} is not prime")));
        }
        let two_n = 2 * n as u64;
        if (modulus - 1) % two_n != 0 {
            return Err(Error::Params(format!(
                "{modulus} lacks a 2n-th root of unity (not ≡ 1 mod {two_n})"
            )));
        }
        let g = find_generator(modulus);
        let psi = pow_mod(g, (modulus - 1) / two_n, modulus);
        debug_assert_eq!(pow_mod(psi, n as u64, modulus), modulus - 1);
        let omega = mul_mod(psi, psi, modulus);
        let omega_inv = inv_mod(omega, modulus);

        let log_n = n.trailing_zeros();
        let mut bitrev = vec![0u32; n];
        for (i, r) in bitrev.iter_mut().enumerate() {
            *r = (i as u32).reverse_bits() >> (32 - log_n);
        }

        let build = |root: u64| -> (Vec<u64>, Vec<u64>) {
            let mut t = vec![0u64; n];
            let mut ts = vec![0u64; n];
            let mut half = 1;
            while half < n {
                let step = pow_mod(root, (n / (2 * half)) as u64, modulus);
                let mut w = 1u64;
                for j in 0..half {
                    t[half + j] = w;
                    ts[half + j] = shoup(w, modulus);
                    w = mul_mod(w, step, modulus);
                }
                half *= 2;
            }
            (t, ts)
        };
        let (tw, tw_shoup) = build(omega);
        let (itw, itw_shoup) = build(omega_inv);

        let psi_inv = inv_mod(psi, modulus);
        let mut psi_pow = vec![0u64; n];
        let mut ipsi_pow = vec![0u64; n];
        let mut a = 1u64;
        let mut b = 1u64;
        for i in 0..n {
            psi_pow[i] = a;
            ipsi_pow[i] = b;
            a = mul_mod(a, psi, modulus);
            b = mul_mod(b, psi_inv, modulus);
        }
        let psi_pow_shoup = psi_pow.iter().map(|&w| shoup(w, modulus)).collect();
        let ipsi_pow_shoup = ipsi_pow.iter().map(|&w| shoup(w, modulus)).collect();

        // slot ordering: exponents 3^s and -3^s mod 2n; natural index (e-1)/2
        let half = n / 2;
        let mut slot_perm = vec![0u32; n];
        let mut e = 1u64;
        for s in 0..half {
            slot_perm[s] = ((e - 1) / 2) as u32;
            slot_perm[s + half] = ((two_n - e - 1) / 2) as u32;
            e = e * 3 % two_n;
        }

        Ok(NttTables {
            modulus,
            n,
            psi,
            bitrev,
            tw,
            tw_shoup,
            itw,
            itw_shoup,
            psi_pow,
            psi_pow_shoup,
            ipsi_pow,
            ipsi_pow_shoup,
            n_inv: inv_mod(n as u64, modulus),
            slot_perm,
        })
    }

    fn butterflies(&self, a: &mut [u64], tw: &[u64], tw_shoup: &[u64]) {
        let n = self.n;
        let m = self.modulus;
        for i in 0..n {
            let r = self.bitrev[i] as usize;
            if i < r {
                a.swap(i, r);
            }
        }
        let mut half = 1;
        while half < n {
            for start in (0..n).step_by(2 * half) {
                for j in 0..half {
                    let w = tw[half + j];
                    let ws = tw_shoup[half + j];
                    let u = a[start + j];
                    let v = mul_shoup(a[start + j + half], w, ws, m);
                    a[start + j] = add_mod(u, v, m);
                    a[start + j + half] = sub_mod(u, v, m);
                }
            }
            half *= 2;
        }
    }

    /// Cyclic DFT, natural order: out[k] = sum_i a[i]·omega^{ik}.
    pub fn forward_cyclic(&self, a: &mut [u64]) {
        self.butterflies(a, &self.tw, &self.tw_shoup);
    }

    pub fn inverse_cyclic(&self, a: &mut [u64]) {
        self.butterflies(a, &self.itw, &self.itw_shoup);
        let s = shoup(self.n_inv, self.modulus);
        for x in a.iter_mut() {
            *x = mul_shoup(*x, self.n_inv, s, self.modulus);
        }
    }

    /// Negacyclic DFT in slot order: out[s] = a(psi^{e(s)}).
    pub fn forward_negacyclic(&self, a: &mut [u64]) {
        let m = self.modulus;
        for (i, x) in a.iter_mut().enumerate() {
            *x = mul_shoup(*x, self.psi_pow[i], self.psi_pow_shoup[i], m);
        }
        self.forward_cyclic(a);
        let tmp = a.to_vec();
        for (s, x) in a.iter_mut().enumerate() {
            *x = tmp[self.slot_perm[s] as usize];
        }
    }

    pub fn inverse_negacyclic(&self, a: &mut [u64]) {
        let m = self.modulus;
        let tmp = a.to_vec();
        for (s, &src) in self.slot_perm.iter().enumerate() {
            a[src as usize] = tmp[s];
        }
        self.inverse_cyclic(a);
        for (i, x) in a.iter_mut().enumerate() {
            *x = mul_shoup(*x, self.ipsi_pow[i], self.ipsi_pow_shoup[i], m);
        }
    }

    pub fn forward(&self, a: &mut [u64], style: NttStyle) {
        match style {
            NttStyle::Cyclic => self.forward_cyclic(a),
            NttStyle::Negacyclic => self.forward_negacyclic(a),
        }
    }

    pub fn inverse(&self, a: &mut [u64], style: NttStyle) {
        match style {
            NttStyle::Cyclic => self.inverse_cyclic(a),
            NttStyle::Negacyclic => self.inverse_negacyclic(a),
        }
    }

    /// Negacyclic product of coefficient-form polys, via NTT.
    pub fn negacyclic_mul(&self, a: &[u64], b: &[u64]) -> Vec<u64> {
        let mut x = a.to_vec();
        let mut y = b.to_vec();
        self.forward_negacyclic(&mut x);
        self.forward_negacyclic(&mut y);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = mul_mod(*xi, *yi, self.modulus);
        }
        self.inverse_negacyclic(&mut x);
        x
    }
}

/// The parameter block shared by both parties: degree n, ciphertext modulus q,
/// plaintext modulus p, and their 2n-th roots of unity (found by deterministic
/// search from the smallest generator, so both parties agree bit-exactly).
pub struct RingParams {
    pub n: usize,
    pub q: u64,
    pub p: u64,
    pub tables_q: NttTables,
    pub tables_p: NttTables,
}

impl RingParams {
    /// Minimum q/p ratio accepted at construction (noise headroom).
    pub const MIN_HEADROOM: u64 = 8;

    pub fn new(n: usize, q: u64, p: u64) -> Result<Self> {
        if p.checked_mul(Self::MIN_HEADROOM).map_or(true, |v| v > q) {
            return Err(Error::Params(format!(
                "plaintext modulus {p} too large for ciphertext modulus {q}"
            )));
        }
        Ok(RingParams {
            n,
            q,
            p,
            tables_q: NttTables::new(q, n)?,
            tables_p: NttTables::new(p, n)?,
        })
    }

    /// The production parameter set: n=2048, 60-bit q, 20-bit p.
    pub fn default_params() -> Self {
        Self::new(DEFAULT_N, DEFAULT_Q, DEFAULT_P).expect("default parameters are valid")
    }

    pub fn psi_q(&self) -> u64 {
        self.tables_q.psi
    }

    pub fn psi_p(&self) -> u64 {
        self.tables_p.psi
    }

    pub fn modulus(&self, id: ModulusId) -> u64 {
        match id {
            ModulusId::Q => self.q,
            ModulusId::P => self.p,
        }
    }

    pub fn tables(&self, id: ModulusId) -> &NttTables {
        match id {
            ModulusId::Q => &self.tables_q,
            ModulusId::P => &self.tables_p,
        }
    }

    pub fn ntt_forward(&self, poly: &ModPoly, style: NttStyle) -> Result<ModPoly> {
        if poly.domain != Domain::Coefficient {
            return Err(Error::Mismatch("ntt_forward expects coefficient form".into()));
        }
        self.check_len(poly)?;
        let mut coeffs = poly.coeffs.clone();
        self.tables(poly.modulus).forward(&mut coeffs, style);
        Ok(ModPoly {
            coeffs,
            domain: Domain::Evaluation,
            modulus: poly.modulus,
        })
    }

    pub fn ntt_inverse(&self, poly: &ModPoly, style: NttStyle) -> Result<ModPoly> {
        if poly.domain != Domain::Evaluation {
            return Err(Error::Mismatch("ntt_inverse expects evaluation form".into()));
        }
        self.check_len(poly)?;
        let mut coeffs = poly.coeffs.clone();
        self.tables(poly.modulus).inverse(&mut coeffs, style);
        Ok(ModPoly {
            coeffs,
            domain: Domain::Coefficient,
            modulus: poly.modulus,
        })
    }

    fn check_len(&self, poly: &ModPoly) -> Result<()> {
        if poly.coeffs.len() != self.n {
            return Err(Error::Mismatch(format!(
                "polynomial length {} != n = {}",
                poly.coeffs.len(),
                self.n
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum ConvStyle {
    Cyclic,
    Negacyclic,
    Linear,
}

/// Direct O(l²) convolution, used as the oracle for every transform-based path.
pub fn poly_conv_reference(x: &[u64], w: &[u64], modulus: u64, style: ConvStyle) -> Vec<u64> {
    match style {
        ConvStyle::Linear => {
            if x.is_empty() || w.is_empty() {
                return Vec::new();
            }
            let mut out = vec![0u64; x.len() + w.len() - 1];
            for (i, &xi) in x.iter().enumerate() {
                for (j, &wj) in w.iter().enumerate() {
                    out[i + j] = add_mod(out[i + j], mul_mod(xi, wj, modulus), modulus);
                }
            }
            out
        }
        ConvStyle::Cyclic | ConvStyle::Negacyclic => {
            let n = x.len();
            assert_eq!(n, w.len());
            let mut out = vec![0u64; n];
            for (i, &xi) in x.iter().enumerate() {
                for (j, &wj) in w.iter().enumerate() {
                    let t = mul_mod(xi, wj, modulus);
                    let k = (i + j) % n;
                    if i + j >= n && style == ConvStyle::Negacyclic {
                        out[k] = sub_mod(out[k], t, modulus);
                    } else {
                        out[k] = add_mod(out[k], t, modulus);
                    }
                }
            }
            out
        }
    }
}
