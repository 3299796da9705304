//! Independent oracles for the acceptance suite. Plain amplitude arrays,
//! nothing from the library's linear algebra.

use num_complex::Complex64;

/// P(parity = 1) for an n-qubit GHZ group after U = exp(−iφ diag(0, W)) on
/// every probe, each probe measured in {(|0⟩ ± e^{−iβ}|1⟩)/√2}.
/// Sums |⟨basis|ψ⟩|² over all 2^n product outcomes with odd parity.
pub fn group_odd_probability(n: usize, phi: f64, beta: f64, width: f64) -> f64 {
    let dim = 1usize << n;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    // state after the channel: only |0…0⟩ and |1…1⟩ are populated
    let mut psi = vec![Complex64::new(0.0, 0.0); dim];
    psi[0] = Complex64::new(h, 0.0);
    psi[dim - 1] = Complex64::from_polar(h, -(n as f64) * width * phi);
    // single-probe basis vectors, conjugated for the bra
    let e = Complex64::from_polar(1.0, -beta);
    let bra = |sign: f64, bit: usize| -> Complex64 {
        if bit == 0 {
            Complex64::new(h, 0.0)
        } else {
            (e * sign).conj() * h
        }
    };
    let mut odd = 0.0;
    for outcome in 0..dim {
        // outcome bit j = 1 means probe j read "−"
        let mut amp = Complex64::new(0.0, 0.0);
        for (x, a) in psi.iter().enumerate() {
            if a.norm_sqr() == 0.0 {
                continue;
            }
            let mut c = *a;
            for j in 0..n {
                let sign = if outcome >> j & 1 == 1 { -1.0 } else { 1.0 };
                c *= bra(sign, x >> j & 1);
            }
            amp += c;
        }
        if outcome.count_ones() % 2 == 1 {
            odd += amp.norm_sqr();
        }
    }
    odd
}

/// Full adaptive experiment with L groups, enumerating every bit string.
/// Group ℓ holds 2^{L−1−ℓ} probes; each probe is read with the phase
/// β_ℓ = 2π (Σ_{j<ℓ} m_j 2^j) / 2^L built from the bits already seen.
pub fn qcp_state_vector(groups: usize, width: f64, phi: f64) -> Vec<f64> {
    let k = 1usize << groups;
    let mut out = vec![0.0; k];
    for (m, slot) in out.iter_mut().enumerate() {
        let mut p = 1.0;
        for l in 0..groups {
            let n = 1usize << (groups - 1 - l);
            let prefix = m & ((1 << l) - 1);
            let beta = 2.0 * std::f64::consts::PI * prefix as f64 / k as f64;
            let odd = group_odd_probability(n, phi, beta, width);
            p *= if m >> l & 1 == 1 { odd } else { 1.0 - odd };
        }
        *slot = p;
    }
    out
}
