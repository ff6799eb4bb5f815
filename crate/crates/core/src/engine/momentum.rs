//! The total probability computed in momentum space,
//! `sum_gamma omega_gamma sum_{ln} int |D_{ln00} F psi|^2 d^d k`.

use serde::{Deserialize, Serialize};

use crate::kernel::KernelFamily;
use crate::lorentz::BoostElementTable;
use crate::state::WaveFunction;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentumTotal {
    /// Without the `l` cutoff, using `sum_l |d_l|^2 = 1`.
    pub total: f64,
    /// Summed over `l <= l_max` only; this is what a truncated field carries.
    pub truncated: f64,
    /// `total - truncated`.
    pub l_residual: f64,
    /// Contribution of each `l` (3+1 only).
    pub per_l: Vec<f64>,
    /// Share of the last two `l` in the truncated total.
    pub tail_ratio: f64,
}

pub fn momentum_space_total(psi: &WaveFunction, k: &KernelFamily) -> Result<MomentumTotal> {
    k.check_state(psi)?;
    let grid = psi.grid();
    let n_wave = grid.wave_count();
    // |F psi|^2 per label and node, summed over partial waves.
    let mut weight = vec![vec![0.0; grid.node_count()]; k.n_gamma()];
    for (g, row) in weight.iter_mut().enumerate() {
        for (node, acc) in row.iter_mut().enumerate() {
            let m = grid.mass_index(node);
            for w in 0..n_wave {
                let f: num_complex::Complex64 = (0..k.n_sigma()).map(|s| k.get(m, g, s) * psi.get(s, w, node)).sum();
                *acc += f.norm_sqr() * grid.measure(node);
            }
        }
    }
    let omega: Vec<f64> = k.gammas().iter().map(|g| g.weight).collect();
    let total: f64 = weight.iter().zip(&omega).map(|(r, o)| o * r.iter().sum::<f64>()).sum();
    let Some(l_max) = grid.l_max() else {
        return Ok(MomentumTotal { total, truncated: total, l_residual: 0.0, per_l: vec![total], tail_ratio: 0.0 });
    };
    let zetas = grid.rapidity_axis().expect("3+1 grid").nodes();
    let mut per_l = vec![0.0; l_max + 1];
    for (g, row) in weight.iter().enumerate() {
        let table = BoostElementTable::build(k.gammas()[g].label.c(), l_max, zetas)?;
        for (node, v) in row.iter().enumerate() {
            for (l, acc) in per_l.iter_mut().enumerate() {
                *acc += omega[g] * v * table.get(l, grid.rapidity_index(node)).norm_sqr();
            }
        }
    }
    let truncated: f64 = per_l.iter().sum();
    let tail: f64 = per_l.iter().rev().take(2).sum();
    Ok(MomentumTotal {
        total,
        truncated,
        l_residual: total - truncated,
        tail_ratio: if truncated > 0.0 { tail / truncated } else { 0.0 },
        per_l,
    })
}
