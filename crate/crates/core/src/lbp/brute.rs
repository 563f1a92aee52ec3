//! Exhaustive MAP search for tiny problems.

use crate::energy::{total_energy_raw, MrfProblem};
use crate::error::{Error, Result};
use crate::model::LabelStack;

/// Global minimum of the total energy by enumeration, lexicographically
/// smallest labeling (flat index order) on ties. Refuses when
/// `K^(T*H*W)` exceeds `state_limit`.
pub fn brute_force_map(prob: &MrfProblem, state_limit: u64) -> Result<(LabelStack, f64)> {
    let s = prob.shape();
    let k = prob.num_classes();
    let n = s.len();
    let states = (0..n).try_fold(1u64, |acc, _| acc.checked_mul(k as u64));
    match states {
        Some(states) if states <= state_limit => {}
        _ => {
            let size = states.map_or_else(|| format!("{k}^{n}"), |v| v.to_string());
            return Err(Error::data(format!(
                "state space of {size} labelings exceeds the limit of {state_limit}"
            )));
        }
    }
    let mut labels = vec![0u16; n];
    let mut best = labels.clone();
    let mut best_e = total_energy_raw(&labels, prob);
    // odometer with the last variable spinning fastest = lexicographic order
    loop {
        let mut pos = n;
        loop {
            if pos == 0 {
                let out = LabelStack::new(s, k, best)?;
                return Ok((out, best_e));
            }
            pos -= 1;
            if (labels[pos] as usize) + 1 < k {
                labels[pos] += 1;
                break;
            }
            labels[pos] = 0;
        }
        let e = total_energy_raw(&labels, prob);
        if e < best_e {
            best_e = e;
            best.copy_from_slice(&labels);
        }
    }
}
