use num_traits::Float;

/// `atoms` evenly spaced points from `v_min` to `v_max` inclusive.
pub fn support<T: Float>(v_min: T, v_max: T, atoms: usize) -> Vec<T> {
    let dz = (v_max - v_min) / T::from(atoms - 1).unwrap();
    (0..atoms).map(|i| v_min + T::from(i).unwrap() * dz).collect()
}

/// Categorical projection of the shifted distribution `reward + gamma * z`
/// back onto the fixed support. Each shifted atom, clamped to the support
/// range, splits its mass linearly between its two neighbours.
pub fn project_target<T: Float>(next_dist: &[T], reward: T, gamma: T, terminal: bool, v_min: T, v_max: T) -> Vec<T> {
    let atoms = next_dist.len();
    let last = T::from(atoms - 1).unwrap();
    let dz = (v_max - v_min) / last;
    let snap = T::from(1e-10).unwrap();
    let z = support(v_min, v_max, atoms);
    let mut out = vec![T::zero(); atoms];
    for (zj, &pj) in z.iter().zip(next_dist) {
        let shifted = if terminal { reward } else { reward + gamma * *zj };
        let tz = shifted.max(v_min).min(v_max);
        let mut b = (tz - v_min) / dz;
        if (b - b.round()).abs() < snap {
            b = b.round();
        }
        let b = b.max(T::zero()).min(last);
        let l = b.floor();
        let u = b.ceil();
        let (li, ui) = (l.to_usize().unwrap(), u.to_usize().unwrap());
        if li == ui {
            out[li] = out[li] + pj;
        } else {
            out[li] = out[li] + pj * (u - b);
            out[ui] = out[ui] + pj * (b - l);
        }
    }
    out
}
