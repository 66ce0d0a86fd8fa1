use std::cmp::Ordering;
use std::collections::HashMap;

use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::model::Allocation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RoundingMode {
    #[default]
    #[serde(rename = "fractional")]
    Fractional,
    /// Largest-remainder apportionment per establishment.
    #[serde(rename = "integer", alias = "largest-remainder")]
    LargestRemainder,
}

impl std::str::FromStr for RoundingMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fractional" => Ok(RoundingMode::Fractional),
            "integer" | "largest-remainder" => Ok(RoundingMode::LargestRemainder),
            other => Err(format!("unknown rounding mode {other:?}")),
        }
    }
}

/// Integer apportionment of `jobs` in proportion to `weights` (equal shares
/// when every weight is zero). Entries must be in ascending face-code order;
/// leftover units go to the largest remainders, lower index first on ties.
pub fn largest_remainder(jobs: u64, weights: &[u64]) -> Vec<u64> {
    let uniform;
    let weights = if weights.iter().all(|&w| w == 0) {
        uniform = vec![1u64; weights.len()];
        &uniform
    } else {
        weights
    };
    let total: u128 = weights.iter().map(|&w| u128::from(w)).sum();
    if total == 0 {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(weights.len());
    let mut remainders = Vec::with_capacity(weights.len());
    let mut assigned = 0u64;
    for (i, &w) in weights.iter().enumerate() {
        let scaled = u128::from(jobs) * u128::from(w);
        let floor = (scaled / total) as u64;
        assigned += floor;
        out.push(floor);
        remainders.push((scaled % total, i));
    }
    let leftover = (jobs - assigned) as usize;
    if leftover > 0 {
        // common denominator, so remainders compare directly
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in &remainders[..leftover] {
            out[i] += 1;
        }
    }
    out
}

/// Rounds rational allocations to integers per establishment.
///
/// `Fractional` returns the input unchanged. `LargestRemainder` floors every
/// amount and hands the establishment's leftover units, one each, to the
/// entries with the largest fractional parts; ties go to the lower face
/// code. Each establishment's total must already be an integer and is
/// preserved exactly. Output order matches input order.
pub fn round_to_integers(allocations: &[Allocation], mode: RoundingMode) -> Vec<Allocation> {
    if mode == RoundingMode::Fractional {
        return allocations.to_vec();
    }
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, a) in allocations.iter().enumerate() {
        groups
            .entry(a.establishment_id.as_str())
            .or_default()
            .push(i);
    }
    let mut out: Vec<Allocation> = allocations.to_vec();
    for members in groups.values() {
        let total: BigRational = members.iter().map(|&i| &allocations[i].amount).sum();
        assert!(
            total.is_integer(),
            "establishment total {total} is not an integer"
        );
        let mut floors = BigRational::zero();
        let mut fracs = Vec::with_capacity(members.len());
        for &i in members {
            let amount = &allocations[i].amount;
            let floor = amount.floor();
            fracs.push((amount - &floor, i));
            floors += &floor;
            out[i].amount = floor;
        }
        let leftover = (total - floors)
            .to_integer()
            .to_usize()
            .expect("leftover units fit in usize");
        fracs.sort_by(|(fa, ia), (fb, ib)| {
            fb.cmp(fa).then_with(|| {
                let (ca, cb) = (&allocations[*ia].face_code, &allocations[*ib].face_code);
                match (ca, cb) {
                    (Some(a), Some(b)) => a.cmp(b),
                    (Some(_), None) => Ordering::Less,
                    (None, Some(_)) => Ordering::Greater,
                    (None, None) => ia.cmp(ib),
                }
            })
        });
        for &(_, i) in &fracs[..leftover] {
            out[i].amount += BigRational::from_integer(1.into());
        }
    }
    out
}
