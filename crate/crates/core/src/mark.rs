//! Dörfler bulk marking and the strategy combinators.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{IndicatorField, IndicatorKind};
use crate::real::Real;

/// How primal and dual mark sets are turned into the refinement set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    /// Union of the primal and dual Dörfler sets.
    Hpz,
    /// The smaller of the primal and dual Dörfler sets.
    Ms,
    /// Dörfler marking on the weighted-residual indicators alone.
    Dwr,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Hpz => "hpz",
            Strategy::Ms => "ms",
            Strategy::Dwr => "dwr",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hpz" => Ok(Strategy::Hpz),
            "ms" => Ok(Strategy::Ms),
            "dwr" => Ok(Strategy::Dwr),
            other => Err(Error::InvalidInput(format!("unknown strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkSet<T> {
    /// Marked element ids, ascending.
    pub elements: Vec<usize>,
    /// Fraction of the total squared estimator captured by `elements`.
    pub achieved_fraction: T,
}

impl<T: Real> MarkSet<T> {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn contains(&self, element: usize) -> bool {
        self.elements.binary_search(&element).is_ok()
    }
}

/// Smallest-up-to-a-factor-two set `M` with `sum_M w >= theta^2 sum w`.
///
/// Weights are the squared indicators (`|value|` for DWR). Elements are
/// sorted into bins `(max/2^{k+1}, max/2^k]`; whole bins are taken from the
/// top, and the last bin is trimmed in ascending id order.
pub fn dorfler<T: Real>(indicators: &IndicatorField<T>, theta: T) -> Result<MarkSet<T>> {
    if !(theta > T::zero() && theta <= T::one()) {
        return Err(Error::InvalidInput(format!("theta = {theta} outside (0, 1]")));
    }
    let w = indicators.marking_weights();
    let total: T = w.iter().copied().sum();
    if total <= T::zero() {
        return Ok(MarkSet {
            elements: Vec::new(),
            achieved_fraction: T::one(),
        });
    }
    if theta == T::one() {
        let elements: Vec<usize> = (0..w.len()).filter(|&t| w[t] > T::zero()).collect();
        let captured = sum_of(&w, &elements);
        return Ok(MarkSet {
            elements,
            achieved_fraction: captured / total,
        });
    }
    let target = theta * theta * total;
    let max = w.iter().copied().fold(T::zero(), T::max);
    let mut bins: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (t, &v) in w.iter().enumerate() {
        if v > T::zero() {
            bins.entry(bin_index(max, v)).or_default().push(t);
        }
    }
    // bins iterate from largest values down; ids within a bin are ascending
    let order: Vec<usize> = bins.into_values().flatten().collect();
    let theta_sq = theta * theta;
    let enough = |captured: T| captured >= target && captured / total >= theta_sq;
    let mut chosen = Vec::new();
    let mut acc = T::zero();
    let mut cursor = 0;
    while !enough(acc) && cursor < order.len() {
        acc += w[order[cursor]];
        chosen.push(order[cursor]);
        cursor += 1;
    }
    chosen.sort_unstable();
    // the canonical sum may round differently from the running one
    while !enough(sum_of(&w, &chosen)) && cursor < order.len() {
        let t = order[cursor];
        cursor += 1;
        let pos = chosen.binary_search(&t).unwrap_err();
        chosen.insert(pos, t);
    }
    let captured = sum_of(&w, &chosen);
    Ok(MarkSet {
        elements: chosen,
        achieved_fraction: captured / total,
    })
}

/// `k` with `v` in `(max/2^{k+1}, max/2^k]`.
fn bin_index<T: Real>(max: T, v: T) -> i64 {
    let mut k = (max / v).log2().floor().to_i64().unwrap_or(i64::MAX);
    // guard the rounding of log2 at bin boundaries
    let two = T::lit(2.0);
    while k > 0 && v > max / two.powi(k as i32) {
        k -= 1;
    }
    while v <= max / two.powi(k as i32 + 1) {
        k += 1;
    }
    k
}

fn sum_of<T: Real>(w: &[T], ids: &[usize]) -> T {
    ids.iter().map(|&t| w[t]).sum()
}

/// Dörfler marking for a strategy: both primal and dual sets for HPZ/MS, the
/// weighted-residual set alone for DWR.
/// Primal (or DWR) marks, dual marks if any, and the combined set.
pub type StrategyMarks<T> = (MarkSet<T>, Option<MarkSet<T>>, MarkSet<T>);

pub fn mark_for_strategy<T: Real>(
    strategy: Strategy,
    primal_or_dwr: &IndicatorField<T>,
    dual: Option<&IndicatorField<T>>,
    theta: T,
) -> Result<StrategyMarks<T>> {
    let expected = match strategy {
        Strategy::Dwr => IndicatorKind::Dwr,
        _ => IndicatorKind::Primal,
    };
    if primal_or_dwr.kind() != expected {
        return Err(Error::InvalidInput(format!(
            "{strategy} marking needs {expected:?} indicators, got {:?}",
            primal_or_dwr.kind()
        )));
    }
    let primal = dorfler(primal_or_dwr, theta)?;
    let dual_marks = match dual {
        Some(d) => Some(dorfler(d, theta)?),
        None => None,
    };
    let combined = combine(strategy, &primal, dual_marks.as_ref())?;
    Ok((primal, dual_marks, combined))
}

/// Combines mark sets according to `strategy`. For HPZ the reported fraction
/// is the smaller of the two inputs' fractions.
pub fn combine<T: Real>(strategy: Strategy, primal: &MarkSet<T>, dual: Option<&MarkSet<T>>) -> Result<MarkSet<T>> {
    match strategy {
        Strategy::Dwr => Ok(primal.clone()),
        Strategy::Hpz | Strategy::Ms => {
            let dual = dual.ok_or_else(|| Error::InvalidInput(format!("{strategy} marking needs a dual mark set")))?;
            if strategy == Strategy::Ms {
                return Ok(if dual.len() < primal.len() {
                    dual.clone()
                } else {
                    primal.clone()
                });
            }
            let mut elements = primal.elements.clone();
            elements.extend_from_slice(&dual.elements);
            elements.sort_unstable();
            elements.dedup();
            Ok(MarkSet {
                elements,
                achieved_fraction: primal.achieved_fraction.min(dual.achieved_fraction),
            })
        }
    }
}
