//! Non-adaptive probing for two-level (star) arms.
//!
//! A non-adaptive strategy fixes the set of arms to play once, observes
//! their values, and exploits the best of the observed values and the
//! unprobed prior means. [`nonadaptive_two_level`] picks that set from the
//! budgeted LP through a three-way case split, each case carrying a
//! guarantee of `gamma* / 7`.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lp::default_tolerance;
use crate::relax::{build_budgeted_lp, RelaxationSolution, RelaxationVariant};
use crate::statespace::BanditInstance;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NonAdaptiveCase {
    /// Root exploitation carries a seventh of the LP value: exploit the best
    /// prior mean without probing.
    BestPrior,
    /// The fractional arm of the greedy fill is worth a seventh on its own:
    /// exploit it by its prior.
    BoundaryArm,
    /// Probe the fully filled arms (plus any that still fit the budget) and
    /// exploit the best outcome.
    ProbeSet,
}

/// One arm of the greedy fill over the LP restricted to `x_rho = 0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FillEntry {
    pub arm: usize,
    /// Probability the restricted LP plays the arm.
    pub z: f64,
    /// Exploitation probability conditioned on playing.
    pub exploit: f64,
    /// Exploitation reward conditioned on playing.
    pub reward: f64,
    /// Switch plus play cost of probing the arm.
    pub cost: f64,
    pub ratio: f64,
    /// Fill level in `[0, 1]`.
    pub fill: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NonAdaptivePolicy {
    pub case: NonAdaptiveCase,
    pub gamma_star: f64,
    /// `sum_i r_rho x_rho` in the LP solution.
    pub root_exploit_value: f64,
    /// Optimum of the LP with root exploitation disabled.
    pub restricted_gamma: Option<f64>,
    pub fill: Vec<FillEntry>,
    pub boundary: Option<usize>,
    /// Arms filled to one.
    pub core: Vec<usize>,
    /// Arms probed (the core plus arms added while the budget allows).
    pub probe: Vec<usize>,
    pub probe_ids: Vec<String>,
    /// Arm exploited without probing in the first two cases.
    pub select: Option<usize>,
    pub probe_cost: f64,
    pub expected_value: f64,
    /// `gamma* / 7`.
    pub bound: f64,
}

/// `E[max(max_{i in probe} X_i, max_{i not in probe} mu_i)]` where `X_i` is
/// arm `i`'s revealed leaf value and `mu_i` its prior mean.
pub fn probe_value(instance: &BanditInstance, probe: &[usize]) -> f64 {
    let mut probed = vec![false; instance.n_arms()];
    for &i in probe {
        probed[i] = true;
    }
    let floor = instance
        .arms
        .iter()
        .zip(&probed)
        .filter(|(_, &p)| !p)
        .map(|(a, _)| a.root_state().reward)
        .fold(f64::NEG_INFINITY, f64::max);
    let dists: Vec<Vec<(f64, f64)>> = probe
        .iter()
        .map(|&i| {
            let arm = &instance.arms[i];
            let root = arm.root_state();
            if root.is_leaf() {
                vec![(root.reward, 1.0)]
            } else {
                root.transitions
                    .iter()
                    .map(|t| (arm.state(t.child).reward, t.prob))
                    .collect()
            }
        })
        .collect();
    let mut support: Vec<f64> = dists.iter().flatten().map(|&(v, _)| v).collect();
    if floor.is_finite() {
        support.push(floor);
    }
    support.sort_by(f64::total_cmp);
    support.dedup();
    let mut value = 0.0;
    let mut prev = 0.0;
    for &v in &support {
        let cdf = if floor > v {
            0.0
        } else {
            dists
                .iter()
                .map(|d| d.iter().filter(|(x, _)| *x <= v).map(|(_, p)| p).sum::<f64>())
                .product()
        };
        value += v * (cdf - prev);
        prev = cdf;
    }
    value
}

fn cost_share(cost: f64, budget: f64) -> f64 {
    if budget > 0.0 {
        cost / budget
    } else if cost == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Chooses a non-adaptive probe set for an instance of star-shaped arms
/// from the budgeted LP `solution`.
pub fn nonadaptive_two_level(
    instance: &BanditInstance,
    solution: &RelaxationSolution,
) -> Result<NonAdaptivePolicy> {
    if solution.variant != RelaxationVariant::Budgeted {
        return Err(Error::WrongVariant {
            expected: "budgeted",
            found: solution.variant.name(),
        });
    }
    if let Some(arm) = instance.arms.iter().find(|a| a.depth() > 1) {
        return Err(Error::InvalidInput(format!(
            "arm `{}` is not a two-level star (depth {})",
            arm.id(),
            arm.depth()
        )));
    }
    let gamma = solution.gamma_star;
    let bound = gamma / 7.0;
    let budget = instance.budget;
    let root_exploit_value: f64 = instance
        .arms
        .iter()
        .zip(&solution.arms)
        .map(|(arm, v)| arm.root_state().reward * v.x[arm.root()][0])
        .sum();
    let best_prior = (0..instance.n_arms())
        .max_by(|&a, &b| {
            let ra = instance.arms[a].root_state().reward;
            let rb = instance.arms[b].root_state().reward;
            ra.total_cmp(&rb).then(b.cmp(&a))
        })
        .ok_or_else(|| Error::InvalidInput("instance has no arms".into()))?;
    let mut policy = NonAdaptivePolicy {
        case: NonAdaptiveCase::BestPrior,
        gamma_star: gamma,
        root_exploit_value,
        restricted_gamma: None,
        fill: Vec::new(),
        boundary: None,
        core: Vec::new(),
        probe: Vec::new(),
        probe_ids: Vec::new(),
        select: Some(best_prior),
        probe_cost: 0.0,
        expected_value: instance.arms[best_prior].root_state().reward,
        bound,
    };
    if root_exploit_value >= bound {
        return Ok(policy);
    }

    let mut model = build_budgeted_lp(instance)?;
    for (arm, cols) in instance.arms.iter().zip(&model.columns) {
        let x = cols[arm.root()].x[0];
        model.lp.set_bounds(x, 0.0, 0.0);
    }
    let restricted = model.solve(default_tolerance())?;
    policy.restricted_gamma = Some(restricted.gamma_star);

    let mut fill: Vec<FillEntry> = Vec::new();
    for (i, (arm, v)) in instance.arms.iter().zip(&restricted.arms).enumerate() {
        let root = arm.root();
        let z = v.z[root];
        if z <= 1e-12 {
            continue;
        }
        let mass: f64 = (0..arm.len()).filter(|&u| u != root).map(|u| v.x[u][0]).sum();
        let gain: f64 = (0..arm.len())
            .filter(|&u| u != root)
            .map(|u| v.x[u][0] * arm.state(u).reward)
            .sum();
        let cost = arm.switch_cost() + arm.root_state().play_cost;
        let (exploit, reward) = (mass / z, gain / z);
        let weight = cost_share(cost, budget) + exploit;
        let ratio = if weight > 0.0 {
            reward / weight
        } else if reward > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        fill.push(FillEntry {
            arm: i,
            z,
            exploit,
            reward,
            cost,
            ratio,
            fill: 0.0,
        });
    }
    fill.sort_by(|a, b| {
        b.ratio
            .partial_cmp(&a.ratio)
            .unwrap_or(Ordering::Equal)
            .then_with(|| instance.arms[a.arm].id().cmp(instance.arms[b.arm].id()))
    });
    let mut used = 0.0;
    for e in fill.iter_mut() {
        let weight = cost_share(e.cost, budget) + e.exploit;
        if weight == 0.0 || used + weight <= 1.0 + 1e-9 {
            e.fill = 1.0;
            used += weight;
        } else {
            e.fill = ((1.0 - used) / weight).clamp(0.0, 1.0);
            policy.boundary = Some(e.arm);
            break;
        }
    }
    policy.core = fill.iter().filter(|e| e.fill >= 1.0).map(|e| e.arm).collect();

    if let Some(k) = policy.boundary {
        let e = fill.iter().find(|e| e.arm == k).expect("boundary arm is in the fill");
        if e.fill * e.reward > bound {
            policy.case = NonAdaptiveCase::BoundaryArm;
            policy.select = Some(k);
            policy.expected_value = instance.arms[k].root_state().reward;
            policy.fill = fill;
            return Ok(policy);
        }
    }

    // Probing more arms never hurts the expected maximum, so extend the core
    // with any remaining arms that fit, in fill order and then by id.
    let mut probe = policy.core.clone();
    let mut spent: f64 = probe
        .iter()
        .map(|&i| instance.arms[i].switch_cost() + instance.arms[i].root_state().play_cost)
        .sum();
    let mut rest: Vec<usize> = fill.iter().map(|e| e.arm).filter(|a| !probe.contains(a)).collect();
    let mut others: Vec<usize> = (0..instance.n_arms())
        .filter(|a| !probe.contains(a) && !rest.contains(a))
        .collect();
    others.sort_by(|&a, &b| instance.arms[a].id().cmp(instance.arms[b].id()));
    rest.extend(others);
    for i in rest {
        let arm = &instance.arms[i];
        if arm.root_state().is_leaf() {
            continue;
        }
        let cost = arm.switch_cost() + arm.root_state().play_cost;
        if spent + cost <= budget + 1e-9 {
            spent += cost;
            probe.push(i);
        }
    }
    policy.case = NonAdaptiveCase::ProbeSet;
    policy.select = None;
    policy.expected_value = probe_value(instance, &probe);
    policy.probe_ids = probe.iter().map(|&i| instance.arms[i].id().to_string()).collect();
    policy.probe = probe;
    policy.probe_cost = spent;
    policy.fill = fill;
    Ok(policy)
}
