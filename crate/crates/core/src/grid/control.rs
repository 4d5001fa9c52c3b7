use super::GridCase;
use crate::error::{Error, Result};

/// Returns a copy of `case` with each controllable generator's output set to
/// the matching entry of `setpoints_mw`, clipped to `[p_min, p_max]`.
///
/// Setpoints are matched to controllable generators in case order.
pub fn apply_generator_setpoints(case: &GridCase, setpoints_mw: &[f64]) -> Result<GridCase> {
    let expected = case.controllable_generators().count();
    if setpoints_mw.len() != expected {
        return Err(Error::Dimension {
            what: "generator setpoints",
            expected,
            got: setpoints_mw.len(),
        });
    }
    if let Some(bad) = setpoints_mw.iter().find(|v| !v.is_finite()) {
        return Err(Error::Validation(format!("non-finite generator setpoint {bad}")));
    }
    let mut out = case.clone();
    for (g, &p) in out
        .generators
        .iter_mut()
        .filter(|g| g.controllable)
        .zip(setpoints_mw)
    {
        g.p_mw = p.clamp(g.p_min_mw, g.p_max_mw);
    }
    Ok(out)
}

/// Redistributes active demand inside a load-control group.
///
/// `values_mw` gives the new demand of every non-swing load in the group, in
/// case order. The swing load takes up the residual so the group total is
/// unchanged. When the requested demands exceed the group total they are
/// scaled down proportionally and the swing load is set to zero. Reactive
/// demand follows each load's original power factor.
pub fn apply_load_group(case: &GridCase, group: u32, values_mw: &[f64]) -> Result<GridCase> {
    let members: Vec<usize> = case
        .loads
        .iter()
        .enumerate()
        .filter(|(_, l)| l.group == Some(group))
        .map(|(i, _)| i)
        .collect();
    let swing = members
        .iter()
        .copied()
        .find(|&i| case.loads[i].swing)
        .ok_or(Error::UnknownGroup(group))?;
    let others: Vec<usize> = members.iter().copied().filter(|&i| i != swing).collect();
    if values_mw.len() != others.len() {
        return Err(Error::Dimension {
            what: "load group values",
            expected: others.len(),
            got: values_mw.len(),
        });
    }
    if let Some(bad) = values_mw.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Validation(format!("load demand must be non-negative, got {bad}")));
    }

    let old_others: f64 = others.iter().map(|&i| case.loads[i].p_mw).sum();
    let requested: f64 = values_mw.iter().sum();
    let old_swing = case.loads[swing].p_mw;

    let mut new_values = values_mw.to_vec();
    let mut new_swing = old_swing + (old_others - requested);
    if new_swing < 0.0 {
        let total = old_swing + old_others;
        let scale = total / requested;
        for v in &mut new_values {
            *v *= scale;
        }
        new_swing = 0.0;
    }

    let mut out = case.clone();
    for (&i, &p) in others.iter().zip(&new_values) {
        set_active_demand(&mut out.loads[i], p);
    }
    set_active_demand(&mut out.loads[swing], new_swing);
    Ok(out)
}

fn set_active_demand(load: &mut super::Load, p_mw: f64) {
    if p_mw == load.p_mw {
        return;
    }
    // Constant power factor; a zero-demand load keeps its reactive part.
    if load.p_mw > 0.0 {
        load.q_mvar *= p_mw / load.p_mw;
    }
    load.p_mw = p_mw;
}
