use crate::error::{check_len, Result};
use crate::frame::{ConstituentView, LlrFrame};
use crate::trellis::{TrellisTable, TurboCode, NUM_BRANCHES, NUM_STATES};

use super::forward::{forward, DecodeTape, SubnetTape};
use super::weights::{plw_index, GammaTerm, GwLayout, Gradients, SubnetWeights, WeightSet, ELW_PER_STAGE, GW_PER_STAGE, PLW_PER_STAGE};
use super::{loss, loss_seed};

/// Adjoint of one subnet. Accumulates weight gradients into `grad` and
/// returns the gradient with respect to the a-priori input.
fn subnet_backward(
    tape: &SubnetTape,
    view: &ConstituentView<'_>,
    w: &SubnetWeights,
    grad: &mut SubnetWeights,
    trellis: &TrellisTable,
    d_post: &[f64],
    d_ext: &[f64],
) -> Vec<f64> {
    let k = view.k();
    let stages = tape.gamma.len();
    let mut d_la = vec![0.0; k];
    let mut d_alpha = vec![[0.0; NUM_STATES]; stages + 1];
    let mut d_beta = vec![[0.0; NUM_STATES]; stages + 1];
    let mut d_gamma = vec![[0.0; NUM_BRANCHES]; stages];

    for t in 0..k {
        let e = w.elw(t);
        let de = d_ext[t];
        if let Some(g) = grad.elw.as_mut() {
            let base = t * ELW_PER_STAGE;
            g[base] += de * tape.posterior[t];
            g[base + 1] -= de * view.sys[t];
            g[base + 2] -= de * tape.apriori[t];
        }
        d_la[t] -= e[2] * de;
        let dl = d_post[t] + e[0] * de;
        if dl == 0.0 {
            continue;
        }
        let plw = w.plw_stage(t);
        let pw = |i: usize| plw.map_or(1.0, |p| p[i]);
        for (fold, u, sign) in [(0usize, 1u8, 1.0), (1, 0, -1.0)] {
            let df = sign * dl;
            let s = tape.post_arg[t][fold] as usize;
            let to = trellis.next_state(u, s);
            let b = u as usize * NUM_STATES + s;
            let (ia, ig, ib) = (plw_index(fold, 0, s), plw_index(fold, 1, s), plw_index(fold, 2, to));
            d_alpha[t][s] += df * pw(ia);
            d_gamma[t][b] += df * pw(ig);
            d_beta[t + 1][to] += df * pw(ib);
            if let Some(g) = grad.plw.as_mut() {
                let base = t * PLW_PER_STAGE;
                g[base + ia] += df * tape.alpha[t][s];
                g[base + ig] += df * tape.gamma[t][b];
                g[base + ib] += df * tape.beta[t + 1][to];
            }
        }
    }

    // beta[t] was computed from beta[t + 1], so its adjoint runs forward in t
    for t in 0..stages {
        let d = d_beta[t];
        let mut d_pre = d;
        d_pre[tape.beta_norm[t] as usize] -= d.iter().sum::<f64>();
        for (s, &dp) in d_pre.iter().enumerate() {
            let u = tape.beta_arg[t][s];
            d_beta[t + 1][trellis.next_state(u, s)] += dp;
            d_gamma[t][u as usize * NUM_STATES + s] += dp;
        }
    }
    for t in (0..stages).rev() {
        let d = d_alpha[t + 1];
        let mut d_pre = d;
        d_pre[tape.alpha_norm[t] as usize] -= d.iter().sum::<f64>();
        for (s, &dp) in d_pre.iter().enumerate() {
            let u = tape.alpha_arg[t][s];
            let from = trellis.prev_state(u, s);
            d_alpha[t][from] += dp;
            d_gamma[t][u as usize * NUM_STATES + from] += dp;
        }
    }

    // tail stages carry no trainable term
    let layout = GwLayout::get();
    for t in 0..k {
        let base = t * GW_PER_STAGE;
        for (slot, &(b, term)) in layout.edges().iter().enumerate() {
            let dg = d_gamma[t][b];
            let value = match term {
                GammaTerm::Apriori => tape.apriori[t],
                GammaTerm::Systematic => view.sys[t],
                GammaTerm::Parity => view.parity[t],
            };
            if let Some(g) = grad.gw.as_mut() {
                g[base + slot] += dg * value;
            }
            if term == GammaTerm::Apriori {
                d_la[t] += dg * w.gw(t, slot);
            }
        }
    }
    d_la
}

/// Gradient of a scalar function of the output posteriors with respect to
/// every trainable weight, given `seed = dF/dL^M` in natural bit order.
pub fn backward(
    tape: &DecodeTape,
    frame: &LlrFrame,
    weights: &WeightSet,
    code: &TurboCode,
    seed: &[f64],
) -> Result<Gradients> {
    let k = code.k();
    check_len("gradient seed", k, seed.len())?;
    check_len("tape units", weights.num_units(), tape.units.len())?;
    check_len("tape block length", k, tape.k())?;
    let il = &code.interleaver;
    let mut grads = weights.zeros_like();
    let zeros = vec![0.0; k];
    let mut d_post2 = vec![0.0; k];
    il.interleave_into(seed, &mut d_post2);
    let mut d_ext2 = vec![0.0; k];
    let mut d_ext1 = vec![0.0; k];
    for m in (0..weights.num_units()).rev() {
        let unit = &weights.units[m];
        let last = m + 1 == weights.num_units();
        let d_la2 = subnet_backward(
            &tape.units[m][1],
            &frame.constituent(1),
            &unit.sn2,
            &mut grads.units[m].sn2,
            &code.trellis,
            if last { &d_post2 } else { &zeros },
            &d_ext2,
        );
        il.deinterleave_into(&d_la2, &mut d_ext1);
        let d_la1 = subnet_backward(
            &tape.units[m][0],
            &frame.constituent(0),
            &unit.sn1,
            &mut grads.units[m].sn1,
            &code.trellis,
            &zeros,
            &d_ext1,
        );
        il.interleave_into(&d_la1, &mut d_ext2);
    }
    Ok(grads)
}

/// Mean squared error against `target` and its gradient for one frame.
pub fn loss_and_gradients(
    frame: &LlrFrame,
    target: &[f64],
    weights: &WeightSet,
    code: &TurboCode,
) -> Result<(f64, Gradients)> {
    check_len("target LLRs", code.k(), target.len())?;
    let out = forward(frame, weights, code, true)?;
    let value = loss(&out.posterior, target)?;
    let seed = loss_seed(&out.posterior, target)?;
    let grads = backward(out.tape()?, frame, weights, code, &seed)?;
    Ok((value, grads))
}
