//! Coupled pressure solve: one implicit system over fluid and boundary
//! neighborhoods together.
//!
//! Relaxed-Jacobi iteration on the per-particle pressure `p_i`, driving the
//! predicted density toward 1:
//!
//! ```text
//! v*_i    = v_i + dt a^np_i
//! rho*_i  = rho_i + dt [ sum_f V_j (v*_i - v*_j)·gradW + sum_b V_b (v*_i - v_b)·gradW ]
//! Ap_i    = dt^2 [ sum_f V_j (a_i - a_j)·gradW + sum_b V_b a_i·gradW ]
//! p_i    <- max(0, p_i + omega (1 - rho*_i - Ap_i) / a_ii)
//! ```
//!
//! where `a(p)` is the pressure acceleration
//!
//! ```text
//! a_i = -1/rho0 [ sum_f V_j (p_i/rho_i^2 + p_j/rho_j^2) gradW
//!               + sum_b V_b (pressure mirroring: 2 p_i/rho_i^2
//!                            pressure boundaries: p_i/rho_i^2 + p_b/gamma^2) gradW ]
//! ```
//!
//! and the diagonal (derivative of `Ap_i` in `p_i`, including the reaction of
//! fluid neighbors and of the wall pressures that track `p_i`) is
//!
//! ```text
//! a_ii  = -dt^2/rho0 [ (S_all · S_all + V_i sum_f V_j |gradW|^2) / rho_i^2 + E_i ]
//! S_all = sum_{f+b} V_j gradW,   S_b = sum_b V_b gradW
//! E_i   = mirroring:  (S_b · S_all) / rho_i^2
//!         boundaries: (S_bw · S_all) / gamma^2,
//!                     S_bw = sum_b V_b (W_ib / sum_f' W_bf') gradW
//! ```
//!
//! Boundary pressures under the mirroring estimator are implicit (`p_b = p_i`
//! per pair, with the fluid particle's own density standing in for the
//! wall's); under the boundary estimator they are re-extrapolated from the
//! evolving fluid pressures after every update, so `E_i` weighs each wall
//! contact by the particle's share `W_ib / sum W_bf'` of that sample's
//! average. Without that share the update overshoots wherever a particle
//! dominates its wall samples (tank corners, thin gaps) and the sweep turns
//! into a pressure oscillator. Iteration stops when the average positive
//! predicted-density error of the fluid drops below `lim_avg`, with an
//! `iter_max` safety budget. A growing error over five consecutive sweeps, or
//! an error a hundredfold above the best iterate, rolls back to the best
//! iterate and flags divergence.
//! Each sweep re-evaluates accelerations after the update, so the stored
//! accelerations always correspond to the pressures the integrator sees.

use rayon::prelude::*;

use crate::config::{PressureEstimator, SimulationConfig};
use crate::particles::{ParticleSet, ParticleViews, Phase};
use crate::Vec3;

use super::contacts::Contacts;
use super::{pressure, SolveStats, Workspace};

/// Pressure accelerations for every fluid particle from the current pressure
/// fields; boundary slots are zeroed.
#[allow(clippy::too_many_arguments)]
fn eval_accel(
    out: &mut [Vec3],
    phases: &[Phase],
    volumes: &[f64],
    density: &[f64],
    fluid_pressure: &[f64],
    boundary_pressure: &[f64],
    contacts: &Contacts,
    mirror: bool,
    gamma2: f64,
    inv_rho0: f64,
) {
    out.par_iter_mut().enumerate().for_each(|(i, a)| {
        if phases[i] == Phase::Boundary {
            *a = Vec3::zeros();
            return;
        }
        let k = contacts.ordinal_of(i);
        let term_i = fluid_pressure[i] / (density[i] * density[i]);
        let mut acc = Vec3::zeros();
        for c in contacts.ff(k) {
            let j = c.j as usize;
            acc += c.grad * (volumes[j] * (term_i + fluid_pressure[j] / (density[j] * density[j])));
        }
        for c in contacts.fb(k) {
            let b = c.j as usize;
            let pair = if mirror {
                2.0 * term_i
            } else {
                term_i + boundary_pressure[b] / gamma2
            };
            acc += c.grad * (volumes[b] * pair);
        }
        *a = -(acc * inv_rho0);
    });
}

/// One Jacobi sweep: per particle, the pressure-induced density change
/// `Ap_i` from the frozen acceleration field, the positive density error,
/// and the clamped pressure update. Only the particle's own pressure slot is
/// written, so the pass is race-free.
#[allow(clippy::too_many_arguments)]
fn sweep(
    fluid_pressure: &mut [f64],
    err_terms: &mut [f64],
    phases: &[Phase],
    volumes: &[f64],
    accel: &[Vec3],
    rho_star: &[f64],
    aii: &[f64],
    contacts: &Contacts,
    dt2: f64,
    omega: f64,
) {
    fluid_pressure
        .par_iter_mut()
        .zip(err_terms.par_iter_mut())
        .enumerate()
        .for_each(|(i, (p, e))| {
            if phases[i] == Phase::Boundary {
                *e = 0.0;
                return;
            }
            let k = contacts.ordinal_of(i);
            let a_i = accel[i];
            let mut div = 0.0;
            for c in contacts.ff(k) {
                let j = c.j as usize;
                div += volumes[j] * (a_i - accel[j]).dot(&c.grad);
            }
            for c in contacts.fb(k) {
                let b = c.j as usize;
                div += volumes[b] * a_i.dot(&c.grad);
            }
            let ap = dt2 * div;
            *e = (rho_star[k] + ap - 1.0).max(0.0);
            let d = aii[k];
            if d != 0.0 {
                *p = (*p + omega * (1.0 - rho_star[k] - ap) / d).max(0.0);
            }
        });
}

pub(crate) fn solve(
    set: &mut ParticleSet,
    contacts: &Contacts,
    config: &SimulationConfig,
    ws: &mut Workspace,
) -> SolveStats {
    let nf = set.fluid_count();
    if nf == 0 {
        return SolveStats { converged: true, ..SolveStats::default() };
    }

    let dt = config.dt;
    let dt2 = dt * dt;
    let inv_rho0 = 1.0 / config.rest_density;
    let gamma2 = config.gamma * config.gamma;
    let mirror = config.estimator == PressureEstimator::Mirroring;
    let omega = config.omega;
    let warm = config.warm_start;

    let ParticleViews {
        positions,
        phases,
        fluid_ids,
        boundary_ids,
        velocities,
        volumes,
        density,
        fluid_pressure,
        boundary_pressure,
        nonpressure_accel,
        fluid_accel,
        boundary_accel,
        ..
    } = set.views();
    let velocities = &*velocities;
    let density = &*density;
    let nonpressure_accel = &*nonpressure_accel;

    // The decoupled-only fields stay inert in this mode.
    boundary_accel.fill(Vec3::zeros());
    boundary_pressure.fill(0.0);

    fluid_pressure.par_iter_mut().enumerate().for_each(|(i, p)| {
        if phases[i] == Phase::Fluid {
            *p *= warm;
        } else {
            *p = 0.0;
        }
    });

    // Predicted velocities. Boundary slots carry the boundary's scripted
    // velocity so the fb divergence sees the relative motion.
    ws.vstar.par_iter_mut().enumerate().for_each(|(i, vs)| {
        *vs = if phases[i] == Phase::Fluid {
            velocities[i] + nonpressure_accel[i] * dt
        } else {
            velocities[i]
        };
    });
    let vstar: &[Vec3] = &ws.vstar;

    // Per-wall-sample Shepard normalization, so the diagonal can weigh how
    // strongly each extrapolated wall pressure follows this particle.
    if !mirror {
        ws.pb_wsum.par_iter_mut().enumerate().for_each(|(bk, wsum)| {
            *wsum = contacts.bf(bk).iter().map(|c| c.w).sum();
        });
    }
    let pb_wsum: &[f64] = &ws.pb_wsum;

    // Predicted density and solver diagonal, fixed for the whole solve.
    ws.rho_star
        .par_iter_mut()
        .zip(ws.aii.par_iter_mut())
        .enumerate()
        .for_each(|(k, (rs, aii))| {
            let i = fluid_ids[k];
            let rho2 = density[i] * density[i];
            let mut div = 0.0;
            let mut s_f = Vec3::zeros();
            let mut s_b = Vec3::zeros();
            let mut s_bw = Vec3::zeros();
            let mut grad2 = 0.0;
            for c in contacts.ff(k) {
                let j = c.j as usize;
                div += volumes[j] * (vstar[i] - vstar[j]).dot(&c.grad);
                s_f += c.grad * volumes[j];
                grad2 += volumes[j] * c.grad.norm_squared();
            }
            for c in contacts.fb(k) {
                let b = c.j as usize;
                div += volumes[b] * (vstar[i] - vstar[b]).dot(&c.grad);
                s_b += c.grad * volumes[b];
                if !mirror {
                    let bk = contacts.ordinal_of(b);
                    let wsum = pb_wsum[bk];
                    if wsum > 0.0 {
                        s_bw += c.grad * (volumes[b] * c.w / wsum);
                    }
                }
            }
            *rs = density[i] + dt * div;
            let s_all = s_f + s_b;
            let estimator_extra = if mirror {
                s_b.dot(&s_all) / rho2
            } else {
                s_bw.dot(&s_all) / gamma2
            };
            *aii = -dt2
                * inv_rho0
                * ((s_all.dot(&s_all) + volumes[i] * grad2) / rho2 + estimator_extra);
        });

    let extrapolate_pb = |ws_pb: &mut [f64], source: &[f64], out: &mut [f64]| {
        pressure::extrapolate(
            ws_pb,
            positions,
            density,
            source,
            boundary_ids,
            contacts,
            Some(&config.gravity),
            config.rest_density,
        );
        pressure::commit(ws_pb, boundary_ids, out);
    };

    if !mirror {
        extrapolate_pb(&mut ws.pb_scratch, fluid_pressure, boundary_pressure);
    }
    eval_accel(
        fluid_accel,
        phases,
        volumes,
        density,
        fluid_pressure,
        boundary_pressure,
        contacts,
        mirror,
        gamma2,
        inv_rho0,
    );

    let mut iters = 0usize;
    let mut err;
    let mut prev_err = f64::INFINITY;
    let mut best_err = f64::INFINITY;
    let mut grow_streak = 0u32;
    let mut diverged = false;
    let trace = super::trace_sweeps();

    loop {
        sweep(
            fluid_pressure,
            &mut ws.err_terms,
            phases,
            volumes,
            fluid_accel,
            &ws.rho_star,
            &ws.aii,
            contacts,
            dt2,
            omega,
        );
        iters += 1;

        if !mirror {
            extrapolate_pb(&mut ws.pb_scratch, fluid_pressure, boundary_pressure);
        }
        eval_accel(
            fluid_accel,
            phases,
            volumes,
            density,
            fluid_pressure,
            boundary_pressure,
            contacts,
            mirror,
            gamma2,
            inv_rho0,
        );

        err = fluid_ids.iter().map(|&i| ws.err_terms[i]).sum::<f64>() / nf as f64;
        if trace {
            eprintln!("[sweep] iter={iters} err={err:.3e}");
        }

        if err < best_err {
            best_err = err;
            ws.best_pressure.copy_from_slice(fluid_pressure);
        }
        grow_streak = if err > prev_err { grow_streak + 1 } else { 0 };
        prev_err = err;

        // A slow oscillating blow-up never grows five sweeps in a row; catch
        // it by distance from the best iterate instead.
        let blown_up = iters >= 8 && err > 100.0 * best_err.max(config.lim_avg);
        if grow_streak >= 5 || blown_up {
            diverged = true;
            fluid_pressure.copy_from_slice(&ws.best_pressure);
            if !mirror {
                extrapolate_pb(&mut ws.pb_scratch, fluid_pressure, boundary_pressure);
            }
            eval_accel(
                fluid_accel,
                phases,
                volumes,
                density,
                fluid_pressure,
                boundary_pressure,
                contacts,
                mirror,
                gamma2,
                inv_rho0,
            );
            err = best_err;
            break;
        }
        if iters >= config.min_iterations && err < config.lim_avg {
            break;
        }
        if iters >= config.iter_max {
            break;
        }
    }

    SolveStats {
        iterations: iters as u32,
        boundary_sweeps: 0,
        fluid_sweeps: iters as u32,
        err_b: err,
        err_f: err,
        converged: err < config.lim_avg,
        diverged,
    }
}
