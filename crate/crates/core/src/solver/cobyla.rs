//! Powell's COBYLA: linear approximations on a simplex of `n + 1` points,
//! trust-region steps from a two-stage LP subproblem, and a merit function
//! with an adaptive penalty parameter. Minimizes `f` subject to `c(x) >= 0`.

#![allow(clippy::needless_range_loop, clippy::too_many_arguments)]

use alloc::vec;
use alloc::vec::Vec;

use super::{SolverError, SolverStatus};
use crate::math::sqrt;

const ALPHA: f64 = 0.25;
const BETA: f64 = 2.1;
const GAMMA: f64 = 0.5;
const DELTA: f64 = 1.1;

pub(crate) struct Outcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub resmax: f64,
    pub evaluations: usize,
    pub status: SolverStatus,
    pub radius_history: Vec<f64>,
}

#[derive(Clone, Copy)]
enum Step {
    Evaluate,
    BestVertex,
    TrustRegion,
    Judge,
    Shrink,
}

/// `calcfc` fills the constraint slice and returns the objective.
pub(crate) fn minimize<F>(
    mut calcfc: F,
    n: usize,
    m: usize,
    x0: &[f64],
    rhobeg: f64,
    rhoend: f64,
    maxfun: usize,
    feasibility_tolerance: f64,
) -> Result<Outcome, SolverError>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64, SolverError>,
{
    let np = n;
    let mp = m;
    let mpp = m + 1;

    let mut x = x0.to_vec();
    let mut sim = vec![vec![0.0; n + 1]; n];
    let mut simi = vec![vec![0.0; n]; n];
    let mut datmat = vec![vec![0.0; n + 1]; m + 2];
    let mut a = vec![vec![0.0; m + 1]; n];
    let mut vsig = vec![0.0; n];
    let mut veta = vec![0.0; n];
    let mut sigbar = vec![0.0; n];
    let mut dx = vec![0.0; n];
    let mut w = vec![0.0; n];
    let mut con = vec![0.0; m + 2];
    let mut c = vec![0.0; m];

    let mut rho = rhobeg;
    let mut parmu = 0.0;
    let mut nfvals = 0usize;
    let mut radius_history = vec![rho];

    for i in 0..n {
        sim[i][np] = x[i];
        sim[i][i] = rho;
        simi[i][i] = 1.0 / rho;
    }
    let mut jdrop = np;
    let mut ibrnch = false;
    let mut iflag = false;
    let mut parsig = 0.0;
    let mut prerec = 0.0;
    let mut prerem = 0.0;
    let mut f = 0.0;
    let mut resmax = 0.0;

    let mut best_feasible: Option<(Vec<f64>, f64, f64)> = None;

    let mut step = Step::Evaluate;
    let status = loop {
        match step {
            Step::Evaluate => {
                if nfvals >= maxfun && nfvals > 0 {
                    break SolverStatus::MaxEvals;
                }
                nfvals += 1;
                f = calcfc(&x, &mut c)?;
                resmax = c.iter().fold(0.0f64, |r, &ck| r.max(-ck));
                con[..m].copy_from_slice(&c);
                con[mp] = f;
                con[mpp] = resmax;

                if resmax <= feasibility_tolerance
                    && best_feasible.as_ref().is_none_or(|(_, bf, _)| f < *bf)
                {
                    best_feasible = Some((x.clone(), f, resmax));
                }

                if ibrnch {
                    step = Step::Judge;
                    continue;
                }

                for k in 0..=mpp {
                    datmat[k][jdrop] = con[k];
                }
                if nfvals <= np + 1 {
                    // Exchange the new vertex of the initial simplex with the
                    // optimal vertex if necessary.
                    if jdrop < n {
                        if datmat[mp][np] <= f {
                            x[jdrop] = sim[jdrop][np];
                        } else {
                            sim[jdrop][np] = x[jdrop];
                            for k in 0..=mpp {
                                datmat[k][jdrop] = datmat[k][np];
                                datmat[k][np] = con[k];
                            }
                            for k in 0..=jdrop {
                                sim[jdrop][k] = -rho;
                                let mut temp = 0.0;
                                for row in simi.iter().take(jdrop + 1).skip(k) {
                                    temp -= row[k];
                                }
                                simi[jdrop][k] = temp;
                            }
                        }
                    }
                    if nfvals <= n {
                        jdrop = nfvals - 1;
                        x[jdrop] += rho;
                        continue;
                    }
                }
                ibrnch = true;
                step = Step::BestVertex;
            }

            Step::BestVertex => {
                let mut phimin = datmat[mp][np] + parmu * datmat[mpp][np];
                let mut nbest = np;
                for j in 0..n {
                    let temp = datmat[mp][j] + parmu * datmat[mpp][j];
                    if temp < phimin {
                        nbest = j;
                        phimin = temp;
                    } else if temp == phimin
                        && parmu == 0.0
                        && datmat[mpp][j] < datmat[mpp][nbest]
                    {
                        nbest = j;
                    }
                }
                if nbest < n {
                    for row in datmat.iter_mut() {
                        row.swap(np, nbest);
                    }
                    for i in 0..n {
                        let temp = sim[i][nbest];
                        sim[i][nbest] = 0.0;
                        sim[i][np] += temp;
                        let mut tempa = 0.0;
                        for k in 0..n {
                            sim[i][k] -= temp;
                            tempa -= simi[k][i];
                        }
                        simi[nbest][i] = tempa;
                    }
                }

                let mut error = 0.0f64;
                for i in 0..n {
                    for j in 0..n {
                        let mut temp = if i == j { -1.0 } else { 0.0 };
                        for k in 0..n {
                            temp += simi[i][k] * sim[k][j];
                        }
                        error = error.max(temp.abs());
                    }
                }
                if !(error <= 0.1) {
                    break SolverStatus::Stalled;
                }

                // Linear approximations; minus the objective gradient goes last.
                for k in 0..=mp {
                    con[k] = -datmat[k][np];
                    for j in 0..n {
                        w[j] = datmat[k][j] + con[k];
                    }
                    for i in 0..n {
                        let mut temp = 0.0;
                        for j in 0..n {
                            temp += w[j] * simi[j][i];
                        }
                        a[i][k] = if k == mp { -temp } else { temp };
                    }
                }

                iflag = true;
                parsig = ALPHA * rho;
                let pareta = BETA * rho;
                for j in 0..n {
                    let wsig: f64 = simi[j].iter().map(|v| v * v).sum();
                    let weta: f64 = (0..n).map(|i| sim[i][j] * sim[i][j]).sum();
                    vsig[j] = 1.0 / sqrt(wsig);
                    veta[j] = sqrt(weta);
                    if vsig[j] < parsig || veta[j] > pareta {
                        iflag = false;
                    }
                }

                if ibrnch || iflag {
                    step = Step::TrustRegion;
                    continue;
                }

                // Pick a vertex to drop so the simplex becomes acceptable.
                let mut pick = None;
                let mut temp = pareta;
                for j in 0..n {
                    if veta[j] > temp {
                        pick = Some(j);
                        temp = veta[j];
                    }
                }
                if pick.is_none() {
                    for j in 0..n {
                        if vsig[j] < temp {
                            pick = Some(j);
                            temp = vsig[j];
                        }
                    }
                }
                let Some(jd) = pick else {
                    step = Step::TrustRegion;
                    continue;
                };
                jdrop = jd;

                let temp = GAMMA * rho * vsig[jdrop];
                for i in 0..n {
                    dx[i] = temp * simi[jdrop][i];
                }
                let mut cvmaxp = 0.0f64;
                let mut cvmaxm = 0.0f64;
                let mut sum = 0.0;
                for k in 0..=mp {
                    sum = (0..n).map(|i| a[i][k] * dx[i]).sum();
                    if k < mp {
                        let temp = datmat[k][np];
                        cvmaxp = cvmaxp.max(-sum - temp);
                        cvmaxm = cvmaxm.max(sum - temp);
                    }
                }
                let dxsign = if parmu * (cvmaxp - cvmaxm) > sum + sum {
                    -1.0
                } else {
                    1.0
                };

                let mut temp = 0.0;
                for i in 0..n {
                    dx[i] *= dxsign;
                    sim[i][jdrop] = dx[i];
                    temp += simi[jdrop][i] * dx[i];
                }
                replace_row(&mut simi, jdrop, &dx, temp);
                for j in 0..n {
                    x[j] = sim[j][np] + dx[j];
                }
                step = Step::Evaluate;
            }

            Step::TrustRegion => {
                let ifull = trstlp(n, m, &a, &con, rho, &mut dx);
                if !ifull {
                    let len2: f64 = dx.iter().map(|d| d * d).sum();
                    if len2 < 0.25 * rho * rho {
                        ibrnch = true;
                        step = Step::Shrink;
                        continue;
                    }
                }

                let mut resnew = 0.0f64;
                con[mp] = 0.0;
                let mut sum = 0.0;
                for k in 0..=mp {
                    sum = con[k];
                    for i in 0..n {
                        sum -= a[i][k] * dx[i];
                    }
                    if k < mp {
                        resnew = resnew.max(sum);
                    }
                }

                let mut barmu = 0.0;
                prerec = datmat[mpp][np] - resnew;
                if prerec > 0.0 {
                    barmu = sum / prerec;
                }
                if parmu < 1.5 * barmu {
                    parmu = 2.0 * barmu;
                    let phi = datmat[mp][np] + parmu * datmat[mpp][np];
                    let moved = (0..n).any(|j| {
                        let temp = datmat[mp][j] + parmu * datmat[mpp][j];
                        temp < phi
                            || (temp == phi && parmu == 0.0 && datmat[mpp][j] < datmat[mpp][np])
                    });
                    if moved {
                        step = Step::BestVertex;
                        continue;
                    }
                }
                prerem = parmu * prerec - sum;

                for i in 0..n {
                    x[i] = sim[i][np] + dx[i];
                }
                ibrnch = true;
                step = Step::Evaluate;
            }

            Step::Judge => {
                let vmold = datmat[mp][np] + parmu * datmat[mpp][np];
                let vmnew = f + parmu * resmax;
                let mut trured = vmold - vmnew;
                if parmu == 0.0 && f == datmat[mp][np] {
                    prerem = prerec;
                    trured = datmat[mpp][np] - resmax;
                }

                // Decide which vertex, if any, the trial point replaces.
                let mut ratio = if trured <= 0.0 { 1.0 } else { 0.0 };
                let mut pick = None;
                for j in 0..n {
                    let temp = (0..n).map(|i| simi[j][i] * dx[i]).sum::<f64>().abs();
                    if temp > ratio {
                        pick = Some(j);
                        ratio = temp;
                    }
                    sigbar[j] = temp * vsig[j];
                }

                let mut edgmax = DELTA * rho;
                let mut ell = None;
                for j in 0..n {
                    if sigbar[j] >= parsig || sigbar[j] >= vsig[j] {
                        let mut temp = veta[j];
                        if trured > 0.0 {
                            temp = sqrt((0..n).map(|i| (dx[i] - sim[i][j]) * (dx[i] - sim[i][j])).sum());
                        }
                        if temp > edgmax {
                            ell = Some(j);
                            edgmax = temp;
                        }
                    }
                }
                if ell.is_some() {
                    pick = ell;
                }
                let Some(jd) = pick else {
                    step = Step::Shrink;
                    continue;
                };
                jdrop = jd;

                let mut temp = 0.0;
                for i in 0..n {
                    sim[i][jdrop] = dx[i];
                    temp += simi[jdrop][i] * dx[i];
                }
                replace_row(&mut simi, jdrop, &dx, temp);
                for k in 0..=mpp {
                    datmat[k][jdrop] = con[k];
                }

                step = if trured > 0.0 && trured >= 0.1 * prerem {
                    Step::BestVertex
                } else {
                    Step::Shrink
                };
            }

            Step::Shrink => {
                if !iflag {
                    ibrnch = false;
                    step = Step::BestVertex;
                    continue;
                }
                if rho <= rhoend {
                    break SolverStatus::Converged;
                }
                rho *= 0.5;
                if rho <= 1.5 * rhoend {
                    rho = rhoend;
                }
                radius_history.push(rho);
                if parmu > 0.0 {
                    let mut denom = 0.0;
                    let mut cmin = 0.0;
                    let mut cmax = 0.0;
                    for k in 0..=mp {
                        cmin = datmat[k][np];
                        cmax = cmin;
                        for i in 0..n {
                            cmin = f64::min(cmin, datmat[k][i]);
                            cmax = f64::max(cmax, datmat[k][i]);
                        }
                        if k < mp && cmin < 0.5 * cmax {
                            let temp = f64::max(cmax, 0.0) - cmin;
                            denom = if denom <= 0.0 { temp } else { f64::min(denom, temp) };
                        }
                    }
                    if denom == 0.0 {
                        parmu = 0.0;
                    } else if cmax - cmin < parmu * denom {
                        parmu = (cmax - cmin) / denom;
                    }
                }
                step = Step::BestVertex;
            }
        }
    };

    let pole: Vec<f64> = (0..n).map(|i| sim[i][np]).collect();
    let (x, f, resmax) = match best_feasible {
        Some(best) => best,
        None => (pole, datmat[mp][np], datmat[mpp][np]),
    };
    Ok(Outcome {
        x,
        f,
        resmax,
        evaluations: nfvals,
        status,
        radius_history,
    })
}

/// Rank-one update of the inverse after column `jdrop` of the simplex
/// became `dx`; `pivot` is `simi[jdrop] . dx`.
fn replace_row(simi: &mut [Vec<f64>], jdrop: usize, dx: &[f64], pivot: f64) {
    let n = dx.len();
    for v in simi[jdrop].iter_mut() {
        *v /= pivot;
    }
    for j in 0..n {
        if j != jdrop {
            let temp: f64 = (0..n).map(|i| simi[j][i] * dx[i]).sum();
            for i in 0..n {
                simi[j][i] -= temp * simi[jdrop][i];
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Lp {
    Restart,
    Iterate,
    Delete,
    StageTwoDirection,
    Move,
    StageTwo,
    Stuck,
}

/// Rounding-error guard shared by several scalar products: true when `sum`
/// is indistinguishable from zero relative to `abs_sum`.
fn negligible(abs_sum: f64, sum: f64) -> bool {
    let acca = abs_sum + 0.1 * sum.abs();
    let accb = abs_sum + 0.2 * sum.abs();
    abs_sum >= acca || acca >= accb
}

/// Trust-region subproblem. Stage one minimizes the greatest violation of
/// `a[.][k] . dx >= b[k]` (k < m) within `|dx| <= rho`; stage two uses any
/// remaining freedom to decrease `-a[.][m] . dx` without raising that
/// violation. Returns false when degeneracy stopped `dx` short of `rho`.
fn trstlp(n: usize, m: usize, a: &[Vec<f64>], b: &[f64], rho: f64, dx: &mut [f64]) -> bool {
    let col = |k: usize, i: usize| a[i][k];

    let mut mcon = m;
    let mut nact = 0usize;
    let mut resmax = 0.0f64;
    let mut resold = 0.0;
    let mut z = vec![vec![0.0; n]; n];
    for i in 0..n {
        z[i][i] = 1.0;
        dx[i] = 0.0;
    }
    let mut zdota = vec![0.0; n];
    let mut iact: Vec<usize> = (0..=m).collect();
    let mut vmultc = vec![0.0; m + 1];
    let mut vmultd = vec![0.0; m + 1];
    let mut sdirn = vec![0.0; n];
    let mut dxnew = vec![0.0; n];
    let mut icon = 0usize;

    for k in 0..m {
        if b[k] > resmax {
            resmax = b[k];
            icon = k;
        }
    }
    for k in 0..m {
        vmultc[k] = resmax - b[k];
    }

    let mut optold = 0.0;
    let mut icount = 0u32;
    let mut nactx = 0usize;

    let mut state = if resmax == 0.0 { Lp::StageTwo } else { Lp::Restart };
    loop {
        match state {
            Lp::Restart => {
                optold = 0.0;
                icount = 0;
                state = Lp::Iterate;
            }

            Lp::Iterate => {
                let optnew = if mcon == m {
                    resmax
                } else {
                    -(0..n).map(|i| dx[i] * col(m, i)).sum::<f64>()
                };
                if icount == 0 || optnew < optold {
                    optold = optnew;
                    nactx = nact;
                    icount = 3;
                } else if nact > nactx {
                    nactx = nact;
                    icount = 3;
                } else {
                    icount -= 1;
                    if icount == 0 {
                        state = Lp::Stuck;
                        continue;
                    }
                }

                if icon < nact {
                    state = Lp::Delete;
                    continue;
                }

                // Add constraint iact[icon]: rotate the trailing columns of z
                // to be orthogonal to its gradient.
                let kk = iact[icon];
                for i in 0..n {
                    dxnew[i] = col(kk, i);
                }
                let mut tot = 0.0f64;
                let mut k = n;
                while k > nact {
                    let kc = k - 1;
                    let mut sp = 0.0;
                    let mut spabs = 0.0;
                    for i in 0..n {
                        let temp = z[i][kc] * dxnew[i];
                        sp += temp;
                        spabs += temp.abs();
                    }
                    if negligible(spabs, sp) {
                        sp = 0.0;
                    }
                    if tot == 0.0 {
                        tot = sp;
                    } else {
                        let kp = kc + 1;
                        let temp = sqrt(sp * sp + tot * tot);
                        let alpha = sp / temp;
                        let beta = tot / temp;
                        tot = temp;
                        for row in z.iter_mut() {
                            let t = alpha * row[kc] + beta * row[kp];
                            row[kp] = alpha * row[kp] - beta * row[kc];
                            row[kc] = t;
                        }
                    }
                    k -= 1;
                }

                if tot != 0.0 {
                    nact += 1;
                    zdota[nact - 1] = tot;
                    vmultc[icon] = vmultc[nact - 1];
                    vmultc[nact - 1] = 0.0;
                } else {
                    // The new gradient is a combination of the active ones:
                    // drop one to make room.
                    let mut ratio = -1.0f64;
                    let mut iout = 0usize;
                    for kc in (0..nact).rev() {
                        let mut zdotv = 0.0;
                        let mut zdvabs = 0.0;
                        for i in 0..n {
                            let temp = z[i][kc] * dxnew[i];
                            zdotv += temp;
                            zdvabs += temp.abs();
                        }
                        if !negligible(zdvabs, zdotv) {
                            let temp = zdotv / zdota[kc];
                            if temp > 0.0 && iact[kc] < m {
                                let tempa = vmultc[kc] / temp;
                                if ratio < 0.0 || tempa < ratio {
                                    ratio = tempa;
                                    iout = kc;
                                }
                            }
                            if kc >= 1 {
                                let kw = iact[kc];
                                for i in 0..n {
                                    dxnew[i] -= temp * col(kw, i);
                                }
                            }
                            vmultd[kc] = temp;
                        } else {
                            vmultd[kc] = 0.0;
                        }
                    }
                    if ratio < 0.0 {
                        state = Lp::Stuck;
                        continue;
                    }

                    for k in 0..nact {
                        vmultc[k] = f64::max(0.0, vmultc[k] - ratio * vmultd[k]);
                    }
                    if iout + 1 < nact {
                        cycle_to_end(n, a, &mut z, &mut zdota, &mut iact, &mut vmultc, iout, nact);
                    }
                    let temp: f64 = (0..n).map(|i| z[i][nact - 1] * col(kk, i)).sum();
                    if temp == 0.0 {
                        state = Lp::Stuck;
                        continue;
                    }
                    zdota[nact - 1] = temp;
                    vmultc[icon] = 0.0;
                    vmultc[nact - 1] = ratio;
                }

                iact[icon] = iact[nact - 1];
                iact[nact - 1] = kk;
                if mcon > m && kk != m {
                    // Keep the objective as the last active constraint.
                    let k = nact - 2;
                    let l = nact - 1;
                    let sp: f64 = (0..n).map(|i| z[i][k] * col(kk, i)).sum();
                    let temp = sqrt(sp * sp + zdota[l] * zdota[l]);
                    let alpha = zdota[l] / temp;
                    let beta = sp / temp;
                    zdota[l] = alpha * zdota[k];
                    zdota[k] = temp;
                    for row in z.iter_mut() {
                        let t = alpha * row[l] + beta * row[k];
                        row[l] = alpha * row[k] - beta * row[l];
                        row[k] = t;
                    }
                    iact[l] = iact[k];
                    iact[k] = kk;
                    vmultc.swap(k, l);
                }

                if mcon > m {
                    state = Lp::StageTwoDirection;
                    continue;
                }
                let kk = iact[nact - 1];
                let mut temp: f64 = (0..n).map(|i| sdirn[i] * col(kk, i)).sum();
                temp -= 1.0;
                temp /= zdota[nact - 1];
                for i in 0..n {
                    sdirn[i] -= temp * z[i][nact - 1];
                }
                state = Lp::Move;
            }

            Lp::Delete => {
                if icon + 1 < nact {
                    cycle_to_end(n, a, &mut z, &mut zdota, &mut iact, &mut vmultc, icon, nact);
                }
                nact -= 1;
                if mcon > m {
                    state = Lp::StageTwoDirection;
                    continue;
                }
                let temp: f64 = (0..n).map(|i| sdirn[i] * z[i][nact]).sum();
                for i in 0..n {
                    sdirn[i] -= temp * z[i][nact];
                }
                state = Lp::Move;
            }

            Lp::StageTwoDirection => {
                let temp = 1.0 / zdota[nact - 1];
                for i in 0..n {
                    sdirn[i] = temp * z[i][nact - 1];
                }
                state = Lp::Move;
            }

            Lp::Move => {
                let mut dd = rho * rho;
                let mut sd = 0.0;
                let mut ss = 0.0;
                for i in 0..n {
                    if dx[i].abs() >= 1e-6 * rho {
                        dd -= dx[i] * dx[i];
                    }
                    sd += dx[i] * sdirn[i];
                    ss += sdirn[i] * sdirn[i];
                }
                if dd <= 0.0 {
                    state = Lp::Stuck;
                    continue;
                }
                let mut temp = sqrt(ss * dd);
                if sd.abs() >= 1e-6 * temp {
                    temp = sqrt(ss * dd + sd * sd);
                }
                let stpful = dd / (temp + sd);
                let mut step = stpful;
                if mcon == m {
                    let acca = step + 0.1 * resmax;
                    let accb = step + 0.2 * resmax;
                    if step >= acca || acca >= accb {
                        state = Lp::StageTwo;
                        continue;
                    }
                    step = step.min(resmax);
                }

                for i in 0..n {
                    dxnew[i] = dx[i] + step * sdirn[i];
                }
                if mcon == m {
                    resold = resmax;
                    resmax = 0.0;
                    for &kk in iact.iter().take(nact) {
                        let mut temp = b[kk];
                        for i in 0..n {
                            temp -= col(kk, i) * dxnew[i];
                        }
                        resmax = resmax.max(temp);
                    }
                }

                // Multipliers the active set would have at dxnew.
                for kc in (0..nact).rev() {
                    let mut zdotw = 0.0;
                    let mut zdwabs = 0.0;
                    for i in 0..n {
                        let temp = z[i][kc] * dxnew[i];
                        zdotw += temp;
                        zdwabs += temp.abs();
                    }
                    if negligible(zdwabs, zdotw) {
                        zdotw = 0.0;
                    }
                    vmultd[kc] = zdotw / zdota[kc];
                    if kc >= 1 {
                        let kk = iact[kc];
                        for i in 0..n {
                            dxnew[i] -= vmultd[kc] * col(kk, i);
                        }
                    }
                }
                if mcon > m && nact > 0 {
                    vmultd[nact - 1] = vmultd[nact - 1].max(0.0);
                }

                // Residuals of the inactive constraints at dxnew.
                for i in 0..n {
                    dxnew[i] = dx[i] + step * sdirn[i];
                }
                for k in nact..mcon {
                    let kk = iact[k];
                    let mut sum = resmax - b[kk];
                    let mut sumabs = resmax + b[kk].abs();
                    for i in 0..n {
                        let temp = col(kk, i) * dxnew[i];
                        sum += temp;
                        sumabs += temp.abs();
                    }
                    if negligible(sumabs, sum) {
                        sum = 0.0;
                    }
                    vmultd[k] = sum;
                }

                let mut ratio = 1.0;
                let mut hit = None;
                for k in 0..mcon {
                    if vmultd[k] < 0.0 {
                        let temp = vmultc[k] / (vmultc[k] - vmultd[k]);
                        if temp < ratio {
                            ratio = temp;
                            hit = Some(k);
                        }
                    }
                }

                let keep = 1.0 - ratio;
                for i in 0..n {
                    dx[i] = keep * dx[i] + ratio * dxnew[i];
                }
                for k in 0..mcon {
                    vmultc[k] = f64::max(0.0, keep * vmultc[k] + ratio * vmultd[k]);
                }
                if mcon == m {
                    resmax = resold + ratio * (resmax - resold);
                }

                if let Some(k) = hit {
                    icon = k;
                    state = Lp::Iterate;
                } else if step == stpful {
                    return true;
                } else {
                    state = Lp::StageTwo;
                }
            }

            Lp::StageTwo => {
                mcon = m + 1;
                icon = m;
                iact[m] = m;
                vmultc[m] = 0.0;
                state = Lp::Restart;
            }

            Lp::Stuck => {
                if mcon == m {
                    state = Lp::StageTwo;
                } else {
                    return false;
                }
            }
        }
    }
}

/// Moves active constraint `from` to position `nact - 1` by a sequence of
/// Givens rotations, shifting the ones after it forward.
#[allow(clippy::too_many_arguments)]
fn cycle_to_end(
    n: usize,
    a: &[Vec<f64>],
    z: &mut [Vec<f64>],
    zdota: &mut [f64],
    iact: &mut [usize],
    vmultc: &mut [f64],
    from: usize,
    nact: usize,
) {
    let isave = iact[from];
    let vsave = vmultc[from];
    let mut k = from;
    while k + 1 < nact {
        let kp = k + 1;
        let kw = iact[kp];
        let sp: f64 = (0..n).map(|i| z[i][k] * a[i][kw]).sum();
        let temp = sqrt(sp * sp + zdota[kp] * zdota[kp]);
        let alpha = zdota[kp] / temp;
        let beta = sp / temp;
        zdota[kp] = alpha * zdota[k];
        zdota[k] = temp;
        for row in z.iter_mut() {
            let t = alpha * row[kp] + beta * row[k];
            row[kp] = alpha * row[k] - beta * row[kp];
            row[k] = t;
        }
        iact[k] = kw;
        vmultc[k] = vmultc[kp];
        k = kp;
    }
    iact[k] = isave;
    vmultc[k] = vsave;
}
