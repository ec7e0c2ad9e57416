"""Derivative-free constrained minimization (COBYLA).

This is a line-by-line port of M. J. D. Powell's COBYLA: a simplex of
``n + 1`` points carries linear models of the objective and of every
inequality constraint, and each step solves a linear program inside a
trust region of radius ``rho`` that shrinks from ``rhobeg`` to ``rhoend``.
Arithmetic is kept in the original operation order so that runs agree with
the reference Fortran implementation to rounding.

One "iteration" is one objective evaluation. Box bounds are honoured
exactly: the objective only ever sees points clipped into the box, while
the bounds also enter the linear models as constraints so the iterates are
pulled back inside. Linear equalities are split into two inequalities with
a small slack.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .mbo_core import ContinuousDomain

_log = logging.getLogger(__name__)

BUDGET = "budget-exhausted"
CONVERGED = "converged"
INFEASIBLE_START = "infeasible-start"

EQUALITY_SLACK = 1e-8
FEASIBILITY_TOL = 1e-6


@dataclass
class OptimizationProblem:
    objective: Callable[[np.ndarray], float]
    x0: Sequence[float]
    domain: ContinuousDomain | None = None
    max_evals: int = 1000
    rhobeg: float = 0.5
    rhoend: float = 1e-4

    @property
    def dimension(self) -> int:
        return len(self.x0)


@dataclass
class OptimizerResult:
    x: np.ndarray
    fun: float
    nfev: int
    status: str
    message: str = ""
    history: list[tuple[np.ndarray, float, bool]] = field(default_factory=list)

    @property
    def best_values(self) -> list[float]:
        """Running best over feasible evaluations (``inf`` until the first feasible one)."""
        out, best = [], math.inf
        for _, f, ok in self.history:
            if ok and f < best:
                best = f
            out.append(best)
        return out


class _Budget(Exception):
    pass


def _linear_constraints(domain: ContinuousDomain):
    """Rows ``(a, c)`` meaning ``a . x + c >= 0``, in the order relations, lower, upper."""
    rows = []
    for rel in domain.relations:
        a = np.asarray(rel.a, dtype=float)
        if rel.relation == "==":
            rows.append((a, -rel.beta + EQUALITY_SLACK))
            rows.append((-a, rel.beta + EQUALITY_SLACK))
        else:
            rows.append((a, -rel.beta))
    for j, lo in enumerate(domain.lower):
        if np.isfinite(lo):
            a = np.zeros(domain.m)
            a[j] = 1.0
            rows.append((a, -lo))
    for j, hi in enumerate(domain.upper):
        if np.isfinite(hi):
            a = np.zeros(domain.m)
            a[j] = -1.0
            rows.append((a, hi))
    return rows


def minimize(problem: OptimizationProblem) -> OptimizerResult:
    """Minimize ``problem.objective`` over ``problem.domain`` with at most ``max_evals`` evaluations.

    The reported point is the best evaluated point that satisfies the bounds
    exactly and every linear relation to within ``1e-6``.
    """
    x0 = np.array(problem.x0, dtype=float)
    n = x0.size
    domain = problem.domain if problem.domain is not None else ContinuousDomain(n)
    if domain.m != n:
        raise ValueError(f"domain has dimension {domain.m}, x0 has {n}")
    if problem.max_evals < 1:
        raise ValueError("max_evals must be at least 1")
    lower = np.array(domain.lower)
    upper = np.array(domain.upper)
    if not domain.contains(x0, FEASIBILITY_TOL):
        return OptimizerResult(x0, math.nan, 0, INFEASIBLE_START, "initial point violates the domain")

    rows = _linear_constraints(domain)
    history: list[tuple[np.ndarray, float, bool]] = []

    def calcfc(x: list[float]) -> tuple[float, list[float]]:
        z = np.clip(np.array(x, dtype=float), lower, upper)
        f = float(problem.objective(z))
        ok = all(rel.violation(z) <= FEASIBILITY_TOL for rel in domain.relations)
        history.append((z, f, ok))
        xa = np.array(x, dtype=float)
        return f, [float(a @ xa + c) for a, c in rows]

    x = [float(v) for v in x0]
    status, message = _cobyla(calcfc, n, len(rows), x, problem.rhobeg, problem.rhoend, problem.max_evals)

    feasible = [(f, k) for k, (_, f, ok) in enumerate(history) if ok and not math.isnan(f)]
    if feasible:
        _, k = min(feasible)
    else:
        message += "; no evaluated point satisfied the linear relations"
        k = min(
            range(len(history)),
            key=lambda j: sum(rel.violation(history[j][0]) for rel in domain.relations),
        )
    z, f, _ = history[k]
    return OptimizerResult(z.copy(), f, len(history), status, message, history)


def _cobyla(calcfc, n, m, x, rhobeg, rhoend, maxfun):
    """Powell's COBYLB driver. ``x`` is updated in place; returns ``(status, message)``.

    Constraints are ``c_k(x) >= 0``. Indices are 0-based: ``datmat`` rows are
    the ``m`` constraints, then the objective (row ``mp``) and the maximum
    violation (row ``mpp``); column ``n`` is the pole vertex of the simplex.
    """
    mp, mpp = m, m + 1
    alpha, beta, gamma, delta = 0.25, 2.1, 0.5, 1.1
    rho = rhobeg
    parmu = 0.0
    nfvals = 0
    sim = [[0.0] * (n + 1) for _ in range(n)]
    simi = [[0.0] * n for _ in range(n)]
    temp = 1.0 / rho
    for i in range(n):
        sim[i][n] = x[i]
        sim[i][i] = rho
        simi[i][i] = temp
    datmat = [[0.0] * (n + 1) for _ in range(m + 2)]
    a = [[0.0] * (m + 1) for _ in range(n)]
    con = [0.0] * (m + 2)
    vsig = [0.0] * n
    veta = [0.0] * n
    sigbar = [0.0] * n
    dx = [0.0] * n
    jdrop = n
    ibrnch = 0
    iflag = 0
    ifull = 0
    parsig = pareta = prerec = prerem = 0.0
    f = resmax = 0.0
    status, message = CONVERGED, "rho reached rhoend"

    label = 40
    while True:
        if label == 40:
            if nfvals >= maxfun and nfvals > 0:
                status, message = BUDGET, "maximum number of evaluations reached"
                label = 600
                continue
            nfvals += 1
            f, c = calcfc(x)
            resmax = 0.0
            for k in range(m):
                con[k] = c[k]
                resmax = max(resmax, -c[k])
            con[mp] = f
            con[mpp] = resmax
            if ibrnch == 1:
                label = 440
                continue
            for k in range(mpp + 1):
                datmat[k][jdrop] = con[k]
            if nfvals > n + 1:
                label = 130
                continue
            if jdrop < n:
                if datmat[mp][n] <= f:
                    x[jdrop] = sim[jdrop][n]
                else:
                    sim[jdrop][n] = x[jdrop]
                    for k in range(mpp + 1):
                        datmat[k][jdrop] = datmat[k][n]
                        datmat[k][n] = con[k]
                    for k in range(jdrop + 1):
                        sim[jdrop][k] = -rho
                        temp = 0.0
                        for i in range(k, jdrop + 1):
                            temp = temp - simi[i][k]
                        simi[jdrop][k] = temp
            if nfvals <= n:
                jdrop = nfvals - 1
                x[jdrop] = x[jdrop] + rho
                label = 40
                continue
            label = 130

        if label == 130:
            ibrnch = 1
            label = 140

        if label == 140:
            # identify the optimal vertex and move it into pole position
            phimin = datmat[mp][n] + parmu * datmat[mpp][n]
            nbest = n
            for j in range(n):
                temp = datmat[mp][j] + parmu * datmat[mpp][j]
                if temp < phimin:
                    nbest = j
                    phimin = temp
                elif temp == phimin and parmu == 0.0:
                    if datmat[mpp][j] < datmat[mpp][nbest]:
                        nbest = j
            if nbest < n:
                for i in range(mpp + 1):
                    temp = datmat[i][n]
                    datmat[i][n] = datmat[i][nbest]
                    datmat[i][nbest] = temp
                for i in range(n):
                    temp = sim[i][nbest]
                    sim[i][nbest] = 0.0
                    sim[i][n] = sim[i][n] + temp
                    tempa = 0.0
                    for k in range(n):
                        sim[i][k] = sim[i][k] - temp
                        tempa = tempa - simi[k][i]
                    simi[nbest][i] = tempa

            # does simi still approximate the inverse of the simplex matrix?
            err = np.abs(np.array(simi) @ np.array(sim)[:, :n] - np.eye(n)).max() if n else 0.0
            if err > 0.1:
                status, message = CONVERGED, "rounding errors are becoming damaging"
                label = 600
                continue

            # linear models; minus the objective gradient is stored last
            for k in range(mp + 1):
                con[k] = -datmat[k][n]
                w = [datmat[k][j] + con[k] for j in range(n)]
                for i in range(n):
                    temp = 0.0
                    for j in range(n):
                        temp = temp + w[j] * simi[j][i]
                    if k == mp:
                        temp = -temp
                    a[i][k] = temp

            iflag = 1
            parsig = alpha * rho
            pareta = beta * rho
            for j in range(n):
                wsig = 0.0
                weta = 0.0
                for i in range(n):
                    wsig = wsig + simi[j][i] * simi[j][i]
                    weta = weta + sim[i][j] * sim[i][j]
                vsig[j] = 1.0 / math.sqrt(wsig)
                veta[j] = math.sqrt(weta)
                if vsig[j] < parsig or veta[j] > pareta:
                    iflag = 0

            if ibrnch == 1 or iflag == 1:
                label = 370
                continue

            # improve the geometry of the simplex
            jdrop = -1
            temp = pareta
            for j in range(n):
                if veta[j] > temp:
                    jdrop = j
                    temp = veta[j]
            if jdrop == -1:
                for j in range(n):
                    if vsig[j] < temp:
                        jdrop = j
                        temp = vsig[j]
            temp = gamma * rho * vsig[jdrop]
            for i in range(n):
                dx[i] = temp * simi[jdrop][i]
            cvmaxp = 0.0
            cvmaxm = 0.0
            total = 0.0
            for k in range(mp + 1):
                total = 0.0
                for i in range(n):
                    total = total + a[i][k] * dx[i]
                if k < mp:
                    temp = datmat[k][n]
                    cvmaxp = max(cvmaxp, -total - temp)
                    cvmaxm = max(cvmaxm, total - temp)
            dxsign = 1.0
            if parmu * (cvmaxp - cvmaxm) > total + total:
                dxsign = -1.0
            temp = 0.0
            for i in range(n):
                dx[i] = dxsign * dx[i]
                sim[i][jdrop] = dx[i]
                temp = temp + simi[jdrop][i] * dx[i]
            for i in range(n):
                simi[jdrop][i] = simi[jdrop][i] / temp
            for j in range(n):
                if j != jdrop:
                    temp = 0.0
                    for i in range(n):
                        temp = temp + simi[j][i] * dx[i]
                    for i in range(n):
                        simi[j][i] = simi[j][i] - temp * simi[jdrop][i]
                x[j] = sim[j][n] + dx[j]
            label = 40
            continue

        if label == 370:
            ifull = _trstlp(n, m, a, con, rho, dx)
            if ifull == 0:
                temp = 0.0
                for i in range(n):
                    temp = temp + dx[i] * dx[i]
                if temp < 0.25 * rho * rho:
                    ibrnch = 1
                    label = 550
                    continue

            # predicted change of the objective and of the maximum violation
            resnew = 0.0
            con[mp] = 0.0
            total = 0.0
            for k in range(mp + 1):
                total = con[k]
                for i in range(n):
                    total = total - a[i][k] * dx[i]
                if k < mp:
                    resnew = max(resnew, total)
            barmu = 0.0
            prerec = datmat[mpp][n] - resnew
            if prerec > 0.0:
                barmu = total / prerec
            if parmu < 1.5 * barmu:
                parmu = 2.0 * barmu
                phi = datmat[mp][n] + parmu * datmat[mpp][n]
                moved = False
                for j in range(n):
                    temp = datmat[mp][j] + parmu * datmat[mpp][j]
                    if temp < phi:
                        moved = True
                        break
                    if temp == phi and parmu == 0.0:
                        if datmat[mpp][j] < datmat[mpp][n]:
                            moved = True
                            break
                if moved:
                    label = 140
                    continue
            prerem = parmu * prerec - total

            for i in range(n):
                x[i] = sim[i][n] + dx[i]
            ibrnch = 1
            label = 40
            continue

        if label == 440:
            vmold = datmat[mp][n] + parmu * datmat[mpp][n]
            vmnew = f + parmu * resmax
            trured = vmold - vmnew
            if parmu == 0.0 and f == datmat[mp][n]:
                prerem = prerec
                trured = datmat[mpp][n] - resmax

            # which vertex does the trial point replace?
            ratio = 0.0
            if trured <= 0.0:
                ratio = 1.0
            jdrop = -1
            for j in range(n):
                temp = 0.0
                for i in range(n):
                    temp = temp + simi[j][i] * dx[i]
                temp = abs(temp)
                if temp > ratio:
                    jdrop = j
                    ratio = temp
                sigbar[j] = temp * vsig[j]

            edgmax = delta * rho
            ell = -1
            for j in range(n):
                if sigbar[j] >= parsig or sigbar[j] >= vsig[j]:
                    temp = veta[j]
                    if trured > 0.0:
                        temp = 0.0
                        for i in range(n):
                            d = dx[i] - sim[i][j]
                            temp = temp + d * d
                        temp = math.sqrt(temp)
                    if temp > edgmax:
                        ell = j
                        edgmax = temp
            if ell >= 0:
                jdrop = ell
            if jdrop == -1:
                label = 550
                continue

            temp = 0.0
            for i in range(n):
                sim[i][jdrop] = dx[i]
                temp = temp + simi[jdrop][i] * dx[i]
            for i in range(n):
                simi[jdrop][i] = simi[jdrop][i] / temp
            for j in range(n):
                if j != jdrop:
                    temp = 0.0
                    for i in range(n):
                        temp = temp + simi[j][i] * dx[i]
                    for i in range(n):
                        simi[j][i] = simi[j][i] - temp * simi[jdrop][i]
            for k in range(mpp + 1):
                datmat[k][jdrop] = con[k]

            if trured > 0.0 and trured >= 0.1 * prerem:
                label = 140
                continue
            label = 550

        if label == 550:
            if iflag == 0:
                ibrnch = 0
                label = 140
                continue
            if rho > rhoend:
                rho = 0.5 * rho
                if rho <= 1.5 * rhoend:
                    rho = rhoend
                if parmu > 0.0:
                    denom = 0.0
                    cmin = cmax = 0.0
                    for k in range(mp + 1):
                        cmin = datmat[k][n]
                        cmax = cmin
                        for i in range(n):
                            cmin = min(cmin, datmat[k][i])
                            cmax = max(cmax, datmat[k][i])
                        if k < m and cmin < 0.5 * cmax:
                            temp = max(cmax, 0.0) - cmin
                            if denom <= 0.0:
                                denom = temp
                            else:
                                denom = min(denom, temp)
                    if denom == 0.0:
                        parmu = 0.0
                    elif cmax - cmin < parmu * denom:
                        parmu = (cmax - cmin) / denom
                _log.debug("reduced rho to %g, parmu=%g", rho, parmu)
                label = 140
                continue
            if ifull == 1:
                return status, message
            label = 600

        if label == 600:
            for i in range(n):
                x[i] = sim[i][n]
            return status, message


def _trstlp(n, m, a, b, rho, dx) -> int:
    """Trust-region LP step. Fills ``dx``; returns 1 if the step reaches the boundary.

    Stage one minimises the greatest violation of ``a[:, k] . dx >= b[k]``
    (``k < m``) subject to ``|dx| <= rho``; stage two uses any remaining freedom
    to decrease ``-a[:, m] . dx`` without increasing that violation.
    """
    ifull = 1
    mcon = m
    nact = 0
    resmax = 0.0
    z = [[0.0] * n for _ in range(n)]
    for i in range(n):
        z[i][i] = 1.0
        dx[i] = 0.0
    zdota = [0.0] * n
    sdirn = [0.0] * n
    dxnew = [0.0] * n
    iact = [0] * (m + 1)
    vmultc = [0.0] * (m + 1)
    vmultd = [0.0] * (m + 1)
    icon = -1
    kk = 0
    optold = 0.0
    icount = 0
    nactx = 0
    resold = 0.0
    if m >= 1:
        for k in range(m):
            if b[k] > resmax:
                resmax = b[k]
                icon = k
        for k in range(m):
            iact[k] = k
            vmultc[k] = resmax - b[k]

    label = 60 if resmax != 0.0 else 480
    while True:
        if label == 480:
            mcon = m + 1
            icon = m
            iact[m] = m
            vmultc[m] = 0.0
            label = 60

        if label == 60:
            optold = 0.0
            icount = 0
            label = 70

        if label == 70:
            if mcon == m:
                optnew = resmax
            else:
                optnew = 0.0
                for i in range(n):
                    optnew = optnew - dx[i] * a[i][mcon - 1]
            if icount == 0 or optnew < optold:
                optold = optnew
                nactx = nact
                icount = 3
            elif nact > nactx:
                nactx = nact
                icount = 3
            else:
                icount -= 1
                if icount == 0:
                    label = 490
                    continue

            if icon < nact:
                label = 260
            else:
                # add constraint iact[icon] to the active set
                kk = iact[icon]
                for i in range(n):
                    dxnew[i] = a[i][kk]
                tot = 0.0
                k = n - 1
                while k >= nact:
                    sp = 0.0
                    spabs = 0.0
                    for i in range(n):
                        temp = z[i][k] * dxnew[i]
                        sp = sp + temp
                        spabs = spabs + abs(temp)
                    acca = spabs + 0.1 * abs(sp)
                    accb = spabs + 0.2 * abs(sp)
                    if spabs >= acca or acca >= accb:
                        sp = 0.0
                    if tot == 0.0:
                        tot = sp
                    else:
                        kp = k + 1
                        temp = math.sqrt(sp * sp + tot * tot)
                        alpha = sp / temp
                        beta = tot / temp
                        tot = temp
                        for i in range(n):
                            temp = alpha * z[i][k] + beta * z[i][kp]
                            z[i][kp] = alpha * z[i][kp] - beta * z[i][k]
                            z[i][k] = temp
                    k -= 1

                if tot != 0.0:
                    nact += 1
                    zdota[nact - 1] = tot
                    vmultc[icon] = vmultc[nact - 1]
                    vmultc[nact - 1] = 0.0
                    label = 210
                else:
                    # the new gradient depends on the active ones: make room by deleting one
                    ratio = -1.0
                    iout = -1
                    k = nact - 1
                    while k >= 0:
                        zdotv = 0.0
                        zdvabs = 0.0
                        for i in range(n):
                            temp = z[i][k] * dxnew[i]
                            zdotv = zdotv + temp
                            zdvabs = zdvabs + abs(temp)
                        acca = zdvabs + 0.1 * abs(zdotv)
                        accb = zdvabs + 0.2 * abs(zdotv)
                        if zdvabs < acca and acca < accb:
                            temp = zdotv / zdota[k]
                            if temp > 0.0 and iact[k] < m:
                                tempa = vmultc[k] / temp
                                if ratio < 0.0 or tempa < ratio:
                                    ratio = tempa
                                    iout = k
                            if k >= 1:
                                kw = iact[k]
                                for i in range(n):
                                    dxnew[i] = dxnew[i] - temp * a[i][kw]
                            vmultd[k] = temp
                        else:
                            vmultd[k] = 0.0
                        k -= 1
                    if ratio < 0.0:
                        label = 490
                        continue

                    for k in range(nact):
                        vmultc[k] = max(0.0, vmultc[k] - ratio * vmultd[k])
                    if icon < nact - 1:
                        isave = iact[icon]
                        vsave = vmultc[icon]
                        k = icon
                        while True:
                            kp = k + 1
                            kw = iact[kp]
                            sp = 0.0
                            for i in range(n):
                                sp = sp + z[i][k] * a[i][kw]
                            temp = math.sqrt(sp * sp + zdota[kp] * zdota[kp])
                            alpha = zdota[kp] / temp
                            beta = sp / temp
                            zdota[kp] = alpha * zdota[k]
                            zdota[k] = temp
                            for i in range(n):
                                temp = alpha * z[i][kp] + beta * z[i][k]
                                z[i][kp] = alpha * z[i][k] - beta * z[i][kp]
                                z[i][k] = temp
                            iact[k] = kw
                            vmultc[k] = vmultc[kp]
                            k = kp
                            if k >= nact - 1:
                                break
                        iact[k] = isave
                        vmultc[k] = vsave
                    temp = 0.0
                    for i in range(n):
                        temp = temp + z[i][nact - 1] * a[i][kk]
                    if temp == 0.0:
                        label = 490
                        continue
                    zdota[nact - 1] = temp
                    vmultc[icon] = 0.0
                    vmultc[nact - 1] = ratio
                    label = 210

        if label == 210:
            iact[icon] = iact[nact - 1]
            iact[nact - 1] = kk
            if mcon > m and kk != mcon - 1:
                k = nact - 2
                sp = 0.0
                for i in range(n):
                    sp = sp + z[i][k] * a[i][kk]
                temp = math.sqrt(sp * sp + zdota[nact - 1] * zdota[nact - 1])
                alpha = zdota[nact - 1] / temp
                beta = sp / temp
                zdota[nact - 1] = alpha * zdota[k]
                zdota[k] = temp
                for i in range(n):
                    temp = alpha * z[i][nact - 1] + beta * z[i][k]
                    z[i][nact - 1] = alpha * z[i][k] - beta * z[i][nact - 1]
                    z[i][k] = temp
                iact[nact - 1] = iact[k]
                iact[k] = kk
                temp = vmultc[k]
                vmultc[k] = vmultc[nact - 1]
                vmultc[nact - 1] = temp
            if mcon > m:
                label = 320
            else:
                kk = iact[nact - 1]
                temp = 0.0
                for i in range(n):
                    temp = temp + sdirn[i] * a[i][kk]
                temp = temp - 1.0
                temp = temp / zdota[nact - 1]
                for i in range(n):
                    sdirn[i] = sdirn[i] - temp * z[i][nact - 1]
                label = 340

        if label == 260:
            # delete constraint iact[icon] from the active set
            if icon < nact - 1:
                isave = iact[icon]
                vsave = vmultc[icon]
                k = icon
                while True:
                    kp = k + 1
                    kk = iact[kp]
                    sp = 0.0
                    for i in range(n):
                        sp = sp + z[i][k] * a[i][kk]
                    temp = math.sqrt(sp * sp + zdota[kp] * zdota[kp])
                    alpha = zdota[kp] / temp
                    beta = sp / temp
                    zdota[kp] = alpha * zdota[k]
                    zdota[k] = temp
                    for i in range(n):
                        temp = alpha * z[i][kp] + beta * z[i][k]
                        z[i][kp] = alpha * z[i][k] - beta * z[i][kp]
                        z[i][k] = temp
                    iact[k] = kk
                    vmultc[k] = vmultc[kp]
                    k = kp
                    if k >= nact - 1:
                        break
                iact[k] = isave
                vmultc[k] = vsave
            nact -= 1
            if mcon > m:
                label = 320
            else:
                temp = 0.0
                for i in range(n):
                    temp = temp + sdirn[i] * z[i][nact]
                for i in range(n):
                    sdirn[i] = sdirn[i] - temp * z[i][nact]
                label = 340

        if label == 320:
            temp = 1.0 / zdota[nact - 1]
            for i in range(n):
                sdirn[i] = temp * z[i][nact - 1]
            label = 340

        if label == 340:
            # step to the trust-region boundary, or the step that zeroes resmax
            dd = rho * rho
            sd = 0.0
            ss = 0.0
            for i in range(n):
                if abs(dx[i]) >= 1.0e-6 * rho:
                    dd = dd - dx[i] * dx[i]
                sd = sd + dx[i] * sdirn[i]
                ss = ss + sdirn[i] * sdirn[i]
            if dd <= 0.0:
                label = 490
                continue
            temp = math.sqrt(ss * dd)
            if abs(sd) >= 1.0e-6 * temp:
                temp = math.sqrt(ss * dd + sd * sd)
            stpful = dd / (temp + sd)
            step = stpful
            if mcon == m:
                acca = step + 0.1 * resmax
                accb = step + 0.2 * resmax
                if step >= acca or acca >= accb:
                    label = 480
                    continue
                step = min(step, resmax)

            for i in range(n):
                dxnew[i] = dx[i] + step * sdirn[i]
            if mcon == m:
                resold = resmax
                resmax = 0.0
                for k in range(nact):
                    kk = iact[k]
                    temp = b[kk]
                    for i in range(n):
                        temp = temp - a[i][kk] * dxnew[i]
                    resmax = max(resmax, temp)

            # multipliers that would hold at dxnew
            k = nact - 1
            while k >= 0:
                zdotw = 0.0
                zdwabs = 0.0
                for i in range(n):
                    temp = z[i][k] * dxnew[i]
                    zdotw = zdotw + temp
                    zdwabs = zdwabs + abs(temp)
                acca = zdwabs + 0.1 * abs(zdotw)
                accb = zdwabs + 0.2 * abs(zdotw)
                if zdwabs >= acca or acca >= accb:
                    zdotw = 0.0
                vmultd[k] = zdotw / zdota[k]
                if k >= 1:
                    kk = iact[k]
                    for i in range(n):
                        dxnew[i] = dxnew[i] - vmultd[k] * a[i][kk]
                    k -= 1
                else:
                    break
            if mcon > m:
                vmultd[nact - 1] = max(0.0, vmultd[nact - 1])

            for i in range(n):
                dxnew[i] = dx[i] + step * sdirn[i]
            if mcon > nact:
                for k in range(nact, mcon):
                    kk = iact[k]
                    total = resmax - b[kk]
                    sumabs = resmax + abs(b[kk])
                    for i in range(n):
                        temp = a[i][kk] * dxnew[i]
                        total = total + temp
                        sumabs = sumabs + abs(temp)
                    acca = sumabs + 0.1 * abs(total)
                    accb = sumabs + 0.2 * abs(total)
                    if sumabs >= acca or acca >= accb:
                        total = 0.0
                    vmultd[k] = total

            # fraction of the step that keeps every multiplier/residual nonnegative
            ratio = 1.0
            icon = -1
            for k in range(mcon):
                if vmultd[k] < 0.0:
                    temp = vmultc[k] / (vmultc[k] - vmultd[k])
                    if temp < ratio:
                        ratio = temp
                        icon = k

            temp = 1.0 - ratio
            for i in range(n):
                dx[i] = temp * dx[i] + ratio * dxnew[i]
            for k in range(mcon):
                vmultc[k] = max(0.0, temp * vmultc[k] + ratio * vmultd[k])
            if mcon == m:
                resmax = resold + ratio * (resmax - resold)

            if icon >= 0:
                label = 70
                continue
            if step == stpful:
                return ifull
            label = 480
            continue

        if label == 490:
            if mcon == m:
                label = 480
                continue
            ifull = 0
            return ifull
