"""Method of Moving Asymptotes for box-constrained problems in [0, 1]^n.

Each update builds the classic separable rational approximation around
per-coordinate asymptotes and solves the convex subproblem (with elastic
constraint variables y, penalty c, and the artificial scalar variable)
by a primal-dual interior-point Newton method on the subproblem's KKT
system. Asymptotes start at half the box span and then grow by 1.2 when
successive steps agree in sign or shrink by 0.7 when they oscillate.

Every iterate stays inside [0, 1] exactly, and no coordinate ever moves
by more than the move limit.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, SolverError


@dataclass
class MmaState:
    """Optimizer memory carried between updates."""

    n: int
    m: int
    move_limit: float = 0.05
    iteration: int = 0
    z_prev: np.ndarray | None = None
    z_prev2: np.ndarray | None = None
    low: np.ndarray | None = None
    upp: np.ndarray | None = None
    # algorithmic constants
    asymptote_init: float = 0.5
    asymptote_grow: float = 1.2
    asymptote_shrink: float = 0.7
    albefa: float = 0.1
    raa0: float = 1e-5
    epsimin: float = 1e-9
    a0: float = 1.0
    a_lin: np.ndarray = field(default=None)
    c_pen: np.ndarray = field(default=None)
    d_quad: np.ndarray = field(default=None)

    def __post_init__(self):
        if not 0.0 < self.move_limit <= 1.0:
            raise ConfigurationError(f"move limit must be in (0, 1], got {self.move_limit}")
        if self.a_lin is None:
            self.a_lin = np.zeros(self.m)
        if self.c_pen is None:
            self.c_pen = np.full(self.m, 1000.0)
        if self.d_quad is None:
            self.d_quad = np.ones(self.m)


@dataclass
class SubproblemMultipliers:
    """Lagrange multipliers and elastic variables from the last subproblem."""

    lam: np.ndarray   # constraint multipliers (m,)
    xsi: np.ndarray   # lower-bound multipliers (n,)
    eta: np.ndarray   # upper-bound multipliers (n,)
    mu: np.ndarray    # multipliers of y >= 0 (m,)
    y: np.ndarray     # elastic constraint variables (m,)
    s: np.ndarray     # constraint slacks (m,)
    zet: float        # multiplier of the artificial variable bound
    z0: float         # artificial variable value

    @classmethod
    def inactive(cls, g: np.ndarray, n: int, c_pen: float = 1000.0) -> "SubproblemMultipliers":
        """Consistent multiplier set for a point where nothing is active."""
        g = np.atleast_1d(np.asarray(g, dtype=float))
        m = g.size
        return cls(
            lam=np.zeros(m), xsi=np.zeros(n), eta=np.zeros(n),
            mu=np.full(m, c_pen), y=np.zeros(m), s=np.maximum(-g, 0.0),
            zet=1.0, z0=0.0,
        )


def mma_update(z: np.ndarray, j_val: float, grad_j: np.ndarray,
               g: np.ndarray, grad_g: np.ndarray, state: MmaState):
    """One MMA design update.

    Returns ``(z_new, new_state, multipliers)``. ``g``/``grad_g`` hold the
    m constraint values and their (m, n) Jacobian at ``z``.
    """
    z = np.asarray(z, dtype=float)
    grad_j = np.asarray(grad_j, dtype=float)
    g = np.atleast_1d(np.asarray(g, dtype=float))
    grad_g = np.atleast_2d(np.asarray(grad_g, dtype=float))
    n, m = state.n, state.m
    if z.shape != (n,) or grad_j.shape != (n,) or g.shape != (m,) or grad_g.shape != (m, n):
        raise ConfigurationError("mma_update: input shapes do not match state (n, m)")
    if not (np.all(np.isfinite(grad_j)) and np.all(np.isfinite(grad_g))
            and np.all(np.isfinite(g))):
        raise ConfigurationError("mma_update: non-finite gradient or constraint value")
    if np.any(z < -1e-12) or np.any(z > 1.0 + 1e-12):
        raise ConfigurationError("mma_update: design vector outside [0, 1]")

    # asymptotes (box width is exactly 1 in normalized space)
    if state.iteration < 2 or state.z_prev is None or state.z_prev2 is None:
        low = z - state.asymptote_init
        upp = z + state.asymptote_init
    else:
        trend = (z - state.z_prev) * (state.z_prev - state.z_prev2)
        factor = np.ones(n)
        factor[trend > 0.0] = state.asymptote_grow
        factor[trend < 0.0] = state.asymptote_shrink
        low = z - factor * (state.z_prev - state.low)
        upp = z + factor * (state.upp - state.z_prev)
        low = np.clip(low, z - 10.0, z - 0.01)
        upp = np.clip(upp, z + 0.01, z + 10.0)

    # subproblem bounds: box, move limit, and a safety margin off the asymptotes
    alfa = np.maximum.reduce([low + state.albefa * (z - low), z - state.move_limit,
                              np.zeros(n)])
    beta = np.minimum.reduce([upp - state.albefa * (upp - z), z + state.move_limit,
                              np.ones(n)])

    ux1 = upp - z
    xl1 = z - low
    ux2 = ux1 * ux1
    xl2 = xl1 * xl1

    p0 = np.maximum(grad_j, 0.0)
    q0 = np.maximum(-grad_j, 0.0)
    pq0 = 0.001 * (p0 + q0) + state.raa0
    p0 = (p0 + pq0) * ux2
    q0 = (q0 + pq0) * xl2

    P = np.maximum(grad_g, 0.0)
    Q = np.maximum(-grad_g, 0.0)
    PQ = 0.001 * (P + Q) + state.raa0
    P = (P + PQ) * ux2[None, :]
    Q = (Q + PQ) * xl2[None, :]
    b = P @ (1.0 / ux1) + Q @ (1.0 / xl1) - g

    x_new, mult = _subsolv(low, upp, alfa, beta, p0, q0, P, Q, b, state)

    new_state = MmaState(
        n=n, m=m, move_limit=state.move_limit, iteration=state.iteration + 1,
        z_prev=z.copy(),
        z_prev2=state.z_prev.copy() if state.z_prev is not None else z.copy(),
        low=low, upp=upp,
        asymptote_init=state.asymptote_init, asymptote_grow=state.asymptote_grow,
        asymptote_shrink=state.asymptote_shrink, albefa=state.albefa,
        raa0=state.raa0, epsimin=state.epsimin, a0=state.a0,
        a_lin=state.a_lin, c_pen=state.c_pen, d_quad=state.d_quad,
    )
    return x_new, new_state, mult


def _subsolv(low, upp, alfa, beta, p0, q0, P, Q, b, state: MmaState):
    """Primal-dual interior-point solve of the separable MMA subproblem."""
    n = low.size
    m = b.size
    a0, a, c, d = state.a0, state.a_lin, state.c_pen, state.d_quad
    epsimin = state.epsimin

    x = 0.5 * (alfa + beta)
    y = np.ones(m)
    zv = 1.0
    lam = np.ones(m)
    xsi = np.maximum(1.0 / (x - alfa), 1.0)
    eta = np.maximum(1.0 / (beta - x), 1.0)
    mu = np.maximum(0.5 * c, 1.0)
    zet = 1.0
    s = np.ones(m)

    def residuals(x, y, zv, lam, xsi, eta, mu, zet, s, epsi):
        ux1 = upp - x
        xl1 = x - low
        plam = p0 + P.T @ lam
        qlam = q0 + Q.T @ lam
        gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
        rex = plam / ux1 ** 2 - qlam / xl1 ** 2 - xsi + eta
        rey = c + d * y - mu - lam
        rez = a0 - zet - a @ lam
        relam = gvec - a * zv - y + s - b
        rexsi = xsi * (x - alfa) - epsi
        reeta = eta * (beta - x) - epsi
        remu = mu * y - epsi
        rezet = zet * zv - epsi
        res = lam * s - epsi
        r = np.concatenate([rex, rey, [rez], relam, rexsi, reeta, remu, [rezet], res])
        return r, float(np.linalg.norm(r)), float(np.max(np.abs(r)))

    epsi = 1.0
    while epsi > epsimin:
        _, residunorm, residumax = residuals(x, y, zv, lam, xsi, eta, mu, zet, s, epsi)
        ittt = 0
        while residumax > 0.9 * epsi and ittt < 500:
            ittt += 1
            ux1 = upp - x
            xl1 = x - low
            ux2 = ux1 * ux1
            xl2 = xl1 * xl1
            ux3 = ux1 * ux2
            xl3 = xl1 * xl2
            plam = p0 + P.T @ lam
            qlam = q0 + Q.T @ lam
            gvec = P @ (1.0 / ux1) + Q @ (1.0 / xl1)
            GG = P / ux2[None, :] - Q / xl2[None, :]

            delx = plam / ux2 - qlam / xl2 - epsi / (x - alfa) + epsi / (beta - x)
            dely = c + d * y - lam - epsi / y
            delz = a0 - a @ lam - epsi / zv
            dellam = gvec - a * zv - y - b + epsi / lam
            diagx = 2.0 * (plam / ux3 + qlam / xl3) + xsi / (x - alfa) + eta / (beta - x)
            diagy = d + mu / y
            diaglam = s / lam
            diaglamyi = diaglam + 1.0 / diagy

            if m < n:
                blam = dellam + dely / diagy - GG @ (delx / diagx)
                Alam = np.diag(diaglamyi) + (GG / diagx[None, :]) @ GG.T
                AA = np.zeros((m + 1, m + 1))
                AA[:m, :m] = Alam
                AA[:m, m] = a
                AA[m, :m] = a
                AA[m, m] = -zet / zv
                bb = np.concatenate([blam, [delz]])
                try:
                    solut = np.linalg.solve(AA, bb)
                except np.linalg.LinAlgError as exc:
                    raise SolverError(f"MMA subproblem Newton system is singular: {exc}") from exc
                dlam = solut[:m]
                dz = solut[m]
                dx = -delx / diagx - (GG.T @ dlam) / diagx
            else:
                dellamyi = dellam + dely / diagy
                Axx = np.diag(diagx) + GG.T @ (GG / diaglamyi[:, None])
                azz = zet / zv + a @ (a / diaglamyi)
                axz = -GG.T @ (a / diaglamyi)
                AA = np.zeros((n + 1, n + 1))
                AA[:n, :n] = Axx
                AA[:n, n] = axz
                AA[n, :n] = axz
                AA[n, n] = azz
                bb = np.concatenate([-(delx + GG.T @ (dellamyi / diaglamyi)),
                                     [-(delz - a @ (dellamyi / diaglamyi))]])
                try:
                    solut = np.linalg.solve(AA, bb)
                except np.linalg.LinAlgError as exc:
                    raise SolverError(f"MMA subproblem Newton system is singular: {exc}") from exc
                dx = solut[:n]
                dz = solut[n]
                dlam = (GG @ dx) / diaglamyi - dz * (a / diaglamyi) + dellamyi / diaglamyi

            dy = -dely / diagy + dlam / diagy
            dxsi = -xsi + epsi / (x - alfa) - (xsi * dx) / (x - alfa)
            deta = -eta + epsi / (beta - x) + (eta * dx) / (beta - x)
            dmu = -mu + epsi / y - (mu * dy) / y
            dzet = -zet + epsi / zv - zet * dz / zv
            ds = -s + epsi / lam - (s * dlam) / lam

            xx = np.concatenate([y, [zv], lam, xsi, eta, mu, [zet], s])
            dxx = np.concatenate([dy, [dz], dlam, dxsi, deta, dmu, [dzet], ds])
            stmxx = np.max(-1.01 * dxx / xx)
            stmalfa = np.max(-1.01 * dx / (x - alfa))
            stmbeta = np.max(1.01 * dx / (beta - x))
            steg = 1.0 / max(stmxx, stmalfa, stmbeta, 1.0)

            xold, yold, zold = x, y, zv
            lamold, xsiold, etaold = lam, xsi, eta
            muold, zetold, sold = mu, zet, s

            itto = 0
            resinew = 2.0 * residunorm
            while resinew > residunorm and itto < 50:
                itto += 1
                x = xold + steg * dx
                y = yold + steg * dy
                zv = zold + steg * dz
                lam = lamold + steg * dlam
                xsi = xsiold + steg * dxsi
                eta = etaold + steg * deta
                mu = muold + steg * dmu
                zet = zetold + steg * dzet
                s = sold + steg * ds
                _, resinew, residumax = residuals(x, y, zv, lam, xsi, eta, mu, zet, s, epsi)
                steg *= 0.5
            residunorm = resinew
        # deep barrier stages may sit at the double-precision floor just above
        # the 0.9*epsi target; only a residual far off target is a failure
        if residumax > 10.0 * epsi:
            raise SolverError(
                f"MMA subproblem interior point did not converge: residual {residumax:.3e} "
                f"at barrier {epsi:.1e}"
            )
        epsi *= 0.1

    mult = SubproblemMultipliers(lam=lam, xsi=xsi, eta=eta, mu=mu, y=y, s=s,
                                 zet=float(zet), z0=float(zv))
    return x, mult


def kkt_residual(z: np.ndarray, grad_j: np.ndarray, g: np.ndarray,
                 grad_g: np.ndarray, mult: SubproblemMultipliers,
                 a0: float = 1.0, a_lin: np.ndarray | None = None,
                 c_pen: np.ndarray | None = None,
                 d_quad: np.ndarray | None = None) -> float:
    """Euclidean norm of the stacked first-order optimality residual.

    Stationarity (with bound multipliers), primal feasibility of the
    constraints with their slacks, and every complementarity product are
    stacked into one vector; its 2-norm is returned.
    """
    z = np.asarray(z, dtype=float)
    grad_j = np.asarray(grad_j, dtype=float)
    g = np.atleast_1d(np.asarray(g, dtype=float))
    grad_g = np.atleast_2d(np.asarray(grad_g, dtype=float))
    m = g.size
    if a_lin is None:
        a_lin = np.zeros(m)
    if c_pen is None:
        c_pen = np.full(m, 1000.0)
    if d_quad is None:
        d_quad = np.ones(m)

    rex = grad_j + grad_g.T @ mult.lam - mult.xsi + mult.eta
    rey = c_pen + d_quad * mult.y - mult.mu - mult.lam
    rez = a0 - mult.zet - a_lin @ mult.lam
    relam = g - a_lin * mult.z0 - mult.y + mult.s
    rexsi = mult.xsi * z
    reeta = mult.eta * (1.0 - z)
    remu = mult.mu * mult.y
    rezet = mult.zet * mult.z0
    res = mult.lam * mult.s
    r = np.concatenate([rex, rey, [rez], relam, rexsi, reeta, remu, [rezet], res])
    return float(np.linalg.norm(r))
