"""Numba kernels for the single-shooting MPC.

The solver rolls the controller's internal (possibly degraded) unicycle model
forward, scores tracking + input effort + obstacle-clearance penalties, and
descends the input sequence with an adjoint (backward) gradient and projected
backtracking steps. Everything here works on plain float64 arrays so the hot
loop stays allocation-free.

Failure kind codes: 0 none, 1 steering-scale(loss), 2 velocity-coupled(k),
3 angular-bias(b), 4 position-drift(wx, wy).
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

KIND_NONE = 0
KIND_SCALE = 1
KIND_COUPLED = 2
KIND_BIAS = 3
KIND_DRIFT = 4

_TWO_PI = 2.0 * math.pi


@njit(cache=True)
def _wrap(a):
    # [-pi, pi); cost terms only, boundary orientation does not matter here
    return a - _TWO_PI * math.floor((a + math.pi) / _TWO_PI)


@njit(cache=True)
def rollout(x0, u, dt, kind, pa, pb):
    """Integrate the internal model; returns (H+1, 3) states, heading unwrapped."""
    n = u.shape[0]
    states = np.empty((n + 1, 3))
    states[0, 0] = x0[0]
    states[0, 1] = x0[1]
    states[0, 2] = x0[2]
    for k in range(n):
        v = u[k, 0]
        w = u[k, 1]
        dxd = 0.0
        dyd = 0.0
        if kind == KIND_SCALE:
            we = (1.0 - pa) * w
        elif kind == KIND_COUPLED:
            s = 1.0 - pa * abs(v)
            we = w * s if s > 0.0 else 0.0
        elif kind == KIND_BIAS:
            we = w + pa
        elif kind == KIND_DRIFT:
            we = w
            dxd = pa
            dyd = pb
        else:
            we = w
        th = states[k, 2]
        states[k + 1, 0] = states[k, 0] + (v * math.cos(th) + dxd) * dt
        states[k + 1, 1] = states[k, 1] + (v * math.sin(th) + dyd) * dt
        states[k + 1, 2] = th + we * dt
    return states


@njit(cache=True)
def _point_clearance(x, y, discs, segs, bounds):
    """Min distance to any obstacle boundary / wall / workspace edge."""
    clr = min(min(x - bounds[0], bounds[2] - x), min(y - bounds[1], bounds[3] - y))
    for i in range(discs.shape[0]):
        d = math.hypot(x - discs[i, 0], y - discs[i, 1]) - discs[i, 2]
        if d < clr:
            clr = d
    for i in range(segs.shape[0]):
        ax, ay, bx, by = segs[i, 0], segs[i, 1], segs[i, 2], segs[i, 3]
        vx = bx - ax
        vy = by - ay
        vv = vx * vx + vy * vy
        if vv <= 0.0:
            d = math.hypot(x - ax, y - ay)
        else:
            t = ((x - ax) * vx + (y - ay) * vy) / vv
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            d = math.hypot(x - (ax + t * vx), y - (ay + t * vy))
        if d < clr:
            clr = d
    return clr


@njit(cache=True)
def min_clearance(states, discs, segs, bounds):
    """Worst clearance over the predicted states (excluding the fixed current one)."""
    worst = 1e30
    for k in range(1, states.shape[0]):
        c = _point_clearance(states[k, 0], states[k, 1], discs, segs, bounds)
        if c < worst:
            worst = c
    return worst


@njit(cache=True)
def cost_of(states, u, ref, q, r, discs, segs, bounds, margin, penw):
    n = u.shape[0]
    c = 0.0
    for k in range(1, n + 1):
        ex = states[k, 0] - ref[k, 0]
        ey = states[k, 1] - ref[k, 1]
        et = _wrap(states[k, 2] - ref[k, 2])
        c += q[0] * ex * ex + q[1] * ey * ey + q[2] * et * et
        clr = _point_clearance(states[k, 0], states[k, 1], discs, segs, bounds)
        viol = margin - clr
        if viol > 0.0:
            c += penw * viol * viol
    for k in range(n):
        c += r[0] * u[k, 0] * u[k, 0] + r[1] * u[k, 1] * u[k, 1]
    return c


@njit(cache=True)
def _penalty_grad_at(x, y, discs, segs, bounds, margin, penw, out):
    """Accumulate d(penalty)/d(x, y) into out[0:2] for one state."""
    # workspace edges (linear hinges)
    v = margin - (x - bounds[0])
    if v > 0.0:
        out[0] += -2.0 * penw * v
    v = margin - (bounds[2] - x)
    if v > 0.0:
        out[0] += 2.0 * penw * v
    v = margin - (y - bounds[1])
    if v > 0.0:
        out[1] += -2.0 * penw * v
    v = margin - (bounds[3] - y)
    if v > 0.0:
        out[1] += 2.0 * penw * v
    for i in range(discs.shape[0]):
        dx = x - discs[i, 0]
        dy = y - discs[i, 1]
        dist = math.hypot(dx, dy)
        viol = margin - (dist - discs[i, 2])
        if viol > 0.0 and dist > 1e-9:
            s = -2.0 * penw * viol / dist
            out[0] += s * dx
            out[1] += s * dy
    for i in range(segs.shape[0]):
        ax, ay, bx, by = segs[i, 0], segs[i, 1], segs[i, 2], segs[i, 3]
        vx = bx - ax
        vy = by - ay
        vv = vx * vx + vy * vy
        if vv <= 0.0:
            cx, cy = ax, ay
        else:
            t = ((x - ax) * vx + (y - ay) * vy) / vv
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            cx = ax + t * vx
            cy = ay + t * vy
        dx = x - cx
        dy = y - cy
        dist = math.hypot(dx, dy)
        viol = margin - dist
        if viol > 0.0 and dist > 1e-9:
            s = -2.0 * penw * viol / dist
            out[0] += s * dx
            out[1] += s * dy


@njit(cache=True)
def cost_grad(x0, u, ref, dt, kind, pa, pb, q, r, discs, segs, bounds, margin, penw):
    """Cost and its gradient w.r.t. the input sequence (adjoint sweep)."""
    n = u.shape[0]
    states = rollout(x0, u, dt, kind, pa, pb)
    c = cost_of(states, u, ref, q, r, discs, segs, bounds, margin, penw)
    grad = np.zeros((n, 2))
    lam0 = 0.0
    lam1 = 0.0
    lam2 = 0.0
    gtmp = np.zeros(2)
    for k in range(n, 0, -1):
        # stage gradients at state k
        ex = states[k, 0] - ref[k, 0]
        ey = states[k, 1] - ref[k, 1]
        et = _wrap(states[k, 2] - ref[k, 2])
        gtmp[0] = 2.0 * q[0] * ex
        gtmp[1] = 2.0 * q[1] * ey
        _penalty_grad_at(states[k, 0], states[k, 1], discs, segs, bounds, margin, penw, gtmp)
        lam0 += gtmp[0]
        lam1 += gtmp[1]
        lam2 += 2.0 * q[2] * et
        gtmp[0] = 0.0
        gtmp[1] = 0.0
        v = u[k - 1, 0]
        w = u[k - 1, 1]
        th = states[k - 1, 2]
        # input sensitivities of the effective angular rate
        dwe_dv = 0.0
        if kind == KIND_SCALE:
            dwe_dw = 1.0 - pa
        elif kind == KIND_COUPLED:
            s = 1.0 - pa * abs(v)
            if s > 0.0:
                dwe_dw = s
                sign = 1.0 if v > 0.0 else (-1.0 if v < 0.0 else 0.0)
                dwe_dv = -w * pa * sign
            else:
                dwe_dw = 0.0
        else:
            dwe_dw = 1.0
        grad[k - 1, 0] = 2.0 * r[0] * v + (lam0 * math.cos(th) + lam1 * math.sin(th)) * dt \
            + lam2 * dwe_dv * dt
        grad[k - 1, 1] = 2.0 * r[1] * w + lam2 * dwe_dw * dt
        # propagate the adjoint through the state transition
        lam2 = lam0 * (-v * math.sin(th) * dt) + lam1 * (v * math.cos(th) * dt) + lam2
    return c, grad, states


@njit(cache=True)
def _clip_inputs(u, vmax, wmax):
    for k in range(u.shape[0]):
        if u[k, 0] > vmax:
            u[k, 0] = vmax
        elif u[k, 0] < -vmax:
            u[k, 0] = -vmax
        if u[k, 1] > wmax:
            u[k, 1] = wmax
        elif u[k, 1] < -wmax:
            u[k, 1] = -wmax


@njit(cache=True)
def solve_pgd(x0, u_init, ref, dt, kind, pa, pb, q, r, vmax, wmax,
              discs, segs, bounds, margin_plan, margin_collide, penw,
              max_iter, tol):
    """Projected-gradient descent, seeded from the best of a small candidate
    set (warm start, stopping, and swerve arcs that escape the straight-ahead
    local minimum in front of blockages).

    Tracks the best iterate that clears the planning margin (tier A) and the
    best that at least clears the collision margin (tier B). Returns
    (uA, foundA, costA, uB, foundB, costB, iterations).
    """
    n = u_init.shape[0]

    best_a = np.zeros((n, 2))
    best_b = np.zeros((n, 2))
    found_a = False
    found_b = False
    cost_a = 1e300
    cost_b = 1e300
    feas_eps = 1e-9

    # nominal speed profile of the reference window, for the arc candidates
    v_ref = np.empty(n)
    for k in range(n):
        dx = ref[k + 1, 0] - ref[k, 0]
        dy = ref[k + 1, 1] - ref[k, 1]
        v = math.hypot(dx, dy) / dt
        v_ref[k] = v if v < vmax else vmax

    u = u_init.copy()
    _clip_inputs(u, vmax, wmax)
    best_seed_cost = 1e300
    hold = n // 2 if n >= 2 else n
    arc_w = (0.5, -0.5, 1.0, -1.0, 0.5, -0.5, 1.0, -1.0)
    arc_scale = (1.0, 1.0, 1.0, 1.0, 0.45, 0.45, 0.45, 0.45)
    for c in range(10):
        if c == 0:
            uc = u.copy()
        elif c == 1:
            uc = np.zeros((n, 2))
        else:
            uc = np.zeros((n, 2))
            for k in range(n):
                uc[k, 0] = v_ref[k] * arc_scale[c - 2]
                uc[k, 1] = arc_w[c - 2] if k < hold else 0.0
            _clip_inputs(uc, vmax, wmax)
        sc = rollout(x0, uc, dt, kind, pa, pb)
        cc = cost_of(sc, uc, ref, q, r, discs, segs, bounds, margin_plan, penw)
        clrc = min_clearance(sc, discs, segs, bounds)
        if clrc >= margin_plan - feas_eps and cc < cost_a:
            best_a[:] = uc
            cost_a = cc
            found_a = True
        if clrc >= margin_collide - feas_eps and cc < cost_b:
            best_b[:] = uc
            cost_b = cc
            found_b = True
        if cc < best_seed_cost:
            best_seed_cost = cc
            u = uc

    step = 0.05
    prev_cost = 1e300
    stall = 0
    it = 0
    while it < max_iter:
        c, grad, states = cost_grad(x0, u, ref, dt, kind, pa, pb, q, r,
                                    discs, segs, bounds, margin_plan, penw)
        clr = min_clearance(states, discs, segs, bounds)
        if clr >= margin_plan - feas_eps and c < cost_a:
            best_a[:] = u
            cost_a = c
            found_a = True
        if clr >= margin_collide - feas_eps and c < cost_b:
            best_b[:] = u
            cost_b = c
            found_b = True

        gmax = 0.0
        for k in range(n):
            if abs(grad[k, 0]) > gmax:
                gmax = abs(grad[k, 0])
            if abs(grad[k, 1]) > gmax:
                gmax = abs(grad[k, 1])
        if gmax < 1e-12:
            break

        accepted = False
        ut = u
        ct = c
        for _ in range(14):
            ut = u - step * grad
            _clip_inputs(ut, vmax, wmax)
            st = rollout(x0, ut, dt, kind, pa, pb)
            ct = cost_of(st, ut, ref, q, r, discs, segs, bounds, margin_plan, penw)
            if ct < c - 1e-14:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        u = ut
        if step < 4.0:
            step *= 1.5
        if prev_cost - ct <= tol * max(1.0, abs(prev_cost)):
            stall += 1
            if stall >= 2:
                it += 1
                break
        else:
            stall = 0
        prev_cost = ct
        it += 1

    # score the final iterate too
    states = rollout(x0, u, dt, kind, pa, pb)
    c = cost_of(states, u, ref, q, r, discs, segs, bounds, margin_plan, penw)
    clr = min_clearance(states, discs, segs, bounds)
    if clr >= margin_plan - feas_eps and c < cost_a:
        best_a[:] = u
        cost_a = c
        found_a = True
    if clr >= margin_collide - feas_eps and c < cost_b:
        best_b[:] = u
        cost_b = c
        found_b = True
    return best_a, found_a, cost_a, best_b, found_b, cost_b, it
