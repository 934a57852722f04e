"""Pure-Python hit-and-run chain, used when the compiled kernel is unavailable.

Same arithmetic, in the same order, as ``_kernels.pyx``.
"""
import math

BISECT_ITERS = 50

ELLIPSOIDAL, BOX, DIAMOND, BUDGET = 0, 1, 2, 3


def _l1_at(x, u, t):
    acc = 0.0
    for xi, ui in zip(x, u):
        acc += abs(xi + t * ui)
    return acc


def _l1_reach(x, u, sign, upper, rho):
    if _l1_at(x, u, sign * upper) <= rho:
        return upper
    lo, hi = 0.0, upper
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if _l1_at(x, u, sign * mid) <= rho:
            lo = mid
        else:
            hi = mid
    return lo


def _box_clip(x, u, cap):
    lo, hi = -math.inf, math.inf
    for xi, ui in zip(x, u):
        if ui > 0.0:
            a = (cap - xi) / ui
            b = (-cap - xi) / ui
        elif ui < 0.0:
            a = (-cap - xi) / ui
            b = (cap - xi) / ui
        else:
            continue
        if a < hi:
            hi = a
        if b > lo:
            lo = b
    return lo, hi


def _chord(kind, rho, gamma, x, u):
    if kind == ELLIPSOIDAL:
        a = b = c = 0.0
        for xi, ui in zip(x, u):
            a += ui * ui
            b += xi * ui
            c += xi * xi
        c = c - rho * rho
        disc = b * b - a * c
        if disc < 0.0:
            disc = 0.0
        sq = math.sqrt(disc)
        q = -(b + sq) if b >= 0.0 else -b + sq
        if q == 0.0:
            return 0.0, 0.0
        if b >= 0.0:
            return q / a, c / q
        return c / q, q / a
    if kind == BOX:
        return _box_clip(x, u, rho)
    if kind == DIAMOND:
        ax = au = 0.0
        for xi, ui in zip(x, u):
            ax += abs(xi)
            au += abs(ui)
        upper = (rho + ax) / au
        return -_l1_reach(x, u, -1.0, upper, rho), _l1_reach(x, u, 1.0, upper, rho)
    lo, hi = _box_clip(x, u, gamma)
    return -_l1_reach(x, u, -1.0, -lo, rho), _l1_reach(x, u, 1.0, hi, rho)


def run_chain(kind, rho, gamma, x, dirs, unif, step0, burn_in, thinning, out, out_pos):
    state = x.tolist()
    cap = out.shape[0]
    for j, (u, w) in enumerate(zip(dirs.tolist(), unif.tolist())):
        tmin, tmax = _chord(kind, rho, gamma, state, u)
        if tmax < tmin:
            tmin = tmax = 0.0
        t = tmin + w * (tmax - tmin)
        state = [xi + t * ui for xi, ui in zip(state, u)]
        s = step0 + j + 1
        if s > burn_in and (s - burn_in) % thinning == 0 and out_pos < cap:
            out[out_pos, :] = state
            out_pos += 1
    x[:] = state
    return out_pos
