"""Hot loops of the explicit solver.

Single-threaded numba kernels (plain-python fallbacks when numba is
unavailable); every reduction runs in a fixed order so results do not
depend on scheduling.  The scalar constitutive steppers here are the
single source of truth for the facet laws; the batch wrappers and the
fused system kernel call them per facet.
"""

from __future__ import annotations

import math

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency normally
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


_JIT = dict(cache=True, fastmath=False)


@njit(**_JIT)
def strength_interpolation(sin_w, cos_w, sigma_t, r_st, alpha):
    """Virgin strength under coupled normal/shear loading.

    Rationalized form of the parabolic interpolation between the pure
    tension value sigma_t (sin_w = 1) and sigma_s / sqrt(alpha)
    (sin_w = 0); exact at both limits.
    """
    q = 4.0 * alpha * cos_w * cos_w / (r_st * r_st)
    return 2.0 * sigma_t / (sin_w + math.sqrt(sin_w * sin_w + q))


@njit(**_JIT)
def fracture_step(eps_n, eps_m, eps_l, old_n, old_m, old_l,
                  t_n, t_m, t_l, emax_n, emax_t,
                  E0, alpha, sigma_t, r_st, n_t, k_t, h_t):
    """Tension / tension-shear fracture update for one facet.

    The effective stress is incrementally elastic below the softening
    boundary; unloading aims at the residual strain k_t * (eps_max -
    boundary/E0), reloading rises at E0 until the boundary is met.
    Returns the new tractions and history maxima.
    """
    eps_t = math.sqrt(eps_m * eps_m + eps_l * eps_l)
    eff = math.sqrt(eps_n * eps_n + alpha * eps_t * eps_t)
    if emax_n < eps_n:
        emax_n = eps_n
    if emax_t < eps_t:
        emax_t = eps_t
    if eff <= 0.0:
        return 0.0, 0.0, 0.0, emax_n, emax_t

    sin_w = eps_n / eff
    cos_w = math.sqrt(alpha) * eps_t / eff
    s0 = strength_interpolation(sin_w, cos_w, sigma_t, r_st, alpha)
    eps_max = math.sqrt(emax_n * emax_n + alpha * emax_t * emax_t)
    over = eps_max - s0 / E0
    if over > 0.0:
        omega = math.atan2(eps_n, math.sqrt(alpha) * eps_t)
        soft = h_t * (2.0 * omega / math.pi) ** n_t
        boundary = s0 * math.exp(-soft * over / s0)
    else:
        boundary = s0

    old_t2 = old_m * old_m + old_l * old_l
    old_pos = old_n if old_n > 0.0 else 0.0
    old_eff = math.sqrt(old_pos * old_pos + alpha * old_t2)
    tn_pos = t_n if t_n > 0.0 else 0.0
    t_old = math.sqrt(tn_pos * tn_pos + (t_m * t_m + t_l * t_l) / alpha)

    d = eff - old_eff
    if d >= 0.0:
        t_new = t_old + E0 * d
    else:
        eps_tr = k_t * (eps_max - boundary / E0)
        if eps_tr < 0.0:
            eps_tr = 0.0
        if old_eff > eps_tr and t_old > 0.0:
            slope = t_old / (old_eff - eps_tr)
        else:
            slope = E0
        t_new = t_old + slope * d
    if t_new < 0.0:
        t_new = 0.0
    if t_new > boundary:
        t_new = boundary

    scale = t_new / eff
    return eps_n * scale, alpha * eps_m * scale, alpha * eps_l * scale, emax_n, emax_t


@njit(**_JIT)
def compression_normal_step(eps_n, old_n, t_n, eps_v, compacted,
                            E0, sigma_c0, h_c0, h_c1,
                            kc0, kc1, kc2, kc3, e_d):
    """Compressive normal update for one facet.

    The strain-dependent boundary hardens linearly between the pore
    collapse strain ec0 = sigma_c0/E0 and ec1 = kc0*ec0, then
    exponentially (continuity fixes the branch-switch stress).
    Unloading/reloading runs at the densified modulus once the facet
    has touched the boundary.
    """
    ec0 = sigma_c0 / E0
    ec1 = kc0 * ec0
    ev0 = kc3 * ec0
    eps_d = eps_n - eps_v
    a_d = abs(eps_d)
    if eps_v > 0.0:
        rdv = a_d / ev0
    else:
        rdv = a_d / (ev0 - eps_v)
    gap = rdv - kc1
    if gap < 0.0:
        gap = 0.0
    h_c = (h_c0 - h_c1) / (1.0 + kc2 * gap) + h_c1

    m_ev = -eps_v
    if m_ev < 0.0:
        boundary = sigma_c0
    elif m_ev <= ec1:
        over = m_ev - ec0
        if over < 0.0:
            over = 0.0
        boundary = sigma_c0 + over * h_c
    else:
        s_c1 = sigma_c0 + (ec1 - ec0) * h_c
        boundary = s_c1 * math.exp((m_ev - ec1) * h_c / s_c1)

    modulus = e_d if compacted else E0
    t_new = t_n + modulus * (eps_n - old_n)
    if t_new > 0.0:
        t_new = 0.0
    if t_new < -boundary:
        t_new = -boundary
    if t_new <= -boundary * (1.0 - 1e-12) and t_new <= -sigma_c0 * (1.0 - 1e-12):
        compacted = True
    return t_new, compacted


@njit(**_JIT)
def friction_shear_step(eps_m, eps_l, old_m, old_l, t_m, t_l, t_n,
                        eps_pm, eps_pl, E0, alpha,
                        sigma_s, mu_0, mu_inf, sigma_n0):
    """Compression-shear frictional update (radial return) for one facet."""
    e_t = alpha * E0
    tm_trial = t_m + e_t * (eps_m - old_m)
    tl_trial = t_l + e_t * (eps_l - old_l)
    strength = sigma_s + (mu_0 - mu_inf) * sigma_n0 * (1.0 - math.exp(t_n / sigma_n0)) \
        - mu_inf * t_n
    t_t = math.hypot(tm_trial, tl_trial)
    if t_t <= strength:
        return tm_trial, tl_trial, eps_pm, eps_pl
    scale = strength / t_t
    tm_new = tm_trial * scale
    tl_new = tl_trial * scale
    eps_pm += (tm_trial - tm_new) / e_t
    eps_pl += (tl_trial - tl_new) / e_t
    return tm_new, tl_new, eps_pm, eps_pl


@njit(**_JIT)
def tet_volumetric_strain(positions, u, tets, tet_vol0, out):
    """eps_v = (V - V0) / (3 V0) per tetrahedron, from current coordinates."""
    for t in range(tets.shape[0]):
        n0, n1, n2, n3 = tets[t, 0], tets[t, 1], tets[t, 2], tets[t, 3]
        ax = positions[n0, 0] + u[n0, 0]
        ay = positions[n0, 1] + u[n0, 1]
        az = positions[n0, 2] + u[n0, 2]
        bx = positions[n1, 0] + u[n1, 0] - ax
        by = positions[n1, 1] + u[n1, 1] - ay
        bz = positions[n1, 2] + u[n1, 2] - az
        cx = positions[n2, 0] + u[n2, 0] - ax
        cy = positions[n2, 1] + u[n2, 1] - ay
        cz = positions[n2, 2] + u[n2, 2] - az
        dx = positions[n3, 0] + u[n3, 0] - ax
        dy = positions[n3, 1] + u[n3, 1] - ay
        dz = positions[n3, 2] + u[n3, 2] - az
        vol = ((by * cz - bz * cy) * dx
               + (bz * cx - bx * cz) * dy
               + (bx * cy - by * cx) * dz) / 6.0
        out[t] = (vol - tet_vol0[t]) / (3.0 * tet_vol0[t])


@njit(**_JIT)
def facet_system_step(u, theta, fi, fj, e_n, e_m, e_l, r, area, c_i, c_j,
                      facet_tet, eps_v_tet, eps_c,
                      eps, tra, emax_n, emax_t, eps_p, compacted,
                      crack_w, work, diss, eps_v,
                      E0, alpha, sigma_t, r_st, n_t, k_t, h_t,
                      sigma_c0, h_c0, h_c1, kc0, kc1, kc2, kc3, e_d,
                      mu_0, mu_inf, sigma_n0,
                      f_vec, m_i, m_j):
    """Strain evaluation + constitutive update + per-facet force/moment.

    One fused pass over all facets; state arrays are updated in place.
    `eps_c` is the imposed (eigen)strain offset added to the kinematic
    facet strain before the constitutive evaluation.
    """
    sigma_s = r_st * sigma_t
    for f in range(fi.shape[0]):
        i = fi[f]
        j = fj[f]
        cix = c_i[f, 0]
        ciy = c_i[f, 1]
        ciz = c_i[f, 2]
        cjx = c_j[f, 0]
        cjy = c_j[f, 1]
        cjz = c_j[f, 2]
        # relative displacement of the facet centroid: u_j + th_j x c_j - u_i - th_i x c_i
        dx = u[j, 0] + theta[j, 1] * cjz - theta[j, 2] * cjy \
            - u[i, 0] - (theta[i, 1] * ciz - theta[i, 2] * ciy)
        dy = u[j, 1] + theta[j, 2] * cjx - theta[j, 0] * cjz \
            - u[i, 1] - (theta[i, 2] * cix - theta[i, 0] * ciz)
        dz = u[j, 2] + theta[j, 0] * cjy - theta[j, 1] * cjx \
            - u[i, 2] - (theta[i, 0] * ciy - theta[i, 1] * cix)
        inv_r = 1.0 / r[f]
        eps_n = (dx * e_n[f, 0] + dy * e_n[f, 1] + dz * e_n[f, 2]) * inv_r + eps_c[f, 0]
        eps_m = (dx * e_m[f, 0] + dy * e_m[f, 1] + dz * e_m[f, 2]) * inv_r + eps_c[f, 1]
        eps_l = (dx * e_l[f, 0] + dy * e_l[f, 1] + dz * e_l[f, 2]) * inv_r + eps_c[f, 2]

        old_n = eps[f, 0]
        old_m = eps[f, 1]
        old_l = eps[f, 2]
        tn = tra[f, 0]
        tm = tra[f, 1]
        tl = tra[f, 2]
        ev = eps_v_tet[facet_tet[f]]

        if eps_n >= 0.0:
            tn, tm, tl, en, et = fracture_step(
                eps_n, eps_m, eps_l, old_n, old_m, old_l, tn, tm, tl,
                emax_n[f], emax_t[f],
                E0, alpha, sigma_t, r_st, n_t, k_t, h_t[f])
            emax_n[f] = en
            emax_t[f] = et
        else:
            tn, comp = compression_normal_step(
                eps_n, old_n, tn, ev, compacted[f],
                E0, sigma_c0, h_c0, h_c1, kc0, kc1, kc2, kc3, e_d)
            compacted[f] = comp
            tm, tl, pm, pl = friction_shear_step(
                eps_m, eps_l, old_m, old_l, tm, tl, tn,
                eps_p[f, 0], eps_p[f, 1], E0, alpha,
                sigma_s, mu_0, mu_inf, sigma_n0)
            eps_p[f, 0] = pm
            eps_p[f, 1] = pl

        vol = area[f] * r[f]
        d_work = 0.5 * vol * ((tra[f, 0] + tn) * (eps_n - old_n)
                              + (tra[f, 1] + tm) * (eps_m - old_m)
                              + (tra[f, 2] + tl) * (eps_l - old_l))
        elastic_new = 0.5 * vol * (tn * tn / E0 + (tm * tm + tl * tl) / (alpha * E0))
        elastic_old = 0.5 * vol * (tra[f, 0] * tra[f, 0] / E0
                                   + (tra[f, 1] * tra[f, 1]
                                      + tra[f, 2] * tra[f, 2]) / (alpha * E0))
        work[f] += d_work
        diss[f] += d_work - (elastic_new - elastic_old)

        eps[f, 0] = eps_n
        eps[f, 1] = eps_m
        eps[f, 2] = eps_l
        tra[f, 0] = tn
        tra[f, 1] = tm
        tra[f, 2] = tl
        eps_v[f] = ev
        open_w = r[f] * (eps_n - tn / E0)
        crack_w[f] = open_w if open_w > 0.0 else 0.0

        fx = area[f] * (tn * e_n[f, 0] + tm * e_m[f, 0] + tl * e_l[f, 0])
        fy = area[f] * (tn * e_n[f, 1] + tm * e_m[f, 1] + tl * e_l[f, 1])
        fz = area[f] * (tn * e_n[f, 2] + tm * e_m[f, 2] + tl * e_l[f, 2])
        f_vec[f, 0] = fx
        f_vec[f, 1] = fy
        f_vec[f, 2] = fz
        # moment of +F about node i and of -F about node j
        m_i[f, 0] = ciy * fz - ciz * fy
        m_i[f, 1] = ciz * fx - cix * fz
        m_i[f, 2] = cix * fy - ciy * fx
        m_j[f, 0] = -(cjy * fz - cjz * fy)
        m_j[f, 1] = -(cjz * fx - cjx * fz)
        m_j[f, 2] = -(cjx * fy - cjy * fx)


@njit(**_JIT)
def gather_node_loads(ptr, slot, sign, f_vec, m_i, m_j, force, moment):
    """Accumulate facet forces/moments onto nodes in fixed slot order.

    `slot[k] = facet index`, `sign[k] = +1` for the i side and `-1` for
    the j side of that facet; moments pick the matching side array.
    """
    n_facets = f_vec.shape[0]
    for node in range(ptr.shape[0] - 1):
        fx = fy = fz = 0.0
        mx = my = mz = 0.0
        for k in range(ptr[node], ptr[node + 1]):
            f = slot[k]
            if sign[k] > 0:
                fx += f_vec[f, 0]
                fy += f_vec[f, 1]
                fz += f_vec[f, 2]
                mx += m_i[f, 0]
                my += m_i[f, 1]
                mz += m_i[f, 2]
            else:
                fx -= f_vec[f, 0]
                fy -= f_vec[f, 1]
                fz -= f_vec[f, 2]
                mx += m_j[f, 0]
                my += m_j[f, 1]
                mz += m_j[f, 2]
        force[node, 0] = fx
        force[node, 1] = fy
        force[node, 2] = fz
        moment[node, 0] = mx
        moment[node, 1] = my
        moment[node, 2] = mz


@njit(**_JIT)
def reduce_to_masters(master_of, full, reduced):
    """Sum rows of `full` into their master rows (fixed order)."""
    reduced[:] = 0.0
    for i in range(full.shape[0]):
        m = master_of[i]
        reduced[m, 0] += full[i, 0]
        reduced[m, 1] += full[i, 1]
        reduced[m, 2] += full[i, 2]


@njit(**_JIT)
def update_velocities(v, omega, force, moment, mass, inertia_inv, damping, dt):
    """Damped velocity update; returns the index of the first particle
    with a non-finite load, or -1."""
    bad = -1
    decay = 1.0 - damping * dt
    for i in range(v.shape[0]):
        fx = force[i, 0]
        fy = force[i, 1]
        fz = force[i, 2]
        mx = moment[i, 0]
        my = moment[i, 1]
        mz = moment[i, 2]
        total = fx + fy + fz + mx + my + mz
        if not math.isfinite(total) and bad < 0:
            bad = i
        inv_m = dt / mass[i]
        v[i, 0] = v[i, 0] * decay + fx * inv_m
        v[i, 1] = v[i, 1] * decay + fy * inv_m
        v[i, 2] = v[i, 2] * decay + fz * inv_m
        omega[i, 0] = omega[i, 0] * decay + dt * (
            inertia_inv[i, 0, 0] * mx + inertia_inv[i, 0, 1] * my
            + inertia_inv[i, 0, 2] * mz)
        omega[i, 1] = omega[i, 1] * decay + dt * (
            inertia_inv[i, 1, 0] * mx + inertia_inv[i, 1, 1] * my
            + inertia_inv[i, 1, 2] * mz)
        omega[i, 2] = omega[i, 2] * decay + dt * (
            inertia_inv[i, 2, 0] * mx + inertia_inv[i, 2, 1] * my
            + inertia_inv[i, 2, 2] * mz)
    return bad


@njit(**_JIT)
def advance_positions(u, theta, v, omega, master_of, dt):
    """Position update with slave DOFs mirrored from their masters."""
    for i in range(u.shape[0]):
        m = master_of[i]
        if m != i:
            v[i, 0] = v[m, 0]
            v[i, 1] = v[m, 1]
            v[i, 2] = v[m, 2]
            omega[i, 0] = omega[m, 0]
            omega[i, 1] = omega[m, 1]
            omega[i, 2] = omega[m, 2]
    for i in range(u.shape[0]):
        u[i, 0] += dt * v[i, 0]
        u[i, 1] += dt * v[i, 1]
        u[i, 2] += dt * v[i, 2]
        theta[i, 0] += dt * omega[i, 0]
        theta[i, 1] += dt * omega[i, 1]
        theta[i, 2] += dt * omega[i, 2]


def tension_fracture_batch(state, trial_eps, params, h_t, mask=None):
    """Apply the fracture law to every facet of `state` (or a mask)."""
    idx = np.arange(state.n_facets) if mask is None else np.flatnonzero(mask)
    for f in idx:
        tn, tm, tl, en, et = fracture_step(
            trial_eps[f, 0], trial_eps[f, 1], trial_eps[f, 2],
            state.eps[f, 0], state.eps[f, 1], state.eps[f, 2],
            state.t[f, 0], state.t[f, 1], state.t[f, 2],
            state.eps_max_n[f], state.eps_max_t[f],
            params.E0, params.alpha, params.sigma_t, params.r_st,
            params.n_t, params.k_t, h_t[f])
        state.t[f, 0], state.t[f, 1], state.t[f, 2] = tn, tm, tl
        state.eps_max_n[f], state.eps_max_t[f] = en, et
        state.eps[f] = trial_eps[f]


def compression_batch(state, trial_eps_n, eps_v, params, mask=None):
    """Apply the compressive normal law to every facet (or a mask)."""
    idx = np.arange(state.n_facets) if mask is None else np.flatnonzero(mask)
    for f in idx:
        tn, comp = compression_normal_step(
            trial_eps_n[f], state.eps[f, 0], state.t[f, 0], eps_v[f],
            state.compacted[f], params.E0, params.sigma_c0,
            params.H_c0, params.H_c1, params.kappa_c0, params.kappa_c1,
            params.kappa_c2, params.kappa_c3, params.E_d)
        state.t[f, 0] = tn
        state.compacted[f] = comp
        state.eps[f, 0] = trial_eps_n[f]
        state.eps_v[f] = eps_v[f]


def friction_batch(state, trial_eps_m, trial_eps_l, t_n, params, mask=None):
    """Apply the frictional shear law to every facet (or a mask)."""
    idx = np.arange(state.n_facets) if mask is None else np.flatnonzero(mask)
    for f in idx:
        tm, tl, pm, pl = friction_shear_step(
            trial_eps_m[f], trial_eps_l[f],
            state.eps[f, 1], state.eps[f, 2],
            state.t[f, 1], state.t[f, 2], t_n[f],
            state.eps_p[f, 0], state.eps_p[f, 1],
            params.E0, params.alpha, params.sigma_s,
            params.mu_0, params.mu_inf, params.sigma_N0)
        state.t[f, 1], state.t[f, 2] = tm, tl
        state.eps_p[f, 0], state.eps_p[f, 1] = pm, pl
        state.eps[f, 1] = trial_eps_m[f]
        state.eps[f, 2] = trial_eps_l[f]
