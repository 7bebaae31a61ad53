"""Hot numerical kernels (numba-compiled, with a pure-python fallback).

Everything in this module is written in nopython-compatible style: flat
numpy arrays, explicit loops, no python objects.  The public modules wrap
these kernels with validation and friendlier types.  See
:mod:`hsgas._backend` for backend selection (``HSGAS_NUMBA=0`` runs the
same source uncompiled).

Conventions used throughout:

* positions live on the unit torus, one row per particle, canonical
  representative in [0, 1);
* a pair (i, j) is in contact when the minimal-image distance of the
  centers equals the diameter ``eps``;
* the contact normal ``omega`` points from the second particle of the
  pair to the first, matching the reflection law
  ``v_i' = v_i - ((v_i - v_j) . omega) omega``.
"""

import math

import numpy as np

from ._backend import njit_maybe

# status codes returned by the event loop
EVOLVE_DONE = 0
EVOLVE_LOG_FULL = 1
EVOLVE_OVERLAP_FAULT = 2
EVOLVE_EVENT_STORM = 3

# row markers: partner >= 0 is a pair prediction, REFRESH re-predicts the row
ROW_REFRESH = -1

# near-tangency guard: contact quadratics with discriminant below this are
# treated as misses (grazing), and their occurrence is counted separately
GRAZE_DISC_TOL = 1e-14

# simultaneity window for the deterministic tie-break
TIE_TOL = 1e-12

# rejection reasons for backward creations
CREATE_OK = 0
CREATE_OVERLAP = 1
CREATE_HEMISPHERE = 2

# pseudo-trajectory event types
PT_CREATION = 0
PT_RECOLLISION = 1
PT_TERMINAL = 2


@njit_maybe
def wrap_unit(x):
    """Wrap an (n, d) position array into [0, 1) in place."""
    n, d = x.shape
    for i in range(n):
        for k in range(d):
            x[i, k] -= math.floor(x[i, k])


@njit_maybe
def min_image_disp(dx, out):
    """Minimal-image representative of a displacement vector.

    Ties at half-integer components resolve toward the lexicographically
    smallest shift, i.e. the representative -0.5 is chosen over +0.5.
    """
    d = dx.shape[0]
    for k in range(d):
        out[k] = dx[k] - math.floor(dx[k] + 0.5)


@njit_maybe
def pair_min_image(x, i, j, out):
    d = x.shape[1]
    for k in range(d):
        t = x[j, k] - x[i, k]
        out[k] = t - math.floor(t + 0.5)


@njit_maybe
def min_pair_distance(x, eps):
    """Smallest minimal-image center distance over all pairs (O(N^2))."""
    n, d = x.shape
    best = 1e300
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for k in range(d):
                t = x[j, k] - x[i, k]
                t -= math.floor(t + 0.5)
                s += t * t
            if s < best:
                best = s
    if n < 2:
        return 1e300
    return math.sqrt(best)


@njit_maybe
def earliest_contact(r0, w, eps, horizon, shift_out):
    """Earliest contact time of a relative trajectory r0 + w t with the
    lattice of image spheres of radius ``eps``.

    Walks the swept segment in unit-length chunks and enumerates the lattice
    points whose spheres can intersect each chunk, so every periodic image
    reachable within the horizon is examined.  Returns (t, grazing) with
    t = inf when there is no contact; ``shift_out`` receives the lattice
    shift of the contacted image.  Roots with discriminant within
    GRAZE_DISC_TOL of zero are skipped and flagged as grazing.
    """
    d = r0.shape[0]
    s2 = 0.0
    for k in range(d):
        s2 += w[k] * w[k]
    grazing = 0
    if s2 == 0.0 or horizon <= 0.0:
        return 1e300, grazing
    speed = math.sqrt(s2)
    nchunk = int(math.ceil(speed * horizon)) + 1
    best_t = 1e300
    lo = np.empty(d, dtype=np.int64)
    hi = np.empty(d, dtype=np.int64)
    for c in range(nchunk):
        t0 = c / speed
        if t0 > horizon:
            break
        t1 = (c + 1) / speed
        if t1 > horizon:
            t1 = horizon
        # lattice points whose eps-sphere meets this chunk of the segment
        total = 1
        for k in range(d):
            a = r0[k] + w[k] * t0
            b = r0[k] + w[k] * t1
            if a > b:
                a, b = b, a
            lo[k] = int(math.floor(a - eps - 1e-12))
            hi[k] = int(math.floor(b + eps + 1e-12))
            total *= hi[k] - lo[k] + 1
        for flat in range(total):
            rem = flat
            b = 0.0
            cq = -eps * eps
            # decode the lattice point and accumulate the quadratic
            for k in range(d):
                span = hi[k] - lo[k] + 1
                g = lo[k] + rem % span
                rem //= span
                rr = r0[k] - g
                b += rr * w[k]
                cq += rr * rr
            disc = b * b - s2 * cq
            if disc <= GRAZE_DISC_TOL:
                if disc > -GRAZE_DISC_TOL:
                    # tangency within tolerance somewhere ahead of us
                    tmid = -b / s2
                    if 0.0 <= tmid <= horizon:
                        grazing = 1
                continue
            tc = (-b - math.sqrt(disc)) / s2
            if -1e-15 <= tc <= horizon and tc < best_t:
                best_t = tc
                if tc < 0.0:
                    best_t = 0.0
                rem2 = flat
                for k in range(d):
                    span = hi[k] - lo[k] + 1
                    shift_out[k] = lo[k] + rem2 % span
                    rem2 //= span
        if best_t <= t1:
            break
    return best_t, grazing


@njit_maybe
def reflect_pair(v, a, b, omega):
    """Specular reflection of the pair (a, b) with contact normal omega."""
    d = v.shape[1]
    c = 0.0
    for k in range(d):
        c += (v[a, k] - v[b, k]) * omega[k]
    for k in range(d):
        v[a, k] -= c * omega[k]
        v[b, k] += c * omega[k]


@njit_maybe
def _predict_row(idx, x, v, eps, t_now, t_ref, h_row, next_time, partner, shift_buf):
    """Recompute the earliest-contact prediction for one particle's row.

    Positions are stored at time ``t_now``; the row is predicted from the
    configuration at ``t_ref`` >= t_now (offsets are applied analytically,
    the arrays are not advanced).
    """
    n, d = x.shape
    r0 = np.empty(d)
    w = np.empty(d)
    off = t_ref - t_now
    best = 1e300
    best_j = ROW_REFRESH
    grazing = 0
    for j in range(n):
        if j == idx:
            continue
        for k in range(d):
            dx = x[j, k] - x[idx, k]
            dx -= math.floor(dx + 0.5)
            w[k] = v[j, k] - v[idx, k]
            r0[k] = dx + w[k] * off
        tc, gr = earliest_contact(r0, w, eps, h_row, shift_buf)
        if gr == 1:
            grazing = 1
        if tc < best:
            best = tc
            best_j = j
    if best_j >= 0 and best < 1e299:
        next_time[idx] = t_ref + best
        partner[idx] = best_j
    else:
        next_time[idx] = t_ref + h_row
        partner[idx] = ROW_REFRESH
    return grazing


@njit_maybe
def init_rows(x, v, eps, t_now, h_row, next_time, partner):
    n = x.shape[0]
    shift_buf = np.empty(x.shape[1], dtype=np.int64)
    grazing = 0
    for i in range(n):
        g = _predict_row(i, x, v, eps, t_now, t_now, h_row, next_time, partner, shift_buf)
        if g == 1:
            grazing += 1
    return grazing


@njit_maybe
def evolve_kernel(
    x,
    v,
    eps,
    t_start,
    t_end,
    h_row,
    next_time,
    partner,
    log_t,
    log_pair,
    log_omega,
    log_vpre,
    log_vpost,
    n_logged,
    max_total_events,
    events_done,
):
    """Event-driven hard-sphere flow from t_start to t_end.

    The row tables (next_time, partner) must be valid for the state (x, v)
    at t_start (see :func:`init_rows`).  Collisions are appended to the log
    arrays starting at index ``n_logged``.  Returns
    (status, t_reached, n_logged, events_done, grazing_count).

    Near-simultaneous events (within TIE_TOL) execute in pair-index
    lexicographic order.  A contact whose realized center distance deviates
    from eps by more than 1e-10 aborts with EVOLVE_OVERLAP_FAULT.
    """
    n, d = x.shape
    t_now = t_start
    grazing = 0
    log_cap = log_t.shape[0]
    disp = np.empty(d)
    omega = np.empty(d)
    shift_buf = np.empty(d, dtype=np.int64)
    if n < 2:
        for i in range(n):
            for k in range(d):
                x[i, k] += v[i, k] * (t_end - t_now)
                x[i, k] -= math.floor(x[i, k])
        return EVOLVE_DONE, t_end, n_logged, events_done, grazing
    while True:
        # earliest row, ties broken lexicographically on the sorted pair
        best_t = 1e300
        best_i = -1
        for i in range(n):
            if next_time[i] < best_t - TIE_TOL:
                best_t = next_time[i]
                best_i = i
            elif next_time[i] <= best_t + TIE_TOL:
                # candidate tie: compare (min, max) pair keys
                j_new = partner[i]
                j_old = partner[best_i]
                a_new = i if (j_new < 0 or i < j_new) else j_new
                b_new = n if j_new < 0 else (j_new if i < j_new else i)
                a_old = best_i if (j_old < 0 or best_i < j_old) else j_old
                b_old = n if j_old < 0 else (j_old if best_i < j_old else best_i)
                if a_new < a_old or (a_new == a_old and b_new < b_old):
                    if next_time[i] < best_t:
                        best_t = next_time[i]
                    best_i = i
        if best_t > t_end:
            dt = t_end - t_now
            for i in range(n):
                for k in range(d):
                    x[i, k] += v[i, k] * dt
                    x[i, k] -= math.floor(x[i, k])
            return EVOLVE_DONE, t_end, n_logged, events_done, grazing
        j = partner[best_i]
        if j < 0:
            # refresh pseudo-event: re-predict this row, nothing moves
            g = _predict_row(
                best_i, x, v, eps, t_now, best_t, h_row, next_time, partner, shift_buf
            )
            if g == 1:
                grazing += 1
            continue
        if events_done >= max_total_events:
            return EVOLVE_EVENT_STORM, t_now, n_logged, events_done, grazing
        if n_logged >= log_cap:
            return EVOLVE_LOG_FULL, t_now, n_logged, events_done, grazing
        # execute the collision: advance everything to the event time
        dt = best_t - t_now
        for i in range(n):
            for k in range(d):
                x[i, k] += v[i, k] * dt
                x[i, k] -= math.floor(x[i, k])
        t_now = best_t
        a = best_i if best_i < j else j
        b = j if best_i < j else best_i
        pair_min_image(x, a, b, disp)
        dist = 0.0
        for k in range(d):
            dist += disp[k] * disp[k]
        dist = math.sqrt(dist)
        if abs(dist - eps) > 1e-10:
            return EVOLVE_OVERLAP_FAULT, t_now, n_logged, events_done, grazing
        for k in range(d):
            omega[k] = -disp[k] / dist
        log_t[n_logged] = t_now
        log_pair[n_logged, 0] = a
        log_pair[n_logged, 1] = b
        for k in range(d):
            log_omega[n_logged, k] = omega[k]
            log_vpre[n_logged, k] = v[a, k]
            log_vpre[n_logged, d + k] = v[b, k]
        reflect_pair(v, a, b, omega)
        for k in range(d):
            log_vpost[n_logged, k] = v[a, k]
            log_vpost[n_logged, d + k] = v[b, k]
        n_logged += 1
        events_done += 1
        # stale rows: the pair itself plus anyone who was aiming at it
        for i in range(n):
            if i == a or i == b:
                continue
            if partner[i] == a or partner[i] == b:
                g = _predict_row(
                    i, x, v, eps, t_now, t_now, h_row, next_time, partner, shift_buf
                )
                if g == 1:
                    grazing += 1
        g = _predict_row(a, x, v, eps, t_now, t_now, h_row, next_time, partner, shift_buf)
        grazing += g
        g = _predict_row(b, x, v, eps, t_now, t_now, h_row, next_time, partner, shift_buf)
        grazing += g


@njit_maybe
def birth_death_chain(x, n0, eps, mu, uniforms):
    """Grand-canonical birth-death sweep on positions.

    ``x`` is an (n_max, d) scratch array whose first ``n0`` rows hold the
    current configuration.  Each proposal row of ``uniforms`` supplies
    (move-type, position..., accept, index) variates.  Insertions are
    accepted with min(1, mu/(N+1)) and no overlap; deletions with
    min(1, N/mu).  Returns (n_final, inserted, deleted) or n_final = -1 when
    the scratch array would overflow.
    """
    n_max, d = x.shape
    n = n0
    n_prop = uniforms.shape[0]
    inserted = 0
    deleted = 0
    eps2 = eps * eps
    for p in range(n_prop):
        if uniforms[p, 0] < 0.5:
            acc = mu / (n + 1.0)
            if uniforms[p, d + 1] < acc:
                if n >= n_max:
                    return -1, inserted, deleted
                ok = True
                for i in range(n):
                    s = 0.0
                    for k in range(d):
                        t = x[i, k] - uniforms[p, 1 + k]
                        t -= math.floor(t + 0.5)
                        s += t * t
                    if s <= eps2:
                        ok = False
                        break
                if ok:
                    for k in range(d):
                        x[n, k] = uniforms[p, 1 + k]
                    n += 1
                    inserted += 1
        else:
            if n > 0:
                acc = n / mu
                if uniforms[p, d + 1] < acc:
                    idx = int(uniforms[p, d + 2] * n)
                    if idx >= n:
                        idx = n - 1
                    for k in range(d):
                        x[idx, k] = x[n - 1, k]
                    n -= 1
                    deleted += 1
    return n, inserted, deleted


@njit_maybe
def first_admissible(points, counts, offsets, eps):
    """Index of the first non-overlapping configuration in a batch.

    ``points`` is a flat (sum(counts), d) array; configuration b occupies
    rows offsets[b] .. offsets[b] + counts[b].  Returns -1 if all overlap.
    """
    nb = counts.shape[0]
    d = points.shape[1]
    eps2 = eps * eps
    for b in range(nb):
        n = counts[b]
        o = offsets[b]
        ok = True
        for i in range(n):
            if not ok:
                break
            for j in range(i + 1, n):
                s = 0.0
                for k in range(d):
                    t = points[o + j, k] - points[o + i, k]
                    t -= math.floor(t + 0.5)
                    s += t * t
                if s <= eps2:
                    ok = False
                    break
        if ok:
            return b
    return -1


# ---------------------------------------------------------------------------
# small-system backward pseudo-trajectories
# ---------------------------------------------------------------------------


@njit_maybe
def _small_flow(
    x, v, n_act, eps, sigma_from, sigma_to, ev_sig, ev_type, ev_pq, ev_omega, ev_x, ev_v, n_ev
):
    """Hard-sphere flow of <= a few particles over a backward-time segment.

    ``x``/``v`` hold backward states (velocities already negated by the
    caller).  Collisions encountered here are recollisions; each is
    reflected and logged.  Returns (n_ev, status) with status 1 on log
    overflow, 2 on a contact consistency failure.
    """
    d = x.shape[1]
    cap = ev_sig.shape[0]
    r0 = np.empty(d)
    w = np.empty(d)
    disp = np.empty(d)
    omega = np.empty(d)
    shift = np.empty(d, dtype=np.int64)
    sig = sigma_from
    if eps <= 0.0:
        for i in range(n_act):
            for k in range(d):
                x[i, k] += v[i, k] * (sigma_to - sig)
                x[i, k] -= math.floor(x[i, k])
        return n_ev, 0
    while True:
        best = 1e300
        bi = -1
        bj = -1
        horizon = sigma_to - sig
        if horizon < 0.0:
            horizon = 0.0
        for i in range(n_act):
            for j in range(i + 1, n_act):
                for k in range(d):
                    t = x[j, k] - x[i, k]
                    t -= math.floor(t + 0.5)
                    r0[k] = t
                    w[k] = v[j, k] - v[i, k]
                tc, _ = earliest_contact(r0, w, eps, horizon, shift)
                if tc < best:
                    best = tc
                    bi = i
                    bj = j
        if bi < 0 or sig + best > sigma_to:
            dt = sigma_to - sig
            for i in range(n_act):
                for k in range(d):
                    x[i, k] += v[i, k] * dt
                    x[i, k] -= math.floor(x[i, k])
            return n_ev, 0
        dt = best
        for i in range(n_act):
            for k in range(d):
                x[i, k] += v[i, k] * dt
                x[i, k] -= math.floor(x[i, k])
        sig += best
        pair_min_image(x, bi, bj, disp)
        dist = 0.0
        for k in range(d):
            dist += disp[k] * disp[k]
        dist = math.sqrt(dist)
        if abs(dist - eps) > 1e-9:
            return n_ev, 2
        if n_ev >= cap:
            return n_ev, 1
        for k in range(d):
            omega[k] = -disp[k] / dist
        ev_sig[n_ev] = sig
        ev_type[n_ev] = PT_RECOLLISION
        ev_pq[n_ev, 0] = bi
        ev_pq[n_ev, 1] = bj
        for k in range(d):
            ev_omega[n_ev, k] = omega[k]
        for i in range(n_act):
            for k in range(d):
                ev_x[n_ev, i, k] = x[i, k]
                ev_v[n_ev, i, k] = v[i, k]  # backward velocity before reflect
        reflect_pair(v, bi, bj, omega)
        n_ev += 1


@njit_maybe
def pseudo_backward_kernel(
    d,
    eps,
    theta,
    x1,
    v1,
    m,
    parents,
    signs,
    times,
    omegas,
    vnew,
    x_out,
    v_out,
    ev_sig,
    ev_type,
    ev_pq,
    ev_omega,
    ev_x,
    ev_v,
):
    """Build one backward pseudo-trajectory with hard-sphere interactions.

    Starts from a single particle (x1, v1) at real time ``theta`` and adds
    particle 1+i at real time times[i] (strictly decreasing), offset
    eps*signs[i]*omegas[i] from its parent, with velocity vnew[i]; the
    scattering law is applied for signs[i] = +1.  ``eps`` may be zero (the
    limiting construction: creations at the parent's position, free
    transport, no exclusion).

    Returns (status, reason, n_ev).  status 0 = admissible trajectory built;
    status 1 = rejected (reason CREATE_OVERLAP or CREATE_HEMISPHERE);
    status 2 = internal consistency failure.  Terminal (time-0) states land
    in x_out / v_out (real velocities).  Creation and recollision events are
    logged with backward-time sigma = theta - t.
    """
    n_act = 1
    for k in range(d):
        x_out[0, k] = x1[k] - math.floor(x1[k])
        v_out[0, k] = -v1[k]  # backward velocity
    n_ev = 0
    sig = 0.0
    for i in range(m):
        sig_i = theta - times[i]
        n_ev, st = _small_flow(
            x_out, v_out, n_act, eps, sig, sig_i, ev_sig, ev_type, ev_pq, ev_omega, ev_x, ev_v, n_ev
        )
        if st != 0:
            return 2, 0, n_ev
        sig = sig_i
        par = parents[i]
        # place the new particle
        for k in range(d):
            x_out[n_act, k] = x_out[par, k] + eps * signs[i] * omegas[i, k]
            x_out[n_act, k] -= math.floor(x_out[n_act, k])
        # exclusion against everything already there (skip at eps = 0)
        if eps > 0.0:
            eps2 = eps * eps
            for q in range(n_act):
                if q == par:
                    continue
                s = 0.0
                for k in range(d):
                    t = x_out[q, k] - x_out[n_act, k]
                    t -= math.floor(t + 0.5)
                    s += t * t
                if s <= eps2:
                    return 1, CREATE_OVERLAP, n_ev
        # hemisphere condition against the parent velocity above t_i
        dot = 0.0
        for k in range(d):
            dot += omegas[i, k] * (vnew[i, k] - (-v_out[par, k]))
        if dot <= 0.0:
            return 1, CREATE_HEMISPHERE, n_ev
        for k in range(d):
            v_out[n_act, k] = -vnew[i, k]
        if n_ev >= ev_sig.shape[0]:
            return 2, 0, n_ev
        ev_sig[n_ev] = sig
        ev_type[n_ev] = PT_CREATION
        ev_pq[n_ev, 0] = par
        ev_pq[n_ev, 1] = n_act
        for k in range(d):
            ev_omega[n_ev, k] = omegas[i, k]
        n_act += 1
        for q in range(n_act):
            for k in range(d):
                ev_x[n_ev, q, k] = x_out[q, k]
                ev_v[n_ev, q, k] = v_out[q, k]
        n_ev += 1
        if signs[i] > 0:
            # scattering applied to real velocities = reflect on backward ones
            c = 0.0
            for k in range(d):
                c += (v_out[par, k] - v_out[n_act - 1, k]) * omegas[i, k]
            for k in range(d):
                v_out[par, k] -= c * omegas[i, k]
                v_out[n_act - 1, k] += c * omegas[i, k]
    n_ev, st = _small_flow(
        x_out, v_out, n_act, eps, sig, theta, ev_sig, ev_type, ev_pq, ev_omega, ev_x, ev_v, n_ev
    )
    if st != 0:
        return 2, 0, n_ev
    if n_ev >= ev_sig.shape[0]:
        return 2, 0, n_ev
    # terminal snapshot (real time 0), used to anchor free legs that reach
    # the bottom of the trajectory
    ev_sig[n_ev] = theta
    ev_type[n_ev] = PT_TERMINAL
    ev_pq[n_ev, 0] = -1
    ev_pq[n_ev, 1] = -1
    for k in range(d):
        ev_omega[n_ev, k] = 0.0
    for q in range(n_act):
        for k in range(d):
            ev_x[n_ev, q, k] = x_out[q, k]
            ev_v[n_ev, q, k] = v_out[q, k]
    n_ev += 1
    for i in range(n_act):
        for k in range(d):
            v_out[i, k] = -v_out[i, k]
    return 0, CREATE_OK, n_ev


@njit_maybe
def recollision_measure_kernel(
    d,
    eps,
    theta,
    m,
    parents,
    signs,
    want_type,
    vmax,
    use_dir,
    unit_dir,
    x1_buf,
    v1_buf,
    t_buf,
    om_buf,
    vn_buf,
    x_scr,
    v_scr,
    ev_sig,
    ev_type,
    ev_pq,
    ev_omega,
    ev_x,
    ev_v,
    zeta_out,
):
    """Monte Carlo sweep for the recollision measure of one tree shape.

    want_type: 0 = any first recollision, 1 = direct (zeta = 0),
    2 = periodic (zeta != 0).  vmax <= 0 disables the speed cut.  With
    use_dir = 1 all velocities are projected on ``unit_dir`` (parallel-flow
    control regime).  Returns (hits, admissible, built, classify_failures).
    """
    nsamp = x1_buf.shape[0]
    hits = 0
    admissible = 0
    built = 0
    cls_fail = 0
    for s in range(nsamp):
        # optional parallel-velocity projection
        if use_dir == 1:
            proj = 0.0
            for k in range(d):
                proj += v1_buf[s, k] * unit_dir[k]
            for k in range(d):
                v1_buf[s, k] = proj * unit_dir[k]
            for i in range(m):
                proj = 0.0
                for k in range(d):
                    proj += vn_buf[s, i, k] * unit_dir[k]
                for k in range(d):
                    vn_buf[s, i, k] = proj * unit_dir[k]
        if vmax > 0.0:
            over = False
            sp = 0.0
            for k in range(d):
                sp += v1_buf[s, k] * v1_buf[s, k]
            if sp > vmax * vmax:
                over = True
            for i in range(m):
                sp = 0.0
                for k in range(d):
                    sp += vn_buf[s, i, k] * vn_buf[s, i, k]
                if sp > vmax * vmax:
                    over = True
            if over:
                continue
        status, _, n_ev = pseudo_backward_kernel(
            d,
            eps,
            theta,
            x1_buf[s],
            v1_buf[s],
            m,
            parents,
            signs,
            t_buf[s],
            om_buf[s],
            vn_buf[s],
            x_scr,
            v_scr,
            ev_sig,
            ev_type,
            ev_pq,
            ev_omega,
            ev_x,
            ev_v,
        )
        if status != 0:
            continue
        admissible += 1
        built += 1
        # first recollision in construction order, if any
        rec_idx = -1
        for e in range(n_ev):
            if ev_type[e] == PT_RECOLLISION:
                rec_idx = e
                break
        if rec_idx < 0:
            continue
        if want_type == 0:
            hits += 1
            continue
        zfail = classify_recollision(
            d, eps, rec_idx, n_ev, ev_sig, ev_type, ev_pq, ev_omega, ev_x, ev_v, zeta_out
        )
        if zfail != 0:
            cls_fail += 1
            continue
        iszero = True
        for k in range(d):
            if zeta_out[k] != 0:
                iszero = False
        if want_type == 1 and iszero:
            hits += 1
        elif want_type == 2 and not iszero:
            hits += 1
    return hits, admissible, built, cls_fail


@njit_maybe
def classify_recollision(
    d, eps, rec_idx, n_ev, ev_sig, ev_type, ev_pq, ev_omega, ev_x, ev_v, zeta_out
):
    """Lattice vector of a logged recollision (0 = direct, else periodic).

    The parent deflection is the pair's latest deflection at smaller real
    time, i.e. the next logged event involving either participant at larger
    backward time (events between them leave the pair in free flight).  The
    incoming forward leg has the pair's post-reflect backward velocities, so
    zeta = D_j + v_rel (tau_rec - tau_j) - eps*omega is an exact integer
    vector.  Returns 0 on success.
    """
    p = ev_pq[rec_idx, 0]
    q = ev_pq[rec_idx, 1]
    sig_rec = ev_sig[rec_idx]
    # post-reflect backward velocities at the recollision
    # (logged ev_v is pre-reflect; reconstruct the reflected pair values)
    c = 0.0
    for k in range(d):
        c += (ev_v[rec_idx, p, k] - ev_v[rec_idx, q, k]) * ev_omega[rec_idx, k]
    # parent deflection: next event involving p or q at larger backward
    # time (smaller real time); the terminal snapshot involves everyone
    j_idx = -1
    for e in range(rec_idx + 1, n_ev):
        if (
            ev_type[e] == PT_TERMINAL
            or ev_pq[e, 0] == p
            or ev_pq[e, 1] == p
            or ev_pq[e, 0] == q
            or ev_pq[e, 1] == q
        ):
            j_idx = e
            break
    if j_idx < 0:
        return 1
    for k in range(d):
        # backward velocity of p, q on the leg below the recollision
        vp = ev_v[rec_idx, p, k] - c * ev_omega[rec_idx, k]
        vq = ev_v[rec_idx, q, k] + c * ev_omega[rec_idx, k]
        wrel = vq - vp  # backward relative velocity of the leg
        dsig = ev_sig[j_idx] - sig_rec
        t = ev_x[j_idx, q, k] - ev_x[j_idx, p, k]
        t -= math.floor(t + 0.5)
        # walk the leg from the parent deflection up to the recollision
        val = t - wrel * dsig + eps * ev_omega[rec_idx, k]
        zeta_out[k] = int(round(val))
        if abs(val - zeta_out[k]) > 1e-6:
            return 1
    return 0


# ---------------------------------------------------------------------------
# limiting-hierarchy tree Monte Carlo
# ---------------------------------------------------------------------------


@njit_maybe
def eval_catalog(code, x, v, d):
    """Closed-form catalog test functions, by integer code.

    1: v_1            2: v_1 v_2          3: v_1 (|v|^2 - (d+2))
    4: cos(2 pi x_1) v_1                  5: |v|^2 - d
    6: constant 1
    """
    if code == 1:
        return v[0]
    if code == 2:
        return v[0] * v[1]
    if code == 3:
        s = 0.0
        for k in range(d):
            s += v[k] * v[k]
        return v[0] * (s - (d + 2.0))
    if code == 4:
        return math.cos(2.0 * math.pi * x[0]) * v[0]
    if code == 5:
        s = 0.0
        for k in range(d):
            s += v[k] * v[k]
        return s - d
    return 1.0


@njit_maybe
def tree_mc_kernel(
    d,
    theta,
    m_max,
    tree_parents,
    tree_signs,
    tree_m,
    g0_code,
    h_code,
    x1_buf,
    v1_buf,
    t_buf,
    om_buf,
    vn_buf,
    sphere_area,
    out_contrib,
):
    """Limiting-hierarchy collision-tree expansion by Monte Carlo.

    For each sample the complete set of signed trees (all m <= m_max) is
    evaluated on shared draws: creation times sorted descending on (0, theta),
    directions uniform on the sphere, velocities Maxwellian.  Creations
    happen at the parent's position (zero offset) with free backward
    transport; scattering applies on + signs.  The per-sample contribution

        h(z_1) * sum_m (theta^m / m!) |S|^m
                 sum_trees prod_i s_i (w_i . omega_i)_+ * sum_j g0(z_j(0))

    is written to ``out_contrib``; averaging over samples estimates
    <h, g(theta)>_M truncated at m_max.
    """
    nsamp = x1_buf.shape[0]
    ntrees = tree_m.shape[0]
    nmax = m_max + 1
    xs = np.empty((nmax, d))
    vs = np.empty((nmax, d))
    xq = np.empty(d)
    tsort = np.empty(max(m_max, 1))
    for s in range(nsamp):
        # per-sample sorted creation times (descending), shared across trees
        mfac = 1.0
        total = 0.0
        for m in range(m_max + 1):
            if m > 0:
                for i in range(m):
                    tsort[i] = t_buf[s, i]
                # insertion sort, descending
                for i in range(1, m):
                    key = tsort[i]
                    jj = i - 1
                    while jj >= 0 and tsort[jj] < key:
                        tsort[jj + 1] = tsort[jj]
                        jj -= 1
                    tsort[jj + 1] = key
                mfac = mfac * (theta * sphere_area) / m
            level = 0.0
            for tr in range(ntrees):
                if tree_m[tr] != m:
                    continue
                # build the m-level Boltzmann pseudo-trajectory
                for k in range(d):
                    xs[0, k] = x1_buf[s, k]
                    vs[0, k] = v1_buf[s, k]
                tcur = theta
                weight = 1.0
                n_act = 1
                ok = True
                for i in range(m):
                    ti = tsort[i]
                    dt = tcur - ti
                    for q in range(n_act):
                        for k in range(d):
                            xs[q, k] -= vs[q, k] * dt
                    tcur = ti
                    par = tree_parents[tr, i]
                    wdot = 0.0
                    for k in range(d):
                        wdot += (vn_buf[s, i, k] - vs[par, k]) * om_buf[s, i, k]
                    if wdot <= 0.0:
                        ok = False
                        break
                    weight *= tree_signs[tr, i] * wdot
                    for k in range(d):
                        xs[n_act, k] = xs[par, k]
                        vs[n_act, k] = vn_buf[s, i, k]
                    if tree_signs[tr, i] > 0:
                        c = 0.0
                        for k in range(d):
                            c += (vs[par, k] - vs[n_act, k]) * om_buf[s, i, k]
                        for k in range(d):
                            vs[par, k] -= c * om_buf[s, i, k]
                            vs[n_act, k] += c * om_buf[s, i, k]
                    n_act += 1
                if not ok:
                    continue
                dt = tcur
                gsum = 0.0
                for q in range(n_act):
                    # transport to time 0 and wrap
                    for k in range(d):
                        xq[k] = xs[q, k] - vs[q, k] * dt
                        xq[k] -= math.floor(xq[k])
                    gsum += eval_catalog(g0_code, xq, vs[q], d)
                level += weight * gsum
            total += mfac * level
        hval = eval_catalog(h_code, x1_buf[s], v1_buf[s], d)
        out_contrib[s] = hval * total
