"""Event-driven hard-sphere dynamics on the unit torus.

The flow alternates free transport with exact pairwise elastic collisions.
Upcoming contacts are tracked per particle (earliest contact time and
partner); a particle with no contact inside its prediction window carries a
refresh marker instead, so nothing is ever missed at window boundaries.
Between executed events only the colliding pair and the rows that pointed
at it are re-predicted.

Every executed collision is appended to a :class:`TrajectoryLog`, which is
sufficient to replay the whole trajectory (the flow between collisions is
free transport), to extract intermediate snapshots, and to drive the
time-reversal diagnostic.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels

_STATUS_NAMES = {
    _kernels.EVOLVE_DONE: "done",
    _kernels.EVOLVE_LOG_FULL: "log_full",
    _kernels.EVOLVE_OVERLAP_FAULT: "overlap_fault",
    _kernels.EVOLVE_EVENT_STORM: "event_storm",
}


class DynamicsFault(RuntimeError):
    """The event loop detected an inconsistent state (overlap at a contact,
    or an unreasonable event count)."""


@dataclass
class GasState:
    """Positions, velocities, diameter, and clock of a hard-sphere system."""

    x: np.ndarray
    v: np.ndarray
    eps: float
    t: float = 0.0

    def __post_init__(self):
        self.x = np.ascontiguousarray(self.x, dtype=float)
        self.v = np.ascontiguousarray(self.v, dtype=float)
        if self.x.ndim != 2 or self.x.shape != self.v.shape:
            raise ValueError("x and v must be matching (n, d) arrays")
        if not 0.0 <= self.eps < 0.5:
            raise ValueError("diameter must lie in [0, 0.5)")
        self.x = self.x - np.floor(self.x)

    @property
    def n(self):
        return self.x.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    def copy(self):
        return GasState(self.x.copy(), self.v.copy(), self.eps, self.t)

    def momentum(self):
        return self.v.sum(axis=0)

    def energy(self):
        return 0.5 * float((self.v * self.v).sum())


def min_pair_gap(state):
    """Smallest minimal-image center distance (inf for n < 2)."""
    g = _kernels.min_pair_distance(state.x, state.eps)
    return np.inf if g >= 1e299 else float(g)


def assert_no_overlap(state, slack=1e-12):
    gap = min_pair_gap(state)
    if gap < state.eps * (1.0 - slack):
        raise DynamicsFault(f"hard-core exclusion violated: gap {gap} < {state.eps}")


@dataclass(frozen=True)
class CollisionRecord:
    """One executed collision: time, ordered pair, normal, velocity jump."""

    time: float
    pair: tuple
    omega: np.ndarray
    pre_velocities: tuple
    post_velocities: tuple


@dataclass
class TrajectoryLog:
    """Record of every collision executed over one evolve call.

    Events are stored columnwise (times, pairs, normals, velocity rows
    before and after); ``record(e)`` materializes a single
    :class:`CollisionRecord`.  Together with the stored initial state the
    log determines the whole trajectory, since the motion between events
    is free transport.
    """

    initial: "GasState"
    t0: float
    t1: float
    times: np.ndarray
    pairs: np.ndarray
    omegas: np.ndarray
    v_pre: np.ndarray
    v_post: np.ndarray
    grazing_skips: int = 0
    status: str = "done"

    def __len__(self):
        return len(self.times)

    def record(self, e):
        d = self.initial.d
        return CollisionRecord(
            time=float(self.times[e]),
            pair=(int(self.pairs[e, 0]), int(self.pairs[e, 1])),
            omega=self.omegas[e].copy(),
            pre_velocities=(self.v_pre[e, :d].copy(), self.v_pre[e, d:].copy()),
            post_velocities=(self.v_post[e, :d].copy(), self.v_post[e, d:].copy()),
        )

    def __iter__(self):
        return (self.record(e) for e in range(len(self)))

    def collisions_of(self, i):
        """Indices of logged events involving particle i."""
        return np.nonzero((self.pairs[:, 0] == i) | (self.pairs[:, 1] == i))[0]


def evolve(state, duration, h_row=0.3, log_capacity=4096, max_events=10_000_000):
    """Run the flow for ``duration`` and return (final state, log).

    ``h_row`` is the per-particle prediction window; any value works, it
    only trades prediction cost against refresh frequency.  The log grows
    as needed.  Raises :class:`DynamicsFault` on an exclusion violation at
    a contact or when ``max_events`` is exceeded.
    """
    if duration < 0:
        raise ValueError("duration must be nonnegative")
    if state.eps > 0.0:
        assert_no_overlap(state)
    out = state.copy()
    n, d = out.x.shape
    t_end = state.t + duration

    next_time = np.empty(n, dtype=float)
    partner = np.empty(n, dtype=np.int64)
    grazing = _kernels.init_rows(out.x, out.v, out.eps, state.t, h_row, next_time, partner)

    cap = int(log_capacity)
    log_t = np.empty(cap)
    log_pair = np.empty((cap, 2), dtype=np.int64)
    log_omega = np.empty((cap, d))
    log_vpre = np.empty((cap, 2 * d))
    log_vpost = np.empty((cap, 2 * d))

    n_logged = 0
    events_done = 0
    t_now = state.t
    while True:
        status, t_now, n_logged, events_done, g = _kernels.evolve_kernel(
            out.x,
            out.v,
            out.eps,
            t_now,
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
            max_events,
            events_done,
        )
        grazing += g
        if status == _kernels.EVOLVE_LOG_FULL:
            cap *= 2
            log_t = np.resize(log_t, cap)
            log_pair = np.resize(log_pair, (cap, 2))
            log_omega = np.resize(log_omega, (cap, d))
            log_vpre = np.resize(log_vpre, (cap, 2 * d))
            log_vpost = np.resize(log_vpost, (cap, 2 * d))
            continue
        break

    if status == _kernels.EVOLVE_OVERLAP_FAULT:
        raise DynamicsFault(
            f"contact executed away from the exclusion radius at t={t_now}"
        )
    if status == _kernels.EVOLVE_EVENT_STORM:
        raise DynamicsFault(f"event budget exhausted: {events_done} collisions")

    out.t = t_end
    log = TrajectoryLog(
        initial=state.copy(),
        t0=state.t,
        t1=t_end,
        times=log_t[:n_logged].copy(),
        pairs=log_pair[:n_logged].copy(),
        omegas=log_omega[:n_logged].copy(),
        v_pre=log_vpre[:n_logged].copy(),
        v_post=log_vpost[:n_logged].copy(),
        grazing_skips=int(grazing),
        status=_STATUS_NAMES[status],
    )
    return out, log


def replay_at(log, t):
    """State at an intermediate time, replayed from the log.

    Replays free transport plus the logged reflections, using the same
    advance-and-wrap arithmetic as the event loop, so the reconstruction
    matches the original trajectory to machine precision.
    """
    if not (log.t0 <= t <= log.t1):
        raise ValueError(f"time {t} outside the logged window [{log.t0}, {log.t1}]")
    st = log.initial.copy()
    d = st.d
    for e in range(len(log)):
        te = log.times[e]
        if te > t:
            break
        dt = te - st.t
        st.x += st.v * dt
        st.x -= np.floor(st.x)
        st.t = te
        a, b = log.pairs[e]
        st.v[a] = log.v_post[e, :d]
        st.v[b] = log.v_post[e, d:]
    st.x += st.v * (t - st.t)
    st.x -= np.floor(st.x)
    st.t = t
    return st


def replay_state(log):
    """Final state implied by a log (replay to its end time)."""
    return replay_at(log, log.t1)


def snapshot_at(state, times, **evolve_kw):
    """States along one evolution at the requested increasing times.

    Equivalent to evolving from ``state`` to each time separately, but the
    trajectory is computed once and replayed from its event log.
    """
    times = [float(t) for t in times]
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError("times must be strictly increasing")
    if not times:
        return []
    if times[0] < state.t:
        raise ValueError("times must not precede the state's clock")
    _, log = evolve(state, times[-1] - state.t, **evolve_kw)
    return [replay_at(log, t) for t in times]


def reverse_check(state, duration, **evolve_kw):
    """Forward run, velocity flip, backward run; max coordinate deviation.

    The returned scalar covers positions (shortest torus difference) and
    velocities against the initial data.  It grows with the number of
    collisions and quantifies the arithmetic reversibility of the event
    loop.
    """
    fwd, _ = evolve(state, duration, **evolve_kw)
    flipped = fwd.copy()
    flipped.v = -flipped.v
    back, _ = evolve(flipped, duration, **evolve_kw)
    if state.n == 0:
        return 0.0
    dx = state.x - back.x
    dx -= np.floor(dx + 0.5)
    pos_err = float(np.max(np.abs(dx)))
    vel_err = float(np.max(np.abs(state.v + back.v)))
    return max(pos_err, vel_err)
