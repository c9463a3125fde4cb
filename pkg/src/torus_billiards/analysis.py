"""Phase-space diagnostics: bounce statistics, recurrence residuals,
angular-momentum rings, Monte Carlo bad-set measure, finite-difference
Jacobians and the specular basis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import grazing
from .domain import ToroidalDomain
from .engine import (BilliardEngine, PhaseState, Trajectory, TrajectoryStatus,
                     angular_momentum)
from .errors import DegenerateBasisError, NonSmoothPointError

BADSET_CHUNK = 1024


# -- cross-section frame and rings ----------------------------------------


def cross_section_frame(x, v):
    """(v_x, v_phi, v_y): radial, azimuthal and vertical components of v
    in the meridian cross-section through x."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    rho = np.hypot(x[..., 0], x[..., 1])
    rho = np.where(rho == 0, 1.0, rho)
    cx, sx = x[..., 0] / rho, x[..., 1] / rho
    v_x = v[..., 0] * cx + v[..., 1] * sx
    v_phi = -v[..., 0] * sx + v[..., 1] * cx
    v_y = v[..., 2]
    return v_x, v_phi, v_y


@dataclass
class RingSpec:
    """Open neighborhood of a distinguished direction family on the sphere.

    kinds: 'angular-momentum' (needs tau_ref), 'perp', 'azimuth-aligned',
    'symmetric'.
    """

    kind: str
    epsilon: float
    tau_ref: float = None

    KINDS = ("angular-momentum", "perp", "azimuth-aligned", "symmetric")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown ring kind {self.kind!r}")
        if self.epsilon <= 0:
            raise ValueError("ring half-width must be positive")
        if self.kind == "angular-momentum" and self.tau_ref is None:
            raise ValueError("angular-momentum ring needs tau_ref")


def ring_reference_momentum(domain: ToroidalDomain, tau_ref):
    """omega of the inflection directions at tau_ref (phi-independent)."""
    # validates that the inflection directions exist at tau_ref
    grazing.inflection_directions(domain, tau_ref, 0.0)
    return grazing.inflection_momentum(domain, tau_ref)


def ring_membership(domain: ToroidalDomain, x, v, specs):
    """Membership flags of unit direction(s) v at x for each RingSpec.

    v may be a single 3-vector or an (n, 3) batch; flags are booleans or
    boolean arrays accordingly.
    """
    v = np.asarray(v, dtype=float)
    v_x, v_phi, v_y = cross_section_frame(x, v)
    flags = []
    for spec in specs:
        if spec.kind == "angular-momentum":
            ref = ring_reference_momentum(domain, spec.tau_ref)
            m = np.abs(angular_momentum(x, v) - ref) < spec.epsilon
        elif spec.kind == "perp":
            m = np.abs(v_phi) < spec.epsilon
        elif spec.kind == "azimuth-aligned":
            m = np.abs(v_phi) > 1.0 - spec.epsilon
        else:  # symmetric
            m = np.abs(np.abs(v_x) - np.abs(v_y)) < spec.epsilon
        flags.append(bool(m) if m.ndim == 0 else m)
    return flags


# -- bounce counting ------------------------------------------------------


def bounce_count(engine: BilliardEngine, x, v, L, max_bounces=None):
    """(N, capped): number of backward bounces within travel length L."""
    speed = float(np.linalg.norm(v))
    # small relative margin so a bounce landing exactly at length L counts
    margin = L * (1.0 + 1e-12) + 1e-12
    traj = engine.backward_cycles(PhaseState(x, v, 0.0), margin,
                                  max_bounces=max_bounces)
    t0 = traj.origin.t
    n = sum(1 for ev in traj.events
            if abs(ev.t - t0) * speed <= L * (1.0 + 1e-12))
    capped = traj.status is TrajectoryStatus.MAX_BOUNCES_REACHED
    return n, capped


# -- recurrence residuals -------------------------------------------------


def recurrence_residuals(domain: ToroidalDomain, traj: Trajectory,
                         inner_only=True, gate=0.1, edge_margin=0.05,
                         z_h_band=1e-3):
    """Per-step records of the bounce-parameter recurrences.

    For consecutive bounce parameter steps (d_tau_i, d_phi_i):
    r1 = |d_phi|/|d_tau| and
    r2 = |d_tau_{i+1} - d_tau_i| / (d_tau_i^2 + d_tau_{i+1}^2
                                    + d_phi_i^2 + d_phi_{i+1}^2).
    Steps violating the smallness gate (or leaving the trimmed inner region
    when inner_only) are filtered out.
    """
    evs = traj.events
    if len(evs) < 3:
        return []
    per = domain.profile.period_length
    half = per / 2.0
    taus = np.array([ev.tau for ev in evs])
    phis = np.array([ev.phi for ev in evs])
    d_tau = (np.diff(taus) + half) % per - half
    d_phi = np.diff(phis)
    markers = domain.markers

    def admissible(i):
        if abs(d_tau[i]) >= gate or abs(d_phi[i]) >= gate:
            return False
        if inner_only:
            for tau in (taus[i], taus[i + 1]):
                if not bool(markers.in_inner(domain.profile, tau, edge_margin)):
                    return False
                if markers.dist_to_z_h(domain.profile, tau) <= z_h_band:
                    return False
        return True

    records = []
    for i in range(len(d_tau) - 1):
        if not (admissible(i) and admissible(i + 1)):
            continue
        denom = (d_tau[i] ** 2 + d_tau[i + 1] ** 2
                 + d_phi[i] ** 2 + d_phi[i + 1] ** 2)
        records.append({
            "i": i,
            "d_tau": float(d_tau[i]),
            "d_phi": float(d_phi[i]),
            "r1": float(abs(d_phi[i]) / abs(d_tau[i])) if d_tau[i] != 0 else np.inf,
            "r2": float(abs(d_tau[i + 1] - d_tau[i]) / denom) if denom > 0 else np.inf,
        })
    return records


# -- bad-set measure ------------------------------------------------------


@dataclass
class BadSetReport:
    x: np.ndarray
    phi: float
    epsilon_graze: float
    L: float
    n_samples: int
    fraction: float
    ci95: float
    breakdown: dict = field(default_factory=dict)


def _sample_directions(seed, chunk_index, n, speed_band=None):
    """Deterministic per-chunk direction (and speed) samples."""
    rng = np.random.default_rng([int(seed), int(chunk_index)])
    g = rng.standard_normal((n, 3))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    if speed_band is not None:
        lo, hi = speed_band
        g *= rng.uniform(lo, hi, size=(n, 1))
    return g


def _trace_min_graze(domain: ToroidalDomain, x0, dirs, L,
                     max_bounces=500, n_bisect=60):
    """Vectorized backward tracer: minimum |n.v_hat| over bounces per sample.

    Returns (min_nd, n_bounces, stopped_inflection) arrays.  Near-tangential
    impacts whose exterior excursion is shorter than the march step are the
    very statistic being measured, so intervals that approach the boundary
    without crossing are subdivided to catch them.
    """
    n = len(dirs)
    pos = np.broadcast_to(np.asarray(x0, dtype=float), (n, 3)).copy()
    vhat = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    w = -vhat  # backward rays travel against the velocity
    remaining = np.full(n, float(L))
    min_nd = np.full(n, np.inf)
    bounces = np.zeros(n, dtype=int)
    stopped = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)
    step = 0.1 / domain.max_curvature
    markers = domain.markers
    # any exterior blip between grid points keeps xi above -blip_tol at the
    # surrounding grid points (sagitta bound with safety factor)
    blip_tol = 4.0 * domain.max_curvature * step ** 2
    n_fine = 32

    while np.any(active):
        idx = np.nonzero(active)[0]
        s = np.minimum(step, remaining[idx])
        trial = pos[idx] + s[:, None] * w[idx]
        xi = domain.xi(trial)
        crossed = xi > 0.0
        shallow = (~crossed) & (xi > -blip_tol)
        if np.any(shallow):
            # subdivide suspect intervals to catch sub-step exterior blips
            si = np.nonzero(shallow)[0]
            fracs = np.linspace(0.0, 1.0, n_fine + 1)[1:-1]
            sub = (pos[idx[si]][:, None, :]
                   + (s[si, None] * fracs[None, :])[:, :, None] * w[idx[si]][:, None, :])
            sub_xi = domain.xi(sub.reshape(-1, 3)).reshape(len(si), n_fine - 1)
            hit = sub_xi > 0.0
            has_hit = hit.any(axis=1)
            if np.any(has_hit):
                first = np.argmax(hit, axis=1)
                hi_frac = fracs[first]
                lo_frac = np.where(first > 0, fracs[np.maximum(first - 1, 0)], 0.0)
                crossed = crossed.copy()
                crossed[si[has_hit]] = True
                blip_lo = {int(si[q]): (lo_frac[q] * s[si[q]],
                                        hi_frac[q] * s[si[q]])
                           for q in range(len(si)) if has_hit[q]}
            else:
                blip_lo = {}
        else:
            blip_lo = {}
        ok = ~crossed
        ii = idx[ok]
        pos[ii] = trial[ok]
        remaining[ii] -= s[ok]
        done = ii[remaining[ii] <= 0.0]
        active[done] = False
        ci = idx[crossed]
        if ci.size:
            local = np.nonzero(crossed)[0]
            lo = np.zeros(ci.size)
            hi = s[crossed].copy()
            for q, lq in enumerate(local):
                if int(lq) in blip_lo:
                    lo[q], hi[q] = blip_lo[int(lq)]
            base = pos[ci]
            wv = w[ci]
            for _ in range(n_bisect):
                mid = 0.5 * (lo + hi)
                inside = domain.xi(base + mid[:, None] * wv) <= 0.0
                lo = np.where(inside, mid, lo)
                hi = np.where(inside, hi, mid)
            sb = 0.5 * (lo + hi)
            xb = base + sb[:, None] * wv
            nrm = domain.grad_xi(xb)
            nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
            nd = np.abs(np.einsum("ij,ij->i", nrm, wv))
            min_nd[ci] = np.minimum(min_nd[ci], nd)
            bounces[ci] += 1
            remaining[ci] -= sb
            # inflection-stop screen: tangential impact in the inner region
            tangential = nd < 1e-4
            if np.any(tangential):
                rho = np.hypot(xb[:, 0], xb[:, 1])
                taus = domain.nearest_parameter(rho, xb[:, 2])
                inner = markers.in_inner(domain.profile, taus)
                stop = tangential & np.asarray(inner)
                stopped[ci[stop]] = True
                active[ci[stop]] = False
            wr = wv - 2.0 * np.einsum("ij,ij->i", nrm, wv)[:, None] * nrm
            # nudge off the boundary so the next march step starts inside
            pos[ci] = xb + 1e-9 * wr
            w[ci] = wr
            hit_cap = ci[bounces[ci] >= max_bounces]
            active[hit_cap] = False
            spent = ci[remaining[ci] <= 0.0]
            active[spent] = False
    return min_nd, bounces, stopped


def badset_measure(engine: BilliardEngine, x, phi, eps_graze, L, n_samples,
                   seed, speed_band=None, ring_specs=None) -> BadSetReport:
    """Monte Carlo estimate of the bad-direction measure at base point x.

    Uniform directions on the sphere; a sample is bad when its backward run
    of length L comes within eps_graze of grazing, stops at an inflection
    tangency, or (when ring_specs given) its direction falls in a ring.
    Deterministic given the seed, independent of chunking.
    """
    x = np.asarray(x, dtype=float)
    n_samples = int(n_samples)
    n_bad = 0
    breakdown = {"near_grazing": 0, "ring_excluded": 0,
                 "stopped_at_inflection": 0, "max_bounces": 0}
    dom = engine.domain
    for c0 in range(0, n_samples, BADSET_CHUNK):
        m = min(BADSET_CHUNK, n_samples - c0)
        dirs = _sample_directions(seed, c0 // BADSET_CHUNK, m, speed_band)
        min_nd, bounces, stopped = _trace_min_graze(dom, x, dirs, L)
        grz = min_nd < eps_graze
        capped = bounces >= 500
        ring = np.zeros(m, dtype=bool)
        if ring_specs:
            units = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
            for flag in ring_membership(dom, x, units, ring_specs):
                ring |= flag
        bad = grz | stopped | capped | ring
        n_bad += int(bad.sum())
        breakdown["near_grazing"] += int(grz.sum())
        breakdown["ring_excluded"] += int(ring.sum())
        breakdown["stopped_at_inflection"] += int(stopped.sum())
        breakdown["max_bounces"] += int(capped.sum())
    frac = n_bad / n_samples
    ci95 = 1.96 * np.sqrt(max(frac * (1.0 - frac), 1.0 / n_samples) / n_samples)
    return BadSetReport(x=x, phi=float(phi), epsilon_graze=float(eps_graze),
                        L=float(L), n_samples=n_samples, fraction=frac,
                        ci95=ci95, breakdown=breakdown)


def badset_scan(engine: BilliardEngine, x, phi, deltas, L, n_samples, seed,
                speed_band=None, ring_kinds=(), tau_ref=None):
    """Bad-set fractions at several thresholds delta from one sample stream.

    A sample is bad at threshold delta when its trajectory comes within
    delta of grazing at a bounce, stops at an inflection tangency, or its
    direction falls in any of the requested ring exclusions with half-width
    delta (``ring_kinds`` from RingSpec.KINDS; 'angular-momentum' needs
    ``tau_ref``).
    """
    x = np.asarray(x, dtype=float)
    n_samples = int(n_samples)
    dom = engine.domain
    mins, stops, unit_list = [], [], []
    for c0 in range(0, n_samples, BADSET_CHUNK):
        m = min(BADSET_CHUNK, n_samples - c0)
        dirs = _sample_directions(seed, c0 // BADSET_CHUNK, m, speed_band)
        min_nd, _, stopped = _trace_min_graze(dom, x, dirs, L)
        mins.append(min_nd)
        stops.append(stopped)
        unit_list.append(dirs / np.linalg.norm(dirs, axis=1, keepdims=True))
    min_nd = np.concatenate(mins)
    stopped = np.concatenate(stops)
    units = np.concatenate(unit_list)
    rows = []
    for d in deltas:
        bad = (min_nd < d) | stopped
        if ring_kinds:
            specs = [RingSpec(kind=k, epsilon=float(d),
                              tau_ref=tau_ref if k == "angular-momentum" else None)
                     for k in ring_kinds]
            for flag in ring_membership(dom, x, units, specs):
                bad |= flag
        frac = float(np.count_nonzero(bad)) / n_samples
        ci = 1.96 * np.sqrt(max(frac * (1 - frac), 1.0 / n_samples) / n_samples)
        rows.append({"delta": float(d), "fraction": frac, "ci95": ci,
                     "near_grazing": int(np.count_nonzero(min_nd < d))})
    return rows


# -- Jacobians ------------------------------------------------------------


@dataclass
class JacobianResult:
    det: float
    rel_spread: float


def _eval_X(engine: BilliardEngine, t, x, v, s):
    """X(s; t, x, v) via a backward run over the time horizon t - s."""
    speed = float(np.linalg.norm(v))
    # tiny horizon slack so rounding cannot leave the end time short of s
    length = (t - s) * speed * (1.0 + 1e-12) + 1e-12
    traj = engine.backward_cycles(PhaseState(x, v, t), length)
    s_eval = max(s, traj.end_state.t) if t > s else s
    X, _ = engine.trajectory_eval(traj, s_eval)
    return X, len(traj.events)


def jacobian_det(engine: BilliardEngine, t, x, v, s, h=1e-5) -> JacobianResult:
    """det dX(s;t,x,v)/dv by central differences with a Richardson check.

    Differentiability is guarded by requiring every perturbed trajectory to
    have the same bounce count as the base one; s must stay clear of the
    base trajectory's bounce times.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if s >= t:
        raise ValueError("evaluation time must precede the origin time")
    speed = float(np.linalg.norm(v))
    base = engine.backward_cycles(PhaseState(x, v, t), (t - s) * speed)
    delta_t = 10.0 * h * speed
    for ev in base.events:
        if abs(ev.t - s) < delta_t:
            raise ValueError(
                f"evaluation time {s} within {delta_t} of bounce time {ev.t}")
    n_base = len(base.events)

    def det_at(step):
        cols = []
        for i in range(3):
            dv = np.zeros(3)
            dv[i] = step
            xp, np_ = _eval_X(engine, t, x, v + dv, s)
            xm, nm_ = _eval_X(engine, t, x, v - dv, s)
            if np_ != n_base or nm_ != n_base:
                raise NonSmoothPointError(
                    f"perturbed bounce counts ({np_}, {nm_}) differ from base "
                    f"{n_base}; dX/dv undefined here")
            cols.append((xp - xm) / (2.0 * step))
        return float(np.linalg.det(np.stack(cols, axis=1)))

    d1 = det_at(h)
    d2 = det_at(h / 2.0)
    rel = abs(d1 - d2) / max(abs(d2), 1e-300)
    return JacobianResult(det=d2, rel_spread=rel)


# -- specular basis -------------------------------------------------------


def specular_basis(domain: ToroidalDomain, x_k, v_k):
    """Orthonormal triple (e0, e1, e2) with e0 = v_hat and e1 normal to the
    plane of v and the azimuthal tangent at x_k."""
    x_k = np.asarray(x_k, dtype=float)
    v_k = np.asarray(v_k, dtype=float)
    e0 = v_k / np.linalg.norm(v_k)
    phi = np.arctan2(x_k[1], x_k[0])
    az = domain.phi_hat(phi)
    c = np.cross(e0, az)
    nc = np.linalg.norm(c)
    if nc < 1e-12:
        raise DegenerateBasisError(
            "velocity parallel to the azimuthal tangent; basis undefined")
    e1 = c / nc
    e2 = np.cross(e0, e1)
    return e0, e1, e2
