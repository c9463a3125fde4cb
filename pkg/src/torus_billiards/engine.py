"""Specular billiard cycles in a toroidal domain.

Backward cycles iterate (t, x, v) -> (t - t_b, x - t_b v, R v) where t_b is
the smallest s > 0 with xi(x - s v) = 0 (sup of the empty set is 0, so a
boundary state whose backward ray exits immediately has t_b = 0).  Forward
cycles are the time reverse.  Tangential impacts are routed to the grazing
classifier; trajectories stop on blocking inflection phases and freeze on
convex grazing.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import grazing
from .domain import ToroidalDomain, PointClass, rotation_z
from .errors import (GrazingAmbiguousError, NumericsError,
                     TrajectoryStoppedError)

TWO_PI = 2.0 * np.pi
XI_ROOT_TOL = 1e-12
DEFAULT_MAX_BOUNCES = 10_000
DEFAULT_GRAZE_THRESHOLD = 1e-7
STEP_FRACTION = 0.1


class TrajectoryStatus(enum.Enum):
    COMPLETED = "completed"
    STOPPED_AT_INFLECTION_MINUS = "stopped-at-inflection-minus"
    STOPPED_AT_INFLECTION_PLUS = "stopped-at-inflection-plus"
    STUCK_CONVEX_GRAZING = "stuck-convex-grazing"
    MAX_BOUNCES_REACHED = "max-bounces-reached"
    GRAZING_AMBIGUOUS = "grazing-ambiguous"


@dataclass
class PhaseState:
    """Point of phase space: position in the closed domain, velocity, time."""

    x: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.v = np.asarray(self.v, dtype=float)
        self.t = float(self.t)
        if np.linalg.norm(self.v) == 0.0:
            raise ValueError("velocity must be nonzero")


@dataclass
class BounceEvent:
    k: int
    t: float
    x: np.ndarray
    tau: float
    phi: float              # unwrapped azimuth
    v_in: np.ndarray
    v_out: np.ndarray
    normal_dot: float       # n(x).v_in / |v_in|
    graze: grazing.GrazingClass = grazing.GrazingClass.NON_GRAZING


@dataclass
class Trajectory:
    direction: int          # +1 forward, -1 backward
    origin: PhaseState
    phi0: float
    events: list = field(default_factory=list)
    end_state: PhaseState = None
    phi_end: float = 0.0
    total_length: float = 0.0
    winding: float = 0.0
    status: TrajectoryStatus = TrajectoryStatus.COMPLETED
    diagnostics: dict = field(default_factory=dict)

    def bounce_count(self):
        return len(self.events)


def angular_momentum(x, v):
    """omega = |(x cross z_hat) . v| = |x2 v1 - x1 v2|; conserved quantity."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    return abs(x[..., 1] * v[..., 0] - x[..., 0] * v[..., 1])


def signed_angular_momentum(x, v):
    """L_z = x1 v2 - x2 v1; positive when the azimuth increases."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    return x[..., 0] * v[..., 1] - x[..., 1] * v[..., 0]


def _wrap_pi(a):
    return (a + np.pi) % TWO_PI - np.pi


class BilliardEngine:
    """Trajectory integrator over an immutable ToroidalDomain."""

    def __init__(self, domain: ToroidalDomain,
                 graze_threshold=DEFAULT_GRAZE_THRESHOLD,
                 max_bounces=DEFAULT_MAX_BOUNCES):
        self.domain = domain
        self.graze_threshold = float(graze_threshold)
        self.max_bounces = int(max_bounces)
        # bracketing step: a fraction of the tube inradius so a convex
        # cross-section cannot be crossed and re-entered within one step
        self.step_len = STEP_FRACTION / domain.max_curvature
        taus = np.linspace(*domain.profile.period, 64, endpoint=False)
        g = domain.grad_xi(domain.sigma(taus, np.zeros_like(taus)))
        self._grad_scale = float(np.linalg.norm(g, axis=-1).max())
        # largest xi value a boundary blip shorter than one step can reach
        # (chord sagitta bound), with safety factor
        self._blip_tol = self._grad_scale * domain.max_curvature * self.step_len ** 2

    # -- exit times -------------------------------------------------------

    def _xi_ray(self, x, v, s):
        return self.domain.xi(x[None, :] + np.outer(np.atleast_1d(s), v))

    def _refine_root(self, x, v, lo, hi):
        """Root of xi along the ray in [lo, hi] (xi(lo) <= 0 < xi(hi)).

        Safeguarded Newton: steps that leave the bracket fall back to
        bisection, so convergence is guaranteed and typically quadratic.
        """
        dom = self.domain
        s = 0.5 * (lo + hi)
        for _ in range(80):
            p = x + s * v
            f = float(dom.xi(p))
            if f > 0.0:
                hi = s
            else:
                lo = s
            slope = float(np.dot(dom.grad_xi(p), v))
            s_new = s - f / slope if slope != 0.0 else s
            if abs(f) <= XI_ROOT_TOL:
                return s_new if lo <= s_new <= hi else s
            if not lo < s_new < hi:
                s_new = 0.5 * (lo + hi)
            s = s_new
        raise NumericsError(f"exit-time polish stalled at s = {s:.6e}")

    def _first_exit(self, x, v, max_s, from_boundary):
        """Smallest s in (0, max_s] with xi(x + s v) = 0, or None.

        ``from_boundary`` divides out the known root at s = 0 on the first
        interval so near-tangential short chords are still resolved.
        """
        speed = math.sqrt(float(v @ v))
        step = self.step_len / speed
        if max_s <= 0.0:
            return None
        s_lo = 0.0
        if from_boundary:
            s1 = min(step, max_s)
            if float(self.domain.xi(x + s1 * v)) > 0.0:
                # root inside the first step: divide out the s = 0 root and
                # walk the lower bracket end down until the sign is reliable
                g = lambda s: float(self.domain.xi(x + s * v)) / s
                sl = s1 / 4.0
                while sl > 1e-15 * s1 and g(sl) >= 0.0:
                    sl /= 4.0
                if g(sl) >= 0.0:
                    raise GrazingAmbiguousError(
                        "tangential departure could not be bracketed")
                s_root = brentq(g, sl, s1, xtol=1e-15, rtol=1e-15)
                lo = max(s_root - 1e-9 * s1, sl)
                if float(self.domain.xi(x + lo * v)) < 0.0:
                    return self._refine_root(x, v, lo, s1)
                return s_root
            s_lo = s1
            if s_lo >= max_s:
                return None
        xi_lo = float(self.domain.xi(x + s_lo * v)) if s_lo > 0 else \
            float(self.domain.xi(x))
        batch = 256
        while s_lo < max_s:
            s_hi = min(s_lo + batch * step, max_s)
            n = max(int(np.ceil((s_hi - s_lo) / step)), 1)
            grid = np.linspace(s_lo, s_hi, n + 1)[1:]
            vals = self._xi_ray(x, v, grid)
            pos = np.nonzero(vals > 0.0)[0]
            k_cross = int(pos[0]) if pos.size else n
            # near-surface pairs ahead of the first crossing may hide a short
            # blip (exit and re-entry between grid points) — subdivide them
            prev = np.concatenate(([xi_lo], vals[:-1]))
            near = np.nonzero((vals > -self._blip_tol) & (vals <= 0.0)
                              & (prev > -self._blip_tol))[0]
            for j in near:
                if j >= k_cross:
                    break
                a = s_lo if j == 0 else grid[j - 1]
                fine = np.linspace(a, grid[j], 33)[1:-1]
                fvals = self._xi_ray(x, v, fine)
                hit = np.nonzero(fvals > 0.0)[0]
                if hit.size:
                    q = int(hit[0])
                    lo = a if q == 0 else fine[q - 1]
                    return self._refine_root(x, v, lo, fine[q])
            if pos.size:
                a = s_lo if k_cross == 0 else grid[k_cross - 1]
                return self._refine_root(x, v, a, grid[k_cross])
            s_lo, xi_lo = s_hi, float(vals[-1])
        return None

    def backward_exit(self, x, v, max_s=None):
        """(t_b, x_b): backward exit time and point; t_b = 0 on immediate exit."""
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        cls = self.domain.classify_point(x, band=1e-9)
        if cls is PointClass.OUTSIDE:
            raise ValueError("position lies outside the closed domain")
        on_bdry = cls is PointClass.BOUNDARY
        if on_bdry:
            n = self.domain.unit_normal_at(x)
            nd = float(np.dot(n, v)) / math.sqrt(float(v @ v))
            if nd < -self.graze_threshold:
                return 0.0, x.copy()
        if max_s is None:
            max_s = 100.0 * self.domain.r_max / math.sqrt(float(v @ v))
        s = self._first_exit(x, -v, max_s, from_boundary=on_bdry)
        if s is None:
            raise NumericsError("no backward exit found within the search horizon")
        return s, x - s * v

    def forward_exit(self, x, v, max_s=None):
        t, xb = self.backward_exit(x, -np.asarray(v, dtype=float), max_s=max_s)
        return t, xb

    # -- reflection -------------------------------------------------------

    def reflect(self, x_b, v):
        """Specular reflection v - 2 (n.v) n at the boundary point x_b."""
        v = np.asarray(v, dtype=float)
        n = self.domain.unit_normal_at(np.asarray(x_b, dtype=float))
        return v - 2.0 * float(np.dot(n, v)) * n

    def _reflect_at(self, tau, phi, v):
        n = self.domain.outward_normal(tau, phi)
        return v - 2.0 * float(np.dot(n, v)) * n

    # -- cycles -----------------------------------------------------------

    def _run(self, state: PhaseState, length, direction, max_bounces, phi0):
        dom = self.domain
        x = state.x.copy()
        v = state.v.copy()
        t = state.t
        speed0 = math.sqrt(float(v @ v))
        omega0 = float(angular_momentum(x, v))
        if phi0 is None:
            phi0 = float(np.arctan2(x[1], x[0])) if np.hypot(x[0], x[1]) > 0 else 0.0
        phi = float(phi0)
        traj = Trajectory(direction=direction, origin=PhaseState(x, v, t),
                          phi0=phi0)
        remaining = float(length)
        cap = self.max_bounces if max_bounces is None else int(max_bounces)
        status = TrajectoryStatus.COMPLETED
        drift_v = 0.0
        drift_w = 0.0

        cls = dom.classify_point(x, band=1e-9)
        if cls is PointClass.OUTSIDE:
            raise ValueError("origin position lies outside the closed domain")
        on_bdry = cls is PointClass.BOUNDARY
        if on_bdry:
            n = dom.unit_normal_at(x)
            nd = float(np.dot(n, v)) / speed0
            if abs(nd) < self.graze_threshold:
                try:
                    g = grazing.classify(dom, x, v, self.graze_threshold)
                except GrazingAmbiguousError:
                    g = None
                if g is None:
                    status = TrajectoryStatus.GRAZING_AMBIGUOUS
                elif g is grazing.GrazingClass.CONVEX:
                    status = TrajectoryStatus.STUCK_CONVEX_GRAZING
                elif (g is grazing.GrazingClass.INFLECTION_MINUS
                      and direction < 0):
                    status = TrajectoryStatus.STOPPED_AT_INFLECTION_MINUS
                elif (g is grazing.GrazingClass.INFLECTION_PLUS
                      and direction > 0):
                    status = TrajectoryStatus.STOPPED_AT_INFLECTION_PLUS
                if status is not TrajectoryStatus.COMPLETED:
                    traj.status = status
                    traj.end_state = PhaseState(x, v, t)
                    traj.phi_end = phi
                    traj.diagnostics = {"speed_drift": 0.0, "omega_drift": 0.0}
                    return traj
            elif nd * direction > 0.0:
                # immediate exit in the travel direction: zero-length chord,
                # reflect in place (sup-empty-set convention)
                sp = dom.boundary_params(x, phi_hint=phi)
                v_out = self._reflect_at(sp.tau, sp.phi, v)
                traj.events.append(BounceEvent(
                    k=1, t=t, x=x.copy(), tau=sp.tau, phi=phi,
                    v_in=v.copy(), v_out=v_out, normal_dot=nd))
                v = v_out
                on_bdry = True

        k = len(traj.events)
        while remaining > 0.0:
            ray_v = direction * v
            # relative slack so a bounce landing exactly at the length budget
            # is not lost to rounding of the accumulated chord lengths
            max_s = (remaining / speed0) * (1.0 + 1e-12) + 1e-13
            s = self._first_exit(x, ray_v, max_s, on_bdry)
            if s is None:
                break  # budget exhausted in free flight
            if s * speed0 > remaining:
                remaining = s * speed0
            x_b = x + s * ray_v
            dphi = float(_wrap_pi(np.arctan2(x_b[1], x_b[0])
                                  - np.arctan2(x[1], x[0])))
            phi += dphi
            sp = dom.boundary_params(x_b, phi_hint=phi)
            n = dom.outward_normal(sp.tau, sp.phi)
            nd = float(np.dot(n, v)) / speed0
            remaining -= s * speed0
            t += direction * s
            graze_cls = grazing.GrazingClass.NON_GRAZING
            stop = None
            if abs(nd) < self.graze_threshold:
                try:
                    graze_cls = grazing.classify(dom, sp.xyz, v,
                                                 self.graze_threshold)
                except GrazingAmbiguousError:
                    stop = TrajectoryStatus.GRAZING_AMBIGUOUS
                if stop is None:
                    if graze_cls is grazing.GrazingClass.CONVEX:
                        stop = TrajectoryStatus.STUCK_CONVEX_GRAZING
                    elif (graze_cls is grazing.GrazingClass.INFLECTION_MINUS
                          and direction < 0):
                        stop = TrajectoryStatus.STOPPED_AT_INFLECTION_MINUS
                    elif (graze_cls is grazing.GrazingClass.INFLECTION_PLUS
                          and direction > 0):
                        stop = TrajectoryStatus.STOPPED_AT_INFLECTION_PLUS
            v_out = v if stop is not None else self._reflect_at(sp.tau, sp.phi, v)
            k += 1
            traj.events.append(BounceEvent(
                k=k, t=t, x=x_b, tau=sp.tau, phi=phi,
                v_in=v.copy(), v_out=v_out, normal_dot=nd, graze=graze_cls))
            drift_v = max(drift_v,
                          abs(math.sqrt(float(v_out @ v_out)) - speed0) / speed0)
            if omega0 > 0:
                drift_w = max(drift_w,
                              abs(float(angular_momentum(x_b, v_out)) - omega0)
                              / omega0)
            x, v = x_b, v_out
            on_bdry = True
            if stop is not None:
                status = stop
                remaining = 0.0
                break
            if k >= cap:
                status = TrajectoryStatus.MAX_BOUNCES_REACHED
                remaining = 0.0
                break

        if remaining > 0.0:
            # final partial free flight
            s = remaining / speed0
            x_end = x + s * direction * v
            phi += float(_wrap_pi(np.arctan2(x_end[1], x_end[0])
                                  - np.arctan2(x[1], x[0])))
            t += direction * s
            x = x_end
        traj.status = status
        traj.end_state = PhaseState(x, v, t)
        traj.phi_end = phi
        traj.total_length = abs(t - state.t) * speed0
        traj.winding = (phi - phi0) / TWO_PI
        traj.diagnostics = {"speed_drift": drift_v, "omega_drift": drift_w}
        return traj

    def backward_cycles(self, state: PhaseState, length, max_bounces=None,
                        phi0=None) -> Trajectory:
        return self._run(state, length, -1, max_bounces, phi0)

    def forward_cycles(self, state: PhaseState, length, max_bounces=None,
                       phi0=None) -> Trajectory:
        return self._run(state, length, +1, max_bounces, phi0)

    # -- evaluation -------------------------------------------------------

    def _segments(self, traj: Trajectory):
        """(t_start, x_start, v) per free-flight segment plus the time range."""
        segs = []
        t0 = traj.origin.t
        x0 = traj.origin.x
        v0 = traj.origin.v
        for ev in traj.events:
            segs.append((t0, x0, v0))
            t0, x0, v0 = ev.t, ev.x, ev.v_out
        segs.append((t0, x0, v0))
        return segs, traj.origin.t, traj.end_state.t

    def trajectory_eval(self, traj: Trajectory, s):
        """(X(s), V(s)): piecewise-linear position, piecewise-constant velocity.

        At a bounce time the half-open convention applies: backward runs use
        the pre-bounce velocity on [t^{k+1}, t^k); forward runs use the
        post-bounce velocity on [t^k, t^{k+1}).
        """
        segs, t_a, t_b = self._segments(traj)
        s = float(s)
        lo, hi = min(t_a, t_b), max(t_a, t_b)
        if not lo <= s <= hi:
            raise ValueError(f"time {s} outside trajectory range [{lo}, {hi}]")
        times = np.array([seg[0] for seg in segs])
        if traj.direction > 0:
            idx = int(np.searchsorted(times, s, side="right")) - 1
        else:
            idx = int(np.searchsorted(-times, -s, side="left")) - 1
        idx = min(max(idx, 0), len(segs) - 1)
        t_k, x_k, v_k = segs[idx]
        return x_k + (s - t_k) * v_k, v_k

    # -- arrival time -----------------------------------------------------

    def arrival_time_S0(self, x, phi_unwrapped, v):
        """Forward time until the trajectory of (R_phi x, R_phi v) reaches
        azimuth 0, i.e. crosses the half-plane S0 = {y = 0, x > 0}.

        The state is given in its azimuth-0 representative together with its
        unwrapped azimuth phi < 0; negative-orientation inputs are mirrored.
        """
        x = np.asarray(x, dtype=float)
        v = np.asarray(v, dtype=float)
        if angular_momentum(x, v) <= 0.0:
            raise ValueError("arrival time requires omega > 0")
        if signed_angular_momentum(x, v) < 0.0:
            x = x * np.array([1.0, -1.0, 1.0])
            v = v * np.array([1.0, -1.0, 1.0])
            phi_unwrapped = -float(phi_unwrapped)
        phi_unwrapped = float(phi_unwrapped)
        if phi_unwrapped >= 0.0:
            raise ValueError("unwrapped azimuth must be negative")
        Rm = rotation_z(phi_unwrapped)
        xs = Rm @ x
        vs = Rm @ v
        speed = float(np.linalg.norm(v))
        budget = 1.5 * abs(phi_unwrapped) * self.domain.r_max ** 2 \
            / float(angular_momentum(x, v)) * speed + 4.0 * self.domain.r_max
        for _ in range(4):
            traj = self.forward_cycles(PhaseState(xs, vs, 0.0), budget,
                                       phi0=phi_unwrapped)
            if traj.phi_end >= 0.0:
                break
            if traj.status is not TrajectoryStatus.COMPLETED:
                raise TrajectoryStoppedError(
                    f"trajectory terminated with status {traj.status.value} "
                    "before reaching azimuth 0")
            budget *= 2.0
        else:
            raise NumericsError("azimuth 0 not reached within the time budget")
        segs, _, _ = self._segments(traj)
        phis = [traj.phi0] + [ev.phi for ev in traj.events] + [traj.phi_end]
        times = [t for (t, _, _) in segs] + [traj.end_state.t]
        for i in range(len(segs)):
            if phis[i] <= 0.0 <= phis[i + 1]:
                t_k, x_k, v_k = segs[i]

                def az(s):
                    p = x_k + (s - t_k) * v_k
                    return phis[i] + float(_wrap_pi(
                        np.arctan2(p[1], p[0]) - np.arctan2(x_k[1], x_k[0])))

                if az(times[i]) == 0.0:
                    return float(times[i])
                return float(brentq(az, times[i], times[i + 1],
                                    xtol=1e-13, rtol=1e-15))
        raise NumericsError("azimuth-0 crossing not bracketed")


# -- export ---------------------------------------------------------------


def trajectory_to_jsonl(traj: Trajectory, domain: ToroidalDomain, seed=None,
                        extra_header=None):
    """Serialize a trajectory as JSON Lines: header record then one record
    per bounce event."""
    header = {
        "record": "header",
        "origin": {"x": traj.origin.x.tolist(), "v": traj.origin.v.tolist(),
                   "t": traj.origin.t},
        "direction": traj.direction,
        "seed": seed,
        "domain_hash": domain.domain_hash(),
        "status": traj.status.value,
        "winding": traj.winding,
        "total_length": traj.total_length,
        "diagnostics": traj.diagnostics,
    }
    if extra_header:
        header.update(extra_header)
    lines = [json.dumps(header, sort_keys=True)]
    for ev in traj.events:
        lines.append(json.dumps({
            "record": "bounce",
            "k": ev.k,
            "t": ev.t,
            "x": ev.x.tolist(),
            "tau": ev.tau,
            "phi_unwrapped": ev.phi,
            "v_in": ev.v_in.tolist(),
            "v_out": ev.v_out.tolist(),
            "normal_dot": ev.normal_dot,
            "graze": ev.graze.value,
        }, sort_keys=True))
    return lines
