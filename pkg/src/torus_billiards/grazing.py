"""Classification of tangential boundary phases.

A grazing phase (x, v) has n(x).v = 0.  Depending on the local shape of the
boundary section in the tangent plane the ray either exits on both sides
(convex grazing), stays inside on both sides (concave grazing), or crosses
the surface (inflection grazing, split by orientation).  The inflection
directions at an inner-region point make an angle theta with the azimuthal
tangent where tan(theta) = sqrt(|gamma2'| / (kappa * gamma1)).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .domain import ToroidalDomain
from .errors import GrazingAmbiguousError, UndefinedInflectionError


class GrazingClass(enum.Enum):
    CONVEX = "convex"                    # ray exits both ways
    CONCAVE = "concave"                  # ray stays inside both ways
    INFLECTION_PLUS = "inflection+"      # exits forward, inside backward
    INFLECTION_MINUS = "inflection-"     # inside forward, exits backward
    NON_GRAZING = "non-grazing"


DEFAULT_GRAZE_THRESHOLD = 1e-7
DEFAULT_ZH_BAND = 1e-3
LADDER_BASE_FRACTION = 1e-2
LADDER_RUNGS = 3


def principal_curvatures(domain: ToroidalDomain, tau):
    """(kappa1, kappa2): azimuthal and meridian principal curvatures.

    Signs follow the inward-normal convention: positive where the surface
    bends away from the inward normal (locally convex).
    """
    prof = domain.profile
    d1 = prof.deriv1(tau)
    return d1[..., 1] / prof.gamma1(tau), prof.curvature(tau)


def local_curvature_radius(domain: ToroidalDomain, tau):
    k1, k2 = principal_curvatures(domain, tau)
    return 1.0 / max(abs(float(k1)), abs(float(k2)), 1e-12)


def normal_curvature(domain: ToroidalDomain, tau, phi, w, tol=1e-10):
    """Euler's formula in the tangent direction w at sigma(tau, phi)."""
    w = np.asarray(w, dtype=float)
    w = w / np.linalg.norm(w)
    n = domain.outward_normal(tau, phi)
    if abs(float(np.dot(n, w))) > tol:
        raise ValueError(f"direction is not tangent: n.w = {float(np.dot(n, w)):.3e}")
    k1, k2 = principal_curvatures(domain, tau)
    cos_t = float(np.dot(w, domain.phi_hat(phi)))
    cos2 = min(cos_t * cos_t, 1.0)
    return float(k1) * cos2 + float(k2) * (1.0 - cos2)


def normal_curvature_from_indicator(domain: ToroidalDomain, tau, phi, w):
    """Independent route: kappa_n = (w^T Hess(xi) w) / |grad xi| on the surface."""
    w = np.asarray(w, dtype=float)
    w = w / np.linalg.norm(w)
    p = domain.sigma(tau, phi)
    H = domain.hessian_xi(p)
    g = domain.grad_xi(p)
    return float(w @ H @ w) / float(np.linalg.norm(g))


@dataclass
class InflectionDirections:
    """The two zero-normal-curvature tangent directions at an inner point.

    Both have positive angular momentum; I1 crosses outward going forward
    (trajectory cannot continue), I2 is the time reverse.
    """

    tau: float
    phi: float
    theta: float
    I1: np.ndarray
    I2: np.ndarray


def inflection_angle(domain: ToroidalDomain, tau):
    """theta with tan(theta) = sqrt(|gamma2'| / (kappa * gamma1))."""
    prof = domain.profile
    d1 = prof.deriv1(tau)
    return np.arctan(np.sqrt(np.abs(d1[..., 1])
                             / (prof.curvature(tau) * prof.gamma1(tau))))


def _formal_pair(domain: ToroidalDomain, tau, phi, positive_momentum=True):
    """Tangent directions at angles theta and -theta from the azimuthal tangent."""
    theta = float(inflection_angle(domain, tau))
    e_az = domain.phi_hat(phi)
    if not positive_momentum:
        e_az = -e_az
    e_m = domain.meridian_tangent(tau, phi)
    c_plus = np.cos(theta) * e_az + np.sin(theta) * e_m
    c_minus = np.cos(theta) * e_az - np.sin(theta) * e_m
    return theta, c_plus, c_minus


def _sign_ladder(domain: ToroidalDomain, x, u, tau):
    """Stable signs of xi(x + s u) and xi(x - s u) over a geometric ladder."""
    s0 = LADDER_BASE_FRACTION * local_curvature_radius(domain, tau)
    pattern = None
    for s in (s0, s0 / 2.0, s0 / 4.0):
        f = float(domain.xi(x + s * u))
        b = float(domain.xi(x - s * u))
        if f == 0.0 or b == 0.0:
            raise GrazingAmbiguousError(
                f"indicator vanished exactly on the ladder at s = {s:.3e}")
        cur = (f > 0.0, b > 0.0)
        if pattern is None:
            pattern = cur
        elif cur != pattern:
            raise GrazingAmbiguousError(
                f"sign pattern unstable across ladder rungs near s = {s:.3e}")
    return pattern


def classify(domain: ToroidalDomain, x, v,
             graze_threshold=DEFAULT_GRAZE_THRESHOLD) -> GrazingClass:
    """Classify a tangential boundary phase by indicator sign sampling."""
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    n = domain.unit_normal_at(x)
    vhat = v / np.linalg.norm(v)
    nd = float(np.dot(n, vhat))
    if abs(nd) >= graze_threshold:
        return GrazingClass.NON_GRAZING
    u = vhat - nd * n
    u = u / np.linalg.norm(u)
    sp = domain.boundary_params(x, tol=1e-6)
    fwd_out, bwd_out = _sign_ladder(domain, x, u, sp.tau)
    if fwd_out and bwd_out:
        return GrazingClass.CONVEX
    if not fwd_out and not bwd_out:
        return GrazingClass.CONCAVE
    if fwd_out:
        return GrazingClass.INFLECTION_PLUS
    return GrazingClass.INFLECTION_MINUS


def inflection_directions(domain: ToroidalDomain, tau, phi,
                          z_h_band=DEFAULT_ZH_BAND,
                          positive_momentum=True) -> InflectionDirections:
    """Inflection directions I1 (forward-blocked) and I2 at sigma(tau, phi).

    Undefined on the outer region and inside the exclusion band around the
    zero set of h, where the tangent-plane section degenerates.
    """
    markers = domain.markers
    prof = domain.profile
    tau = float(prof.wrap(tau))
    if not bool(markers.in_inner(prof, tau)):
        raise UndefinedInflectionError(
            f"tau = {tau:.6g} is not in the inner region "
            f"({markers.tau1_star:.6g}, span {markers.inner_span:.6g})")
    if markers.dist_to_z_h(prof, tau) <= z_h_band:
        raise UndefinedInflectionError(
            f"tau = {tau:.6g} lies within {z_h_band} of a zero of h; "
            "inflection directions degenerate there")
    theta, c_plus, c_minus = _formal_pair(domain, tau, phi, positive_momentum)
    x = domain.sigma(tau, phi)
    plus_cls = _sign_ladder(domain, x, c_plus, tau)
    if plus_cls == (True, False):
        i1, i2 = c_plus, c_minus
    elif plus_cls == (False, True):
        i1, i2 = c_minus, c_plus
    else:
        raise UndefinedInflectionError(
            f"candidate direction at tau = {tau:.6g} did not resolve as an "
            f"inflection (sign pattern {plus_cls})")
    return InflectionDirections(tau=tau, phi=float(phi), theta=theta, I1=i1, I2=i2)


def concave_direction(domain: ToroidalDomain, tau, phi, eta,
                      z_h_band=DEFAULT_ZH_BAND):
    """Unit concave-grazing direction between I1 and I2 (eta in (0,1)).

    Inside the Z_h band the directions are taken as the formal angle pair.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError(f"eta must lie in (0, 1), got {eta}")
    try:
        d = inflection_directions(domain, tau, phi, z_h_band=z_h_band)
        i1, i2 = d.I1, d.I2
    except UndefinedInflectionError:
        if not bool(domain.markers.in_inner(domain.profile, tau)):
            raise
        _, i1, i2 = _formal_pair(domain, tau, phi)
    v = eta * i1 + (1.0 - eta) * i2
    return v / np.linalg.norm(v)


def inflection_momentum(domain: ToroidalDomain, tau):
    """Angular momentum of the inflection directions at tau: gamma1 cos(theta)."""
    return float(domain.profile.gamma1(tau)) * float(np.cos(inflection_angle(domain, tau)))
