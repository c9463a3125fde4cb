"""Solid-torus domains of revolution and their indicator functions.

The boundary is sigma(tau, phi) = (gamma1 cos phi, gamma1 sin phi, gamma2).
The indicator xi is negative inside, zero on the boundary and positive
outside; for the circle generator it is the exact quadric
(rho - R)^2 + z^2 - r^2, for general generators the signed distance to the
generator in the (rho, z) half-plane.
"""

from __future__ import annotations

import enum
import hashlib
import math

import numpy as np

from .curves import ProfileCurve, CurveMarkers, circle_generator, find_markers
from .errors import NumericsError

TWO_PI = 2.0 * np.pi


class PointClass(enum.Enum):
    INSIDE = "inside"
    BOUNDARY = "boundary"
    OUTSIDE = "outside"


class SurfacePoint:
    """Boundary point carrying (tau, unwrapped phi, cartesian position)."""

    __slots__ = ("tau", "phi", "xyz")

    def __init__(self, tau, phi, xyz):
        self.tau = float(tau)
        self.phi = float(phi)
        self.xyz = np.asarray(xyz, dtype=float)

    def __repr__(self):
        return f"SurfacePoint(tau={self.tau:.6g}, phi={self.phi:.6g})"


def rotation_z(dphi):
    c, s = np.cos(dphi), np.sin(dphi)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


class ToroidalDomain:
    """Domain obtained by revolving a ProfileCurve about the z-axis."""

    def __init__(self, profile: ProfileCurve, markers: CurveMarkers = None,
                 seed_grid=2048):
        self.profile = profile
        self.markers = markers if markers is not None else find_markers(profile)
        a, b = profile.period
        self._seed_tau = np.linspace(a, b, seed_grid, endpoint=False)
        pts = profile.eval(self._seed_tau)
        self._seed_pts = pts  # (n, 2) cached generator samples
        kap = profile.curvature(self._seed_tau)
        self.max_curvature = float(kap.max())
        self.r_min = float(profile.gamma1(self.markers.lambda_star))
        self.r_max = float(profile.gamma1(self._seed_tau).max())

    # -- geometry ---------------------------------------------------------

    def sigma(self, tau, phi):
        g = self.profile.eval(tau)
        phi = np.asarray(phi, dtype=float)
        return np.stack([g[..., 0] * np.cos(phi),
                         g[..., 0] * np.sin(phi),
                         g[..., 1] + np.zeros_like(phi)], axis=-1)

    def surface_point(self, tau, phi) -> SurfacePoint:
        return SurfacePoint(tau, phi, self.sigma(tau, phi))

    def outward_normal(self, tau, phi):
        d1 = self.profile.deriv1(tau)
        phi = np.asarray(phi, dtype=float)
        return np.stack([d1[..., 1] * np.cos(phi),
                         d1[..., 1] * np.sin(phi),
                         -d1[..., 0] + np.zeros_like(phi)], axis=-1)

    def meridian_tangent(self, tau, phi):
        """Unit tangent along increasing tau (sigma_tau direction)."""
        d1 = self.profile.deriv1(tau)
        phi = np.asarray(phi, dtype=float)
        return np.stack([d1[..., 0] * np.cos(phi),
                         d1[..., 0] * np.sin(phi),
                         d1[..., 1] + np.zeros_like(phi)], axis=-1)

    @staticmethod
    def phi_hat(phi):
        """Unit vector perpendicular to the meridian plane at azimuth phi."""
        phi = np.asarray(phi, dtype=float)
        return np.stack([-np.sin(phi), np.cos(phi), np.zeros_like(phi)], axis=-1)

    # -- indicator --------------------------------------------------------

    def nearest_parameter(self, rho, z, n_newton=8):
        """Generator parameter of the nearest curve point to (rho, z)."""
        rho = np.asarray(rho, dtype=float)
        z = np.asarray(z, dtype=float)
        shape = np.broadcast_shapes(rho.shape, z.shape)
        rho_f = np.broadcast_to(rho, shape).reshape(-1)
        z_f = np.broadcast_to(z, shape).reshape(-1)
        d2 = ((rho_f[:, None] - self._seed_pts[None, :, 0]) ** 2
              + (z_f[:, None] - self._seed_pts[None, :, 1]) ** 2)
        tau = self._seed_tau[np.argmin(d2, axis=1)]
        for _ in range(n_newton):
            g = self.profile.eval(tau)
            d1 = self.profile.deriv1(tau)
            dd = self.profile.deriv2(tau)
            ex = rho_f - g[..., 0]
            ez = z_f - g[..., 1]
            f = ex * d1[..., 0] + ez * d1[..., 1]
            fp = -1.0 + ex * dd[..., 0] + ez * dd[..., 1]
            fp = np.where(np.abs(fp) < 1e-12, -1.0, fp)
            tau = tau - f / fp
        return self.profile.wrap(tau).reshape(shape)

    def xi_bar(self, rho, z):
        """Signed distance to the generator in the (rho, z) half-plane."""
        tau = self.nearest_parameter(rho, z)
        g = self.profile.eval(tau)
        d1 = self.profile.deriv1(tau)
        ex = np.asarray(rho) - g[..., 0]
        ez = np.asarray(z) - g[..., 1]
        dist = np.hypot(ex, ez)
        # outward normal of the generator is (gamma2', -gamma1')
        side = ex * d1[..., 1] - ez * d1[..., 0]
        return np.where(side >= 0.0, dist, -dist)

    def xi(self, p):
        p = np.asarray(p, dtype=float)
        rho = np.hypot(p[..., 0], p[..., 1])
        return self.xi_bar(rho, p[..., 2])

    def grad_xi(self, p):
        p = np.asarray(p, dtype=float)
        rho = np.hypot(p[..., 0], p[..., 1])
        z = p[..., 2]
        tau = self.nearest_parameter(rho, z)
        g = self.profile.eval(tau)
        d1 = self.profile.deriv1(tau)
        ex = rho - g[..., 0]
        ez = z - g[..., 1]
        dist = np.hypot(ex, ez)
        on_curve = dist < 1e-13
        nr = np.where(on_curve, d1[..., 1], ex / np.where(dist == 0, 1.0, dist))
        nz = np.where(on_curve, -d1[..., 0], ez / np.where(dist == 0, 1.0, dist))
        side = np.where(ex * d1[..., 1] - ez * d1[..., 0] >= 0.0, 1.0, -1.0)
        side = np.where(on_curve, 1.0, side)
        nr = nr * side
        nz = nz * side
        rho_safe = np.where(rho == 0, 1.0, rho)
        return np.stack([nr * p[..., 0] / rho_safe,
                         nr * p[..., 1] / rho_safe,
                         nz + np.zeros_like(rho)], axis=-1)

    def hessian_xi(self, p, step=1e-5):
        p = np.asarray(p, dtype=float)
        H = np.empty(p.shape[:-1] + (3, 3))
        for i in range(3):
            dp = np.zeros(3)
            dp[i] = step
            H[..., i, :] = (self.grad_xi(p + dp) - self.grad_xi(p - dp)) / (2 * step)
        return 0.5 * (H + np.swapaxes(H, -1, -2))

    def unit_normal_at(self, p):
        g = self.grad_xi(p)
        return g / np.linalg.norm(g, axis=-1, keepdims=True)

    # -- queries ----------------------------------------------------------

    def classify_point(self, p, band=1e-10) -> PointClass:
        v = float(self.xi(p))
        if abs(v) <= band:
            return PointClass.BOUNDARY
        return PointClass.INSIDE if v < 0 else PointClass.OUTSIDE

    def boundary_params(self, p, phi_hint=0.0, tol=1e-9, max_iter=50) -> SurfacePoint:
        """Recover (tau, unwrapped phi) of a point near the boundary.

        phi is placed on the 2-pi branch nearest phi_hint.
        """
        p = np.asarray(p, dtype=float)
        rho = float(np.hypot(p[0], p[1]))
        z = float(p[2])
        tau = float(self.nearest_parameter(rho, z, n_newton=12))
        raw_phi = float(np.arctan2(p[1], p[0]))
        phi = raw_phi + TWO_PI * np.round((phi_hint - raw_phi) / TWO_PI)
        sp = SurfacePoint(tau, phi, self.sigma(tau, phi))
        resid = float(np.linalg.norm(sp.xyz - p))
        if resid > tol:
            raise NumericsError(
                f"boundary_params did not converge: residual {resid:.3e} "
                f"at p = {p.tolist()}")
        return sp

    # -- metadata ---------------------------------------------------------

    def domain_hash(self):
        sample = self.profile.eval(np.linspace(*self.profile.period, 64,
                                               endpoint=False))
        return hashlib.sha256(np.ascontiguousarray(sample).tobytes()).hexdigest()[:16]


class CircleTorusDomain(ToroidalDomain):
    """Standard solid torus; the indicator is the exact quadric."""

    def __init__(self, R=2.0, r=1.0):
        self.R = float(R)
        self.r = float(r)
        super().__init__(circle_generator(R, r))

    def sigma(self, tau, phi):
        if np.isscalar(tau) and np.isscalar(phi):
            ang = tau / self.r
            g1 = self.R + self.r * math.cos(ang)
            return np.array([g1 * math.cos(phi), g1 * math.sin(phi),
                             self.r * math.sin(ang)])
        return super().sigma(tau, phi)

    def outward_normal(self, tau, phi):
        if np.isscalar(tau) and np.isscalar(phi):
            ang = tau / self.r
            c = math.cos(ang)
            return np.array([c * math.cos(phi), c * math.sin(phi),
                             math.sin(ang)])
        return super().outward_normal(tau, phi)

    def nearest_parameter(self, rho, z, n_newton=None):
        if np.isscalar(rho) and np.isscalar(z):
            return (self.r * math.atan2(z, rho - self.R)) % (TWO_PI * self.r)
        ang = np.arctan2(np.asarray(z, dtype=float),
                         np.asarray(rho, dtype=float) - self.R)
        return (self.r * ang) % (TWO_PI * self.r)

    def xi_bar(self, rho, z):
        return (np.asarray(rho) - self.R) ** 2 + np.asarray(z) ** 2 - self.r ** 2

    def xi(self, p):
        p = np.asarray(p, dtype=float)
        if p.ndim == 1:
            rho = math.hypot(p[0], p[1])
            return (rho - self.R) ** 2 + p[2] ** 2 - self.r ** 2
        rho = np.hypot(p[..., 0], p[..., 1])
        return (rho - self.R) ** 2 + p[..., 2] ** 2 - self.r ** 2

    def grad_xi(self, p):
        p = np.asarray(p, dtype=float)
        if p.ndim == 1:
            rho = math.hypot(p[0], p[1])
            fac = 2.0 * (rho - self.R) / (rho if rho != 0.0 else 1.0)
            return np.array([fac * p[0], fac * p[1], 2.0 * p[2]])
        rho = np.hypot(p[..., 0], p[..., 1])
        rho_safe = np.where(rho == 0, 1.0, rho)
        fac = 2.0 * (rho - self.R) / rho_safe
        return np.stack([fac * p[..., 0], fac * p[..., 1], 2.0 * p[..., 2]],
                        axis=-1)

    def hessian_xi(self, p, step=None):
        p = np.asarray(p, dtype=float)
        x, y, z = p[..., 0], p[..., 1], p[..., 2]
        rho = np.hypot(x, y)
        rho = np.where(rho == 0, 1.0, rho)
        # d(rho)/dx = x/rho; Hessian of (rho-R)^2 + z^2 - r^2
        hxx = 2.0 * (x / rho) ** 2 + 2.0 * (rho - self.R) * (y ** 2 / rho ** 3)
        hyy = 2.0 * (y / rho) ** 2 + 2.0 * (rho - self.R) * (x ** 2 / rho ** 3)
        hxy = 2.0 * x * y / rho ** 2 - 2.0 * (rho - self.R) * x * y / rho ** 3
        zero = np.zeros_like(hxx)
        two = 2.0 + zero
        return np.stack([
            np.stack([hxx, hxy, zero], axis=-1),
            np.stack([hxy, hyy, zero], axis=-1),
            np.stack([zero, zero, two], axis=-1),
        ], axis=-2)
