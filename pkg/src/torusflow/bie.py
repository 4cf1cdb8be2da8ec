"""First-kind boundary-integral solver for the two-phase harmonic jump problem.

Given boundary data g on the interface, solves for w with

    Lap w = 0  off the curve,   w = g  on the curve,

as a single-layer potential w = S[sigma] + c over the periodic Green function,
with the compatibility constraint int sigma ds = 0 absorbing the kernel's
one-dimensional nullspace.  The normal-derivative jump is [d_nu w] = -sigma
and the one-sided derivatives follow from the adjoint double layer.

Sign conventions pinned here (and verified against the Fourier strip oracle in
the tests): [d_nu w] = d_nu w^+ - d_nu w^-, and with boundary data g = H the
resulting normal velocity makes a perturbed disk relax back to the disk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import get_lapack_funcs, lu_factor, lu_solve

from .errors import ResolutionError, SingularityError
from .fields import potential_of_set
from .geometry import CurveSamples, curvature, integrate_ds

_GREEN_SERIES_TERMS = 12


def _wrap_half(z):
    return z - np.round(z)


def _series_terms(umax):
    """Terms needed for 1e-13 truncation: e^(-2 pi m (1-u)) below 1e-13."""
    return int(min(_GREEN_SERIES_TERMS, np.ceil(30.0 / (2.0 * np.pi * max(1.0 - umax, 0.5)))))


def _green_raw(dx, dy, terms=_GREEN_SERIES_TERMS):
    """Green function from wrapped displacements (no singularity guard)."""
    s2 = np.sin(np.pi * dx) ** 2 + np.sinh(np.pi * dy) ** 2
    out = -np.log(4.0 * s2, where=s2 > 0, out=np.zeros_like(s2)) / (4.0 * np.pi)
    out += 0.5 * (dy**2 + 1.0 / 6.0)
    u = np.abs(dy)
    for m in range(1, terms + 1):
        a = 2.0 * np.pi * m
        out += np.cos(2.0 * np.pi * m * dx) * (
            (np.exp(-a * (1.0 + u)) + np.exp(-a * (1.0 - u)))
            / ((1.0 - np.exp(-a)) * (2.0 * np.pi * m))
        )
    return out


def periodic_green_kernel(x, y=None, terms=_GREEN_SERIES_TERMS):
    """Green function G(x,y) of -Lap on T^2 with -Lap G = delta - 1, zero mean.

    Evaluated through the cylinder kernel -log(4(sin^2 pi dx + sinh^2 pi dy))/4pi
    plus an exponentially convergent Fourier correction; absolute error below
    1e-12 everywhere.  Accepts points or arrays; y may be omitted when x
    already holds displacements.
    """
    z = np.asarray(x, dtype=float) if y is None else np.asarray(x, float) - np.asarray(y, float)
    dx = _wrap_half(z[..., 0])
    dy = _wrap_half(z[..., 1])
    s2 = np.sin(np.pi * dx) ** 2 + np.sinh(np.pi * dy) ** 2
    if np.any(s2 < 1e-28):
        raise SingularityError("Green kernel evaluated at coincident points")
    return _green_raw(dx, dy, terms=terms)


def green_regular_origin(terms=_GREEN_SERIES_TERMS):
    """R(0) where R(z) = G(z) + log|z|/(2 pi) is the smooth remainder."""
    out = -np.log(2.0 * np.pi) / (2.0 * np.pi) + 1.0 / 12.0
    for m in range(1, terms + 1):
        a = 2.0 * np.pi * m
        out += 2.0 * np.exp(-a) / ((1.0 - np.exp(-a)) * (2.0 * np.pi * m))
    return out


def periodic_green_gradient(x, y=None, terms=_GREEN_SERIES_TERMS):
    """Gradient of G with respect to its first argument."""
    z = np.asarray(x, dtype=float) if y is None else np.asarray(x, float) - np.asarray(y, float)
    dx = _wrap_half(z[..., 0])
    dy = _wrap_half(z[..., 1])
    s2 = np.sin(np.pi * dx) ** 2 + np.sinh(np.pi * dy) ** 2
    if np.any(s2 < 1e-28):
        raise SingularityError("Green gradient evaluated at coincident points")
    gx = -np.sin(2.0 * np.pi * dx) / (4.0 * s2)
    gy = -np.sinh(2.0 * np.pi * dy) / (4.0 * s2) + dy
    u = np.abs(dy)
    sgn = np.sign(dy)
    for m in range(1, terms + 1):
        a = 2.0 * np.pi * m
        den = (1.0 - np.exp(-a)) * (2.0 * np.pi * m)
        c = (np.exp(-a * (1.0 + u)) + np.exp(-a * (1.0 - u))) / den
        dc = sgn * a * (-np.exp(-a * (1.0 + u)) + np.exp(-a * (1.0 - u))) / den
        gx += -2.0 * np.pi * m * np.sin(2.0 * np.pi * m * dx) * c
        gy += np.cos(2.0 * np.pi * m * dx) * dc
    return np.stack([gx, gy], axis=-1)


def _kress_log_weights(n):
    """Quadrature weights R_{i-j} with sum_j R_{i-j} f(t_j) approximating
    int_0^{2pi} log(4 sin^2((t_i - s)/2)) f(s) ds, spectrally exact for
    trigonometric polynomials."""
    lam = np.zeros(n)
    k = np.fft.fftfreq(n, d=1.0 / n)
    nz = k != 0
    lam[nz] = -1.0 / np.abs(k[nz])
    # symbol of the periodic log kernel: (1/2pi) int log(4 sin^2(s/2)) e^{-iks} ds
    return 2.0 * np.pi * np.fft.ifft(lam * n).real / n


@dataclass
class SingleLayerOperator:
    """Nystrom discretization of (S sigma)(x) = int G(x,y) sigma(y) ds(y)."""

    kernel: np.ndarray  # symmetric kernel matrix, log part folded in
    weights: np.ndarray  # arclength quadrature weights

    @property
    def matrix(self):
        """Matrix mapping marker densities to potential values."""
        return self.kernel * self.weights[None, :]

    def apply(self, sigma):
        return self.kernel @ (self.weights * np.asarray(sigma))

    def quadratic_form(self, phi, psi=None):
        """Double integral of G against two densities (the nonlocal pairing)."""
        psi = phi if psi is None else psi
        return float(
            (self.weights * np.asarray(phi)) @ (self.kernel @ (self.weights * np.asarray(psi)))
        )


def assemble_single_layer(curve):
    """Dense single-layer matrix with Kress log quadrature on the diagonal blocks."""
    slices = curve.loop_slices()
    n_tot = curve.n_markers
    kernel = np.zeros((n_tot, n_tot))
    pts = curve.markers()
    r0 = green_regular_origin()
    for li, (lp, sl) in enumerate(zip(curve.components, slices)):
        n = lp.n
        t = 2.0 * np.pi * np.arange(n) / n
        dt = t[:, None] - t[None, :]
        off = ~np.eye(n, dtype=bool)
        logpart = np.log(4.0 * np.sin(0.5 * dt) ** 2, where=off, out=np.zeros((n, n)))
        z = lp.markers[:, None, :] - lp.markers[None, :, :]
        dx = _wrap_half(z[..., 0])
        dy = _wrap_half(z[..., 1])
        np.fill_diagonal(dx, 0.25)  # dummy separation, diagonal overwritten
        g_full = _green_raw(dx, dy, terms=_series_terms(np.abs(dy).max()))
        smooth = g_full + logpart / (4.0 * np.pi)
        speed = lp.speed()
        np.fill_diagonal(smooth, -np.log(speed) / (2.0 * np.pi) + r0)
        ww = _kress_log_weights(n)
        idx = (np.arange(n)[:, None] - np.arange(n)[None, :]) % n
        kress = ww[idx] * (n / (2.0 * np.pi))
        kernel[sl, sl] = -kress / (4.0 * np.pi) + smooth
    # cross-loop blocks: smooth kernel, plain trapezoid
    for i, (lpi, sli) in enumerate(zip(curve.components, slices)):
        for j, (lpj, slj) in enumerate(zip(curve.components, slices)):
            if i >= j:
                continue
            block = periodic_green_kernel(
                lpi.markers[:, None, :] - lpj.markers[None, :, :]
            )
            kernel[sli, slj] = block
            kernel[slj, sli] = block.T
    return SingleLayerOperator(kernel=kernel, weights=curve.arclength_weights())


def potential_normal_derivative(curve, operator=None):
    """d_nu v_E on the curve through the single-layer identity Dv_E = -2 S[nu].

    Integrating -Lap v_E = u_E - m by parts against the Green kernel turns the
    bulk gradient into a single layer with the vector density -2 nu, so the
    trace inherits the Kress quadrature's spectral accuracy.
    """
    op = operator if operator is not None else assemble_single_layer(curve)
    nu = curve.normals()
    gx = op.apply(nu[:, 0])
    gy = op.apply(nu[:, 1])
    return CurveSamples(-2.0 * (gx * nu[:, 0] + gy * nu[:, 1]), kind="boundary-data")


def adjoint_double_layer(curve):
    """Matrix of K*: the normal derivative (at the target) of the single layer.

    The kernel is smooth for C^2 curves; the diagonal carries the curvature
    limit -kappa/(4 pi).
    """
    pts = curve.markers()
    nu = curve.normals()
    z = pts[:, None, :] - pts[None, :, :]
    n_tot = curve.n_markers
    eye = np.eye(n_tot, dtype=bool)
    z[eye] = 0.25  # dummy separation; the diagonal is overwritten below
    grad = periodic_green_gradient(z)
    kmat = grad[..., 0] * nu[:, None, 0] + grad[..., 1] * nu[:, None, 1]
    kmat[eye] = -curvature(curve).values / (4.0 * np.pi)
    return kmat


@dataclass
class JumpSolution:
    """Solution bundle of the harmonic jump problem on one curve.

    The one-sided normal derivatives (adjoint double layer) are assembled
    lazily; flow stepping needs only the jump.
    """

    curve: object
    boundary_data: CurveSamples
    density: CurveSamples  # single-layer density sigma, zero weighted mean
    jump: CurveSamples  # [d_nu w] = -sigma
    additive_constant: float
    weights: np.ndarray = None
    _ks: np.ndarray = None

    def _adjoint_apply(self):
        if self._ks is None:
            kstar = adjoint_double_layer(self.curve)
            self._ks = kstar @ (self.weights * self.density.values)
        return self._ks

    @property
    def one_sided_plus(self):
        return CurveSamples(self._adjoint_apply() - 0.5 * self.density.values,
                            kind="boundary-data")

    @property
    def one_sided_minus(self):
        return CurveSamples(self._adjoint_apply() + 0.5 * self.density.values,
                            kind="boundary-data")

    def dissipation(self):
        """int |Dw|^2 = -int_boundary g [d_nu w] ds (nonnegative)."""
        return -integrate_ds(self.curve, self.boundary_data.values * self.jump.values)


def solve_jump(curve, g, operator=None, cond_limit=1e12, check_condition=True):
    """Solve S[sigma] + c = g with int sigma ds = 0; return the jump bundle."""
    gv = np.asarray(curve.require_samples(g), dtype=float)
    if not np.all(np.isfinite(gv)):
        raise ValueError("boundary data must be finite")
    op = operator if operator is not None else assemble_single_layer(curve)
    n = curve.n_markers
    A = np.zeros((n + 1, n + 1))
    A[:n, :n] = op.matrix
    A[:n, n] = 1.0
    A[n, :n] = op.weights
    rhs = np.concatenate([gv, [0.0]])
    lu, piv = lu_factor(A)
    if check_condition:
        gecon = get_lapack_funcs("gecon", (A,))
        rcond = gecon(lu, np.linalg.norm(A, 1))[0]
        if rcond < 1.0 / cond_limit:
            raise ResolutionError(
                f"single-layer system condition ~{1.0 / max(rcond, 1e-300):.2e}; "
                "increase the marker count"
            )
    sol = lu_solve((lu, piv), rhs)
    sigma, c = sol[:n], float(sol[n])
    return JumpSolution(
        curve=curve,
        boundary_data=CurveSamples(gv, kind="boundary-data"),
        density=CurveSamples(sigma, kind="density"),
        jump=CurveSamples(-sigma, kind="velocity"),
        additive_constant=c,
        weights=op.weights,
    )


def ms_boundary_data(curve, gamma, grid_n=256, trace=None):
    """g = H + 4 gamma v_E at the markers (the Dirichlet datum of the flow)."""
    kap = curvature(curve).values
    if gamma == 0.0:
        return CurveSamples(kap, kind="boundary-data"), None
    if trace is None:
        _, trace = potential_of_set(curve, n=grid_n)
    return (
        CurveSamples(kap + 4.0 * gamma * trace.boundary_values.values, kind="boundary-data"),
        trace,
    )


def ms_normal_velocity(curve, gamma=0.0, grid_n=256, operator=None):
    """Mullins-Sekerka normal velocity V = [d_nu w] with w = H + 4 gamma v_E on the curve."""
    g, trace = ms_boundary_data(curve, gamma, grid_n=grid_n)
    sol = solve_jump(curve, g, operator=operator)
    return CurveSamples(sol.jump.values, kind="velocity"), sol


def dissipation_ms(solution):
    """Dissipation int |Dw|^2 of a solved jump problem."""
    return solution.dissipation()


def write_jump_csv(solution, path):
    """Per-marker dump: loop,idx,s,g,sigma,jump,dnw_plus,dnw_minus."""
    curve = solution.curve
    lines = ["loop,idx,s,g,sigma,jump,dnw_plus,dnw_minus"]
    pos = 0
    for li, lp in enumerate(curve.components):
        s = lp.arclength()
        for j in range(lp.n):
            k = pos + j
            lines.append(
                f"{li},{j},{s[j]:.17g},{solution.boundary_data.values[k]:.17g},"
                f"{solution.density.values[k]:.17g},{solution.jump.values[k]:.17g},"
                f"{solution.one_sided_plus.values[k]:.17g},"
                f"{solution.one_sided_minus.values[k]:.17g}"
            )
        pos += lp.n
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
