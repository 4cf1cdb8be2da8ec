"""Closed oriented interfaces on the flat unit 2-torus.

Conventions (fixed once, used everywhere):

* A loop is stored as one lifted copy of its markers in R^2; the integer
  winding vector closes the loop (``lift[N] = lift[0] + winding``).  All
  geometry is computed on the lift, outputs are reduced mod 1.
* Markers are ordered so that the enclosed phase E lies on the LEFT of the
  travel direction.  The outer unit normal is the right-hand normal
  ``nu = (tau_y, -tau_x)`` and points out of E.
* The scalar curvature is ``kappa = (x' x x'') / |x'|^3`` (cross product of
  first and second parameter derivatives).  With the ordering above a
  disk-shaped phase has kappa = +1/r > 0; a flat lamella has kappa = 0.
  In 2D the mean curvature H and the norm of the second fundamental form
  both reduce to kappa (H = kappa, |B|^2 = kappa^2).
* For a graph y = psi(x) with the phase below, these conventions give the
  outer normal (-psi', 1)/sqrt(1+psi'^2) and kappa = -psi'' (1+psi'^2)^(-3/2).

All operations are pure; curves are treated as immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GraphFailure, OrientationError, ResolutionError, TopologyError

MIN_MARKERS = 16

# Position modes below this relative level are round-off; zero them before
# differentiating (fourth derivatives would otherwise amplify eps_mach by
# ~(N/2)^4 and swamp stationarity checks).  Krasny-style noise filter.
SPECTRAL_FILTER_REL = 1e-13


def _modes(n):
    """Integer Fourier mode numbers in FFT order."""
    return np.fft.fftfreq(n, d=1.0 / n)


def _spectral_derivative_coeffs(coeffs, order):
    """Differentiate FFT coefficients; Nyquist mode zeroed for odd orders."""
    n = coeffs.shape[0]
    k = _modes(n)
    fac = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        fac[n // 2] = 0.0
    return coeffs * fac.reshape(-1, *([1] * (coeffs.ndim - 1)))


class MarkerLoop:
    """One closed marker loop, stored as a lift in R^2 plus a winding vector."""

    def __init__(self, lift, winding=(0, 0)):
        lift = np.ascontiguousarray(np.asarray(lift, dtype=float))
        if lift.ndim != 2 or lift.shape[1] != 2:
            raise ValueError("lift must be an (N, 2) array")
        if lift.shape[0] < MIN_MARKERS:
            raise ResolutionError(
                f"loop needs at least {MIN_MARKERS} markers, got {lift.shape[0]}"
            )
        self.lift = lift
        self.winding = np.asarray(winding, dtype=int).reshape(2)
        closure = np.linalg.norm(
            np.diff(lift, axis=0, append=(lift[:1] + self.winding)), axis=1
        )
        if np.any(closure < 1e-14):
            raise TopologyError("consecutive lifted markers coincide")

    @classmethod
    def from_points(cls, points):
        """Build from torus points in [0,1)^2; the lift is unwrapped by minimal images."""
        pts = np.asarray(points, dtype=float)
        steps = np.diff(pts, axis=0)
        steps -= np.round(steps)
        lift = np.vstack([pts[:1], pts[:1] + np.cumsum(steps, axis=0)])
        last = pts[0] - lift[-1]
        last -= np.round(last)
        winding = np.round(lift[-1] + last - lift[0]).astype(int)
        return cls(lift, winding)

    @property
    def n(self):
        return self.lift.shape[0]

    @property
    def markers(self):
        return np.mod(self.lift, 1.0)

    # -- spectral machinery -------------------------------------------------

    def _periodic_part(self):
        """lift minus the linear winding ramp; periodic in the loop parameter."""
        alpha = 2.0 * np.pi * np.arange(self.n) / self.n
        return self.lift - np.outer(alpha / (2.0 * np.pi), self.winding)

    def _coeffs(self):
        c = np.fft.fft(self._periodic_part(), axis=0) / self.n
        cut = SPECTRAL_FILTER_REL * np.abs(c).max()
        c[np.abs(c) < cut] = 0.0
        return c

    def derivative(self, order=1):
        """d^order x / d alpha^order at the markers (alpha in [0, 2pi))."""
        dq = np.fft.ifft(
            _spectral_derivative_coeffs(self._coeffs(), order) * self.n, axis=0
        ).real
        if order == 1:
            dq = dq + self.winding / (2.0 * np.pi)
        return dq

    def evaluate(self, alphas, order=0):
        """Trigonometric evaluation of the lift (or a derivative) at arbitrary alphas."""
        alphas = np.asarray(alphas, dtype=float)
        coeffs = self._coeffs()
        if order:
            coeffs = _spectral_derivative_coeffs(coeffs, order)
        k = _modes(self.n)
        ek = np.exp(1j * np.outer(alphas, k))
        vals = (ek @ coeffs).real
        if order == 0:
            vals = vals + np.outer(alphas / (2.0 * np.pi), self.winding)
        elif order == 1:
            vals = vals + self.winding / (2.0 * np.pi)
        return vals

    def speed(self):
        return np.linalg.norm(self.derivative(1), axis=1)

    def length(self):
        return 2.0 * np.pi * float(np.mean(self.speed()))

    def tangent(self):
        d = self.derivative(1)
        return d / np.linalg.norm(d, axis=1)[:, None]

    def normal(self):
        """Outer normal (right-hand normal of the travel direction)."""
        t = self.tangent()
        return np.column_stack([t[:, 1], -t[:, 0]])

    def curvature(self):
        d1 = self.derivative(1)
        d2 = self.derivative(2)
        cross = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        return cross / np.linalg.norm(d1, axis=1) ** 3

    def arclength_weights(self):
        return self.speed() * (2.0 * np.pi / self.n)

    def arclength(self):
        """Cumulative arclength s(alpha_j), s(0) = 0, spectrally integrated."""
        sp = self.speed()
        c = np.fft.fft(sp) / self.n
        k = _modes(self.n)
        anti = np.zeros_like(c)
        nz = k != 0
        anti[nz] = c[nz] / (1j * k[nz])
        osc = np.fft.ifft(anti * self.n).real
        alpha = 2.0 * np.pi * np.arange(self.n) / self.n
        return c[0].real * alpha + (osc - osc[0])

    def _area_raw(self):
        """Signed shoelace integral of the lift, exact also for winding loops.

        For winding loops the linear ramp is integrated analytically so the
        quadrature stays spectral; the result is defined modulo half-integer
        lattice shifts which the owning curve resolves by point sampling.
        """
        q = self._periodic_part()
        dq = np.fft.ifft(
            _spectral_derivative_coeffs(np.fft.fft(q, axis=0), 1), axis=0
        ).real
        c = self.winding / (2.0 * np.pi)
        per = q[:, 0] * dq[:, 1] - q[:, 1] * dq[:, 0]
        per += c[1] * q[:, 0] - c[0] * q[:, 1]
        g = c[0] * q[:, 1] - c[1] * q[:, 0]
        integral = 2.0 * np.pi * np.mean(per) + 2.0 * np.pi * g[0] - 2.0 * np.pi * np.mean(g)
        return 0.5 * integral

    @property
    def orientation(self):
        """+1 for counterclockwise lifts (disk-like phase inside), else -1."""
        if np.any(self.winding):
            return 1
        return 1 if self._area_raw() >= 0 else -1


@dataclass
class CurveSamples:
    """Per-marker scalar (or vector) samples aligned with the marker order."""

    values: np.ndarray
    kind: str = "generic"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)

    def __len__(self):
        return self.values.shape[0]


class PeriodicCurve:
    """Oriented interface on T^2: one or more disjoint marker loops."""

    def __init__(self, components, check=True):
        if not components:
            raise ValueError("curve needs at least one loop")
        self.components = list(components)
        if check:
            self.validate()

    @property
    def n_markers(self):
        return sum(lp.n for lp in self.components)

    def loop_slices(self):
        out, start = [], 0
        for lp in self.components:
            out.append(slice(start, start + lp.n))
            start += lp.n
        return out

    def concat(self, per_loop_fn):
        return np.concatenate([np.asarray(per_loop_fn(lp)) for lp in self.components])

    def markers(self):
        return np.vstack([lp.markers for lp in self.components])

    def lifts(self):
        return np.vstack([lp.lift for lp in self.components])

    def normals(self):
        return np.vstack([lp.normal() for lp in self.components])

    def tangents(self):
        return np.vstack([lp.tangent() for lp in self.components])

    def arclength_weights(self):
        return self.concat(lambda lp: lp.arclength_weights())

    def split(self, samples):
        vals = samples.values if isinstance(samples, CurveSamples) else np.asarray(samples)
        return [vals[s] for s in self.loop_slices()]

    def require_samples(self, samples):
        if len(samples) != self.n_markers:
            raise ValueError(
                f"samples length {len(samples)} does not match {self.n_markers} markers"
            )
        return samples.values if isinstance(samples, CurveSamples) else np.asarray(samples)

    # -- validation ----------------------------------------------------------

    def validate(self, check_intersections=True, probe_area=True):
        total_winding = np.zeros(2, dtype=int)
        for lp in self.components:
            if lp.n < MIN_MARKERS:
                raise ResolutionError("loop with fewer than 16 markers")
            w = lp.winding
            if np.any(w != 0) and not set(np.abs(w)) <= {0, 1}:
                raise TopologyError(f"unsupported winding {w}")
            total_winding += w
        if np.any(total_winding != 0):
            raise OrientationError(
                f"boundary is not null-homologous: windings sum to {total_winding}"
            )
        if check_intersections:
            self._check_intersections()
        enclosed_area(self, check=probe_area)  # OrientationError on inconsistency

    def _check_intersections(self):
        a0, a1, loop_id, idx = [], [], [], []
        for li, lp in enumerate(self.components):
            nxt = np.vstack([lp.lift[1:], lp.lift[:1] + lp.winding])
            a0.append(lp.lift)
            a1.append(nxt)
            loop_id.append(np.full(lp.n, li))
            idx.append(np.arange(lp.n))
        a0, a1 = np.vstack(a0), np.vstack(a1)
        loop_id, idx = np.concatenate(loop_id), np.concatenate(idx)
        nseg = a0.shape[0]
        if nseg > 4096:
            raise ResolutionError("intersection test beyond desk scale")
        mids = 0.5 * (a0 + a1)
        radii = 0.5 * np.linalg.norm(a1 - a0, axis=1)
        ii, jj = np.triu_indices(nseg, k=1)
        # candidate pairs: minimal-image midpoint distance below the sum of
        # segment radii (short segments have a unique relevant lattice image)
        delta = mids[jj] - mids[ii]
        shift = np.round(delta)
        close = np.linalg.norm(delta - shift, axis=1) <= radii[ii] + radii[jj] + 1e-12
        ii, jj, shift = ii[close], jj[close], shift[close]
        same = loop_id[ii] == loop_id[jj]
        nloc = np.array([self.components[l].n for l in loop_id])
        adjacent = (
            same
            & (np.all(shift == 0.0, axis=1))
            & (
                (np.abs(idx[ii] - idx[jj]) == 1)
                | (np.abs(idx[ii] - idx[jj]) == nloc[ii] - 1)
            )
        )
        p, q = a0[ii], a1[ii]
        r = a0[jj] - shift
        s = a1[jj] - shift

        def ccw(u, v, w):
            return (v[:, 0] - u[:, 0]) * (w[:, 1] - u[:, 1]) - (v[:, 1] - u[:, 1]) * (
                w[:, 0] - u[:, 0]
            )

        hit = (
            (np.sign(ccw(p, q, r)) * np.sign(ccw(p, q, s)) < 0)
            & (np.sign(ccw(r, s, p)) * np.sign(ccw(r, s, q)) < 0)
            & ~adjacent
        )
        if np.any(hit):
            raise TopologyError("curve self-intersects or loops collide")


# -- public operations --------------------------------------------------------


def resample_equal_arclength(curve, n_per_loop, max_passes=3):
    """Redistribute markers to equal arclength on each loop (tangential move only).

    The markers are moved along the trigonometric interpolant of the input, so
    the represented curve (and its enclosed area) is preserved to spectral
    accuracy; an extra pass tightens the spacing when the input
    parametrization is far from arclength.
    """
    if n_per_loop < MIN_MARKERS:
        raise ResolutionError(f"n_per_loop must be >= {MIN_MARKERS}")
    out = curve
    for it in range(max_passes):
        out = _resample_once(out, n_per_loop)
        dev = 0.0
        for lp in out.components:
            w = lp.arclength_weights()
            dev = max(dev, float((w.max() - w.min()) / w.mean()))
        if dev < 1e-12:
            break
    out.validate(check_intersections=True, probe_area=False)
    return out


def _resample_once(curve, n_per_loop):
    new_loops = []
    for lp in curve.components:
        L = lp.length()
        targets = np.arange(n_per_loop) * (L / n_per_loop)
        alpha = np.interp(
            targets,
            np.append(lp.arclength(), L),
            np.append(2.0 * np.pi * np.arange(lp.n) / lp.n, 2.0 * np.pi),
        )
        # Newton refinement of s(alpha) = target with spectral evaluations
        sp_c = np.fft.fft(lp.speed()) / lp.n
        k = _modes(lp.n)
        anti = np.zeros_like(sp_c)
        anti[k != 0] = sp_c[k != 0] / (1j * k[k != 0])
        osc0 = np.sum(anti).real

        for _ in range(8):
            ek = np.exp(1j * np.outer(alpha, k))
            res = sp_c[0].real * alpha + ((ek @ anti).real - osc0) - targets
            if np.max(np.abs(res)) < 1e-13 * max(L, 1.0):
                break
            spd = (ek @ sp_c).real
            alpha = alpha - res / spd
        new_lift = lp.evaluate(alpha)
        new_loops.append(MarkerLoop(new_lift, lp.winding))
    return PeriodicCurve(new_loops, check=False)


def curvature(curve):
    """Scalar curvature kappa = H (in 2D) at each marker, disk-phase positive."""
    return CurveSamples(curve.concat(lambda lp: lp.curvature()), kind="curvature")


def _d_ds(loop, values, order):
    """Arclength derivatives on one loop by spectral differentiation.

    Uses the chain rule through the loop parameter, so it stays exact for
    band-limited data even when markers are only approximately equidistributed.
    """
    c = np.fft.fft(values) / loop.n
    sp = loop.speed()
    d1 = np.fft.ifft(_spectral_derivative_coeffs(c, 1) * loop.n).real / sp
    if order == 1:
        return d1
    c1 = np.fft.fft(d1) / loop.n
    return np.fft.ifft(_spectral_derivative_coeffs(c1, 1) * loop.n).real / sp


def arclength_derivative(curve, f):
    vals = curve.require_samples(f)
    parts = [
        _d_ds(lp, part, 1) for lp, part in zip(curve.components, curve.split(vals))
    ]
    return CurveSamples(np.concatenate(parts), kind="derivative")


def surface_laplacian(curve, f):
    """Second arclength derivative per loop (the surface Laplacian on T^2 curves)."""
    vals = curve.require_samples(f)
    parts = [
        _d_ds(lp, part, 2) for lp, part in zip(curve.components, curve.split(vals))
    ]
    return CurveSamples(np.concatenate(parts), kind="laplacian")


def perimeter(curve):
    return float(sum(lp.length() for lp in curve.components))


def integrate_ds(curve, values):
    """Arclength integral of per-marker samples over the whole curve."""
    vals = curve.require_samples(values) if not isinstance(values, np.ndarray) else values
    return float(np.sum(curve.arclength_weights() * np.asarray(vals)))


def _wrap_knots(a, d, y0):
    """(segment index, parameter) pairs where a segment's y crosses y0 + Z."""
    dy = d[:, 1]
    lo = np.minimum(a[:, 1], a[:, 1] + dy)
    hi = np.maximum(a[:, 1], a[:, 1] + dy)
    klo = np.ceil(lo - y0 - 1e-12).astype(int)
    khi = np.floor(hi - y0 + 1e-12).astype(int)
    counts = np.where(dy != 0.0, np.maximum(khi - klo + 1, 0), 0)
    seg = np.repeat(np.arange(a.shape[0]), counts)
    if seg.size == 0:
        return seg, np.empty(0)
    offs = np.arange(counts.sum()) - np.repeat(
        np.concatenate([[0], np.cumsum(counts)[:-1]]), counts
    )
    kk = klo[seg] + offs
    t = (y0 + kk - a[seg, 1]) / dy[seg]
    return seg, t


def _polygon_area_scanline(curve, y0=0.34078604706783, x0=0.21370586327156):
    """Exact phase area of the marker polygon on the torus, winding-aware.

    Column-coverage identity: for each x the covered length equals
    sum(-dir * yhat) over crossings plus 1 if the base point (x, y0) lies
    inside; integrating in x turns the first part into per-segment trapezoid
    integrals of the mod-1 height and the second into the covered length of
    the base row.  Exact for polygons, including winding loops.
    """
    a, b = _all_segments(curve)
    d = b - a
    ys_all = np.concatenate([a[:, 1], b[:, 1]])
    while np.min(np.abs(((ys_all - y0 + 0.5) % 1.0) - 0.5)) < 1e-12:
        y0 += 0.0123456789
    corner_inside = float(signed_distance_points(curve, np.array([[x0, y0]]))[0] < 0)
    # row measure: half-open crossing rule, one count per vertex pass
    seg, t = _wrap_knots(a, d, y0)
    measure = corner_inside
    if seg.size:
        dy = d[seg, 1]
        ok = np.where(dy > 0, (t >= 0.0) & (t < 1.0), (t > 0.0) & (t <= 1.0))
        segk, tk = seg[ok], t[ok]
        xhat = np.mod(a[segk, 0] + tk * d[segk, 0] - x0, 1.0)
        measure += float(np.sum(np.sign(d[segk, 1]) * xhat))
    # column integrals: -int yhat dx per segment, split where yhat wraps
    nseg = a.shape[0]
    keep_int = (t > 1e-15) & (t < 1.0 - 1e-15)
    interior, t_int = seg[keep_int], t[keep_int]
    counts = np.bincount(interior, minlength=nseg)
    # flat per-segment knot lists [0, sorted interior wraps ..., 1]
    starts = np.concatenate([[0], np.cumsum(counts + 2)[:-1]])
    flat = np.zeros(int(np.sum(counts + 2)))
    segid = np.repeat(np.arange(nseg), counts + 2)
    if t_int.size:
        lex = np.lexsort((t_int, interior))
        seg_by, t_by = interior[lex], t_int[lex]
        run = np.arange(t_by.size) - np.repeat(
            np.concatenate([[0], np.cumsum(counts)[:-1]]), counts
        )
        flat[starts[seg_by] + 1 + run] = t_by
    flat[starts + counts + 1] = 1.0
    piece = np.ones(flat.size, dtype=bool)
    piece[starts + counts + 1] = False  # the last knot of a segment starts no piece
    idx0 = np.nonzero(piece)[0]
    t0, t1, segp = flat[idx0], flat[idx0 + 1], segid[idx0]
    tm = 0.5 * (t0 + t1)
    shift = y0 + np.floor(a[segp, 1] + tm * d[segp, 1] - y0)
    yh0 = a[segp, 1] + t0 * d[segp, 1] - shift
    yh1 = a[segp, 1] + t1 * d[segp, 1] - shift
    dx = (t1 - t0) * d[segp, 0]
    total = -float(np.sum(0.5 * (yh0 + yh1) * dx))
    return total + measure


def _polygon_shoelace_lift(curve):
    """Mixed shoelace of the marker polygon on the lift (chord areas)."""
    out = 0.0
    for lp in curve.components:
        p = lp.lift
        q = np.vstack([p[1:], p[:1] + lp.winding])
        out += 0.5 * float(np.sum(p[:, 0] * q[:, 1] - p[:, 1] * q[:, 0]))
    return out


def enclosed_area(curve, check=False, n_probe=24):
    """Area of the phase E in (0,1), winding-aware and spectrally accurate.

    Exact polygon area by the torus scanline, plus the chord-to-arc lens
    correction of the trigonometric interpolant (a sum of local areas, hence
    free of mod-1 ambiguity).
    """
    poly = _polygon_area_scanline(curve)
    lens = sum(lp._area_raw() for lp in curve.components) - _polygon_shoelace_lift(curve)
    area = poly + lens
    if not 0.0 < area < 1.0:
        raise OrientationError(f"computed phase area {area:.6f} not in (0,1)")
    if check:
        xs = (np.arange(n_probe) + 0.5) / n_probe
        px, py = np.meshgrid(xs, xs, indexing="ij")
        probes = np.column_stack([px.ravel(), py.ravel()])
        est = float(np.mean(signed_distance_points(curve, probes) < 0.0))
        if abs(area - est) > 0.05:
            raise OrientationError(
                f"loop orientations inconsistent: area {area:.4f} vs sampled {est:.4f}"
            )
    return area


def _all_segments(curve):
    segs_a, segs_b, nus = [], [], []
    for lp in curve.components:
        nxt = np.vstack([lp.lift[1:], lp.lift[:1] + lp.winding])
        segs_a.append(lp.lift)
        segs_b.append(nxt)
    return np.vstack(segs_a), np.vstack(segs_b)


def signed_distance_points(curve, points, chunk=4096):
    """Signed torus distance to the interface, negative inside E.

    Brute force over all lifted segments with the displacement wrapped to the
    minimal image of each point-segment pair (segments are short, so the
    nearest image is unique); the sign comes from the side of the nearest
    segment, which is reliable for valid curves.
    """
    a, b = _all_segments(curve)
    ab = b - a
    ab2 = np.sum(ab * ab, axis=1)
    points = np.asarray(points, dtype=float)
    out = np.empty(points.shape[0])
    for lo in range(0, points.shape[0], chunk):
        p = points[lo : lo + chunk]
        rel = p[:, None, :] - a[None, :, :]
        rel -= np.round(rel)
        t = np.clip(np.einsum("psd,sd->ps", rel, ab) / ab2, 0.0, 1.0)
        diff = rel - t[:, :, None] * ab[None, :, :]
        d2 = np.einsum("psd,psd->ps", diff, diff)
        j = np.argmin(d2, axis=1)
        rows = np.arange(p.shape[0])
        cross = ab[j, 0] * diff[rows, j, 1] - ab[j, 1] * diff[rows, j, 0]
        # cross > 0: point lies left of travel, i.e. inside E, where d is negative
        out[lo : lo + chunk] = np.sqrt(d2[rows, j]) * np.where(cross > 0, -1.0, 1.0)
    return out


def signed_distance_grid(curve, grid_n):
    """Signed distance field d_E on the uniform grid (negative inside E)."""
    from .fields import GridField

    if grid_n < 64:
        raise ResolutionError("grid_n must be >= 64")
    xs = np.arange(grid_n) / grid_n
    gx, gy = np.meshgrid(xs, xs, indexing="ij")
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    d = signed_distance_points(curve, pts)
    return GridField(values=d.reshape(grid_n, grid_n), zero_mean=False)


def tubular_radius(reference):
    """Half the minimum cross-component distance, capped at 0.45/max|kappa|."""
    kap = np.abs(curvature(reference).values)
    cap = 0.45 / max(float(kap.max()), 1e-12)
    cap = min(cap, 0.25)
    if len(reference.components) < 2:
        return cap
    best = np.inf
    loops = reference.components
    for i, li in enumerate(loops):
        other = PeriodicCurve(
            [l for j, l in enumerate(loops) if j != i], check=False
        )
        d = np.abs(signed_distance_points(other, li.markers))
        best = min(best, float(d.min()))
    return min(0.5 * best, cap)


def height_function(curve, reference, tol=1e-10):
    """Height psi of `curve` over `reference`, sampled at the reference markers.

    Solves x_curve(alpha) = x_ref + t * nu_ref per reference marker by a
    vectorized Newton iteration on (t, alpha); raises GraphFailure when a ray
    misses the curve inside the tubular radius or the graph map folds.
    """
    if len(curve.components) != len(reference.components):
        raise GraphFailure("component count differs from reference")
    tub = tubular_radius(reference)
    out = []
    for lp_c, lp_r in zip(curve.components, reference.components):
        base = lp_r.lift
        nu = lp_r.normal()
        # local lattice alignment: bring the curve lift near the reference lift
        off = np.round(np.mean(lp_c.lift, axis=0) - np.mean(base, axis=0))
        clift = lp_c.lift - off
        d2 = np.sum((base[:, None, :] - clift[None, :, :]) ** 2, axis=2)
        jstar = np.argmin(d2, axis=1)
        alpha = 2.0 * np.pi * jstar / lp_c.n
        t = np.einsum("id,id->i", clift[jstar] - base, nu)
        k = _modes(lp_c.n)
        coeffs = np.fft.fft(clift - np.outer(np.arange(lp_c.n) / lp_c.n, lp_c.winding), axis=0) / lp_c.n
        dcoeffs = _spectral_derivative_coeffs(coeffs, 1)
        converged = np.zeros(base.shape[0], dtype=bool)
        for _ in range(60):
            ek = np.exp(1j * np.outer(alpha, k))
            x = (ek @ coeffs).real + np.outer(alpha / (2 * np.pi), lp_c.winding)
            dx = (ek @ dcoeffs).real + lp_c.winding / (2 * np.pi)
            F = x - base - t[:, None] * nu
            converged = np.linalg.norm(F, axis=1) < tol
            if np.all(converged):
                break
            # solve [ -nu, dx ] [dt, dalpha]^T = -F  (2x2 per marker)
            det = -nu[:, 0] * dx[:, 1] + nu[:, 1] * dx[:, 0]
            if np.any(np.abs(det) < 1e-14):
                raise GraphFailure("tangential ray: curve not a graph over reference")
            dt = (-F[:, 0] * dx[:, 1] + F[:, 1] * dx[:, 0]) / det
            da = (nu[:, 0] * F[:, 1] - nu[:, 1] * F[:, 0]) / det
            t = t + dt
            alpha = alpha + da
            if np.any(np.abs(t) > 2.0 * tub):
                raise GraphFailure("normal ray leaves the tubular neighborhood")
        if not np.all(converged):
            raise GraphFailure("height solve did not converge")
        if np.any(np.abs(t) > tub):
            raise GraphFailure("height exceeds tubular radius")
        # single-cover check: the preimage parameter must advance monotonically
        dal = np.diff(np.unwrap(np.mod(alpha, 2.0 * np.pi)))
        if base.shape[0] > 2 and not (np.all(dal > 0) or np.all(dal < 0)):
            raise GraphFailure("normal rays hit the curve more than once")
        out.append(t)
    return CurveSamples(np.concatenate(out), kind="height")


# -- snapshot file ------------------------------------------------------------

CSV_HEADER = "loop,idx,x,y,wind_x,wind_y,orient"


def write_snapshot(curve, path):
    """Curve snapshot CSV with coordinates at full float64 precision."""
    lines = [CSV_HEADER]
    for li, lp in enumerate(curve.components):
        m = lp.markers
        for j in range(lp.n):
            lines.append(
                f"{li},{j},{m[j, 0]:.17g},{m[j, 1]:.17g},"
                f"{lp.winding[0]},{lp.winding[1]},{lp.orientation}"
            )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_snapshot(path):
    rows = np.genfromtxt(path, delimiter=",", names=True)
    rows = np.atleast_1d(rows)
    loops = []
    for li in np.unique(rows["loop"]).astype(int):
        sel = rows[rows["loop"] == li]
        sel = sel[np.argsort(sel["idx"])]
        pts = np.column_stack([sel["x"], sel["y"]])
        lp = MarkerLoop.from_points(pts)
        want = np.array([int(sel["wind_x"][0]), int(sel["wind_y"][0])])
        if not np.array_equal(lp.winding, want):
            raise TopologyError("snapshot winding inconsistent with marker path")
        loops.append(lp)
    return PeriodicCurve(loops)
