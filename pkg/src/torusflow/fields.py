"""Doubly periodic scalar fields on T^2 and the spectral Poisson machinery.

Grid convention: an n x n field samples the nodes (i/n, j/n) with the FIRST
index along x.  The module is deliberately free of the coupling constant
gamma so potentials can be reused across gamma sweeps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates
from scipy.spatial import cKDTree
from scipy.special import erf

from .errors import ResolutionError
from .geometry import CurveSamples, integrate_ds, perimeter

log = logging.getLogger(__name__)


@dataclass
class GridField:
    """n x n nodal samples of a scalar field on the unit torus."""

    values: np.ndarray
    zero_mean: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ValueError("GridField values must be square")
        if self.zero_mean:
            scale = np.abs(self.values).max()
            if scale > 0 and abs(self.values.mean()) > 1e-12 * scale:
                raise ValueError("zero_mean field has a nonzero mean")

    @property
    def n(self):
        return self.values.shape[0]

    def mean(self):
        return float(self.values.mean())

    # -- flat binary file: 16-byte header (n, zero_mean flag), row-major f64 --

    def to_binary(self, path):
        with open(path, "wb") as fh:
            np.array([self.n, int(self.zero_mean)], dtype="<u8").tofile(fh)
            self.values.astype("<f8").tofile(fh)

    @classmethod
    def from_binary(cls, path):
        with open(path, "rb") as fh:
            head = np.fromfile(fh, dtype="<u8", count=2)
            n, flag = int(head[0]), bool(head[1])
            vals = np.fromfile(fh, dtype="<f8", count=n * n).reshape(n, n)
        return cls(values=vals, zero_mean=flag)

    def to_csv(self, path):
        np.savetxt(path, self.values, delimiter=",")


@dataclass
class PotentialTrace:
    """Trace and normal derivative of a potential along the curve."""

    boundary_values: CurveSamples
    normal_derivative: CurveSamples


def _wavenumbers(n):
    k = np.fft.fftfreq(n, d=1.0 / n)
    kx, ky = np.meshgrid(k, k, indexing="ij")
    return kx, ky, 4.0 * np.pi**2 * (kx**2 + ky**2)


def solve_poisson_zero_mean(rhs):
    """Spectral solve of -Lap v = rhs - mean(rhs) with zero-mean v."""
    n = rhs.n
    _, _, k2 = _wavenumbers(n)
    rh = np.fft.fft2(rhs.values)
    rh[0, 0] = 0.0
    k2[0, 0] = 1.0
    vh = rh / k2
    vh[0, 0] = 0.0
    return GridField(values=np.fft.ifft2(vh).real, zero_mean=True)


def neg_laplacian(field):
    """Spectral -Lap of a grid field (for residual checks)."""
    _, _, k2 = _wavenumbers(field.n)
    return GridField(values=np.fft.ifft2(k2 * np.fft.fft2(field.values)).real)


def dirichlet_energy(field):
    """Integral of |Dv|^2 over the torus by Parseval."""
    n = field.n
    _, _, k2 = _wavenumbers(n)
    c = np.fft.fft2(field.values) / n**2
    return float(np.sum(k2 * np.abs(c) ** 2))


def spectral_pairing(field_a, field_b):
    """Integral of D v_a . D v_b (polarization of the Dirichlet energy)."""
    n = field_a.n
    _, _, k2 = _wavenumbers(n)
    ca = np.fft.fft2(field_a.values) / n**2
    cb = np.fft.fft2(field_b.values) / n**2
    return float(np.sum(k2 * (ca * np.conj(cb)).real))


def gradient(field):
    kx, ky, _ = _wavenumbers(field.n)
    fh = np.fft.fft2(field.values)
    gx = np.fft.ifft2(2j * np.pi * kx * fh).real
    gy = np.fft.ifft2(2j * np.pi * ky * fh).real
    return gx, gy


# -- rasterization -------------------------------------------------------------


def _segments_with_closure(curve):
    a, b = [], []
    for lp in curve.components:
        nxt = np.vstack([lp.lift[1:], lp.lift[:1] + lp.winding])
        a.append(lp.lift)
        b.append(nxt)
    return np.vstack(a), np.vstack(b)


def _crossing_fill(curve, n):
    """Exact +-1 sign grid by line-crossing parity; column pass, then row pass
    for columns the first pass cannot resolve (e.g. axis-parallel lamellae)."""
    a, b = _segments_with_closure(curve)
    sign = np.zeros((n, n))

    def ceil_idx(x):
        return np.ceil(x * n - 1e-9).astype(int)

    def pass_axis(axis):
        d = b - a
        fw = d[:, axis] > 0
        bw = d[:, axis] < 0
        # half-open inclusion at the departure endpoint: each vertex crossing
        # is counted exactly once, tangential touches not at all
        m_lo = np.where(fw, ceil_idx(a[:, axis]), ceil_idx(b[:, axis]))
        m_hi = np.where(fw, ceil_idx(b[:, axis]) - 1, ceil_idx(a[:, axis]) - 1)
        m_lo[~(fw | bw)] = 0
        m_hi[~(fw | bw)] = -1
        counts = np.maximum(m_hi - m_lo + 1, 0)
        total = int(counts.sum())
        if total == 0:
            return None
        seg_idx = np.repeat(np.arange(a.shape[0]), counts)
        offs = np.arange(total) - np.repeat(
            np.concatenate([[0], np.cumsum(counts)[:-1]]), counts
        )
        mm = m_lo[seg_idx] + offs
        t = (mm / n - a[seg_idx, axis]) / d[seg_idx, axis]
        other = a[seg_idx, 1 - axis] + t * d[seg_idx, 1 - axis]
        col = np.mod(mm, n)
        ycross = np.mod(other, 1.0)
        direction = np.sign(d[seg_idx, axis])
        out = np.zeros((n, n))
        nodes = np.arange(n) / n
        order = np.lexsort((ycross, col))
        col, ycross, direction = col[order], ycross[order], direction[order]
        starts = np.searchsorted(col, np.arange(n))
        stops = np.searchsorted(col, np.arange(n) + 1)
        for c in range(n):
            if starts[c] == stops[c]:
                continue
            ys = ycross[starts[c] : stops[c]]
            ds = direction[starts[c] : stops[c]]
            idx = np.searchsorted(ys, nodes + 1e-15)
            # inner normal is (tau_y, -tau_x) flipped: for x-lines (axis 0) the
            # phase lies above a dx>0 crossing, for y-lines below a dy>0 one
            orient = -1.0 if axis == 0 else 1.0
            region_signs = orient * ds[0] * (-1.0) ** np.arange(len(ys) + 1)
            vals = region_signs[idx]
            if axis == 0:
                out[c, :] = vals
            else:
                out[:, c] = vals
        return out

    colpass = pass_axis(0)
    if colpass is not None:
        sign = colpass
    missing = sign == 0
    if np.any(missing):
        rowpass = pass_axis(1)
        if rowpass is not None:
            sign = np.where(missing & (rowpass != 0), rowpass, sign)
    # a column with no axis-0 crossing is single-phase along y: copy the sign
    # from any node the row pass resolved, else probe one representative node
    holes = np.nonzero(np.any(sign == 0, axis=1))[0]
    probe_cols = []
    for c in holes:
        col = sign[c]
        nz = col[col != 0]
        if nz.size:
            sign[c, col == 0] = nz[0]
        else:
            probe_cols.append(c)
    if probe_cols:
        from .geometry import signed_distance_points

        probe_cols = np.asarray(probe_cols)
        reps = np.column_stack(
            [probe_cols / n, np.full(probe_cols.size, 0.236067977)]
        )
        s = np.where(signed_distance_points(curve, reps) < 0, 1.0, -1.0)
        sign[probe_cols, :] = s[:, None]
    if np.any(sign == 0):
        raise ResolutionError("rasterization could not resolve the phase sign")
    return sign


def _band_nodes(curve, n, cutoff):
    """Flat indices of grid nodes within `cutoff` of any segment bounding box."""
    a, b = _segments_with_closure(curve)
    mask = np.zeros((n, n), dtype=bool)
    pad = cutoff
    for s in range(a.shape[0]):
        lo = np.minimum(a[s], b[s]) - pad
        hi = np.maximum(a[s], b[s]) + pad
        ix = np.arange(int(np.floor(lo[0] * n)), int(np.ceil(hi[0] * n)) + 1) % n
        iy = np.arange(int(np.floor(lo[1] * n)), int(np.ceil(hi[1] * n)) + 1) % n
        mask[np.ix_(ix, iy)] = True
    return np.nonzero(mask.ravel())[0]


def _band_distances(curve, n, cutoff):
    """(flat node indices, signed distances) for nodes within cutoff of the curve."""
    idx = _band_nodes(curve, n, cutoff)
    if idx.size == 0:
        return idx, np.empty(0)
    a, b = _segments_with_closure(curve)
    mids = 0.5 * (a + b)
    shifts = np.array([[i, j] for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float)
    imgs = (mids[None, :, :] + shifts[:, None, :]).reshape(-1, 2)
    seg_ids = np.tile(np.arange(a.shape[0]), 9)
    tree = cKDTree(imgs)
    pts = np.column_stack([(idx // n) / n, (idx % n) / n])
    kq = min(12, imgs.shape[0])
    _, nbr = tree.query(pts, k=kq, workers=-1)
    nbr = np.atleast_2d(nbr)
    ab = b - a
    ab2 = np.sum(ab * ab, axis=1)
    best_d2 = np.full(idx.shape[0], np.inf)
    best_cross = np.zeros(idx.shape[0])
    for colk in range(nbr.shape[1]):
        j = seg_ids[nbr[:, colk]]
        shift = imgs[nbr[:, colk]] - mids[j]
        rel = pts - (a[j] + shift)
        t = np.clip(np.einsum("pd,pd->p", rel, ab[j]) / ab2[j], 0.0, 1.0)
        diff = rel - t[:, None] * ab[j]
        d2 = np.einsum("pd,pd->p", diff, diff)
        upd = d2 < best_d2
        cross = ab[j, 0] * diff[:, 1] - ab[j, 1] * diff[:, 0]
        best_cross = np.where(upd, cross, best_cross)
        best_d2 = np.where(upd, d2, best_d2)
    d = np.sqrt(best_d2) * np.where(best_cross > 0, -1.0, 1.0)
    keep = np.abs(d) <= cutoff
    return idx[keep], d[keep]


def rasterize_indicator(curve, n, width=1.5, smooth=True):
    """u_E on the grid: +1 inside, -1 outside, erf profile across the interface.

    The transition has slope 2/(width*h) at the interface, i.e. it spans about
    `width` grid cells.  smooth=False returns the raw parity signs.
    """
    if n < 128:
        raise ResolutionError("rasterization grid must have n >= 128")
    sign = _crossing_fill(curve, n)
    if not smooth:
        return GridField(values=sign, zero_mean=False)
    h = 1.0 / n
    cutoff = 4.0 * width * h
    idx, d = _band_distances(curve, n, cutoff)
    vals = sign.ravel().copy()
    vals[idx] = -erf(np.sqrt(np.pi) * d / (width * h))
    return GridField(values=vals.reshape(n, n), zero_mean=False)


# -- traces --------------------------------------------------------------------


def _zero_pad_coeffs(fh, pad):
    """Zero-pad unshifted fft2 output to a pad-times finer grid (Nyquist dropped)."""
    n = fh.shape[0]
    m = pad * n
    half = n // 2
    rows = np.concatenate([np.arange(half), np.arange(half + 1, n)])
    targets = np.where(rows < half, rows, m - n + rows)
    big = np.zeros((m, m), dtype=complex)
    big[np.ix_(targets, targets)] = fh[np.ix_(rows, rows)]
    return big


def interpolate_grid(field_values, points, pad=4):
    """Sample a grid field at arbitrary torus points.

    Spectral zero-padding to a pad-times finer grid followed by bicubic
    interpolation; accurate to ~1e-8 for the smoothed fields this package
    produces.
    """
    n = field_values.shape[0]
    big = _zero_pad_coeffs(np.fft.fft2(field_values), pad)
    fine = np.fft.ifft2(big).real * pad**2
    coords = np.mod(np.asarray(points), 1.0) * (pad * n)
    return map_coordinates(fine, coords.T, order=3, mode="grid-wrap")


def potential_of_set(curve, n=256, width=1.5, pad=4):
    """Zero-mean torus potential v_E of the phase indicator, plus its curve trace."""
    u = rasterize_indicator(curve, n, width=width)
    v = solve_poisson_zero_mean(u)
    markers = curve.markers()
    tr = interpolate_grid(v.values, markers, pad=pad)
    gx, gy = gradient(v)
    nu = curve.normals()
    dnv = (
        interpolate_grid(gx, markers, pad=pad) * nu[:, 0]
        + interpolate_grid(gy, markers, pad=pad) * nu[:, 1]
    )
    trace = PotentialTrace(
        boundary_values=CurveSamples(tr, kind="boundary-data"),
        normal_derivative=CurveSamples(dnv, kind="boundary-data"),
    )
    return v, trace


def line_mode_coefficients(curve, phi, n=256, width=2.0, kcut_frac=0.25):
    """Fourier coefficients of the line measure phi*ds (Gaussian-spread, deconvolved).

    Gaussian spreading of width `width` grid cells, exact division by the
    window transfer function, spectrum truncated at kcut_frac*n.  Returns the
    coefficient array c(k) = integral phi exp(-2 pi i k.x) ds in fft layout.
    """
    vals = np.asarray(curve.require_samples(phi), dtype=float)
    w = curve.arclength_weights()
    h = 1.0 / n
    sigma = 0.5 * width * h
    half = int(np.ceil(6.0 * sigma * n))
    rho = np.zeros((n, n))
    pts = np.mod(curve.markers(), 1.0)
    base = np.floor(pts * n).astype(int)
    offs = np.arange(-half, half + 1)
    ox, oy = np.meshgrid(offs, offs, indexing="ij")
    amp = w * vals / (2.0 * np.pi * sigma**2)
    for j in range(pts.shape[0]):
        ix = np.mod(base[j, 0] + ox, n)
        iy = np.mod(base[j, 1] + oy, n)
        dx = (base[j, 0] + ox) * h - pts[j, 0]
        dy = (base[j, 1] + oy) * h - pts[j, 1]
        np.add.at(rho, (ix, iy), amp[j] * np.exp(-(dx**2 + dy**2) / (2.0 * sigma**2)))
    c = np.fft.fft2(rho) / n**2
    kx, ky, _ = _wavenumbers(n)
    transfer = np.exp(-2.0 * np.pi**2 * sigma**2 * (kx**2 + ky**2))
    mask = np.sqrt(kx**2 + ky**2) <= kcut_frac * n
    out = np.zeros_like(c)
    out[mask] = c[mask] / transfer[mask]
    return out


def line_measure_potential(curve, phi, n=256, width=2.0):
    """Potential v_phi of the zero-mean line density phi on the curve.

    The arclength mean of phi is projected out first (and reported) so the
    density matches the zero-mean Green function convention.
    """
    vals = np.array(curve.require_samples(phi), dtype=float)
    mean = integrate_ds(curve, vals) / perimeter(curve)
    if abs(mean) > 1e-13 * (1.0 + np.abs(vals).max()):
        log.info("line_measure_potential: projected out density mean %.3e", mean)
    vals = vals - mean
    c = line_mode_coefficients(curve, CurveSamples(vals), n=n, width=width)
    _, _, k2 = _wavenumbers(n)
    k2[0, 0] = 1.0
    vh = c * n**2 / k2
    vh[0, 0] = 0.0
    return GridField(values=np.fft.ifft2(vh).real, zero_mean=True)


def pair_energy(curve, phi_a, phi_b, n=256, width=2.0):
    """Double Green integral of two line densities via spectral polarization."""
    ca = line_mode_coefficients(curve, phi_a, n=n, width=width)
    cb = line_mode_coefficients(curve, phi_b, n=n, width=width)
    _, _, k2 = _wavenumbers(n)
    k2[0, 0] = 1.0
    ca = ca.copy()
    ca[0, 0] = 0.0
    return float(np.sum((ca * np.conj(cb)).real / k2))
