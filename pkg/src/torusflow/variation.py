"""Criticality residuals, the second-variation quadratic form, and spectra.

The quadratic form on zero-average normal perturbations phi of a critical
interface is assembled in four parts,

    Q[phi] = int |D_tau phi|^2  -  int kappa^2 phi^2
             + 8 gamma (double Green integral of phi)
             + 4 gamma int (d_nu v_E) phi^2,

over a per-loop Fourier basis with one global mean constraint.  Infinitesimal
translations eta.nu always lie in the kernel; the spectral gap is reported
after deflating them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh

from .fields import (
    _wavenumbers,
    dirichlet_energy,
    line_measure_potential,
    line_mode_coefficients,
    potential_of_set,
)
from .geometry import (
    CurveSamples,
    arclength_derivative,
    curvature,
    integrate_ds,
    perimeter,
)
from . import shapes


def criticality_residual(curve, gamma, grid_n=256):
    """Residual of H + 4 gamma v_E = lambda with the arclength-mean multiplier.

    Returns (residual samples, lambda); the caller judges closeness to
    criticality from the reported sup and L2 norms.
    """
    kap = curvature(curve).values
    if gamma != 0.0:
        _, trace = potential_of_set(curve, n=grid_n)
        kap = kap + 4.0 * gamma * trace.boundary_values.values
    lam = integrate_ds(curve, kap) / perimeter(curve)
    return CurveSamples(kap - lam, kind="boundary-data"), float(lam)


def translation_basis(curve, rel_tol=1e-10):
    """L2-orthonormal basis of nonvanishing translation traces e_i . nu.

    Diagonalizes the 2x2 Gram matrix of (e_x.nu, e_y.nu); directions with
    norm below rel_tol * perimeter are excluded (the paper-style index set).
    Returns (basis functions as rows, index list, gram condition number).
    """
    nu = curve.normals()
    w = curve.arclength_weights()
    gram = np.einsum("i,id,ie->de", w, nu, nu)
    evals, evecs = np.linalg.eigh(gram)
    per = perimeter(curve)
    basis, index = [], []
    for i in range(2):
        norm = np.sqrt(max(evals[i], 0.0))
        if norm <= rel_tol * per:
            continue
        vec = nu @ evecs[:, i]
        basis.append(vec / norm)
        index.append(i)
    cond = float(evals[-1] / evals[0]) if evals[0] > 0 else np.inf
    return np.array(basis), index, cond


def min_translation_distance(phi, curve):
    """L2 distance of phi from the span of translation traces, normalized."""
    vals = np.asarray(curve.require_samples(phi), dtype=float)
    w = curve.arclength_weights()
    norm = np.sqrt(float(np.sum(w * vals**2)))
    if norm == 0.0:
        raise ValueError("translation distance of the zero function")
    basis, _, _ = translation_basis(curve)
    proj = vals.copy()
    for b in basis:
        proj -= float(np.sum(w * vals * b)) * b
    return float(np.sqrt(max(np.sum(w * proj**2), 0.0)) / norm)


# -- basis -----------------------------------------------------------------


def _mode_basis(curve, n_modes):
    """Per-loop [1, cos(m a), sin(m a)] columns and their arclength derivatives."""
    cols, dcols, labels = [], [], []
    nm = curve.n_markers
    for li, lp in enumerate(curve.components):
        a = 2.0 * np.pi * np.arange(lp.n) / lp.n
        L = lp.length()
        sl_start = sum(l.n for l in curve.components[:li])
        sl = slice(sl_start, sl_start + lp.n)

        def put(vals, dvals, lab):
            col = np.zeros(nm)
            dcol = np.zeros(nm)
            col[sl] = vals
            dcol[sl] = dvals
            cols.append(col)
            dcols.append(dcol)
            labels.append((li,) + lab)

        put(np.ones(lp.n), np.zeros(lp.n), ("const",))
        for m in range(1, n_modes + 1):
            if 2 * m >= lp.n:
                break
            q = 2.0 * np.pi * m / L  # physical wavenumber on this loop
            put(np.cos(m * a), -q * np.sin(m * a), ("cos", m))
            put(np.sin(m * a), q * np.cos(m * a), ("sin", m))
    return np.array(cols).T, np.array(dcols).T, labels


@dataclass
class SecondVariationMatrix:
    """Four-part assembly of the quadratic form over the mode basis."""

    basis: np.ndarray  # markers x n_basis
    basis_derivative: np.ndarray
    labels: list
    local_part: np.ndarray
    curvature_part: np.ndarray
    nonlocal_kernel_part: np.ndarray
    potential_part: np.ndarray
    gamma: float
    gram: np.ndarray  # L2 Gram matrix of the basis
    means: np.ndarray  # arclength integrals of the basis columns
    curve: object = None
    criticality_sup: float = 0.0
    warning: str = ""

    def total(self, gamma=None):
        g = self.gamma if gamma is None else gamma
        return (
            self.local_part
            + self.curvature_part
            + 8.0 * g * self.nonlocal_kernel_part
            + 4.0 * g * self.potential_part
        )


def assemble_second_variation(
    curve, gamma, n_modes=8, grid_n=256, crit_tol=1e-4, delta_width=2.0, method="kress"
):
    """Assemble the four matrices of the quadratic form over the Fourier basis.

    method="kress" (default) evaluates the nonlocal block and d_nu v_E through
    the single-layer quadrature so the two gamma terms cancel on translation
    traces to quadrature accuracy; method="grid" rebuilds both from
    line-measure potentials and the rasterized v_E (the independent
    cross-check route).
    """
    B, dB, labels = _mode_basis(curve, n_modes)
    w = curve.arclength_weights()
    kap = curvature(curve).values
    local = dB.T @ (w[:, None] * dB)
    curv = -B.T @ ((w * kap**2)[:, None] * B)
    res, lam = criticality_residual(curve, gamma, grid_n=grid_n)
    crit_sup = float(np.abs(res.values).max())
    warning = ""
    if crit_sup > crit_tol * max(1.0, abs(lam)):
        warning = (
            f"curve is not critical (sup residual {crit_sup:.3e}); the assembled "
            "form omits the first-variation remainder and is diagnostic only"
        )
        warnings.warn(warning)
    if method == "kress":
        from .bie import assemble_single_layer, potential_normal_derivative

        op = assemble_single_layer(curve)
        dnv = potential_normal_derivative(curve, op).values
        WB = w[:, None] * B
        nonlocal_part = WB.T @ op.kernel @ WB
        nonlocal_part = 0.5 * (nonlocal_part + nonlocal_part.T)
    elif method == "grid":
        _, trace = potential_of_set(curve, n=grid_n)
        dnv = trace.normal_derivative.values
        _, _, k2 = _wavenumbers(grid_n)
        k2[0, 0] = 1.0
        cols = []
        for jb in range(B.shape[1]):
            c = line_mode_coefficients(
                curve, CurveSamples(B[:, jb]), n=grid_n, width=delta_width
            )
            c[0, 0] = 0.0
            cols.append((c / np.sqrt(k2)).ravel())
        V = np.array(cols)
        nonlocal_part = (V @ V.conj().T).real
    else:
        raise ValueError("method must be 'kress' or 'grid'")
    pot = B.T @ ((w * dnv)[:, None] * B)
    gram = B.T @ (w[:, None] * B)
    means = B.T @ w
    return SecondVariationMatrix(
        basis=B,
        basis_derivative=dB,
        labels=labels,
        local_part=local,
        curvature_part=curv,
        nonlocal_kernel_part=nonlocal_part,
        potential_part=pot,
        gamma=gamma,
        gram=gram,
        means=means,
        curve=curve,
        criticality_sup=crit_sup,
        warning=warning,
    )


@dataclass
class SpectrumReport:
    """Eigenpairs of the quadratic form on the zero-average space."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # marker-sampled eigenfunctions, column-aligned
    translation_overlap: np.ndarray
    translation_index: list
    gap_on_T_perp: float
    classification: str
    gamma: float
    stab_tol: float
    warning: str = ""

    def to_dict(self):
        return {
            "gamma": self.gamma,
            "eigenvalues": self.eigenvalues.tolist(),
            "translation_overlap": self.translation_overlap.tolist(),
            "translation_index": list(self.translation_index),
            "gap_on_T_perp": self.gap_on_T_perp,
            "classification": self.classification,
            "stab_tol": self.stab_tol,
            "warning": self.warning,
        }


def spectrum(matrix, stab_tol_rel=1e-6, overlap_threshold=0.99):
    """Generalized eigensolve of the assembled form on the zero-mean subspace."""
    from scipy.linalg import null_space

    A = matrix.total()
    M = matrix.gram
    c = matrix.means
    Z = null_space(c[None, :])  # orthonormal basis of the zero-mean subspace
    evals, evecs = eigh(Z.T @ A @ Z, Z.T @ M @ Z)
    funcs = matrix.basis @ (Z @ evecs)
    curve = matrix.curve
    w = curve.arclength_weights()
    tbasis, index, _ = translation_basis(curve)
    overlaps = np.zeros(evals.shape[0])
    for i in range(evals.shape[0]):
        f = funcs[:, i]
        nrm = float(np.sum(w * f * f))
        if nrm == 0:
            continue
        proj = sum(float(np.sum(w * f * b)) ** 2 for b in tbasis)
        overlaps[i] = proj / nrm
    scale = max(1.0, float(np.abs(evals).max()) if evals.size else 1.0)
    stab_tol = stab_tol_rel * scale
    non_trans = overlaps <= overlap_threshold
    gap = float(evals[non_trans].min()) if np.any(non_trans) else np.inf
    if gap > stab_tol:
        cls = "strictly_stable"
    elif abs(gap) <= stab_tol:
        cls = "marginal"
    else:
        cls = "unstable"
    return SpectrumReport(
        eigenvalues=evals,
        eigenvectors=funcs,
        translation_overlap=overlaps,
        translation_index=index,
        gap_on_T_perp=gap,
        classification=cls,
        gamma=matrix.gamma,
        stab_tol=stab_tol,
        warning=matrix.warning,
    )


def second_variation_direct(curve, gamma, phi, grid_n=256, operator=None):
    """Direct evaluation of the quadratic form on one sampled perturbation.

    With an operator supplied, both gamma terms go through the single-layer
    quadrature (as in the default assembly); otherwise the independent grid
    route (line-measure potential + rasterized v_E trace) is used.
    """
    vals = np.asarray(curve.require_samples(phi), dtype=float)
    w = curve.arclength_weights()
    kap = curvature(curve).values
    dphi = arclength_derivative(curve, CurveSamples(vals)).values
    out = float(np.sum(w * dphi**2) - np.sum(w * kap**2 * vals**2))
    if gamma != 0.0:
        if operator is not None:
            from .bie import potential_normal_derivative

            nl = operator.quadratic_form(vals)
            dnv = potential_normal_derivative(curve, operator).values
        else:
            vphi = line_measure_potential(curve, CurveSamples(vals), n=grid_n)
            nl = dirichlet_energy(vphi)
            _, trace = potential_of_set(curve, n=grid_n)
            dnv = trace.normal_derivative.values
        out += 8.0 * gamma * nl
        out += 4.0 * gamma * float(np.sum(w * dnv * vals**2))
    return out


def geometric_poincare_ratio(curve, floor=1e-24):
    """Ratio int (H - Hbar)^2 ds / int |D_tau H|^2 ds (inf when H is piecewise const)."""
    kap = curvature(curve).values
    w = curve.arclength_weights()
    hbar = float(np.sum(w * kap)) / float(np.sum(w))
    num = float(np.sum(w * (kap - hbar) ** 2))
    dk = arclength_derivative(curve, CurveSamples(kap)).values
    den = float(np.sum(w * dk**2))
    if num < floor:
        return 0.0
    if den < floor * max(num, 1.0):
        return np.inf
    return num / den


def lamella_threshold(
    gamma,
    k_max=8,
    h=0.5,
    n_per_loop=64,
    n_modes=6,
    grid_n=256,
    stab_tol_rel=1e-6,
    cache=None,
):
    """Smallest strip count k in 1..k_max whose lamella is strictly stable, else None.

    The four assembled matrices are gamma-independent, so a dict passed as
    `cache` lets gamma sweeps reuse them across calls.
    """
    if k_max > 16:
        raise ValueError("k_max beyond desk scale")
    for k in range(1, k_max + 1):
        key = (k, h, n_per_loop, n_modes, grid_n)
        mat = cache.get(key) if cache is not None else None
        if mat is None:
            curve = shapes.lamella(k, h=h, n_per_loop=n_per_loop)
            mat = assemble_second_variation(curve, gamma, n_modes=n_modes, grid_n=grid_n)
            if cache is not None:
                cache[key] = mat
        mat.gamma = gamma
        rep = spectrum(mat, stab_tol_rel=stab_tol_rel)
        if rep.classification == "strictly_stable":
            return k
    return None
