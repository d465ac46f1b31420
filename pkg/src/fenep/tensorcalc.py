"""Symmetric 2x2 tensor calculus for the FENE-P conformation tensor.

The conformation tensor and every quantity derived from it (relaxation
tensors, regularized logarithms, entropy densities) are symmetric 2x2
matrices.  Throughout this package such a tensor is stored as an array
whose last axis has length 3 and holds the components ``(xx, xy, yy)``;
all functions here broadcast over any leading axes, so a single tensor,
a per-cell field and a 100000-sample Monte Carlo batch all go through
the same code path.

Conventions baked into the component layout::

    trace(phi)  = xx + yy
    ||phi||^2   = xx^2 + 2*xy^2 + yy^2          (Frobenius)
    phi : psi   = phi_xx*psi_xx + 2*phi_xy*psi_xy + phi_yy*psi_yy

The regularized scalar functions form a consistent family built from a
cut parameter ``delta``:

* ``g_delta``: the logarithm continued below ``delta`` by its tangent,
  concave and C^1 on all of R, with derivative ``min(1/s, 1/delta)``;
* ``beta_delta(s) = max(s, delta)``, the reciprocal of that derivative;
* ``beta_delta_b`` additionally caps at the extensibility bound ``b``;
* ``h_delta``: the logarithm flattened to slope ``delta`` above
  ``1/delta``, so that ``h_delta'(g_delta'(s)) = beta_delta(s)``.

Applied spectrally (via the closed-form 2x2 eigendecomposition) these
give total, globally Lipschitz matrix functions, which is what lets the
implicit schemes accept any symmetric iterate while still agreeing with
the physical model wherever the conformation tensor is comfortably
positive definite with trace below ``b``.

Setting ``b = math.inf`` switches every ``b``-dependent formula to its
infinite-extensibility (Oldroyd-B) limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "RegParams",
    "IDENTITY",
    "tensor",
    "trace",
    "frob_norm",
    "ddot",
    "det_sym",
    "inv_sym",
    "to_full",
    "from_full",
    "eig_sym",
    "apply_spectral",
    "g_delta",
    "beta_delta",
    "beta_delta_b",
    "h_delta",
    "g_delta_mat",
    "beta_delta_mat",
    "neg_part",
    "pos_part",
    "relax_classic",
    "relax_reg",
    "k_delta",
    "entropy_density",
    "relax_flux",
    "lemma_margins_pair",
    "lemma_margins_scalar",
]

#: The identity tensor in (xx, xy, yy) component form.
IDENTITY = np.array([1.0, 0.0, 1.0])


@dataclass(frozen=True)
class RegParams:
    """Regularization cut ``delta`` and extensibility bound ``b``.

    ``delta`` must lie in (0, 1/2] and, when ``b`` is finite, must not
    exceed ``b``.  ``b = math.inf`` selects the Oldroyd-B limit.
    """

    delta: float
    b: float = math.inf

    def __post_init__(self) -> None:
        if not (0.0 < self.delta <= 0.5):
            raise ValueError(f"delta must lie in (0, 1/2], got {self.delta}")
        if not self.b > 0.0:
            raise ValueError(f"b must be positive, got {self.b}")
        if math.isfinite(self.b) and self.delta > self.b:
            raise ValueError(f"delta={self.delta} exceeds b={self.b}")

    @property
    def oldroyd_b(self) -> bool:
        return math.isinf(self.b)


# ---------------------------------------------------------------------------
# component arithmetic


def tensor(xx, xy, yy) -> np.ndarray:
    """Stack components into the (..., 3) tensor layout."""
    return np.stack(np.broadcast_arrays(
        np.asarray(xx, float), np.asarray(xy, float), np.asarray(yy, float)), axis=-1)


def trace(phi) -> np.ndarray:
    phi = np.asarray(phi, float)
    return phi[..., 0] + phi[..., 2]


def frob_norm(phi) -> np.ndarray:
    phi = np.asarray(phi, float)
    return np.sqrt(phi[..., 0] ** 2 + 2.0 * phi[..., 1] ** 2 + phi[..., 2] ** 2)


def ddot(phi, psi) -> np.ndarray:
    """Double contraction phi : psi of two symmetric tensors."""
    phi = np.asarray(phi, float)
    psi = np.asarray(psi, float)
    return (phi[..., 0] * psi[..., 0] + 2.0 * phi[..., 1] * psi[..., 1]
            + phi[..., 2] * psi[..., 2])


def det_sym(phi) -> np.ndarray:
    phi = np.asarray(phi, float)
    return phi[..., 0] * phi[..., 2] - phi[..., 1] ** 2


def inv_sym(phi) -> np.ndarray:
    """Inverse of a symmetric 2x2 tensor (caller guarantees invertibility)."""
    phi = np.asarray(phi, float)
    d = det_sym(phi)
    return tensor(phi[..., 2] / d, -phi[..., 1] / d, phi[..., 0] / d)


def to_full(phi) -> np.ndarray:
    """Expand (..., 3) components to full (..., 2, 2) matrices."""
    phi = np.asarray(phi, float)
    out = np.empty(phi.shape[:-1] + (2, 2))
    out[..., 0, 0] = phi[..., 0]
    out[..., 0, 1] = phi[..., 1]
    out[..., 1, 0] = phi[..., 1]
    out[..., 1, 1] = phi[..., 2]
    return out


def from_full(m, tol: float = 1e-12) -> np.ndarray:
    """Collapse full (..., 2, 2) matrices to components, checking symmetry."""
    m = np.asarray(m, float)
    skew = np.max(np.abs(m[..., 0, 1] - m[..., 1, 0]), initial=0.0)
    scale = np.max(np.abs(m), initial=0.0) + 1.0
    if skew > tol * scale:
        raise ValueError(f"matrix is not symmetric (skew part {skew:g})")
    return tensor(m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1])


# ---------------------------------------------------------------------------
# spectral machinery


def eig_sym(phi):
    """Closed-form eigendecomposition of symmetric 2x2 tensors.

    Parameters
    ----------
    phi : array_like, shape (..., 3)

    Returns
    -------
    w : ndarray, shape (..., 2)
        Eigenvalues in ascending order.
    v : ndarray, shape (..., 2, 2)
        Orthogonal matrices whose columns are the eigenvectors, with a
        deterministic sign (first nonzero component of each column is
        positive).  A degenerate spectrum returns the identity.
    """
    phi = np.asarray(phi, float)
    if not np.all(np.isfinite(phi)):
        raise ValueError("eig_sym: tensor entries must be finite")
    axx, axy, ayy = phi[..., 0], phi[..., 1], phi[..., 2]
    mean = 0.5 * (axx + ayy)
    half = 0.5 * (axx - ayy)
    r = np.hypot(half, axy)
    w = np.stack([mean - r, mean + r], axis=-1)

    # Eigenvector of the larger eigenvalue, picking whichever of the two
    # analytic forms keeps the dominant component free of cancellation.
    v2x = np.where(half >= 0.0, r + half, axy)
    v2y = np.where(half >= 0.0, axy, r - half)
    norm = np.hypot(v2x, v2y)
    degenerate = norm == 0.0
    safe = np.where(degenerate, 1.0, norm)
    v2x = np.where(degenerate, 0.0, v2x / safe)
    v2y = np.where(degenerate, 1.0, v2y / safe)
    v1x, v1y = -v2y, v2x

    def _fix_sign(x, y):
        flip = (x < 0.0) | ((x == 0.0) & (y < 0.0))
        s = np.where(flip, -1.0, 1.0)
        return x * s, y * s

    v1x, v1y = _fix_sign(v1x, v1y)
    v2x, v2y = _fix_sign(v2x, v2y)
    v = np.empty(phi.shape[:-1] + (2, 2))
    v[..., 0, 0], v[..., 1, 0] = v1x, v1y
    v[..., 0, 1], v[..., 1, 1] = v2x, v2y
    if np.any(degenerate):
        v[degenerate] = np.eye(2)
    return w, v


def _recompose(w_fun, v) -> np.ndarray:
    """Assemble sum_i f(w_i) v_i v_i^T back into component form."""
    f1, f2 = w_fun[..., 0], w_fun[..., 1]
    v1x, v1y = v[..., 0, 0], v[..., 1, 0]
    v2x, v2y = v[..., 0, 1], v[..., 1, 1]
    return tensor(f1 * v1x ** 2 + f2 * v2x ** 2,
                  f1 * v1x * v1y + f2 * v2x * v2y,
                  f1 * v1y ** 2 + f2 * v2y ** 2)


def apply_spectral(g, phi) -> np.ndarray:
    """Apply a scalar function to a symmetric tensor through its spectrum.

    ``g`` must accept an ndarray of eigenvalues.  If it produces a
    non-finite value anywhere, the offending eigenvalue is reported.
    """
    w, v = eig_sym(phi)
    with np.errstate(all="ignore"):
        gw = np.asarray(g(w), float)
    if not np.all(np.isfinite(gw)):
        bad = np.asarray(w)[~np.isfinite(gw)]
        raise ValueError(
            f"spectral function undefined at eigenvalue {bad.flat[0]!r}")
    return _recompose(gw, v)


# ---------------------------------------------------------------------------
# regularized scalar functions


def g_delta(s, rp: RegParams):
    """Regularized logarithm and its derivative.

    Returns ``(value, derivative)`` with ``value = ln s`` for
    ``s >= delta`` and the tangent continuation ``s/delta + ln delta - 1``
    below, so both are defined for every real ``s`` and the derivative is
    ``min(1/s, 1/delta)`` branchwise.
    """
    s = np.asarray(s, float)
    d = rp.delta
    above = s >= d
    safe = np.where(above, s, 1.0)
    value = np.where(above, np.log(safe), s / d + math.log(d) - 1.0)
    deriv = np.where(above, 1.0 / safe, 1.0 / d)
    return value, deriv


def beta_delta(s, rp: RegParams) -> np.ndarray:
    """``max(s, delta)``, the reciprocal of the regularized log-derivative."""
    return np.maximum(np.asarray(s, float), rp.delta)


def beta_delta_b(s, rp: RegParams) -> np.ndarray:
    """``min(max(s, delta), b)``; the cap is inactive in the Oldroyd-B limit."""
    return np.minimum(beta_delta(s, rp), rp.b)


def h_delta(s, rp: RegParams) -> np.ndarray:
    """Logarithm flattened to slope ``delta`` above ``1/delta`` (s > 0)."""
    s = np.asarray(s, float)
    if np.any(s <= 0.0):
        bad = s[s <= 0.0]
        raise ValueError(f"h_delta requires s > 0, got {bad.flat[0]!r}")
    d = rp.delta
    cap = 1.0 / d
    low = s <= cap
    return np.where(low, np.log(np.where(low, s, 1.0)),
                    d * s + math.log(cap) - 1.0)


def _h_delta_dd(x, y, rp: RegParams) -> np.ndarray:
    """Stable divided difference (h_delta(x) - h_delta(y)) / (x - y).

    Both arguments must be positive.  Coincident arguments return
    ``h_delta'``.  On the logarithmic branch the difference is computed
    with ``log1p`` so nearly equal arguments lose no precision; arguments
    straddling the kink at ``1/delta`` are split exactly at the kink.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    d = rp.delta
    cap = 1.0 / d
    lo = np.minimum(x, y)
    hi = np.maximum(x, y)
    diff = hi - lo
    same = diff == 0.0
    safe = np.where(same, 1.0, diff)
    # piece below the kink: d/ds h = 1/s, integrated with log1p for stability
    lo_c = np.minimum(lo, cap)
    hi_c = np.minimum(hi, cap)
    log_part = np.log1p((hi_c - lo_c) / lo_c)
    # piece above the kink: constant slope delta
    lin_part = d * (np.maximum(hi, cap) - np.maximum(lo, cap))
    dd = (log_part + lin_part) / safe
    # h_delta'(s) = min(1/s, delta) ... careful: slope is 1/s below cap, delta above
    deriv = np.where(lo <= cap, 1.0 / lo, d)
    return np.where(same, deriv, dd)


# ---------------------------------------------------------------------------
# spectral versions


def g_delta_mat(phi, rp: RegParams):
    """Spectral regularized log of a tensor: returns ``(G(phi), G'(phi))``."""
    w, v = eig_sym(phi)
    val, der = g_delta(w, rp)
    return _recompose(val, v), _recompose(der, v)


def beta_delta_mat(phi, rp: RegParams) -> np.ndarray:
    """Spectral ``max(., delta)`` of a tensor."""
    w, v = eig_sym(phi)
    return _recompose(np.maximum(w, rp.delta), v)


def neg_part(phi) -> np.ndarray:
    """Spectral negative part ``min(., 0)``."""
    w, v = eig_sym(phi)
    return _recompose(np.minimum(w, 0.0), v)


def pos_part(phi) -> np.ndarray:
    """Spectral positive part ``max(., 0)``."""
    w, v = eig_sym(phi)
    return _recompose(np.maximum(w, 0.0), v)


# ---------------------------------------------------------------------------
# model tensors


def relax_classic(phi, b: float) -> np.ndarray:
    """Unregularized relaxation tensor (1 - tr/b)^(-1) I - phi^(-1).

    Requires ``phi`` positive definite and, for finite ``b``,
    ``trace(phi) < b``.  With ``b = inf`` this is ``I - phi^(-1)``.
    """
    phi = np.asarray(phi, float)
    w, _ = eig_sym(phi)
    if np.any(w[..., 0] <= 0.0):
        bad = w[..., 0][w[..., 0] <= 0.0]
        raise ValueError(
            f"relax_classic requires a positive definite tensor; "
            f"smallest eigenvalue {bad.flat[0]!r}")
    tr = trace(phi)
    if math.isinf(b):
        coef = np.ones_like(tr)
    else:
        if np.any(tr >= b):
            bad = tr[tr >= b]
            raise ValueError(
                f"relax_classic requires trace < b={b}; got trace {bad.flat[0]!r}")
        coef = 1.0 / (1.0 - tr / b)
    inv = inv_sym(phi)
    return tensor(coef - inv[..., 0], -inv[..., 1], coef - inv[..., 2])


def relax_reg(phi, eta, rp: RegParams) -> np.ndarray:
    """Regularized relaxation tensor g'(1 - eta/b) I - g'(phi).

    Total on symmetric tensors and real ``eta``; coincides with
    ``relax_classic`` whenever the eigenvalues of ``phi`` and
    ``1 - eta/b`` all sit above ``delta``.  In the Oldroyd-B limit the
    scalar prefactor is 1.
    """
    eta = np.asarray(eta, float)
    _, gp = g_delta_mat(phi, rp)
    if rp.oldroyd_b:
        coef = np.ones_like(eta)
    else:
        _, coef = g_delta(1.0 - eta / rp.b, rp)
    return tensor(coef - gp[..., 0], -gp[..., 1], coef - gp[..., 2])


def k_delta(phi, eta, rp: RegParams) -> np.ndarray:
    """Stress-scaling factor sqrt(beta_delta_b(eta) / tr(beta_delta(phi))).

    Bounds the momentum coupling in L2: ||k A beta||^2 <= b tr(A^2 beta)
    pointwise.  The Oldroyd-B limit of the scheme uses k = 1.
    """
    eta = np.asarray(eta, float)
    if rp.oldroyd_b:
        return np.ones(np.broadcast_shapes(np.shape(eta), np.shape(phi)[:-1]))
    denom = trace(beta_delta_mat(phi, rp))
    return np.sqrt(beta_delta_b(eta, rp) / denom)


def entropy_density(phi, eta, rp: RegParams) -> np.ndarray:
    """Regularized elastic entropy density.

    For finite ``b`` this is ``-[b g(1 - eta/b) + tr(g(phi) + I)]`` with
    the regularized logarithm ``g``; it is nonnegative whenever
    ``eta = trace(phi)``.  The Oldroyd-B limit drops the ``b``-term in
    favor of its limit ``eta -> trace(phi)`` contribution, giving
    ``tr(phi - g(phi) - I)``.
    """
    eta = np.asarray(eta, float)
    gval, _ = g_delta_mat(phi, rp)
    tr_g = trace(gval)
    if rp.oldroyd_b:
        return trace(phi) - tr_g - 2.0
    bval, _ = g_delta(1.0 - eta / rp.b, rp)
    return -(rp.b * bval + tr_g + 2.0)


def relax_flux(phi, eta, rp: RegParams) -> np.ndarray:
    """The product A_delta(phi, eta) beta_delta(phi) in component form.

    Both factors are spectral functions of ``phi`` (plus a multiple of the
    identity), so they commute and the product is symmetric; using
    ``beta_delta(phi) g'(phi) = I`` it collapses to

        g'(1 - eta/b) * beta_delta(phi) - I,

    with coefficient 1 in the Oldroyd-B limit.  This is the term the
    momentum equation couples to the velocity gradient and the stress
    relaxation drives to zero.
    """
    beta = beta_delta_mat(phi, rp)
    if rp.oldroyd_b:
        return beta - IDENTITY
    eta = np.asarray(eta, float)
    _, coef = g_delta(1.0 - eta / rp.b, rp)
    return coef[..., None] * beta - IDENTITY


# ---------------------------------------------------------------------------
# lemma oracles
#
# Each margin is the quantity "lhs - rhs" of an inequality that is exact in
# real arithmetic, so a margin >= -slack (tiny slack for rounding) certifies
# the property.  Identity checks return the negated residual norm so the
# same convention applies.


def lemma_margins_pair(phi, psi, eta, rp: RegParams) -> dict[str, np.ndarray]:
    """Inequality margins for tensor pairs (phi, psi) and scalar eta.

    Covers the reciprocal identity beta g' = I, entropy nonnegativity and
    its norm lower bounds, both concavity inequalities of the regularized
    log, the squared-difference monotonicity bound, the Lipschitz bounds
    of the spectral functions, the quadratic-form positivity of the
    relaxation tensor, and (finite b) the k-weighted coupling bound.
    """
    phi = np.asarray(phi, float)
    psi = np.asarray(psi, float)
    eta = np.asarray(eta, float)
    d = rp.delta

    g_phi, gp_phi = g_delta_mat(phi, rp)
    g_psi, gp_psi = g_delta_mat(psi, rp)
    b_phi = beta_delta_mat(phi, rp)
    b_psi = beta_delta_mat(psi, rp)

    out: dict[str, np.ndarray] = {}

    prod = to_full(b_phi) @ to_full(gp_phi)
    out["inverse_identity"] = -np.sqrt(
        (prod[..., 0, 0] - 1.0) ** 2 + prod[..., 0, 1] ** 2
        + prod[..., 1, 0] ** 2 + (prod[..., 1, 1] - 1.0) ** 2)

    ent = trace(phi) - trace(g_phi)
    out["entropy_nonneg"] = ent - 2.0
    out["entropy_half_norm"] = ent - 0.5 * frob_norm(phi)
    out["entropy_neg_part"] = ent - frob_norm(neg_part(phi)) / (2.0 * d)
    out["identity_gap"] = ddot(phi, IDENTITY - gp_phi) - (0.5 * frob_norm(phi) - 2.0)

    diff = phi - psi
    dtr_g = trace(g_phi) - trace(g_psi)
    out["concavity_upper"] = ddot(diff, gp_psi) - dtr_g
    out["concavity_lower"] = dtr_g - ddot(diff, gp_phi)

    dgp = gp_phi - gp_psi
    out["lipschitz_gap"] = -ddot(diff, dgp) - d ** 2 * frob_norm(dgp) ** 2

    out["lipschitz_beta"] = frob_norm(diff) - frob_norm(b_phi - b_psi)
    out["lipschitz_neg_part"] = frob_norm(diff) - frob_norm(neg_part(phi) - neg_part(psi))
    out["lipschitz_gprime"] = frob_norm(diff) / d ** 2 - frob_norm(dgp)

    # tr((eta I - g'(phi))^2 beta(phi)) >= 0 and the same with the full
    # relaxation tensor in place of the bracket.
    m = tensor(eta - gp_phi[..., 0], -gp_phi[..., 1], eta - gp_phi[..., 2])
    m2 = from_full(to_full(m) @ to_full(m), tol=1e-9)
    out["positive_term"] = ddot(m2, b_phi)

    a = relax_reg(phi, eta, rp)
    a2 = from_full(to_full(a) @ to_full(a), tol=1e-9)
    relax_quad = ddot(a2, b_phi)
    out["relax_quadratic"] = relax_quad

    if not rp.oldroyd_b:
        k = k_delta(phi, eta, rp)
        kab = k[..., None] * from_full(to_full(a) @ to_full(b_phi), tol=1e-9)
        out["k_coupling_bound"] = rp.b * relax_quad - frob_norm(kab) ** 2
    return out


def lemma_margins_scalar(s, rp: RegParams) -> dict[str, np.ndarray]:
    """Scalar trace-variable inequality margins (finite b only)."""
    if rp.oldroyd_b:
        raise ValueError("scalar trace bounds require finite b")
    s = np.asarray(s, float)
    b = rp.b
    val, der = g_delta(1.0 - s / b, rp)
    out = {
        "trace_entropy_bound": (-b * val - s) - 0.5 * np.maximum(np.abs(s) - 3.0 * b, 0.0),
        "trace_stress_gap": (der - 1.0) * s - np.maximum(np.abs(s) - b, 0.0),
    }
    return out
