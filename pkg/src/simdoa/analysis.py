"""Closed-form MSE upper bound for the energy-peak angle estimator.

The estimator picks the strongest (antenna, snapshot) cell, so an error
occurs when some other cell's energy beats the true peak. Each cell's
energy is a noncentral chi-square variable; the probability that a given
cell wins is bounded through a three-moment chi-square approximation of
the energy difference followed by a Wilson-Hilferty cube-root transform.
Summing squared angle offsets weighted by these probabilities bounds the
MSE on each normalized-angle axis.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from .estimator import EnergyMap, electrical_angles, peak_index
from .geometry import steering_vector


class DegenerateField(ValueError):
    """Noiseless field is identically zero; no peak exists."""


def q_function(x):
    """Standard Gaussian tail probability P(Z > x). Accepts arrays."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


@dataclass(frozen=True)
class BoundInputs:
    """Everything the detection and MSE bounds need for one realized trial.

    ``g`` is the receiver-side response matrix (R x N), ``psi_x``/``psi_y``
    the true normalized electrical angles, ``rho`` the transmit SNR and
    ``s`` the realized unit-variance symbol held over the T snapshots.
    """

    g: np.ndarray
    proto: object
    n_x: int
    n_y: int
    psi_x: float
    psi_y: float
    rho: float
    s: complex

    def __post_init__(self):
        g = np.asarray(self.g, dtype=complex)
        if g.ndim != 2:
            raise ValueError("g must be a matrix")
        if self.rho < 0.0:
            raise ValueError("rho must be >= 0")
        if g.shape[1] != self.n_x * self.n_y:
            raise ValueError("g column count must equal n_x * n_y")
        object.__setattr__(self, "g", g)


@dataclass(frozen=True)
class MomentTriple:
    """First three moments of the energy-difference statistic at one cell."""

    mu1: float
    mu2: float
    mu3: float

    @property
    def h(self):
        if self.mu3 == 0.0:
            raise ValueError("h is undefined when mu3 = 0")
        return self.mu2 ** 3 / self.mu3 ** 2

    @property
    def b(self):
        h = self.h
        return h - self.mu1 * np.sqrt(h / self.mu2)


def clean_field(inp):
    """Noiseless unit-power receive field, one column per snapshot (N x T).

    Entry (n, t) is the n-th receive sample when the input layer runs
    snapshot t's phase profile against a unit plane wave from the true
    direction; SNR and symbol scaling are applied by the callers.
    """
    proto = inp.proto
    n = inp.n_x * inp.n_y
    idx = np.arange(n)
    ax = idx % inp.n_x        # 0-based x-fastest grid coordinates
    ay = idx // inp.n_x
    tdx = np.arange(proto.t)
    tx = tdx % proto.t_x
    ty = tdx // proto.t_x
    phase = (-2.0 * np.pi / (inp.n_x * proto.t_x)) * np.outer(ax, tx) \
        + (-2.0 * np.pi / (inp.n_y * proto.t_y)) * np.outer(ay, ty)
    sv = steering_vector(np.pi * inp.psi_x, np.pi * inp.psi_y, inp.n_x, inp.n_y)
    return inp.g @ (np.exp(1j * phase) * sv.entries[:, None])


def noncentrality_map(inp):
    """Noncentrality delta^2 = 2*rho*|field*s|^2 for every (n, t) cell."""
    field = clean_field(inp)
    return 2.0 * inp.rho * np.abs(field * inp.s) ** 2


def noncentrality(inp, n, t):
    """Single-cell noncentrality parameter (1-based antenna and snapshot)."""
    return float(noncentrality_map(inp)[n - 1, t - 1])


def peak_index_noiseless(inp):
    """1-based (n, t) of the strongest noiseless cell, estimator tie rule."""
    power = np.abs(clean_field(inp) * inp.s) ** 2
    if not np.any(power > 0.0):
        raise DegenerateField("noiseless field is identically zero")
    return peak_index(EnergyMap(power))


def moments(delta_nt, delta_peak):
    """Moments of the peak-vs-cell energy difference distribution.

    Evaluated term by term as written; the closed forms
    mu1 = delta_nt - delta_peak, mu2 = 4 + 2*(delta_nt + delta_peak),
    mu3 = 3*(delta_nt - delta_peak) are kept to test oracles only.
    """
    if delta_nt < 0.0 or delta_peak < 0.0:
        raise ValueError("noncentralities must be >= 0")
    out = []
    for i in (1, 2, 3):
        out.append((-1.0) ** i * (2.0 + i * delta_peak) + 2.0 + i * delta_nt)
    return MomentTriple(*out)


def _wilson_hilferty(nu1, nu2, nu3):
    """P{difference >= 0} for sign-adjusted moments, vectorized.

    The raw difference statistic is left-skewed at every non-peak cell, so
    the chi-square approximation is applied to its negation; nu_i are the
    negated statistic's moments (nu1 = -mu1, nu2 = mu2, nu3 = -mu3). The
    cube-root coordinate is centered and divided by its standard deviation
    sqrt(2/(9h)); b/h can only leave (0, 1] for hand-built moment triples,
    where the signed real cube root keeps the expression defined.
    """
    nu1 = np.asarray(nu1, dtype=float)
    nu2 = np.asarray(nu2, dtype=float)
    nu3 = np.asarray(nu3, dtype=float)
    probs = np.full(nu1.shape, 0.5)
    live = nu3 != 0.0
    h = nu2[live] ** 3 / nu3[live] ** 2
    ratio = 1.0 - nu1[live] / np.sqrt(h * nu2[live])
    z = (np.cbrt(ratio) - 1.0 + 2.0 / (9.0 * h)) * np.sqrt(9.0 * h / 2.0)
    probs[live] = np.clip(q_function(-z), 0.0, 1.0)
    return probs


def detection_prob_bound(mt, peak_cell=False):
    """Upper bound on the chance this cell outscores the true peak.

    The peak cell itself compares against itself (zero difference with
    probability one), which the moments cannot encode, so callers flag it
    and receive the trivial bound 1. A non-peak cell whose moments vanish
    (equal noncentralities) gets the exact symmetric-case value 1/2, which
    is also the continuous limit of the transform.
    """
    if peak_cell:
        return 1.0
    if mt.mu3 == 0.0:
        return 0.5 if mt.mu1 == 0.0 else 1.0
    return float(_wilson_hilferty(np.array([-mt.mu1]), np.array([mt.mu2]),
                                  np.array([-mt.mu3]))[0])


def _angle_grids(proto, n_x, n_y):
    """Lattice electrical angles per (n, t) cell as two (N, T) arrays."""
    n = n_x * n_y
    gx = np.empty((n, proto.t))
    gy = np.empty((n, proto.t))
    for t in range(1, proto.t + 1):
        for i in range(1, n + 1):
            gx[i - 1, t - 1], gy[i - 1, t - 1] = electrical_angles(i, t, n_x, n_y, proto)
    return gx, gy


def mse_bound(inp):
    """Per-axis MSE upper bounds for one realized (source, symbol) pair.

    Each cell contributes its squared angle offset (shorter arc on the
    period-2 circle) times its win-probability bound; the peak cell
    carries the trivial probability 1.
    """
    delta = noncentrality_map(inp)
    n_pk, t_pk = peak_index_noiseless(inp)
    d_peak = delta[n_pk - 1, t_pk - 1]
    nu1 = d_peak - delta
    probs = _wilson_hilferty(nu1, 4.0 + 2.0 * (delta + d_peak), 3.0 * nu1)
    probs[n_pk - 1, t_pk - 1] = 1.0
    gx, gy = _angle_grids(inp.proto, inp.n_x, inp.n_y)
    err_x = np.mod(inp.psi_x - gx + 1.0, 2.0) - 1.0
    err_y = np.mod(inp.psi_y - gy + 1.0, 2.0) - 1.0
    return float(np.sum(err_x ** 2 * probs)), float(np.sum(err_y ** 2 * probs))


def quantization_floor(n_x, n_y, proto, samples=None, grid=200001):
    """Expected squared snap-to-lattice error per normalized-angle axis.

    With no ``samples`` the source angle is uniform on [-1, 1) and the
    error is integrated numerically on a midpoint grid (the closed form
    step^2/12 is kept to the tests). ``samples`` as an (M, 2) array of
    (psi_x, psi_y) draws switches to the empirical average, covering
    non-uniform source distributions.
    """

    def axis_floor(cells, values):
        step = 2.0 / cells
        offset = np.mod(values + 1.0, step)
        err = np.minimum(offset, step - offset)
        return float(np.mean(err ** 2))

    if samples is None:
        base = -1.0 + 2.0 * (np.arange(grid) + 0.5) / grid
        sx = sy = base
    else:
        samples = np.asarray(samples, dtype=float)
        sx, sy = samples[:, 0], samples[:, 1]
    return (axis_floor(n_x * proto.t_x, sx), axis_floor(n_y * proto.t_y, sy))
