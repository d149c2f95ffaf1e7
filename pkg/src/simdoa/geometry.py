"""Static structures of a stacked-metasurface array system.

Everything in this module is determined by the physical layout alone:
grid index maps, propagation distances, Rayleigh-Sommerfeld attenuation
matrices, plane-wave steering vectors, and the 2D DFT target matrix.
"""

from dataclasses import dataclass, field
import math

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class SimGeometry:
    """Physical description of the metasurface stack, input layer and receiver.

    All lengths are in meters. Grids are counted in the x direction first;
    a linear index n on an (N_x, N_y) grid maps to coordinates via
    ``linear_to_grid(n, N_x)``.

    Parameters
    ----------
    wavelength : float
        Carrier wavelength.
    n_x, n_y : int
        Input-layer grid size.
    d_x, d_y : float
        Input-layer element spacings.
    m_x, m_y : int
        Intermediate-layer grid size.
    s_x, s_y : float
        Intermediate-layer element spacings.
    layers : int
        Number of intermediate layers L (the input layer is not counted).
    thickness : float
        Total stack thickness; adjacent layers sit ``thickness / layers`` apart.
    r_x, r_y : int, optional
        Receiver grid size, defaults to the input grid.
    u_x, u_y : float, optional
        Receiver element spacings, default to the input spacings.
    rotation : float
        In-plane rotation of the receiver array about its center, radians.
    """

    wavelength: float
    n_x: int
    n_y: int
    d_x: float
    d_y: float
    m_x: int
    m_y: int
    s_x: float
    s_y: float
    layers: int
    thickness: float
    r_x: int = None
    r_y: int = None
    u_x: float = None
    u_y: float = None
    rotation: float = 0.0

    def __post_init__(self):
        if self.r_x is None:
            object.__setattr__(self, "r_x", self.n_x)
        if self.r_y is None:
            object.__setattr__(self, "r_y", self.n_y)
        if self.u_x is None:
            object.__setattr__(self, "u_x", self.d_x)
        if self.u_y is None:
            object.__setattr__(self, "u_y", self.d_y)
        for name in ("n_x", "n_y", "m_x", "m_y", "r_x", "r_y", "layers"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        for name in ("wavelength", "d_x", "d_y", "s_x", "s_y", "u_x", "u_y", "thickness"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v <= 0.0:
                raise ValueError(f"{name} must be positive and finite, got {v!r}")
        if not math.isfinite(self.rotation):
            raise ValueError("rotation must be finite")

    @property
    def n(self):
        return self.n_x * self.n_y

    @property
    def m(self):
        return self.m_x * self.m_y

    @property
    def r(self):
        return self.r_x * self.r_y

    @property
    def s_layer(self):
        """Vertical gap between adjacent layers."""
        return self.thickness / self.layers

    @property
    def kappa(self):
        """Wavenumber 2*pi/wavelength."""
        return TWO_PI / self.wavelength

    @property
    def receiver_isomorphic(self):
        """True when the receiver repeats the input layer exactly."""
        return (
            self.r_x == self.n_x
            and self.r_y == self.n_y
            and self.u_x == self.d_x
            and self.u_y == self.d_y
            and self.rotation == 0.0
        )


@dataclass(frozen=True)
class PropagationSet:
    """Precomputed attenuation matrices for one geometry.

    ``w0`` maps the input layer to the first intermediate layer (M x N),
    ``w_inner`` holds the L-1 layer-to-layer matrices (M x M each), and
    ``w_last`` maps the final layer to the receiver (R x M).
    """

    w0: np.ndarray
    w_inner: tuple
    w_last: np.ndarray
    geometry: SimGeometry

    def __post_init__(self):
        m, n = self.w0.shape
        if (m, n) != (self.geometry.m, self.geometry.n):
            raise ValueError("w0 shape inconsistent with geometry")
        if len(self.w_inner) != self.geometry.layers - 1:
            raise ValueError("w_inner must hold layers-1 matrices")
        for w in self.w_inner:
            if w.shape != (m, m):
                raise ValueError("inner matrix shape inconsistent with geometry")
        if self.w_last.shape != (self.geometry.r, m):
            raise ValueError("w_last shape inconsistent with geometry")


@dataclass(frozen=True)
class SteeringVector:
    """Planar-array response to a plane wave.

    ``psi_x`` and ``psi_y`` are per-element phase progressions in radians;
    entry n equals exp(j*(psi_x*(n_x-1) + psi_y*(n_y-1))).
    """

    entries: np.ndarray
    psi_x: float
    psi_y: float


@dataclass(frozen=True)
class DftTarget:
    """2D DFT matrix over an (n_x, n_y) grid, plus the grid shape."""

    matrix: np.ndarray
    n_x: int
    n_y: int


@dataclass(frozen=True)
class FeasibilityReport:
    """Result of the rank check for exact DFT fitting."""

    feasible: bool
    m: int
    n: int
    message: str = field(default="")


def linear_to_grid(idx, width, height=None):
    """Map a 1-based linear index to 1-based (ix, iy) grid coordinates.

    The grid is filled along x first. When ``height`` is given the index is
    range-checked against the full grid.
    """
    idx = int(idx)
    width = int(width)
    if width < 1:
        raise ValueError("width must be >= 1")
    if idx < 1 or (height is not None and idx > width * int(height)):
        raise ValueError(f"index {idx} outside grid")
    iy = -(-idx // width)  # ceil(idx / width)
    ix = idx - (iy - 1) * width
    return ix, iy


def grid_to_linear(ix, iy, width):
    """Inverse of :func:`linear_to_grid`."""
    ix, iy, width = int(ix), int(iy), int(width)
    if not (1 <= ix <= width) or iy < 1:
        raise ValueError("grid coordinates out of range")
    return (iy - 1) * width + ix


def _grid_coords(count_x, count_y):
    """1-based (ix, iy) arrays for all linear indices of a grid, x-fastest."""
    idx = np.arange(1, count_x * count_y + 1)
    iy = -(-idx // count_x)
    ix = idx - (iy - 1) * count_x
    return ix, iy


def _centered_positions(count_x, count_y, sp_x, sp_y):
    """In-plane (x, y) positions of all grid elements, centered on the array."""
    ix, iy = _grid_coords(count_x, count_y)
    x = (ix - (1 + count_x) / 2.0) * sp_x
    y = (iy - (1 + count_y) / 2.0) * sp_y
    return x, y


def intra_sim_distance(m, m_breve, geom):
    """Propagation distance between meta-atoms on two adjacent inner layers.

    Both indices are 1-based linear indices on the (m_x, m_y) grid. The
    layers are vertically separated by ``geom.s_layer``.
    """
    mx, my = linear_to_grid(m, geom.m_x, geom.m_y)
    bx, by = linear_to_grid(m_breve, geom.m_x, geom.m_y)
    return math.sqrt(
        ((mx - bx) * geom.s_x) ** 2
        + ((my - by) * geom.s_y) ** 2
        + geom.s_layer**2
    )


def input_to_first_distance(m, n, geom):
    """Distance from input-layer atom n to first-layer atom m.

    The two grids are aligned on their centers, so offsets are measured
    between center-referenced element positions.
    """
    mx, my = linear_to_grid(m, geom.m_x, geom.m_y)
    nx, ny = linear_to_grid(n, geom.n_x, geom.n_y)
    dx = (mx - (1 + geom.m_x) / 2.0) * geom.s_x - (nx - (1 + geom.n_x) / 2.0) * geom.d_x
    dy = (my - (1 + geom.m_y) / 2.0) * geom.s_y - (ny - (1 + geom.n_y) / 2.0) * geom.d_y
    return math.sqrt(dx**2 + dy**2 + geom.s_layer**2)


def rs_coefficient(distance, emit_area, geom):
    """Rayleigh-Sommerfeld attenuation coefficient between two elements.

    Returns ``(emit_area * s_layer) / (2*pi*d^3) * (1 - j*kappa*d) * exp(j*kappa*d)``
    where d is the propagation distance. ``emit_area`` is the radiating
    cell area of the transmitting element.
    """
    distance = float(distance)
    emit_area = float(emit_area)
    if distance <= 0.0:
        raise ValueError("distance must be positive")
    if emit_area <= 0.0:
        raise ValueError("emit_area must be positive")
    kd = geom.kappa * distance
    amp = emit_area * geom.s_layer / (TWO_PI * distance**3)
    return amp * (1.0 - 1j * kd) * complex(math.cos(kd), math.sin(kd))


def _rs_matrix(dist, emit_area, geom):
    """Vectorized Rayleigh-Sommerfeld coefficients for a distance array."""
    kd = geom.kappa * dist
    amp = emit_area * geom.s_layer / (TWO_PI * dist**3)
    return amp * (1.0 - 1j * kd) * np.exp(1j * kd)


def build_propagation_matrices(geom):
    """Assemble all attenuation matrices for a geometry.

    The emitting-cell area convention is the transmitting element's own cell:
    d_x*d_y for the input layer and s_x*s_y for intermediate layers. When the
    receiver is isomorphic to the input layer the final matrix is exactly the
    transpose of the first; otherwise it is built from the receiver element
    positions (a centered u-spaced grid rotated by ``geom.rotation``).
    """
    in_x, in_y = _centered_positions(geom.n_x, geom.n_y, geom.d_x, geom.d_y)
    mid_x, mid_y = _centered_positions(geom.m_x, geom.m_y, geom.s_x, geom.s_y)
    sl2 = geom.s_layer**2

    d0 = np.sqrt(
        (mid_x[:, None] - in_x[None, :]) ** 2
        + (mid_y[:, None] - in_y[None, :]) ** 2
        + sl2
    )
    w0 = _rs_matrix(d0, geom.d_x * geom.d_y, geom)

    if geom.layers > 1:
        d_in = np.sqrt(
            (mid_x[:, None] - mid_x[None, :]) ** 2
            + (mid_y[:, None] - mid_y[None, :]) ** 2
            + sl2
        )
        w_in = _rs_matrix(d_in, geom.s_x * geom.s_y, geom)
        w_in.flags.writeable = False
        w_inner = (w_in,) * (geom.layers - 1)
    else:
        w_inner = ()

    if geom.receiver_isomorphic:
        w_last = w0.T.copy()
    else:
        rx, ry = _centered_positions(geom.r_x, geom.r_y, geom.u_x, geom.u_y)
        c, s = math.cos(geom.rotation), math.sin(geom.rotation)
        rot_x = rx * c - ry * s
        rot_y = rx * s + ry * c
        d_last = np.sqrt(
            (rot_x[:, None] - mid_x[None, :]) ** 2
            + (rot_y[:, None] - mid_y[None, :]) ** 2
            + sl2
        )
        w_last = _rs_matrix(d_last, geom.s_x * geom.s_y, geom)

    w0.flags.writeable = False
    w_last.flags.writeable = False
    return PropagationSet(w0=w0, w_inner=w_inner, w_last=w_last, geometry=geom)


def steering_vector(psi_x, psi_y, n_x, n_y):
    """Steering vector of an (n_x, n_y) planar grid.

    ``psi_x`` and ``psi_y`` are the per-element phase progressions in
    radians. The result is the Kronecker product of the y ramp with the
    x ramp, matching the x-fastest linear index convention.
    """
    if not (math.isfinite(psi_x) and math.isfinite(psi_y)):
        raise ValueError("steering angles must be finite")
    ax = np.exp(1j * psi_x * np.arange(n_x))
    ay = np.exp(1j * psi_y * np.arange(n_y))
    return SteeringVector(entries=np.kron(ay, ax), psi_x=float(psi_x), psi_y=float(psi_y))


def dft_matrix(n_x, n_y):
    """2D DFT matrix over an (n_x, n_y) grid, in x-fastest linear ordering.

    Entry (n, n_breve) is exp(-2j*pi*(n_x-1)(n_breve_x-1)/N_x) times the
    matching y factor. Satisfies F @ F^H = N * I.
    """
    n_x, n_y = int(n_x), int(n_y)
    if n_x < 1 or n_y < 1:
        raise ValueError("grid sizes must be >= 1")
    ix, iy = _grid_coords(n_x, n_y)
    phase = (
        np.outer(ix - 1, ix - 1) / n_x
        + np.outer(iy - 1, iy - 1) / n_y
    )
    return DftTarget(matrix=np.exp(-2j * math.pi * phase), n_x=n_x, n_y=n_y)


def check_feasibility(geom):
    """Rank condition for a zero-residual DFT fit.

    The stack response has rank at most M, so M >= N is necessary for the
    fit error to reach zero.
    """
    m, n = geom.m, geom.n
    if m >= n:
        msg = f"M={m} >= N={n}: exact fit is not rank-limited"
        return FeasibilityReport(feasible=True, m=m, n=n, message=msg)
    msg = f"M={m} < N={n}: response rank is at most {m}, zero loss unattainable"
    return FeasibilityReport(feasible=False, m=m, n=n, message=msg)
