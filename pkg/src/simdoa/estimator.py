"""Snapshot protocol, energy collection, peak search, and angle recovery."""

from dataclasses import dataclass

import numpy as np

from .geometry import linear_to_grid, steering_vector
from .wavemodel import ZerothLayerConfig, cn_noise, synthesize_received


@dataclass(frozen=True)
class ProtocolConfig:
    """Snapshot schedule: t_y blocks of t_x slots, T = t_x * t_y total."""

    t_x: int = 1
    t_y: int = 1

    def __post_init__(self):
        if self.t_x < 1 or self.t_y < 1:
            raise ValueError("snapshot counts must be >= 1")

    @property
    def t(self):
        return self.t_x * self.t_y

    def snapshot_grid(self, t):
        """1-based (t_x, t_y) coordinates of snapshot t."""
        return linear_to_grid(t, self.t_x, self.t_y)


@dataclass(frozen=True)
class EnergyMap:
    """Received power |r|^2 per (antenna, snapshot) cell, R x T."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.size == 0:
            raise ValueError("energy map must be a nonempty 2-D array")
        if np.any(v < 0.0):
            raise ValueError("energy values must be >= 0")
        object.__setattr__(self, "values", v)

    @property
    def receivers(self):
        return self.values.shape[0]

    @property
    def snapshots(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class DoaEstimate:
    """Peak cell plus the angles recovered from it.

    ``psi_x``/``psi_y`` are normalized electrical angles in [-1, 1) (units
    of pi radians per element). ``phi``/``theta`` are radians; they are NaN
    when the peak maps to an unrealizable direction (off-lattice artifact).
    """

    n: int
    t: int
    psi_x: float
    psi_y: float
    phi: float
    theta: float

    @property
    def realizable(self):
        return not (np.isnan(self.phi) or np.isnan(self.theta))


class UnrealizableAngle(ValueError):
    """Electrical-angle pair maps outside the visible region."""


def zeroth_layer_phase(n, t, n_x, n_y, proto):
    """Input-layer phase for atom n at snapshot t, in [0, 2*pi).

    Advancing t steps the DFT frequency bin by 1/(N*T) of a cycle per
    axis, giving T*N distinct bins over the whole schedule.
    """
    nx, ny = linear_to_grid(n, n_x, n_y)
    tx, ty = proto.snapshot_grid(t)
    phase = (-2.0 * np.pi * (nx - 1) * (tx - 1) / (n_x * proto.t_x)
             - 2.0 * np.pi * (ny - 1) * (ty - 1) / (n_y * proto.t_y))
    return float(np.mod(phase, 2.0 * np.pi))


def zeroth_layer_config(t, n_x, n_y, proto):
    """All N input-layer phases for snapshot t as a ZerothLayerConfig."""
    n = n_x * n_y
    xi0 = np.array([zeroth_layer_phase(i, t, n_x, n_y, proto) for i in range(1, n + 1)])
    return ZerothLayerConfig(xi0)


def collect_snapshots(g, sv, s_seq, rho, proto, n_x, n_y, noise=None):
    """Run the T-snapshot schedule through response ``g`` and record powers.

    ``s_seq`` is a single complex symbol reused every snapshot or a
    length-T sequence. ``noise`` is None (clean), a numpy Generator
    (unit-variance complex noise drawn per snapshot), or a preset (R, T)
    complex array.
    """
    g = np.asarray(g)
    r_count = g.shape[0]
    total = proto.t
    symbols = np.broadcast_to(np.asarray(s_seq, dtype=complex).ravel(), (total,)) \
        if np.ndim(s_seq) == 0 else np.asarray(s_seq, dtype=complex)
    if symbols.shape != (total,):
        raise ValueError(f"expected {total} symbols, got {symbols.shape}")

    preset = None
    if isinstance(noise, np.ndarray):
        preset = np.asarray(noise, dtype=complex)
        if preset.shape != (r_count, total):
            raise ValueError(f"noise shape {preset.shape} does not match ({r_count}, {total})")

    values = np.empty((r_count, total))
    for t in range(1, total + 1):
        zeroth = zeroth_layer_config(t, n_x, n_y, proto)
        if preset is not None:
            w = preset[:, t - 1]
        elif noise is not None:
            w = cn_noise(noise, r_count)
        else:
            w = None
        r = synthesize_received(g, zeroth, sv, symbols[t - 1], rho, w)
        values[:, t - 1] = np.abs(r) ** 2
    return EnergyMap(values)


def peak_index(emap):
    """1-based (n, t) of the strongest cell.

    Ties resolve to the smallest t, then the smallest n, by scanning in
    snapshot-major order.
    """
    flat = np.argmax(emap.values.T)  # row-major over (t, n)
    t_hat, n_hat = divmod(int(flat), emap.receivers)
    return n_hat + 1, t_hat + 1


def electrical_angles(n, t, n_x, n_y, proto):
    """Normalized electrical angles of lattice cell (n, t), each in [-1, 1)."""
    nx, ny = linear_to_grid(n, n_x, n_y)
    tx, ty = proto.snapshot_grid(t)
    psi_x = np.mod(2.0 * ((nx - 1) / n_x + (tx - 1) / (n_x * proto.t_x)) + 1.0, 2.0) - 1.0
    psi_y = np.mod(2.0 * ((ny - 1) / n_y + (ty - 1) / (n_y * proto.t_y)) + 1.0, 2.0) - 1.0
    return float(psi_x), float(psi_y)


def physical_angles(psi_x, psi_y, geom, clamp=False):
    """Azimuth and elevation (radians) from normalized electrical angles.

    Normalized angles are in units of pi radians per element. Raises
    UnrealizableAngle when the pair lies outside the visible region
    unless ``clamp`` pins the elevation argument to 1. Azimuth is 0 by
    convention at broadside, where it is otherwise undefined.
    """
    px = np.pi * psi_x
    py = np.pi * psi_y
    radius = np.sqrt((px / geom.d_x) ** 2 + (py / geom.d_y) ** 2) / geom.kappa
    if radius > 1.0:
        if not clamp:
            raise UnrealizableAngle(
                f"electrical angles ({psi_x}, {psi_y}) map outside the visible region")
        radius = 1.0
    theta = float(np.arcsin(radius))
    if psi_x == 0.0 and psi_y == 0.0:
        return 0.0, 0.0
    phi = float(np.mod(np.arctan2(py * geom.d_x, px * geom.d_y), 2.0 * np.pi))
    return phi, theta


def estimate_from_map(emap, proto, n_x, n_y, geom=None):
    """Peak search plus angle recovery in one step.

    Physical angles are filled from ``geom`` when given; an unrealizable
    peak yields NaN angles rather than an error so Monte Carlo scoring
    (which uses electrical angles only) can proceed.
    """
    n_hat, t_hat = peak_index(emap)
    psi_x, psi_y = electrical_angles(n_hat, t_hat, n_x, n_y, proto)
    phi = theta = float("nan")
    if geom is not None:
        try:
            phi, theta = physical_angles(psi_x, psi_y, geom)
        except UnrealizableAngle:
            pass
    return DoaEstimate(n=n_hat, t=t_hat, psi_x=psi_x, psi_y=psi_y, phi=phi, theta=theta)


def angular_spectrum(emap, proto, n_x, n_y):
    """Measurements rearranged onto the normalized-angle lattice.

    Returns (psi_x_axis, psi_y_axis, power) where power[iy, ix] is the
    energy at (psi_x_axis[ix], psi_y_axis[iy]), peak-normalized to 1.
    """
    kx = n_x * proto.t_x
    ky = n_y * proto.t_y
    if emap.values.shape != (n_x * n_y, proto.t):
        raise ValueError("energy map shape does not match the lattice")
    step_x = 2.0 / kx
    step_y = 2.0 / ky
    axis_x = -1.0 + step_x * np.arange(kx)
    axis_y = -1.0 + step_y * np.arange(ky)
    power = np.zeros((ky, kx))
    for t in range(1, proto.t + 1):
        for n in range(1, n_x * n_y + 1):
            px, py = electrical_angles(n, t, n_x, n_y, proto)
            ix = int(round((px + 1.0) / step_x))
            iy = int(round((py + 1.0) / step_y))
            power[iy, ix] = emap.values[n - 1, t - 1]
    top = power.max()
    if top > 0.0:
        power = power / top
    return axis_x, axis_y, power


def wrapped_angle_error(true_psi, est_psi):
    """Signed difference on the normalized-angle circle, in [-1, 1).

    Electrical angles wrap with period 2, so errors are scored along the
    shorter arc; without this a source near +1 estimated near -1 would
    score as a full-span miss.
    """
    return float(np.mod(true_psi - est_psi + 1.0, 2.0) - 1.0)


def steering_for(psi_x, psi_y, n_x, n_y):
    """Steering vector from normalized electrical angles."""
    return steering_vector(np.pi * psi_x, np.pi * psi_y, n_x, n_y)
