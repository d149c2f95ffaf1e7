"""End-to-end wave response of the stack and the DFT fitting loss."""

from dataclasses import dataclass

import numpy as np

# Sentinel for a numerically exact fit; keeps dB columns finite in outputs.
DB_FLOOR = -400.0


@dataclass
class PhaseStack:
    """Trainable per-layer phase vectors, stored reduced to [0, 2*pi)."""

    xi: list  # one real vector of length M per intermediate layer

    def __post_init__(self):
        self.xi = [np.mod(np.asarray(x, dtype=float), 2.0 * np.pi) for x in self.xi]

    @property
    def layers(self):
        return len(self.xi)

    def transmission(self, l):
        """Unit-modulus diagonal entries of layer l (1-based)."""
        return np.exp(1j * self.xi[l - 1])

    def copy(self):
        return PhaseStack([x.copy() for x in self.xi])


@dataclass
class ZerothLayerConfig:
    """Phase vector applied on the input layer for one snapshot."""

    xi0: np.ndarray

    def __post_init__(self):
        self.xi0 = np.mod(np.asarray(self.xi0, dtype=float), 2.0 * np.pi)

    def transmission(self):
        return np.exp(1j * self.xi0)


@dataclass(frozen=True)
class SimResponse:
    """Cascade response G together with its fitted scale factor."""

    g: np.ndarray
    beta: complex


def random_stack(layers, m, rng):
    """Phase stack with i.i.d. uniform phases on [0, 2*pi)."""
    return PhaseStack([rng.uniform(0.0, 2.0 * np.pi, size=m) for _ in range(layers)])


def forward_response(props, stack):
    """Cascade product W_L Y_L W_{L-1} ... Y_1 W_0.

    Associated right to left so the running operand keeps N columns,
    costing O(L M^2 N).
    """
    if stack.layers != props.geometry.layers:
        raise ValueError(
            f"stack has {stack.layers} layers, geometry expects {props.geometry.layers}"
        )
    acc = props.w0
    for l in range(1, props.geometry.layers):
        acc = props.w_inner[l - 1] @ (stack.transmission(l)[:, None] * acc)
    return props.w_last @ (stack.transmission(stack.layers)[:, None] * acc)


def optimal_scale(g, f):
    """Least-squares complex scale minimizing ||beta*G - F||_F."""
    g = np.asarray(g)
    f = np.asarray(f)
    denom = np.vdot(g, g).real
    if denom == 0.0:
        raise ValueError("response matrix is zero, scale undefined")
    return np.vdot(g, f) / denom


def fitting_loss(g, f, beta):
    """Squared Frobenius fitting error and its normalized dB value.

    Returns ``(loss, db)`` with ``db = 10*log10(loss / ||F||_F^2)``. An
    exactly zero loss is reported as the DB_FLOOR sentinel.
    """
    if g.shape != f.shape:
        raise ValueError(f"shape mismatch {g.shape} vs {f.shape}")
    loss = float(np.linalg.norm(beta * g - f) ** 2)
    ref = float(np.linalg.norm(f) ** 2)
    if loss <= 0.0:
        return loss, DB_FLOOR
    return loss, max(10.0 * np.log10(loss / ref), DB_FLOOR)


def synthesize_received(g, zeroth, sv, s, rho, noise=None):
    """Received snapshot sqrt(rho) * G Y_0 a s + noise.

    ``noise`` is a length-R complex vector or None for the clean field.
    """
    if rho < 0.0:
        raise ValueError("rho must be >= 0")
    r = np.sqrt(rho) * (g @ (zeroth.transmission() * sv.entries)) * s
    if noise is not None:
        noise = np.asarray(noise)
        if noise.shape != r.shape:
            raise ValueError(f"noise shape {noise.shape} does not match {r.shape}")
        r = r + noise
    return r


def cn_noise(rng, shape, variance=1.0):
    """Circularly symmetric complex Gaussian samples with the given variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
