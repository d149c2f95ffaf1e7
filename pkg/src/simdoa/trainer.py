"""Gradient-descent fitting of the stack response to the 2D DFT matrix."""

from dataclasses import dataclass, field

import numpy as np

from .wavemodel import PhaseStack, random_stack, forward_response, optimal_scale, fitting_loss


@dataclass(frozen=True)
class TrainConfig:
    eta0: float = 0.1
    zeta: float = 0.8
    max_iters: int = 200
    rel_tolerance: float = 0.0  # 0 disables early stopping
    seed: int = 0
    restarts: int = 1

    def __post_init__(self):
        if self.eta0 <= 0.0:
            raise ValueError("eta0 must be > 0")
        if not (0.0 < self.zeta <= 1.0):
            raise ValueError("zeta must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.rel_tolerance < 0.0:
            raise ValueError("rel_tolerance must be >= 0")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass
class TrainReport:
    """Outcome of one training run.

    ``stack`` and ``beta`` describe the best iterate seen, which is not
    necessarily the last one since plain gradient descent may overshoot.
    ``loss_history`` has one entry per iterate including the initial one.
    """

    stack: PhaseStack
    beta: complex
    loss_history: list
    loss_db_history: list
    iterations: int
    stop_reason: str
    best_iteration: int
    seed: int = 0

    @property
    def best_loss(self):
        return self.loss_history[self.best_iteration]

    @property
    def best_db(self):
        return self.loss_db_history[self.best_iteration]


class TrainingDiverged(RuntimeError):
    """Raised when the loss becomes non-finite; carries the history so far."""

    def __init__(self, message, loss_history):
        super().__init__(message)
        self.loss_history = loss_history


def layer_inputs(props, stack):
    """Per-layer incident fields for every input-layer source.

    Returns a list with one (M, N) array per layer l; column n of entry
    l-1 is the field from input atom n arriving at layer l, i.e. the
    partial cascade up to but excluding layer l's own phase shift.
    """
    q = [props.w0]
    for l in range(1, stack.layers):
        q.append(props.w_inner[l - 1] @ (stack.transmission(l)[:, None] * q[-1]))
    return q


def _suffix_products(props, stack):
    """b[l-1] = W_L Y_L ... Y_{l+1} W_l, the cascade downstream of layer l."""
    b = [None] * stack.layers
    b[stack.layers - 1] = props.w_last
    for l in range(stack.layers - 1, 0, -1):
        b[l - 1] = b[l] @ (stack.transmission(l + 1)[:, None] * props.w_inner[l - 1])
    return b


def gradient(props, stack, f, beta, q=None):
    """Analytic loss gradient w.r.t. every layer's phase vector.

    Treats ``beta`` as a constant. The downstream cascades are accumulated
    backward once and shared across all input atoms, so the total cost
    matches a constant number of forward passes.
    """
    if q is None:
        q = layer_inputs(props, stack)
    b = _suffix_products(props, stack)
    g = b[stack.layers - 1] @ (stack.transmission(stack.layers)[:, None] * q[-1])
    err = beta * g - f
    grads = []
    for l in range(1, stack.layers + 1):
        c = b[l - 1].conj().T @ err
        s = np.sum(np.conj(q[l - 1]) * c, axis=1)
        grads.append(2.0 * np.imag(np.conj(beta) * np.conj(stack.transmission(l)) * s))
    return grads


def finite_diff_gradient(props, stack, f, beta, step=1e-6):
    """Central-difference gradient of the fitting loss, for cross-checking."""
    if step <= 0.0:
        raise ValueError("step must be > 0")
    grads = []
    for l in range(stack.layers):
        gl = np.zeros_like(stack.xi[l])
        for m in range(gl.size):
            probe = stack.copy()
            probe.xi[l][m] += step
            hi, _ = fitting_loss(forward_response(props, probe), f, beta)
            probe.xi[l][m] -= 2.0 * step
            lo, _ = fitting_loss(forward_response(props, probe), f, beta)
            gl[m] = (hi - lo) / (2.0 * step)
        grads.append(gl)
    return grads


def train(props, f, config):
    """Fit the stack phases to the target matrix by decayed gradient descent.

    Each iteration computes the gradient at the current scale factor,
    steps the phases, decays the learning rate, then refits the scale.
    Each layer's step is the gradient rescaled to a sup-norm of eta*pi,
    so eta directly bounds the per-iteration phase movement (in units of
    half-turns) regardless of the raw gradient magnitude. Keeping the
    step length on the learning-rate schedule is what lets the loss keep
    contracting geometrically instead of freezing once the raw gradient
    shrinks; with raw-gradient steps the same schedule stalls many tens
    of dB short on the reference geometries. The best iterate over the
    whole run is returned.
    """
    rng = np.random.default_rng(config.seed)
    geom = props.geometry
    stack = random_stack(geom.layers, geom.m, rng)

    g = forward_response(props, stack)
    beta = optimal_scale(g, f)
    loss, db = fitting_loss(g, f, beta)
    if not np.isfinite(loss):
        raise TrainingDiverged("initial loss is not finite", [loss])

    history = [loss]
    history_db = [db]
    best = (loss, stack.copy(), beta, 0)
    eta = config.eta0
    stop_reason = "max_iters"
    iterations = 0

    for k in range(1, config.max_iters + 1):
        grads = gradient(props, stack, f, beta)
        for l in range(stack.layers):
            peak = np.abs(grads[l]).max()
            if peak == 0.0:
                continue
            step = (eta * np.pi / peak) * grads[l]
            stack.xi[l] = np.mod(stack.xi[l] - step, 2.0 * np.pi)
        eta *= config.zeta
        g = forward_response(props, stack)
        beta = optimal_scale(g, f)
        prev = loss
        loss, db = fitting_loss(g, f, beta)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"loss diverged at iteration {k}", history + [loss])
        history.append(loss)
        history_db.append(db)
        iterations = k
        if loss < best[0]:
            best = (loss, stack.copy(), beta, k)
        if config.rel_tolerance > 0.0 and prev > 0.0:
            if (prev - loss) / prev < config.rel_tolerance:
                stop_reason = "converged"
                break

    _, best_stack, best_beta, best_iter = best
    return TrainReport(
        stack=best_stack,
        beta=best_beta,
        loss_history=history,
        loss_db_history=history_db,
        iterations=iterations,
        stop_reason=stop_reason,
        best_iteration=best_iter,
        seed=config.seed,
    )


def train_restarts(props, f, config):
    """Run ``config.restarts`` independent seeds and keep every report.

    Seeds are ``config.seed + i`` for restart i; reports come back in
    that order. The best run is the one with the lowest best loss.
    """
    reports = []
    for i in range(config.restarts):
        cfg_i = TrainConfig(
            eta0=config.eta0,
            zeta=config.zeta,
            max_iters=config.max_iters,
            rel_tolerance=config.rel_tolerance,
            seed=config.seed + i,
            restarts=1,
        )
        reports.append(train(props, f, cfg_i))
    return reports
