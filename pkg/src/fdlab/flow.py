"""Gradient flows of linear probing and fine-tuning on a two-layer linear model.

The model predicts ``v^T B x``. Training minimizes
``L(v, B) = ||X B^T v - Y||^2`` by gradient flow, either on both
parameters (fine-tuning) or on the head only (linear probing). Flows are
integrated with classical RK4 under step-doubling error control, and a step
is only accepted if it does not increase the training loss.
"""

from __future__ import annotations

import csv
import io
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DidNotConverge, NumericalBlowup, ShapeMismatch, SingularNormalEquations
from .problem import LP_HEAD, HeadMode, ProblemInstance, TrainingSet
from .subspace import orthogonal_complement

CSV_COLUMNS = ("t", "train_loss", "l_id", "l_ood", "balancedness_drift",
               "feature_drift_S", "feature_drift_Sperp")


def fmt(x) -> str:
    """Fixed 17-significant-digit formatting used for every emitted number."""
    return format(float(x), ".17g")


def _check_shapes(v, b, x):
    if b.ndim != 2 or v.shape != (b.shape[0],) or x.shape[1] != b.shape[1]:
        raise ShapeMismatch(f"inconsistent shapes v={v.shape}, B={b.shape}, X={x.shape}")


def train_loss(v, b, ts: TrainingSet) -> float:
    v, b = np.asarray(v, dtype=float), np.asarray(b, dtype=float)
    _check_shapes(v, b, ts.X)
    r = ts.X @ (b.T @ v) - ts.Y
    return float(r @ r)


def gradients(v, b, ts: TrainingSet):
    """Return ``(grad_v, grad_B)`` of the training loss.

    ``grad_v = 2 B X^T r`` and ``grad_B = 2 v (X^T r)^T`` with residual
    ``r = X B^T v - Y``. Every row of ``grad_B`` lies in the row space of
    ``X``, so ``grad_B u = 0`` for ``u`` orthogonal to the training data.
    """
    v, b = np.asarray(v, dtype=float), np.asarray(b, dtype=float)
    _check_shapes(v, b, ts.X)
    r = ts.X @ (b.T @ v) - ts.Y
    xr = ts.X.T @ r
    return 2.0 * (b @ xr), 2.0 * np.outer(v, xr)


def ood_loss(v, b, instance: ProblemInstance) -> float:
    """Expected squared error under a distribution with second moment ``Sigma``."""
    v, b = np.asarray(v, dtype=float), np.asarray(b, dtype=float)
    if b.shape != instance.b_star.shape or v.shape != instance.v_star.shape:
        raise ShapeMismatch("parameters do not match instance dimensions")
    e = instance.w_star - b.T @ v
    return float(e @ instance.sigma_ood.sigma @ e)


def id_loss(v, b, instance: ProblemInstance) -> float:
    """ID loss in closed form ``||F^T (w* - B^T v)||^2`` for ``z ~ N(0, I_m)``."""
    v, b = np.asarray(v, dtype=float), np.asarray(b, dtype=float)
    if b.shape != instance.b_star.shape or v.shape != instance.v_star.shape:
        raise ShapeMismatch("parameters do not match instance dimensions")
    e = instance.w_star - b.T @ v
    proj = instance.id_basis.basis.T @ e
    return float(proj @ proj)


def id_loss_monte_carlo(v, b, instance: ProblemInstance, n_samples, rng, sampler=None):
    """Monte-Carlo ID loss; returns ``(estimate, standard_error)``.

    ``sampler(rng, n)`` draws ``n x m`` latent codes; the default is
    isotropic Gaussian, which agrees with :func:`id_loss` in expectation.
    """
    e = instance.w_star - np.asarray(b).T @ np.asarray(v)
    coef = instance.id_basis.basis.T @ e
    total, total_sq, done = 0.0, 0.0, 0
    chunk = 100_000
    while done < n_samples:
        size = min(chunk, n_samples - done)
        z = rng.standard_normal((size, instance.m)) if sampler is None else sampler(rng, size)
        sq = (z @ coef) ** 2
        total += sq.sum()
        total_sq += (sq ** 2).sum()
        done += size
    mean = total / n_samples
    var = max(total_sq / n_samples - mean ** 2, 0.0)
    return float(mean), float(np.sqrt(var / n_samples))


def lp_solve_closed_form(b0, ts: TrainingSet, rcond=1e-12):
    """Unique minimizer of the training loss over the head with ``B0`` frozen."""
    b0 = np.asarray(b0, dtype=float)
    a = ts.X @ b0.T
    s = np.linalg.svd(a, compute_uv=False)
    if s[0] == 0.0 or s[-1] ** 2 <= rcond * s[0] ** 2:
        raise SingularNormalEquations("B0 X^T X B0^T is singular; LP has no unique solution")
    v, *_ = np.linalg.lstsq(a, ts.Y, rcond=None)
    return v


@dataclass(frozen=True)
class IntegratorConfig:
    """Integration controls.

    ``initial_step=None`` means ``1e-3 / sigma_max(X)^2``. A flow counts as
    converged once the training loss falls below ``loss_tol`` times its
    reference scale ``max(L(0), ||Y||^2)``, or once it is stationary: squared
    gradient norm below ``grad_tol * sigma_max(X)^2`` times that scale.
    """

    initial_step: float | None = None
    t_max: float = 1e6
    loss_tol: float = 1e-12
    n_samples: int = 200
    max_halvings: int = 40
    rtol: float = 1e-11
    grad_tol: float = 1e-24
    max_steps: int = 200_000

    def __post_init__(self):
        for name in ("t_max", "loss_tol", "n_samples", "max_halvings", "rtol", "grad_tol",
                     "max_steps"):
            if getattr(self, name) <= 0:
                raise ValueError(f"integrator {name} must be positive")
        if self.initial_step is not None and self.initial_step <= 0:
            raise ValueError("integrator initial_step must be positive")

    @classmethod
    def from_dict(cls, data):
        return cls(**data)


@dataclass(eq=False)
class Trajectory:
    """Sampled states of a flow and the metrics evaluated at each sample.

    The last sample is always the terminal state of the integration.
    """

    method: str
    t: np.ndarray
    v: np.ndarray  # (n_samples, k)
    b: np.ndarray  # (n_samples, k, d)
    metrics: dict
    converged: bool
    n_steps: int = 0
    lp_head: np.ndarray | None = None

    @property
    def terminal(self):
        return self.t[-1], self.v[-1], self.b[-1]

    def min_metric(self, name) -> float:
        return float(np.min(self.metrics[name]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS + ("terminal",))
        last = len(self.t) - 1
        for i in range(len(self.t)):
            row = [fmt(self.t[i])] + [fmt(self.metrics[c][i]) for c in CSV_COLUMNS[1:]]
            writer.writerow(row + ["1" if i == last else "0"])
        return buf.getvalue()


def read_trajectory_csv(text):
    """Parse :meth:`Trajectory.to_csv` output into a dict of float arrays."""
    rows = list(csv.DictReader(io.StringIO(text)))
    return {c: np.array([float(r[c]) for r in rows]) for c in CSV_COLUMNS + ("terminal",)}


class _Metrics:
    def __init__(self, instance: ProblemInstance, v0, b0):
        self.instance = instance
        self.ts = instance.train
        self.s_basis = instance.train.span.basis
        self.s_perp_basis = orthogonal_complement(instance.train.span).basis
        self.b0 = b0
        self.gram0 = np.outer(v0, v0) - b0 @ b0.T
        self.rows = {c: [] for c in CSV_COLUMNS[1:]}

    def record(self, v, b):
        inst = self.instance
        delta = b - self.b0
        gram = np.outer(v, v) - b @ b.T
        self.rows["train_loss"].append(train_loss(v, b, self.ts))
        self.rows["l_id"].append(id_loss(v, b, inst))
        self.rows["l_ood"].append(ood_loss(v, b, inst))
        self.rows["balancedness_drift"].append(float(np.linalg.norm(gram - self.gram0)))
        self.rows["feature_drift_S"].append(float(np.max(np.linalg.norm(delta @ self.s_basis, axis=0))))
        self.rows["feature_drift_Sperp"].append(
            float(np.max(np.linalg.norm(delta @ self.s_perp_basis, axis=0))))

    def arrays(self):
        return {k: np.array(v) for k, v in self.rows.items()}


def _rk4_step(v, b, h, ts, freeze_b):
    def f(v_, b_):
        gv, gb = gradients(v_, b_, ts)
        return -gv, (np.zeros_like(gb) if freeze_b else -gb)

    k1v, k1b = f(v, b)
    k2v, k2b = f(v + 0.5 * h * k1v, b + 0.5 * h * k1b)
    k3v, k3b = f(v + 0.5 * h * k2v, b + 0.5 * h * k2b)
    k4v, k4b = f(v + h * k3v, b + h * k3b)
    v_new = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    b_new = b if freeze_b else b + (h / 6.0) * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
    return v_new, b_new


def _loss_change(v, b, v_new, b_new, ts):
    """``L(v_new, B_new) - L(v, B)`` computed from parameter increments.

    Differencing two computed losses loses the sign once the true change
    drops below the rounding error of ``||r||^2``; this form does not.
    """
    dw = (b_new - b).T @ v_new + b.T @ (v_new - v)
    dr = ts.X @ dw
    r = ts.X @ (b.T @ v) - ts.Y
    return float(dr @ (2.0 * r + dr))


def default_initial_step(ts: TrainingSet) -> float:
    return 1e-3 / np.linalg.norm(ts.X, 2) ** 2


def _integrate(instance: ProblemInstance, v0, cfg: IntegratorConfig, freeze_b, method):
    ts = instance.train
    v = np.array(v0, dtype=float)
    b = np.array(instance.b_init, dtype=float)
    h = cfg.initial_step or default_initial_step(ts)
    grid = np.logspace(np.log10(h), np.log10(cfg.t_max), cfg.n_samples)
    with np.errstate(over="ignore", invalid="ignore"):
        loss = train_loss(v, b, ts)
    if not (np.isfinite(loss) and np.all(np.isfinite(v)) and np.all(np.isfinite(b))):
        raise NumericalBlowup(f"{method} flow starts from a non-finite loss")
    metrics = _Metrics(instance, v, b)
    ts_list, vs, bs = [0.0], [v.copy()], [b.copy()]
    metrics.record(v, b)
    ref = max(loss, float(ts.Y @ ts.Y))
    target = cfg.loss_tol * ref
    grad_target = cfg.grad_tol * np.linalg.norm(ts.X, 2) ** 2 * ref

    def stationary(v_, b_):
        gv, gb = gradients(v_, b_, ts)
        g2 = gv @ gv + (0.0 if freeze_b else float(np.sum(gb * gb)))
        return g2 <= grad_target

    t, gi, steps = 0.0, 0, 0
    converged = loss <= target or stationary(v, b)
    stalled = False

    while not converged and t < cfg.t_max and steps < cfg.max_steps:
        t_next = grid[gi]
        rejections = 0
        while True:
            h_eff = min(h, t_next - t)
            v1, b1 = _rk4_step(v, b, h_eff, ts, freeze_b)
            vh, bh = _rk4_step(v, b, 0.5 * h_eff, ts, freeze_b)
            v2, b2 = _rk4_step(vh, bh, 0.5 * h_eff, ts, freeze_b)
            if not (np.all(np.isfinite(v2)) and np.all(np.isfinite(b2))):
                raise NumericalBlowup(f"{method} flow produced non-finite parameters at t={t}")
            scale = 1.0 + max(np.max(np.abs(v2)), np.max(np.abs(b2)))
            err = max(np.max(np.abs(v2 - v1)), np.max(np.abs(b2 - b1))) / (15.0 * scale)
            change = _loss_change(v, b, v2, b2, ts)
            if err <= cfg.rtol and change <= 0.0:
                new_loss = train_loss(v2, b2, ts)
                break
            rejections += 1
            if rejections > cfg.max_halvings:
                stalled = True
                break
            h = 0.5 * h_eff
        if stalled:
            break
        steps += 1
        t = t_next if h_eff == t_next - t else t + h_eff
        v, b, loss = v2, b2, new_loss
        if rejections == 0 and h_eff == h:
            grow = 2.0 if err == 0 else min(2.0, 0.9 * (cfg.rtol / err) ** 0.2)
            h = max(h, h_eff * grow)
        converged = loss <= target or stationary(v, b)
        on_grid = t >= t_next
        if on_grid:
            gi += 1
        if on_grid or converged:
            ts_list.append(t)
            vs.append(v.copy())
            bs.append(b.copy())
            metrics.record(v, b)
        if gi >= len(grid):
            break

    if ts_list[-1] != t:
        ts_list.append(t)
        vs.append(v.copy())
        bs.append(b.copy())
        metrics.record(v, b)
    if not converged:
        warnings.warn(f"{method} flow stopped at t={t:.3g} with loss {loss:.3e} "
                      f"(target {target:.3e})", DidNotConverge, stacklevel=3)
    return Trajectory(method=method, t=np.array(ts_list), v=np.array(vs), b=np.array(bs),
                      metrics=metrics.arrays(), converged=bool(converged), n_steps=steps)


def _resolve_head(instance: ProblemInstance):
    if instance.v_init is LP_HEAD:
        return lp_solve_closed_form(instance.b_init, instance.train)
    return np.asarray(instance.v_init, dtype=float)


def integrate_fine_tuning(instance: ProblemInstance, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Fine-tuning flow on both head and extractor from ``(v0, B0)``."""
    cfg = cfg or IntegratorConfig()
    lp_head = _resolve_head(instance) if instance.v_init is LP_HEAD else None
    v0 = lp_head if lp_head is not None else _resolve_head(instance)
    traj = _integrate(instance, v0, cfg, freeze_b=False,
                      method="LPFT" if lp_head is not None else "FT")
    traj.lp_head = lp_head
    return traj


def lp_flow(instance: ProblemInstance, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Linear-probing flow: head only, extractor frozen at ``B0``.

    An LP placeholder head starts the flow from zero.
    """
    cfg = cfg or IntegratorConfig()
    v0 = np.zeros(instance.k) if instance.v_init is LP_HEAD else np.asarray(instance.v_init, float)
    return _integrate(instance, v0, cfg, freeze_b=True, method="LP")


def run_lpft(instance: ProblemInstance, cfg: IntegratorConfig | None = None) -> Trajectory:
    """Linear probing to convergence (closed form), then fine-tuning from that head."""
    return integrate_fine_tuning(instance.with_head(LP_HEAD, HeadMode.LP), cfg)


def fixed_step_flow(instance: ProblemInstance, v0, h, n_steps, scheme="rk4", freeze_b=False):
    """Integrate with a fixed step; ``scheme`` is ``"rk4"`` or ``"euler"``. Returns ``(v, B)``."""
    ts = instance.train
    v = np.array(v0, dtype=float)
    b = np.array(instance.b_init, dtype=float)
    for _ in range(n_steps):
        if scheme == "rk4":
            v, b = _rk4_step(v, b, h, ts, freeze_b)
        elif scheme == "euler":
            gv, gb = gradients(v, b, ts)
            v = v - h * gv
            if not freeze_b:
                b = b - h * gb
        else:
            raise ValueError(f"unknown scheme {scheme!r}")
    return v, b
