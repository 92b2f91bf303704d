"""Construction of reproducible problem instances.

An instance fixes the ground truth ``(B*, v*)``, an ID subspace spanned by
the columns of ``F``, Gaussian training data on that subspace, a pretrained
extractor ``B0`` at a chosen distance from ``B*``, an initial head and the
OOD second moment.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .errors import (
    DimConstraintViolated,
    NotPositiveDefinite,
    PreconditionViolated,
    ShapeMismatch,
    TargetUnreachable,
)
from .subspace import (
    Subspace,
    check_orthonormal_rows,
    extractor_distance,
    orthonormalize,
    rowspace,
    sample_uniform_subspace,
)


class HeadMode(str, enum.Enum):
    ZERO = "zero"
    GAUSSIAN = "gaussian"
    LP = "lp"


class _LPPlaceholder:
    """Sentinel for a head that the flow engine fills in with the LP solution."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "LP_HEAD"


LP_HEAD = _LPPlaceholder()


@dataclass(frozen=True, eq=False)
class TrainingSet:
    X: np.ndarray
    Y: np.ndarray
    span: Subspace


@dataclass(frozen=True, eq=False)
class SecondMoment:
    sigma: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigma, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ShapeMismatch(f"second moment must be square, got {s.shape}")
        if np.max(np.abs(s - s.T)) > 1e-12:
            raise NotPositiveDefinite("second moment is not symmetric")
        if np.linalg.eigvalsh(s)[0] <= 0:
            raise NotPositiveDefinite("second moment is not positive definite")
        object.__setattr__(self, "sigma", s)

    @property
    def sigma_min(self) -> float:
        return float(np.linalg.eigvalsh(self.sigma)[0])


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    d: int
    k: int
    m: int
    n: int
    b_star: np.ndarray
    v_star: np.ndarray
    w_star: np.ndarray
    id_basis: Subspace
    train: TrainingSet
    b_init: np.ndarray
    v_init: object  # ndarray, or LP_HEAD until resolved
    head_mode: HeadMode
    sigma_ood: SecondMoment
    eps_measured: float
    head_sigma_sq: float = 1.0

    @property
    def s_perp(self) -> Subspace:
        from .subspace import orthogonal_complement

        return orthogonal_complement(self.train.span)

    @property
    def r_init(self) -> Subspace:
        return orthonormalize(self.b_init.T)

    @property
    def r_star(self) -> Subspace:
        return orthonormalize(self.b_star.T)

    def with_head(self, v_init, head_mode=None) -> "ProblemInstance":
        return replace(self, v_init=v_init, head_mode=head_mode or self.head_mode)


@dataclass(frozen=True)
class InstanceConfig:
    """Knobs for :func:`build_instance`. ``ood_diag`` is only read in ``diagonal`` mode."""

    d: int = 100
    k: int = 5
    m: int = 20
    n: int = 40
    eps: float = 0.05
    w_norm: float = 1.0
    head_mode: str = "zero"
    head_sigma_sq: float = 1.0
    ood_mode: str = "identity"
    ood_diag: tuple = ()
    seed: int = 0
    index: int = 0

    @classmethod
    def from_dict(cls, data) -> "InstanceConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DimConstraintViolated(f"unknown instance fields: {sorted(unknown)}")
        data = dict(data)
        if "ood_diag" in data:
            data["ood_diag"] = tuple(float(x) for x in data["ood_diag"])
        return cls(**data)


def instance_rng(master_seed, index, stream) -> np.random.Generator:
    """Independent stream for one ``(master seed, instance index, purpose)`` triple."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed) & (2**64 - 1), int(index), stream]))


_STREAM_TRUTH, _STREAM_SUBSPACE, _STREAM_DATA, _STREAM_PERTURB, _STREAM_HEAD = range(5)


def make_ground_truth(d, k, w_norm, rng):
    if not d > k >= 1:
        raise DimConstraintViolated(f"need d > k >= 1, got d={d}, k={k}")
    if w_norm <= 0:
        raise PreconditionViolated("w_norm must be positive")
    b_star = orthonormalize(rng.standard_normal((d, k))).basis.T.copy()
    v = rng.standard_normal(k)
    v_star = v * (w_norm / np.linalg.norm(v))
    return b_star, v_star


def sample_training_data(f: Subspace, n, b_star, v_star, rng) -> TrainingSet:
    """Draw ``n`` inputs ``x = F z`` with ``z ~ N(0, I_m)`` and noiseless labels."""
    if n < 1:
        raise PreconditionViolated("need n >= 1")
    z = rng.standard_normal((n, f.dim))
    x = z @ f.basis.T
    y = x @ (b_star.T @ v_star)
    return TrainingSet(X=x, Y=y, span=rowspace(x))


def _orth_rows(m):
    u, _, vt = np.linalg.svd(m, full_matrices=False)
    return u @ vt


def perturb_extractor(b_star, eps_target, rng, rtol=1e-6, max_steps=60):
    """Pretrained extractor at Procrustes distance ``eps_target`` from ``b_star``.

    Draws one Gaussian direction ``G`` and bisects on the scale ``s`` of
    ``B* + s G`` (rows re-orthonormalized) until the distance matches.
    """
    b_star = check_orthonormal_rows(b_star)
    if not 0 <= eps_target < 0.5:
        raise PreconditionViolated(f"eps_target must lie in [0, 0.5), got {eps_target}")
    if eps_target == 0:
        return b_star.copy()
    g = rng.standard_normal(b_star.shape)
    g /= np.linalg.norm(g, 2)

    def dist(s):
        cand = _orth_rows(b_star + s * g)
        return extractor_distance(cand, b_star)[0], cand

    lo, hi = 0.0, eps_target
    for _ in range(60):
        d_hi, _ = dist(hi)
        if d_hi >= eps_target:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise TargetUnreachable(f"could not bracket distance {eps_target}")
    best = None
    for _ in range(max_steps):
        mid = 0.5 * (lo + hi)
        d_mid, cand = dist(mid)
        best = cand
        if abs(d_mid - eps_target) <= rtol * eps_target:
            return cand
        if d_mid < eps_target:
            lo = mid
        else:
            hi = mid
    d_best = extractor_distance(best, b_star)[0]
    if abs(d_best - eps_target) > 1e-3 * eps_target:
        raise TargetUnreachable(f"bisection ended at distance {d_best}, target {eps_target}")
    return best


def make_head_init(k, mode, rng, sigma_sq=1.0):
    mode = HeadMode(mode)
    if mode is HeadMode.ZERO:
        return np.zeros(k)
    if mode is HeadMode.GAUSSIAN:
        return rng.standard_normal(k) * np.sqrt(sigma_sq)
    return LP_HEAD


def make_ood_second_moment(d, mode="identity", diag=None) -> SecondMoment:
    if mode == "identity":
        return SecondMoment(np.eye(d))
    if mode == "diagonal":
        diag = np.asarray(diag, dtype=float)
        if diag.shape != (d,):
            raise ShapeMismatch(f"diagonal must have length {d}, got {diag.shape}")
        if np.any(diag <= 0):
            raise NotPositiveDefinite("diagonal second moment needs positive entries")
        return SecondMoment(np.diag(diag))
    raise PreconditionViolated(f"unknown OOD mode {mode!r}")


def check_dims(d, k, m, n):
    if not k >= 1:
        raise DimConstraintViolated(f"need k >= 1, got k={k}")
    if not k < m:
        raise DimConstraintViolated(f"need k < m, got k={k}, m={m}")
    if not m < d - k:
        raise DimConstraintViolated(f"need m < d - k, got m={m}, d - k={d - k}")
    if not n >= m:
        raise DimConstraintViolated(f"need n >= m, got n={n}, m={m}")


def build_instance(config: InstanceConfig) -> ProblemInstance:
    c = config
    check_dims(c.d, c.k, c.m, c.n)
    seed, idx = c.seed, c.index
    b_star, v_star = make_ground_truth(c.d, c.k, c.w_norm, instance_rng(seed, idx, _STREAM_TRUTH))
    f = sample_uniform_subspace(c.d, c.m, instance_rng(seed, idx, _STREAM_SUBSPACE))
    train = sample_training_data(f, c.n, b_star, v_star, instance_rng(seed, idx, _STREAM_DATA))
    b_init = perturb_extractor(b_star, c.eps, instance_rng(seed, idx, _STREAM_PERTURB))
    v_init = make_head_init(c.k, c.head_mode, instance_rng(seed, idx, _STREAM_HEAD), c.head_sigma_sq)
    sigma = make_ood_second_moment(c.d, c.ood_mode, c.ood_diag or None)
    return ProblemInstance(
        d=c.d, k=c.k, m=c.m, n=c.n,
        b_star=b_star, v_star=v_star, w_star=b_star.T @ v_star,
        id_basis=f, train=train, b_init=b_init, v_init=v_init,
        head_mode=HeadMode(c.head_mode), sigma_ood=sigma,
        eps_measured=extractor_distance(b_init, b_star)[0],
        head_sigma_sq=c.head_sigma_sq,
    )


def build_toy_instance(b_init_angle=0.05, w_star=(1.0, 1.0), n=4, seed=0) -> ProblemInstance:
    """Two-dimensional, one-feature instance with ID data on the x-axis.

    ``B*`` points along ``w_star`` and ``B0`` is ``B*`` rotated by
    ``b_init_angle`` radians. This sits outside the ``m < d - k`` regime and
    is built without the dimension checks.
    """
    w = np.asarray(w_star, dtype=float)
    wn = np.linalg.norm(w)
    b_star = (w / wn)[None, :]
    c, s = np.cos(b_init_angle), np.sin(b_init_angle)
    b_init = b_star @ np.array([[c, s], [-s, c]])
    rng = np.random.default_rng(seed)
    x = np.zeros((n, 2))
    x[:, 0] = rng.standard_normal(n)
    f = Subspace(np.array([[1.0], [0.0]]))
    train = TrainingSet(X=x, Y=x @ w, span=f)
    return ProblemInstance(
        d=2, k=1, m=1, n=n,
        b_star=b_star, v_star=np.array([wn]), w_star=w.copy(),
        id_basis=f, train=train, b_init=b_init, v_init=np.zeros(1),
        head_mode=HeadMode.ZERO, sigma_ood=SecondMoment(np.eye(2)),
        eps_measured=extractor_distance(b_init, b_star)[0],
    )
