"""Density-based reward learning from labeled demonstrations.

A reward over demonstration space is represented as a weighted sum of kernel
evaluations at inducing points. Each sample carries a fidelity label in
[-1, 1] (+1 desirable, -1 undesirable); a cosine factor on the label gap
makes opposite-fidelity samples contribute with opposite sign. Fitting
maximizes the mean reward over the demonstrations with two quadratic
regularizers, which has a closed-form ridge solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential kernel scales and fit regularizers.

    length_scale_sq = None requests the median pairwise squared-distance
    heuristic at fit time (computed on standardized inputs).
    """

    output_scale: float = 1.0
    length_scale_sq: float | None = None
    lam: float = 1e-2
    beta: float = 1e-3

    def __post_init__(self):
        if self.output_scale <= 0 or self.lam <= 0 or self.beta <= 0:
            raise ValueError("kernel parameters must be strictly positive")
        if self.length_scale_sq is not None and self.length_scale_sq <= 0:
            raise ValueError("length scale must be strictly positive")


@dataclass
class RewardModel:
    """Fitted reward: inducing inputs (stored standardized) with fidelity
    labels, coefficients, resolved kernel parameters, and the input
    standardization used at fit time."""

    inducing_x: np.ndarray
    inducing_gamma: np.ndarray
    alpha: np.ndarray
    output_scale: float
    length_scale_sq: float
    norm_mean: np.ndarray
    norm_scale: np.ndarray

    @property
    def dim(self) -> int:
        return self.inducing_x.shape[1]


def se_kernel(x: np.ndarray, y: np.ndarray, params: KernelParams) -> float:
    """Squared-exponential similarity between two points."""
    if params.length_scale_sq is None:
        raise ValueError("length scale unresolved; fit a model or set it explicitly")
    d2 = float(np.sum((np.asarray(x, float) - np.asarray(y, float)) ** 2))
    return params.output_scale * float(np.exp(-d2 / (2.0 * params.length_scale_sq)))


def leveraged_kernel(
    x: np.ndarray, gamma: float, y: np.ndarray, gamma_other: float, params: KernelParams
) -> float:
    """Fidelity-modulated similarity: equal labels keep the SE value, a label
    gap of 2 negates it, a gap of 1 zeroes it."""
    return float(np.cos(0.5 * np.pi * (gamma - gamma_other))) * se_kernel(x, y, params)


def se_kernel_matrix(x: np.ndarray, y: np.ndarray, output_scale: float, length_scale_sq: float) -> np.ndarray:
    # ||x-y||^2 expanded so the cross term runs through BLAS; the controller
    # evaluates this every cycle
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    d2 = np.maximum(
        np.sum(x * x, axis=1)[:, None] + np.sum(y * y, axis=1)[None, :] - 2.0 * (x @ y.T),
        0.0,
    )
    return output_scale * np.exp(-d2 / (2.0 * length_scale_sq))


def leveraged_kernel_matrix(
    x: np.ndarray,
    gx: np.ndarray,
    y: np.ndarray,
    gy: np.ndarray,
    output_scale: float,
    length_scale_sq: float,
) -> np.ndarray:
    lever = np.cos(0.5 * np.pi * (np.asarray(gx)[:, None] - np.asarray(gy)[None, :]))
    return lever * se_kernel_matrix(x, y, output_scale, length_scale_sq)


def median_heuristic(x: np.ndarray, max_points: int = 1000) -> float:
    """Median pairwise squared distance, on an evenly spaced subsample for
    large datasets (deterministic)."""
    x = np.atleast_2d(np.asarray(x, float))
    if x.shape[0] > max_points:
        idx = np.linspace(0, x.shape[0] - 1, max_points).astype(int)
        x = x[idx]
    d2 = cdist(x, x, "sqeuclidean")
    off_diag = d2[~np.eye(d2.shape[0], dtype=bool)]
    med = float(np.median(off_diag)) if off_diag.size else 1.0
    return med if med > 0 else 1.0


def select_inducing(x: np.ndarray, n: int, seed: int) -> np.ndarray:
    """Greedy farthest-point subsampling; returns indices into x.

    The first point is drawn with the seed; every later pick maximizes the
    minimum distance to the points chosen so far (ties to the lower index).
    """
    x = np.atleast_2d(np.asarray(x, float))
    n_total = x.shape[0]
    if n > n_total:
        raise ValueError(f"cannot select {n} inducing points from {n_total} samples")
    if n == n_total:
        return np.arange(n_total)
    rng = np.random.default_rng(seed)
    chosen = [int(rng.integers(n_total))]
    min_d2 = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(n - 1):
        nxt = int(np.argmax(min_d2))
        chosen.append(nxt)
        min_d2 = np.minimum(min_d2, np.sum((x - x[nxt]) ** 2, axis=1))
    return np.array(chosen)


def fit_reward(
    x: np.ndarray,
    gamma: np.ndarray,
    inducing_x: np.ndarray,
    inducing_gamma: np.ndarray,
    params: KernelParams,
    normalize: bool = True,
) -> RewardModel:
    """Closed-form fit of the coefficient vector.

    Solves (lam * K_UU + beta * I) alpha = K_UD @ 1 / N_D with a Cholesky
    factorization; beta > 0 makes the system positive definite. Inputs are
    standardized per dimension before kernel evaluation (the observation
    space mixes meters and radians).
    """
    x = np.atleast_2d(np.asarray(x, float))
    gamma = np.asarray(gamma, float)
    inducing_x = np.atleast_2d(np.asarray(inducing_x, float))
    inducing_gamma = np.asarray(inducing_gamma, float)
    n_d = x.shape[0]
    if normalize:
        mean = x.mean(axis=0)
        scale = np.maximum(x.std(axis=0), 1e-8)
    else:
        mean = np.zeros(x.shape[1])
        scale = np.ones(x.shape[1])
    xs = (x - mean) / scale
    us = (inducing_x - mean) / scale

    l2 = params.length_scale_sq if params.length_scale_sq is not None else median_heuristic(xs)

    k_uu = leveraged_kernel_matrix(us, inducing_gamma, us, inducing_gamma, params.output_scale, l2)
    k_ud = leveraged_kernel_matrix(us, inducing_gamma, xs, gamma, params.output_scale, l2)
    if not (np.isfinite(k_uu).all() and np.isfinite(k_ud).all()):
        raise ValueError("non-finite kernel entries; check demonstration data")

    system = params.lam * k_uu + params.beta * np.eye(k_uu.shape[0])
    rhs = k_ud.sum(axis=1) / n_d
    alpha = cho_solve(cho_factor(system, lower=True), rhs)
    assert np.isfinite(alpha).all()

    return RewardModel(
        inducing_x=us,
        inducing_gamma=inducing_gamma.copy(),
        alpha=alpha,
        output_scale=params.output_scale,
        length_scale_sq=l2,
        norm_mean=mean,
        norm_scale=scale,
    )


def fit_reward_model(
    x: np.ndarray,
    gamma: np.ndarray,
    params: KernelParams,
    n_inducing: int = 256,
    seed: int = 0,
    normalize: bool = True,
) -> RewardModel:
    """Convenience path: farthest-point inducing selection, then the fit."""
    x = np.atleast_2d(np.asarray(x, float))
    idx = select_inducing(x, min(n_inducing, x.shape[0]), seed)
    return fit_reward(x, gamma, x[idx], np.asarray(gamma, float)[idx], params, normalize)


def eval_reward(model: RewardModel, x: np.ndarray, query_gamma: float = 1.0) -> np.ndarray:
    """Reward at query points; queries carry fidelity +1 by default (how much
    does this resemble positively demonstrated behavior, penalized by
    resemblance to negative behavior). x: (N, d) or (d,)."""
    x = np.asarray(x, float)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[1] != model.dim:
        raise ValueError(f"query dimension {x.shape[1]} != model dimension {model.dim}")
    xs = (x - model.norm_mean) / model.norm_scale
    # all queries share one fidelity, so the cosine factor folds into the
    # coefficients instead of a full leveraged matrix
    lever = np.cos(0.5 * np.pi * (query_gamma - model.inducing_gamma))
    k_se = se_kernel_matrix(xs, model.inducing_x, model.output_scale, model.length_scale_sq)
    values = k_se @ (lever * model.alpha)
    return float(values[0]) if single else values


@dataclass
class RewardGrid:
    """Row-major reward values on a regular 2D grid over the first two input
    dimensions, with any remaining dimensions pinned to fixed values."""

    x_min: float
    x_max: float
    nx: int
    y_min: float
    y_max: float
    ny: int
    fixed: np.ndarray
    values: np.ndarray  # (ny, nx)

    def x_coords(self) -> np.ndarray:
        return np.linspace(self.x_min, self.x_max, self.nx)

    def y_coords(self) -> np.ndarray:
        return np.linspace(self.y_min, self.y_max, self.ny)


def eval_reward_grid(
    model: RewardModel,
    bounds: tuple[float, float, float, float],
    resolution: int,
    fixed: np.ndarray | None = None,
    query_gamma: float = 1.0,
) -> RewardGrid:
    """Evaluate the reward on a regular grid over (x, y); extra model
    dimensions are held at `fixed`."""
    x_min, x_max, y_min, y_max = bounds
    fixed = np.asarray(fixed, float) if fixed is not None else np.zeros(model.dim - 2)
    if fixed.shape[0] != model.dim - 2:
        raise ValueError("fixed values must cover all non-grid dimensions")
    xs = np.linspace(x_min, x_max, resolution)
    ys = np.linspace(y_min, y_max, resolution)
    gx, gy = np.meshgrid(xs, ys)
    queries = np.column_stack(
        [gx.ravel(), gy.ravel(), np.tile(fixed, (gx.size, 1))]
        if fixed.size
        else [gx.ravel(), gy.ravel()]
    )
    values = eval_reward(model, queries, query_gamma).reshape(resolution, resolution)
    return RewardGrid(x_min, x_max, resolution, y_min, y_max, resolution, fixed, values)


MODEL_VERSION = 1


def save_reward_model(model: RewardModel, path) -> None:
    """Versioned npz with every fitted array and resolved scalar."""
    np.savez(
        path,
        version=MODEL_VERSION,
        inducing_x=model.inducing_x,
        inducing_gamma=model.inducing_gamma,
        alpha=model.alpha,
        output_scale=model.output_scale,
        length_scale_sq=model.length_scale_sq,
        norm_mean=model.norm_mean,
        norm_scale=model.norm_scale,
    )


def load_reward_model(path) -> RewardModel:
    with np.load(path) as data:
        version = int(data["version"])
        if version != MODEL_VERSION:
            raise ValueError(f"unsupported reward model version {version}")
        return RewardModel(
            inducing_x=data["inducing_x"],
            inducing_gamma=data["inducing_gamma"],
            alpha=data["alpha"],
            output_scale=float(data["output_scale"]),
            length_scale_sq=float(data["length_scale_sq"]),
            norm_mean=data["norm_mean"],
            norm_scale=data["norm_scale"],
        )


GRID_MAGIC = "socnav-reward-grid"
GRID_VERSION = 1


def format_reward_grid(grid: RewardGrid) -> str:
    """Text serialization: '#'-prefixed header lines then one tab-separated
    row per y index. Floats use repr so round-trips are bit-exact."""
    lines = [
        f"# {GRID_MAGIC} {GRID_VERSION}",
        f"# x {float(grid.x_min)!r} {float(grid.x_max)!r} {grid.nx}",
        f"# y {float(grid.y_min)!r} {float(grid.y_max)!r} {grid.ny}",
        "# fixed " + " ".join(repr(float(v)) for v in grid.fixed),
    ]
    for row in grid.values:
        lines.append("\t".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_reward_grid(grid: RewardGrid, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_reward_grid(grid))


def parse_reward_grid(text: str) -> RewardGrid:
    lines = text.splitlines()
    if not lines or not lines[0].startswith(f"# {GRID_MAGIC} "):
        raise ValueError("not a reward grid file")
    version = int(lines[0].split()[-1])
    if version != GRID_VERSION:
        raise ValueError(f"unsupported reward grid version {version}")
    _, _, x_min, x_max, nx = lines[1].split()
    _, _, y_min, y_max, ny = lines[2].split()
    fixed = np.array([float(v) for v in lines[3].split()[2:]])
    values = np.array([[float(v) for v in line.split("\t")] for line in lines[4:] if line])
    grid = RewardGrid(
        float(x_min), float(x_max), int(nx), float(y_min), float(y_max), int(ny), fixed, values
    )
    if grid.values.shape != (grid.ny, grid.nx):
        raise ValueError("grid payload does not match declared shape")
    return grid


def read_reward_grid(path) -> RewardGrid:
    with open(path) as fh:
        return parse_reward_grid(fh.read())
