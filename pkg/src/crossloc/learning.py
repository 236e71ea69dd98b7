"""Projection learning with a location-aware ranking hinge loss.

Each training sample anchors one feature vector i and its neighborhood N(i),
the `neighborhood_size` nearest features under the identity projection
(frozen for the whole run). Within N(i), k* is the neighbor whose location is
closest to i's (ties to the lower index), and every neighbor k carries the
margin m(i,k) = dloc(i,k) - dloc(i,k*) >= 0.

The per-sample loss is

    max(0, f(i,k*,W) - min_k (f(i,k,W) - m(i,k)))

with f(i,k,W) = ||W(g_i - g_k)||_2. Margins are constant in W, so the active
subgradient is d f(i,k*,W)/dW - d f(i,k_hat,W)/dW where k_hat attains the
margin-adjusted min, using d||Wd||/dW = (Wd) d^T / ||Wd||; zero-distance pairs
contribute nothing. Training runs Adam per sample over seeded-shuffled epochs
until the relative epoch-loss change drops below the tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CrossLocError, FormatError
from .neighbors import NeighborIndex, batch_knn
from .validation import as_float_matrix, as_locations

_PROJ_MAGIC = "CVPROJ1"
_DIFF_CACHE_BYTES = 64_000_000


@dataclass(frozen=True)
class Projection:
    """Linear map applied to feature vectors as W @ g (rows = output dims)."""

    matrix: np.ndarray
    config_digest: str = ""

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2:
            raise ValueError(f"projection matrix must be 2-D, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("projection matrix contains non-finite values")
        object.__setattr__(self, "matrix", m)

    @property
    def in_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def out_dim(self) -> int:
        return self.matrix.shape[0]

    def apply(self, X) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.matrix.T

    @classmethod
    def identity(cls, dim: int, config_digest: str = "") -> "Projection":
        return cls(np.eye(dim), config_digest=config_digest)


@dataclass(frozen=True)
class RankingSample:
    anchor: int
    neighborhood: np.ndarray  # (K,) neighbor indices
    k_star: int               # neighbor index with the smallest location delta
    k_star_pos: int           # position of k_star within `neighborhood`
    margins: np.ndarray       # (K,) location-delta margins, >= 0


@dataclass(frozen=True)
class AdamState:
    step: int
    first_moment: np.ndarray
    second_moment: np.ndarray
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def initial(cls, shape, learning_rate: float = 1e-3) -> "AdamState":
        return cls(
            step=0,
            first_moment=np.zeros(shape, dtype=np.float64),
            second_moment=np.zeros(shape, dtype=np.float64),
            learning_rate=learning_rate,
        )


@dataclass(frozen=True)
class TrainConfig:
    neighborhood_size: int = 20
    learning_rate: float = 1e-3
    max_iter: int = 50
    tolerance: float = 1e-4
    seed: int = 0
    max_train_points: int = 20000
    out_dim: int | None = None

    def __post_init__(self):
        if self.max_iter < 1:
            raise ValueError(f"max_iter must be >= 1, got {self.max_iter}")
        if self.neighborhood_size < 1:
            raise ValueError("neighborhood_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.tolerance < 0:
            raise ValueError("tolerance must be >= 0")
        if self.max_train_points < 2:
            raise ValueError("max_train_points must be >= 2")
        if self.out_dim is not None and self.out_dim < 1:
            raise ValueError("out_dim must be >= 1")


@dataclass
class TrainResult:
    projection: Projection
    epoch_losses: list[float] = field(default_factory=list)  # [initial, epoch1, ...]
    converged: bool = False
    n_epochs: int = 0


def feature_distance(i: int, k: int, w, feats) -> float:
    """f(i, k, W) = ||W (g_i - g_k)||_2."""
    feats = np.asarray(feats, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    d = w @ (feats[i] - feats[k])
    return math.sqrt(float((d * d).sum()))


def _identity_neighborhoods(feats: np.ndarray, k: int) -> np.ndarray:
    """(n, k) nearest-neighbor indices under the identity projection,
    excluding each point itself; distance ties break to the lower index."""
    n = feats.shape[0]
    index = NeighborIndex(np.arange(n), feats)
    ids, _ = batch_knn(index, feats, min(k + 1, n))
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        row = ids[i]
        out[i] = row[row != i][:k]
    return out


def build_ranking_samples(
    feats, locations, neighborhood_size: int = 20
) -> list[RankingSample]:
    """Freeze neighborhoods, reference neighbors k*, and margins for training."""
    feats = as_float_matrix(feats, "feats")
    locations = as_locations(locations, feats.shape[0])
    if feats.shape[0] < 2:
        raise ValueError("need at least 2 feature vectors")
    if neighborhood_size < 1:
        raise ValueError("neighborhood_size must be >= 1")
    k = min(neighborhood_size, feats.shape[0] - 1)
    nbh = _identity_neighborhoods(feats, k)
    samples = []
    for i in range(feats.shape[0]):
        deltas = np.hypot(
            locations[nbh[i], 0] - locations[i, 0],
            locations[nbh[i], 1] - locations[i, 1],
        )
        ties = np.nonzero(deltas == deltas.min())[0]
        k_star_pos = int(ties[np.argmin(nbh[i][ties])])
        samples.append(
            RankingSample(
                anchor=i,
                neighborhood=nbh[i].copy(),
                k_star=int(nbh[i][k_star_pos]),
                k_star_pos=k_star_pos,
                margins=deltas - deltas[k_star_pos],
            )
        )
    return samples


def _sample_f(sample: RankingSample, w: np.ndarray, feats: np.ndarray, diffs=None):
    if diffs is None:
        diffs = feats[sample.anchor] - feats[sample.neighborhood]
    proj = diffs @ w.T
    f = np.sqrt((proj * proj).sum(axis=1))
    return diffs, proj, f


def hinge_term(sample: RankingSample, w, feats) -> float:
    """The sample's contribution to the ranking loss (0 when satisfied)."""
    w = np.asarray(w, dtype=np.float64)
    feats = np.asarray(feats, dtype=np.float64)
    _, _, f = _sample_f(sample, w, feats)
    value = f[sample.k_star_pos] - float(np.min(f - sample.margins))
    return max(0.0, value)


def loss_and_subgradient(
    samples: Sequence[RankingSample], w, feats
) -> tuple[float, np.ndarray]:
    """Total hinge loss and its subgradient with respect to W."""
    w = np.asarray(w, dtype=np.float64)
    feats = np.asarray(feats, dtype=np.float64)
    total = 0.0
    grad = np.zeros_like(w)
    for sample in samples:
        diffs, proj, f = _sample_f(sample, w, feats)
        adjusted = f - sample.margins
        khat = int(np.argmin(adjusted))
        value = float(f[sample.k_star_pos] - adjusted[khat])
        if value <= 0.0:
            continue
        total += value
        fk = float(f[sample.k_star_pos])
        if fk > 0.0:
            grad += np.outer(proj[sample.k_star_pos], diffs[sample.k_star_pos]) / fk
        fh = float(f[khat])
        if fh > 0.0:
            grad -= np.outer(proj[khat], diffs[khat]) / fh
    return total, grad


def adam_step(state: AdamState, grad) -> tuple[AdamState, np.ndarray]:
    """One Adam update. Returns (next state, delta); apply as W <- W - delta."""
    grad = np.asarray(grad, dtype=np.float64)
    t = state.step + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    delta = state.learning_rate * m_hat / np.sqrt(v_hat + state.epsilon)
    next_state = replace(state, step=t, first_moment=m, second_moment=v)
    return next_state, delta


def _total_loss(samples, w, feats, diffs_cache=None) -> float:
    total = 0.0
    for pos, sample in enumerate(samples):
        diffs = None if diffs_cache is None else diffs_cache[pos]
        _, _, f = _sample_f(sample, w, feats, diffs=diffs)
        value = f[sample.k_star_pos] - float(np.min(f - sample.margins))
        if not math.isfinite(value):
            # an overflowed W makes every f infinite and value NaN; report the
            # divergence instead of skipping the sample as "satisfied"
            return float("nan")
        if value > 0.0:
            total += value
    return total


def train_projection(feats, locations, config: TrainConfig = TrainConfig()) -> TrainResult:
    """Learn W by per-sample Adam over the ranking hinge loss.

    Starts from the identity, shuffles sample order once with the seeded RNG,
    and stops early when the relative epoch-loss change falls below the
    tolerance. Non-finite losses abort with the offending epoch.
    """
    feats = as_float_matrix(feats, "feats")
    locations = as_locations(locations, feats.shape[0])
    rng = np.random.default_rng(config.seed)
    if feats.shape[0] > config.max_train_points:
        keep = np.sort(rng.choice(feats.shape[0], config.max_train_points, replace=False))
        feats = feats[keep]
        locations = locations[keep]

    samples = build_ranking_samples(feats, locations, config.neighborhood_size)
    in_dim = feats.shape[1]
    out_dim = config.out_dim if config.out_dim is not None else in_dim
    if out_dim > in_dim:
        raise ValueError(f"out_dim {out_dim} exceeds feature dimension {in_dim}")
    w = np.eye(out_dim, in_dim, dtype=np.float64)

    k = samples[0].neighborhood.shape[0]
    cache_bytes = len(samples) * k * in_dim * 8
    diffs_cache = None
    if cache_bytes <= _DIFF_CACHE_BYTES:
        diffs_cache = [feats[s.anchor] - feats[s.neighborhood] for s in samples]

    order = rng.permutation(len(samples))
    state = AdamState.initial(w.shape, learning_rate=config.learning_rate)
    losses = [_total_loss(samples, w, feats, diffs_cache)]
    converged = False
    epoch = 0
    for epoch in range(1, config.max_iter + 1):
        for pos in order:
            sample = samples[pos]
            diffs = diffs_cache[pos] if diffs_cache is not None else None
            diffs, proj, f = _sample_f(sample, w, feats, diffs=diffs)
            adjusted = f - sample.margins
            khat = int(np.argmin(adjusted))
            value = float(f[sample.k_star_pos] - adjusted[khat])
            if value <= 0.0:
                continue
            grad = np.zeros_like(w)
            fk = float(f[sample.k_star_pos])
            if fk > 0.0:
                grad += np.outer(proj[sample.k_star_pos], diffs[sample.k_star_pos]) / fk
            fh = float(f[khat])
            if fh > 0.0:
                grad -= np.outer(proj[khat], diffs[khat]) / fh
            state, delta = adam_step(state, grad)
            w -= delta
        loss = _total_loss(samples, w, feats, diffs_cache)
        if not math.isfinite(loss):
            raise CrossLocError(f"training diverged at epoch {epoch}: loss is not finite")
        prev = losses[-1]
        losses.append(loss)
        if loss == 0.0 or abs(loss - prev) / max(prev, 1e-12) < config.tolerance:
            converged = True
            break
    return TrainResult(
        projection=Projection(w),
        epoch_losses=losses,
        converged=converged,
        n_epochs=epoch,
    )


def learn_projection(feats, locations, config: TrainConfig = TrainConfig()) -> Projection:
    return train_projection(feats, locations, config).projection


def location_loss_metric(feats, locations, w, neighborhood_size: int = 20) -> float:
    """Sum over anchors of the location delta to the feature-nearest neighbor
    under W (ties to the lowest neighbor index). w may be a Projection or a
    raw matrix."""
    feats = as_float_matrix(feats, "feats")
    locations = as_locations(locations, feats.shape[0])
    if isinstance(w, Projection):
        w = w.matrix
    w = np.asarray(w, dtype=np.float64)
    samples = build_ranking_samples(feats, locations, neighborhood_size)
    total = 0.0
    for sample in samples:
        _, _, f = _sample_f(sample, w, feats)
        ties = np.nonzero(f == f.min())[0]
        chosen = int(np.min(sample.neighborhood[ties]))
        total += math.hypot(
            locations[chosen, 0] - locations[sample.anchor, 0],
            locations[chosen, 1] - locations[sample.anchor, 1],
        )
    return total


# ---------------------------------------------------------------------------
# projection file: text header, then row-major float32


def save_projection(path, proj: Projection) -> None:
    digest = proj.config_digest if proj.config_digest else "-"
    header = f"{_PROJ_MAGIC}\nrows={proj.out_dim}\ncols={proj.in_dim}\nfeature_config={digest}\n---\n"
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(proj.matrix.astype("<f4").tobytes())


def load_projection(path) -> Projection:
    blob = Path(path).read_bytes()
    sep = blob.find(b"---\n")
    if sep < 0:
        raise FormatError(f"{path}: missing header terminator '---'")
    try:
        lines = blob[:sep].decode("ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: header is not ASCII: {exc}") from exc
    if not lines or lines[0] != _PROJ_MAGIC:
        raise FormatError(f"{path}: bad magic line, expected {_PROJ_MAGIC!r}")
    fields = {}
    for line in lines[1:]:
        key, _, value = line.partition("=")
        fields[key] = value
    try:
        rows, cols = int(fields["rows"]), int(fields["cols"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: bad or missing rows/cols in header") from exc
    digest = fields.get("feature_config", "-")
    payload = blob[sep + 4 :]
    expected = rows * cols * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} "
            f"({rows}x{cols} float32)"
        )
    matrix = np.frombuffer(payload, dtype="<f4").reshape(rows, cols).astype(np.float64)
    return Projection(matrix, config_digest="" if digest == "-" else digest)
