"""Trust region policy optimization, written out in numpy.

The policy is a diagonal Gaussian whose mean and log standard deviation
are two linear heads on a shared tanh MLP (64-64). The critic is a tanh MLP
of the same shape with a scalar head, fitted with Adam on output-normalized
returns.

Gradients are hand-derived backprop. The Fisher-vector product is computed
exactly as ``J^T M J v`` (forward-mode for ``J v``, backprop for ``J^T``),
where ``M`` is the Gaussian Fisher metric: ``1/sigma^2`` on the mean and 2
on the log-std.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class TrpoConfig:
    gamma: float = 0.995
    step_size: float = 0.04
    cg_iters: int = 10
    cg_damping: float = 1e-5
    cg_residual_tol: float = 1e-10
    backtrack_ratio: float = 0.8
    max_backtracks: int = 10
    critic_epochs: int = 5
    critic_lr: float = 1e-3
    critic_minibatch: int = 64
    hidden: tuple = (64, 64)

    def __post_init__(self):
        if not 0 < self.gamma <= 1:
            raise ValueError("gamma must be in (0, 1]")
        if not self.step_size > 0:
            raise ValueError("step size must be positive")


# -- MLP plumbing ------------------------------------------------------------------

def _layer_shapes(sizes: Sequence[int]) -> list:
    shapes = []
    for a, b in zip(sizes[:-1], sizes[1:]):
        shapes += [(a, b), (b,)]
    return shapes


class FlatParams:
    """A flat float64 vector with named array views into it."""

    def __init__(self, shapes: Sequence[tuple], flat: Optional[np.ndarray] = None):
        self.shapes = [tuple(s) for s in shapes]
        sizes = [int(np.prod(s)) for s in self.shapes]
        self.size = sum(sizes)
        self.flat = np.zeros(self.size) if flat is None else np.array(flat, dtype=np.float64)
        if self.flat.shape != (self.size,):
            raise ValueError(f"expected {self.size} parameters, got {self.flat.shape}")
        self._offsets = np.cumsum([0] + sizes)
        self.views = self._views(self.flat)

    def _views(self, flat: np.ndarray) -> list:
        return [flat[o:o + int(np.prod(s))].reshape(s) for o, s in zip(self._offsets, self.shapes)]

    def unflatten(self, vec: np.ndarray) -> list:
        return self._views(vec)

    def with_flat(self, flat: np.ndarray):
        out = self.__class__.__new__(self.__class__)
        out.__dict__.update(self.__dict__)
        out.flat = np.array(flat, dtype=np.float64)
        out.views = out._views(out.flat)
        return out


def _ortho(rng: np.random.Generator, shape: tuple, gain: float) -> np.ndarray:
    a = rng.standard_normal(shape)
    u, _, vt = np.linalg.svd(a, full_matrices=False)
    w = u if u.shape == shape else vt
    return gain * w


class PolicyParams(FlatParams):
    """Gaussian MLP policy: trunk ``obs -> 64 -> 64`` then mean and log-std heads."""

    def __init__(self, obs_dim: int, act_dim: int, hidden=(64, 64), flat=None):
        self.obs_dim, self.act_dim, self.hidden = obs_dim, act_dim, tuple(hidden)
        trunk = _layer_shapes((obs_dim,) + self.hidden)
        h = self.hidden[-1]
        super().__init__(trunk + [(h, act_dim), (act_dim,), (h, act_dim), (act_dim,)], flat)

    @classmethod
    def initialize(cls, obs_dim: int, act_dim: int, rng: np.random.Generator,
                   hidden=(64, 64), init_log_std: float = 0.0) -> "PolicyParams":
        p = cls(obs_dim, act_dim, hidden)
        v = p.views
        for k in range(len(p.hidden)):
            v[2 * k][...] = _ortho(rng, v[2 * k].shape, math.sqrt(2.0))
        v[-4][...] = _ortho(rng, v[-4].shape, 0.01)
        v[-2][...] = _ortho(rng, v[-2].shape, 0.01)
        v[-1][...] = init_log_std
        return p

    def trunk(self, X: np.ndarray, views=None) -> list:
        views = views or self.views
        acts = [X]
        h = X
        for k in range(len(self.hidden)):
            h = np.tanh(h @ views[2 * k] + views[2 * k + 1])
            acts.append(h)
        return acts

    def forward(self, obs: np.ndarray) -> tuple:
        X = np.asarray(obs, dtype=np.float64)
        single = X.ndim == 1
        if X.shape[-1] != self.obs_dim:
            raise ValueError(f"observation has dim {X.shape[-1]}, policy expects {self.obs_dim}")
        X2 = X[None, :] if single else X
        mean, log_std, _, _ = self._heads(X2)
        std = np.exp(log_std)
        return (mean[0], std[0]) if single else (mean, std)

    def _heads(self, X: np.ndarray, views=None) -> tuple:
        views = views or self.views
        acts = self.trunk(X, views)
        h = acts[-1]
        mean = h @ views[-4] + views[-3]
        raw = h @ views[-2] + views[-1]
        log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
        mask = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
        return mean, log_std, acts, mask

    def backward(self, acts: list, d_mean: np.ndarray, d_log_std: np.ndarray, mask: np.ndarray) -> np.ndarray:
        """Gradient (flat) given output gradients; ``mask`` zeroes clipped log-std entries."""
        views = self.views
        grads = [None] * len(views)
        h = acts[-1]
        d_raw = d_log_std * mask
        grads[-4] = h.T @ d_mean
        grads[-3] = d_mean.sum(0)
        grads[-2] = h.T @ d_raw
        grads[-1] = d_raw.sum(0)
        dh = d_mean @ views[-4].T + d_raw @ views[-2].T
        for k in reversed(range(len(self.hidden))):
            out = acts[k + 1]
            dz = dh * (1.0 - out * out)
            grads[2 * k] = acts[k].T @ dz
            grads[2 * k + 1] = dz.sum(0)
            if k:
                dh = dz @ views[2 * k].T
        return np.concatenate([g.ravel() for g in grads])

    def jvp(self, acts: list, mask: np.ndarray, vec: np.ndarray) -> tuple:
        """Forward-mode directional derivative of (mean, log_std) along ``vec``."""
        views = self.views
        dv = self.unflatten(vec)
        dh = np.zeros_like(acts[0])
        for k in range(len(self.hidden)):
            pre = acts[k] @ dv[2 * k] + dv[2 * k + 1]
            if k:
                pre = pre + dh @ views[2 * k]
            out = acts[k + 1]
            dh = (1.0 - out * out) * pre
        h = acts[-1]
        d_mean = dh @ views[-4] + h @ dv[-4] + dv[-3]
        d_ls = (dh @ views[-2] + h @ dv[-2] + dv[-1]) * mask
        return d_mean, d_ls


class CriticParams(FlatParams):
    """Value MLP ``obs -> 64 -> 64 -> 1`` with output normalization (``y_mean``, ``y_std``)."""

    def __init__(self, obs_dim: int, hidden=(64, 64), flat=None):
        self.obs_dim, self.hidden = obs_dim, tuple(hidden)
        super().__init__(_layer_shapes((obs_dim,) + self.hidden + (1,)), flat)
        self.y_mean = 0.0
        self.y_std = 1.0

    @classmethod
    def initialize(cls, obs_dim: int, rng: np.random.Generator, hidden=(64, 64)) -> "CriticParams":
        c = cls(obs_dim, hidden)
        v = c.views
        for k in range(len(c.hidden)):
            v[2 * k][...] = _ortho(rng, v[2 * k].shape, math.sqrt(2.0))
        v[-2][...] = _ortho(rng, v[-2].shape, 1.0)
        return c

    def copy(self) -> "CriticParams":
        out = self.with_flat(self.flat)
        out.y_mean, out.y_std = self.y_mean, self.y_std
        return out

    def _forward(self, X: np.ndarray, flat: Optional[np.ndarray] = None) -> tuple:
        views = self.views if flat is None else self.unflatten(flat)
        acts = [X]
        h = X
        n = len(self.hidden)
        for k in range(n):
            h = np.tanh(h @ views[2 * k] + views[2 * k + 1])
            acts.append(h)
        out = (h @ views[-2] + views[-1])[:, 0]
        return out, acts

    def normalized(self, obs: np.ndarray) -> np.ndarray:
        return self._forward(np.atleast_2d(obs))[0]

    def predict(self, obs: np.ndarray) -> np.ndarray:
        return self.y_mean + self.y_std * self.normalized(obs)

    def grad(self, X: np.ndarray, y_norm: np.ndarray, flat: Optional[np.ndarray] = None) -> tuple:
        """Mean squared error on normalized targets and its flat gradient."""
        views = self.views if flat is None else self.unflatten(flat)
        out, acts = self._forward(X, flat)
        err = out - y_norm
        loss = float(np.mean(err * err))
        d_out = (2.0 / len(y_norm)) * err[:, None]
        grads = [None] * len(views)
        grads[-2] = acts[-1].T @ d_out
        grads[-1] = d_out.sum(0)
        dh = d_out @ views[-2].T
        for k in reversed(range(len(self.hidden))):
            out_k = acts[k + 1]
            dz = dh * (1.0 - out_k * out_k)
            grads[2 * k] = acts[k].T @ dz
            grads[2 * k + 1] = dz.sum(0)
            if k:
                dh = dz @ views[2 * k].T
        return loss, np.concatenate([g.ravel() for g in grads])


# -- distributions ---------------------------------------------------------------

def sample_action(mean: np.ndarray, std: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return mean + std * rng.standard_normal(np.shape(mean))


def log_prob(mean, std, action) -> np.ndarray:
    mean, std, action = (np.asarray(x, dtype=float) for x in (mean, std, action))
    z = (action - mean) / std
    return np.sum(-0.5 * z * z - np.log(std) - HALF_LOG_2PI, axis=-1)


def gaussian_kl(old: tuple, new: tuple) -> float:
    """Mean over the batch of KL(old || new) for diagonal Gaussians."""
    mu0, s0 = (np.asarray(x, dtype=float) for x in old)
    mu1, s1 = (np.asarray(x, dtype=float) for x in new)
    kl = np.log(s1 / s0) + (s0 ** 2 + (mu0 - mu1) ** 2) / (2.0 * s1 ** 2) - 0.5
    kl = np.sum(kl, axis=-1)
    return float(np.mean(kl))


# -- returns and advantages ---------------------------------------------------------

def compute_returns(rewards: Sequence[float], gamma: float) -> np.ndarray:
    """Discounted returns within one episode (no bootstrapping past its end)."""
    r = np.asarray(rewards, dtype=np.float64)
    if not np.all(np.isfinite(r)):
        raise ValueError("rewards must be finite")
    out = np.empty_like(r)
    acc = 0.0
    for t in range(len(r) - 1, -1, -1):
        acc = r[t] + gamma * acc
        out[t] = acc
    return out


def compute_advantages(returns: np.ndarray, values: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    returns = np.asarray(returns, dtype=float)
    values = np.asarray(values, dtype=float)
    if returns.shape != values.shape:
        raise ValueError("returns and values must have equal length")
    adv = returns - values
    std = adv.std()
    if std < eps:
        return np.zeros_like(adv)
    return (adv - adv.mean()) / (std + eps)


# -- critic ---------------------------------------------------------------------------

def critic_fit(critic: CriticParams, obs: np.ndarray, returns: np.ndarray, cfg: TrpoConfig,
               rng: Optional[np.random.Generator] = None) -> CriticParams:
    """Refit the critic to ``returns`` with ``cfg.critic_epochs`` passes of minibatch Adam.

    Output statistics are refreshed first, with the head rescaled so the
    current predictions are unchanged.
    """
    X = np.asarray(obs, dtype=float)
    y = np.asarray(returns, dtype=float)
    if len(y) == 0:
        raise ValueError("empty batch")
    if cfg.critic_epochs <= 0:
        return critic
    new = critic.copy()
    mu, sd = float(y.mean()), float(y.std())
    if sd < 1e-6:
        # degenerate batch: shift the mean but keep the old scale
        sd = critic.y_std
    v = new.views
    v[-2][...] *= critic.y_std / sd
    v[-1][...] = (critic.y_std * v[-1] + critic.y_mean - mu) / sd
    new.y_mean, new.y_std = mu, sd
    target = (y - mu) / sd

    rng = rng if rng is not None else np.random.default_rng(0)
    theta = new.flat.copy()
    m = np.zeros_like(theta)
    s = np.zeros_like(theta)
    b1, b2, eps, lr = 0.9, 0.999, 1e-8, cfg.critic_lr
    step = 0
    n = len(y)
    bs = min(cfg.critic_minibatch, n)
    for _ in range(cfg.critic_epochs):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            sel = order[start:start + bs]
            loss, g = new.grad(X[sel], target[sel], theta)
            if not (math.isfinite(loss) and np.all(np.isfinite(g))):
                return critic
            step += 1
            m = b1 * m + (1 - b1) * g
            s = b2 * s + (1 - b2) * g * g
            theta = theta - lr * (m / (1 - b1 ** step)) / (np.sqrt(s / (1 - b2 ** step)) + eps)
    out = new.with_flat(theta)
    out.y_mean, out.y_std = mu, sd
    return out


# -- conjugate gradient ---------------------------------------------------------------

class NonFiniteError(FloatingPointError):
    pass


def conjugate_gradient(fvp: Callable[[np.ndarray], np.ndarray], b: np.ndarray,
                       cfg: Optional[TrpoConfig] = None, iters: Optional[int] = None,
                       residual_tol: Optional[float] = None) -> np.ndarray:
    cfg = cfg or TrpoConfig()
    iters = cfg.cg_iters if iters is None else iters
    tol = cfg.cg_residual_tol if residual_tol is None else residual_tol
    b = np.asarray(b, dtype=float)
    x = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    rr = float(r @ r)
    for _ in range(iters):
        if rr < tol:
            break
        Ap = fvp(p)
        pAp = float(p @ Ap)
        if not math.isfinite(pAp) or pAp == 0.0:
            raise NonFiniteError("conjugate gradient hit a non-finite or zero curvature")
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = float(r @ r)
        p = r + (rr_new / rr) * p
        rr = rr_new
    if not np.all(np.isfinite(x)):
        raise NonFiniteError("conjugate gradient produced non-finite values")
    return x


# -- batches and the update -------------------------------------------------------------

@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    episode_starts: np.ndarray  # index of the first step of each episode
    returns: Optional[np.ndarray] = None
    values: Optional[np.ndarray] = None
    advantages: Optional[np.ndarray] = None

    @classmethod
    def from_episodes(cls, episodes: Sequence[tuple]) -> "Batch":
        """``episodes`` is a sequence of ``(obs, actions, rewards)`` arrays."""
        starts, offset = [], 0
        for o, _, _ in episodes:
            starts.append(offset)
            offset += len(o)
        return cls(np.concatenate([e[0] for e in episodes]),
                   np.concatenate([e[1] for e in episodes]),
                   np.concatenate([e[2] for e in episodes]),
                   np.array(starts, dtype=int))

    def episode_slices(self) -> list:
        ends = list(self.episode_starts[1:]) + [len(self.rewards)]
        return [slice(s, e) for s, e in zip(self.episode_starts, ends)]

    def finalize(self, critic: CriticParams, gamma: float) -> "Batch":
        self.returns = np.concatenate([compute_returns(self.rewards[s], gamma)
                                       for s in self.episode_slices()])
        self.values = critic.predict(self.obs)
        self.advantages = compute_advantages(self.returns, self.values)
        return self


class PolicyObjective:
    """Surrogate, KL and Fisher products for one batch around the old policy."""

    def __init__(self, policy: PolicyParams, batch: Batch):
        self.policy = policy
        self.obs = batch.obs
        self.actions = batch.actions
        self.adv = batch.advantages
        mean, log_std, acts, mask = policy._heads(self.obs)
        self.old_mean, self.old_log_std = mean, log_std
        self.old_std = np.exp(log_std)
        self._acts, self._mask = acts, mask
        self.old_logp = log_prob(mean, self.old_std, self.actions)
        self.n = len(self.obs)

    def _eval(self, flat: np.ndarray) -> tuple:
        p = self.policy.with_flat(flat)
        mean, log_std, acts, mask = p._heads(self.obs)
        return p, mean, log_std, acts, mask

    def surrogate(self, flat: np.ndarray) -> float:
        _, mean, log_std, _, _ = self._eval(flat)
        ratio = np.exp(log_prob(mean, np.exp(log_std), self.actions) - self.old_logp)
        return float(np.mean(ratio * self.adv))

    def surrogate_grad(self, flat: np.ndarray) -> np.ndarray:
        p, mean, log_std, acts, mask = self._eval(flat)
        std = np.exp(log_std)
        ratio = np.exp(log_prob(mean, std, self.actions) - self.old_logp)
        w = (ratio * self.adv / self.n)[:, None]
        z = (self.actions - mean) / std
        return p.backward(acts, w * z / std, w * (z * z - 1.0), mask)

    def kl(self, flat: np.ndarray) -> float:
        _, mean, log_std, _, _ = self._eval(flat)
        return gaussian_kl((self.old_mean, self.old_std), (mean, np.exp(log_std)))

    def kl_grad(self, flat: np.ndarray) -> np.ndarray:
        p, mean, log_std, acts, mask = self._eval(flat)
        var = np.exp(2.0 * log_std)
        d_mean = (mean - self.old_mean) / var / self.n
        d_ls = (1.0 - (self.old_std ** 2 + (self.old_mean - mean) ** 2) / var) / self.n
        return p.backward(acts, d_mean, d_ls, mask)

    def fvp(self, vec: np.ndarray, damping: float = 0.0) -> np.ndarray:
        d_mean, d_ls = self.policy.jvp(self._acts, self._mask, vec)
        g = self.policy.backward(self._acts, d_mean / self.old_std ** 2 / self.n,
                                 2.0 * d_ls / self.n, self._mask)
        return g + damping * vec


@dataclass
class UpdateInfo:
    accepted: bool
    kl: float = 0.0
    improvement: float = 0.0
    backtracks: int = 0
    step_norm: float = 0.0
    reason: str = ""


def trpo_update(policy: PolicyParams, batch: Batch, cfg: TrpoConfig) -> tuple:
    """One KL-constrained natural-gradient step; returns ``(policy, UpdateInfo)``.

    If no backtracked candidate satisfies both the KL bound and a positive
    surrogate improvement, the original parameters are returned.
    """
    if batch.advantages is None:
        raise ValueError("batch needs advantages")
    obj = PolicyObjective(policy, batch)
    theta = policy.flat
    g = obj.surrogate_grad(theta)
    if not np.all(np.isfinite(g)):
        return policy, UpdateInfo(False, reason="non-finite gradient")
    if not np.any(g):
        return policy, UpdateInfo(False, reason="zero gradient")
    try:
        s = conjugate_gradient(lambda v: obj.fvp(v, cfg.cg_damping), g, cfg)
    except NonFiniteError as exc:
        return policy, UpdateInfo(False, reason=str(exc))
    shs = float(s @ obj.fvp(s, cfg.cg_damping))
    if not (math.isfinite(shs) and shs > 0):
        return policy, UpdateInfo(False, reason="non-positive curvature")
    beta = math.sqrt(2.0 * cfg.step_size / shs)
    full = beta * s
    base = obj.surrogate(theta)
    for k in range(cfg.max_backtracks):
        frac = cfg.backtrack_ratio ** k
        cand = theta + frac * full
        kl = obj.kl(cand)
        improve = obj.surrogate(cand) - base
        if math.isfinite(kl) and kl <= cfg.step_size and improve > 0:
            return policy.with_flat(cand), UpdateInfo(True, kl, improve, k, float(np.linalg.norm(frac * full)))
    return policy, UpdateInfo(False, reason="line search failed", backtracks=cfg.max_backtracks)


# -- checkpoints ---------------------------------------------------------------------------

CKPT_MAGIC = b"URLP"


def save_checkpoint(path, arrays: Sequence[np.ndarray]) -> None:
    """``magic | u32 count | per array: u32 ndim, u32 dims... | f64 LE data``."""
    arrays = [np.asarray(a, dtype="<f8") for a in arrays]
    with open(path, "wb") as fh:
        fh.write(CKPT_MAGIC + struct.pack("<I", len(arrays)))
        for a in arrays:
            fh.write(struct.pack("<I", a.ndim) + struct.pack(f"<{a.ndim}I", *a.shape))
        for a in arrays:
            fh.write(a.tobytes())


def load_checkpoint(path) -> list:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != CKPT_MAGIC:
        raise ValueError("not a checkpoint file")
    (count,), pos = struct.unpack_from("<I", data, 4), 8
    shapes = []
    for _ in range(count):
        (ndim,) = struct.unpack_from("<I", data, pos)
        pos += 4
        shapes.append(struct.unpack_from(f"<{ndim}I", data, pos))
        pos += 4 * ndim
    out = []
    for shape in shapes:
        n = int(np.prod(shape)) if shape else 1
        out.append(np.frombuffer(data, dtype="<f8", count=n, offset=pos).reshape(shape).copy())
        pos += 8 * n
    return out


# -- agents ---------------------------------------------------------------------------------

class RandomAgent:
    """Uniform white-noise actions in ``[-scale, scale]``; never learns."""

    def __init__(self, act_dim: int, scale: float, rng: np.random.Generator):
        self.act_dim, self.scale, self.rng = act_dim, scale, rng

    def act(self, obs: np.ndarray) -> np.ndarray:
        return self.rng.uniform(-self.scale, self.scale, self.act_dim)

    def learn(self, episodes) -> None:
        return None


class TrpoAgent:
    """Acts with the current policy snapshot; ``learn`` runs one update on a batch.

    The policy and critic are initialized from the ``policy`` stream only,
    so every configuration sharing a seed starts from the same networks.
    """

    def __init__(self, obs_dim: int, act_dim: int, streams, cfg: Optional[TrpoConfig] = None,
                 init_log_std: float = 0.0):
        self.cfg = cfg or TrpoConfig()
        init = streams.get("policy")
        self.policy = PolicyParams.initialize(obs_dim, act_dim, init, self.cfg.hidden, init_log_std)
        self.critic = CriticParams.initialize(obs_dim, init, self.cfg.hidden)
        self.rng = streams.get("exploration")
        self.critic_rng = streams.get("critic")
        self.updates = 0

    def act(self, obs: np.ndarray) -> np.ndarray:
        mean, std = self.policy.forward(obs)
        return sample_action(mean, std, self.rng)

    def learn(self, episodes) -> UpdateInfo:
        batch = Batch.from_episodes([(e.obs[:-1], e.actions, e.rewards) for e in episodes])
        batch.finalize(self.critic, self.cfg.gamma)
        self.policy, info = trpo_update(self.policy, batch, self.cfg)
        self.critic = critic_fit(self.critic, batch.obs, batch.returns, self.cfg, self.critic_rng)
        self.updates += 1
        return info

    def save(self, path) -> None:
        save_checkpoint(path, [self.policy.flat, self.critic.flat,
                               np.array([self.critic.y_mean, self.critic.y_std])])

    def load(self, path) -> None:
        pol, cri, stats = load_checkpoint(path)
        self.policy = self.policy.with_flat(pol)
        self.critic = self.critic.with_flat(cri)
        self.critic.y_mean, self.critic.y_std = float(stats[0]), float(stats[1])
