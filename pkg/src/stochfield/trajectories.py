"""Jump-process trajectories.

Single paths are drawn with the direct Gillespie method and carry the
sampler's own log-density so the path-weight formula can be checked
against an independent accounting.  Monte-Carlo estimators run many paths
at once in fixed-size blocks; block ``b`` draws from the stream
``default_rng([seed, b])``, so results do not depend on how blocks are
scheduled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .algebra import _check_square
from .exceptions import FieldError, PreconditionError
from .generators import local_projection

BLOCK_SIZE = 8192
FREQUENCY_TOL = 1e-12


class InvalidPathError(FieldError):
    code = "invalid-path"


@dataclass
class Path:
    start: int
    jumps: list  # (time, destination)
    horizon: float
    log_density: float | None = field(default=None, compare=False)

    @property
    def n_jumps(self):
        return len(self.jumps)

    def states(self):
        """Configurations visited, starting with ``start``."""
        return [self.start] + [d for _, d in self.jumps]

    def segments(self):
        """``(state, t0, t1)`` holding intervals covering ``[0, horizon]``."""
        out = []
        t, w = 0.0, self.start
        for tj, d in self.jumps:
            out.append((w, t, tj))
            t, w = tj, d
        out.append((w, t, self.horizon))
        return out

    def final(self):
        return self.jumps[-1][1] if self.jumps else self.start


@dataclass
class PathStats:
    estimate: float
    stderr: float
    n_samples: int
    seed: int

    def to_dict(self):
        return {"estimate": self.estimate, "stderr": self.stderr, "n_samples": self.n_samples, "seed": self.seed}


def validate_path(path: Path, n_states: int) -> None:
    if path.horizon < 0 or not math.isfinite(path.horizon):
        raise InvalidPathError("path horizon must be finite and nonnegative")
    if not 0 <= path.start < n_states:
        raise InvalidPathError(f"start configuration {path.start} out of range")
    prev_t, prev_w = 0.0, path.start
    for t, d in path.jumps:
        if not prev_t < t <= path.horizon:
            raise InvalidPathError(f"jump times must be strictly increasing within (0, T]; got {t}")
        if not 0 <= d < n_states:
            raise InvalidPathError(f"destination {d} out of range")
        if d == prev_w:
            raise InvalidPathError(f"jump at t={t} does not change the configuration")
        prev_t, prev_w = t, d


# -- single paths -------------------------------------------------------------

def sample_path(G, start: int, T: float, seed) -> Path:
    """One Gillespie trajectory on ``[0, T]``.

    The returned path records the log-density the sampler itself assigned:
    exponential holding-time densities, categorical jump probabilities and
    the survival probability of the last holding interval.
    """
    G = _check_square(G)
    rng = np.random.default_rng(seed)
    n = G.shape[0]
    t, w = 0.0, int(start)
    jumps = []
    logp = 0.0
    while True:
        K = -G[w, w]
        if K <= 0.0:
            break
        dt = rng.exponential(1.0 / K)
        if t + dt > T:
            logp += -K * (T - t)
            break
        rates = np.clip(G[:, w], 0.0, None)
        rates[w] = 0.0
        probs = rates / rates.sum()
        d = int(rng.choice(n, p=probs))
        logp += math.log(K) - K * dt + math.log(probs[d])
        t += dt
        w = d
        jumps.append((t, d))
    return Path(int(start), jumps, float(T), logp)


def path_log_weight(G, path: Path) -> float:
    """``sum_i G[w_i, w_i] dt_i + sum_jumps log G[w+, w]``; ``-inf`` for an impossible jump."""
    G = np.asarray(G, dtype=float)
    validate_path(path, G.shape[0])
    total = 0.0
    for w, t0, t1 in path.segments():
        total += G[w, w] * (t1 - t0)
    prev = path.start
    for _, d in path.jumps:
        r = G[d, prev]
        if r <= 0.0:
            return -math.inf
        total += math.log(r)
        prev = d
    return total


def field_lagrangian_terms(topology, tables, path: Path) -> list:
    """Per-node integral of the field Lagrangian along ``path``.

    For node ``x`` this is the survival rate ``-G(x)[u|Omega_x, u]``
    integrated over the path plus ``-log G(x)[o', u]`` at each jump of
    ``x``.  Their sum is ``-path_log_weight``.
    """
    tables = {topology.index(k): v for k, v in dict(tables).items()}
    validate_path(path, topology.n_states)
    n_nodes = len(topology.nodes)
    loc = [topology.local_region(i).index_of_state for i in range(n_nodes)]
    obs = [topology.observed_region(i).index_of_state for i in range(n_nodes)]
    proj = [local_projection(topology, i) for i in range(n_nodes)]
    terms = [0.0] * n_nodes
    for w, t0, t1 in path.segments():
        for i in range(n_nodes):
            u = obs[i][w]
            terms[i] -= tables[i].rates[proj[i][u], u] * (t1 - t0)
    prev = path.start
    for t, d in path.jumps:
        movers = [i for i in range(n_nodes) if loc[i][d] != loc[i][prev]]
        if len(movers) != 1:
            raise InvalidPathError(f"jump at t={t} changes {len(movers)} nodes' local digits; exactly one expected")
        i = movers[0]
        r = tables[i].rates[loc[i][d], obs[i][prev]]
        terms[i] += math.inf if r <= 0.0 else -math.log(r)
        prev = d
    return terms


# -- vectorized sampling ----------------------------------------------------------

@dataclass
class BlockResult:
    final: np.ndarray
    n_jumps: np.ndarray
    signal: np.ndarray | None = None
    action: np.ndarray | None = None


def _jump_tables(G):
    n = G.shape[0]
    K = np.clip(-np.diag(G), 0.0, None)
    R = np.clip(G, 0.0, None)
    np.fill_diagonal(R, 0.0)
    tot = R.sum(axis=0)
    P = R / np.where(tot > 0, tot, 1.0)[None, :]
    cum = np.cumsum(P, axis=0).T.copy()  # cum[w, :]: cumulative jump distribution out of w
    for w in np.nonzero(tot > 0)[0]:
        last = np.nonzero(P[:, w])[0][-1]
        cum[w, last:] = 1.0  # absorb rounding so a uniform draw always lands on a real target
    return K, cum, n


def _simulate_block(G, start, T, rng, size, gamma=None, want_action=False):
    K, cum, n = _jump_tables(G)
    state = np.full(size, int(start), dtype=np.int64)
    t = np.zeros(size)
    n_jumps = np.zeros(size, dtype=np.int64)
    signal = np.zeros(size) if gamma is not None else None
    action = np.zeros(size) if want_action else None
    logG = None
    if want_action:
        with np.errstate(divide="ignore"):
            logG = np.log(np.where(G > 0, G, 0.0))
    active = np.nonzero(K[state] > 0)[0]
    while active.size:
        w = state[active]
        k = K[w]
        dt = rng.exponential(1.0, size=active.size) / k
        u = rng.random(active.size)
        t_new = t[active] + dt
        done = t_new > T
        if want_action:
            stay = np.where(done, T - t[active], dt)
            action[active] += k * stay
        go = active[~done]
        wg = w[~done]
        d = (u[~done][:, None] < cum[wg]).argmax(axis=1)
        if gamma is not None:
            signal[go] += gamma[d, wg]
        if want_action:
            action[go] -= logG[d, wg]
        state[go] = d
        t[go] = t_new[~done]
        n_jumps[go] += 1
        nxt = go[K[d] > 0]
        active = nxt
    return BlockResult(state, n_jumps, signal, action)


def simulate(G, start, T, n, seed, gamma=None, want_action=False) -> BlockResult:
    """Run ``n`` independent paths from ``start`` and collect per-path statistics.

    ``gamma`` (dense ``[dest, src]``) accumulates the jump signal;
    ``want_action`` accumulates the Lagrangian integral ``int L dt``.
    """
    G = _check_square(G)
    if n < 1:
        raise ValueError("need at least one path")
    parts = []
    for b, lo in enumerate(range(0, n, BLOCK_SIZE)):
        rng = np.random.default_rng([int(seed), b])
        parts.append(_simulate_block(G, start, float(T), rng, min(BLOCK_SIZE, n - lo), gamma, want_action))
    cat = lambda name: None if getattr(parts[0], name) is None else np.concatenate([getattr(p, name) for p in parts])
    return BlockResult(cat("final"), cat("n_jumps"), cat("signal"), cat("action"))


def _mean_stats(x, seed) -> PathStats:
    n = x.size
    # fsum keeps the mean independent of block boundaries and order of accumulation
    mean = math.fsum(x) / n
    var = math.fsum((x - mean) ** 2) / (n - 1) if n > 1 else 0.0
    return PathStats(mean, math.sqrt(var / n), n, int(seed))


def mc_transition_prob(G, start, dest, T, n, seed) -> PathStats:
    """Fraction of sampled paths from ``start`` that sit at ``dest`` at time ``T``."""
    return mc_transition_row(G, start, T, n, seed)[dest]


def mc_transition_row(G, start, T, n, seed) -> list:
    """:class:`PathStats` for every destination, from one batch of paths."""
    G = _check_square(G)
    res = simulate(G, start, T, n, seed)
    counts = np.bincount(res.final, minlength=G.shape[0])
    out = []
    for c in counts:
        p = c / n
        out.append(PathStats(float(p), math.sqrt(p * (1 - p) / n), int(n), int(seed)))
    return out


def mc_expected_signal(G, gamma, start, T, n, seed) -> PathStats:
    """Monte-Carlo mean of the signal accumulated over jumps on ``[0, T]``."""
    G = _check_square(G)
    M = gamma.dense() if hasattr(gamma, "dense") else np.asarray(gamma, dtype=float)
    if not np.any(M):
        return PathStats(0.0, 0.0, int(n), int(seed))
    res = simulate(G, start, T, n, seed, gamma=M)
    return _mean_stats(res.signal, seed)


@dataclass
class EntropyCheck:
    mc_mean: float
    stderr: float
    bound: float
    entropies: list
    n_samples: int
    seed: int
    analytic_mean: float

    def to_dict(self):
        return {k: getattr(self, k) for k in ("mc_mean", "stderr", "bound", "entropies", "n_samples", "seed",
                                              "analytic_mean")}


def jump_entropies(G) -> np.ndarray:
    """Shannon entropy of the jump distribution out of every configuration."""
    G = np.asarray(G, dtype=float)
    R = np.clip(G, 0.0, None)
    np.fill_diagonal(R, 0.0)
    tot = R.sum(axis=0)
    H = np.zeros(G.shape[0])
    for w in range(G.shape[0]):
        if tot[w] > 0:
            p = R[:, w] / tot[w]
            p = p[p > 0]
            H[w] = float(-(p * np.log(p)).sum())
    return H


def entropy_bound_check(G, T, start, n, seed) -> EntropyCheck:
    """MC estimate of ``E int_0^T L dt`` against ``K T (1 - log K)``.

    Requires every configuration to be left at the same total rate ``K``.
    The analytic mean ``K T + K T (H_avg - log K)`` uses the time-averaged
    jump entropy along the exact transient and is reported for reference.
    """
    from .dynamics import integrated_expm, Chain

    G = _check_square(G)
    K_all = -np.diag(G)
    K = float(K_all[0])
    if np.any(np.abs(K_all - K) > FREQUENCY_TOL * max(1.0, K)) or K <= 0:
        raise PreconditionError("entropy bound requires a constant positive exit rate in every configuration")
    H = jump_entropies(G)
    res = simulate(G, start, T, n, seed, want_action=True)
    stats = _mean_stats(res.action, seed)
    bound = K * T * (1.0 - math.log(K))
    analytic = float("nan")
    ch = Chain(G)
    e = np.zeros(G.shape[0])
    e[start] = 1.0
    if ch.ergodic:
        occ = integrated_expm(ch, T) @ e
        analytic = K * T + K * float(occ @ (H - math.log(K)))
    return EntropyCheck(stats.estimate, stats.stderr, bound, H.tolist(), stats.n_samples, int(seed), analytic)
