"""Seeded path simulation and exact samplers for the limit laws.

The Brownian stepping is plain Gaussian increments.  Wherever the law of the
running maximum matters, the per-step maximum is drawn exactly from the
Brownian-bridge crossing law (one extra uniform per step), which removes the
O(sqrt(step)) late-detection bias of grid crossings and makes terminal
(position, maximum) pairs exact at any step size.

Streams are counter-based (Philox keyed by seed and stream id): identical
(seed, stream_id) reproduce identical paths bit for bit, distinct stream ids
are independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exact_laws import DensitySpec, BivariatePenalty, ExponentialBivariate, SeparableIndicator, TabulatedGrid, fbar

__all__ = [
    "RareEventError",
    "RngStream",
    "Path",
    "bm_path",
    "bessel3_path",
    "sample_Q_y",
    "sample_Q_ay",
    "sample_Q_phi",
    "sample_Q_f",
    "pitman_transform",
    "exact_bm_state",
    "exact_two_time_state",
    "q_level_terminal_batch",
]


class RareEventError(RuntimeError):
    """A required first passage did not happen within the configured cap."""

    def __init__(self, message: str, attempts: int):
        super().__init__(f"{message} (attempts: {attempts})")
        self.attempts = attempts


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream identified by (seed, stream_id)."""

    seed: int
    stream_id: int = 0

    def generator(self, *extra: int) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *extra))
        return np.random.Generator(np.random.Philox(ss))

    def substream(self, k: int) -> "RngStream":
        # flat id arithmetic keeps the (seed, stream_id) contract intact
        return RngStream(self.seed, (self.stream_id << 20) ^ (k + 1))


@dataclass
class Path:
    """A discretely sampled trajectory on the uniform grid 0, step, 2*step, ...

    ``runmax`` is the running maximum of the stored values.  ``hit_index`` is
    the first grid index at which the designated level was reached (None when
    the hit falls beyond the stored window); ``hit_time`` is the hit time in
    time units and may exceed the window, in which case it was drawn exactly
    from the residual first-passage law.  ``sup_total`` is the supremum of
    the full (untruncated) trajectory when the construction pins it down.
    """

    step: float
    values: np.ndarray
    runmax: np.ndarray
    hit_level: float | None = None
    hit_index: int | None = None
    hit_time: float | None = None
    sup_total: float | None = None
    cont_max: np.ndarray | None = None

    @property
    def times(self) -> np.ndarray:
        return self.step * np.arange(self.values.size)

    @property
    def horizon(self) -> float:
        return self.step * (self.values.size - 1)

    def write_csv(self, fh) -> None:
        """Dump the trajectory as CSV rows (t, x, s)."""
        fh.write("t,x,s\n")
        for t, x, s in zip(self.times, self.values, self.runmax):
            fh.write(f"{t},{x},{s}\n")

    def state_at(self, u: float):
        """(X_u, S_u) read off the stored grid."""
        k = int(round(u / self.step))
        if not (0 <= k < self.values.size):
            raise ValueError(f"time {u} outside the stored window")
        return float(self.values[k]), float(self.runmax[k])


def _check_grid(horizon: float, step: float) -> int:
    if horizon <= 0.0 or step <= 0.0 or step > horizon + 1e-15:
        raise ValueError("need 0 < step <= horizon")
    n = int(round(horizon / step))
    if abs(n * step - horizon) > 1e-9 * max(1.0, horizon):
        raise ValueError("horizon must be an integer number of steps")
    return n


def _bridge_maxima(x0: np.ndarray, x1: np.ndarray, dt: float, u: np.ndarray) -> np.ndarray:
    """Exact per-step maximum of a Brownian bridge between x0 and x1."""
    d = x1 - x0
    return 0.5 * (x0 + x1 + np.sqrt(d * d - 2.0 * dt * np.log(u)))


def bm_path(horizon: float, step: float, drift: float = 0.0,
            rng: RngStream | None = None, bridge_max: bool = False) -> Path:
    """Brownian path with the stated drift; running max maintained online."""
    n = _check_grid(horizon, step)
    gen = (rng or RngStream(0)).generator()
    inc = gen.standard_normal(n) * math.sqrt(step) + drift * step
    values = np.concatenate(([0.0], np.cumsum(inc)))
    runmax = np.maximum.accumulate(values)
    cont = None
    if bridge_max:
        u = gen.random(n)
        m = _bridge_maxima(values[:-1], values[1:], step, u)
        cont = np.concatenate(([0.0], np.maximum.accumulate(m)))
        cont = np.maximum(cont, runmax)
    return Path(step=step, values=values, runmax=runmax, cont_max=cont)


def bessel3_path(horizon: float, step: float, rng: RngStream | None = None,
                 method: str = "norm") -> Path:
    """Bessel(3) path started at 0.

    method="norm" takes the Euclidean norm of three independent Brownian
    paths (exact in law at the grid times); method="sde" is an Euler scheme
    for dR = dt/R + dW after one exact first step, kept as a cross-check.
    """
    n = _check_grid(horizon, step)
    gen = (rng or RngStream(0)).generator()
    if method == "norm":
        inc = gen.standard_normal((3, n)) * math.sqrt(step)
        coords = np.cumsum(inc, axis=1)
        values = np.concatenate(([0.0], np.sqrt(np.sum(coords * coords, axis=0))))
    elif method == "sde":
        g0 = gen.standard_normal(3)
        values = np.empty(n + 1)
        values[0] = 0.0
        values[1] = math.sqrt(step) * math.sqrt(float(np.sum(g0 * g0)))
        g = gen.standard_normal(n - 1)
        for k in range(1, n):
            r = values[k]
            values[k + 1] = abs(r + step / r + math.sqrt(step) * g[k - 1])
    else:
        raise ValueError("method must be 'norm' or 'sde'")
    return Path(step=step, values=values, runmax=np.maximum.accumulate(values))


# ---------------------------------------------------------------------------
# exact terminal-state sampling (any step count gives the exact law)
# ---------------------------------------------------------------------------

def exact_bm_state(t: float, n: int, gen: np.random.Generator,
                   drift: float = 0.0, steps: int = 32):
    """n exact draws of (X_t, S_t) via per-step bridge maxima."""
    dt = t / steps
    x = np.zeros(n)
    s = np.zeros(n)
    root = math.sqrt(dt)
    for _ in range(steps):
        x1 = x + gen.standard_normal(n) * root + drift * dt
        m = _bridge_maxima(x, x1, dt, gen.random(n))
        np.maximum(s, m, out=s)
        x = x1
    return x, s


def exact_two_time_state(u: float, t: float, n: int, gen: np.random.Generator,
                         steps: int = 32):
    """n exact draws of (X_u, S_u, X_t, S_t) for 0 < u < t."""
    if not 0.0 < u < t:
        raise ValueError("need 0 < u < t")
    xu, su = exact_bm_state(u, n, gen, steps=steps)
    x2, s2 = exact_bm_state(t - u, n, gen, steps=steps)
    xt = xu + x2
    st = np.maximum(su, xu + s2)
    return xu, su, xt, st


# ---------------------------------------------------------------------------
# limit-law samplers
# ---------------------------------------------------------------------------

def _simulate_to_level(level: float, n_steps: int, step: float,
                       gen: np.random.Generator):
    """Scalar-path pre/post-hit simulation used by sample_Q_y.

    Returns (values, hit_index or None).  When the level is reached at step
    k the stored value there is the level itself and the remaining window is
    level minus a Bessel(3) path started at 0.
    """
    root = math.sqrt(step)
    inc = gen.standard_normal(n_steps) * root
    values = np.concatenate(([0.0], np.cumsum(inc)))
    u = gen.random(n_steps)
    m = _bridge_maxima(values[:-1], values[1:], step, u)
    crossed = np.nonzero(m >= level)[0]
    if crossed.size == 0:
        return values, None
    j = int(crossed[0]) + 1
    values[j] = level
    rest = n_steps - j
    if rest > 0:
        binc = gen.standard_normal((3, rest)) * root
        coords = np.cumsum(binc, axis=1)
        values[j + 1:] = level - np.sqrt(np.sum(coords * coords, axis=0))
    return values, j


def sample_Q_y(y: float, horizon: float, step: float, rng: RngStream | None = None,
               gen: np.random.Generator | None = None,
               require_hit: bool = False, cap: float | None = None) -> Path:
    """One path of the limit law pinned at terminal maximum y.

    Brownian until the first (bridge-corrected) crossing of y, then y minus
    an independent Bessel(3) started at 0.  If the crossing has not happened
    by the stored horizon, the residual first-passage time is drawn exactly
    from (y - X)^2 / Z^2 and recorded in ``hit_time``; with require_hit=True
    the pre-hit phase is extended until the crossing instead, and a
    RareEventError is raised when the cap (default 100 y^2 time units) is
    exhausted.
    """
    if y <= 0.0:
        raise ValueError("sample_Q_y requires y > 0")
    n = _check_grid(horizon, step)
    if gen is None:
        gen = (rng or RngStream(0)).generator()
    values, j = _simulate_to_level(y, n, step, gen)

    if j is None and require_hit:
        cap_time = 100.0 * y * y if cap is None else cap
        block = max(n, 1024)
        attempts = 1
        total = n
        x_last = values[-1]
        chunks = [values]
        while True:
            if total * step >= cap_time:
                raise RareEventError(
                    f"first passage to {y} not reached within cap {cap_time}", attempts)
            attempts += 1
            root = math.sqrt(step)
            inc = gen.standard_normal(block) * root
            seg = x_last + np.cumsum(inc)
            m = _bridge_maxima(np.concatenate(([x_last], seg[:-1])), seg, step,
                               gen.random(block))
            crossed = np.nonzero(m >= y)[0]
            if crossed.size:
                k = int(crossed[0])
                seg = seg[:k + 1]
                seg[-1] = y
                chunks.append(seg)
                values = np.concatenate(chunks)
                j = values.size - 1
                break
            chunks.append(seg)
            x_last = float(seg[-1])
            total += block
        n = values.size - 1

    if j is None:
        z = gen.standard_normal()
        while z == 0.0:
            z = gen.standard_normal()
        t_rem = (y - values[-1]) ** 2 / (z * z)
        hit_time = n * step + t_rem
        hit_index = None
    else:
        hit_time = j * step
        hit_index = j

    runmax = np.maximum.accumulate(values)
    return Path(step=step, values=values, runmax=runmax, hit_level=y,
                hit_index=hit_index, hit_time=hit_time, sup_total=y)


def sample_Q_ay(a: float, y: float, horizon: float, step: float,
                rng: RngStream | None = None,
                gen: np.random.Generator | None = None) -> Path:
    """One path of the limiting bridge law: atom at level y, else uniform level."""
    if y <= 0.0 or y < max(a, 0.0):
        raise ValueError("sample_Q_ay requires y >= max(a, 0) and y > 0")
    if gen is None:
        gen = (rng or RngStream(0)).generator()
    w = (y - a) / (2.0 * y - a)
    if gen.random() < w:
        level = y
    else:
        level = y * (1.0 - gen.random())   # in (0, y]
    return sample_Q_y(level, horizon, step, gen=gen)


def sample_Q_phi(phi: DensitySpec, horizon: float, step: float,
                 rng: RngStream | None = None,
                 gen: np.random.Generator | None = None) -> Path:
    """One path of the phi-mixture law: draw the terminal maximum from phi."""
    if gen is None:
        gen = (rng or RngStream(0)).generator()
    level = float(phi.ppf(gen.random()))
    if level <= 0.0:
        level = float(phi.ppf(0.5 * (1.0 + gen.random())))
    return sample_Q_y(level, horizon, step, gen=gen)


def draw_penalty_pair(f: BivariatePenalty, gen: np.random.Generator):
    """One exact draw of (a, y) from the normalized density (2y - a) f(a, y).

    Exponential and separable-indicator families use exact mixture or
    inverse-CDF decompositions; tabulated penalties sample a grid cell by
    mass and a point within it.
    """
    if isinstance(f, ExponentialBivariate):
        if not math.isfinite(fbar(f)):
            raise ValueError("penalty has infinite weighted mass")
        mu = f.mu
        beta = -(f.lam + f.mu)
        # terminal level: density (1 + mu y) e^{-beta y} -> Exp/Gamma(2) mixture
        w1 = beta / (beta + mu)
        if gen.random() < w1:
            yv = gen.exponential(1.0 / beta)
        else:
            yv = gen.exponential(1.0 / beta) + gen.exponential(1.0 / beta)
        # endpoint offset s = y - a: density (y + s) e^{-mu s}
        w1 = yv * mu / (yv * mu + 1.0)
        if gen.random() < w1:
            s = gen.exponential(1.0 / mu)
        else:
            s = gen.exponential(1.0 / mu) + gen.exponential(1.0 / mu)
        return yv - s, yv
    if isinstance(f, SeparableIndicator):
        A = f.cutoff
        g = f.f1_grid
        # marginal of a on the tabulation: (A - a) f1(a), sampled on a refined grid
        fine = np.linspace(g[0], g[-1], 8193)
        dens = (A - fine) * f.f1(fine)
        cdf = np.concatenate(([0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(fine))))
        cdf /= cdf[-1]
        av = float(np.interp(gen.random(), cdf, fine))
        # conditional level: CDF y(y - a) / (A (A - a)) on (a+, A]
        q = gen.random()
        yv = 0.5 * (av + math.sqrt(av * av + 4.0 * q * A * (A - av)))
        return av, min(yv, A)
    if isinstance(f, TabulatedGrid):
        a, yg = f.a_grid, f.y_grid
        aa, yy = np.meshgrid(0.5 * (a[:-1] + a[1:]), 0.5 * (yg[:-1] + yg[1:]), indexing="ij")
        da = np.diff(a)[:, None]
        dy = np.diff(yg)[None, :]
        supported = yy >= np.maximum(aa, 0.0)
        mass = np.where(supported, (2.0 * yy - aa) * f._bilinear(aa, yy) * da * dy, 0.0)
        flat = mass.ravel()
        total = flat.sum()
        if total <= 0.0:
            raise ValueError("penalty table carries no mass")
        idx = int(np.searchsorted(np.cumsum(flat) / total, gen.random()))
        ia, iy = np.unravel_index(min(idx, flat.size - 1), mass.shape)
        av = a[ia] + gen.random() * (a[ia + 1] - a[ia])
        yv = yg[iy] + gen.random() * (yg[iy + 1] - yg[iy])
        return av, max(yv, max(av, 0.0) + 1e-12)
    raise TypeError(f"unsupported penalty type {type(f)!r}")


def draw_penalty_pairs(f: BivariatePenalty, n: int, gen: np.random.Generator):
    """n exact draws of (a, y); vectorized for the exponential family."""
    if isinstance(f, ExponentialBivariate):
        if not math.isfinite(fbar(f)):
            raise ValueError("penalty has infinite weighted mass")
        mu = f.mu
        beta = -(f.lam + f.mu)
        e1 = gen.exponential(1.0 / beta, size=n)
        e2 = gen.exponential(1.0 / beta, size=n)
        y = np.where(gen.random(n) < beta / (beta + mu), e1, e1 + e2)
        g1 = gen.exponential(1.0 / mu, size=n)
        g2 = gen.exponential(1.0 / mu, size=n)
        s = np.where(gen.random(n) < y * mu / (y * mu + 1.0), g1, g1 + g2)
        return y - s, y
    pairs = [draw_penalty_pair(f, gen) for _ in range(n)]
    return np.array([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def sample_Q_f(f: BivariatePenalty, horizon: float, step: float,
               rng: RngStream | None = None,
               gen: np.random.Generator | None = None) -> Path:
    """One path of the bivariate-penalty limit law."""
    if not math.isfinite(fbar(f)):
        raise ValueError("sample_Q_f requires a finite fbar(f)")
    if gen is None:
        gen = (rng or RngStream(0)).generator()
    a, y = draw_penalty_pair(f, gen)
    return sample_Q_ay(a, y, horizon, step, gen=gen)


def pitman_transform(p: Path) -> Path:
    """The path 2 * (running max) - (values), with its own running max.

    Uses the bridge-corrected running max when the input carries one.
    """
    smax = p.cont_max if p.cont_max is not None else p.runmax
    values = 2.0 * smax - p.values
    return Path(step=p.step, values=values, runmax=np.maximum.accumulate(values))


# ---------------------------------------------------------------------------
# batched limit-law terminal states (the engine behind the oracle tests)
# ---------------------------------------------------------------------------

def q_level_terminal_batch(levels, horizon: float, step: float,
                           gen: np.random.Generator):
    """Vectorized evolution of n level-pinned paths on [0, horizon].

    Returns a dict with the states at the end of the window (positions,
    bridge-exact running maxima), hit bookkeeping and the exact total
    supremum.  The per-step draw schedule is fixed (3 normals + 1 uniform
    per path per step) so results do not depend on the hit pattern.
    """
    levels = np.asarray(levels, dtype=float)
    if np.any(levels <= 0.0):
        raise ValueError("levels must be positive")
    n = levels.size
    n_steps = _check_grid(horizon, step)
    root = math.sqrt(step)

    x = np.zeros(n)
    s = np.zeros(n)
    hit = np.zeros(n, dtype=bool)
    hit_step = np.full(n, -1, dtype=np.int64)
    b = np.zeros((3, n))

    for k in range(n_steps):
        z = gen.standard_normal((3, n))
        ustep = gen.random(n)
        post = hit.copy()                 # hit on an earlier step
        x1 = x + z[0] * root
        m = _bridge_maxima(x, x1, step, ustep)
        newly = ~hit & (m >= levels)
        cont = ~hit & ~newly
        b = np.where(post[None, :], b + z * root, b)
        xb = levels - np.sqrt(np.sum(b * b, axis=0))
        x = np.where(cont, x1, np.where(newly, levels, np.where(post, xb, x)))
        s = np.where(cont, np.maximum(s, m), np.where(newly, levels, s))
        hit_step = np.where(newly, k + 1, hit_step)
        b = np.where(newly[None, :], 0.0, b)
        hit |= newly

    z_tail = gen.standard_normal(n)
    z_tail[z_tail == 0.0] = 1.0
    t_rem = (levels - x) ** 2 / (z_tail * z_tail)
    hit_time = np.where(hit, hit_step * step, n_steps * step + t_rem)
    return {
        "x": x,
        "s": s,
        "hit": hit,
        "hit_step": hit_step,
        "hit_time": hit_time,
        "sup_total": levels.copy(),
        "window_max": s.copy(),
    }
