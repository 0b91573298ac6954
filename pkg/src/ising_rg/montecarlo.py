"""Markov-chain Monte Carlo for the perturbed Ising model.

Two updates are available:

* single-site Metropolis, valid for any even interaction;
* Wolff clusters, used only when every coupling is a ferromagnetic pair.

A "sweep" is ``N`` Metropolis attempts at uniformly random sites, or a fixed
number of Wolff clusters, chosen on the first sweep so that about ``N`` spins
flip per sweep.  The count is frozen afterwards: stopping after a random
number of clusters would bias the sampled distribution.

Randomness comes from xoshiro256** streams.  A run seed is expanded with
``numpy.random.SeedSequence(seed).spawn(k)``; chain ``i`` takes the first four
64-bit words of the ``i``-th child as its state.  The state is plain data, so
checkpoints restore a chain bit for bit.

Checkpoints are JSON documents (``CHECKPOINT_VERSION``) holding the geometry
spec, the interaction table, ``beta``, the algorithm, the spin array (base64
int8, row-major ``(M, L)``), the four RNG words and the sweep/sample counters.
"""

from __future__ import annotations

import base64
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
from numba import njit

from .geometry import BondObservable, LatticeGeometry, resolve_bonds
from .model import DEFAULT_LAMBDA_WINDOW, Interaction

CHECKPOINT_VERSION = "ising-mc-checkpoint/1"
MIN_BLOCKS = 10
TAU_WINDOW_FACTOR = 6.0

METROPOLIS = "metropolis"
WOLFF = "wolff"
AUTO = "auto"


class MCError(ValueError):
    """Invalid Monte Carlo request."""


class InsufficientSamples(MCError):
    """Too few samples for a blocking error estimate."""


class NoCrossing(ArithmeticError):
    """No Binder-cumulant crossing inside the scanned window."""


class RatioInstability(ArithmeticError):
    """A correlation ratio is not sign-stable; usually beta is off criticality."""


# --------------------------------------------------------------------- RNG
@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True)
def _next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True)
def _uniform(s):
    return float(_next_u64(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


def split_seed(seed: int, n_streams: int) -> list[np.ndarray]:
    """Independent xoshiro256** states derived from one 64-bit seed."""
    children = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF).spawn(n_streams)
    out = []
    for ch in children:
        st = ch.generate_state(4, np.uint64)
        if not st.any():
            st[0] = np.uint64(1)
        out.append(st)
    return out


# ----------------------------------------------------------------- updates
@njit(cache=True)
def _metropolis_sweep(spins, n_sites, beta, ptr, term_idx, term_sites, term_len, term_coef, rng):
    for _ in range(n_sites):
        i = int(_uniform(rng) * n_sites)
        field_ = 0.0
        for k in range(ptr[i], ptr[i + 1]):
            t = term_idx[k]
            prod = term_coef[t]
            for q in range(term_len[t]):
                prod *= spins[term_sites[t, q]]
            field_ += prod
        dE = -2.0 * field_
        if dE <= 0.0 or _uniform(rng) < math.exp(-beta * dE):
            spins[i] = -spins[i]


@njit(cache=True)
def _wolff_clusters(spins, n_clusters, nb_ptr, nb_idx, nb_prob, rng, stack):
    """Grow and flip ``n_clusters`` Wolff clusters; returns the number of flipped spins."""
    n_sites = spins.shape[0]
    flipped = 0
    for _ in range(n_clusters):
        seed = int(_uniform(rng) * n_sites)
        s0 = spins[seed]
        spins[seed] = -s0
        top = 0
        stack[top] = seed
        top += 1
        size = 1
        while top > 0:
            top -= 1
            i = stack[top]
            for k in range(nb_ptr[i], nb_ptr[i + 1]):
                j = nb_idx[k]
                if spins[j] == s0 and _uniform(rng) < nb_prob[k]:
                    spins[j] = -s0
                    stack[top] = j
                    top += 1
                    size += 1
        flipped += size
    return flipped


# ------------------------------------------------------------ measurements
@njit(cache=True)
def _bond_fields(spins2d):
    M, L = spins2d.shape
    bh = np.empty((M, L))
    bv = np.empty((M, L))
    for j in range(M):
        for i in range(L):
            s = spins2d[j, i]
            bh[j, i] = s * spins2d[j, (i + 1) % L]
            bv[j, i] = s * spins2d[(j + 1) % M, i]
    return bh, bv


@njit(cache=True)
def _axis_correlations(spins2d, seps, out):
    """Translation- and rotation-averaged ``b(x) b(x + r e)`` for horizontal
    bonds along ``e1`` and vertical bonds along ``e2`` (torus); also returns the mean bond."""
    bh, bv = _bond_fields(spins2d)
    M, L = spins2d.shape
    for k in range(len(seps)):
        r = seps[k]
        acc = 0.0
        for j in range(M):
            for i in range(L):
                acc += bh[j, i] * bh[j, (i + r) % L] + bv[j, i] * bv[(j + r) % M, i]
        out[k] = acc / (2.0 * L * M)
    return (bh.sum() + bv.sum()) / (2.0 * L * M)


@dataclass(frozen=True)
class Schedule:
    """Sampling parameters, in sweeps."""

    burn_in: int = 1000
    thin: int = 1
    n_samples: int = 10_000
    algorithm: str = AUTO

    def __post_init__(self):
        if self.burn_in < 0 or self.thin < 1 or self.n_samples < 1:
            raise MCError("schedule needs burn_in >= 0, thin >= 1, n_samples >= 1")
        if self.algorithm not in (AUTO, METROPOLIS, WOLFF):
            raise MCError(f"unknown algorithm {self.algorithm!r}")


@dataclass
class SpinConfiguration:
    geometry: LatticeGeometry
    spins: np.ndarray  # int8, shape (M, L)

    def __post_init__(self):
        if self.spins.shape != (self.geometry.M, self.geometry.L):
            raise MCError("spin array shape does not match the geometry")
        if not np.all(np.abs(self.spins) == 1):
            raise MCError("spins must be +-1")

    def bond(self, site, nb) -> int:
        return int(self.spins[site[1], site[0]]) * int(self.spins[nb[1], nb[0]])


class Chain:
    """A single Markov chain.

    Args:
        interaction: Hamiltonian data.
        geometry: torus or cylinder.
        beta: inverse temperature (``beta >= 0``).
        rng_state: four uint64 words.
        algorithm: ``"auto"`` picks Wolff when it is valid, else Metropolis.
        spins: optional initial configuration (default: all up).
    """

    def __init__(self, interaction: Interaction, geometry: LatticeGeometry, beta: float,
                 rng_state, algorithm: str = AUTO, spins=None):
        if beta < 0:
            raise MCError("beta must be nonnegative")
        self.interaction = interaction
        self.geometry = geometry
        self.beta = float(beta)
        wolff_ok = interaction.is_ferromagnetic_pairs()
        if algorithm == AUTO:
            algorithm = WOLFF if wolff_ok else METROPOLIS
        if algorithm == WOLFF and not wolff_ok:
            raise MCError("cluster updates need ferromagnetic pair couplings")
        self.algorithm = algorithm
        self.rng = np.array(rng_state, dtype=np.uint64).copy()
        n = geometry.n_sites
        self.spins = (np.ones(n, dtype=np.int8) if spins is None
                      else np.asarray(spins, dtype=np.int8).reshape(-1).copy())
        self.sweeps = 0
        self.samples = 0
        self.clusters = 0
        self.clusters_per_sweep = None
        if algorithm == WOLFF:
            self._build_wolff()
        else:
            self._build_metropolis()

    def _build_metropolis(self):
        terms = self.interaction.terms(self.geometry)
        n = self.geometry.n_sites
        kmax = max(len(t[0]) for t in terms)
        self._term_sites = np.zeros((len(terms), kmax), dtype=np.int64)
        self._term_len = np.zeros(len(terms), dtype=np.int64)
        self._term_coef = np.zeros(len(terms))
        incidence = [[] for _ in range(n)]
        for t, (idx, coef) in enumerate(terms):
            self._term_sites[t, : len(idx)] = idx
            self._term_len[t] = len(idx)
            self._term_coef[t] = coef
            for site in idx:
                incidence[site].append(t)
        self._ptr = np.zeros(n + 1, dtype=np.int64)
        self._ptr[1:] = np.cumsum([len(x) for x in incidence])
        self._term_idx = np.array([t for x in incidence for t in x], dtype=np.int64)

    def _build_wolff(self):
        n = self.geometry.n_sites
        nbrs = [[] for _ in range(n)]
        for i, j, K in self.interaction.pair_couplings(self.geometry):
            if K <= 0 or i == j:
                continue
            p = 1.0 - math.exp(-2.0 * self.beta * K)
            nbrs[i].append((j, p))
            nbrs[j].append((i, p))
        self._nb_ptr = np.zeros(n + 1, dtype=np.int64)
        self._nb_ptr[1:] = np.cumsum([len(x) for x in nbrs])
        self._nb_idx = np.array([j for x in nbrs for j, _ in x], dtype=np.int64)
        self._nb_prob = np.array([p for x in nbrs for _, p in x], dtype=float)
        self._stack = np.zeros(n, dtype=np.int64)

    def _calibrate_clusters(self) -> None:
        n = self.geometry.n_sites
        trial = 20
        flipped = _wolff_clusters(self.spins, trial, self._nb_ptr, self._nb_idx,
                                  self._nb_prob, self.rng, self._stack)
        self.clusters += trial
        self.clusters_per_sweep = max(1, int(round(n * trial / flipped)))

    def sweep(self, n_sweeps: int = 1) -> None:
        n = self.geometry.n_sites
        if self.algorithm == WOLFF and self.clusters_per_sweep is None and n_sweeps > 0:
            self._calibrate_clusters()
        for _ in range(int(n_sweeps)):
            if self.algorithm == WOLFF:
                _wolff_clusters(self.spins, self.clusters_per_sweep, self._nb_ptr, self._nb_idx,
                                self._nb_prob, self.rng, self._stack)
                self.clusters += self.clusters_per_sweep
            else:
                _metropolis_sweep(self.spins, n, self.beta, self._ptr, self._term_idx,
                                  self._term_sites, self._term_len, self._term_coef, self.rng)
            self.sweeps += 1

    @property
    def spins2d(self) -> np.ndarray:
        return self.spins.reshape(self.geometry.M, self.geometry.L)

    def configuration(self) -> SpinConfiguration:
        return SpinConfiguration(self.geometry, self.spins2d.copy())

    # ------------------------------------------------------------ checkpoints
    def to_checkpoint(self) -> dict:
        return {
            "version": CHECKPOINT_VERSION,
            "geometry": self.geometry.spec(),
            "interaction": self.interaction.to_dict(),
            "beta": self.beta,
            "algorithm": self.algorithm,
            "spins": base64.b64encode(self.spins.tobytes()).decode("ascii"),
            "rng": [int(w) for w in self.rng],
            "sweeps": self.sweeps,
            "samples": self.samples,
            "clusters": self.clusters,
            "clusters_per_sweep": self.clusters_per_sweep,
        }

    def save(self, path) -> None:
        write_json_atomic(path, self.to_checkpoint())

    @classmethod
    def from_checkpoint(cls, data: dict) -> "Chain":
        if data.get("version") != CHECKPOINT_VERSION:
            raise MCError(f"unsupported checkpoint version {data.get('version')!r}")
        geometry = LatticeGeometry.parse(data["geometry"])
        spins = np.frombuffer(base64.b64decode(data["spins"]), dtype=np.int8)
        chain = cls(Interaction.from_dict(data["interaction"]), geometry, data["beta"],
                    np.array(data["rng"], dtype=np.uint64), data["algorithm"], spins)
        chain.sweeps = int(data["sweeps"])
        chain.samples = int(data["samples"])
        chain.clusters = int(data.get("clusters", 0))
        chain.clusters_per_sweep = data.get("clusters_per_sweep")
        return chain

    @classmethod
    def load(cls, path) -> "Chain":
        with open(path) as fh:
            return cls.from_checkpoint(json.load(fh))


def write_json_atomic(path, payload) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(payload, fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _check_lambda(interaction: Interaction, window: float = DEFAULT_LAMBDA_WINDOW):
    if abs(interaction.lam) > window:
        raise MCError(f"|lambda| = {abs(interaction.lam):g} is outside the default window {window:g}")


def mc_sample(interaction: Interaction, geometry: LatticeGeometry, beta: float,
              schedule: Schedule, seed: int, checkpoint=None, checkpoint_every: int = 1000,
              stream: int = 0) -> Iterator[SpinConfiguration]:
    """Yield ``schedule.n_samples`` configurations from a Gibbs-stationary chain.

    With ``checkpoint`` set, an existing file is resumed (its counters decide
    how many samples remain) and the state is saved every
    ``checkpoint_every`` samples and at the end.  A resumed run yields exactly
    the samples the uninterrupted run would have yielded after that point.
    """
    _check_lambda(interaction)
    chain = None
    if checkpoint is not None and os.path.exists(checkpoint):
        chain = Chain.load(checkpoint)
        if chain.geometry != geometry or chain.beta != float(beta):
            raise MCError("checkpoint does not match the requested run")
    if chain is None:
        chain = Chain(interaction, geometry, beta, split_seed(seed, stream + 1)[stream], schedule.algorithm)
    if chain.sweeps < schedule.burn_in:
        chain.sweep(schedule.burn_in - chain.sweeps)
    while chain.samples < schedule.n_samples:
        chain.sweep(schedule.thin)
        chain.samples += 1
        if checkpoint is not None and chain.samples % checkpoint_every == 0:
            chain.save(checkpoint)
        yield chain.configuration()
    if checkpoint is not None:
        chain.save(checkpoint)


# ------------------------------------------------------------- statistics
def integrated_autocorrelation(x) -> float:
    """Integrated autocorrelation time with the self-consistent window ``W >= 6 tau(W)``."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return 0.5
    y = x - x.mean()
    var = float(np.dot(y, y)) / n
    if var == 0.0:
        return 0.5
    f = np.fft.rfft(y, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = 0.5
    for w in range(1, n):
        tau += acf[w]
        if w >= TAU_WINDOW_FACTOR * tau:
            break
    return max(float(tau), 0.5)


@dataclass
class MCEstimate:
    mean: float
    stderr: float
    tau: float
    n_samples: int
    seed: int | None = None
    block_length: int = 1
    n_blocks: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def block_jackknife(series: np.ndarray, estimator, tau: float, seed=None) -> MCEstimate:
    """Block-jackknife estimate of ``estimator(column means)``.

    ``series`` has shape ``(T, k)``; blocks are at least ``6 tau`` long.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    T = series.shape[0]
    block = max(1, int(math.ceil(TAU_WINDOW_FACTOR * tau)))
    n_blocks = T // block
    if n_blocks < MIN_BLOCKS:
        raise InsufficientSamples(
            f"{T} samples give {n_blocks} blocks of length {block}; need {MIN_BLOCKS}")
    used = series[: n_blocks * block].reshape(n_blocks, block, -1).mean(axis=1)
    total = used.sum(axis=0)
    full = estimator(total / n_blocks)
    jk = np.array([estimator((total - used[b]) / (n_blocks - 1)) for b in range(n_blocks)])
    err = math.sqrt((n_blocks - 1) / n_blocks * float(np.sum((jk - jk.mean()) ** 2)))
    return MCEstimate(float(full), err, float(tau), T, seed, block, n_blocks)


def _centered_product_estimator(n: int):
    """Mean-subtracted product from the raw moments of all bond subsets."""
    from itertools import combinations

    subsets = [s for r in range(1, n + 1) for s in combinations(range(n), r)]
    index = {s: k for k, s in enumerate(subsets)}

    def est(means):
        mu = [means[index[(b,)]] for b in range(n)]
        total = 0.0
        for r in range(0, n + 1):
            for s in combinations(range(n), r):
                coef = 1.0
                for b in range(n):
                    if b not in s:
                        coef *= -mu[b]
                total += coef * (means[index[s]] if s else 1.0)
        return total

    return subsets, est


def estimate_energy_correlation(samples: Iterable[SpinConfiguration], bonds: Sequence[BondObservable],
                                seed: int | None = None) -> MCEstimate:
    """Mean-subtracted, ``a^-n``-rescaled bond product from a sample stream.

    Bond means come from the same run.  The error is a block jackknife with
    blocks of at least six autocorrelation times of the raw product.
    """
    if len(bonds) < 2:
        raise MCError("energy correlations need at least two bonds")
    rows = []
    geometry = None
    resolved = None
    for conf in samples:
        if geometry is None:
            geometry = conf.geometry
            resolved = resolve_bonds(geometry, bonds)
        s = conf.spins
        rows.append([int(s[a[1], a[0]]) * int(s[b[1], b[0]]) for a, b in resolved])
    if not rows:
        raise InsufficientSamples("empty sample stream")
    return estimate_from_bond_series(np.array(rows, dtype=float), geometry.a, seed)


def estimate_from_bond_series(b: np.ndarray, a: float = 1.0, seed=None) -> MCEstimate:
    """Centered product estimate from a ``(T, n)`` series of bond values."""
    T, n = b.shape
    subsets, est = _centered_product_estimator(n)
    cols = np.stack([np.prod(b[:, list(s)], axis=1) for s in subsets], axis=1)
    tau = integrated_autocorrelation(cols[:, -1])
    res = block_jackknife(cols, est, tau, seed)
    scale = a ** n
    res.mean /= scale
    res.stderr /= scale
    return res


# --------------------------------------------------------------- drivers
@dataclass
class CorrelationRun:
    """Translation-averaged two-point energy correlations along the axes of a torus."""

    geometry: LatticeGeometry
    beta: float
    separations: np.ndarray
    estimates: list
    magnetization: MCEstimate | None = None


def axis_measurement(spins2d: np.ndarray, separations) -> tuple[np.ndarray, float]:
    """Axis-averaged bond products ``b(x) b(x + r e)`` for each ``r`` and the mean bond, one configuration."""
    seps = np.asarray(separations, dtype=np.int64)
    out = np.empty(len(seps))
    mean = _axis_correlations(spins2d, seps, out)
    return out, float(mean)


def axis_correlation_estimates(E: np.ndarray, B: np.ndarray, seed=None) -> list:
    """Connected correlations ``<b b'> - <b>^2`` per column of ``E`` with jackknife errors."""
    ests = []
    for k in range(E.shape[1]):
        series = np.stack([E[:, k], B], axis=1)
        tau = max(integrated_autocorrelation(E[:, k]), integrated_autocorrelation(B))
        ests.append(block_jackknife(series, lambda m: m[0] - m[1] ** 2, tau, seed))
    return ests


def run_axis_correlations(interaction: Interaction, geometry: LatticeGeometry, beta: float,
                          separations: Sequence[int], schedule: Schedule, seed: int,
                          stream: int = 0) -> CorrelationRun:
    """``<e(0) e(r e)>`` averaged over translations and the two axes of a square torus."""
    if not geometry.is_torus:
        raise MCError("axis correlations need a torus")
    _check_lambda(interaction)
    seps = np.asarray(separations, dtype=np.int64)
    chain = Chain(interaction, geometry, beta, split_seed(seed, stream + 1)[stream], schedule.algorithm)
    chain.sweep(schedule.burn_in)
    E = np.empty((schedule.n_samples, len(seps)))
    B = np.empty(schedule.n_samples)
    for t in range(schedule.n_samples):
        chain.sweep(schedule.thin)
        E[t], B[t] = axis_measurement(chain.spins2d, seps)
    ests = axis_correlation_estimates(E, B, seed)
    return CorrelationRun(geometry, beta, seps, ests)


def binder_series(interaction: Interaction, geometry: LatticeGeometry, beta: float,
                  schedule: Schedule, rng_state) -> np.ndarray:
    chain = Chain(interaction, geometry, beta, rng_state, schedule.algorithm)
    chain.sweep(schedule.burn_in)
    out = np.empty((schedule.n_samples, 2))
    n = geometry.n_sites
    for t in range(schedule.n_samples):
        chain.sweep(schedule.thin)
        m2 = (float(chain.spins.sum(dtype=np.int64)) / n) ** 2
        out[t] = (m2, m2 * m2)
    return out


def binder_cumulant(series: np.ndarray, seed=None) -> MCEstimate:
    """``U = 1 - <m^4> / (3 <m^2>^2)`` with a block-jackknife error."""
    tau = max(integrated_autocorrelation(series[:, 0]), integrated_autocorrelation(series[:, 1]))
    return block_jackknife(series, lambda m: 1.0 - m[1] / (3.0 * m[0] ** 2), tau, seed)


@dataclass
class BetacResult:
    betac: float
    stderr: float
    crossings: dict
    table: list  # (L, beta, U, dU)

    def __iter__(self):
        return iter((self.betac, self.stderr))


def _fit_curve(betas, U, dU, center, deg=2):
    x = np.asarray(betas) - center
    w = 1.0 / np.maximum(np.asarray(dU), 1e-12)
    return np.polyfit(x, U, deg, w=w)


def _crossing(c1, c2, lo, hi):
    diff = np.polysub(c1, c2)
    roots = np.roots(diff) if np.any(diff[:-1]) else np.array([])
    real = [float(r.real) for r in np.atleast_1d(roots) if abs(r.imag) < 1e-12 and lo <= r.real <= hi]
    if not real:
        return None
    mid = 0.5 * (lo + hi)
    return min(real, key=lambda r: abs(r - mid))


def binder_scan(interaction: Interaction, sizes: Sequence[int], betas: Sequence[float],
                schedule: Schedule, seed: int) -> list:
    """Binder cumulant table ``[(L, beta, U, dU), ...]`` on square tori."""
    sizes = list(sizes)
    betas = list(betas)
    states = split_seed(seed, len(sizes) * len(betas))
    table = []
    k = 0
    for L in sizes:
        g = LatticeGeometry(L, L)
        for beta in betas:
            est = binder_cumulant(binder_series(interaction, g, beta, schedule, states[k]), seed)
            table.append((L, float(beta), est.mean, est.stderr))
            k += 1
    return table


def crossing_from_table(table, n_boot: int = 400, seed: int = 0) -> BetacResult:
    """Pairwise crossings of quadratic fits ``U_L(beta)``; error by parametric bootstrap."""
    sizes = sorted({row[0] for row in table})
    betas = sorted({row[1] for row in table})
    if len(betas) < 3:
        raise NoCrossing("need at least three temperatures in the window")
    lo, hi = betas[0], betas[-1]
    center = 0.5 * (lo + hi)
    data = {L: np.array([(b, u, du) for (LL, b, u, du) in table if LL == L]) for L in sizes}
    deg = 2 if len(betas) >= 4 else 1

    def crossings(Us):
        fits = {L: _fit_curve(data[L][:, 0], Us[L], data[L][:, 2], center, deg) for L in sizes}
        out = {}
        for i, L1 in enumerate(sizes):
            for L2 in sizes[i + 1:]:
                c = _crossing(fits[L1], fits[L2], lo - center, hi - center)
                if c is not None:
                    out[(L1, L2)] = c + center
        return out

    base = crossings({L: data[L][:, 1] for L in sizes})
    if len(base) == 0:
        raise NoCrossing("Binder cumulants do not cross inside the scanned window")
    rng = np.random.default_rng(seed)
    boots = []
    for _ in range(n_boot):
        Us = {L: data[L][:, 1] + rng.normal(size=len(data[L])) * data[L][:, 2] for L in sizes}
        c = crossings(Us)
        vals = [c[k] for k in base if k in c]
        if vals:
            boots.append(np.mean(vals))
    betac = float(np.mean(list(base.values())))
    stderr = float(np.std(boots, ddof=1)) if len(boots) > 1 else float("nan")
    return BetacResult(betac, stderr, {f"{a}-{b}": v for (a, b), v in base.items()}, list(table))


def _rough_crossing(table) -> float:
    """Sign change of ``U_Lmax - U_Lmin`` by linear interpolation on a coarse grid."""
    sizes = sorted({row[0] for row in table})
    lo = {b: u for L, b, u, _ in table if L == sizes[0]}
    hi = {b: u for L, b, u, _ in table if L == sizes[-1]}
    betas = sorted(lo)
    d = [hi[b] - lo[b] for b in betas]
    for k in range(len(betas) - 1):
        if d[k] < 0 <= d[k + 1]:
            return betas[k] + (betas[k + 1] - betas[k]) * (-d[k]) / (d[k + 1] - d[k])
    raise NoCrossing("no Binder crossing in the coarse window")


def locate_betac(interaction: Interaction, sizes: Sequence[int] = (16, 24, 32), seed: int = 0,
                 betas: Sequence[float] | None = None, schedule: Schedule | None = None,
                 coarse_schedule: Schedule | None = None, window: float = 0.015) -> BetacResult:
    """Binder-cumulant crossing estimate of the critical inverse temperature.

    Without ``betas`` a coarse scan over ``[0.8, 1.2] x`` a mean-field-style
    guess and a second scan over +-4% locate the crossing, then a fine scan of
    relative half-width ``window`` around it produces the estimate (the
    window doubles once if the fine scan misses).

    Raises:
        NoCrossing: no crossing in the window (including an empty window).
    """
    if len(sizes) < 3:
        raise MCError("need at least three lattice sizes")
    _check_lambda(interaction)
    schedule = schedule or Schedule(burn_in=2000, thin=1, n_samples=40_000)
    if betas is not None:
        if len(betas) == 0:
            raise NoCrossing("empty beta window")
        return crossing_from_table(binder_scan(interaction, sizes, betas, schedule, seed), seed=seed)
    from .lattice_exact import betac_exact

    coupling_sum = interaction.J * 2 + sum(
        -interaction.lam * v for k, v in interaction.couplings.items() if len(k) == 2)
    guess = betac_exact() * 2 * interaction.J / coupling_sum
    coarse_schedule = coarse_schedule or Schedule(burn_in=500, thin=1, n_samples=4000)
    coarse = binder_scan(interaction, sizes, np.linspace(0.8 * guess, 1.2 * guess, 9),
                         coarse_schedule, seed + 1)
    rough = _rough_crossing(coarse)
    medium = binder_scan(interaction, sizes, np.linspace(0.96 * rough, 1.04 * rough, 9),
                         coarse_schedule, seed + 2)
    try:
        rough = _rough_crossing(medium)
    except NoCrossing:
        pass
    for attempt in range(2):
        half = window * 2 ** attempt
        fine = np.linspace(rough * (1 - half), rough * (1 + half), 7)
        try:
            return crossing_from_table(binder_scan(interaction, sizes, fine, schedule, seed + 3 + attempt),
                                       seed=seed)
        except NoCrossing:
            continue
    raise NoCrossing("Binder cumulants do not cross near the coarse estimate")


@dataclass
class ZEstimate:
    Z: float
    stderr: float
    separations: list
    ratios: list
    ratio_stderr: list
    per_separation_Z: list
    residuals: list
    perturbed: list
    reference: list

    def __iter__(self):
        return iter((self.Z, self.stderr))


def estimate_Z(interaction: Interaction, geometries: Sequence[LatticeGeometry], betac: float,
               separations: Sequence[int], seed: int, schedule: Schedule | None = None,
               reference_geometries: Sequence[LatticeGeometry] | None = None,
               reference: str = "exact", reference_betac: float | None = None) -> ZEstimate:
    """Energy renormalization from perturbed / nearest-neighbour two-point ratios.

    The perturbed correlations come from Monte Carlo at ``betac``; the
    reference ones either from the exact solver (``reference="exact"``) or
    from a second Monte Carlo run at the nearest-neighbour critical point.

    Raises:
        MCError: reference geometries differ from the perturbed ones.
        RatioInstability: a perturbed value is not sign-definite within 2 stderr.
    """
    from .lattice_exact import betac_exact, energy_correlation_exact, nn_propagator
    from .geometry import bond_at_site
    from .scaling import fit_Z

    if reference_geometries is not None and list(reference_geometries) != list(geometries):
        raise MCError("reference and perturbed geometries must match")
    schedule = schedule or Schedule(burn_in=2000, n_samples=50_000)
    beta0 = betac_exact() if reference_betac is None else reference_betac
    seps_all, pert, pert_err, ref, ref_err, ns = [], [], [], [], [], []
    for gi, g in enumerate(geometries):
        run = run_axis_correlations(interaction, g, betac, separations, schedule, seed, stream=2 * gi)
        if reference == "exact":
            prop = nn_propagator(g, beta0, interaction.J)
            vals = [energy_correlation_exact(g, beta0, [bond_at_site(g, (0, 0), 1), bond_at_site(g, (r, 0), 1)],
                                             interaction.J, prop) for r in separations]
            errs = [0.0] * len(vals)
        else:
            nn = Interaction.nearest_neighbor(interaction.J)
            rrun = run_axis_correlations(nn, g, beta0, separations, schedule, seed, stream=2 * gi + 1)
            vals = [e.mean for e in rrun.estimates]
            errs = [e.stderr for e in rrun.estimates]
        for r, est, v, e in zip(separations, run.estimates, vals, errs):
            if abs(est.mean) < 2 * est.stderr or np.sign(est.mean) != np.sign(v):
                raise RatioInstability(f"unstable ratio at separation {r} on {g.spec()}")
            seps_all.append(int(r))
            pert.append(est.mean)
            pert_err.append(est.stderr)
            ref.append(v)
            ref_err.append(e)
    ref_arr = np.array(ref)
    pert_arr = np.array(pert)
    fit = fit_Z(ref_arr, pert_arr, 2, np.array(pert_err), np.array(ref_err) if reference != "exact" else None)
    ratios = pert_arr / ref_arr
    ratio_err = ratios * np.sqrt((np.array(pert_err) / pert_arr) ** 2 + (np.array(ref_err) / ref_arr) ** 2)
    return ZEstimate(fit.Z, fit.stderr, seps_all, ratios.tolist(), ratio_err.tolist(),
                     np.sqrt(ratios).tolist(), fit.residuals.tolist(), pert, ref)
