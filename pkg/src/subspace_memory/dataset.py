"""Structured integer pattern sets and the +/-1 noise channel.

Patterns are built as ``x = u @ G`` where ``G`` is a non-negative integer
generator of rank ``k_g`` whose column blocks each use exactly ``k`` of its
rows.  Every pattern therefore lives in a ``k_g``-dimensional subspace and
every length ``n/L`` block of it in a subspace of dimension at most ``k``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AllCandidatesRejected,
    CountExceedsCapacity,
    InfeasibleSpec,
    RetryBudgetExhausted,
    ValidationError,
    WeightTooLarge,
)

ALL = "all"
GENERATOR_RETRIES = 1000
# full enumeration beyond this many messages is refused
ENUMERATION_LIMIT = 1 << 22


@dataclass(frozen=True)
class GeneratorSpec:
    n: int
    L: int
    k: int
    k_g: int
    gamma_gen: int = 2
    upsilon: int = 2
    S: int | None = None
    d_star_cap: int | None = None
    seed: int = 0
    rejection_free: bool = True
    correctable_blocks: bool = False

    def __post_init__(self):
        if self.n <= 0 or self.L <= 0 or self.n % self.L:
            raise InfeasibleSpec(f"L={self.L} must divide n={self.n}")
        if not 0 < self.k < self.n // self.L:
            raise InfeasibleSpec(f"need 0 < k < n/L, got k={self.k}, n/L={self.n // self.L}")
        if not 0 < self.k_g < self.n:
            raise InfeasibleSpec(f"need 0 < k_g < n, got k_g={self.k_g}")
        if self.k > self.k_g:
            raise InfeasibleSpec(f"k={self.k} > k_g={self.k_g}: a block cannot use more rows than G has")
        if self.gamma_gen < 2 or self.upsilon < 2:
            raise InfeasibleSpec("gamma_gen and upsilon must be >= 2")
        if self.d_star_cap is None:
            object.__setattr__(self, "d_star_cap", self.k)
        if self.d_star_cap < 1:
            raise InfeasibleSpec("d_star_cap must be >= 1")
        if self.S is None:
            object.__setattr__(self, "S", self.admissible_S)
        if self.S < 2:
            raise InfeasibleSpec("S must be >= 2")
        if self.rejection_free and not self.is_admissible:
            raise InfeasibleSpec(
                f"S-1={self.S - 1} < d*(gamma-1)(upsilon-1)="
                f"{self.admissible_S - 1}; generation would reject patterns"
            )

    @property
    def block_size(self) -> int:
        return self.n // self.L

    @property
    def admissible_S(self) -> int:
        """Smallest alphabet size for which no product ``u @ G`` overflows."""
        return self.d_star_cap * (self.gamma_gen - 1) * (self.upsilon - 1) + 1

    @property
    def is_admissible(self) -> bool:
        return self.S - 1 >= self.d_star_cap * (self.gamma_gen - 1) * (self.upsilon - 1)

    def blocks(self) -> list[tuple[int, int]]:
        """Half-open column ranges ``[start, stop)`` of the L blocks."""
        b = self.block_size
        return [(i * b, (i + 1) * b) for i in range(self.L)]


@dataclass
class Generator:
    G: np.ndarray
    spec: GeneratorSpec
    attempts: int = 1

    @property
    def blocks(self) -> list[tuple[int, int]]:
        return self.spec.blocks()

    def block_rows(self, i: int) -> np.ndarray:
        """Indices of the rows of G that are nonzero inside block ``i``."""
        start, stop = self.blocks[i]
        return np.flatnonzero(np.any(self.G[:, start:stop] != 0, axis=1))

    def column_degrees(self) -> np.ndarray:
        return np.count_nonzero(self.G, axis=0)

    def entry_bounds(self, upsilon: int | None = None) -> np.ndarray:
        """Per-column upper bound ``d_j (gamma-1)(upsilon-1)`` on pattern entries."""
        upsilon = self.spec.upsilon if upsilon is None else upsilon
        return self.column_degrees() * (self.spec.gamma_gen - 1) * (upsilon - 1)


@dataclass
class PatternMatrix:
    X: np.ndarray
    messages: np.ndarray
    provenance: GeneratorSpec
    kept: int = 0
    rejected: int = 0

    @property
    def C(self) -> int:
        return self.X.shape[0]

    @property
    def n(self) -> int:
        return self.X.shape[1]


@dataclass
class StructureReport:
    global_rank: int
    block_ranks: list[int]
    k: int
    k_g: int
    blocks_ok: list[bool] = field(default_factory=list)
    global_ok: bool = False

    @property
    def ok(self) -> bool:
        return self.global_ok and all(self.blocks_ok)


@dataclass
class NoiseVector:
    z: np.ndarray

    @property
    def weight(self) -> int:
        return int(np.count_nonzero(self.z))

    @property
    def positions(self) -> np.ndarray:
        return np.flatnonzero(self.z)


def _rank(a) -> int:
    a = np.asarray(a, dtype=float)
    if a.size == 0 or not np.any(a):
        return 0
    return int(np.linalg.matrix_rank(a))


def _assign_rows(spec: GeneratorSpec, rng) -> list[np.ndarray]:
    """Pick k rows per block such that every one of the k_g rows is used."""
    chosen = [set() for _ in range(spec.L)]
    for idx, r in enumerate(rng.permutation(spec.k_g)):
        chosen[idx % spec.L].add(int(r))
    out = []
    for rows in chosen:
        rest = np.array([r for r in range(spec.k_g) if r not in rows])
        extra = rng.choice(rest, size=spec.k - len(rows), replace=False)
        out.append(np.sort(np.concatenate([np.fromiter(rows, int), extra]).astype(int)))
    return out


def _cap_degrees(G: np.ndarray, cap: int, rng) -> None:
    for j in np.flatnonzero(np.count_nonzero(G, axis=0) > cap):
        nz = np.flatnonzero(G[:, j])
        # random tie-break, then smallest magnitudes first
        nz = nz[rng.permutation(len(nz))]
        nz = nz[np.argsort(G[nz, j], kind="stable")]
        G[nz[: len(nz) - cap], j] = 0


def _direction(col: np.ndarray) -> tuple:
    g = np.gcd.reduce(col[col != 0])
    return tuple(col // g)


def block_is_correctable(B: np.ndarray) -> bool:
    """True when every column of ``B`` lies in the span of the others and no
    two columns are parallel.

    A column outside that span is a coordinate no linear constraint can see;
    two parallel columns give a +1 error on one and a -1 error on the other
    the same syndrome.
    """
    if np.any(~B.any(axis=0)):
        return False
    dirs = [_direction(B[:, j]) for j in range(B.shape[1])]
    if len(set(dirs)) < len(dirs):
        return False
    r = _rank(B)
    return all(_rank(np.delete(B, j, axis=1)) == r for j in range(B.shape[1]))


def _sample_block(spec: GeneratorSpec, rows: np.ndarray, rng, max_tries: int):
    b = spec.block_size
    for _ in range(max_tries):
        B = rng.integers(0, spec.gamma_gen, size=(spec.k, b))
        G = np.zeros((spec.k_g, b), dtype=np.int64)
        G[rows] = B
        _cap_degrees(G, spec.d_star_cap, rng)
        if not G[rows].any(axis=1).all():
            continue
        if spec.correctable_blocks and not block_is_correctable(G[rows]):
            continue
        return G
    return None


def _valid_generator(G: np.ndarray, spec: GeneratorSpec) -> bool:
    if np.count_nonzero(G, axis=0).max() > spec.d_star_cap:
        return False
    for start, stop in spec.blocks():
        block = G[:, start:stop]
        if np.count_nonzero(block.any(axis=1)) != spec.k:
            return False
        if spec.correctable_blocks and not block_is_correctable(block[block.any(axis=1)]):
            return False
    if spec.correctable_blocks and len({_direction(c) for c in G.T}) < spec.n:
        return False
    return _rank(G) == spec.k_g


def build_generator(spec: GeneratorSpec, max_tries: int = GENERATOR_RETRIES) -> Generator:
    """Sample a generator matrix satisfying the block and rank structure.

    Each block is resampled on its own (at most ``max_tries`` times) until
    its k rows are all nonzero after the degree cap, then the whole matrix
    is checked for rank ``k_g``; up to ``max_tries`` whole-matrix attempts.

    Raises:
        InfeasibleSpec: if ``k * L < k_g`` (some row of G would be empty).
        RetryBudgetExhausted: if no valid generator was found.
    """
    if spec.k * spec.L < spec.k_g:
        raise InfeasibleSpec(
            f"k*L={spec.k * spec.L} < k_g={spec.k_g}: G cannot have full row rank"
        )
    rng = np.random.default_rng(spec.seed)
    for attempt in range(1, max_tries + 1):
        G = np.zeros((spec.k_g, spec.n), dtype=np.int64)
        for (start, stop), rows in zip(spec.blocks(), _assign_rows(spec, rng)):
            block = _sample_block(spec, rows, rng, max_tries)
            if block is None:
                break
            G[:, start:stop] = block
        else:
            if _valid_generator(G, spec):
                return Generator(G=G, spec=spec, attempts=attempt)
    raise RetryBudgetExhausted(f"no valid generator after {max_tries} samples")


def _enumerate_messages(upsilon: int, k_g: int) -> np.ndarray:
    # itertools.product runs the last coordinate fastest (odometer order)
    return np.array(list(itertools.product(range(upsilon), repeat=k_g)), dtype=np.int64)


def synthesize_patterns(gen: Generator, count=ALL, upsilon: int | None = None,
                        S: int | None = None, seed=None) -> PatternMatrix:
    """Draw distinct messages ``u`` and keep the patterns ``u @ G`` that fit in ``[0, S-1]``.

    With ``count=ALL`` every one of the ``upsilon**k_g`` messages is
    enumerated.  Otherwise messages are drawn uniformly without replacement
    until ``count`` patterns are kept; running out of messages first raises
    :class:`AllCandidatesRejected`.
    """
    spec = gen.spec
    upsilon = spec.upsilon if upsilon is None else upsilon
    S = spec.S if S is None else S
    seed = spec.seed if seed is None else seed
    if upsilon < 2:
        raise ValidationError("upsilon must be >= 2")
    capacity = upsilon ** spec.k_g
    rng = np.random.default_rng(seed)

    if count == ALL:
        if capacity > ENUMERATION_LIMIT:
            raise CountExceedsCapacity(f"refusing to enumerate {capacity} messages")
        U = _enumerate_messages(upsilon, spec.k_g)
    else:
        count = int(count)
        if count < 1:
            raise ValidationError("count must be positive")
        if count > capacity:
            raise CountExceedsCapacity(f"count={count} > upsilon**k_g={capacity}")
        U = None

    if U is not None:
        X = U @ gen.G
        keep = np.all(X <= S - 1, axis=1)
        kept_X, kept_U = X[keep], U[keep]
        rejected = int((~keep).sum())
    else:
        seen: set[bytes] = set()
        rows, msgs, rejected = [], [], 0
        while len(rows) < count and len(seen) < capacity:
            u = rng.integers(0, upsilon, size=spec.k_g)
            key = u.tobytes()
            if key in seen:
                continue
            seen.add(key)
            x = u @ gen.G
            if x.max(initial=0) <= S - 1:
                rows.append(x)
                msgs.append(u)
            else:
                rejected += 1
        kept_X = np.array(rows, dtype=np.int64).reshape(-1, spec.n)
        kept_U = np.array(msgs, dtype=np.int64).reshape(-1, spec.k_g)

    if kept_X.shape[0] == 0 or (count != ALL and kept_X.shape[0] < count):
        raise AllCandidatesRejected(
            f"only {kept_X.shape[0]} of {capacity} messages give patterns within S-1={S - 1}"
        )
    return PatternMatrix(X=kept_X.astype(np.int64), messages=kept_U, provenance=spec,
                         kept=int(kept_X.shape[0]), rejected=rejected)


def verify_subspace(patterns: PatternMatrix) -> StructureReport:
    """Report global and per-block ranks against the declared ``k_g`` and ``k``."""
    spec = patterns.provenance
    X = patterns.X
    block_ranks = [_rank(X[:, a:b]) for a, b in spec.blocks()]
    global_rank = _rank(X)
    return StructureReport(
        global_rank=global_rank,
        block_ranks=block_ranks,
        k=spec.k,
        k_g=spec.k_g,
        blocks_ok=[r <= spec.k for r in block_ranks],
        global_ok=global_rank == spec.k_g,
    )


def inject_noise(x, weight: int, S: int, seed=None):
    """Add +/-1 noise at ``weight`` distinct uniformly chosen positions.

    Returns the corrupted pattern clipped to ``[0, S-1]`` and the pre-clip
    :class:`NoiseVector`.  ``seed`` may be an int or a ``numpy`` Generator.
    """
    x = np.asarray(x, dtype=np.int64)
    n = x.shape[0]
    if weight < 0:
        raise ValidationError("weight must be non-negative")
    if weight > n:
        raise WeightTooLarge(f"weight={weight} > n={n}")
    rng = np.random.default_rng(seed)
    z = np.zeros(n, dtype=np.int64)
    if weight:
        pos = rng.choice(n, size=weight, replace=False)
        z[pos] = rng.choice(np.array([-1, 1]), size=weight)
    return np.clip(x + z, 0, S - 1), NoiseVector(z)
