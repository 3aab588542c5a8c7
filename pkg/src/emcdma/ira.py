"""Systematic extended irregular repeat-accumulate (IRA) codes.

The parity-check matrix is ``H = [H1 | H2]`` where ``H2`` is dual-diagonal
(ones at ``(r, r)`` and ``(r, r-1)``) and ``H1`` is a random sparse matrix
whose column/row degrees follow an edge-perspective degree profile.
Encoding runs the accumulator recursion, decoding is flooding sum-product
with the tanh rule.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

LLR_CLIP = 50.0


class CodeConstructionError(ValueError):
    """Raised when a degree profile cannot be realized for a given (K, N)."""


@dataclass(frozen=True)
class DegreeProfile:
    """Edge-perspective variable (``lam``) and check (``rho``) degree distributions.

    Both are tuples of ``(degree, edge_fraction)`` pairs.
    """

    lam: tuple[tuple[int, float], ...]
    rho: tuple[tuple[int, float], ...]

    def __post_init__(self):
        for name, dist, tol in (("lambda", self.lam, 1e-4), ("rho", self.rho, 1e-9)):
            if not dist:
                raise ValueError(f"{name} is empty")
            total = sum(f for _, f in dist)
            if abs(total - 1.0) > tol:
                raise ValueError(f"{name} fractions sum to {total}, expected 1")
            for deg, frac in dist:
                if deg < 1:
                    raise ValueError(f"{name} has degree {deg} < 1")
                if not 0.0 <= frac <= 1.0:
                    raise ValueError(f"{name} fraction {frac} outside [0, 1]")

    @property
    def d_v(self) -> int:
        return max(d for d, f in self.lam if f > 0)

    @property
    def d_c(self) -> int:
        return max(d for d, f in self.rho if f > 0)

    def node_fractions(self, which: str = "lam") -> dict[int, float]:
        """Convert edge-perspective fractions to node-perspective fractions."""
        dist = self.lam if which == "lam" else self.rho
        w = {d: f / d for d, f in dist if f > 0}
        s = sum(w.values())
        return {d: v / s for d, v in sorted(w.items())}


def _published_profile() -> DegreeProfile:
    lam = {1: 0.00008, 2: 0.31522, 3: 0.34085, 7: 0.06126, 8: 0.28258}
    # printed coefficients sum to 0.99999; the residual goes to the largest term
    top = max(lam, key=lam.get)
    lam[top] += 1.0 - sum(lam.values())
    return DegreeProfile(lam=tuple(sorted(lam.items())), rho=((6, 0.62302), (7, 0.37698)))


IRA_PROFILE = _published_profile()


def _largest_remainder(weights: dict[int, float], total: int) -> dict[int, int]:
    """Round ``total * weights`` to integers summing exactly to ``total``."""
    keys = sorted(weights)
    w = np.array([weights[k] for k in keys], dtype=float)
    if w.sum() <= 0:
        return {k: 0 for k in keys}
    raw = total * w / w.sum()
    base = np.floor(raw).astype(int)
    short = total - base.sum()
    order = np.argsort(-(raw - base), kind="stable")
    base[order[:short]] += 1
    return dict(zip(keys, base.tolist()))


@dataclass(frozen=True, eq=False)
class CodeEnsemble:
    """One constructed code. Immutable; share freely between trials."""

    K: int
    N: int
    H: sp.csr_matrix
    H1: sp.csr_matrix
    H2: sp.csr_matrix
    G: np.ndarray
    seed: int
    # edge list sorted by check node, used by the decoder
    check_idx: np.ndarray = field(repr=False)
    var_idx: np.ndarray = field(repr=False)

    @property
    def M(self) -> int:
        return self.N - self.K

    @property
    def rate(self) -> float:
        return self.K / self.N

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits, dtype=np.int64)
        return np.bincount(self.check_idx, weights=bits[self.var_idx], minlength=self.M).astype(np.int64) % 2

    def is_codeword(self, bits: np.ndarray) -> bool:
        return not self.syndrome(bits).any()


def _dual_diagonal(M: int) -> sp.csr_matrix:
    rows = np.concatenate([np.arange(M), np.arange(1, M)])
    cols = np.concatenate([np.arange(M), np.arange(M - 1)])
    return sp.csr_matrix((np.ones(rows.size, dtype=np.uint8), (rows, cols)), shape=(M, M))


def _assemble(K: int, N: int, H1: sp.csr_matrix, seed: int) -> CodeEnsemble:
    M = N - K
    H1 = sp.csr_matrix(H1, dtype=np.uint8)
    H1.sort_indices()
    H2 = _dual_diagonal(M)
    H = sp.hstack([H1, H2], format="csr", dtype=np.uint8)
    H.sort_indices()
    coo = H.tocoo()
    order = np.lexsort((coo.col, coo.row))
    check_idx = coo.row[order].astype(np.int64)
    var_idx = coo.col[order].astype(np.int64)
    # H2^{-1} is lower-triangular all-ones: parity part of G is the running XOR of H1's rows
    P = np.cumsum(H1.toarray().astype(np.int64), axis=0) % 2
    G = np.hstack([np.eye(K, dtype=np.uint8), P.T.astype(np.uint8)])
    return CodeEnsemble(K=K, N=N, H=H, H1=H1, H2=H2, G=G, seed=seed,
                        check_idx=check_idx, var_idx=var_idx)


def _check_budget(M: int, profile: DegreeProfile) -> tuple[np.ndarray, int]:
    counts = _largest_remainder(profile.node_fractions("rho"), M)
    degs = np.concatenate([np.full(c, d, dtype=np.int64) for d, c in counts.items()])
    h2 = np.full(M, 2, dtype=np.int64)
    h2[0] = 1
    return degs, int(np.maximum(degs - h2, 0).sum())


def _column_degrees(K: int, N: int, profile: DegreeProfile, target_edges: int) -> dict[int, int]:
    M = N - K
    full = {d: N * f for d, f in profile.node_fractions("lam").items()}
    # the accumulator part already supplies one degree-1 and M-1 degree-2 columns
    reserved = {1: 1, 2: M - 1}
    left = {d: max(0.0, c - reserved.get(d, 0)) for d, c in full.items()}
    left = {d: c for d, c in left.items() if c > 1e-9}
    if not left:
        raise CodeConstructionError(
            f"profile leaves no systematic columns for K={K}, N={N}; "
            f"degree 2 is exhausted by the {M - 1} accumulator columns")
    counts = _largest_remainder(left, K)
    # among floor/ceil roundings summing to K, take the one whose edge count
    # is closest to what the check side expects
    keys = sorted(left)
    exact = np.array([K * left[d] / sum(left.values()) for d in keys])
    lo = np.floor(exact).astype(int)
    best, best_key = counts, None
    for mask in range(1 << len(keys)):
        c = lo + np.array([(mask >> i) & 1 for i in range(len(keys))])
        if c.sum() != K:
            continue
        cand = dict(zip(keys, c.tolist()))
        key = (abs(sum(d * n for d, n in cand.items()) - target_edges),
               sum(abs(cand[d] - counts[d]) for d in keys))
        if best_key is None or key < best_key:
            best, best_key = cand, key
    for d, c in best.items():
        if c and d > M:
            raise CodeConstructionError(
                f"variable degree {d} exceeds the {M} available check nodes (K={K}, N={N})")
    return best


def _row_capacities(M: int, n_edges: int, profile: DegreeProfile, rng: np.random.Generator) -> np.ndarray:
    degs, _ = _check_budget(M, profile)
    rng.shuffle(degs)
    h2_deg = np.full(M, 2, dtype=np.int64)
    h2_deg[0] = 1
    cap = np.maximum(degs - h2_deg, 0)
    diff = n_edges - int(cap.sum())
    if diff < 0 and int((cap - 1).clip(min=0).sum()) < -diff:
        raise CodeConstructionError("check-node degrees cannot absorb the edge budget")
    # move rows between neighbouring degrees, keeping the histogram concentrated
    while diff > 0:
        low = np.flatnonzero(cap == cap.min())
        cap[rng.choice(low)] += 1
        diff -= 1
    while diff < 0:
        high = np.flatnonzero(cap == cap.max())
        cap[rng.choice(high)] -= 1
        diff += 1
    return cap


def build_code(K: int, N: int, profile: DegreeProfile = IRA_PROFILE, seed: int = 7,
               max_retries: int = 100) -> CodeEnsemble:
    """Construct an IRA ensemble with PEG-style 4-cycle avoidance in ``H1``.

    Columns are placed one at a time; each edge goes to the least-filled
    check node that does not close a 4-cycle with the edges already placed
    (including the dual-diagonal part). A column that cannot be placed
    cycle-free is retried up to ``max_retries`` times with fresh random
    tie-breaking before a 4-cycle is accepted.
    """
    if not (N > K >= 4):
        raise ValueError(f"need N > K >= 4, got K={K}, N={N}")
    M = N - K
    rng = np.random.default_rng(seed)
    _, check_edges = _check_budget(M, profile)
    col_counts = _column_degrees(K, N, profile, check_edges)
    col_deg = np.concatenate([np.full(c, d, dtype=np.int64) for d, c in sorted(col_counts.items(), reverse=True)])
    n_edges = int(col_deg.sum())
    cap = _row_capacities(M, n_edges, profile, rng)

    # rows already joined by some column; starts with the accumulator's adjacent pairs
    nbr = np.zeros((M, M), dtype=bool)
    idx = np.arange(M - 1)
    nbr[idx, idx + 1] = True
    nbr[idx + 1, idx] = True

    # systematic columns get a random position so degrees are interleaved
    positions = rng.permutation(K)
    rows_out, cols_out = [], []
    for j, d in zip(positions, col_deg):
        chosen = None
        for _ in range(max_retries):
            chosen = _place_column(d, cap, nbr, rng, avoid_cycles=True)
            if chosen is not None:
                break
        if chosen is None:
            chosen = _place_column(d, cap, nbr, rng, avoid_cycles=False)
        cap[chosen] -= 1
        sel = np.array(chosen)
        nbr[np.ix_(sel, sel)] = True
        rows_out.extend(chosen)
        cols_out.extend([j] * len(chosen))

    H1 = sp.csr_matrix((np.ones(len(rows_out), dtype=np.uint8), (rows_out, cols_out)), shape=(M, K))
    return _assemble(K, N, H1, seed)


def _place_column(d, cap, nbr, rng, avoid_cycles):
    M = cap.size
    taken = np.zeros(M, dtype=bool)
    blocked = np.zeros(M, dtype=bool)
    chosen = []
    for _ in range(d):
        ok = ~taken & (cap > 0)
        if avoid_cycles:
            ok &= ~blocked
        if not ok.any():
            if avoid_cycles:
                return None
            ok = ~taken  # every check node is full: overfill the least loaded
        score = np.where(ok, cap, -1)
        best = np.flatnonzero(score == score.max())
        r = int(rng.choice(best))
        chosen.append(r)
        taken[r] = True
        blocked |= nbr[r]
    return chosen


def encode(message, code: CodeEnsemble) -> np.ndarray:
    """Systematic encoding ``b = [m | p]`` with ``p`` the accumulated ``H1 m``."""
    m = np.asarray(message)
    if m.ndim != 1 or m.size != code.K:
        raise ValueError(f"message must have {code.K} bits, got shape {m.shape}")
    m = m.astype(np.uint8) & 1
    s = (code.H1 @ m.astype(np.int64)) % 2
    p = np.bitwise_xor.accumulate(s.astype(np.uint8))
    return np.concatenate([m, p])


class SumProductDecoder:
    """Flooding sum-product decoder that keeps its check-to-variable messages
    between calls, so a receiver can interleave single decoder iterations
    with channel re-estimation.

    LLR convention: positive means bit 0 is more likely.
    """

    def __init__(self, code: CodeEnsemble):
        self.code = code
        ci = code.check_idx
        self._starts = np.flatnonzero(np.r_[True, ci[1:] != ci[:-1]])
        self._row_of_edge = ci
        self._var = code.var_idx
        self.c2v = np.zeros(ci.size)
        self.iterations = 0

    def reset(self):
        self.c2v[:] = 0.0
        self.iterations = 0

    def iterate(self, channel_llr, n: int = 1) -> np.ndarray:
        """Run ``n`` flooding passes and return posterior LLRs."""
        if n < 1:
            raise ValueError("iterations must be >= 1")
        llr = np.clip(np.asarray(channel_llr, dtype=float), -LLR_CLIP, LLR_CLIP)
        N = self.code.N
        for _ in range(n):
            total = llr + np.bincount(self._var, weights=self.c2v, minlength=N)
            v2c = total[self._var] - self.c2v
            self.c2v = self._check_update(v2c)
            self.iterations += 1
        post = llr + np.bincount(self._var, weights=self.c2v, minlength=N)
        return np.clip(post, -LLR_CLIP, LLR_CLIP)

    def _check_update(self, v2c):
        mag = _phi(np.abs(v2c))
        neg = (v2c < 0).astype(np.int64)
        row_mag = np.add.reduceat(mag, self._starts)
        row_neg = np.add.reduceat(neg, self._starts)
        ext = _phi(row_mag[self._row_of_edge] - mag)
        sign = 1.0 - 2.0 * ((row_neg[self._row_of_edge] - neg) & 1)
        return np.clip(sign * ext, -LLR_CLIP, LLR_CLIP)


def _phi(x):
    # phi(x) = -log(tanh(x/2)) is its own inverse on x > 0
    x = np.clip(x, 1e-20, 60.0)
    with np.errstate(divide="ignore"):
        return -np.log(np.tanh(x / 2.0))


def decode(llr_in, code: CodeEnsemble, iterations: int = 1, decoder: SumProductDecoder | None = None):
    """Decode channel LLRs.

    Returns ``(posterior, hard_bits, parity_ok)``. Pass a persistent
    ``decoder`` to continue from its stored messages.
    """
    llr = np.asarray(llr_in, dtype=float)
    if llr.shape != (code.N,):
        raise ValueError(f"expected {code.N} LLRs, got shape {llr.shape}")
    dec = decoder if decoder is not None else SumProductDecoder(code)
    post = dec.iterate(llr, iterations)
    hard = (post < 0).astype(np.uint8)
    return post, hard, code.is_codeword(hard)


def save_ensemble(code: CodeEnsemble, path) -> None:
    """Write ``K N seed`` then one ``row: col,col,...`` line per check node."""
    H = code.H.tocsr()
    lines = [f"{code.K} {code.N} {code.seed}"]
    for r in range(code.M):
        cols = H.indices[H.indptr[r]:H.indptr[r + 1]]
        lines.append(f"{r}: " + ",".join(str(c) for c in np.sort(cols)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_ensemble(path) -> CodeEnsemble:
    text = Path(path).read_text().splitlines()
    K, N, seed = (int(t) for t in text[0].split())
    M = N - K
    rows, cols = [], []
    for line in text[1:]:
        if not line.strip():
            continue
        head, _, rest = line.partition(":")
        r = int(head)
        for c in rest.split(","):
            if c.strip():
                rows.append(r)
                cols.append(int(c))
    H = sp.csr_matrix((np.ones(len(rows), dtype=np.uint8), (rows, cols)), shape=(M, N))
    H2 = H[:, K:]
    if (H2 != _dual_diagonal(M)).nnz:
        raise ValueError("parity part of the stored matrix is not dual-diagonal")
    return _assemble(K, N, H[:, :K], seed)
