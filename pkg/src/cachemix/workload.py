"""Request-stream generation and trace ingestion.

Streams are discrete: one transition per request, so only the request
index matters to the analysis.  Wall-clock timestamps from traces are
carried through untouched.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidParameterError, TraceIOError, TraceParseError
from .model import PopularityDist, RequestStream

FULL_SHUFFLE = "full-shuffle"
TOP_SWAP = "top-swap"


@dataclass(frozen=True)
class ModulationSpec:
    """Markov modulation of the popularity ranking.

    Before each request, with probability ``shuffle_rate`` the item-to-rank
    assignment is re-permuted.  The rank-probability vector itself never
    changes, so the ideal cache stays well defined within each epoch.
    ``full-shuffle`` draws a fresh uniform permutation; ``top-swap``
    reverses a uniformly chosen prefix of the current rank order.
    """

    shuffle_rate: float
    mode: str = FULL_SHUFFLE

    def __post_init__(self):
        if not 0.0 < self.shuffle_rate <= 1.0:
            raise InvalidParameterError(f"shuffle_rate must be in (0, 1], got {self.shuffle_rate}")
        if self.mode not in (FULL_SHUFFLE, TOP_SWAP):
            raise InvalidParameterError(f"unknown modulation mode {self.mode!r}")


def sample_irm(dist: PopularityDist, count: int, seed: int) -> RequestStream:
    """Independent reference model: ``count`` i.i.d. draws from ``dist``."""
    if count < 1:
        raise InvalidParameterError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    items = rng.choice(dist.n, size=count, replace=True, p=dist.probs) + 1
    return RequestStream(items=items.astype(np.int64))


def sample_modulated(dist: PopularityDist, spec: ModulationSpec, count: int,
                     seed: int) -> RequestStream:
    """IRM draws through a randomly re-ranked item-identity map.

    Epochs arrive as a Bernoulli(shuffle_rate) event before each request;
    the number of epochs that occurred is reported on the stream.
    """
    if count < 1:
        raise InvalidParameterError(f"count must be >= 1, got {count}")
    rng = np.random.default_rng(seed)
    n = dist.n
    perm = np.arange(1, n + 1, dtype=np.int64)  # rank -> item id
    epochs = rng.random(count) < spec.shuffle_rate
    ranks = rng.choice(n, size=count, replace=True, p=dist.probs)
    items = np.empty(count, dtype=np.int64)
    start = 0
    epoch_positions = np.flatnonzero(epochs)
    for pos in epoch_positions:
        items[start:pos] = perm[ranks[start:pos]]
        if spec.mode == FULL_SHUFFLE:
            perm = rng.permutation(n).astype(np.int64) + 1
        elif n > 1:
            prefix = int(rng.integers(2, n + 1))
            perm[:prefix] = perm[:prefix][::-1]
        start = pos
    items[start:] = perm[ranks[start:]]
    return RequestStream(items=items, epoch_count=int(epochs.sum()))


def read_trace(path: str | Path, format: str = "lines") -> RequestStream:
    """Read a request trace; keys are densified to 1-based ids first-seen.

    ``lines`` format holds one opaque key per line.  ``csv`` rows are
    ``timestamp,key``.  Empty lines are skipped; UTF-8 with LF or CRLF.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise TraceIOError(f"cannot read trace {path}: {exc}") from exc
    ids: dict[str, int] = {}
    items: list[int] = []
    timestamps: list[float] = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if format == "lines":
            key = line
        elif format == "csv":
            parts = line.split(",", 1)
            if len(parts) != 2 or not parts[1].strip():
                raise TraceParseError(f"expected 'timestamp,key', got {line!r}", line_no)
            try:
                timestamps.append(float(parts[0]))
            except ValueError:
                raise TraceParseError(f"bad timestamp {parts[0]!r}", line_no) from None
            key = parts[1].strip()
        else:
            raise InvalidParameterError(f"unknown trace format {format!r}")
        item = ids.setdefault(key, len(ids) + 1)
        items.append(item)
    ts = np.asarray(timestamps) if format == "csv" and timestamps else None
    return RequestStream(items=np.asarray(items, dtype=np.int64), timestamps=ts)


def write_trace(stream: RequestStream, path: str | Path, format: str = "lines") -> None:
    """Inverse of read_trace on (t, item) pairs; items are written as keys."""
    path = Path(path)
    lines: list[str] = []
    if format == "lines":
        lines = [str(int(i)) for i in stream.items]
    elif format == "csv":
        if stream.timestamps is not None:
            ts = stream.timestamps
        else:
            ts = np.arange(1, len(stream) + 1)
        lines = [f"{t},{int(i)}" for t, i in zip(ts.tolist(), stream.items)]
    else:
        raise InvalidParameterError(f"unknown trace format {format!r}")
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


ZIPF_ALPHA_MAX = 5.0


def fit_zipf(stream: RequestStream, tol: float = 1e-4) -> float:
    """Maximum-likelihood Zipf exponent for a request stream.

    The empirical rank-frequency curve (counts sorted non-increasing) is
    fit against the Zipf family on the observed library size; the
    log-likelihood is maximised by golden-section search on [0, 5].
    A single-item stream is degenerate: every alpha fits, returns the
    upper bound.
    """
    if len(stream) == 0:
        raise InvalidParameterError("cannot fit an empty stream")
    _, counts = np.unique(stream.items, return_counts=True)
    counts = np.sort(counts)[::-1].astype(np.float64)
    n = counts.size
    if n == 1:
        warnings.warn("single-item stream: Zipf fit is degenerate, returning the upper bound")
        return ZIPF_ALPHA_MAX
    log_ranks = np.log(np.arange(1, n + 1, dtype=np.float64))

    def neg_loglik(alpha: float) -> float:
        # log p_r = -alpha*log r - log(sum_r r^-alpha)
        weights = np.exp(-alpha * log_ranks)
        return alpha * float(counts @ log_ranks) + float(counts.sum()) * math.log(weights.sum())

    lo, hi = 0.0, ZIPF_ALPHA_MAX
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = neg_loglik(x1), neg_loglik(x2)
    while hi - lo > tol:
        if f1 < f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = neg_loglik(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = neg_loglik(x2)
    return (lo + hi) / 2.0
