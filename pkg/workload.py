"""
Request streams: synthetic Zipf/Poisson generation, MovieLens trace ingestion and persistence
"""

import logging
import os
import zipfile
from dataclasses import dataclass, field

import numpy as np
import requests

import config
from errors import TraceError
from lrumodel import zipf_popularities

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RequestEvent:
    time: float
    item: int
    requester: int


@dataclass(frozen=True)
class RequestTrace:
    """
    Columnar request stream. Items are dense ids 1..n_items, requesters 1..n_users,
    times non-decreasing. item_ids[k] is the original id of dense item k + 1 (traces only).
    """
    times: np.ndarray
    items: np.ndarray
    requesters: np.ndarray
    n_items: int
    n_users: int
    item_ids: np.ndarray = field(default=None, repr=False)

    def __len__(self):
        return int(self.times.size)

    def __iter__(self):
        for t, i, u in zip(self.times.tolist(), self.items.tolist(), self.requesters.tolist()):
            yield RequestEvent(t, i, u)

    @property
    def duration(self):
        if len(self) == 0:
            return 0.0
        return float(self.times[-1] - self.times[0])


@dataclass(frozen=True)
class TraceStats:
    n_requests: int
    n_items: int
    n_users: int
    duration: float
    counts: np.ndarray


def as_trace(events, n_items=None, n_users=None):
    """Columnar view of any RequestEvent iterable; rejects out-of-order times"""
    if isinstance(events, RequestTrace):
        return events
    events = list(events)
    times = np.array([e.time for e in events], dtype=float)
    items = np.array([e.item for e in events], dtype=np.int64)
    users = np.array([e.requester for e in events], dtype=np.int64)
    if times.size and np.any(np.diff(times) < 0):
        first = int(np.argmax(np.diff(times) < 0)) + 1
        raise TraceError(f"request times must be non-decreasing (event {first} goes back in time)")
    if times.size and (items.min() < 1 or users.min() < 1):
        raise TraceError("item and requester ids start at 1")
    return RequestTrace(
        times=times,
        items=items,
        requesters=users,
        n_items=n_items or (int(items.max()) if items.size else 0),
        n_users=n_users or (int(users.max()) if users.size else 0),
    )


# ============================================================================
# SYNTHETIC STREAMS
# ============================================================================

def synthetic_stream(cfg, n_requests, seed=0):
    """
    Poisson arrivals at aggregate rate N*gamma, Zipf(alpha) items, uniform requesters.
    Inverse-CDF sampling over the cumulative popularity.
    """
    if n_requests < 1:
        raise TraceError(f"n_requests must be >= 1 (got {n_requests})")

    rng = np.random.default_rng(seed)
    aggregate = cfg.n_users * cfg.request_rate_per_user
    times = np.cumsum(rng.exponential(1.0 / aggregate, n_requests))

    cdf = np.cumsum(zipf_popularities(cfg.n_items, cfg.zipf_alpha))
    cdf[-1] = 1.0
    items = np.searchsorted(cdf, rng.random(n_requests), side='right') + 1
    users = rng.integers(1, cfg.n_users + 1, n_requests)

    return RequestTrace(times=times, items=items.astype(np.int64), requesters=users.astype(np.int64),
                        n_items=cfg.n_items, n_users=cfg.n_users)


# ============================================================================
# TRACE FILES
# ============================================================================

def parse_trace(path, fmt='movielens'):
    """
    Read `user<TAB>item<TAB>rating<TAB>unix_time` lines. The rating is dropped, events are
    sorted by time (stable on ties) and item/user ids remapped densely to 1..M / 1..N.
    """
    if fmt != 'movielens':
        raise TraceError(f"unsupported trace format {fmt!r}")

    users, items, times = [], [], []
    with open(path, 'rb') as f:
        for line_no, raw in enumerate(f, start=1):
            try:
                line = raw.decode('utf-8').strip()
            except UnicodeDecodeError:
                raise TraceError(f"not valid UTF-8: {raw[:40]!r}", line=line_no)
            if not line:
                continue
            fields = line.split('\t')
            if len(fields) != 4:
                raise TraceError(f"expected 4 tab-separated fields, found {len(fields)}", line=line_no)
            try:
                users.append(int(fields[0]))
                items.append(int(fields[1]))
                times.append(float(fields[3]))
            except ValueError:
                raise TraceError(f"non-numeric id or timestamp in {line!r}", line=line_no)

    if not times:
        raise TraceError(f"trace {path} has no requests")

    times = np.array(times, dtype=float)
    order = np.argsort(times, kind='stable')
    item_ids, dense_items = np.unique(np.array(items, dtype=np.int64), return_inverse=True)
    user_ids, dense_users = np.unique(np.array(users, dtype=np.int64), return_inverse=True)

    logger.info(f"[TRACE] {path}: {times.size} requests, {item_ids.size} items, {user_ids.size} users")
    return RequestTrace(
        times=times[order],
        items=(dense_items[order] + 1).astype(np.int64),
        requesters=(dense_users[order] + 1).astype(np.int64),
        n_items=int(item_ids.size),
        n_users=int(user_ids.size),
        item_ids=item_ids,
    )


def write_trace(trace, path):
    """Persist in the MovieLens layout with the rating column fixed to 0"""
    with open(path, 'w', encoding='utf-8') as f:
        for event in trace:
            f.write(f"{event.requester}\t{event.item}\t0\t{event.time!r}\n")


def trace_stats(trace):
    """Single-pass summary; counts[k] is the request count of item k + 1"""
    trace = as_trace(trace)
    if len(trace) == 0:
        raise TraceError("cannot summarise an empty request stream")
    counts = np.bincount(trace.items - 1, minlength=trace.n_items)
    return TraceStats(
        n_requests=len(trace),
        n_items=trace.n_items,
        n_users=trace.n_users,
        duration=trace.duration,
        counts=counts,
    )


def fetch_movielens(dest_dir=None, url=None):
    """
    Download the ml-100k archive and extract u.data
    Returns the path of u.data; an existing copy is reused
    """
    dest_dir = dest_dir or config.DATA_DIR
    url = url or config.MOVIELENS_URL
    target = os.path.join(dest_dir, 'u.data')
    if os.path.exists(target):
        logger.info(f"[FETCH] using cached {target}")
        return target

    os.makedirs(dest_dir, exist_ok=True)
    archive = os.path.join(dest_dir, 'ml-100k.zip')
    logger.info(f"[FETCH] downloading {url}")
    try:
        response = requests.get(url, timeout=60)
    except requests.exceptions.RequestException as e:
        raise TraceError(f"download failed: {e}")
    if response.status_code != 200:
        raise TraceError(f"download failed: HTTP {response.status_code} from {url}")

    with open(archive, 'wb') as f:
        f.write(response.content)

    try:
        with zipfile.ZipFile(archive) as zf:
            member = next((n for n in zf.namelist() if n.endswith('/u.data') or n == 'u.data'), None)
            if member is None:
                raise TraceError(f"{archive} does not contain u.data")
            with zf.open(member) as src, open(target, 'wb') as dst:
                dst.write(src.read())
    except zipfile.BadZipFile as e:
        raise TraceError(f"{archive} is not a zip archive: {e}")
    finally:
        os.remove(archive)

    logger.info(f"[FETCH] wrote {target}")
    return target
