"""Shared I/O helpers: deterministic text formats, atomic writes, seeds."""

import hashlib
import json
import os
import tempfile

import numpy as np

# All floating-point values in text artifacts are written with 17
# significant digits, enough for exact float64 round-trips.
_FLOAT_FMT = "{:.17g}"


def fmt(x) -> str:
    """Format one float with full round-trip precision."""
    return _FLOAT_FMT.format(float(x))


def atomic_write_text(path, text):
    """Write text to *path* via a temp file and rename, so partial files
    never appear under the final name."""
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    # sort_keys + fixed separators keeps the byte stream deterministic
    return json.dumps(obj, sort_keys=True, indent=2, separators=(",", ": ")) + "\n"


def write_json(path, obj):
    atomic_write_text(path, dump_json(obj))


def read_json(path):
    with open(path) as f:
        return json.load(f)


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def derive_rng(seed, *indices) -> np.random.Generator:
    """Child generator derived from (seed, *indices).

    Every stochastic component in the package draws from a generator
    derived this way, so replications, chains and parallel workers get
    independent streams that do not depend on execution order.
    """
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, indices)]))


def csv_lines(header, columns) -> str:
    """Render columns of floats as CSV text with a header line."""
    cols = [np.asarray(c) for c in columns]
    n = len(cols[0])
    rows = [",".join(header)]
    for i in range(n):
        rows.append(",".join(fmt(c[i]) if np.issubdtype(c.dtype, np.floating) else str(c[i])
                             for c in cols))
    return "\n".join(rows) + "\n"
