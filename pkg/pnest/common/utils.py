import io
import json
import os
import time

import numpy as np

from .errors import ConfigError, DimensionError, NonFiniteError

# named streams spawned from one root seed, see spawn_streams
STREAM_NAMES = ("process_noise", "excitation", "latent")


def str2bool(v):
    """
        Convert a flag value to boolean
    """
    if isinstance(v, bool):
        return v
    v = str(v)
    if v.lower() in ('yes', 'true', 't', 'y', '1'):
        return True
    elif v.lower() in ('no', 'false', 'f', 'n', '0'):
        return False
    else:
        raise ConfigError(f"Boolean value expected, got {v!r}")


def spawn_streams(seed, names=STREAM_NAMES):
    """Spawn independent random generators from one root seed.

    Changing how many draws one stream consumes does not perturb the others.

    Args:
        seed (int): root seed
        names (Sequence[str]): stream names, in a fixed order
    Returns:
        dict mapping each name to a numpy Generator
    """
    children = np.random.SeedSequence(seed).spawn(len(names))
    return {name: np.random.default_rng(child) for name, child in zip(names, children)}


def as_vector(x, size, name="vector"):
    """Return `x` as a finite float vector of length `size`."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != size:
        raise DimensionError(f"{name} has length {x.shape[0]}, expected {size}")
    if not np.all(np.isfinite(x)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return x


def as_matrix(X, rows, cols, name="matrix"):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape != (rows, cols):
        raise DimensionError(f"{name} has shape {X.shape}, expected {(rows, cols)}")
    if not np.all(np.isfinite(X)):
        raise NonFiniteError(f"{name} has non-finite entries")
    return X


def symmetrize(X):
    return 0.5 * (X + X.T)


def sample_ball(rng, dim, radius, size=None):
    """Uniform samples from the Euclidean ball of the given radius.

    Args:
        rng: numpy Generator
        dim (int): ambient dimension
        radius (float): ball radius
        size (int, optional): number of samples; a single vector if None
    Returns:
        array of shape (dim,) or (size, dim)
    """
    n = 1 if size is None else size
    g = rng.standard_normal((n, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    scale = radius * rng.random((n, 1)) ** (1.0 / dim)
    out = g / norms * scale
    return out[0] if size is None else out


def _make_w_io_base(f, mode: str):
    if not isinstance(f, io.IOBase):
        f_dirname = os.path.dirname(f)
        if f_dirname != "":
            os.makedirs(f_dirname, exist_ok=True)
        f = open(f, mode=mode)
    return f


def _make_r_io_base(f, mode: str):
    if not isinstance(f, io.IOBase):
        f = open(f, mode=mode)
    return f


def jdump(obj, f, mode="w", indent=4, default=str):
    """Dump a dictionary or list to a file in json format.

    Args:
        obj: An object to be written.
        f: A string path to the location on disk.
        mode: Mode for opening the file.
        indent: Indent for storing json dictionaries.
        default: A function to handle non-serializable entries; defaults to `str`.
    """
    f = _make_w_io_base(f, mode)
    if isinstance(obj, (dict, list)):
        json.dump(obj, f, indent=indent, default=default)
        f.write("\n")
    elif isinstance(obj, str):
        f.write(obj)
    else:
        raise ValueError(f"Unexpected type: {type(obj)}")
    f.close()


def jload(f, mode="r"):
    """Load a .json file into a dictionary."""
    f = _make_r_io_base(f, mode)
    jdict = json.load(f)
    f.close()
    return jdict


def write_csv(path, header, rows):
    """Write a numeric table with a header row and `%.17g` floats.

    Args:
        path: output file, parent directories are created
        header (List[str]): column names
        rows: 2-D array-like, one row per record (may have zero rows)
    """
    rows = np.asarray(rows, dtype=float).reshape(-1, len(header))
    dirname = os.path.dirname(str(path))
    if dirname:
        os.makedirs(dirname, exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(",".join(header) + "\n")
        if len(rows):
            np.savetxt(f, rows, fmt="%.17g", delimiter=",")


def read_csv(path):
    """Read a table written by `write_csv`.

    Returns:
        (header, rows): the column names and a float array of shape (records, columns)
    """
    with open(path, "r") as f:
        header = f.readline().strip().split(",")
        rows = np.loadtxt(f, delimiter=",", ndmin=2)
    if rows.size == 0:
        rows = np.zeros((0, len(header)))
    return header, rows


class Timer:
    """Timer context manager"""

    def __enter__(self):
        """Start a new timer as a context manager"""
        self.start = time.time()
        return self

    def __exit__(self, *args):
        """Stop the context manager timer"""
        self.end = time.time()
        self.duration = self.end - self.start

    def __str__(self):
        return f"{self.duration:.1f} seconds"
